#include <catch2/catch.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "filterts/data.hpp"
#include "filterts/model.hpp"
#include "filterts/sgfilter.hpp"
#include "filterts/train.hpp"
#include "oracles.hpp"

using filterts::AdamOptimizer;
using filterts::Dataset;
using filterts::FilterBank;
using filterts::FilterTSModel;
using filterts::fit;
using filterts::Matrix;
using filterts::ModelConfig;
using filterts::mse_loss;
using filterts::split_and_standardize;
using filterts::Tensor;
using filterts::TrainConfig;

namespace {

// Small two-tone setup shared by the training tests.
struct SineFixture {
  Dataset dataset;
  filterts::SplitDataset split;
  ModelConfig model_cfg;
  FilterBank bank;

  explicit SineFixture(std::size_t t_len = 600) {
    dataset.name = "sine";
    dataset.values = oracle::make_tone_series(
        2, t_len,
        {{{24.0, 3.0, 0.4}, {12.0, 1.0, 1.3}},
         {{24.0, 3.0, 2.0}, {12.0, 1.0, 0.7}}});
    split = split_and_standardize(dataset);
    model_cfg.n_vars = 2;
    model_cfg.lookback = 48;
    model_cfg.horizon = 12;
    model_cfg.hidden = 32;
    model_cfg.layers = 1;
    model_cfg.num_static_filters = 4;
    bank = filterts::build_filter_bank(split.train_view(), model_cfg.lookback,
                                       model_cfg.hidden,
                                       model_cfg.num_static_filters,
                                       model_cfg.half_bandwidth);
  }
};

}  // namespace

TEST_CASE("adam update") {
  SECTION("zero gradient leaves parameters unchanged") {
    Tensor p = Tensor::from_real({3}, {1, 2, 3});
    p.mark_trainable("p");
    AdamOptimizer opt({{"p", p}});
    opt.step(0.1);
    CHECK(p.re() == std::vector<double>{1, 2, 3});
  }
  SECTION("first step with unit gradient moves by about -lr") {
    Tensor p = Tensor::from_real({1}, {0.0});
    p.mark_trainable("p");
    AdamOptimizer opt({{"p", p}});
    p.values_re_mut();  // leaf
    const_cast<std::vector<double>&>(p.grad_re())[0] = 1.0;
    opt.step(0.1);
    // bias-corrected m_hat/sqrt(v_hat) = 1, so the move is lr/(1 + eps)
    oracle::AdamReference ref;
    const double expected = ref.step(0.0, 1.0, 0.1);
    CHECK(p.re()[0] == Approx(expected).margin(1e-15));
    CHECK(p.re()[0] == Approx(-0.1).margin(1e-8));
  }
  SECTION("sign-flipping gradients track the reference recurrence") {
    Tensor p = Tensor::from_real({1}, {0.5});
    p.mark_trainable("p");
    AdamOptimizer opt({{"p", p}});
    oracle::AdamReference ref;
    double theta = 0.5;
    for (int t = 0; t < 7; ++t) {
      const double g = (t % 2 == 0) ? 0.8 : -1.1;
      const_cast<std::vector<double>&>(p.grad_re())[0] = g;
      opt.step(0.05);
      opt.zero_grad();
      theta = ref.step(theta, g, 0.05);
      CHECK(p.re()[0] == Approx(theta).margin(1e-12));
    }
  }
  SECTION("complex parameters update both coordinate planes") {
    Tensor p = Tensor::from_complex({1}, {1.0}, {0.0});
    p.mark_trainable("p", true);
    AdamOptimizer opt({{"p", p}});
    const_cast<std::vector<double>&>(p.grad_re())[0] = 1.0;
    const_cast<std::vector<double>&>(p.grad_im())[0] = -1.0;
    opt.step(0.1);
    CHECK(p.re()[0] < 1.0);
    CHECK(p.im()[0] > 0.0);
    CHECK_FALSE(p.real_typed());
  }
  SECTION("non-finite gradient aborts naming the parameter") {
    Tensor p = Tensor::from_real({1}, {0.0});
    p.mark_trainable("spectral_gain_7");
    AdamOptimizer opt({{"spectral_gain_7", p}});
    const_cast<std::vector<double>&>(p.grad_re())[0] =
        std::numeric_limits<double>::quiet_NaN();
    try {
      opt.step(0.1);
      FAIL("expected abort");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("spectral_gain_7") !=
            std::string::npos);
    }
  }
}

TEST_CASE("mse loss") {
  SECTION("identical tensors give zero") {
    Tensor a = Tensor::from_real({2, 2}, {1, 2, 3, 4});
    CHECK(mse_loss(a, a).value() == 0.0);
  }
  SECTION("all-ones difference gives one") {
    Tensor a = Tensor::from_real({4}, {2, 3, 4, 5});
    Tensor b = Tensor::from_real({4}, {1, 2, 3, 4});
    CHECK(mse_loss(a, b).value() == Approx(1.0));
  }
  SECTION("mean of squared errors") {
    Tensor a = Tensor::from_real({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from_real({2, 2}, {1, 1, 1, 1});
    CHECK(mse_loss(a, b).value() == Approx(3.5));
  }
  SECTION("shape mismatch") {
    CHECK_THROWS_AS(mse_loss(Tensor::zeros({2}), Tensor::zeros({3})),
                    filterts::dimension_error);
  }
}

TEST_CASE("fit") {
  SECTION("constant dataset is trivially learnable") {
    Dataset ds;
    ds.name = "const";
    ds.values = Matrix(1, 120);
    for (std::size_t t = 0; t < 120; ++t) ds.values.at(0, t) = 3.0;
    auto split = split_and_standardize(ds);
    ModelConfig cfg;
    cfg.n_vars = 1;
    cfg.lookback = 16;
    cfg.horizon = 4;
    cfg.hidden = 12;
    cfg.layers = 1;
    cfg.num_static_filters = 2;
    FilterBank bank = filterts::build_filter_bank(
        split.train_view(), cfg.lookback, cfg.hidden, cfg.num_static_filters,
        cfg.half_bandwidth);
    FilterTSModel model(cfg, 3);
    TrainConfig tc;
    tc.epochs = 1;
    tc.batch_size = 8;
    tc.initial_lr = 1e-3;
    const auto result = fit(model, bank, split, tc);
    // standardized constant series is identically zero, and a constant
    // window forecasts its own mean exactly
    CHECK(result.report.val_mse_curve.back() < 1e-12);
  }

  SECTION("learning rate halves each epoch and is logged exactly") {
    SineFixture fx;
    FilterTSModel model(fx.model_cfg, 5);
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 32;
    tc.initial_lr = 1e-3;
    tc.seed = 9;
    const auto result = fit(model, fx.bank, fx.split, tc);
    for (std::size_t e = 0; e < 3; ++e) {
      const double expected = 1e-3 * std::pow(0.5, static_cast<double>(e));
      const std::string want = "lr=" + filterts::detail::format_double(expected);
      const std::string& train_line = result.metric_lines[2 * e];
      INFO(train_line);
      CHECK(train_line.find(want) != std::string::npos);
      CHECK(train_line.find("epoch=" + std::to_string(e)) !=
            std::string::npos);
    }
  }

  SECTION("first-epoch training loss decreases from first to last batch") {
    SineFixture fx;
    FilterTSModel model(fx.model_cfg, 7);
    TrainConfig tc;
    tc.epochs = 1;
    tc.batch_size = 16;
    tc.initial_lr = 1e-3;
    tc.seed = 4;
    const auto result = fit(model, fx.bank, fx.split, tc);
    REQUIRE(result.report.first_epoch_batch_mse.size() >= 2);
    CHECK(result.report.first_epoch_batch_mse.back() <
          result.report.first_epoch_batch_mse.front());
  }

  SECTION("seeded runs are bit-identical") {
    SineFixture fx;
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 16;
    tc.initial_lr = 1e-3;
    tc.seed = 21;
    FilterTSModel m1(fx.model_cfg, tc.seed);
    FilterTSModel m2(fx.model_cfg, tc.seed);
    const auto r1 = fit(m1, fx.bank, fx.split, tc);
    const auto r2 = fit(m2, fx.bank, fx.split, tc);
    CHECK(r1.metric_lines == r2.metric_lines);
    CHECK(r1.report.train_mse_curve == r2.report.train_mse_curve);
    CHECK(r1.report.val_mse_curve == r2.report.val_mse_curve);
    CHECK(r1.report.test_mse == r2.report.test_mse);
  }

  SECTION("stacked layers train: loss drops and stays finite with e=2") {
    SineFixture fx(1500);
    filterts::ModelConfig cfg = fx.model_cfg;
    cfg.layers = 2;
    FilterTSModel model(cfg, 19);
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 32;
    tc.initial_lr = 1e-3;
    tc.seed = 6;
    const auto result = fit(model, fx.bank, fx.split, tc);
    CHECK(std::isfinite(result.report.test_mse));
    CHECK(result.report.train_mse_curve.back() <
          result.report.first_epoch_batch_mse.front());
  }

  SECTION("non-finite loss aborts with epoch/batch context") {
    SineFixture fx;
    FilterTSModel model(fx.model_cfg, 1);
    // blow up the head so the first forward overflows
    auto params = model.parameters();
    for (auto& [name, t] : params)
      if (name == "head.time_proj")
        for (auto& v : t.values_re_mut()) v = 1e300;
    TrainConfig tc;
    tc.epochs = 1;
    try {
      fit(model, fx.bank, fx.split, tc);
      FAIL("expected abort");
    } catch (const std::runtime_error& e) {
      const std::string msg = e.what();
      CHECK(msg.find("epoch 0") != std::string::npos);
      CHECK(msg.find("batch") != std::string::npos);
    }
  }

  SECTION("epochs=0 evaluates the untrained model without crashing") {
    SineFixture fx;
    FilterTSModel model(fx.model_cfg, 1);
    TrainConfig tc;
    tc.epochs = 0;
    const auto result = fit(model, fx.bank, fx.split, tc);
    CHECK(std::isfinite(result.report.test_mse));
    CHECK(std::isfinite(result.report.test_mae));
    REQUIRE(result.metric_lines.size() == 1);
    CHECK(result.metric_lines[0].find("split=test") != std::string::npos);
  }

  SECTION("a short run learns the two-tone signal reasonably well") {
    SineFixture fx(3000);
    FilterTSModel model(fx.model_cfg, 13);
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 32;
    tc.initial_lr = 1e-3;
    tc.seed = 2;
    const auto result = fit(model, fx.bank, fx.split, tc);
    CHECK(result.report.test_mse < 0.3);
    CHECK(result.report.train_mse_curve.back() <
          result.report.train_mse_curve.front());
  }
}

TEST_CASE("evaluation metrics are independent of batch size") {
  SineFixture fx;
  FilterTSModel model(fx.model_cfg, 23);
  const auto [mse8, mae8] =
      evaluate(model, fx.bank, fx.split, filterts::Split::Test, 8);
  const auto [mse32, mae32] =
      evaluate(model, fx.bank, fx.split, filterts::Split::Test, 32);
  CHECK(mse8 == mse32);  // bit-exact: windows are independent computations
  CHECK(mae8 == mae32);
}

TEST_CASE("optimizer state round trip resumes bit-identically") {
  SineFixture fx;
  TrainConfig tc;

  FilterTSModel model(fx.model_cfg, 17);
  AdamOptimizer opt(model.parameters(), tc.adam_beta1, tc.adam_beta2,
                    tc.adam_eps);

  filterts::WindowStream stream(fx.split, filterts::Split::Train,
                                fx.model_cfg.lookback, fx.model_cfg.horizon,
                                16, false, 0);
  filterts::WindowBatch batch;
  REQUIRE(stream.next(batch));
  auto run_step = [&](FilterTSModel& m, AdamOptimizer& o) {
    Tensor pred = m.forward_batch(batch.inputs, batch.batch, fx.bank);
    Tensor target = Tensor::from_real(
        {batch.batch, batch.n_vars, batch.horizon}, batch.targets);
    filterts::backward(mse_loss(pred, target));
    o.step(1e-3);
    o.zero_grad();
  };

  // warm up, snapshot everything
  for (int i = 0; i < 3; ++i) run_step(model, opt);
  const auto param_snapshot = model.snapshot();
  const std::size_t step_snapshot = opt.step_count();
  const auto state_snapshot = opt.state();

  for (int i = 0; i < 3; ++i) run_step(model, opt);
  const auto reference = model.snapshot();

  // restore and replay
  FilterTSModel model2(fx.model_cfg, 17);
  model2.restore(param_snapshot);
  AdamOptimizer opt2(model2.parameters(), tc.adam_beta1, tc.adam_beta2,
                     tc.adam_eps);
  opt2.load_state(step_snapshot, state_snapshot);
  for (int i = 0; i < 3; ++i) run_step(model2, opt2);
  const auto replay = model2.snapshot();

  REQUIRE(reference.size() == replay.size());
  for (std::size_t p = 0; p < reference.size(); ++p) {
    CHECK(reference[p].first == replay[p].first);
    CHECK(reference[p].second == replay[p].second);
  }
}
