#include <catch2/catch.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "filterts/data.hpp"
#include "filterts/pipeline.hpp"
#include "filterts/run_config.hpp"
#include "oracles.hpp"

using filterts::json;
using filterts::RunConfig;
using filterts::run_config_from_json;

namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Self-cleaning scratch area holding a synthetic dataset and run output.
struct PipelineFixture {
  fs::path root;
  std::string csv_path;

  PipelineFixture() {
    root = fs::temp_directory_path() /
           ("filterts_pipe_" + std::to_string(::getpid()));
    fs::create_directories(root);
    csv_path = (root / "toy.csv").string();
    // two variables sharing a strong period-20 tone; one adds a weak fast one
    const filterts::Matrix values = oracle::make_tone_series(
        2, 400,
        {{{20.0, 2.0, 0.3}, {5.0, 0.4, 1.0}}, {{20.0, 2.0, 1.7}}});
    filterts::write_csv(csv_path, values, {"a", "b"});
  }
  ~PipelineFixture() { fs::remove_all(root); }

  RunConfig config(std::uint64_t seed = 1) const {
    json j = {
        {"dataset", {{"path", csv_path}, {"name", "toy"}}},
        {"model",
         {{"lookback", 20},
          {"horizon", 5},
          {"hidden", 16},
          {"layers", 1},
          {"num_static_filters", 3}}},
        {"train",
         {{"epochs", 2}, {"batch_size", 16}, {"initial_lr", 0.001}}},
        {"seed", seed},
        {"out_dir", (root / "runs").string()},
    };
    return run_config_from_json(j);
  }
};

}  // namespace

TEST_CASE("run config parsing") {
  SECTION("defaults follow the benchmark protocol") {
    const RunConfig c = run_config_from_json(
        json{{"dataset", {{"path", "x.csv"}}}});
    CHECK(c.model.lookback == 96);
    CHECK(c.model.hidden == 128);
    CHECK(c.model.layers == 1);
    CHECK(c.model.alpha_quantile == 0.9);
    CHECK(c.model.num_static_filters == 10);
    CHECK(c.model.half_bandwidth == 1);
    CHECK(c.train.epochs == 10);
    CHECK(c.train.batch_size == 32);
    CHECK(c.train.initial_lr == 1e-3);
    CHECK(c.train.lr_decay == 0.5);
    CHECK(c.train_frac == Approx(0.6));
    CHECK(c.val_frac == Approx(0.2));
  }
  SECTION("unknown keys are rejected with their path") {
    try {
      run_config_from_json(json{{"dataset", {{"path", "x.csv"}}},
                                {"model", {{"depth", 3}}}});
      FAIL("expected parse_error");
    } catch (const filterts::parse_error& e) {
      CHECK(std::string(e.what()).find("model.depth") != std::string::npos);
    }
    CHECK_THROWS_AS(
        run_config_from_json(json{{"dataset", {{"path", "x.csv"}}},
                                  {"frobnicate", 1}}),
        filterts::parse_error);
  }
  SECTION("bad value types are rejected") {
    CHECK_THROWS_AS(
        run_config_from_json(json{{"dataset", {{"path", "x.csv"}}},
                                  {"model", {{"hidden", "big"}}}}),
        filterts::parse_error);
  }
  SECTION("split must be three fractions") {
    CHECK_THROWS_AS(
        run_config_from_json(
            json{{"dataset",
                  {{"path", "x.csv"}, {"split", std::vector<double>{1.0}}}}}),
        filterts::parse_error);
  }
  SECTION("dataset path is required") {
    CHECK_THROWS_AS(run_config_from_json(json::object()),
                    filterts::parse_error);
  }
  SECTION("config hash ignores seed and out_dir") {
    RunConfig a = run_config_from_json(json{{"dataset", {{"path", "x.csv"}}}});
    RunConfig b = a;
    b.seed = 999;
    b.out_dir = "elsewhere";
    CHECK(filterts::run_config_hash(a) == filterts::run_config_hash(b));
    RunConfig c = a;
    c.model.hidden = 256;
    CHECK(filterts::run_config_hash(a) != filterts::run_config_hash(c));
  }
}

TEST_CASE("pipeline commands on a synthetic dataset") {
  PipelineFixture fx;

  SECTION("build-bank finds the dominant tone and is file-deterministic") {
    std::ostringstream out1, out2;
    filterts::run_build_bank(fx.config(), out1);
    const auto paths = filterts::prepare_run_dir(fx.config());
    const std::string first = read_file(paths.bank);
    filterts::run_build_bank(fx.config(), out2);
    CHECK(first == read_file(paths.bank));  // byte-identical rerun

    // period 20 at L=20 lands in downsampled bin 1
    const filterts::FilterBank bank = filterts::load_filter_bank(paths.bank);
    CHECK(bank.center(0, 0) == 1);
    CHECK(bank.center(1, 0) == 1);
    CHECK(out1.str().find("variable 0:") != std::string::npos);
  }

  SECTION("train writes artifacts; same seed reruns are byte-identical") {
    std::ostringstream out;
    const auto result = filterts::run_train(fx.config(7), out);
    const auto paths = filterts::prepare_run_dir(fx.config(7));
    REQUIRE(fs::exists(paths.metrics));
    REQUIRE(fs::exists(paths.checkpoint));
    REQUIRE(fs::exists(paths.report));
    REQUIRE(fs::exists(paths.config_echo));
    REQUIRE(fs::exists(paths.bank));
    CHECK(std::isfinite(result.report.test_mse));

    const std::string metrics_first = read_file(paths.metrics);
    CHECK(metrics_first.find("split=val") != std::string::npos);
    CHECK(metrics_first.find("split=test") != std::string::npos);

    // identical rerun: every artifact except run.log is byte-identical
    const std::string ckpt_first = read_file(paths.checkpoint);
    const std::string report_first = read_file(paths.report);
    const std::string config_first = read_file(paths.config_echo);
    const std::string bank_first = read_file(paths.bank);
    std::ostringstream out2;
    filterts::run_train(fx.config(7), out2);
    CHECK(read_file(paths.metrics) == metrics_first);
    CHECK(read_file(paths.checkpoint) == ckpt_first);
    CHECK(read_file(paths.report) == report_first);
    CHECK(read_file(paths.config_echo) == config_first);
    CHECK(read_file(paths.bank) == bank_first);

    // a different seed lands in a sibling directory and differs
    std::ostringstream out3;
    filterts::run_train(fx.config(8), out3);
    const auto paths8 = filterts::prepare_run_dir(fx.config(8));
    CHECK(paths8.metrics != paths.metrics);
    CHECK(read_file(paths8.metrics) != metrics_first);
  }

  SECTION("re-running from the echoed config reproduces the run") {
    std::ostringstream out;
    filterts::run_train(fx.config(3), out);
    const auto paths = filterts::prepare_run_dir(fx.config(3));
    const std::string metrics_first = read_file(paths.metrics);

    const RunConfig echoed = filterts::load_run_config(paths.config_echo);
    CHECK(filterts::run_dir_name(echoed) == filterts::run_dir_name(fx.config(3)));
    std::ostringstream out2;
    filterts::run_train(echoed, out2);
    CHECK(read_file(paths.metrics) == metrics_first);
  }

  SECTION("eval reproduces the train-time test metrics bit-exactly") {
    std::ostringstream train_out;
    const auto result = filterts::run_train(fx.config(5), train_out);
    const auto paths = filterts::prepare_run_dir(fx.config(5));

    std::ostringstream eval_out;
    const auto report =
        filterts::run_eval(fx.config(5), paths.checkpoint, 0, eval_out);
    CHECK(report.test_mse == result.report.test_mse);  // same code path
    CHECK(report.test_mae == result.report.test_mae);
  }

  SECTION("eval horizon override must match the checkpoint") {
    std::ostringstream out;
    filterts::run_train(fx.config(2), out);
    const auto paths = filterts::prepare_run_dir(fx.config(2));
    CHECK_THROWS_AS(
        filterts::run_eval(fx.config(2), paths.checkpoint, 96, out),
        filterts::parse_error);
  }

  SECTION("eval against a dataset with the wrong variable count names both") {
    std::ostringstream out;
    filterts::run_train(fx.config(2), out);
    const auto paths = filterts::prepare_run_dir(fx.config(2));

    const std::string other_csv = (fx.root / "other.csv").string();
    filterts::write_csv(other_csv,
                        oracle::make_tone_series(3, 200, {{{10, 1, 0}},
                                                          {{10, 1, 1}},
                                                          {{10, 1, 2}}}),
                        {"a", "b", "c"});
    RunConfig cfg = fx.config(2);
    cfg.dataset_path = other_csv;
    cfg.model.n_vars = 0;
    try {
      filterts::run_eval(cfg, paths.checkpoint, 0, out);
      FAIL("expected mismatch error");
    } catch (const std::exception& e) {
      const std::string msg = e.what();
      CHECK(msg.find("N=2") != std::string::npos);
      CHECK(msg.find("N=3") != std::string::npos);
    }
  }

  SECTION("inspect emits a recomputable threshold") {
    std::ostringstream out;
    const std::string csv =
        filterts::run_inspect(fx.config(), 0, 30, out);
    REQUIRE(fs::exists(csv));
    // the fixture's strong tone has period 20 = L, i.e. downsampled bin 1
    CHECK(out.str().find("dominant training bin 1") != std::string::npos);

    // parse the CSV back and recompute the quantile over bins 0..L
    std::ifstream in(csv);
    std::string line;
    std::getline(in, line);  // header
    std::vector<double> window_mags;
    double tau = -1.0;
    std::size_t mask_ones = 0, mask_rows = 0;
    while (std::getline(in, line)) {
      std::stringstream ss(line);
      std::string kind, bin, value;
      std::getline(ss, kind, ',');
      std::getline(ss, bin, ',');
      std::getline(ss, value, ',');
      if (kind == "window") window_mags.push_back(std::stod(value));
      if (kind == "tau") tau = std::stod(value);
      if (kind == "mask") {
        ++mask_rows;
        if (value == "1") ++mask_ones;
      }
    }
    REQUIRE(tau >= 0.0);
    REQUIRE(window_mags.size() == 16);  // D bins
    const std::size_t qbins = std::min<std::size_t>(16, 20 + 1);
    const std::vector<double> head(window_mags.begin(),
                                   window_mags.begin() + qbins);
    CHECK(tau == Approx(oracle::quantile_reference(head, 0.9)).margin(1e-9));
    CHECK(mask_rows == 16);
    // thresholding must match the emitted magnitudes
    std::size_t expected_ones = 0;
    for (double m : window_mags)
      if (m > tau) ++expected_ones;
    CHECK(mask_ones == expected_ones);
  }

  SECTION("inspect validates its indices") {
    std::ostringstream out;
    CHECK_THROWS_AS(filterts::run_inspect(fx.config(), 9, 0, out),
                    filterts::parse_error);
    CHECK_THROWS_AS(filterts::run_inspect(fx.config(), 0, 100000, out),
                    filterts::parse_error);
  }
}
