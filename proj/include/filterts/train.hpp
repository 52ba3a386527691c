#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "filterts/data.hpp"
#include "filterts/model.hpp"
#include "filterts/sgfilter.hpp"
#include "filterts/tensor.hpp"

namespace filterts {

struct TrainConfig {
  double initial_lr = 1e-3;  // grid: {1e-4, 5e-4, 1e-3, 5e-3}
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double lr_decay = 0.5;  // applied once per epoch
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool clip_gradients = false;
  double clip_norm = 1.0;
  bool select_best_val = true;  // false: keep the last epoch's parameters
};

/// Adam with bias correction. Complex parameters are optimized as two
/// independent real coordinate vectors; real parameters only touch the real
/// plane. Aborts with the parameter name if a non-finite gradient shows up.
class AdamOptimizer {
 public:
  struct ParamState {
    std::vector<double> m_re, v_re, m_im, v_im;
  };

  AdamOptimizer(std::vector<std::pair<std::string, Tensor>> params,
                double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    state_.resize(params_.size());
    for (std::size_t p = 0; p < params_.size(); ++p) {
      const std::size_t n = params_[p].second.numel();
      state_[p].m_re.assign(n, 0.0);
      state_[p].v_re.assign(n, 0.0);
      if (params_[p].second.complex_param()) {
        state_[p].m_im.assign(n, 0.0);
        state_[p].v_im.assign(n, 0.0);
      }
    }
  }

  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));

    double clip_scale = 1.0;
    if (clip_gradients) {
      double sq = 0.0;
      for (auto& [name, p] : params_) {
        for (double g : p.grad_re()) sq += g * g;
        if (p.complex_param())
          for (double g : p.grad_im()) sq += g * g;
      }
      const double norm = std::sqrt(sq);
      if (norm > clip_norm && norm > 0.0) clip_scale = clip_norm / norm;
    }

    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
      auto& [name, p] = params_[pi];
      auto& st = state_[pi];
      update_plane(name, p.grad_re(), st.m_re, st.v_re, p.values_re_mut(), lr,
                   bc1, bc2, clip_scale);
      if (p.complex_param()) {
        update_plane(name, p.grad_im(), st.m_im, st.v_im, p.values_im_mut(),
                     lr, bc1, bc2, clip_scale);
        p.refresh_real_typed();
      }
    }
  }

  void zero_grad() {
    for (auto& [name, p] : params_) p.zero_grad();
  }

  std::size_t step_count() const { return t_; }
  const std::vector<ParamState>& state() const { return state_; }
  const std::vector<std::pair<std::string, Tensor>>& params() const {
    return params_;
  }

  void load_state(std::size_t step_count, std::vector<ParamState> state) {
    if (state.size() != params_.size())
      throw contract_error("optimizer state parameter count mismatch");
    for (std::size_t p = 0; p < params_.size(); ++p)
      if (state[p].m_re.size() != params_[p].second.numel())
        throw contract_error("optimizer state size mismatch for " +
                             params_[p].first);
    t_ = step_count;
    state_ = std::move(state);
  }

  bool clip_gradients = false;
  double clip_norm = 1.0;

 private:
  void update_plane(const std::string& name, const std::vector<double>& grad,
                    std::vector<double>& m, std::vector<double>& v,
                    std::vector<double>& values, double lr, double bc1,
                    double bc2, double clip_scale) {
    for (std::size_t i = 0; i < grad.size(); ++i) {
      const double g = grad[i] * clip_scale;
      if (!std::isfinite(g))
        throw std::runtime_error("non-finite gradient in parameter '" + name +
                                 "' (index " + std::to_string(i) + ")");
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      values[i] -= lr * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }

  std::vector<std::pair<std::string, Tensor>> params_;
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<ParamState> state_;
};

/// Mean over all elements of the squared error; stays in the graph.
inline Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape())
    throw dimension_error("mse_loss: shape mismatch");
  Tensor diff = sub(pred, target);
  Tensor total = reduce_sum_all(mul(diff, diff));
  return scale(total, 1.0 / static_cast<double>(pred.numel()));
}

/// Running MSE/MAE over a stream of prediction/target buffers; fixed
/// accumulation order keeps repeated runs bit-identical.
struct MetricAccumulator {
  double se = 0.0;
  double ae = 0.0;
  std::size_t count = 0;

  void add(const std::vector<double>& pred, const std::vector<double>& tgt) {
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double d = pred[i] - tgt[i];
      se += d * d;
      ae += std::abs(d);
    }
    count += pred.size();
  }
  double mse() const { return count ? se / static_cast<double>(count) : 0.0; }
  double mae() const { return count ? ae / static_cast<double>(count) : 0.0; }
};

inline std::pair<double, double> evaluate(const FilterTSModel& model,
                                          const FilterBank& bank,
                                          const SplitDataset& data,
                                          Split split,
                                          std::size_t batch_size) {
  WindowStream stream(data, split, model.config().lookback,
                      model.config().horizon, batch_size, /*shuffle=*/false,
                      0);
  MetricAccumulator acc;
  WindowBatch batch;
  while (stream.next(batch)) {
    Tensor pred = model.forward_batch(batch.inputs, batch.batch, bank);
    acc.add(pred.re(), batch.targets);
  }
  return {acc.mse(), acc.mae()};
}

struct EvalReport {
  std::size_t horizon = 0;
  std::vector<double> train_mse_curve, train_mae_curve;
  std::vector<double> val_mse_curve, val_mae_curve;
  std::vector<double> first_epoch_batch_mse;
  std::vector<double> epoch_seconds;  // wall clock; kept out of metrics lines
  std::size_t selected_epoch = 0;
  double test_mse = std::numeric_limits<double>::quiet_NaN();
  double test_mae = std::numeric_limits<double>::quiet_NaN();
};

struct FitResult {
  EvalReport report;
  // deterministic text records: epoch, split, horizon, mse, mae, lr
  std::vector<std::string> metric_lines;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string metric_line(std::size_t epoch, const char* split,
                               std::size_t horizon, double mse, double mae,
                               double lr) {
  return "epoch=" + std::to_string(epoch) + " split=" + split +
         " horizon=" + std::to_string(horizon) +
         " mse=" + format_double(mse) + " mae=" + format_double(mae) +
         " lr=" + format_double(lr);
}

inline std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) {
  return seed ^ ((epoch + 1) * 0x9e3779b97f4a7c15ull);
}

}  // namespace detail

/// Trains for the configured number of epochs with the per-epoch learning
/// rate decay, tracks validation MSE, restores the selected checkpoint
/// (best validation epoch by default), and evaluates it on the test split.
/// epochs == 0 evaluates the untrained model.
inline FitResult fit(FilterTSModel& model, const FilterBank& bank,
                     const SplitDataset& data, const TrainConfig& cfg) {
  using clock = std::chrono::steady_clock;
  const std::size_t horizon = model.config().horizon;

  AdamOptimizer opt(model.parameters(), cfg.adam_beta1, cfg.adam_beta2,
                    cfg.adam_eps);
  opt.clip_gradients = cfg.clip_gradients;
  opt.clip_norm = cfg.clip_norm;
  opt.zero_grad();

  FitResult result;
  result.report.horizon = horizon;

  double best_val = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  auto best_params = model.snapshot();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr =
        cfg.initial_lr * std::pow(cfg.lr_decay, static_cast<double>(epoch));
    const auto started = clock::now();

    WindowStream train_stream(data, Split::Train, model.config().lookback,
                              horizon, cfg.batch_size, /*shuffle=*/true,
                              detail::epoch_seed(cfg.seed, epoch));
    MetricAccumulator train_acc;
    WindowBatch batch;
    std::size_t batch_no = 0;
    while (train_stream.next(batch)) {
      Tensor pred = model.forward_batch(batch.inputs, batch.batch, bank);
      Tensor target = Tensor::from_real(
          {batch.batch, batch.n_vars, horizon}, batch.targets);
      Tensor loss = mse_loss(pred, target);
      const double loss_value = loss.value();
      if (!std::isfinite(loss_value))
        throw std::runtime_error("non-finite loss at epoch " +
                                 std::to_string(epoch) + ", batch " +
                                 std::to_string(batch_no));
      if (epoch == 0)
        result.report.first_epoch_batch_mse.push_back(loss_value);
      train_acc.add(pred.re(), batch.targets);
      backward(loss);
      opt.step(lr);
      opt.zero_grad();
      ++batch_no;
    }

    const auto [val_mse, val_mae] =
        evaluate(model, bank, data, Split::Val, cfg.batch_size);
    result.report.train_mse_curve.push_back(train_acc.mse());
    result.report.train_mae_curve.push_back(train_acc.mae());
    result.report.val_mse_curve.push_back(val_mse);
    result.report.val_mae_curve.push_back(val_mae);
    result.report.epoch_seconds.push_back(
        std::chrono::duration<double>(clock::now() - started).count());

    result.metric_lines.push_back(detail::metric_line(
        epoch, "train", horizon, train_acc.mse(), train_acc.mae(), lr));
    result.metric_lines.push_back(
        detail::metric_line(epoch, "val", horizon, val_mse, val_mae, lr));

    if (cfg.select_best_val && val_mse < best_val) {
      best_val = val_mse;
      best_epoch = epoch;
      best_params = model.snapshot();
    }
  }

  if (cfg.epochs > 0 && cfg.select_best_val) {
    model.restore(best_params);
    result.report.selected_epoch = best_epoch;
  } else {
    result.report.selected_epoch = cfg.epochs == 0 ? 0 : cfg.epochs - 1;
  }

  const auto [test_mse, test_mae] =
      evaluate(model, bank, data, Split::Test, cfg.batch_size);
  result.report.test_mse = test_mse;
  result.report.test_mae = test_mae;
  const double final_lr =
      cfg.epochs == 0
          ? cfg.initial_lr
          : cfg.initial_lr *
                std::pow(cfg.lr_decay,
                         static_cast<double>(result.report.selected_epoch));
  result.metric_lines.push_back(detail::metric_line(
      result.report.selected_epoch, "test", horizon, test_mse, test_mae,
      final_lr));
  return result;
}

}  // namespace filterts
