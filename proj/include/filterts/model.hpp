#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "filterts/common.hpp"
#include "filterts/complex_ops.hpp"
#include "filterts/dcfilter.hpp"
#include "filterts/embedding.hpp"
#include "filterts/rng.hpp"
#include "filterts/sgfilter.hpp"
#include "filterts/tensor.hpp"

namespace filterts {

struct ModelConfig {
  std::size_t lookback = 96;            // L
  std::size_t horizon = 96;             // F
  std::size_t n_vars = 7;               // N
  std::size_t hidden = 128;             // D
  std::size_t layers = 1;               // e
  double alpha_quantile = 0.9;          // dynamic-filter magnitude quantile
  std::size_t num_static_filters = 10;  // K
  std::size_t half_bandwidth = 1;       // delta f
  double eps = 1e-5;                    // instance norm + layer norm
};

/// One residual filtering block: the two filter paths, the three mixing
/// scalars, and the per-layer normalization gains.
struct LayerParams {
  DCFilterParams dc;
  SGFilterParams sg;
  Tensor mix_input, mix_dynamic, mix_static;  // real scalars
  CLayerNormParams norm;
};

/// Frequency-to-time output head: a complex linear map D -> D (stored as one
/// complex matrix whose parts are the real/imaginary weight matrices),
/// followed by Re || Im concatenation and a real projection 2D -> F.
struct OutputHead {
  ComplexLinearLayer freq_proj;  // complex {D, D}, no bias
  Tensor time_proj;              // real {2D, F}
};

/// Applies the output head: x_sigma [..., D] -> real forecast [..., F].
inline Tensor f2t_project(const Tensor& x_sigma, const OutputHead& head) {
  Tensor projected = clinear_apply(head.freq_proj, x_sigma);
  Tensor stacked = concat(real_part(projected), imag_part(projected),
                          projected.rank() - 1);
  return matmul(stacked, head.time_proj);
}

/// Exact count of trainable scalars for a configuration. Complex parameters
/// count their real and imaginary coordinates separately.
inline std::size_t count_parameters(const ModelConfig& c) {
  const std::size_t n = c.n_vars, d = c.hidden, k = c.num_static_filters;
  const std::size_t per_layer = 2 * n * d   // dynamic spectral gain
                                + 2 * n * n  // cross-variable mix weights
                                + 2 * n * d  // static spectral gain
                                + 2 * n * k  // band weights
                                + 3          // mixing scalars
                                + 4 * d;     // layer norm gains/biases
  const std::size_t head = 2 * d * d + 2 * d * c.horizon;
  return c.layers * per_layer + head;
}

/// The full frequency-domain forecaster: embedding, e stacked filtering
/// blocks, and the frequency-to-time head with instance denormalization.
class FilterTSModel {
 public:
  FilterTSModel(const ModelConfig& config, std::uint64_t seed)
      : config_(config) {
    if (config.lookback < 2 || config.horizon == 0 || config.n_vars == 0 ||
        config.hidden == 0 || config.layers == 0)
      throw contract_error("model config axes must be positive (L >= 2)");
    Rng rng(seed);
    layers_.reserve(config.layers);
    for (std::size_t l = 0; l < config.layers; ++l) {
      const std::string prefix = "layer" + std::to_string(l);
      LayerParams lp;
      lp.dc = make_dcfilter_params(config.n_vars, config.hidden,
                                   prefix + ".dc");
      lp.sg = make_sgfilter_params(config.n_vars, config.hidden,
                                   config.num_static_filters, prefix + ".sg");
      lp.mix_input = Tensor::scalar(1.0);
      lp.mix_input.mark_trainable(prefix + ".mix_input");
      lp.mix_dynamic = Tensor::scalar(0.5);
      lp.mix_dynamic.mark_trainable(prefix + ".mix_dynamic");
      lp.mix_static = Tensor::scalar(0.5);
      lp.mix_static.mark_trainable(prefix + ".mix_static");
      lp.norm = make_clayernorm_params(config.hidden);
      lp.norm.gain_re.mark_trainable(prefix + ".norm_gain_re");
      lp.norm.bias_re.mark_trainable(prefix + ".norm_bias_re");
      lp.norm.gain_im.mark_trainable(prefix + ".norm_gain_im");
      lp.norm.bias_im.mark_trainable(prefix + ".norm_bias_im");
      layers_.push_back(std::move(lp));
    }

    const std::size_t d = config.hidden;
    const double freq_bound = 1.0 / std::sqrt(static_cast<double>(d));
    std::vector<double> wre(d * d), wim(d * d);
    for (auto& v : wre) v = rng.uniform(-freq_bound, freq_bound);
    for (auto& v : wim) v = rng.uniform(-freq_bound, freq_bound);
    head_.freq_proj.weight =
        Tensor::from_complex({d, d}, std::move(wre), std::move(wim));
    head_.freq_proj.weight.mark_trainable("head.freq_proj", true);

    const double time_bound = 1.0 / std::sqrt(static_cast<double>(2 * d));
    std::vector<double> q(2 * d * config.horizon);
    for (auto& v : q) v = rng.uniform(-time_bound, time_bound);
    head_.time_proj = Tensor::from_real({2 * d, config.horizon}, std::move(q));
    head_.time_proj.mark_trainable("head.time_proj");
  }

  const ModelConfig& config() const { return config_; }
  const std::vector<LayerParams>& layers() const { return layers_; }
  const OutputHead& head() const { return head_; }

  /// Parameter registry in a fixed, documented order (checkpoint layout and
  /// optimizer state both follow it).
  std::vector<std::pair<std::string, Tensor>> parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (const auto& lp : layers_) {
      out.emplace_back(lp.dc.spectral_gain.name(), lp.dc.spectral_gain);
      out.emplace_back(lp.dc.mix_weights.name(), lp.dc.mix_weights);
      out.emplace_back(lp.sg.spectral_gain.name(), lp.sg.spectral_gain);
      out.emplace_back(lp.sg.band_weights.name(), lp.sg.band_weights);
      out.emplace_back(lp.mix_input.name(), lp.mix_input);
      out.emplace_back(lp.mix_dynamic.name(), lp.mix_dynamic);
      out.emplace_back(lp.mix_static.name(), lp.mix_static);
      out.emplace_back(lp.norm.gain_re.name(), lp.norm.gain_re);
      out.emplace_back(lp.norm.bias_re.name(), lp.norm.bias_re);
      out.emplace_back(lp.norm.gain_im.name(), lp.norm.gain_im);
      out.emplace_back(lp.norm.bias_im.name(), lp.norm.bias_im);
    }
    out.emplace_back(head_.freq_proj.weight.name(), head_.freq_proj.weight);
    out.emplace_back(head_.time_proj.name(), head_.time_proj);
    return out;
  }

  void zero_grad() const {
    for (auto& [name, t] : parameters()) const_cast<Tensor&>(t).zero_grad();
  }

  /// Batched forward pass. `inputs` is B x N x L row-major; the result is
  /// the denormalized forecast tensor {B, N, F} wired into the autodiff
  /// graph of all trainable parameters.
  Tensor forward_batch(const std::vector<double>& inputs, std::size_t batch,
                       const FilterBank& bank) const {
    check_bank(bank);
    const std::size_t n = config_.n_vars, l = config_.lookback;
    const std::size_t d = config_.hidden;
    if (inputs.size() != batch * n * l)
      throw dimension_error("forward_batch: input buffer size mismatch");

    // embedding (outside the graph: it has no trainable inputs)
    std::vector<double> x_re(batch * n * d, 0.0), x_im(batch * n * d, 0.0);
    std::vector<double> denorm_scale(batch * n), denorm_mu(batch * n);
    Matrix window(n, l);
    for (std::size_t b = 0; b < batch; ++b) {
      std::copy_n(inputs.data() + b * n * l, n * l, window.v.begin());
      auto [norm, stats] = instance_normalize(window, config_.eps);
      const FreqRepr repr = t2f_embed(norm, d);
      for (std::size_t i = 0; i < n * d; ++i) {
        x_re[b * n * d + i] = repr.values[i].real();
        x_im[b * n * d + i] = repr.values[i].imag();
      }
      for (std::size_t i = 0; i < n; ++i) {
        denorm_scale[b * n + i] = stats.sigma[i] + stats.eps;
        denorm_mu[b * n + i] = stats.mu[i];
      }
    }

    Tensor x = Tensor::from_complex({batch, n, d}, std::move(x_re),
                                    std::move(x_im));
    const Tensor mask = filter_bank_mask_tensor(bank);

    for (const auto& lp : layers_) {
      Tensor conj_h = batch_dynamic_filters(x, batch);
      Tensor o = dc_filter_forward(x, lp.dc, conj_h);
      Tensor p = sg_filter_forward(x, lp.sg, mask);
      Tensor mixed = add(add(mul(x, lp.mix_input), mul(o, lp.mix_dynamic)),
                         mul(p, lp.mix_static));
      x = clayernorm(mixed, 2, config_.eps, lp.norm);
    }

    Tensor forecast = f2t_project(x, head_);  // {B, N, F}
    Tensor scale_t =
        Tensor::from_real({batch, n, 1}, std::move(denorm_scale));
    Tensor mu_t = Tensor::from_real({batch, n, 1}, std::move(denorm_mu));
    return add(mul(forecast, scale_t), mu_t);
  }

  /// Single-window convenience: N x L in, N x F out.
  Matrix forward(const Matrix& window, const FilterBank& bank) const {
    if (window.rows != config_.n_vars || window.cols != config_.lookback)
      throw contract_error("forward: window shape does not match config");
    Tensor out = forward_batch(window.v, 1, bank);
    Matrix result(config_.n_vars, config_.horizon);
    result.v = out.re();
    return result;
  }

  /// Deep copies of all parameter buffers (for best-epoch snapshots).
  std::vector<std::pair<std::vector<double>, std::vector<double>>> snapshot()
      const {
    std::vector<std::pair<std::vector<double>, std::vector<double>>> s;
    for (const auto& [name, t] : parameters()) s.emplace_back(t.re(), t.im());
    return s;
  }

  void restore(const std::vector<std::pair<std::vector<double>,
                                           std::vector<double>>>& s) {
    auto params = parameters();
    if (s.size() != params.size())
      throw contract_error("restore: snapshot parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor& t = params[i].second;
      if (s[i].first.size() != t.numel())
        throw contract_error("restore: size mismatch for " + params[i].first);
      t.values_re_mut() = s[i].first;
      t.values_im_mut() = s[i].second;
      t.refresh_real_typed();
    }
  }

 private:
  void check_bank(const FilterBank& bank) const {
    if (bank.n_vars != config_.n_vars || bank.width != config_.hidden ||
        bank.lookback != config_.lookback)
      throw contract_error(
          "filter bank does not match model config: bank (N=" +
          std::to_string(bank.n_vars) + ", D=" + std::to_string(bank.width) +
          ", L=" + std::to_string(bank.lookback) + ") vs config (N=" +
          std::to_string(config_.n_vars) + ", D=" +
          std::to_string(config_.hidden) + ", L=" +
          std::to_string(config_.lookback) + ")");
  }

  // Window-constant cross-variable filters for the current layer input:
  // thresholding is not differentiable, so the filters are detached copies.
  Tensor batch_dynamic_filters(const Tensor& x, std::size_t batch) const {
    const std::size_t n = config_.n_vars, d = config_.hidden;
    std::vector<double> h_re(batch * n * d, 0.0), h_im(batch * n * d, 0.0);
    FreqRepr repr;
    repr.n_vars = n;
    repr.width = d;
    repr.source_window_len = config_.lookback;
    repr.values.resize(n * d);
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t off = b * n * d;
      for (std::size_t i = 0; i < n * d; ++i)
        repr.values[i] = cdouble(x.re()[off + i], x.im()[off + i]);
      const DynamicFilterSet filters =
          build_dynamic_filters(repr, config_.alpha_quantile);
      for (std::size_t i = 0; i < n * d; ++i) {
        h_re[off + i] = filters.h[i].real();
        h_im[off + i] = -filters.h[i].imag();  // store conj(H)
      }
    }
    return Tensor::from_complex({batch, n, d}, std::move(h_re),
                                std::move(h_im));
  }

  ModelConfig config_;
  std::vector<LayerParams> layers_;
  OutputHead head_;
};

}  // namespace filterts
