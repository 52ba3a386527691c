#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "filterts/complex_ops.hpp"
#include "filterts/embedding.hpp"
#include "filterts/tensor.hpp"

namespace filterts {

/// Type-7 quantile (sorted order statistics with linear interpolation).
inline double quantile_type7(std::vector<double> xs, double alpha) {
  if (xs.empty()) throw contract_error("quantile: empty sample");
  std::sort(xs.begin(), xs.end());
  if (xs.size() == 1) return xs[0];
  const double h = alpha * static_cast<double>(xs.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= xs.size()) return xs.back();
  return xs[lo] + (h - static_cast<double>(lo)) * (xs[lo + 1] - xs[lo]);
}

/// One window's cross-variable filters: each variable's spectrum thresholded
/// at its own magnitude quantile. Entries survive only when their magnitude
/// strictly exceeds tau; everything else is zeroed.
struct DynamicFilterSet {
  std::size_t n_vars = 0;
  std::size_t width = 0;
  std::vector<cdouble> h;    // row-major N x D
  std::vector<double> tau;   // one threshold per variable

  cdouble at(std::size_t i, std::size_t f) const { return h[i * width + f]; }
};

/// Builds the per-window filters. The quantile is taken over the bins that
/// carry window information (0..L inclusive, clipped to the representation
/// width); the zero bins appended by the embedding would otherwise drag the
/// threshold down. The thresholding itself applies to all D bins.
inline DynamicFilterSet build_dynamic_filters(const FreqRepr& x,
                                              double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw contract_error("build_dynamic_filters: alpha must be in (0,1)");
  DynamicFilterSet out;
  out.n_vars = x.n_vars;
  out.width = x.width;
  out.h.assign(x.values.size(), cdouble(0, 0));
  out.tau.resize(x.n_vars);

  const std::size_t quantile_bins =
      std::min(x.width, x.source_window_len + 1);
  std::vector<double> mags(quantile_bins);
  for (std::size_t i = 0; i < x.n_vars; ++i) {
    for (std::size_t f = 0; f < quantile_bins; ++f)
      mags[f] = std::abs(x.at(i, f));
    const double tau = quantile_type7(mags, alpha);
    out.tau[i] = tau;
    for (std::size_t f = 0; f < x.width; ++f) {
      const cdouble v = x.at(i, f);
      if (std::abs(v) > tau) out.h[i * x.width + f] = v;
    }
  }
  return out;
}

/// Trainable pieces of the dynamic cross-variable filtering path: a complex
/// elementwise gain over the spectrum and the cross-variable mixing matrix.
struct DCFilterParams {
  Tensor spectral_gain;  // complex {N, D}
  Tensor mix_weights;    // complex {N, N}, normalized with csoftmax(crelu(.))
};

inline DCFilterParams make_dcfilter_params(std::size_t n_vars,
                                           std::size_t width,
                                           const std::string& prefix) {
  DCFilterParams p;
  p.spectral_gain = Tensor::from_real(
      {n_vars, width}, std::vector<double>(n_vars * width, 1.0));
  p.spectral_gain.mark_trainable(prefix + ".spectral_gain", true);
  p.mix_weights = Tensor::from_real(
      {n_vars, n_vars},
      std::vector<double>(n_vars * n_vars, 1.0 / static_cast<double>(n_vars)));
  p.mix_weights.mark_trainable(prefix + ".mix_weights", true);
  return p;
}

/// Constant graph leaf holding conj(H) for one or more windows. The filters
/// are window constants: no gradient flows through the thresholding.
inline Tensor dynamic_filters_conj_tensor(const DynamicFilterSet& f) {
  std::vector<double> re(f.h.size()), im(f.h.size());
  for (std::size_t i = 0; i < f.h.size(); ++i) {
    re[i] = f.h[i].real();
    im[i] = -f.h[i].imag();
  }
  return Tensor::from_complex({f.n_vars, f.width}, std::move(re),
                              std::move(im));
}

/// Forward pass of the dynamic cross-variable filter:
///   O_i = sum_k (X_i . gain_i . conj(H_k)) * Wstar[i,k]
/// computed as (X . gain) . (Wstar @ conj(H)), with Wstar the
/// csoftmax(crelu(.))-normalized mixing matrix along the filter-source axis.
/// `conj_filters` must already hold conj(H), shaped {N,D} or batched {B,N,D}.
inline Tensor dc_filter_forward(const Tensor& x, const DCFilterParams& params,
                                const Tensor& conj_filters) {
  Tensor wstar = csoftmax(crelu(params.mix_weights), 1);
  Tensor xo = mul(x, params.spectral_gain);
  Tensor mixed = matmul(wstar, conj_filters);
  return mul(xo, mixed);
}

}  // namespace filterts
