#pragma once

#include <cmath>
#include <complex>
#include <utility>
#include <vector>

#include "filterts/common.hpp"
#include "filterts/fft.hpp"

namespace filterts {

/// Per-window, per-variable normalization statistics, kept around so the
/// forecast can be mapped back to the original scale.
struct InstanceStats {
  std::vector<double> mu;     // one per variable
  std::vector<double> sigma;  // population standard deviation per variable
  double eps = 1e-5;
};

/// Frequency-domain window representation: N x D complex values obtained
/// from the zero-padded FFT of each normalized variable. Directly after
/// embedding, bins at index > source_window_len are exactly zero.
struct FreqRepr {
  std::size_t n_vars = 0;
  std::size_t width = 0;              // D
  std::size_t source_window_len = 0;  // L
  std::vector<cdouble> values;        // row-major N x D

  cdouble at(std::size_t i, std::size_t f) const {
    return values[i * width + f];
  }
};

/// Row-wise z-scoring of an N x L window: (x - mu) / (sigma + eps), with the
/// stats returned for exact inversion at output time. Constant rows map to
/// zero (the eps keeps the division defined).
inline std::pair<Matrix, InstanceStats> instance_normalize(const Matrix& x,
                                                           double eps) {
  if (x.cols < 2)
    throw contract_error("instance_normalize: window length must be >= 2");
  Matrix out(x.rows, x.cols);
  InstanceStats stats;
  stats.eps = eps;
  stats.mu.resize(x.rows);
  stats.sigma.resize(x.rows);
  const double inv_l = 1.0 / static_cast<double>(x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double mean = 0.0;
    for (std::size_t t = 0; t < x.cols; ++t) mean += x.at(i, t);
    mean *= inv_l;
    double var = 0.0;
    for (std::size_t t = 0; t < x.cols; ++t) {
      const double d = x.at(i, t) - mean;
      var += d * d;
    }
    const double sigma = std::sqrt(var * inv_l);
    stats.mu[i] = mean;
    stats.sigma[i] = sigma;
    const double inv = 1.0 / (sigma + eps);
    for (std::size_t t = 0; t < x.cols; ++t)
      out.at(i, t) = (x.at(i, t) - mean) * inv;
  }
  return {std::move(out), std::move(stats)};
}

inline Matrix instance_denormalize(const Matrix& y, const InstanceStats& s) {
  Matrix out(y.rows, y.cols);
  for (std::size_t i = 0; i < y.rows; ++i) {
    const double scale = s.sigma[i] + s.eps;
    for (std::size_t t = 0; t < y.cols; ++t)
      out.at(i, t) = y.at(i, t) * scale + s.mu[i];
  }
  return out;
}

/// Time-to-frequency embedding: per variable, append L zeros (so spectrum
/// products correspond to linear rather than circular convolution), take the
/// length-2L FFT, keep the L+1 unique low-frequency bins, and fit to width D
/// by zero-extension or truncation.
inline FreqRepr t2f_embed(const Matrix& x_norm, std::size_t d_width) {
  if (d_width == 0) throw contract_error("t2f_embed: D must be >= 1");
  const std::size_t l = x_norm.cols;
  FreqRepr repr;
  repr.n_vars = x_norm.rows;
  repr.width = d_width;
  repr.source_window_len = l;
  repr.values.assign(x_norm.rows * d_width, cdouble(0, 0));

  const std::size_t keep = std::min(d_width, l + 1);
  std::vector<cdouble> padded(2 * l);
  for (std::size_t i = 0; i < x_norm.rows; ++i) {
    for (std::size_t t = 0; t < l; ++t)
      padded[t] = cdouble(x_norm.at(i, t), 0.0);
    for (std::size_t t = l; t < 2 * l; ++t) padded[t] = cdouble(0, 0);
    const std::vector<cdouble> spec = fft(padded);
    for (std::size_t f = 0; f < keep; ++f)
      repr.values[i * d_width + f] = spec[f];
  }
  return repr;
}

}  // namespace filterts
