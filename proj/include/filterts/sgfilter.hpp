#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "filterts/common.hpp"
#include "filterts/complex_ops.hpp"
#include "filterts/fft.hpp"
#include "filterts/tensor.hpp"

namespace filterts {

/// Static band-pass filter bank built once from the training split: for each
/// variable, binary masks of width D centered on the K dominant bins of the
/// training-set spectrum (downsampled to lookback resolution).
struct FilterBank {
  std::size_t n_vars = 0;
  std::size_t num_filters = 0;       // K
  std::size_t width = 0;             // D
  std::size_t half_bandwidth = 0;    // delta f
  std::size_t lookback = 0;          // L the bank was built at

  std::vector<std::size_t> center_freqs;  // row-major N x K
  std::vector<double> center_magnitudes;  // N x K, diagnostics only

  struct Fingerprint {
    std::size_t n_vars = 0;
    std::size_t length = 0;  // T of the training split
    std::uint64_t hash = 0;
  } built_from;

  std::size_t center(std::size_t i, std::size_t s) const {
    return center_freqs[i * num_filters + s];
  }

  bool mask_bit(std::size_t i, std::size_t s, std::size_t f) const {
    const std::size_t c = center(i, s);
    const std::size_t lo = c >= half_bandwidth ? c - half_bandwidth : 0;
    const std::size_t hi = c + half_bandwidth;
    return f >= lo && f <= hi && f < width;
  }
};

/// Sum of spectrum magnitudes over the L non-overlapping bin groups
/// [floor(m T / L), floor((m+1) T / L)); exposed separately because the
/// spectrum-inspection command reports the same curve.
inline std::vector<double> downsampled_global_magnitudes(
    const std::vector<double>& series, std::size_t lookback) {
  const std::size_t t_len = series.size();
  const std::vector<double> mags = magnitude(fft_real(series));
  std::vector<double> out(lookback, 0.0);
  for (std::size_t m = 0; m < lookback; ++m) {
    const std::size_t lo = m * t_len / lookback;
    const std::size_t hi = (m + 1) * t_len / lookback;
    for (std::size_t b = lo; b < hi; ++b) out[m] += mags[b];
  }
  return out;
}

/// Builds the bank from the training split (N x T). Per variable: FFT of the
/// full series, magnitude downsampling to L bins, then the top K bins by
/// downsampled magnitude become band-pass centers. Candidates are limited to
/// the unique half of the spectrum (bins 0..L/2): for real signals the upper
/// groups mirror the lower ones and would duplicate every component. Ties
/// break toward the lower bin, so the result is deterministic.
inline FilterBank build_filter_bank(const Matrix& train_series,
                                    std::size_t lookback, std::size_t width,
                                    std::size_t num_filters,
                                    std::size_t half_bandwidth) {
  if (train_series.cols < lookback)
    throw contract_error("build_filter_bank: training split shorter than L");
  if (num_filters == 0)
    throw contract_error("build_filter_bank: K must be >= 1");
  const std::size_t candidates = lookback / 2 + 1;
  if (num_filters > candidates)
    throw contract_error(
        "build_filter_bank: K exceeds the number of distinct bins (" +
        std::to_string(candidates) + ")");

  FilterBank bank;
  bank.n_vars = train_series.rows;
  bank.num_filters = num_filters;
  bank.width = width;
  bank.half_bandwidth = half_bandwidth;
  bank.lookback = lookback;
  bank.center_freqs.resize(train_series.rows * num_filters);
  bank.center_magnitudes.resize(train_series.rows * num_filters);
  bank.built_from = {train_series.rows, train_series.cols,
                     fnv1a(train_series.v)};

  std::vector<double> row(train_series.cols);
  for (std::size_t i = 0; i < train_series.rows; ++i) {
    std::copy_n(train_series.row(i), train_series.cols, row.begin());
    const std::vector<double> down =
        downsampled_global_magnitudes(row, lookback);

    std::vector<std::size_t> order(candidates);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       if (down[a] != down[b]) return down[a] > down[b];
                       return a < b;
                     });
    for (std::size_t s = 0; s < num_filters; ++s) {
      bank.center_freqs[i * num_filters + s] = order[s];
      bank.center_magnitudes[i * num_filters + s] = down[order[s]];
    }
  }
  return bank;
}

/// Materializes the bank as a constant {N, K, D} 0/1 tensor.
inline Tensor filter_bank_mask_tensor(const FilterBank& bank) {
  std::vector<double> mask(bank.n_vars * bank.num_filters * bank.width, 0.0);
  for (std::size_t i = 0; i < bank.n_vars; ++i)
    for (std::size_t s = 0; s < bank.num_filters; ++s) {
      const std::size_t c = bank.center(i, s);
      const std::size_t lo =
          c >= bank.half_bandwidth ? c - bank.half_bandwidth : 0;
      const std::size_t hi =
          std::min(c + bank.half_bandwidth, bank.width - 1);
      for (std::size_t f = lo; f <= hi; ++f)
        mask[(i * bank.num_filters + s) * bank.width + f] = 1.0;
    }
  return Tensor::from_real({bank.n_vars, bank.num_filters, bank.width},
                           std::move(mask));
}

/// Trainable pieces of the static filtering path: complex spectrum gain and
/// per-band aggregation weights.
struct SGFilterParams {
  Tensor spectral_gain;  // complex {N, D}
  Tensor band_weights;   // complex {N, K}
};

inline SGFilterParams make_sgfilter_params(std::size_t n_vars,
                                           std::size_t width,
                                           std::size_t num_filters,
                                           const std::string& prefix) {
  SGFilterParams p;
  p.spectral_gain = Tensor::from_real(
      {n_vars, width}, std::vector<double>(n_vars * width, 1.0));
  p.spectral_gain.mark_trainable(prefix + ".spectral_gain", true);
  p.band_weights = Tensor::from_real(
      {n_vars, num_filters},
      std::vector<double>(n_vars * num_filters,
                          1.0 / static_cast<double>(num_filters)));
  p.band_weights.mark_trainable(prefix + ".band_weights", true);
  return p;
}

/// Forward pass of the static global filter:
///   P_i = sum_s (X_i . gain_i . Z_{i,s}) * Vstar[i,s]
/// computed by collapsing the bank against the normalized band weights
/// first: P = (X . gain) . (sum_s Vstar[i,s] Z[i,s,:]).
inline Tensor sg_filter_forward(const Tensor& x, const SGFilterParams& params,
                                const Tensor& bank_mask) {
  const Shape& ms = bank_mask.shape();
  if (ms.size() != 3)
    throw dimension_error("sg_filter_forward: mask must be {N,K,D}");
  Tensor vstar = csoftmax(crelu(params.band_weights), 1);
  Tensor per_band = mul(reshape(vstar, {ms[0], ms[1], 1}), bank_mask);
  Tensor combined = reduce_sum(per_band, 1, /*keepdim=*/false);  // {N, D}
  Tensor xp = mul(x, params.spectral_gain);
  return mul(xp, combined);
}

}  // namespace filterts
