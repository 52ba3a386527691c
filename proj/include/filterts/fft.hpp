#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "filterts/common.hpp"

namespace filterts {

using cdouble = std::complex<double>;

namespace detail {

constexpr double kPi = 3.141592653589793238462643383279502884;

inline bool is_pow2(std::size_t n) { return n && (n & (n - 1)) == 0; }

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// In-place iterative radix-2 Cooley-Tukey. n must be a power of two.
// Forward kernel is e^{-2pi i f t / n}; no normalization on either direction
// (the caller applies 1/n on the inverse).
inline void fft_pow2(std::vector<cdouble>& a, bool inverse) {
  const std::size_t n = a.size();
  if (n < 2) return;

  // bit-reversal permutation
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }

  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * kPi / static_cast<double>(len);
    const std::size_t half = len >> 1;
    std::vector<cdouble> w(half);
    for (std::size_t k = 0; k < half; ++k)
      w[k] = cdouble(std::cos(ang * static_cast<double>(k)),
                     std::sin(ang * static_cast<double>(k)));
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const cdouble u = a[i + k];
        const cdouble v = a[i + k + half] * w[k];
        a[i + k] = u + v;
        a[i + k + half] = u - v;
      }
    }
  }
}

// Bluestein chirp-z transform for arbitrary n, built on power-of-two FFTs.
// The chirp phase uses t^2 mod 2n so the sin/cos arguments stay small; for
// n in the tens of thousands the naive pi*t^2/n argument would lose most of
// its mantissa.
inline std::vector<cdouble> fft_bluestein(const std::vector<cdouble>& x,
                                          bool inverse) {
  const std::size_t n = x.size();
  const double sign = inverse ? 1.0 : -1.0;

  std::vector<cdouble> chirp(n);
  for (std::size_t t = 0; t < n; ++t) {
    const std::uint64_t t2mod = (static_cast<std::uint64_t>(t) * t) %
                                (2 * static_cast<std::uint64_t>(n));
    const double ang =
        sign * kPi * static_cast<double>(t2mod) / static_cast<double>(n);
    chirp[t] = cdouble(std::cos(ang), std::sin(ang));
  }

  const std::size_t m = next_pow2(2 * n - 1);
  std::vector<cdouble> a(m, cdouble(0, 0));
  std::vector<cdouble> b(m, cdouble(0, 0));
  for (std::size_t t = 0; t < n; ++t) a[t] = x[t] * chirp[t];
  b[0] = std::conj(chirp[0]);
  for (std::size_t t = 1; t < n; ++t)
    b[t] = b[m - t] = std::conj(chirp[t]);

  fft_pow2(a, false);
  fft_pow2(b, false);
  for (std::size_t i = 0; i < m; ++i) a[i] *= b[i];
  fft_pow2(a, true);
  const double inv_m = 1.0 / static_cast<double>(m);

  std::vector<cdouble> out(n);
  for (std::size_t f = 0; f < n; ++f) out[f] = a[f] * inv_m * chirp[f];
  return out;
}

}  // namespace detail

/// Discrete Fourier transform of a complex vector of any length >= 1.
/// Forward: X_f = sum_t x_t e^{-2pi i f t / n}. Inverse applies the 1/n
/// factor so that fft(fft(x), inverse) == x. Power-of-two lengths take the
/// radix-2 path, everything else goes through Bluestein.
inline std::vector<cdouble> fft(const std::vector<cdouble>& x,
                                bool inverse = false) {
  const std::size_t n = x.size();
  if (n == 0) throw contract_error("fft: input must be non-empty");
  if (n == 1) return x;

  std::vector<cdouble> out;
  if (detail::is_pow2(n)) {
    out = x;
    detail::fft_pow2(out, inverse);
  } else {
    out = detail::fft_bluestein(x, inverse);
  }
  if (inverse) {
    const double inv_n = 1.0 / static_cast<double>(n);
    for (auto& v : out) v *= inv_n;
  }
  return out;
}

inline std::vector<cdouble> fft_real(const std::vector<double>& x,
                                     bool inverse = false) {
  std::vector<cdouble> cx(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) cx[i] = cdouble(x[i], 0.0);
  return fft(cx, inverse);
}

/// Elementwise modulus sqrt(Re^2 + Im^2).
inline std::vector<double> magnitude(const std::vector<cdouble>& s) {
  std::vector<double> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = std::abs(s[i]);
  return out;
}

/// Linear (non-circular) convolution of two real vectors via zero-padded
/// FFTs: pad both to a length >= N+M-1 (rounded up to a power of two
/// internally), multiply the spectra, inverse-transform, and keep the
/// N+M-1 prefix.
inline std::vector<double> linear_convolve_via_fft(
    const std::vector<double>& x, const std::vector<double>& h) {
  if (x.empty() || h.empty())
    throw contract_error("linear_convolve_via_fft: inputs must be non-empty");
  const std::size_t out_len = x.size() + h.size() - 1;
  const std::size_t m = detail::next_pow2(out_len);

  std::vector<cdouble> xa(m, cdouble(0, 0));
  std::vector<cdouble> hb(m, cdouble(0, 0));
  for (std::size_t i = 0; i < x.size(); ++i) xa[i] = cdouble(x[i], 0.0);
  for (std::size_t i = 0; i < h.size(); ++i) hb[i] = cdouble(h[i], 0.0);
  detail::fft_pow2(xa, false);
  detail::fft_pow2(hb, false);
  for (std::size_t i = 0; i < m; ++i) xa[i] *= hb[i];
  detail::fft_pow2(xa, true);

  std::vector<double> out(out_len);
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t i = 0; i < out_len; ++i) out[i] = xa[i].real() * inv_m;
  return out;
}

}  // namespace filterts
