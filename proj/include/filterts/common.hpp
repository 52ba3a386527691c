#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace filterts {

// Thrown when operand shapes are incompatible (beyond broadcast rules,
// mismatched inner axes, ...).
struct dimension_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Thrown when an operation is called outside its contract (non-scalar loss,
// empty input, K larger than the number of candidate bins, ...).
struct contract_error : std::logic_error {
  using std::logic_error::logic_error;
};

// Thrown on malformed external input (CSV cells, config files, checkpoints).
struct parse_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense row-major real matrix. Used for plain numeric data outside the
// autodiff graph (dataset values, normalized windows, forecasts).
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), v(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
  const double* row(std::size_t r) const { return v.data() + r * cols; }
  double* row(std::size_t r) { return v.data() + r * cols; }
  std::size_t size() const { return v.size(); }
};

// FNV-1a, used for dataset fingerprints and run-directory names.
inline std::uint64_t fnv1a(const void* data, std::size_t len,
                           std::uint64_t seed = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s,
                           std::uint64_t seed = 0xcbf29ce484222325ull) {
  return fnv1a(s.data(), s.size(), seed);
}

inline std::uint64_t fnv1a(const std::vector<double>& xs,
                           std::uint64_t seed = 0xcbf29ce484222325ull) {
  return fnv1a(xs.data(), xs.size() * sizeof(double), seed);
}

}  // namespace filterts
