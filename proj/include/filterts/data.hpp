#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "filterts/common.hpp"
#include "filterts/rng.hpp"

namespace filterts {

/// Raw multivariate series as loaded from disk: values are N x T (one row
/// per variable), plus chronological split fractions. Timestamps are carried
/// for reporting but the model never consumes them.
struct Dataset {
  std::string name;
  Matrix values;  // N x T_total
  std::vector<std::string> timestamps;
  std::vector<std::string> var_names;
  double train_frac = 0.6;
  double val_frac = 0.2;
  double test_frac = 0.2;
};

/// Loads a CSV with a header row, a leading timestamp column, and N numeric
/// columns. Cells are parsed as 64-bit floats with from_chars; any blank,
/// non-numeric, or missing cell fails with its 1-based row/column location.
inline Dataset load_csv(const std::string& path, std::string name = "") {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open dataset file: " + path);

  Dataset ds;
  ds.name = name.empty() ? path : std::move(name);

  std::string line;
  if (!std::getline(in, line))
    throw parse_error(path + ": empty file (missing header row)");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  {
    std::stringstream header(line);
    std::string cell;
    bool first = true;
    while (std::getline(header, cell, ',')) {
      if (first)
        first = false;  // timestamp column
      else
        ds.var_names.push_back(cell);
    }
  }
  const std::size_t n_vars = ds.var_names.size();
  if (n_vars == 0)
    throw parse_error(path + ": header has no variable columns");

  std::vector<std::vector<double>> columns(n_vars);
  std::size_t row_no = 1;  // header was row 1
  while (std::getline(in, line)) {
    ++row_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    std::size_t col = 0, begin = 0;
    while (begin <= line.size()) {
      std::size_t end = line.find(',', begin);
      if (end == std::string::npos) end = line.size();
      const std::string_view cell(line.data() + begin, end - begin);
      if (col == 0) {
        ds.timestamps.emplace_back(cell);
      } else {
        if (col > n_vars)
          throw parse_error(path + ": row " + std::to_string(row_no) +
                            " has more cells than the header");
        double value = 0.0;
        const auto [ptr, ec] =
            std::from_chars(cell.data(), cell.data() + cell.size(), value);
        if (ec != std::errc() || ptr != cell.data() + cell.size())
          throw parse_error(path + ": row " + std::to_string(row_no) +
                            ", column " + std::to_string(col + 1) +
                            ": cannot parse '" + std::string(cell) +
                            "' as a number");
        columns[col - 1].push_back(value);
      }
      ++col;
      begin = end + 1;
      if (end == line.size()) break;
    }
    if (col != n_vars + 1)
      throw parse_error(path + ": row " + std::to_string(row_no) + " has " +
                        std::to_string(col) + " cells, expected " +
                        std::to_string(n_vars + 1));
  }

  const std::size_t t_total = columns[0].size();
  if (t_total == 0) throw parse_error(path + ": no data rows");
  ds.values = Matrix(n_vars, t_total);
  for (std::size_t i = 0; i < n_vars; ++i)
    for (std::size_t t = 0; t < t_total; ++t)
      ds.values.at(i, t) = columns[i][t];
  return ds;
}

inline void write_csv(const std::string& path, const Matrix& values,
                      const std::vector<std::string>& var_names) {
  std::ofstream out(path);
  if (!out) throw parse_error("cannot write dataset file: " + path);
  out << "date";
  for (const auto& n : var_names) out << ',' << n;
  out << '\n';
  out.precision(17);
  for (std::size_t t = 0; t < values.cols; ++t) {
    out << t;
    for (std::size_t i = 0; i < values.rows; ++i) out << ',' << values.at(i, t);
    out << '\n';
  }
}

/// Per-variable train-split statistics used for global z-scoring.
struct SplitStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

/// Chronologically split and standardized series. The boundaries cut the
/// time axis into [0, train_end), [train_end, val_end), [val_end, T); all
/// three segments are z-scored with statistics computed on the train rows
/// only (no leakage).
struct SplitDataset {
  std::string name;
  Matrix values;  // standardized N x T_total
  std::size_t train_end = 0;
  std::size_t val_end = 0;
  SplitStats stats;

  std::size_t length() const { return values.cols; }
  std::size_t n_vars() const { return values.rows; }
  std::size_t train_len() const { return train_end; }
  std::size_t val_len() const { return val_end - train_end; }
  std::size_t test_len() const { return values.cols - val_end; }

  Matrix train_view() const {
    Matrix m(values.rows, train_end);
    for (std::size_t i = 0; i < values.rows; ++i)
      for (std::size_t t = 0; t < train_end; ++t) m.at(i, t) = values.at(i, t);
    return m;
  }
};

inline SplitDataset split_and_standardize(const Dataset& ds) {
  const double frac_sum = ds.train_frac + ds.val_frac + ds.test_frac;
  if (std::abs(frac_sum - 1.0) > 1e-9)
    throw contract_error("split fractions must sum to 1");
  const std::size_t t_total = ds.values.cols;
  const std::size_t train_end =
      static_cast<std::size_t>(ds.train_frac * static_cast<double>(t_total));
  const std::size_t val_end =
      train_end +
      static_cast<std::size_t>(ds.val_frac * static_cast<double>(t_total));
  if (train_end == 0 || val_end <= train_end || val_end >= t_total)
    throw contract_error("dataset too short for the requested split");

  SplitDataset out;
  out.name = ds.name;
  out.train_end = train_end;
  out.val_end = val_end;
  out.values = Matrix(ds.values.rows, t_total);
  out.stats.mean.resize(ds.values.rows);
  out.stats.stddev.resize(ds.values.rows);

  const double inv_n = 1.0 / static_cast<double>(train_end);
  for (std::size_t i = 0; i < ds.values.rows; ++i) {
    double mean = 0.0;
    for (std::size_t t = 0; t < train_end; ++t) mean += ds.values.at(i, t);
    mean *= inv_n;
    double var = 0.0;
    for (std::size_t t = 0; t < train_end; ++t) {
      const double d = ds.values.at(i, t) - mean;
      var += d * d;
    }
    double stddev = std::sqrt(var * inv_n);
    if (stddev == 0.0) stddev = 1.0;  // constant column: leave values at 0
    out.stats.mean[i] = mean;
    out.stats.stddev[i] = stddev;
    for (std::size_t t = 0; t < t_total; ++t)
      out.values.at(i, t) = (ds.values.at(i, t) - mean) / stddev;
  }
  return out;
}

enum class Split { Train, Val, Test };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

/// One batch of (lookback, horizon) windows: inputs B x N x L and targets
/// B x N x F, both row-major, plus the time origins they were cut at.
struct WindowBatch {
  std::size_t batch = 0;
  std::size_t n_vars = 0;
  std::size_t lookback = 0;
  std::size_t horizon = 0;
  std::vector<double> inputs;
  std::vector<double> targets;
  std::vector<std::size_t> origins;
};

/// Streams the windows of one split in batches. Train windows lie entirely
/// inside the train segment. Val/test windows follow the usual long-horizon
/// protocol: the lookback context may reach back across the split boundary,
/// the target never leaves the split. Every valid origin is emitted exactly
/// once per pass; with shuffle enabled the order is a seeded, reproducible
/// permutation.
class WindowStream {
 public:
  WindowStream(const SplitDataset& data, Split split, std::size_t lookback,
               std::size_t horizon, std::size_t batch_size, bool shuffle,
               std::uint64_t seed)
      : data_(&data),
        lookback_(lookback),
        horizon_(horizon),
        batch_size_(batch_size) {
    if (batch_size == 0) throw contract_error("batch_size must be >= 1");
    std::size_t first = 0, last = 0;  // inclusive origin range
    const std::size_t t = data.length();
    switch (split) {
      case Split::Train:
        if (data.train_len() < lookback + horizon)
          throw contract_error("train split too short for one (L+F) window");
        first = 0;
        last = data.train_end - lookback - horizon;
        break;
      case Split::Val:
        if (data.val_len() < horizon || data.train_end < lookback)
          throw contract_error("val split too short for one window");
        first = data.train_end - lookback;
        last = data.val_end - lookback - horizon;
        break;
      case Split::Test:
        if (data.test_len() < horizon || data.val_end < lookback)
          throw contract_error("test split too short for one window");
        first = data.val_end - lookback;
        last = t - lookback - horizon;
        break;
    }
    origins_.resize(last - first + 1);
    for (std::size_t i = 0; i < origins_.size(); ++i) origins_[i] = first + i;
    if (shuffle) {
      Rng rng(seed);
      rng.shuffle(origins_);
    }
  }

  std::size_t window_count() const { return origins_.size(); }

  bool next(WindowBatch& out) {
    if (cursor_ >= origins_.size()) return false;
    const std::size_t b =
        std::min(batch_size_, origins_.size() - cursor_);
    const std::size_t n = data_->n_vars();
    out.batch = b;
    out.n_vars = n;
    out.lookback = lookback_;
    out.horizon = horizon_;
    out.inputs.resize(b * n * lookback_);
    out.targets.resize(b * n * horizon_);
    out.origins.assign(origins_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                       origins_.begin() +
                           static_cast<std::ptrdiff_t>(cursor_ + b));
    for (std::size_t w = 0; w < b; ++w) {
      const std::size_t o = out.origins[w];
      for (std::size_t i = 0; i < n; ++i) {
        const double* src = data_->values.row(i);
        double* in_dst = out.inputs.data() + (w * n + i) * lookback_;
        double* tg_dst = out.targets.data() + (w * n + i) * horizon_;
        for (std::size_t t = 0; t < lookback_; ++t) in_dst[t] = src[o + t];
        for (std::size_t t = 0; t < horizon_; ++t)
          tg_dst[t] = src[o + lookback_ + t];
      }
    }
    cursor_ += b;
    return true;
  }

  void rewind() { cursor_ = 0; }

 private:
  const SplitDataset* data_;
  std::size_t lookback_, horizon_, batch_size_;
  std::vector<std::size_t> origins_;
  std::size_t cursor_ = 0;
};

}  // namespace filterts
