#pragma once

#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "filterts/common.hpp"
#include "filterts/data.hpp"
#include "filterts/model.hpp"
#include "filterts/sgfilter.hpp"
#include "filterts/train.hpp"

namespace filterts {

using json = nlohmann::json;

inline constexpr int kCheckpointFormatVersion = 1;
inline constexpr int kBankFormatVersion = 1;
inline constexpr int kStatsFormatVersion = 1;
inline constexpr int kOptimizerFormatVersion = 1;

namespace detail {

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw parse_error(path + ": invalid JSON: " + e.what());
  }
  return j;
}

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw parse_error("cannot write file: " + path);
  out << j.dump(2) << '\n';
}

}  // namespace detail

// ---------------------------------------------------------------------------
// model config
// ---------------------------------------------------------------------------

inline json model_config_to_json(const ModelConfig& c) {
  return json{{"lookback", c.lookback},
              {"horizon", c.horizon},
              {"n_vars", c.n_vars},
              {"hidden", c.hidden},
              {"layers", c.layers},
              {"alpha_quantile", c.alpha_quantile},
              {"num_static_filters", c.num_static_filters},
              {"half_bandwidth", c.half_bandwidth},
              {"eps", c.eps}};
}

inline ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.lookback = j.at("lookback").get<std::size_t>();
  c.horizon = j.at("horizon").get<std::size_t>();
  c.n_vars = j.at("n_vars").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.alpha_quantile = j.at("alpha_quantile").get<double>();
  c.num_static_filters = j.at("num_static_filters").get<std::size_t>();
  c.half_bandwidth = j.at("half_bandwidth").get<std::size_t>();
  c.eps = j.at("eps").get<double>();
  return c;
}

// ---------------------------------------------------------------------------
// filter bank
// ---------------------------------------------------------------------------

inline void save_filter_bank(const std::string& path, const FilterBank& b) {
  json centers = json::array();
  for (std::size_t i = 0; i < b.n_vars; ++i) {
    json row = json::array();
    for (std::size_t s = 0; s < b.num_filters; ++s)
      row.push_back(b.center(i, s));
    centers.push_back(std::move(row));
  }
  detail::write_json_file(
      path, json{{"format_version", kBankFormatVersion},
                 {"n_vars", b.n_vars},
                 {"num_filters", b.num_filters},
                 {"width", b.width},
                 {"half_bandwidth", b.half_bandwidth},
                 {"lookback", b.lookback},
                 {"center_freqs", std::move(centers)},
                 {"fingerprint",
                  json{{"n_vars", b.built_from.n_vars},
                       {"length", b.built_from.length},
                       {"hash", b.built_from.hash}}}});
}

/// Masks are a pure function of centers, half bandwidth, and width, so only
/// the centers travel in the file. center_magnitudes are build-time
/// diagnostics and come back zeroed.
inline FilterBank load_filter_bank(const std::string& path) {
  const json j = detail::read_json_file(path);
  if (j.at("format_version").get<int>() != kBankFormatVersion)
    throw parse_error(path + ": unsupported filter bank format version");
  FilterBank b;
  b.n_vars = j.at("n_vars").get<std::size_t>();
  b.num_filters = j.at("num_filters").get<std::size_t>();
  b.width = j.at("width").get<std::size_t>();
  b.half_bandwidth = j.at("half_bandwidth").get<std::size_t>();
  b.lookback = j.at("lookback").get<std::size_t>();
  const json& centers = j.at("center_freqs");
  if (centers.size() != b.n_vars)
    throw parse_error(path + ": center_freqs row count mismatch");
  b.center_freqs.reserve(b.n_vars * b.num_filters);
  for (const auto& row : centers) {
    if (row.size() != b.num_filters)
      throw parse_error(path + ": center_freqs column count mismatch");
    for (const auto& c : row) b.center_freqs.push_back(c.get<std::size_t>());
  }
  b.center_magnitudes.assign(b.n_vars * b.num_filters, 0.0);
  const json& fp = j.at("fingerprint");
  b.built_from.n_vars = fp.at("n_vars").get<std::size_t>();
  b.built_from.length = fp.at("length").get<std::size_t>();
  b.built_from.hash = fp.at("hash").get<std::uint64_t>();
  return b;
}

// ---------------------------------------------------------------------------
// standardization stats sidecar
// ---------------------------------------------------------------------------

inline void save_split_stats(const std::string& path, const SplitStats& s) {
  detail::write_json_file(path, json{{"format_version", kStatsFormatVersion},
                                     {"mean", s.mean},
                                     {"stddev", s.stddev}});
}

inline SplitStats load_split_stats(const std::string& path) {
  const json j = detail::read_json_file(path);
  if (j.at("format_version").get<int>() != kStatsFormatVersion)
    throw parse_error(path + ": unsupported stats format version");
  SplitStats s;
  s.mean = j.at("mean").get<std::vector<double>>();
  s.stddev = j.at("stddev").get<std::vector<double>>();
  return s;
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

/// Parameter container: name -> shape -> row-major Re array -> row-major Im
/// array, wrapped with the model config and the fingerprint of the training
/// split whose filter bank the parameters were trained against.
inline void save_checkpoint(const std::string& path,
                            const FilterTSModel& model,
                            const FilterBank::Fingerprint& bank_fp) {
  json params = json::array();
  for (const auto& [name, t] : model.parameters()) {
    params.push_back(json{{"name", name},
                          {"shape", t.shape()},
                          {"complex", t.complex_param()},
                          {"re", t.re()},
                          {"im", t.im()}});
  }
  detail::write_json_file(
      path, json{{"format_version", kCheckpointFormatVersion},
                 {"config", model_config_to_json(model.config())},
                 {"bank_fingerprint",
                  json{{"n_vars", bank_fp.n_vars},
                       {"length", bank_fp.length},
                       {"hash", bank_fp.hash}}},
                 {"params", std::move(params)}});
}

struct CheckpointData {
  ModelConfig config;
  FilterBank::Fingerprint bank_fingerprint;
  struct Entry {
    std::string name;
    Shape shape;
    bool complex_coords = false;
    std::vector<double> re, im;
  };
  std::vector<Entry> params;
};

inline CheckpointData load_checkpoint_data(const std::string& path) {
  const json j = detail::read_json_file(path);
  if (j.at("format_version").get<int>() != kCheckpointFormatVersion)
    throw parse_error(path + ": unsupported checkpoint format version");
  CheckpointData data;
  data.config = model_config_from_json(j.at("config"));
  const json& fp = j.at("bank_fingerprint");
  data.bank_fingerprint.n_vars = fp.at("n_vars").get<std::size_t>();
  data.bank_fingerprint.length = fp.at("length").get<std::size_t>();
  data.bank_fingerprint.hash = fp.at("hash").get<std::uint64_t>();
  for (const auto& p : j.at("params")) {
    CheckpointData::Entry e;
    e.name = p.at("name").get<std::string>();
    e.shape = p.at("shape").get<Shape>();
    e.complex_coords = p.at("complex").get<bool>();
    e.re = p.at("re").get<std::vector<double>>();
    e.im = p.at("im").get<std::vector<double>>();
    data.params.push_back(std::move(e));
  }
  return data;
}

/// Rebuilds a model from checkpoint data. Parameters are matched by name
/// against a freshly constructed model of the stored config.
inline FilterTSModel model_from_checkpoint(const CheckpointData& data) {
  FilterTSModel model(data.config, /*seed=*/0);
  auto params = model.parameters();
  if (params.size() != data.params.size())
    throw parse_error("checkpoint parameter count mismatch: model has " +
                      std::to_string(params.size()) + ", checkpoint has " +
                      std::to_string(data.params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& entry = data.params[i];
    Tensor& t = params[i].second;
    if (entry.name != params[i].first)
      throw parse_error("checkpoint parameter order mismatch: expected '" +
                        params[i].first + "', found '" + entry.name + "'");
    if (entry.shape != t.shape() || entry.re.size() != t.numel())
      throw parse_error("checkpoint shape mismatch for '" + entry.name + "'");
    t.values_re_mut() = entry.re;
    t.values_im_mut() = entry.im;
    t.refresh_real_typed();
  }
  return model;
}

// ---------------------------------------------------------------------------
// optimizer state
// ---------------------------------------------------------------------------

inline void save_optimizer_state(const std::string& path,
                                 const AdamOptimizer& opt) {
  json params = json::array();
  const auto& named = opt.params();
  const auto& state = opt.state();
  for (std::size_t i = 0; i < named.size(); ++i) {
    params.push_back(json{{"name", named[i].first},
                          {"m_re", state[i].m_re},
                          {"v_re", state[i].v_re},
                          {"m_im", state[i].m_im},
                          {"v_im", state[i].v_im}});
  }
  detail::write_json_file(path,
                          json{{"format_version", kOptimizerFormatVersion},
                               {"step_count", opt.step_count()},
                               {"params", std::move(params)}});
}

inline void load_optimizer_state(const std::string& path,
                                 AdamOptimizer& opt) {
  const json j = detail::read_json_file(path);
  if (j.at("format_version").get<int>() != kOptimizerFormatVersion)
    throw parse_error(path + ": unsupported optimizer state format version");
  std::vector<AdamOptimizer::ParamState> state;
  for (const auto& p : j.at("params")) {
    AdamOptimizer::ParamState s;
    s.m_re = p.at("m_re").get<std::vector<double>>();
    s.v_re = p.at("v_re").get<std::vector<double>>();
    s.m_im = p.at("m_im").get<std::vector<double>>();
    s.v_im = p.at("v_im").get<std::vector<double>>();
    state.push_back(std::move(s));
  }
  opt.load_state(j.at("step_count").get<std::size_t>(), std::move(state));
}

// ---------------------------------------------------------------------------
// evaluation report
// ---------------------------------------------------------------------------

inline json eval_report_to_json(const EvalReport& r) {
  return json{{"horizon", r.horizon},
              {"train_mse_curve", r.train_mse_curve},
              {"train_mae_curve", r.train_mae_curve},
              {"val_mse_curve", r.val_mse_curve},
              {"val_mae_curve", r.val_mae_curve},
              {"selected_epoch", r.selected_epoch},
              {"test_mse", r.test_mse},
              {"test_mae", r.test_mae}};
}

}  // namespace filterts
