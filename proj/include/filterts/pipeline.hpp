#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>

#include "filterts/data.hpp"
#include "filterts/dcfilter.hpp"
#include "filterts/model.hpp"
#include "filterts/run_config.hpp"
#include "filterts/serialize.hpp"
#include "filterts/sgfilter.hpp"
#include "filterts/train.hpp"

namespace filterts {

struct RunPaths {
  std::string dir;
  std::string config_echo;
  std::string bank;
  std::string stats;
  std::string checkpoint;
  std::string metrics;
  std::string report;
  std::string run_log;
};

inline RunPaths prepare_run_dir(const RunConfig& cfg) {
  namespace fs = std::filesystem;
  RunPaths p;
  p.dir = (fs::path(cfg.out_dir) / run_dir_name(cfg)).string();
  fs::create_directories(p.dir);
  const fs::path d(p.dir);
  p.config_echo = (d / "config.json").string();
  p.bank = (d / "bank.json").string();
  p.stats = (d / "stats.json").string();
  p.checkpoint = (d / "checkpoint.json").string();
  p.metrics = (d / "metrics.log").string();
  p.report = (d / "report.json").string();
  p.run_log = (d / "run.log").string();
  return p;
}

/// Loads the dataset, applies the configured split fractions, and resolves
/// the variable count (inferred from the file when the config leaves it 0).
inline SplitDataset prepare_data(RunConfig& cfg) {
  Dataset ds = load_csv(cfg.dataset_path, cfg.dataset_name);
  ds.train_frac = cfg.train_frac;
  ds.val_frac = cfg.val_frac;
  ds.test_frac = cfg.test_frac;
  if (cfg.model.n_vars == 0) {
    cfg.model.n_vars = ds.values.rows;
  } else if (cfg.model.n_vars != ds.values.rows) {
    throw parse_error("config: model.n_vars=" +
                      std::to_string(cfg.model.n_vars) + " but dataset '" +
                      cfg.dataset_name + "' has " +
                      std::to_string(ds.values.rows) + " variables");
  }
  return split_and_standardize(ds);
}

inline FilterBank build_bank_for(const RunConfig& cfg,
                                 const SplitDataset& data) {
  return build_filter_bank(data.train_view(), cfg.model.lookback,
                           cfg.model.hidden, cfg.model.num_static_filters,
                           cfg.model.half_bandwidth);
}

/// Reuses a persisted bank when it matches the current training split;
/// otherwise builds (and persists) a fresh one.
inline FilterBank obtain_bank(const RunConfig& cfg, const SplitDataset& data,
                              const RunPaths& paths) {
  namespace fs = std::filesystem;
  const Matrix train = data.train_view();
  const std::uint64_t hash = fnv1a(train.v);
  if (fs::exists(paths.bank)) {
    FilterBank bank = load_filter_bank(paths.bank);
    if (bank.built_from.hash == hash &&
        bank.built_from.length == train.cols &&
        bank.built_from.n_vars == train.rows &&
        bank.lookback == cfg.model.lookback && bank.width == cfg.model.hidden)
      return bank;
  }
  FilterBank bank = build_bank_for(cfg, data);
  save_filter_bank(paths.bank, bank);
  return bank;
}

namespace detail {

inline std::string timestamp_now() {
  const std::time_t t = std::time(nullptr);
  char buf[64];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace detail

inline void run_build_bank(RunConfig cfg, std::ostream& out) {
  const SplitDataset data = prepare_data(cfg);
  const RunPaths paths = prepare_run_dir(cfg);
  const FilterBank bank = build_bank_for(cfg, data);
  save_filter_bank(paths.bank, bank);
  save_split_stats(paths.stats, data.stats);
  detail::write_json_file(paths.config_echo, run_config_to_json(cfg));

  out << "bank written to " << paths.bank << " (N=" << bank.n_vars
      << ", K=" << bank.num_filters << ", delta_f=" << bank.half_bandwidth
      << ")\n";
  for (std::size_t i = 0; i < bank.n_vars; ++i) {
    out << "variable " << i << ":";
    for (std::size_t s = 0; s < bank.num_filters; ++s)
      out << " bin " << bank.center(i, s) << " (mag "
          << bank.center_magnitudes[i * bank.num_filters + s] << ")";
    out << "\n";
  }
}

inline FitResult run_train(RunConfig cfg, std::ostream& out) {
  const SplitDataset data = prepare_data(cfg);
  const RunPaths paths = prepare_run_dir(cfg);
  const FilterBank bank = obtain_bank(cfg, data, paths);
  save_split_stats(paths.stats, data.stats);
  detail::write_json_file(paths.config_echo, run_config_to_json(cfg));

  FilterTSModel model(cfg.model, cfg.seed);
  FitResult result = fit(model, bank, data, cfg.train);

  {
    std::ofstream metrics(paths.metrics);
    for (const auto& line : result.metric_lines) metrics << line << '\n';
  }
  detail::write_json_file(paths.report,
                          eval_report_to_json(result.report));
  save_checkpoint(paths.checkpoint, model, bank.built_from);
  {
    std::ofstream log(paths.run_log);
    log << "# run started " << detail::timestamp_now() << "\n";
    log << "# run dir " << paths.dir << "\n";
    for (std::size_t e = 0; e < result.report.epoch_seconds.size(); ++e)
      log << "epoch " << e << ": " << result.report.epoch_seconds[e]
          << " s\n";
    log << "selected epoch " << result.report.selected_epoch << "\n";
  }

  for (const auto& line : result.metric_lines) out << line << '\n';
  out << "checkpoint written to " << paths.checkpoint << "\n";
  return result;
}

inline EvalReport run_eval(RunConfig cfg, const std::string& checkpoint_path,
                           std::size_t horizon_override, std::ostream& out) {
  const CheckpointData ckpt = load_checkpoint_data(checkpoint_path);
  if (horizon_override != 0 && horizon_override != ckpt.config.horizon)
    throw parse_error("requested horizon " +
                      std::to_string(horizon_override) +
                      " is not in the checkpoint config (horizon=" +
                      std::to_string(ckpt.config.horizon) + ")");

  cfg.model = ckpt.config;
  Dataset ds = load_csv(cfg.dataset_path, cfg.dataset_name);
  ds.train_frac = cfg.train_frac;
  ds.val_frac = cfg.val_frac;
  ds.test_frac = cfg.test_frac;
  if (ds.values.rows != ckpt.config.n_vars)
    throw std::runtime_error(
        "checkpoint/dataset variable count mismatch: checkpoint has N=" +
        std::to_string(ckpt.config.n_vars) + ", dataset has N=" +
        std::to_string(ds.values.rows));
  const SplitDataset data = split_and_standardize(ds);

  const FilterBank bank = build_bank_for(cfg, data);
  if (bank.built_from.hash != ckpt.bank_fingerprint.hash)
    out << "warning: training-split fingerprint differs from the one the "
           "checkpoint was trained against\n";

  FilterTSModel model = model_from_checkpoint(ckpt);
  const auto [test_mse, test_mae] =
      evaluate(model, bank, data, Split::Test, cfg.train.batch_size);

  EvalReport report;
  report.horizon = ckpt.config.horizon;
  report.test_mse = test_mse;
  report.test_mae = test_mae;

  const RunPaths paths = prepare_run_dir(cfg);
  const std::string line = detail::metric_line(
      0, "test", report.horizon, test_mse, test_mae, 0.0);
  {
    std::ofstream f((std::filesystem::path(paths.dir) / "eval_metrics.log")
                        .string());
    f << line << '\n';
  }
  out << line << '\n';
  return report;
}

/// Writes one CSV holding the training-set spectrum (downsampled to L bins),
/// one window's embedded magnitude spectrum, the dynamic-filter mask for
/// that window, and the threshold tau, for a single variable.
inline std::string run_inspect(RunConfig cfg, std::size_t variable,
                               std::size_t window_start, std::ostream& out) {
  const SplitDataset data = prepare_data(cfg);
  if (variable >= data.n_vars())
    throw parse_error("variable index " + std::to_string(variable) +
                      " out of range (dataset has " +
                      std::to_string(data.n_vars()) + ")");
  const std::size_t l = cfg.model.lookback;
  if (window_start + l > data.length())
    throw parse_error("window start " + std::to_string(window_start) +
                      " out of range (need " + std::to_string(l) +
                      " points, series has " +
                      std::to_string(data.length()) + ")");
  const RunPaths paths = prepare_run_dir(cfg);

  // training-set spectrum at lookback resolution
  const Matrix train = data.train_view();
  std::vector<double> series(train.cols);
  std::copy_n(train.row(variable), train.cols, series.begin());
  const std::vector<double> global = downsampled_global_magnitudes(series, l);

  // one window through the embedding and dynamic-filter path
  Matrix window(data.n_vars(), l);
  for (std::size_t i = 0; i < data.n_vars(); ++i)
    for (std::size_t t = 0; t < l; ++t)
      window.at(i, t) = data.values.at(i, window_start + t);
  auto [norm, stats] = instance_normalize(window, cfg.model.eps);
  const FreqRepr repr = t2f_embed(norm, cfg.model.hidden);
  const DynamicFilterSet filters =
      build_dynamic_filters(repr, cfg.model.alpha_quantile);

  const std::string csv_path =
      (std::filesystem::path(paths.dir) /
       ("inspect_var" + std::to_string(variable) + "_win" +
        std::to_string(window_start) + ".csv"))
          .string();
  std::ofstream csv(csv_path);
  csv.precision(17);
  csv << "kind,bin,value\n";
  for (std::size_t b = 0; b < global.size(); ++b)
    csv << "global," << b << ',' << global[b] << '\n';
  for (std::size_t f = 0; f < repr.width; ++f)
    csv << "window," << f << ',' << std::abs(repr.at(variable, f)) << '\n';
  for (std::size_t f = 0; f < repr.width; ++f)
    csv << "mask," << f << ','
        << (filters.at(variable, f) != cdouble(0, 0) ? 1 : 0) << '\n';
  csv << "tau,0," << filters.tau[variable] << '\n';
  csv.close();

  std::size_t peak = 0;
  for (std::size_t b = 1; b < global.size(); ++b)
    if (global[b] > global[peak]) peak = b;
  out << "inspect written to " << csv_path << "\n";
  out << "variable " << variable << ": dominant training bin " << peak
      << ", window tau " << filters.tau[variable] << "\n";
  return csv_path;
}

}  // namespace filterts
