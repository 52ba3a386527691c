#pragma once

#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "filterts/common.hpp"
#include "filterts/model.hpp"
#include "filterts/serialize.hpp"
#include "filterts/train.hpp"

namespace filterts {

/// Everything one run needs: dataset location and split, model and training
/// hyperparameters, seed, and the output directory. Defaults follow the
/// benchmark protocol (lookback 96, quantile 0.9, 10 static filters of half
/// bandwidth 1, batch 32, 10 epochs, lr 1e-3 halved per epoch, 6:2:2 split).
struct RunConfig {
  std::string dataset_path;
  std::string dataset_name;
  double train_frac = 0.6;
  double val_frac = 0.2;
  double test_frac = 0.2;
  ModelConfig model;  // model.n_vars == 0 means "infer from the dataset"
  TrainConfig train;
  std::uint64_t seed = 0;
  std::string out_dir = "runs";
};

namespace detail {

inline void reject_unknown_keys(const json& j, const std::string& prefix,
                                const std::set<std::string>& known) {
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key))
      throw parse_error("config: unknown key '" + prefix + key + "'");
  }
}

template <class T>
inline void read_field(const json& j, const char* key, T& dst) {
  if (j.contains(key)) {
    try {
      dst = j.at(key).get<T>();
    } catch (const json::exception&) {
      throw parse_error(std::string("config: bad value for '") + key + "'");
    }
  }
}

}  // namespace detail

inline RunConfig run_config_from_json(const json& j) {
  detail::reject_unknown_keys(
      j, "", {"dataset", "model", "train", "seed", "out_dir"});
  RunConfig c;
  c.model.n_vars = 0;  // inferred unless given

  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    detail::reject_unknown_keys(d, "dataset.", {"path", "name", "split"});
    detail::read_field(d, "path", c.dataset_path);
    detail::read_field(d, "name", c.dataset_name);
    if (d.contains("split")) {
      const auto split = d.at("split").get<std::vector<double>>();
      if (split.size() != 3)
        throw parse_error("config: 'dataset.split' must have 3 fractions");
      c.train_frac = split[0];
      c.val_frac = split[1];
      c.test_frac = split[2];
    }
  }
  if (c.dataset_path.empty())
    throw parse_error("config: missing required key 'dataset.path'");
  if (c.dataset_name.empty()) c.dataset_name = "dataset";

  if (j.contains("model")) {
    const json& m = j.at("model");
    detail::reject_unknown_keys(
        m, "model.",
        {"lookback", "horizon", "n_vars", "hidden", "layers",
         "alpha_quantile", "num_static_filters", "half_bandwidth", "eps"});
    detail::read_field(m, "lookback", c.model.lookback);
    detail::read_field(m, "horizon", c.model.horizon);
    detail::read_field(m, "n_vars", c.model.n_vars);
    detail::read_field(m, "hidden", c.model.hidden);
    detail::read_field(m, "layers", c.model.layers);
    detail::read_field(m, "alpha_quantile", c.model.alpha_quantile);
    detail::read_field(m, "num_static_filters", c.model.num_static_filters);
    detail::read_field(m, "half_bandwidth", c.model.half_bandwidth);
    detail::read_field(m, "eps", c.model.eps);
  }

  if (j.contains("train")) {
    const json& t = j.at("train");
    detail::reject_unknown_keys(
        t, "train.",
        {"initial_lr", "epochs", "batch_size", "lr_decay", "adam_beta1",
         "adam_beta2", "adam_eps", "clip_gradients", "clip_norm",
         "select_best_val"});
    detail::read_field(t, "initial_lr", c.train.initial_lr);
    detail::read_field(t, "epochs", c.train.epochs);
    detail::read_field(t, "batch_size", c.train.batch_size);
    detail::read_field(t, "lr_decay", c.train.lr_decay);
    detail::read_field(t, "adam_beta1", c.train.adam_beta1);
    detail::read_field(t, "adam_beta2", c.train.adam_beta2);
    detail::read_field(t, "adam_eps", c.train.adam_eps);
    detail::read_field(t, "clip_gradients", c.train.clip_gradients);
    detail::read_field(t, "clip_norm", c.train.clip_norm);
    detail::read_field(t, "select_best_val", c.train.select_best_val);
  }

  detail::read_field(j, "seed", c.seed);
  detail::read_field(j, "out_dir", c.out_dir);
  c.train.seed = c.seed;
  return c;
}

inline json run_config_to_json(const RunConfig& c) {
  json model = model_config_to_json(c.model);
  return json{
      {"dataset",
       json{{"path", c.dataset_path},
            {"name", c.dataset_name},
            {"split", std::vector<double>{c.train_frac, c.val_frac,
                                          c.test_frac}}}},
      {"model", std::move(model)},
      {"train",
       json{{"initial_lr", c.train.initial_lr},
            {"epochs", c.train.epochs},
            {"batch_size", c.train.batch_size},
            {"lr_decay", c.train.lr_decay},
            {"adam_beta1", c.train.adam_beta1},
            {"adam_beta2", c.train.adam_beta2},
            {"adam_eps", c.train.adam_eps},
            {"clip_gradients", c.train.clip_gradients},
            {"clip_norm", c.train.clip_norm},
            {"select_best_val", c.train.select_best_val}}},
      {"seed", c.seed},
      {"out_dir", c.out_dir}};
}

inline RunConfig load_run_config(const std::string& path) {
  return run_config_from_json(detail::read_json_file(path));
}

/// Hash over the canonical config dump, excluding the output directory, the
/// seed (appended to the run directory name separately), and the variable
/// count (derived from the dataset, which is hashed via its path; this keeps
/// the hash identical whether n_vars was written out or inferred).
inline std::uint64_t run_config_hash(const RunConfig& c) {
  json j = run_config_to_json(c);
  j.erase("out_dir");
  j.erase("seed");
  j["model"].erase("n_vars");
  return fnv1a(j.dump());
}

inline std::string run_dir_name(const RunConfig& c) {
  char hash_hex[24];
  std::snprintf(hash_hex, sizeof hash_hex, "%016llx",
                static_cast<unsigned long long>(run_config_hash(c)));
  return c.dataset_name + "-" + hash_hex + "-s" + std::to_string(c.seed);
}

}  // namespace filterts
