// Command-line front end: wires a JSON run config into the data -> bank ->
// train -> eval pipeline, plus a spectrum inspection command for poking at
// what the filters actually see.
//
// Exit codes: 0 success, 1 usage/config error, 2 runtime failure.

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "filterts/pipeline.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::uint64_t seed = 0;
  std::size_t horizon = 0;
  std::string out_dir;

  CLI::Option* seed_opt = nullptr;
  CLI::Option* horizon_opt = nullptr;
  CLI::Option* out_opt = nullptr;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "run config JSON file")
        ->required();
    seed_opt = cmd->add_option("--seed", seed, "override config seed");
    horizon_opt =
        cmd->add_option("--horizon", horizon, "override forecast horizon");
    out_opt = cmd->add_option("--out", out_dir, "override output directory");
  }

  // flag > file > default
  filterts::RunConfig resolve() const {
    filterts::RunConfig cfg = filterts::load_run_config(config_path);
    if (seed_opt->count()) {
      cfg.seed = seed;
      cfg.train.seed = seed;
    }
    if (horizon_opt->count()) cfg.model.horizon = horizon;
    if (out_opt->count()) cfg.out_dir = out_dir;
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"frequency-domain multivariate time-series forecaster"};
  app.require_subcommand(1);

  CommonFlags bank_flags, train_flags, eval_flags, inspect_flags;

  CLI::App* cmd_bank = app.add_subcommand(
      "build-bank", "build the static band-pass filter bank from the train "
                    "split and persist it");
  bank_flags.attach(cmd_bank);

  CLI::App* cmd_train =
      app.add_subcommand("train", "train a model and write checkpoint, "
                                  "metrics log, and report");
  train_flags.attach(cmd_train);

  CLI::App* cmd_eval = app.add_subcommand(
      "eval", "evaluate a checkpoint on the test split");
  eval_flags.attach(cmd_eval);
  std::string checkpoint_path;
  cmd_eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")
      ->required();

  CLI::App* cmd_inspect = app.add_subcommand(
      "inspect", "dump global/window spectra and the dynamic-filter mask "
                 "for one variable");
  inspect_flags.attach(cmd_inspect);
  std::size_t variable = 0;
  std::size_t window_start = 0;
  cmd_inspect->add_option("--variable", variable, "variable index")
      ->required();
  cmd_inspect
      ->add_option("--window-start", window_start, "window start index")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (cmd_bank->parsed()) {
      filterts::run_build_bank(bank_flags.resolve(), std::cout);
    } else if (cmd_train->parsed()) {
      filterts::run_train(train_flags.resolve(), std::cout);
    } else if (cmd_eval->parsed()) {
      const std::size_t horizon_override =
          eval_flags.horizon_opt->count() ? eval_flags.horizon : 0;
      filterts::run_eval(eval_flags.resolve(), checkpoint_path,
                         horizon_override, std::cout);
    } else if (cmd_inspect->parsed()) {
      filterts::run_inspect(inspect_flags.resolve(), variable, window_start,
                            std::cout);
    }
  } catch (const filterts::parse_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
