#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "json.hpp"
#include "zsbir/experiment.hpp"
#include "zsbir/gradcheck_suite.hpp"

namespace {

using zsbir::RunConfig;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

// Every RunConfig key becomes a --key option; values provided on the command
// line win over the config file, which wins over the preset defaults.
struct ConfigCli {
  std::string config_path;
  std::map<std::string, std::string> staged;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "plain-text key = value config file");
    for (const auto& name : zsbir::config_key_names()) {
      options[name] = cmd->add_option("--" + name, staged[name]);
    }
  }

  RunConfig build() const {
    std::vector<std::pair<std::string, std::string>> file_pairs;
    if (!config_path.empty()) file_pairs = zsbir::read_config_pairs(config_path);

    std::string preset = "desk";
    for (const auto& [key, value] : file_pairs) {
      if (key == "preset") preset = value;
    }
    if (options.at("preset")->count() > 0) preset = staged.at("preset");

    RunConfig config;
    zsbir::apply_preset(config, preset);
    for (const auto& [key, value] : file_pairs) {
      if (key != "preset") zsbir::config_set(config, key, value);
    }
    for (const auto& [name, option] : options) {
      if (name != "preset" && option->count() > 0) {
        zsbir::config_set(config, name, staged.at(name));
      }
    }
    return config;
  }
};

RunConfig validated_config(const ConfigCli& cli) {
  RunConfig config = cli.build();
  const auto errors = config.validation_errors();
  if (!errors.empty()) {
    for (const auto& e : errors) std::cerr << "config error: " << e << "\n";
    throw zsbir::ConfigError(std::to_string(errors.size()) + " config validation error(s)");
  }
  zsbir::set_strict_numerics_default(config.strict_numerics);
  return config;
}

std::filesystem::path ensure_out_dir(const RunConfig& config) {
  std::filesystem::path dir(config.out_dir);
  std::filesystem::create_directories(dir);
  return dir;
}

nlohmann::json loss_line(const zsbir::EpochStats& stats, const std::string& fingerprint) {
  nlohmann::json j;
  j["epoch"] = stats.epoch;
  j["lr"] = stats.learning_rate;
  j["recon"] = stats.losses.recon;
  j["kl"] = stats.losses.kl;
  j["l_sup"] = stats.losses.l_sup;
  j["l_unsup"] = stats.losses.l_unsup;
  j["l_c"] = stats.losses.l_c;
  j["l_reg"] = stats.losses.l_reg;
  j["l_e"] = stats.losses.l_e;
  j["total_vae"] = stats.losses.total_vae;
  j["total_regressor"] = stats.losses.total_regressor;
  j["total_generator"] = stats.losses.total_generator;
  j["fingerprint"] = fingerprint;
  return j;
}

int cmd_synth_data(const ConfigCli& cli) {
  RunConfig config = validated_config(cli);
  const auto dir = ensure_out_dir(config);
  zsbir::SyntheticData data = zsbir::synth_generate(config.synthetic_spec());

  std::vector<zsbir::FeatureRecord> images, sketches;
  for (auto& r : data.records) {
    (r.modality == zsbir::Modality::image ? images : sketches).push_back(std::move(r));
  }
  const auto images_path = dir / "images.zsfb";
  const auto sketches_path = dir / "sketches.zsfb";
  zsbir::save_features(images_path.string(), images, zsbir::Modality::image);
  zsbir::save_features(sketches_path.string(), sketches, zsbir::Modality::sketch);

  zsbir::Manifest manifest;
  manifest.files = {{"images.zsfb", zsbir::Modality::image},
                    {"sketches.zsfb", zsbir::Modality::sketch}};
  for (std::size_t c = 0; c < config.synth_classes; ++c) {
    manifest.classes.emplace_back(static_cast<std::uint32_t>(c),
                                  "class_" + std::to_string(c));
  }
  zsbir::save_manifest((dir / "manifest.txt").string(), manifest);

  nlohmann::json j;
  j["images_file"] = images_path.string();
  j["sketches_file"] = sketches_path.string();
  j["manifest"] = (dir / "manifest.txt").string();
  j["images"] = images.size();
  j["sketches"] = sketches.size();
  j["classes"] = config.synth_classes;
  j["dim"] = config.synth_dim;
  j["fingerprint"] = zsbir::fingerprint_hex(zsbir::config_fingerprint(config));
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

int cmd_train(const ConfigCli& cli) {
  RunConfig config = validated_config(cli);
  const auto dir = ensure_out_dir(config);
  zsbir::Experiment experiment(config);
  const std::string fingerprint = zsbir::fingerprint_hex(experiment.fingerprint);

  std::ofstream log(dir / "train_log.jsonl");
  if (!log) throw zsbir::IoError("cannot open train log for writing");
  const auto started = std::chrono::steady_clock::now();

  experiment.train([&](const zsbir::EpochStats& stats) {
    nlohmann::json line = loss_line(stats, fingerprint);
    if (config.log_wall_time) {
      line["wall_time_s"] =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    }
    if (config.eval_every > 0 && (stats.epoch + 1) % config.eval_every == 0) {
      const auto eval = experiment.evaluate_test();
      line["eval"]["map_at_all"] = eval.metrics.map_at_all;
      for (const auto& [k, v] : eval.metrics.precision_at_k) {
        line["eval"]["precision_at_" + std::to_string(k)] = v;
      }
    }
    log << line.dump() << "\n";
    std::cerr << "epoch " << stats.epoch << " lr " << stats.learning_rate << " gen "
              << stats.losses.total_generator << " reg " << stats.losses.total_regressor << "\n";
  });
  log.close();

  const auto checkpoint = dir / "checkpoint.zsck";
  zsbir::save_checkpoint(checkpoint.string(), experiment.bundle, experiment.trainer,
                         experiment.data.scaling, experiment.fingerprint);

  nlohmann::json j;
  j["checkpoint"] = checkpoint.string();
  j["metrics_log"] = (dir / "train_log.jsonl").string();
  j["epochs"] = experiment.trainer.epochs_done();
  j["fingerprint"] = fingerprint;
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

int cmd_eval(const ConfigCli& cli, const std::string& checkpoint_arg, bool dump_rankings) {
  RunConfig config = validated_config(cli);
  const auto dir = ensure_out_dir(config);
  const std::string checkpoint =
      checkpoint_arg.empty() ? (dir / "checkpoint.zsck").string() : checkpoint_arg;

  const std::uint64_t expected = zsbir::config_fingerprint(config);
  const std::uint64_t actual = zsbir::peek_checkpoint_fingerprint(checkpoint);
  if (actual != expected) {
    throw zsbir::ConfigError("checkpoint " + checkpoint + " was trained under fingerprint " +
                             zsbir::fingerprint_hex(actual) + ", current config is " +
                             zsbir::fingerprint_hex(expected));
  }

  zsbir::Experiment experiment(config);
  zsbir::load_checkpoint(checkpoint, experiment.bundle, nullptr, expected);
  const auto output = experiment.evaluate_test(dump_rankings);

  const std::string json =
      zsbir::metrics_to_json(output.metrics, zsbir::fingerprint_hex(expected));
  std::ofstream os(dir / "metrics.json");
  os << json << "\n";
  std::cout << json << "\n";
  if (dump_rankings) {
    zsbir::dump_rankings_csv((dir / "rankings.csv").string(), output.results);
    std::cerr << "rankings written to " << (dir / "rankings.csv").string() << "\n";
  }
  return kExitOk;
}

int cmd_gradcheck(bool mutate) {
  const auto entries = zsbir::run_gradcheck_suite(mutate);
  std::size_t width = 0;
  for (const auto& e : entries) width = std::max(width, e.name.size());
  for (const auto& e : entries) {
    std::printf("%-*s  %12.3e  (tol %.0e)  %s\n", static_cast<int>(width), e.name.c_str(),
                e.max_rel_err, e.tolerance, e.pass ? "PASS" : "FAIL");
  }
  const bool ok = zsbir::gradcheck_all_pass(entries);
  std::printf("%zu checks, %s\n", entries.size(), ok ? "all passed" : "FAILURES present");
  return ok ? kExitOk : kExitRuntime;
}

int cmd_ablate(const ConfigCli& cli, const std::string& ablation, std::size_t seeds) {
  RunConfig config = validated_config(cli);
  const auto dir = ensure_out_dir(config);
  const std::string json = zsbir::run_ablation_json(config, ablation, seeds);
  std::ofstream os(dir / ("ablation_" + ablation + ".json"));
  os << json << "\n";
  std::cout << json << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"IAF-VAE feature generator with regressor feedback for zero-shot "
               "sketch-based image retrieval"};
  app.require_subcommand(1);

  ConfigCli synth_cli, train_cli, eval_cli, retrieve_cli, ablate_cli;
  std::string eval_checkpoint, retrieve_checkpoint;
  std::string ablation = "paper-table3";
  std::size_t ablate_seeds = 5;
  bool mutate = false;

  auto* synth = app.add_subcommand("synth-data", "generate synthetic feature files");
  synth_cli.attach(synth);

  auto* train = app.add_subcommand("train", "train a model; writes checkpoint and metrics log");
  train_cli.attach(train);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the unseen classes");
  eval_cli.attach(eval);
  eval->add_option("--checkpoint", eval_checkpoint, "checkpoint path (default <out_dir>/checkpoint.zsck)");

  auto* retrieve = app.add_subcommand("retrieve", "evaluate and dump per-query rankings as CSV");
  retrieve_cli.attach(retrieve);
  retrieve->add_option("--checkpoint", retrieve_checkpoint, "checkpoint path");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every backward rule");
  gradcheck->add_flag("--mutate", mutate, "include a deliberately corrupted rule (negative control)");

  auto* ablate = app.add_subcommand("ablate", "train and compare ablation variants on shared seeds");
  ablate_cli.attach(ablate);
  ablate->add_option("--ablation", ablation, "paper-table3 (vs no-iaf) or paper-fig5 (vs feedback-auto)");
  ablate->add_option("--ablate-seeds", ablate_seeds, "number of seeds per variant");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (synth->parsed()) return cmd_synth_data(synth_cli);
    if (train->parsed()) return cmd_train(train_cli);
    if (eval->parsed()) return cmd_eval(eval_cli, eval_checkpoint, false);
    if (retrieve->parsed()) return cmd_eval(retrieve_cli, retrieve_checkpoint, true);
    if (gradcheck->parsed()) return cmd_gradcheck(mutate);
    if (ablate->parsed()) return cmd_ablate(ablate_cli, ablation, ablate_seeds);
  } catch (const zsbir::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitValidation;
}
