#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "zsbir/config.hpp"

namespace zsbir {

struct ExperimentData {
  DatasetSplit split;
  ScalingParams scaling;
  PairSet pairs;
  std::vector<ScaledRecord> query_sketches;  // scaled unseen-class sketches
  Database database;                         // scaled images, unseen-only by default
  // raw prototypes when the data is synthetic; used by oracle checks
  std::vector<std::vector<double>> image_prototypes;
  std::vector<std::vector<double>> sketch_prototypes;
};

// Synthetic generation or feature-file loading, split, scaling, pairing, and
// the scaled evaluation sets, all derived from one RunConfig.
ExperimentData prepare_data(const RunConfig& config);

// One training/evaluation pipeline instance.
struct Experiment {
  explicit Experiment(const RunConfig& run_config);

  RunConfig config;
  std::uint64_t fingerprint;
  ExperimentData data;
  ModelBundle bundle;
  Trainer trainer;

  std::vector<EpochStats> train(const std::function<void(const EpochStats&)>& on_epoch = {},
                                std::optional<std::size_t> stop_after_epochs = {});
  EvaluationOutput evaluate_test(bool keep_rankings = false) const;
};

struct VariantRun {
  std::string variant;
  std::uint64_t seed;
  MetricsReport metrics;
};

// Trains and evaluates each variant on each of n_seeds consecutive seeds
// starting from config.seed; variants share seeds (and hence data).
std::vector<VariantRun> run_variants(const RunConfig& base,
                                     const std::vector<std::string>& variants,
                                     std::size_t n_seeds,
                                     const std::function<void(const VariantRun&)>& on_run = {});

// Comparison document for an ablation pair: per-seed metrics, per-variant
// medians, and the relative deltas of the first variant over the second.
// ablation: "paper-table3" (feedback-vae vs no-iaf) or "paper-fig5"
// (feedback-vae vs feedback-auto).
std::string run_ablation_json(const RunConfig& base, const std::string& ablation,
                              std::size_t n_seeds = 5,
                              std::vector<VariantRun>* runs_out = nullptr);

double median(std::vector<double> values);

}  // namespace zsbir
