#include "zsbir/experiment.hpp"

#include <algorithm>

#include "json.hpp"

namespace zsbir {

namespace {

std::vector<FeatureRecord> load_all_records(const RunConfig& config) {
  auto load = [](const std::string& path, Modality modality) {
    if (path.size() > 4 && path.substr(path.size() - 4) == ".csv") {
      return load_features_csv(path, modality);
    }
    auto records = load_features(path);
    for (const auto& r : records) {
      if (r.modality != modality) {
        throw DataError(path + ": expected " + modality_name(modality) + " records");
      }
    }
    return records;
  };
  auto records = load(config.images_file, Modality::image);
  auto sketches = load(config.sketches_file, Modality::sketch);
  records.insert(records.end(), sketches.begin(), sketches.end());
  return records;
}

}  // namespace

ExperimentData prepare_data(const RunConfig& config) {
  ExperimentData data;

  std::vector<FeatureRecord> records;
  if (!config.images_file.empty()) {
    records = load_all_records(config);
  } else {
    SyntheticData synth = synth_generate(config.synthetic_spec());
    records = std::move(synth.records);
    data.image_prototypes = std::move(synth.image_prototypes);
    data.sketch_prototypes = std::move(synth.sketch_prototypes);
  }

  if (!config.unseen_classes.empty()) {
    data.split = make_zero_shot_split(records, config.unseen_class_list());
  } else if (config.unseen_count > 0) {
    data.split = make_zero_shot_split(records, config.unseen_count,
                                      Rng::mix(config.seed, 0x73706c6974ULL),
                                      config.min_unseen_records);
  } else {
    data.split = make_zero_shot_split_fraction(records, config.unseen_fraction,
                                               Rng::mix(config.seed, 0x73706c6974ULL));
  }

  auto [scaled, scaling] = standardize(records, data.split);
  data.scaling = std::move(scaling);
  data.pairs = build_pairs(data.split, config.pairs_per_class,
                           Rng::mix(config.seed, 0x7061697273ULL), &data.scaling);

  for (const auto& r : scaled) {
    const bool unseen = data.split.unseen_classes.count(r.label) > 0;
    if (r.modality == Modality::sketch) {
      if (unseen) data.query_sketches.push_back(r);
    } else if (unseen || config.include_seen_db) {
      data.database.vectors.push_back(r.vector);
      data.database.labels.push_back(r.label);
    }
  }
  return data;
}

Experiment::Experiment(const RunConfig& run_config)
    : config(run_config),
      fingerprint(config_fingerprint(run_config)),
      data(prepare_data(run_config)),
      bundle(run_config.model_config(), run_config.seed),
      trainer(bundle, run_config.train_config()) {
  if (!data.pairs.pairs.empty()) {
    const auto& first = data.pairs.pairs.front();
    if (first.image.size() != bundle.config().feature_dim ||
        first.sketch.size() != bundle.config().attr_dim) {
      throw ConfigError("experiment: data widths (image " + std::to_string(first.image.size()) +
                        ", sketch " + std::to_string(first.sketch.size()) +
                        ") do not match the model (feature_dim " +
                        std::to_string(bundle.config().feature_dim) + ", attr_dim " +
                        std::to_string(bundle.config().attr_dim) + ")");
    }
  }
}

std::vector<EpochStats> Experiment::train(const std::function<void(const EpochStats&)>& on_epoch,
                                          std::optional<std::size_t> stop_after_epochs) {
  return trainer.fit(data.pairs, on_epoch, stop_after_epochs);
}

EvaluationOutput Experiment::evaluate_test(bool keep_rankings) const {
  return evaluate(bundle, data.query_sketches, data.database, config.retrieval_config(),
                  keep_rankings);
}

std::vector<VariantRun> run_variants(const RunConfig& base,
                                     const std::vector<std::string>& variants,
                                     std::size_t n_seeds,
                                     const std::function<void(const VariantRun&)>& on_run) {
  std::vector<VariantRun> runs;
  for (std::size_t s = 0; s < n_seeds; ++s) {
    for (const auto& variant : variants) {
      RunConfig config = base;
      config.seed = base.seed + s;
      config.variant = variant;
      Experiment experiment(config);
      experiment.train();
      VariantRun run;
      run.variant = variant;
      run.seed = config.seed;
      run.metrics = experiment.evaluate_test().metrics;
      if (on_run) on_run(run);
      runs.push_back(std::move(run));
    }
  }
  return runs;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ContractError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::string run_ablation_json(const RunConfig& base, const std::string& ablation,
                              std::size_t n_seeds, std::vector<VariantRun>* runs_out) {
  std::vector<std::string> variants;
  if (ablation == "paper-table3") {
    variants = {"feedback-vae", "no-iaf"};
  } else if (ablation == "paper-fig5") {
    variants = {"feedback-vae", "feedback-auto"};
  } else {
    throw ConfigError("unknown ablation '" + ablation +
                      "' (expected paper-table3 or paper-fig5)");
  }

  std::vector<VariantRun> runs = run_variants(base, variants, n_seeds);
  if (runs_out != nullptr) *runs_out = runs;

  nlohmann::json j;
  j["ablation"] = ablation;
  j["variants"] = variants;
  j["seeds"] = n_seeds;
  j["fingerprint"] = fingerprint_hex(config_fingerprint(base));

  auto metric_json = [](const MetricsReport& m) {
    nlohmann::json out;
    out["map_at_all"] = m.map_at_all;
    for (const auto& [k, v] : m.precision_at_k) out["precision_at_" + std::to_string(k)] = v;
    for (const auto& [k, v] : m.map_at_k) out["map_at_" + std::to_string(k)] = v;
    return out;
  };

  for (const auto& run : runs) {
    nlohmann::json entry = metric_json(run.metrics);
    entry["seed"] = run.seed;
    entry["variant"] = run.variant;
    j["runs"].push_back(entry);
  }

  // per-variant medians and the relative deltas of variants[0] over variants[1]
  auto collect = [&runs](const std::string& variant, auto&& metric) {
    std::vector<double> values;
    for (const auto& run : runs) {
      if (run.variant == variant) values.push_back(metric(run.metrics));
    }
    return median(std::move(values));
  };
  auto map_metric = [](const MetricsReport& m) { return m.map_at_all; };

  nlohmann::json medians;
  for (const auto& variant : variants) {
    nlohmann::json m;
    m["map_at_all"] = collect(variant, map_metric);
    for (std::size_t i = 0; i < runs.front().metrics.precision_at_k.size(); ++i) {
      const auto k = runs.front().metrics.precision_at_k[i].first;
      m["precision_at_" + std::to_string(k)] =
          collect(variant, [i](const MetricsReport& r) { return r.precision_at_k[i].second; });
    }
    medians[variant] = m;
  }
  j["median"] = medians;

  const double lead = medians[variants[0]]["map_at_all"].get<double>();
  const double other = medians[variants[1]]["map_at_all"].get<double>();
  nlohmann::json delta;
  delta["map_at_all_absolute"] = lead - other;
  delta["map_at_all_relative"] = other != 0.0 ? (lead - other) / other : 0.0;
  delta["map_at_all_relative_percent"] = other != 0.0 ? 100.0 * (lead - other) / other : 0.0;
  j["delta_" + variants[0] + "_over_" + variants[1]] = delta;

  return j.dump(2);
}

}  // namespace zsbir
