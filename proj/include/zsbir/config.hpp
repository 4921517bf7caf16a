#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "zsbir/data.hpp"
#include "zsbir/retrieval.hpp"
#include "zsbir/trainer.hpp"

namespace zsbir {

// Flat view of every tunable, parsed from a `key = value` config file with
// command-line overrides. Unknown keys are rejected. The fingerprint hashes
// the canonical text of the model/data/training keys; retrieval-time and
// output keys stay out of it so evaluation sweeps don't orphan checkpoints.
struct RunConfig {
  std::string preset = "desk";

  // data
  std::size_t synth_classes = 15;
  std::size_t synth_dim = 32;
  std::size_t synth_images_per_class = 200;
  std::size_t synth_sketches_per_class = 200;
  double synth_image_noise = 0.3;
  double synth_sketch_noise = 0.3;
  double synth_map_scale = 1.0;
  std::uint64_t synth_seed = 0;  // 0 = derive from `seed`
  std::string images_file;       // when set, load instead of generating
  std::string sketches_file;
  std::size_t unseen_count = 5;
  double unseen_fraction = 0.0;       // used when unseen_count == 0
  std::string unseen_classes;         // explicit comma list overrides both
  std::size_t min_unseen_records = 0; // classes need more records than this to be drawn
  std::size_t pairs_per_class = 200;

  // model
  std::string variant = "feedback-vae";
  std::size_t feature_dim = 32;
  std::size_t attr_dim = 32;
  std::size_t latent_dim = 8;
  std::size_t flow_steps = 3;
  std::size_t context_dim = 16;
  std::size_t made_hidden = 32;
  std::size_t made_depth = 2;
  double prior_scale = 0.005;
  bool prior_scale_is_variance = false;
  double gate_bias = 2.0;
  std::string encoder_widths = "128,128";
  std::string decoder_widths = "192,192,192,192,192";
  std::string regressor_widths = "128,128";

  // losses
  double beta = 1.0;
  double lambda_r = 0.1;
  double lambda_c = 0.1;
  double lambda_reg = 0.1;
  double lambda_e = 0.01;

  // training
  std::size_t epochs = 35;
  std::size_t batch_size = 50;
  std::uint64_t seed = 1;
  std::string lr_schedule = "0:0.001,5:0.0005,15:0.0001,25:0.00001";
  std::size_t eval_every = 0;
  std::size_t kl_mc_samples = 1;
  bool check_partition = true;
  bool strict_numerics = false;
  bool log_wall_time = false;

  // retrieval (not fingerprinted)
  std::size_t candidates = 10;
  std::string k_values = "10,100";
  std::size_t eval_threads = 0;
  bool include_seen_db = false;

  // io (not fingerprinted)
  std::string out_dir = "out";

  // ---- derived views ----
  SyntheticSpec synthetic_spec() const;
  ModelConfig model_config() const;
  TrainConfig train_config() const;
  RetrievalConfig retrieval_config() const;
  std::vector<std::uint32_t> unseen_class_list() const;

  // Collects every validation problem instead of stopping at the first.
  std::vector<std::string> validation_errors() const;
};

// Key registry access: get/set by name; throws ConfigError on unknown keys or
// unparseable values.
std::vector<std::string> config_key_names();
std::string config_get(const RunConfig& config, const std::string& key);
void config_set(RunConfig& config, const std::string& key, const std::string& value);
bool config_key_fingerprinted(const std::string& key);

// `key = value` lines; '#' starts a comment; unknown keys rejected.
void load_config_file(RunConfig& config, const std::string& path);

// Same syntax, but returns the raw pairs without applying them (keys are
// still validated against the registry).
std::vector<std::pair<std::string, std::string>> read_config_pairs(const std::string& path);

// Named defaults. "desk" (the built-in), "paper-sketchy", "paper-sketchy-cvae",
// "paper-tuberlin".
void apply_preset(RunConfig& config, const std::string& preset);

// Sorted `key = value` lines over the fingerprinted keys.
std::string canonical_config_text(const RunConfig& config);
std::uint64_t config_fingerprint(const RunConfig& config);
std::string fingerprint_hex(std::uint64_t fingerprint);

}  // namespace zsbir
