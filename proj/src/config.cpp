#include "zsbir/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace zsbir {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  try {
    if (!value.empty() && value[0] == '-') throw std::invalid_argument("negative");
    return std::stoull(value);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + value + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  return parse_size(key, value);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + value + "'");
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& value) {
  std::vector<std::size_t> out;
  std::istringstream is(value);
  std::string item;
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(parse_size(key, item));
  }
  return out;
}

struct KeySpec {
  const char* name;
  bool fingerprinted;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define ZSBIR_KEY_SIZE(field, fp)                                            \
  KeySpec {                                                                  \
    #field, fp, [](const RunConfig& c) { return std::to_string(c.field); },  \
        [](RunConfig& c, const std::string& v) { c.field = parse_size(#field, v); } \
  }
#define ZSBIR_KEY_U64(field, fp)                                             \
  KeySpec {                                                                  \
    #field, fp, [](const RunConfig& c) { return std::to_string(c.field); },  \
        [](RunConfig& c, const std::string& v) { c.field = parse_u64(#field, v); } \
  }
#define ZSBIR_KEY_DOUBLE(field, fp)                                          \
  KeySpec {                                                                  \
    #field, fp, [](const RunConfig& c) { return format_double(c.field); },   \
        [](RunConfig& c, const std::string& v) { c.field = parse_double(#field, v); } \
  }
#define ZSBIR_KEY_BOOL(field, fp)                                            \
  KeySpec {                                                                  \
    #field, fp, [](const RunConfig& c) { return c.field ? "true" : "false"; }, \
        [](RunConfig& c, const std::string& v) { c.field = parse_bool(#field, v); } \
  }
#define ZSBIR_KEY_STRING(field, fp)                                          \
  KeySpec {                                                                  \
    #field, fp, [](const RunConfig& c) { return c.field; },                  \
        [](RunConfig& c, const std::string& v) { c.field = v; }              \
  }

const std::vector<KeySpec>& registry() {
  static const std::vector<KeySpec> keys = {
      ZSBIR_KEY_STRING(preset, true),
      // data
      ZSBIR_KEY_SIZE(synth_classes, true),
      ZSBIR_KEY_SIZE(synth_dim, true),
      ZSBIR_KEY_SIZE(synth_images_per_class, true),
      ZSBIR_KEY_SIZE(synth_sketches_per_class, true),
      ZSBIR_KEY_DOUBLE(synth_image_noise, true),
      ZSBIR_KEY_DOUBLE(synth_sketch_noise, true),
      ZSBIR_KEY_DOUBLE(synth_map_scale, true),
      ZSBIR_KEY_U64(synth_seed, true),
      ZSBIR_KEY_STRING(images_file, true),
      ZSBIR_KEY_STRING(sketches_file, true),
      ZSBIR_KEY_SIZE(unseen_count, true),
      ZSBIR_KEY_DOUBLE(unseen_fraction, true),
      ZSBIR_KEY_STRING(unseen_classes, true),
      ZSBIR_KEY_SIZE(min_unseen_records, true),
      ZSBIR_KEY_SIZE(pairs_per_class, true),
      // model
      ZSBIR_KEY_STRING(variant, true),
      ZSBIR_KEY_SIZE(feature_dim, true),
      ZSBIR_KEY_SIZE(attr_dim, true),
      ZSBIR_KEY_SIZE(latent_dim, true),
      ZSBIR_KEY_SIZE(flow_steps, true),
      ZSBIR_KEY_SIZE(context_dim, true),
      ZSBIR_KEY_SIZE(made_hidden, true),
      ZSBIR_KEY_SIZE(made_depth, true),
      ZSBIR_KEY_DOUBLE(prior_scale, true),
      ZSBIR_KEY_BOOL(prior_scale_is_variance, true),
      ZSBIR_KEY_DOUBLE(gate_bias, true),
      ZSBIR_KEY_STRING(encoder_widths, true),
      ZSBIR_KEY_STRING(decoder_widths, true),
      ZSBIR_KEY_STRING(regressor_widths, true),
      // losses
      ZSBIR_KEY_DOUBLE(beta, true),
      ZSBIR_KEY_DOUBLE(lambda_r, true),
      ZSBIR_KEY_DOUBLE(lambda_c, true),
      ZSBIR_KEY_DOUBLE(lambda_reg, true),
      ZSBIR_KEY_DOUBLE(lambda_e, true),
      // training
      ZSBIR_KEY_SIZE(epochs, true),
      ZSBIR_KEY_SIZE(batch_size, true),
      ZSBIR_KEY_U64(seed, true),
      ZSBIR_KEY_STRING(lr_schedule, true),
      ZSBIR_KEY_SIZE(eval_every, true),
      ZSBIR_KEY_SIZE(kl_mc_samples, true),
      ZSBIR_KEY_BOOL(check_partition, true),
      ZSBIR_KEY_BOOL(strict_numerics, true),
      ZSBIR_KEY_BOOL(log_wall_time, false),
      // retrieval
      ZSBIR_KEY_SIZE(candidates, false),
      ZSBIR_KEY_STRING(k_values, false),
      ZSBIR_KEY_SIZE(eval_threads, false),
      ZSBIR_KEY_BOOL(include_seen_db, false),
      // io
      ZSBIR_KEY_STRING(out_dir, false),
  };
  return keys;
}

const KeySpec& find_key(const std::string& name) {
  for (const auto& k : registry()) {
    if (name == k.name) return k;
  }
  throw ConfigError("unknown config key '" + name + "'");
}

}  // namespace

// ---- derived views ------------------------------------------------------------

SyntheticSpec RunConfig::synthetic_spec() const {
  SyntheticSpec spec;
  spec.n_classes = synth_classes;
  spec.dim = synth_dim;
  spec.images_per_class = synth_images_per_class;
  spec.sketches_per_class = synth_sketches_per_class;
  spec.image_noise_std = synth_image_noise;
  spec.sketch_noise_std = synth_sketch_noise;
  spec.cross_modal_map_scale = synth_map_scale;
  spec.seed = synth_seed != 0 ? synth_seed : Rng::mix(seed, 0x7379ULL);
  return spec;
}

ModelConfig RunConfig::model_config() const {
  ModelConfig cfg;
  cfg.feature_dim = feature_dim;
  cfg.attr_dim = attr_dim;
  cfg.latent_dim = latent_dim;
  cfg.flow_steps = flow_steps;
  cfg.context_dim = context_dim;
  cfg.made_hidden = made_hidden;
  cfg.made_depth = made_depth;
  cfg.prior_scale = prior_scale;
  cfg.prior_scale_is_variance = prior_scale_is_variance;
  cfg.gate_bias = gate_bias;
  cfg.encoder_widths = parse_size_list("encoder_widths", encoder_widths);
  cfg.decoder_widths = parse_size_list("decoder_widths", decoder_widths);
  cfg.regressor_widths = parse_size_list("regressor_widths", regressor_widths);
  cfg.variant = parse_variant(variant);
  return cfg;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = batch_size;
  cfg.weights.beta = beta;
  cfg.weights.lambda_r = lambda_r;
  cfg.weights.lambda_c = lambda_c;
  cfg.weights.lambda_reg = lambda_reg;
  cfg.weights.lambda_e = lambda_e;
  cfg.schedule = LrSchedule::parse(lr_schedule);
  cfg.seed = seed;
  cfg.eval_every = eval_every;
  cfg.kl_mc_samples = kl_mc_samples;
  cfg.check_partition = check_partition;
  return cfg;
}

RetrievalConfig RunConfig::retrieval_config() const {
  RetrievalConfig cfg;
  cfg.candidates = candidates;
  cfg.k_values = parse_size_list("k_values", k_values);
  cfg.seed = Rng::mix(seed, 0x6576616cULL);
  cfg.threads = eval_threads;
  return cfg;
}

std::vector<std::uint32_t> RunConfig::unseen_class_list() const {
  std::vector<std::uint32_t> out;
  for (auto v : parse_size_list("unseen_classes", unseen_classes)) {
    out.push_back(static_cast<std::uint32_t>(v));
  }
  return out;
}

std::vector<std::string> RunConfig::validation_errors() const {
  std::vector<std::string> errors;
  auto check = [&errors](const std::function<void()>& fn) {
    try {
      fn();
    } catch (const Error& e) {
      errors.emplace_back(e.what());
    }
  };
  check([this] { model_config().normalized(); });
  check([this] { train_config().validate(); });
  check([this] { (void)train_config().schedule; });
  check([this] { retrieval_config().validate(); });
  if (images_file.empty() != sketches_file.empty()) {
    errors.emplace_back("images_file and sketches_file must be given together");
  }
  if (images_file.empty()) {
    check([this] { synthetic_spec().validate(); });
  }
  if (unseen_classes.empty() && unseen_count == 0 &&
      (unseen_fraction <= 0.0 || unseen_fraction >= 1.0)) {
    errors.emplace_back("one of unseen_classes, unseen_count or unseen_fraction must select "
                        "the test classes");
  }
  if (pairs_per_class == 0) errors.emplace_back("pairs_per_class must be positive");
  return errors;
}

// ---- registry access ------------------------------------------------------------

std::vector<std::string> config_key_names() {
  std::vector<std::string> names;
  for (const auto& k : registry()) names.emplace_back(k.name);
  return names;
}

std::string config_get(const RunConfig& config, const std::string& key) {
  return find_key(key).get(config);
}

void config_set(RunConfig& config, const std::string& key, const std::string& value) {
  find_key(key).set(config, value);
}

bool config_key_fingerprinted(const std::string& key) { return find_key(key).fingerprinted; }

std::vector<std::pair<std::string, std::string>> read_config_pairs(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config file: " + path);
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ": line " + std::to_string(line_no) +
                        ": expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      find_key(key);  // reject unknown keys with the file location
    } catch (const ConfigError& e) {
      throw ConfigError(path + ": line " + std::to_string(line_no) + ": " + e.what());
    }
    pairs.emplace_back(key, value);
  }
  return pairs;
}

void load_config_file(RunConfig& config, const std::string& path) {
  for (const auto& [key, value] : read_config_pairs(path)) {
    try {
      config_set(config, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(path + ": " + e.what());
    }
  }
}

void apply_preset(RunConfig& config, const std::string& preset) {
  config.preset = preset;
  if (preset == "desk") return;
  if (preset == "paper-sketchy" || preset == "paper-sketchy-cvae" ||
      preset == "paper-tuberlin") {
    config.feature_dim = 2048;
    config.attr_dim = 2048;
    config.latent_dim = 128;
    config.context_dim = 256;
    config.made_hidden = 512;
    config.flow_steps = 3;
    config.encoder_widths = "4096,4096";
    config.decoder_widths = "6144,6144,6144,6144,6144";
    config.regressor_widths = "4096,4096";
    config.synth_dim = 2048;
    if (preset == "paper-sketchy") {
      config.pairs_per_class = 1000;
      config.unseen_count = 25;  // 100 train / 25 test classes
    } else if (preset == "paper-sketchy-cvae") {
      config.pairs_per_class = 1000;
      config.unseen_count = 21;  // 104 train / 21 test classes
      config.k_values = "200";
    } else {
      config.pairs_per_class = 1500;
      config.unseen_count = 30;  // 220 train / 30 test classes
      config.min_unseen_records = 400;  // only well-populated classes are drawn for test
    }
    return;
  }
  throw ConfigError("unknown preset '" + preset +
                    "' (expected desk, paper-sketchy, paper-sketchy-cvae, paper-tuberlin)");
}

std::string canonical_config_text(const RunConfig& config) {
  std::vector<std::string> lines;
  for (const auto& k : registry()) {
    if (!k.fingerprinted) continue;
    lines.push_back(std::string(k.name) + " = " + k.get(config));
  }
  std::sort(lines.begin(), lines.end());
  std::string text;
  for (const auto& l : lines) {
    text += l;
    text += '\n';
  }
  return text;
}

std::uint64_t config_fingerprint(const RunConfig& config) {
  // FNV-1a 64
  const std::string text = canonical_config_text(config);
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::string fingerprint_hex(std::uint64_t fingerprint) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[fingerprint & 0xf];
    fingerprint >>= 4;
  }
  return out;
}

}  // namespace zsbir
