#include "zsbir/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace zsbir {

namespace {

constexpr char kMagic[4] = {'Z', 'S', 'F', 'B'};
constexpr double kRangeEpsilon = 1e-12;

template <typename T>
void put(std::ostream& os, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  os.write(buf, sizeof(T));
}

template <typename T>
T get(std::istream& is, std::size_t& offset, const std::string& path, const char* what) {
  char buf[sizeof(T)];
  is.read(buf, sizeof(T));
  if (is.gcount() != static_cast<std::streamsize>(sizeof(T))) {
    throw ParseError(path + ": truncated while reading " + what + " at byte " +
                     std::to_string(offset));
  }
  offset += sizeof(T);
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

std::vector<std::uint32_t> distinct_labels(const std::vector<FeatureRecord>& records) {
  std::set<std::uint32_t> labels;
  for (const auto& r : records) labels.insert(r.label);
  return {labels.begin(), labels.end()};
}

DatasetSplit partition_by_classes(const std::vector<FeatureRecord>& records,
                                  const std::set<std::uint32_t>& unseen) {
  DatasetSplit split;
  split.unseen_classes = unseen;
  for (const auto& r : records) {
    if (unseen.count(r.label)) {
      split.test_records.push_back(r);
    } else {
      split.seen_classes.insert(r.label);
      split.train_records.push_back(r);
    }
  }
  return split;
}

void fit_modality(const std::vector<FeatureRecord>& records, Modality modality,
                  std::vector<double>& lo, std::vector<double>& range,
                  std::vector<std::size_t>& degenerate) {
  std::vector<double> hi;
  for (const auto& r : records) {
    if (r.modality != modality) continue;
    if (lo.empty()) {
      lo.assign(r.vector.begin(), r.vector.end());
      hi.assign(r.vector.begin(), r.vector.end());
      continue;
    }
    if (r.vector.size() != lo.size()) {
      throw DataError("standardize: inconsistent width " + std::to_string(r.vector.size()) +
                      " vs " + std::to_string(lo.size()) + " for " + modality_name(modality));
    }
    for (std::size_t i = 0; i < lo.size(); ++i) {
      lo[i] = std::min(lo[i], static_cast<double>(r.vector[i]));
      hi[i] = std::max(hi[i], static_cast<double>(r.vector[i]));
    }
  }
  range.resize(lo.size());
  for (std::size_t i = 0; i < lo.size(); ++i) {
    range[i] = hi[i] - lo[i];
    if (range[i] < kRangeEpsilon) {
      degenerate.push_back(i);
      range[i] = 0.0;
    }
  }
}

std::vector<double> scale_with(const std::vector<double>& lo, const std::vector<double>& range,
                               const double* v, std::size_t n) {
  if (n != lo.size()) {
    throw DataError("scaling: width " + std::to_string(n) + " vs fitted " +
                    std::to_string(lo.size()));
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = range[i] == 0.0 ? 0.5 : (v[i] - lo[i]) / range[i];
  }
  return out;
}

}  // namespace

std::string modality_name(Modality modality) {
  return modality == Modality::image ? "image" : "sketch";
}

Modality parse_modality(const std::string& name) {
  if (name == "image") return Modality::image;
  if (name == "sketch") return Modality::sketch;
  throw ParseError("unknown modality '" + name + "'");
}

// ---- binary feature files -----------------------------------------------------

void save_features(const std::string& path, const std::vector<FeatureRecord>& records,
                   Modality modality) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  const std::uint32_t dim = records.empty() ? 0 : static_cast<std::uint32_t>(records[0].vector.size());
  os.write(kMagic, 4);
  put<std::uint16_t>(os, kFeatureFileVersion);
  put<std::uint8_t>(os, static_cast<std::uint8_t>(modality));
  put<std::uint64_t>(os, records.size());
  put<std::uint32_t>(os, dim);
  for (const auto& r : records) {
    if (r.vector.size() != dim) {
      throw DataError(path + ": record width " + std::to_string(r.vector.size()) +
                      " inconsistent with dim " + std::to_string(dim));
    }
    put<std::uint32_t>(os, r.label);
    for (float v : r.vector) put<float>(os, v);
  }
  if (!os) throw IoError("write failed: " + path);
}

std::vector<FeatureRecord> load_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  std::size_t offset = 0;

  char magic[4];
  is.read(magic, 4);
  if (is.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    throw ParseError(path + ": bad magic at byte 0 (expected \"ZSFB\")");
  }
  offset = 4;
  const auto version = get<std::uint16_t>(is, offset, path, "version");
  if (version != kFeatureFileVersion) {
    throw ParseError(path + ": unsupported version " + std::to_string(version) + " at byte 4");
  }
  const auto modality_raw = get<std::uint8_t>(is, offset, path, "modality");
  if (modality_raw > 1) {
    throw ParseError(path + ": invalid modality " + std::to_string(modality_raw) + " at byte 6");
  }
  const auto modality = static_cast<Modality>(modality_raw);
  const auto count = get<std::uint64_t>(is, offset, path, "record count");
  const auto dim = get<std::uint32_t>(is, offset, path, "dim");

  std::vector<FeatureRecord> records;
  records.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    FeatureRecord r;
    r.modality = modality;
    r.label = get<std::uint32_t>(is, offset, path, "record label");
    r.vector.resize(dim);
    for (std::uint32_t c = 0; c < dim; ++c) {
      r.vector[c] = get<float>(is, offset, path, "feature value");
    }
    records.push_back(std::move(r));
  }
  char extra;
  if (is.read(&extra, 1)) {
    throw ParseError(path + ": trailing data at byte " + std::to_string(offset));
  }
  return records;
}

std::vector<FeatureRecord> load_features_csv(const std::string& path, Modality modality) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(is, line)) throw ParseError(path + ": missing header line");
  if (line.rfind("label,", 0) != 0) {
    throw ParseError(path + ": header must start with 'label,' (got '" + line.substr(0, 24) +
                     "')");
  }
  const std::size_t dim = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));

  std::vector<FeatureRecord> records;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    FeatureRecord r;
    r.modality = modality;
    std::istringstream row(line);
    std::string cell;
    if (!std::getline(row, cell, ',')) {
      throw ParseError(path + ": line " + std::to_string(line_no) + ": missing label");
    }
    try {
      r.label = static_cast<std::uint32_t>(std::stoul(cell));
    } catch (const std::exception&) {
      throw ParseError(path + ": line " + std::to_string(line_no) + ": bad label '" + cell + "'");
    }
    while (std::getline(row, cell, ',')) {
      try {
        r.vector.push_back(std::stof(cell));
      } catch (const std::exception&) {
        throw ParseError(path + ": line " + std::to_string(line_no) + ": bad value '" + cell +
                         "'");
      }
    }
    if (r.vector.size() != dim) {
      throw ParseError(path + ": line " + std::to_string(line_no) + ": expected " +
                       std::to_string(dim) + " values, got " + std::to_string(r.vector.size()));
    }
    records.push_back(std::move(r));
  }
  return records;
}

// ---- manifest -------------------------------------------------------------------

void save_manifest(const std::string& path, const Manifest& manifest) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  for (const auto& f : manifest.files) {
    os << "file\t" << f.path << "\t" << modality_name(f.modality) << "\n";
  }
  for (const auto& [id, name] : manifest.classes) {
    os << "class\t" << id << "\t" << name << "\n";
  }
  if (!os) throw IoError("write failed: " + path);
}

Manifest load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path);
  Manifest manifest;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    std::string kind, a, b;
    if (!std::getline(row, kind, '\t') || !std::getline(row, a, '\t') || !std::getline(row, b)) {
      throw ParseError(path + ": line " + std::to_string(line_no) + ": expected 3 tab fields");
    }
    if (kind == "file") {
      manifest.files.push_back({a, parse_modality(b)});
    } else if (kind == "class") {
      try {
        manifest.classes.emplace_back(static_cast<std::uint32_t>(std::stoul(a)), b);
      } catch (const std::exception&) {
        throw ParseError(path + ": line " + std::to_string(line_no) + ": bad class id '" + a +
                         "'");
      }
    } else {
      throw ParseError(path + ": line " + std::to_string(line_no) + ": unknown kind '" + kind +
                       "'");
    }
  }
  return manifest;
}

// ---- splits ----------------------------------------------------------------------

DatasetSplit make_zero_shot_split(const std::vector<FeatureRecord>& records,
                                  std::size_t unseen_count, std::uint64_t seed,
                                  std::size_t min_unseen_records) {
  std::vector<std::uint32_t> labels = distinct_labels(records);
  if (labels.size() < 2) throw ConfigError("zero-shot split: need at least 2 classes");
  std::vector<std::uint32_t> eligible;
  if (min_unseen_records > 0) {
    std::map<std::uint32_t, std::size_t> counts;
    for (const auto& r : records) ++counts[r.label];
    for (auto label : labels) {
      if (counts[label] > min_unseen_records) eligible.push_back(label);
    }
  } else {
    eligible = labels;
  }
  if (unseen_count == 0 || unseen_count >= labels.size() || unseen_count > eligible.size()) {
    throw ConfigError("zero-shot split: unseen count " + std::to_string(unseen_count) +
                      " must be in [1, " + std::to_string(labels.size() - 1) + "] and within the " +
                      std::to_string(eligible.size()) + " eligible classes");
  }
  Rng rng(seed);
  rng.shuffle(eligible);
  std::set<std::uint32_t> unseen(eligible.begin(),
                                 eligible.begin() + static_cast<std::ptrdiff_t>(unseen_count));
  return partition_by_classes(records, unseen);
}

DatasetSplit make_zero_shot_split_fraction(const std::vector<FeatureRecord>& records,
                                           double unseen_fraction, std::uint64_t seed) {
  if (unseen_fraction <= 0.0 || unseen_fraction >= 1.0) {
    throw ConfigError("zero-shot split: fraction must lie in (0, 1)");
  }
  const std::size_t n = distinct_labels(records).size();
  const auto count = static_cast<std::size_t>(std::max(
      1.0, std::round(unseen_fraction * static_cast<double>(n))));
  return make_zero_shot_split(records, std::min(count, n > 0 ? n - 1 : 0), seed);
}

DatasetSplit make_zero_shot_split(const std::vector<FeatureRecord>& records,
                                  const std::vector<std::uint32_t>& unseen_classes) {
  std::vector<std::uint32_t> labels = distinct_labels(records);
  if (labels.size() < 2) throw ConfigError("zero-shot split: need at least 2 classes");
  std::set<std::uint32_t> unseen(unseen_classes.begin(), unseen_classes.end());
  if (unseen.empty()) throw ConfigError("zero-shot split: explicit unseen set is empty");
  for (auto c : unseen) {
    if (!std::binary_search(labels.begin(), labels.end(), c)) {
      throw ConfigError("zero-shot split: class " + std::to_string(c) + " not in the dataset");
    }
  }
  if (unseen.size() >= labels.size()) {
    throw ConfigError("zero-shot split: unseen set covers every class");
  }
  return partition_by_classes(records, unseen);
}

// ---- scaling ----------------------------------------------------------------------

std::vector<double> ScalingParams::scale(const std::vector<float>& v, Modality modality) const {
  std::vector<double> widened(v.begin(), v.end());
  return scale(widened, modality);
}

std::vector<double> ScalingParams::scale(const std::vector<double>& v, Modality modality) const {
  if (modality == Modality::image) return scale_with(image_min, image_range, v.data(), v.size());
  return scale_with(sketch_min, sketch_range, v.data(), v.size());
}

std::vector<double> ScalingParams::inverse(const std::vector<double>& v,
                                           Modality modality) const {
  const auto& lo = modality == Modality::image ? image_min : sketch_min;
  const auto& range = modality == Modality::image ? image_range : sketch_range;
  if (v.size() != lo.size()) {
    throw DataError("inverse scaling: width " + std::to_string(v.size()) + " vs fitted " +
                    std::to_string(lo.size()));
  }
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = range[i] == 0.0 ? lo[i] : v[i] * range[i] + lo[i];
  }
  return out;
}

std::pair<std::vector<ScaledRecord>, ScalingParams> standardize(
    const std::vector<FeatureRecord>& records, const DatasetSplit& split) {
  ScalingParams params;
  fit_modality(split.train_records, Modality::image, params.image_min, params.image_range,
               params.degenerate_image);
  fit_modality(split.train_records, Modality::sketch, params.sketch_min, params.sketch_range,
               params.degenerate_sketch);
  std::vector<ScaledRecord> scaled;
  scaled.reserve(records.size());
  for (const auto& r : records) {
    scaled.push_back({r.label, r.modality, params.scale(r.vector, r.modality)});
  }
  return {std::move(scaled), std::move(params)};
}

// ---- pairing ----------------------------------------------------------------------

PairSet build_pairs(const DatasetSplit& split, std::size_t pairs_per_class, std::uint64_t seed,
                    const ScalingParams* scaling) {
  if (pairs_per_class == 0) throw ConfigError("build_pairs: pairs_per_class must be positive");
  std::map<std::uint32_t, std::vector<const FeatureRecord*>> images, sketches;
  for (const auto& r : split.train_records) {
    (r.modality == Modality::image ? images : sketches)[r.label].push_back(&r);
  }
  for (auto c : split.seen_classes) {
    if (images.find(c) == images.end()) {
      throw DataError("build_pairs: class " + std::to_string(c) + " has no image records");
    }
    if (sketches.find(c) == sketches.end()) {
      throw DataError("build_pairs: class " + std::to_string(c) + " has no sketch records");
    }
  }

  Rng rng(seed);
  PairSet set;
  set.pairs_per_class = pairs_per_class;
  set.pairs.reserve(split.seen_classes.size() * pairs_per_class);
  for (auto c : split.seen_classes) {  // std::set iterates in sorted order
    const auto& imgs = images[c];
    const auto& skts = sketches[c];
    for (std::size_t k = 0; k < pairs_per_class; ++k) {
      const FeatureRecord* img = imgs[rng.below(imgs.size())];
      const FeatureRecord* skt = skts[rng.below(skts.size())];
      SketchImagePair pair;
      pair.label = c;
      if (scaling != nullptr) {
        pair.sketch = scaling->scale(skt->vector, Modality::sketch);
        pair.image = scaling->scale(img->vector, Modality::image);
      } else {
        pair.sketch.assign(skt->vector.begin(), skt->vector.end());
        pair.image.assign(img->vector.begin(), img->vector.end());
      }
      set.pairs.push_back(std::move(pair));
    }
  }
  return set;
}

// ---- synthetic data ------------------------------------------------------------------

void SyntheticSpec::validate() const {
  if (n_classes < 2) throw ConfigError("synthetic spec: need at least 2 classes");
  if (dim == 0 || images_per_class == 0 || sketches_per_class == 0) {
    throw ConfigError("synthetic spec: counts must be positive");
  }
  if (image_noise_std < 0.0 || sketch_noise_std < 0.0) {
    throw ConfigError("synthetic spec: noise stds must be non-negative");
  }
}

namespace {

// Orthonormal columns from a Gaussian draw (modified Gram-Schmidt).
std::vector<std::vector<double>> random_orthogonal(std::size_t d, Rng& rng) {
  std::vector<std::vector<double>> m(d, std::vector<double>(d));
  for (auto& row : m) {
    for (auto& v : row) v = rng.normal();
  }
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t prev = 0; prev < c; ++prev) {
      double dot = 0.0;
      for (std::size_t r = 0; r < d; ++r) dot += m[r][c] * m[r][prev];
      for (std::size_t r = 0; r < d; ++r) m[r][c] -= dot * m[r][prev];
    }
    double norm = 0.0;
    for (std::size_t r = 0; r < d; ++r) norm += m[r][c] * m[r][c];
    norm = std::sqrt(norm);
    for (std::size_t r = 0; r < d; ++r) m[r][c] /= norm;
  }
  return m;
}

}  // namespace

SyntheticData synth_generate(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::size_t d = spec.dim;

  const auto q = random_orthogonal(d, rng);  // cross-modal map = scale * Q

  SyntheticData data;
  data.image_prototypes.reserve(spec.n_classes);
  data.sketch_prototypes.reserve(spec.n_classes);
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    std::vector<double> p = rng.normal_vec(d);
    std::vector<double> sketch_proto(d, 0.0);
    for (std::size_t r = 0; r < d; ++r) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) acc += q[r][k] * p[k];
      sketch_proto[r] = spec.cross_modal_map_scale * acc;
    }
    // Per-class perturbation of the cross-modal map, at half the sample noise:
    // it stays irreducible for unseen classes, so it is kept small enough that
    // the mapping itself remains the dominant signal.
    for (std::size_t r = 0; r < d; ++r) {
      sketch_proto[r] += rng.normal(0.0, 0.5 * spec.sketch_noise_std);
    }
    data.image_prototypes.push_back(std::move(p));
    data.sketch_prototypes.push_back(std::move(sketch_proto));
  }

  auto emit = [&](const std::vector<std::vector<double>>& prototypes, std::size_t per_class,
                  double noise, Modality modality) {
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
      for (std::size_t i = 0; i < per_class; ++i) {
        FeatureRecord r;
        r.label = static_cast<std::uint32_t>(c);
        r.modality = modality;
        r.vector.resize(d);
        for (std::size_t k = 0; k < d; ++k) {
          r.vector[k] = static_cast<float>(prototypes[c][k] + rng.normal(0.0, noise));
        }
        data.records.push_back(std::move(r));
      }
    }
  };
  emit(data.image_prototypes, spec.images_per_class, spec.image_noise_std, Modality::image);
  emit(data.sketch_prototypes, spec.sketches_per_class, spec.sketch_noise_std, Modality::sketch);
  return data;
}

}  // namespace zsbir
