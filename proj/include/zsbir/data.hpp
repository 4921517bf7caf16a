#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "zsbir/rng.hpp"

namespace zsbir {

enum class Modality : std::uint8_t { image = 0, sketch = 1 };

std::string modality_name(Modality modality);
Modality parse_modality(const std::string& name);

// One labeled feature vector. Values are float32 so file round trips are
// bitwise; tensors are built in float64 downstream.
struct FeatureRecord {
  std::uint32_t label = 0;
  Modality modality = Modality::image;
  std::vector<float> vector;
};

// Binary feature file:
//   magic "ZSFB" | version u16 | modality u8 | record count u64 | dim u32 |
//   per record: label u32 | dim little-endian float32 values
inline constexpr std::uint16_t kFeatureFileVersion = 1;

void save_features(const std::string& path, const std::vector<FeatureRecord>& records,
                   Modality modality);
std::vector<FeatureRecord> load_features(const std::string& path);

// CSV convenience ingestion with identical semantics; header label,f0,...,f{d-1}.
std::vector<FeatureRecord> load_features_csv(const std::string& path, Modality modality);

// Plain-text sidecar listing feature files and the class-name mapping:
//   file<TAB>relative-path<TAB>image|sketch
//   class<TAB>id<TAB>name
struct Manifest {
  struct FileEntry {
    std::string path;
    Modality modality;
  };
  std::vector<FileEntry> files;
  std::vector<std::pair<std::uint32_t, std::string>> classes;
};

void save_manifest(const std::string& path, const Manifest& manifest);
Manifest load_manifest(const std::string& path);

struct DatasetSplit {
  std::set<std::uint32_t> seen_classes;
  std::set<std::uint32_t> unseen_classes;
  std::vector<FeatureRecord> train_records;  // labels in seen_classes
  std::vector<FeatureRecord> test_records;   // labels in unseen_classes
};

// Random class-disjoint partition, deterministic under seed. Classes with
// min_unseen_records or fewer records are filtered out BEFORE the draw (they
// stay seen); 0 disables the filter.
DatasetSplit make_zero_shot_split(const std::vector<FeatureRecord>& records,
                                  std::size_t unseen_count, std::uint64_t seed,
                                  std::size_t min_unseen_records = 0);
DatasetSplit make_zero_shot_split_fraction(const std::vector<FeatureRecord>& records,
                                           double unseen_fraction, std::uint64_t seed);
// Explicit class list overrides the random draw.
DatasetSplit make_zero_shot_split(const std::vector<FeatureRecord>& records,
                                  const std::vector<std::uint32_t>& unseen_classes);

// Sampled (sketch, image) training pairs; both sides share the label.
struct SketchImagePair {
  std::uint32_t label = 0;
  std::vector<double> sketch;
  std::vector<double> image;
};

struct PairSet {
  std::size_t pairs_per_class = 0;
  std::vector<SketchImagePair> pairs;
};

// Per-coordinate min-max scaling to [0, 1], one set of parameters per
// modality, fitted on seen-class training records only.
struct ScalingParams {
  std::vector<double> image_min, image_range;
  std::vector<double> sketch_min, sketch_range;
  // coordinates with zero range; they map to 0.5
  std::vector<std::size_t> degenerate_image, degenerate_sketch;

  std::vector<double> scale(const std::vector<float>& v, Modality modality) const;
  std::vector<double> scale(const std::vector<double>& v, Modality modality) const;
  std::vector<double> inverse(const std::vector<double>& v, Modality modality) const;
};

struct ScaledRecord {
  std::uint32_t label = 0;
  Modality modality = Modality::image;
  std::vector<double> vector;
};

// Fits on split.train_records, applies to `records`.
std::pair<std::vector<ScaledRecord>, ScalingParams> standardize(
    const std::vector<FeatureRecord>& records, const DatasetSplit& split);

// pairs_per_class independent uniform draws with replacement per seen class.
// With `scaling` the pair vectors come out min-max scaled.
PairSet build_pairs(const DatasetSplit& split, std::size_t pairs_per_class, std::uint64_t seed,
                    const ScalingParams* scaling = nullptr);

// Desk-scale stand-in for extracted features: class image prototypes are
// isotropic Gaussian; sketch prototypes are a fixed linear map of them plus a
// per-class perturbation; samples add isotropic noise.
struct SyntheticSpec {
  std::size_t n_classes = 15;
  std::size_t dim = 32;
  std::size_t images_per_class = 200;
  std::size_t sketches_per_class = 200;
  double image_noise_std = 0.3;
  double sketch_noise_std = 0.3;
  double cross_modal_map_scale = 1.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SyntheticData {
  std::vector<FeatureRecord> records;  // all images, then all sketches
  // exposed for oracle evaluation
  std::vector<std::vector<double>> image_prototypes;
  std::vector<std::vector<double>> sketch_prototypes;
};

SyntheticData synth_generate(const SyntheticSpec& spec);

}  // namespace zsbir
