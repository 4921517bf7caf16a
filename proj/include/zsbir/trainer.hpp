#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "zsbir/data.hpp"
#include "zsbir/losses.hpp"

namespace zsbir {

struct TrainConfig {
  std::size_t epochs = 35;
  std::size_t batch_size = 50;
  std::size_t kl_mc_samples = 1;  // eps draws per datum for the flow-KL estimate
  LossWeights weights;
  LrSchedule schedule = LrSchedule::stepwise_default();
  std::uint64_t seed = 1;
  std::size_t eval_every = 0;   // epochs between retrieval evaluations; 0 = never
  bool check_partition = true;  // verify the gradient partition on each epoch's first batch

  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;  // 0-based
  LossReport losses;      // per-batch means, weighted by batch size
  double learning_rate = 0.0;
};

// Alternating optimization: per batch, one regressor phase (updates theta_R
// only) then one encoder/generator phase (updates theta_E and theta_G only).
class Trainer {
 public:
  Trainer(ModelBundle& bundle, const TrainConfig& config);

  // a, x: [batch x attr] / [batch x feature], already scaled.
  LossReport train_step(const Tensor& a, const Tensor& x, bool verify_partition = false);

  // `stop_after_epochs` interrupts the run once that many epochs are done
  // (resume later from a checkpoint); it is not part of the configuration.
  std::vector<EpochStats> fit(const PairSet& pairs,
                              const std::function<void(const EpochStats&)>& on_epoch = {},
                              std::optional<std::size_t> stop_after_epochs = {});

  std::size_t epochs_done() const { return epochs_done_; }
  const TrainConfig& config() const { return config_; }
  Rng& rng() { return rng_; }
  const Rng& rng() const { return rng_; }
  Adam& regressor_opt() { return opt_r_; }
  Adam& generator_opt() { return opt_eg_; }
  const Adam& regressor_opt() const { return opt_r_; }
  const Adam& generator_opt() const { return opt_eg_; }

  // resume support
  void set_epochs_done(std::size_t epochs) { epochs_done_ = epochs; }
  void set_rng(const Rng& rng) { rng_ = rng; }

 private:
  ModelBundle& bundle_;
  TrainConfig config_;
  Adam opt_r_;
  Adam opt_eg_;
  Rng rng_;
  std::size_t epochs_done_ = 0;
  double current_lr_ = 0.0;
};

// Checkpoint file: magic "ZSCK" | version | config fingerprint | epoch | rng
// state | named float64 parameter blobs | Adam moments | scaling parameters.
inline constexpr std::uint16_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const ModelBundle& bundle, const Trainer& trainer,
                     const ScalingParams& scaling, std::uint64_t fingerprint);

// Restores parameters (and optimizer/rng state when `trainer` is non-null)
// into a bundle built from the same configuration. A fingerprint mismatch is
// a hard error; so is any name or shape difference.
ScalingParams load_checkpoint(const std::string& path, ModelBundle& bundle, Trainer* trainer,
                              std::uint64_t expected_fingerprint);

// Reads just the fingerprint, for compatibility checks before building a model.
std::uint64_t peek_checkpoint_fingerprint(const std::string& path);

}  // namespace zsbir
