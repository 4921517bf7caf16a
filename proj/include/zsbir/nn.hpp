#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "zsbir/rng.hpp"
#include "zsbir/tensor.hpp"

namespace zsbir {

enum class Activation { identity, relu, sigmoid };

struct NamedParam {
  std::string name;
  Tensor tensor;
};

// Owns the named, trainable leaves of one network (one of the three disjoint
// parameter sets). Registration order is the serialization order.
class ParameterSet {
 public:
  Tensor add(const std::string& name, Tensor tensor);
  const std::vector<NamedParam>& params() const { return params_; }
  std::vector<Tensor> tensors() const;
  Tensor find(const std::string& name) const;

  void zero_grad();
  void set_trainable(bool enabled);
  bool all_grads_zero() const;
  std::size_t scalar_count() const;

 private:
  std::vector<NamedParam> params_;
};

// Temporarily removes a parameter set from gradient flow.
class FreezeGuard {
 public:
  explicit FreezeGuard(ParameterSet& set) : set_(set) { set_.set_trainable(false); }
  ~FreezeGuard() { set_.set_trainable(true); }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  ParameterSet& set_;
};

class LinearLayer {
 public:
  LinearLayer() = default;
  // Xavier-uniform weights, zero bias; registers W and b under `name`.
  LinearLayer(std::size_t in_width, std::size_t out_width, Activation activation, Rng& rng,
              ParameterSet& params, const std::string& name);

  Tensor forward(const Tensor& x) const;

  std::size_t in_width() const { return in_width_; }
  std::size_t out_width() const { return out_width_; }
  Activation activation() const { return activation_; }
  Tensor weight() const { return weight_; }
  Tensor bias() const { return bias_; }

 private:
  std::size_t in_width_ = 0;
  std::size_t out_width_ = 0;
  Activation activation_ = Activation::identity;
  Tensor weight_;  // [out x in]
  Tensor bias_;    // [out]
};

// f_o(x) = f_in(x) + x, with a linear projection on the skip path when the
// widths differ.
class ResidualBlock {
 public:
  ResidualBlock() = default;
  // with_projection=false demands in_width == out_width (pure identity skip).
  ResidualBlock(std::size_t in_width, std::size_t out_width, Activation inner_activation,
                Rng& rng, ParameterSet& params, const std::string& name,
                bool with_projection = true);

  Tensor forward(const Tensor& x) const;

  std::size_t in_width() const { return inner_.in_width(); }
  std::size_t out_width() const { return inner_.out_width(); }
  bool has_projection() const { return projection_.has_value(); }
  const LinearLayer& inner() const { return inner_; }

 private:
  LinearLayer inner_;
  std::optional<LinearLayer> projection_;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam over a fixed parameter list. One shared step counter.
class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, AdamConfig config = {});

  // Applies one update using the gradients currently on the parameters.
  void step(double learning_rate);

  std::uint64_t step_count() const { return step_; }
  std::size_t size() const { return params_.size(); }
  const AdamConfig& config() const { return config_; }

  // Checkpoint access.
  std::vector<double>& moment1(std::size_t i) { return slots_[i].m; }
  std::vector<double>& moment2(std::size_t i) { return slots_[i].v; }
  const std::vector<double>& moment1(std::size_t i) const { return slots_[i].m; }
  const std::vector<double>& moment2(std::size_t i) const { return slots_[i].v; }
  void set_step_count(std::uint64_t step) { step_ = step; }

 private:
  struct Slot {
    std::vector<double> m, v;
  };
  std::vector<Tensor> params_;
  std::vector<Slot> slots_;
  AdamConfig config_;
  std::uint64_t step_ = 0;
};

// Stepwise decreasing learning rate: (first-epoch, rate) segments.
class LrSchedule {
 public:
  explicit LrSchedule(std::vector<std::pair<std::size_t, double>> segments);

  double at(std::size_t epoch) const;
  const std::vector<std::pair<std::size_t, double>>& segments() const { return segments_; }
  std::string str() const;

  // 0.001 for 5 epochs, then 0.0005 / 0.0001 / 0.00001 every 10 epochs.
  static LrSchedule stepwise_default();
  // "0:0.001,5:0.0005,15:0.0001,25:0.00001"
  static LrSchedule parse(const std::string& text);

 private:
  std::vector<std::pair<std::size_t, double>> segments_;
};

}  // namespace zsbir
