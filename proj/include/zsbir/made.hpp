#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "zsbir/nn.hpp"

namespace zsbir {

struct MadeConfig {
  std::size_t latent_dim = 0;
  std::size_t context_dim = 0;
  std::size_t hidden_width = 32;
  std::size_t hidden_layers = 2;
  // Degree permutation: natural 1..d or reversed. Chains alternate so later
  // coordinates get conditioned too.
  bool reverse_order = false;
};

// Masked feed-forward network with two heads m (shift) and s (pre-gate scale).
// Head coordinate i depends only on latent inputs of strictly lower degree;
// the context vector h is appended unmasked to every layer's input.
class MadeNetwork {
 public:
  MadeNetwork() = default;
  MadeNetwork(const MadeConfig& config, Rng& rng, ParameterSet& params, const std::string& name);

  // v: [n x latent], h: [n x context]. Returns (m, s), each [n x latent].
  std::pair<Tensor, Tensor> forward(const Tensor& v, const Tensor& h) const;

  const MadeConfig& config() const { return config_; }
  // Degree of latent coordinate i, a permutation of 1..d.
  const std::vector<std::size_t>& degrees() const { return input_degrees_; }

 private:
  struct MaskedLayer {
    Tensor weight;  // [out x (prev + context)]
    Tensor bias;    // [out]
    Tensor mask;    // same shape as weight, constant 0/1
  };

  Tensor layer_forward(const MaskedLayer& layer, const Tensor& x, const Tensor& h,
                       bool apply_relu) const;

  MadeConfig config_;
  std::vector<std::size_t> input_degrees_;
  std::vector<std::size_t> hidden_degrees_;
  std::vector<MaskedLayer> hidden_;
  MaskedLayer head_m_;
  MaskedLayer head_s_;
};

}  // namespace zsbir
