#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zsbir/flow.hpp"

namespace zsbir {

enum class Variant { feedback_vae, feedback_auto, no_iaf };

Variant parse_variant(const std::string& name);
std::string variant_name(Variant variant);

struct ModelConfig {
  std::size_t feature_dim = 32;
  std::size_t attr_dim = 32;
  std::size_t latent_dim = 8;
  std::size_t flow_steps = 3;
  std::size_t context_dim = 16;
  std::size_t made_hidden = 32;
  std::size_t made_depth = 2;
  double prior_scale = 0.005;
  // "N(0, 0.005)" read as a standard deviation by default; flip to treat it
  // as a variance.
  bool prior_scale_is_variance = false;
  double gate_bias = 2.0;
  std::vector<std::size_t> encoder_widths{128, 128};
  std::vector<std::size_t> decoder_widths{192, 192, 192, 192, 192};
  std::vector<std::size_t> regressor_widths{128, 128};
  Variant variant = Variant::feedback_vae;

  // Applies the variant forcing rules, then validates.
  ModelConfig normalized() const;
  double prior_stddev() const;
};

struct PosteriorParams {
  Tensor mu0;     // [n x latent]
  Tensor sigma0;  // [n x latent], strictly positive via softplus
  Tensor h;       // [n x context]
};

struct PriorDistribution {
  double stddev = 0.005;
  // Rows are drawn sequentially, so draws for count c are a prefix of the
  // draws for count c+1 under the same generator.
  Tensor sample(std::size_t rows, std::size_t dim, Rng& rng) const;
  Tensor log_density(const Tensor& z) const;  // per row [n]
};

// The three networks with disjoint parameter sets: encoder + flow (theta_E),
// residual decoder/generator (theta_G), regressor (theta_R).
class ModelBundle {
 public:
  ModelBundle(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParameterSet& encoder_params() { return theta_e_; }
  ParameterSet& generator_params() { return theta_g_; }
  ParameterSet& regressor_params() { return theta_r_; }
  const ParameterSet& encoder_params() const { return theta_e_; }
  const ParameterSet& generator_params() const { return theta_g_; }
  const ParameterSet& regressor_params() const { return theta_r_; }
  FlowChain& flow() { return flow_; }
  const FlowChain& flow() const { return flow_; }
  PriorDistribution prior() const { return {config_.prior_stddev()}; }

  PosteriorParams encode(const Tensor& x) const;
  FlowSample posterior_sample(const PosteriorParams& params, const Tensor& eps) const;
  FlowSample posterior_sample(const PosteriorParams& params, Rng& rng) const;
  Tensor decode(const Tensor& z, const Tensor& a) const;
  Tensor regress(const Tensor& x) const;

  // c prior draws decoded against one sketch feature row; deterministic under
  // seed, and the candidate list for c is a prefix of the one for c+1.
  Tensor generate_from_prior(const std::vector<double>& attr, std::size_t count,
                             std::uint64_t seed) const;

 private:
  ModelConfig config_;
  ParameterSet theta_e_;
  ParameterSet theta_g_;
  ParameterSet theta_r_;

  std::vector<LinearLayer> encoder_trunk_;
  LinearLayer head_mu_;
  LinearLayer head_sraw_;
  LinearLayer head_h_;
  FlowChain flow_;

  std::vector<ResidualBlock> decoder_blocks_;
  LinearLayer decoder_out_;

  std::vector<LinearLayer> regressor_trunk_;
  LinearLayer regressor_out_;
};

}  // namespace zsbir
