#include "zsbir/model.hpp"

#include <cmath>

namespace zsbir {

Variant parse_variant(const std::string& name) {
  if (name == "feedback-vae") return Variant::feedback_vae;
  if (name == "feedback-auto") return Variant::feedback_auto;
  if (name == "no-iaf") return Variant::no_iaf;
  throw ConfigError("unknown variant '" + name +
                    "' (expected feedback-vae, feedback-auto, no-iaf)");
}

std::string variant_name(Variant variant) {
  switch (variant) {
    case Variant::feedback_vae:
      return "feedback-vae";
    case Variant::feedback_auto:
      return "feedback-auto";
    case Variant::no_iaf:
      return "no-iaf";
  }
  throw ContractError("unknown variant value");
}

ModelConfig ModelConfig::normalized() const {
  ModelConfig out = *this;
  switch (out.variant) {
    case Variant::feedback_auto:
      out.latent_dim = 0;
      out.flow_steps = 0;
      out.context_dim = 0;
      break;
    case Variant::no_iaf:
      out.flow_steps = 0;
      if (out.latent_dim == 0) {
        throw ConfigError("no-iaf variant requires latent_dim > 0");
      }
      break;
    case Variant::feedback_vae:
      if (out.latent_dim == 0) {
        throw ConfigError("feedback-vae variant requires latent_dim > 0");
      }
      break;
  }
  if (out.prior_scale <= 0.0) throw ConfigError("prior_scale must be positive");
  if (out.feature_dim == 0 || out.attr_dim == 0) {
    throw ConfigError("feature_dim and attr_dim must be positive");
  }
  if (out.flow_steps > 0 && out.context_dim == 0) {
    throw ConfigError("flow steps need a context dimension");
  }
  return out;
}

double ModelConfig::prior_stddev() const {
  return prior_scale_is_variance ? std::sqrt(prior_scale) : prior_scale;
}

// ---- PriorDistribution -------------------------------------------------------

Tensor PriorDistribution::sample(std::size_t rows, std::size_t dim, Rng& rng) const {
  std::vector<double> data(rows * dim);
  for (auto& v : data) v = rng.normal(0.0, stddev);
  return Tensor::from_data({rows, dim}, std::move(data));
}

Tensor PriorDistribution::log_density(const Tensor& z) const {
  return prior_log_density(z, stddev);
}

// ---- ModelBundle ---------------------------------------------------------------

ModelBundle::ModelBundle(const ModelConfig& config, std::uint64_t seed)
    : config_(config.normalized()) {
  // One stream per component, so e.g. a no-iaf bundle shares its encoder,
  // decoder and regressor initialization with a feedback-vae bundle of the
  // same seed (the flow draws from its own stream).
  Rng rng_e(Rng::mix(seed, 1));
  Rng rng_flow(Rng::mix(seed, 2));
  Rng rng_g(Rng::mix(seed, 3));
  Rng rng_r(Rng::mix(seed, 4));

  // encoder trunk + (mu, pre-softplus sigma, context) heads
  std::size_t width = config_.feature_dim;
  for (std::size_t i = 0; i < config_.encoder_widths.size(); ++i) {
    encoder_trunk_.emplace_back(width, config_.encoder_widths[i], Activation::relu, rng_e,
                                theta_e_, "encoder.fc" + std::to_string(i));
    width = config_.encoder_widths[i];
  }
  head_mu_ = LinearLayer(width, config_.latent_dim, Activation::identity, rng_e, theta_e_,
                         "encoder.mu");
  head_sraw_ = LinearLayer(width, config_.latent_dim, Activation::identity, rng_e, theta_e_,
                           "encoder.sraw");
  head_h_ = LinearLayer(width, config_.context_dim, Activation::identity, rng_e, theta_e_,
                        "encoder.h");
  // The refined posterior starts at the prior: mu = 0 and, after the fresh
  // flow's pure gate scaling, sigma exactly the prior stddev. With a narrow
  // prior, generically initialized heads put the initial KL terms at
  // ~1/prior_scale^2 and the resulting updates saturate the networks before
  // reconstruction learning starts.
  {
    auto zero = [](Tensor t) { std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.0); };
    zero(head_mu_.weight());
    zero(head_mu_.bias());
    zero(head_sraw_.weight());
    const double gate = 1.0 / (1.0 + std::exp(-config_.gate_bias));
    const double contraction = std::pow(gate, static_cast<double>(config_.flow_steps));
    const double sigma_bias = std::log(std::expm1(config_.prior_stddev() / contraction));
    std::fill(head_sraw_.bias().mutable_data().begin(), head_sraw_.bias().mutable_data().end(),
              sigma_bias);
  }
  if (config_.flow_steps > 0) {
    MadeConfig made;
    made.latent_dim = config_.latent_dim;
    made.context_dim = config_.context_dim;
    made.hidden_width = config_.made_hidden;
    made.hidden_layers = config_.made_depth;
    flow_ = FlowChain(config_.flow_steps, made, config_.gate_bias, rng_flow, theta_e_,
                      "encoder.iaf");
  }

  // residual decoder: concat(z, a) -> blocks -> sigmoid output
  width = config_.latent_dim + config_.attr_dim;
  for (std::size_t i = 0; i < config_.decoder_widths.size(); ++i) {
    decoder_blocks_.emplace_back(width, config_.decoder_widths[i], Activation::relu, rng_g,
                                 theta_g_, "generator.res" + std::to_string(i));
    width = config_.decoder_widths[i];
  }
  decoder_out_ = LinearLayer(width, config_.feature_dim, Activation::sigmoid, rng_g, theta_g_,
                             "generator.out");

  // regressor: x -> a
  width = config_.feature_dim;
  for (std::size_t i = 0; i < config_.regressor_widths.size(); ++i) {
    regressor_trunk_.emplace_back(width, config_.regressor_widths[i], Activation::relu, rng_r,
                                  theta_r_, "regressor.fc" + std::to_string(i));
    width = config_.regressor_widths[i];
  }
  regressor_out_ = LinearLayer(width, config_.attr_dim, Activation::identity, rng_r, theta_r_,
                               "regressor.out");
}

PosteriorParams ModelBundle::encode(const Tensor& x) const {
  if (x.rank() != 2 || x.extent(1) != config_.feature_dim) {
    throw DimensionError("encode: input " + shape_str(x.shape()) + " wants width " +
                         std::to_string(config_.feature_dim));
  }
  Tensor hidden = x;
  for (const auto& layer : encoder_trunk_) hidden = layer.forward(hidden);
  PosteriorParams params;
  params.mu0 = head_mu_.forward(hidden);
  params.sigma0 = softplus(head_sraw_.forward(hidden));
  params.h = head_h_.forward(hidden);
  return params;
}

FlowSample ModelBundle::posterior_sample(const PosteriorParams& params, const Tensor& eps) const {
  if (eps.shape() != params.mu0.shape()) {
    throw DimensionError("posterior_sample: eps " + shape_str(eps.shape()) + " vs mu " +
                         shape_str(params.mu0.shape()));
  }
  Tensor z0 = add(params.mu0, mul(params.sigma0, eps));
  Tensor log_q0 = gaussian_log_density_reparam(params.sigma0, eps);
  return flow_.forward(z0, log_q0, params.h, eps);
}

FlowSample ModelBundle::posterior_sample(const PosteriorParams& params, Rng& rng) const {
  const std::size_t rows = params.mu0.extent(0);
  const std::size_t dim = params.mu0.extent(1);
  Tensor eps = Tensor::from_data({rows, dim}, rng.normal_vec(rows * dim));
  return posterior_sample(params, eps);
}

Tensor ModelBundle::decode(const Tensor& z, const Tensor& a) const {
  if (a.rank() != 2 || a.extent(1) != config_.attr_dim) {
    throw DimensionError("decode: sketch input " + shape_str(a.shape()) + " wants width " +
                         std::to_string(config_.attr_dim));
  }
  if (z.rank() != 2 || z.extent(1) != config_.latent_dim || z.extent(0) != a.extent(0)) {
    throw DimensionError("decode: latent input " + shape_str(z.shape()) + " wants " +
                         shape_str({a.extent(0), config_.latent_dim}));
  }
  Tensor hidden = concat(z, a, 1);
  for (const auto& block : decoder_blocks_) hidden = block.forward(hidden);
  return decoder_out_.forward(hidden);
}

Tensor ModelBundle::regress(const Tensor& x) const {
  if (x.rank() != 2 || x.extent(1) != config_.feature_dim) {
    throw DimensionError("regress: input " + shape_str(x.shape()) + " wants width " +
                         std::to_string(config_.feature_dim));
  }
  Tensor hidden = x;
  for (const auto& layer : regressor_trunk_) hidden = layer.forward(hidden);
  return regressor_out_.forward(hidden);
}

Tensor ModelBundle::generate_from_prior(const std::vector<double>& attr, std::size_t count,
                                        std::uint64_t seed) const {
  if (count < 1) throw ContractError("generate_from_prior: count must be >= 1");
  if (attr.size() != config_.attr_dim) {
    throw DimensionError("generate_from_prior: sketch width " + std::to_string(attr.size()) +
                         " wants " + std::to_string(config_.attr_dim));
  }
  NoGradGuard no_grad;
  Rng rng(seed);
  Tensor z = prior().sample(count, config_.latent_dim, rng);
  // One row per decode: keeps every candidate bitwise independent of the
  // batch size, so candidates for count c are an exact prefix of count c+1.
  Tensor a_row = Tensor::from_data({1, config_.attr_dim}, attr);
  std::vector<double> out(count * config_.feature_dim);
  const std::size_t d = config_.latent_dim;
  for (std::size_t r = 0; r < count; ++r) {
    std::vector<double> z_row(z.data().begin() + static_cast<std::ptrdiff_t>(r * d),
                              z.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * d));
    Tensor decoded = decode(Tensor::from_data({1, d}, std::move(z_row)), a_row);
    std::copy(decoded.data().begin(), decoded.data().end(),
              out.begin() + static_cast<std::ptrdiff_t>(r * config_.feature_dim));
  }
  return Tensor::from_data({count, config_.feature_dim}, std::move(out));
}

}  // namespace zsbir
