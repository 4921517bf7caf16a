#include "zsbir/losses.hpp"

#include <cmath>

namespace zsbir {

void LossWeights::validate() const {
  for (double v : {beta, lambda_r, lambda_c, lambda_reg, lambda_e}) {
    if (!std::isfinite(v) || v < 0.0) {
      throw ConfigError("loss weights must be finite and non-negative");
    }
  }
}

Tensor reconstruction_loss(const Tensor& x_hat, const Tensor& x) {
  if (x_hat.shape() != x.shape()) {
    throw DimensionError("reconstruction_loss: " + shape_str(x_hat.shape()) + " vs " +
                         shape_str(x.shape()));
  }
  return mean(square(sub(x_hat, x)));
}

Tensor kl_gaussian_closed_form(const Tensor& mu, const Tensor& sigma, double prior_scale) {
  if (prior_scale <= 0.0) throw DomainError("kl: prior scale must be positive");
  if (mu.shape() != sigma.shape()) {
    throw DimensionError("kl: mu " + shape_str(mu.shape()) + " vs sigma " +
                         shape_str(sigma.shape()));
  }
  const std::size_t rows = mu.extent(0);
  if (mu.extent(1) == 0) return Tensor::scalar(0.0);
  // sum_i log(s/sigma_i) + (sigma_i^2 + mu_i^2) / (2 s^2) - 1/2
  const double inv_two_s2 = 0.5 / (prior_scale * prior_scale);
  Tensor quad = mul_scalar(add(square(sigma), square(mu)), inv_two_s2);
  Tensor log_term = add_scalar(neg(log(sigma)), std::log(prior_scale));
  Tensor per_coord = add_scalar(add(log_term, quad), -0.5);
  Tensor per_row = sum(per_coord, 1);
  return mul_scalar(sum(per_row), 1.0 / static_cast<double>(rows));
}

Tensor kl_flow_mc(const FlowSample& sample, const PriorDistribution& prior) {
  Tensor log_q = sample.log_density();
  Tensor log_p = prior.log_density(sample.zT);
  return mean(sub(log_q, log_p));
}

RegressorLossParts regressor_loss(const Tensor& a_hat_real, const Tensor& a,
                                  const Tensor& a_hat_gen, const Tensor& a_gen_target,
                                  const LossWeights& weights) {
  RegressorLossParts parts;
  parts.l_sup = reconstruction_loss(a_hat_real, a);
  parts.l_unsup = reconstruction_loss(a_hat_gen, a_gen_target);
  parts.total = add(parts.l_sup, mul_scalar(parts.l_unsup, weights.lambda_r));
  return parts;
}

Tensor cyclic_loss(ModelBundle& bundle, const Tensor& z_prior, const Tensor& a) {
  FreezeGuard freeze(bundle.regressor_params());
  Tensor x_hat = bundle.decode(z_prior, a);
  return reconstruction_loss(bundle.regress(x_hat), a);
}

Tensor prior_reconstruction_loss(ModelBundle& bundle, const Tensor& x, const Tensor& a,
                                 const Tensor& z_prior) {
  return reconstruction_loss(bundle.decode(z_prior, a), x);
}

Tensor latent_consistency_loss(const ModelBundle& bundle, const Tensor& x_hat) {
  if (bundle.config().latent_dim == 0) return Tensor::scalar(0.0);
  PosteriorParams params = bundle.encode(x_hat);
  return kl_gaussian_closed_form(params.mu0, params.sigma0, bundle.config().prior_stddev());
}

Tensor generator_total(const Tensor& total_vae, const Tensor& l_c, const Tensor& l_reg,
                       const Tensor& l_e, const LossWeights& weights) {
  Tensor total = add(total_vae, mul_scalar(l_c, weights.lambda_c));
  total = add(total, mul_scalar(l_reg, weights.lambda_reg));
  return add(total, mul_scalar(l_e, weights.lambda_e));
}

}  // namespace zsbir
