#pragma once

#include "zsbir/model.hpp"

namespace zsbir {

struct LossWeights {
  double beta = 1.0;        // KL weight
  double lambda_r = 0.1;    // unsupervised regressor stream
  double lambda_c = 0.1;    // cyclic loss
  double lambda_reg = 0.1;  // prior-reconstruction regularizer
  double lambda_e = 0.01;   // latent-consistency loss

  void validate() const;
};

// Per-batch scalars for logging; the composition identities
//   total_vae = recon + beta * kl
//   total_regressor = l_sup + lambda_r * l_unsup
//   total_generator = total_vae + lambda_c*l_c + lambda_reg*l_reg + lambda_e*l_e
// hold by construction.
struct LossReport {
  double recon = 0.0;
  double kl = 0.0;
  double l_sup = 0.0;
  double l_unsup = 0.0;
  double l_c = 0.0;
  double l_reg = 0.0;
  double l_e = 0.0;
  double total_vae = 0.0;
  double total_regressor = 0.0;
  double total_generator = 0.0;
};

// Mean squared error over batch and coordinates (Gaussian likelihood with
// fixed variance, up to an additive constant).
Tensor reconstruction_loss(const Tensor& x_hat, const Tensor& x);

// KL(N(mu, sigma²) || N(0, s²)) summed over coordinates, averaged over the
// batch. Exact; used whenever the flow is empty.
Tensor kl_gaussian_closed_form(const Tensor& mu, const Tensor& sigma, double prior_scale);

// Single-sample Monte-Carlo estimate (log q0 - log_det_sum) - log p(zT),
// averaged over the batch. Used whenever T > 0.
Tensor kl_flow_mc(const FlowSample& sample, const PriorDistribution& prior);

struct RegressorLossParts {
  Tensor l_sup;
  Tensor l_unsup;
  Tensor total;
};

// l_sup on real pairs, l_unsup on generated features (caller detaches them),
// combined as l_sup + lambda_r * l_unsup.
RegressorLossParts regressor_loss(const Tensor& a_hat_real, const Tensor& a,
                                  const Tensor& a_hat_gen, const Tensor& a_gen_target,
                                  const LossWeights& weights);

// MSE(R(G(z_prior, a)), a) with the regressor frozen; gradient reaches only
// the generator (and the encoder through nothing).
Tensor cyclic_loss(ModelBundle& bundle, const Tensor& z_prior, const Tensor& a);

// MSE(G(z_prior, a), x): reconstruct the real paired x from a prior draw.
Tensor prior_reconstruction_loss(ModelBundle& bundle, const Tensor& x, const Tensor& a,
                                 const Tensor& z_prior);

// KL(p_E(z|x_hat) || prior) in the closed T=0 form on the re-encoded sample;
// gradient flows into theta_G through x_hat and into theta_E through the
// encoder.
Tensor latent_consistency_loss(const ModelBundle& bundle, const Tensor& x_hat);

// total_vae + lambda_c*l_c + lambda_reg*l_reg + lambda_e*l_e
Tensor generator_total(const Tensor& total_vae, const Tensor& l_c, const Tensor& l_reg,
                       const Tensor& l_e, const LossWeights& weights);

}  // namespace zsbir
