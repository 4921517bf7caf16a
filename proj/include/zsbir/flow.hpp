#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "zsbir/made.hpp"

namespace zsbir {

// One refinement z_t = mu_t + sigma_t ⊙ z_{t-1}, sigma_t = sigmoid(s + gate_bias).
// The gate keeps sigma in (0,1), so every step is invertible.
class IafStep {
 public:
  IafStep() = default;
  IafStep(const MadeConfig& config, double gate_bias, Rng& rng, ParameterSet& params,
          const std::string& name);

  // Returns (z_next [n x d], per-row log-det [n]).
  std::pair<Tensor, Tensor> apply(const Tensor& z_prev, const Tensor& h) const;

  // Exact inverse, coordinate-by-coordinate in degree order. Evaluation only.
  Tensor invert(const Tensor& z_next, const Tensor& h) const;

  // (mu, sigma) at z; sigma already gated.
  std::pair<Tensor, Tensor> shift_scale(const Tensor& z, const Tensor& h) const;

  // Triangular-Jacobian reduction: per-row sum of log sigma.
  static Tensor log_det_from_sigma(const Tensor& sigma);

  // Test hook bypassing the gate: apply becomes the identity with zero log-det.
  void set_force_identity(bool enabled) { force_identity_ = enabled; }
  bool force_identity() const { return force_identity_; }

  const MadeNetwork& made() const { return made_; }
  double gate_bias() const { return gate_bias_; }

 private:
  MadeNetwork made_;
  double gate_bias_ = 2.0;
  bool force_identity_ = false;
};

// A latent draw together with everything needed for its exact log-density.
struct FlowSample {
  Tensor z0;           // [n x d] initial reparameterized draw
  Tensor zT;           // [n x d] refined latent
  Tensor eps;          // [n x d] standard-normal noise behind z0
  Tensor log_det_sum;  // [n] accumulated sum of log sigma over all steps
  Tensor log_q0;       // [n] initial Gaussian log-density

  // log q(z_T | x) = log q(z_0 | x) - sum of per-step log-dets, per row.
  Tensor log_density() const;
};

class FlowChain {
 public:
  FlowChain() = default;
  // `steps` IAF steps sharing latent/context dims; degree order flips between
  // consecutive steps.
  FlowChain(std::size_t steps, const MadeConfig& config, double gate_bias, Rng& rng,
            ParameterSet& params, const std::string& name);

  FlowSample forward(const Tensor& z0, const Tensor& log_q0, const Tensor& h,
                     Tensor eps = {}) const;
  Tensor invert(const Tensor& zT, const Tensor& h) const;

  std::size_t step_count() const { return steps_.size(); }
  std::vector<IafStep>& steps() { return steps_; }
  const std::vector<IafStep>& steps() const { return steps_; }
  void set_force_identity(bool enabled);

 private:
  std::vector<IafStep> steps_;
};

// log q(z_T|x) of a sampled path; throws ContractError when the sample does
// not carry its path (density of an arbitrary point needs inversion below).
double flow_log_density(const FlowSample& sample, std::size_t row = 0);

// Exact log-density at an arbitrary point, by inverting the chain back to z0
// and applying the change of variables in reverse. Evaluation only.
double flow_log_density_at(const FlowChain& chain, const std::vector<double>& zT,
                           const std::vector<double>& mu0, const std::vector<double>& sigma0,
                           const std::vector<double>& h);

// log N(mu + sigma ⊙ eps; mu, sigma²) per row, in the reparameterized form
// -Σ log sigma - ½ Σ eps² - d/2 log(2π). eps enters as a constant.
Tensor gaussian_log_density_reparam(const Tensor& sigma, const Tensor& eps);

// log N(z; 0, scale² I) per row.
Tensor prior_log_density(const Tensor& z, double scale);

}  // namespace zsbir
