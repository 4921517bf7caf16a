#include "zsbir/flow.hpp"

#include <cmath>

namespace zsbir {

namespace {
constexpr double kLogTwoPi = 1.8378770664093454835606594728112;
}

// ---- IafStep ----------------------------------------------------------------

IafStep::IafStep(const MadeConfig& config, double gate_bias, Rng& rng, ParameterSet& params,
                 const std::string& name)
    : made_(config, rng, params, name), gate_bias_(gate_bias) {}

std::pair<Tensor, Tensor> IafStep::shift_scale(const Tensor& z, const Tensor& h) const {
  auto [m, s] = made_.forward(z, h);
  Tensor sigma = sigmoid(add_scalar(s, gate_bias_));
  return {m, sigma};
}

Tensor IafStep::log_det_from_sigma(const Tensor& sigma) { return sum(log(sigma), 1); }

std::pair<Tensor, Tensor> IafStep::apply(const Tensor& z_prev, const Tensor& h) const {
  if (force_identity_) {
    return {z_prev, Tensor::zeros({z_prev.extent(0)})};
  }
  auto [mu, sigma] = shift_scale(z_prev, h);
  Tensor z_next = add(mu, mul(sigma, z_prev));
  return {z_next, log_det_from_sigma(sigma)};
}

Tensor IafStep::invert(const Tensor& z_next, const Tensor& h) const {
  if (force_identity_) return z_next;
  NoGradGuard no_grad;
  const std::size_t rows = z_next.extent(0);
  const std::size_t d = z_next.extent(1);
  const auto& degrees = made_.degrees();
  Tensor z_prev = z_next.detach().clone();
  // Coordinate of degree k depends only on coordinates of lower degree, which
  // are already final when we reach it.
  for (std::size_t k = 1; k <= d; ++k) {
    auto [mu, sigma] = shift_scale(z_prev, h);
    for (std::size_t i = 0; i < d; ++i) {
      if (degrees[i] != k) continue;
      auto& buf = z_prev.mutable_data();
      for (std::size_t r = 0; r < rows; ++r) {
        buf[r * d + i] = (z_next.at(r * d + i) - mu.at(r * d + i)) / sigma.at(r * d + i);
      }
    }
  }
  return z_prev;
}

// ---- FlowSample ---------------------------------------------------------------

Tensor FlowSample::log_density() const {
  if (!log_q0.defined() || !log_det_sum.defined()) {
    throw ContractError("flow_log_density: sample does not carry its path");
  }
  return sub(log_q0, log_det_sum);
}

// ---- FlowChain ---------------------------------------------------------------

FlowChain::FlowChain(std::size_t steps, const MadeConfig& config, double gate_bias, Rng& rng,
                     ParameterSet& params, const std::string& name) {
  for (std::size_t t = 0; t < steps; ++t) {
    MadeConfig step_config = config;
    step_config.reverse_order = (t % 2) == 1;
    steps_.emplace_back(step_config, gate_bias, rng, params, name + ".step" + std::to_string(t));
  }
}

FlowSample FlowChain::forward(const Tensor& z0, const Tensor& log_q0, const Tensor& h,
                              Tensor eps) const {
  FlowSample sample;
  sample.z0 = z0;
  sample.eps = std::move(eps);
  sample.log_q0 = log_q0;
  Tensor z = z0;
  Tensor log_det = Tensor::zeros({z0.extent(0)});
  for (const auto& step : steps_) {
    auto [z_next, step_det] = step.apply(z, h);
    z = z_next;
    log_det = add(log_det, step_det);
  }
  sample.zT = z;
  sample.log_det_sum = log_det;
  return sample;
}

Tensor FlowChain::invert(const Tensor& zT, const Tensor& h) const {
  Tensor z = zT;
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) z = it->invert(z, h);
  return z;
}

void FlowChain::set_force_identity(bool enabled) {
  for (auto& step : steps_) step.set_force_identity(enabled);
}

// ---- densities ----------------------------------------------------------------

double flow_log_density(const FlowSample& sample, std::size_t row) {
  Tensor density = sample.log_density();
  return density.at(row);
}

double flow_log_density_at(const FlowChain& chain, const std::vector<double>& zT,
                           const std::vector<double>& mu0, const std::vector<double>& sigma0,
                           const std::vector<double>& h) {
  NoGradGuard no_grad;
  const std::size_t d = zT.size();
  Tensor h_row = Tensor::from_data({1, h.size()}, h);
  Tensor z = Tensor::from_data({1, d}, zT);

  double log_det_total = 0.0;
  const auto& steps = chain.steps();
  for (auto it = steps.rbegin(); it != steps.rend(); ++it) {
    Tensor z_prev = it->invert(z, h_row);
    if (!it->force_identity()) {
      auto [mu, sigma] = it->shift_scale(z_prev, h_row);
      log_det_total += IafStep::log_det_from_sigma(sigma).at(0);
    }
    z = z_prev;
  }

  double log_q0 = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double t = (z.at(i) - mu0[i]) / sigma0[i];
    log_q0 += -0.5 * kLogTwoPi - std::log(sigma0[i]) - 0.5 * t * t;
  }
  return log_q0 - log_det_total;
}

Tensor gaussian_log_density_reparam(const Tensor& sigma, const Tensor& eps) {
  if (sigma.shape() != eps.shape()) {
    throw DimensionError("gaussian_log_density: sigma " + shape_str(sigma.shape()) +
                         " vs eps " + shape_str(eps.shape()));
  }
  const double dims = static_cast<double>(sigma.extent(1));
  Tensor eps_term = mul_scalar(sum(square(eps), 1), 0.5);
  Tensor sigma_term = sum(log(sigma), 1);
  return add_scalar(neg(add(sigma_term, eps_term)), -0.5 * dims * kLogTwoPi);
}

Tensor prior_log_density(const Tensor& z, double scale) {
  if (scale <= 0.0) throw DomainError("prior_log_density: scale must be positive");
  const double dims = static_cast<double>(z.extent(1));
  Tensor quad = mul_scalar(sum(square(z), 1), 0.5 / (scale * scale));
  return add_scalar(neg(quad), -dims * std::log(scale) - 0.5 * dims * kLogTwoPi);
}

}  // namespace zsbir
