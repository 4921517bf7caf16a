#include "zsbir/nn.hpp"

#include <cmath>
#include <sstream>

namespace zsbir {

// ---- ParameterSet ----------------------------------------------------------

Tensor ParameterSet::add(const std::string& name, Tensor tensor) {
  for (const auto& p : params_) {
    if (p.name == name) throw ContractError("parameter registered twice: " + name);
  }
  tensor.set_requires_grad(true);
  params_.push_back({name, tensor});
  return tensor;
}

std::vector<Tensor> ParameterSet::tensors() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.tensor);
  return out;
}

Tensor ParameterSet::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.tensor;
  }
  throw ContractError("no such parameter: " + name);
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void ParameterSet::set_trainable(bool enabled) {
  for (auto& p : params_) p.tensor.set_requires_grad(enabled);
}

bool ParameterSet::all_grads_zero() const {
  for (const auto& p : params_) {
    if (!p.tensor.grad_is_zero()) return false;
  }
  return true;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

// ---- LinearLayer -----------------------------------------------------------

namespace {

Tensor xavier_uniform(std::size_t out_width, std::size_t in_width, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in_width + out_width));
  std::vector<double> data(out_width * in_width);
  for (auto& v : data) v = rng.uniform(-limit, limit);
  return Tensor::from_data({out_width, in_width}, std::move(data));
}

Tensor apply_activation(const Tensor& x, Activation activation) {
  switch (activation) {
    case Activation::identity:
      return x;
    case Activation::relu:
      return relu(x);
    case Activation::sigmoid:
      return sigmoid(x);
  }
  throw ContractError("unknown activation");
}

}  // namespace

LinearLayer::LinearLayer(std::size_t in_width, std::size_t out_width, Activation activation,
                         Rng& rng, ParameterSet& params, const std::string& name)
    : in_width_(in_width), out_width_(out_width), activation_(activation) {
  weight_ = params.add(name + ".W", xavier_uniform(out_width, in_width, rng));
  bias_ = params.add(name + ".b", Tensor::zeros({out_width}));
}

Tensor LinearLayer::forward(const Tensor& x) const {
  if (x.rank() != 2 || x.extent(1) != in_width_) {
    throw DimensionError("linear_forward: input " + shape_str(x.shape()) + " incompatible with " +
                         std::to_string(in_width_) + "-wide layer");
  }
  Tensor pre = add(matmul(x, transpose(weight_)), bias_);
  return apply_activation(pre, activation_);
}

// ---- ResidualBlock ---------------------------------------------------------

ResidualBlock::ResidualBlock(std::size_t in_width, std::size_t out_width,
                             Activation inner_activation, Rng& rng, ParameterSet& params,
                             const std::string& name, bool with_projection) {
  if (in_width != out_width && !with_projection) {
    throw ConfigError("residual block: widths " + std::to_string(in_width) + " -> " +
                      std::to_string(out_width) + " incompatible without a projection");
  }
  inner_ = LinearLayer(in_width, out_width, inner_activation, rng, params, name + ".inner");
  // The nonlinear branch starts near zero so the skip/projection path carries
  // optimization first; the branch grows only where corrections pay off.
  for (auto& w : inner_.weight().mutable_data()) w *= 0.01;
  if (in_width != out_width) {
    projection_ = LinearLayer(in_width, out_width, Activation::identity, rng, params,
                              name + ".proj");
  }
}

Tensor ResidualBlock::forward(const Tensor& x) const {
  Tensor direct = inner_.forward(x);
  if (projection_) return add(direct, projection_->forward(x));
  return add(direct, x);
}

// ---- Adam ------------------------------------------------------------------

Adam::Adam(std::vector<Tensor> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  slots_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    slots_[i].m.assign(params_[i].numel(), 0.0);
    slots_[i].v.assign(params_[i].numel(), 0.0);
  }
}

void Adam::step(double learning_rate) {
  ++step_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (p.numel() == 0) continue;
    if (!p.has_grad()) {
      throw ContractError("adam_step: missing gradient on parameter " + std::to_string(i));
    }
    const auto& g = p.grad();
    auto& data = p.mutable_data();
    auto& m = slots_[i].m;
    auto& v = slots_[i].v;
    for (std::size_t j = 0; j < data.size(); ++j) {
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g[j];
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      data[j] -= learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

// ---- LrSchedule -------------------------------------------------------------

LrSchedule::LrSchedule(std::vector<std::pair<std::size_t, double>> segments)
    : segments_(std::move(segments)) {
  if (segments_.empty()) throw ConfigError("lr schedule: no segments");
  if (segments_.front().first != 0) throw ConfigError("lr schedule: first segment must start at 0");
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (segments_[i].second < 0.0) throw ConfigError("lr schedule: rates must be non-negative");
    if (i > 0) {
      if (segments_[i].first <= segments_[i - 1].first) {
        throw ConfigError("lr schedule: thresholds must strictly increase");
      }
      if (segments_[i].second >= segments_[i - 1].second) {
        throw ConfigError("lr schedule: rates must strictly decrease");
      }
    }
  }
}

double LrSchedule::at(std::size_t epoch) const {
  double rate = segments_.front().second;
  for (const auto& [start, r] : segments_) {
    if (epoch >= start) rate = r;
  }
  return rate;
}

std::string LrSchedule::str() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (i) os << ",";
    os << segments_[i].first << ":" << segments_[i].second;
  }
  return os.str();
}

LrSchedule LrSchedule::stepwise_default() {
  return LrSchedule({{0, 0.001}, {5, 0.0005}, {15, 0.0001}, {25, 0.00001}});
}

LrSchedule LrSchedule::parse(const std::string& text) {
  std::vector<std::pair<std::size_t, double>> segments;
  std::istringstream is(text);
  std::string item;
  while (std::getline(is, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      throw ConfigError("lr schedule: expected epoch:rate, got '" + item + "'");
    }
    try {
      segments.emplace_back(std::stoul(item.substr(0, colon)), std::stod(item.substr(colon + 1)));
    } catch (const std::exception&) {
      throw ConfigError("lr schedule: malformed segment '" + item + "'");
    }
  }
  return LrSchedule(std::move(segments));
}

}  // namespace zsbir
