#include "zsbir/made.hpp"

#include <cmath>

namespace zsbir {

namespace {

Tensor masked_xavier(std::size_t out_width, std::size_t in_width, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in_width + out_width));
  std::vector<double> data(out_width * in_width);
  for (auto& v : data) v = rng.uniform(-limit, limit);
  return Tensor::from_data({out_width, in_width}, std::move(data));
}

}  // namespace

MadeNetwork::MadeNetwork(const MadeConfig& config, Rng& rng, ParameterSet& params,
                         const std::string& name)
    : config_(config) {
  const std::size_t d = config.latent_dim;
  const std::size_t ctx = config.context_dim;
  if (d == 0) throw ConfigError("made: latent dimension must be positive");
  if (config.hidden_layers == 0) throw ConfigError("made: needs at least one hidden layer");

  input_degrees_.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    input_degrees_[i] = config.reverse_order ? d - i : i + 1;
  }
  // Hidden degrees cycle 1..d-1; for d == 1 they sit at 0 so no latent input
  // reaches them (outputs then depend on h and biases only).
  hidden_degrees_.resize(config.hidden_width);
  for (std::size_t k = 0; k < config.hidden_width; ++k) {
    hidden_degrees_[k] = d >= 2 ? 1 + (k % (d - 1)) : 0;
  }

  auto build = [&](std::size_t out_width, const std::vector<std::size_t>& out_deg,
                   std::size_t prev_width, const std::vector<std::size_t>& prev_deg,
                   bool strict_less, bool zero_init, const std::string& pname) {
    MaskedLayer layer;
    const std::size_t in_total = prev_width + ctx;
    layer.weight = params.add(pname + ".W", zero_init
                                                ? Tensor::zeros({out_width, in_total})
                                                : masked_xavier(out_width, in_total, rng));
    layer.bias = params.add(pname + ".b", Tensor::zeros({out_width}));
    std::vector<double> mask(out_width * in_total, 0.0);
    for (std::size_t o = 0; o < out_width; ++o) {
      for (std::size_t j = 0; j < prev_width; ++j) {
        const bool allowed =
            strict_less ? out_deg[o] > prev_deg[j] : out_deg[o] >= prev_deg[j];
        mask[o * in_total + j] = allowed ? 1.0 : 0.0;
      }
      for (std::size_t j = prev_width; j < in_total; ++j) mask[o * in_total + j] = 1.0;
    }
    layer.mask = Tensor::from_data({out_width, in_total}, std::move(mask));
    return layer;
  };

  std::size_t prev_width = d;
  const std::vector<std::size_t>* prev_deg = &input_degrees_;
  for (std::size_t l = 0; l < config.hidden_layers; ++l) {
    hidden_.push_back(build(config.hidden_width, hidden_degrees_, prev_width, *prev_deg,
                            /*strict_less=*/false, /*zero_init=*/false,
                            name + ".h" + std::to_string(l)));
    prev_width = config.hidden_width;
    prev_deg = &hidden_degrees_;
  }
  // Zero-initialized heads start the flow step at m = 0, s = 0, so a fresh
  // chain is a pure gate scaling; see the near-identity invariant.
  head_m_ = build(d, input_degrees_, prev_width, *prev_deg, /*strict_less=*/true,
                  /*zero_init=*/true, name + ".m");
  head_s_ = build(d, input_degrees_, prev_width, *prev_deg, /*strict_less=*/true,
                  /*zero_init=*/true, name + ".s");
}

Tensor MadeNetwork::layer_forward(const MaskedLayer& layer, const Tensor& x, const Tensor& h,
                                  bool apply_relu) const {
  Tensor input = config_.context_dim > 0 ? concat(x, h, 1) : x;
  Tensor pre = add(matmul(input, transpose(mul(layer.weight, layer.mask))), layer.bias);
  return apply_relu ? relu(pre) : pre;
}

std::pair<Tensor, Tensor> MadeNetwork::forward(const Tensor& v, const Tensor& h) const {
  if (v.rank() != 2 || v.extent(1) != config_.latent_dim) {
    throw DimensionError("made_forward: latent input " + shape_str(v.shape()) + " wants width " +
                         std::to_string(config_.latent_dim));
  }
  if (config_.context_dim > 0 &&
      (h.rank() != 2 || h.extent(1) != config_.context_dim || h.extent(0) != v.extent(0))) {
    throw DimensionError("made_forward: context input " + shape_str(h.shape()) + " wants " +
                         shape_str({v.extent(0), config_.context_dim}));
  }
  Tensor x = v;
  for (const auto& layer : hidden_) x = layer_forward(layer, x, h, /*apply_relu=*/true);
  Tensor m = layer_forward(head_m_, x, h, /*apply_relu=*/false);
  Tensor s = layer_forward(head_s_, x, h, /*apply_relu=*/false);
  return {m, s};
}

}  // namespace zsbir
