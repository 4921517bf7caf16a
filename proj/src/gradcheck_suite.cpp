#include "zsbir/gradcheck_suite.hpp"

#include <cmath>

#include "zsbir/losses.hpp"

namespace zsbir {

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = rng.normal(0.0, scale);
  return Tensor::from_data(std::move(shape), std::move(data));
}

void randomize(ParameterSet& params, Rng& rng, double scale = 0.5) {
  for (const auto& p : params.params()) {
    for (auto& v : p.tensor.node()->data) v = rng.uniform(-scale, scale);
  }
}

ModelConfig desk_dims() {
  // the acceptance dimensions: feature 16, attr 8, latent 4, T = 3
  ModelConfig cfg;
  cfg.feature_dim = 16;
  cfg.attr_dim = 8;
  cfg.latent_dim = 4;
  cfg.flow_steps = 3;
  cfg.context_dim = 8;
  cfg.made_hidden = 10;
  cfg.encoder_widths = {12};
  cfg.decoder_widths = {14, 14};
  cfg.regressor_widths = {12};
  cfg.prior_scale = 0.1;
  return cfg;
}

}  // namespace

std::vector<GradCheckEntry> run_gradcheck_suite(bool include_mutation) {
  std::vector<GradCheckEntry> entries;
  Rng rng(0x67726164ULL);

  auto record = [&entries](const std::string& name, double err, double tol) {
    entries.push_back({name, err, tol, err <= tol});
  };
  auto check = [&record](const std::string& name, const std::function<Tensor()>& forward,
                         const std::vector<Tensor>& leaves, double tol = 1e-6) {
    record(name, grad_check(forward, leaves), tol);
  };

  // ---- tensor ops -----------------------------------------------------
  {
    Tensor a = random_tensor({3, 4}, rng, 0.8);
    Tensor b = random_tensor({3, 4}, rng, 0.8);
    Tensor c = random_tensor({4, 2}, rng, 0.8);
    Tensor row = random_tensor({4}, rng, 0.5);
    a.set_requires_grad(true);
    b.set_requires_grad(true);
    c.set_requires_grad(true);
    row.set_requires_grad(true);

    check("op.matmul", [&] { return sum(matmul(a, c)); }, {a, c});
    check("op.add", [&] { return sum(square(add(a, b))); }, {a, b});
    check("op.add_broadcast", [&] { return sum(square(add(a, row))); }, {a, row});
    check("op.sub", [&] { return sum(square(sub(a, b))); }, {a, b});
    check("op.mul", [&] { return sum(mul(a, b)); }, {a, b});
    check("op.div", [&] { return sum(div(a, add_scalar(square(b), 0.5))); }, {a, b});
    check("op.exp", [&] { return sum(exp(mul_scalar(a, 0.3))); }, {a});
    check("op.log", [&] { return sum(log(add_scalar(square(a), 0.5))); }, {a});
    check("op.sigmoid", [&] { return sum(sigmoid(a)); }, {a});
    check("op.softplus", [&] { return sum(softplus(a)); }, {a});
    check("op.square", [&] { return sum(square(a)); }, {a});
    check("op.relu", [&] { return sum(mul(relu(a), a)); }, {a});
    check("op.sum", [&] { return sum(mul(a, b)); }, {a, b});
    check("op.sum_axis", [&] { return sum(square(sum(a, 1))); }, {a});
    check("op.mean", [&] { return mean(square(a)); }, {a});
    check("op.concat", [&] { return sum(square(concat(a, b, 1))); }, {a, b});
    check("op.slice", [&] { return sum(square(slice(a, 1, 1, 2))); }, {a});
    check("op.transpose", [&] { return sum(mul(transpose(a), transpose(b))); }, {a, b});
  }

  // ---- layers -----------------------------------------------------------
  {
    ParameterSet params;
    LinearLayer linear(5, 4, Activation::sigmoid, rng, params, "fc");
    ResidualBlock block(4, 4, Activation::relu, rng, params, "res");
    ResidualBlock wide(4, 6, Activation::relu, rng, params, "resp");
    Tensor x = random_tensor({3, 5}, rng);
    x.set_requires_grad(true);
    std::vector<Tensor> leaves = params.tensors();
    leaves.push_back(x);
    check("layer.linear",
          [&] { return mean(square(linear.forward(x))); }, leaves);
    check("layer.residual",
          [&] { return mean(square(block.forward(linear.forward(x)))); }, leaves);
    check("layer.residual_projection",
          [&] { return mean(square(wide.forward(block.forward(linear.forward(x))))); }, leaves);
  }

  // ---- flow ---------------------------------------------------------------
  {
    MadeConfig made_cfg;
    made_cfg.latent_dim = 4;
    made_cfg.context_dim = 3;
    made_cfg.hidden_width = 10;
    made_cfg.hidden_layers = 2;
    ParameterSet params;
    MadeNetwork made(made_cfg, rng, params, "made");
    randomize(params, rng);
    Tensor v = random_tensor({2, 4}, rng);
    Tensor h = random_tensor({2, 3}, rng);
    v.set_requires_grad(true);
    std::vector<Tensor> leaves = params.tensors();
    leaves.push_back(v);
    check("flow.made",
          [&] {
            auto [m, s] = made.forward(v, h);
            return add(mean(square(m)), mean(square(s)));
          },
          leaves);

    ParameterSet step_params;
    IafStep step(made_cfg, 2.0, rng, step_params, "step");
    randomize(step_params, rng);
    std::vector<Tensor> step_leaves = step_params.tensors();
    step_leaves.push_back(v);
    check("flow.iaf_step",
          [&] {
            auto [z, det] = step.apply(v, h);
            return add(mean(square(z)), mean(det));
          },
          step_leaves);

    ParameterSet chain_params;
    FlowChain chain(3, made_cfg, 2.0, rng, chain_params, "chain");
    randomize(chain_params, rng, 0.4);
    std::vector<Tensor> chain_leaves = chain_params.tensors();
    chain_leaves.push_back(v);
    check("flow.forward",
          [&] {
            FlowSample s = chain.forward(v, Tensor::zeros({2}), h);
            return add(mean(square(s.zT)), mean(s.log_det_sum));
          },
          chain_leaves);
  }

  // ---- losses -----------------------------------------------------------
  {
    ModelBundle bundle(desk_dims(), 0x6c6f7373ULL);
    Rng data_rng(7);
    Tensor x = random_tensor({2, 16}, data_rng);
    Tensor a = random_tensor({2, 8}, data_rng);
    Tensor eps = random_tensor({2, 4}, data_rng);
    Tensor z_prior = random_tensor({2, 4}, data_rng, 0.1);
    const LossWeights weights;

    std::vector<Tensor> theta_eg = bundle.encoder_params().tensors();
    for (auto& t : bundle.generator_params().tensors()) theta_eg.push_back(t);

    check("loss.reconstruction",
          [&] {
            FlowSample s = bundle.posterior_sample(bundle.encode(x), eps);
            return reconstruction_loss(bundle.decode(s.zT, a), x);
          },
          theta_eg, 1e-5);
    check("loss.kl_closed_form",
          [&] {
            PosteriorParams p = bundle.encode(x);
            return kl_gaussian_closed_form(p.mu0, p.sigma0, bundle.config().prior_stddev());
          },
          bundle.encoder_params().tensors(), 1e-5);
    check("loss.kl_flow_mc",
          [&] {
            FlowSample s = bundle.posterior_sample(bundle.encode(x), eps);
            return kl_flow_mc(s, bundle.prior());
          },
          bundle.encoder_params().tensors(), 1e-5);
    check("loss.regressor",
          [&] {
            auto parts = regressor_loss(bundle.regress(x), a, bundle.regress(x), a, weights);
            return parts.total;
          },
          bundle.regressor_params().tensors(), 1e-5);
    check("loss.cyclic",
          [&] { return cyclic_loss(bundle, z_prior, a); },
          bundle.generator_params().tensors(), 1e-5);
    check("loss.prior_reconstruction",
          [&] { return prior_reconstruction_loss(bundle, x, a, z_prior); },
          bundle.generator_params().tensors(), 1e-5);
    check("loss.latent_consistency",
          [&] { return latent_consistency_loss(bundle, bundle.decode(z_prior, a)); },
          theta_eg, 1e-5);

    check("objective.generator_total",
          [&] {
            FreezeGuard freeze(bundle.regressor_params());
            PosteriorParams posterior = bundle.encode(x);
            FlowSample sample = bundle.posterior_sample(posterior, eps);
            Tensor recon = reconstruction_loss(bundle.decode(sample.zT, a), x);
            Tensor kl = kl_flow_mc(sample, bundle.prior());
            Tensor total_vae = add(recon, mul_scalar(kl, weights.beta));
            Tensor x_hat_prior = bundle.decode(z_prior, a);
            Tensor l_c = reconstruction_loss(bundle.regress(x_hat_prior), a);
            Tensor l_reg = reconstruction_loss(x_hat_prior, x);
            Tensor l_e = latent_consistency_loss(bundle, x_hat_prior);
            return generator_total(total_vae, l_c, l_reg, l_e, weights);
          },
          theta_eg, 1e-5);
  }

  if (include_mutation) {
    // negative control: derivative off by 10%; the harness must flag it
    Tensor x = random_tensor({8}, rng, 0.5);
    const double err = grad_check(
        [](const Tensor& t) {
          return sum(custom_unary(
              t, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
              [](double v) {
                const double s = 1.0 / (1.0 + std::exp(-v));
                return 1.1 * s * (1.0 - s);
              },
              "mutated_sigmoid"));
        },
        x);
    record("mutation.corrupted_sigmoid_rule", err, 1e-5);
  }

  return entries;
}

bool gradcheck_all_pass(const std::vector<GradCheckEntry>& entries) {
  for (const auto& e : entries) {
    if (!e.pass) return false;
  }
  return true;
}

}  // namespace zsbir
