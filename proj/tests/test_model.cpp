#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "zsbir/model.hpp"

#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"

using namespace zsbir;

namespace {

ModelConfig desk_config() {
  ModelConfig cfg;
  cfg.feature_dim = 6;
  cfg.attr_dim = 4;
  cfg.latent_dim = 3;
  cfg.flow_steps = 2;
  cfg.context_dim = 4;
  cfg.made_hidden = 8;
  cfg.encoder_widths = {8};
  cfg.decoder_widths = {10, 10};
  cfg.regressor_widths = {8};
  cfg.prior_scale = 0.1;
  return cfg;
}

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = rng.normal(0.0, scale);
  return Tensor::from_data(std::move(shape), std::move(data));
}

void zero_params(ParameterSet& set) {
  for (const auto& p : set.params()) {
    std::fill(p.tensor.node()->data.begin(), p.tensor.node()->data.end(), 0.0);
  }
}

}  // namespace

TEST_CASE("config normalization") {
  SUBCASE("feedback-auto forces an empty latent") {
    ModelConfig cfg = desk_config();
    cfg.variant = Variant::feedback_auto;
    ModelConfig n = cfg.normalized();
    CHECK(n.latent_dim == 0);
    CHECK(n.flow_steps == 0);
    CHECK(n.context_dim == 0);
  }
  SUBCASE("no-iaf forces T = 0 but keeps the latent") {
    ModelConfig cfg = desk_config();
    cfg.variant = Variant::no_iaf;
    ModelConfig n = cfg.normalized();
    CHECK(n.flow_steps == 0);
    CHECK(n.latent_dim == 3);
    cfg.latent_dim = 0;
    CHECK_THROWS_AS(cfg.normalized(), ConfigError);
  }
  SUBCASE("prior scale must be positive") {
    ModelConfig cfg = desk_config();
    cfg.prior_scale = 0.0;
    CHECK_THROWS_AS(cfg.normalized(), ConfigError);
  }
  SUBCASE("prior scale as variance") {
    ModelConfig cfg = desk_config();
    cfg.prior_scale = 0.25;
    CHECK(cfg.prior_stddev() == 0.25);
    cfg.prior_scale_is_variance = true;
    CHECK(cfg.prior_stddev() == 0.5);
  }
  SUBCASE("variant names round trip") {
    for (Variant v : {Variant::feedback_vae, Variant::feedback_auto, Variant::no_iaf}) {
      CHECK(parse_variant(variant_name(v)) == v);
    }
    CHECK_THROWS_AS(parse_variant("bogus"), ConfigError);
  }
}

TEST_CASE("encode") {
  Rng rng(201);
  SUBCASE("zero-weight encoder gives mu 0, sigma softplus(0), h 0") {
    ModelBundle bundle(desk_config(), 1);
    zero_params(bundle.encoder_params());
    PosteriorParams p = bundle.encode(random_tensor({2, 6}, rng));
    for (double v : p.mu0.data()) CHECK(v == 0.0);
    for (double v : p.sigma0.data()) CHECK(v == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    for (double v : p.h.data()) CHECK(v == 0.0);
  }
  SUBCASE("rows are independent") {
    ModelBundle bundle(desk_config(), 2);
    // the posterior heads start at the prior; give them weights so the
    // perturbation is observable
    for (const char* head : {"encoder.mu.W", "encoder.sraw.W"}) {
      for (auto& v : bundle.encoder_params().find(head).mutable_data()) {
        v = rng.normal(0.0, 0.3);
      }
    }
    Tensor x = random_tensor({4, 6}, rng);
    PosteriorParams base = bundle.encode(x);
    Tensor x2 = x.clone();
    x2.mutable_data()[1 * 6 + 3] += 0.5;  // perturb row 1 only
    PosteriorParams perturbed = bundle.encode(x2);
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t c = 0; c < 3; ++c) {
        if (r == 1) continue;
        CHECK(base.mu0.at(r * 3 + c) == perturbed.mu0.at(r * 3 + c));
        CHECK(base.sigma0.at(r * 3 + c) == perturbed.sigma0.at(r * 3 + c));
      }
    }
    bool row1_changed = false;
    for (std::size_t c = 0; c < 3; ++c) {
      row1_changed = row1_changed || base.mu0.at(1 * 3 + c) != perturbed.mu0.at(1 * 3 + c);
    }
    CHECK(row1_changed);
  }
  SUBCASE("width mismatch") {
    ModelBundle bundle(desk_config(), 3);
    CHECK_THROWS_AS(bundle.encode(Tensor::zeros({2, 7})), DimensionError);
  }
  SUBCASE("gradients pass grad_check") {
    ModelBundle bundle(desk_config(), 4);
    Tensor x = random_tensor({3, 6}, rng);
    auto forward = [&] {
      PosteriorParams p = bundle.encode(x);
      return add(mean(square(p.mu0)), add(mean(square(p.sigma0)), mean(square(p.h))));
    };
    CHECK(grad_check(forward, bundle.encoder_params().tensors()) <= 1e-6);
  }
}

TEST_CASE("posterior sampling") {
  Rng rng(203);
  SUBCASE("zero eps hits the mean") {
    ModelConfig cfg = desk_config();
    cfg.variant = Variant::no_iaf;
    ModelBundle bundle(cfg, 5);
    PosteriorParams p = bundle.encode(random_tensor({2, 6}, rng));
    FlowSample s = bundle.posterior_sample(p, Tensor::zeros({2, 3}));
    CHECK(s.z0.data() == p.mu0.data());
    CHECK(s.zT.data() == s.z0.data());  // T = 0
    for (double v : s.log_det_sum.data()) CHECK(v == 0.0);
  }
  SUBCASE("monte carlo moments match the posterior parameters") {
    const std::size_t n = 100000;
    const std::vector<double> mu{0.5, -1.2, 0.05};
    const std::vector<double> sigma{0.8, 0.3, 1.5};
    PosteriorParams p;
    std::vector<double> mu_rep(n * 3), sigma_rep(n * 3);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < 3; ++c) {
        mu_rep[r * 3 + c] = mu[c];
        sigma_rep[r * 3 + c] = sigma[c];
      }
    }
    p.mu0 = Tensor::from_data({n, 3}, std::move(mu_rep));
    p.sigma0 = Tensor::from_data({n, 3}, std::move(sigma_rep));
    p.h = Tensor::zeros({n, 4});

    ModelConfig cfg = desk_config();
    cfg.variant = Variant::no_iaf;
    ModelBundle bundle(cfg, 6);
    NoGradGuard no_grad;
    Rng draw(99);
    FlowSample s = bundle.posterior_sample(p, draw);
    for (std::size_t c = 0; c < 3; ++c) {
      double acc = 0.0, acc2 = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        const double v = s.z0.at(r * 3 + c);
        acc += v;
        acc2 += v * v;
      }
      const double emp_mean = acc / n;
      const double emp_std = std::sqrt(acc2 / n - emp_mean * emp_mean);
      CHECK(std::abs(emp_mean - mu[c]) <= 0.02 * std::max(1.0, std::abs(mu[c])));
      CHECK(std::abs(emp_std / sigma[c] - 1.0) <= 0.02);
    }
  }
}

TEST_CASE("decode") {
  Rng rng(205);
  SUBCASE("feedback-auto decode is deterministic in the sketch") {
    ModelConfig cfg = desk_config();
    cfg.variant = Variant::feedback_auto;
    ModelBundle bundle(cfg, 7);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor out1 = bundle.decode(Tensor::zeros({3, 0}), a);
    Tensor out2 = bundle.decode(Tensor::zeros({3, 0}), a);
    CHECK(out1.data() == out2.data());
  }
  SUBCASE("outputs live strictly inside (0, 1)") {
    ModelBundle bundle(desk_config(), 8);
    Tensor out = bundle.decode(random_tensor({5, 3}, rng), random_tensor({5, 4}, rng));
    for (double v : out.data()) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
  }
  SUBCASE("gradients pass grad_check for z, a and theta_G") {
    ModelBundle bundle(desk_config(), 9);
    Tensor z = random_tensor({2, 3}, rng);
    Tensor a = random_tensor({2, 4}, rng);
    z.set_requires_grad(true);
    a.set_requires_grad(true);
    std::vector<Tensor> leaves = bundle.generator_params().tensors();
    leaves.push_back(z);
    leaves.push_back(a);
    CHECK(grad_check([&] { return mean(square(bundle.decode(z, a))); }, leaves) <= 1e-6);
  }
  SUBCASE("width mismatch") {
    ModelBundle bundle(desk_config(), 10);
    CHECK_THROWS_AS(bundle.decode(Tensor::zeros({2, 2}), Tensor::zeros({2, 4})), DimensionError);
    CHECK_THROWS_AS(bundle.decode(Tensor::zeros({2, 3}), Tensor::zeros({2, 5})), DimensionError);
  }
}

TEST_CASE("regress") {
  Rng rng(207);
  SUBCASE("zero-weight regressor returns zero") {
    ModelBundle bundle(desk_config(), 11);
    zero_params(bundle.regressor_params());
    Tensor out = bundle.regress(random_tensor({3, 6}, rng));
    for (double v : out.data()) CHECK(v == 0.0);
  }
  SUBCASE("rows are independent") {
    ModelBundle bundle(desk_config(), 12);
    Tensor x = random_tensor({3, 6}, rng);
    Tensor base = bundle.regress(x);
    Tensor x2 = x.clone();
    x2.mutable_data()[0] += 1.0;  // perturb row 0
    Tensor perturbed = bundle.regress(x2);
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK(base.at(1 * 4 + c) == perturbed.at(1 * 4 + c));
      CHECK(base.at(2 * 4 + c) == perturbed.at(2 * 4 + c));
    }
  }
  SUBCASE("gradients pass grad_check") {
    ModelBundle bundle(desk_config(), 13);
    Tensor x = random_tensor({2, 6}, rng);
    CHECK(grad_check([&] { return mean(square(bundle.regress(x))); },
                     bundle.regressor_params().tensors()) <= 1e-6);
  }
}

TEST_CASE("generate_from_prior") {
  Rng rng(209);
  SUBCASE("feedback-auto candidates are all identical") {
    ModelConfig cfg = desk_config();
    cfg.variant = Variant::feedback_auto;
    ModelBundle bundle(cfg, 14);
    std::vector<double> attr{0.1, 0.4, -0.2, 0.9};
    Tensor out = bundle.generate_from_prior(attr, 5, 77);
    for (std::size_t r = 1; r < 5; ++r) {
      for (std::size_t c = 0; c < 6; ++c) CHECK(out.at(r * 6 + c) == out.at(c));
    }
  }
  SUBCASE("fixed seed reproduces the draw") {
    ModelBundle bundle(desk_config(), 15);
    std::vector<double> attr{0.1, 0.4, -0.2, 0.9};
    CHECK(bundle.generate_from_prior(attr, 1, 5).data() ==
          bundle.generate_from_prior(attr, 1, 5).data());
    CHECK(bundle.generate_from_prior(attr, 3, 5).data() !=
          bundle.generate_from_prior(attr, 3, 6).data());
  }
  SUBCASE("candidate draws are prefix-stable in the count") {
    ModelBundle bundle(desk_config(), 16);
    std::vector<double> attr{0.1, 0.4, -0.2, 0.9};
    Tensor small = bundle.generate_from_prior(attr, 2, 5);
    Tensor big = bundle.generate_from_prior(attr, 4, 5);
    for (std::size_t i = 0; i < small.numel(); ++i) CHECK(small.at(i) == big.at(i));
  }
  SUBCASE("prior draws have the configured scale") {
    PriorDistribution prior{0.005};
    Rng draw(1234);
    NoGradGuard no_grad;
    Tensor z = prior.sample(500000, 2, draw);  // one million scalar draws
    double acc = 0.0, acc2 = 0.0;
    for (double v : z.data()) {
      acc += v;
      acc2 += v * v;
    }
    const double mean = acc / static_cast<double>(z.numel());
    const double stddev = std::sqrt(acc2 / static_cast<double>(z.numel()) - mean * mean);
    CHECK(std::abs(stddev / 0.005 - 1.0) <= 0.01);
  }
}
