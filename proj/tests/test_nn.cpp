#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "zsbir/nn.hpp"

#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"

using namespace zsbir;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = rng.normal(0.0, scale);
  return Tensor::from_data(std::move(shape), std::move(data));
}

}  // namespace

TEST_CASE("linear layer forward") {
  Rng rng(1);
  ParameterSet params;
  SUBCASE("identity weights pass input through") {
    LinearLayer layer(3, 3, Activation::identity, rng, params, "fc");
    layer.weight().mutable_data() = Tensor::identity(3).data();
    Tensor x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(layer.forward(x).data() == x.data());
  }
  SUBCASE("zero weights with sigmoid give 0.5") {
    LinearLayer layer(4, 2, Activation::sigmoid, rng, params, "fc");
    std::fill(layer.weight().mutable_data().begin(), layer.weight().mutable_data().end(), 0.0);
    Tensor out = layer.forward(random_tensor({3, 4}, rng));
    for (double v : out.data()) CHECK(v == 0.5);
  }
  SUBCASE("width mismatch") {
    LinearLayer layer(4, 2, Activation::identity, rng, params, "fc");
    CHECK_THROWS_AS(layer.forward(Tensor::zeros({3, 5})), DimensionError);
  }
  SUBCASE("double registration rejected") {
    LinearLayer layer(2, 2, Activation::identity, rng, params, "fc");
    CHECK_THROWS_AS(LinearLayer(2, 2, Activation::identity, rng, params, "fc"), ContractError);
  }
}

TEST_CASE("linear layer gradients pass grad_check") {
  Rng rng(2);
  ParameterSet params;
  LinearLayer layer(4, 3, Activation::sigmoid, rng, params, "fc");
  Tensor x = random_tensor({5, 4}, rng);
  x.set_requires_grad(true);
  std::vector<Tensor> leaves = params.tensors();
  leaves.push_back(x);
  const double err = grad_check([&] { return mean(square(layer.forward(x))); }, leaves);
  CHECK(err <= 1e-6);
}

TEST_CASE("residual block") {
  Rng rng(3);
  SUBCASE("zero inner weights give exact identity") {
    ParameterSet params;
    ResidualBlock block(4, 4, Activation::relu, rng, params, "res");
    auto& w = params.find("res.inner.W").mutable_data();
    std::fill(w.begin(), w.end(), 0.0);
    Tensor x = random_tensor({3, 4}, rng);
    CHECK(block.forward(x).data() == x.data());
  }
  SUBCASE("projection used when widths differ") {
    ParameterSet params;
    ResidualBlock block(3, 5, Activation::relu, rng, params, "res");
    CHECK(block.has_projection());
    CHECK(block.forward(Tensor::zeros({2, 3})).shape() == Shape{2, 5});
  }
  SUBCASE("width mismatch without projection is a configuration error") {
    ParameterSet params;
    CHECK_THROWS_AS(ResidualBlock(3, 5, Activation::relu, rng, params, "res", false),
                    ConfigError);
  }
  SUBCASE("skip path carries the identity term") {
    ParameterSet params;
    ResidualBlock block(4, 4, Activation::relu, rng, params, "res");
    Tensor x = random_tensor({2, 4}, rng);
    x.set_requires_grad(true);
    std::vector<Tensor> leaves = params.tensors();
    leaves.push_back(x);
    CHECK(grad_check([&] { return sum(block.forward(x)); }, leaves) <= 1e-6);

    // with inner weights zeroed, d sum(out)/dx is exactly all-ones
    auto& w = params.find("res.inner.W").mutable_data();
    std::fill(w.begin(), w.end(), 0.0);
    x.zero_grad();
    sum(block.forward(x)).backward();
    for (double g : x.grad()) CHECK(g == 1.0);
  }
  SUBCASE("5-block stack keeps input-gradient norm near the single block's") {
    // decoder depth used by the presets; documents skip-connection gradient flow
    auto input_grad_norm = [](std::size_t depth) {
      Rng fixed(42);
      ParameterSet params;
      std::vector<ResidualBlock> blocks;
      for (std::size_t i = 0; i < depth; ++i) {
        blocks.emplace_back(16, 16, Activation::relu, fixed, params, "res" + std::to_string(i));
      }
      Tensor x = random_tensor(Shape{8, 16}, fixed);
      x.set_requires_grad(true);
      Tensor h = x;
      for (const auto& b : blocks) h = b.forward(h);
      sum(h).backward();
      double acc = 0.0;
      for (double g : x.grad()) acc += g * g;
      return std::sqrt(acc);
    };
    const double single_norm = input_grad_norm(1);
    const double stack_norm = input_grad_norm(5);
    CHECK(stack_norm >= 0.1 * single_norm);
    CHECK(stack_norm <= 10.0 * single_norm);
  }
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters and moments unchanged") {
    Tensor p = Tensor::from_data({3}, {1.0, -2.0, 0.5}, true);
    const auto before = p.data();
    Adam opt({p});
    p.zero_grad();
    opt.step(0.001);
    CHECK(p.data() == before);
    CHECK(opt.moment1(0) == std::vector<double>{0, 0, 0});
    CHECK(opt.moment2(0) == std::vector<double>{0, 0, 0});
    CHECK(opt.step_count() == 1);
  }
  SUBCASE("first step with constant gradient moves by about the learning rate") {
    // bias correction at t=1 gives m_hat/sqrt(v_hat) = sign(g)
    const double g = 3.0, lr = 0.001;
    Tensor p = Tensor::from_data({1}, {0.7}, true);
    Adam opt({p});
    p.zero_grad();
    p.node()->grad[0] = g;
    opt.step(lr);
    const double delta = p.data()[0] - 0.7;
    const double expected = -lr * g / (std::abs(g) + opt.config().epsilon);
    CHECK(delta == doctest::Approx(expected).epsilon(1e-15));
    CHECK(std::abs(delta) == doctest::Approx(lr).epsilon(1e-8));
  }
  SUBCASE("identical gradient streams give bitwise-identical trajectories") {
    Tensor p1 = Tensor::from_data({2}, {0.1, -0.4}, true);
    Tensor p2 = Tensor::from_data({2}, {0.1, -0.4}, true);
    Adam o1({p1}), o2({p2});
    Rng rng(9);
    for (int t = 0; t < 50; ++t) {
      const double g0 = rng.normal(), g1 = rng.normal();
      p1.zero_grad();
      p2.zero_grad();
      p1.node()->grad = {g0, g1};
      p2.node()->grad = {g0, g1};
      o1.step(0.01);
      o2.step(0.01);
      CHECK(p1.data() == p2.data());
    }
  }
  SUBCASE("zero learning rate is a parameter no-op") {
    Tensor p = Tensor::from_data({2}, {1.0, 2.0}, true);
    Adam opt({p});
    p.zero_grad();
    p.node()->grad = {5.0, -3.0};
    opt.step(0.0);
    CHECK(p.data() == std::vector<double>{1.0, 2.0});
  }
  SUBCASE("missing gradient is a contract error") {
    Tensor p = Tensor::from_data({2}, {1.0, 2.0}, true);
    Adam opt({p});
    CHECK_THROWS_AS(opt.step(0.001), ContractError);
  }
}

TEST_CASE("lr schedule") {
  LrSchedule schedule = LrSchedule::stepwise_default();
  SUBCASE("segment lookup") {
    CHECK(schedule.at(0) == 0.001);
    CHECK(schedule.at(3) == 0.001);
    CHECK(schedule.at(4) == 0.001);
    CHECK(schedule.at(5) == 0.0005);
    CHECK(schedule.at(10) == 0.0005);
    CHECK(schedule.at(15) == 0.0001);
    CHECK(schedule.at(25) == 0.00001);
    CHECK(schedule.at(1000) == 0.00001);
  }
  SUBCASE("validation") {
    CHECK_THROWS_AS(LrSchedule({{1, 0.1}}), ConfigError);
    CHECK_THROWS_AS(LrSchedule({{0, 0.1}, {5, 0.2}}), ConfigError);
    CHECK_THROWS_AS(LrSchedule({{0, 0.1}, {0, 0.05}}), ConfigError);
    CHECK_THROWS_AS(LrSchedule({}), ConfigError);
  }
  SUBCASE("parse round trip") {
    LrSchedule parsed = LrSchedule::parse(schedule.str());
    CHECK(parsed.segments() == schedule.segments());
    CHECK_THROWS_AS(LrSchedule::parse("nonsense"), ConfigError);
  }
}

TEST_CASE("xavier init keeps pre-activation variance near one") {
  Rng rng(31);
  const std::vector<std::pair<std::size_t, std::size_t>> widths = {
      {32, 128}, {128, 128}, {128, 192}, {40, 192}, {192, 32}};
  for (const auto& [in_w, out_w] : widths) {
    ParameterSet params;
    LinearLayer layer(in_w, out_w, Activation::identity, rng, params, "fc");
    const std::size_t samples = 10000 / out_w + 1;
    Tensor x = random_tensor({samples * 4, in_w}, rng);  // unit-variance input
    Tensor pre = layer.forward(x);
    double acc = 0.0;
    for (double v : pre.data()) acc += v * v;
    const double std_dev = std::sqrt(acc / static_cast<double>(pre.numel()));
    INFO(in_w, " -> ", out_w, " std ", std_dev);
    CHECK(std_dev >= 0.5);
    CHECK(std_dev <= 2.0);
  }
}
