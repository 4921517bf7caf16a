#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "zsbir/tensor.hpp"

#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "zsbir/rng.hpp"

using namespace zsbir;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = false, double scale = 1.0) {
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = rng.normal(0.0, scale);
  return Tensor::from_data(std::move(shape), std::move(data), requires_grad);
}

}  // namespace

TEST_CASE("matmul forward basics") {
  SUBCASE("identity case") {
    Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    Tensor out = matmul(Tensor::identity(2), a);
    CHECK(out.data() == std::vector<double>{1, 2, 3, 4});
  }
  SUBCASE("projector case") {
    Tensor p = Tensor::from_data({2, 2}, {1, 0, 0, 0});
    Tensor b = Tensor::from_data({2, 2}, {5, 6, 7, 8});
    CHECK(matmul(p, b).data() == std::vector<double>{5, 6, 0, 0});
  }
  SUBCASE("matmul(A, I) == A bitwise") {
    Rng rng(7);
    Tensor a = random_tensor({5, 9}, rng);
    Tensor out = matmul(a, Tensor::identity(9));
    CHECK(out.data() == a.data());
  }
  SUBCASE("inner dimension mismatch names both shapes") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({4, 2});
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2x3]"), DimensionError);
  }
}

TEST_CASE("matmul gradient matches central finite differences") {
  Rng rng(11);
  Tensor a = random_tensor({3, 4}, rng, true);
  Tensor b = random_tensor({4, 2}, rng, true);

  const double err = grad_check([&] { return sum(matmul(a, b)); }, {a, b});
  CHECK(err <= 1e-6);

  // cross-check one coordinate against the independent oracle
  a.zero_grad();
  b.zero_grad();
  sum(matmul(a, b)).backward();
  auto f = [&](const std::vector<double>& av) {
    double total = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 2; ++j) {
        for (std::size_t k = 0; k < 4; ++k) total += av[i * 4 + k] * b.data()[k * 2 + j];
      }
    }
    return total;
  };
  const auto fd = oracle::fd_gradient(f, a.data());
  for (std::size_t i = 0; i < fd.size(); ++i) {
    CHECK(a.grad()[i] == doctest::Approx(fd[i]).epsilon(1e-6));
  }
}

TEST_CASE("elementwise ops") {
  SUBCASE("sigmoid symmetry") { CHECK(sigmoid(Tensor::scalar(0.0)).value() == 0.5); }
  SUBCASE("log inverts exp") {
    CHECK(log(exp(Tensor::scalar(1.5))).value() == doctest::Approx(1.5).epsilon(1e-12));
  }
  SUBCASE("sigmoid derivative at 0 is 0.25") {
    Tensor x = Tensor::scalar(0.0);
    x.set_requires_grad(true);
    sigmoid(x).backward();
    CHECK(x.grad()[0] == doctest::Approx(0.25).epsilon(1e-12));
  }
  SUBCASE("log domain error in strict mode") {
    CHECK_THROWS_AS(log(Tensor::scalar(-1.0)), DomainError);
    CHECK_THROWS_AS(div(Tensor::scalar(1.0), Tensor::scalar(0.0)), DomainError);
  }
  SUBCASE("non-strict mode lets IEEE values through") {
    StrictNumericsGuard lax(false);
    CHECK(std::isinf(div(Tensor::scalar(1.0), Tensor::scalar(0.0)).value()));
  }
  SUBCASE("broadcast add row vector") {
    Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b = Tensor::from_data({3}, {10, 20, 30});
    CHECK(add(a, b).data() == std::vector<double>{11, 22, 33, 14, 25, 36});
  }
  SUBCASE("incompatible broadcast rejected") {
    CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({2})), DimensionError);
  }
  SUBCASE("no NaN/Inf on [-50, 50]") {
    Rng rng(3);
    std::vector<double> vals(64);
    for (auto& v : vals) v = rng.uniform(-50.0, 50.0);
    Tensor x = Tensor::from_data({64}, vals);
    for (const Tensor& t : {exp(x), sigmoid(x), softplus(x), square(x), relu(x), neg(x)}) {
      for (double v : t.data()) CHECK(std::isfinite(v));
    }
  }
}

TEST_CASE("reductions") {
  SUBCASE("sum") { CHECK(sum(Tensor::from_data({3}, {1, 2, 3})).value() == 6.0); }
  SUBCASE("mean of constant is the constant") {
    CHECK(mean(Tensor::full({4, 5}, 2.5)).value() == doctest::Approx(2.5));
  }
  SUBCASE("mean gradient is 1/n") {
    Tensor x = Tensor::from_data({4}, {1, 2, 3, 4}, true);
    mean(x).backward();
    for (double g : x.grad()) CHECK(g == doctest::Approx(0.25).epsilon(1e-12));
    const auto fd = oracle::fd_gradient(
        [](const std::vector<double>& v) {
          double s = 0.0;
          for (double x : v) s += x;
          return s / static_cast<double>(v.size());
        },
        x.data());
    for (double g : fd) CHECK(g == doctest::Approx(0.25).epsilon(1e-6));
  }
  SUBCASE("axis reduction") {
    Tensor x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(sum(x, 0).data() == std::vector<double>{5, 7, 9});
    CHECK(sum(x, 1).data() == std::vector<double>{6, 15});
    CHECK(mean(x, 1).data() == std::vector<double>{2, 5});
  }
  SUBCASE("invalid axis") {
    CHECK_THROWS_AS(sum(Tensor::zeros({2, 3}), 2), DimensionError);
  }
}

TEST_CASE("concat and split") {
  SUBCASE("1-d concat") {
    Tensor a = Tensor::from_data({2}, {1, 2});
    Tensor b = Tensor::from_data({1}, {3});
    CHECK(concat(a, b, 0).data() == std::vector<double>{1, 2, 3});
  }
  SUBCASE("concat with empty is identity") {
    Tensor x = Tensor::from_data({3}, {1, 2, 3});
    Tensor empty = Tensor::zeros({0});
    CHECK(concat(x, empty, 0).data() == x.data());
    Tensor m = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    CHECK(concat(m, Tensor::zeros({2, 0}), 1).data() == m.data());
  }
  SUBCASE("split(concat(a,b)) round trip is exact") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t rows = 1 + rng.below(4);
      const std::size_t ca = rng.below(5);
      const std::size_t cb = 1 + rng.below(5);
      Tensor a = random_tensor({rows, ca}, rng);
      Tensor b = random_tensor({rows, cb}, rng);
      auto [ra, rb] = split(concat(a, b, 1), 1, ca);
      CHECK(ra.data() == a.data());
      CHECK(rb.data() == b.data());
    }
  }
  SUBCASE("mismatched extents") {
    CHECK_THROWS_AS(concat(Tensor::zeros({2, 3}), Tensor::zeros({3, 3}), 1), DimensionError);
  }
  SUBCASE("concat gradient splits") {
    Tensor a = Tensor::from_data({2}, {1, 2}, true);
    Tensor b = Tensor::from_data({3}, {3, 4, 5}, true);
    sum(mul(concat(a, b, 0), concat(a, b, 0))).backward();
    CHECK(a.grad() == std::vector<double>{2, 4});
    CHECK(b.grad() == std::vector<double>{6, 8, 10});
  }
}

TEST_CASE("backward") {
  SUBCASE("leaf loss gets unit gradient") {
    Tensor x = Tensor::scalar(3.0);
    x.set_requires_grad(true);
    x.backward();
    CHECK(x.grad()[0] == 1.0);
  }
  SUBCASE("sum of squares") {
    Tensor x = Tensor::from_data({2}, {1, 2}, true);
    sum(square(x)).backward();
    CHECK(x.grad() == std::vector<double>{2, 4});
  }
  SUBCASE("non-scalar loss rejected") {
    Tensor x = Tensor::from_data({2}, {1, 2}, true);
    CHECK_THROWS_AS(square(x).backward(), ContractError);
  }
  SUBCASE("repeated backward accumulates") {
    Tensor x = Tensor::scalar(2.0);
    x.set_requires_grad(true);
    Tensor loss = square(x);
    loss.backward();
    loss.backward();
    CHECK(x.grad()[0] == 8.0);
  }
  SUBCASE("each graph node visited exactly once") {
    // diamond: loss = x*y + x; naive recursion would visit x twice
    Tensor x = Tensor::scalar(3.0);
    Tensor y = Tensor::scalar(4.0);
    x.set_requires_grad(true);
    y.set_requires_grad(true);
    Tensor p = mul(x, y);
    Tensor loss = add(p, x);
    loss.backward();
    CHECK(x.grad()[0] == 5.0);
    CHECK(y.grad()[0] == 3.0);
    // nodes: x, y, p, loss
    CHECK(last_backward_stats().nodes_visited == 4);
  }
  SUBCASE("composite MLP loss matches finite differences") {
    Rng rng(13);
    Tensor w1 = random_tensor({6, 4}, rng, true, 0.7);
    Tensor b1 = random_tensor({6}, rng, true, 0.1);
    Tensor w2 = random_tensor({1, 6}, rng, true, 0.7);
    Tensor x = random_tensor({3, 4}, rng);
    auto forward = [&] {
      Tensor h = sigmoid(add(matmul(x, transpose(w1)), b1));
      Tensor out = matmul(h, transpose(w2));
      return mean(square(out));
    };
    CHECK(grad_check(forward, {w1, b1, w2}) <= 1e-6);
  }
}

TEST_CASE("grad_check harness") {
  SUBCASE("linear function is exact to 1e-10") {
    Tensor x = Tensor::from_data({4}, {1, 2, 3, 4});
    const double err = grad_check(
        [](const Tensor& t) { return sum(mul_scalar(t, 3.0)); }, x);
    CHECK(err <= 1e-10);
  }
  SUBCASE("sum of sigmoid(Wx)") {
    Rng rng(17);
    Tensor w = random_tensor({5, 4}, rng, true);
    Tensor x = random_tensor({2, 4}, rng);
    const double err = grad_check([&] { return sum(sigmoid(matmul(x, transpose(w)))); }, {w});
    CHECK(err <= 1e-6);
  }
  SUBCASE("corrupted backward rule is detected") {
    // negative control: derivative deliberately wrong by 10%
    Tensor x = Tensor::from_data({3}, {0.3, -0.2, 0.9});
    const double err = grad_check(
        [](const Tensor& t) {
          return sum(custom_unary(
              t, [](double v) { return std::sin(v); },
              [](double v) { return 1.1 * std::cos(v); }, "buggy_sin"));
        },
        x);
    CHECK(err > 1e-2);
  }
}

TEST_CASE("every registered op passes grad_check at fixed seed") {
  Rng rng(23);
  Tensor a = random_tensor({3, 4}, rng, true, 0.8);
  Tensor b = random_tensor({3, 4}, rng, true, 0.8);
  Tensor row = random_tensor({4}, rng, true, 0.5);

  auto check = [&](const char* name, const std::function<Tensor()>& f,
                   std::vector<Tensor> leaves) {
    INFO(name);
    CHECK(grad_check(f, leaves) <= 1e-6);
  };

  check("add", [&] { return sum(add(a, b)); }, {a, b});
  check("add_broadcast", [&] { return sum(add(a, row)); }, {a, row});
  check("sub", [&] { return sum(square(sub(a, b))); }, {a, b});
  check("mul", [&] { return sum(mul(a, b)); }, {a, b});
  check("div", [&] { return sum(div(a, add_scalar(square(b), 0.5))); }, {a, b});
  check("exp", [&] { return sum(exp(mul_scalar(a, 0.3))); }, {a});
  check("log", [&] { return sum(log(add_scalar(square(a), 0.5))); }, {a});
  check("sigmoid", [&] { return sum(sigmoid(a)); }, {a});
  check("softplus", [&] { return sum(softplus(a)); }, {a});
  check("square", [&] { return sum(square(a)); }, {a});
  check("relu", [&] { return sum(mul(relu(a), a)); }, {a});
  check("neg", [&] { return sum(mul(neg(a), b)); }, {a, b});
  check("matmul", [&] { return sum(matmul(a, transpose(b))); }, {a, b});
  check("transpose", [&] { return sum(mul(transpose(a), transpose(b))); }, {a, b});
  check("sum_axis0", [&] { return sum(square(sum(a, 0))); }, {a});
  check("sum_axis1", [&] { return sum(square(sum(a, 1))); }, {a});
  check("mean_axis", [&] { return sum(square(mean(a, 1))); }, {a});
  check("mean_all", [&] { return mean(mul(a, b)); }, {a, b});
  check("concat", [&] { return sum(square(concat(a, b, 1))); }, {a, b});
  check("slice", [&] { return sum(square(slice(a, 1, 1, 2))); }, {a});
}

TEST_CASE("NoGradGuard suppresses graph construction") {
  Tensor x = Tensor::scalar(2.0);
  x.set_requires_grad(true);
  Tensor y;
  {
    NoGradGuard guard;
    y = square(x);
  }
  CHECK_FALSE(y.requires_grad());
  Tensor z = square(x);
  CHECK(z.requires_grad());
}

TEST_CASE("detach cuts the graph") {
  Tensor x = Tensor::scalar(2.0);
  x.set_requires_grad(true);
  Tensor y = square(x).detach();
  CHECK_FALSE(y.requires_grad());
  CHECK(y.value() == 4.0);
}
