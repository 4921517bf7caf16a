#include "zsbir/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_set>

#ifdef ZSBIR_USE_BLAS
#include <cblas.h>
#endif

namespace zsbir {

namespace {

thread_local bool g_grad_enabled = true;
bool g_strict_default = true;
thread_local bool g_strict = g_strict_default;
thread_local BackwardStats g_last_backward;

#ifdef ZSBIR_USE_BLAS
// Multi-threaded GEMM reorders reductions; single thread keeps training
// bitwise-reproducible.
const bool g_blas_init = [] {
  openblas_set_num_threads(1);
  return true;
}();
#endif

std::string two_shapes(const Shape& a, const Shape& b) {
  return shape_str(a) + " vs " + shape_str(b);
}

void check_finite(const std::vector<double>& data, const char* op) {
  if (!g_strict) return;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw NumericError(std::string(op) + " produced non-finite value at flat index " +
                         std::to_string(i));
    }
  }
}

detail::NodePtr make_node(Shape shape, std::vector<double> data, const char* op) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  return node;
}

// Wires parents/backward only when gradients can flow; otherwise the result
// is a plain constant and the inputs can be freed early.
Tensor finish(detail::NodePtr out, std::vector<detail::NodePtr> parents,
              std::function<void(detail::Node&)> backward) {
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) needs = needs || p->requires_grad;
  }
  if (needs) {
    out->requires_grad = true;
    out->parents = std::move(parents);
    out->backward = std::move(backward);
  }
  return Tensor(std::move(out));
}

// ---- matmul kernel ---------------------------------------------------------

// c[m x n] (+)= op(a) * op(b); beta 0 overwrites, 1 accumulates.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, const double* b, double beta, double* c) {
#ifdef ZSBIR_USE_BLAS
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
              static_cast<int>(k), 1.0, a, static_cast<int>(trans_a ? m : k), b,
              static_cast<int>(trans_b ? k : n), beta, c, static_cast<int>(n));
#else
  if (beta == 0.0) std::fill(c, c + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = trans_a ? a[p * m + i] : a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = trans_b ? nullptr : b + p * n;
      double* crow = c + i * n;
      if (trans_b) {
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * b[j * k + p];
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
#endif
}

// ---- broadcasting ----------------------------------------------------------

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
    const std::size_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1) {
      throw DimensionError(std::string(op) + ": shapes not broadcastable: " + two_shapes(a, b));
    }
    out[rank - 1 - i] = std::max(da, db);
  }
  return out;
}

// Per-result-dim element strides; 0 where the operand is broadcast.
std::vector<std::size_t> broadcast_strides(const Shape& operand, const Shape& result) {
  std::vector<std::size_t> strides(result.size(), 0);
  std::size_t stride = 1;
  for (std::size_t i = 0; i < operand.size(); ++i) {
    const std::size_t dim = operand.size() - 1 - i;
    const std::size_t rdim = result.size() - 1 - i;
    strides[rdim] = operand[dim] == 1 ? 0 : stride;
    stride *= operand[dim];
  }
  return strides;
}

// Calls fn(result_index, offset_a, offset_b) over the result space.
template <typename Fn>
void for_each_pair(const Shape& result, const std::vector<std::size_t>& sa,
                   const std::vector<std::size_t>& sb, Fn&& fn) {
  const std::size_t total = shape_numel(result);
  const std::size_t rank = result.size();
  if (rank == 0) {
    if (total > 0) fn(std::size_t{0}, std::size_t{0}, std::size_t{0});
    return;
  }
  std::vector<std::size_t> idx(rank, 0);
  std::size_t offa = 0, offb = 0;
  for (std::size_t flat = 0; flat < total; ++flat) {
    fn(flat, offa, offb);
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      offa += sa[d];
      offb += sb[d];
      if (idx[d] < result[d]) break;
      offa -= sa[d] * result[d];
      offb -= sb[d] * result[d];
      idx[d] = 0;
    }
  }
}

using BinaryFwd = double (*)(double, double);
// Local derivative given (a, b, out).
using BinaryGrad = double (*)(double, double, double);

Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, BinaryFwd fwd,
                 BinaryGrad dfda, BinaryGrad dfdb) {
  auto an = a.node();
  auto bn = b.node();
  if (!an || !bn) throw ContractError(std::string(name) + ": undefined tensor operand");
  const Shape out_shape = broadcast_shape(an->shape, bn->shape, name);
  const auto sa = broadcast_strides(an->shape, out_shape);
  const auto sb = broadcast_strides(bn->shape, out_shape);

  std::vector<double> out(shape_numel(out_shape));
  if (an->shape == bn->shape) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(an->data[i], bn->data[i]);
  } else {
    for_each_pair(out_shape, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
      out[i] = fwd(an->data[ia], bn->data[ib]);
    });
  }
  check_finite(out, name);

  auto result = make_node(out_shape, std::move(out), name);
  // Trainability is sampled when the op is recorded, so a freeze that is
  // lifted before backward still holds for this graph. Accumulating straight
  // into operand offsets realizes the broadcast sum-reduction without
  // temporaries.
  const bool ga = an->requires_grad;
  const bool gb = bn->requires_grad;
  auto backward = [an, bn, sa, sb, dfda, dfdb, ga, gb](detail::Node& self) {
    if (ga) an->ensure_grad();
    if (gb) bn->ensure_grad();
    for_each_pair(self.shape, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
      const double g = self.grad[i];
      if (g == 0.0) return;
      if (ga) an->grad[ia] += g * dfda(an->data[ia], bn->data[ib], self.data[i]);
      if (gb) bn->grad[ib] += g * dfdb(an->data[ia], bn->data[ib], self.data[i]);
    });
  };
  return finish(std::move(result), {an, bn}, std::move(backward));
}

using UnaryFwd = double (*)(double);
// Local derivative given (x, out).
using UnaryGrad = double (*)(double, double);

Tensor unary_op(const Tensor& a, const char* name, UnaryFwd fwd, UnaryGrad dfdx) {
  auto an = a.node();
  if (!an) throw ContractError(std::string(name) + ": undefined tensor operand");
  std::vector<double> out(an->data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(an->data[i]);
  check_finite(out, name);
  auto result = make_node(an->shape, std::move(out), name);
  const bool ga = an->requires_grad;
  auto backward = [an, dfdx, ga](detail::Node& self) {
    if (!ga) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < self.data.size(); ++i) {
      an->grad[i] += self.grad[i] * dfdx(an->data[i], self.data[i]);
    }
  };
  return finish(std::move(result), {an}, std::move(backward));
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  if (x > 30.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

// Collapses `shape` around `axis` into [outer, extent, inner].
struct AxisView {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for shape " + shape_str(shape));
  }
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

}  // namespace

// ---- shape helpers ---------------------------------------------------------

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

namespace detail {
bool grad_enabled() { return g_grad_enabled; }
bool strict_numerics() { return g_strict; }
}  // namespace detail

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

StrictNumericsGuard::StrictNumericsGuard(bool enabled) : prev_(g_strict) { g_strict = enabled; }
StrictNumericsGuard::~StrictNumericsGuard() { g_strict = prev_; }

void set_strict_numerics_default(bool enabled) {
  g_strict_default = enabled;
  g_strict = enabled;
}

BackwardStats last_backward_stats() { return g_last_backward; }

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  auto node = make_node(std::move(shape), std::vector<double>(n, 0.0), "leaf");
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = shape_numel(shape);
  auto node = make_node(std::move(shape), std::vector<double>(n, value), "leaf");
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("from_data: shape " + shape_str(shape) + " wants " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  auto node = make_node(std::move(shape), std::move(values), "leaf");
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from_data({}, {value}); }

Tensor Tensor::identity(std::size_t n) {
  std::vector<double> data(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) data[i * n + i] = 1.0;
  return from_data({n, n}, std::move(data));
}

const Shape& Tensor::shape() const {
  if (!node_) throw ContractError("shape(): undefined tensor");
  return node_->shape;
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::size_t Tensor::extent(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("extent: axis " + std::to_string(axis) + " out of range for shape " +
                         shape_str(s));
  }
  return s[axis];
}

const std::vector<double>& Tensor::data() const {
  if (!node_) throw ContractError("data(): undefined tensor");
  return node_->data;
}

std::vector<double>& Tensor::mutable_data() {
  if (!node_) throw ContractError("mutable_data(): undefined tensor");
  return node_->data;
}

double Tensor::value() const {
  if (numel() != 1) {
    throw ContractError("value(): tensor of shape " + shape_str(shape()) + " is not a scalar");
  }
  return node_->data[0];
}

double Tensor::at(std::size_t flat_index) const {
  const auto& d = data();
  if (flat_index >= d.size()) {
    throw ContractError("at(): index " + std::to_string(flat_index) + " out of range");
  }
  return d[flat_index];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool enabled) {
  if (!node_) throw ContractError("set_requires_grad(): undefined tensor");
  node_->requires_grad = enabled;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw ContractError("grad(): no gradient recorded");
  return node_->grad;
}

bool Tensor::grad_is_zero() const {
  if (!node_ || node_->grad.empty()) return true;
  for (double g : node_->grad) {
    if (g != 0.0) return false;
  }
  return true;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.assign(node_->data.size(), 0.0);
}

Tensor Tensor::detach() const {
  if (!node_) return Tensor();
  auto node = make_node(node_->shape, node_->data, "leaf");
  return Tensor(std::move(node));
}

Tensor Tensor::clone() const {
  if (!node_) return Tensor();
  auto node = make_node(node_->shape, node_->data, "leaf");
  node->requires_grad = node_->requires_grad;
  return Tensor(std::move(node));
}

void Tensor::backward() const {
  if (!node_) throw ContractError("backward(): undefined tensor");
  if (numel() != 1) {
    throw ContractError("backward(): loss must be scalar, got shape " + shape_str(shape()));
  }
  // Reverse DFS postorder over parent edges = topological order; each node is
  // processed exactly once, after every consumer has deposited its gradient.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  if (node_->requires_grad || node_->backward) {
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
  }
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && !seen.count(parent)) {
        seen.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Intermediate grads are scratch for this traversal; only leaves accumulate
  // across repeated backward() calls.
  for (detail::Node* n : order) {
    if (n->backward) n->grad.assign(n->data.size(), 0.0);
  }
  node_->ensure_grad();
  node_->grad[0] += 1.0;

  g_last_backward.nodes_visited = order.size();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward) {
      node->ensure_grad();
      node->backward(*node);
    }
  }
}

// ---- matmul / transpose ----------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  auto an = a.node();
  auto bn = b.node();
  if (!an || !bn) throw ContractError("matmul: undefined tensor operand");
  if (an->shape.size() != 2 || bn->shape.size() != 2) {
    throw DimensionError("matmul: expects rank-2 operands, got " +
                         two_shapes(an->shape, bn->shape));
  }
  const std::size_t m = an->shape[0], k = an->shape[1], n = bn->shape[1];
  if (bn->shape[0] != k) {
    throw DimensionError("matmul: inner dimensions disagree: " + two_shapes(an->shape, bn->shape));
  }
  std::vector<double> out(m * n, 0.0);
  if (m && n && k) gemm(false, false, m, n, k, an->data.data(), bn->data.data(), 0.0, out.data());
  check_finite(out, "matmul");
  auto result = make_node({m, n}, std::move(out), "matmul");
  const bool ga = an->requires_grad;
  const bool gb = bn->requires_grad;
  auto backward = [an, bn, m, k, n, ga, gb](detail::Node& self) {
    if (m == 0 || n == 0 || k == 0) return;
    if (ga) {
      an->ensure_grad();  // dA += G * B^T
      gemm(false, true, m, k, n, self.grad.data(), bn->data.data(), 1.0, an->grad.data());
    }
    if (gb) {
      bn->ensure_grad();  // dB += A^T * G
      gemm(true, false, k, n, m, an->data.data(), self.grad.data(), 1.0, bn->grad.data());
    }
  };
  return finish(std::move(result), {an, bn}, std::move(backward));
}

Tensor transpose(const Tensor& a) {
  auto an = a.node();
  if (!an) throw ContractError("transpose: undefined tensor operand");
  if (an->shape.size() != 2) {
    throw DimensionError("transpose: expects rank-2 operand, got " + shape_str(an->shape));
  }
  const std::size_t m = an->shape[0], n = an->shape[1];
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = an->data[i * n + j];
  }
  auto result = make_node({n, m}, std::move(out), "transpose");
  const bool ga = an->requires_grad;
  auto backward = [an, m, n, ga](detail::Node& self) {
    if (!ga) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) an->grad[i * n + j] += self.grad[j * m + i];
    }
  };
  return finish(std::move(result), {an}, std::move(backward));
}

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  if (detail::strict_numerics()) {
    for (double v : b.data()) {
      if (v == 0.0) throw DomainError("div: zero divisor");
    }
  }
  return binary_op(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double out) { return -out / y; });
}

Tensor add_scalar(const Tensor& a, double c) {
  Tensor cs = Tensor::scalar(c);
  return binary_op(
      a, cs, "add_scalar", [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double c) {
  Tensor cs = Tensor::scalar(c);
  return binary_op(
      a, cs, "mul_scalar", [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Tensor exp(const Tensor& a) {
  return unary_op(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double out) { return out; });
}

Tensor log(const Tensor& a) {
  if (detail::strict_numerics()) {
    for (double v : a.data()) {
      if (v <= 0.0) throw DomainError("log: non-positive input " + std::to_string(v));
    }
  }
  return unary_op(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(a, "sigmoid", &stable_sigmoid,
                  [](double, double out) { return out * (1.0 - out); });
}

Tensor softplus(const Tensor& a) {
  return unary_op(a, "softplus", &stable_softplus,
                  [](double x, double) { return stable_sigmoid(x); });
}

Tensor square(const Tensor& a) {
  return unary_op(
      a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor relu(const Tensor& a) {
  return unary_op(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor neg(const Tensor& a) {
  return unary_op(
      a, "neg", [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor custom_unary(const Tensor& a, double (*fn)(double), double (*dfn)(double),
                    const char* name) {
  auto an = a.node();
  if (!an) throw ContractError(std::string(name) + ": undefined tensor operand");
  std::vector<double> out(an->data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(an->data[i]);
  check_finite(out, name);
  auto result = make_node(an->shape, std::move(out), name);
  const bool ga = an->requires_grad;
  auto backward = [an, dfn, ga](detail::Node& self) {
    if (!ga) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < self.data.size(); ++i) {
      an->grad[i] += self.grad[i] * dfn(an->data[i]);
    }
  };
  return finish(std::move(result), {an}, std::move(backward));
}

// ---- reductions ------------------------------------------------------------

Tensor sum(const Tensor& a) {
  auto an = a.node();
  if (!an) throw ContractError("sum: undefined tensor operand");
  double total = 0.0;
  for (double v : an->data) total += v;
  auto result = make_node({}, {total}, "sum");
  const bool ga = an->requires_grad;
  auto backward = [an, ga](detail::Node& self) {
    if (!ga) return;
    an->ensure_grad();
    const double g = self.grad[0];
    for (auto& v : an->grad) v += g;
  };
  return finish(std::move(result), {an}, std::move(backward));
}

Tensor sum(const Tensor& a, std::size_t axis) {
  auto an = a.node();
  if (!an) throw ContractError("sum: undefined tensor operand");
  const AxisView v = axis_view(an->shape, axis, "sum");
  Shape out_shape = an->shape;
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<double> out(v.outer * v.inner, 0.0);
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t e = 0; e < v.extent; ++e) {
      const double* src = an->data.data() + (o * v.extent + e) * v.inner;
      double* dst = out.data() + o * v.inner;
      for (std::size_t i = 0; i < v.inner; ++i) dst[i] += src[i];
    }
  }
  auto result = make_node(std::move(out_shape), std::move(out), "sum_axis");
  const bool ga = an->requires_grad;
  auto backward = [an, v, ga](detail::Node& self) {
    if (!ga) return;
    an->ensure_grad();
    for (std::size_t o = 0; o < v.outer; ++o) {
      const double* g = self.grad.data() + o * v.inner;
      for (std::size_t e = 0; e < v.extent; ++e) {
        double* dst = an->grad.data() + (o * v.extent + e) * v.inner;
        for (std::size_t i = 0; i < v.inner; ++i) dst[i] += g[i];
      }
    }
  };
  return finish(std::move(result), {an}, std::move(backward));
}

Tensor mean(const Tensor& a) {
  const std::size_t n = a.numel();
  if (n == 0) throw DomainError("mean: empty tensor");
  return mul_scalar(sum(a), 1.0 / static_cast<double>(n));
}

Tensor mean(const Tensor& a, std::size_t axis) {
  const std::size_t n = a.extent(axis);
  if (n == 0) throw DomainError("mean: empty axis");
  return mul_scalar(sum(a, axis), 1.0 / static_cast<double>(n));
}

// ---- concat / slice --------------------------------------------------------

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
  auto an = a.node();
  auto bn = b.node();
  if (!an || !bn) throw ContractError("concat: undefined tensor operand");
  const Shape& sa = an->shape;
  const Shape& sb = bn->shape;
  if (sa.size() != sb.size()) {
    throw DimensionError("concat: rank mismatch: " + two_shapes(sa, sb));
  }
  for (std::size_t i = 0; i < sa.size(); ++i) {
    if (i != axis && sa[i] != sb[i]) {
      throw DimensionError("concat: non-concat extents differ at axis " + std::to_string(i) +
                           ": " + two_shapes(sa, sb));
    }
  }
  const AxisView va = axis_view(sa, axis, "concat");
  const AxisView vb = axis_view(sb, axis, "concat");
  Shape out_shape = sa;
  out_shape[axis] = sa[axis] + sb[axis];
  std::vector<double> out(shape_numel(out_shape));
  const std::size_t block_a = va.extent * va.inner;
  const std::size_t block_b = vb.extent * vb.inner;
  for (std::size_t o = 0; o < va.outer; ++o) {
    double* dst = out.data() + o * (block_a + block_b);
    std::memcpy(dst, an->data.data() + o * block_a, block_a * sizeof(double));
    std::memcpy(dst + block_a, bn->data.data() + o * block_b, block_b * sizeof(double));
  }
  auto result = make_node(std::move(out_shape), std::move(out), "concat");
  const bool ga = an->requires_grad;
  const bool gb = bn->requires_grad;
  auto backward = [an, bn, va, block_a, block_b, ga, gb](detail::Node& self) {
    for (std::size_t o = 0; o < va.outer; ++o) {
      const double* g = self.grad.data() + o * (block_a + block_b);
      if (ga) {
        an->ensure_grad();
        double* dst = an->grad.data() + o * block_a;
        for (std::size_t i = 0; i < block_a; ++i) dst[i] += g[i];
      }
      if (gb) {
        bn->ensure_grad();
        double* dst = bn->grad.data() + o * block_b;
        for (std::size_t i = 0; i < block_b; ++i) dst[i] += g[block_a + i];
      }
    }
  };
  return finish(std::move(result), {an, bn}, std::move(backward));
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t len) {
  auto an = a.node();
  if (!an) throw ContractError("slice: undefined tensor operand");
  const AxisView v = axis_view(an->shape, axis, "slice");
  if (start + len > v.extent) {
    throw DimensionError("slice: window [" + std::to_string(start) + ", " +
                         std::to_string(start + len) + ") exceeds extent " +
                         std::to_string(v.extent));
  }
  Shape out_shape = an->shape;
  out_shape[axis] = len;
  std::vector<double> out(shape_numel(out_shape));
  for (std::size_t o = 0; o < v.outer; ++o) {
    const double* src = an->data.data() + (o * v.extent + start) * v.inner;
    std::memcpy(out.data() + o * len * v.inner, src, len * v.inner * sizeof(double));
  }
  auto result = make_node(std::move(out_shape), std::move(out), "slice");
  const bool ga = an->requires_grad;
  auto backward = [an, v, start, len, ga](detail::Node& self) {
    if (!ga) return;
    an->ensure_grad();
    for (std::size_t o = 0; o < v.outer; ++o) {
      const double* g = self.grad.data() + o * len * v.inner;
      double* dst = an->grad.data() + (o * v.extent + start) * v.inner;
      for (std::size_t i = 0; i < len * v.inner; ++i) dst[i] += g[i];
    }
  };
  return finish(std::move(result), {an}, std::move(backward));
}

std::pair<Tensor, Tensor> split(const Tensor& a, std::size_t axis, std::size_t left_len) {
  const std::size_t extent = a.extent(axis);
  if (left_len > extent) {
    throw DimensionError("split: left length " + std::to_string(left_len) + " exceeds extent " +
                         std::to_string(extent));
  }
  return {slice(a, axis, 0, left_len), slice(a, axis, left_len, extent - left_len)};
}

// ---- gradient checking -----------------------------------------------------

double grad_check(const std::function<Tensor()>& forward, const std::vector<Tensor>& leaves,
                  double step) {
  for (const auto& leaf : leaves) {
    if (!leaf.requires_grad()) {
      throw ContractError("grad_check: leaf without requires_grad");
    }
  }
  for (auto leaf : leaves) leaf.zero_grad();
  Tensor loss = forward();
  if (loss.numel() != 1) {
    throw ContractError("grad_check: forward() must produce a scalar");
  }
  loss.backward();

  std::vector<std::vector<double>> analytic;
  analytic.reserve(leaves.size());
  for (const auto& leaf : leaves) {
    analytic.push_back(leaf.has_grad() ? leaf.grad()
                                       : std::vector<double>(leaf.numel(), 0.0));
  }

  double max_rel = 0.0;
  NoGradGuard no_grad;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor leaf = leaves[li];
    auto& values = leaf.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = forward().value();
      values[i] = saved - step;
      const double down = forward().value();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[li][i];
      const double rel = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

double grad_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& x, double step) {
  Tensor leaf = x.clone();
  leaf.set_requires_grad(true);
  return grad_check([&] { return fn(leaf); }, {leaf}, step);
}

}  // namespace zsbir
