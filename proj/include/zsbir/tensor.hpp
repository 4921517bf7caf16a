#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "zsbir/errors.hpp"

namespace zsbir {

// Row-major extents; rank 0 (empty shape) is a scalar holding one value.
using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Pulls this node's grad into its parents' grads. Null for leaves.
  std::function<void(Node&)> backward;
  const char* op = "leaf";

  std::size_t numel() const { return data.size(); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

using NodePtr = std::shared_ptr<Node>;

bool grad_enabled();
bool strict_numerics();

}  // namespace detail

// Disables tape recording in the current thread for its lifetime. Values are
// still computed; results are constants.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Toggles NaN/Inf checking at op boundaries for the current thread.
class StrictNumericsGuard {
 public:
  explicit StrictNumericsGuard(bool enabled);
  ~StrictNumericsGuard();
  StrictNumericsGuard(const StrictNumericsGuard&) = delete;
  StrictNumericsGuard& operator=(const StrictNumericsGuard&) = delete;

 private:
  bool prev_;
};
void set_strict_numerics_default(bool enabled);

struct BackwardStats {
  std::size_t nodes_visited = 0;
};
// Stats for the most recent backward() on this thread.
BackwardStats last_backward_stats();

// Value-semantic handle to a node in the computation graph. Copies share the
// underlying buffer; graphs are rebuilt every forward pass.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value);
  static Tensor identity(std::size_t n);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t numel() const;
  std::size_t rank() const { return shape().size(); }
  // Extent along axis; scalar tensors have no axes.
  std::size_t extent(std::size_t axis) const;

  const std::vector<double>& data() const;
  // Leaf mutation (parameter updates). Does not invalidate recorded graphs;
  // callers only mutate between passes.
  std::vector<double>& mutable_data();

  double value() const;  // scalar extraction; throws ContractError otherwise
  double at(std::size_t flat_index) const;

  bool requires_grad() const;
  void set_requires_grad(bool enabled);

  bool has_grad() const;
  const std::vector<double>& grad() const;  // throws if absent
  bool grad_is_zero() const;                // true when absent or all zeros
  void zero_grad();

  // Reverse-mode sweep from a scalar. Repeated calls accumulate.
  void backward() const;

  Tensor detach() const;  // same buffer, no graph
  Tensor clone() const;   // fresh buffer copy, leaf

  detail::NodePtr node() const { return node_; }
  explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}

 private:
  detail::NodePtr node_;
};

// ---- operations ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor square(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor neg(const Tensor& a);

// Extension/test hook: unary op from a value map and its derivative.
Tensor custom_unary(const Tensor& a, double (*fn)(double), double (*dfn)(double),
                    const char* name = "custom_unary");

Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, std::size_t axis);

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis);
// Contiguous [start, start+len) along `axis`.
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t len);
std::pair<Tensor, Tensor> split(const Tensor& a, std::size_t axis, std::size_t left_len);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double c) { return add_scalar(a, c); }
inline Tensor operator-(const Tensor& a, double c) { return add_scalar(a, -c); }
inline Tensor operator*(const Tensor& a, double c) { return mul_scalar(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return mul_scalar(a, c); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// ---- gradient checking ----------------------------------------------------

// Max over leaf coordinates of |analytic - central difference| / max(1, |analytic|).
// `forward` must rebuild the loss from the leaves on every call.
double grad_check(const std::function<Tensor()>& forward, const std::vector<Tensor>& leaves,
                  double step = 1e-5);
double grad_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& x,
                  double step = 1e-5);

}  // namespace zsbir
