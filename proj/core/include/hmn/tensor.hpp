#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hmn/error.hpp"

namespace hmn {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Reads self.grad and accumulates into parents' grads. Empty for leaves
  // and for nodes created while gradients are disabled.
  std::function<void(TensorNode&)> backprop;
};

}  // namespace detail

// Dense row-major double tensor with optional reverse-mode gradient state.
// Copies share the underlying node (shallow value semantics, like a graph
// handle); use `clone` for an independent constant copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double fill);
  static Tensor scalar(double v);
  static Tensor from(Shape shape, std::vector<double> data);
  static Tensor from_rows(const std::vector<std::vector<double>>& rows);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  int extent(int axis) const;
  int size() const;

  double item() const;
  double at(int i) const;
  double at(int i, int j) const;
  const std::vector<double>& values() const;
  // Mutable access to a leaf's storage (optimizer updates, finite-difference
  // wiggles). Must not be used on nodes that already sit inside a recorded
  // graph other than as leaves.
  std::vector<double>& raw_values();

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool has_grad() const;
  const std::vector<double>& grad() const;
  std::vector<double>& raw_grad();
  void zero_grad();

  // Runs reverse-mode accumulation from this scalar. Grads add into any
  // previously accumulated values.
  void backward();

  Tensor clone() const;  // constant deep copy, no graph edges

  bool same_node(const Tensor& other) const { return node_ == other.node_; }
  detail::TensorNode* node() const { return node_.get(); }
  const std::shared_ptr<detail::TensorNode>& node_ptr() const { return node_; }

  explicit Tensor(std::shared_ptr<detail::TensorNode> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

// --- gradient mode -----------------------------------------------------

bool grad_enabled();
void set_grad_enabled(bool on);

struct NoGradGuard {
  NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
  ~NoGradGuard() { set_grad_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// When enabled, every op output is scanned for NaN/Inf and a ValueError is
// raised at the producing op instead of letting the poison propagate.
bool debug_checks_enabled();
void set_debug_checks(bool on);

// --- primitive ops ------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor divide(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
// X[m,n] + b[n] broadcast over rows.
Tensor add_rowwise(const Tensor& x, const Tensor& b);

Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);

// Max-subtracted softmax over a rank-1 tensor.
Tensor softmax(const Tensor& x);
// Row-wise softmax over a rank-2 tensor.
Tensor softmax_rows(const Tensor& x);

// Column-wise max over the time axis of X[T,d]; gradient flows to the
// earliest argmax row per column.
Tensor pool_max_over_time(const Tensor& x);

Tensor sum(const Tensor& a);
Tensor dot(const Tensor& u, const Tensor& v);

Tensor concat(std::span<const Tensor> parts);            // rank-1 pieces
Tensor concat(std::initializer_list<Tensor> parts);
Tensor stack_rows(std::span<const Tensor> rows);          // k x [d] -> [k,d]
Tensor stack_rows(std::initializer_list<Tensor> rows);
Tensor concat_cols(std::span<const Tensor> parts);        // [m,ki] -> [m,sum ki]
Tensor concat_cols(std::initializer_list<Tensor> parts);

Tensor row(const Tensor& m, int i);                       // [m,n] -> [n]
Tensor subvec(const Tensor& v, int start, int len);       // rank-1 slice
Tensor col_slice(const Tensor& m, int start, int len);    // [m,n] -> [m,len]
Tensor pick(const Tensor& v, int index);                  // rank-1 -> scalar

// Row-wise layer normalization with learned scale/shift.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

// 1 - u.v / (|u||v|), in [0,2]; throws ValueError on zero-norm input.
Tensor cosine_distance(const Tensor& u, const Tensor& v);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// --- finite-difference checking ------------------------------------------

// Compares reverse-mode gradients of a deterministic scalar loss against
// central finite differences for every entry of every parameter. Returns the
// maximum relative error, |analytic - numeric| / max(1e-8, |a| + |n|).
// Throws ValueError when two forward evaluations disagree bitwise.
double grad_check(const std::function<Tensor()>& loss_fn,
                  std::span<const Tensor> parameters, double eps = 1e-5);

}  // namespace hmn
