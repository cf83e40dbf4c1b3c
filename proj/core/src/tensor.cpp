#include "hmn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace hmn {

namespace {

bool g_grad_enabled = true;
bool g_debug_checks = false;

int shape_size(const Shape& s) {
  int n = 1;
  for (int e : s) n *= e;
  return n;
}

void validate_shape(const Shape& s) {
  for (int e : s) {
    if (e <= 0) throw ShapeError("tensor extents must be positive, got " + shape_str(s));
  }
}

void check_finite(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw ValueError(std::string("non-finite value produced by op '") + op + "'");
    }
  }
}

using NodePtr = std::shared_ptr<detail::TensorNode>;

NodePtr make_leaf(Shape shape, std::vector<double> data) {
  auto n = std::make_shared<detail::TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  return n;
}

// Builds an op output node. Graph edges are recorded only when gradients are
// enabled and at least one input participates in differentiation.
Tensor make_op(const char* op, Shape shape, std::vector<double> value,
               std::vector<NodePtr> inputs,
               std::function<void(detail::TensorNode&)> backprop) {
  if (g_debug_checks) check_finite(value, op);
  auto n = std::make_shared<detail::TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  if (g_grad_enabled) {
    bool needs = false;
    for (const auto& in : inputs) needs = needs || in->requires_grad;
    if (needs) {
      n->requires_grad = true;
      n->parents = std::move(inputs);
      n->backprop = std::move(backprop);
    }
  }
  return Tensor(std::move(n));
}

void accumulate(detail::TensorNode& parent, const std::vector<double>& contrib) {
  if (!parent.requires_grad) return;
  if (parent.grad.empty()) parent.grad.assign(parent.value.size(), 0.0);
  for (std::size_t i = 0; i < contrib.size(); ++i) parent.grad[i] += contrib[i];
}

// Accumulate a single entry.
void accumulate_at(detail::TensorNode& parent, std::size_t idx, double g) {
  if (!parent.requires_grad) return;
  if (parent.grad.empty()) parent.grad.assign(parent.value.size(), 0.0);
  parent.grad[idx] += g;
}

void require_rank(const Tensor& t, int rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank-" + std::to_string(rank) +
                     " tensor, got shape " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
}

void softmax_row(const double* x, double* y, int k) {
  double m = x[0];
  for (int i = 1; i < k; ++i) m = std::max(m, x[i]);
  double z = 0.0;
  for (int i = 0; i < k; ++i) {
    y[i] = std::exp(x[i] - m);
    z += y[i];
  }
  for (int i = 0; i < k; ++i) y[i] /= z;
}

// dx = y * (dy - sum(dy * y)) per row.
void softmax_row_backward(const double* y, const double* dy, double* dx, int k) {
  double s = 0.0;
  for (int i = 0; i < k; ++i) s += dy[i] * y[i];
  for (int i = 0; i < k; ++i) dx[i] = y[i] * (dy[i] - s);
}

double vec_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << " x ";
    os << s[i];
  }
  os << ']';
  return os.str();
}

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }
bool debug_checks_enabled() { return g_debug_checks; }
void set_debug_checks(bool on) { g_debug_checks = on; }

// --- Tensor basics --------------------------------------------------------

Tensor Tensor::zeros(Shape shape) {
  validate_shape(shape);
  int n = shape_size(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, 0.0)));
}

Tensor Tensor::full(Shape shape, double fill) {
  validate_shape(shape);
  int n = shape_size(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, fill)));
}

Tensor Tensor::scalar(double v) { return Tensor(make_leaf({}, {v})); }

Tensor Tensor::from(Shape shape, std::vector<double> data) {
  validate_shape(shape);
  if (shape_size(shape) != static_cast<int>(data.size())) {
    throw ShapeError("data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  }
  return Tensor(make_leaf(std::move(shape), std::move(data)));
}

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw ShapeError("from_rows: no rows");
  int cols = static_cast<int>(rows[0].size());
  std::vector<double> data;
  data.reserve(rows.size() * rows[0].size());
  for (const auto& r : rows) {
    if (static_cast<int>(r.size()) != cols) {
      throw ShapeError("from_rows: ragged rows");
    }
    data.insert(data.end(), r.begin(), r.end());
  }
  return from({static_cast<int>(rows.size()), cols}, std::move(data));
}

const Shape& Tensor::shape() const {
  if (!node_) throw ValueError("use of undefined tensor");
  return node_->shape;
}

int Tensor::extent(int axis) const {
  const Shape& s = shape();
  if (axis < 0 || axis >= static_cast<int>(s.size())) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  return s[axis];
}

int Tensor::size() const { return shape_size(shape()); }

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

double Tensor::at(int i) const {
  const auto& v = values();
  if (i < 0 || i >= static_cast<int>(v.size())) {
    throw ShapeError("index " + std::to_string(i) + " out of range");
  }
  return v[static_cast<std::size_t>(i)];
}

double Tensor::at(int i, int j) const {
  require_rank(*this, 2, "at(i,j)");
  int rows = extent(0), cols = extent(1);
  if (i < 0 || i >= rows || j < 0 || j >= cols) {
    throw ShapeError("index (" + std::to_string(i) + "," + std::to_string(j) +
                     ") out of range for " + shape_str(shape()));
  }
  return node_->value[static_cast<std::size_t>(i) * cols + j];
}

const std::vector<double>& Tensor::values() const {
  if (!node_) throw ValueError("use of undefined tensor");
  return node_->value;
}

std::vector<double>& Tensor::raw_values() {
  if (!node_) throw ValueError("use of undefined tensor");
  return node_->value;
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  if (!node_) throw ValueError("use of undefined tensor");
  node_->requires_grad = on;
  return *this;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw ValueError("tensor has no accumulated gradient");
  return node_->grad;
}

std::vector<double>& Tensor::raw_grad() {
  if (!node_) throw ValueError("use of undefined tensor");
  if (node_->grad.empty()) node_->grad.assign(node_->value.size(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

Tensor Tensor::clone() const {
  return Tensor(make_leaf(shape(), values()));
}

void Tensor::backward() {
  if (!node_) throw ValueError("backward() on undefined tensor");
  if (size() != 1) {
    throw ShapeError("backward() requires a scalar, got " + shape_str(shape()));
  }
  // Reverse post-order over the recorded graph is a valid topological order.
  std::vector<detail::TensorNode*> order;
  std::unordered_set<detail::TensorNode*> visited;
  struct Frame {
    detail::TensorNode* n;
    std::size_t next;
  };
  std::vector<Frame> stack;
  visited.insert(node_.get());
  stack.push_back({node_.get(), 0});
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      detail::TensorNode* p = f.n->parents[f.next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }
  if (node_->grad.empty()) node_->grad.assign(1, 0.0);
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorNode* n = *it;
    if (n->backprop && !n->grad.empty()) n->backprop(*n);
  }
}

// --- primitive ops --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  int m = a.extent(0), k = a.extent(1), k2 = b.extent(0), n = b.extent(1);
  if (k != k2) {
    throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  const double* A = a.values().data();
  const double* B = b.values().data();
  for (int i = 0; i < m; ++i) {
    double* crow = out.data() + static_cast<std::size_t>(i) * n;
    const double* arow = A + static_cast<std::size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      double av = arow[kk];
      if (av == 0.0) continue;
      const double* brow = B + static_cast<std::size_t>(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  auto an = a.node_ptr();
  auto bn = b.node_ptr();
  return make_op(
      "matmul", {m, n}, std::move(out), {an, bn},
      [an, bn, m, k, n](detail::TensorNode& self) {
        const double* dC = self.grad.data();
        if (an->requires_grad) {
          // dA = dC . B^T
          if (an->grad.empty()) an->grad.assign(an->value.size(), 0.0);
          const double* B = bn->value.data();
          for (int i = 0; i < m; ++i) {
            const double* dcrow = dC + static_cast<std::size_t>(i) * n;
            double* darow = an->grad.data() + static_cast<std::size_t>(i) * k;
            for (int kk = 0; kk < k; ++kk) {
              const double* brow = B + static_cast<std::size_t>(kk) * n;
              double s = 0.0;
              for (int j = 0; j < n; ++j) s += dcrow[j] * brow[j];
              darow[kk] += s;
            }
          }
        }
        if (bn->requires_grad) {
          // dB = A^T . dC
          if (bn->grad.empty()) bn->grad.assign(bn->value.size(), 0.0);
          const double* A = an->value.data();
          for (int kk = 0; kk < k; ++kk) {
            double* dbrow = bn->grad.data() + static_cast<std::size_t>(kk) * n;
            for (int i = 0; i < m; ++i) {
              double av = A[static_cast<std::size_t>(i) * k + kk];
              if (av == 0.0) continue;
              const double* dcrow = dC + static_cast<std::size_t>(i) * n;
              for (int j = 0; j < n; ++j) dbrow[j] += av * dcrow[j];
            }
          }
        }
      });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  int m = a.extent(0), n = a.extent(1);
  std::vector<double> out(static_cast<std::size_t>(m) * n);
  const double* A = a.values().data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<std::size_t>(j) * m + i] = A[static_cast<std::size_t>(i) * n + j];
  auto an = a.node_ptr();
  return make_op("transpose", {n, m}, std::move(out), {an},
                 [an, m, n](detail::TensorNode& self) {
                   if (!an->requires_grad) return;
                   if (an->grad.empty()) an->grad.assign(an->value.size(), 0.0);
                   const double* dC = self.grad.data();
                   for (int j = 0; j < n; ++j)
                     for (int i = 0; i < m; ++i)
                       an->grad[static_cast<std::size_t>(i) * n + j] +=
                           dC[static_cast<std::size_t>(j) * m + i];
                 });
}

Tensor reshape(const Tensor& a, Shape shape) {
  validate_shape(shape);
  if (shape_size(shape) != a.size()) {
    throw ShapeError("reshape: size mismatch " + shape_str(a.shape()) + " -> " +
                     shape_str(shape));
  }
  auto an = a.node_ptr();
  return make_op("reshape", std::move(shape), a.values(), {an},
                 [an](detail::TensorNode& self) { accumulate(*an, self.grad); });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  auto an = a.node_ptr();
  auto bn = b.node_ptr();
  return make_op("add", a.shape(), std::move(out), {an, bn},
                 [an, bn](detail::TensorNode& self) {
                   accumulate(*an, self.grad);
                   accumulate(*bn, self.grad);
                 });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  auto an = a.node_ptr();
  auto bn = b.node_ptr();
  return make_op("sub", a.shape(), std::move(out), {an, bn},
                 [an, bn](detail::TensorNode& self) {
                   accumulate(*an, self.grad);
                   if (bn->requires_grad) {
                     if (bn->grad.empty()) bn->grad.assign(bn->value.size(), 0.0);
                     for (std::size_t i = 0; i < self.grad.size(); ++i)
                       bn->grad[i] -= self.grad[i];
                   }
                 });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  auto an = a.node_ptr();
  auto bn = b.node_ptr();
  return make_op("mul", a.shape(), std::move(out), {an, bn},
                 [an, bn](detail::TensorNode& self) {
                   if (an->requires_grad) {
                     if (an->grad.empty()) an->grad.assign(an->value.size(), 0.0);
                     for (std::size_t i = 0; i < self.grad.size(); ++i)
                       an->grad[i] += self.grad[i] * bn->value[i];
                   }
                   if (bn->requires_grad) {
                     if (bn->grad.empty()) bn->grad.assign(bn->value.size(), 0.0);
                     for (std::size_t i = 0; i < self.grad.size(); ++i)
                       bn->grad[i] += self.grad[i] * an->value[i];
                   }
                 });
}

Tensor divide(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "divide");
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (bv[i] == 0.0) throw ValueError("divide: zero denominator");
    out[i] /= bv[i];
  }
  auto an = a.node_ptr();
  auto bn = b.node_ptr();
  return make_op("divide", a.shape(), std::move(out), {an, bn},
                 [an, bn](detail::TensorNode& self) {
                   if (an->requires_grad) {
                     if (an->grad.empty()) an->grad.assign(an->value.size(), 0.0);
                     for (std::size_t i = 0; i < self.grad.size(); ++i)
                       an->grad[i] += self.grad[i] / bn->value[i];
                   }
                   if (bn->requires_grad) {
                     if (bn->grad.empty()) bn->grad.assign(bn->value.size(), 0.0);
                     for (std::size_t i = 0; i < self.grad.size(); ++i)
                       bn->grad[i] -= self.grad[i] * an->value[i] /
                                      (bn->value[i] * bn->value[i]);
                   }
                 });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.values());
  for (double& x : out) x *= c;
  auto an = a.node_ptr();
  return make_op("scale", a.shape(), std::move(out), {an},
                 [an, c](detail::TensorNode& self) {
                   if (!an->requires_grad) return;
                   if (an->grad.empty()) an->grad.assign(an->value.size(), 0.0);
                   for (std::size_t i = 0; i < self.grad.size(); ++i)
                     an->grad[i] += c * self.grad[i];
                 });
}

Tensor add_rowwise(const Tensor& x, const Tensor& b) {
  require_rank(x, 2, "add_rowwise");
  require_rank(b, 1, "add_rowwise");
  int m = x.extent(0), n = x.extent(1);
  if (b.extent(0) != n) {
    throw ShapeError("add_rowwise: bias width " + shape_str(b.shape()) +
                     " does not match " + shape_str(x.shape()));
  }
  std::vector<double> out(x.values());
  const double* bv = b.values().data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(i) * n + j] += bv[j];
  auto xn = x.node_ptr();
  auto bn = b.node_ptr();
  return make_op("add_rowwise", x.shape(), std::move(out), {xn, bn},
                 [xn, bn, m, n](detail::TensorNode& self) {
                   accumulate(*xn, self.grad);
                   if (bn->requires_grad) {
                     if (bn->grad.empty()) bn->grad.assign(bn->value.size(), 0.0);
                     for (int i = 0; i < m; ++i)
                       for (int j = 0; j < n; ++j)
                         bn->grad[j] += self.grad[static_cast<std::size_t>(i) * n + j];
                   }
                 });
}

namespace {

template <class Fwd, class Bwd>
Tensor unary_op(const char* name, const Tensor& a, Fwd fwd, Bwd dydx_from_xy) {
  std::vector<double> out(a.values());
  for (double& x : out) x = fwd(x);
  auto an = a.node_ptr();
  std::vector<double> y = out;  // captured for the derivative
  return make_op(name, a.shape(), std::move(out), {an},
                 [an, y = std::move(y), dydx_from_xy](detail::TensorNode& self) {
                   if (!an->requires_grad) return;
                   if (an->grad.empty()) an->grad.assign(an->value.size(), 0.0);
                   for (std::size_t i = 0; i < self.grad.size(); ++i)
                     an->grad[i] += self.grad[i] * dydx_from_xy(an->value[i], y[i]);
                 });
}

}  // namespace

Tensor tanh(const Tensor& a) {
  return unary_op("tanh", a, [](double x) { return std::tanh(x); },
                  [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op("sigmoid", a,
                  [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                  [](double, double y) { return y * (1.0 - y); });
}

Tensor gelu(const Tensor& a) {
  constexpr double kInvSqrt2 = 0.7071067811865475244;
  constexpr double kInvSqrt2Pi = 0.3989422804014326779;
  return unary_op("gelu", a,
                  [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
                  [](double x, double) {
                    double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
                    double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
                    return cdf + x * pdf;
                  });
}

Tensor log(const Tensor& a) {
  for (double x : a.values()) {
    if (x <= 0.0) throw ValueError("log: non-positive input");
  }
  return unary_op("log", a, [](double x) { return std::log(x); },
                  [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
  for (double x : a.values()) {
    if (x < 0.0) throw ValueError("sqrt: negative input");
  }
  return unary_op("sqrt", a, [](double x) { return std::sqrt(x); },
                  [](double, double y) { return 0.5 / y; });
}

Tensor softmax(const Tensor& x) {
  require_rank(x, 1, "softmax");
  int k = x.extent(0);
  if (k < 1) throw ValueError("softmax: empty input");
  std::vector<double> out(static_cast<std::size_t>(k));
  softmax_row(x.values().data(), out.data(), k);
  auto xn = x.node_ptr();
  std::vector<double> y = out;
  return make_op("softmax", x.shape(), std::move(out), {xn},
                 [xn, y = std::move(y), k](detail::TensorNode& self) {
                   if (!xn->requires_grad) return;
                   if (xn->grad.empty()) xn->grad.assign(xn->value.size(), 0.0);
                   std::vector<double> dx(static_cast<std::size_t>(k));
                   softmax_row_backward(y.data(), self.grad.data(), dx.data(), k);
                   for (int i = 0; i < k; ++i) xn->grad[static_cast<std::size_t>(i)] += dx[i];
                 });
}

Tensor softmax_rows(const Tensor& x) {
  require_rank(x, 2, "softmax_rows");
  int m = x.extent(0), n = x.extent(1);
  std::vector<double> out(static_cast<std::size_t>(m) * n);
  for (int i = 0; i < m; ++i)
    softmax_row(x.values().data() + static_cast<std::size_t>(i) * n,
                out.data() + static_cast<std::size_t>(i) * n, n);
  auto xn = x.node_ptr();
  std::vector<double> y = out;
  return make_op("softmax_rows", x.shape(), std::move(out), {xn},
                 [xn, y = std::move(y), m, n](detail::TensorNode& self) {
                   if (!xn->requires_grad) return;
                   if (xn->grad.empty()) xn->grad.assign(xn->value.size(), 0.0);
                   std::vector<double> dx(static_cast<std::size_t>(n));
                   for (int i = 0; i < m; ++i) {
                     std::size_t off = static_cast<std::size_t>(i) * n;
                     softmax_row_backward(y.data() + off, self.grad.data() + off,
                                          dx.data(), n);
                     for (int j = 0; j < n; ++j) xn->grad[off + j] += dx[j];
                   }
                 });
}

Tensor pool_max_over_time(const Tensor& x) {
  require_rank(x, 2, "pool_max_over_time");
  int t = x.extent(0), d = x.extent(1);
  if (t < 1) throw ValueError("pool_max_over_time: empty time axis");
  std::vector<double> out(static_cast<std::size_t>(d));
  std::vector<int> argmax(static_cast<std::size_t>(d), 0);
  const double* X = x.values().data();
  for (int j = 0; j < d; ++j) {
    double best = X[j];
    int bi = 0;
    for (int i = 1; i < t; ++i) {
      double v = X[static_cast<std::size_t>(i) * d + j];
      if (v > best) {  // strict: ties keep the earliest time index
        best = v;
        bi = i;
      }
    }
    out[static_cast<std::size_t>(j)] = best;
    argmax[static_cast<std::size_t>(j)] = bi;
  }
  auto xn = x.node_ptr();
  return make_op("pool_max_over_time", {d}, std::move(out), {xn},
                 [xn, argmax = std::move(argmax), d](detail::TensorNode& self) {
                   if (!xn->requires_grad) return;
                   if (xn->grad.empty()) xn->grad.assign(xn->value.size(), 0.0);
                   for (int j = 0; j < d; ++j)
                     xn->grad[static_cast<std::size_t>(argmax[static_cast<std::size_t>(j)]) * d + j] +=
                         self.grad[static_cast<std::size_t>(j)];
                 });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.values()) s += x;
  auto an = a.node_ptr();
  return make_op("sum", {}, {s}, {an}, [an](detail::TensorNode& self) {
    if (!an->requires_grad) return;
    if (an->grad.empty()) an->grad.assign(an->value.size(), 0.0);
    for (double& g : an->grad) g += self.grad[0];
  });
}

Tensor dot(const Tensor& u, const Tensor& v) {
  require_rank(u, 1, "dot");
  require_rank(v, 1, "dot");
  require_same_shape(u, v, "dot");
  double s = 0.0;
  const auto& uv = u.values();
  const auto& vv = v.values();
  for (std::size_t i = 0; i < uv.size(); ++i) s += uv[i] * vv[i];
  auto un = u.node_ptr();
  auto vn = v.node_ptr();
  return make_op("dot", {}, {s}, {un, vn}, [un, vn](detail::TensorNode& self) {
    double g = self.grad[0];
    if (un->requires_grad) {
      if (un->grad.empty()) un->grad.assign(un->value.size(), 0.0);
      for (std::size_t i = 0; i < un->grad.size(); ++i) un->grad[i] += g * vn->value[i];
    }
    if (vn->requires_grad) {
      if (vn->grad.empty()) vn->grad.assign(vn->value.size(), 0.0);
      for (std::size_t i = 0; i < vn->grad.size(); ++i) vn->grad[i] += g * un->value[i];
    }
  });
}

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat: no parts");
  std::vector<double> out;
  std::vector<NodePtr> inputs;
  std::vector<int> lengths;
  for (const Tensor& p : parts) {
    require_rank(p, 1, "concat");
    out.insert(out.end(), p.values().begin(), p.values().end());
    inputs.push_back(p.node_ptr());
    lengths.push_back(p.extent(0));
  }
  int total = static_cast<int>(out.size());
  auto ins = inputs;  // copy for the closure
  return make_op("concat", {total}, std::move(out), std::move(inputs),
                 [ins, lengths](detail::TensorNode& self) {
                   std::size_t off = 0;
                   for (std::size_t p = 0; p < ins.size(); ++p) {
                     auto& parent = *ins[p];
                     int len = lengths[p];
                     if (parent.requires_grad) {
                       if (parent.grad.empty()) parent.grad.assign(parent.value.size(), 0.0);
                       for (int i = 0; i < len; ++i)
                         parent.grad[static_cast<std::size_t>(i)] += self.grad[off + i];
                     }
                     off += static_cast<std::size_t>(len);
                   }
                 });
}

Tensor concat(std::initializer_list<Tensor> parts) {
  std::vector<Tensor> v(parts);
  return concat(std::span<const Tensor>(v));
}

Tensor stack_rows(std::span<const Tensor> rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no rows");
  int d = rows.front().extent(0);
  std::vector<double> out;
  out.reserve(rows.size() * static_cast<std::size_t>(d));
  std::vector<NodePtr> inputs;
  for (const Tensor& r : rows) {
    require_rank(r, 1, "stack_rows");
    if (r.extent(0) != d) {
      throw ShapeError("stack_rows: row width mismatch " + shape_str(r.shape()));
    }
    out.insert(out.end(), r.values().begin(), r.values().end());
    inputs.push_back(r.node_ptr());
  }
  int k = static_cast<int>(rows.size());
  auto ins = inputs;
  return make_op("stack_rows", {k, d}, std::move(out), std::move(inputs),
                 [ins, d](detail::TensorNode& self) {
                   for (std::size_t r = 0; r < ins.size(); ++r) {
                     auto& parent = *ins[r];
                     if (!parent.requires_grad) continue;
                     if (parent.grad.empty()) parent.grad.assign(parent.value.size(), 0.0);
                     std::size_t off = r * static_cast<std::size_t>(d);
                     for (int i = 0; i < d; ++i)
                       parent.grad[static_cast<std::size_t>(i)] += self.grad[off + i];
                   }
                 });
}

Tensor stack_rows(std::initializer_list<Tensor> rows) {
  std::vector<Tensor> v(rows);
  return stack_rows(std::span<const Tensor>(v));
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts");
  int m = parts.front().extent(0);
  int total = 0;
  std::vector<int> widths;
  std::vector<NodePtr> inputs;
  for (const Tensor& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.extent(0) != m) {
      throw ShapeError("concat_cols: row count mismatch " + shape_str(p.shape()));
    }
    widths.push_back(p.extent(1));
    total += p.extent(1);
    inputs.push_back(p.node_ptr());
  }
  std::vector<double> out(static_cast<std::size_t>(m) * total);
  int coff = 0;
  for (std::size_t pi = 0; pi < inputs.size(); ++pi) {
    int w = widths[pi];
    const double* src = inputs[pi]->value.data();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j)
        out[static_cast<std::size_t>(i) * total + coff + j] =
            src[static_cast<std::size_t>(i) * w + j];
    coff += w;
  }
  auto ins = inputs;
  return make_op("concat_cols", {m, total}, std::move(out), std::move(inputs),
                 [ins, widths, m, total](detail::TensorNode& self) {
                   int coff = 0;
                   for (std::size_t pi = 0; pi < ins.size(); ++pi) {
                     auto& parent = *ins[pi];
                     int w = widths[pi];
                     if (parent.requires_grad) {
                       if (parent.grad.empty()) parent.grad.assign(parent.value.size(), 0.0);
                       for (int i = 0; i < m; ++i)
                         for (int j = 0; j < w; ++j)
                           parent.grad[static_cast<std::size_t>(i) * w + j] +=
                               self.grad[static_cast<std::size_t>(i) * total + coff + j];
                     }
                     coff += w;
                   }
                 });
}

Tensor concat_cols(std::initializer_list<Tensor> parts) {
  std::vector<Tensor> v(parts);
  return concat_cols(std::span<const Tensor>(v));
}

Tensor row(const Tensor& m, int i) {
  require_rank(m, 2, "row");
  int rows = m.extent(0), cols = m.extent(1);
  if (i < 0 || i >= rows) {
    throw ShapeError("row index " + std::to_string(i) + " out of range for " +
                     shape_str(m.shape()));
  }
  std::vector<double> out(m.values().begin() + static_cast<std::size_t>(i) * cols,
                          m.values().begin() + static_cast<std::size_t>(i + 1) * cols);
  auto mn = m.node_ptr();
  return make_op("row", {cols}, std::move(out), {mn},
                 [mn, i, cols](detail::TensorNode& self) {
                   for (int j = 0; j < cols; ++j)
                     accumulate_at(*mn, static_cast<std::size_t>(i) * cols + j, self.grad[static_cast<std::size_t>(j)]);
                 });
}

Tensor subvec(const Tensor& v, int start, int len) {
  require_rank(v, 1, "subvec");
  if (start < 0 || len <= 0 || start + len > v.extent(0)) {
    throw ShapeError("subvec [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") out of range for " +
                     shape_str(v.shape()));
  }
  std::vector<double> out(v.values().begin() + start, v.values().begin() + start + len);
  auto vn = v.node_ptr();
  return make_op("subvec", {len}, std::move(out), {vn},
                 [vn, start, len](detail::TensorNode& self) {
                   for (int j = 0; j < len; ++j)
                     accumulate_at(*vn, static_cast<std::size_t>(start + j), self.grad[static_cast<std::size_t>(j)]);
                 });
}

Tensor col_slice(const Tensor& m, int start, int len) {
  require_rank(m, 2, "col_slice");
  int rows = m.extent(0), cols = m.extent(1);
  if (start < 0 || len <= 0 || start + len > cols) {
    throw ShapeError("col_slice [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") out of range for " +
                     shape_str(m.shape()));
  }
  std::vector<double> out(static_cast<std::size_t>(rows) * len);
  const double* src = m.values().data();
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < len; ++j)
      out[static_cast<std::size_t>(i) * len + j] =
          src[static_cast<std::size_t>(i) * cols + start + j];
  auto mn = m.node_ptr();
  return make_op("col_slice", {rows, len}, std::move(out), {mn},
                 [mn, rows, cols, start, len](detail::TensorNode& self) {
                   if (!mn->requires_grad) return;
                   if (mn->grad.empty()) mn->grad.assign(mn->value.size(), 0.0);
                   for (int i = 0; i < rows; ++i)
                     for (int j = 0; j < len; ++j)
                       mn->grad[static_cast<std::size_t>(i) * cols + start + j] +=
                           self.grad[static_cast<std::size_t>(i) * len + j];
                 });
}

Tensor pick(const Tensor& v, int index) {
  require_rank(v, 1, "pick");
  if (index < 0 || index >= v.extent(0)) {
    throw ValueError("pick: index " + std::to_string(index) + " out of range for " +
                     shape_str(v.shape()));
  }
  auto vn = v.node_ptr();
  return make_op("pick", {}, {v.values()[static_cast<std::size_t>(index)]}, {vn},
                 [vn, index](detail::TensorNode& self) {
                   accumulate_at(*vn, static_cast<std::size_t>(index), self.grad[0]);
                 });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() != 1 && x.rank() != 2) {
    throw ShapeError("layer_norm: expected rank 1 or 2, got " + shape_str(x.shape()));
  }
  int m = x.rank() == 2 ? x.extent(0) : 1;
  int n = x.rank() == 2 ? x.extent(1) : x.extent(0);
  require_rank(gamma, 1, "layer_norm");
  require_rank(beta, 1, "layer_norm");
  if (gamma.extent(0) != n || beta.extent(0) != n) {
    throw ShapeError("layer_norm: scale/shift width mismatch with " + shape_str(x.shape()));
  }
  std::vector<double> out(static_cast<std::size_t>(m) * n);
  std::vector<double> xhat(out.size());
  std::vector<double> inv_std(static_cast<std::size_t>(m));
  const double* X = x.values().data();
  const double* G = gamma.values().data();
  const double* B = beta.values().data();
  for (int i = 0; i < m; ++i) {
    const double* xr = X + static_cast<std::size_t>(i) * n;
    double mean = 0.0;
    for (int j = 0; j < n; ++j) mean += xr[j];
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      double d = xr[j] - mean;
      var += d * d;
    }
    var /= n;
    double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(i)] = is;
    for (int j = 0; j < n; ++j) {
      std::size_t idx = static_cast<std::size_t>(i) * n + j;
      xhat[idx] = (xr[j] - mean) * is;
      out[idx] = xhat[idx] * G[j] + B[j];
    }
  }
  auto xn = x.node_ptr();
  auto gn = gamma.node_ptr();
  auto bn = beta.node_ptr();
  return make_op(
      "layer_norm", x.shape(), std::move(out), {xn, gn, bn},
      [xn, gn, bn, xhat = std::move(xhat), inv_std = std::move(inv_std), m,
       n](detail::TensorNode& self) {
        const double* dY = self.grad.data();
        for (int i = 0; i < m; ++i) {
          std::size_t off = static_cast<std::size_t>(i) * n;
          if (gn->requires_grad) {
            if (gn->grad.empty()) gn->grad.assign(gn->value.size(), 0.0);
            for (int j = 0; j < n; ++j) gn->grad[static_cast<std::size_t>(j)] += dY[off + j] * xhat[off + j];
          }
          if (bn->requires_grad) {
            if (bn->grad.empty()) bn->grad.assign(bn->value.size(), 0.0);
            for (int j = 0; j < n; ++j) bn->grad[static_cast<std::size_t>(j)] += dY[off + j];
          }
          if (xn->requires_grad) {
            if (xn->grad.empty()) xn->grad.assign(xn->value.size(), 0.0);
            double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
            for (int j = 0; j < n; ++j) {
              double dxhat = dY[off + j] * gn->value[static_cast<std::size_t>(j)];
              mean_dxhat += dxhat;
              mean_dxhat_xhat += dxhat * xhat[off + j];
            }
            mean_dxhat /= n;
            mean_dxhat_xhat /= n;
            double is = inv_std[static_cast<std::size_t>(i)];
            for (int j = 0; j < n; ++j) {
              double dxhat = dY[off + j] * gn->value[static_cast<std::size_t>(j)];
              xn->grad[off + j] += is * (dxhat - mean_dxhat - xhat[off + j] * mean_dxhat_xhat);
            }
          }
        }
      });
}

Tensor cosine_distance(const Tensor& u, const Tensor& v) {
  require_rank(u, 1, "cosine_distance");
  require_rank(v, 1, "cosine_distance");
  require_same_shape(u, v, "cosine_distance");
  double nu = vec_norm(u.values());
  double nv = vec_norm(v.values());
  if (nu < 1e-12 || nv < 1e-12) {
    throw ValueError("cosine_distance: zero-norm vector");
  }
  // Composed from primitives so the gradient comes for free.
  Tensor denom = mul(sqrt(dot(u, u)), sqrt(dot(v, v)));
  return sub(Tensor::scalar(1.0), divide(dot(u, v), denom));
}

double grad_check(const std::function<Tensor()>& loss_fn,
                  std::span<const Tensor> parameters, double eps) {
  if (eps <= 0.0) throw ValueError("grad_check: eps must be positive");
  auto eval = [&loss_fn]() {
    NoGradGuard ng;
    return loss_fn().item();
  };
  double fa = eval();
  double fb = eval();
  if (!(fa == fb)) {
    throw ValueError("grad_check: loss function is not deterministic (" +
                     std::to_string(fa) + " vs " + std::to_string(fb) + ")");
  }

  std::vector<Tensor> params(parameters.begin(), parameters.end());
  for (Tensor& p : params) p.zero_grad();
  Tensor loss = loss_fn();
  loss.backward();

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Tensor& p : params) {
    analytic.push_back(p.has_grad() ? p.grad()
                                    : std::vector<double>(p.values().size(), 0.0));
  }

  double max_rel = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& vals = params[pi].raw_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      double orig = vals[i];
      vals[i] = orig + eps;
      double fp = eval();
      vals[i] = orig - eps;
      double fm = eval();
      vals[i] = orig;
      double numeric = (fp - fm) / (2.0 * eps);
      double a = analytic[pi][i];
      double denom = std::max(1e-8, std::abs(numeric) + std::abs(a));
      max_rel = std::max(max_rel, std::abs(numeric - a) / denom);
    }
  }
  return max_rel;
}

}  // namespace hmn
