#pragma once

// Dense NCHW tensor with reverse-mode differentiation.
//
// A Tensor is a shared handle to a graph node holding the value buffer, an
// optional gradient buffer and the backward closure recorded by the op that
// produced it. Every op is instantiable at float (training/inference) and
// double (gradient checking).

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace wcc {

// Usage/shape errors exit with code 1 from the CLI, numerical failures with 3.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : UsageError {
  using UsageError::UsageError;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Shape {
  long n = 0, c = 0, h = 0, w = 0;
  long numel() const { return n * c * h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const {
    std::ostringstream os;
    os << n << "x" << c << "x" << h << "x" << w;
    return os.str();
  }
};

inline void check_shape(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

// Deterministic RNG. Transformations are hand-rolled so that streams do not
// depend on standard-library distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo, double hi) {
    const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
  }

  double normal(double mean = 0.0, double stddev = 1.0) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1 = uniform(0.0, 1.0);
    double u2 = uniform(0.0, 1.0);
    if (u1 < 1e-300) u1 = 1e-300;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return mean + stddev * r * std::cos(a);
  }

  std::uint64_t next() { return engine_(); }
  std::uint64_t next_below(std::uint64_t n) { return n ? engine_() % n : 0; }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

template <typename T>
void shuffle_indices(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
    std::swap(v[i - 1], v[j]);
  }
}

// Thread-local autograd switch; ops record backward closures only when
// enabled and some input requires a gradient.
struct GradMode {
  static bool enabled() { return flag(); }
  static void set(bool on) { flag() = on; }

 private:
  static bool& flag() {
    thread_local bool f = true;
    return f;
  }
};

struct NoGradGuard {
  NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set(false); }
  ~NoGradGuard() { GradMode::set(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::span<T> ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

}  // namespace detail

template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape s) { return Tensor(s, std::vector<T>(check_numel(s), T(0))); }

  static Tensor full(Shape s, T v) { return Tensor(s, std::vector<T>(check_numel(s), v)); }

  static Tensor scalar(T v) { return full({1, 1, 1, 1}, v); }

  static Tensor from(Shape s, std::vector<T> data) {
    check_shape(static_cast<long>(data.size()) == check_numel(s),
                "tensor data length " + std::to_string(data.size()) +
                    " does not match shape " + s.str());
    return Tensor(s, std::move(data));
  }

  static Tensor randn(Shape s, Rng& rng, T stddev = T(1), T mean = T(0)) {
    std::vector<T> d(check_numel(s));
    for (auto& v : d) v = static_cast<T>(rng.normal(mean, stddev));
    return Tensor(s, std::move(d));
  }

  static Tensor uniform(Shape s, Rng& rng, T lo, T hi) {
    std::vector<T> d(check_numel(s));
    for (auto& v : d) v = static_cast<T>(rng.uniform(lo, hi));
    return Tensor(s, std::move(d));
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  long numel() const { return node_->shape.numel(); }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }

  long index(long n, long c, long h, long w) const {
    const Shape& s = node_->shape;
    return ((n * s.c + c) * s.h + h) * s.w + w;
  }
  T at(long n, long c, long h, long w) const { return node_->data[index(n, c, h, w)]; }
  T& at(long n, long c, long h, long w) { return node_->data[index(n, c, h, w)]; }

  T item() const {
    check_shape(numel() == 1, "item() requires a single-element tensor, got " + shape().str());
    return node_->data[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    node_->requires_grad = on;
    return *this;
  }

  bool has_grad() const { return defined() && !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  void clear_grad() { node_->grad.clear(); }

  // Detached deep copy of the value buffer.
  Tensor clone() const { return Tensor(node_->shape, node_->data); }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> d(node_->data.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<U>(node_->data[i]);
    return Tensor<U>::from(node_->shape, std::move(d));
  }

  bool all_finite() const {
    for (const T v : node_->data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  const std::shared_ptr<detail::Node<T>>& node() const { return node_; }
  std::shared_ptr<detail::Node<T>>& node() { return node_; }

 private:
  Tensor(Shape s, std::vector<T> data) : node_(std::make_shared<detail::Node<T>>()) {
    node_->shape = s;
    node_->data = std::move(data);
  }

  static long check_numel(Shape s) {
    check_shape(s.n > 0 && s.c > 0 && s.h > 0 && s.w > 0, "invalid shape " + s.str());
    return s.numel();
  }

  std::shared_ptr<detail::Node<T>> node_;
};

namespace detail {

template <typename T>
bool wants_grad(std::initializer_list<const Tensor<T>*> inputs) {
  if (!GradMode::enabled()) return false;
  for (const Tensor<T>* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

// Wires parents and the backward closure onto an op result and marks it as
// gradient-carrying. Call only when wants_grad() returned true.
template <typename T>
void attach_backward(Tensor<T>& out, std::vector<Tensor<T>> parents,
                     std::function<void(Node<T>&)> fn) {
  auto& n = *out.node();
  n.requires_grad = true;
  n.parents.reserve(parents.size());
  for (auto& p : parents) n.parents.push_back(p.node());
  n.backward_fn = std::move(fn);
}

}  // namespace detail

// Reverse-mode sweep from a scalar root. Gradients accumulate (+=) into every
// reachable node that requires a gradient; leaves keep theirs until cleared.
template <typename T>
void backward(const Tensor<T>& root) {
  check_shape(root.numel() == 1, "backward() requires a scalar root, got " + root.shape().str());
  using NodeT = detail::Node<T>;

  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> visited;
  struct Frame {
    NodeT* n;
    std::size_t next = 0;
  };
  std::vector<Frame> stack;
  if (!root.node()->requires_grad) return;
  visited.insert(root.node().get());
  stack.push_back({root.node().get()});
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      NodeT* p = f.n->parents[f.next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p});
      }
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  root.node()->ensure_grad()[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

template <typename T>
struct Parameter {
  Tensor<T> value;
  bool trainable = true;

  Parameter() = default;
  Parameter(Tensor<T> v, bool trainable_) : value(std::move(v)), trainable(trainable_) {
    value.set_requires_grad(trainable);
  }
};

enum class ParamKind {
  kConvKernel,    // counted by the analytic cost model
  kLinearWeight,  // counted
  kWaveletFilter, // counted (the fixed 2K filter taps)
  kAffine,        // batchnorm alpha/beta, excluded from the cost model
  kBnStat,        // running statistics, excluded
  kLambda,        // ADWT subband scores, excluded
  kAlignWeight,   // CSA aggregation window U, excluded
};

inline bool counted_in_cost_model(ParamKind k) {
  return k == ParamKind::kConvKernel || k == ParamKind::kLinearWeight ||
         k == ParamKind::kWaveletFilter;
}

template <typename T>
struct ParamEntry {
  std::string name;
  Parameter<T>* param = nullptr;
  ParamKind kind = ParamKind::kConvKernel;
};

// Flat list of every parameter a model owns, in registration order. The order
// is the checkpoint serialization order.
template <typename T>
class ParamRegistry {
 public:
  void add(std::string name, Parameter<T>& p, ParamKind kind) {
    for (const auto& e : entries_) {
      check_shape(e.name != name, "duplicate parameter name '" + name + "'");
      check_shape(e.param != &p, "parameter registered twice: '" + name + "'");
    }
    entries_.push_back({std::move(name), &p, kind});
  }

  std::span<const ParamEntry<T>> entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  Parameter<T>* find(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.name == name) return e.param;
    return nullptr;
  }

  unsigned long long total_values() const {
    unsigned long long n = 0;
    for (const auto& e : entries_) n += static_cast<unsigned long long>(e.param->value.numel());
    return n;
  }

  // Parameter count under the analytic cost model convention (conv/linear
  // kernels and wavelet taps; affine, running stats and stage scalars are not
  // counted, matching the model's bias/batchnorm exclusion).
  unsigned long long cost_model_values() const {
    unsigned long long n = 0;
    for (const auto& e : entries_)
      if (counted_in_cost_model(e.kind))
        n += static_cast<unsigned long long>(e.param->value.numel());
    return n;
  }

  unsigned long long trainable_values() const {
    unsigned long long n = 0;
    for (const auto& e : entries_)
      if (e.param->trainable) n += static_cast<unsigned long long>(e.param->value.numel());
    return n;
  }

  void clear_grads() {
    for (const auto& e : entries_) e.param->value.clear_grad();
  }

 private:
  std::vector<ParamEntry<T>> entries_;
};

// p <- p - lr * (grad + weight_decay * p) for trainable parameters; gradients
// are consumed by the step. A trainable parameter without a populated
// gradient is a training bug and is rejected.
template <typename T>
void sgd_step(ParamRegistry<T>& reg, T lr, T weight_decay) {
  for (const auto& e : reg.entries()) {
    if (!e.param->trainable) continue;
    if (!e.param->value.has_grad())
      throw NumericError("sgd_step: trainable parameter '" + e.name + "' has no gradient");
  }
  for (const auto& e : reg.entries()) {
    if (!e.param->trainable) continue;
    auto d = e.param->value.data();
    auto g = e.param->value.grad();
    for (std::size_t i = 0; i < d.size(); ++i)
      d[i] -= lr * (g[i] + weight_decay * d[i]);
    e.param->value.clear_grad();
  }
}

}  // namespace wcc
