#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "ggd/tensor.hpp"

namespace ggd {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
// owning Tape is alive.
class Var {
 public:
  Var() = default;

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Append-only record of operations for reverse-mode differentiation.
//
// Nodes are stored in insertion order, which is a topological order;
// backward() walks them in exact reverse. A node requires a gradient iff it
// is a trainable leaf or any of its inputs requires one; backward rules are
// only stored for such nodes. Gradients accumulate additively into
// zero-initialized buffers.
//
// Every recorded forward value is checked for NaN/Inf.
//
// A Tape is single-threaded. Distinct tapes may live on distinct threads and
// may share external (read-only) leaf tensors.
class Tape {
 public:
  // Receives the node's forward value and its accumulated gradient.
  using BackwardFn = std::function<void(Tape&, const Tensor& out, std::span<const double> grad_out)>;

  explicit Tape(bool grad_enabled = true);
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }
  // Leaf that references `value` without copying it. `value` must outlive
  // the tape and must not be mutated while the tape is in use.
  Var external(const Tensor& value, bool requires_grad);

  // Records the result of an operation. `op` names the operation in error
  // messages; `backward` is dropped when no input requires a gradient.
  Var record(const char* op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(const char* op, Tensor value, std::span<const Var> inputs, BackwardFn backward);

  // Reverse sweep from a scalar loss. May be called once per tape.
  void backward(Var loss);

  const Tensor& value(Var v) const { return value(v.id()); }
  const Tensor& value(int id) const;
  bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id())].requires_grad; }

  // Gradient of the last backward() loss w.r.t. v; zeros when v did not
  // receive any contribution.
  Tensor grad(Var v) const;
  bool has_grad(Var v) const { return !nodes_[static_cast<std::size_t>(v.id())].grad.empty(); }

  // Gradient buffer of v for use inside backward rules; allocated and
  // zero-filled on first access.
  std::span<double> grad_buffer(Var v);

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    std::vector<double> grad;
    BackwardFn backward;
    bool requires_grad = false;
  };

  Var push(Node node);
  void check_owned(Var v) const;

  std::vector<Node> nodes_;
  bool grad_enabled_;
  bool backward_done_ = false;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(*this); }

// Matrix product. a is [m,k]; b is [k,n] (result [m,n]) or a vector [k]
// (result [m]).
Var matmul(Var a, Var b);
// x^T W for x [m] and W [m,n]; result [n].
Var vecmat(Var x, Var w);
Var transpose(Var a);
// Row i of a matrix as a vector.
Var row(Var m, std::size_t i);

// Pointwise arithmetic. Operands must have equal shapes, or one of them
// must be a scalar (rank 0), which is broadcast.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
// Adds vector v to every row of matrix m.
Var add_rows(Var m, Var v);

Var tanh(Var a);
Var sigmoid(Var a);
Var exp(Var a);
// Throws DomainError on non-positive entries.
Var log(Var a);

// Max-subtracted softmax over a vector.
Var softmax(Var a);
Var log_softmax(Var a);

Var sum(Var a);
Var dot(Var a, Var b);
// Scalar element i of a vector.
Var pick(Var a, std::size_t i);
Var concat(std::span<const Var> parts);
Var concat(std::initializer_list<Var> parts);
Var slice(Var a, std::size_t offset, std::size_t length);
// Stacks equal-length vectors as the rows of a matrix.
Var stack_rows(std::span<const Var> rows);
// Pass-through node; gives a consumer its own gradient accumulation point.
Var identity(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator-(Var a) { return scale(a, -1.0); }
inline Var operator*(double c, Var a) { return scale(a, c); }

// Plain-value helpers shared by the model and the estimators.
std::vector<double> softmax_values(std::span<const double> a);
std::vector<double> log_softmax_values(std::span<const double> a);
double log_sum_exp(std::span<const double> a);

}  // namespace ggd
