#include "ggd/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ggd/error.hpp"

namespace ggd {

namespace {

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

// Four partial sums: a fixed summation order that pipelines well.
double dot_values(std::span<const double> a, std::span<const double> b) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  const std::size_t n = a.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

Tape& tape_of(Var a) {
  if (!a.valid()) throw ContractError("operation on an unbound Var");
  return *a.tape();
}

Tape& tape_of(Var a, Var b) {
  if (a.tape() != b.tape()) throw ContractError("operands recorded on different tapes");
  return tape_of(a);
}

bool broadcastable(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() || a.is_scalar() || b.is_scalar();
}

Shape broadcast_shape(const Tensor& a, const Tensor& b) {
  return a.is_scalar() ? b.shape() : a.shape();
}

void require_vector(const Tensor& t, const char* op) {
  if (t.rank() != 1 || t.size() == 0) {
    throw DimensionError(std::string(op) + ": expected a nonempty vector, got shape " +
                         t.shape().str());
  }
}

// Accumulates `g` (shaped like the broadcast result) into operand x, summing
// over the broadcast axis when x is the scalar side.
void accumulate_broadcast(Tape& t, Var x, std::span<const double> g, double factor) {
  if (!x.requires_grad()) return;
  auto gx = t.grad_buffer(x);
  if (gx.size() == g.size()) {
    axpy(factor, g, gx);
  } else {
    gx[0] += factor * std::accumulate(g.begin(), g.end(), 0.0);
  }
}

template <typename F, typename D>
Var unary(const char* op, Var a, F f, D dfdx_from_out) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return t.record(op, std::move(y), {a},
                  [a, dfdx_from_out](Tape& tp, const Tensor& out, std::span<const double> g) {
                    if (!a.requires_grad()) return;
                    auto ga = tp.grad_buffer(a);
                    const Tensor& in = a.value();
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      ga[i] += g[i] * dfdx_from_out(in[i], out[i]);
                    }
                  });
}

}  // namespace

// ---------------------------------------------------------------------------
// Tape

Tape::Tape(bool grad_enabled) : grad_enabled_(grad_enabled) { nodes_.reserve(256); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

void Tape::check_owned(Var v) const {
  if (v.tape() != this || v.id() < 0 || static_cast<std::size_t>(v.id()) >= nodes_.size()) {
    throw ContractError("Var does not belong to this tape");
  }
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  if (!value.all_finite()) throw NumericError("leaf: non-finite value");
  Node n;
  n.value = std::move(value);
  n.requires_grad = grad_enabled_ && requires_grad;
  return push(std::move(n));
}

Var Tape::external(const Tensor& value, bool requires_grad) {
  Node n;
  n.value = Tensor(Shape::scalar(), std::vector<double>{0.0});
  n.external = &value;
  n.requires_grad = grad_enabled_ && requires_grad;
  return push(std::move(n));
}

Var Tape::record(const char* op, Tensor value, std::initializer_list<Var> inputs,
                 BackwardFn backward) {
  return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward));
}

Var Tape::record(const char* op, Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  if (!value.all_finite()) {
    throw NumericError(std::string(op) + ": non-finite forward value");
  }
  Node n;
  n.value = std::move(value);
  if (grad_enabled_) {
    for (const Var& in : inputs) {
      check_owned(in);
      if (nodes_[static_cast<std::size_t>(in.id())].requires_grad) {
        n.requires_grad = true;
        break;
      }
    }
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

const Tensor& Tape::value(int id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  return n.external ? *n.external : n.value;
}

std::span<double> Tape::grad_buffer(Var v) {
  Node& n = nodes_[static_cast<std::size_t>(v.id())];
  if (n.grad.empty()) n.grad.assign(value(v.id()).size(), 0.0);
  return n.grad;
}

Tensor Tape::grad(Var v) const {
  check_owned(v);
  const Node& n = nodes_[static_cast<std::size_t>(v.id())];
  const Tensor& val = value(v.id());
  if (n.grad.empty()) return Tensor(val.shape());
  return Tensor(val.shape(), n.grad);
}

void Tape::backward(Var loss) {
  check_owned(loss);
  if (!value(loss.id()).is_scalar()) {
    throw ContractError("backward: loss must be a scalar, got shape " +
                        value(loss.id()).shape().str());
  }
  if (backward_done_) throw ContractError("backward: tape already differentiated");
  backward_done_ = true;
  if (!nodes_[static_cast<std::size_t>(loss.id())].requires_grad) return;
  grad_buffer(loss)[0] = 1.0;
  for (std::size_t i = static_cast<std::size_t>(loss.id()) + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, value(static_cast<int>(i)), n.grad);
  }
}

// ---------------------------------------------------------------------------
// Linear algebra

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rank() != 2 || (B.rank() != 1 && B.rank() != 2)) {
    throw DimensionError("matmul: unsupported operand ranks " + A.shape().str() + " x " +
                         B.shape().str());
  }
  const std::size_t m = A.rows(), k = A.cols();
  if (B.rows() != k) {
    throw DimensionError("matmul: inner dimensions disagree " + A.shape().str() + " x " +
                         B.shape().str());
  }
  if (B.rank() == 1) {
    Tensor y(Shape::vector(m));
    for (std::size_t r = 0; r < m; ++r) y[r] = dot_values(A.row(r), B.data());
    return t.record("matmul", std::move(y), {a, b},
                    [a, b](Tape& tp, const Tensor&, std::span<const double> g) {
                      const Tensor& A = a.value();
                      const Tensor& x = b.value();
                      if (a.requires_grad()) {
                        auto ga = tp.grad_buffer(a);
                        const std::size_t k = A.cols();
                        for (std::size_t r = 0; r < A.rows(); ++r) {
                          axpy(g[r], x.data(), ga.subspan(r * k, k));
                        }
                      }
                      if (b.requires_grad()) {
                        auto gx = tp.grad_buffer(b);
                        for (std::size_t r = 0; r < A.rows(); ++r) axpy(g[r], A.row(r), gx);
                      }
                    });
  }
  const std::size_t n = B.cols();
  Tensor y(Shape::matrix(m, n));
  for (std::size_t r = 0; r < m; ++r) {
    auto yr = y.row(r);
    for (std::size_t j = 0; j < k; ++j) axpy(A.at(r, j), B.row(j), yr);
  }
  return t.record("matmul", std::move(y), {a, b},
                  [a, b](Tape& tp, const Tensor&, std::span<const double> g) {
                    const Tensor& A = a.value();
                    const Tensor& B = b.value();
                    const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
                    if (a.requires_grad()) {
                      // dA = G B^T
                      auto ga = tp.grad_buffer(a);
                      for (std::size_t r = 0; r < m; ++r) {
                        for (std::size_t j = 0; j < k; ++j) {
                          ga[r * k + j] += dot_values(g.subspan(r * n, n), B.row(j));
                        }
                      }
                    }
                    if (b.requires_grad()) {
                      // dB = A^T G
                      auto gb = tp.grad_buffer(b);
                      for (std::size_t r = 0; r < m; ++r) {
                        for (std::size_t j = 0; j < k; ++j) {
                          axpy(A.at(r, j), g.subspan(r * n, n), gb.subspan(j * n, n));
                        }
                      }
                    }
                  });
}

Var vecmat(Var x, Var w) {
  Tape& t = tape_of(x, w);
  const Tensor& X = x.value();
  const Tensor& W = w.value();
  if (X.rank() != 1 || W.rank() != 2 || W.rows() != X.size()) {
    throw DimensionError("vecmat: incompatible shapes " + X.shape().str() + " x " +
                         W.shape().str());
  }
  Tensor y(Shape::vector(W.cols()));
  for (std::size_t r = 0; r < W.rows(); ++r) {
    if (X[r] != 0.0) axpy(X[r], W.row(r), y.data());
  }
  return t.record("vecmat", std::move(y), {x, w},
                  [x, w](Tape& tp, const Tensor&, std::span<const double> g) {
                    const Tensor& X = x.value();
                    const Tensor& W = w.value();
                    if (x.requires_grad()) {
                      auto gx = tp.grad_buffer(x);
                      for (std::size_t r = 0; r < W.rows(); ++r) gx[r] += dot_values(W.row(r), g);
                    }
                    if (w.requires_grad()) {
                      auto gw = tp.grad_buffer(w);
                      const std::size_t n = W.cols();
                      for (std::size_t r = 0; r < W.rows(); ++r) {
                        if (X[r] != 0.0) axpy(X[r], g, gw.subspan(r * n, n));
                      }
                    }
                  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  const Tensor& A = a.value();
  if (A.rank() != 2) throw DimensionError("transpose: expected a matrix");
  const std::size_t m = A.rows(), n = A.cols();
  Tensor y(Shape::matrix(n, m));
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) y.at(c, r) = A.at(r, c);
  }
  return t.record("transpose", std::move(y), {a},
                  [a, m, n](Tape& tp, const Tensor&, std::span<const double> g) {
                    if (!a.requires_grad()) return;
                    auto ga = tp.grad_buffer(a);
                    for (std::size_t r = 0; r < m; ++r) {
                      for (std::size_t c = 0; c < n; ++c) ga[r * n + c] += g[c * m + r];
                    }
                  });
}

Var row(Var m, std::size_t i) {
  Tape& t = tape_of(m);
  const Tensor& M = m.value();
  if (M.rank() != 2 || i >= M.rows()) throw DimensionError("row: index out of range");
  const auto r = M.row(i);
  Tensor y(Shape::vector(M.cols()), std::vector<double>(r.begin(), r.end()));
  return t.record("row", std::move(y), {m},
                  [m, i](Tape& tp, const Tensor&, std::span<const double> g) {
                    if (!m.requires_grad()) return;
                    const std::size_t n = g.size();
                    axpy(1.0, g, tp.grad_buffer(m).subspan(i * n, n));
                  });
}

// ---------------------------------------------------------------------------
// Pointwise arithmetic

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (!broadcastable(A, B)) {
    throw DimensionError("add: shapes " + A.shape().str() + " and " + B.shape().str());
  }
  Tensor y(broadcast_shape(A, B));
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = A[A.is_scalar() ? 0 : i] + B[B.is_scalar() ? 0 : i];
  }
  return t.record("add", std::move(y), {a, b},
                  [a, b](Tape& tp, const Tensor&, std::span<const double> g) {
                    accumulate_broadcast(tp, a, g, 1.0);
                    accumulate_broadcast(tp, b, g, 1.0);
                  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (!broadcastable(A, B)) {
    throw DimensionError("sub: shapes " + A.shape().str() + " and " + B.shape().str());
  }
  Tensor y(broadcast_shape(A, B));
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = A[A.is_scalar() ? 0 : i] - B[B.is_scalar() ? 0 : i];
  }
  return t.record("sub", std::move(y), {a, b},
                  [a, b](Tape& tp, const Tensor&, std::span<const double> g) {
                    accumulate_broadcast(tp, a, g, 1.0);
                    accumulate_broadcast(tp, b, g, -1.0);
                  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (!broadcastable(A, B)) {
    throw DimensionError("mul: shapes " + A.shape().str() + " and " + B.shape().str());
  }
  Tensor y(broadcast_shape(A, B));
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = A[A.is_scalar() ? 0 : i] * B[B.is_scalar() ? 0 : i];
  }
  return t.record("mul", std::move(y), {a, b},
                  [a, b](Tape& tp, const Tensor& out, std::span<const double> g) {
                    const Tensor& A = a.value();
                    const Tensor& B = b.value();
                    const std::size_t n = out.size();
                    auto side = [&](Var x, const Tensor& X, const Tensor& other) {
                      if (!x.requires_grad()) return;
                      auto gx = tp.grad_buffer(x);
                      for (std::size_t i = 0; i < n; ++i) {
                        const double contrib = g[i] * other[other.is_scalar() ? 0 : i];
                        gx[X.is_scalar() ? 0 : i] += contrib;
                      }
                    };
                    side(a, A, B);
                    side(b, B, A);
                  });
}

Var scale(Var a, double c) {
  return unary(
      "scale", a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var add_rows(Var m, Var v) {
  Tape& t = tape_of(m, v);
  const Tensor& M = m.value();
  const Tensor& V = v.value();
  if (M.rank() != 2 || V.rank() != 1 || V.size() != M.cols()) {
    throw DimensionError("add_rows: shapes " + M.shape().str() + " and " + V.shape().str());
  }
  Tensor y = M;
  for (std::size_t r = 0; r < M.rows(); ++r) axpy(1.0, V.data(), y.row(r));
  return t.record("add_rows", std::move(y), {m, v},
                  [m, v](Tape& tp, const Tensor& out, std::span<const double> g) {
                    const std::size_t n = out.cols();
                    if (m.requires_grad()) axpy(1.0, g, tp.grad_buffer(m));
                    if (v.requires_grad()) {
                      auto gv = tp.grad_buffer(v);
                      for (std::size_t r = 0; r < out.rows(); ++r) axpy(1.0, g.subspan(r * n, n), gv);
                    }
                  });
}

Var tanh(Var a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var exp(Var a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  for (const double x : a.value().data()) {
    if (!(x > 0.0)) throw DomainError("log: non-positive argument");
  }
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

// ---------------------------------------------------------------------------
// Softmax family

double log_sum_exp(std::span<const double> a) {
  if (a.empty()) throw DimensionError("log_sum_exp: empty vector");
  const double m = *std::max_element(a.begin(), a.end());
  double s = 0.0;
  for (const double x : a) s += std::exp(x - m);
  return m + std::log(s);
}

std::vector<double> softmax_values(std::span<const double> a) {
  if (a.empty()) throw DimensionError("softmax: empty vector");
  const double m = *std::max_element(a.begin(), a.end());
  std::vector<double> y(a.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    y[i] = std::exp(a[i] - m);
    s += y[i];
  }
  for (double& v : y) v /= s;
  return y;
}

std::vector<double> log_softmax_values(std::span<const double> a) {
  const double lse = log_sum_exp(a);
  std::vector<double> y(a.begin(), a.end());
  for (double& v : y) v -= lse;
  return y;
}

Var softmax(Var a) {
  Tape& t = tape_of(a);
  require_vector(a.value(), "softmax");
  Tensor y = Tensor::vector(softmax_values(a.value().data()));
  return t.record("softmax", std::move(y), {a},
                  [a](Tape& tp, const Tensor& out, std::span<const double> g) {
                    if (!a.requires_grad()) return;
                    auto ga = tp.grad_buffer(a);
                    const double s = dot_values(g, out.data());
                    for (std::size_t j = 0; j < g.size(); ++j) ga[j] += out[j] * (g[j] - s);
                  });
}

Var log_softmax(Var a) {
  Tape& t = tape_of(a);
  require_vector(a.value(), "log_softmax");
  Tensor y = Tensor::vector(log_softmax_values(a.value().data()));
  return t.record("log_softmax", std::move(y), {a},
                  [a](Tape& tp, const Tensor& out, std::span<const double> g) {
                    if (!a.requires_grad()) return;
                    auto ga = tp.grad_buffer(a);
                    const double s = std::accumulate(g.begin(), g.end(), 0.0);
                    for (std::size_t j = 0; j < g.size(); ++j) ga[j] += g[j] - std::exp(out[j]) * s;
                  });
}

// ---------------------------------------------------------------------------
// Reductions and reshaping

Var sum(Var a) {
  Tape& t = tape_of(a);
  const auto d = a.value().data();
  const double s = std::accumulate(d.begin(), d.end(), 0.0);
  return t.record("sum", Tensor::scalar(s), {a},
                  [a](Tape& tp, const Tensor&, std::span<const double> g) {
                    if (!a.requires_grad()) return;
                    for (double& x : tp.grad_buffer(a)) x += g[0];
                  });
}

Var dot(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (a.value().shape() != b.value().shape()) {
    throw DimensionError("dot: shapes " + a.value().shape().str() + " and " +
                         b.value().shape().str());
  }
  const double s = dot_values(a.value().data(), b.value().data());
  return t.record("dot", Tensor::scalar(s), {a, b},
                  [a, b](Tape& tp, const Tensor&, std::span<const double> g) {
                    if (a.requires_grad()) axpy(g[0], b.value().data(), tp.grad_buffer(a));
                    if (b.requires_grad()) axpy(g[0], a.value().data(), tp.grad_buffer(b));
                  });
}

Var pick(Var a, std::size_t i) {
  Tape& t = tape_of(a);
  if (i >= a.value().size()) throw DimensionError("pick: index out of range");
  return t.record("pick", Tensor::scalar(a.value()[i]), {a},
                  [a, i](Tape& tp, const Tensor&, std::span<const double> g) {
                    if (a.requires_grad()) tp.grad_buffer(a)[i] += g[0];
                  });
}

Var concat(std::initializer_list<Var> parts) {
  return concat(std::span<const Var>(parts.begin(), parts.size()));
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat: no operands");
  Tape& t = tape_of(parts[0]);
  std::size_t n = 0;
  for (const Var& p : parts) {
    if (p.tape() != &t) throw ContractError("concat: operands on different tapes");
    if (p.value().rank() != 1) throw DimensionError("concat: operands must be vectors");
    n += p.value().size();
  }
  std::vector<double> y;
  y.reserve(n);
  for (const Var& p : parts) {
    const auto d = p.value().data();
    y.insert(y.end(), d.begin(), d.end());
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record("concat", Tensor::vector(std::move(y)), parts,
                  [inputs](Tape& tp, const Tensor&, std::span<const double> g) {
                    std::size_t off = 0;
                    for (const Var& p : inputs) {
                      const std::size_t len = p.value().size();
                      if (p.requires_grad()) axpy(1.0, g.subspan(off, len), tp.grad_buffer(p));
                      off += len;
                    }
                  });
}

Var slice(Var a, std::size_t offset, std::size_t length) {
  Tape& t = tape_of(a);
  const Tensor& A = a.value();
  if (A.rank() != 1 || offset + length > A.size() || length == 0) {
    throw DimensionError("slice: range out of bounds for shape " + A.shape().str());
  }
  const auto d = A.data().subspan(offset, length);
  return t.record("slice", Tensor::vector(std::vector<double>(d.begin(), d.end())), {a},
                  [a, offset](Tape& tp, const Tensor&, std::span<const double> g) {
                    if (a.requires_grad()) axpy(1.0, g, tp.grad_buffer(a).subspan(offset, g.size()));
                  });
}

Var stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw DimensionError("stack_rows: no rows");
  Tape& t = tape_of(rows[0]);
  const std::size_t n = rows[0].value().size();
  std::vector<double> y;
  y.reserve(n * rows.size());
  for (const Var& r : rows) {
    if (r.tape() != &t) throw ContractError("stack_rows: operands on different tapes");
    if (r.value().rank() != 1 || r.value().size() != n) {
      throw DimensionError("stack_rows: rows must be vectors of equal length");
    }
    const auto d = r.value().data();
    y.insert(y.end(), d.begin(), d.end());
  }
  std::vector<Var> inputs(rows.begin(), rows.end());
  return t.record("stack_rows", Tensor::matrix(rows.size(), n, std::move(y)), rows,
                  [inputs, n](Tape& tp, const Tensor&, std::span<const double> g) {
                    for (std::size_t r = 0; r < inputs.size(); ++r) {
                      if (inputs[r].requires_grad()) {
                        axpy(1.0, g.subspan(r * n, n), tp.grad_buffer(inputs[r]));
                      }
                    }
                  });
}

Var identity(Var a) {
  Tape& t = tape_of(a);
  return t.record("identity", a.value(), {a},
                  [a](Tape& tp, const Tensor&, std::span<const double> g) {
                    if (a.requires_grad()) axpy(1.0, g, tp.grad_buffer(a));
                  });
}

}  // namespace ggd
