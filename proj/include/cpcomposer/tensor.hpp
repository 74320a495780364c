#pragma once

// Dense row-major arrays of doubles plus a tape-based reverse-mode
// differentiation engine. The primitive set is deliberately small: it covers
// what the denoiser, the training loss and the guidance energy need.

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cpcomposer/error.hpp"

namespace cpc {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

/// Immutable n-dimensional array of 64-bit floats.
class Array {
 public:
  Array() : data_(1, 0.0) {}

  Array(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size()) {
      throw ShapeError("array: shape " + shape_str(shape_) + " needs " +
                       std::to_string(shape_size(shape_)) + " values, got " +
                       std::to_string(data_.size()));
    }
  }

  static Array zeros(Shape shape) { return full(std::move(shape), 0.0); }
  static Array full(Shape shape, double v) {
    auto n = shape_size(shape);
    return Array(std::move(shape), std::vector<double>(n, v));
  }
  static Array scalar(double v) { return Array({}, {v}); }
  static Array vector(std::vector<double> v) {
    auto n = v.size();
    return Array({n}, std::move(v));
  }
  static Array matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
    return Array({rows, cols}, std::move(v));
  }
  static Array identity(std::size_t n) {
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
    return matrix(n, n, std::move(v));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_.back() + c]; }
  double item() const {
    if (data_.size() != 1) throw ShapeError("item: array of shape " + shape_str(shape_) + " is not a scalar");
    return data_[0];
  }

  Array reshaped(Shape shape) const { return Array(std::move(shape), data_); }

  bool operator==(const Array&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

namespace detail {

// C[m,n] (+)= op(A) * op(B); op(A) is [m,k], op(B) is [k,n].
inline void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, const double* a,
                 const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ta ? a[p * m + i] : a[i * k + p];
      if (aip == 0.0) continue;
      if (!tb) {
        const double* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] += aip * b[j * k + p];
      }
    }
  }
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace detail

using ValueId = std::size_t;

class Tape;

/// Handle to a value recorded on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, ValueId id) : tape_(tape), id_(id) {}

  ValueId id() const noexcept { return id_; }
  Tape& tape() const noexcept { return *tape_; }
  const Array& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  ValueId id_ = 0;
};

/// Adjoint storage handed to backward rules; buffers are zero-initialized on
/// first touch.
class AdjointSink {
 public:
  explicit AdjointSink(std::size_t n) : adj_(n) {}

  std::span<double> acc(ValueId id, std::size_t size) {
    auto& a = adj_[id];
    if (a.empty()) a.assign(size, 0.0);
    return a;
  }
  bool touched(ValueId id) const { return !adj_[id].empty(); }
  std::vector<double>& raw(ValueId id) { return adj_[id]; }

 private:
  std::vector<std::vector<double>> adj_;
};

/// Result of a backward pass: adjoint of every value reached from the output.
class Gradients {
 public:
  Gradients(std::vector<std::vector<double>> adj, std::vector<Shape> shapes)
      : adj_(std::move(adj)), shapes_(std::move(shapes)) {}

  /// Gradient with respect to `v`; a zero array when `v` is detached from the output.
  Array operator[](const Var& v) const {
    const auto& s = shapes_.at(v.id());
    const auto& a = adj_.at(v.id());
    if (a.empty()) return Array::zeros(s);
    return Array(s, a);
  }

  std::span<const double> raw(ValueId id) const { return adj_.at(id); }

 private:
  std::vector<std::vector<double>> adj_;
  std::vector<Shape> shapes_;
};

/// Records primitive applications in creation order. One tape per thread; a
/// tape constructed with `record = false` only evaluates values.
class Tape {
 public:
  using BackwardFn = std::function<void(std::span<const double> out_adj, AdjointSink& sink)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Array value) { return push(std::make_shared<const Array>(std::move(value)), record_, nullptr); }
  Var constant(Array value) { return push(std::make_shared<const Array>(std::move(value)), false, nullptr); }
  /// Leaf sharing storage with the caller; no copy is made.
  Var leaf(std::shared_ptr<const Array> value) { return push(std::move(value), record_, nullptr); }
  Var constant(std::shared_ptr<const Array> value) { return push(std::move(value), false, nullptr); }

  bool recording() const noexcept { return record_; }
  bool requires_grad(ValueId id) const { return nodes_[id].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }
  const Array& value(ValueId id) const { return *nodes_[id].value; }

  /// Appends an operation result. `fn` is kept only if some input needs a gradient.
  Var record(Array value, std::initializer_list<ValueId> inputs, BackwardFn fn) {
    return record(std::move(value), std::vector<ValueId>(inputs), std::move(fn));
  }
  Var record(Array value, const std::vector<ValueId>& inputs, BackwardFn fn) {
    bool rg = false;
    if (record_) {
      for (auto id : inputs) rg = rg || nodes_[id].requires_grad;
    }
    return push(std::make_shared<const Array>(std::move(value)), rg, rg ? std::move(fn) : nullptr);
  }

  /// Reverse sweep from a scalar output. Each node's rule runs at most once,
  /// in reverse creation order.
  Gradients backward(const Var& output, double seed = 1.0) const {
    const auto& out = nodes_.at(output.id());
    if (out.value->size() != 1) {
      throw ShapeError("backward: output must be scalar, got shape " + shape_str(out.value->shape()));
    }
    AdjointSink sink(nodes_.size());
    sink.acc(output.id(), 1)[0] = seed;
    for (ValueId id = output.id() + 1; id-- > 0;) {
      const auto& node = nodes_[id];
      if (!node.backward || !sink.touched(id)) continue;
      node.backward(std::span<const double>(sink.raw(id)), sink);
    }
    std::vector<std::vector<double>> adj(nodes_.size());
    std::vector<Shape> shapes(nodes_.size());
    for (ValueId id = 0; id < nodes_.size(); ++id) {
      shapes[id] = nodes_[id].value->shape();
      if (sink.touched(id)) adj[id] = std::move(sink.raw(id));
    }
    return Gradients(std::move(adj), std::move(shapes));
  }

 private:
  struct Node {
    std::shared_ptr<const Array> value;
    bool requires_grad;
    BackwardFn backward;
  };

  Var push(std::shared_ptr<const Array> value, bool rg, BackwardFn fn) {
    nodes_.push_back(Node{std::move(value), rg, std::move(fn)});
    return Var(this, nodes_.size() - 1);
  }

  bool record_;
  std::deque<Node> nodes_;
};

inline const Array& Var::value() const { return tape_->value(id_); }

// ---------------------------------------------------------------------------
// Primitives
// ---------------------------------------------------------------------------

namespace detail {

inline void same_tape(const Var& a, const Var& b, const char* op) {
  if (&a.tape() != &b.tape()) throw Error(std::string(op) + ": operands live on different tapes");
}

// rhs either matches lhs or matches lhs without its leading dimension.
inline bool broadcasts(const Shape& lhs, const Shape& rhs, const char* op) {
  if (lhs == rhs) return false;
  if (!lhs.empty() && Shape(lhs.begin() + 1, lhs.end()) == rhs) return true;
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(lhs) + " and " + shape_str(rhs));
}

template <class Fwd, class DA, class DB>
Var binary(const Var& a, const Var& b, const char* op, Fwd fwd, DA da, DB db) {
  same_tape(a, b, op);
  const Array& av = a.value();
  const Array& bv = b.value();
  const bool bc = broadcasts(av.shape(), bv.shape(), op);
  const std::size_t n = av.size();
  const std::size_t bn = bv.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[bc ? i % bn : i]);
  Tape& t = a.tape();
  const ValueId ia = a.id(), ib = b.id();
  return t.record(Array(av.shape(), std::move(out)), {ia, ib},
                  [&t, ia, ib, n, bn, bc, da, db](std::span<const double> g, AdjointSink& s) {
                    const Array& av = t.value(ia);
                    const Array& bv = t.value(ib);
                    if (t.requires_grad(ia)) {
                      auto ga = s.acc(ia, n);
                      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * da(av[i], bv[bc ? i % bn : i]);
                    }
                    if (t.requires_grad(ib)) {
                      auto gb = s.acc(ib, bn);
                      for (std::size_t i = 0; i < n; ++i) gb[bc ? i % bn : i] += g[i] * db(av[i], bv[bc ? i % bn : i]);
                    }
                  });
}

template <class Fwd, class Deriv>
Var unary(const Var& a, Fwd fwd, Deriv deriv) {
  const Array& av = a.value();
  const std::size_t n = av.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i]);
  Tape& t = a.tape();
  const ValueId ia = a.id();
  return t.record(Array(av.shape(), std::move(out)), {ia},
                  [&t, ia, n, deriv](std::span<const double> g, AdjointSink& s) {
                    const Array& av = t.value(ia);
                    auto ga = s.acc(ia, n);
                    for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * deriv(av[i]);
                  });
}

}  // namespace detail

/// Elementwise sum; `b` may omit the leading dimension of `a`.
inline Var add(const Var& a, const Var& b) {
  return detail::binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

inline Var sub(const Var& a, const Var& b) {
  return detail::binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

inline Var mul(const Var& a, const Var& b) {
  return detail::binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }

inline Var scale(const Var& a, double c) {
  return detail::unary(a, [c](double x) { return c * x; }, [c](double) { return c; });
}

inline Var shift(const Var& a, double c) {
  return detail::unary(a, [c](double x) { return x + c; }, [](double) { return 1.0; });
}

inline Var exp(const Var& a) {
  return detail::unary(a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

inline Var tanh(const Var& a) {
  return detail::unary(
      a, [](double x) { return std::tanh(x); },
      [](double x) {
        const double y = std::tanh(x);
        return 1.0 - y * y;
      });
}

/// x * sigmoid(x).
inline Var silu(const Var& a) {
  return detail::unary(
      a, [](double x) { return x * detail::sigmoid(x); },
      [](double x) {
        const double s = detail::sigmoid(x);
        return s * (1.0 + x * (1.0 - s));
      });
}

inline Var reciprocal(const Var& a) {
  return detail::unary(a, [](double x) { return 1.0 / x; }, [](double x) { return -1.0 / (x * x); });
}

/// [m,k]x[k,n] -> [m,n] or [m,k]x[k] -> [m].
inline Var matmul(const Var& a, const Var& b) {
  detail::same_tape(a, b, "matmul");
  const Array& av = a.value();
  const Array& bv = b.value();
  if (av.rank() != 2 || (bv.rank() != 1 && bv.rank() != 2) || av.dim(1) != bv.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(av.shape()) + " and " + shape_str(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.rank() == 2 ? bv.dim(1) : 1;
  std::vector<double> out(m * n, 0.0);
  detail::gemm(false, false, m, n, k, av.data().data(), bv.data().data(), out.data());
  Shape os = bv.rank() == 2 ? Shape{m, n} : Shape{m};
  Tape& t = a.tape();
  const ValueId ia = a.id(), ib = b.id();
  return t.record(Array(std::move(os), std::move(out)), {ia, ib},
                  [&t, ia, ib, m, n, k](std::span<const double> g, AdjointSink& s) {
                    const Array& av = t.value(ia);
                    const Array& bv = t.value(ib);
                    if (t.requires_grad(ia)) {
                      auto ga = s.acc(ia, m * k);
                      detail::gemm(false, true, m, k, n, g.data(), bv.data().data(), ga.data());
                    }
                    if (t.requires_grad(ib)) {
                      auto gb = s.acc(ib, k * n);
                      detail::gemm(true, false, k, n, m, av.data().data(), g.data(), gb.data());
                    }
                  });
}

/// Sum of all entries, as a scalar.
inline Var sum(const Var& a) {
  const Array& av = a.value();
  double acc = 0.0;
  for (double x : av.data()) acc += x;
  Tape& t = a.tape();
  const ValueId ia = a.id();
  const std::size_t n = av.size();
  return t.record(Array::scalar(acc), {ia}, [ia, n](std::span<const double> g, AdjointSink& s) {
    auto ga = s.acc(ia, n);
    for (auto& x : ga) x += g[0];
  });
}

/// [m,n] -> [m], summing each row.
inline Var row_sum(const Var& a) {
  const Array& av = a.value();
  if (av.rank() != 2) throw ShapeError("row_sum: expected rank 2, got " + shape_str(av.shape()));
  const std::size_t m = av.dim(0), n = av.dim(1);
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += av[i * n + j];
  Tape& t = a.tape();
  const ValueId ia = a.id();
  return t.record(Array::vector(std::move(out)), {ia}, [ia, m, n](std::span<const double> g, AdjointSink& s) {
    auto ga = s.acc(ia, m * n);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i];
  });
}

/// [m] -> [m,n], repeating each entry across a row.
inline Var broadcast_cols(const Var& a, std::size_t n) {
  const Array& av = a.value();
  if (av.rank() != 1) throw ShapeError("broadcast: expected rank 1, got " + shape_str(av.shape()));
  const std::size_t m = av.dim(0);
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = av[i];
  Tape& t = a.tape();
  const ValueId ia = a.id();
  return t.record(Array::matrix(m, n, std::move(out)), {ia},
                  [ia, m, n](std::span<const double> g, AdjointSink& s) {
                    auto ga = s.acc(ia, m);
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < n; ++j) ga[i] += g[i * n + j];
                  });
}

inline constexpr double kNormSmoothing = 1e-10;

/// sqrt(|x|^2 + 1e-10); the smoothing keeps the gradient finite at the origin.
inline Var norm(const Var& a) {
  const Array& av = a.value();
  double ss = kNormSmoothing;
  for (double x : av.data()) ss += x * x;
  const double r = std::sqrt(ss);
  Tape& t = a.tape();
  const ValueId ia = a.id();
  const std::size_t n = av.size();
  return t.record(Array::scalar(r), {ia}, [&t, ia, n, r](std::span<const double> g, AdjointSink& s) {
    const Array& av = t.value(ia);
    auto ga = s.acc(ia, n);
    for (std::size_t i = 0; i < n; ++i) ga[i] += g[0] * av[i] / r;
  });
}

/// Smoothed norm of each row: [m,n] -> [m].
inline Var row_norm(const Var& a) {
  const Array& av = a.value();
  if (av.rank() != 2) throw ShapeError("row_norm: expected rank 2, got " + shape_str(av.shape()));
  const std::size_t m = av.dim(0), n = av.dim(1);
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    double ss = kNormSmoothing;
    for (std::size_t j = 0; j < n; ++j) ss += av[i * n + j] * av[i * n + j];
    out[i] = std::sqrt(ss);
  }
  Tape& t = a.tape();
  const ValueId ia = a.id();
  auto res = Array::vector(out);
  return t.record(std::move(res), {ia},
                  [&t, ia, m, n, r = std::move(out)](std::span<const double> g, AdjointSink& s) {
                    const Array& av = t.value(ia);
                    auto ga = s.acc(ia, m * n);
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i] * av[i * n + j] / r[i];
                  });
}

/// Concatenates rank-1 arrays end to end, or rank-2 arrays with equal row
/// counts along columns.
inline Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Tape& t = parts.front().tape();
  const std::size_t rank = parts.front().value().rank();
  if (rank != 1 && rank != 2) throw ShapeError("concat: expected rank 1 or 2, got " + shape_str(parts.front().shape()));
  const std::size_t m = rank == 2 ? parts.front().value().dim(0) : 1;
  std::vector<std::size_t> widths;
  std::vector<ValueId> ids;
  for (const auto& p : parts) {
    detail::same_tape(parts.front(), p, "concat");
    const Array& v = p.value();
    if (v.rank() != rank || (rank == 2 && v.dim(0) != m)) {
      throw ShapeError("concat: incompatible shapes " + shape_str(parts.front().shape()) + " and " + shape_str(v.shape()));
    }
    widths.push_back(rank == 2 ? v.dim(1) : v.dim(0));
    ids.push_back(p.id());
  }
  const std::size_t total = std::accumulate(widths.begin(), widths.end(), std::size_t{0});
  std::vector<double> out(m * total);
  std::size_t off = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Array& v = parts[p].value();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < widths[p]; ++j) out[i * total + off + j] = v[i * widths[p] + j];
    off += widths[p];
  }
  Shape os = rank == 2 ? Shape{m, total} : Shape{total};
  return t.record(Array(std::move(os), std::move(out)), ids,
                  [&t, ids, widths, m, total](std::span<const double> g, AdjointSink& s) {
                    std::size_t off = 0;
                    for (std::size_t p = 0; p < ids.size(); ++p) {
                      if (t.requires_grad(ids[p])) {
                        auto gp = s.acc(ids[p], m * widths[p]);
                        for (std::size_t i = 0; i < m; ++i)
                          for (std::size_t j = 0; j < widths[p]; ++j) gp[i * widths[p] + j] += g[i * total + off + j];
                      }
                      off += widths[p];
                    }
                  });
}

/// Selects rows (or entries of a rank-1 array) by index; indices may repeat.
inline Var gather(const Var& a, std::vector<std::size_t> index) {
  const Array& av = a.value();
  if (av.rank() != 1 && av.rank() != 2) throw ShapeError("gather: expected rank 1 or 2, got " + shape_str(av.shape()));
  const std::size_t m = av.dim(0);
  const std::size_t w = av.rank() == 2 ? av.dim(1) : 1;
  std::vector<double> out(index.size() * w);
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= m) throw ShapeError("gather: index " + std::to_string(index[r]) + " out of range for " + shape_str(av.shape()));
    for (std::size_t j = 0; j < w; ++j) out[r * w + j] = av[index[r] * w + j];
  }
  Shape os = av.rank() == 2 ? Shape{index.size(), w} : Shape{index.size()};
  Tape& t = a.tape();
  const ValueId ia = a.id();
  return t.record(Array(std::move(os), std::move(out)), {ia},
                  [ia, m, w, idx = std::move(index)](std::span<const double> g, AdjointSink& s) {
                    auto ga = s.acc(ia, m * w);
                    for (std::size_t r = 0; r < idx.size(); ++r)
                      for (std::size_t j = 0; j < w; ++j) ga[idx[r] * w + j] += g[r * w + j];
                  });
}

/// Adjoint of gather: row r of `a` is added into row index[r] of an
/// `rows`-row zero array.
inline Var scatter_add(const Var& a, std::vector<std::size_t> index, std::size_t rows) {
  const Array& av = a.value();
  if ((av.rank() != 1 && av.rank() != 2) || av.dim(0) != index.size()) {
    throw ShapeError("scatter_add: shape " + shape_str(av.shape()) + " does not match " +
                     std::to_string(index.size()) + " indices");
  }
  const std::size_t w = av.rank() == 2 ? av.dim(1) : 1;
  std::vector<double> out(rows * w, 0.0);
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= rows) throw ShapeError("scatter_add: index " + std::to_string(index[r]) + " out of range");
    for (std::size_t j = 0; j < w; ++j) out[index[r] * w + j] += av[r * w + j];
  }
  Shape os = av.rank() == 2 ? Shape{rows, w} : Shape{rows};
  Tape& t = a.tape();
  const ValueId ia = a.id();
  return t.record(Array(std::move(os), std::move(out)), {ia},
                  [ia, w, idx = std::move(index)](std::span<const double> g, AdjointSink& s) {
                    auto ga = s.acc(ia, idx.size() * w);
                    for (std::size_t r = 0; r < idx.size(); ++r)
                      for (std::size_t j = 0; j < w; ++j) ga[r * w + j] += g[idx[r] * w + j];
                  });
}

inline Var reshape(const Var& a, Shape shape) {
  const Array& av = a.value();
  if (shape_size(shape) != av.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(av.shape()) + " as " + shape_str(shape));
  }
  Tape& t = a.tape();
  const ValueId ia = a.id();
  const std::size_t n = av.size();
  return t.record(av.reshaped(std::move(shape)), {ia}, [ia, n](std::span<const double> g, AdjointSink& s) {
    auto ga = s.acc(ia, n);
    for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
  });
}

}  // namespace cpc
