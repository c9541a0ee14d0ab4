#pragma once

// Reverse-mode differentiation over a linear tape.
//
// Every operation appends one node holding its forward value plus a closure
// that maps the node's output gradient onto its inputs. Nodes are appended in
// evaluation order, so replaying the tape from the back is a valid
// topological order and each recorded use of an input contributes exactly
// once.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "am3/errors.hpp"
#include "am3/tensor.hpp"

namespace am3 {

using Rng = std::mt19937_64;

/// A trainable tensor with its momentum buffer.
struct Parameter {
  Parameter() = default;
  explicit Parameter(Tensor v) : value(std::move(v)), velocity(value.shape(), 0.0) {}

  Tensor value;
  Tensor velocity;
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; only valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  // Receives the gradient flowing into the node and pushes contributions to
  // the node's inputs through Tape::accumulate.
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  explicit Tape(bool recording = true) : recording_(recording) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return recording_; }

  Var constant(Tensor value) { return push(std::move(value), false, nullptr); }

  /// A leaf whose gradient is tracked.
  Var variable(Tensor value) { return push(std::move(value), recording_, nullptr); }

  /// Registers a parameter as a leaf. Watching the same parameter twice
  /// returns the same node.
  Var watch(const Parameter& param) {
    if (auto it = watched_.find(&param); it != watched_.end()) return Var(this, it->second);
    Var v = variable(param.value);
    watched_.emplace(&param, v.id());
    return v;
  }

  /// Appends the result of an operation. The closure is kept only when
  /// recording and at least one input carries a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
    bool needs = false;
    for (const Var& in : inputs) {
      check_owner(in);
      needs = needs || nodes_[in.id()].needs_grad;
    }
    needs = needs && recording_;
    return push(std::move(value), needs, needs ? std::move(backward) : nullptr);
  }

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool needs_grad(const Var& v) const { return nodes_.at(v.id()).needs_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  void accumulate(const Var& v, const Tensor& grad) { accumulate(v.id(), grad); }

  void accumulate(std::size_t id, const Tensor& grad) {
    Node& node = nodes_[id];
    if (!node.needs_grad) return;
    if (grad.size() != node.value.size()) {
      throw DimensionError("gradient of shape " + shape_string(grad.shape()) + " for node of shape " +
                           shape_string(node.value.shape()));
    }
    if (node.grad.size() == 0) {
      node.grad = Tensor(node.value.shape(), grad.storage());
      return;
    }
    auto dst = node.grad.values();
    auto src = grad.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  /// Seeds d(loss)/d(loss) = 1 and replays the tape in reverse.
  void backward(const Var& loss) {
    check_owner(loss);
    if (!loss.value().is_scalar()) {
      throw UsageError("backward needs a scalar loss, got shape " + shape_string(loss.shape()));
    }
    for (Node& n : nodes_) n.grad = Tensor();
    accumulate(loss.id(), Tensor(loss.shape(), 1.0));
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& node = nodes_[i];
      if (!node.backward || node.grad.size() == 0) continue;
      // Copy: the closure may accumulate into nodes and we must not alias.
      const Tensor grad_out = node.grad;
      node.backward(*this, grad_out);
    }
  }

  /// Gradient of the last backward pass; zeros when the node received none.
  Tensor gradient(const Var& v) const {
    const Node& node = nodes_.at(v.id());
    if (node.grad.size() == 0) return Tensor(node.value.shape(), 0.0);
    return node.grad;
  }

  /// Gradient for a watched parameter; zeros when it was never used.
  Tensor gradient(const Parameter& param) const {
    auto it = watched_.find(&param);
    if (it == watched_.end()) return Tensor(param.value.shape(), 0.0);
    return gradient(Var(const_cast<Tape*>(this), it->second));
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    BackwardFn backward;
  };

  Var push(Tensor value, bool needs_grad, BackwardFn backward) {
    nodes_.push_back(Node{std::move(value), Tensor(), needs_grad, std::move(backward)});
    return Var(this, nodes_.size() - 1);
  }

  void check_owner(const Var& v) const {
    if (&v.tape() != this || v.id() >= nodes_.size()) throw UsageError("variable belongs to a different tape");
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> watched_;
  bool recording_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

namespace detail {

inline void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) throw DimensionError(std::string(what) + " expects a matrix, got " + shape_string(t.shape()));
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
}

template <typename F>
Tensor map(const Tensor& x, F f) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

inline Var add(const Var& a, const Var& b) {
  detail::require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, detail::map(g, [](double v) { return -v; }));
  });
}

inline Var mul(const Var& a, const Var& b) {
  detail::require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    Tensor ga = g, gb = g;
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] *= b.value()[i];
      gb[i] *= a.value()[i];
    }
    t.accumulate(a, ga);
    t.accumulate(b, gb);
  });
}

inline Var scale(const Var& x, double factor) {
  return x.tape().record(detail::map(x.value(), [factor](double v) { return v * factor; }), {x},
                         [x, factor](Tape& t, const Tensor& g) {
                           t.accumulate(x, detail::map(g, [factor](double v) { return v * factor; }));
                         });
}

inline Var sum(const Var& x) {
  double total = 0.0;
  for (double v : x.value().values()) total += v;
  return x.tape().record(Tensor::scalar(total), {x}, [x](Tape& t, const Tensor& g) {
    t.accumulate(x, Tensor(x.shape(), g[0]));
  });
}

inline Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

inline Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().record(std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    t.accumulate(x, g.reshaped(x.shape()));
  });
}

// ---------------------------------------------------------------------------
// Layers

/// Row i of the result is x_i * weight + bias.
inline Var affine(const Var& x, const Var& weight, const Var& bias) {
  const Tensor& X = x.value();
  const Tensor& W = weight.value();
  const Tensor& b = bias.value();
  detail::require_matrix(X, "affine input");
  detail::require_matrix(W, "affine weight");
  if (X.cols() != W.rows() || b.size() != W.cols()) {
    throw DimensionError("affine: input " + shape_string(X.shape()) + ", weight " + shape_string(W.shape()) +
                         ", bias " + shape_string(b.shape()));
  }
  const std::size_t n = X.rows(), in = W.rows(), out_dim = W.cols();
  Tensor out({n, out_dim});
  for (std::size_t r = 0; r < n; ++r) {
    double* o = &out.at(r, 0);
    for (std::size_t j = 0; j < out_dim; ++j) o[j] = b[j];
    for (std::size_t k = 0; k < in; ++k) {
      const double xv = X.at(r, k);
      if (xv == 0.0) continue;
      const double* w = &W.at(k, 0);
      for (std::size_t j = 0; j < out_dim; ++j) o[j] += xv * w[j];
    }
  }
  return x.tape().record(std::move(out), {x, weight, bias}, [x, weight, bias, n, in, out_dim](Tape& t, const Tensor& g) {
    const Tensor& X = x.value();
    const Tensor& W = weight.value();
    if (t.needs_grad(x)) {
      Tensor gx({n, in});
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t k = 0; k < in; ++k) {
          double acc = 0.0;
          const double* w = &W.at(k, 0);
          const double* gr = &g.at(r, 0);
          for (std::size_t j = 0; j < out_dim; ++j) acc += gr[j] * w[j];
          gx.at(r, k) = acc;
        }
      }
      t.accumulate(x, gx);
    }
    if (t.needs_grad(weight)) {
      Tensor gw({in, out_dim});
      for (std::size_t r = 0; r < n; ++r) {
        const double* gr = &g.at(r, 0);
        for (std::size_t k = 0; k < in; ++k) {
          const double xv = X.at(r, k);
          if (xv == 0.0) continue;
          double* dst = &gw.at(k, 0);
          for (std::size_t j = 0; j < out_dim; ++j) dst[j] += xv * gr[j];
        }
      }
      t.accumulate(weight, gw);
    }
    if (t.needs_grad(bias)) {
      Tensor gb(bias.shape());
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < out_dim; ++j) gb[j] += g.at(r, j);
      }
      t.accumulate(bias, gb);
    }
  });
}

/// max(0, x); the subgradient at 0 is 0.
inline Var relu(const Var& x) {
  return x.tape().record(detail::map(x.value(), [](double v) { return v > 0.0 ? v : 0.0; }), {x},
                         [x](Tape& t, const Tensor& g) {
                           Tensor gx = g;
                           for (std::size_t i = 0; i < gx.size(); ++i) {
                             if (!(x.value()[i] > 0.0)) gx[i] = 0.0;
                           }
                           t.accumulate(x, gx);
                         });
}

/// Logistic function evaluated on the branch that avoids overflow. The result
/// is clamped to the open interval (0, 1) so saturation never reaches the
/// endpoints.
inline double sigmoid(double x) {
  double s;
  if (x >= 0.0) {
    s = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    s = e / (1.0 + e);
  }
  constexpr double lo = std::numeric_limits<double>::denorm_min();
  const double hi = std::nextafter(1.0, 0.0);
  return std::clamp(s, lo, hi);
}

inline Var sigmoid(const Var& x) {
  Tensor out = detail::map(x.value(), [](double v) { return sigmoid(v); });
  return x.tape().record(out, {x}, [x, out](Tape& t, const Tensor& g) {
    Tensor gx = g;
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= out[i] * (1.0 - out[i]);
    t.accumulate(x, gx);
  });
}

/// Inverted dropout. Returns x itself when not training or keep_probability is 1.
inline Var dropout(const Var& x, double keep_probability, Rng& rng, bool training) {
  if (!(keep_probability > 0.0 && keep_probability <= 1.0)) {
    throw ConfigError("dropout keep probability must lie in (0, 1], got " + std::to_string(keep_probability));
  }
  if (!training || keep_probability == 1.0) return x;
  std::bernoulli_distribution keep(keep_probability);
  Tensor mask(x.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = keep(rng) ? 1.0 / keep_probability : 0.0;
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return x.tape().record(std::move(out), {x}, [x, mask](Tape& t, const Tensor& g) {
    Tensor gx = g;
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= mask[i];
    t.accumulate(x, gx);
  });
}

// ---------------------------------------------------------------------------
// Row manipulation

/// Gathers rows of a matrix; indices may repeat.
inline Var select_rows(const Var& x, std::vector<std::size_t> indices) {
  const Tensor& X = x.value();
  detail::require_matrix(X, "select_rows");
  const std::size_t d = X.cols();
  Tensor out({indices.size(), d});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= X.rows()) throw DimensionError("select_rows: row index out of range");
    std::copy_n(&X.at(indices[r], 0), d, &out.at(r, 0));
  }
  return x.tape().record(std::move(out), {x}, [x, indices = std::move(indices), d](Tape& t, const Tensor& g) {
    Tensor gx(x.shape());
    for (std::size_t r = 0; r < indices.size(); ++r) {
      for (std::size_t j = 0; j < d; ++j) gx.at(indices[r], j) += g.at(r, j);
    }
    t.accumulate(x, gx);
  });
}

/// Averages the rows assigned to each segment: out[s] = mean{x[r] : segment[r] == s}.
inline Var segment_mean(const Var& x, std::vector<std::size_t> segment, std::size_t n_segments) {
  const Tensor& X = x.value();
  detail::require_matrix(X, "segment_mean");
  if (segment.size() != X.rows()) throw DimensionError("segment_mean: one segment id per row required");
  const std::size_t d = X.cols();
  std::vector<double> counts(n_segments, 0.0);
  for (std::size_t s : segment) {
    if (s >= n_segments) throw DimensionError("segment_mean: segment id out of range");
    counts[s] += 1.0;
  }
  for (double c : counts) {
    if (c == 0.0) throw UsageError("segment_mean: empty segment");
  }
  Tensor out({n_segments, d});
  for (std::size_t r = 0; r < segment.size(); ++r) {
    for (std::size_t j = 0; j < d; ++j) out.at(segment[r], j) += X.at(r, j);
  }
  for (std::size_t s = 0; s < n_segments; ++s) {
    for (std::size_t j = 0; j < d; ++j) out.at(s, j) /= counts[s];
  }
  return x.tape().record(std::move(out), {x},
                         [x, segment = std::move(segment), counts = std::move(counts), d](Tape& t, const Tensor& g) {
                           Tensor gx(x.shape());
                           for (std::size_t r = 0; r < segment.size(); ++r) {
                             for (std::size_t j = 0; j < d; ++j) gx.at(r, j) = g.at(segment[r], j) / counts[segment[r]];
                           }
                           t.accumulate(x, gx);
                         });
}

inline Var concat_cols(const Var& a, const Var& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  detail::require_matrix(A, "concat_cols");
  detail::require_matrix(B, "concat_cols");
  if (A.rows() != B.rows()) {
    throw DimensionError("concat_cols: " + shape_string(A.shape()) + " and " + shape_string(B.shape()));
  }
  const std::size_t n = A.rows(), da = A.cols(), db = B.cols();
  Tensor out({n, da + db});
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(&A.at(r, 0), da, &out.at(r, 0));
    std::copy_n(&B.at(r, 0), db, &out.at(r, da));
  }
  return a.tape().record(std::move(out), {a, b}, [a, b, n, da, db](Tape& t, const Tensor& g) {
    Tensor ga({n, da}), gb({n, db});
    for (std::size_t r = 0; r < n; ++r) {
      std::copy_n(&g.at(r, 0), da, &ga.at(r, 0));
      std::copy_n(&g.at(r, da), db, &gb.at(r, 0));
    }
    t.accumulate(a, ga);
    t.accumulate(b, gb);
  });
}

/// Stacks the rows of `a` above the rows of `b`.
inline Var concat_rows(const Var& a, const Var& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  detail::require_matrix(A, "concat_rows");
  detail::require_matrix(B, "concat_rows");
  if (A.cols() != B.cols()) {
    throw DimensionError("concat_rows: " + shape_string(A.shape()) + " and " + shape_string(B.shape()));
  }
  const std::size_t na = A.rows(), nb = B.rows(), d = A.cols();
  std::vector<double> values(A.storage());
  values.insert(values.end(), B.storage().begin(), B.storage().end());
  return a.tape().record(Tensor({na + nb, d}, std::move(values)), {a, b}, [a, b, na, nb, d](Tape& t, const Tensor& g) {
    auto first = g.storage().begin();
    auto split = first + static_cast<std::ptrdiff_t>(na * d);
    t.accumulate(a, Tensor({na, d}, std::vector<double>(first, split)));
    t.accumulate(b, Tensor({nb, d}, std::vector<double>(split, g.storage().end())));
  });
}

/// Row-wise convex combination lambda[r] * p[r] + (1 - lambda[r]) * w[r].
/// Written in this form so that lambda == 1 reproduces p bit-for-bit.
inline Var convex_mix(const Var& lambda, const Var& p, const Var& w) {
  const Tensor& L = lambda.value();
  const Tensor& P = p.value();
  const Tensor& W = w.value();
  detail::require_matrix(P, "convex_mix");
  detail::require_same_shape(P, W, "convex_mix");
  if (L.size() != P.rows()) {
    throw DimensionError("convex_mix: " + shape_string(L.shape()) + " coefficients for " + shape_string(P.shape()));
  }
  const std::size_t n = P.rows(), d = P.cols();
  Tensor out({n, d});
  for (std::size_t r = 0; r < n; ++r) {
    const double l = L[r];
    for (std::size_t j = 0; j < d; ++j) out.at(r, j) = l * P.at(r, j) + (1.0 - l) * W.at(r, j);
  }
  return p.tape().record(std::move(out), {lambda, p, w}, [lambda, p, w, n, d](Tape& t, const Tensor& g) {
    const Tensor& L = lambda.value();
    const Tensor& P = p.value();
    const Tensor& W = w.value();
    Tensor gl(L.shape()), gp({n, d}), gw({n, d});
    for (std::size_t r = 0; r < n; ++r) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double gv = g.at(r, j);
        gp.at(r, j) = L[r] * gv;
        gw.at(r, j) = (1.0 - L[r]) * gv;
        acc += gv * (P.at(r, j) - W.at(r, j));
      }
      gl[r] = acc;
    }
    t.accumulate(lambda, gl);
    t.accumulate(p, gp);
    t.accumulate(w, gw);
  });
}

// ---------------------------------------------------------------------------
// Distances

inline double squared_euclidean(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("squared_euclidean: lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    acc += diff * diff;
  }
  return acc;
}

/// out[q, k] = ||x[q] - y[k]||^2
inline Var pairwise_sq_distance(const Var& x, const Var& y) {
  const Tensor& X = x.value();
  const Tensor& Y = y.value();
  detail::require_matrix(X, "pairwise_sq_distance");
  detail::require_matrix(Y, "pairwise_sq_distance");
  if (X.cols() != Y.cols()) {
    throw DimensionError("pairwise_sq_distance: " + shape_string(X.shape()) + " vs " + shape_string(Y.shape()));
  }
  const std::size_t nq = X.rows(), nk = Y.rows(), d = X.cols();
  Tensor out({nq, nk});
  for (std::size_t q = 0; q < nq; ++q) {
    for (std::size_t k = 0; k < nk; ++k) out.at(q, k) = squared_euclidean(X.row(q), Y.row(k));
  }
  return x.tape().record(std::move(out), {x, y}, [x, y, nq, nk, d](Tape& t, const Tensor& g) {
    const Tensor& X = x.value();
    const Tensor& Y = y.value();
    Tensor gx({nq, d}), gy({nk, d});
    for (std::size_t q = 0; q < nq; ++q) {
      for (std::size_t k = 0; k < nk; ++k) {
        const double c = 2.0 * g.at(q, k);
        if (c == 0.0) continue;
        for (std::size_t j = 0; j < d; ++j) {
          const double diff = X.at(q, j) - Y.at(k, j);
          gx.at(q, j) += c * diff;
          gy.at(k, j) -= c * diff;
        }
      }
    }
    t.accumulate(x, gx);
    t.accumulate(y, gy);
  });
}

/// out[r] = ||x[r] - y[r]||^2, shape [rows, 1].
inline Var rowwise_sq_distance(const Var& x, const Var& y) {
  const Tensor& X = x.value();
  const Tensor& Y = y.value();
  detail::require_matrix(X, "rowwise_sq_distance");
  detail::require_same_shape(X, Y, "rowwise_sq_distance");
  const std::size_t n = X.rows(), d = X.cols();
  Tensor out({n, 1});
  for (std::size_t r = 0; r < n; ++r) out[r] = squared_euclidean(X.row(r), Y.row(r));
  return x.tape().record(std::move(out), {x, y}, [x, y, n, d](Tape& t, const Tensor& g) {
    const Tensor& X = x.value();
    const Tensor& Y = y.value();
    Tensor gx({n, d}), gy({n, d});
    for (std::size_t r = 0; r < n; ++r) {
      const double c = 2.0 * g[r];
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = X.at(r, j) - Y.at(r, j);
        gx.at(r, j) = c * diff;
        gy.at(r, j) = -c * diff;
      }
    }
    t.accumulate(x, gx);
    t.accumulate(y, gy);
  });
}

/// Elementwise square root used to turn squared distances into distances.
/// The derivative at 0 is taken as 0.
inline Var elementwise_sqrt(const Var& x) {
  Tensor out = detail::map(x.value(), [](double v) { return std::sqrt(v); });
  return x.tape().record(out, {x}, [x, out](Tape& t, const Tensor& g) {
    Tensor gx = g;
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = out[i] > 0.0 ? g[i] / (2.0 * out[i]) : 0.0;
    t.accumulate(x, gx);
  });
}

// ---------------------------------------------------------------------------
// Softmax and the classification loss

/// Probabilities proportional to exp(score), shifted by the max score.
inline std::vector<double> softmax_from_scores(std::span<const double> scores) {
  if (scores.empty()) throw UsageError("softmax of an empty score vector");
  const double top = *std::max_element(scores.begin(), scores.end());
  std::vector<double> out(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - top);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

inline double log_sum_exp(std::span<const double> scores) {
  const double top = *std::max_element(scores.begin(), scores.end());
  double total = 0.0;
  for (double s : scores) total += std::exp(s - top);
  return top + std::log(total);
}

/// Mean over rows of -log softmax(scores[r])[labels[r]].
inline Var softmax_cross_entropy(const Var& scores, std::vector<std::size_t> labels) {
  const Tensor& S = scores.value();
  detail::require_matrix(S, "softmax_cross_entropy");
  if (labels.size() != S.rows()) throw DimensionError("softmax_cross_entropy: one label per row required");
  const std::size_t n = S.rows(), k = S.cols();
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (labels[r] >= k) throw DimensionError("softmax_cross_entropy: label out of range");
    total += log_sum_exp(S.row(r)) - S.at(r, labels[r]);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  return scores.tape().record(Tensor::scalar(total * inv_n), {scores},
                              [scores, labels = std::move(labels), n, k, inv_n](Tape& t, const Tensor& g) {
                                const Tensor& S = scores.value();
                                Tensor gs({n, k});
                                for (std::size_t r = 0; r < n; ++r) {
                                  const auto probs = softmax_from_scores(S.row(r));
                                  for (std::size_t j = 0; j < k; ++j) {
                                    gs.at(r, j) = g[0] * inv_n * (probs[j] - (j == labels[r] ? 1.0 : 0.0));
                                  }
                                }
                                t.accumulate(scores, gs);
                              });
}

}  // namespace am3
