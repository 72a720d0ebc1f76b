#pragma once

// Minimal reverse-mode automatic differentiation over row-major matrices.
//
// A Tape records every intermediate matrix of one forward pass together with
// a closure that propagates its gradient to its inputs. Parameters enter the
// tape by reference: their gradients accumulate directly into the owning
// Parameter, so one backward() per minibatch is all the trainer needs.
//
// The scalar type is a template parameter. Training runs in float; gradient
// checks instantiate the same code in double.

#include <Eigen/Dense>

#include <cmath>
#include <deque>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vadet/rng.hpp"

namespace vadet {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// A named trainable tensor and its gradient accumulator.
template <class T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

namespace ag {

template <class T>
class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
template <class T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;

  const Matrix<T>& value() const { return tape->value(id); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  T scalar() const { return value()(0, 0); }
  bool valid() const { return tape != nullptr && id >= 0; }
};

template <class T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, int)>;

  /// With grad_enabled == false, parameters bind as constants and nothing is recorded for backward.
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }

  Var<T> constant(Matrix<T> v) { return push(std::move(v), false, nullptr); }
  Var<T> variable(Matrix<T> v) { return push(std::move(v), true, nullptr); }

  /// Binds a parameter without copying; gradients land in p.grad.
  Var<T> param(Parameter<T>& p) {
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) p.zero_grad();
    Node& n = nodes_.emplace_back();
    n.ext_value = &p.value;
    n.ext_grad = &p.grad;
    n.requires_grad = true;
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  /// Same parameter value, but treated as a constant (stop-gradient).
  Var<T> param_detached(const Parameter<T>& p) {
    Node& n = nodes_.emplace_back();
    n.ext_value = &p.value;
    n.requires_grad = false;
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  /// Records an op output. If no input needs a gradient the closure is dropped.
  Var<T> record(Matrix<T> v, std::initializer_list<Var<T>> inputs, Backward bw) {
    bool rg = false;
    for (const auto& in : inputs) rg = rg || nodes_[in.id].requires_grad;
    return push(std::move(v), rg, rg ? std::move(bw) : nullptr);
  }
  Var<T> record(Matrix<T> v, const std::vector<Var<T>>& inputs, Backward bw) {
    bool rg = false;
    for (const auto& in : inputs) rg = rg || nodes_[in.id].requires_grad;
    return push(std::move(v), rg, rg ? std::move(bw) : nullptr);
  }

  const Matrix<T>& value(int id) const {
    const Node& n = nodes_[id];
    return n.ext_value ? *n.ext_value : n.value;
  }

  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  /// Gradient buffer for a node, zero-allocated on first use.
  Matrix<T>& grad(int id) {
    Node& n = nodes_[id];
    if (n.ext_grad) return *n.ext_grad;
    if (!n.has_grad) {
      const auto& v = value(id);
      n.grad.setZero(v.rows(), v.cols());
      n.has_grad = true;
    }
    return n.grad;
  }

  bool has_grad(int id) const { return nodes_[id].has_grad || nodes_[id].ext_grad != nullptr; }

  /// Reverse sweep from a scalar (1x1) node.
  void backward(Var<T> loss, T seed = T(1)) {
    if (loss.value().size() != 1) throw std::invalid_argument("backward: loss must be a scalar");
    if (!nodes_[loss.id].requires_grad) return;
    grad(loss.id)(0, 0) += seed;
    for (int id = loss.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.backward && n.has_grad) n.backward(*this, id);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    const Matrix<T>* ext_value = nullptr;
    Matrix<T>* ext_grad = nullptr;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
  };

  Var<T> push(Matrix<T> v, bool rg, Backward bw) {
    Node& n = nodes_.emplace_back();
    n.value = std::move(v);
    n.requires_grad = rg;
    n.backward = std::move(bw);
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  std::deque<Node> nodes_;
  bool grad_enabled_ = true;
};

// Helper: accumulate into an input's gradient only if it needs one.
#define VADET_GRAD(tape, var) if ((tape).requires_grad((var).id)) (tape).grad((var).id)

// ---------------------------------------------------------------------------
// Elementwise and linear algebra
// ---------------------------------------------------------------------------

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  Matrix<T> out = a.value() + b.value();
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<T>& t, int o) {
    const Matrix<T>& g = t.grad(o);
    VADET_GRAD(t, a) += g;
    VADET_GRAD(t, b) += g;
  });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  Matrix<T> out = a.value() - b.value();
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<T>& t, int o) {
    const Matrix<T>& g = t.grad(o);
    VADET_GRAD(t, a) += g;
    VADET_GRAD(t, b) -= g;
  });
}

template <class T>
Var<T> scale(Var<T> a, T s) {
  Matrix<T> out = a.value() * s;
  return a.tape->record(std::move(out), {a}, [a, s](Tape<T>& t, int o) { VADET_GRAD(t, a) += t.grad(o) * s; });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  Matrix<T> out = a.value().cwiseProduct(b.value());
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<T>& t, int o) {
    const Matrix<T>& g = t.grad(o);
    VADET_GRAD(t, a) += g.cwiseProduct(b.value());
    VADET_GRAD(t, b) += g.cwiseProduct(a.value());
  });
}

/// Sum of all entries as a 1x1 node.
template <class T>
Var<T> sum(Var<T> a) {
  Matrix<T> out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape->record(std::move(out), {a}, [a](Tape<T>& t, int o) {
    const T g = t.grad(o)(0, 0);
    VADET_GRAD(t, a).array() += g;
  });
}

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  Matrix<T> out;
  out.noalias() = a.value() * b.value();
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<T>& t, int o) {
    const Matrix<T>& g = t.grad(o);
    if (t.requires_grad(a.id)) t.grad(a.id).noalias() += g * b.value().transpose();
    if (t.requires_grad(b.id)) t.grad(b.id).noalias() += a.value().transpose() * g;
  });
}

/// x W + b with W stored (in x out) and b a 1 x out row.
template <class T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> b) {
  Matrix<T> out;
  out.noalias() = x.value() * w.value();
  out.rowwise() += b.value().row(0);
  return x.tape->record(std::move(out), {x, w, b}, [x, w, b](Tape<T>& t, int o) {
    const Matrix<T>& g = t.grad(o);
    if (t.requires_grad(x.id)) t.grad(x.id).noalias() += g * w.value().transpose();
    if (t.requires_grad(w.id)) t.grad(w.id).noalias() += x.value().transpose() * g;
    VADET_GRAD(t, b) += g.colwise().sum();
  });
}

template <class T>
Var<T> tanh(Var<T> a) {
  Matrix<T> out = a.value().array().tanh().matrix();
  return a.tape->record(std::move(out), {a}, [a](Tape<T>& t, int o) {
    const Matrix<T>& y = t.value(o);
    VADET_GRAD(t, a) += (t.grad(o).array() * (T(1) - y.array().square())).matrix();
  });
}

/// GELU, tanh approximation.
template <class T>
Var<T> gelu(Var<T> a) {
  static constexpr T c = T(0.7978845608028654);  // sqrt(2/pi)
  static constexpr T k = T(0.044715);
  const auto& x = a.value().array();
  Matrix<T> inner = (c * (x + k * x.cube())).tanh().matrix();
  Matrix<T> out = (T(0.5) * x * (T(1) + inner.array())).matrix();
  return a.tape->record(std::move(out), {a}, [a, inner = std::move(inner)](Tape<T>& t, int o) {
    const auto& x = a.value().array();
    const auto th = inner.array();
    auto d = T(0.5) * (T(1) + th) + T(0.5) * x * (T(1) - th.square()) * c * (T(1) + T(3) * k * x.square());
    VADET_GRAD(t, a) += (t.grad(o).array() * d).matrix();
  });
}

/// Clamp with zero gradient where the bound is active.
template <class T>
Var<T> clamp(Var<T> a, T lo, T hi) {
  Matrix<T> out = a.value().cwiseMax(lo).cwiseMin(hi);
  return a.tape->record(std::move(out), {a}, [a, lo, hi](Tape<T>& t, int o) {
    const auto& x = a.value().array();
    VADET_GRAD(t, a) += (t.grad(o).array() * ((x >= lo) && (x <= hi)).template cast<T>()).matrix();
  });
}

/// Inverted dropout; identity when p == 0.
template <class T>
Var<T> dropout(Var<T> a, double p, Rng& rng) {
  if (p <= 0.0) return a;
  Matrix<T> keep(a.rows(), a.cols());
  const T s = T(1) / T(1.0 - p);
  for (Eigen::Index i = 0; i < keep.size(); ++i) keep.data()[i] = rng.uniform() < p ? T(0) : s;
  Matrix<T> out = a.value().cwiseProduct(keep);
  return a.tape->record(std::move(out), {a}, [a, keep = std::move(keep)](Tape<T>& t, int o) {
    VADET_GRAD(t, a) += t.grad(o).cwiseProduct(keep);
  });
}

/// Row-wise layer normalization with learned gain and bias (1 x d rows).
template <class T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps = T(1e-5)) {
  const Matrix<T>& xv = x.value();
  const Eigen::Index n = xv.rows(), d = xv.cols();
  Matrix<T> xhat(n, d);
  Vector<T> inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const T mean = xv.row(i).mean();
    const T var = (xv.row(i).array() - mean).square().mean();
    inv_std(i) = T(1) / std::sqrt(var + eps);
    xhat.row(i) = (xv.row(i).array() - mean) * inv_std(i);
  }
  Matrix<T> out = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  out.rowwise() += beta.value().row(0);
  return x.tape->record(std::move(out), {x, gamma, beta},
                        [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<T>& t, int o) {
                          const Matrix<T>& g = t.grad(o);
                          VADET_GRAD(t, gamma) += g.cwiseProduct(xhat).colwise().sum();
                          VADET_GRAD(t, beta) += g.colwise().sum();
                          if (!t.requires_grad(x.id)) return;
                          Matrix<T>& gx = t.grad(x.id);
                          const T dd = T(xhat.cols());
                          for (Eigen::Index i = 0; i < xhat.rows(); ++i) {
                            auto gh = (g.row(i).array() * gamma.value().row(0).array()).matrix().eval();
                            const T m1 = gh.mean();
                            const T m2 = gh.dot(xhat.row(i)) / dd;
                            gx.row(i).array() += inv_std(i) * (gh.array() - m1 - xhat.row(i).array() * m2);
                          }
                        });
}

// ---------------------------------------------------------------------------
// Row routing
// ---------------------------------------------------------------------------

/// Source/row pair for gather_rows.
struct RowRef {
  int source;
  Eigen::Index row;
};

/// Builds a matrix whose i-th row is sources[map[i].source].row(map[i].row).
template <class T>
Var<T> gather_rows(const std::vector<Var<T>>& sources, std::vector<RowRef> map) {
  const Eigen::Index d = sources.front().cols();
  for (const auto& s : sources) {
    if (s.cols() != d) throw std::invalid_argument("gather_rows: column mismatch");
  }
  Matrix<T> out(static_cast<Eigen::Index>(map.size()), d);
  for (std::size_t i = 0; i < map.size(); ++i) out.row(i) = sources[map[i].source].value().row(map[i].row);
  Tape<T>* tape = sources.front().tape;
  return tape->record(std::move(out), sources, [sources, map = std::move(map)](Tape<T>& t, int o) {
    const Matrix<T>& g = t.grad(o);
    for (std::size_t i = 0; i < map.size(); ++i) {
      const Var<T>& s = sources[map[i].source];
      if (t.requires_grad(s.id)) t.grad(s.id).row(map[i].row) += g.row(i);
    }
  });
}

/// Rows of one matrix by index (embedding lookup, [CLS] selection).
template <class T>
Var<T> take_rows(Var<T> src, const std::vector<int>& rows) {
  std::vector<RowRef> map;
  map.reserve(rows.size());
  for (int r : rows) map.push_back({0, r});
  return gather_rows<T>({src}, std::move(map));
}

/// Column j as an n x 1 matrix.
template <class T>
Var<T> column(Var<T> a, Eigen::Index j) {
  Matrix<T> out = a.value().col(j);
  return a.tape->record(std::move(out), {a}, [a, j](Tape<T>& t, int o) { VADET_GRAD(t, a).col(j) += t.grad(o); });
}

/// Contiguous row range of a packed matrix.
struct Segment {
  Eigen::Index offset;
  Eigen::Index length;
};

/// Mean of each segment's rows; one output row per segment.
template <class T>
Var<T> segment_mean(Var<T> x, std::vector<Segment> segs) {
  Matrix<T> out(static_cast<Eigen::Index>(segs.size()), x.cols());
  for (std::size_t s = 0; s < segs.size(); ++s) {
    if (segs[s].length <= 0) throw std::invalid_argument("segment_mean: empty segment");
    out.row(s) = x.value().middleRows(segs[s].offset, segs[s].length).colwise().mean();
  }
  return x.tape->record(std::move(out), {x}, [x, segs = std::move(segs)](Tape<T>& t, int o) {
    const Matrix<T>& g = t.grad(o);
    Matrix<T>& gx = t.grad(x.id);
    for (std::size_t s = 0; s < segs.size(); ++s) {
      const T w = T(1) / T(segs[s].length);
      gx.middleRows(segs[s].offset, segs[s].length).rowwise() += g.row(s) * w;
    }
  });
}

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

/// Per-sequence attention layout over a packed matrix.
///
/// Each segment attends only within itself. `blocked` lists (query, key)
/// pairs, in segment-local indices, whose attention weight is forced to 0.
struct AttentionLayout {
  std::vector<Segment> segments;
  std::vector<std::vector<std::pair<int, int>>> blocked;
};

/// Multi-head scaled dot-product attention on already-projected Q, K, V.
template <class T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, const AttentionLayout& layout, int heads) {
  const Eigen::Index width = q.cols();
  if (width % heads != 0) throw std::invalid_argument("attention: width not divisible by heads");
  const Eigen::Index dh = width / heads;
  const T scale = T(1) / std::sqrt(T(dh));
  Matrix<T> out = Matrix<T>::Zero(q.rows(), width);
  // Cached softmax weights, one block per (segment, head).
  std::vector<Matrix<T>> probs;
  probs.reserve(layout.segments.size() * static_cast<std::size_t>(heads));
  for (std::size_t s = 0; s < layout.segments.size(); ++s) {
    const auto [off, len] = layout.segments[s];
    for (int h = 0; h < heads; ++h) {
      auto qh = q.value().block(off, h * dh, len, dh);
      auto kh = k.value().block(off, h * dh, len, dh);
      auto vh = v.value().block(off, h * dh, len, dh);
      Matrix<T> sc;
      sc.noalias() = qh * kh.transpose();
      sc *= scale;
      if (s < layout.blocked.size()) {
        for (auto [qi, ki] : layout.blocked[s]) sc(qi, ki) = -std::numeric_limits<T>::infinity();
      }
      for (Eigen::Index i = 0; i < len; ++i) {
        const T m = sc.row(i).maxCoeff();
        sc.row(i) = (sc.row(i).array() - m).exp();
        sc.row(i) /= sc.row(i).sum();
      }
      out.block(off, h * dh, len, dh).noalias() = sc * vh;
      probs.push_back(std::move(sc));
    }
  }
  return q.tape->record(std::move(out), {q, k, v},
                        [q, k, v, layout, heads, dh, scale, probs = std::move(probs)](Tape<T>& t, int o) {
                          const Matrix<T>& g = t.grad(o);
                          const bool gq = t.requires_grad(q.id), gk = t.requires_grad(k.id), gv = t.requires_grad(v.id);
                          std::size_t p = 0;
                          for (const auto& [off, len] : layout.segments) {
                            for (int h = 0; h < heads; ++h, ++p) {
                              const Matrix<T>& pr = probs[p];
                              auto go = g.block(off, h * dh, len, dh);
                              if (gv) t.grad(v.id).block(off, h * dh, len, dh).noalias() += pr.transpose() * go;
                              if (!gq && !gk) continue;
                              Matrix<T> dp;
                              dp.noalias() = go * v.value().block(off, h * dh, len, dh).transpose();
                              Matrix<T> ds = pr.cwiseProduct(dp);
                              for (Eigen::Index i = 0; i < len; ++i) {
                                const T r = ds.row(i).sum();
                                ds.row(i) -= pr.row(i) * r;
                              }
                              ds *= scale;
                              if (gq) t.grad(q.id).block(off, h * dh, len, dh).noalias() += ds * k.value().block(off, h * dh, len, dh);
                              if (gk) t.grad(k.id).block(off, h * dh, len, dh).noalias() += ds.transpose() * q.value().block(off, h * dh, len, dh);
                            }
                          }
                        });
}

// ---------------------------------------------------------------------------
// Likelihood terms
// ---------------------------------------------------------------------------

/// Sum over rows of -log softmax(logits)[target]; rows with target < 0 are ignored.
template <class T>
Var<T> cross_entropy(Var<T> logits, std::vector<int> targets) {
  const Matrix<T>& z = logits.value();
  if (static_cast<Eigen::Index>(targets.size()) != z.rows()) throw std::invalid_argument("cross_entropy: target count");
  Matrix<T> soft(z.rows(), z.cols());
  T total = 0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const T m = z.row(i).maxCoeff();
    soft.row(i) = (z.row(i).array() - m).exp();
    const T norm = soft.row(i).sum();
    soft.row(i) /= norm;
    if (targets[i] >= 0) total += -(z(i, targets[i]) - m - std::log(norm));
  }
  Matrix<T> out(1, 1);
  out(0, 0) = total;
  return logits.tape->record(std::move(out), {logits},
                             [logits, targets = std::move(targets), soft = std::move(soft)](Tape<T>& t, int o) {
                               const T g = t.grad(o)(0, 0);
                               Matrix<T>& gl = t.grad(logits.id);
                               for (Eigen::Index i = 0; i < soft.rows(); ++i) {
                                 if (targets[i] < 0) continue;
                                 gl.row(i) += g * soft.row(i);
                                 gl(i, targets[i]) -= g;
                               }
                             });
}

/// Softmax over the rows of each segment of an n x 1 score column;
/// returns sum over segments of -log p[target], target local to the segment.
template <class T>
Var<T> segment_nll(Var<T> scores, std::vector<Segment> segs, std::vector<int> targets) {
  const Matrix<T>& z = scores.value();
  Matrix<T> soft(z.rows(), 1);
  T total = 0;
  for (std::size_t s = 0; s < segs.size(); ++s) {
    auto zs = z.middleRows(segs[s].offset, segs[s].length);
    const T m = zs.maxCoeff();
    auto ps = soft.middleRows(segs[s].offset, segs[s].length);
    ps = (zs.array() - m).exp().matrix();
    const T norm = ps.sum();
    ps /= norm;
    total += -(zs(targets[s], 0) - m - std::log(norm));
  }
  Matrix<T> out(1, 1);
  out(0, 0) = total;
  return scores.tape->record(
      std::move(out), {scores},
      [scores, segs = std::move(segs), targets = std::move(targets), soft = std::move(soft)](Tape<T>& t, int o) {
        const T g = t.grad(o)(0, 0);
        Matrix<T>& gs = t.grad(scores.id);
        for (std::size_t s = 0; s < segs.size(); ++s) {
          gs.middleRows(segs[s].offset, segs[s].length) += g * soft.middleRows(segs[s].offset, segs[s].length);
          gs(segs[s].offset + targets[s], 0) -= g;
        }
      });
}

#undef VADET_GRAD

}  // namespace ag
}  // namespace vadet
