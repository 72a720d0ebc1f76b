#pragma once

// Clustering of posts by latent representation: k-means++ / Lloyd, DEC
// refinement with a student-t kernel, and per-cluster aspect centroids.

#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vadet/autograd.hpp"
#include "vadet/corpus.hpp"
#include "vadet/log.hpp"
#include "vadet/model.hpp"
#include "vadet/optim.hpp"
#include "vadet/rng.hpp"

namespace vadet::clustering {

using Mat = Matrix<double>;

struct ClusterModel {
  int K = 0;
  Mat centroids;       // K x d, in projected space
  double alpha = 1.0;  // student-t degrees of freedom
  Mat q;               // n x K soft assignments
  std::vector<int> labels;
  Mat proj_w;          // d x d affine projection applied before the kernel (identity at start)
  Mat proj_b;          // 1 x d
  double scale = 1.0;  // latents are divided by this before the projection
  double inertia = 0;  // k-means objective at the end of Lloyd
  int iterations = 0;

  Mat project(const Mat& z) const {
    if (proj_w.size() == 0) return z / scale;
    return ((z / scale) * proj_w).rowwise() + proj_b.row(0);
  }
};

// ---------------------------------------------------------------------------
// Latent extraction
// ---------------------------------------------------------------------------

/// Posterior means per post. z_a runs the span-only pass ([CLS] + w_{a:b}).
template <class T>
Mat extract_latents(const std::vector<corpus::TokenizedExample>& posts, const model::Model<T>& m, latent::Role which,
                    std::size_t batch = 256) {
  Mat out(static_cast<Eigen::Index>(posts.size()), which == latent::Role::z_s ? m.config().d_zs : m.config().d_zw);
  std::vector<std::vector<int>> span_ids;
  for (std::size_t start = 0; start < posts.size(); start += batch) {
    const std::size_t end = std::min(posts.size(), start + batch);
    std::vector<const std::vector<int>*> views;
    span_ids.clear();
    span_ids.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) {
      if (which == latent::Role::z_a) {
        if (!posts[i].span_tok) throw std::invalid_argument("extract_latents: post '" + posts[i].id + "' has no span");
        span_ids.push_back(model::span_sequence(posts[i].ids, *posts[i].span_tok));
        views.push_back(&span_ids.back());
      } else {
        views.push_back(&posts[i].ids);
      }
    }
    const auto role = which == latent::Role::z_s ? latent::Role::z_s : latent::Role::z_w;
    out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(end - start)) =
        m.posterior_means(views, role).template cast<double>();
  }
  return out;
}

// ---------------------------------------------------------------------------
// k-means
// ---------------------------------------------------------------------------

namespace detail {

inline Mat sq_distances(const Mat& x, const Mat& c) {
  Mat d = (-2.0 * x * c.transpose()).eval();
  d.colwise() += x.rowwise().squaredNorm();
  d.rowwise() += c.rowwise().squaredNorm().transpose();
  return d.cwiseMax(0.0);
}

/// Row argmin, ties to the lower index.
inline std::vector<int> argmin_rows(const Mat& d) {
  std::vector<int> out(static_cast<std::size_t>(d.rows()));
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    Eigen::Index k = 0;
    for (Eigen::Index j = 1; j < d.cols(); ++j) {
      if (d(i, j) < d(i, k)) k = j;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(k);
  }
  return out;
}

inline std::vector<int> argmax_rows(const Mat& q) {
  std::vector<int> out(static_cast<std::size_t>(q.rows()));
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    Eigen::Index k = 0;
    for (Eigen::Index j = 1; j < q.cols(); ++j) {
      if (q(i, j) > q(i, k)) k = j;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(k);
  }
  return out;
}

}  // namespace detail

struct KMeansConfig {
  int max_iter = 300;
  double tol = 1e-4;  // relative inertia change
  int n_init = 10;    // restarts; the lowest inertia wins
};

inline ClusterModel kmeans_once(const Mat& x, int K, Rng& rng, const KMeansConfig& cfg) {
  const Eigen::Index n = x.rows();
  ClusterModel cm;
  cm.K = K;
  cm.centroids.resize(K, x.cols());
  // k-means++ seeding
  cm.centroids.row(0) = x.row(static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(n))));
  Eigen::VectorXd best = (x.rowwise() - cm.centroids.row(0)).rowwise().squaredNorm();
  for (int k = 1; k < K; ++k) {
    const double total = best.sum();
    Eigen::Index pick = 0;
    if (total <= 0) {
      pick = static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(n)));
    } else {
      double r = rng.uniform() * total;
      for (pick = 0; pick < n - 1; ++pick) {
        r -= best(pick);
        if (r < 0) break;
      }
    }
    cm.centroids.row(k) = x.row(pick);
    best = best.cwiseMin((x.rowwise() - cm.centroids.row(k)).rowwise().squaredNorm());
  }
  double prev = std::numeric_limits<double>::infinity();
  for (int it = 0; it < cfg.max_iter; ++it) {
    const Mat d = detail::sq_distances(x, cm.centroids);
    cm.labels = detail::argmin_rows(d);
    double inertia = 0;
    for (Eigen::Index i = 0; i < n; ++i) inertia += d(i, cm.labels[static_cast<std::size_t>(i)]);
    cm.inertia = inertia;
    cm.iterations = it + 1;
    Mat sum = Mat::Zero(K, x.cols());
    std::vector<int> count(static_cast<std::size_t>(K), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sum.row(cm.labels[static_cast<std::size_t>(i)]) += x.row(i);
      ++count[static_cast<std::size_t>(cm.labels[static_cast<std::size_t>(i)])];
    }
    for (int k = 0; k < K; ++k) {
      if (count[static_cast<std::size_t>(k)] > 0) cm.centroids.row(k) = sum.row(k) / count[static_cast<std::size_t>(k)];
    }
    if (std::isfinite(prev) && (prev - inertia) <= cfg.tol * std::max(prev, 1e-300)) break;
    prev = inertia;
  }
  const Mat d = detail::sq_distances(x, cm.centroids);
  cm.labels = detail::argmin_rows(d);
  cm.inertia = 0;
  for (Eigen::Index i = 0; i < n; ++i) cm.inertia += d(i, cm.labels[static_cast<std::size_t>(i)]);
  return cm;
}

/// k-means++ seeding followed by Lloyd iterations.
inline ClusterModel kmeans(const Mat& x, int K, std::uint64_t seed, const KMeansConfig& cfg = {}) {
  if (K < 1) throw std::invalid_argument("kmeans: K must be >= 1");
  if (K > x.rows()) throw std::invalid_argument("kmeans: K exceeds the number of points");
  if (!x.allFinite()) throw std::domain_error("kmeans: non-finite input");
  Rng rng(seed);
  std::optional<ClusterModel> best;
  for (int r = 0; r < std::max(1, cfg.n_init); ++r) {
    auto cm = kmeans_once(x, K, rng, cfg);
    if (!best || cm.inertia < best->inertia) best = std::move(cm);
  }
  return *best;
}

// ---------------------------------------------------------------------------
// DEC
// ---------------------------------------------------------------------------

/// q_ij proportional to (1 + |z_i - mu_j|^2 / alpha)^(-(alpha + 1) / 2), rows normalized.
inline Mat dec_soft_assign(const Mat& z, const Mat& centroids, double alpha = 1.0) {
  if (z.cols() != centroids.cols()) throw std::invalid_argument("dec_soft_assign: dimension mismatch");
  const Mat d = detail::sq_distances(z, centroids);
  // Computed in log space so distant points do not underflow to an all-zero row.
  Mat lq = (-(alpha + 1.0) / 2.0) * (1.0 + d.array() / alpha).log();
  lq = lq.colwise() - lq.rowwise().maxCoeff();
  Mat q = lq.array().exp();
  q = q.array().colwise() / q.rowwise().sum().array();
  return q;
}

/// p_ij = (q_ij^2 / f_j) / sum_j' (q_ij'^2 / f_j'), f_j = sum_i q_ij.
inline Mat dec_target(const Mat& q) {
  const Eigen::RowVectorXd f = q.colwise().sum();
  Mat p = q.array().square().rowwise() / f.array().max(1e-300);
  p = p.array().colwise() / p.rowwise().sum().array().max(1e-300);
  return p;
}

/// KL(P || Q) averaged over rows.
inline double dec_kl(const Mat& p, const Mat& q) {
  double s = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double a = p.data()[i], b = q.data()[i];
    if (a > 0) s += a * std::log(a / std::max(b, 1e-300));
  }
  return s / static_cast<double>(p.rows());
}

struct DecConfig {
  int max_epochs = 50;
  int steps_per_epoch = 20;  // gradient steps with P held fixed
  double lr = 1e-2;
  double tol = 1e-3;         // stop when fewer than this fraction of labels change
  bool refine_projection = true;
};

struct DecTrace {
  std::vector<double> kl;            // KL(P || Q) at the start of each epoch
  std::vector<double> label_change;  // fraction of hard labels changed by each epoch
  bool converged = false;
};

namespace detail {

/// Gradient of mean KL(P || Q) with respect to embeddings e (n x d) and centroids.
inline void dec_grads(const Mat& e, const Mat& mu, const Mat& p, const Mat& q, double alpha, Mat* ge, Mat* gmu) {
  const Mat d = sq_distances(e, mu);
  const Mat kern = (1.0 + d.array() / alpha).inverse();
  const Mat w = ((p - q).array() * kern.array()) * ((alpha + 1.0) / alpha) / static_cast<double>(e.rows());
  // sum_j w_ij (e_i - mu_j)
  *ge = w.rowwise().sum().asDiagonal() * e - w * mu;
  *gmu = -(w.transpose() * e - w.colwise().sum().transpose().asDiagonal() * mu);
}

inline void reseed_empty(const Mat& e, ClusterModel& cm) {
  std::vector<int> count(static_cast<std::size_t>(cm.K), 0);
  for (int l : cm.labels) ++count[static_cast<std::size_t>(l)];
  for (int k = 0; k < cm.K; ++k) {
    if (count[static_cast<std::size_t>(k)] > 0) continue;
    const Mat d = sq_distances(e, cm.centroids);
    Eigen::Index far = 0;
    double fd = -1;
    for (Eigen::Index i = 0; i < e.rows(); ++i) {
      const double di = d(i, cm.labels[static_cast<std::size_t>(i)]);
      if (di > fd) {
        fd = di;
        far = i;
      }
    }
    log::warn("dec_refine: cluster " + std::to_string(k) + " is empty; reinitialized to the farthest point");
    cm.centroids.row(k) = e.row(far);
    cm.labels[static_cast<std::size_t>(far)] = k;
  }
}

}  // namespace detail

/// Refines centroids (and the affine projection) with the latents held fixed.
/// Latents are first divided by their RMS spread so the kernel and step sizes
/// do not depend on the latent scale; k-means results are unaffected by this.
inline ClusterModel dec_refine(const Mat& z_raw, ClusterModel cm, const DecConfig& cfg = {}, DecTrace* trace = nullptr) {
  if (cm.centroids.rows() != cm.K || cm.centroids.cols() != z_raw.cols()) throw std::invalid_argument("dec_refine: model does not fit the latents");
  const Eigen::Index d = z_raw.cols();
  if (cm.proj_w.size() == 0) {
    const double spread = std::sqrt((z_raw.rowwise() - z_raw.colwise().mean()).rowwise().squaredNorm().mean());
    cm.scale = spread > 0 ? spread : 1.0;
    cm.proj_w = Mat::Identity(d, d);
    cm.proj_b = Mat::Zero(1, d);
    cm.centroids /= cm.scale;
  }
  const Mat z = z_raw / cm.scale;
  std::deque<Parameter<double>> params(3);
  params[0].name = "dec.proj.w";
  params[0].value = cm.proj_w;
  params[1].name = "dec.proj.b";
  params[1].value = cm.proj_b;
  params[2].name = "dec.centroids";
  params[2].value = cm.centroids;
  optim::AdamW<double> opt({cfg.lr, 0.9, 0.999, 1e-8, 0.0, 0.0});
  DecTrace local;
  DecTrace& tr = trace ? *trace : local;
  auto embed = [&] { return Mat((z * params[0].value).rowwise() + params[1].value.row(0)); };
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    Mat e = embed();
    cm.q = dec_soft_assign(e, params[2].value, cm.alpha);
    const Mat p = dec_target(cm.q);
    tr.kl.push_back(dec_kl(p, cm.q));
    const auto before = detail::argmax_rows(cm.q);
    for (int s = 0; s < cfg.steps_per_epoch; ++s) {
      e = embed();
      const Mat q = dec_soft_assign(e, params[2].value, cm.alpha);
      Mat ge, gmu;
      detail::dec_grads(e, params[2].value, p, q, cm.alpha, &ge, &gmu);
      if (cfg.refine_projection) {
        params[0].grad = z.transpose() * ge;
        params[1].grad = ge.colwise().sum();
      } else {
        params[0].grad = Mat::Zero(d, d);
        params[1].grad = Mat::Zero(1, d);
      }
      params[2].grad = gmu;
      opt.step(params, cfg.lr);
    }
    e = embed();
    cm.q = dec_soft_assign(e, params[2].value, cm.alpha);
    cm.labels = detail::argmax_rows(cm.q);
    cm.centroids = params[2].value;
    detail::reseed_empty(e, cm);
    params[2].value = cm.centroids;
    std::size_t changed = 0;
    for (std::size_t i = 0; i < before.size(); ++i) changed += before[i] != cm.labels[i];
    const double frac = changed / static_cast<double>(std::max<std::size_t>(1, before.size()));
    tr.label_change.push_back(frac);
    if (frac < cfg.tol) {
      tr.converged = true;
      break;
    }
  }
  cm.proj_w = params[0].value;
  cm.proj_b = params[1].value;
  cm.centroids = params[2].value;
  cm.q = dec_soft_assign(cm.project(z_raw), cm.centroids, cm.alpha);
  cm.labels = detail::argmax_rows(cm.q);
  return cm;
}

/// Joint refinement: the same KL(P || Q) objective also updates the encoder
/// parameters behind the chosen posterior mean. One epoch is one pass over the
/// posts in minibatches, with P recomputed from all posts at the epoch start.
template <class T>
ClusterModel dec_refine_joint(const std::vector<corpus::TokenizedExample>& posts, model::Model<T>& m, ClusterModel cm,
                              latent::Role which, const DecConfig& cfg = {}, double encoder_lr = 1e-4,
                              std::size_t batch = 128, DecTrace* trace = nullptr) {
  if (which == latent::Role::z_a) throw std::invalid_argument("dec_refine_joint: z_a is not supported");
  Mat z = extract_latents(posts, m, which);
  if (cm.proj_w.size() == 0) {
    DecConfig init = cfg;
    init.max_epochs = 0;
    cm = dec_refine(z, std::move(cm), init);
  }
  std::deque<Parameter<double>> head(3);
  head[0] = {"dec.proj.w", cm.proj_w, {}};
  head[1] = {"dec.proj.b", cm.proj_b, {}};
  head[2] = {"dec.centroids", cm.centroids, {}};
  optim::AdamW<double> head_opt({cfg.lr, 0.9, 0.999, 1e-8, 0.0, 0.0});
  optim::AdamW<T> enc_opt({encoder_lr, 0.9, 0.999, 1e-8, 0.0, 1.0});
  DecTrace local;
  DecTrace& tr = trace ? *trace : local;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    cm.proj_w = head[0].value;
    cm.proj_b = head[1].value;
    cm.centroids = head[2].value;
    cm.q = dec_soft_assign(cm.project(z), cm.centroids, cm.alpha);
    const Mat p = dec_target(cm.q);
    tr.kl.push_back(dec_kl(p, cm.q));
    const auto before = detail::argmax_rows(cm.q);
    for (std::size_t start = 0; start < posts.size(); start += batch) {
      const std::size_t end = std::min(posts.size(), start + batch);
      std::vector<const std::vector<int>*> views;
      for (std::size_t i = start; i < end; ++i) views.push_back(&posts[i].ids);
      for (auto& prm : m.parameters()) prm.zero_grad();
      ag::Tape<T> tape;
      const auto packed = model::pack(views);
      auto psi = m.lower_forward(tape, packed, {});
      auto mu = m.posterior(tape, psi, packed, which).mu;
      const Mat zb = mu.value().template cast<double>();
      const Mat e = ((zb / cm.scale) * head[0].value).rowwise() + head[1].value.row(0);
      const auto rows = static_cast<Eigen::Index>(end - start);
      const Mat pb = p.middleRows(static_cast<Eigen::Index>(start), rows);
      const Mat qb = dec_soft_assign(e, head[2].value, cm.alpha);
      Mat ge, gmu;
      detail::dec_grads(e, head[2].value, pb, qb, cm.alpha, &ge, &gmu);
      head[0].grad = (zb / cm.scale).transpose() * ge;
      head[1].grad = ge.colwise().sum();
      head[2].grad = gmu;
      if (!cfg.refine_projection) {
        head[0].grad.setZero();
        head[1].grad.setZero();
      }
      const Matrix<T> gz = ((ge * head[0].value.transpose()) / cm.scale).template cast<T>();
      tape.backward(ag::sum(ag::mul(mu, tape.constant(gz))));
      enc_opt.step(m.parameters(), T(encoder_lr));
      head_opt.step(head, cfg.lr);
    }
    z = extract_latents(posts, m, which);
    cm.proj_w = head[0].value;
    cm.proj_b = head[1].value;
    const Mat e = cm.project(z);
    cm.centroids = head[2].value;
    cm.q = dec_soft_assign(e, cm.centroids, cm.alpha);
    cm.labels = detail::argmax_rows(cm.q);
    detail::reseed_empty(e, cm);
    head[2].value = cm.centroids;
    std::size_t changed = 0;
    for (std::size_t i = 0; i < before.size(); ++i) changed += before[i] != cm.labels[i];
    const double frac = changed / static_cast<double>(std::max<std::size_t>(1, before.size()));
    tr.label_change.push_back(frac);
    if (frac < cfg.tol) {
      tr.converged = true;
      break;
    }
  }
  cm.q = dec_soft_assign(cm.project(z), cm.centroids, cm.alpha);
  cm.labels = detail::argmax_rows(cm.q);
  return cm;
}

/// Initializes from k-means on the latents, then refines with DEC.
inline ClusterModel cluster_latents(const Mat& z, int K, std::uint64_t seed, const KMeansConfig& km = {},
                                    const DecConfig& dec = {}, DecTrace* trace = nullptr) {
  ClusterModel cm = kmeans(z, K, seed, km);
  return dec_refine(z, std::move(cm), dec, trace);
}

// ---------------------------------------------------------------------------
// Aspect centroids
// ---------------------------------------------------------------------------

struct AspectCentroid {
  int k = 0;
  Eigen::VectorXd z_hat;
  int count = 0;
};

/// Mean of member z_a vectors per cluster; empty clusters are absent.
inline std::vector<AspectCentroid> aspect_centroids(const std::vector<int>& labels, const Mat& z_a, int K) {
  if (static_cast<Eigen::Index>(labels.size()) != z_a.rows()) throw std::invalid_argument("aspect_centroids: label/row count mismatch");
  std::vector<AspectCentroid> out;
  for (int k = 0; k < K; ++k) {
    AspectCentroid c;
    c.k = k;
    c.z_hat = Eigen::VectorXd::Zero(z_a.cols());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != k) continue;
      c.z_hat += z_a.row(static_cast<Eigen::Index>(i)).transpose();
      ++c.count;
    }
    if (c.count == 0) {
      log::info("aspect_centroids: cluster " + std::to_string(k) + " is empty");
      continue;
    }
    c.z_hat /= c.count;
    out.push_back(std::move(c));
  }
  return out;
}

/// Centroids from the hard labels of a cluster model.
inline std::vector<AspectCentroid> aspect_centroids(const ClusterModel& cm, const Mat& z_a) {
  if (cm.labels.empty()) throw std::invalid_argument("aspect_centroids: cluster model has no assignments");
  return aspect_centroids(cm.labels, z_a, cm.K);
}

inline Mat centroid_matrix(const std::vector<AspectCentroid>& cs) {
  if (cs.empty()) throw std::invalid_argument("centroid_matrix: no centroids");
  Mat m(static_cast<Eigen::Index>(cs.size()), cs.front().z_hat.size());
  for (std::size_t i = 0; i < cs.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = cs[i].z_hat.transpose();
  return m;
}

}  // namespace vadet::clustering
