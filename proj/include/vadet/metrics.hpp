#pragma once

// Evaluation: stance and span scores, clustering agreement, cluster coherence,
// conditional pseudo-perplexity and a linear probe over latents.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "vadet/corpus.hpp"
#include "vadet/log.hpp"
#include "vadet/model.hpp"
#include "vadet/rng.hpp"

namespace vadet::metrics {

// ---------------------------------------------------------------------------
// Stance
// ---------------------------------------------------------------------------

struct StanceScores {
  double accuracy = 0;
  double macro_f1 = 0;
  std::array<double, 3> f1{};
};

inline StanceScores stance_metrics(const std::vector<int>& pred, const std::vector<int>& gold) {
  if (pred.empty()) throw std::invalid_argument("stance_metrics: empty input");
  if (pred.size() != gold.size()) throw std::invalid_argument("stance_metrics: length mismatch");
  std::array<std::array<int, 3>, 3> cm{};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0 || pred[i] > 2 || gold[i] < 0 || gold[i] > 2) throw std::invalid_argument("stance_metrics: label outside {0,1,2}");
    ++cm[static_cast<std::size_t>(pred[i])][static_cast<std::size_t>(gold[i])];
  }
  StanceScores s;
  int correct = 0;
  for (std::size_t c = 0; c < 3; ++c) {
    correct += cm[c][c];
    int pc = 0, gc = 0;
    for (std::size_t o = 0; o < 3; ++o) {
      pc += cm[c][o];
      gc += cm[o][c];
    }
    s.f1[c] = (pc + gc) == 0 ? 0.0 : 2.0 * cm[c][c] / static_cast<double>(pc + gc);
  }
  s.accuracy = correct / static_cast<double>(pred.size());
  s.macro_f1 = (s.f1[0] + s.f1[1] + s.f1[2]) / 3.0;
  return s;
}

// ---------------------------------------------------------------------------
// Span
// ---------------------------------------------------------------------------

struct SpanScores {
  double em = 0;
  double f1 = 0;
};

/// Exact match and token-overlap F1 of inclusive spans.
inline SpanScores span_metrics(corpus::TokenSpan pred, corpus::TokenSpan gold) {
  if (pred.a > pred.b || gold.a > gold.b) throw std::invalid_argument("span_metrics: span with a > b");
  SpanScores s;
  s.em = (pred.a == gold.a && pred.b == gold.b) ? 1.0 : 0.0;
  const int overlap = std::max(0, std::min(pred.b, gold.b) - std::max(pred.a, gold.a) + 1);
  if (overlap == 0) return s;
  const double p = overlap / static_cast<double>(pred.b - pred.a + 1);
  const double r = overlap / static_cast<double>(gold.b - gold.a + 1);
  s.f1 = 2 * p * r / (p + r);
  return s;
}

/// Means over examples.
inline SpanScores span_metrics(const std::vector<corpus::TokenSpan>& pred, const std::vector<corpus::TokenSpan>& gold) {
  if (pred.empty()) throw std::invalid_argument("span_metrics: empty input");
  if (pred.size() != gold.size()) throw std::invalid_argument("span_metrics: length mismatch");
  SpanScores s;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    auto e = span_metrics(pred[i], gold[i]);
    s.em += e.em;
    s.f1 += e.f1;
  }
  s.em /= static_cast<double>(pred.size());
  s.f1 /= static_cast<double>(pred.size());
  return s;
}

// ---------------------------------------------------------------------------
// Clustering agreement
// ---------------------------------------------------------------------------

namespace detail {

/// Dense relabeling to 0..k-1 in order of first appearance.
inline std::vector<int> compact(const std::vector<int>& labels, int* k) {
  std::map<int, int> ids;
  std::vector<int> out;
  out.reserve(labels.size());
  for (int l : labels) out.push_back(ids.emplace(l, static_cast<int>(ids.size())).first->second);
  *k = static_cast<int>(ids.size());
  return out;
}

inline std::vector<std::vector<double>> contingency(const std::vector<int>& a, const std::vector<int>& b, int* ka, int* kb) {
  auto ca = compact(a, ka), cb = compact(b, kb);
  std::vector<std::vector<double>> cm(static_cast<std::size_t>(*ka), std::vector<double>(static_cast<std::size_t>(*kb), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i) cm[static_cast<std::size_t>(ca[i])][static_cast<std::size_t>(cb[i])] += 1;
  return cm;
}

}  // namespace detail

/// I(pred; gold) / sqrt(H(pred) H(gold)); 0 when either entropy is 0.
inline double nmi(const std::vector<int>& pred, const std::vector<int>& gold) {
  if (pred.empty()) throw std::invalid_argument("nmi: empty input");
  if (pred.size() != gold.size()) throw std::invalid_argument("nmi: length mismatch");
  int kp = 0, kg = 0;
  const auto cm = detail::contingency(pred, gold, &kp, &kg);
  const double n = static_cast<double>(pred.size());
  std::vector<double> rp(static_cast<std::size_t>(kp), 0), rg(static_cast<std::size_t>(kg), 0);
  for (int i = 0; i < kp; ++i) {
    for (int j = 0; j < kg; ++j) {
      rp[static_cast<std::size_t>(i)] += cm[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      rg[static_cast<std::size_t>(j)] += cm[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  auto entropy = [n](const std::vector<double>& c) {
    double h = 0;
    for (double x : c) {
      if (x > 0) h -= (x / n) * std::log(x / n);
    }
    return h;
  };
  const double hp = entropy(rp), hg = entropy(rg);
  if (hp <= 0 || hg <= 0) return 0.0;
  double mi = 0;
  for (int i = 0; i < kp; ++i) {
    for (int j = 0; j < kg; ++j) {
      const double c = cm[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      if (c > 0) mi += (c / n) * std::log(c * n / (rp[static_cast<std::size_t>(i)] * rg[static_cast<std::size_t>(j)]));
    }
  }
  return std::clamp(mi / std::sqrt(hp * hg), 0.0, 1.0);
}

/// Maximum-weight assignment on a rectangular matrix (rows <= cols after padding).
/// Returns, for each row, the matched column (-1 if matched to padding).
inline std::vector<int> hungarian_max(const std::vector<std::vector<double>>& w) {
  const int rows = static_cast<int>(w.size());
  const int cols = rows ? static_cast<int>(w[0].size()) : 0;
  const int n = std::max(rows, cols);
  double big = 0;
  for (const auto& r : w) {
    for (double x : r) big = std::max(big, x);
  }
  // Minimization form on an n x n cost matrix, 1-based (classic potentials method).
  std::vector<std::vector<double>> a(static_cast<std::size_t>(n + 1), std::vector<double>(static_cast<std::size_t>(n + 1), big));
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) a[static_cast<std::size_t>(i + 1)][static_cast<std::size_t>(j + 1)] = big - w[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n + 1)), v(static_cast<std::size_t>(n + 1));
  std::vector<int> p(static_cast<std::size_t>(n + 1)), way(static_cast<std::size_t>(n + 1));
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n + 1), inf);
    std::vector<char> used(static_cast<std::size_t>(n + 1), 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = a[static_cast<std::size_t>(i0)][static_cast<std::size_t>(j)] - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> match(static_cast<std::size_t>(rows), -1);
  for (int j = 1; j <= n; ++j) {
    const int i = p[static_cast<std::size_t>(j)];
    if (i >= 1 && i <= rows && j <= cols) match[static_cast<std::size_t>(i - 1)] = j - 1;
  }
  return match;
}

/// Accuracy under the best one-to-one mapping of clusters to categories.
inline double cluster_accuracy(const std::vector<int>& pred, const std::vector<int>& gold) {
  if (pred.empty()) throw std::invalid_argument("cluster_accuracy: empty input");
  if (pred.size() != gold.size()) throw std::invalid_argument("cluster_accuracy: length mismatch");
  int kp = 0, kg = 0;
  const auto cm = detail::contingency(pred, gold, &kp, &kg);
  const auto match = hungarian_max(cm);
  double hit = 0;
  for (int i = 0; i < kp; ++i) {
    if (match[static_cast<std::size_t>(i)] >= 0) hit += cm[static_cast<std::size_t>(i)][static_cast<std::size_t>(match[static_cast<std::size_t>(i)])];
  }
  return hit / static_cast<double>(pred.size());
}

// ---------------------------------------------------------------------------
// Coherence
// ---------------------------------------------------------------------------

using TGMScorer = std::function<double(const std::string&, const std::string&)>;

/// score(a, b) = (s(a, b) + s(b, a)) / 2.
inline TGMScorer symmetrized(TGMScorer s) {
  return [s = std::move(s)](const std::string& a, const std::string& b) { return 0.5 * (s(a, b) + s(b, a)); };
}

/// f(C) = 1/N^2 * sum_{i<j} TGM(t_i, t_j). With mean_over_pairs the sum is
/// divided by N(N-1)/2 instead. Absent for N < 2.
inline std::optional<double> coherence(const std::vector<std::string>& texts, const TGMScorer& scorer, bool mean_over_pairs = false) {
  const std::size_t n = texts.size();
  if (n < 2) {
    log::warn("coherence: cluster with fewer than 2 texts has no score");
    return std::nullopt;
  }
  double sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) sum += scorer(texts[i], texts[j]);
  }
  const double N = static_cast<double>(n);
  return mean_over_pairs ? sum / (N * (N - 1) / 2) : sum / (N * N);
}

/// Cosine similarity of mean token embeddings, mapped to [0, 1] by (1 + cos) / 2.
template <class T>
TGMScorer embedding_scorer(const corpus::Vocab& vocab, Matrix<T> embeddings) {
  auto table = std::make_shared<Matrix<double>>(embeddings.template cast<double>());
  auto voc = std::make_shared<corpus::Vocab>(vocab);
  auto mean = [table, voc](const std::string& text) {
    Eigen::RowVectorXd v = Eigen::RowVectorXd::Zero(table->cols());
    int n = 0;
    for (const auto& w : corpus::split_words(corpus::lowercase(text))) {
      const int id = voc->id(w.text);
      if (id < table->rows()) {
        v += table->row(id);
        ++n;
      }
    }
    if (n > 0) v /= n;
    return v;
  };
  return [mean](const std::string& a, const std::string& b) {
    const auto va = mean(a), vb = mean(b);
    const double den = va.norm() * vb.norm();
    const double cos = den > 0 ? va.dot(vb) / den : 0.0;
    return std::clamp(0.5 * (1.0 + cos), 0.0, 1.0);
  };
}

// ---------------------------------------------------------------------------
// Conditional pseudo-perplexity
// ---------------------------------------------------------------------------

struct PerplexityTerms {
  double neg_log_prob = 0;  // summed over scored tokens
  long tokens = 0;
  double perplexity() const { return std::exp(neg_log_prob / static_cast<double>(tokens)); }
};

/// Masks every position 1..n of `ids` in turn and scores the true token with
/// the given latents (one z_w row and, for two-latent models, one z_s row).
template <class T>
PerplexityTerms pseudo_log_likelihood(const model::Model<T>& m, const std::vector<int>& ids, const Vector<T>& z_w,
                                      const Vector<T>* z_s = nullptr) {
  const int n = static_cast<int>(ids.size()) - 1;
  if (n < 1) throw std::invalid_argument("pseudo_log_likelihood: sequence has no tokens");
  std::vector<std::vector<int>> copies(static_cast<std::size_t>(n), ids);
  for (int i = 0; i < n; ++i) copies[static_cast<std::size_t>(i)][static_cast<std::size_t>(i + 1)] = corpus::Vocab::kMask;
  std::vector<const std::vector<int>*> views;
  for (const auto& c : copies) views.push_back(&c);
  Matrix<T> zw = z_w.transpose().replicate(n, 1);
  Matrix<T> zs;
  if (z_s) zs = z_s->transpose().replicate(n, 1);
  ag::Tape<T> tape(false);
  auto ep = m.eval_pass(tape, views, &zw, z_s ? &zs : nullptr);
  std::vector<int> rows;
  for (int i = 0; i < n; ++i) rows.push_back(static_cast<int>(ep.batch.segments[static_cast<std::size_t>(i)].offset) + i + 1);
  const Matrix<T> logits = m.token_logits(tape, ep.recon, rows).value();
  PerplexityTerms out;
  for (int i = 0; i < n; ++i) {
    const auto row = logits.row(i).template cast<double>();
    const double mx = row.maxCoeff();
    const double lse = mx + std::log((row.array() - mx).exp().sum());
    out.neg_log_prob += lse - row(ids[static_cast<std::size_t>(i + 1)]);
  }
  out.tokens = n;
  return out;
}

inline double perplexity_from(const std::vector<PerplexityTerms>& terms) {
  if (terms.empty()) throw std::invalid_argument("perplexity: empty held-out set");
  double nll = 0;
  long tok = 0;
  for (const auto& t : terms) {
    nll += t.neg_log_prob;
    tok += t.tokens;
  }
  return std::exp(nll / static_cast<double>(tok));
}

/// Index of the nearest row of `centroids` (ties to the lower index).
template <class T>
int nearest_row(const Matrix<T>& centroids, const Vector<T>& z) {
  int best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < centroids.rows(); ++k) {
    const double d = static_cast<double>((centroids.row(k).transpose() - z).squaredNorm());
    if (d < bd) {
      bd = d;
      best = static_cast<int>(k);
    }
  }
  return best;
}

struct ConditionalPerplexity {
  double perplexity = 0;
  std::vector<PerplexityTerms> per_post;
  std::vector<int> routed;  // centroid index per post
};

/// Each post is routed to its nearest centroid by its z_w mean; z_w is fixed to
/// that centroid and z_s is drawn once per post from q(z_s | psi).
template <class T>
ConditionalPerplexity conditional_perplexity(const std::vector<const std::vector<int>*>& posts, const model::Model<T>& m,
                                             const Matrix<T>& centroids, Rng& rng) {
  if (posts.empty()) throw std::invalid_argument("conditional_perplexity: empty held-out set");
  ConditionalPerplexity out;
  const bool two = m.config().latent == model::LatentMode::disentangled;
  for (const auto* ids : posts) {
    ag::Tape<T> tape(false);
    const model::Packed packed = model::pack(std::vector<const std::vector<int>*>{ids});
    auto psi = m.lower_forward(tape, packed, {});
    const Vector<T> mu_w = m.posterior(tape, psi, packed, latent::Role::z_w).mu.value().row(0).transpose();
    const int k = nearest_row(centroids, mu_w);
    out.routed.push_back(k);
    const Vector<T> zw = centroids.row(k).transpose();
    if (two) {
      const auto q_s = m.posterior(tape, psi, packed, latent::Role::z_s).row(0);
      const Vector<T> zs = latent::sample(q_s, rng, latent::Role::z_s).z;
      out.per_post.push_back(pseudo_log_likelihood(m, *ids, zw, &zs));
    } else {
      out.per_post.push_back(pseudo_log_likelihood(m, *ids, zw));
    }
  }
  out.perplexity = perplexity_from(out.per_post);
  return out;
}

struct PairedPerplexity {
  ConditionalPerplexity matched;
  std::vector<PerplexityTerms> random;  // z_w ~ N(0, I) of the same dimension, same z_s draw
  double random_perplexity = 0;
  double matched_win_rate = 0;  // fraction of posts where the matched latent gives the lower perplexity
};

/// Matched-centroid and random-latent perplexity per post, sharing the z_s draw.
template <class T>
PairedPerplexity paired_perplexity(const std::vector<const std::vector<int>*>& posts, const model::Model<T>& m,
                                   const Matrix<T>& centroids, Rng& rng) {
  if (posts.empty()) throw std::invalid_argument("paired_perplexity: empty held-out set");
  PairedPerplexity out;
  const bool two = m.config().latent == model::LatentMode::disentangled;
  const int d = m.config().d_zw;
  int wins = 0;
  for (const auto* ids : posts) {
    ag::Tape<T> tape(false);
    const model::Packed packed = model::pack(std::vector<const std::vector<int>*>{ids});
    auto psi = m.lower_forward(tape, packed, {});
    const Vector<T> mu_w = m.posterior(tape, psi, packed, latent::Role::z_w).mu.value().row(0).transpose();
    const int k = nearest_row(centroids, mu_w);
    out.matched.routed.push_back(k);
    const Vector<T> zw = centroids.row(k).transpose();
    Vector<T> rz(d);
    for (int j = 0; j < d; ++j) rz(j) = static_cast<T>(rng.normal());
    std::optional<Vector<T>> zs;
    if (two) {
      const auto q_s = m.posterior(tape, psi, packed, latent::Role::z_s).row(0);
      zs = latent::sample(q_s, rng, latent::Role::z_s).z;
    }
    const Vector<T>* zsp = zs ? &*zs : nullptr;
    out.matched.per_post.push_back(pseudo_log_likelihood(m, *ids, zw, zsp));
    out.random.push_back(pseudo_log_likelihood(m, *ids, rz, zsp));
    wins += out.matched.per_post.back().neg_log_prob < out.random.back().neg_log_prob;
  }
  out.matched.perplexity = perplexity_from(out.matched.per_post);
  out.random_perplexity = perplexity_from(out.random);
  out.matched_win_rate = wins / static_cast<double>(posts.size());
  return out;
}

// ---------------------------------------------------------------------------
// Linear probe
// ---------------------------------------------------------------------------

struct ProbeConfig {
  int folds = 5;
  int steps = 300;
  double lr = 0.5;
  double l2 = 1e-4;
  std::uint64_t seed = 0;
};

/// Softmax regression on standardized features, trained by full-batch gradient
/// descent for a fixed number of steps. Returns accuracy on `test`.
inline double probe_fit_score(const Eigen::MatrixXd& xtr, const std::vector<int>& ytr, const Eigen::MatrixXd& xte,
                              const std::vector<int>& yte, int classes, const ProbeConfig& cfg) {
  const Eigen::RowVectorXd mean = xtr.colwise().mean();
  Eigen::RowVectorXd sd = ((xtr.rowwise() - mean).array().square().colwise().mean()).sqrt();
  sd = sd.unaryExpr([](double s) { return s > 1e-12 ? s : 1.0; });
  const Eigen::MatrixXd a = (xtr.rowwise() - mean).array().rowwise() / sd.array();
  const Eigen::MatrixXd b = (xte.rowwise() - mean).array().rowwise() / sd.array();
  const Eigen::Index n = a.rows(), d = a.cols();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(d, classes);
  Eigen::RowVectorXd bias = Eigen::RowVectorXd::Zero(classes);
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, classes);
  for (Eigen::Index i = 0; i < n; ++i) y(i, ytr[static_cast<std::size_t>(i)]) = 1;
  for (int s = 0; s < cfg.steps; ++s) {
    Eigen::MatrixXd z = (a * w).rowwise() + bias;
    z = z.colwise() - z.rowwise().maxCoeff();
    Eigen::MatrixXd p = z.array().exp();
    p = p.array().colwise() / p.rowwise().sum().array();
    const Eigen::MatrixXd g = (p - y) / static_cast<double>(n);
    w -= cfg.lr * (a.transpose() * g + cfg.l2 * w);
    bias -= cfg.lr * g.colwise().sum();
  }
  const Eigen::MatrixXd z = (b * w).rowwise() + bias;
  int hit = 0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    Eigen::Index k;
    z.row(i).maxCoeff(&k);
    hit += static_cast<int>(k) == yte[static_cast<std::size_t>(i)];
  }
  return hit / static_cast<double>(z.rows());
}

/// k-fold cross-validated linear probe accuracy.
template <class T>
double disentanglement_probe(const Matrix<T>& latents, const std::vector<int>& labels, const ProbeConfig& cfg = {}) {
  if (static_cast<std::size_t>(latents.rows()) != labels.size()) throw std::invalid_argument("probe: row/label count mismatch");
  int classes = 0;
  const auto y = detail::compact(labels, &classes);
  if (classes < 2) throw std::invalid_argument("probe: labels have a single class");
  Rng rng(cfg.seed);
  const auto folds = corpus::split_folds(labels.size(), cfg.folds, rng);
  const Eigen::MatrixXd x = latents.template cast<double>();
  int hit_total = 0;
  std::size_t n_total = 0;
  for (const auto& te : folds) {
    std::vector<Eigen::Index> tr;
    std::vector<char> held(labels.size(), 0);
    for (std::size_t i : te) held[i] = 1;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (!held[i]) tr.push_back(static_cast<Eigen::Index>(i));
    }
    if (te.empty() || tr.empty()) continue;
    Eigen::MatrixXd xtr(static_cast<Eigen::Index>(tr.size()), x.cols()), xte(static_cast<Eigen::Index>(te.size()), x.cols());
    std::vector<int> ytr, yte;
    for (std::size_t i = 0; i < tr.size(); ++i) {
      xtr.row(static_cast<Eigen::Index>(i)) = x.row(tr[i]);
      ytr.push_back(y[static_cast<std::size_t>(tr[i])]);
    }
    for (std::size_t i = 0; i < te.size(); ++i) {
      xte.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(te[i]));
      yte.push_back(y[te[i]]);
    }
    const double acc = probe_fit_score(xtr, ytr, xte, yte, classes, cfg);
    hit_total += static_cast<int>(std::lround(acc * static_cast<double>(te.size())));
    n_total += te.size();
  }
  return hit_total / static_cast<double>(n_total);
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct MetricsReport {
  std::optional<double> stance_acc, stance_macro_f1;
  std::optional<double> span_em, span_f1;
  std::optional<double> nmi, cluster_acc;
  std::vector<std::optional<double>> coherence;
  std::optional<double> coherence_mean;
  std::optional<double> coherence_across_mean;  // same formula on size-matched groups drawn across clusters
  std::optional<double> conditional_ppl, random_latent_ppl, matched_win_rate;
  std::optional<double> probe_acc_zs, probe_acc_zw;
  nlohmann::json counts = nlohmann::json::object();
  nlohmann::json config = nlohmann::json::object();

  nlohmann::json to_json() const {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    nlohmann::json coh = nlohmann::json::array();
    for (const auto& c : coherence) coh.push_back(opt(c));
    return {{"stance_acc", opt(stance_acc)},
            {"stance_macro_f1", opt(stance_macro_f1)},
            {"span_em", opt(span_em)},
            {"span_f1", opt(span_f1)},
            {"nmi", opt(nmi)},
            {"cluster_acc", opt(cluster_acc)},
            {"coherence", coh},
            {"coherence_mean", opt(coherence_mean)},
            {"coherence_across_mean", opt(coherence_across_mean)},
            {"conditional_ppl", opt(conditional_ppl)},
            {"random_latent_ppl", opt(random_latent_ppl)},
            {"matched_win_rate", opt(matched_win_rate)},
            {"probe_acc_zs", opt(probe_acc_zs)},
            {"probe_acc_zw", opt(probe_acc_zw)},
            {"counts", counts},
            {"config", config}};
  }
};

}  // namespace vadet::metrics
