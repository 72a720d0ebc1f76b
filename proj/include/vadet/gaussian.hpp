#pragma once

// Diagonal-Gaussian machinery shared by every ELBO term: variational heads,
// reparameterized sampling and the two closed-form KL divergences, in both
// plain-value and taped (differentiable) form.

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "vadet/autograd.hpp"
#include "vadet/rng.hpp"

namespace vadet::latent {

inline constexpr double kLogSigmaMin = -8.0;
inline constexpr double kLogSigmaMax = 8.0;

enum class Role { z_s, z_w, z_a };

/// N(mu, diag(exp(log_sigma)^2)).
template <class T>
struct DiagGaussian {
  Vector<T> mu;
  Vector<T> log_sigma;

  DiagGaussian() = default;
  DiagGaussian(Vector<T> m, Vector<T> ls) : mu(std::move(m)), log_sigma(std::move(ls)) {
    if (mu.size() != log_sigma.size()) throw std::invalid_argument("DiagGaussian: mu/log_sigma length mismatch");
    log_sigma = log_sigma.cwiseMax(T(kLogSigmaMin)).cwiseMin(T(kLogSigmaMax));
  }

  static DiagGaussian standard(Eigen::Index dim) { return {Vector<T>::Zero(dim), Vector<T>::Zero(dim)}; }

  Eigen::Index dim() const { return mu.size(); }
  Vector<T> sigma() const { return log_sigma.array().exp().matrix(); }
};

template <class T>
struct LatentSample {
  Vector<T> z;
  Role role = Role::z_w;
  DiagGaussian<T> source;
  Vector<T> eps;
};

/// Affine head h -> (mu, log_sigma); weights stored (hidden x dim).
template <class T>
struct GaussianHead {
  Matrix<T> w_mu, w_sigma;
  Matrix<T> b_mu, b_sigma;  // 1 x dim
};

template <class T>
DiagGaussian<T> encode(const Vector<T>& h, const GaussianHead<T>& head) {
  if (h.size() != head.w_mu.rows() || h.size() != head.w_sigma.rows()) {
    throw std::invalid_argument("encode: hidden size does not match head");
  }
  Vector<T> mu = head.w_mu.transpose() * h + head.b_mu.row(0).transpose();
  Vector<T> ls = head.w_sigma.transpose() * h + head.b_sigma.row(0).transpose();
  return {std::move(mu), std::move(ls)};
}

template <class T>
LatentSample<T> sample(const DiagGaussian<T>& g, Rng& rng, Role role = Role::z_w) {
  LatentSample<T> s;
  s.role = role;
  s.source = g;
  s.eps.resize(g.dim());
  for (Eigen::Index i = 0; i < g.dim(); ++i) s.eps(i) = T(rng.normal());
  s.z = g.mu + g.sigma().cwiseProduct(s.eps);
  return s;
}

template <class T>
std::vector<LatentSample<T>> sample(const DiagGaussian<T>& g, Rng& rng, int n, Role role = Role::z_w) {
  if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
  std::vector<LatentSample<T>> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(sample(g, rng, role));
  return out;
}

template <class T>
void require_finite(const DiagGaussian<T>& g) {
  if (!g.mu.allFinite() || !g.log_sigma.allFinite()) throw std::domain_error("non-finite Gaussian parameters");
}

/// KL[N(mu, sigma^2) || N(0, I)] summed over dimensions.
template <class T>
T kl_to_standard(const DiagGaussian<T>& g) {
  require_finite(g);
  const auto ls = g.log_sigma.array();
  return T(0.5) * (g.mu.array().square() + (T(2) * ls).exp() - T(1) - T(2) * ls).sum();
}

/// Gradient of kl_to_standard with respect to (mu, log_sigma).
template <class T>
std::pair<Vector<T>, Vector<T>> kl_to_standard_grad(const DiagGaussian<T>& g) {
  return {g.mu, ((T(2) * g.log_sigma.array()).exp() - T(1)).matrix()};
}

/// KL[q || p] for diagonal Gaussians of equal dimension.
template <class T>
T kl_between(const DiagGaussian<T>& q, const DiagGaussian<T>& p) {
  if (q.dim() != p.dim()) throw std::invalid_argument("kl_between: dimension mismatch");
  require_finite(q);
  require_finite(p);
  const auto lq = q.log_sigma.array(), lp = p.log_sigma.array();
  const auto d = (q.mu - p.mu).array();
  return (lp - lq + ((T(2) * lq).exp() + d.square()) / (T(2) * (T(2) * lp).exp()) - T(0.5)).sum();
}

/// Gradients of kl_between: (d mu_q, d log_sigma_q, d mu_p, d log_sigma_p).
template <class T>
std::array<Vector<T>, 4> kl_between_grad(const DiagGaussian<T>& q, const DiagGaussian<T>& p) {
  const auto vq = (T(2) * q.log_sigma.array()).exp();
  const auto vp = (T(2) * p.log_sigma.array()).exp();
  const auto d = (q.mu - p.mu).array();
  Vector<T> dmq = (d / vp).matrix();
  Vector<T> dlq = (vq / vp - T(1)).matrix();
  Vector<T> dlp = (T(1) - (vq + d.square()) / vp).matrix();
  return {dmq, dlq, Vector<T>(-dmq), dlp};
}

// ---------------------------------------------------------------------------
// Taped versions. A batch of Gaussians is a pair of (batch x dim) matrices.
// ---------------------------------------------------------------------------

template <class T>
struct GaussianVars {
  ag::Var<T> mu;
  ag::Var<T> log_sigma;

  /// Row r as a plain value.
  DiagGaussian<T> row(Eigen::Index r) const {
    return {mu.value().row(r).transpose(), log_sigma.value().row(r).transpose()};
  }
};

/// Batched head: (mu, clamp(log_sigma)) from (batch x hidden) states.
template <class T>
GaussianVars<T> encode(ag::Var<T> h, ag::Var<T> w_mu, ag::Var<T> b_mu, ag::Var<T> w_sigma, ag::Var<T> b_sigma) {
  if (h.cols() != w_mu.rows()) throw std::invalid_argument("encode: hidden size does not match head");
  auto mu = ag::linear(h, w_mu, b_mu);
  auto ls = ag::clamp(ag::linear(h, w_sigma, b_sigma), T(kLogSigmaMin), T(kLogSigmaMax));
  return {mu, ls};
}

/// z = mu + exp(log_sigma) * eps with eps held constant.
template <class T>
ag::Var<T> reparameterize(const GaussianVars<T>& g, const Matrix<T>& eps) {
  ag::Tape<T>& tape = *g.mu.tape;
  Matrix<T> sig = g.log_sigma.value().array().exp().matrix();
  Matrix<T> out = g.mu.value() + sig.cwiseProduct(eps);
  auto mu = g.mu, ls = g.log_sigma;
  return tape.record(std::move(out), {mu, ls}, [mu, ls, noise = Matrix<T>(sig.cwiseProduct(eps))](ag::Tape<T>& t, int o) {
    const Matrix<T>& gr = t.grad(o);
    if (t.requires_grad(mu.id)) t.grad(mu.id) += gr;
    if (t.requires_grad(ls.id)) t.grad(ls.id) += gr.cwiseProduct(noise);
  });
}

/// Standard-normal noise matrix for a batch.
template <class T>
Matrix<T> draw_noise(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix<T> eps(rows, cols);
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = T(rng.normal());
  return eps;
}

/// Sum over the batch of KL[q_i || N(0, I)].
template <class T>
ag::Var<T> kl_to_standard(const GaussianVars<T>& g) {
  const auto& m = g.mu.value().array();
  const auto& ls = g.log_sigma.value().array();
  Matrix<T> out(1, 1);
  out(0, 0) = T(0.5) * (m.square() + (T(2) * ls).exp() - T(1) - T(2) * ls).sum();
  auto mu = g.mu, lsv = g.log_sigma;
  return mu.tape->record(std::move(out), {mu, lsv}, [mu, lsv](ag::Tape<T>& t, int o) {
    const T gr = t.grad(o)(0, 0);
    if (t.requires_grad(mu.id)) t.grad(mu.id) += gr * mu.value();
    if (t.requires_grad(lsv.id)) t.grad(lsv.id) += (gr * ((T(2) * lsv.value().array()).exp() - T(1))).matrix();
  });
}

/// Sum over the batch of KL[q_i || p_i]. Gradients reach p only if p's vars require them.
template <class T>
ag::Var<T> kl_between(const GaussianVars<T>& q, const GaussianVars<T>& p) {
  if (q.mu.cols() != p.mu.cols() || q.mu.rows() != p.mu.rows()) {
    throw std::invalid_argument("kl_between: dimension mismatch");
  }
  const auto lq = q.log_sigma.value().array(), lp = p.log_sigma.value().array();
  const auto vq = (T(2) * lq).exp(), vp = (T(2) * lp).exp();
  const Matrix<T> d = q.mu.value() - p.mu.value();
  Matrix<T> out(1, 1);
  out(0, 0) = (lp - lq + (vq + d.array().square()) / (T(2) * vp) - T(0.5)).sum();
  auto mq = q.mu, sq = q.log_sigma, mp = p.mu, sp = p.log_sigma;
  return mq.tape->record(std::move(out), {mq, sq, mp, sp}, [mq, sq, mp, sp](ag::Tape<T>& t, int o) {
    const T gr = t.grad(o)(0, 0);
    const auto vq = (T(2) * sq.value().array()).exp();
    const auto vp = (T(2) * sp.value().array()).exp();
    const Matrix<T> dmq = ((mq.value() - mp.value()).array() / vp).matrix();
    if (t.requires_grad(mq.id)) t.grad(mq.id) += gr * dmq;
    if (t.requires_grad(mp.id)) t.grad(mp.id) -= gr * dmq;
    if (t.requires_grad(sq.id)) t.grad(sq.id) += (gr * (vq / vp - T(1))).matrix();
    if (t.requires_grad(sp.id)) {
      t.grad(sp.id) += (gr * (T(1) - (vq + (mq.value() - mp.value()).array().square()) / vp)).matrix();
    }
  });
}

/// Copies a taped Gaussian onto the tape as constants (stop-gradient).
template <class T>
GaussianVars<T> detach(const GaussianVars<T>& g) {
  ag::Tape<T>& tape = *g.mu.tape;
  return {tape.constant(g.mu.value()), tape.constant(g.log_sigma.value())};
}

}  // namespace vadet::latent
