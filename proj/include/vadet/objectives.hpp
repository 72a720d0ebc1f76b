#pragma once

// Every training objective of the model:
//
//   unsupervised   ELBO = E_q[log p(w^H | z, psi(w))] - KL[q(z | psi(w)) || N(0, I)]
//   aspect span    L_A  = E_q[log p(w^H_{a:b} | z_a)] - KL[q(z_a | psi(w_{a:b})) || N(0, I)]
//   full sentence  L_S  = E[log p(w^H_cls | z_s)] + E[log p(w^H_{1:n} | z_w)]
//                         - KL[q(z_s | psi(w_cls)) || N(0, I)]
//                         - KL[q(z_w | psi(w_{1:n})) || q(z_a | psi(w_{a:b}))]
//   supervised     L    = L_s + L_a - L_S - L_A
//
// Reconstruction terms are sums of categorical log-likelihoods over masked
// positions (plus the [CLS] symbol in L_S). Batch values are sums; the
// trainer-facing total_loss divides by the batch size.

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "vadet/autograd.hpp"
#include "vadet/corpus.hpp"
#include "vadet/gaussian.hpp"
#include "vadet/log.hpp"
#include "vadet/model.hpp"

namespace vadet::objectives {

using corpus::MaskedSequence;
using corpus::TokenizedExample;
using model::Model;

struct ObjectiveConfig {
  corpus::MaskConfig mask;
  /// z = mu instead of a reparameterized draw (identity and gradient tests).
  bool deterministic_z = false;
  /// Multiplies every KL term. The objective is unweighted at 1.0.
  double kl_weight = 1.0;
  /// Let the z_w KL term push gradients into the span posterior acting as prior.
  bool prior_gradient = false;
  /// Stop-gradient on z_s in the span pass. Off only for whole-function gradient checks.
  bool detach_zs_in_span = true;
};

/// Ablations of the supervised objective.
struct Ablation {
  bool no_disentangle = false;  // -D: one latent, standard-normal prior, no span pass
  bool no_pretrain = false;     // -U: honoured by the trainer
};

/// Per-example means of every term (recon_* are expected log-likelihoods, <= 0).
struct LossBreakdown {
  double recon_tokens = 0;
  double recon_cls = 0;
  double recon_span = 0;
  double kl_zs = 0;
  double kl_zw = 0;
  double kl_za = 0;
  double loss_stance = 0;
  double loss_span = 0;
  double elbo_A = 0;
  double elbo_S = 0;
  double total = 0;  // loss_stance + loss_span - elbo_S - elbo_A
};

inline nlohmann::json to_json(const LossBreakdown& b) {
  return {{"recon_tokens", b.recon_tokens}, {"recon_cls", b.recon_cls}, {"recon_span", b.recon_span},
          {"kl_zs", b.kl_zs},               {"kl_zw", b.kl_zw},         {"kl_za", b.kl_za},
          {"loss_stance", b.loss_stance},   {"loss_span", b.loss_span}, {"elbo_A", b.elbo_A},
          {"elbo_S", b.elbo_S},             {"total", b.total}};
}

namespace detail {

template <class T>
ag::Var<T> draw(const latent::GaussianVars<T>& q, const ObjectiveConfig& cfg, Rng& rng) {
  if (cfg.deterministic_z) return q.mu;
  return latent::reparameterize(q, latent::draw_noise<T>(q.mu.rows(), q.mu.cols(), rng));
}

template <class T>
ag::Var<T> zero_scalar(ag::Tape<T>& tape) {
  return tape.constant(Matrix<T>::Zero(1, 1));
}

/// Sum of -log p(target) over all masked positions of a packed batch.
template <class T>
ag::Var<T> masked_nll(ag::Tape<T>& tape, const Model<T>& m, ag::Var<T> recon, const model::Packed& batch,
                      const std::vector<const MaskedSequence*>& seqs, int* count = nullptr) {
  std::vector<int> rows, targets;
  for (std::size_t b = 0; b < seqs.size(); ++b) {
    const auto off = static_cast<int>(batch.segments[b].offset);
    for (std::size_t i = 1; i < seqs[b]->target_ids.size(); ++i) {
      if (seqs[b]->target_ids[i] == corpus::kIgnore) continue;
      rows.push_back(off + static_cast<int>(i));
      targets.push_back(seqs[b]->target_ids[i]);
    }
  }
  if (count) *count = static_cast<int>(rows.size());
  if (rows.empty()) return zero_scalar(tape);
  return ag::cross_entropy(m.token_logits(tape, recon, rows), std::move(targets));
}

/// -log p([CLS] | w^H_cls) for every sequence.
template <class T>
ag::Var<T> cls_nll(ag::Tape<T>& tape, const Model<T>& m, ag::Var<T> recon, const model::Packed& batch) {
  std::vector<int> rows;
  for (std::size_t b = 0; b < batch.batch(); ++b) rows.push_back(batch.cls_row(b));
  return ag::cross_entropy(m.token_logits(tape, recon, rows), std::vector<int>(rows.size(), corpus::Vocab::kCls));
}

template <class T>
std::vector<const std::vector<int>*> inputs_of(const std::vector<const MaskedSequence*>& seqs) {
  std::vector<const std::vector<int>*> out;
  for (const auto* s : seqs) out.push_back(&s->input_ids);
  return out;
}

inline std::vector<const MaskedSequence*> views(const corpus::MaskedBatch& b) {
  std::vector<const MaskedSequence*> out;
  for (const auto& s : b) out.push_back(&s);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Unsupervised ELBO
// ---------------------------------------------------------------------------

template <class T>
struct UnsupervisedTerms {
  ag::Var<T> elbo;   // batch sum
  ag::Var<T> recon;  // batch sum of log-likelihoods
  ag::Var<T> kl;
  int targets = 0;
};

/// Single pooled latent with a standard-normal prior, one memory slot.
template <class T>
UnsupervisedTerms<T> elbo_unsupervised(ag::Tape<T>& tape, const Model<T>& m, const corpus::MaskedBatch& batch, Rng& rng,
                                       const ObjectiveConfig& cfg = {}, const model::ForwardOptions& fwd = {}) {
  const auto seqs = detail::views(batch);
  const auto packed = model::pack(detail::inputs_of<T>(seqs));
  auto psi = m.lower_forward(tape, packed, fwd);
  auto q = m.posterior(tape, psi, packed, latent::Role::z_w);
  auto z = detail::draw(q, cfg, rng);
  auto aug = m.inject_latent(tape, psi, packed, {{latent::Role::z_w, z}});
  auto recon_states = m.upper_forward(tape, aug, fwd);
  UnsupervisedTerms<T> out;
  auto nll = detail::masked_nll(tape, m, recon_states, packed, seqs, &out.targets);
  if (out.targets == 0) log::debug("elbo_unsupervised: batch has no masked positions; reconstruction term is 0");
  out.recon = ag::scale(nll, T(-1));
  out.kl = latent::kl_to_standard(q);
  out.elbo = ag::sub(out.recon, ag::scale(out.kl, T(cfg.kl_weight)));
  return out;
}

// ---------------------------------------------------------------------------
// Aspect-span ELBO (right-hand pass over w_{a:b} only)
// ---------------------------------------------------------------------------

template <class T>
struct AspectTerms {
  ag::Var<T> elbo;
  ag::Var<T> recon;
  ag::Var<T> kl_za;
  latent::GaussianVars<T> posterior;  // q(z_a | psi(w_{a:b})), reused as the z_w prior
};

/// `span_batch` holds masked [CLS] + w_{a:b} sequences. The [CLS] position is
/// never reconstructed and z_s enters theta detached.
template <class T>
AspectTerms<T> elbo_aspect(ag::Tape<T>& tape, const Model<T>& m, const corpus::MaskedBatch& span_batch, Rng& rng,
                           const ObjectiveConfig& cfg = {}, const model::ForwardOptions& fwd = {}) {
  for (const auto& s : span_batch) {
    if (s.length() < 2) throw std::invalid_argument("elbo_aspect: empty aspect span");
  }
  const auto seqs = detail::views(span_batch);
  const auto packed = model::pack(detail::inputs_of<T>(seqs));
  auto psi = m.lower_forward(tape, packed, fwd);
  AspectTerms<T> out;
  out.posterior = m.posterior(tape, psi, packed, latent::Role::z_a);
  auto z_a = detail::draw(out.posterior, cfg, rng);
  std::vector<model::MemorySlot<T>> slots;
  if (m.config().latent == model::LatentMode::disentangled) {
    auto q_s = m.posterior(tape, psi, packed, latent::Role::z_s);
    if (cfg.detach_zs_in_span) q_s = latent::detach(q_s);
    slots.push_back({latent::Role::z_s, detail::draw(q_s, cfg, rng)});
  }
  slots.push_back({latent::Role::z_w, z_a});
  auto aug = m.inject_latent(tape, psi, packed, slots);
  auto recon_states = m.upper_forward(tape, aug, fwd);
  out.recon = ag::scale(detail::masked_nll(tape, m, recon_states, packed, seqs), T(-1));
  out.kl_za = latent::kl_to_standard(out.posterior);
  out.elbo = ag::sub(out.recon, ag::scale(out.kl_za, T(cfg.kl_weight)));
  return out;
}

// ---------------------------------------------------------------------------
// Sentence ELBO (left-hand pass over the full post)
// ---------------------------------------------------------------------------

template <class T>
struct SentenceTerms {
  ag::Var<T> elbo;
  ag::Var<T> recon_cls;     // log-likelihood of [CLS] given z_s
  ag::Var<T> recon_tokens;  // log-likelihood of masked w_{1:n} given z_w
  ag::Var<T> kl_zs;
  ag::Var<T> kl_zw;
  latent::GaussianVars<T> q_s, q_w;
  latent::GaussianVars<T> prior;  // the z_w prior actually used (possibly detached)
  ag::Var<T> z_s, z_w;
  ag::Var<T> recon_states;
  model::Packed packed;
};

template <class T>
SentenceTerms<T> elbo_sentence(ag::Tape<T>& tape, const Model<T>& m, const corpus::MaskedBatch& batch,
                               const latent::GaussianVars<T>& aspect_posterior, Rng& rng, const ObjectiveConfig& cfg = {},
                               const model::ForwardOptions& fwd = {}) {
  const auto seqs = detail::views(batch);
  SentenceTerms<T> out;
  out.packed = model::pack(detail::inputs_of<T>(seqs));
  auto psi = m.lower_forward(tape, out.packed, fwd);
  out.q_s = m.posterior(tape, psi, out.packed, latent::Role::z_s);
  out.q_w = m.posterior(tape, psi, out.packed, latent::Role::z_w);
  if (out.q_w.mu.cols() != aspect_posterior.mu.cols() || out.q_w.mu.rows() != aspect_posterior.mu.rows()) {
    throw std::invalid_argument("elbo_sentence: z_w posterior and aspect posterior differ in shape");
  }
  out.z_s = detail::draw(out.q_s, cfg, rng);
  out.z_w = detail::draw(out.q_w, cfg, rng);
  auto aug = m.inject_latent(tape, psi, out.packed, {{latent::Role::z_s, out.z_s}, {latent::Role::z_w, out.z_w}});
  out.recon_states = m.upper_forward(tape, aug, fwd);
  out.recon_cls = ag::scale(detail::cls_nll(tape, m, out.recon_states, out.packed), T(-1));
  out.recon_tokens = ag::scale(detail::masked_nll(tape, m, out.recon_states, out.packed, seqs), T(-1));
  out.kl_zs = latent::kl_to_standard(out.q_s);
  out.prior = cfg.prior_gradient ? aspect_posterior : latent::detach(aspect_posterior);
  out.kl_zw = latent::kl_between(out.q_w, out.prior);
  auto kl = ag::scale(ag::add(out.kl_zs, out.kl_zw), T(cfg.kl_weight));
  out.elbo = ag::sub(ag::add(out.recon_cls, out.recon_tokens), kl);
  return out;
}

/// L_S as one ELBO over the joint latent z = [z_s; z_w] at z = mu, with
/// q = N([mu_s; mu_w], diag(sigma_s^2, sigma_w^2)) and prior
/// N([0; mu_a], diag(1, sigma_a^2)). Batch sum, computed without the tape's
/// likelihood ops. Used to cross-check elbo_sentence.
template <class T>
double elbo_sentence_joint(const Model<T>& m, const corpus::MaskedBatch& batch,
                           const std::vector<latent::DiagGaussian<T>>& aspect_posterior) {
  if (aspect_posterior.size() != batch.size()) throw std::invalid_argument("elbo_sentence_joint: one aspect posterior per sequence");
  ag::Tape<T> tape(false);
  const auto seqs = detail::views(batch);
  const auto packed = model::pack(detail::inputs_of<T>(seqs));
  auto psi = m.lower_forward(tape, packed, {});
  const auto q_s = m.posterior(tape, psi, packed, latent::Role::z_s);
  const auto q_w = m.posterior(tape, psi, packed, latent::Role::z_w);
  const Eigen::Index ds = q_s.mu.cols(), dw = q_w.mu.cols(), nb = static_cast<Eigen::Index>(batch.size());
  Matrix<T> z(nb, ds + dw);
  double kl = 0;
  for (Eigen::Index b = 0; b < nb; ++b) {
    const auto& pa = aspect_posterior[static_cast<std::size_t>(b)];
    if (pa.dim() != dw) throw std::invalid_argument("elbo_sentence_joint: aspect posterior dimension");
    Vector<T> mq(ds + dw), lq(ds + dw), mp(ds + dw), lp(ds + dw);
    mq << q_s.mu.value().row(b).transpose(), q_w.mu.value().row(b).transpose();
    lq << q_s.log_sigma.value().row(b).transpose(), q_w.log_sigma.value().row(b).transpose();
    mp << Vector<T>::Zero(ds), pa.mu;
    lp << Vector<T>::Zero(ds), pa.log_sigma;
    kl += static_cast<double>(latent::kl_between(latent::DiagGaussian<T>(mq, lq), latent::DiagGaussian<T>(mp, lp)));
    z.row(b) = mq.transpose();
  }
  auto aug = m.inject_latent(tape, psi, packed,
                             {{latent::Role::z_s, tape.constant(z.leftCols(ds))}, {latent::Role::z_w, tape.constant(z.rightCols(dw))}});
  auto recon = m.upper_forward(tape, aug, {});
  std::vector<int> rows(packed.ids.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<int>(i);
  const Matrix<T> logits = m.token_logits(tape, recon, rows).value();
  double loglik = 0;
  auto log_prob = [&](Eigen::Index row, int target) {
    const double mx = static_cast<double>(logits.row(row).maxCoeff());
    double norm = 0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) norm += std::exp(static_cast<double>(logits(row, j)) - mx);
    return static_cast<double>(logits(row, target)) - mx - std::log(norm);
  };
  for (std::size_t b = 0; b < seqs.size(); ++b) {
    const Eigen::Index off = packed.segments[b].offset;
    loglik += log_prob(off, corpus::Vocab::kCls);
    for (std::size_t i = 1; i < seqs[b]->target_ids.size(); ++i) {
      if (seqs[b]->target_ids[i] != corpus::kIgnore) loglik += log_prob(off + static_cast<Eigen::Index>(i), seqs[b]->target_ids[i]);
    }
  }
  return loglik - kl;
}

// ---------------------------------------------------------------------------
// Supervised losses
// ---------------------------------------------------------------------------

/// (L_s, L_a) from a prediction and gold labels.
inline std::pair<double, double> supervised_losses(const model::Prediction& pred, const TokenizedExample& gold) {
  if (!gold.stance || !gold.span_tok) throw std::invalid_argument("supervised_losses: gold stance and span required");
  const double ls = -std::log(pred.stance_probs[static_cast<std::size_t>(*gold.stance)]);
  const double la = -std::log(pred.start_probs.at(static_cast<std::size_t>(gold.span_tok->a - 1))) -
                    std::log(pred.end_probs.at(static_cast<std::size_t>(gold.span_tok->b - 1)));
  return {ls, la};
}

/// Taped (L_s, L_a) summed over the batch, from w^H of the left pass.
template <class T>
std::pair<ag::Var<T>, ag::Var<T>> supervised_losses(ag::Tape<T>& tape, const Model<T>& m, ag::Var<T> recon_states,
                                                    const model::Packed& packed,
                                                    const std::vector<const TokenizedExample*>& gold) {
  std::vector<int> stances, starts, ends;
  for (const auto* g : gold) {
    if (!g->stance || !g->span_tok) throw std::invalid_argument("supervised_losses: gold stance and span required");
    stances.push_back(static_cast<int>(*g->stance));
    starts.push_back(g->span_tok->a - 1);
    ends.push_back(g->span_tok->b - 1);
  }
  auto ls = ag::cross_entropy(m.stance_logits(tape, recon_states, packed), std::move(stances));
  auto sp = m.span_scores(tape, recon_states, packed);
  auto la = ag::add(ag::segment_nll(sp.start, sp.segments, std::move(starts)), ag::segment_nll(sp.end, sp.segments, std::move(ends)));
  return {ls, la};
}

// ---------------------------------------------------------------------------
// Total supervised objective
// ---------------------------------------------------------------------------

template <class T>
struct TotalLoss {
  ag::Var<T> loss;  // batch mean of L, the quantity minimized
  LossBreakdown breakdown;
  // Exposed for detachment checks.
  std::optional<AspectTerms<T>> aspect;
  std::optional<SentenceTerms<T>> sentence;
};

/// Masks are drawn from `rng` first (left sequences, then right span
/// sequences), then the passes run: right (L_A) before left (L_S + heads).
template <class T>
TotalLoss<T> total_loss(ag::Tape<T>& tape, const Model<T>& m, const std::vector<const TokenizedExample*>& batch, Rng& rng,
                        const ObjectiveConfig& cfg = {}, const Ablation& ablation = {}, const model::ForwardOptions& fwd = {}) {
  if (batch.empty()) throw std::invalid_argument("total_loss: empty batch");
  if (ablation.no_disentangle != (m.config().latent == model::LatentMode::single)) {
    throw std::invalid_argument("total_loss: -D ablation requires a single-latent model and vice versa");
  }
  const int vocab = m.config().vocab_size;
  corpus::MaskedBatch left, right;
  for (const auto* ex : batch) {
    if (!ex->stance || !ex->span_tok) throw std::invalid_argument("total_loss: example " + ex->id + " lacks stance or span");
    left.push_back(corpus::mask_tokens(*ex, cfg.mask, vocab, rng));
  }
  if (!ablation.no_disentangle) {
    for (const auto* ex : batch) right.push_back(corpus::mask_tokens(model::span_sequence(ex->ids, *ex->span_tok), cfg.mask, vocab, rng));
  }

  TotalLoss<T> out;
  LossBreakdown& bd = out.breakdown;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  ag::Var<T> elbo_S, elbo_A, recon_states;
  model::Packed packed;

  if (ablation.no_disentangle) {
    const auto seqs = detail::views(left);
    packed = model::pack(detail::inputs_of<T>(seqs));
    auto psi = m.lower_forward(tape, packed, fwd);
    auto q = m.posterior(tape, psi, packed, latent::Role::z_w);
    auto z = detail::draw(q, cfg, rng);
    auto aug = m.inject_latent(tape, psi, packed, {{latent::Role::z_w, z}});
    recon_states = m.upper_forward(tape, aug, fwd);
    auto rc = ag::scale(detail::cls_nll(tape, m, recon_states, packed), T(-1));
    auto rt = ag::scale(detail::masked_nll(tape, m, recon_states, packed, seqs), T(-1));
    auto kl = latent::kl_to_standard(q);
    elbo_S = ag::sub(ag::add(rc, rt), ag::scale(kl, T(cfg.kl_weight)));
    elbo_A = detail::zero_scalar(tape);
    bd.recon_cls = rc.scalar() * inv_b;
    bd.recon_tokens = rt.scalar() * inv_b;
    bd.kl_zw = kl.scalar() * inv_b;
  } else {
    out.aspect = elbo_aspect(tape, m, right, rng, cfg, fwd);
    out.sentence = elbo_sentence(tape, m, left, out.aspect->posterior, rng, cfg, fwd);
    elbo_A = out.aspect->elbo;
    elbo_S = out.sentence->elbo;
    recon_states = out.sentence->recon_states;
    packed = out.sentence->packed;
    bd.recon_span = out.aspect->recon.scalar() * inv_b;
    bd.kl_za = out.aspect->kl_za.scalar() * inv_b;
    bd.recon_cls = out.sentence->recon_cls.scalar() * inv_b;
    bd.recon_tokens = out.sentence->recon_tokens.scalar() * inv_b;
    bd.kl_zs = out.sentence->kl_zs.scalar() * inv_b;
    bd.kl_zw = out.sentence->kl_zw.scalar() * inv_b;
  }

  auto [ls, la] = supervised_losses(tape, m, recon_states, packed, batch);
  bd.loss_stance = ls.scalar() * inv_b;
  bd.loss_span = la.scalar() * inv_b;
  bd.elbo_S = elbo_S.scalar() * inv_b;
  bd.elbo_A = elbo_A.scalar() * inv_b;
  bd.total = bd.loss_stance + bd.loss_span - bd.elbo_S - bd.elbo_A;
  out.loss = ag::scale(ag::sub(ag::sub(ag::add(ls, la), elbo_S), elbo_A), T(inv_b));
  return out;
}

}  // namespace vadet::objectives
