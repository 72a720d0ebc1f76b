#pragma once

// Two-stage training: masked-LM ELBO pretraining on unlabeled posts, then
// k-fold supervised fine-tuning whose best members form an ensemble.

#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "vadet/checkpoint.hpp"
#include "vadet/corpus.hpp"
#include "vadet/log.hpp"
#include "vadet/metrics.hpp"
#include "vadet/model.hpp"
#include "vadet/objectives.hpp"
#include "vadet/optim.hpp"
#include "vadet/rng.hpp"

namespace vadet::trainer {

namespace fs = std::filesystem;
using corpus::TokenizedExample;
using Net = model::Model<float>;

struct PretrainConfig {
  int epochs = 5;
  int batch = 32;
  double lr = 1e-3;
  double warmup_frac = 0.05;
};

struct FinetuneConfig {
  int epochs = 5;
  int batch = 32;
  double lr = 3e-3;
  double warmup_frac = 0.1;
  int folds = 5;
};

enum class Combine { probability, logit };

struct TrainConfig {
  PretrainConfig pretrain;
  FinetuneConfig finetune;
  optim::AdamWConfig adamw;
  objectives::ObjectiveConfig objective;
  objectives::Ablation ablation;
  Combine combine = Combine::probability;
  std::uint64_t seed = 0;

  void validate() const {
    auto need = [](bool ok, const char* what) {
      if (!ok) throw std::invalid_argument(std::string("TrainConfig: ") + what);
    };
    need(finetune.folds >= 2, "finetune.folds must be >= 2");
    need(pretrain.epochs >= 1 && finetune.epochs >= 1, "epochs must be >= 1");
    need(pretrain.batch >= 1 && finetune.batch >= 1, "batch sizes must be >= 1");
    need(pretrain.warmup_frac >= 0 && pretrain.warmup_frac < 1, "pretrain.warmup_frac must be in [0, 1)");
    need(finetune.warmup_frac >= 0 && finetune.warmup_frac < 1, "finetune.warmup_frac must be in [0, 1)");
    need(pretrain.lr > 0 && finetune.lr > 0, "learning rates must be positive");
  }
};

/// Non-finite loss. The model has been restored to the last good parameters.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::optional<fs::path> last_good)
      : std::runtime_error(what), last_good_(std::move(last_good)) {}
  const std::optional<fs::path>& last_good() const { return last_good_; }

 private:
  std::optional<fs::path> last_good_;
};

/// Appends one JSON document per line.
class MetricLog {
 public:
  MetricLog() = default;
  explicit MetricLog(const fs::path& path) : out_(std::make_unique<std::ofstream>(path, std::ios::app)) {
    if (!*out_) throw std::runtime_error("cannot open metric log " + path.string());
  }
  void write(const nlohmann::json& j) {
    if (out_) *out_ << j.dump() << "\n" << std::flush;
  }

 private:
  std::unique_ptr<std::ofstream> out_;
};

namespace detail {

inline std::vector<std::vector<std::size_t>> batches(std::vector<std::size_t> idx, std::size_t batch, Rng& rng) {
  rng.shuffle(idx.begin(), idx.end());
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < idx.size(); s += batch) out.emplace_back(idx.begin() + static_cast<long>(s), idx.begin() + static_cast<long>(std::min(idx.size(), s + batch)));
  return out;
}

inline long num_steps(std::size_t n, std::size_t batch, int epochs) {
  return static_cast<long>((n + batch - 1) / batch) * epochs;
}

template <class T>
std::vector<Matrix<T>> snapshot(const model::Model<T>& m) {
  std::vector<Matrix<T>> out;
  for (const auto& p : m.parameters()) out.push_back(p.value);
  return out;
}

template <class T>
void restore(model::Model<T>& m, const std::vector<Matrix<T>>& s) {
  std::size_t i = 0;
  for (auto& p : m.parameters()) p.value = s[i++];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Pretraining
// ---------------------------------------------------------------------------

struct PretrainResult {
  std::vector<double> epoch_loss;  // mean -ELBO per example
  std::vector<fs::path> checkpoints;
  bool skipped = false;
};

/// Minimizes -ELBO over the unlabeled corpus. With the -U ablation the
/// model is left at its initialization and saved as-is.
inline PretrainResult pretrain(const std::vector<TokenizedExample>& corpus, Net& m, const TrainConfig& cfg,
                               const std::optional<fs::path>& run_dir = std::nullopt) {
  cfg.validate();
  PretrainResult res;
  MetricLog mlog = run_dir ? MetricLog(*run_dir / "metrics.jsonl") : MetricLog();
  if (cfg.ablation.no_pretrain) {
    log::info("pretrain: skipped (-U); emitting the random initialization");
    res.skipped = true;
    if (run_dir) {
      res.checkpoints.push_back(*run_dir / "pretrain_init.ckpt");
      checkpoint::save(res.checkpoints.back(), m, {{"stage", "pretrain"}, {"skipped", true}});
    }
    return res;
  }
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].n() >= 1) usable.push_back(i);
  }
  if (usable.empty()) throw std::invalid_argument("pretrain: unlabeled corpus is empty");
  Rng rng = Rng(cfg.seed).split(11);
  optim::AdamW<float> opt(cfg.adamw);
  const auto B = static_cast<std::size_t>(cfg.pretrain.batch);
  const long total = detail::num_steps(usable.size(), B, cfg.pretrain.epochs);
  long step = 0;
  auto good = detail::snapshot(m);
  std::optional<fs::path> good_path;
  const model::ForwardOptions fwd{true, &rng};
  for (int epoch = 0; epoch < cfg.pretrain.epochs; ++epoch) {
    double sum = 0;
    for (const auto& b : detail::batches(usable, B, rng)) {
      corpus::MaskedBatch mb;
      for (std::size_t i : b) mb.push_back(corpus::mask_tokens(corpus[i], cfg.objective.mask, m.config().vocab_size, rng));
      m.zero_grad();
      ag::Tape<float> tape;
      auto u = objectives::elbo_unsupervised(tape, m, mb, rng, cfg.objective, fwd);
      const double loss = -static_cast<double>(u.elbo.scalar());
      if (!std::isfinite(loss)) {
        detail::restore(m, good);
        throw DivergenceError("pretrain: non-finite loss at epoch " + std::to_string(epoch + 1), good_path);
      }
      tape.backward(ag::scale(u.elbo, -1.0f / static_cast<float>(b.size())));
      opt.step(m.parameters(), optim::lr_at(step, total, cfg.pretrain.lr, cfg.pretrain.warmup_frac));
      ++step;
      sum += loss;
    }
    const double mean = sum / static_cast<double>(usable.size());
    res.epoch_loss.push_back(mean);
    log::info("pretrain epoch " + std::to_string(epoch + 1) + ": mean -ELBO " + std::to_string(mean));
    mlog.write({{"stage", "pretrain"}, {"epoch", epoch + 1}, {"neg_elbo", mean}});
    good = detail::snapshot(m);
    if (run_dir) {
      good_path = *run_dir / ("pretrain_epoch" + std::to_string(epoch + 1) + ".ckpt");
      checkpoint::save(*good_path, m, {{"stage", "pretrain"}, {"epoch", epoch + 1}, {"neg_elbo", mean}});
      res.checkpoints.push_back(*good_path);
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Prediction helpers
// ---------------------------------------------------------------------------

template <class T>
std::vector<model::Prediction> predict_all(const model::Model<T>& m, const std::vector<TokenizedExample>& xs,
                                           const std::vector<std::size_t>& idx, std::size_t batch = 256) {
  std::vector<model::Prediction> out;
  out.reserve(idx.size());
  for (std::size_t s = 0; s < idx.size(); s += batch) {
    std::vector<const std::vector<int>*> views;
    for (std::size_t i = s; i < std::min(idx.size(), s + batch); ++i) views.push_back(&xs[idx[i]].ids);
    auto p = m.predict(views);
    out.insert(out.end(), std::make_move_iterator(p.begin()), std::make_move_iterator(p.end()));
  }
  return out;
}

struct Evaluation {
  metrics::StanceScores stance;
  metrics::SpanScores span;
  double selection_score() const { return stance.macro_f1 + span.f1; }
};

inline Evaluation evaluate(const std::vector<model::Prediction>& preds, const std::vector<TokenizedExample>& xs,
                           const std::vector<std::size_t>& idx) {
  std::vector<int> ps, gs;
  std::vector<corpus::TokenSpan> pa, ga;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    ps.push_back(preds[i].stance);
    gs.push_back(static_cast<int>(*xs[idx[i]].stance));
    pa.push_back(preds[i].span);
    ga.push_back(*xs[idx[i]].span_tok);
  }
  return {metrics::stance_metrics(ps, gs), metrics::span_metrics(pa, ga)};
}

// ---------------------------------------------------------------------------
// Fine-tuning
// ---------------------------------------------------------------------------

struct EnsembleModel {
  std::vector<Net> members;
  Combine combine = Combine::probability;
};

struct MemberTrace {
  int fold = 0;
  std::vector<double> train_loss;
  std::vector<Evaluation> validation;
  int best_epoch = 0;
};

struct FinetuneResult {
  EnsembleModel ensemble;
  std::vector<MemberTrace> traces;
  std::vector<std::vector<std::size_t>> folds;
};

/// Examples usable for supervision: stance and span present, not truncated.
inline std::vector<std::size_t> supervised_indices(const std::vector<TokenizedExample>& xs) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].stance && xs[i].span_tok && !xs[i].dropped) out.push_back(i);
  }
  return out;
}

/// Model used for fine-tuning: the base weights with the latent layout the
/// ablation asks for.
inline Net finetune_model(const Net& base, const TrainConfig& cfg) {
  Net m = base;
  m.mutable_config().latent = cfg.ablation.no_disentangle ? model::LatentMode::single : model::LatentMode::disentangled;
  return m;
}

/// Trains one member on `train_idx` and keeps the best epoch on `val_idx`.
inline Net train_member(const std::vector<TokenizedExample>& xs, const Net& base, const TrainConfig& cfg,
                        const std::vector<std::size_t>& train_idx, const std::vector<std::size_t>& val_idx, Rng rng,
                        MemberTrace& trace, MetricLog* mlog = nullptr) {
  Net m = finetune_model(base, cfg);
  optim::AdamW<float> opt(cfg.adamw);
  const auto B = static_cast<std::size_t>(cfg.finetune.batch);
  const long total = detail::num_steps(train_idx.size(), B, cfg.finetune.epochs);
  long step = 0;
  std::optional<std::vector<Matrix<float>>> best;
  double best_score = -std::numeric_limits<double>::infinity();
  const model::ForwardOptions fwd{true, &rng};
  for (int epoch = 0; epoch < cfg.finetune.epochs; ++epoch) {
    double sum = 0;
    objectives::LossBreakdown mean_bd;
    for (const auto& b : detail::batches(train_idx, B, rng)) {
      std::vector<const TokenizedExample*> batch;
      for (std::size_t i : b) batch.push_back(&xs[i]);
      m.zero_grad();
      ag::Tape<float> tape;
      auto tl = objectives::total_loss(tape, m, batch, rng, cfg.objective, cfg.ablation, fwd);
      if (!std::isfinite(tl.breakdown.total)) {
        if (best) detail::restore(m, *best);
        throw DivergenceError("finetune: non-finite loss in fold " + std::to_string(trace.fold) + " epoch " + std::to_string(epoch + 1),
                              std::nullopt);
      }
      tape.backward(tl.loss);
      const double lr = optim::lr_at(step, total, cfg.finetune.lr, cfg.finetune.warmup_frac);
      opt.step(m.parameters(), lr);
      ++step;
      if (mlog) {
        auto rec = objectives::to_json(tl.breakdown);
        rec["stage"] = "finetune_step";
        rec["fold"] = trace.fold;
        rec["step"] = step;
        rec["lr"] = lr;
        mlog->write(rec);
      }
      const double w = static_cast<double>(b.size());
      sum += tl.breakdown.total * w;
      auto acc = [w](double& into, double v) { into += v * w; };
      acc(mean_bd.recon_tokens, tl.breakdown.recon_tokens);
      acc(mean_bd.recon_cls, tl.breakdown.recon_cls);
      acc(mean_bd.recon_span, tl.breakdown.recon_span);
      acc(mean_bd.kl_zs, tl.breakdown.kl_zs);
      acc(mean_bd.kl_zw, tl.breakdown.kl_zw);
      acc(mean_bd.kl_za, tl.breakdown.kl_za);
      acc(mean_bd.loss_stance, tl.breakdown.loss_stance);
      acc(mean_bd.loss_span, tl.breakdown.loss_span);
      acc(mean_bd.elbo_A, tl.breakdown.elbo_A);
      acc(mean_bd.elbo_S, tl.breakdown.elbo_S);
    }
    const double n = static_cast<double>(train_idx.size());
    for (double* f : {&mean_bd.recon_tokens, &mean_bd.recon_cls, &mean_bd.recon_span, &mean_bd.kl_zs, &mean_bd.kl_zw,
                      &mean_bd.kl_za, &mean_bd.loss_stance, &mean_bd.loss_span, &mean_bd.elbo_A, &mean_bd.elbo_S}) {
      *f /= n;
    }
    mean_bd.total = sum / n;
    trace.train_loss.push_back(mean_bd.total);
    const auto ev = evaluate(predict_all(m, xs, val_idx), xs, val_idx);
    trace.validation.push_back(ev);
    log::info("fold " + std::to_string(trace.fold) + " epoch " + std::to_string(epoch + 1) + ": loss " + std::to_string(mean_bd.total) +
              ", val stance acc " + std::to_string(ev.stance.accuracy) + ", val span F1 " + std::to_string(ev.span.f1));
    if (mlog) {
      mlog->write({{"stage", "finetune"},
                   {"fold", trace.fold},
                   {"epoch", epoch + 1},
                   {"train", objectives::to_json(mean_bd)},
                   {"val_stance_acc", ev.stance.accuracy},
                   {"val_stance_f1", ev.stance.macro_f1},
                   {"val_span_em", ev.span.em},
                   {"val_span_f1", ev.span.f1}});
    }
    if (ev.selection_score() > best_score) {
      best_score = ev.selection_score();
      best = detail::snapshot(m);
      trace.best_epoch = epoch + 1;
    }
  }
  detail::restore(m, *best);
  return m;
}

/// k members from the same base, each trained on k-1 folds and validated on the held one.
inline FinetuneResult finetune_kfold(const std::vector<TokenizedExample>& xs, const Net& base, const TrainConfig& cfg,
                                     const std::optional<fs::path>& run_dir = std::nullopt) {
  cfg.validate();
  const auto usable = supervised_indices(xs);
  if (usable.size() < xs.size()) {
    log::warn("finetune: " + std::to_string(xs.size() - usable.size()) + " examples lack stance/span and are skipped");
  }
  const int k = cfg.finetune.folds;
  if (usable.size() < static_cast<std::size_t>(k)) throw std::invalid_argument("finetune: fewer annotated examples than folds");
  std::vector<std::optional<corpus::Stance>> labels;
  for (std::size_t i : usable) labels.push_back(xs[i].stance);
  Rng fold_rng = Rng(cfg.seed).split(21);
  FinetuneResult res;
  for (auto& f : corpus::split_folds(labels, k, fold_rng)) {
    std::vector<std::size_t> mapped;
    for (std::size_t j : f) mapped.push_back(usable[j]);
    res.folds.push_back(std::move(mapped));
  }
  for (int f = 0; f < k; ++f) {
    const std::size_t train_n = usable.size() - res.folds[static_cast<std::size_t>(f)].size();
    if (train_n < static_cast<std::size_t>(cfg.finetune.batch)) {
      throw std::invalid_argument("finetune: fold " + std::to_string(f) + " leaves " + std::to_string(train_n) +
                                  " training examples, fewer than one batch of " + std::to_string(cfg.finetune.batch));
    }
  }
  MetricLog mlog = run_dir ? MetricLog(*run_dir / "metrics.jsonl") : MetricLog();
  if (run_dir) {
    nlohmann::json index = nlohmann::json::array();
    for (int f = 0; f < k; ++f) {
      nlohmann::json ids = nlohmann::json::array();
      for (std::size_t i : res.folds[static_cast<std::size_t>(f)]) ids.push_back(xs[i].id);
      index.push_back({{"fold", f}, {"validation_ids", ids}});
    }
    std::ofstream(*run_dir / "folds.json") << index.dump(1) << "\n";
  }
  res.ensemble.combine = cfg.combine;
  Rng root(cfg.seed);
  for (int f = 0; f < k; ++f) {
    std::vector<std::size_t> train_idx;
    for (int g = 0; g < k; ++g) {
      if (g == f) continue;
      const auto& fold = res.folds[static_cast<std::size_t>(g)];
      train_idx.insert(train_idx.end(), fold.begin(), fold.end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    MemberTrace trace;
    trace.fold = f;
    Net member = train_member(xs, base, cfg, train_idx, res.folds[static_cast<std::size_t>(f)], root.split(100 + static_cast<std::uint64_t>(f)),
                              trace, &mlog);
    if (run_dir) {
      checkpoint::save(*run_dir / ("member" + std::to_string(f) + ".ckpt"), member,
                       {{"stage", "finetune"}, {"fold", f}, {"best_epoch", trace.best_epoch}});
    }
    res.ensemble.members.push_back(std::move(member));
    res.traces.push_back(std::move(trace));
  }
  return res;
}

// ---------------------------------------------------------------------------
// Ensembling
// ---------------------------------------------------------------------------

/// Averages member distributions (or log-probabilities, then renormalizes) and
/// decodes the span from the averaged start/end distributions.
inline model::Prediction combine(const std::vector<model::Prediction>& ps, Combine rule = Combine::probability, int span_cap = 30) {
  if (ps.empty()) throw std::invalid_argument("combine: no member predictions");
  const std::size_t n = ps.front().start_probs.size();
  model::Prediction out;
  out.start_probs.assign(n, 0.0);
  out.end_probs.assign(n, 0.0);
  const double w = 1.0 / static_cast<double>(ps.size());
  auto add = [&](double& into, double p) { into += w * (rule == Combine::logit ? std::log(std::max(p, 1e-300)) : p); };
  for (const auto& p : ps) {
    if (p.start_probs.size() != n) throw std::invalid_argument("combine: members disagree on sequence length");
    for (std::size_t c = 0; c < 3; ++c) add(out.stance_probs[c], p.stance_probs[c]);
    for (std::size_t i = 0; i < n; ++i) {
      add(out.start_probs[i], p.start_probs[i]);
      add(out.end_probs[i], p.end_probs[i]);
    }
  }
  if (rule == Combine::logit) {
    auto renorm = [](auto& v) {
      double mx = -std::numeric_limits<double>::infinity();
      for (double x : v) mx = std::max(mx, x);
      double s = 0;
      for (double& x : v) s += x = std::exp(x - mx);
      for (double& x : v) x /= s;
    };
    renorm(out.stance_probs);
    renorm(out.start_probs);
    renorm(out.end_probs);
  }
  out.stance = model::argmax(out.stance_probs);
  out.span = model::decode_span(out.start_probs, out.end_probs, span_cap);
  return out;
}

inline std::vector<model::Prediction> ensemble_predict(const EnsembleModel& ens, const std::vector<TokenizedExample>& xs,
                                                       const std::vector<std::size_t>& idx) {
  if (ens.members.empty()) throw std::invalid_argument("ensemble_predict: empty ensemble");
  std::vector<std::vector<model::Prediction>> per;
  for (const auto& m : ens.members) per.push_back(predict_all(m, xs, idx));
  std::vector<model::Prediction> out;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::vector<model::Prediction> ps;
    for (auto& p : per) ps.push_back(std::move(p[i]));
    out.push_back(combine(ps, ens.combine));
  }
  return out;
}

inline std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace vadet::trainer
