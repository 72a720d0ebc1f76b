// Acceptance run: one PASS/FAIL line per criterion, tolerances fixed below.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "micro.hpp"
#include "oracles.hpp"
#include "vadet/objectives.hpp"
#include "vadet/pipeline.hpp"

using namespace vadet;
using Clock = std::chrono::steady_clock;

namespace {

// Tolerances and thresholds.
constexpr int kGaussians = 100;
constexpr int kMcSamples = 100000;
constexpr double kMcRelTol = 0.02;
constexpr double kGradRelTol = 1e-3;
constexpr int kDecompExamples = 50;
constexpr double kDecompTol = 1e-6;
constexpr double kStanceMargin = 0.25;
constexpr double kSpanEmMargin = 0.40;
constexpr double kAblationGap = 0.02;
constexpr double kProbeGap = 0.15;
constexpr double kNmiFloor = 0.5;
constexpr double kNmiGap = 0.05;
constexpr double kWinRate = 0.90;
constexpr std::size_t kMinPairs = 100;
constexpr double kBudgetSeconds = 30 * 60;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

void progress(const std::string& what, Clock::time_point start) {
  std::fprintf(stderr, "[%7.1fs] %s\n", seconds_since(start), what.c_str());
}

int failures = 0;

void verdict(int id, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS" : "FAIL") << " criterion " << id << ": " << detail << std::endl;
  failures += !ok;
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(prec);
  o << v;
  return o.str();
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

std::string list(const std::vector<double>& v, int prec = 4) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i], prec);
  return s + "]";
}

// ---------------------------------------------------------------------------
// Criteria 1-3, 8: oracle checks
// ---------------------------------------------------------------------------

void gaussian_oracle() {
  using G = latent::DiagGaussian<double>;
  Rng rng(101);
  auto random_gaussian = [&](Eigen::Index d) {
    Eigen::VectorXd mu(d), ls(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      mu(i) = rng.normal();
      ls(i) = rng.uniform() * 2 - 1;
    }
    return G{mu, ls};
  };
  double worst = 0;
  Eigen::Index worst_dim = 0;
  for (int i = 0; i < kGaussians; ++i) {
    const auto d = 1 + static_cast<Eigen::Index>(rng.uniform_int(64));
    const G q = random_gaussian(d), p = random_gaussian(d);
    const double a = latent::kl_to_standard(q), b = latent::kl_between(q, p);
    const double ea = std::abs(oracle::mc_kl(q, G::standard(d), kMcSamples, rng) - a) / a;
    const double eb = std::abs(oracle::mc_kl(q, p, kMcSamples, rng) - b) / b;
    if (std::max(ea, eb) > worst) {
      worst = std::max(ea, eb);
      worst_dim = d;
    }
  }
  verdict(1, worst < kMcRelTol,
          "max relative error vs Monte Carlo " + fmt(worst) + " (dim " + std::to_string(worst_dim) + ") over " + std::to_string(kGaussians) +
              " Gaussians, tolerance " + fmt(kMcRelTol));
}

void gradient_check() {
  double worst = 0;
  std::string where;
  std::size_t checked = 0;
  const std::vector<std::pair<model::ModelConfig, std::uint64_t>> cases{{micro::config(), 7}, {micro::config(model::LatentMode::single), 9}};
  for (const auto& [cfg, seed] : cases) {
    model::Model<double> m(cfg, seed);
    Rng r(seed + 1);
    auto xs = micro::examples(3, 6, cfg.vocab_size, r);
    std::vector<const corpus::TokenizedExample*> b;
    for (const auto& x : xs) b.push_back(&x);
    objectives::ObjectiveConfig oc;
    oc.deterministic_z = true;
    oc.mask.probability = 0.5;
    oc.prior_gradient = true;
    oc.detach_zs_in_span = false;
    objectives::Ablation ab;
    ab.no_disentangle = cfg.latent == model::LatentMode::single;
    auto loss = [&] {
      Rng rr(42);
      ag::Tape<double> t;
      return objectives::total_loss(t, m, b, rr, oc, ab).loss.scalar();
    };
    m.zero_grad();
    {
      Rng rr(42);
      ag::Tape<double> t;
      auto tl = objectives::total_loss(t, m, b, rr, oc, ab);
      t.backward(tl.loss);
    }
    const auto g = micro::check(m, loss);
    checked += g.checked;
    if (g.worst > worst) {
      worst = g.worst;
      where = g.where;
    }
  }
  verdict(2, worst < kGradRelTol,
          "max relative error " + fmt(worst, 8) + " at " + where + " over " + std::to_string(checked) + " parameter entries, tolerance " +
              fmt(kGradRelTol, 4));
}

void decomposition_identity() {
  model::Model<double> m(micro::config(), 3);
  Rng r(4);
  auto xs = micro::examples(kDecompExamples, 6, 20, r);
  corpus::MaskedBatch left, right;
  for (const auto& x : xs) {
    left.push_back(corpus::mask_tokens(x, {0.5, 0.8, 0.1}, 20, r));
    right.push_back(corpus::mask_tokens(model::span_sequence(x.ids, *x.span_tok), {0.5, 0.8, 0.1}, 20, r));
  }
  objectives::ObjectiveConfig oc;
  oc.deterministic_z = true;
  ag::Tape<double> t(false);
  Rng rr(0);
  auto asp = objectives::elbo_aspect(t, m, right, rr, oc);
  auto sent = objectives::elbo_sentence(t, m, left, asp.posterior, rr, oc);
  std::vector<latent::DiagGaussian<double>> prior;
  for (Eigen::Index i = 0; i < kDecompExamples; ++i) prior.push_back(asp.posterior.row(i));
  const double worst = std::abs(sent.elbo.scalar() - objectives::elbo_sentence_joint(m, left, prior));
  verdict(3, worst < kDecompTol,
          "|decomposed - joint| " + fmt(worst, 12) + " summed over " + std::to_string(kDecompExamples) + " examples, tolerance 1e-6");
}

void metric_oracles() {
  const std::vector<int> gold{0, 0, 1, 1, 2, 2, 2};
  const double perfect = metrics::nmi(gold, gold);
  const double relabeled = metrics::nmi({4, 4, 0, 0, 7, 7, 7}, gold);
  std::vector<int> pred, g2;
  for (int i = 0; i < 5; ++i) pred.push_back(0), g2.push_back(0);
  for (int i = 0; i < 2; ++i) pred.push_back(1), g2.push_back(0);
  for (int i = 0; i < 3; ++i) pred.push_back(1), g2.push_back(1);
  const double acc = metrics::cluster_accuracy(pred, g2), brute = oracle::brute_force_accuracy(pred, g2);
  const double s = 0.8;
  const auto coh = metrics::coherence({"a", "b"}, [s](const std::string&, const std::string&) { return s; });
  const bool ok = std::abs(perfect - 1.0) < 1e-12 && std::abs(relabeled - 1.0) < 1e-12 && std::abs(acc - 0.8) < 1e-12 &&
                  std::abs(brute - 0.8) < 1e-12 && coh && std::abs(*coh - s / 4) < 1e-12;
  verdict(8, ok,
          "nmi(perfect) " + fmt(perfect, 6) + ", nmi(relabeled) " + fmt(relabeled, 6) + ", cluster_acc [[5,0],[2,3]] " + fmt(acc, 6) +
              " (brute force " + fmt(brute, 6) + "), coherence(s=0.8, N=2) " + (coh ? fmt(*coh, 6) : std::string("absent")));
}

// ---------------------------------------------------------------------------
// Criteria 4-7, 9, 10: trained pipeline per seed
// ---------------------------------------------------------------------------

struct SeedRun {
  std::vector<double> pretrain_loss;
  double stance_acc = 0, majority_acc = 0;
  double span_em = 0, random_span_em = 0;
  double span_f1_full = 0, span_f1_d = 0, span_f1_u = 0;
  double probe_zs = 0, probe_zw = 0;
  double nmi_full = 0, nmi_d = 0;
  std::size_t wins = 0, pairs = 0;
  double coh_within = 0, coh_across = 0;
  nlohmann::json metrics;
};

struct Data {
  pipeline::Prepared prep;
  std::vector<corpus::TokenizedExample> unlabeled, train, test;
};

Data prepare(config::RunConfig& cfg) {
  const auto corpus = synth::generate(cfg.synth);
  Data d;
  d.prep = pipeline::prepare(corpus.unlabeled, corpus.annotated, cfg);
  cfg.model.vocab_size = d.prep.vocab.size();
  d.unlabeled = corpus::tokenize_all(d.prep.unlabeled, d.prep.vocab, cfg.model.max_len);
  d.train = corpus::tokenize_all(d.prep.train, d.prep.vocab, cfg.model.max_len);
  d.test = corpus::tokenize_all(d.prep.test, d.prep.vocab, cfg.model.max_len);
  return d;
}

trainer::Evaluation supervised(const trainer::EnsembleModel& ens, const std::vector<corpus::TokenizedExample>& test) {
  const auto idx = trainer::supervised_indices(test);
  return trainer::evaluate(trainer::ensemble_predict(ens, test, idx), test, idx);
}

SeedRun run_seed(std::uint64_t seed, const config::RunConfig& base_cfg, Clock::time_point start) {
  config::RunConfig cfg = base_cfg;
  SeedRun out;
  const std::string tag = "seed " + std::to_string(seed) + ": ";
  Data d = prepare(cfg);
  progress(tag + "corpus " + std::to_string(d.unlabeled.size()) + " unlabeled, " + std::to_string(d.train.size()) + " train, " +
               std::to_string(d.test.size()) + " test",
           start);

  // Majority-class and random-valid-span baselines on the test split.
  std::array<int, 3> counts{};
  for (const auto& x : d.train) counts[static_cast<std::size_t>(*x.stance)]++;
  const int majority = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  const auto sup = trainer::supervised_indices(d.test);
  for (std::size_t i : sup) {
    out.majority_acc += static_cast<int>(*d.test[i].stance) == majority;
    const double n = d.test[i].n();
    out.random_span_em += 2.0 / (n * (n + 1));
  }
  out.majority_acc /= static_cast<double>(sup.size());
  out.random_span_em /= static_cast<double>(sup.size());

  auto mc = cfg.model;
  mc.latent = model::LatentMode::single;
  const trainer::Net init(mc, cfg.seed);
  trainer::Net base = init;
  out.pretrain_loss = trainer::pretrain(d.unlabeled, base, cfg.train).epoch_loss;
  progress(tag + "pretrained, epoch -ELBO " + list(out.pretrain_loss), start);

  const auto full = trainer::finetune_kfold(d.train, base, cfg.train);
  const auto ev = pipeline::evaluate(full.ensemble, d.prep.vocab, d.prep.test, d.train, d.test, cfg);
  const auto& rep = ev.report;
  out.metrics = rep.to_json();
  out.stance_acc = *rep.stance_acc;
  out.span_em = *rep.span_em;
  out.span_f1_full = *rep.span_f1;
  out.nmi_full = *rep.nmi;
  out.probe_zs = *rep.probe_acc_zs;
  out.probe_zw = *rep.probe_acc_zw;
  out.wins = static_cast<std::size_t>(std::lround(*rep.matched_win_rate * rep.counts["perplexity_posts"].get<double>()));
  out.pairs = rep.counts["perplexity_posts"].get<std::size_t>();
  out.coh_within = *rep.coherence_mean;
  out.coh_across = *rep.coherence_across_mean;
  progress(tag + "full model evaluated", start);

  config::RunConfig dcfg = cfg;
  dcfg.train.ablation.no_disentangle = true;
  const auto dres = trainer::finetune_kfold(d.train, base, dcfg.train);
  out.span_f1_d = supervised(dres.ensemble, d.test).span.f1;
  const auto dcl = pipeline::cluster_posts(dres.ensemble.members.front(), d.test, d.train, dcfg);
  std::vector<std::size_t> with_gold;
  const auto gold = pipeline::gold_aspects(d.test, &with_gold);
  std::vector<int> pred;
  for (std::size_t i : with_gold) pred.push_back(dcl.model.labels[i]);
  out.nmi_d = metrics::nmi(pred, gold);
  progress(tag + "-D evaluated", start);

  config::RunConfig ucfg = cfg;
  ucfg.train.ablation.no_pretrain = true;
  const auto ures = trainer::finetune_kfold(d.train, init, ucfg.train);
  out.span_f1_u = supervised(ures.ensemble, d.test).span.f1;
  progress(tag + "-U evaluated", start);
  return out;
}

/// Reduced end-to-end pipeline; the metrics document is compared across two runs.
std::string reduced_pipeline(std::uint64_t seed) {
  config::RunConfig cfg = config::from_json({{"seed", seed}});
  cfg.synth.n_unlabeled = 1000;
  cfg.synth.n_annotated = 300;
  cfg.model.hidden = 32;
  cfg.model.ffn = 64;
  cfg.train.pretrain.epochs = 1;
  cfg.train.finetune.epochs = 2;
  cfg.train.finetune.folds = 2;
  cfg.eval.perplexity_posts = 20;
  Data d = prepare(cfg);
  auto mc = cfg.model;
  mc.latent = model::LatentMode::single;
  trainer::Net base(mc, cfg.seed);
  trainer::pretrain(d.unlabeled, base, cfg.train);
  const auto ft = trainer::finetune_kfold(d.train, base, cfg.train);
  auto rep = pipeline::evaluate(ft.ensemble, d.prep.vocab, d.prep.test, d.train, d.test, cfg).report.to_json();
  return rep.dump();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  int n_seeds = 3;
  app.add_option("--seeds", n_seeds, "number of seeds for the trained criteria")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);
  log::threshold() = log::Level::warn;
  const auto start = Clock::now();

  gaussian_oracle();
  progress("criterion 1 done", start);
  gradient_check();
  progress("criterion 2 done", start);
  decomposition_identity();
  metric_oracles();

  std::vector<SeedRun> runs;
  for (int s = 0; s < n_seeds; ++s) runs.push_back(run_seed(static_cast<std::uint64_t>(s), config::from_json({{"seed", s}}), start));
  auto col = [&](auto f) {
    std::vector<double> v;
    for (const auto& r : runs) v.push_back(f(r));
    return v;
  };

  {
    bool all = true;
    std::string detail;
    for (std::size_t s = 0; s < runs.size(); ++s) {
      const auto& l = runs[s].pretrain_loss;
      bool mono = l.size() == 5;
      for (std::size_t e = 1; e < l.size(); ++e) mono = mono && l[e] < l[e - 1];
      all = all && mono;
      detail += (s ? "; " : "") + std::string("seed ") + std::to_string(s) + " " + list(l, 3) + (mono ? "" : " (not monotone)");
    }
    verdict(4, all, "epoch-mean -ELBO " + detail);
  }
  {
    const double acc = mean(col([](const SeedRun& r) { return r.stance_acc; }));
    const double maj = mean(col([](const SeedRun& r) { return r.majority_acc; }));
    const double em = mean(col([](const SeedRun& r) { return r.span_em; }));
    const double rnd = mean(col([](const SeedRun& r) { return r.random_span_em; }));
    verdict(5, acc - maj >= kStanceMargin && em - rnd >= kSpanEmMargin,
            "stance acc " + fmt(acc) + " vs majority " + fmt(maj) + " (margin " + fmt(acc - maj) + ", need " + fmt(kStanceMargin, 2) +
                "); span EM " + fmt(em) + " vs random span " + fmt(rnd) + " (margin " + fmt(em - rnd) + ", need " + fmt(kSpanEmMargin, 2) + ")");
  }
  {
    const auto f = col([](const SeedRun& r) { return r.span_f1_full; });
    const auto dd = col([](const SeedRun& r) { return r.span_f1_d; });
    const auto u = col([](const SeedRun& r) { return r.span_f1_u; });
    const double mf = mean(f), md = mean(dd), mu = mean(u);
    verdict(6, mf >= md && md >= mu && mf - mu >= kAblationGap,
            "mean span F1 full " + fmt(mf) + " " + list(f) + ", -D " + fmt(md) + " " + list(dd) + ", -U " + fmt(mu) + " " + list(u) +
                "; full - (-U) " + fmt(mf - mu) + ", need " + fmt(kAblationGap, 2));
  }
  {
    const auto zs = col([](const SeedRun& r) { return r.probe_zs; });
    const auto zw = col([](const SeedRun& r) { return r.probe_zw; });
    const auto nf = col([](const SeedRun& r) { return r.nmi_full; });
    const auto nd = col([](const SeedRun& r) { return r.nmi_d; });
    const double gap = mean(zs) - mean(zw);
    const bool ok = gap >= kProbeGap && mean(nf) >= kNmiFloor && mean(nf) - mean(nd) >= kNmiGap;
    verdict(7, ok,
            "stance probe z_s " + fmt(mean(zs)) + " " + list(zs) + " vs z_w " + fmt(mean(zw)) + " " + list(zw) + " (gap " + fmt(gap) + ", need " +
                fmt(kProbeGap, 2) + "); DEC NMI z_w " + fmt(mean(nf)) + " " + list(nf) + " (need " + fmt(kNmiFloor, 2) + "), -D " +
                fmt(mean(nd)) + " " + list(nd) + " (gap " + fmt(mean(nf) - mean(nd)) + ", need " + fmt(kNmiGap, 2) + ")");
  }
  {
    std::size_t wins = 0, pairs = 0;
    for (const auto& r : runs) {
      wins += r.wins;
      pairs += r.pairs;
    }
    const double rate = pairs ? wins / static_cast<double>(pairs) : 0.0;
    verdict(9, pairs >= kMinPairs && rate >= kWinRate,
            "matched centroid beats random latent in " + std::to_string(wins) + "/" + std::to_string(pairs) + " posts (" + fmt(rate) +
                ", need " + fmt(kWinRate, 2) + ")");
  }
  {
    const double w = mean(col([](const SeedRun& r) { return r.coh_within; }));
    const double a = mean(col([](const SeedRun& r) { return r.coh_across; }));
    verdict(10, w > a, "mean coherence within clusters " + fmt(w, 5) + " vs across clusters " + fmt(a, 5));
  }
  {
    const std::string a = reduced_pipeline(5), b = reduced_pipeline(5);
    const double elapsed = seconds_since(start);
    verdict(11, a == b && elapsed < kBudgetSeconds,
            std::string("reduced pipeline rerun ") + (a == b ? "byte-identical" : "DIFFERS") + "; total runtime " + fmt(elapsed / 60, 1) +
                " min, budget " + fmt(kBudgetSeconds / 60, 0) + " min");
  }
  for (std::size_t s = 0; s < runs.size(); ++s) std::fprintf(stderr, "seed %zu metrics: %s\n", s, runs[s].metrics.dump().c_str());
  return failures == 0 ? 0 : 1;
}
