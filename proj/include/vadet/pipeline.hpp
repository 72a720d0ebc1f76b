#pragma once

// End-to-end steps shared by the command-line tool and the acceptance suite:
// preparing a corpus, clustering posts with a trained model, and computing the
// full metrics report.

#include <filesystem>
#include <fstream>
#include <set>
#include <unordered_map>
#include <string>
#include <vector>

#include "vadet/clustering.hpp"
#include "vadet/config.hpp"
#include "vadet/corpus.hpp"
#include "vadet/metrics.hpp"
#include "vadet/trainer.hpp"

namespace vadet::pipeline {

namespace fs = std::filesystem;
using corpus::AnnotatedPost;
using corpus::TokenizedExample;
using trainer::Net;

struct Prepared {
  corpus::Vocab vocab;
  std::vector<AnnotatedPost> unlabeled, train, test;
  nlohmann::json stats = nlohmann::json::object();
};

/// Cleans both corpora, splits the annotated posts into train/test and builds
/// the vocabulary from the unlabeled and training texts.
inline Prepared prepare(const std::vector<AnnotatedPost>& unlabeled, const std::vector<AnnotatedPost>& annotated,
                        const config::RunConfig& cfg) {
  corpus::PreprocessOptions opt;
  opt.extra_allowed = cfg.data.extra_allowed;
  if (!cfg.data.emoticons.empty()) opt.emoticons = corpus::load_emoticon_table(cfg.data.emoticons);
  Prepared out;
  std::size_t dropped_u = 0, dropped_a = 0;
  for (const auto& p : unlabeled) {
    if (auto q = corpus::preprocess_post(p, opt)) out.unlabeled.push_back(std::move(*q));
    else ++dropped_u;
  }
  std::vector<AnnotatedPost> ann;
  for (const auto& p : annotated) {
    if (auto q = corpus::preprocess_post(p, opt)) ann.push_back(std::move(*q));
    else ++dropped_a;
  }
  std::vector<std::size_t> idx = trainer::all_indices(ann.size());
  Rng rng = Rng(cfg.seed).split(31);
  rng.shuffle(idx.begin(), idx.end());
  const auto n_test = static_cast<std::size_t>(std::lround(cfg.data.test_fraction * static_cast<double>(ann.size())));
  std::vector<char> is_test(ann.size(), 0);
  for (std::size_t i = 0; i < n_test; ++i) is_test[idx[i]] = 1;
  for (std::size_t i = 0; i < ann.size(); ++i) (is_test[i] ? out.test : out.train).push_back(ann[i]);
  std::vector<std::string> texts;
  for (const auto& p : out.unlabeled) texts.push_back(p.post.text);
  for (const auto& p : out.train) texts.push_back(p.post.text);
  out.vocab = corpus::build_vocab(texts, cfg.data.vocab_size);
  out.stats = {{"unlabeled", out.unlabeled.size()}, {"train", out.train.size()},   {"test", out.test.size()},
               {"dropped_unlabeled", dropped_u},    {"dropped_annotated", dropped_a}, {"vocab_size", out.vocab.size()}};
  return out;
}

inline void write_prepared(const fs::path& dir, const Prepared& p) {
  fs::create_directories(dir);
  corpus::write_jsonl((dir / "unlabeled.jsonl").string(), p.unlabeled);
  corpus::write_jsonl((dir / "train.jsonl").string(), p.train);
  corpus::write_jsonl((dir / "test.jsonl").string(), p.test);
  p.vocab.save((dir / "vocab.txt").string());
  std::ofstream(dir / "stats.json") << p.stats.dump(2) << "\n";
}

inline Prepared read_prepared(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("prepared data directory not found: " + dir.string());
  Prepared p;
  p.vocab = corpus::Vocab::load((dir / "vocab.txt").string());
  p.unlabeled = corpus::load_jsonl((dir / "unlabeled.jsonl").string());
  p.train = corpus::load_jsonl((dir / "train.jsonl").string());
  p.test = corpus::load_jsonl((dir / "test.jsonl").string());
  return p;
}

// ---------------------------------------------------------------------------
// Clustering
// ---------------------------------------------------------------------------

struct ClusterResult {
  clustering::ClusterModel model;
  clustering::Mat latents;  // clustered posts x latent dim
  clustering::DecTrace trace;
  std::vector<clustering::AspectCentroid> centroids;
  std::optional<Net> refined;  // encoder after joint refinement
};

/// Number of distinct gold aspect categories among `xs`.
inline int gold_categories(const std::vector<TokenizedExample>& xs) {
  std::set<int> cats;
  for (const auto& x : xs) {
    if (x.aspect_category) cats.insert(*x.aspect_category);
  }
  return static_cast<int>(cats.size());
}

/// Clusters `posts` by the configured latent and computes the aspect centroids
/// from the span posteriors of `population` (posts with gold spans).
inline ClusterResult cluster_posts(const Net& m, const std::vector<TokenizedExample>& posts,
                                   const std::vector<TokenizedExample>& population, const config::RunConfig& cfg) {
  const auto role = config::parse_role(cfg.cluster.latent);
  int K = cfg.cluster.K > 0 ? cfg.cluster.K : gold_categories(posts);
  if (K < 1) throw std::invalid_argument("cluster: K is 0 and the posts carry no aspect categories");
  ClusterResult r;
  const Net* enc = &m;
  r.latents = clustering::extract_latents(posts, m, role);
  auto km = clustering::kmeans(r.latents, K, cfg.seed, cfg.cluster.kmeans);
  km.alpha = cfg.cluster.alpha;
  if (cfg.cluster.joint) {
    r.refined = m;
    r.model = clustering::dec_refine_joint(posts, *r.refined, std::move(km), role, cfg.cluster.dec, cfg.cluster.encoder_lr, 128, &r.trace);
    enc = &*r.refined;
    r.latents = clustering::extract_latents(posts, *enc, role);
  } else {
    r.model = clustering::dec_refine(r.latents, std::move(km), cfg.cluster.dec, &r.trace);
  }
  std::vector<TokenizedExample> spanned;
  for (const auto& x : population) {
    if (x.span_tok) spanned.push_back(x);
  }
  if (spanned.empty()) {
    log::warn("cluster: no posts with spans for aspect centroids");
    return r;
  }
  const auto z_a = clustering::extract_latents(spanned, *enc, latent::Role::z_a);
  const auto z_route = clustering::extract_latents(spanned, *enc, role);
  const auto labels = clustering::detail::argmax_rows(clustering::dec_soft_assign(r.model.project(z_route), r.model.centroids, r.model.alpha));
  r.centroids = clustering::aspect_centroids(labels, z_a, K);
  return r;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Coherence within each cluster and on size-matched groups drawn uniformly
/// across clusters; texts are subsampled to `cap` per group.
struct CoherenceResult {
  std::vector<std::optional<double>> within;
  std::optional<double> within_mean, across_mean;
};

inline CoherenceResult coherence_by_cluster(const std::vector<std::string>& texts, const std::vector<int>& labels, int K,
                                            const metrics::TGMScorer& scorer, int cap, bool mean_over_pairs, Rng& rng) {
  auto subsample = [&](std::vector<std::size_t> idx) {
    rng.shuffle(idx.begin(), idx.end());
    if (idx.size() > static_cast<std::size_t>(cap)) idx.resize(static_cast<std::size_t>(cap));
    std::vector<std::string> out;
    for (std::size_t i : idx) out.push_back(texts[i]);
    return out;
  };
  CoherenceResult r;
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(K));
  for (std::size_t i = 0; i < labels.size(); ++i) members[static_cast<std::size_t>(labels[i])].push_back(i);
  double sw = 0, sa = 0;
  int nw = 0, na = 0;
  std::vector<std::size_t> all = trainer::all_indices(texts.size());
  rng.shuffle(all.begin(), all.end());
  std::size_t cursor = 0;
  for (int k = 0; k < K; ++k) {
    const auto& mem = members[static_cast<std::size_t>(k)];
    r.within.push_back(metrics::coherence(subsample(mem), scorer, mean_over_pairs));
    if (r.within.back()) {
      sw += *r.within.back();
      ++nw;
    }
    std::vector<std::size_t> mixed(all.begin() + static_cast<long>(cursor), all.begin() + static_cast<long>(cursor + mem.size()));
    cursor += mem.size();
    if (auto c = metrics::coherence(subsample(mixed), scorer, mean_over_pairs)) {
      sa += *c;
      ++na;
    }
  }
  if (nw) r.within_mean = sw / nw;
  if (na) r.across_mean = sa / na;
  return r;
}

inline metrics::TGMScorer default_scorer(const Net& m, const corpus::Vocab& vocab) {
  return metrics::symmetrized(metrics::embedding_scorer(vocab, m.parameter("embed.token").value));
}

inline std::vector<int> gold_aspects(const std::vector<TokenizedExample>& xs, std::vector<std::size_t>* which) {
  std::vector<int> out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!xs[i].aspect_category) continue;
    out.push_back(*xs[i].aspect_category);
    if (which) which->push_back(i);
  }
  return out;
}

struct Evaluated {
  metrics::MetricsReport report;
  ClusterResult clusters;
  std::vector<model::Prediction> predictions;
};

/// Everything in MetricsReport. Supervised metrics use the ensemble; the
/// latent-space metrics use the first member.
inline Evaluated evaluate(const trainer::EnsembleModel& ens, const corpus::Vocab& vocab, const std::vector<AnnotatedPost>& test_posts,
                          const std::vector<TokenizedExample>& train, const std::vector<TokenizedExample>& test,
                          const config::RunConfig& cfg) {
  if (ens.members.empty()) throw std::invalid_argument("evaluate: empty ensemble");
  if (test.empty()) throw std::invalid_argument("evaluate: empty test set");
  Evaluated out;
  auto& rep = out.report;
  const Net& m = ens.members.front();
  rep.config = config::to_json(cfg);
  rep.counts = {{"test", test.size()}, {"train", train.size()}, {"members", ens.members.size()}};

  const auto sup = trainer::supervised_indices(test);
  if (!sup.empty()) {
    out.predictions = trainer::ensemble_predict(ens, test, sup);
    const auto ev = trainer::evaluate(out.predictions, test, sup);
    rep.stance_acc = ev.stance.accuracy;
    rep.stance_macro_f1 = ev.stance.macro_f1;
    rep.span_em = ev.span.em;
    rep.span_f1 = ev.span.f1;
    rep.counts["supervised_test"] = sup.size();
  }

  const auto& population = cfg.cluster.centroid_population == "test" ? test : train;
  out.clusters = cluster_posts(m, test, population, cfg);
  const auto& cm = out.clusters.model;
  std::vector<std::size_t> with_gold;
  const auto gold = gold_aspects(test, &with_gold);
  if (!gold.empty()) {
    std::vector<int> pred;
    for (std::size_t i : with_gold) pred.push_back(cm.labels[i]);
    rep.nmi = metrics::nmi(pred, gold);
    rep.cluster_acc = metrics::cluster_accuracy(pred, gold);
  }

  std::unordered_map<std::string, std::string> text_of;
  for (const auto& p : test_posts) text_of[p.post.id] = p.post.text;
  std::vector<std::string> texts;
  for (const auto& x : test) texts.push_back(text_of.count(x.id) ? text_of[x.id] : corpus::detokenize(x.ids, vocab));
  Rng crng = Rng(cfg.seed).split(41);
  const auto coh = coherence_by_cluster(texts, cm.labels, cm.K, default_scorer(m, vocab), cfg.eval.coherence_max_per_cluster,
                                        cfg.eval.coherence_mean_over_pairs, crng);
  rep.coherence = coh.within;
  rep.coherence_mean = coh.within_mean;
  rep.coherence_across_mean = coh.across_mean;

  if (!out.clusters.centroids.empty()) {
    const auto cents = clustering::centroid_matrix(out.clusters.centroids).cast<float>().eval();
    std::vector<const std::vector<int>*> views;
    for (std::size_t i = 0; i < test.size() && views.size() < static_cast<std::size_t>(cfg.eval.perplexity_posts); ++i) {
      if (test[i].n() >= 1) views.push_back(&test[i].ids);
    }
    Rng prng = Rng(cfg.seed).split(43);
    const auto pp = metrics::paired_perplexity(views, m, cents, prng);
    rep.conditional_ppl = pp.matched.perplexity;
    rep.random_latent_ppl = pp.random_perplexity;
    rep.matched_win_rate = pp.matched_win_rate;
    rep.counts["perplexity_posts"] = views.size();
  }

  std::vector<int> stances;
  std::vector<TokenizedExample> labeled;
  for (const auto& x : test) {
    if (!x.stance) continue;
    stances.push_back(static_cast<int>(*x.stance));
    labeled.push_back(x);
  }
  std::set<int> distinct(stances.begin(), stances.end());
  if (distinct.size() >= 2 && labeled.size() >= static_cast<std::size_t>(cfg.eval.probe.folds)) {
    const bool two = m.config().latent == model::LatentMode::disentangled;
    if (two) rep.probe_acc_zs = metrics::disentanglement_probe(clustering::extract_latents(labeled, m, latent::Role::z_s), stances, cfg.eval.probe);
    rep.probe_acc_zw = metrics::disentanglement_probe(clustering::extract_latents(labeled, m, latent::Role::z_w), stances, cfg.eval.probe);
  }
  return out;
}

}  // namespace vadet::pipeline
