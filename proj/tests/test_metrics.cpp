#include <gtest/gtest.h>

#include "micro.hpp"
#include "oracles.hpp"
#include "vadet/metrics.hpp"

using namespace vadet;
using namespace vadet::metrics;
using corpus::TokenSpan;

namespace {

std::vector<int> random_labels(std::size_t n, int k, Rng& r) {
  std::vector<int> out(n);
  for (auto& l : out) l = static_cast<int>(r.uniform_int(static_cast<std::size_t>(k)));
  return out;
}

}  // namespace

TEST(Stance, Examples) {
  auto s = stance_metrics({2, 0, 0, 1}, {2, 2, 0, 1});
  EXPECT_DOUBLE_EQ(s.accuracy, 0.75);
  EXPECT_NEAR(s.f1[2], 2.0 / 3, 1e-12);
  EXPECT_NEAR(s.f1[0], 2.0 / 3, 1e-12);
  EXPECT_DOUBLE_EQ(s.f1[1], 1.0);
  EXPECT_NEAR(s.macro_f1, 0.7778, 5e-5);
  auto p = stance_metrics({0, 1, 2}, {0, 1, 2});
  EXPECT_DOUBLE_EQ(p.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(p.macro_f1, 1.0);
  auto one = stance_metrics({1, 1, 1, 1, 1, 1}, {0, 1, 2, 0, 1, 2});
  EXPECT_DOUBLE_EQ(one.accuracy, 1.0 / 3);
  EXPECT_THROW(stance_metrics({}, {}), std::invalid_argument);
  EXPECT_THROW(stance_metrics({3}, {0}), std::invalid_argument);
}

TEST(Stance, AbsentClassCountsAsZero) {
  auto s = stance_metrics({0, 0, 1}, {0, 0, 1});
  EXPECT_DOUBLE_EQ(s.accuracy, 1.0);
  EXPECT_NEAR(s.macro_f1, 2.0 / 3, 1e-12);
}

TEST(Span, Examples) {
  auto e = span_metrics(TokenSpan{2, 5}, TokenSpan{2, 5});
  EXPECT_EQ(e.em, 1.0);
  EXPECT_EQ(e.f1, 1.0);
  auto h = span_metrics(TokenSpan{1, 4}, TokenSpan{3, 6});
  EXPECT_EQ(h.em, 0.0);
  EXPECT_DOUBLE_EQ(h.f1, 0.5);
  auto d = span_metrics(TokenSpan{1, 2}, TokenSpan{3, 6});
  EXPECT_EQ(d.em, 0.0);
  EXPECT_EQ(d.f1, 0.0);
  EXPECT_THROW(span_metrics(TokenSpan{3, 2}, TokenSpan{1, 1}), std::invalid_argument);
  auto m = span_metrics(std::vector<TokenSpan>{{2, 5}, {1, 4}}, std::vector<TokenSpan>{{2, 5}, {3, 6}});
  EXPECT_DOUBLE_EQ(m.em, 0.5);
  EXPECT_DOUBLE_EQ(m.f1, 0.75);
}

TEST(Span, F1SymmetricAndMatchesSetOracle) {
  Rng r(1);
  for (int t = 0; t < 200; ++t) {
    const int a = 1 + static_cast<int>(r.uniform_int(10)), b = a + static_cast<int>(r.uniform_int(6));
    const int c = 1 + static_cast<int>(r.uniform_int(10)), d = c + static_cast<int>(r.uniform_int(6));
    const double f = span_metrics(TokenSpan{a, b}, TokenSpan{c, d}).f1;
    EXPECT_DOUBLE_EQ(f, span_metrics(TokenSpan{c, d}, TokenSpan{a, b}).f1);
    std::set<int> p, g;
    for (int i = a; i <= b; ++i) p.insert(i);
    for (int i = c; i <= d; ++i) g.insert(i);
    int common = 0;
    for (int i : p) common += static_cast<int>(g.count(i));
    const double want = common == 0 ? 0.0 : 2.0 * common / static_cast<double>(p.size() + g.size());
    EXPECT_NEAR(f, want, 1e-12);
  }
}

TEST(Nmi, Examples) {
  const std::vector<int> gold{0, 0, 1, 1, 2, 2};
  EXPECT_NEAR(nmi(gold, gold), 1.0, 1e-12);
  EXPECT_NEAR(nmi({5, 5, 3, 3, 9, 9}, gold), 1.0, 1e-12);
  EXPECT_EQ(nmi({0, 0, 0, 0}, {0, 0, 1, 1}), 0.0);
  EXPECT_THROW(nmi({}, {}), std::invalid_argument);
}

TEST(Nmi, MatchesOracleAndIgnoresRelabeling) {
  Rng r(2);
  for (int t = 0; t < 50; ++t) {
    auto a = random_labels(60, 2 + t % 4, r), b = random_labels(60, 3, r);
    for (std::size_t i = 0; i < 30; ++i) b[i] = a[i] % 3;
    const double v = nmi(a, b);
    EXPECT_NEAR(v, oracle::nmi(a, b), 1e-12);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    auto relabeled = a;
    for (auto& l : relabeled) l = 10 - 3 * l;
    EXPECT_NEAR(nmi(relabeled, b), v, 1e-12);
  }
}

TEST(ClusterAccuracy, Examples) {
  // Confusion [[5,0],[2,3]], rows pred and columns gold.
  std::vector<int> pred, gold;
  for (int i = 0; i < 5; ++i) pred.push_back(0), gold.push_back(0);
  for (int i = 0; i < 2; ++i) pred.push_back(1), gold.push_back(0);
  for (int i = 0; i < 3; ++i) pred.push_back(1), gold.push_back(1);
  EXPECT_DOUBLE_EQ(oracle::brute_force_accuracy(pred, gold), 0.8);
  EXPECT_DOUBLE_EQ(cluster_accuracy(pred, gold), 0.8);
  EXPECT_DOUBLE_EQ(cluster_accuracy(gold, gold), 1.0);
  EXPECT_DOUBLE_EQ(cluster_accuracy(std::vector<int>(10, 0), gold), 0.7);
}

TEST(ClusterAccuracy, MatchesBruteForce) {
  Rng r(3);
  for (int t = 0; t < 60; ++t) {
    const int kp = 1 + t % 5, kg = 1 + (t / 5) % 5;
    auto a = random_labels(40, kp, r), b = random_labels(40, kg, r);
    for (std::size_t i = 0; i < 15; ++i) b[i] = a[i] % kg;
    EXPECT_NEAR(cluster_accuracy(a, b), oracle::brute_force_accuracy(a, b), 1e-12) << kp << "x" << kg;
    auto relabeled = a;
    for (auto& l : relabeled) l = (l + 2) % kp;
    EXPECT_NEAR(cluster_accuracy(relabeled, b), cluster_accuracy(a, b), 1e-12);
  }
}

TEST(Coherence, PaperNormalization) {
  auto constant = [](double s) { return TGMScorer([s](const std::string&, const std::string&) { return s; }); };
  EXPECT_DOUBLE_EQ(*coherence({"a", "b"}, constant(0.8)), 0.2);
  for (int n = 2; n <= 7; ++n) {
    std::vector<std::string> texts(static_cast<std::size_t>(n), "x");
    EXPECT_NEAR(*coherence(texts, constant(0.6)), 0.6 * (n - 1) / (2.0 * n), 1e-12);
    EXPECT_NEAR(*coherence(texts, constant(0.6), true), 0.6, 1e-12);
    EXPECT_EQ(*coherence(texts, constant(0.0)), 0.0);
  }
  EXPECT_FALSE(coherence({"only"}, constant(1.0)));
}

TEST(Coherence, SymmetrizedScorerIsOrderInvariant) {
  TGMScorer lopsided = [](const std::string& a, const std::string& b) { return a.size() < b.size() ? 0.9 : 0.1 * static_cast<double>(b.size() % 3); };
  auto sym = symmetrized(lopsided);
  std::vector<std::string> texts{"a", "bbb", "cc", "dddd", "eeeee"};
  const double base = *coherence(texts, sym);
  std::sort(texts.begin(), texts.end());
  do {
    EXPECT_NEAR(*coherence(texts, sym), base, 1e-12);
  } while (std::next_permutation(texts.begin(), texts.end()));
}

TEST(Coherence, EmbeddingScorerBoundedAndSymmetric) {
  auto vocab = corpus::build_vocab(std::vector<std::string>{"red apple green pear", "blue sky"}, 64);
  Rng r(4);
  Matrix<float> emb(vocab.size(), 5);
  for (Eigen::Index i = 0; i < emb.size(); ++i) emb.data()[i] = static_cast<float>(r.normal());
  auto s = embedding_scorer(vocab, emb);
  EXPECT_NEAR(s("red apple", "red apple"), 1.0, 1e-6);
  const double v = s("red apple", "blue sky");
  EXPECT_GE(v, 0.0);
  EXPECT_LE(v, 1.0);
  EXPECT_DOUBLE_EQ(v, s("blue sky", "red apple"));
}

TEST(Perplexity, UniformModelGivesVocabSize) {
  model::Model<double> m(micro::config(), 1);
  m.parameter("head.token.w").value.setZero();
  m.parameter("head.token.b").value.setZero();
  std::vector<int> ids{corpus::Vocab::kCls, 5, 9, 13, 6};
  Vector<double> zw = Vector<double>::Zero(4), zs = Vector<double>::Zero(3);
  auto t = pseudo_log_likelihood(m, ids, zw, &zs);
  EXPECT_EQ(t.tokens, 4);
  EXPECT_NEAR(t.perplexity(), 20.0, 1e-9);
  EXPECT_NEAR(perplexity_from({t, t}), 20.0, 1e-9);
  EXPECT_THROW(perplexity_from({}), std::invalid_argument);
}

TEST(Perplexity, CertainModelGivesOne) {
  model::Model<double> m(micro::config(), 1);
  m.parameter("head.token.w").value.setZero();
  m.parameter("head.token.b").value.setZero();
  m.parameter("head.token.b").value(0, 7) = 100.0;
  std::vector<int> ids{corpus::Vocab::kCls, 7, 7, 7};
  Vector<double> zw = Vector<double>::Zero(4), zs = Vector<double>::Zero(3);
  EXPECT_NEAR(pseudo_log_likelihood(m, ids, zw, &zs).perplexity(), 1.0, 1e-9);
}

TEST(Perplexity, ConditionalAndPairedRouting) {
  model::Model<double> m(micro::config(), 2);
  std::vector<std::vector<int>> seqs{{corpus::Vocab::kCls, 5, 9}, {corpus::Vocab::kCls, 6, 7, 8}};
  std::vector<const std::vector<int>*> views{&seqs[0], &seqs[1]};
  Matrix<double> cents(2, 4);
  cents << 0, 0, 0, 0, 50, 50, 50, 50;
  Rng r(5);
  auto c = conditional_perplexity(views, m, cents, r);
  EXPECT_EQ(c.routed, (std::vector<int>{0, 0}));
  EXPECT_GE(c.perplexity, 1.0);
  EXPECT_NEAR(c.perplexity, perplexity_from(c.per_post), 1e-12);
  Rng r1(6), r2(6);
  auto p1 = paired_perplexity(views, m, cents, r1), p2 = paired_perplexity(views, m, cents, r2);
  EXPECT_EQ(p1.matched.perplexity, p2.matched.perplexity);
  EXPECT_EQ(p1.random_perplexity, p2.random_perplexity);
  EXPECT_GE(p1.matched_win_rate, 0.0);
  EXPECT_LE(p1.matched_win_rate, 1.0);
  EXPECT_THROW(conditional_perplexity({}, m, cents, r), std::invalid_argument);
}

TEST(Probe, SeparableShuffledAndDeterministic) {
  Rng r(7);
  const int n = 1500;
  Matrix<double> x(n, 4);
  std::vector<int> y(n);
  for (int i = 0; i < n; ++i) {
    y[static_cast<std::size_t>(i)] = i % 3;
    for (int j = 0; j < 4; ++j) x(i, j) = 0.3 * r.normal();
    x(i, y[static_cast<std::size_t>(i)]) += 3.0;
  }
  EXPECT_GE(disentanglement_probe(x, y), 0.99);
  auto shuffled = y;
  r.shuffle(shuffled.begin(), shuffled.end());
  const double acc = disentanglement_probe(x, shuffled);
  EXPECT_NEAR(acc, 1.0 / 3, 0.05);
  EXPECT_EQ(acc, disentanglement_probe(x, shuffled));
  EXPECT_THROW(disentanglement_probe(x, std::vector<int>(n, 1)), std::invalid_argument);
}

TEST(Report, AbsentValuesAreNull) {
  MetricsReport rep;
  rep.stance_acc = 0.5;
  rep.coherence = {0.1, std::nullopt};
  auto j = rep.to_json();
  EXPECT_EQ(j["stance_acc"], 0.5);
  EXPECT_TRUE(j["nmi"].is_null());
  EXPECT_TRUE(j["coherence"][1].is_null());
}
