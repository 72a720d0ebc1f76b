#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "vadet/corpus.hpp"

using namespace vadet;
using namespace vadet::corpus;

namespace {

AnnotatedPost post(std::string text, std::optional<CharSpan> span = std::nullopt, std::optional<Stance> st = std::nullopt) {
  AnnotatedPost p;
  p.post = {"x", std::move(text)};
  p.span_char = span;
  p.stance = st;
  return p;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("vadet_test_" + name)).string();
}

}  // namespace

TEST(Preprocess, RemovesMentionsAndUrls) { EXPECT_EQ(preprocess("@user got my jab http://t.co/x"), "got my jab"); }

TEST(Preprocess, EmptyStaysEmpty) { EXPECT_EQ(preprocess(""), ""); }

TEST(Preprocess, EmoticonTable) {
  PreprocessOptions opt;
  opt.emoticons = {{":)", "smiley"}};
  EXPECT_EQ(preprocess("vaccine :)", opt), "vaccine smiley");
}

TEST(Preprocess, StripsDisallowedAndNormalizesSpace) {
  EXPECT_EQ(preprocess("  shots!!  work\t\tfine?? "), "shots work fine");
  EXPECT_EQ(preprocess("#vaxxed don't"), "#vaxxed don't");
}

TEST(Preprocess, Idempotent) {
  PreprocessOptions opt;
  opt.emoticons = {{":)", "smiley"}, {":(", "sad face"}};
  for (const std::string t : {"@a b :) http://x.y c", "  x!!y  ", "www.site.com is :( bad", "plain text", "über café :)"}) {
    const auto once = preprocess(t, opt);
    EXPECT_EQ(preprocess(once, opt), once) << t;
  }
}

TEST(Preprocess, SpanFollowsText) {
  auto p = post("@bob side effects are real", CharSpan{5, 17});
  auto out = preprocess_post(p);
  ASSERT_TRUE(out);
  ASSERT_TRUE(out->span_char);
  const auto& s = *out->span_char;
  EXPECT_EQ(out->post.text.substr(static_cast<std::size_t>(s.start), static_cast<std::size_t>(s.end - s.start)), "side effects");
}

TEST(Vocab, BuildKeepsFrequentTokens) {
  std::vector<std::string> c{"a a b"};
  auto v = build_vocab(c, 6);
  EXPECT_EQ(v.size(), 6);
  EXPECT_NE(v.id("a"), Vocab::kUnk);
  EXPECT_NE(v.id("b"), Vocab::kUnk);
}

TEST(Vocab, TieBrokenLexicographically) {
  std::vector<std::string> c{"b a"};
  auto v = build_vocab(c, 5);
  EXPECT_EQ(v.size(), 5);
  EXPECT_EQ(v.id("a"), Vocab::kReserved);
  EXPECT_EQ(v.id("b"), Vocab::kUnk);
}

TEST(Vocab, Deterministic) {
  std::vector<std::string> c{"the shot the jab", "jab side effects", "effects of the shot"};
  EXPECT_EQ(build_vocab(c, 100), build_vocab(c, 100));
}

TEST(Vocab, ReservedDistinctAndDense) {
  Vocab v;
  std::set<int> ids{Vocab::kPad, Vocab::kUnk, Vocab::kCls, Vocab::kMask};
  EXPECT_EQ(ids.size(), 4u);
  EXPECT_EQ(*ids.rbegin(), Vocab::kReserved - 1);
}

TEST(Vocab, EmptyCorpusThrows) {
  std::vector<std::string> c;
  EXPECT_THROW(build_vocab(c, 10), std::invalid_argument);
}

TEST(Vocab, SaveLoadRoundTrip) {
  std::vector<std::string> c{"one two two three three three"};
  auto v = build_vocab(c, 10);
  const auto path = temp_path("vocab.txt");
  v.save(path);
  EXPECT_EQ(Vocab::load(path), v);
  std::filesystem::remove(path);
}

TEST(Tokenize, SpanAlignment) {
  std::vector<std::string> c{"side effects are real"};
  auto v = build_vocab(c, 20);
  auto ex = tokenize(post("side effects are real", CharSpan{0, 12}), v, 64);
  EXPECT_EQ(ex.ids[0], Vocab::kCls);
  ASSERT_TRUE(ex.span_tok);
  EXPECT_EQ(*ex.span_tok, (TokenSpan{1, 2}));
  EXPECT_EQ(ex.n(), 4);
}

TEST(Tokenize, PartialOverlapCoversToken) {
  std::vector<std::string> c{"side effects are real"};
  auto v = build_vocab(c, 20);
  auto ex = tokenize(post("side effects are real", CharSpan{7, 15}), v, 64);
  ASSERT_TRUE(ex.span_tok);
  EXPECT_EQ(*ex.span_tok, (TokenSpan{2, 3}));
}

TEST(Tokenize, NoAnnotation) {
  Vocab v;
  auto ex = tokenize(post("hello there"), v, 64);
  EXPECT_FALSE(ex.span_tok);
  EXPECT_FALSE(ex.stance);
  EXPECT_FALSE(ex.dropped);
  EXPECT_EQ(ex.ids[1], Vocab::kUnk);
}

TEST(Tokenize, TruncatedSpanDropped) {
  Vocab v;
  auto ex = tokenize(post("a b c d e", CharSpan{8, 9}), v, 3);
  EXPECT_TRUE(ex.dropped);
  std::vector<AnnotatedPost> ps{post("a b c d e", CharSpan{8, 9}), post("a b", CharSpan{0, 1})};
  TokenizeStats st;
  auto out = tokenize_all(ps, v, 3, &st);
  EXPECT_EQ(out.size(), 1u);
  EXPECT_EQ(st.dropped, 1u);
  EXPECT_EQ(st.kept, 1u);
}

TEST(Tokenize, DetokenizeRoundTrip) {
  std::vector<std::string> c{"the jab was fine and the shot hurt"};
  auto v = build_vocab(c, 50);
  const std::string text = "the shot was fine";
  auto ex = tokenize(post(text), v, 64);
  EXPECT_EQ(detokenize(ex.ids, v), text);
  EXPECT_EQ(tokenize(post(detokenize(ex.ids, v)), v, 64).ids, ex.ids);
}

TEST(Mask, ZeroProbabilitySelectsNothing) {
  std::vector<int> ids{Vocab::kCls, 5, 6, 7};
  Rng rng(1);
  auto m = mask_tokens(ids, {0.0, 0.8, 0.1}, 10, rng);
  EXPECT_EQ(m.num_targets(), 0);
  EXPECT_EQ(m.input_ids, ids);
}

TEST(Mask, FullProbabilityFractions) {
  std::vector<int> ids{Vocab::kCls};
  for (int i = 0; i < 1000; ++i) ids.push_back(4 + i % 50);
  Rng rng(7);
  auto m = mask_tokens(ids, {1.0, 0.8, 0.1}, 54, rng);
  EXPECT_EQ(m.target_ids[0], kIgnore);
  EXPECT_EQ(m.input_ids[0], Vocab::kCls);
  int selected = 0, masked = 0;
  for (std::size_t i = 1; i < ids.size(); ++i) {
    if (m.target_ids[i] == kIgnore) continue;
    ++selected;
    EXPECT_EQ(m.target_ids[i], ids[i]);
    if (m.input_ids[i] == Vocab::kMask) ++masked;
  }
  EXPECT_EQ(selected, 1000);
  EXPECT_NEAR(static_cast<double>(masked) / selected, 0.80, 0.04);
}

TEST(Mask, SameSeedSameBatch) {
  std::vector<int> ids{Vocab::kCls, 4, 5, 6, 7, 8, 9, 10, 11};
  Rng a(3), b(3);
  auto x = mask_tokens(ids, {}, 12, a);
  auto y = mask_tokens(ids, {}, 12, b);
  EXPECT_EQ(x.input_ids, y.input_ids);
  EXPECT_EQ(x.target_ids, y.target_ids);
}

TEST(Mask, NeverSelectsCls) {
  std::vector<int> ids{Vocab::kCls, 4};
  for (int s = 0; s < 200; ++s) {
    Rng rng(static_cast<std::uint64_t>(s));
    auto m = mask_tokens(ids, {0.9, 0.8, 0.1}, 5, rng);
    ASSERT_EQ(m.target_ids[0], kIgnore);
    ASSERT_EQ(m.input_ids[0], Vocab::kCls);
  }
}

TEST(Folds, TenItemsFiveFolds) {
  Rng rng(0);
  auto f = split_folds(10, 5, rng);
  ASSERT_EQ(f.size(), 5u);
  std::set<std::size_t> all;
  for (const auto& x : f) {
    EXPECT_EQ(x.size(), 2u);
    for (auto i : x) EXPECT_TRUE(all.insert(i).second);
  }
  EXPECT_EQ(all.size(), 10u);
  EXPECT_EQ(*all.rbegin(), 9u);
}

TEST(Folds, StratifiedWithinOne) {
  std::vector<std::optional<Stance>> labels;
  for (int i = 0; i < 53; ++i) labels.push_back(static_cast<Stance>(i % 7 < 4 ? 0 : i % 7 < 6 ? 2 : 1));
  Rng rng(5);
  const int k = 5;
  auto folds = split_folds(labels, k, rng);
  std::size_t lo = labels.size(), hi = 0;
  for (const auto& f : folds) {
    lo = std::min(lo, f.size());
    hi = std::max(hi, f.size());
  }
  EXPECT_LE(hi - lo, 1u);
  for (int s = 0; s < kNumStances; ++s) {
    const double global = static_cast<double>(std::count(labels.begin(), labels.end(), static_cast<Stance>(s)));
    for (const auto& f : folds) {
      const double expected = global * static_cast<double>(f.size()) / static_cast<double>(labels.size());
      double got = 0;
      for (auto i : f) got += labels[i] == static_cast<Stance>(s);
      EXPECT_LE(std::abs(got - expected), 1.0) << "stance " << s;
    }
  }
}

TEST(Folds, Errors) {
  Rng rng(0);
  EXPECT_THROW(split_folds(3, 5, rng), std::invalid_argument);
  EXPECT_THROW(split_folds(10, 1, rng), std::invalid_argument);
}

TEST(Jsonl, LoadsRecordsAndReportsLine) {
  const auto path = temp_path("posts.jsonl");
  {
    std::ofstream f(path);
    f << R"({"id":"1","text":"shots work"})" << '\n';
    f << R"({"id":"2","text":"side effects are real","stance":"anti","span":[0,12],"aspect_category":3})" << '\n';
  }
  auto posts = load_jsonl(path);
  ASSERT_EQ(posts.size(), 2u);
  EXPECT_FALSE(posts[0].stance);
  EXPECT_EQ(posts[1].stance, Stance::anti);
  EXPECT_EQ(posts[1].span_char, (CharSpan{0, 12}));
  EXPECT_EQ(posts[1].aspect_category, 3);
  {
    std::ofstream f(path);
    f << R"({"id":"1","text":"ok"})" << '\n';
    f << R"({"id":"2","text":"bad","stance":"maybe"})" << '\n';
  }
  try {
    load_jsonl(path);
    FAIL() << "expected error";
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos) << e.what();
  }
  std::filesystem::remove(path);
}
