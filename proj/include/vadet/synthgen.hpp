#pragma once

// Synthetic corpora with known aspect and stance factors. Each post holds one
// contiguous run of aspect-k tokens (the gold span); stance-s tokens and
// background tokens are scattered on both sides of it.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "vadet/corpus.hpp"
#include "vadet/rng.hpp"

namespace vadet::synth {

struct SynthConfig {
  int K_aspects = 5;
  int aspect_lexicon = 40;
  int stance_lexicon = 25;
  int background_vocab = 500;
  int min_len = 12;
  int max_len = 30;
  int min_span = 3;
  int max_span = 8;
  double stance_rate = 0.2;  // fraction of non-span positions holding stance tokens (at least one)
  std::vector<double> stance_probs{1.0 / 3, 1.0 / 3, 1.0 / 3};  // anti, neutral, pro
  int n_unlabeled = 20000;
  int n_annotated = 2000;
  std::uint64_t seed = 0;

  void validate() const {
    auto need = [](bool ok, const char* what) {
      if (!ok) throw std::invalid_argument(std::string("SynthConfig: ") + what);
    };
    need(K_aspects >= 1 && K_aspects <= corpus::kMaxAspectCategory, "K_aspects must be in [1, 24]");
    need(aspect_lexicon >= 1 && stance_lexicon >= 1 && background_vocab >= 1, "lexicon sizes must be >= 1");
    need(min_span >= 1 && min_span <= max_span, "span range must satisfy 1 <= min_span <= max_span");
    need(min_len <= max_len, "post length range must satisfy min_len <= max_len");
    need(max_span + 1 <= min_len, "span range must leave room for a stance token within the post length range");
    need(stance_rate >= 0 && stance_rate <= 1, "stance_rate must be in [0, 1]");
    need(stance_probs.size() == 3, "stance_probs must have 3 entries");
    double s = 0;
    for (double p : stance_probs) {
      need(p >= 0, "stance_probs must be non-negative");
      s += p;
    }
    need(s > 0, "stance_probs must not all be zero");
    need(n_unlabeled >= 0 && n_annotated >= 0, "post counts must be non-negative");
  }
};

inline std::string aspect_token(int k, int i) { return "asp" + std::to_string(k) + "w" + std::to_string(i); }
inline std::string stance_token(corpus::Stance s, int i) { return std::string(corpus::to_string(s)) + std::to_string(i); }
inline std::string background_token(int i) { return "bg" + std::to_string(i); }

/// One generated post with its factors (token-level span, 1-based inclusive).
struct SynthPost {
  corpus::AnnotatedPost post;
  int aspect = 0;  // 0-based; category = aspect + 1
  corpus::Stance stance = corpus::Stance::neutral;
  corpus::TokenSpan span_tok;
  std::vector<std::string> words;
};

struct SynthCorpus {
  std::vector<corpus::AnnotatedPost> unlabeled;
  std::vector<corpus::AnnotatedPost> annotated;
  std::vector<SynthPost> unlabeled_factors, annotated_factors;
};

inline SynthPost generate_post(const SynthConfig& cfg, Rng& rng, const std::string& id) {
  SynthPost sp;
  sp.aspect = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(cfg.K_aspects)));
  {
    const double total = cfg.stance_probs[0] + cfg.stance_probs[1] + cfg.stance_probs[2];
    double r = rng.uniform() * total;
    int s = 0;
    while (s < 2 && r >= cfg.stance_probs[static_cast<std::size_t>(s)]) r -= cfg.stance_probs[static_cast<std::size_t>(s++)];
    sp.stance = static_cast<corpus::Stance>(s);
  }
  const int len = static_cast<int>(rng.uniform_range(cfg.min_len, cfg.max_len));
  const int span_len = static_cast<int>(rng.uniform_range(cfg.min_span, cfg.max_span));
  const int rest = len - span_len;
  const int n_stance = std::max(1, static_cast<int>(std::lround(cfg.stance_rate * rest)));
  // Non-span filler: stance tokens mixed with background, then shuffled.
  std::vector<std::string> filler;
  for (int i = 0; i < rest; ++i) {
    filler.push_back(i < n_stance ? stance_token(sp.stance, static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(cfg.stance_lexicon))))
                                  : background_token(static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(cfg.background_vocab)))));
  }
  rng.shuffle(filler.begin(), filler.end());
  const int before = static_cast<int>(rng.uniform_range(0, rest));
  for (int i = 0; i < before; ++i) sp.words.push_back(filler[static_cast<std::size_t>(i)]);
  for (int i = 0; i < span_len; ++i) {
    sp.words.push_back(aspect_token(sp.aspect, static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(cfg.aspect_lexicon)))));
  }
  for (int i = before; i < rest; ++i) sp.words.push_back(filler[static_cast<std::size_t>(i)]);
  sp.span_tok = {before + 1, before + span_len};

  std::string text;
  int span_start = 0, span_end = 0;
  for (std::size_t i = 0; i < sp.words.size(); ++i) {
    if (i) text += ' ';
    if (static_cast<int>(i) == before) span_start = static_cast<int>(text.size());
    text += sp.words[i];
    if (static_cast<int>(i) == before + span_len - 1) span_end = static_cast<int>(text.size());
  }
  sp.post.post = {id, text};
  sp.post.stance = sp.stance;
  sp.post.span_char = corpus::CharSpan{span_start, span_end};  // ASCII: bytes == code points
  sp.post.aspect_category = sp.aspect + 1;
  return sp;
}

/// Unlabeled posts keep only id and text. Deterministic given cfg.seed.
inline SynthCorpus generate(const SynthConfig& cfg) {
  cfg.validate();
  SynthCorpus out;
  Rng root(cfg.seed);
  Rng ru = root.split(1), ra = root.split(2);
  for (int i = 0; i < cfg.n_unlabeled; ++i) {
    auto sp = generate_post(cfg, ru, "u" + std::to_string(i));
    corpus::AnnotatedPost p;
    p.post = sp.post.post;
    out.unlabeled.push_back(std::move(p));
    out.unlabeled_factors.push_back(std::move(sp));
  }
  for (int i = 0; i < cfg.n_annotated; ++i) {
    auto sp = generate_post(cfg, ra, "a" + std::to_string(i));
    out.annotated.push_back(sp.post);
    out.annotated_factors.push_back(std::move(sp));
  }
  return out;
}

inline nlohmann::json to_json(const SynthConfig& c) {
  return {{"K_aspects", c.K_aspects},         {"aspect_lexicon", c.aspect_lexicon}, {"stance_lexicon", c.stance_lexicon},
          {"background_vocab", c.background_vocab}, {"min_len", c.min_len},          {"max_len", c.max_len},
          {"min_span", c.min_span},           {"max_span", c.max_span},             {"stance_rate", c.stance_rate},
          {"stance_probs", c.stance_probs},   {"n_unlabeled", c.n_unlabeled},       {"n_annotated", c.n_annotated},
          {"seed", c.seed}};
}

inline SynthConfig synth_config_from_json(const nlohmann::json& j, SynthConfig c = {}) {
  if (!j.is_object()) throw std::invalid_argument("synth config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    const auto& v = it.value();
    if (k == "K_aspects") c.K_aspects = v.get<int>();
    else if (k == "aspect_lexicon") c.aspect_lexicon = v.get<int>();
    else if (k == "stance_lexicon") c.stance_lexicon = v.get<int>();
    else if (k == "background_vocab") c.background_vocab = v.get<int>();
    else if (k == "min_len") c.min_len = v.get<int>();
    else if (k == "max_len") c.max_len = v.get<int>();
    else if (k == "min_span") c.min_span = v.get<int>();
    else if (k == "max_span") c.max_span = v.get<int>();
    else if (k == "stance_rate") c.stance_rate = v.get<double>();
    else if (k == "stance_probs") c.stance_probs = v.get<std::vector<double>>();
    else if (k == "n_unlabeled") c.n_unlabeled = v.get<int>();
    else if (k == "n_annotated") c.n_annotated = v.get<int>();
    else if (k == "seed") c.seed = v.get<std::uint64_t>();
    else throw std::invalid_argument("unknown synth config key '" + k + "'");
  }
  c.validate();
  return c;
}

/// Generative factors: config plus the full lexicons.
inline nlohmann::json manifest(const SynthConfig& cfg) {
  nlohmann::json m;
  m["config"] = to_json(cfg);
  auto& asp = m["aspect_lexicons"] = nlohmann::json::array();
  for (int k = 0; k < cfg.K_aspects; ++k) {
    nlohmann::json words = nlohmann::json::array();
    for (int i = 0; i < cfg.aspect_lexicon; ++i) words.push_back(aspect_token(k, i));
    asp.push_back({{"category", k + 1}, {"tokens", words}});
  }
  auto& st = m["stance_lexicons"] = nlohmann::json::object();
  for (int s = 0; s < corpus::kNumStances; ++s) {
    nlohmann::json words = nlohmann::json::array();
    for (int i = 0; i < cfg.stance_lexicon; ++i) words.push_back(stance_token(static_cast<corpus::Stance>(s), i));
    st[std::string(corpus::to_string(static_cast<corpus::Stance>(s)))] = words;
  }
  m["background_vocab"] = cfg.background_vocab;
  return m;
}

/// Writes unlabeled.jsonl, annotated.jsonl and manifest.json into `dir`.
inline void write(const std::filesystem::path& dir, const SynthConfig& cfg, const SynthCorpus& c) {
  std::filesystem::create_directories(dir);
  corpus::write_jsonl((dir / "unlabeled.jsonl").string(), c.unlabeled);
  corpus::write_jsonl((dir / "annotated.jsonl").string(), c.annotated);
  std::ofstream out(dir / "manifest.json");
  if (!out) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
  out << manifest(cfg).dump(2) << "\n";
}

}  // namespace vadet::synth
