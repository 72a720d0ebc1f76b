#pragma once

// Post ingestion: text cleaning, vocabulary, tokenization with span alignment,
// masked-LM corruption, JSON-lines I/O and stratified fold splitting.

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "vadet/log.hpp"
#include "vadet/rng.hpp"

namespace vadet::corpus {

enum class Stance : int { anti = 0, neutral = 1, pro = 2 };
inline constexpr int kNumStances = 3;
inline constexpr int kMaxAspectCategory = 24;

inline std::string_view to_string(Stance s) {
  switch (s) {
    case Stance::anti: return "anti";
    case Stance::neutral: return "neutral";
    case Stance::pro: return "pro";
  }
  return "?";
}

inline std::optional<Stance> parse_stance(std::string_view s) {
  if (s == "anti") return Stance::anti;
  if (s == "neutral") return Stance::neutral;
  if (s == "pro") return Stance::pro;
  return std::nullopt;
}

struct CharSpan {
  int start = 0;
  int end = 0;  // exclusive
  bool operator==(const CharSpan&) const = default;
};

/// Inclusive token range [a, b]; token 0 is [CLS], so 1 <= a <= b <= n.
struct TokenSpan {
  int a = 1;
  int b = 1;
  bool operator==(const TokenSpan&) const = default;
};

struct RawPost {
  std::string id;
  std::string text;  // UTF-8
};

struct AnnotatedPost {
  RawPost post;
  std::optional<Stance> stance;
  std::optional<CharSpan> span_char;  // code-point offsets into text
  std::optional<int> aspect_category;
};

// ---------------------------------------------------------------------------
// UTF-8 helpers. Offsets in corpus files count code points; internally text is
// handled as bytes.
// ---------------------------------------------------------------------------

inline bool is_continuation(unsigned char c) { return (c & 0xC0) == 0x80; }

inline int codepoint_count(std::string_view s) {
  int n = 0;
  for (unsigned char c : s) n += is_continuation(c) ? 0 : 1;
  return n;
}

/// Byte offset of code point `cp` (cp == count maps to s.size()).
inline std::size_t byte_offset(std::string_view s, int cp) {
  int seen = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!is_continuation(static_cast<unsigned char>(s[i]))) {
      if (seen == cp) return i;
      ++seen;
    }
  }
  return s.size();
}

inline int codepoint_index(std::string_view s, std::size_t byte) { return codepoint_count(s.substr(0, byte)); }

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

struct PreprocessOptions {
  /// Emoticon/emoji -> phrase. Matched as substrings, longest key first.
  std::map<std::string, std::string> emoticons;
  /// Bytes kept besides ASCII letters, digits and whitespace.
  std::string extra_allowed = "#'_-";
};

/// Cleaned text plus, for each output byte, the input byte it came from.
struct PreprocessResult {
  std::string text;
  std::vector<std::size_t> source;
};

inline bool is_url_token(std::string_view tok) {
  auto starts = [&](std::string_view p) {
    if (tok.size() < p.size()) return false;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (std::tolower(static_cast<unsigned char>(tok[i])) != p[i]) return false;
    }
    return true;
  };
  return starts("http://") || starts("https://") || starts("www.");
}

inline PreprocessResult preprocess_tracked(std::string_view in, const PreprocessOptions& opt = {}) {
  // Pass 1: drop URL and @-mention tokens (maximal non-space runs).
  std::vector<bool> keep(in.size(), true);
  for (std::size_t i = 0; i < in.size();) {
    if (std::isspace(static_cast<unsigned char>(in[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < in.size() && !std::isspace(static_cast<unsigned char>(in[j]))) ++j;
    const std::string_view tok = in.substr(i, j - i);
    if (tok.front() == '@' || is_url_token(tok)) std::fill(keep.begin() + i, keep.begin() + j, false);
    i = j;
  }

  std::vector<std::pair<std::string_view, std::string_view>> table;
  for (const auto& [k, v] : opt.emoticons) {
    if (!k.empty()) table.emplace_back(k, v);
  }
  std::stable_sort(table.begin(), table.end(), [](auto& x, auto& y) { return x.first.size() > y.first.size(); });

  auto allowed = [&](unsigned char c) {
    return std::isalnum(c) || std::isspace(c) || opt.extra_allowed.find(static_cast<char>(c)) != std::string::npos;
  };

  // Pass 2: emoticon substitution and symbol stripping; stripped bytes become
  // spaces so that adjacent words do not fuse.
  std::string raw;
  std::vector<std::size_t> src;
  for (std::size_t i = 0; i < in.size();) {
    if (!keep[i]) {
      ++i;
      continue;
    }
    bool matched = false;
    for (const auto& [k, v] : table) {
      if (in.compare(i, k.size(), k) == 0 && std::all_of(keep.begin() + i, keep.begin() + i + k.size(), [](bool b) { return b; })) {
        raw.push_back(' ');
        src.push_back(i);
        for (char c : v) {
          raw.push_back(c);
          src.push_back(i);
        }
        raw.push_back(' ');
        src.push_back(i);
        i += k.size();
        matched = true;
        break;
      }
    }
    if (matched) continue;
    const auto c = static_cast<unsigned char>(in[i]);
    raw.push_back(allowed(c) ? static_cast<char>(c) : ' ');
    src.push_back(i);
    ++i;
  }

  // Pass 3: collapse whitespace, trim.
  PreprocessResult out;
  bool pending_space = false;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (std::isspace(static_cast<unsigned char>(raw[i]))) {
      pending_space = !out.text.empty();
      continue;
    }
    if (pending_space) {
      out.text.push_back(' ');
      out.source.push_back(src[i]);
      pending_space = false;
    }
    out.text.push_back(raw[i]);
    out.source.push_back(src[i]);
  }
  return out;
}

inline std::string preprocess(std::string_view text, const PreprocessOptions& opt = {}) {
  return preprocess_tracked(text, opt).text;
}

/// Cleans an annotated post, remapping its character span. Returns nullopt
/// when the text becomes empty or the span vanishes.
inline std::optional<AnnotatedPost> preprocess_post(const AnnotatedPost& p, const PreprocessOptions& opt = {}) {
  PreprocessResult r = preprocess_tracked(p.post.text, opt);
  if (r.text.empty()) return std::nullopt;
  AnnotatedPost out = p;
  out.post.text = r.text;
  if (p.span_char) {
    const std::size_t b0 = byte_offset(p.post.text, p.span_char->start);
    const std::size_t b1 = byte_offset(p.post.text, p.span_char->end);
    std::optional<std::size_t> first, last;
    for (std::size_t i = 0; i < r.source.size(); ++i) {
      if (r.source[i] >= b0 && r.source[i] < b1 && r.text[i] != ' ') {
        if (!first) first = i;
        last = i;
      }
    }
    if (!first) {
      log::warn("span of post " + p.post.id + " removed by preprocessing; post dropped");
      return std::nullopt;
    }
    out.span_char = CharSpan{codepoint_index(r.text, *first), codepoint_index(r.text, *last + 1)};
  }
  return out;
}

inline std::map<std::string, std::string> load_emoticon_table(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open emoticon table: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("emoticon table " + path + ": " + e.what());
  }
  if (!j.is_object()) throw std::runtime_error("emoticon table must be a JSON object: " + path);
  std::map<std::string, std::string> table;
  for (auto& [k, v] : j.items()) {
    if (!v.is_string()) throw std::runtime_error("emoticon table value for '" + k + "' is not a string");
    table[k] = v.get<std::string>();
  }
  return table;
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

inline std::string lowercase(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

/// Whitespace-split words with their byte offsets [begin, end).
struct Word {
  std::string_view text;
  std::size_t begin;
  std::size_t end;
};

inline std::vector<Word> split_words(std::string_view s) {
  std::vector<Word> words;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i >= s.size()) break;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    words.push_back({s.substr(i, j - i), i, j});
    i = j;
  }
  return words;
}

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kMask = 3;
  static constexpr int kReserved = 4;

  Vocab() : tokens_{"[PAD]", "[UNK]", "[CLS]", "[MASK]"} {
    for (int i = 0; i < kReserved; ++i) index_[tokens_[i]] = i;
  }

  /// Appends a token; returns its id (existing id if already present).
  int add(const std::string& tok) {
    auto it = index_.find(tok);
    if (it != index_.end()) return it->second;
    const int id = static_cast<int>(tokens_.size());
    tokens_.push_back(tok);
    index_[tok] = id;
    return id;
  }

  int id(std::string_view tok) const {
    auto it = index_.find(std::string(tok));
    return it == index_.end() ? kUnk : it->second;
  }

  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(tokens_.size()); }
  bool operator==(const Vocab& o) const { return tokens_ == o.tokens_; }

  /// Newline-delimited non-reserved tokens; line i has id kReserved + i.
  void save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write vocab file: " + path);
    for (std::size_t i = kReserved; i < tokens_.size(); ++i) f << tokens_[i] << '\n';
  }

  static Vocab load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open vocab file: " + path);
    Vocab v;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      if (line.empty()) throw std::runtime_error(path + ":" + std::to_string(lineno) + ": empty vocab line");
      if (v.index_.count(line)) throw std::runtime_error(path + ":" + std::to_string(lineno) + ": duplicate token " + line);
      v.add(line);
    }
    return v;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

/// Most frequent lowercased whitespace tokens; ties broken lexicographically.
template <class Range>
Vocab build_vocab(const Range& texts, int max_size) {
  if (max_size < Vocab::kReserved + 1) throw std::invalid_argument("build_vocab: max_size must be >= 5");
  std::unordered_map<std::string, long> freq;
  bool any = false;
  for (const auto& t : texts) {
    for (const Word& w : split_words(t)) {
      ++freq[lowercase(w.text)];
      any = true;
    }
  }
  if (!any) throw std::invalid_argument("build_vocab: empty corpus");
  std::vector<std::pair<std::string, long>> items(freq.begin(), freq.end());
  std::sort(items.begin(), items.end(), [](const auto& x, const auto& y) {
    return x.second != y.second ? x.second > y.second : x.first < y.first;
  });
  Vocab v;
  for (const auto& [tok, n] : items) {
    if (v.size() >= max_size) break;
    v.add(tok);
  }
  return v;
}

// ---------------------------------------------------------------------------
// Tokenization
// ---------------------------------------------------------------------------

struct TokenizedExample {
  std::string id;
  std::vector<int> ids;  // ids[0] == [CLS]
  std::optional<TokenSpan> span_tok;
  std::optional<Stance> stance;
  std::optional<int> aspect_category;
  bool dropped = false;

  int n() const { return static_cast<int>(ids.size()) - 1; }
};

/// [CLS] + word ids, truncated to max_len positions. The character span maps
/// to every token it overlaps; a span cut by truncation flags the example dropped.
inline TokenizedExample tokenize(const AnnotatedPost& post, const Vocab& vocab, int max_len) {
  if (max_len < 2) throw std::invalid_argument("tokenize: max_len must be >= 2");
  TokenizedExample ex;
  ex.id = post.post.id;
  ex.stance = post.stance;
  ex.aspect_category = post.aspect_category;
  const auto words = split_words(post.post.text);
  const std::size_t keep = std::min<std::size_t>(words.size(), static_cast<std::size_t>(max_len - 1));
  ex.ids.reserve(keep + 1);
  ex.ids.push_back(Vocab::kCls);
  for (std::size_t i = 0; i < keep; ++i) ex.ids.push_back(vocab.id(lowercase(words[i].text)));
  if (post.span_char) {
    const std::size_t b0 = byte_offset(post.post.text, post.span_char->start);
    const std::size_t b1 = byte_offset(post.post.text, post.span_char->end);
    int a = -1, b = -1;
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (words[i].end > b0 && words[i].begin < b1) {
        if (a < 0) a = static_cast<int>(i) + 1;
        b = static_cast<int>(i) + 1;
      }
    }
    if (a < 0 || b > ex.n()) {
      ex.dropped = true;
    } else {
      ex.span_tok = TokenSpan{a, b};
    }
  }
  return ex;
}

struct TokenizeStats {
  std::size_t kept = 0;
  std::size_t dropped = 0;
};

/// Tokenizes a corpus; dropped examples are logged and excluded.
inline std::vector<TokenizedExample> tokenize_all(const std::vector<AnnotatedPost>& posts, const Vocab& vocab,
                                                  int max_len, TokenizeStats* stats = nullptr) {
  std::vector<TokenizedExample> out;
  out.reserve(posts.size());
  TokenizeStats st;
  for (const auto& p : posts) {
    auto ex = tokenize(p, vocab, max_len);
    if (ex.dropped) {
      ++st.dropped;
      log::warn("post " + p.post.id + ": aspect span not representable within max_len; dropped");
      continue;
    }
    if (ex.n() == 0) {
      ++st.dropped;
      continue;
    }
    ++st.kept;
    out.push_back(std::move(ex));
  }
  if (stats) *stats = st;
  return out;
}

inline std::string detokenize(const std::vector<int>& ids, const Vocab& vocab) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == Vocab::kCls || ids[i] == Vocab::kPad) continue;
    if (!out.empty()) out.push_back(' ');
    out += vocab.token(ids[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Masking
// ---------------------------------------------------------------------------

inline constexpr int kIgnore = -1;

struct MaskConfig {
  double probability = 0.15;
  double mask_fraction = 0.8;    // selected -> [MASK]
  double random_fraction = 0.1;  // selected -> random token; remainder unchanged
};

/// One corrupted sequence: targets hold the original id where selected, kIgnore elsewhere.
struct MaskedSequence {
  std::vector<int> input_ids;
  std::vector<int> target_ids;

  int length() const { return static_cast<int>(input_ids.size()); }
  int num_targets() const {
    return static_cast<int>(std::count_if(target_ids.begin(), target_ids.end(), [](int t) { return t != kIgnore; }));
  }
};

using MaskedBatch = std::vector<MaskedSequence>;

/// BERT-style corruption; position 0 ([CLS]) is never selected.
inline MaskedSequence mask_tokens(const std::vector<int>& ids, const MaskConfig& cfg, int vocab_size, Rng& rng) {
  MaskedSequence m{ids, std::vector<int>(ids.size(), kIgnore)};
  const bool can_randomize = vocab_size > Vocab::kReserved;
  for (std::size_t i = 1; i < ids.size(); ++i) {
    if (rng.uniform() >= cfg.probability) continue;
    m.target_ids[i] = ids[i];
    const double r = rng.uniform();
    if (r < cfg.mask_fraction) {
      m.input_ids[i] = Vocab::kMask;
    } else if (r < cfg.mask_fraction + cfg.random_fraction && can_randomize) {
      m.input_ids[i] = Vocab::kReserved + static_cast<int>(rng.uniform_int(static_cast<std::size_t>(vocab_size - Vocab::kReserved)));
    }
  }
  return m;
}

inline MaskedSequence mask_tokens(const TokenizedExample& ex, const MaskConfig& cfg, int vocab_size, Rng& rng) {
  return mask_tokens(ex.ids, cfg, vocab_size, rng);
}

/// Uncorrupted sequence with no targets.
inline MaskedSequence unmasked(const std::vector<int>& ids) { return {ids, std::vector<int>(ids.size(), kIgnore)}; }

// ---------------------------------------------------------------------------
// JSON-lines corpus files
// ---------------------------------------------------------------------------

inline AnnotatedPost parse_record(const nlohmann::json& j, const std::string& where) {
  auto fail = [&](const std::string& msg) { throw std::runtime_error(where + ": " + msg); };
  if (!j.is_object()) fail("record is not a JSON object");
  if (!j.contains("id") || !j["id"].is_string() || j["id"].get<std::string>().empty()) fail("missing or empty string field 'id'");
  if (!j.contains("text") || !j["text"].is_string()) fail("missing string field 'text'");
  AnnotatedPost p;
  p.post.id = j["id"].get<std::string>();
  p.post.text = j["text"].get<std::string>();
  if (j.contains("stance") && !j["stance"].is_null()) {
    if (!j["stance"].is_string()) fail("'stance' must be a string");
    p.stance = parse_stance(j["stance"].get<std::string>());
    if (!p.stance) fail("'stance' must be one of anti, neutral, pro");
  }
  if (j.contains("span") && !j["span"].is_null()) {
    const auto& s = j["span"];
    if (!s.is_array() || s.size() != 2 || !s[0].is_number_integer() || !s[1].is_number_integer()) {
      fail("'span' must be [start_char, end_char]");
    }
    const int a = s[0].get<int>(), b = s[1].get<int>();
    if (!(0 <= a && a < b && b <= codepoint_count(p.post.text))) fail("'span' out of range for text");
    p.span_char = CharSpan{a, b};
  }
  if (j.contains("aspect_category") && !j["aspect_category"].is_null()) {
    if (!j["aspect_category"].is_number_integer()) fail("'aspect_category' must be an integer");
    const int c = j["aspect_category"].get<int>();
    if (c < 1 || c > kMaxAspectCategory) fail("'aspect_category' must be in 1..24");
    p.aspect_category = c;
  }
  return p;
}

inline nlohmann::json to_json(const AnnotatedPost& p) {
  nlohmann::json j;
  j["id"] = p.post.id;
  j["text"] = p.post.text;
  if (p.stance) j["stance"] = std::string(to_string(*p.stance));
  if (p.span_char) j["span"] = {p.span_char->start, p.span_char->end};
  if (p.aspect_category) j["aspect_category"] = *p.aspect_category;
  return j;
}

inline std::vector<AnnotatedPost> load_jsonl(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open corpus file: " + path);
  std::vector<AnnotatedPost> out;
  std::set<std::string> ids;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(where + ": malformed JSON: " + e.what());
    }
    AnnotatedPost p = parse_record(j, where);
    if (!ids.insert(p.post.id).second) throw std::runtime_error(where + ": duplicate id '" + p.post.id + "'");
    out.push_back(std::move(p));
  }
  return out;
}

inline void write_jsonl(const std::string& path, const std::vector<AnnotatedPost>& posts) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write corpus file: " + path);
  for (const auto& p : posts) f << to_json(p).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Folds
// ---------------------------------------------------------------------------

/// k disjoint index sets covering [0, labels.size()), sizes within 1 of each
/// other, stratified by label (items without a label form their own stratum).
inline std::vector<std::vector<std::size_t>> split_folds(const std::vector<std::optional<Stance>>& labels, int k, Rng& rng) {
  if (k < 2) throw std::invalid_argument("split_folds: k must be >= 2");
  if (static_cast<std::size_t>(k) > labels.size()) throw std::invalid_argument("split_folds: more folds than items");
  std::vector<std::vector<std::size_t>> strata(kNumStances + 1);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    strata[labels[i] ? static_cast<std::size_t>(*labels[i]) : kNumStances].push_back(i);
  }
  std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
  std::size_t next = 0;
  for (auto& s : strata) {
    rng.shuffle(s.begin(), s.end());
    for (std::size_t idx : s) {
      folds[next].push_back(idx);
      next = (next + 1) % folds.size();
    }
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

inline std::vector<std::vector<std::size_t>> split_folds(std::size_t n, int k, Rng& rng) {
  return split_folds(std::vector<std::optional<Stance>>(n), k, rng);
}

}  // namespace vadet::corpus
