#pragma once

// Split masked language model with a variational topic layer.
//
// Layout of one forward pass over a packed batch (all sequences' rows stacked):
//
//   ids -> embeddings -> lower stack (psi) --+--> posterior heads -> z_s, z_w
//                                            |
//   [memory slots from z] ++ psi ------------+--> upper stack (theta) -> w^H
//                                                   |-> token logits
//                                                   |-> stance logits ([CLS])
//                                                   `-> span start/end scores
//
// Memory slots are prepended per sequence and dropped again after theta.

#include <array>
#include <deque>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "vadet/autograd.hpp"
#include "vadet/corpus.hpp"
#include "vadet/gaussian.hpp"
#include "vadet/rng.hpp"

namespace vadet::model {

/// How latents reach theta.
enum class MemoryMode {
  prepended_slot,  // one extra token per latent, updated by every theta layer
  per_layer,       // the projected latent is re-inserted unchanged before every theta layer
};

/// How the [CLS] output is tied to z_s in the two-latent model.
enum class ClsPath {
  mask_zw,  // [CLS] query cannot attend to the z_w slot
  zs_only,  // [CLS] row enters theta as the z_s memory vector and attends only to the z_s slot
};

/// Single latent (pretraining, -D ablation) or the (z_s, z_w) pair.
enum class LatentMode { single, disentangled };

struct ModelConfig {
  int vocab_size = 4096;
  int hidden = 64;
  int heads = 4;
  int layers_lower = 2;
  int layers_upper = 2;
  int ffn = 128;
  int d_zs = 8;
  int d_zw = 32;  // also the dimension of z_a
  int max_len = 64;
  double dropout = 0.1;
  double init_std = 0.02;
  MemoryMode memory = MemoryMode::prepended_slot;
  ClsPath cls_path = ClsPath::mask_zw;
  LatentMode latent = LatentMode::disentangled;

  void validate() const {
    auto need = [](bool ok, const char* what) {
      if (!ok) throw std::invalid_argument(std::string("ModelConfig: ") + what);
    };
    need(vocab_size > corpus::Vocab::kReserved, "vocab_size must exceed the reserved ids");
    need(hidden >= 1 && heads >= 1 && hidden % heads == 0, "hidden must be divisible by heads");
    need(layers_lower >= 1 && layers_upper >= 1, "layer counts must be >= 1");
    need(ffn >= 1 && d_zs >= 1 && d_zw >= 1, "dimensions must be >= 1");
    need(max_len >= 2, "max_len must be >= 2");
    need(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
  }
};

/// Stance distribution and span start/end distributions over positions 1..n
/// (index i of start_probs is token position i + 1).
struct Prediction {
  std::array<double, 3> stance_probs{};
  std::vector<double> start_probs;
  std::vector<double> end_probs;
  int stance = 0;
  corpus::TokenSpan span;
};

/// argmax over a <= b <= a + cap of start[a] * end[b]; earliest pair wins ties.
inline corpus::TokenSpan decode_span(const std::vector<double>& start, const std::vector<double>& end, int cap = 30) {
  if (start.empty() || start.size() != end.size()) throw std::invalid_argument("decode_span: bad distributions");
  const int n = static_cast<int>(start.size());
  double best = -1.0;
  corpus::TokenSpan out{1, 1};
  for (int a = 0; a < n; ++a) {
    for (int b = a; b < n && b - a <= cap; ++b) {
      const double s = start[a] * end[b];
      if (s > best) {
        best = s;
        out = {a + 1, b + 1};
      }
    }
  }
  return out;
}

/// Lowest index among maxima.
template <class Range>
int argmax(const Range& r) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(std::size(r)); ++i) {
    if (r[i] > r[best]) best = i;
  }
  return best;
}

/// Sequences stacked row-wise; every sequence starts with [CLS].
struct Packed {
  std::vector<int> ids;
  std::vector<int> positions;
  std::vector<ag::Segment> segments;

  std::size_t batch() const { return segments.size(); }
  int cls_row(std::size_t s) const { return static_cast<int>(segments[s].offset); }
};

inline Packed pack(const std::vector<const std::vector<int>*>& seqs) {
  Packed p;
  for (const auto* s : seqs) {
    if (s->empty() || (*s)[0] != corpus::Vocab::kCls) throw std::invalid_argument("pack: sequence must start with [CLS]");
    p.segments.push_back({static_cast<Eigen::Index>(p.ids.size()), static_cast<Eigen::Index>(s->size())});
    for (std::size_t i = 0; i < s->size(); ++i) {
      p.ids.push_back((*s)[i]);
      p.positions.push_back(static_cast<int>(i));
    }
  }
  return p;
}

inline Packed pack(const std::vector<std::vector<int>>& seqs) {
  std::vector<const std::vector<int>*> ptrs;
  for (const auto& s : seqs) ptrs.push_back(&s);
  return pack(ptrs);
}

struct ForwardOptions {
  bool train = false;   // enables dropout
  Rng* rng = nullptr;   // required when train && dropout > 0
};

/// A latent entering theta as a memory slot.
template <class T>
struct MemorySlot {
  latent::Role role;
  ag::Var<T> z;  // batch x dim
};

/// psi with memory rows prepended to every sequence, plus theta's attention layout.
template <class T>
struct Augmented {
  ag::Var<T> states;               // rows: per sequence, slots then tokens
  ag::Var<T> memory;               // row b * num_slots + s
  ag::AttentionLayout layout;
  std::vector<int> token_rows;     // augmented row of each packed row
  std::vector<int> memory_rows;    // augmented row of each memory row
  int num_slots = 0;
};

/// Start/end scores for positions 1..n of every sequence.
template <class T>
struct SpanScores {
  ag::Var<T> start;  // rows = total tokens excluding [CLS], 1 column
  ag::Var<T> end;
  std::vector<ag::Segment> segments;
};

template <class T>
class Model {
 public:
  explicit Model(ModelConfig cfg, std::uint64_t seed = 0) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(seed);
    build(rng);
  }

  /// Empty parameter values with the right names and shapes (checkpoint loading).
  static Model uninitialized(ModelConfig cfg) {
    Model m(std::move(cfg), 0);
    for (auto& p : m.params_) p.value.setZero();
    return m;
  }

  const ModelConfig& config() const { return cfg_; }
  ModelConfig& mutable_config() { return cfg_; }

  std::deque<Parameter<T>>& parameters() { return params_; }
  const std::deque<Parameter<T>>& parameters() const { return params_; }

  Parameter<T>& parameter(std::string_view name) {
    for (auto& p : params_) {
      if (p.name == name) return p;
    }
    throw std::out_of_range("no parameter named " + std::string(name));
  }
  const Parameter<T>& parameter(std::string_view name) const { return const_cast<Model*>(this)->parameter(name); }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  std::size_t num_parameters() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

  /// Converts to another scalar type (e.g. double for gradient checks).
  template <class U>
  Model<U> cast() const {
    Model<U> m = Model<U>::uninitialized(cfg_);
    auto it = m.parameters().begin();
    for (const auto& p : params_) (it++)->value = p.value.template cast<U>();
    return m;
  }

  // -------------------------------------------------------------------------
  // Forward pieces
  // -------------------------------------------------------------------------

  /// psi states, (total rows) x hidden.
  ag::Var<T> lower_forward(ag::Tape<T>& tape, const Packed& batch, const ForwardOptions& opt) const {
    for (const auto& s : batch.segments) {
      if (s.length > cfg_.max_len) throw std::length_error("sequence longer than max_len");
    }
    auto x = ag::add(ag::take_rows(bind(tape, emb_token_), batch.ids), ag::take_rows(bind(tape, emb_position_), batch.positions));
    x = drop(x, opt);
    ag::AttentionLayout layout{batch.segments, {}};
    for (const auto& layer : lower_) x = block(tape, layer, x, layout, opt);
    return ag::layer_norm(x, bind(tape, lower_norm_.gamma), bind(tape, lower_norm_.beta));
  }

  /// q(z | psi): z_s reads the [CLS] state; z_w and z_a mean-pool positions 1..n.
  latent::GaussianVars<T> posterior(ag::Tape<T>& tape, ag::Var<T> psi, const Packed& batch, latent::Role role) const {
    const HeadIdx& h = role == latent::Role::z_s ? head_zs_ : head_zw_;
    ag::Var<T> pooled;
    if (role == latent::Role::z_s) {
      std::vector<int> rows;
      for (std::size_t s = 0; s < batch.batch(); ++s) rows.push_back(batch.cls_row(s));
      pooled = ag::take_rows(psi, rows);
    } else {
      std::vector<ag::Segment> segs;
      for (const auto& s : batch.segments) {
        if (s.length < 2) throw std::invalid_argument("posterior: sequence has no tokens after [CLS]");
        segs.push_back({s.offset + 1, s.length - 1});
      }
      pooled = ag::segment_mean(psi, std::move(segs));
    }
    return latent::encode(pooled, bind(tape, h.w_mu), bind(tape, h.b_mu), bind(tape, h.w_sigma), bind(tape, h.b_sigma));
  }

  /// Projects each latent to hidden size and prepends it as a memory row.
  Augmented<T> inject_latent(ag::Tape<T>& tape, ag::Var<T> psi, const Packed& batch,
                             const std::vector<MemorySlot<T>>& slots) const {
    if (slots.empty()) throw std::invalid_argument("inject_latent: no latents");
    const auto nb = static_cast<Eigen::Index>(batch.batch());
    std::vector<ag::Var<T>> projected;
    int zs_slot = -1, zw_slot = -1;
    for (std::size_t s = 0; s < slots.size(); ++s) {
      const bool is_s = slots[s].role == latent::Role::z_s;
      const int want = is_s ? cfg_.d_zs : cfg_.d_zw;
      if (slots[s].z.cols() != want || slots[s].z.rows() != nb) throw std::invalid_argument("inject_latent: latent dimension mismatch");
      const MemIdx& m = is_s ? mem_zs_ : mem_zw_;
      projected.push_back(ag::linear(slots[s].z, bind(tape, m.w), bind(tape, m.b)));
      (is_s ? zs_slot : zw_slot) = static_cast<int>(s);
    }
    const int S = static_cast<int>(slots.size());
    std::vector<ag::RowRef> mem_map;
    for (Eigen::Index b = 0; b < nb; ++b) {
      for (int s = 0; s < S; ++s) mem_map.push_back({s, b});
    }
    Augmented<T> aug;
    aug.num_slots = S;
    aug.memory = ag::gather_rows(projected, std::move(mem_map));

    const bool isolate_cls = cfg_.cls_path == ClsPath::zs_only && zs_slot >= 0;
    std::vector<ag::RowRef> map;
    aug.token_rows.resize(batch.ids.size());
    for (std::size_t b = 0; b < batch.batch(); ++b) {
      const auto [off, len] = batch.segments[b];
      const auto aug_off = static_cast<Eigen::Index>(map.size());
      for (int s = 0; s < S; ++s) {
        aug.memory_rows.push_back(static_cast<int>(map.size()));
        map.push_back({0, static_cast<Eigen::Index>(b) * S + s});
      }
      for (Eigen::Index i = 0; i < len; ++i) {
        aug.token_rows[static_cast<std::size_t>(off + i)] = static_cast<int>(map.size());
        if (i == 0 && isolate_cls) {
          map.push_back({0, static_cast<Eigen::Index>(b) * S + zs_slot});
        } else {
          map.push_back({1, off + i});
        }
      }
      aug.layout.segments.push_back({aug_off, len + S});
      std::vector<std::pair<int, int>> blocked;
      if (zs_slot >= 0 && zw_slot >= 0) {
        if (isolate_cls) {
          // [CLS] and the z_s slot only see each other, so w^H_cls is a function of z_s alone.
          for (int k = 0; k < len + S; ++k) {
            if (k != zs_slot && k != S) {
              blocked.emplace_back(S, k);
              blocked.emplace_back(zs_slot, k);
            }
          }
        } else {
          blocked.emplace_back(S, zw_slot);
        }
      }
      aug.layout.blocked.push_back(std::move(blocked));
    }
    aug.states = ag::gather_rows<T>({aug.memory, psi}, std::move(map));
    return aug;
  }

  /// w^H states aligned with the packed rows (memory rows dropped).
  ag::Var<T> upper_forward(ag::Tape<T>& tape, const Augmented<T>& aug, const ForwardOptions& opt) const {
    ag::Var<T> x = aug.states;
    for (std::size_t l = 0; l < upper_.size(); ++l) {
      if (cfg_.memory == MemoryMode::per_layer && l > 0) x = refresh_memory(aug, x);
      x = block(tape, upper_[l], x, aug.layout, opt);
    }
    auto recon = ag::take_rows(x, aug.token_rows);
    return ag::layer_norm(recon, bind(tape, upper_norm_.gamma), bind(tape, upper_norm_.beta));
  }

  /// Vocabulary logits for selected rows of w^H.
  ag::Var<T> token_logits(ag::Tape<T>& tape, ag::Var<T> recon, const std::vector<int>& rows) const {
    return ag::linear(ag::take_rows(recon, rows), bind(tape, out_token_.w), bind(tape, out_token_.b));
  }

  /// batch x 3 logits over {anti, neutral, pro} from w^H at [CLS].
  ag::Var<T> stance_logits(ag::Tape<T>& tape, ag::Var<T> recon, const Packed& batch) const {
    std::vector<int> rows;
    for (std::size_t s = 0; s < batch.batch(); ++s) rows.push_back(batch.cls_row(s));
    return ag::linear(ag::take_rows(recon, rows), bind(tape, out_stance_.w), bind(tape, out_stance_.b));
  }

  /// Shared tanh MLP over w^H_{1:n}, then scalar start and end heads.
  SpanScores<T> span_scores(ag::Tape<T>& tape, ag::Var<T> recon, const Packed& batch) const {
    std::vector<int> rows;
    SpanScores<T> out;
    for (const auto& [off, len] : batch.segments) {
      if (len < 2) throw std::invalid_argument("span_scores: sequence has no tokens after [CLS]");
      out.segments.push_back({static_cast<Eigen::Index>(rows.size()), len - 1});
      for (Eigen::Index i = 1; i < len; ++i) rows.push_back(static_cast<int>(off + i));
    }
    auto h = ag::tanh(ag::linear(ag::take_rows(recon, rows), bind(tape, span_hidden_.w), bind(tape, span_hidden_.b)));
    auto both = ag::linear(h, bind(tape, span_out_.w), bind(tape, span_out_.b));
    out.start = ag::column(both, 0);
    out.end = ag::column(both, 1);
    return out;
  }

  // -------------------------------------------------------------------------
  // Evaluation helpers (no masking, z = mu, dropout off)
  // -------------------------------------------------------------------------

  struct EvalPass {
    Packed batch;
    latent::GaussianVars<T> q_s, q_w;
    ag::Var<T> recon;
  };

  /// Runs the full model in eval mode with posterior means as latents.
  /// Optional z_w override (one row per sequence) replaces the z_w mean.
  EvalPass eval_pass(ag::Tape<T>& tape, const std::vector<const std::vector<int>*>& seqs,
                     const Matrix<T>* z_w_override = nullptr, const Matrix<T>* z_s_override = nullptr) const {
    EvalPass ep;
    ep.batch = pack(seqs);
    const ForwardOptions opt{};
    auto psi = lower_forward(tape, ep.batch, opt);
    ep.q_w = posterior(tape, psi, ep.batch, latent::Role::z_w);
    ag::Var<T> z_w = z_w_override ? tape.constant(*z_w_override) : ep.q_w.mu;
    std::vector<MemorySlot<T>> slots;
    if (cfg_.latent == LatentMode::disentangled) {
      ep.q_s = posterior(tape, psi, ep.batch, latent::Role::z_s);
      ag::Var<T> z_s = z_s_override ? tape.constant(*z_s_override) : ep.q_s.mu;
      slots.push_back({latent::Role::z_s, z_s});
    }
    slots.push_back({latent::Role::z_w, z_w});
    auto aug = inject_latent(tape, psi, ep.batch, slots);
    ep.recon = upper_forward(tape, aug, opt);
    return ep;
  }

  std::vector<Prediction> predict(const std::vector<const std::vector<int>*>& seqs, int span_cap = 30) const {
    ag::Tape<T> tape(false);
    auto ep = eval_pass(tape, seqs);
    auto st = stance_logits(tape, ep.recon, ep.batch);
    auto sp = span_scores(tape, ep.recon, ep.batch);
    std::vector<Prediction> out(seqs.size());
    for (std::size_t b = 0; b < seqs.size(); ++b) {
      Prediction& p = out[b];
      p.stance_probs = softmax3(st.value().row(static_cast<Eigen::Index>(b)));
      const auto [off, len] = sp.segments[b];
      p.start_probs = softmax(sp.start.value().middleRows(off, len));
      p.end_probs = softmax(sp.end.value().middleRows(off, len));
      p.stance = argmax(p.stance_probs);
      p.span = decode_span(p.start_probs, p.end_probs, span_cap);
    }
    return out;
  }

  /// Posterior means of the requested latent, one row per sequence.
  Matrix<T> posterior_means(const std::vector<const std::vector<int>*>& seqs, latent::Role role) const {
    ag::Tape<T> tape(false);
    Packed batch = pack(seqs);
    auto psi = lower_forward(tape, batch, {});
    return posterior(tape, psi, batch, role).mu.value();
  }

  /// Parameter onto the tape; constant when the tape has gradients disabled.
  ag::Var<T> bind(ag::Tape<T>& tape, int idx) const {
    auto& p = const_cast<Parameter<T>&>(params_[static_cast<std::size_t>(idx)]);
    return tape.grad_enabled() ? tape.param(p) : tape.param_detached(p);
  }

 private:
  struct NormIdx {
    int gamma = -1, beta = -1;
  };
  struct LinIdx {
    int w = -1, b = -1;
  };
  struct LayerIdx {
    NormIdx ln1, ln2;
    LinIdx q, k, v, o, ff1, ff2;
  };
  struct HeadIdx {
    int w_mu = -1, b_mu = -1, w_sigma = -1, b_sigma = -1;
  };
  using MemIdx = LinIdx;

  enum class Init { normal, zeros, ones };

  int add(const std::string& name, int rows, int cols, Init init, Rng& rng) {
    Parameter<T> p;
    p.name = name;
    p.value.resize(rows, cols);
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      p.value.data()[i] = init == Init::normal ? T(rng.normal() * cfg_.init_std) : T(init == Init::ones ? 1 : 0);
    }
    p.zero_grad();
    params_.push_back(std::move(p));
    return static_cast<int>(params_.size()) - 1;
  }

  LinIdx add_linear(const std::string& name, int in, int out, Rng& rng) {
    return {add(name + ".w", in, out, Init::normal, rng), add(name + ".b", 1, out, Init::zeros, rng)};
  }

  NormIdx add_norm(const std::string& name, Rng& rng) {
    return {add(name + ".gamma", 1, cfg_.hidden, Init::ones, rng), add(name + ".beta", 1, cfg_.hidden, Init::zeros, rng)};
  }

  LayerIdx add_layer(const std::string& name, Rng& rng) {
    LayerIdx l;
    const int h = cfg_.hidden;
    l.ln1 = add_norm(name + ".ln1", rng);
    l.q = add_linear(name + ".attn.q", h, h, rng);
    l.k = add_linear(name + ".attn.k", h, h, rng);
    l.v = add_linear(name + ".attn.v", h, h, rng);
    l.o = add_linear(name + ".attn.o", h, h, rng);
    l.ln2 = add_norm(name + ".ln2", rng);
    l.ff1 = add_linear(name + ".ffn.in", h, cfg_.ffn, rng);
    l.ff2 = add_linear(name + ".ffn.out", cfg_.ffn, h, rng);
    return l;
  }

  HeadIdx add_head(const std::string& name, int dim, Rng& rng) {
    HeadIdx hd;
    hd.w_mu = add(name + ".mu.w", cfg_.hidden, dim, Init::normal, rng);
    hd.b_mu = add(name + ".mu.b", 1, dim, Init::zeros, rng);
    hd.w_sigma = add(name + ".log_sigma.w", cfg_.hidden, dim, Init::normal, rng);
    hd.b_sigma = add(name + ".log_sigma.b", 1, dim, Init::zeros, rng);
    return hd;
  }

  void build(Rng& rng) {
    const int h = cfg_.hidden;
    emb_token_ = add("embed.token", cfg_.vocab_size, h, Init::normal, rng);
    emb_position_ = add("embed.position", cfg_.max_len, h, Init::normal, rng);
    for (int i = 0; i < cfg_.layers_lower; ++i) lower_.push_back(add_layer("lower." + std::to_string(i), rng));
    lower_norm_ = add_norm("lower.norm", rng);
    head_zs_ = add_head("posterior.z_s", cfg_.d_zs, rng);
    head_zw_ = add_head("posterior.z_w", cfg_.d_zw, rng);
    mem_zs_ = add_linear("memory.z_s", cfg_.d_zs, h, rng);
    mem_zw_ = add_linear("memory.z_w", cfg_.d_zw, h, rng);
    for (int i = 0; i < cfg_.layers_upper; ++i) upper_.push_back(add_layer("upper." + std::to_string(i), rng));
    upper_norm_ = add_norm("upper.norm", rng);
    out_token_ = add_linear("head.token", h, cfg_.vocab_size, rng);
    out_stance_ = add_linear("head.stance", h, corpus::kNumStances, rng);
    span_hidden_ = add_linear("head.span.hidden", h, h, rng);
    span_out_ = add_linear("head.span.out", h, 2, rng);
  }

  ag::Var<T> drop(ag::Var<T> x, const ForwardOptions& opt) const {
    if (!opt.train || cfg_.dropout <= 0.0) return x;
    if (!opt.rng) throw std::invalid_argument("training forward pass needs an rng for dropout");
    return ag::dropout(x, cfg_.dropout, *opt.rng);
  }

  /// Pre-norm transformer layer.
  ag::Var<T> block(ag::Tape<T>& tape, const LayerIdx& l, ag::Var<T> x, const ag::AttentionLayout& layout,
                   const ForwardOptions& opt) const {
    auto h = ag::layer_norm(x, bind(tape, l.ln1.gamma), bind(tape, l.ln1.beta));
    auto q = ag::linear(h, bind(tape, l.q.w), bind(tape, l.q.b));
    auto k = ag::linear(h, bind(tape, l.k.w), bind(tape, l.k.b));
    auto v = ag::linear(h, bind(tape, l.v.w), bind(tape, l.v.b));
    auto a = ag::linear(ag::attention(q, k, v, layout, cfg_.heads), bind(tape, l.o.w), bind(tape, l.o.b));
    x = ag::add(x, drop(a, opt));
    h = ag::layer_norm(x, bind(tape, l.ln2.gamma), bind(tape, l.ln2.beta));
    auto f = ag::linear(ag::gelu(ag::linear(h, bind(tape, l.ff1.w), bind(tape, l.ff1.b))), bind(tape, l.ff2.w), bind(tape, l.ff2.b));
    return ag::add(x, drop(f, opt));
  }

  ag::Var<T> refresh_memory(const Augmented<T>& aug, ag::Var<T> x) const {
    std::vector<ag::RowRef> map(static_cast<std::size_t>(x.rows()));
    for (std::size_t i = 0; i < map.size(); ++i) map[i] = {1, static_cast<Eigen::Index>(i)};
    for (std::size_t m = 0; m < aug.memory_rows.size(); ++m) map[static_cast<std::size_t>(aug.memory_rows[m])] = {0, static_cast<Eigen::Index>(m)};
    return ag::gather_rows<T>({aug.memory, x}, std::move(map));
  }

  template <class Row>
  static std::vector<double> softmax(const Row& z) {
    std::vector<double> p(static_cast<std::size_t>(z.size()));
    const double m = static_cast<double>(z.maxCoeff());
    double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) s += p[i] = std::exp(static_cast<double>(z(static_cast<Eigen::Index>(i))) - m);
    for (double& v : p) v /= s;
    return p;
  }

  template <class Row>
  static std::array<double, 3> softmax3(const Row& z) {
    auto v = softmax(z);
    return {v[0], v[1], v[2]};
  }

  ModelConfig cfg_;
  std::deque<Parameter<T>> params_;

  int emb_token_ = -1, emb_position_ = -1;
  std::vector<LayerIdx> lower_, upper_;
  NormIdx lower_norm_, upper_norm_;
  HeadIdx head_zs_, head_zw_;
  MemIdx mem_zs_, mem_zw_;
  LinIdx out_token_, out_stance_, span_hidden_, span_out_;
};

/// Pointers to each example's id sequence, for the batch APIs.
inline std::vector<const std::vector<int>*> id_views(const std::vector<corpus::TokenizedExample>& xs) {
  std::vector<const std::vector<int>*> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(&x.ids);
  return out;
}

/// [CLS] followed by the span tokens w_{a:b}.
inline std::vector<int> span_sequence(const std::vector<int>& ids, corpus::TokenSpan span) {
  std::vector<int> out{corpus::Vocab::kCls};
  out.insert(out.end(), ids.begin() + span.a, ids.begin() + span.b + 1);
  return out;
}

}  // namespace vadet::model
