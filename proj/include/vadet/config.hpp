#pragma once

// Run configuration: one JSON document with a section per module. Missing
// keys keep their defaults, unknown keys are errors, and `--set a.b=v`
// overrides are applied to the document before it is parsed.

#include <fstream>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "vadet/checkpoint.hpp"
#include "vadet/clustering.hpp"
#include "vadet/metrics.hpp"
#include "vadet/synthgen.hpp"
#include "vadet/trainer.hpp"

namespace vadet::config {

using nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataConfig {
  std::string unlabeled;  // raw JSON-lines inputs for `preprocess`
  std::string annotated;
  std::string emoticons;  // optional emoticon table
  int vocab_size = 4096;
  double test_fraction = 0.2;  // annotated posts held out for evaluation
  std::string extra_allowed = "#'_-";
};

struct ClusterConfig {
  int K = 0;  // 0: number of distinct gold aspect categories
  double alpha = 1.0;
  std::string latent = "z_w";
  std::string centroid_population = "train";  // posts whose z_a form the aspect centroids: train | test
  bool joint = false;                          // also update the encoder during DEC
  double encoder_lr = 1e-4;
  clustering::KMeansConfig kmeans;
  clustering::DecConfig dec;
};

struct EvalConfig {
  metrics::ProbeConfig probe;
  bool coherence_mean_over_pairs = false;
  int coherence_max_per_cluster = 200;  // texts sampled per cluster for the O(N^2) score
  int perplexity_posts = 100;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string runs_dir = "runs";
  model::ModelConfig model;
  trainer::TrainConfig train;
  synth::SynthConfig synth;
  DataConfig data;
  ClusterConfig cluster;
  EvalConfig eval;
};

inline latent::Role parse_role(const std::string& s) {
  if (s == "z_w") return latent::Role::z_w;
  if (s == "z_s") return latent::Role::z_s;
  if (s == "z_a") return latent::Role::z_a;
  throw ConfigError("unknown latent '" + s + "' (expected z_w, z_s or z_a)");
}

namespace detail {

/// Calls f(key, value) per entry; f returns false for keys it does not know.
template <class F>
void fields(const json& j, const std::string& where, F f) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    try {
      known = f(it.key(), it.value());
    } catch (const json::exception& e) {
      throw ConfigError(where + "." + it.key() + ": " + e.what());
    }
    if (!known) throw ConfigError("unknown config key '" + where + "." + it.key() + "'");
  }
}

template <class V>
bool set(const std::string& key, const char* name, const json& v, V& into) {
  if (key != name) return false;
  into = v.get<V>();
  return true;
}

inline trainer::Combine parse_combine(const std::string& s) {
  if (s == "probability") return trainer::Combine::probability;
  if (s == "logit") return trainer::Combine::logit;
  throw ConfigError("unknown combine rule '" + s + "'");
}

}  // namespace detail

inline json to_json(const trainer::TrainConfig& t) {
  const auto& p = t.pretrain;
  const auto& f = t.finetune;
  const auto& a = t.adamw;
  const auto& o = t.objective;
  return {{"pretrain", {{"epochs", p.epochs}, {"batch", p.batch}, {"lr", p.lr}, {"warmup_frac", p.warmup_frac}}},
          {"finetune", {{"epochs", f.epochs}, {"batch", f.batch}, {"lr", f.lr}, {"warmup_frac", f.warmup_frac}, {"folds", f.folds}}},
          {"adamw", {{"beta1", a.beta1}, {"beta2", a.beta2}, {"eps", a.eps}, {"weight_decay", a.weight_decay}, {"clip_norm", a.clip_norm}}},
          {"objective",
           {{"mask_probability", o.mask.probability},
            {"mask_fraction", o.mask.mask_fraction},
            {"random_fraction", o.mask.random_fraction},
            {"kl_weight", o.kl_weight},
            {"prior_gradient", o.prior_gradient}}},
          {"ablation", {{"no_disentangle", t.ablation.no_disentangle}, {"no_pretrain", t.ablation.no_pretrain}}},
          {"combine", t.combine == trainer::Combine::logit ? "logit" : "probability"}};
}

inline trainer::TrainConfig train_config_from_json(const json& j, trainer::TrainConfig t = {}) {
  using detail::set;
  detail::fields(j, "train", [&](const std::string& k, const json& v) {
    if (k == "pretrain") {
      detail::fields(v, "train.pretrain", [&](const std::string& k2, const json& v2) {
        return set(k2, "epochs", v2, t.pretrain.epochs) || set(k2, "batch", v2, t.pretrain.batch) || set(k2, "lr", v2, t.pretrain.lr) ||
               set(k2, "warmup_frac", v2, t.pretrain.warmup_frac);
      });
      return true;
    }
    if (k == "finetune") {
      detail::fields(v, "train.finetune", [&](const std::string& k2, const json& v2) {
        return set(k2, "epochs", v2, t.finetune.epochs) || set(k2, "batch", v2, t.finetune.batch) || set(k2, "lr", v2, t.finetune.lr) ||
               set(k2, "warmup_frac", v2, t.finetune.warmup_frac) || set(k2, "folds", v2, t.finetune.folds);
      });
      return true;
    }
    if (k == "adamw") {
      detail::fields(v, "train.adamw", [&](const std::string& k2, const json& v2) {
        return set(k2, "beta1", v2, t.adamw.beta1) || set(k2, "beta2", v2, t.adamw.beta2) || set(k2, "eps", v2, t.adamw.eps) ||
               set(k2, "weight_decay", v2, t.adamw.weight_decay) || set(k2, "clip_norm", v2, t.adamw.clip_norm);
      });
      return true;
    }
    if (k == "objective") {
      detail::fields(v, "train.objective", [&](const std::string& k2, const json& v2) {
        auto& o = t.objective;
        return set(k2, "mask_probability", v2, o.mask.probability) || set(k2, "mask_fraction", v2, o.mask.mask_fraction) ||
               set(k2, "random_fraction", v2, o.mask.random_fraction) || set(k2, "kl_weight", v2, o.kl_weight) ||
               set(k2, "prior_gradient", v2, o.prior_gradient);
      });
      return true;
    }
    if (k == "ablation") {
      detail::fields(v, "train.ablation", [&](const std::string& k2, const json& v2) {
        return set(k2, "no_disentangle", v2, t.ablation.no_disentangle) || set(k2, "no_pretrain", v2, t.ablation.no_pretrain);
      });
      return true;
    }
    if (k == "combine") {
      t.combine = detail::parse_combine(v.get<std::string>());
      return true;
    }
    return false;
  });
  return t;
}

inline json to_json(const RunConfig& c) {
  auto model = checkpoint::to_json(c.model);
  auto synth = synth::to_json(c.synth);
  synth.erase("seed");
  const auto& cl = c.cluster;
  const auto& ev = c.eval;
  return {{"seed", c.seed},
          {"runs_dir", c.runs_dir},
          {"model", model},
          {"train", to_json(c.train)},
          {"synth", synth},
          {"data",
           {{"unlabeled", c.data.unlabeled},
            {"annotated", c.data.annotated},
            {"emoticons", c.data.emoticons},
            {"vocab_size", c.data.vocab_size},
            {"test_fraction", c.data.test_fraction},
            {"extra_allowed", c.data.extra_allowed}}},
          {"cluster",
           {{"K", cl.K},
            {"alpha", cl.alpha},
            {"latent", cl.latent},
            {"centroid_population", cl.centroid_population},
            {"joint", cl.joint},
            {"encoder_lr", cl.encoder_lr},
            {"kmeans", {{"max_iter", cl.kmeans.max_iter}, {"tol", cl.kmeans.tol}, {"n_init", cl.kmeans.n_init}}},
            {"dec",
             {{"max_epochs", cl.dec.max_epochs},
              {"steps_per_epoch", cl.dec.steps_per_epoch},
              {"lr", cl.dec.lr},
              {"tol", cl.dec.tol},
              {"refine_projection", cl.dec.refine_projection}}}}},
          {"eval",
           {{"probe", {{"folds", ev.probe.folds}, {"steps", ev.probe.steps}, {"lr", ev.probe.lr}, {"l2", ev.probe.l2}}},
            {"coherence_mean_over_pairs", ev.coherence_mean_over_pairs},
            {"coherence_max_per_cluster", ev.coherence_max_per_cluster},
            {"perplexity_posts", ev.perplexity_posts}}}};
}

inline void validate(const RunConfig& c) {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  try {
    c.model.validate();
    c.train.validate();
    c.synth.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  need(c.data.vocab_size > corpus::Vocab::kReserved, "data.vocab_size must exceed the 4 reserved ids");
  need(c.data.test_fraction >= 0 && c.data.test_fraction < 1, "data.test_fraction must be in [0, 1)");
  need(c.cluster.K >= 0, "cluster.K must be >= 0");
  need(c.cluster.alpha > 0, "cluster.alpha must be positive");
  parse_role(c.cluster.latent);
  need(c.cluster.centroid_population == "train" || c.cluster.centroid_population == "test",
       "cluster.centroid_population must be 'train' or 'test'");
  need(c.cluster.dec.max_epochs >= 0 && c.cluster.dec.steps_per_epoch >= 1, "cluster.dec epochs/steps out of range");
  need(c.eval.probe.folds >= 2 && c.eval.probe.steps >= 1, "eval.probe needs folds >= 2 and steps >= 1");
  need(c.eval.coherence_max_per_cluster >= 2, "eval.coherence_max_per_cluster must be >= 2");
  need(c.eval.perplexity_posts >= 1, "eval.perplexity_posts must be >= 1");
}

inline RunConfig from_json(const json& j) {
  RunConfig c;
  using detail::set;
  detail::fields(j, "config", [&](const std::string& k, const json& v) {
    if (set(k, "seed", v, c.seed) || set(k, "runs_dir", v, c.runs_dir)) return true;
    if (k == "model") {
      try {
        c.model = checkpoint::model_config_from_json(v);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("model: ") + e.what());
      }
      return true;
    }
    if (k == "train") {
      c.train = train_config_from_json(v);
      return true;
    }
    if (k == "synth") {
      if (v.is_object() && v.contains("seed")) throw ConfigError("synth.seed is not a key; the top-level seed applies");
      try {
        c.synth = synth::synth_config_from_json(v);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("synth: ") + e.what());
      }
      return true;
    }
    if (k == "data") {
      detail::fields(v, "data", [&](const std::string& k2, const json& v2) {
        return set(k2, "unlabeled", v2, c.data.unlabeled) || set(k2, "annotated", v2, c.data.annotated) ||
               set(k2, "emoticons", v2, c.data.emoticons) || set(k2, "vocab_size", v2, c.data.vocab_size) ||
               set(k2, "test_fraction", v2, c.data.test_fraction) || set(k2, "extra_allowed", v2, c.data.extra_allowed);
      });
      return true;
    }
    if (k == "cluster") {
      auto& cl = c.cluster;
      detail::fields(v, "cluster", [&](const std::string& k2, const json& v2) {
        if (k2 == "kmeans") {
          detail::fields(v2, "cluster.kmeans", [&](const std::string& k3, const json& v3) {
            return set(k3, "max_iter", v3, cl.kmeans.max_iter) || set(k3, "tol", v3, cl.kmeans.tol) || set(k3, "n_init", v3, cl.kmeans.n_init);
          });
          return true;
        }
        if (k2 == "dec") {
          detail::fields(v2, "cluster.dec", [&](const std::string& k3, const json& v3) {
            return set(k3, "max_epochs", v3, cl.dec.max_epochs) || set(k3, "steps_per_epoch", v3, cl.dec.steps_per_epoch) ||
                   set(k3, "lr", v3, cl.dec.lr) || set(k3, "tol", v3, cl.dec.tol) ||
                   set(k3, "refine_projection", v3, cl.dec.refine_projection);
          });
          return true;
        }
        return set(k2, "K", v2, cl.K) || set(k2, "alpha", v2, cl.alpha) || set(k2, "latent", v2, cl.latent) ||
               set(k2, "centroid_population", v2, cl.centroid_population) || set(k2, "joint", v2, cl.joint) ||
               set(k2, "encoder_lr", v2, cl.encoder_lr);
      });
      return true;
    }
    if (k == "eval") {
      auto& ev = c.eval;
      detail::fields(v, "eval", [&](const std::string& k2, const json& v2) {
        if (k2 == "probe") {
          detail::fields(v2, "eval.probe", [&](const std::string& k3, const json& v3) {
            return set(k3, "folds", v3, ev.probe.folds) || set(k3, "steps", v3, ev.probe.steps) || set(k3, "lr", v3, ev.probe.lr) ||
                   set(k3, "l2", v3, ev.probe.l2);
          });
          return true;
        }
        return set(k2, "coherence_mean_over_pairs", v2, ev.coherence_mean_over_pairs) ||
               set(k2, "coherence_max_per_cluster", v2, ev.coherence_max_per_cluster) ||
               set(k2, "perplexity_posts", v2, ev.perplexity_posts);
      });
      return true;
    }
    return false;
  });
  c.train.seed = c.seed;
  c.synth.seed = c.seed;
  c.eval.probe.seed = c.seed;
  validate(c);
  return c;
}

/// Parses "a.b.c=value". The value is read as JSON when it parses, otherwise as a string.
inline void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not of the form key.path=value");
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override '" + assignment + "' has an empty path segment");
    if (!node->is_object()) throw ConfigError("override '" + assignment + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config file " + path + " is not valid JSON");
  return j;
}

/// Config file (optional) plus overrides, parsed strictly.
inline RunConfig load(const std::string& path, const std::vector<std::string>& overrides = {}) {
  json doc = path.empty() ? json::object() : read_json_file(path);
  for (const auto& o : overrides) apply_override(doc, o);
  return from_json(doc);
}

}  // namespace vadet::config
