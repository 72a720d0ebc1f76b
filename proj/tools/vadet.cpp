// vadet: command-line entry point.
//
//   vadet synth      generate a synthetic corpus
//   vadet preprocess clean raw corpora, split train/test, build the vocabulary
//   vadet pretrain   unsupervised pretraining on the unlabeled posts
//   vadet finetune   k-fold supervised fine-tuning from a base checkpoint
//   vadet predict    ensemble predictions for annotated or raw posts
//   vadet cluster    DEC clustering of posts by latent
//   vadet evaluate   full metrics report on the held-out split
//   vadet report     tables and charts over one or more run directories
//
// Exit codes: 0 success, 1 I/O or config error, 2 usage error, 3 divergence.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "vadet/vadet.hpp"

namespace fs = std::filesystem;
using namespace vadet;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitUsage = 2;
constexpr int kExitDiverged = 3;

struct Options {
  std::string config;
  std::vector<std::string> sets;
  std::string run_dir;
  bool no_disentangle = false;
  bool no_pretrain = false;
  bool quiet = false;
  bool verbose = false;
  // command inputs
  std::string data, base, model, input, unlabeled, annotated, out;
  std::vector<std::string> runs;
};

config::RunConfig resolve(const Options& o) {
  auto cfg = config::load(o.config, o.sets);
  if (o.no_disentangle) cfg.train.ablation.no_disentangle = true;
  if (o.no_pretrain) cfg.train.ablation.no_pretrain = true;
  return cfg;
}

fs::path make_run_dir(const config::RunConfig& cfg, const std::string& command, const std::string& explicit_dir) {
  if (!explicit_dir.empty()) {
    fs::create_directories(explicit_dir);
    return explicit_dir;
  }
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&now, &tm);
  std::ostringstream name;
  name << std::put_time(&tm, "%Y%m%d-%H%M%S") << "-" << command;
  fs::path dir = fs::path(cfg.runs_dir) / name.str();
  for (int i = 2; fs::exists(dir); ++i) dir = fs::path(cfg.runs_dir) / (name.str() + "-" + std::to_string(i));
  fs::create_directories(dir);
  return dir;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << j.dump(2) << "\n";
}

json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  json j = json::parse(f, nullptr, false);
  if (j.is_discarded()) throw std::runtime_error(path.string() + " is not valid JSON");
  return j;
}

/// Config snapshot plus the command and its inputs.
void snapshot(const fs::path& dir, const config::RunConfig& cfg, const std::string& command, const json& inputs) {
  write_json(dir / "config.json", config::to_json(cfg));
  write_json(dir / "run.json", {{"command", command}, {"inputs", inputs}});
}

std::string abs(const std::string& p) { return p.empty() ? p : fs::absolute(p).string(); }

std::vector<corpus::TokenizedExample> tokenize(const std::vector<corpus::AnnotatedPost>& posts, const corpus::Vocab& v, int max_len,
                                               const char* what) {
  corpus::TokenizeStats st;
  auto out = corpus::tokenize_all(posts, v, max_len, &st);
  log::info(std::string(what) + ": " + std::to_string(st.kept) + " kept, " + std::to_string(st.dropped) + " dropped");
  return out;
}

/// Sets the model vocabulary size from the prepared vocabulary.
void bind_vocab(config::RunConfig& cfg, const corpus::Vocab& v) {
  if (cfg.model.vocab_size != v.size()) {
    log::info("model.vocab_size set to the prepared vocabulary size " + std::to_string(v.size()));
    cfg.model.vocab_size = v.size();
  }
}

trainer::EnsembleModel load_ensemble(const fs::path& path) {
  trainer::EnsembleModel ens;
  if (fs::is_directory(path)) {
    const auto j = read_json(path / "ensemble.json");
    for (const auto& m : j.at("members")) ens.members.push_back(checkpoint::load<float>(path / m.get<std::string>()));
    ens.combine = j.value("combine", "probability") == "logit" ? trainer::Combine::logit : trainer::Combine::probability;
  } else {
    ens.members.push_back(checkpoint::load<float>(path));
  }
  if (ens.members.empty()) throw std::runtime_error(path.string() + ": ensemble has no members");
  return ens;
}

// ---------------------------------------------------------------------------

int cmd_synth(const Options& o) {
  auto cfg = resolve(o);
  const auto dir = make_run_dir(cfg, "synth", o.run_dir);
  snapshot(dir, cfg, "synth", json::object());
  const auto corpus = synth::generate(cfg.synth);
  synth::write(dir, cfg.synth, corpus);
  std::cout << "synthetic corpus: " << corpus.unlabeled.size() << " unlabeled, " << corpus.annotated.size() << " annotated -> "
            << dir.string() << "\n";
  return kExitOk;
}

int cmd_preprocess(const Options& o) {
  auto cfg = resolve(o);
  if (!o.unlabeled.empty()) cfg.data.unlabeled = o.unlabeled;
  if (!o.annotated.empty()) cfg.data.annotated = o.annotated;
  if (cfg.data.annotated.empty() && cfg.data.unlabeled.empty()) throw config::ConfigError("preprocess needs data.unlabeled and/or data.annotated");
  const auto unl = cfg.data.unlabeled.empty() ? std::vector<corpus::AnnotatedPost>{} : corpus::load_jsonl(cfg.data.unlabeled);
  const auto ann = cfg.data.annotated.empty() ? std::vector<corpus::AnnotatedPost>{} : corpus::load_jsonl(cfg.data.annotated);
  const auto dir = make_run_dir(cfg, "preprocess", o.run_dir);
  snapshot(dir, cfg, "preprocess", {{"unlabeled", abs(cfg.data.unlabeled)}, {"annotated", abs(cfg.data.annotated)}});
  const auto prep = pipeline::prepare(unl, ann, cfg);
  pipeline::write_prepared(dir, prep);
  std::cout << prep.stats.dump() << "\n" << "prepared data -> " << dir.string() << "\n";
  return kExitOk;
}

int cmd_pretrain(const Options& o) {
  auto cfg = resolve(o);
  const auto prep = pipeline::read_prepared(o.data);
  bind_vocab(cfg, prep.vocab);
  cfg.model.latent = model::LatentMode::single;
  const auto xs = tokenize(prep.unlabeled, prep.vocab, cfg.model.max_len, "unlabeled");
  const auto dir = make_run_dir(cfg, "pretrain", o.run_dir);
  snapshot(dir, cfg, "pretrain", {{"data", abs(o.data)}});
  trainer::Net m(cfg.model, cfg.seed);
  const auto res = trainer::pretrain(xs, m, cfg.train, dir);
  checkpoint::save(dir / "base.ckpt", m, {{"stage", "pretrain"}, {"skipped", res.skipped}});
  for (std::size_t e = 0; e < res.epoch_loss.size(); ++e) std::cout << "epoch " << e + 1 << " mean -ELBO " << res.epoch_loss[e] << "\n";
  std::cout << "base checkpoint -> " << (dir / "base.ckpt").string() << "\n";
  return kExitOk;
}

int cmd_finetune(const Options& o) {
  auto cfg = resolve(o);
  const auto prep = pipeline::read_prepared(o.data);
  bind_vocab(cfg, prep.vocab);
  trainer::Net base = trainer::Net::uninitialized(cfg.model);
  if (!o.base.empty()) {
    if (cfg.train.ablation.no_pretrain) log::warn("finetune: -U given together with --base; the base checkpoint is used as given");
    base = checkpoint::load<float>(o.base);
    if (base.config().vocab_size != prep.vocab.size()) throw std::runtime_error("base checkpoint vocabulary does not match the prepared data");
    cfg.model = base.config();
  } else if (cfg.train.ablation.no_pretrain) {
    base = trainer::Net(cfg.model, cfg.seed);
  } else {
    throw config::ConfigError("finetune needs --base (or -U to start from a random initialization)");
  }
  const auto xs = tokenize(prep.train, prep.vocab, cfg.model.max_len, "train");
  const auto dir = make_run_dir(cfg, "finetune", o.run_dir);
  snapshot(dir, cfg, "finetune", {{"data", abs(o.data)}, {"base", abs(o.base)}});
  const auto res = trainer::finetune_kfold(xs, base, cfg.train, dir);
  json members = json::array(), traces = json::array();
  for (std::size_t f = 0; f < res.traces.size(); ++f) {
    members.push_back("member" + std::to_string(f) + ".ckpt");
    const auto& t = res.traces[f];
    json val = json::array();
    for (const auto& v : t.validation) val.push_back({{"stance_acc", v.stance.accuracy}, {"span_f1", v.span.f1}});
    traces.push_back({{"fold", t.fold}, {"best_epoch", t.best_epoch}, {"train_loss", t.train_loss}, {"validation", val}});
    const auto& b = t.validation[static_cast<std::size_t>(t.best_epoch - 1)];
    std::cout << "fold " << f << ": best epoch " << t.best_epoch << ", val stance acc " << b.stance.accuracy << ", val span F1 "
              << b.span.f1 << "\n";
  }
  write_json(dir / "ensemble.json",
             {{"members", members}, {"combine", cfg.train.combine == trainer::Combine::logit ? "logit" : "probability"}, {"traces", traces}});
  std::cout << "ensemble -> " << dir.string() << "\n";
  return kExitOk;
}

/// Character span (code points) of token span [a, b] in preprocessed text.
corpus::CharSpan char_span(const std::string& text, corpus::TokenSpan s) {
  const auto words = corpus::split_words(text);
  const auto& w0 = words.at(static_cast<std::size_t>(s.a - 1));
  const auto& w1 = words.at(static_cast<std::size_t>(s.b - 1));
  return {corpus::codepoint_index(text, w0.begin), corpus::codepoint_index(text, w1.end)};
}

int cmd_predict(const Options& o) {
  auto cfg = resolve(o);
  const auto prep = pipeline::read_prepared(o.data);
  const auto ens = load_ensemble(o.model);
  std::vector<corpus::AnnotatedPost> posts;
  if (o.input.empty()) {
    posts = prep.test;
  } else {
    corpus::PreprocessOptions opt;
    opt.extra_allowed = cfg.data.extra_allowed;
    if (!cfg.data.emoticons.empty()) opt.emoticons = corpus::load_emoticon_table(cfg.data.emoticons);
    for (const auto& p : corpus::load_jsonl(o.input)) {
      if (auto q = corpus::preprocess_post(p, opt)) posts.push_back(std::move(*q));
    }
  }
  const int max_len = ens.members.front().config().max_len;
  std::vector<corpus::TokenizedExample> xs;
  std::vector<const corpus::AnnotatedPost*> src;
  for (const auto& p : posts) {
    auto x = corpus::tokenize(p, prep.vocab, max_len);
    if (x.n() < 1) continue;
    x.dropped = false;
    xs.push_back(std::move(x));
    src.push_back(&p);
  }
  if (xs.empty()) throw std::runtime_error("predict: no posts to predict");
  const auto dir = make_run_dir(cfg, "predict", o.run_dir);
  snapshot(dir, cfg, "predict", {{"data", abs(o.data)}, {"model", abs(o.model)}, {"input", abs(o.input)}});
  const auto preds = trainer::ensemble_predict(ens, xs, trainer::all_indices(xs.size()));
  std::ofstream f(dir / "predictions.jsonl");
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto& p = preds[i];
    const auto cs = char_span(src[i]->post.text, p.span);
    const auto b0 = corpus::byte_offset(src[i]->post.text, cs.start), b1 = corpus::byte_offset(src[i]->post.text, cs.end);
    f << json{{"id", xs[i].id},
              {"stance", std::string(corpus::to_string(static_cast<corpus::Stance>(p.stance)))},
              {"stance_probs", p.stance_probs},
              {"span_tok", {p.span.a, p.span.b}},
              {"span", {cs.start, cs.end}},
              {"span_text", src[i]->post.text.substr(b0, b1 - b0)}}
             .dump()
      << "\n";
  }
  std::cout << xs.size() << " predictions -> " << (dir / "predictions.jsonl").string() << "\n";
  return kExitOk;
}

void write_cluster_files(const fs::path& dir, const std::vector<corpus::TokenizedExample>& xs, const pipeline::ClusterResult& r) {
  std::ofstream f(dir / "clusters.jsonl");
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::vector<double> q(r.model.q.row(static_cast<Eigen::Index>(i)).data(), r.model.q.row(static_cast<Eigen::Index>(i)).data() + r.model.K);
    f << json{{"post_id", xs[i].id}, {"hard_label", r.model.labels[i]}, {"q_row", q}}.dump() << "\n";
  }
  std::ofstream c(dir / "centroids.tsv");
  for (std::size_t k = 0; k < r.centroids.size(); ++k) c << (k ? "\t" : "") << r.centroids[k].k;
  c << "\n";
  if (!r.centroids.empty()) {
    for (Eigen::Index d = 0; d < r.centroids.front().z_hat.size(); ++d) {
      for (std::size_t k = 0; k < r.centroids.size(); ++k) c << (k ? "\t" : "") << std::setprecision(9) << r.centroids[k].z_hat(d);
      c << "\n";
    }
  }
  std::vector<std::string> legend;
  for (int k = 0; k < r.model.K; ++k) legend.push_back("cluster " + std::to_string(k));
  plot::write_file((dir / "pca.svg").string(), plot::scatter("Posts by latent (principal components)", plot::pca2(r.latents), r.model.labels, legend));
}

int cmd_cluster(const Options& o) {
  auto cfg = resolve(o);
  const auto prep = pipeline::read_prepared(o.data);
  const auto ens = load_ensemble(o.model);
  const auto& m = ens.members.front();
  const auto test = tokenize(prep.test, prep.vocab, m.config().max_len, "test");
  const auto train = tokenize(prep.train, prep.vocab, m.config().max_len, "train");
  if (test.empty()) throw std::runtime_error("cluster: no test posts");
  const auto dir = make_run_dir(cfg, "cluster", o.run_dir);
  snapshot(dir, cfg, "cluster", {{"data", abs(o.data)}, {"model", abs(o.model)}});
  const auto r = pipeline::cluster_posts(m, test, cfg.cluster.centroid_population == "test" ? test : train, cfg);
  write_cluster_files(dir, test, r);
  json summary = {{"K", r.model.K}, {"dec_epochs", r.trace.kl.size()}, {"dec_converged", r.trace.converged}, {"dec_kl", r.trace.kl}};
  std::vector<std::size_t> which;
  const auto gold = pipeline::gold_aspects(test, &which);
  if (!gold.empty()) {
    std::vector<int> pred;
    for (std::size_t i : which) pred.push_back(r.model.labels[i]);
    summary["nmi"] = metrics::nmi(pred, gold);
    summary["cluster_acc"] = metrics::cluster_accuracy(pred, gold);
  }
  write_json(dir / "cluster.json", summary);
  std::cout << summary.dump() << "\n" << "clusters -> " << dir.string() << "\n";
  return kExitOk;
}

std::string fmt(const json& v) {
  if (v.is_null()) return "-";
  std::ostringstream o;
  o << std::fixed << std::setprecision(4) << v.get<double>();
  return o.str();
}

const std::vector<std::string>& report_fields() {
  static const std::vector<std::string> f{"stance_acc",     "stance_macro_f1", "span_em",           "span_f1",
                                          "nmi",            "cluster_acc",     "coherence_mean",    "coherence_across_mean",
                                          "conditional_ppl", "random_latent_ppl", "matched_win_rate", "probe_acc_zs", "probe_acc_zw"};
  return f;
}

int cmd_evaluate(const Options& o) {
  auto cfg = resolve(o);
  const auto prep = pipeline::read_prepared(o.data);
  const auto ens = load_ensemble(o.model);
  const int max_len = ens.members.front().config().max_len;
  const auto test = tokenize(prep.test, prep.vocab, max_len, "test");
  const auto train = tokenize(prep.train, prep.vocab, max_len, "train");
  const auto dir = make_run_dir(cfg, "evaluate", o.run_dir);
  snapshot(dir, cfg, "evaluate", {{"data", abs(o.data)}, {"model", abs(o.model)}});
  const auto ev = pipeline::evaluate(ens, prep.vocab, prep.test, train, test, cfg);
  const json rep = ev.report.to_json();
  write_json(dir / "metrics.json", rep);
  write_cluster_files(dir, test, ev.clusters);
  std::vector<std::string> cats;
  plot::BarSeries within{"within cluster", {}};
  for (std::size_t k = 0; k < ev.report.coherence.size(); ++k) {
    cats.push_back("cluster " + std::to_string(k));
    within.values.push_back(ev.report.coherence[k]);
  }
  if (!cats.empty()) plot::write_file((dir / "coherence.svg").string(), plot::bar_chart("Coherence per cluster", cats, {within}, "f(C)"));
  if (ev.report.conditional_ppl) {
    plot::write_file((dir / "perplexity.svg").string(),
                     plot::bar_chart("Conditional perplexity", {"held-out posts"},
                                     {{"matched centroid", {ev.report.conditional_ppl}}, {"random latent", {ev.report.random_latent_ppl}}},
                                     "perplexity"));
  }
  for (const auto& k : report_fields()) std::cout << std::left << std::setw(24) << k << fmt(rep.at(k)) << "\n";
  std::cout << "metrics -> " << (dir / "metrics.json").string() << "\n";
  return kExitOk;
}

int cmd_report(const Options& o) {
  if (o.runs.empty()) throw config::ConfigError("report needs at least one run directory");
  std::vector<std::string> names;
  std::vector<json> reports;
  std::ostringstream md;
  md << "# Run report\n\n";
  for (const auto& r : o.runs) {
    const fs::path dir(r);
    if (!fs::is_directory(dir)) throw std::runtime_error("run directory not found: " + r);
    const bool has_metrics = fs::exists(dir / "metrics.json");
    const bool has_log = fs::exists(dir / "metrics.jsonl");
    if (!has_metrics && !has_log) throw std::runtime_error("run directory " + r + " has no metrics.json or metrics.jsonl");
    names.push_back(dir.filename().string().empty() ? dir.parent_path().filename().string() : dir.filename().string());
    reports.push_back(has_metrics ? read_json(dir / "metrics.json") : json::object());
    if (has_log) {
      std::ifstream f(dir / "metrics.jsonl");
      std::string line;
      std::vector<std::pair<int, double>> pre;
      std::map<int, json> best;
      while (std::getline(f, line)) {
        const auto j = json::parse(line, nullptr, false);
        if (j.is_discarded()) continue;
        const auto stage = j.value("stage", "");
        if (stage == "pretrain") pre.emplace_back(j.at("epoch").get<int>(), j.at("neg_elbo").get<double>());
        if (stage == "finetune") {
          const int fold = j.at("fold").get<int>();
          const double s = j.at("val_stance_f1").get<double>() + j.at("val_span_f1").get<double>();
          if (!best.count(fold) || s > best[fold]["score"].get<double>()) best[fold] = {{"score", s}, {"epoch", j["epoch"]}, {"rec", j}};
        }
      }
      if (!pre.empty()) {
        md << "## " << names.back() << ": pretraining\n\n| epoch | mean -ELBO |\n|---|---|\n";
        for (const auto& [e, v] : pre) md << "| " << e << " | " << fmt(v) << " |\n";
        md << "\n";
      }
      if (!best.empty()) {
        md << "## " << names.back() << ": fine-tuning (best validation epoch per fold)\n\n| fold | epoch | stance acc | stance F1 | span EM | span F1 |\n|---|---|---|---|---|---|\n";
        for (const auto& [fold, b] : best) {
          const auto& j = b["rec"];
          md << "| " << fold << " | " << b["epoch"] << " | " << fmt(j["val_stance_acc"]) << " | " << fmt(j["val_stance_f1"]) << " | "
             << fmt(j["val_span_em"]) << " | " << fmt(j["val_span_f1"]) << " |\n";
        }
        md << "\n";
      }
    }
  }
  const fs::path out = o.out.empty() ? fs::path(o.runs.front()) : fs::path(o.out);
  fs::create_directories(out);
  bool any_metrics = false;
  for (const auto& r : reports) any_metrics = any_metrics || !r.empty();
  if (any_metrics) {
    md << "## Metrics\n\n| metric |";
    for (const auto& n : names) md << " " << n << " |";
    md << "\n|---|";
    for (std::size_t i = 0; i < names.size(); ++i) md << "---|";
    md << "\n";
    for (const auto& k : report_fields()) {
      md << "| " << k << " |";
      for (const auto& r : reports) md << " " << (r.contains(k) ? fmt(r[k]) : "-") << " |";
      md << "\n";
    }
    auto series = [&](const std::vector<std::string>& keys) {
      std::vector<plot::BarSeries> s;
      for (std::size_t i = 0; i < names.size(); ++i) {
        plot::BarSeries b{names[i], {}};
        for (const auto& k : keys) {
          const auto& r = reports[i];
          b.values.push_back(r.contains(k) && !r[k].is_null() ? std::optional<double>(r[k].get<double>()) : std::nullopt);
        }
        s.push_back(std::move(b));
      }
      return s;
    };
    const std::vector<std::string> task{"stance_acc", "stance_macro_f1", "span_em", "span_f1", "nmi", "cluster_acc"};
    plot::write_file((out / "report_metrics.svg").string(), plot::bar_chart("Task metrics", task, series(task)));
    const std::vector<std::string> coh{"coherence_mean", "coherence_across_mean"};
    plot::write_file((out / "report_coherence.svg").string(), plot::bar_chart("Coherence", {"within", "across"}, series(coh), "f(C)"));
    const std::vector<std::string> ppl{"conditional_ppl", "random_latent_ppl"};
    plot::write_file((out / "report_perplexity.svg").string(), plot::bar_chart("Perplexity", {"matched", "random"}, series(ppl), "perplexity"));
  }
  std::ofstream(out / "report.md") << md.str();
  std::cout << md.str() << "report -> " << (out / "report.md").string() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variational stance and aspect detection on short posts"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* c) {
    c->add_option("-c,--config", o.config, "JSON run configuration");
    c->add_option("--set", o.sets, "override a config value, e.g. --set train.finetune.lr=1e-4")->allow_extra_args(false);
    c->add_option("--run-dir", o.run_dir, "write artifacts here instead of a new timestamped directory");
    c->add_flag("-D,--no-disentangle", o.no_disentangle, "ablation -D: single latent, no span-conditioned prior");
    c->add_flag("-U,--no-pretrain", o.no_pretrain, "ablation -U: skip pretraining");
    c->add_flag("-q,--quiet", o.quiet, "only warnings and errors");
    c->add_flag("-v,--verbose", o.verbose, "debug logging");
  };
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  auto* prep = app.add_subcommand("preprocess", "clean raw corpora, split train/test, build the vocabulary");
  prep->add_option("--unlabeled", o.unlabeled, "unlabeled JSON-lines (overrides data.unlabeled)");
  prep->add_option("--annotated", o.annotated, "annotated JSON-lines (overrides data.annotated)");
  auto* pre = app.add_subcommand("pretrain", "unsupervised pretraining");
  pre->add_option("--data", o.data, "prepared data directory")->required();
  auto* ft = app.add_subcommand("finetune", "k-fold supervised fine-tuning");
  ft->add_option("--data", o.data, "prepared data directory")->required();
  ft->add_option("--base", o.base, "base checkpoint from pretrain");
  auto* pr = app.add_subcommand("predict", "ensemble predictions");
  pr->add_option("--data", o.data, "prepared data directory (vocabulary, default inputs)")->required();
  pr->add_option("--model", o.model, "finetune run directory or a checkpoint")->required();
  pr->add_option("--input", o.input, "raw JSON-lines to predict (default: the prepared test split)");
  auto* cl = app.add_subcommand("cluster", "cluster held-out posts by latent");
  cl->add_option("--data", o.data, "prepared data directory")->required();
  cl->add_option("--model", o.model, "finetune run directory or a checkpoint")->required();
  auto* ev = app.add_subcommand("evaluate", "metrics report on the held-out split");
  ev->add_option("--data", o.data, "prepared data directory")->required();
  ev->add_option("--model", o.model, "finetune run directory or a checkpoint")->required();
  auto* rp = app.add_subcommand("report", "tables and charts over run directories");
  rp->add_option("runs", o.runs, "run directories")->required();
  rp->add_option("--out", o.out, "output directory (default: the first run directory)");
  for (auto* c : {synth, prep, pre, ft, pr, cl, ev, rp}) common(c);

  if (argc > 1 && argv[1][0] != '-') {
    bool known = false;
    for (const auto* c : app.get_subcommands({})) known = known || c->get_name() == argv[1];
    if (!known) {
      std::cerr << "error: unknown command '" << argv[1] << "'\n\n" << app.help();
      return kExitUsage;
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }
  log::threshold() = o.quiet ? log::Level::warn : o.verbose ? log::Level::debug : log::Level::info;
  try {
    if (*synth) return cmd_synth(o);
    if (*prep) return cmd_preprocess(o);
    if (*pre) return cmd_pretrain(o);
    if (*ft) return cmd_finetune(o);
    if (*pr) return cmd_predict(o);
    if (*cl) return cmd_cluster(o);
    if (*ev) return cmd_evaluate(o);
    if (*rp) return cmd_report(o);
  } catch (const trainer::DivergenceError& e) {
    std::cerr << "error: " << e.what();
    if (e.last_good()) std::cerr << " (last good checkpoint: " << e.last_good()->string() << ")";
    std::cerr << "\n";
    return kExitDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitUsage;
}
