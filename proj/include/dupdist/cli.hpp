#pragma once

// Command-line front end. run_cli returns the process exit status:
// 0 success, 1 runtime error, 2 usage error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "artifacts.hpp"
#include "baseline_lr.hpp"
#include "config.hpp"
#include "corpus.hpp"
#include "log.hpp"
#include "pipeline.hpp"
#include "trainer.hpp"

namespace dupdist::cli {

namespace fs = std::filesystem;

struct Options {
  std::string config_path;
  std::vector<std::uint64_t> seeds;
  std::string dataset;
  std::string format = "bugrepo-csv";
  std::optional<double> dup_fraction;
  std::size_t k = 20;
  std::string checkpoint;
  std::vector<std::string> pairs;
  std::string out;
  std::optional<double> lambda;
  std::optional<std::string> sim_sign;
  std::optional<std::string> cond_attn;
  std::optional<std::size_t> epochs;
  bool all_reports = false;
  bool unweighted = false;
  std::string p_id, q_id;
  // synth
  std::size_t topics = 5;
  std::size_t reports_per_topic = 200;
  double dup_rate = 0.1;
  std::size_t vocab_per_topic = 8;
};

inline void ensure_dir(const std::string& dir) {
  if (dir.empty()) throw Error("--out DIR is required for this command");
  fs::create_directories(dir);
}

inline std::string in_dir(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write '" + path + "'");
  f << text;
}

inline void write_json(const std::string& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

// Config file first, then explicit flags on top.
inline HyperConfig resolve_config(const Options& o) {
  HyperConfig cfg = o.config_path.empty() ? HyperConfig{} : load_config(o.config_path);
  if (!o.seeds.empty()) cfg.seeds = o.seeds;
  if (o.dup_fraction) cfg.target_dup_fraction = *o.dup_fraction;
  if (o.lambda) cfg.lambda = *o.lambda;
  if (o.sim_sign) cfg.sim_sign = parse_sim_sign(*o.sim_sign);
  if (o.cond_attn) cfg.cond_attn = parse_cond_attention(*o.cond_attn);
  if (o.epochs) cfg.epochs = *o.epochs;
  cfg.validate();
  return cfg;
}

inline Corpus load_dataset(const Options& o) {
  if (o.dataset.empty()) throw Error("--dataset PATH is required for this command");
  return load_reports(o.dataset, parse_report_format(o.format));
}

inline std::string dataset_fingerprint(const Options& o) {
  std::string fp = o.dataset.empty() ? std::string() : fingerprint_file(o.dataset);
  for (const auto& p : o.pairs) fp += "+" + fingerprint_file(p);
  return fp;
}

inline std::vector<PairExample> load_or_generate_pairs(const Options& o, const Corpus& corpus, const HyperConfig& cfg) {
  if (o.pairs.size() > 1) throw Error("expected at most one --pairs file");
  if (!o.pairs.empty()) return read_pairs(o.pairs.front());
  return generate_pairs(corpus, cfg.target_dup_fraction, cfg.seeds.front());
}

inline RunManifest make_manifest(const Options& o, const HyperConfig& cfg, const std::string& command) {
  RunManifest m;
  m.config = cfg;
  m.seeds = cfg.seeds;
  m.dataset_fingerprint = dataset_fingerprint(o);
  m.command = command;
  return m;
}

// ---------------------------------------------------------------------------

inline int cmd_ingest(const Options& o, std::ostream& out) {
  ensure_dir(o.out);
  const Corpus corpus = load_dataset(o);
  RunManifest man = make_manifest(o, HyperConfig{}, "ingest");
  man.config = nlohmann::json::object();
  man.outputs["reports"] = in_dir(o.out, "reports.jsonl");
  std::ofstream f(man.outputs["reports"]);
  write_reports_jsonl(f, corpus, man.hash());
  std::size_t grouped = 0, groups = 0;
  for (const auto& g : corpus.groups.members) {
    if (g.size() > 1) {
      ++groups;
      grouped += g.size();
    }
  }
  nlohmann::json stats = {{"reports", corpus.reports.size()},
                          {"duplicate_groups", groups},
                          {"reports_in_groups", grouped},
                          {"rows_read", corpus.stats.rows_read},
                          {"malformed_rows", corpus.stats.malformed_rows},
                          {"empty_reports_dropped", corpus.stats.empty_reports_dropped},
                          {"dangling_links", corpus.stats.dangling_links},
                          {"manifest_hash", man.hash()}};
  write_json(in_dir(o.out, "manifest.json"), man.to_json());
  write_json(in_dir(o.out, "ingest_stats.json"), stats);
  out << stats.dump(2) << '\n';
  return 0;
}

inline int cmd_pairs_gen(const Options& o, std::ostream& out) {
  ensure_dir(o.out);
  const HyperConfig cfg = resolve_config(o);
  const Corpus corpus = load_dataset(o);
  const auto pairs = generate_pairs(corpus, cfg.target_dup_fraction, cfg.seeds.front());
  RunManifest man = make_manifest(o, cfg, "pairs-gen");
  man.outputs["pairs"] = in_dir(o.out, "pairs.tsv");
  std::ofstream f(man.outputs["pairs"]);
  write_pairs(f, pairs, man.hash());
  std::size_t pos = 0, case2 = 0;
  for (const auto& p : pairs) {
    pos += p.label == 1 ? 1 : 0;
    case2 += p.label == 0 && p.no_content_overlap ? 1 : 0;
  }
  write_json(in_dir(o.out, "manifest.json"), man.to_json());
  out << "pairs " << pairs.size() << ", duplicates " << pos << " ("
      << 100.0 * static_cast<double>(pos) / static_cast<double>(pairs.size()) << "%), no-overlap negatives " << case2
      << '\n';
  return 0;
}

inline int cmd_synth(const Options& o, std::ostream& out) {
  ensure_dir(o.out);
  SyntheticSpec spec;
  spec.num_topics = o.topics;
  spec.reports_per_topic = o.reports_per_topic;
  spec.dup_rate = o.dup_rate;
  spec.vocab_per_topic = o.vocab_per_topic;
  spec.seed = o.seeds.empty() ? 1 : o.seeds.front();
  const auto syn = generate_synthetic(spec);
  RunManifest man;
  man.config = {{"topics", spec.num_topics},
                {"reports_per_topic", spec.reports_per_topic},
                {"dup_rate", spec.dup_rate},
                {"vocab_per_topic", spec.vocab_per_topic}};
  man.seeds = {spec.seed};
  man.dataset_fingerprint = fingerprint_corpus(syn.corpus);
  man.command = "synth";
  man.outputs["reports"] = in_dir(o.out, "reports.jsonl");
  man.outputs["topics"] = in_dir(o.out, "topics.json");
  std::ofstream f(man.outputs["reports"]);
  write_reports_jsonl(f, syn.corpus, man.hash());
  write_json(man.outputs["topics"], {{"topic_keywords", syn.topic_keywords},
                                     {"issue_pools", syn.issue_pools},
                                     {"manifest_hash", man.hash()}});
  write_json(in_dir(o.out, "manifest.json"), man.to_json());
  out << "wrote " << syn.corpus.reports.size() << " reports over " << spec.num_topics << " topics to "
      << man.outputs["reports"] << '\n';
  return 0;
}

inline int cmd_train(const Options& o, std::ostream& out) {
  ensure_dir(o.out);
  const HyperConfig cfg = resolve_config(o);
  const PreparedCorpus data = prepare_corpus(load_dataset(o), cfg);
  const auto pairs = load_or_generate_pairs(o, data.corpus, cfg);
  RunManifest man = make_manifest(o, cfg, "train");
  const std::string hash = man.hash();

  std::vector<TrialResult> trials;
  for (auto seed : cfg.seeds) {
    log::info("training seed " + std::to_string(seed));
    auto t = run_trial(data, pairs, cfg, seed);
    const std::string s = std::to_string(seed);
    man.outputs["checkpoint_seed_" + s] = in_dir(o.out, "model_seed" + s + ".ckpt");
    save_checkpoint(man.outputs["checkpoint_seed_" + s], t.params, data.vocab, hash);
    for (auto [name, set] : {std::pair{"train", &t.splits.train}, std::pair{"val", &t.splits.val},
                             std::pair{"test", &t.splits.test}}) {
      const std::string key = std::string(name) + "_seed_" + s;
      man.outputs[key] = in_dir(o.out, std::string(name) + "_seed" + s + ".tsv");
      std::ofstream f(man.outputs[key]);
      write_pairs(f, *set, hash);
    }
    out << "seed " << seed << ": best epoch " << t.report.best_epoch << ", test P " << t.report.test->precision
        << " R " << t.report.test->recall << " F1 " << t.report.test->f1;
    if (t.report.purity) out << ", purity " << *t.report.purity;
    if (t.report.diverged) out << " [" << t.report.error << "]";
    out << '\n';
    trials.push_back(std::move(t));
  }
  const TrialsReport summary = summarize_trials(trials);
  man.outputs["report"] = in_dir(o.out, "train_report.json");
  nlohmann::json report = summary;
  report["manifest_hash"] = hash;
  report["manifest"] = man.to_json();
  write_json(man.outputs["report"], report);
  write_json(in_dir(o.out, "manifest.json"), man.to_json());
  out << "mean over " << trials.size() << " seed(s): P " << summary.mean_test.precision << " R "
      << summary.mean_test.recall << " F1 " << summary.mean_test.f1 << '\n';
  for (const auto& t : trials) {
    if (t.report.diverged) return 1;
  }
  return 0;
}

inline Checkpoint load_checkpoint_for(const Options& o) {
  if (o.checkpoint.empty()) throw Error("--checkpoint PATH is required for this command");
  return load_checkpoint(o.checkpoint);
}

// Rejects explicitly requested settings that disagree with the checkpoint.
inline void check_conflicts(const Options& o, const HyperConfig& ckpt) {
  std::vector<std::string> conflicts;
  if (!o.config_path.empty()) {
    const HyperConfig file = load_config(o.config_path);
    if (file.model_identity() != ckpt.model_identity()) {
      conflicts.push_back("config file model " + file.model_identity().dump() + " vs checkpoint " +
                          ckpt.model_identity().dump());
    }
  }
  if (o.lambda && *o.lambda != ckpt.lambda) conflicts.push_back("--lambda vs checkpoint " + std::to_string(ckpt.lambda));
  if (o.sim_sign && parse_sim_sign(*o.sim_sign) != ckpt.sim_sign) {
    conflicts.push_back("--sim-sign vs checkpoint " + to_string(ckpt.sim_sign));
  }
  if (o.cond_attn && parse_cond_attention(*o.cond_attn) != ckpt.cond_attn) {
    conflicts.push_back("--cond-attn vs checkpoint " + to_string(ckpt.cond_attn));
  }
  if (!conflicts.empty()) {
    std::string msg = "checkpoint hyperconfig conflicts with the requested settings:";
    for (const auto& c : conflicts) msg += "\n  " + c;
    throw Error(msg);
  }
}

inline int cmd_eval(const Options& o, std::ostream& out) {
  Checkpoint ck = load_checkpoint_for(o);
  check_conflicts(o, ck.params.config);
  if (o.pairs.size() != 1) throw Error("eval needs exactly one --pairs file");
  Corpus corpus = load_dataset(o);
  encode_corpus(corpus, ck.vocab);
  const auto pairs = read_pairs(o.pairs.front());
  const Metrics m = evaluate(ck.params, corpus, pairs);
  RunManifest man = make_manifest(o, ck.params.config, "eval");
  nlohmann::json j = m;
  j["pairs"] = pairs.size();
  j["checkpoint_manifest_hash"] = ck.manifest_hash;
  j["manifest_hash"] = man.hash();
  if (!o.out.empty()) {
    ensure_dir(o.out);
    write_json(in_dir(o.out, "metrics.json"), j);
  }
  out << j.dump(2) << '\n';
  return 0;
}

inline int cmd_cluster(const Options& o, std::ostream& out) {
  Checkpoint ck = load_checkpoint_for(o);
  Corpus corpus = load_dataset(o);
  encode_corpus(corpus, ck.vocab);
  std::vector<std::size_t> reports;
  if (o.all_reports || o.pairs.empty()) {
    for (std::size_t i = 0; i < corpus.reports.size(); ++i) reports.push_back(i);
  } else {
    std::vector<std::vector<PairExample>> sets;
    for (const auto& p : o.pairs) sets.push_back(read_pairs(p));
    std::set<std::size_t> s;
    for (const auto& set : sets) {
      for (const auto& pr : set) {
        s.insert(corpus.require(pr.p_id));
        s.insert(corpus.require(pr.q_id));
      }
    }
    reports.assign(s.begin(), s.end());
  }
  const std::uint64_t seed = o.seeds.empty() ? 1 : o.seeds.front();
  const auto a = analyze_clusters(ck.params, corpus, reports, o.k, seed);
  RunManifest man = make_manifest(o, ck.params.config, "cluster");
  man.config["clusters"] = o.k;
  man.seeds = {seed};
  const std::string hash = man.hash();
  std::ostringstream jsonl;
  write_cluster_report(jsonl, a.clusters, hash);
  if (!o.out.empty()) {
    ensure_dir(o.out);
    man.outputs["clusters"] = in_dir(o.out, "clusters.jsonl");
    man.outputs["graph"] = in_dir(o.out, "clusters.dot");
    write_text(man.outputs["clusters"], jsonl.str());
    std::ostringstream dot;
    write_cluster_dot(dot, a.edges, hash);
    write_text(man.outputs["graph"], dot.str());
    write_json(in_dir(o.out, "manifest.json"), man.to_json());
  }
  out << jsonl.str();
  if (a.purity) out << "purity " << *a.purity << '\n';
  return 0;
}

inline int cmd_baseline(const Options& o, std::ostream& out) {
  const HyperConfig cfg = resolve_config(o);
  const Corpus corpus = load_dataset(o);
  const auto pairs = load_or_generate_pairs(o, corpus, cfg);
  LrOptions lo;
  lo.class_weighted = !o.unweighted;
  RunManifest man = make_manifest(o, cfg, "baseline");
  man.config = {{"l2", lo.l2}, {"epochs", lo.epochs}, {"lr", lo.lr}, {"class_weighted", lo.class_weighted},
                {"target_dup_fraction", cfg.target_dup_fraction}};
  nlohmann::json runs = nlohmann::json::array();
  std::vector<Metrics> tests;
  for (auto seed : cfg.seeds) {
    const Splits s = split(pairs, seed);
    lo.seed = seed;
    const auto r = run_baseline(corpus, s.train, s.test, lo);
    tests.push_back(r.test);
    runs.push_back({{"seed", seed}, {"test", r.test}, {"features", 2 * r.featurizer.dim()}});
    out << "seed " << seed << ": test P " << r.test.precision << " R " << r.test.recall << " F1 " << r.test.f1
        << '\n';
  }
  const Metrics mean = mean_metrics(tests);
  nlohmann::json report = {{"runs", runs},
                           {"mean_test", {{"precision", mean.precision}, {"recall", mean.recall}, {"f1", mean.f1}}},
                           {"manifest_hash", man.hash()}};
  if (!o.out.empty()) {
    ensure_dir(o.out);
    man.outputs["report"] = in_dir(o.out, "baseline_report.json");
    report["manifest"] = man.to_json();
    write_json(man.outputs["report"], report);
  }
  out << "mean F1 " << mean.f1 << '\n';
  return 0;
}

inline int cmd_attention(const Options& o, std::ostream& out) {
  Checkpoint ck = load_checkpoint_for(o);
  if (o.p_id.empty() || o.q_id.empty()) throw Error("attention needs --p ID and --q ID");
  Corpus corpus = load_dataset(o);
  encode_corpus(corpus, ck.vocab);
  const auto dump = attention_dump(ck.params, corpus, o.p_id, o.q_id);
  RunManifest man = make_manifest(o, ck.params.config, "attention");
  const auto j = to_json_value(dump, man.hash());
  out << attention_table(dump);
  if (!o.out.empty()) {
    ensure_dir(o.out);
    write_json(in_dir(o.out, "attention.json"), j);
  } else {
    out << j.dump() << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------------------

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Duplicate bug report detection with topic-aware attention", "dupdist"};
  app.require_subcommand(1);
  app.set_version_flag("--version", DUPDIST_VERSION);
  Options o;

  auto add_dataset = [&](CLI::App* c) {
    c->add_option("--dataset", o.dataset, "Bug report file");
    c->add_option("--format", o.format, "bugrepo-csv|jsonl")->check(CLI::IsMember({"bugrepo-csv", "jsonl"}));
  };
  auto add_model_flags = [&](CLI::App* c) {
    c->add_option("--config", o.config_path, "Flat JSON hyperparameter file");
    c->add_option("--lambda", o.lambda, "Weight of the topic loss in [0, 1]");
    c->add_option("--sim-sign", o.sim_sign, "corrected|literal");
    c->add_option("--cond-attn", o.cond_attn, "per_dim|scalar_dot");
  };

  auto* ingest = app.add_subcommand("ingest", "Load and normalize a dataset");
  add_dataset(ingest);
  ingest->add_option("--out", o.out, "Output directory")->required();

  auto* pairs_gen = app.add_subcommand("pairs-gen", "Generate labeled report pairs");
  add_dataset(pairs_gen);
  pairs_gen->add_option("--config", o.config_path, "Flat JSON hyperparameter file");
  pairs_gen->add_option("--dup-fraction", o.dup_fraction, "Target fraction of duplicate pairs");
  pairs_gen->add_option("--seed", o.seeds, "Sampling seed");
  pairs_gen->add_option("--out", o.out, "Output directory")->required();

  auto* synth = app.add_subcommand("synth", "Write a synthetic corpus with known topics");
  synth->add_option("--topics", o.topics, "Number of topics");
  synth->add_option("--reports-per-topic", o.reports_per_topic, "Reports per topic");
  synth->add_option("--dup-rate", o.dup_rate, "Fraction of reports in duplicate groups");
  synth->add_option("--vocab-per-topic", o.vocab_per_topic, "Keywords per topic");
  synth->add_option("--seed", o.seeds, "Generator seed");
  synth->add_option("--out", o.out, "Output directory")->required();

  auto* train_cmd = app.add_subcommand("train", "Train one model per seed");
  add_dataset(train_cmd);
  add_model_flags(train_cmd);
  train_cmd->add_option("--seed", o.seeds, "Seed (repeat for several trials)");
  train_cmd->add_option("--pairs", o.pairs, "Pairs file (generated when absent)");
  train_cmd->add_option("--dup-fraction", o.dup_fraction, "Target fraction of duplicate pairs");
  train_cmd->add_option("--epochs", o.epochs, "Epoch cap");
  train_cmd->add_option("--out", o.out, "Output directory")->required();

  auto* eval = app.add_subcommand("eval", "Precision/recall/F1 of a checkpoint on a pairs file");
  add_dataset(eval);
  add_model_flags(eval);
  eval->add_option("--checkpoint", o.checkpoint, "Model checkpoint")->required();
  eval->add_option("--pairs", o.pairs, "Pairs file")->required();
  eval->add_option("--out", o.out, "Output directory");

  auto* cluster = app.add_subcommand("cluster", "K-means over topic vectors");
  add_dataset(cluster);
  cluster->add_option("--checkpoint", o.checkpoint, "Model checkpoint")->required();
  cluster->add_option("--k", o.k, "Number of clusters")->check(CLI::PositiveNumber);
  cluster->add_option("--pairs", o.pairs, "Restrict to reports in these pairs files (repeatable)");
  cluster->add_flag("--all", o.all_reports, "Cluster every report in the dataset");
  cluster->add_option("--seed", o.seeds, "K-means seed");
  cluster->add_option("--out", o.out, "Output directory");

  auto* baseline = app.add_subcommand("baseline", "Logistic regression on n-gram tf-idf pair features");
  add_dataset(baseline);
  baseline->add_option("--config", o.config_path, "Flat JSON hyperparameter file");
  baseline->add_option("--seed", o.seeds, "Split seed (repeatable)");
  baseline->add_option("--pairs", o.pairs, "Pairs file (generated when absent)");
  baseline->add_option("--dup-fraction", o.dup_fraction, "Target fraction of duplicate pairs");
  baseline->add_flag("--unweighted", o.unweighted, "Disable class weighting");
  baseline->add_option("--out", o.out, "Output directory");

  auto* attention = app.add_subcommand("attention", "Per-word attention weights for a report pair");
  add_dataset(attention);
  attention->add_option("--checkpoint", o.checkpoint, "Model checkpoint")->required();
  attention->add_option("--p", o.p_id, "First report id")->required();
  attention->add_option("--q", o.q_id, "Second report id")->required();
  attention->add_option("--out", o.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << DUPDIST_VERSION << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 2;
  }

  try {
    if (*ingest) return cmd_ingest(o, out);
    if (*pairs_gen) return cmd_pairs_gen(o, out);
    if (*synth) return cmd_synth(o, out);
    if (*train_cmd) return cmd_train(o, out);
    if (*eval) return cmd_eval(o, out);
    if (*cluster) return cmd_cluster(o, out);
    if (*baseline) return cmd_baseline(o, out);
    if (*attention) return cmd_attention(o, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace dupdist::cli
