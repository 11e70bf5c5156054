#pragma once

// Glue used by the command line and the acceptance runs: corpus preparation,
// seeded trials, cluster analysis of topic vectors, attention inspection.

#include <algorithm>
#include <iomanip>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clustering.hpp"
#include "config.hpp"
#include "corpus.hpp"
#include "embeddings.hpp"
#include "model.hpp"
#include "trainer.hpp"

namespace dupdist {

struct PreparedCorpus {
  Corpus corpus;
  Vocabulary vocab;
};

// Builds the vocabulary over every report and stamps token ids.
inline PreparedCorpus prepare_corpus(Corpus corpus, const HyperConfig& cfg) {
  PreparedCorpus out;
  out.vocab = build_vocab(corpus.reports, cfg.min_freq);
  assign_token_ids(corpus, out.vocab);
  out.corpus = std::move(corpus);
  log::info("vocabulary: " + std::to_string(out.vocab.size()) + " ids (including 2 reserved)");
  return out;
}

// Encodes a corpus with an existing vocabulary (checkpoint inference).
inline void encode_corpus(Corpus& corpus, const Vocabulary& vocab) { assign_token_ids(corpus, vocab); }

inline ModelParams initial_params(const HyperConfig& cfg, const Vocabulary& vocab, std::uint64_t seed) {
  ModelParams m = ModelParams::init(cfg, vocab.size(), seed);
  if (!cfg.embeddings_path.empty()) {
    m.embedding = load_pretrained(cfg.embeddings_path, vocab, cfg.d, seed);
    m.embedding.trainable = !cfg.freeze_embeddings;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Cluster analysis

inline Tensor topic_matrix(const ModelParams& m, const Corpus& corpus, std::span<const std::size_t> reports) {
  Tensor out = Tensor::matrix(reports.size(), 2 * m.config.k);
  parallel_for(reports.size(), worker_count(), [&](std::size_t i) {
    const auto v = report_topic_vector(m, corpus.reports[reports[i]].tokens);
    std::copy(v.begin(), v.end(), out.row(i).begin());
  });
  return out;
}

// Report indices referenced by a set of pairs, ascending.
inline std::vector<std::size_t> reports_in_pairs(const Corpus& corpus,
                                                 std::initializer_list<std::span<const PairExample>> sets) {
  std::set<std::size_t> s;
  for (auto set : sets) {
    for (const auto& p : set) {
      s.insert(corpus.require(p.p_id));
      s.insert(corpus.require(p.q_id));
    }
  }
  return {s.begin(), s.end()};
}

struct ClusterAnalysis {
  std::vector<std::size_t> reports;  // corpus indices, aligned with assignment.labels
  ClusterAssignment assignment;
  std::vector<ClusterSummary> clusters;
  std::vector<ClusterFeatureEdge> edges;  // empty when no feature labels exist
  std::optional<double> purity;           // only when every clustered report is labeled
};

inline ClusterAnalysis analyze_clusters(const ModelParams& m, const Corpus& corpus, std::vector<std::size_t> reports,
                                        std::size_t k, std::uint64_t seed, std::size_t top_n = 5,
                                        std::size_t min_support = 10) {
  ClusterAnalysis a;
  a.reports = std::move(reports);
  a.assignment = kmeans(l2_normalize_rows(topic_matrix(m, corpus, a.reports)), k, seed);
  std::vector<std::vector<std::string>> words(k);
  std::vector<std::optional<std::string>> features;
  bool all_labeled = true;
  bool any_labeled = false;
  for (std::size_t i = 0; i < a.reports.size(); ++i) {
    const auto& r = corpus.reports[a.reports[i]];
    auto& w = words[a.assignment.labels[i]];
    w.insert(w.end(), r.words.begin(), r.words.end());
    features.push_back(r.feature_label);
    all_labeled = all_labeled && r.feature_label.has_value();
    any_labeled = any_labeled || r.feature_label.has_value();
  }
  const auto top = top_words_tfidf(words, top_n);
  if (any_labeled) a.edges = cluster_feature_map(a.assignment.labels, features, min_support);
  if (all_labeled) {
    std::vector<std::string> gold;
    for (auto& f : features) gold.push_back(*f);
    a.purity = purity(a.assignment.labels, gold);
  }
  const auto sizes = a.assignment.sizes();
  for (std::size_t c = 0; c < k; ++c) {
    ClusterSummary s{c, sizes[c], top[c], {}};
    for (const auto& e : a.edges) {
      if (e.cluster == c) s.feature_edges.push_back(e);
    }
    a.clusters.push_back(std::move(s));
  }
  return a;
}

inline std::size_t distinct_feature_labels(const Corpus& corpus, std::span<const std::size_t> reports) {
  std::set<std::string> s;
  for (auto i : reports) {
    if (corpus.reports[i].feature_label) s.insert(*corpus.reports[i].feature_label);
  }
  return s.size();
}

// ---------------------------------------------------------------------------
// Trials

struct TrialResult {
  ModelParams params;
  TrainReport report;
  Splits splits;
};

// One seed: fresh split, fresh init, train, test metrics and (when the corpus
// carries feature labels) K-means purity over val+test reports.
inline TrialResult run_trial(const PreparedCorpus& data, std::span<const PairExample> pairs, const HyperConfig& cfg,
                             std::uint64_t seed, const TrainOptions& opts = {}) {
  TrialResult t;
  t.splits = split(pairs, seed);
  auto trained = train(initial_params(cfg, data.vocab, seed), data.corpus, t.splits.train, t.splits.val, seed, opts);
  t.params = std::move(trained.params);
  t.report = std::move(trained.report);
  t.report.test = evaluate(t.params, data.corpus, t.splits.test);
  const auto held_out = reports_in_pairs(data.corpus, {t.splits.val, t.splits.test});
  const std::size_t k = distinct_feature_labels(data.corpus, held_out);
  if (k >= 2 && k <= held_out.size()) {
    bool all = std::all_of(held_out.begin(), held_out.end(),
                           [&](std::size_t i) { return data.corpus.reports[i].feature_label.has_value(); });
    if (all) t.report.purity = analyze_clusters(t.params, data.corpus, held_out, k, seed).purity;
  }
  return t;
}

inline TrialsReport summarize_trials(std::span<const TrialResult> trials) {
  TrialsReport r;
  std::vector<Metrics> tests;
  double purity_sum = 0.0;
  std::size_t purity_n = 0;
  for (const auto& t : trials) {
    r.runs.push_back(t.report);
    if (t.report.test) tests.push_back(*t.report.test);
    if (t.report.purity) {
      purity_sum += *t.report.purity;
      ++purity_n;
    }
  }
  r.mean_test = mean_metrics(tests);
  if (purity_n > 0) r.mean_purity = purity_sum / static_cast<double>(purity_n);
  return r;
}

// ---------------------------------------------------------------------------
// Attention inspection

struct AttentionRow {
  std::string token;
  double alpha = 0.0;
  double beta = 0.0;  // conditional attention averaged over attention dimensions
};

struct AttentionDump {
  std::string p_id, q_id;
  std::vector<AttentionRow> p, q;
  double prob = 0.0;
};

inline AttentionDump attention_dump(const ModelParams& m, const Corpus& corpus, std::string_view p_id,
                                    std::string_view q_id) {
  const auto& rp = corpus.reports[corpus.require(p_id)];
  const auto& rq = corpus.reports[corpus.require(q_id)];
  const auto pass = forward_pair(m, {rp.tokens, rq.tokens, 0, false}, ClassWeights{}, nullptr);
  AttentionDump d;
  d.p_id = rp.id;
  d.q_id = rq.id;
  d.prob = pass.prob();
  auto fill = [](const Report& r, const ReportPass& rp_, const CondAttention& att, std::vector<AttentionRow>& out) {
    const auto beta = att.beta_summary();
    for (std::size_t i = 0; i < r.tokens.size(); ++i) out.push_back({r.words[i], rp_.attention.alpha[i], beta[i]});
  };
  fill(rp, pass.p, pass.att_p, d.p);
  fill(rq, pass.q, pass.att_q, d.q);
  return d;
}

inline nlohmann::json to_json_value(const AttentionDump& d, std::string_view manifest_hash = {}) {
  auto rows = [](const std::vector<AttentionRow>& rs) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& r : rs) a.push_back({{"token", r.token}, {"alpha", r.alpha}, {"beta", r.beta}});
    return a;
  };
  nlohmann::json j = {{"p", {{"id", d.p_id}, {"words", rows(d.p)}}},
                      {"q", {{"id", d.q_id}, {"words", rows(d.q)}}},
                      {"duplicate_probability", d.prob}};
  if (!manifest_hash.empty()) j["manifest_hash"] = manifest_hash;
  return j;
}

inline std::string attention_table(const AttentionDump& d) {
  std::ostringstream s;
  auto block = [&](const std::string& id, const std::vector<AttentionRow>& rows) {
    std::size_t w = 5;
    for (const auto& r : rows) w = std::max(w, r.token.size());
    s << id << '\n';
    s << "  " << std::left << std::setw(static_cast<int>(w)) << "token" << "  " << std::right << std::setw(8) << "alpha"
      << "  " << std::setw(8) << "beta" << '\n';
    for (const auto& r : rows) {
      s << "  " << std::left << std::setw(static_cast<int>(w)) << r.token << "  " << std::right << std::fixed
        << std::setprecision(4) << std::setw(8) << r.alpha << "  " << std::setw(8) << r.beta << '\n';
    }
  };
  block(d.p_id, d.p);
  block(d.q_id, d.q);
  s << "duplicate probability " << std::fixed << std::setprecision(4) << d.prob << '\n';
  return s.str();
}

}  // namespace dupdist
