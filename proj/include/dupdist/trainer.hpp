#pragma once

// Adam, the epoch loop with early stopping on validation F1, multi-seed
// trials and positive-class P/R/F1.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "config.hpp"
#include "corpus.hpp"
#include "log.hpp"
#include "model.hpp"
#include "numeric_core.hpp"
#include "random.hpp"

namespace dupdist {

// ---------------------------------------------------------------------------
// Adam

struct AdamOptions {
  double lr = 0.003;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

// One bias-corrected step at time t (1-based) over matching lists of tensors.
// A null grad entry means "frozen": the tensor is skipped.
inline void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, AdamState& state,
                      std::uint64_t t, const AdamOptions& o) {
  if (t == 0) throw Error("adam_step: t must be >= 1");
  if (params.size() != grads.size()) throw Error("adam_step: params/grads count mismatch");
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i]->size(), 0.0);
      state.v[i].assign(params[i]->size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw Error("adam_step: state does not match params");
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i] == nullptr) continue;
    auto p = params[i]->data();
    const auto g = grads[i]->data();
    if (g.size() != p.size() || state.m[i].size() != p.size() || params[i]->shape() != grads[i]->shape()) {
      throw Error("adam_step: shape mismatch at tensor " + std::to_string(i));
    }
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = o.beta1 * m[j] + (1.0 - o.beta1) * g[j];
      v[j] = o.beta2 * v[j] + (1.0 - o.beta2) * g[j] * g[j];
      const double mh = m[j] / c1;
      const double vh = v[j] / c2;
      p[j] -= o.lr * mh / (std::sqrt(vh) + o.eps);
    }
  }
}

// Adam over the whole model. Embedding gradients arrive sparse; rows without
// a gradient still move while their moments decay, like dense Adam.
class ModelOptimizer {
 public:
  explicit ModelOptimizer(AdamOptions o) : opts_(o) {}

  void step(ModelParams& m, ModelGrads& g) {
    ++t_;
    std::vector<Tensor*> params;
    std::vector<const Tensor*> grads;
    if (m.embedding.trainable) {
      dense_emb_ = Tensor::matrix(m.embedding.vocab_size(), m.embedding.dim());
      for (const auto& [id, row] : g.embedding.rows) std::copy(row.begin(), row.end(), dense_emb_.row(id).begin());
      params.push_back(&m.embedding.matrix);
      grads.push_back(&dense_emb_);
    } else {
      params.push_back(&m.embedding.matrix);
      grads.push_back(nullptr);
    }
    m.for_each_dense([&](const std::string&, Tensor& t) { params.push_back(&t); });
    g.for_each_dense([&](const std::string&, Tensor& t) { grads.push_back(&t); });
    adam_step(params, grads, state_, t_, opts_);
    // padding row never carries gradient, but keep it exactly zero regardless
    auto pad = m.embedding.matrix.row(kPadId);
    std::fill(pad.begin(), pad.end(), 0.0);
  }

  std::uint64_t steps() const noexcept { return t_; }

 private:
  AdamOptions opts_;
  AdamState state_;
  std::uint64_t t_ = 0;
  Tensor dense_emb_;
};

// ---------------------------------------------------------------------------
// Metrics

struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

inline Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn = 0) {
  if (tp + fn == 0) throw Error("evaluate: no positive gold pairs (metric undefined)");
  Metrics m;
  m.tp = tp;
  m.fp = fp;
  m.fn = fn;
  m.tn = tn;
  m.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  m.f1 = m.precision + m.recall == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

inline Metrics metrics_from_predictions(std::span<const int> gold, std::span<const int> predicted) {
  if (gold.size() != predicted.size()) throw Error("metrics: length mismatch");
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (predicted[i] == 1) (gold[i] == 1 ? tp : fp)++;
    else (gold[i] == 1 ? fn : tn)++;
  }
  return metrics_from_counts(tp, fp, fn, tn);
}

inline void to_json(nlohmann::json& j, const Metrics& m) {
  j = {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1},
       {"tp", m.tp},               {"fp", m.fp},         {"fn", m.fn}, {"tn", m.tn}};
}

// ---------------------------------------------------------------------------
// Worker pool helpers

inline std::size_t worker_count() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("DUPDIST_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) n = std::min(n, static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      log::warn("ignoring malformed DUPDIST_THREADS");
    }
  }
  return n;
}

// Runs f(i) for i in [0, n) on up to `workers` threads. Results must be
// written to per-index slots so the caller controls reduction order.
template <class F>
void parallel_for(std::size_t n, std::size_t workers, F&& f) {
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) f(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// ---------------------------------------------------------------------------
// Pair resolution

struct ResolvedPair {
  std::size_t p = 0;
  std::size_t q = 0;
  int label = 0;
  bool no_content_overlap = false;
};

inline std::vector<ResolvedPair> resolve_pairs(const Corpus& corpus, std::span<const PairExample> pairs) {
  std::vector<ResolvedPair> out;
  out.reserve(pairs.size());
  for (const auto& e : pairs) {
    const std::size_t p = corpus.require(e.p_id);
    const std::size_t q = corpus.require(e.q_id);
    if (corpus.reports[p].tokens.empty() || corpus.reports[q].tokens.empty()) {
      throw Error("pair " + e.p_id + "/" + e.q_id + " refers to a report without token ids");
    }
    out.push_back({p, q, e.label, e.no_content_overlap});
  }
  return out;
}

inline PairInput pair_input(const Corpus& corpus, const ResolvedPair& r) {
  return {corpus.reports[r.p].tokens, corpus.reports[r.q].tokens, r.label, r.no_content_overlap};
}

inline std::vector<double> predict_pairs(const ModelParams& m, const Corpus& corpus,
                                         std::span<const PairExample> pairs) {
  const auto resolved = resolve_pairs(corpus, pairs);
  std::vector<double> probs(resolved.size());
  parallel_for(resolved.size(), worker_count(), [&](std::size_t i) {
    const auto in = pair_input(corpus, resolved[i]);
    probs[i] = predict(m, in.p, in.q);
  });
  return probs;
}

// Threshold 0.5 on the predicted duplicate probability.
inline Metrics evaluate(const ModelParams& m, const Corpus& corpus, std::span<const PairExample> pairs) {
  const auto probs = predict_pairs(m, corpus, pairs);
  std::vector<int> gold(pairs.size());
  std::vector<int> pred(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    gold[i] = pairs[i].label;
    pred[i] = probs[i] >= 0.5 ? 1 : 0;
  }
  return metrics_from_predictions(gold, pred);
}

// ---------------------------------------------------------------------------
// Training

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  std::size_t batches = 0;
  double train_loss = 0.0;
  double train_sim = 0.0;
  double train_dup = 0.0;
  double val_loss = 0.0;
  Metrics val;
};

struct TrainReport {
  std::uint64_t seed = 0;
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;
  Metrics best_val;
  std::optional<Metrics> test;
  std::optional<double> purity;
  bool diverged = false;
  std::string error;
};

inline void to_json(nlohmann::json& j, const EpochStats& e) {
  j = {{"epoch", e.epoch},         {"batches", e.batches},   {"train_loss", e.train_loss},
       {"train_sim", e.train_sim}, {"train_dup", e.train_dup}, {"val_loss", e.val_loss},
       {"val", e.val}};
}

inline void to_json(nlohmann::json& j, const TrainReport& r) {
  j = {{"seed", r.seed}, {"epochs", r.epochs}, {"best_epoch", r.best_epoch}, {"best_val", r.best_val},
       {"diverged", r.diverged}};
  if (r.test) j["test"] = *r.test;
  if (r.purity) j["purity"] = *r.purity;
  if (!r.error.empty()) j["error"] = r.error;
}

struct TrainResult {
  ModelParams params;
  TrainReport report;
};

struct TrainOptions {
  std::size_t chunk = 16;  // pairs per gradient buffer; fixes the reduction tree
  std::function<void(const EpochStats&, const ModelParams&)> on_epoch;
};

namespace detail {

inline double mean_loss(const ModelParams& m, const Corpus& corpus, std::span<const ResolvedPair> pairs,
                        const ClassWeights& w) {
  std::vector<double> losses(pairs.size());
  parallel_for(pairs.size(), worker_count(),
               [&](std::size_t i) { losses[i] = forward_pair(m, pair_input(corpus, pairs[i]), w, nullptr).loss; });
  double total = 0.0;
  for (double l : losses) total += l;
  return pairs.empty() ? 0.0 : total / static_cast<double>(pairs.size());
}

inline Metrics evaluate_resolved(const ModelParams& m, const Corpus& corpus, std::span<const ResolvedPair> pairs) {
  std::vector<int> gold(pairs.size()), pred(pairs.size());
  parallel_for(pairs.size(), worker_count(), [&](std::size_t i) {
    const auto in = pair_input(corpus, pairs[i]);
    gold[i] = pairs[i].label;
    pred[i] = predict(m, in.p, in.q) >= 0.5 ? 1 : 0;
  });
  return metrics_from_predictions(gold, pred);
}

}  // namespace detail

// Trains `initial` in place of a copy and returns the best-validation
// checkpoint. Corpus reports must already carry token ids.
inline TrainResult train(ModelParams initial, const Corpus& corpus, std::span<const PairExample> train_pairs,
                         std::span<const PairExample> val_pairs, std::uint64_t seed, const TrainOptions& opts = {}) {
  const HyperConfig& cfg = initial.config;
  cfg.validate();
  if (train_pairs.empty() || val_pairs.empty()) throw Error("train: empty train or validation split");
  const ClassWeights weights = class_weights(train_pairs);  // throws unless both classes present
  const auto train_set = resolve_pairs(corpus, train_pairs);
  const auto val_set = resolve_pairs(corpus, val_pairs);
  if (std::none_of(val_set.begin(), val_set.end(), [](const auto& r) { return r.label == 1; })) {
    throw Error("train: validation split has no duplicate pairs");
  }

  ModelParams params = std::move(initial);
  ModelOptimizer optimizer(AdamOptions{cfg.lr, 0.9, 0.999, 1e-8});
  TrainResult result{params, {}};
  result.report.seed = seed;
  double best_f1 = -1.0;
  std::size_t since_best = 0;
  const std::size_t workers = worker_count();
  const std::size_t chunk = std::max<std::size_t>(1, opts.chunk);
  std::vector<ModelGrads> buffers;
  std::vector<double> pair_loss, pair_sim, pair_dup;

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffler(derive_seed(seed, {0x65706f6368ULL, epoch}));
    shuffle(order, shuffler);
    EpochStats stats;
    stats.epoch = epoch;
    double loss_sum = 0.0, sim_sum = 0.0, dup_sum = 0.0;
    bool diverged = false;

    for (std::size_t start = 0, batch_no = 0; start < order.size(); start += cfg.batch, ++batch_no) {
      const std::size_t end = std::min(order.size(), start + cfg.batch);
      const std::size_t n = end - start;
      const std::size_t n_chunks = (n + chunk - 1) / chunk;
      while (buffers.size() < n_chunks) buffers.push_back(ModelGrads::zeros(cfg));
      pair_loss.assign(n, 0.0);
      pair_sim.assign(n, 0.0);
      pair_dup.assign(n, 0.0);
      const double scale = 1.0 / static_cast<double>(n);

      parallel_for(n_chunks, workers, [&](std::size_t c) {
        ModelGrads& g = buffers[c];
        g.clear();
        for (std::size_t i = c * chunk; i < std::min(n, (c + 1) * chunk); ++i) {
          Rng drop(derive_seed(seed, {0x64726f70ULL, epoch, batch_no, i}));
          const auto pass = forward_pair(params, pair_input(corpus, train_set[order[start + i]]), weights, &drop);
          pair_loss[i] = pass.loss;
          pair_sim[i] = pass.loss_sim;
          pair_dup[i] = pass.loss_dup;
          backward_pair(params, pass, scale, g);
        }
      });
      for (std::size_t c = 1; c < n_chunks; ++c) buffers[0].merge(buffers[c]);
      ModelGrads& total = buffers[0];

      double batch_loss = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        batch_loss += pair_loss[i];
        sim_sum += pair_sim[i];
        dup_sum += pair_dup[i];
      }
      loss_sum += batch_loss;
      const double sq = total.squared_norm();
      if (!std::isfinite(batch_loss) || !std::isfinite(sq)) {
        diverged = true;
        break;
      }
      if (cfg.grad_clip > 0.0) {
        const double norm = std::sqrt(sq);
        if (norm > cfg.grad_clip) total.scale(cfg.grad_clip / norm);
      }
      optimizer.step(params, total);
      ++stats.batches;
    }

    if (diverged) {
      result.report.diverged = true;
      result.report.error = "training diverged (non-finite loss or gradient) in epoch " + std::to_string(epoch) +
                            "; returning last finite checkpoint from epoch " +
                            std::to_string(result.report.best_epoch);
      log::error(result.report.error);
      break;
    }

    const double n_train = static_cast<double>(train_set.size());
    stats.train_loss = loss_sum / n_train;
    stats.train_sim = sim_sum / n_train;
    stats.train_dup = dup_sum / n_train;
    stats.val_loss = detail::mean_loss(params, corpus, val_set, weights);
    stats.val = detail::evaluate_resolved(params, corpus, val_set);
    result.report.epochs.push_back(stats);
    log::info("seed " + std::to_string(seed) + " epoch " + std::to_string(epoch) +
              ": train_loss=" + std::to_string(stats.train_loss) + " val_loss=" + std::to_string(stats.val_loss) +
              " val_f1=" + std::to_string(stats.val.f1));
    if (opts.on_epoch) opts.on_epoch(stats, params);

    if (stats.val.f1 > best_f1) {
      best_f1 = stats.val.f1;
      since_best = 0;
      result.params = params;
      result.report.best_epoch = epoch;
      result.report.best_val = stats.val;
    } else if (++since_best >= cfg.patience) {
      log::info("early stop after epoch " + std::to_string(epoch));
      break;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Multi-seed trials

struct TrialsReport {
  std::vector<TrainReport> runs;
  Metrics mean_test;  // counts are summed; P/R/F1 are means over seeds
  std::optional<double> mean_purity;
};

inline void to_json(nlohmann::json& j, const TrialsReport& r) {
  j = {{"runs", r.runs},
       {"mean_test",
        {{"precision", r.mean_test.precision}, {"recall", r.mean_test.recall}, {"f1", r.mean_test.f1}}}};
  if (r.mean_purity) j["mean_purity"] = *r.mean_purity;
}

inline Metrics mean_metrics(std::span<const Metrics> ms) {
  Metrics out;
  if (ms.empty()) return out;
  for (const auto& m : ms) {
    out.precision += m.precision;
    out.recall += m.recall;
    out.f1 += m.f1;
    out.tp += m.tp;
    out.fp += m.fp;
    out.fn += m.fn;
    out.tn += m.tn;
  }
  const double n = static_cast<double>(ms.size());
  out.precision /= n;
  out.recall /= n;
  out.f1 /= n;
  return out;
}

}  // namespace dupdist
