#pragma once

// Logistic regression over 1-3-gram tf-idf pair features.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "corpus.hpp"
#include "log.hpp"
#include "numeric_core.hpp"
#include "trainer.hpp"

namespace dupdist {

// Sorted by index, no duplicate indices.
struct SparseVec {
  std::vector<std::uint32_t> index;
  std::vector<double> value;

  std::size_t nnz() const noexcept { return index.size(); }
  double dot(std::span<const double> dense) const {
    double s = 0.0;
    for (std::size_t i = 0; i < index.size(); ++i) s += value[i] * dense[index[i]];
    return s;
  }
  std::vector<double> to_dense(std::size_t dim) const {
    std::vector<double> out(dim, 0.0);
    for (std::size_t i = 0; i < index.size(); ++i) out[index[i]] = value[i];
    return out;
  }
};

inline std::vector<std::string> ngrams(std::span<const std::string> words, std::size_t max_n = 3) {
  std::vector<std::string> out;
  for (std::size_t n = 1; n <= max_n; ++n) {
    for (std::size_t i = 0; i + n <= words.size(); ++i) {
      std::string g = words[i];
      for (std::size_t j = 1; j < n; ++j) g += ' ' + words[i + j];
      out.push_back(std::move(g));
    }
  }
  return out;
}

// tf = raw count, idf = ln((1 + N) / (1 + df)) + 1, rows L2-normalized.
class NgramFeaturizer {
 public:
  explicit NgramFeaturizer(std::size_t max_n = 3) : max_n_(max_n) {}

  void fit(const std::vector<const std::vector<std::string>*>& docs) {
    if (docs.empty()) throw Error("featurizer: no training documents");
    std::map<std::string, std::size_t> df;
    for (const auto* d : docs) {
      std::unordered_set<std::string> seen;
      for (auto& g : ngrams(*d, max_n_)) {
        if (seen.insert(g).second) ++df[g];
      }
    }
    column_.clear();
    idf_.clear();
    const double n = static_cast<double>(docs.size());
    for (const auto& [g, count] : df) {  // map order: columns sorted lexicographically
      column_.emplace(g, static_cast<std::uint32_t>(idf_.size()));
      idf_.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0);
    }
    fitted_ = true;
  }

  SparseVec transform(std::span<const std::string> words) const {
    if (!fitted_) throw Error("featurizer: transform before fit");
    std::map<std::uint32_t, double> tf;
    for (const auto& g : ngrams(words, max_n_)) {
      auto it = column_.find(g);
      if (it != column_.end()) tf[it->second] += 1.0;  // unseen n-grams are dropped
    }
    SparseVec v;
    double sq = 0.0;
    for (const auto& [col, count] : tf) {
      const double w = count * idf_[col];
      v.index.push_back(col);
      v.value.push_back(w);
      sq += w * w;
    }
    if (sq > 0.0) {
      const double inv = 1.0 / std::sqrt(sq);
      for (double& x : v.value) x *= inv;
    }
    return v;
  }

  std::size_t dim() const noexcept { return idf_.size(); }
  std::span<const double> idf() const noexcept { return idf_; }
  std::optional<std::uint32_t> column(const std::string& g) const {
    auto it = column_.find(g);
    if (it == column_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::size_t max_n_;
  bool fitted_ = false;
  std::unordered_map<std::string, std::uint32_t> column_;
  std::vector<double> idf_;
};

// |u - v| in [0, D), u * v in [D, 2D). Symmetric in (u, v).
inline SparseVec featurize_pair(const SparseVec& u, const SparseVec& v, std::size_t dim) {
  SparseVec diff, prod;
  std::size_t i = 0, j = 0;
  while (i < u.nnz() || j < v.nnz()) {
    const std::uint32_t iu = i < u.nnz() ? u.index[i] : UINT32_MAX;
    const std::uint32_t iv = j < v.nnz() ? v.index[j] : UINT32_MAX;
    if (iu == iv) {
      const double d = std::abs(u.value[i] - v.value[j]);
      if (d != 0.0) {
        diff.index.push_back(iu);
        diff.value.push_back(d);
      }
      prod.index.push_back(static_cast<std::uint32_t>(dim) + iu);
      prod.value.push_back(u.value[i] * v.value[j]);
      ++i;
      ++j;
    } else if (iu < iv) {
      diff.index.push_back(iu);
      diff.value.push_back(std::abs(u.value[i++]));
    } else {
      diff.index.push_back(iv);
      diff.value.push_back(std::abs(v.value[j++]));
    }
  }
  diff.index.insert(diff.index.end(), prod.index.begin(), prod.index.end());
  diff.value.insert(diff.value.end(), prod.value.begin(), prod.value.end());
  return diff;
}

struct LrOptions {
  double l2 = 1e-4;
  std::size_t epochs = 500;
  double lr = 1.0;
  bool class_weighted = true;
  std::uint64_t seed = 1;  // the solver is deterministic; kept for the shared CLI contract
};

struct LrModel {
  std::vector<double> weights;
  double bias = 0.0;
  std::vector<double> loss_history;

  double logit(const SparseVec& x) const { return x.dot(weights) + bias; }
  double prob(const SparseVec& x) const { return sigmoid(logit(x)); }
};

// Full-batch gradient descent on the (optionally class-weighted) mean logistic
// loss plus l2/2 ||w||^2. The bias is not penalized.
inline LrModel train_lr(std::span<const SparseVec> features, std::span<const int> labels, std::size_t dim,
                        const LrOptions& o = {}) {
  if (features.size() != labels.size()) throw Error("train_lr: features/labels length mismatch");
  std::size_t n_pos = 0;
  for (int y : labels) n_pos += y == 1 ? 1 : 0;
  const std::size_t n = labels.size();
  if (n_pos == 0 || n_pos == n) throw Error("train_lr: both classes must be present");
  double w_pos = 1.0, w_neg = 1.0;
  if (o.class_weighted) {
    w_pos = static_cast<double>(n) / (2.0 * static_cast<double>(n_pos));
    w_neg = static_cast<double>(n) / (2.0 * static_cast<double>(n - n_pos));
  }
  LrModel m;
  m.weights.assign(dim, 0.0);
  std::vector<double> grad(dim);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t epoch = 0; epoch < o.epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double g_bias = 0.0;
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = m.logit(features[i]);
      const double p = sigmoid(z);
      const double cw = labels[i] == 1 ? w_pos : w_neg;
      // log(1 + e^-z) and log(1 + e^z) without overflow
      const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
      loss += cw * (labels[i] == 1 ? softplus - z : softplus);
      const double d = cw * (p - labels[i]);
      for (std::size_t k = 0; k < features[i].nnz(); ++k) grad[features[i].index[k]] += d * features[i].value[k];
      g_bias += d;
    }
    loss *= inv_n;
    double reg = 0.0;
    for (double w : m.weights) reg += w * w;
    loss += 0.5 * o.l2 * reg;
    if (!std::isfinite(loss) || (epoch > 0 && loss > 1e3 * std::max(1.0, m.loss_history.front()))) {
      throw Error("train_lr: diverged at epoch " + std::to_string(epoch) + " (loss " + std::to_string(loss) + ")");
    }
    m.loss_history.push_back(loss);
    for (std::size_t k = 0; k < dim; ++k) m.weights[k] -= o.lr * (grad[k] * inv_n + o.l2 * m.weights[k]);
    m.bias -= o.lr * g_bias * inv_n;
  }
  return m;
}

// ---------------------------------------------------------------------------
// End-to-end baseline over a corpus split

struct BaselineResult {
  NgramFeaturizer featurizer;
  LrModel model;
  Metrics test;
};

inline std::vector<SparseVec> featurize_pairs(const NgramFeaturizer& f, const Corpus& corpus,
                                              std::span<const PairExample> pairs) {
  std::unordered_map<std::size_t, SparseVec> cache;
  auto vec_of = [&](std::size_t idx) -> const SparseVec& {
    auto it = cache.find(idx);
    if (it == cache.end()) it = cache.emplace(idx, f.transform(corpus.reports[idx].words)).first;
    return it->second;
  };
  std::vector<SparseVec> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    out.push_back(featurize_pair(vec_of(corpus.require(p.p_id)), vec_of(corpus.require(p.q_id)), f.dim()));
  }
  return out;
}

inline BaselineResult run_baseline(const Corpus& corpus, std::span<const PairExample> train_pairs,
                                   std::span<const PairExample> test_pairs, const LrOptions& o = {}) {
  // vocabulary and idf come from reports that occur in training pairs only
  std::vector<bool> in_train(corpus.reports.size(), false);
  for (const auto& p : train_pairs) {
    in_train[corpus.require(p.p_id)] = true;
    in_train[corpus.require(p.q_id)] = true;
  }
  std::vector<const std::vector<std::string>*> docs;
  for (std::size_t i = 0; i < corpus.reports.size(); ++i) {
    if (in_train[i]) docs.push_back(&corpus.reports[i].words);
  }
  BaselineResult r;
  r.featurizer.fit(docs);
  const auto x_train = featurize_pairs(r.featurizer, corpus, train_pairs);
  std::vector<int> y_train;
  for (const auto& p : train_pairs) y_train.push_back(p.label);
  log::info("baseline: " + std::to_string(r.featurizer.dim()) + " n-gram columns, " +
            std::to_string(x_train.size()) + " training pairs");
  r.model = train_lr(x_train, y_train, 2 * r.featurizer.dim(), o);

  const auto x_test = featurize_pairs(r.featurizer, corpus, test_pairs);
  std::vector<int> gold, pred;
  for (std::size_t i = 0; i < test_pairs.size(); ++i) {
    gold.push_back(test_pairs[i].label);
    pred.push_back(r.model.prob(x_test[i]) >= 0.5 ? 1 : 0);
  }
  r.test = metrics_from_predictions(gold, pred);
  return r;
}

}  // namespace dupdist
