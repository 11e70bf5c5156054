#pragma once

// K-means over report topic vectors, cluster to product-feature mapping,
// per-cluster tf-idf top words, and purity.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "numeric_core.hpp"
#include "random.hpp"
#include "stopwords.hpp"

namespace dupdist {

struct ClusterAssignment {
  std::vector<std::size_t> labels;        // point -> cluster in [0, K)
  Tensor centroids;                       // (K, D)
  std::vector<double> objective_history;  // within-cluster SSE after every assignment step
  std::size_t iterations = 0;

  std::size_t num_clusters() const noexcept { return centroids.rows(); }
  std::vector<std::size_t> sizes() const {
    std::vector<std::size_t> s(num_clusters(), 0);
    for (auto l : labels) ++s[l];
    return s;
  }
};

struct KMeansOptions {
  std::size_t max_iter = 300;
  double tol = 1e-6;
  std::size_t n_init = 10;  // independent k-means++ restarts; lowest final objective wins
};

namespace detail {

inline double squared_distance(std::span<const double> a, std::span<const double> b) noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// Nearest centroid per point (ties to the lowest index); returns the SSE.
inline double assign_points(const Tensor& points, const Tensor& centroids, std::vector<std::size_t>& labels,
                            std::vector<double>& dist) {
  const std::size_t n = points.rows();
  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t c = 0; c < centroids.rows(); ++c) {
      const double d = squared_distance(points.row(i), centroids.row(c));
      if (d < best) {
        best = d;
        arg = c;
      }
    }
    labels[i] = arg;
    dist[i] = best;
    sse += best;
  }
  return sse;
}

inline Tensor kmeans_plus_plus(const Tensor& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.rows();
  Tensor centroids = Tensor::matrix(k, points.cols());
  std::size_t first = uniform_index(rng, n);
  std::copy(points.row(first).begin(), points.row(first).end(), centroids.row(0).begin());
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points.row(i), centroids.row(0));
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = 0;
    if (total <= 0.0) {
      pick = uniform_index(rng, n);
    } else {
      double target = uniform01(rng) * total;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        target -= d2[i];
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
    }
    std::copy(points.row(pick).begin(), points.row(pick).end(), centroids.row(c).begin());
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(points.row(i), centroids.row(c)));
  }
  return centroids;
}

inline ClusterAssignment lloyd(const Tensor& points, std::size_t k, Rng& rng, const KMeansOptions& opts) {
  const std::size_t n = points.rows();
  ClusterAssignment out;
  out.centroids = kmeans_plus_plus(points, k, rng);
  out.labels.assign(n, 0);
  std::vector<double> dist(n);
  const std::size_t dim = points.cols();

  for (std::size_t iter = 0; iter < opts.max_iter; ++iter) {
    out.objective_history.push_back(assign_points(points, out.centroids, out.labels, dist));
    ++out.iterations;

    Tensor next = Tensor::matrix(k, dim);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      axpy(1.0, points.row(i), next.row(out.labels[i]));
      ++counts[out.labels[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (double& v : next.row(c)) v /= static_cast<double>(counts[c]);
    }
    // Empty clusters take the point currently farthest from its centroid.
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      const auto far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
      std::copy(points.row(far).begin(), points.row(far).end(), next.row(c).begin());
      --counts[out.labels[far]];
      out.labels[far] = c;
      counts[c] = 1;
      dist[far] = 0.0;
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      shift = std::max(shift, std::sqrt(squared_distance(next.row(c), out.centroids.row(c))));
    }
    out.centroids = std::move(next);
    if (shift < opts.tol) break;
  }
  out.objective_history.push_back(assign_points(points, out.centroids, out.labels, dist));
  return out;
}

}  // namespace detail

inline ClusterAssignment kmeans(const Tensor& points, std::size_t k, std::uint64_t seed, KMeansOptions opts = {}) {
  const std::size_t n = points.rows();
  if (k == 0) throw Error("kmeans: K must be >= 1");
  if (n < k) throw Error("kmeans: fewer points (" + std::to_string(n) + ") than clusters (" + std::to_string(k) + ")");
  ClusterAssignment best;
  for (std::size_t run = 0; run < std::max<std::size_t>(1, opts.n_init); ++run) {
    Rng rng(derive_seed(seed, {0x6b6d65616e73ULL, run}));
    auto r = detail::lloyd(points, k, rng, opts);
    if (run == 0 || r.objective_history.back() < best.objective_history.back()) best = std::move(r);
  }
  return best;
}

// Rows scaled to unit L2 norm (zero rows stay zero): K-means in the same
// cosine geometry the topic loss trains.
inline Tensor l2_normalize_rows(Tensor t) {
  for (std::size_t r = 0; r < t.rows(); ++r) {
    auto row = t.row(r);
    const double n = norm(row);
    if (n > 0.0) {
      for (double& v : row) v /= n;
    }
  }
  return t;
}

// ---------------------------------------------------------------------------

struct ClusterFeatureEdge {
  std::size_t cluster = 0;
  std::string feature;
  std::size_t support = 0;

  friend bool operator==(const ClusterFeatureEdge&, const ClusterFeatureEdge&) = default;
};

// Edges for every (cluster, feature) observed strictly more than min_support times.
inline std::vector<ClusterFeatureEdge> cluster_feature_map(std::span<const std::size_t> labels,
                                                           std::span<const std::optional<std::string>> features,
                                                           std::size_t min_support = 10) {
  if (labels.size() != features.size()) throw Error("cluster_feature_map: length mismatch");
  std::map<std::pair<std::size_t, std::string>, std::size_t> counts;
  bool any = false;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!features[i]) continue;
    any = true;
    ++counts[{labels[i], *features[i]}];
  }
  if (!any) throw Error("cluster_feature_map: no feature labels available");
  std::vector<ClusterFeatureEdge> edges;
  for (const auto& [key, n] : counts) {
    if (n > min_support) edges.push_back({key.first, key.second, n});
  }
  return edges;
}

inline double purity(std::span<const std::size_t> labels, std::span<const std::string> gold) {
  if (labels.size() != gold.size()) throw Error("purity: length mismatch");
  if (labels.empty()) return 0.0;
  std::map<std::size_t, std::unordered_map<std::string, std::size_t>> table;
  for (std::size_t i = 0; i < labels.size(); ++i) ++table[labels[i]][gold[i]];
  std::size_t hits = 0;
  for (const auto& [c, row] : table) {
    std::size_t best = 0;
    for (const auto& [f, n] : row) best = std::max(best, n);
    hits += best;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

// Each cluster's words form one document; idf = ln((1 + K) / (1 + df)) + 1
// over the K cluster documents. Stopwords never rank.
inline std::vector<std::vector<std::string>> top_words_tfidf(std::span<const std::vector<std::string>> cluster_words,
                                                             std::size_t n = 5) {
  const double k = static_cast<double>(cluster_words.size());
  std::vector<std::unordered_map<std::string, std::size_t>> tf(cluster_words.size());
  std::unordered_map<std::string, std::size_t> df;
  for (std::size_t c = 0; c < cluster_words.size(); ++c) {
    for (const auto& w : cluster_words[c]) {
      if (is_stopword(w)) continue;
      if (tf[c][w]++ == 0) ++df[w];
    }
  }
  std::vector<std::vector<std::string>> out(cluster_words.size());
  for (std::size_t c = 0; c < cluster_words.size(); ++c) {
    std::vector<std::pair<double, std::string>> scored;
    for (const auto& [w, count] : tf[c]) {
      const double idf = std::log((1.0 + k) / (1.0 + static_cast<double>(df[w]))) + 1.0;
      scored.emplace_back(static_cast<double>(count) * idf, w);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (std::size_t i = 0; i < std::min(n, scored.size()); ++i) out[c].push_back(scored[i].second);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cluster report output

struct ClusterSummary {
  std::size_t cluster_id = 0;
  std::size_t size = 0;
  std::vector<std::string> top_words;
  std::vector<ClusterFeatureEdge> feature_edges;
};

inline void write_cluster_report(std::ostream& out, std::span<const ClusterSummary> clusters,
                                 std::string_view manifest_hash = {}) {
  for (const auto& c : clusters) {
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& e : c.feature_edges) edges.push_back({{"feature", e.feature}, {"support", e.support}});
    nlohmann::json j = {{"cluster_id", c.cluster_id}, {"size", c.size}, {"top_words", c.top_words},
                        {"feature_edges", edges}};
    if (!manifest_hash.empty()) j["manifest_hash"] = manifest_hash;
    out << j.dump() << '\n';
  }
}

// Bipartite cluster -> feature graph; edge width proportional to support.
inline void write_cluster_dot(std::ostream& out, std::span<const ClusterFeatureEdge> edges,
                              std::string_view manifest_hash = {}) {
  std::size_t max_support = 1;
  for (const auto& e : edges) max_support = std::max(max_support, e.support);
  out << "graph clusters {\n";
  if (!manifest_hash.empty()) out << "  // manifest " << manifest_hash << "\n";
  out << "  rankdir=LR;\n";
  for (const auto& e : edges) {
    const double width = 1.0 + 7.0 * static_cast<double>(e.support) / static_cast<double>(max_support);
    out << "  \"c_" << e.cluster << "\" -- \"" << e.feature << "\" [penwidth=" << width << ", label=" << e.support
        << "];\n";
  }
  out << "}\n";
}

}  // namespace dupdist
