#pragma once

// Self-attention over words, the report topic vector, and the partially
// supervised topic similarity loss.

#include <cmath>
#include <vector>

#include "config.hpp"
#include "corpus.hpp"
#include "numeric_core.hpp"
#include "random.hpp"

namespace dupdist {

struct TopicAttentionParams {
  Tensor w;  // (2g): scalar score per word
  Tensor b;  // (1): shared bias

  static TopicAttentionParams zeros(std::size_t g) { return {Tensor({2 * g}), Tensor({1})}; }
  static TopicAttentionParams init(std::size_t g, Rng& rng) {
    auto p = zeros(g);
    const double bound = std::sqrt(1.0 / static_cast<double>(2 * g));
    for (double& v : p.w.data()) v = uniform(rng, -bound, bound);
    return p;
  }

  template <class F>
  void for_each(const std::string& prefix, F&& f) {
    f(prefix + ".w", w);
    f(prefix + ".b", b);
  }
};

struct SelfAttention {
  std::vector<double> z;      // tanh scores
  std::vector<double> alpha;  // softmax over positions
};

inline SelfAttention self_attention(const Tensor& hidden, const TopicAttentionParams& p) {
  const std::size_t n = hidden.rows();
  if (n == 0) throw Error("self_attention: empty sequence");
  if (hidden.cols() != p.w.size()) throw Error("self_attention: width mismatch");
  SelfAttention out;
  out.z.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.z[i] = std::tanh(dot(p.w.data(), hidden.row(i)) + p.b[0]);
  out.alpha = softmax_over_positions(out.z);
  return out;
}

// dL/d(alpha) -> parameter grads and dL/dH.
inline void self_attention_backward(const Tensor& hidden, const SelfAttention& att, std::span<const double> d_alpha,
                                    const TopicAttentionParams& p, TopicAttentionParams& grad, Tensor& d_hidden) {
  const auto dz = softmax_backward(att.alpha, d_alpha);
  for (std::size_t i = 0; i < hidden.rows(); ++i) {
    const double ds = dz[i] * tanh_grad_from_output(att.z[i]);
    if (ds == 0.0) continue;
    axpy(ds, hidden.row(i), grad.w.data());
    grad.b[0] += ds;
    axpy(ds, p.w.data(), d_hidden.row(i));
  }
}

inline std::vector<double> topic_vector(std::span<const double> alpha, const Tensor& topic) {
  if (alpha.size() != topic.rows()) throw Error("topic_vector: length mismatch");
  std::vector<double> theta(topic.cols(), 0.0);
  for (std::size_t i = 0; i < alpha.size(); ++i) axpy(alpha[i], topic.row(i), theta);
  return theta;
}

// Coefficient multiplying cosine(thetaP, thetaQ) in the pair's similarity loss.
// Zero for non-duplicates that share a non-stopword token: they carry no topic signal.
inline double similarity_coefficient(int label, bool no_overlap, const ClassWeights& w, SimSign sign) {
  const double s = sign == SimSign::corrected ? 1.0 : -1.0;
  if (label == 1) return -s * w.positive;
  if (no_overlap) return s * w.negative;
  return 0.0;
}

inline double similarity_loss(std::span<const double> theta_p, std::span<const double> theta_q, int label,
                              bool no_overlap, const ClassWeights& w, SimSign sign = SimSign::corrected) {
  if (label != 0 && label != 1) throw Error("similarity_loss: label must be 0 or 1");
  const double coef = similarity_coefficient(label, no_overlap, w, sign);
  if (coef == 0.0) return 0.0;
  return coef * cosine_similarity(theta_p, theta_q);
}

}  // namespace dupdist
