#pragma once

// The full Siamese model: shared encoder, topic branch and duplicate branch,
// with a hand-derived backward pass through every component.

#include <cmath>
#include <string>
#include <vector>

#include "config.hpp"
#include "corpus.hpp"
#include "duplicate_head.hpp"
#include "embeddings.hpp"
#include "encoder.hpp"
#include "numeric_core.hpp"
#include "random.hpp"
#include "topic_head.hpp"

namespace dupdist {

struct ModelParams {
  HyperConfig config;
  EmbeddingTable embedding;
  GruParams forward;
  GruParams backward;
  TopicAttentionParams topic;
  CondAttentionParams cond;
  MlpParams mlp;

  static ModelParams init(const HyperConfig& cfg, std::size_t vocab_size, std::uint64_t seed) {
    cfg.validate();
    ModelParams m;
    m.config = cfg;
    m.embedding = random_embeddings(vocab_size, cfg.d, seed);
    m.embedding.trainable = !cfg.freeze_embeddings;
    Rng rng(derive_seed(seed, {0x696e6974ULL}));
    m.forward = GruParams::init(cfg.d, cfg.g, rng);
    m.backward = GruParams::init(cfg.d, cfg.g, rng);
    m.topic = TopicAttentionParams::init(cfg.g, rng);
    m.cond = CondAttentionParams::init(cfg.g, cfg.a, rng);
    m.mlp = MlpParams::init(cfg.a, cfg.mlp_hidden, rng);
    return m;
  }

  // Visits every trainable tensor with a stable name, in a fixed order.
  template <class F>
  void for_each(F&& f) {
    f(std::string("embedding"), embedding.matrix);
    for_each_dense(f);
  }
  template <class F>
  void for_each_dense(F&& f) {
    forward.for_each("gru_forward", f);
    backward.for_each("gru_backward", f);
    topic.for_each("topic_attention", f);
    cond.for_each("cond_attention", f);
    mlp.for_each("mlp", f);
  }

  std::vector<NamedTensor> named_tensors() {
    std::vector<NamedTensor> out;
    for_each([&](const std::string& name, Tensor& t) { out.push_back({name, &t}); });
    return out;
  }
};

struct ModelGrads {
  EmbeddingGrad embedding;
  GruParams forward;
  GruParams backward;
  TopicAttentionParams topic;
  CondAttentionParams cond;
  MlpParams mlp;

  static ModelGrads zeros(const HyperConfig& cfg) {
    return {{},
            GruParams::zeros(cfg.d, cfg.g),
            GruParams::zeros(cfg.d, cfg.g),
            TopicAttentionParams::zeros(cfg.g),
            CondAttentionParams::zeros(cfg.g, cfg.a),
            MlpParams::zeros(cfg.a, cfg.mlp_hidden)};
  }

  template <class F>
  void for_each_dense(F&& f) {
    forward.for_each("gru_forward", f);
    backward.for_each("gru_backward", f);
    topic.for_each("topic_attention", f);
    cond.for_each("cond_attention", f);
    mlp.for_each("mlp", f);
  }

  void clear() {
    embedding.clear();
    for_each_dense([](const std::string&, Tensor& t) { t.fill(0.0); });
  }

  // Adds other into this; order of calls fixes the floating-point reduction order.
  void merge(ModelGrads& other) {
    embedding.merge(other.embedding);
    std::vector<Tensor*> mine;
    for_each_dense([&](const std::string&, Tensor& t) { mine.push_back(&t); });
    std::size_t i = 0;
    other.for_each_dense([&](const std::string&, Tensor& t) { axpy(1.0, t.data(), mine[i++]->data()); });
  }

  double squared_norm() {
    double s = 0.0;
    for (const auto& [id, row] : embedding.rows) s += dot(row, row);
    for_each_dense([&](const std::string&, Tensor& t) { s += dot(t.data(), t.data()); });
    return s;
  }

  void scale(double factor) {
    for (auto& [id, row] : embedding.rows) {
      for (double& v : row) v *= factor;
    }
    for_each_dense([&](const std::string&, Tensor& t) {
      for (double& v : t.data()) v *= factor;
    });
  }

  // Dense copy keyed like ModelParams::for_each (embedding first).
  std::vector<Tensor> to_dense(std::size_t vocab_size, std::size_t d) {
    std::vector<Tensor> out;
    Tensor emb = Tensor::matrix(vocab_size, d);
    for (const auto& [id, row] : embedding.rows) std::copy(row.begin(), row.end(), emb.row(id).begin());
    out.push_back(std::move(emb));
    for_each_dense([&](const std::string&, Tensor& t) { out.push_back(t); });
    return out;
  }
};

// ---------------------------------------------------------------------------
// Forward state of one report

struct ReportPass {
  std::vector<TokenId> tokens;
  Tensor embedded;
  EncoderCache cache;
  EncodedReport encoded;
  SelfAttention attention;
  std::vector<double> theta;
  std::vector<double> phi;
  std::vector<double> summary;
};

inline ReportPass forward_report(const ModelParams& m, std::span<const TokenId> tokens) {
  const auto& cfg = m.config;
  ReportPass r;
  r.tokens.assign(tokens.begin(), tokens.end());
  r.embedded = lookup(m.embedding, tokens);
  r.encoded = encode(r.embedded, m.forward, m.backward, cfg.k, &r.cache);
  r.attention = self_attention(r.encoded.hidden, m.topic);
  r.theta = topic_vector(r.attention.alpha, r.encoded.topic);
  r.phi = memory_vector(r.attention.alpha, r.encoded.hidden, cfg.memory_normalize);
  r.summary = report_summary(r.encoded.hidden);
  return r;
}

struct PairPass {
  ReportPass p;
  ReportPass q;
  Tensor gamma_p, gamma_q;
  CondAttention att_p, att_q;
  MlpForward mlp;
  int label = 0;
  double cosine = 0.0;
  double sim_coef = 0.0;
  double loss_sim = 0.0;
  double loss_dup = 0.0;
  double loss = 0.0;

  double prob() const noexcept { return mlp.prob; }
};

struct PairInput {
  std::span<const TokenId> p;
  std::span<const TokenId> q;
  int label = 0;
  bool no_content_overlap = false;
};

// dropout_rng == nullptr means inference (no dropout).
inline PairPass forward_pair(const ModelParams& m, const PairInput& in, const ClassWeights& weights,
                             Rng* dropout_rng = nullptr) {
  const auto& cfg = m.config;
  PairPass s;
  s.label = in.label;
  s.p = forward_report(m, in.p);
  s.q = forward_report(m, in.q);
  s.gamma_p = conditional_rep(s.p.encoded.hidden, s.q.summary);
  s.gamma_q = conditional_rep(s.q.encoded.hidden, s.p.summary);
  s.att_p = conditional_attention(s.gamma_p, s.p.phi, m.cond, cfg.cond_attn);
  s.att_q = conditional_attention(s.gamma_q, s.q.phi, m.cond, cfg.cond_attn);
  s.mlp = classify_forward(s.att_p.c, s.att_q.c, m.mlp, cfg.dropout, dropout_rng);
  s.sim_coef = similarity_coefficient(in.label, in.no_content_overlap, weights, cfg.sim_sign);
  if (s.sim_coef != 0.0) {
    s.cosine = cosine_similarity(s.p.theta, s.q.theta);
    s.loss_sim = s.sim_coef * s.cosine;
  }
  s.loss_dup = bce_loss(in.label, s.mlp.prob);
  s.loss = total_loss(s.loss_sim, s.loss_dup, cfg.lambda);
  return s;
}

namespace detail {

// Per-report gradient buffers gathered before the encoder backward pass.
struct ReportGrad {
  Tensor d_hidden;
  std::vector<double> d_alpha;
  std::vector<double> d_summary;
};

inline ReportGrad make_report_grad(const ReportPass& r) {
  return {Tensor::matrix(r.encoded.hidden.rows(), r.encoded.hidden.cols()),
          std::vector<double>(r.encoded.hidden.rows(), 0.0), std::vector<double>(r.encoded.hidden.cols(), 0.0)};
}

// Conditional branch of one side: dc -> grads into own hidden/alpha and the other side's summary.
inline void backward_conditional(const ModelParams& m, const ReportPass& self, const Tensor& gamma,
                                 const CondAttention& att, std::span<const double> dc,
                                 std::span<const double> other_summary, ModelGrads& grads, ReportGrad& self_grad,
                                 ReportGrad& other_grad) {
  const auto& hidden = self.encoded.hidden;
  const std::size_t n = hidden.rows();
  const std::size_t w = hidden.cols();
  Tensor d_gamma = Tensor::matrix(n, w);
  std::vector<double> d_phi(w, 0.0);
  conditional_attention_backward(gamma, self.phi, att, dc, m.cond, m.config.cond_attn, grads.cond, d_gamma, d_phi);
  for (std::size_t i = 0; i < n; ++i) {
    auto dg = d_gamma.row(i);
    auto h = hidden.row(i);
    auto dh = self_grad.d_hidden.row(i);
    for (std::size_t j = 0; j < w; ++j) {
      dh[j] += dg[j] * other_summary[j];
      other_grad.d_summary[j] += dg[j] * h[j];
    }
  }
  // phi = sum_i (alpha_i + plain) h_i
  const double plain = m.config.memory_normalize ? 1.0 / static_cast<double>(n) : 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    self_grad.d_alpha[i] += dot(d_phi, hidden.row(i));
    axpy(self.attention.alpha[i] + plain, d_phi, self_grad.d_hidden.row(i));
  }
}

inline void backward_topic(const ModelParams& m, const ReportPass& r, std::span<const double> d_theta,
                           ReportGrad& rg) {
  const std::size_t k = m.config.k;
  const std::size_t g = m.config.g;
  const auto& topic = r.encoded.topic;
  for (std::size_t i = 0; i < topic.rows(); ++i) {
    rg.d_alpha[i] += dot(d_theta, topic.row(i));
    const double a = r.attention.alpha[i];
    auto dh = rg.d_hidden.row(i);
    for (std::size_t j = 0; j < k; ++j) {
      dh[j] += a * d_theta[j];
      dh[g + j] += a * d_theta[k + j];
    }
  }
}

inline void backward_report(const ModelParams& m, const ReportPass& r, ReportGrad& rg, ModelGrads& grads) {
  const std::size_t n = r.encoded.hidden.rows();
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) axpy(inv, rg.d_summary, rg.d_hidden.row(i));
  self_attention_backward(r.encoded.hidden, r.attention, rg.d_alpha, m.topic, grads.topic, rg.d_hidden);
  const Tensor d_embedded =
      encode_backward(r.embedded, r.cache, rg.d_hidden, m.forward, m.backward, grads.forward, grads.backward);
  if (m.embedding.trainable) lookup_backward(r.tokens, d_embedded, grads.embedding);
}

}  // namespace detail

// Accumulates scale * dLoss/dparams for one pair into grads.
inline void backward_pair(const ModelParams& m, const PairPass& s, double scale, ModelGrads& grads) {
  const auto& cfg = m.config;
  const std::size_t a = cfg.a;
  auto gp = detail::make_report_grad(s.p);
  auto gq = detail::make_report_grad(s.q);

  const double d_logit = scale * (1.0 - cfg.lambda) * bce_grad_logit(s.label, s.mlp.prob);
  if (d_logit != 0.0) {
    const auto d_input = classify_backward(s.mlp, d_logit, m.mlp, grads.mlp);
    std::span<const double> dcp(d_input.data(), a);
    std::span<const double> dcq(d_input.data() + a, a);
    detail::backward_conditional(m, s.p, s.gamma_p, s.att_p, dcp, s.q.summary, grads, gp, gq);
    detail::backward_conditional(m, s.q, s.gamma_q, s.att_q, dcq, s.p.summary, grads, gq, gp);
  }

  const double d_cos = scale * cfg.lambda * s.sim_coef;
  if (d_cos != 0.0) {
    std::vector<double> dtp(s.p.theta.size(), 0.0);
    std::vector<double> dtq(s.q.theta.size(), 0.0);
    cosine_similarity_backward(s.p.theta, s.q.theta, d_cos, dtp, dtq);
    detail::backward_topic(m, s.p, dtp, gp);
    detail::backward_topic(m, s.q, dtq, gq);
  }

  detail::backward_report(m, s.p, gp, grads);
  detail::backward_report(m, s.q, gq, grads);
}

// Inference helpers --------------------------------------------------------

inline double predict(const ModelParams& m, std::span<const TokenId> p, std::span<const TokenId> q) {
  return forward_pair(m, {p, q, 0, false}, ClassWeights{}, nullptr).prob();
}

inline std::vector<double> report_topic_vector(const ModelParams& m, std::span<const TokenId> tokens) {
  const auto& cfg = m.config;
  const Tensor embedded = lookup(m.embedding, tokens);
  const auto enc = encode(embedded, m.forward, m.backward, cfg.k);
  const auto att = self_attention(enc.hidden, m.topic);
  return topic_vector(att.alpha, enc.topic);
}

}  // namespace dupdist
