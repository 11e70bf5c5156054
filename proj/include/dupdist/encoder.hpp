#pragma once

// Bidirectional GRU encoder and the topic slice of its hidden states.
//
// Gate equations (reset applied inside the candidate's recurrent term):
//   z = sigmoid(Wz x + Uz h + bz)
//   r = sigmoid(Wr x + Ur h + br)
//   c = tanh(Wh x + Uh (r * h) + bh)
//   h' = (1 - z) * h + z * c

#include <cmath>
#include <vector>

#include "numeric_core.hpp"
#include "random.hpp"

namespace dupdist {

struct GruParams {
  Tensor w_z, w_r, w_h;  // (g, d)
  Tensor u_z, u_r, u_h;  // (g, g)
  Tensor b_z, b_r, b_h;  // (g)

  static GruParams zeros(std::size_t d, std::size_t g) {
    GruParams p;
    for (Tensor* w : {&p.w_z, &p.w_r, &p.w_h}) *w = Tensor::matrix(g, d);
    for (Tensor* u : {&p.u_z, &p.u_r, &p.u_h}) *u = Tensor::matrix(g, g);
    for (Tensor* b : {&p.b_z, &p.b_r, &p.b_h}) *b = Tensor({g});
    return p;
  }

  // Input maps uniform +-sqrt(1/d), recurrent maps +-sqrt(1/g), zero biases.
  static GruParams init(std::size_t d, std::size_t g, Rng& rng) {
    GruParams p = zeros(d, g);
    const double in_bound = std::sqrt(1.0 / static_cast<double>(d));
    const double rec_bound = std::sqrt(1.0 / static_cast<double>(g));
    for (Tensor* w : {&p.w_z, &p.w_r, &p.w_h}) {
      for (double& v : w->data()) v = uniform(rng, -in_bound, in_bound);
    }
    for (Tensor* u : {&p.u_z, &p.u_r, &p.u_h}) {
      for (double& v : u->data()) v = uniform(rng, -rec_bound, rec_bound);
    }
    return p;
  }

  std::size_t input_dim() const noexcept { return w_z.cols(); }
  std::size_t state_dim() const noexcept { return w_z.rows(); }

  template <class F>
  void for_each(const std::string& prefix, F&& f) {
    f(prefix + ".w_z", w_z);
    f(prefix + ".w_r", w_r);
    f(prefix + ".w_h", w_h);
    f(prefix + ".u_z", u_z);
    f(prefix + ".u_r", u_r);
    f(prefix + ".u_h", u_h);
    f(prefix + ".b_z", b_z);
    f(prefix + ".b_r", b_r);
    f(prefix + ".b_h", b_h);
  }
};

struct GruStep {
  std::vector<double> h_prev, z, r, cand, h;
};

inline GruStep gru_cell_forward(std::span<const double> x, std::span<const double> h_prev, const GruParams& p) {
  const std::size_t g = p.state_dim();
  if (x.size() != p.input_dim() || h_prev.size() != g) throw Error("gru_cell: shape mismatch");
  GruStep s;
  s.h_prev.assign(h_prev.begin(), h_prev.end());
  s.z.resize(g);
  s.r.resize(g);
  s.cand.resize(g);
  s.h.resize(g);
  matvec(p.w_z, x, s.z);
  matvec(p.u_z, h_prev, s.z, true);
  matvec(p.w_r, x, s.r);
  matvec(p.u_r, h_prev, s.r, true);
  for (std::size_t j = 0; j < g; ++j) {
    s.z[j] = sigmoid(s.z[j] + p.b_z[j]);
    s.r[j] = sigmoid(s.r[j] + p.b_r[j]);
  }
  std::vector<double> rh(g);
  for (std::size_t j = 0; j < g; ++j) rh[j] = s.r[j] * h_prev[j];
  matvec(p.w_h, x, s.cand);
  matvec(p.u_h, rh, s.cand, true);
  for (std::size_t j = 0; j < g; ++j) {
    s.cand[j] = std::tanh(s.cand[j] + p.b_h[j]);
    s.h[j] = (1.0 - s.z[j]) * h_prev[j] + s.z[j] * s.cand[j];
  }
  return s;
}

inline std::vector<double> gru_cell(std::span<const double> x, std::span<const double> h_prev, const GruParams& p) {
  return gru_cell_forward(x, h_prev, p).h;
}

// Given dL/dh for one step, accumulates parameter grads, adds dL/dx into dx and
// returns dL/dh_prev.
inline std::vector<double> gru_cell_backward(std::span<const double> x, const GruStep& s,
                                             std::span<const double> dh, const GruParams& p, GruParams& grad,
                                             std::span<double> dx) {
  const std::size_t g = p.state_dim();
  std::vector<double> dh_prev(g), da_z(g), da_r(g), da_c(g), rh(g), d_rh(g, 0.0);
  for (std::size_t j = 0; j < g; ++j) {
    const double dcand = dh[j] * s.z[j];
    const double dz = dh[j] * (s.cand[j] - s.h_prev[j]);
    dh_prev[j] = dh[j] * (1.0 - s.z[j]);
    da_c[j] = dcand * tanh_grad_from_output(s.cand[j]);
    da_z[j] = dz * sigmoid_grad_from_output(s.z[j]);
    rh[j] = s.r[j] * s.h_prev[j];
  }
  outer_acc(da_c, x, grad.w_h);
  outer_acc(da_c, rh, grad.u_h);
  axpy(1.0, da_c, grad.b_h.data());
  matvec_transpose_acc(p.w_h, da_c, dx);
  matvec_transpose_acc(p.u_h, da_c, d_rh);
  for (std::size_t j = 0; j < g; ++j) {
    const double dr = d_rh[j] * s.h_prev[j];
    dh_prev[j] += d_rh[j] * s.r[j];
    da_r[j] = dr * sigmoid_grad_from_output(s.r[j]);
  }
  outer_acc(da_r, x, grad.w_r);
  outer_acc(da_r, s.h_prev, grad.u_r);
  axpy(1.0, da_r, grad.b_r.data());
  matvec_transpose_acc(p.w_r, da_r, dx);
  matvec_transpose_acc(p.u_r, da_r, dh_prev);

  outer_acc(da_z, x, grad.w_z);
  outer_acc(da_z, s.h_prev, grad.u_z);
  axpy(1.0, da_z, grad.b_z.data());
  matvec_transpose_acc(p.w_z, da_z, dx);
  matvec_transpose_acc(p.u_z, da_z, dh_prev);
  return dh_prev;
}

struct EncodedReport {
  Tensor hidden;  // (n, 2g): forward state ++ backward state per word
  Tensor topic;   // (n, 2k): first k forward dims ++ first k backward dims
};

struct EncoderCache {
  std::vector<GruStep> forward;   // forward[i] consumed word i
  std::vector<GruStep> backward;  // backward[i] consumed word i (running right to left)
};

inline Tensor topic_slice(const Tensor& hidden, std::size_t g, std::size_t k) {
  const std::size_t n = hidden.rows();
  Tensor topic = Tensor::matrix(n, 2 * k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      topic.at(i, j) = hidden.at(i, j);
      topic.at(i, k + j) = hidden.at(i, g + j);
    }
  }
  return topic;
}

inline EncodedReport encode(const Tensor& embedded, const GruParams& fwd, const GruParams& bwd, std::size_t k,
                            EncoderCache* cache = nullptr) {
  const std::size_t n = embedded.rows();
  if (n == 0 || embedded.empty()) throw Error("encode: empty sequence");
  const std::size_t g = fwd.state_dim();
  if (k == 0 || k > g) throw Error("encode: topic width k must satisfy 0 < k <= g");
  if (bwd.state_dim() != g) throw Error("encode: direction state widths differ");
  EncodedReport out{Tensor::matrix(n, 2 * g), {}};
  EncoderCache local;
  EncoderCache& c = cache ? *cache : local;
  c.forward.clear();
  c.backward.assign(n, {});
  std::vector<double> h(g, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    c.forward.push_back(gru_cell_forward(embedded.row(i), h, fwd));
    h = c.forward.back().h;
    std::copy(h.begin(), h.end(), out.hidden.row(i).begin());
  }
  std::fill(h.begin(), h.end(), 0.0);
  for (std::size_t step = 0; step < n; ++step) {
    const std::size_t i = n - 1 - step;
    c.backward[i] = gru_cell_forward(embedded.row(i), h, bwd);
    h = c.backward[i].h;
    std::copy(h.begin(), h.end(), out.hidden.row(i).begin() + static_cast<std::ptrdiff_t>(g));
  }
  out.topic = topic_slice(out.hidden, g, k);
  return out;
}

// Backpropagates dL/dH (n, 2g) through both directions; returns dL/d(embedded).
// Gradients reaching the topic slice must already be folded into d_hidden.
inline Tensor encode_backward(const Tensor& embedded, const EncoderCache& cache, const Tensor& d_hidden,
                              const GruParams& fwd, const GruParams& bwd, GruParams& grad_fwd,
                              GruParams& grad_bwd) {
  const std::size_t n = embedded.rows();
  const std::size_t g = fwd.state_dim();
  Tensor d_embedded = Tensor::matrix(n, embedded.cols());
  std::vector<double> carry(g, 0.0);
  for (std::size_t step = 0; step < n; ++step) {
    const std::size_t i = n - 1 - step;
    auto d = d_hidden.row(i);
    for (std::size_t j = 0; j < g; ++j) carry[j] += d[j];
    carry = gru_cell_backward(embedded.row(i), cache.forward[i], carry, fwd, grad_fwd, d_embedded.row(i));
  }
  std::fill(carry.begin(), carry.end(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto d = d_hidden.row(i);
    for (std::size_t j = 0; j < g; ++j) carry[j] += d[g + j];
    carry = gru_cell_backward(embedded.row(i), cache.backward[i], carry, bwd, grad_bwd, d_embedded.row(i));
  }
  return d_embedded;
}

}  // namespace dupdist
