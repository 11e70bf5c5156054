#pragma once

// Memory vector, conditional attention, the MLP classifier and the losses of
// the duplicate branch.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "config.hpp"
#include "numeric_core.hpp"
#include "random.hpp"

namespace dupdist {

struct CondAttentionParams {
  Tensor w1;  // (a, 2g) applied to the conditional representation
  Tensor w2;  // (a, 2g) applied to the memory vector

  static CondAttentionParams zeros(std::size_t g, std::size_t a) {
    return {Tensor::matrix(a, 2 * g), Tensor::matrix(a, 2 * g)};
  }
  static CondAttentionParams init(std::size_t g, std::size_t a, Rng& rng) {
    auto p = zeros(g, a);
    const double bound = std::sqrt(1.0 / static_cast<double>(2 * g));
    for (Tensor* t : {&p.w1, &p.w2}) {
      for (double& v : t->data()) v = uniform(rng, -bound, bound);
    }
    return p;
  }
  std::size_t width() const noexcept { return w1.rows(); }

  template <class F>
  void for_each(const std::string& prefix, F&& f) {
    f(prefix + ".w1", w1);
    f(prefix + ".w2", w2);
  }
};

struct MlpParams {
  Tensor l1_w, l1_b;    // (h, 2a), (h)
  Tensor l2_w, l2_b;    // (h, h), (h)
  Tensor out_w, out_b;  // (1, h), (1)

  static MlpParams zeros(std::size_t a, std::size_t h) {
    return {Tensor::matrix(h, 2 * a), Tensor({h}), Tensor::matrix(h, h), Tensor({h}), Tensor::matrix(1, h),
            Tensor({1})};
  }
  static MlpParams init(std::size_t a, std::size_t h, Rng& rng) {
    auto p = zeros(a, h);
    auto fill = [&](Tensor& t) {
      const double bound = std::sqrt(1.0 / static_cast<double>(t.cols()));
      for (double& v : t.data()) v = uniform(rng, -bound, bound);
    };
    fill(p.l1_w);
    fill(p.l2_w);
    fill(p.out_w);
    return p;
  }

  template <class F>
  void for_each(const std::string& prefix, F&& f) {
    f(prefix + ".l1_w", l1_w);
    f(prefix + ".l1_b", l1_b);
    f(prefix + ".l2_w", l2_w);
    f(prefix + ".l2_b", l2_b);
    f(prefix + ".out_w", out_w);
    f(prefix + ".out_b", out_b);
  }
};

// ---------------------------------------------------------------------------

// phi = sum_i alpha_i h_i + sum_i h_i   (second term averaged when normalize is set)
inline std::vector<double> memory_vector(std::span<const double> alpha, const Tensor& hidden,
                                         bool normalize = false) {
  if (alpha.size() != hidden.rows()) throw Error("memory_vector: length mismatch");
  const double plain = normalize ? 1.0 / static_cast<double>(hidden.rows()) : 1.0;
  std::vector<double> phi(hidden.cols(), 0.0);
  for (std::size_t i = 0; i < alpha.size(); ++i) axpy(alpha[i] + plain, hidden.row(i), phi);
  return phi;
}

inline std::vector<double> report_summary(const Tensor& hidden) {
  if (hidden.rows() == 0) throw Error("report_summary: empty report");
  std::vector<double> mean(hidden.cols(), 0.0);
  for (std::size_t i = 0; i < hidden.rows(); ++i) axpy(1.0, hidden.row(i), mean);
  const double inv = 1.0 / static_cast<double>(hidden.rows());
  for (double& v : mean) v *= inv;
  return mean;
}

inline Tensor conditional_rep(const Tensor& hidden_p, std::span<const double> summary_q) {
  if (hidden_p.cols() != summary_q.size()) throw Error("conditional_rep: width mismatch");
  Tensor gamma = Tensor::matrix(hidden_p.rows(), hidden_p.cols());
  for (std::size_t i = 0; i < hidden_p.rows(); ++i) {
    auto src = hidden_p.row(i);
    auto dst = gamma.row(i);
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] = src[j] * summary_q[j];
  }
  return gamma;
}

struct CondAttention {
  Tensor u;                    // (n, a) tanh(W1 gamma_i)
  std::vector<double> v;       // (a) tanh(W2 phi)
  Tensor scores;               // per_dim: (n, a) c_i = u_i * v;  scalar_dot: (n, 1)
  Tensor beta;                 // per_dim: (n, a);  scalar_dot: (n, 1)
  std::vector<double> c;       // (a)

  // Mean attention weight per position over the attention dimensions.
  std::vector<double> beta_summary() const {
    std::vector<double> out(beta.rows());
    for (std::size_t i = 0; i < beta.rows(); ++i) {
      auto r = beta.row(i);
      double s = 0.0;
      for (double x : r) s += x;
      out[i] = s / static_cast<double>(r.size());
    }
    return out;
  }
};

inline CondAttention conditional_attention(const Tensor& gamma, std::span<const double> phi,
                                           const CondAttentionParams& p,
                                           CondAttentionMode mode = CondAttentionMode::per_dim) {
  const std::size_t n = gamma.rows();
  const std::size_t a = p.width();
  if (n == 0) throw Error("conditional_attention: empty sequence");
  if (gamma.cols() != p.w1.cols() || phi.size() != p.w2.cols()) throw Error("conditional_attention: shape mismatch");
  CondAttention out;
  out.u = Tensor::matrix(n, a);
  out.v.resize(a);
  matvec(p.w2, phi, out.v);
  for (double& x : out.v) x = std::tanh(x);
  for (std::size_t i = 0; i < n; ++i) {
    auto ui = out.u.row(i);
    matvec(p.w1, gamma.row(i), ui);
    for (double& x : ui) x = std::tanh(x);
  }
  out.c.assign(a, 0.0);
  if (mode == CondAttentionMode::per_dim) {
    out.scores = Tensor::matrix(n, a);
    out.beta = Tensor::matrix(n, a);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < a; ++j) out.scores.at(i, j) = out.u.at(i, j) * out.v[j];
    }
    std::vector<double> col(n);
    for (std::size_t j = 0; j < a; ++j) {
      for (std::size_t i = 0; i < n; ++i) col[i] = out.scores.at(i, j);
      const auto w = softmax_over_positions(col);
      double cj = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        out.beta.at(i, j) = w[i];
        cj += w[i] * col[i];
      }
      out.c[j] = cj;
    }
  } else {
    out.scores = Tensor::matrix(n, 1);
    out.beta = Tensor::matrix(n, 1);
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = dot(out.u.row(i), out.v);
    const auto w = softmax_over_positions(s);
    for (std::size_t i = 0; i < n; ++i) {
      out.scores.at(i, 0) = s[i];
      out.beta.at(i, 0) = w[i];
      axpy(w[i], out.u.row(i), out.c);
    }
  }
  return out;
}

// dL/dc -> parameter grads, dL/dgamma (n, 2g) and dL/dphi (2g), both accumulated.
inline void conditional_attention_backward(const Tensor& gamma, std::span<const double> phi, const CondAttention& att,
                                           std::span<const double> dc, const CondAttentionParams& p,
                                           CondAttentionMode mode, CondAttentionParams& grad, Tensor& d_gamma,
                                           std::span<double> d_phi) {
  const std::size_t n = gamma.rows();
  const std::size_t a = p.width();
  Tensor du = Tensor::matrix(n, a);
  std::vector<double> dv(a, 0.0);
  if (mode == CondAttentionMode::per_dim) {
    // c_j = sum_i beta_ij s_ij with beta = softmax_i(s_.j)  =>  dc_j/ds_ij = beta_ij (1 + s_ij - c_j)
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < a; ++j) {
        const double ds = dc[j] * att.beta.at(i, j) * (1.0 + att.scores.at(i, j) - att.c[j]);
        du.at(i, j) = ds * att.v[j];
        dv[j] += ds * att.u.at(i, j);
      }
    }
  } else {
    std::vector<double> d_beta(n), beta(n);
    for (std::size_t i = 0; i < n; ++i) {
      beta[i] = att.beta.at(i, 0);
      d_beta[i] = dot(dc, att.u.row(i));
      axpy(beta[i], dc, du.row(i));
    }
    const auto ds = softmax_backward(beta, d_beta);
    for (std::size_t i = 0; i < n; ++i) {
      axpy(ds[i], att.v, du.row(i));
      axpy(ds[i], att.u.row(i), dv);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    auto dui = du.row(i);
    auto ui = att.u.row(i);
    for (std::size_t j = 0; j < a; ++j) dui[j] *= tanh_grad_from_output(ui[j]);
    outer_acc(dui, gamma.row(i), grad.w1);
    matvec_transpose_acc(p.w1, dui, d_gamma.row(i));
  }
  for (std::size_t j = 0; j < a; ++j) dv[j] *= tanh_grad_from_output(att.v[j]);
  outer_acc(dv, phi, grad.w2);
  matvec_transpose_acc(p.w2, dv, d_phi);
}

// ---------------------------------------------------------------------------
// Classifier

struct MlpForward {
  std::vector<double> input;            // cP ++ cQ
  std::vector<double> pre1, act1, pre2, act2;
  std::vector<double> mask1, mask2;     // inverted-dropout multipliers (1 when inference)
  double logit = 0.0;
  double prob = 0.5;
};

inline MlpForward classify_forward(std::span<const double> c_p, std::span<const double> c_q, const MlpParams& mlp,
                                   double dropout, Rng* dropout_rng) {
  const std::size_t h = mlp.l1_b.size();
  if (c_p.size() + c_q.size() != mlp.l1_w.cols()) throw Error("classify: input width mismatch");
  MlpForward f;
  f.input.reserve(c_p.size() + c_q.size());
  f.input.insert(f.input.end(), c_p.begin(), c_p.end());
  f.input.insert(f.input.end(), c_q.begin(), c_q.end());
  const bool training = dropout_rng != nullptr && dropout > 0.0;
  auto make_mask = [&](std::vector<double>& mask) {
    mask.assign(h, 1.0);
    if (!training) return;
    const double keep = 1.0 - dropout;
    for (double& m : mask) m = uniform01(*dropout_rng) < keep ? 1.0 / keep : 0.0;
  };
  f.pre1.resize(h);
  matvec(mlp.l1_w, f.input, f.pre1);
  axpy(1.0, mlp.l1_b.data(), f.pre1);
  make_mask(f.mask1);
  f.act1.resize(h);
  for (std::size_t j = 0; j < h; ++j) f.act1[j] = relu(f.pre1[j]) * f.mask1[j];
  f.pre2.resize(h);
  matvec(mlp.l2_w, f.act1, f.pre2);
  axpy(1.0, mlp.l2_b.data(), f.pre2);
  make_mask(f.mask2);
  f.act2.resize(h);
  for (std::size_t j = 0; j < h; ++j) f.act2[j] = relu(f.pre2[j]) * f.mask2[j];
  f.logit = dot(mlp.out_w.data(), f.act2) + mlp.out_b[0];
  f.prob = sigmoid(f.logit);
  return f;
}

// Dropout is applied only when a generator is supplied (training).
inline double classify(std::span<const double> c_p, std::span<const double> c_q, const MlpParams& mlp,
                       bool training, std::uint64_t seed, double dropout = 0.2) {
  if (!training) return classify_forward(c_p, c_q, mlp, dropout, nullptr).prob;
  Rng rng(seed);
  return classify_forward(c_p, c_q, mlp, dropout, &rng).prob;
}

// dL/dlogit -> parameter grads; returns dL/d(cP ++ cQ).
inline std::vector<double> classify_backward(const MlpForward& f, double d_logit, const MlpParams& mlp,
                                             MlpParams& grad) {
  const std::size_t h = mlp.l1_b.size();
  grad.out_b[0] += d_logit;
  axpy(d_logit, f.act2, grad.out_w.data());
  std::vector<double> d2(h), d1(h, 0.0);
  for (std::size_t j = 0; j < h; ++j) {
    d2[j] = f.pre2[j] > 0.0 ? d_logit * mlp.out_w[j] * f.mask2[j] : 0.0;
  }
  outer_acc(d2, f.act1, grad.l2_w);
  axpy(1.0, d2, grad.l2_b.data());
  matvec_transpose_acc(mlp.l2_w, d2, d1);
  for (std::size_t j = 0; j < h; ++j) d1[j] = f.pre1[j] > 0.0 ? d1[j] * f.mask1[j] : 0.0;
  outer_acc(d1, f.input, grad.l1_w);
  axpy(1.0, d1, grad.l1_b.data());
  std::vector<double> d_input(f.input.size(), 0.0);
  matvec_transpose_acc(mlp.l1_w, d1, d_input);
  return d_input;
}

// ---------------------------------------------------------------------------
// Losses

inline constexpr double kProbClamp = 1e-7;

inline double bce_loss(int label, double prob) {
  const double p = std::clamp(prob, kProbClamp, 1.0 - kProbClamp);
  return -(label * std::log(p) + (1 - label) * std::log(1.0 - p));
}

// d bce / d logit for prob = sigmoid(logit); zero where the clamp is active.
inline double bce_grad_logit(int label, double prob) {
  if (prob < kProbClamp || prob > 1.0 - kProbClamp) return 0.0;
  return prob - static_cast<double>(label);
}

inline double total_loss(double l_sim, double l_dup, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error("total_loss: lambda must lie in [0, 1]");
  return lambda * l_sim + (1.0 - lambda) * l_dup;
}

}  // namespace dupdist
