#pragma once

// Dense 64-bit tensors, the differentiable primitives the model is built from,
// and the central-difference gradient oracle used to verify every backward pass.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "log.hpp"

namespace dupdist {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(extent_product(shape_), fill) {}

  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != extent_product(shape_)) {
      throw Error("tensor data length " + std::to_string(data_.size()) +
                  " does not match shape product " + std::to_string(extent_product(shape_)));
    }
  }

  static Tensor vec(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
  }
  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Tensor({rows, cols}, fill);
  }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t rows() const noexcept { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const noexcept {
    if (shape_.size() < 2) return 1;
    return data_.size() / shape_[0];
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  double& at(std::size_t r, std::size_t c) noexcept { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const noexcept { return data_[r * cols() + c]; }

  std::span<double> row(std::size_t r) noexcept {
    return std::span<double>(data_).subspan(r * cols(), cols());
  }
  std::span<const double> row(std::size_t r) const noexcept {
    return std::span<const double>(data_).subspan(r * cols(), cols());
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  static std::size_t extent_product(const std::vector<std::size_t>& shape) {
    if (shape.empty()) return 0;
    std::size_t n = 1;
    for (std::size_t e : shape) {
      if (e == 0) throw Error("tensor extents must be positive");
      n *= e;
    }
    return n;
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Scalar activations

inline double sigmoid(double x) noexcept {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
inline double sigmoid_grad_from_output(double y) noexcept { return y * (1.0 - y); }
inline double tanh_grad_from_output(double y) noexcept { return 1.0 - y * y; }
inline double relu(double x) noexcept { return x > 0.0 ? x : 0.0; }

// ---------------------------------------------------------------------------
// Vector primitives over spans

inline double dot(std::span<const double> a, std::span<const double> b) noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) noexcept { return std::sqrt(dot(a, a)); }

// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) noexcept {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

// y = W x (+ y when accumulate), W is rows x cols row-major.
inline void matvec(const Tensor& w, std::span<const double> x, std::span<double> y,
                   bool accumulate = false) noexcept {
  const std::size_t rows = w.rows();
  const std::size_t cols = w.cols();
  const double* p = w.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double s = accumulate ? y[r] : 0.0;
    const double* wr = p + r * cols;
    for (std::size_t c = 0; c < cols; ++c) s += wr[c] * x[c];
    y[r] = s;
  }
}

// x += W^T y
inline void matvec_transpose_acc(const Tensor& w, std::span<const double> y,
                                 std::span<double> x) noexcept {
  const std::size_t rows = w.rows();
  const std::size_t cols = w.cols();
  const double* p = w.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double yr = y[r];
    if (yr == 0.0) continue;
    const double* wr = p + r * cols;
    for (std::size_t c = 0; c < cols; ++c) x[c] += wr[c] * yr;
  }
}

// G += y x^T
inline void outer_acc(std::span<const double> y, std::span<const double> x, Tensor& g) noexcept {
  const std::size_t cols = x.size();
  double* p = g.data().data();
  for (std::size_t r = 0; r < y.size(); ++r) {
    const double yr = y[r];
    if (yr == 0.0) continue;
    double* gr = p + r * cols;
    for (std::size_t c = 0; c < cols; ++c) gr[c] += yr * x[c];
  }
}

// ---------------------------------------------------------------------------
// Softmax over positions (max-subtracted).

inline std::vector<double> softmax_over_positions(std::span<const double> scores) {
  if (scores.empty()) throw Error("empty sequence");
  const double m = *std::max_element(scores.begin(), scores.end());
  std::vector<double> out(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - m);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

// d(scores) from d(weights) given softmax output.
inline std::vector<double> softmax_backward(std::span<const double> weights,
                                            std::span<const double> d_weights) {
  const double inner = dot(weights, d_weights);
  std::vector<double> out(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) out[i] = weights[i] * (d_weights[i] - inner);
  return out;
}

// ---------------------------------------------------------------------------
// Cosine similarity. A zero-norm argument is degenerate: similarity 0, zero gradient.

inline double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw Error("cosine_similarity: length mismatch");
  const double nu = norm(u);
  const double nv = norm(v);
  if (nu == 0.0 || nv == 0.0) {
    log::warn("cosine_similarity: zero-norm vector (degenerate topic vector), returning 0");
    return 0.0;
  }
  return dot(u, v) / (nu * nv);
}

// Accumulates scale * dS/du into du and scale * dS/dv into dv.
inline void cosine_similarity_backward(std::span<const double> u, std::span<const double> v,
                                       double scale, std::span<double> du, std::span<double> dv) {
  const double nu = norm(u);
  const double nv = norm(v);
  if (nu == 0.0 || nv == 0.0) return;
  const double s = dot(u, v) / (nu * nv);
  const double inv = 1.0 / (nu * nv);
  for (std::size_t i = 0; i < u.size(); ++i) {
    du[i] += scale * (v[i] * inv - s * u[i] / (nu * nu));
    dv[i] += scale * (u[i] * inv - s * v[i] / (nv * nv));
  }
}

// ---------------------------------------------------------------------------
// Central-difference gradient oracle.

struct NamedTensor {
  std::string name;
  Tensor* tensor;
};

inline std::vector<Tensor> finite_diff_gradient(const std::function<double()>& loss_fn,
                                                std::span<const NamedTensor> params,
                                                double eps = 1e-5) {
  if (!(eps > 0.0)) throw Error("finite_diff_gradient: eps must be positive");
  const double first = loss_fn();
  const double second = loss_fn();
  if (first != second) {
    throw Error("finite_diff_gradient: loss function is not deterministic");
  }
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (const auto& p : params) {
    Tensor g(p.tensor->shape(), 0.0);
    auto data = p.tensor->data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + eps;
      const double up = loss_fn();
      data[i] = saved - eps;
      const double down = loss_fn();
      data[i] = saved;
      g[i] = (up - down) / (2.0 * eps);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

// |a - b| <= max(abs_tol, rel_tol * max(|a|, |b|))
inline bool grad_close(double analytic, double numeric, double abs_tol = 1e-6,
                       double rel_tol = 1e-3) noexcept {
  const double diff = std::abs(analytic - numeric);
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  return diff <= std::max(abs_tol, rel_tol * scale);
}

}  // namespace dupdist
