#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "fm/error.hpp"

namespace fm {

using Vec = std::vector<double>;
using VecView = std::span<const double>;

inline constexpr double kZeroNormThreshold = 1e-12;
inline constexpr double kUnitSlack = 1e-13;

inline void check_same_dim(VecView a, VecView b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                "lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
}

inline double dot(VecView a, VecView b) {
  check_same_dim(a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double norm(VecView v) { return std::sqrt(dot(v, v)); }

inline bool all_finite(VecView v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

inline Vec l2_normalize(VecView v) {
  const double n = norm(v);
  if (!(n > kZeroNormThreshold)) {
    throw Error(ErrorCode::ZeroNorm, "cannot normalize vector with norm " + std::to_string(n));
  }
  // Vectors already unit up to rounding keep their exact bits, which makes
  // normalization idempotent.
  if (std::abs(n - 1.0) <= kUnitSlack) return Vec(v.begin(), v.end());
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
  return out;
}

inline double cosine(VecView a, VecView b) {
  check_same_dim(a, b);
  const double na = norm(a);
  const double nb = norm(b);
  if (!(na > kZeroNormThreshold) || !(nb > kZeroNormThreshold)) {
    throw Error(ErrorCode::ZeroNorm, "cosine of zero-norm vector");
  }
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

/// Stable softmax of scores / tau.
inline Vec softmax(VecView scores, double tau) {
  if (!(tau > 0.0)) throw Error(ErrorCode::InvalidTemperature, "tau must be positive");
  Vec out(scores.size());
  if (scores.empty()) return out;
  const double mx = *std::max_element(scores.begin(), scores.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp((scores[i] - mx) / tau);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

/// log(sum(exp(x))) with max subtraction.
inline double log_sum_exp(VecView x) {
  if (x.empty()) return -std::numeric_limits<double>::infinity();
  const double mx = *std::max_element(x.begin(), x.end());
  double sum = 0.0;
  for (double xi : x) sum += std::exp(xi - mx);
  return mx + std::log(sum);
}

/// First index of the maximum; ties go to the smaller index.
inline std::size_t argmax(VecView x) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (x[i] > x[best]) best = i;
  }
  return best;
}

inline void axpy(double alpha, VecView x, std::span<double> y) {
  check_same_dim(x, VecView(y.data(), y.size()));
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

/// Backpropagates a gradient through u -> u / |u|.
/// Given g = dL/dv at v = u/|u|, returns dL/du = (g - (g.v) v) / |u|.
inline Vec normalize_backward(VecView u, VecView grad_v) {
  const double n = norm(u);
  if (!(n > kZeroNormThreshold)) throw Error(ErrorCode::ZeroNorm, "normalize_backward");
  double gv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) gv += grad_v[i] * u[i] / n;
  Vec out(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = (grad_v[i] - gv * u[i] / n) / n;
  return out;
}

/// Gradient of cos(a, b) with respect to a: (b^ - cos(a,b) a^) / |a|.
/// Uses the unclamped cosine so the derivative stays exact.
inline Vec cosine_grad_a(VecView a, VecView b) {
  check_same_dim(a, b);
  const double na = norm(a);
  const double nb = norm(b);
  if (!(na > kZeroNormThreshold) || !(nb > kZeroNormThreshold)) {
    throw Error(ErrorCode::ZeroNorm, "cosine gradient of zero-norm vector");
  }
  const double c = dot(a, b) / (na * nb);
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (b[i] / nb - c * a[i] / na) / na;
  return out;
}

/// Dense row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  [[nodiscard]] std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  [[nodiscard]] VecView row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  [[nodiscard]] std::span<double> data() noexcept { return data_; }
  [[nodiscard]] VecView data() const noexcept { return data_; }

  [[nodiscard]] Vec multiply(VecView x) const {
    if (x.size() != cols_) throw Error(ErrorCode::DimensionMismatch, "matrix-vector product");
    Vec out(rows_, 0.0);
    for (std::size_t r = 0; r < rows_; ++r) {
      const double* w = data_.data() + r * cols_;
      double acc = 0.0;
      for (std::size_t c = 0; c < cols_; ++c) acc += w[c] * x[c];
      out[r] = acc;
    }
    return out;
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

}  // namespace fm
