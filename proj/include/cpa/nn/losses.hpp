// Copyright 2026 The CPA Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CPA_NN_LOSSES_HPP_
#define CPA_NN_LOSSES_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "cpa/core/error.hpp"
#include "cpa/core/types.hpp"

namespace cpa::nn {

struct LossAndGrad {
  double loss = 0.0;
  Matrix grad;
};

// Row-wise softmax with max subtraction.
inline Matrix softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

// Lowest index wins ties.
inline int argmax(std::span<const double> values) {
  require(!values.empty(), "argmax: empty input");
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

inline int argmax_row(const Matrix& m, Eigen::Index row) {
  return argmax(std::span<const double>(m.row(row).data(), static_cast<std::size_t>(m.cols())));
}

inline double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw InvalidInput("cosine_similarity: dimension mismatch");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) throw DegenerateInput("cosine_similarity: zero vector");
  return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

namespace detail {

inline void check_distribution(std::span<const double> p) {
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw InvalidInput("posterior entries must be non-negative");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-6) throw InvalidInput("posteriors must sum to 1");
}

}  // namespace detail

// -sum_i y_i log p_i with p clamped below at kLogClamp.
inline double cross_entropy(std::span<const double> target, std::span<const double> p) {
  if (target.size() != p.size()) throw InvalidInput("cross_entropy: dimension mismatch");
  detail::check_distribution(p);
  double loss = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (target[i] != 0.0) loss -= target[i] * std::log(std::max(p[i], kLogClamp));
  }
  return loss;
}

inline double cross_entropy(int label, std::span<const double> p) {
  if (label < 0 || static_cast<std::size_t>(label) >= p.size()) {
    throw InvalidInput("cross_entropy: label out of range");
  }
  detail::check_distribution(p);
  return -std::log(std::max(p[static_cast<std::size_t>(label)], kLogClamp));
}

// Mean softmax cross-entropy over rows and its gradient w.r.t. the logits.
inline LossAndGrad softmax_cross_entropy(const Matrix& logits, std::span<const int> labels) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size() || labels.empty()) {
    throw InvalidInput("softmax_cross_entropy: label count mismatch");
  }
  const Matrix p = softmax(logits);
  LossAndGrad out;
  out.grad = p;
  const double inv = 1.0 / static_cast<double>(labels.size());
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const int y = labels[r];
    if (y < 0 || y >= logits.cols()) throw InvalidInput("softmax_cross_entropy: label out of range");
    const auto row = static_cast<Eigen::Index>(r);
    out.loss -= std::log(std::max(p(row, y), kLogClamp));
    out.grad(row, y) -= 1.0;
  }
  out.loss *= inv;
  out.grad *= inv;
  return out;
}

// --- NT-Xent ---------------------------------------------------------------

namespace detail {

inline Matrix normalized_rows(const Matrix& z, Vector* norms = nullptr) {
  Matrix u(z.rows(), z.cols());
  if (norms) norms->resize(z.rows());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double n = z.row(r).norm();
    if (n == 0.0) throw DegenerateInput("NT-Xent: zero projection row");
    u.row(r) = z.row(r) / n;
    if (norms) (*norms)(r) = n;
  }
  return u;
}

inline double logsumexp_excluding(const Matrix& s, Eigen::Index row) {
  double m = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < s.cols(); ++k) {
    if (k != row) m = std::max(m, s(row, k));
  }
  double total = 0.0;
  for (Eigen::Index k = 0; k < s.cols(); ++k) {
    if (k != row) total += std::exp(s(row, k) - m);
  }
  return m + std::log(total);
}

inline void check_temperature(double tau) {
  if (!(tau > 0.0)) throw InvalidInput("NT-Xent: temperature must be positive");
}

}  // namespace detail

// Loss of the positive pair (i, j): the softmax over all other rows k != i
// of sim(z_i, z_k) / tau, evaluated at k = j.
inline double ntxent_pair_loss(Eigen::Index i, Eigen::Index j, const Matrix& z, double tau) {
  detail::check_temperature(tau);
  const Eigen::Index rows = z.rows();
  if (rows < 2 || rows % 2 != 0) throw InvalidInput("NT-Xent: need 2N rows with N >= 1");
  if (i < 0 || j < 0 || i >= rows || j >= rows || i == j) {
    throw InvalidInput("NT-Xent: pair indices out of range or equal");
  }
  const Matrix u = detail::normalized_rows(z);
  const Matrix s = (u * u.transpose()) / tau;
  return detail::logsumexp_excluding(s, i) - s(i, j);
}

inline Eigen::Index positive_of(Eigen::Index row) { return row % 2 == 0 ? row + 1 : row - 1; }

// Mean of the 2N ordered pair losses, positives at rows (2k, 2k+1), and its
// gradient w.r.t. z. The similarity matrix is built once and the diagonal
// is excluded from every denominator.
inline LossAndGrad contrastive_loss_and_grad(const Matrix& z, double tau) {
  detail::check_temperature(tau);
  const Eigen::Index rows = z.rows();
  if (rows < 2 || rows % 2 != 0) {
    throw InvalidInput("contrastive loss: row count must be even and >= 2");
  }
  Vector norms;
  const Matrix u = detail::normalized_rows(z, &norms);
  const Matrix s = (u * u.transpose()) / tau;

  // g(i, k) = d loss / d s(i, k).
  Matrix g = Matrix::Zero(rows, rows);
  double total = 0.0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Eigen::Index j = positive_of(i);
    const double lse = detail::logsumexp_excluding(s, i);
    total += lse - s(i, j);
    for (Eigen::Index k = 0; k < rows; ++k) {
      if (k != i) g(i, k) = std::exp(s(i, k) - lse);
    }
    g(i, j) -= 1.0;
  }
  const double inv = 1.0 / static_cast<double>(rows);
  g *= inv;

  LossAndGrad out;
  out.loss = total * inv;
  // s = u u^T / tau, so d/du = (g + g^T) u / tau; then through u = z / |z|.
  const Matrix du = ((g + g.transpose()) * u) / tau;
  out.grad.resize(rows, z.cols());
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double radial = du.row(r).dot(u.row(r));
    out.grad.row(r) = (du.row(r) - radial * u.row(r)) / norms(r);
  }
  return out;
}

inline double contrastive_batch_loss(const Matrix& z, double tau) {
  return contrastive_loss_and_grad(z, tau).loss;
}

// --- posterior statistics used by membership metrics -------------------------

inline double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) h -= v * std::log(std::max(v, kLogClamp));
  return h;
}

// -(1 - p_y) log p_y - sum_{i != y} p_i log(1 - p_i), both log arguments
// clamped at kLogClamp.
inline double modified_entropy(std::span<const double> p, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= p.size()) {
    throw InvalidInput("modified_entropy: label out of range");
  }
  double h = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (static_cast<int>(i) == label) {
      h -= (1.0 - p[i]) * std::log(std::max(p[i], kLogClamp));
    } else {
      h -= p[i] * std::log(std::max(1.0 - p[i], kLogClamp));
    }
  }
  return h;
}

}  // namespace cpa::nn

#endif  // CPA_NN_LOSSES_HPP_
