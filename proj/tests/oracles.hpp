// Test-only reference implementations. Everything here is kept independent of
// the library's differentiation/metric code paths so it can serve as an
// oracle against them.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace oracle {

// Central finite difference of a scalar function of a flat parameter vector.
inline std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f(x);
    x[i] = saved - h;
    const double down = f(x);
    x[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// Numeric Jacobian J[i][j] = d out_i / d in_j by central differences.
inline std::vector<std::vector<double>> fd_jacobian(
    const std::function<std::vector<double>(const std::vector<double>&)>& f,
    std::vector<double> x, double h = 1e-6) {
  std::vector<std::vector<double>> jac;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double saved = x[j];
    x[j] = saved + h;
    const auto up = f(x);
    x[j] = saved - h;
    const auto down = f(x);
    x[j] = saved;
    if (jac.empty()) jac.assign(up.size(), std::vector<double>(x.size(), 0.0));
    for (std::size_t i = 0; i < up.size(); ++i) jac[i][j] = (up[i] - down[i]) / (2.0 * h);
  }
  return jac;
}

// |det| via Gaussian elimination with partial pivoting. Small dense matrices.
inline double abs_determinant(std::vector<std::vector<double>> m) {
  const std::size_t n = m.size();
  double det = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(m[r][col]) > std::abs(m[pivot][col])) pivot = r;
    }
    if (m[pivot][col] == 0.0) return 0.0;
    if (pivot != col) {
      std::swap(m[pivot], m[col]);
      det = -det;
    }
    det *= m[col][col];
    for (std::size_t r = col + 1; r < n; ++r) {
      const double factor = m[r][col] / m[col][col];
      for (std::size_t c = col; c < n; ++c) m[r][c] -= factor * m[col][c];
    }
  }
  return std::abs(det);
}

// Brute-force retrieval metrics over an explicit relevance list (descending
// rank order). Written from the definitions, not from the library.
inline double precision_at_k(const std::vector<bool>& relevant, std::size_t k) {
  k = std::min(k, relevant.size());
  if (k == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < k; ++i) hits += relevant[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(k);
}

inline double average_precision(const std::vector<bool>& relevant, std::size_t cutoff = 0) {
  const std::size_t total_relevant =
      static_cast<std::size_t>(std::count(relevant.begin(), relevant.end(), true));
  if (total_relevant == 0) return 0.0;
  const std::size_t limit = cutoff == 0 ? relevant.size() : std::min(cutoff, relevant.size());
  double acc = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < limit; ++i) {
    if (relevant[i]) {
      ++hits;
      acc += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  const std::size_t norm = cutoff == 0 ? total_relevant : std::min(total_relevant, cutoff);
  return acc / static_cast<double>(norm);
}

inline double cosine(const std::vector<double>& u, const std::vector<double>& v) {
  if (u.size() != v.size()) throw std::invalid_argument("cosine: size mismatch");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return dot / (std::sqrt(nu) * std::sqrt(nv));
}

}  // namespace oracle
