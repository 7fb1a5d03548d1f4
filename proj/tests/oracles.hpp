#pragma once

// Independent reference computations the tests compare the library against.
// Nothing here calls into the code under test except for plain data types.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "a2l/common.hpp"
#include "a2l/corpus.hpp"

namespace oracle {

struct Path {
  std::vector<a2l::LabelId> labels;
  double score;
};

// Every label sequence of length n, scored from scratch, best first.
// Ties keep lexicographic order.
inline std::vector<Path> enumerate_paths(const a2l::Matrix& log_em, const a2l::Matrix& log_T) {
  const std::size_t n = log_em.rows(), L = log_em.cols();
  std::vector<Path> out;
  std::vector<a2l::LabelId> cur(n, 0);
  while (true) {
    double s = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      s += log_em(t, cur[t]);
      if (t) s += log_T(cur[t - 1], cur[t]);
    }
    out.push_back({cur, s});
    std::size_t t = n;
    while (t > 0) {
      --t;
      if (++cur[t] < L) break;
      cur[t] = 0;
      if (t == 0) {
        t = n + 1;
        break;
      }
    }
    if (t == n + 1 || n == 0) break;
  }
  std::stable_sort(out.begin(), out.end(), [](const Path& a, const Path& b) { return a.score > b.score; });
  return out;
}

// Row-stochastic random log matrix.
inline a2l::Matrix random_log_stochastic(std::size_t rows, std::size_t cols, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  a2l::Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += (m(r, c) = u(gen));
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = std::log(m(r, c) / s);
  }
  return m;
}

// Eigenvalues of a symmetric 2x2 from the characteristic polynomial.
inline std::vector<double> eig2(double a, double b, double d) {
  const double tr = a + d, det = a * d - b * b;
  const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
  return {tr / 2.0 - disc, tr / 2.0 + disc};
}

// Real roots of the characteristic polynomial of a symmetric 3x3 (trigonometric form).
inline std::vector<double> eig3(const a2l::Matrix& A) {
  const double c2 = -(A(0, 0) + A(1, 1) + A(2, 2));
  const double c1 = A(0, 0) * A(1, 1) + A(0, 0) * A(2, 2) + A(1, 1) * A(2, 2) - A(0, 1) * A(1, 0) -
                    A(0, 2) * A(2, 0) - A(1, 2) * A(2, 1);
  const double c0 = -(A(0, 0) * (A(1, 1) * A(2, 2) - A(1, 2) * A(2, 1)) -
                      A(0, 1) * (A(1, 0) * A(2, 2) - A(1, 2) * A(2, 0)) +
                      A(0, 2) * (A(1, 0) * A(2, 1) - A(1, 1) * A(2, 0)));
  // x^3 + c2 x^2 + c1 x + c0, depressed with x = t - c2/3
  const double p = c1 - c2 * c2 / 3.0;
  const double q = 2.0 * c2 * c2 * c2 / 27.0 - c2 * c1 / 3.0 + c0;
  std::vector<double> roots;
  if (std::abs(p) < 1e-300) {
    const double t = std::cbrt(-q);
    roots = {t, t, t};
  } else {
    const double m = 2.0 * std::sqrt(-p / 3.0);
    const double arg = std::clamp(3.0 * q / (p * m), -1.0, 1.0);
    const double theta = std::acos(arg) / 3.0;
    for (int k = 0; k < 3; ++k) roots.push_back(m * std::cos(theta - 2.0 * M_PI * k / 3.0));
  }
  for (double& r : roots) r -= c2 / 3.0;
  std::sort(roots.begin(), roots.end());
  // one Newton polish step each
  for (double& r : roots) {
    const double f = ((r + c2) * r + c1) * r + c0;
    const double df = (3.0 * r + 2.0 * c2) * r + c1;
    if (std::abs(df) > 1e-12) r -= f / df;
  }
  return roots;
}

// Normalized-cut value of the best 2-way partition of a small matrix, by brute force.
inline std::vector<std::size_t> best_bipartition(const a2l::Matrix& S) {
  const std::size_t n = S.rows();
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> arg;
  for (std::size_t mask = 1; mask + 1 < (std::size_t{1} << n); ++mask) {
    if (mask & 1) continue;  // fix point 0 in side 0
    double cut = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const bool ai = mask >> i & 1, aj = mask >> j & 1;
        if (ai != aj) cut += S(i, j);
        (ai ? vb : va) += S(i, j);
      }
    const double ncut = cut / va + cut / vb;
    if (ncut < best) {
      best = ncut;
      arg.assign(n, 0);
      for (std::size_t i = 0; i < n; ++i) arg[i] = mask >> i & 1;
    }
  }
  return arg;
}

// Pair-counting agreement between two labelings, permutation-invariant.
inline bool same_partition(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j)
      if ((a[i] == a[j]) != (b[i] == b[j])) return false;
  return true;
}

// Central differences of f around x, one coordinate at a time.
inline std::vector<double> finite_gradient(const std::function<double(const std::vector<double>&)>& f,
                                           std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// max_i |a_i - b_i| / max(floor, |a_i| + |b_i|); the floor absorbs
// central-difference rounding (~1e-11) on entries that are exactly zero.
inline double max_rel_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max(floor, std::abs(a[i]) + std::abs(b[i]));
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

// Triplet loss written out directly.
inline double triplet_loss_ref(double l1, double l2, double l3, const std::vector<double>& pa,
                               const std::vector<double>& pb, const std::vector<double>& pc) {
  std::size_t ia = 0;
  for (std::size_t k = 1; k < pa.size(); ++k)
    if (pa[k] > pa[ia]) ia = k;
  auto cl = [](double p) { return std::clamp(p, 1e-12, 1.0 - 1e-12); };
  double ent = 0.0;
  for (double p : pb) ent += p * std::log(cl(p));
  return -l1 * std::log(cl(pb[ia])) - l2 * std::log(cl(1.0 - pc[ia])) + l3 * ent;
}

// Printed kurtosis of one attention row.
inline double kurtosis_ref(const std::vector<double>& row) {
  const double n = static_cast<double>(row.size());
  double num = 0.0, sum = 0.0;
  for (double a : row) {
    num += std::pow(a - 1.0 / n, 4);
    sum += a;
  }
  num /= n;
  const double den = std::pow((sum - 1.0 / n) / n, 2);
  return num / den;
}

inline double jaccard_ref(std::vector<std::string> a, std::vector<std::string> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<std::string> inter, uni;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(uni));
  return uni.empty() ? 1.0 : static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

inline a2l::TaggedSentence sentence(std::vector<std::string> tokens, std::vector<a2l::LabelId> labels = {}) {
  if (labels.empty()) labels.assign(tokens.size(), 0);
  return {std::move(tokens), std::move(labels), std::nullopt};
}

}  // namespace oracle
