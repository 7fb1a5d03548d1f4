#include "a2l/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace a2l {

namespace {

double off_diagonal_norm(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i + 1; j < a.cols(); ++j) s += 2.0 * a(i, j) * a(i, j);
  return std::sqrt(s);
}

}  // namespace

EigenDecomposition jacobi_eigen(const Matrix& symmetric, double tol, int max_sweeps) {
  const std::size_t n = symmetric.rows();
  if (symmetric.cols() != n) throw Error(ErrorCode::InvalidConfig, "eigensolver needs a square matrix");
  Matrix a = symmetric;
  Matrix v = Matrix::identity(n);
  const double stop = tol * std::max(1.0, symmetric.frobenius_norm());

  EigenDecomposition out;
  for (; out.sweeps < max_sweeps; ++out.sweeps) {
    if (off_diagonal_norm(a) < stop) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) < std::numeric_limits<double>::min()) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) < a(j, j); });
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    out.values[c] = a(order[c], order[c]);
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, c) = v(r, order[c]);
  }
  return out;
}

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

Matrix seed_plus_plus(const Matrix& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.rows();
  Matrix centroids(k, points.cols());
  std::vector<bool> chosen(n, false);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());

  std::size_t pick = rng.below(n);
  for (std::size_t c = 0; c < k; ++c) {
    if (c > 0) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) total += chosen[i] ? 0.0 : d2[i];
      if (total > 0.0) {
        double u = rng.uniform() * total;
        pick = n;
        for (std::size_t i = 0; i < n; ++i) {
          if (chosen[i]) continue;
          u -= d2[i];
          if (u < 0.0) {
            pick = i;
            break;
          }
        }
        if (pick == n)
          for (std::size_t i = n; i-- > 0;)
            if (!chosen[i] && d2[i] > 0.0) { pick = i; break; }
      } else {
        pick = static_cast<std::size_t>(std::find(chosen.begin(), chosen.end(), false) - chosen.begin());
        if (pick == n) pick = 0;
      }
    }
    chosen[pick] = true;
    std::copy(points.row(pick).begin(), points.row(pick).end(), centroids.row(c).begin());
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(points.row(i), centroids.row(c)));
  }
  return centroids;
}

}  // namespace

KMeansResult kmeans_single(const Matrix& points, std::size_t k, Rng& rng, int max_iter) {
  const std::size_t n = points.rows();
  const std::size_t dim = points.cols();
  if (k == 0 || k > n) throw Error(ErrorCode::InvalidConfig, "k-means needs 1 <= k <= n");

  KMeansResult res;
  res.centroids = seed_plus_plus(points, k, rng);
  res.assignment.assign(n, 0);
  std::vector<double> dist(n, 0.0);

  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = iter == 0;
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = sq_dist(points.row(i), res.centroids.row(0));
      for (std::size_t c = 1; c < k; ++c) {
        const double d = sq_dist(points.row(i), res.centroids.row(c));
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (res.assignment[i] != best) changed = true;
      res.assignment[i] = best;
      dist[i] = best_d;
      inertia += best_d;
    }
    res.inertia = inertia;
    res.inertia_history.push_back(inertia);
    if (!changed) break;

    Matrix sums(k, dim);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[res.assignment[i]];
      auto row = sums.row(res.assignment[i]);
      for (std::size_t j = 0; j < dim; ++j) row[j] += points(i, j);
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // Empty cluster takes over the point currently worst served.
        const std::size_t far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
        std::copy(points.row(far).begin(), points.row(far).end(), res.centroids.row(c).begin());
        dist[far] = 0.0;
        continue;
      }
      for (std::size_t j = 0; j < dim; ++j) res.centroids(c, j) = sums(c, j) / static_cast<double>(counts[c]);
    }
  }
  return res;
}

KMeansResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed, int max_iter, int restarts) {
  KMeansResult best;
  bool have = false;
  for (int r = 0; r < std::max(1, restarts); ++r) {
    Rng rng(derive_seed(seed, 0x6b3a + static_cast<std::uint64_t>(r)));
    KMeansResult res = kmeans_single(points, k, rng, max_iter);
    if (!have || res.inertia < best.inertia) {
      best = std::move(res);
      have = true;
    }
  }
  return best;
}

double adjusted_rand_index(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::LengthMismatch, "ARI needs equal-length labelings");
  const double n = static_cast<double>(a.size());
  if (a.size() < 2) return 1.0;
  std::map<std::pair<std::size_t, std::size_t>, double> joint;
  std::map<std::size_t, double> ca, cb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1.0;
    ca[a[i]] += 1.0;
    cb[b[i]] += 1.0;
  }
  auto c2 = [](double x) { return x * (x - 1.0) / 2.0; };
  double index = 0.0, sa = 0.0, sb = 0.0;
  for (const auto& [key, v] : joint) index += c2(v);
  for (const auto& [key, v] : ca) sa += c2(v);
  for (const auto& [key, v] : cb) sb += c2(v);
  const double expected = sa * sb / c2(n);
  const double max_index = 0.5 * (sa + sb);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

}  // namespace a2l
