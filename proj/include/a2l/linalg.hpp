#pragma once

#include <cstdint>
#include <vector>

#include "a2l/common.hpp"

namespace a2l {

struct EigenDecomposition {
  Vector values;   // ascending
  Matrix vectors;  // column i pairs with values[i]
  int sweeps = 0;
};

// Cyclic Jacobi rotations on a symmetric matrix until the off-diagonal
// Frobenius norm drops below tol * max(1, ||A||_F).
EigenDecomposition jacobi_eigen(const Matrix& symmetric, double tol = 1e-10, int max_sweeps = 100);

struct KMeansResult {
  std::vector<std::size_t> assignment;
  Matrix centroids;
  double inertia = 0.0;
  std::vector<double> inertia_history;  // after each assignment step
};

/// One Lloyd run from k-means++ seeding.
KMeansResult kmeans_single(const Matrix& points, std::size_t k, Rng& rng, int max_iter = 100);

/// Best-inertia result over `restarts` seeded runs.
KMeansResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed, int max_iter = 100,
                    int restarts = 5);

double adjusted_rand_index(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b);

}  // namespace a2l
