#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "momo/matrix.hpp"

namespace momo::num {

// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
// values sorted nonincreasing; vectors holds the matching unit eigenvectors as rows.
struct SymmetricEigen {
  std::vector<double> values;
  Matrix vectors;
};

SymmetricEigen symmetric_eigen(const Matrix& a, double tol = 1e-15, int max_sweeps = 100);

// Principal square root of a symmetric positive semi-definite matrix.
// Negative eigenvalues from round-off are clamped to zero.
Matrix symmetric_sqrt(const Matrix& a);

struct PcaModel {
  std::vector<double> mean;             // length C
  Matrix components;                    // d x C, orthonormal rows
  std::vector<double> explained_variance;  // length d, nonincreasing
};

// Rows of `points` are samples. Covariance uses the 1/n normalisation.
PcaModel pca_fit(const Matrix& points, std::size_t d);
std::vector<double> pca_project(const PcaModel& model, std::span<const double> point);
std::vector<double> pca_reconstruct(const PcaModel& model, std::span<const double> coords);
Matrix pca_project_all(const PcaModel& model, const Matrix& points);

struct KMeansModel {
  Matrix centroids;                      // m x C
  std::vector<std::size_t> assignments;  // per point
  double objective = 0.0;                // sum of squared point-to-centroid distances
  std::vector<double> history;           // objective after each assignment step
  std::size_t iterations = 0;
};

// Lloyd iterations from a seeded k-means++ start. A cluster that goes empty
// is re-seeded at the point farthest from its current centroid (lowest index
// on ties). With restarts > 1 the lowest-objective run is kept.
KMeansModel kmeans_fit(const Matrix& points, std::size_t m, std::uint64_t seed, std::size_t max_iters,
                       std::size_t restarts = 1);

double squared_distance(std::span<const double> a, std::span<const double> b);

}  // namespace momo::num
