#include "momo/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "momo/error.hpp"
#include "momo/kernels.hpp"

namespace momo::num {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

SymmetricEigen symmetric_eigen(const Matrix& input, double tol, int max_sweeps) {
  require(input.rows() == input.cols(), ErrorKind::InvalidArgument, "symmetric_eigen needs a square matrix");
  const std::size_t n = input.rows();
  Matrix a = input;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) a(i, j) = a(j, i) = 0.5 * (a(i, j) + a(j, i));
  Matrix v(n, n);
  for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;

  double scale = 0.0;
  for (double x : a.values()) scale += x * x;
  scale = std::sqrt(scale);

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (std::sqrt(off) <= tol * std::max(scale, 1e-300)) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
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
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });
  SymmetricEigen out;
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t col = order[r];
    out.values[r] = a(col, col);
    // Sign convention: largest-magnitude entry positive.
    std::size_t arg = 0;
    for (std::size_t k = 1; k < n; ++k)
      if (std::abs(v(k, col)) > std::abs(v(arg, col))) arg = k;
    const double sign = v(arg, col) < 0.0 ? -1.0 : 1.0;
    for (std::size_t k = 0; k < n; ++k) out.vectors(r, k) = sign * v(k, col);
  }
  return out;
}

Matrix symmetric_sqrt(const Matrix& a) {
  const SymmetricEigen e = symmetric_eigen(a);
  const std::size_t n = a.rows();
  Matrix out(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    const double s = std::sqrt(std::max(e.values[k], 0.0));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) out(i, j) += s * e.vectors(k, i) * e.vectors(k, j);
  }
  return out;
}

PcaModel pca_fit(const Matrix& points, std::size_t d) {
  const std::size_t n = points.rows();
  const std::size_t c = points.cols();
  require(d >= 1, ErrorKind::InvalidArgument, "pca: d must be >= 1");
  require(d <= c, ErrorKind::InvalidArgument, "pca: d exceeds the point dimension");
  require(n >= d, ErrorKind::InvalidArgument, "pca: fewer points than output dims");

  PcaModel model;
  model.mean.assign(c, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = 0; k < c; ++k) model.mean[k] += points(r, k);
  for (double& m : model.mean) m /= static_cast<double>(n);

  Matrix centered = points;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = 0; k < c; ++k) centered(r, k) -= model.mean[k];
  Matrix cov = matmul_tn(centered, centered);
  for (double& v : cov.values()) v /= static_cast<double>(n);

  const SymmetricEigen e = symmetric_eigen(cov);
  model.components = e.vectors.rows_slice(0, d);
  model.explained_variance.assign(e.values.begin(), e.values.begin() + static_cast<std::ptrdiff_t>(d));
  for (double& v : model.explained_variance) v = std::max(v, 0.0);
  return model;
}

std::vector<double> pca_project(const PcaModel& model, std::span<const double> point) {
  const std::size_t c = model.mean.size();
  require(point.size() == c, ErrorKind::InvalidArgument, "pca_project dimension mismatch");
  std::vector<double> centered(c);
  for (std::size_t k = 0; k < c; ++k) centered[k] = point[k] - model.mean[k];
  std::vector<double> out(model.components.rows());
  for (std::size_t r = 0; r < out.size(); ++r)
    out[r] = kernels::active().dot(model.components.data() + r * c, centered.data(), c);
  return out;
}

std::vector<double> pca_reconstruct(const PcaModel& model, std::span<const double> coords) {
  require(coords.size() == model.components.rows(), ErrorKind::InvalidArgument, "pca_reconstruct dimension mismatch");
  std::vector<double> out = model.mean;
  for (std::size_t r = 0; r < coords.size(); ++r)
    kernels::active().axpy(coords[r], model.components.data() + r * out.size(), out.data(), out.size());
  return out;
}

Matrix pca_project_all(const PcaModel& model, const Matrix& points) {
  Matrix out(points.rows(), model.components.rows());
  for (std::size_t r = 0; r < points.rows(); ++r) {
    const auto p = pca_project(model, points.row(r));
    std::copy(p.begin(), p.end(), out.row(r).begin());
  }
  return out;
}

namespace {

double assign(const Matrix& points, const Matrix& centroids, std::vector<std::size_t>& assignments) {
  double total = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < centroids.rows(); ++k) {
      const double d = squared_distance(points.row(i), centroids.row(k));
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    assignments[i] = best;
    total += best_d;
  }
  return total;
}

Matrix kmeanspp_init(const Matrix& points, std::size_t m, std::mt19937_64& rng) {
  const std::size_t n = points.rows();
  Matrix centroids(m, points.cols());
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::size_t first = pick(rng);
  std::copy(points.row(first).begin(), points.row(first).end(), centroids.row(0).begin());
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  for (std::size_t k = 1; k < m; ++k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dist[i] = std::min(dist[i], squared_distance(points.row(i), centroids.row(k - 1)));
      total += dist[i];
    }
    std::size_t chosen = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      for (chosen = 0; chosen + 1 < n; ++chosen) {
        target -= dist[chosen];
        if (target <= 0.0 && dist[chosen] > 0.0) break;
      }
    } else {
      chosen = pick(rng);
    }
    std::copy(points.row(chosen).begin(), points.row(chosen).end(), centroids.row(k).begin());
  }
  return centroids;
}

KMeansModel lloyd(const Matrix& points, std::size_t m, std::mt19937_64& rng, std::size_t max_iters) {
  const std::size_t n = points.rows();
  const std::size_t c = points.cols();
  KMeansModel model;
  model.centroids = kmeanspp_init(points, m, rng);
  model.assignments.assign(n, 0);
  std::vector<std::size_t> previous;
  for (std::size_t it = 0; it < std::max<std::size_t>(max_iters, 1); ++it) {
    model.objective = assign(points, model.centroids, model.assignments);
    model.history.push_back(model.objective);
    model.iterations = it + 1;
    if (model.assignments == previous) break;
    previous = model.assignments;

    Matrix sums(m, c);
    std::vector<std::size_t> counts(m, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = model.assignments[i];
      ++counts[k];
      for (std::size_t j = 0; j < c; ++j) sums(k, j) += points(i, j);
    }
    for (std::size_t k = 0; k < m; ++k) {
      if (counts[k] == 0) continue;
      for (std::size_t j = 0; j < c; ++j) model.centroids(k, j) = sums(k, j) / static_cast<double>(counts[k]);
    }
    for (std::size_t k = 0; k < m; ++k) {
      if (counts[k] != 0) continue;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = squared_distance(points.row(i), model.centroids.row(model.assignments[i]));
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      std::copy(points.row(far).begin(), points.row(far).end(), model.centroids.row(k).begin());
    }
  }
  if (model.iterations == max_iters && max_iters > 0) {
    // Final centroids were updated after the last assignment; re-sync.
    model.objective = assign(points, model.centroids, model.assignments);
    if (model.objective <= model.history.back()) model.history.push_back(model.objective);
  }
  return model;
}

}  // namespace

KMeansModel kmeans_fit(const Matrix& points, std::size_t m, std::uint64_t seed, std::size_t max_iters,
                       std::size_t restarts) {
  require(m >= 1, ErrorKind::InvalidArgument, "kmeans: m must be >= 1");
  require(points.rows() >= m, ErrorKind::InvalidArgument, "kmeans: fewer points than clusters");
  std::mt19937_64 rng(seed);
  KMeansModel best;
  for (std::size_t r = 0; r < std::max<std::size_t>(restarts, 1); ++r) {
    KMeansModel run = lloyd(points, m, rng, max_iters);
    if (r == 0 || run.objective < best.objective) best = std::move(run);
  }
  return best;
}

}  // namespace momo::num
