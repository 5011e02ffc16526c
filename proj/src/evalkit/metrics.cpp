#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "momo/error.hpp"
#include "momo/evalkit.hpp"
#include "momo/linalg.hpp"

namespace momo::eval {

double contact_similarity(const Matrix& a, const Matrix& b) {
  require(a.same_shape(b) && a.cols() == 4, ErrorKind::InvalidArgument,
          "contact_similarity: label matrices must both be N x 4");
  if (a.rows() == 0) return 1.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < a.size(); ++i) hits += (a.values()[i] > 0.5) == (b.values()[i] > 0.5);
  return static_cast<double>(hits) / static_cast<double>(a.size());
}

double foot_contact_similarity(const motion::Motion& out, const motion::Motion& leader) {
  require(out.frames() == leader.frames(), ErrorKind::InvalidArgument,
          "foot_contact_similarity: frame counts differ (" + std::to_string(out.frames()) + " vs " +
              std::to_string(leader.frames()) + ")");
  const motion::FeatureLayout l(out.skeleton.joints());
  return contact_similarity(out.features.cols_slice(l.contacts, l.contacts + 4),
                            leader.features.cols_slice(l.contacts, l.contacts + 4));
}

double follower_similarity(const Matrix& out, const Matrix& leader, const Matrix& follower) {
  require(out.cols() == leader.cols() && out.cols() == follower.cols(), ErrorKind::InvalidArgument,
          "follower_similarity: channel widths differ");
  require(leader.rows() >= 1 && follower.rows() >= 1, ErrorKind::InvalidArgument,
          "follower_similarity: leader and follower need frames");
  if (out.rows() == 0) return 0.0;
  auto nearest = [](std::span<const double> x, const Matrix& set) {
    double best = INFINITY;
    for (std::size_t j = 0; j < set.rows(); ++j) best = std::min(best, num::squared_distance(x, set.row(j)));
    return std::sqrt(best);
  };
  double score = 0.0;
  for (std::size_t n = 0; n < out.rows(); ++n) {
    const double df = nearest(out.row(n), follower), dl = nearest(out.row(n), leader);
    if (std::fabs(df - dl) <= 1e-9) score += 0.5;
    else if (df < dl) score += 1.0;
  }
  return score / static_cast<double>(out.rows());
}

double follower_similarity(const motion::Motion& out, const motion::Motion& leader, const motion::Motion& follower,
                           Channel channel) {
  const motion::FeatureLayout l(out.skeleton.joints());
  const std::size_t a = channel == Channel::Rotations ? l.joint_rot : l.joint_pos;
  const std::size_t b = a + (channel == Channel::Rotations ? l.rot_size() : l.pos_size());
  return follower_similarity(out.features.cols_slice(a, b), leader.features.cols_slice(a, b),
                             follower.features.cols_slice(a, b));
}

double jitter(const motion::Motion& m) {
  if (m.frames() < 3) return 0.0;
  const motion::Positions p = motion::fk(m);
  double acc = 0.0;
  for (std::size_t n = 1; n + 1 < p.frames; ++n)
    for (std::size_t j = 0; j < p.joints; ++j) acc += (p.at(n + 1, j) - 2.0 * p.at(n, j) + p.at(n - 1, j)).squaredNorm();
  return acc / static_cast<double>((p.frames - 2) * p.joints);
}

std::vector<double> descriptor(const motion::Motion& m) {
  require(m.skeleton.joints() == 8, ErrorKind::InvalidArgument, "descriptor: needs the 8-joint desk skeleton");
  require(m.frames() >= 2, ErrorKind::InvalidArgument, "descriptor: needs at least 2 frames");
  const motion::FeatureLayout l(8);
  const motion::Positions p = motion::fk(m);
  const std::size_t n = m.frames();
  std::vector<double> d;
  d.reserve(kDescriptorDim);
  auto mean_std = [](const std::vector<double>& v) {
    const double mu = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mu) * (x - mu);
    return std::pair{mu, std::sqrt(var / static_cast<double>(v.size()))};
  };
  for (std::size_t j = 0; j < 8; ++j) {
    std::vector<double> speed;
    for (std::size_t k = 0; k + 1 < n; ++k) speed.push_back((p.at(k + 1, j) - p.at(k, j)).norm());
    const auto [mu, sd] = mean_std(speed);
    d.push_back(mu);
    d.push_back(sd);
  }
  for (std::size_t c = 0; c < 4; ++c) {
    double on = 0.0;
    for (std::size_t k = 0; k < n; ++k) on += m.features(k, l.contacts + c) > 0.5 ? 1.0 : 0.0;
    d.push_back(on / static_cast<double>(n));
  }
  std::vector<std::vector<double>> elev(8);
  for (std::size_t j = 1; j < 8; ++j)
    for (std::size_t k = 0; k < n; ++k) elev[j].push_back(motion::bone_elevation(m, k, j));
  for (std::size_t j = 1; j < 8; ++j) d.push_back(mean_std(elev[j]).first);
  d.push_back(mean_std(elev[6]).second);
  d.push_back(mean_std(elev[7]).second);
  std::vector<double> height, yaw;
  for (std::size_t k = 0; k < n; ++k) {
    height.push_back(m.features(k, l.root_height));
    yaw.push_back(std::fabs(m.features(k, l.root_yaw_vel)));
  }
  const auto [hm, hs] = mean_std(height);
  d.push_back(hm);
  d.push_back(hs);
  d.push_back(mean_std(yaw).first);
  return d;
}

Matrix descriptor_matrix(const std::vector<motion::Motion>& motions) {
  Matrix out(motions.size(), kDescriptorDim);
  for (std::size_t i = 0; i < motions.size(); ++i) {
    const auto d = descriptor(motions[i]);
    std::copy(d.begin(), d.end(), out.row(i).begin());
  }
  return out;
}

Gaussian fit_gaussian(const Matrix& rows) {
  require(rows.rows() >= 2, ErrorKind::InvalidArgument, "fit_gaussian: needs at least 2 samples");
  const std::size_t n = rows.rows(), d = rows.cols();
  Gaussian g;
  g.mean.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) g.mean[c] += rows(i, c);
  for (double& v : g.mean) v /= static_cast<double>(n);
  g.cov = Matrix(d, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) g.cov(a, b) += (rows(i, a) - g.mean[a]) * (rows(i, b) - g.mean[b]);
  for (double& v : g.cov.values()) v /= static_cast<double>(n - 1);
  const auto eig = num::symmetric_eigen(g.cov);
  if (eig.values.back() <= 1e-12) {
    for (std::size_t a = 0; a < d; ++a) g.cov(a, a) += 1e-6;
  }
  return g;
}

double frechet_distance(const Gaussian& a, const Gaussian& b) {
  require(a.mean.size() == b.mean.size() && a.cov.same_shape(b.cov) && a.cov.rows() == a.mean.size(),
          ErrorKind::InvalidArgument, "frechet_distance: dimension mismatch");
  double mean_term = 0.0;
  for (std::size_t i = 0; i < a.mean.size(); ++i) mean_term += (a.mean[i] - b.mean[i]) * (a.mean[i] - b.mean[i]);
  const Matrix ra = num::symmetric_sqrt(a.cov);
  Matrix inner = matmul(matmul(ra, b.cov), ra);
  for (std::size_t r = 0; r < inner.rows(); ++r)
    for (std::size_t c = r + 1; c < inner.cols(); ++c) inner(r, c) = inner(c, r) = 0.5 * (inner(r, c) + inner(c, r));
  const Matrix cross = num::symmetric_sqrt(inner);
  double tr = 0.0;
  for (std::size_t i = 0; i < a.mean.size(); ++i) tr += a.cov(i, i) + b.cov(i, i) - 2.0 * cross(i, i);
  return std::max(0.0, mean_term + tr);
}

double frechet_feature_distance(const std::vector<motion::Motion>& a, const std::vector<motion::Motion>& b) {
  require(a.size() >= kDescriptorDim + 1 && b.size() >= kDescriptorDim + 1, ErrorKind::InvalidArgument,
          "frechet_feature_distance: each set needs at least " + std::to_string(kDescriptorDim + 1) + " motions");
  return frechet_distance(fit_gaussian(descriptor_matrix(a)), fit_gaussian(descriptor_matrix(b)));
}

MotifClassifier MotifClassifier::fit(const std::vector<motion::Motion>& motions, const std::vector<std::string>& labels,
                                     double ridge) {
  require(motions.size() == labels.size() && !motions.empty(), ErrorKind::InvalidArgument,
          "classifier: need one label per motion");
  require(ridge > 0.0, ErrorKind::InvalidArgument, "classifier: ridge must be > 0");
  MotifClassifier c;
  c.classes_ = labels;
  std::sort(c.classes_.begin(), c.classes_.end());
  c.classes_.erase(std::unique(c.classes_.begin(), c.classes_.end()), c.classes_.end());
  const Matrix x = descriptor_matrix(motions);
  const std::size_t n = x.rows(), d = x.cols(), k = c.classes_.size();
  c.mu_.assign(d, 0.0);
  c.sd_.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) c.mu_[j] += x(i, j) / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) c.sd_[j] += (x(i, j) - c.mu_[j]) * (x(i, j) - c.mu_[j]) / static_cast<double>(n);
  for (double& s : c.sd_) s = std::max(std::sqrt(s), 1e-8);
  Eigen::MatrixXd a(n, d + 1), y = Eigen::MatrixXd::Zero(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) a(i, j) = (x(i, j) - c.mu_[j]) / c.sd_[j];
    a(i, d) = 1.0;
    const auto it = std::lower_bound(c.classes_.begin(), c.classes_.end(), labels[i]);
    y(i, it - c.classes_.begin()) = 1.0;
  }
  Eigen::MatrixXd gram = a.transpose() * a;
  gram.diagonal().array() += ridge;
  const Eigen::MatrixXd w = gram.ldlt().solve(a.transpose() * y);
  c.w_ = Matrix(d + 1, k);
  for (std::size_t i = 0; i <= d; ++i)
    for (std::size_t j = 0; j < k; ++j) c.w_(i, j) = w(i, j);
  return c;
}

std::vector<double> MotifClassifier::scores(const motion::Motion& m) const {
  const auto x = descriptor(m);
  std::vector<double> s(classes_.size(), 0.0);
  for (std::size_t j = 0; j < classes_.size(); ++j) {
    double acc = w_(x.size(), j);
    for (std::size_t i = 0; i < x.size(); ++i) acc += (x[i] - mu_[i]) / sd_[i] * w_(i, j);
    s[j] = acc;
  }
  return s;
}

std::vector<std::string> MotifClassifier::ranking(const motion::Motion& m) const {
  const auto s = scores(m);
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
  std::vector<std::string> out;
  for (std::size_t i : idx) out.push_back(classes_[i]);
  return out;
}

Precision motif_precision(const std::vector<motion::Motion>& outputs, const std::vector<std::string>& motifs,
                          const MotifClassifier& classifier) {
  require(outputs.size() == motifs.size(), ErrorKind::InvalidArgument, "motif_precision: need one motif per output");
  Precision p;
  if (outputs.empty()) return p;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const auto r = classifier.ranking(outputs[i]);
    if (r[0] == motifs[i]) p.top1 += 1.0;
    if (std::find(r.begin(), r.begin() + std::min<std::size_t>(3, r.size()), motifs[i]) !=
        r.begin() + std::min<std::size_t>(3, r.size()))
      p.top3 += 1.0;
  }
  p.top1 /= static_cast<double>(outputs.size());
  p.top3 /= static_cast<double>(outputs.size());
  return p;
}

}  // namespace momo::eval
