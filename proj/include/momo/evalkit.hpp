#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "momo/matrix.hpp"
#include "momo/motion.hpp"

namespace momo::eval {

const std::vector<std::string>& leader_keywords();
const std::vector<std::string>& follower_keywords();

// Lowercase substring containment of any keyword.
bool contains_any(const std::string& text, const std::vector<std::string>& keywords);

struct BenchmarkPair {
  std::size_t id = 0;
  std::size_t leader = 0;    // corpus index
  std::size_t follower = 0;  // corpus index
};

struct BenchmarkOptions {
  std::vector<std::string> leader_keywords = eval::leader_keywords();
  std::vector<std::string> follower_keywords = eval::follower_keywords();
  std::size_t cap = 20;
  // Drop leader candidates whose text also matches a follower keyword.
  bool exclude_styled_leaders = false;
  std::size_t max_pairs = 0;  // 0 keeps every pair
};

// Leader-major greedy walk over the (leader, follower) product in index
// order; a sample never pairs with itself.
std::vector<BenchmarkPair> build_benchmark(const std::vector<std::string>& labels, const BenchmarkOptions& options);

nlohmann::json benchmark_to_json(const std::vector<BenchmarkPair>& pairs);
std::vector<BenchmarkPair> benchmark_from_json(const nlohmann::json& j);

// ---- metrics ------------------------------------------------------------------

// Labels thresholded at 0.5; hits / (N x 4).
double contact_similarity(const Matrix& a, const Matrix& b);
double foot_contact_similarity(const motion::Motion& out, const motion::Motion& leader);

enum class Channel { Rotations, Locations };

// Fraction of out frames nearer (Euclidean over the channel block) to some
// follower frame than to any leader frame; ties within 1e-9 score one half.
double follower_similarity(const motion::Motion& out, const motion::Motion& leader, const motion::Motion& follower,
                           Channel channel);
double follower_similarity(const Matrix& out, const Matrix& leader, const Matrix& follower);

// Mean squared second difference of global joint positions.
double jitter(const motion::Motion& m);

inline constexpr std::size_t kDescriptorDim = 32;
// Per-joint speed mean and std (16), foot contact duty (4), mean bone
// elevation of the 7 bones (7), std of both arm elevations (2), root height
// mean and std (2), mean absolute yaw rate (1).
std::vector<double> descriptor(const motion::Motion& m);

struct Gaussian {
  std::vector<double> mean;
  Matrix cov;  // unbiased; 1e-6 ridge when singular
};

Gaussian fit_gaussian(const Matrix& rows);
double frechet_distance(const Gaussian& a, const Gaussian& b);
double frechet_feature_distance(const std::vector<motion::Motion>& a, const std::vector<motion::Motion>& b);
// One descriptor per row.
Matrix descriptor_matrix(const std::vector<motion::Motion>& motions);

// One-vs-rest ridge regression over standardised descriptors.
class MotifClassifier {
 public:
  static MotifClassifier fit(const std::vector<motion::Motion>& motions, const std::vector<std::string>& labels,
                             double ridge = 1e-3);
  std::vector<double> scores(const motion::Motion& m) const;
  // Class names, best first.
  std::vector<std::string> ranking(const motion::Motion& m) const;
  const std::vector<std::string>& classes() const noexcept { return classes_; }

 private:
  std::vector<std::string> classes_;
  std::vector<double> mu_, sd_;
  Matrix w_;  // (D+1) x classes
};

struct Precision {
  double top1 = 0.0;
  double top3 = 0.0;
};

Precision motif_precision(const std::vector<motion::Motion>& outputs, const std::vector<std::string>& motifs,
                          const MotifClassifier& classifier);

// ---- benchmark run --------------------------------------------------------------

struct PairMetrics {
  std::size_t pair = 0;
  double contact = 0.0;
  double follower_rot = 0.0;
  double follower_loc = 0.0;
  double motif_top1 = 0.0;
  double motif_top3 = 0.0;
  double jitter = 0.0;
};

struct MetricsReport {
  std::string method;
  std::vector<PairMetrics> rows;  // sorted by pair id
  PairMetrics mean;               // pair field holds the row count
  std::optional<double> frechet;  // outputs vs reference set; needs >= 33 outputs

  nlohmann::json aggregate_json() const;
};

struct BenchmarkData {
  const std::vector<motion::Motion>* motions = nullptr;  // corpus, indexed by pair refs
  const std::vector<std::string>* motifs = nullptr;      // per corpus sample
  const MotifClassifier* classifier = nullptr;
  const std::vector<motion::Motion>* reference = nullptr;  // Frechet reference set
};

using Method = std::function<motion::Motion(const BenchmarkPair& pair)>;

// Rows already present in `csv` (same method) are kept and not recomputed.
// The CSV is rewritten after every pair and finally in pair order. Output
// descriptors for the Frechet term are cached beside it in "<csv>.desc".
MetricsReport run_benchmark(const std::vector<BenchmarkPair>& pairs, const std::string& method_name,
                            const Method& method, const BenchmarkData& data,
                            const std::optional<std::filesystem::path>& csv = std::nullopt,
                            const std::optional<std::filesystem::path>& aggregate = std::nullopt);

PairMetrics score_pair(const motion::Motion& out, const motion::Motion& leader, const motion::Motion& follower,
                       const std::string& follower_motif, const MotifClassifier& classifier);

}  // namespace momo::eval
