#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "momo/denoiser.hpp"
#include "momo/diffusion.hpp"
#include "momo/linalg.hpp"
#include "momo/motion.hpp"

namespace momo::ana {

enum class Element { Q, K };
Element parse_element(const std::string& s);

struct AnalysisConfig {
  long layer = -1;  // 0-based; negative means L-1
  long step = -1;   // negative means round(0.3T)
  std::size_t dims = 10;
  std::size_t clusters = 10;
  Element element = Element::Q;
  std::uint64_t seed = 0;
  std::size_t stride = 1;

  AnalysisConfig resolved(std::size_t layers, std::size_t steps) const;
  void validate(std::size_t layers, std::size_t steps, std::size_t width) const;
};

struct FrameKey {
  std::size_t motion = 0;
  std::size_t frame = 0;
};

struct FeatureSet {
  Matrix vectors;  // one row per frame token
  std::vector<FrameKey> keys;
};

// Self-attention inputs and outputs of every layer, cond branch, for a motion
// inverted to `step` under its own text.
std::vector<model::LayerIO> capture(const model::Denoiser& m, const diff::NoiseSchedule& s,
                                    const motion::Motion& motion, std::size_t step, std::size_t stride = 1);

FeatureSet collect_features(const model::Denoiser& m, const diff::NoiseSchedule& s,
                            const std::vector<motion::Motion>& motions, const AnalysisConfig& cfg);
// Same, read from a trace bundle: stream names are looked up at (layer, step, "cond").
FeatureSet collect_features(const model::TraceBundle& trace, const std::vector<std::string>& streams,
                            std::size_t layer, std::size_t step, Element element);

struct ClusterResult {
  std::vector<std::size_t> labels;
  num::PcaModel pca;
  num::KMeansModel kmeans;
};

ClusterResult cluster(const FeatureSet& features, const AnalysisConfig& cfg);
ClusterResult qk_cluster(const model::Denoiser& m, const diff::NoiseSchedule& s,
                         const std::vector<motion::Motion>& motions, const AnalysisConfig& cfg);

// Size-weighted majority-label fraction over clusters.
double purity(const std::vector<std::size_t>& clusters, const std::vector<std::size_t>& truth);
std::size_t phase_bin(double phase, std::size_t bins = 8);
// Correlation of each PCA coordinate with the frame index.
std::vector<double> frame_index_correlation(const FeatureSet& features, const ClusterResult& result);

struct Correspondence {
  std::vector<std::size_t> argmax;  // per leader frame
  Matrix logits;                    // N_ldr x N_flw, q_n . k_j over the full width
};

Correspondence correspondence(const Matrix& q_leader_frames, const Matrix& k_follower_frames);
Correspondence correspondence(const model::Denoiser& m, const diff::NoiseSchedule& s, const motion::Motion& leader,
                              const motion::Motion& follower, const AnalysisConfig& cfg);

// Circular distance between two phases in [0, 1), as a cycle fraction.
double phase_distance(double a, double b);

struct AttentionMaps {
  Matrix leader_leader;
  Matrix follower_follower;
  Matrix leader_follower;
};

// Per-head row softmax of q k^T / sqrt(C/h) over frame tokens, averaged over heads.
Matrix attention_map(const Matrix& q_frames, const Matrix& k_frames, std::size_t heads);
AttentionMaps attention_maps(const model::Denoiser& m, const diff::NoiseSchedule& s, const motion::Motion& leader,
                             const motion::Motion& follower, const AnalysisConfig& cfg);

// Mean of the map on the diagonal at `lag` over the mean of entries with
// |i - j| outside {0, lag-1, lag, lag+1} (and their mirrors).
double diagonal_contrast(const Matrix& map, std::size_t lag);

// ---- output -----------------------------------------------------------------

struct ClusterRow {
  std::size_t motion, frame, cluster, phase_bin;
  std::string motif;
};

void write_cluster_csv(const std::filesystem::path& path, const std::vector<ClusterRow>& rows);
void write_matrix_csv(const std::filesystem::path& path, const Matrix& m);
void write_heatmap_svg(const std::filesystem::path& path, const Matrix& m);
// One stick figure per frame, side view, colored by cluster label.
void write_strip_svg(const std::filesystem::path& path, const motion::Motion& motion,
                     const std::vector<std::size_t>& labels, std::size_t every = 1);

}  // namespace momo::ana
