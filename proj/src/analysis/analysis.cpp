#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "momo/analysis.hpp"
#include "momo/error.hpp"

namespace momo::ana {

Element parse_element(const std::string& s) {
  if (s == "q" || s == "Q") return Element::Q;
  if (s == "k" || s == "K") return Element::K;
  fail(ErrorKind::InvalidArgument, "element must be q or k, got '" + s + "'");
}

AnalysisConfig AnalysisConfig::resolved(std::size_t layers, std::size_t steps) const {
  AnalysisConfig c = *this;
  if (c.layer < 0) c.layer = static_cast<long>(layers) - 1;
  if (c.step < 0) c.step = std::lround(0.3 * static_cast<double>(steps));
  return c;
}

void AnalysisConfig::validate(std::size_t layers, std::size_t steps, std::size_t width) const {
  require(layer >= 0 && static_cast<std::size_t>(layer) < layers, ErrorKind::InvalidArgument,
          "analysis layer must be in [0, " + std::to_string(layers) + ")");
  require(step >= 0 && static_cast<std::size_t>(step) < steps, ErrorKind::InvalidArgument,
          "analysis step must be in [0, " + std::to_string(steps) + ")");
  require(dims >= 1 && dims <= width, ErrorKind::InvalidArgument, "PCA dims must be in [1, C]");
  require(clusters >= 1, ErrorKind::InvalidArgument, "cluster count must be >= 1");
  require(stride >= 1, ErrorKind::InvalidArgument, "stride must be >= 1");
}

std::vector<model::LayerIO> capture(const model::Denoiser& m, const diff::NoiseSchedule& s,
                                    const motion::Motion& motion, std::size_t step, std::size_t stride) {
  const std::string text = motion.text.value_or("");
  auto ts = diff::sampling_steps(s.steps, stride);
  std::reverse(ts.begin(), ts.end());
  const auto it = std::find(ts.begin(), ts.end(), step);
  require(it != ts.end(), ErrorKind::NotCaptured,
          "step " + std::to_string(step) + " is not visited with stride " + std::to_string(stride));
  const std::size_t index = static_cast<std::size_t>(it - ts.begin());
  const auto cond = m.encode_prompt(text);
  // Invert only as far as needed.
  Matrix x = diff::to_model_space(m, motion);
  for (std::size_t i = 0; i < index; ++i) {
    const Matrix pred = m.denoise(x, ts[i], cond);
    const Matrix eps = diff::implied_noise(x, pred, s.alpha_bar[ts[i]]);
    x = diff::forward_diffuse(pred, s.alpha_bar[ts[i + 1]], eps);
  }
  model::Taps taps;
  taps.capture = true;
  taps.step = static_cast<long>(step);
  m.denoise(x, step, cond, &taps);
  return taps.captured;
}

namespace {

Matrix frame_rows(const Matrix& m) { return m.rows_slice(1, m.rows()); }

const Matrix& pick(const model::LayerIO& io, Element e) { return e == Element::Q ? io.q : io.k; }

void append(FeatureSet& out, std::vector<Matrix>& parts, const Matrix& frames, std::size_t motion) {
  for (std::size_t n = 0; n < frames.rows(); ++n) out.keys.push_back({motion, n});
  parts.push_back(frames);
}

}  // namespace

FeatureSet collect_features(const model::Denoiser& m, const diff::NoiseSchedule& s,
                            const std::vector<motion::Motion>& motions, const AnalysisConfig& cfg) {
  const AnalysisConfig c = cfg.resolved(m.config().layers, s.steps);
  c.validate(m.config().layers, s.steps, m.config().latent);
  FeatureSet out;
  std::vector<Matrix> parts;
  for (std::size_t i = 0; i < motions.size(); ++i) {
    const auto io = capture(m, s, motions[i], static_cast<std::size_t>(c.step), c.stride);
    append(out, parts, frame_rows(pick(io[static_cast<std::size_t>(c.layer)], c.element)), i);
  }
  out.vectors = vstack(parts);
  return out;
}

FeatureSet collect_features(const model::TraceBundle& trace, const std::vector<std::string>& streams,
                            std::size_t layer, std::size_t step, Element element) {
  FeatureSet out;
  std::vector<Matrix> parts;
  const char* el = element == Element::Q ? "q" : "k";
  for (std::size_t i = 0; i < streams.size(); ++i) {
    append(out, parts, frame_rows(trace.get({streams[i], layer, step, "cond", el})), i);
  }
  out.vectors = vstack(parts);
  return out;
}

ClusterResult cluster(const FeatureSet& features, const AnalysisConfig& cfg) {
  require(features.vectors.rows() >= cfg.clusters, ErrorKind::InvalidArgument,
          "fewer frames than clusters");
  ClusterResult r;
  r.pca = num::pca_fit(features.vectors, cfg.dims);
  const Matrix coords = num::pca_project_all(r.pca, features.vectors);
  r.kmeans = num::kmeans_fit(coords, cfg.clusters, cfg.seed, 300, 4);
  r.labels = r.kmeans.assignments;
  return r;
}

ClusterResult qk_cluster(const model::Denoiser& m, const diff::NoiseSchedule& s,
                         const std::vector<motion::Motion>& motions, const AnalysisConfig& cfg) {
  return cluster(collect_features(m, s, motions, cfg), cfg);
}

double purity(const std::vector<std::size_t>& clusters, const std::vector<std::size_t>& truth) {
  require(clusters.size() == truth.size(), ErrorKind::InvalidArgument, "purity: label lists differ in length");
  if (clusters.empty()) return 0.0;
  std::map<std::size_t, std::map<std::size_t, std::size_t>> counts;
  for (std::size_t i = 0; i < clusters.size(); ++i) ++counts[clusters[i]][truth[i]];
  std::size_t hits = 0;
  for (const auto& [c, by_label] : counts) {
    std::size_t best = 0;
    for (const auto& [l, n] : by_label) best = std::max(best, n);
    hits += best;
  }
  return static_cast<double>(hits) / static_cast<double>(clusters.size());
}

std::size_t phase_bin(double phase, std::size_t bins) {
  double p = phase - std::floor(phase);
  return std::min(bins - 1, static_cast<std::size_t>(p * static_cast<double>(bins)));
}

std::vector<double> frame_index_correlation(const FeatureSet& features, const ClusterResult& result) {
  const Matrix coords = num::pca_project_all(result.pca, features.vectors);
  const std::size_t n = coords.rows();
  std::vector<double> out(coords.cols(), 0.0);
  if (n < 2) return out;
  double fm = 0.0;
  for (const auto& k : features.keys) fm += static_cast<double>(k.frame);
  fm /= static_cast<double>(n);
  for (std::size_t d = 0; d < coords.cols(); ++d) {
    double cm = 0.0;
    for (std::size_t i = 0; i < n; ++i) cm += coords(i, d);
    cm /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = static_cast<double>(features.keys[i].frame) - fm, b = coords(i, d) - cm;
      sxy += a * b;
      sxx += a * a;
      syy += b * b;
    }
    out[d] = (sxx > 0.0 && syy > 0.0) ? sxy / std::sqrt(sxx * syy) : 0.0;
  }
  return out;
}

Correspondence correspondence(const Matrix& q_leader_frames, const Matrix& k_follower_frames) {
  require(q_leader_frames.cols() == k_follower_frames.cols(), ErrorKind::InvalidArgument,
          "correspondence: Q and K widths differ");
  require(k_follower_frames.rows() >= 1, ErrorKind::InvalidArgument, "correspondence: follower has no frames");
  Correspondence c;
  c.logits = matmul_nt(q_leader_frames, k_follower_frames);
  c.argmax.resize(c.logits.rows());
  for (std::size_t n = 0; n < c.logits.rows(); ++n) {
    const auto row = c.logits.row(n);
    c.argmax[n] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return c;
}

Correspondence correspondence(const model::Denoiser& m, const diff::NoiseSchedule& s, const motion::Motion& leader,
                              const motion::Motion& follower, const AnalysisConfig& cfg) {
  const AnalysisConfig c = cfg.resolved(m.config().layers, s.steps);
  c.validate(m.config().layers, s.steps, m.config().latent);
  const auto l = static_cast<std::size_t>(c.layer);
  const auto a = capture(m, s, leader, static_cast<std::size_t>(c.step), c.stride);
  const auto b = capture(m, s, follower, static_cast<std::size_t>(c.step), c.stride);
  return correspondence(frame_rows(a[l].q), frame_rows(b[l].k));
}

double phase_distance(double a, double b) {
  double d = std::fabs(a - b);
  d -= std::floor(d);
  return std::min(d, 1.0 - d);
}

Matrix attention_map(const Matrix& q_frames, const Matrix& k_frames, std::size_t heads) {
  require(q_frames.cols() == k_frames.cols() && heads >= 1 && q_frames.cols() % heads == 0,
          ErrorKind::InvalidArgument, "attention_map: inconsistent widths");
  const std::size_t dh = q_frames.cols() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix out(q_frames.rows(), k_frames.rows());
  std::vector<double> row(k_frames.rows());
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < q_frames.rows(); ++i) {
      double hi = -INFINITY;
      for (std::size_t j = 0; j < k_frames.rows(); ++j) {
        double d = 0.0;
        for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) d += q_frames(i, c) * k_frames(j, c);
        row[j] = d * scale;
        hi = std::max(hi, row[j]);
      }
      double z = 0.0;
      for (double& v : row) z += v = std::exp(v - hi);
      for (std::size_t j = 0; j < row.size(); ++j) out(i, j) += row[j] / z / static_cast<double>(heads);
    }
  }
  return out;
}

AttentionMaps attention_maps(const model::Denoiser& m, const diff::NoiseSchedule& s, const motion::Motion& leader,
                             const motion::Motion& follower, const AnalysisConfig& cfg) {
  const AnalysisConfig c = cfg.resolved(m.config().layers, s.steps);
  c.validate(m.config().layers, s.steps, m.config().latent);
  const auto l = static_cast<std::size_t>(c.layer);
  const auto a = capture(m, s, leader, static_cast<std::size_t>(c.step), c.stride);
  const auto b = capture(m, s, follower, static_cast<std::size_t>(c.step), c.stride);
  const std::size_t h = m.config().heads;
  return {attention_map(frame_rows(a[l].q), frame_rows(a[l].k), h),
          attention_map(frame_rows(b[l].q), frame_rows(b[l].k), h),
          attention_map(frame_rows(a[l].q), frame_rows(b[l].k), h)};
}

double diagonal_contrast(const Matrix& map, std::size_t lag) {
  require(map.rows() == map.cols() && lag >= 2 && lag < map.rows(), ErrorKind::InvalidArgument,
          "diagonal_contrast: needs a square map and 2 <= lag < N");
  double on = 0.0, off = 0.0;
  std::size_t n_on = 0, n_off = 0;
  for (std::size_t i = 0; i < map.rows(); ++i) {
    for (std::size_t j = 0; j < map.cols(); ++j) {
      const std::size_t d = i > j ? i - j : j - i;
      if (d == lag) {
        on += map(i, j);
        ++n_on;
      } else if (d != 0 && (d + 1 < lag || d > lag + 1)) {
        off += map(i, j);
        ++n_off;
      }
    }
  }
  if (n_on == 0 || n_off == 0 || off == 0.0) return 0.0;
  return (on / static_cast<double>(n_on)) / (off / static_cast<double>(n_off));
}

// ---- output -----------------------------------------------------------------

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  require(f.good(), ErrorKind::Io, "cannot write " + path.string());
  return f;
}

}  // namespace

void write_cluster_csv(const std::filesystem::path& path, const std::vector<ClusterRow>& rows) {
  auto f = open_out(path);
  f << "motion,frame,cluster,phase_bin,motif\n";
  for (const auto& r : rows) f << r.motion << ',' << r.frame << ',' << r.cluster << ',' << r.phase_bin << ',' << r.motif << '\n';
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
  auto f = open_out(path);
  char buf[32];
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
      f << (c ? "," : "") << buf;
    }
    f << '\n';
  }
}

void write_heatmap_svg(const std::filesystem::path& path, const Matrix& m) {
  auto f = open_out(path);
  const int cell = 6;
  double lo = INFINITY, hi = -INFINITY;
  for (double v : m.values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = hi > lo ? hi - lo : 1.0;
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << m.cols() * cell << "\" height=\"" << m.rows() * cell
    << "\">\n";
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      const int g = static_cast<int>(std::lround(255.0 * (1.0 - (m(r, c) - lo) / span)));
      f << "<rect x=\"" << c * cell << "\" y=\"" << r * cell << "\" width=\"" << cell << "\" height=\"" << cell
        << "\" fill=\"rgb(" << g << ',' << g << ",255)\"/>\n";
    }
  }
  f << "</svg>\n";
}

void write_strip_svg(const std::filesystem::path& path, const motion::Motion& motion,
                     const std::vector<std::size_t>& labels, std::size_t every) {
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  require(every >= 1, ErrorKind::InvalidArgument, "strip step must be >= 1");
  const motion::Positions p = motion::fk(motion);
  const double scale = 40.0, gap = 50.0;
  const std::size_t shown = (p.frames + every - 1) / every;
  auto f = open_out(path);
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << shown * gap + gap << "\" height=\"" << 2.2 * scale + 20
    << "\">\n";
  for (std::size_t k = 0; k < shown; ++k) {
    const std::size_t n = k * every;
    const std::string color = n < labels.size() ? palette[labels[n] % std::size(palette)] : "#000000";
    const motion::Vec3 root = p.at(n, 0);
    for (std::size_t j = 1; j < p.joints; ++j) {
      const motion::Vec3 a = p.at(n, static_cast<std::size_t>(motion.skeleton.parents[j])) - root;
      const motion::Vec3 b = p.at(n, j) - root;
      const double cx = gap * (static_cast<double>(k) + 1.0), base = 1.2 * scale + 10;
      f << "<line x1=\"" << cx + scale * a.z() << "\" y1=\"" << base - scale * a.y() << "\" x2=\"" << cx + scale * b.z()
        << "\" y2=\"" << base - scale * b.y() << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    }
  }
  f << "</svg>\n";
}

}  // namespace momo::ana
