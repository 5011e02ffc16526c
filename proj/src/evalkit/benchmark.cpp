#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "momo/error.hpp"
#include "momo/evalkit.hpp"

namespace momo::eval {

const std::vector<std::string>& leader_keywords() {
  static const std::vector<std::string> k = {"run", "walk", "jump", "danc"};
  return k;
}

const std::vector<std::string>& follower_keywords() {
  static const std::vector<std::string> k = {"gorilla", "drunk", "robot", "chicken", "frog", "monkey",
                                             "style",   "like",  "old",   "child",   "raise", "clap",
                                             "wav",     "kick",  "punch", "push",    "pull"};
  return k;
}

bool contains_any(const std::string& text, const std::vector<std::string>& keywords) {
  std::string lower = text;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (const auto& k : keywords) {
    std::string kl = k;
    std::transform(kl.begin(), kl.end(), kl.begin(), [](unsigned char c) { return std::tolower(c); });
    if (!kl.empty() && lower.find(kl) != std::string::npos) return true;
  }
  return false;
}

std::vector<BenchmarkPair> build_benchmark(const std::vector<std::string>& labels, const BenchmarkOptions& o) {
  require(o.cap >= 1, ErrorKind::InvalidArgument, "benchmark cap must be >= 1");
  std::vector<std::size_t> leaders, followers;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool lead = contains_any(labels[i], o.leader_keywords);
    const bool styled = contains_any(labels[i], o.follower_keywords);
    if (lead && !(o.exclude_styled_leaders && styled)) leaders.push_back(i);
    if (styled) followers.push_back(i);
  }
  std::vector<BenchmarkPair> pairs;
  std::vector<std::size_t> used(followers.size(), 0);
  for (std::size_t l : leaders) {
    if (o.max_pairs != 0 && pairs.size() >= o.max_pairs) break;
    for (std::size_t k = 0; k < followers.size(); ++k) {
      if (followers[k] == l || used[k] >= o.cap) continue;
      ++used[k];
      pairs.push_back({pairs.size(), l, followers[k]});
      break;
    }
  }
  if (pairs.empty()) std::fprintf(stderr, "warning: benchmark filter produced no pairs\n");
  return pairs;
}

nlohmann::json benchmark_to_json(const std::vector<BenchmarkPair>& pairs) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& p : pairs) a.push_back({{"id", p.id}, {"leader", p.leader}, {"follower", p.follower}});
  return {{"pairs", a}};
}

std::vector<BenchmarkPair> benchmark_from_json(const nlohmann::json& j) {
  require(j.is_object() && j.contains("pairs") && j["pairs"].is_array(), ErrorKind::Schema,
          "benchmark: expected an object with a 'pairs' array");
  std::vector<BenchmarkPair> out;
  for (std::size_t i = 0; i < j["pairs"].size(); ++i) {
    const auto& p = j["pairs"][i];
    for (const char* f : {"id", "leader", "follower"}) {
      require(p.contains(f) && p[f].is_number_unsigned(), ErrorKind::Schema,
              "benchmark: pairs[" + std::to_string(i) + "]." + f + " must be a non-negative integer");
    }
    out.push_back({p["id"].get<std::size_t>(), p["leader"].get<std::size_t>(), p["follower"].get<std::size_t>()});
  }
  return out;
}

// ---- run ----------------------------------------------------------------------

namespace {

const char* kHeader =
    "pair_id,method,contact_similarity,follower_rot_similarity,follower_loc_similarity,frechet_desc,motif_top1,"
    "motif_top3,jitter";

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::map<std::size_t, PairMetrics> read_rows(const std::filesystem::path& path, const std::string& method) {
  std::map<std::size_t, PairMetrics> rows;
  std::ifstream f(path);
  if (!f) return rows;
  std::string line;
  std::getline(f, line);
  if (line != kHeader) return rows;
  while (std::getline(f, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.emplace_back();
    if (cells.size() != 9 || cells[1] != method) continue;
    try {
      PairMetrics m;
      m.pair = std::stoul(cells[0]);
      m.contact = std::stod(cells[2]);
      m.follower_rot = std::stod(cells[3]);
      m.follower_loc = std::stod(cells[4]);
      m.motif_top1 = std::stod(cells[6]);
      m.motif_top3 = std::stod(cells[7]);
      m.jitter = std::stod(cells[8]);
      rows[m.pair] = m;
    } catch (const std::exception&) {
      // Torn last line from an interrupted run.
    }
  }
  return rows;
}

void write_rows(const std::filesystem::path& path, const std::string& method,
                const std::map<std::size_t, PairMetrics>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    require(f.good(), ErrorKind::Io, "cannot write " + tmp.string());
    f << kHeader << '\n';
    for (const auto& [id, m] : rows) {
      f << id << ',' << method << ',' << fmt(m.contact) << ',' << fmt(m.follower_rot) << ',' << fmt(m.follower_loc)
        << ",," << fmt(m.motif_top1) << ',' << fmt(m.motif_top3) << ',' << fmt(m.jitter) << '\n';
    }
  }
  std::filesystem::rename(tmp, path);
}

std::map<std::size_t, std::vector<double>> read_descriptors(const std::filesystem::path& path) {
  std::map<std::size_t, std::vector<double>> out;
  std::ifstream f(path);
  std::string line;
  while (std::getline(f, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != kDescriptorDim + 1) continue;
    try {
      std::vector<double> d;
      for (std::size_t i = 1; i < cells.size(); ++i) d.push_back(std::stod(cells[i]));
      out[std::stoul(cells[0])] = std::move(d);
    } catch (const std::exception&) {
    }
  }
  return out;
}

void write_descriptors(const std::filesystem::path& path, const std::map<std::size_t, std::vector<double>>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    require(f.good(), ErrorKind::Io, "cannot write " + tmp.string());
    for (const auto& [id, d] : rows) {
      f << id;
      for (double v : d) f << ',' << fmt(v);
      f << '\n';
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

PairMetrics score_pair(const motion::Motion& out, const motion::Motion& leader, const motion::Motion& follower,
                       const std::string& follower_motif, const MotifClassifier& classifier) {
  PairMetrics m;
  m.contact = foot_contact_similarity(out, leader);
  m.follower_rot = follower_similarity(out, leader, follower, Channel::Rotations);
  m.follower_loc = follower_similarity(out, leader, follower, Channel::Locations);
  const auto rank = classifier.ranking(out);
  m.motif_top1 = !rank.empty() && rank[0] == follower_motif ? 1.0 : 0.0;
  m.motif_top3 = std::find(rank.begin(), rank.begin() + std::min<std::size_t>(3, rank.size()), follower_motif) !=
                         rank.begin() + std::min<std::size_t>(3, rank.size())
                     ? 1.0
                     : 0.0;
  m.jitter = jitter(out);
  return m;
}

nlohmann::json MetricsReport::aggregate_json() const {
  nlohmann::json j;
  j["method"] = method;
  j["pairs"] = rows.size();
  j["contact_similarity"] = mean.contact;
  j["follower_rot_similarity"] = mean.follower_rot;
  j["follower_loc_similarity"] = mean.follower_loc;
  j["frechet-desc"] = frechet ? nlohmann::json(*frechet) : nlohmann::json(nullptr);
  j["motif-precision"] = {{"top1", mean.motif_top1}, {"top3", mean.motif_top3}};
  j["jitter"] = mean.jitter;
  return j;
}

MetricsReport run_benchmark(const std::vector<BenchmarkPair>& pairs, const std::string& method_name,
                            const Method& method, const BenchmarkData& data,
                            const std::optional<std::filesystem::path>& csv,
                            const std::optional<std::filesystem::path>& aggregate) {
  require(data.motions != nullptr && data.motifs != nullptr && data.classifier != nullptr, ErrorKind::InvalidArgument,
          "run_benchmark: motions, motifs and classifier are required");
  std::map<std::size_t, PairMetrics> rows;
  std::map<std::size_t, std::vector<double>> desc;
  std::optional<std::filesystem::path> desc_path;
  if (csv) {
    desc_path = csv->string() + ".desc";
    rows = read_rows(*csv, method_name);
    desc = read_descriptors(*desc_path);
  }
  std::vector<BenchmarkPair> sorted = pairs;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (const auto& p : sorted) {
    require(p.leader < data.motions->size() && p.follower < data.motions->size(), ErrorKind::InvalidArgument,
            "pair " + std::to_string(p.id) + " refers outside the corpus");
    if (rows.count(p.id) && desc.count(p.id)) continue;
    const motion::Motion out = method(p);
    rows[p.id] = score_pair(out, (*data.motions)[p.leader], (*data.motions)[p.follower], (*data.motifs)[p.follower],
                            *data.classifier);
    rows[p.id].pair = p.id;
    desc[p.id] = descriptor(out);
    if (csv) {
      write_descriptors(*desc_path, desc);
      write_rows(*csv, method_name, rows);
    }
  }
  // Keep only rows belonging to this pair list.
  std::map<std::size_t, PairMetrics> kept;
  std::map<std::size_t, std::vector<double>> kept_desc;
  for (const auto& p : sorted) {
    kept[p.id] = rows.at(p.id);
    kept_desc[p.id] = desc.at(p.id);
  }
  if (csv) {
    write_descriptors(*desc_path, kept_desc);
    write_rows(*csv, method_name, kept);
  }

  MetricsReport r;
  r.method = method_name;
  for (const auto& [id, m] : kept) r.rows.push_back(m);
  if (!r.rows.empty()) {
    for (const auto& m : r.rows) {
      r.mean.contact += m.contact;
      r.mean.follower_rot += m.follower_rot;
      r.mean.follower_loc += m.follower_loc;
      r.mean.motif_top1 += m.motif_top1;
      r.mean.motif_top3 += m.motif_top3;
      r.mean.jitter += m.jitter;
    }
    const double n = static_cast<double>(r.rows.size());
    r.mean.contact /= n;
    r.mean.follower_rot /= n;
    r.mean.follower_loc /= n;
    r.mean.motif_top1 /= n;
    r.mean.motif_top3 /= n;
    r.mean.jitter /= n;
  }
  r.mean.pair = r.rows.size();
  if (data.reference != nullptr && kept_desc.size() >= kDescriptorDim + 1) {
    Matrix a(kept_desc.size(), kDescriptorDim);
    std::size_t i = 0;
    for (const auto& [id, d] : kept_desc) std::copy(d.begin(), d.end(), a.row(i++).begin());
    r.frechet = frechet_distance(fit_gaussian(a), fit_gaussian(descriptor_matrix(*data.reference)));
  }
  if (aggregate) {
    if (aggregate->has_parent_path()) std::filesystem::create_directories(aggregate->parent_path());
    std::ofstream f(*aggregate, std::ios::binary);
    require(f.good(), ErrorKind::Io, "cannot write " + aggregate->string());
    f << r.aggregate_json().dump(2) << '\n';
  }
  return r;
}

}  // namespace momo::eval
