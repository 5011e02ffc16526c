#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "momo/error.hpp"
#include "momo/motion.hpp"

namespace momo::motion {

using nlohmann::json;

namespace {

constexpr const char* kVersion = "momo-motion-1";

const json& field(const json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end()) fail(ErrorKind::Parse, std::string("motion: missing field \"") + name + "\"");
  return *it;
}

template <typename T>
T get_as(const json& j, const std::string& where) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    fail(ErrorKind::Parse, "motion: field \"" + where + "\" has the wrong type");
  }
}

}  // namespace

std::string motion_to_json(const Motion& m) {
  m.validate();
  json j;
  j["version"] = kVersion;
  j["fps"] = m.fps;
  j["joints"] = m.skeleton.joints();
  j["parents"] = m.skeleton.parents;
  j["offsets"] = m.skeleton.offsets;
  j["foot_joints"] = m.skeleton.foot_joints;
  j["text"] = m.text ? json(*m.text) : json(nullptr);
  if (m.heading != 0.0) j["heading"] = m.heading;
  json frames = json::array();
  for (std::size_t n = 0; n < m.frames(); ++n) {
    const auto row = m.features.row(n);
    frames.push_back(std::vector<double>(row.begin(), row.end()));
  }
  j["frames"] = std::move(frames);
  return j.dump();
}

Motion motion_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Parse, std::string("motion: malformed JSON: ") + e.what());
  }
  require(j.is_object(), ErrorKind::Parse, "motion: top level must be an object");
  const auto version = get_as<std::string>(field(j, "version"), "version");
  require(version == kVersion, ErrorKind::Parse, "motion: field \"version\" must be " + std::string(kVersion));

  Motion m;
  m.fps = get_as<int>(field(j, "fps"), "fps");
  const auto joints = get_as<std::size_t>(field(j, "joints"), "joints");
  m.skeleton.parents = get_as<std::vector<int>>(field(j, "parents"), "parents");
  m.skeleton.offsets = get_as<std::vector<std::array<double, 3>>>(field(j, "offsets"), "offsets");
  m.skeleton.foot_joints = get_as<std::array<int, 4>>(field(j, "foot_joints"), "foot_joints");
  require(m.skeleton.parents.size() == joints, ErrorKind::Parse, "motion: field \"parents\" length != joints");
  try {
    m.skeleton.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Parse, std::string("motion: ") + e.what());
  }
  const json& t = field(j, "text");
  if (!t.is_null()) m.text = get_as<std::string>(t, "text");
  if (auto h = j.find("heading"); h != j.end()) m.heading = get_as<double>(*h, "heading");

  const json& frames = field(j, "frames");
  require(frames.is_array() && !frames.empty(), ErrorKind::Parse, "motion: field \"frames\" must be a non-empty array");
  const std::size_t width = feature_width(joints);
  m.features = Matrix(frames.size(), width);
  for (std::size_t n = 0; n < frames.size(); ++n) {
    const json& row = frames[n];
    if (!row.is_array() || row.size() != width) {
      fail(ErrorKind::Parse, "motion: frames[" + std::to_string(n) + "] must hold " + std::to_string(width) +
                                 " numbers, got " + std::to_string(row.is_array() ? row.size() : 0));
    }
    for (std::size_t c = 0; c < width; ++c) {
      if (!row[c].is_number()) {
        fail(ErrorKind::Parse, "motion: frames[" + std::to_string(n) + "][" + std::to_string(c) + "] is not a number");
      }
      m.features(n, c) = row[c].get<double>();
    }
  }
  try {
    m.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Parse, std::string("motion: ") + e.what());
  }
  return m;
}

Motion read_motion(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open motion file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return motion_from_json(ss.str());
}

void write_motion(const Motion& m, const std::filesystem::path& path) {
  const std::string text = motion_to_json(m);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write motion file " + path.string());
  out << text << '\n';
  if (!out) fail(ErrorKind::Io, "write failed for " + path.string());
}

}  // namespace momo::motion
