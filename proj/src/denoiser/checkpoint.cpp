#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "momo/denoiser.hpp"
#include "momo/error.hpp"

namespace momo::model {

namespace {

constexpr char kMagic[4] = {'M', 'O', 'M', 'O'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const std::string& what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) fail(ErrorKind::Parse, "checkpoint truncated while reading " + what);
  return v;
}

void put_floats(std::ostream& out, const Matrix& m) {
  for (double v : m.values()) put(out, static_cast<float>(v));
}

void get_floats(std::istream& in, Matrix& m, const std::string& name) {
  for (double& v : m.values()) v = static_cast<double>(get<float>(in, name));
}

}  // namespace

void Denoiser::save(const std::filesystem::path& path) const {
  nlohmann::json tensors = nlohmann::json::array();
  const auto params = parameters();
  for (const num::Parameter* p : params)
    tensors.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
  tensors.push_back({{"name", "norm.mean"}, {"rows", 1}, {"cols", config_.features}});
  tensors.push_back({{"name", "norm.std"}, {"rows", 1}, {"cols", config_.features}});
  const nlohmann::json header = {{"config", config_.to_json()}, {"tensors", tensors}};
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write checkpoint " + path.string());
  out.write(kMagic, 4);
  put(out, kVersion);
  put(out, static_cast<std::uint64_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const num::Parameter* p : params) put_floats(out, p->value);
  put_floats(out, normalizer.mean);
  put_floats(out, normalizer.std);
  if (!out) fail(ErrorKind::Io, "write failed for checkpoint " + path.string());
}

Denoiser Denoiser::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open checkpoint " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) fail(ErrorKind::Parse, "not a checkpoint (bad magic): " + path.string());
  const auto version = get<std::uint32_t>(in, "version");
  require(version == kVersion, ErrorKind::Parse, "unsupported checkpoint version " + std::to_string(version));
  const auto len = get<std::uint64_t>(in, "header length");
  require(len < (1u << 26), ErrorKind::Parse, "checkpoint header too large");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) fail(ErrorKind::Parse, "checkpoint truncated in header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("checkpoint header: ") + e.what());
  }
  Denoiser model(DenoiserConfig::from_json(header.at("config")), 0);
  auto params = model.parameters();
  const auto& tensors = header.at("tensors");
  require(tensors.size() == params.size() + 2, ErrorKind::Parse, "checkpoint tensor count mismatch");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& t = tensors[i];
    const std::string name = t.at("name").get<std::string>();
    Matrix* target = nullptr;
    if (i < params.size()) {
      require(name == params[i]->name, ErrorKind::Parse, "checkpoint tensor " + std::to_string(i) + " is " + name +
                                                             ", expected " + params[i]->name);
      target = &params[i]->value;
    } else {
      target = i == params.size() ? &model.normalizer.mean : &model.normalizer.std;
    }
    require(t.at("rows").get<std::size_t>() == target->rows() && t.at("cols").get<std::size_t>() == target->cols(),
            ErrorKind::Parse, "checkpoint tensor " + name + " has the wrong shape");
    get_floats(in, *target, name);
  }
  for (num::Parameter* p : params) p->zero_grad();
  return model;
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::uint64_t h = 1469598103934665603ull;
  char buf[65536];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

void write_matrix_binary(const Matrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  put(out, static_cast<std::uint32_t>(m.rows()));
  put(out, static_cast<std::uint32_t>(m.cols()));
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!out) fail(ErrorKind::Io, "write failed for " + path.string());
}

Matrix read_matrix_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  const auto rows = get<std::uint32_t>(in, "rows");
  const auto cols = get<std::uint32_t>(in, "cols");
  Matrix m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!in) fail(ErrorKind::Parse, "matrix file truncated: " + path.string());
  return m;
}

void TraceBundle::put(const TraceKey& key, Matrix m) { entries_[key] = std::move(m); }

const Matrix& TraceBundle::get(const TraceKey& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    fail(ErrorKind::NotCaptured, "no trace for stream=" + key.stream + " layer=" + std::to_string(key.layer) +
                                     " step=" + std::to_string(key.step) + " branch=" + key.branch +
                                     " element=" + key.element);
  }
  return it->second;
}

void TraceBundle::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::json index = {{"version", "momo-trace-1"}, {"entries", nlohmann::json::array()}};
  std::size_t i = 0;
  for (const auto& [key, m] : entries_) {
    std::ostringstream name;
    name << "m" << std::setw(6) << std::setfill('0') << i++ << ".bin";
    write_matrix_binary(m, dir / name.str());
    index["entries"].push_back({{"stream", key.stream}, {"layer", key.layer}, {"step", key.step},
                                {"branch", key.branch}, {"element", key.element}, {"file", name.str()},
                                {"rows", m.rows()}, {"cols", m.cols()}});
  }
  std::ofstream out(dir / "index.json", std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write trace index in " + dir.string());
  out << index.dump(1) << '\n';
}

TraceBundle TraceBundle::read(const std::filesystem::path& dir) {
  std::ifstream in(dir / "index.json");
  if (!in) fail(ErrorKind::Io, "no trace index in " + dir.string());
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("trace index: ") + e.what());
  }
  TraceBundle b;
  for (const auto& e : index.at("entries")) {
    TraceKey k{e.at("stream").get<std::string>(), e.at("layer").get<std::size_t>(), e.at("step").get<std::size_t>(),
               e.at("branch").get<std::string>(), e.at("element").get<std::string>()};
    b.put(k, read_matrix_binary(dir / e.at("file").get<std::string>()));
  }
  return b;
}

}  // namespace momo::model
