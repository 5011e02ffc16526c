#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "momo/cli.hpp"
#include "momo/error.hpp"

namespace momo::cli {

nlohmann::json parse_config_text(const std::string& text, const std::string& origin) {
  try {
    nlohmann::json j = nlohmann::json::parse(text);
    require(j.is_object(), ErrorKind::Parse, origin + ": line 1: config must be a JSON object");
    return j;
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t upto = std::min(e.byte == 0 ? 0 : e.byte - 1, text.size());
    std::size_t line = 1;
    for (std::size_t i = 0; i < upto; ++i) line += text[i] == '\n';
    fail(ErrorKind::Parse, origin + ": line " + std::to_string(line) + ": malformed JSON");
  }
}

nlohmann::json read_config_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), ErrorKind::Io, "cannot read config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

namespace {

bool same_kind(const nlohmann::json& a, const nlohmann::json& b) {
  if (a.is_number() && b.is_number()) {
    // Integers may not take fractional values.
    return !(a.is_number_integer() || a.is_number_unsigned()) || !b.is_number_float();
  }
  return a.type() == b.type() || (a.is_null() || b.is_null());
}

}  // namespace

nlohmann::json load_config(const std::optional<std::filesystem::path>& file, const nlohmann::json& overrides,
                           const nlohmann::json& defaults, const std::map<std::string, std::string>& env) {
  nlohmann::json out = defaults;
  for (const auto& [key, var] : env) {
    if (!defaults.contains(key)) continue;
    if (const char* v = std::getenv(var.c_str()); v != nullptr && *v != '\0') {
      try {
        std::size_t used = 0;
        const unsigned long long x = std::stoull(v, &used);
        require(used == std::string(v).size(), ErrorKind::Parse, "");
        out[key] = x;
      } catch (const std::exception&) {
        fail(ErrorKind::Parse, var + " must be a non-negative integer, got '" + v + "'");
      }
    }
  }
  if (file) {
    const nlohmann::json j = read_config_file(*file);
    for (auto it = j.begin(); it != j.end(); ++it) {
      require(defaults.contains(it.key()), ErrorKind::Schema,
              file->string() + ": unknown key '" + it.key() + "'");
      require(same_kind(defaults[it.key()], it.value()), ErrorKind::Schema,
              file->string() + ": key '" + it.key() + "' has the wrong type (expected " +
                  defaults[it.key()].type_name() + ")");
      out[it.key()] = it.value();
    }
  }
  for (auto it = overrides.begin(); it != overrides.end(); ++it) out[it.key()] = it.value();
  return out;
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

nlohmann::json manifest(const std::string& command, const nlohmann::json& config,
                        const std::optional<std::string>& checkpoint_hash) {
  return {{"tool", "momo"},
          {"version", kToolVersion},
          {"command", command},
          {"config", config},
          {"checkpoint_hash", checkpoint_hash ? nlohmann::json(*checkpoint_hash) : nlohmann::json(nullptr)}};
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  require(f.good(), ErrorKind::Io, "cannot write " + path.string());
  f << j.dump(2) << '\n';
}

}  // namespace momo::cli
