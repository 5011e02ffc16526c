#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include <json.hpp>

namespace momo::cli {

inline constexpr const char* kToolVersion = "0.1.0";

// Parse errors name the origin and the 1-based line.
nlohmann::json parse_config_text(const std::string& text, const std::string& origin);
nlohmann::json read_config_file(const std::filesystem::path& path);

// Per key: flag override, then config file, then environment variable, then
// default. Keys in the file must exist in `defaults` and match its JSON type.
nlohmann::json load_config(const std::optional<std::filesystem::path>& file, const nlohmann::json& overrides,
                           const nlohmann::json& defaults,
                           const std::map<std::string, std::string>& env = {{"seed", "MOMO_SEED"}});

std::string hex64(std::uint64_t v);

nlohmann::json manifest(const std::string& command, const nlohmann::json& config,
                        const std::optional<std::string>& checkpoint_hash);

// Pretty-printed with a trailing newline; creates parent directories.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace momo::cli
