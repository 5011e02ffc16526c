#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "momo/cli.hpp"
#include "momo/error.hpp"

using namespace momo;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path write_tmp(const std::string& name, const std::string& text) {
  const fs::path p = fs::temp_directory_path() / ("momo_cli_" + name);
  std::ofstream(p, std::ios::binary) << text;
  return p;
}

const json kDefaults = {{"steps", 100}, {"lr", 1e-3}, {"out", "model.ckpt"}, {"seed", 0}};

}  // namespace

TEST_CASE("config: no file and no flags gives the defaults") {
  unsetenv("MOMO_SEED");
  CHECK(cli::load_config(std::nullopt, json::object(), kDefaults) == kDefaults);
  const auto empty = write_tmp("empty.json", "{}");
  CHECK(cli::load_config(empty, json::object(), kDefaults) == kDefaults);
}

TEST_CASE("config: flag over file over environment over default") {
  const auto f = write_tmp("prec.json", "{\n  \"steps\": 7,\n  \"out\": \"a.ckpt\"\n}\n");
  setenv("MOMO_SEED", "42", 1);
  auto r = cli::load_config(f, json{{"steps", 9}}, kDefaults);
  CHECK(r["steps"] == 9);
  CHECK(r["out"] == "a.ckpt");
  CHECK(r["seed"] == 42);
  CHECK(r["lr"] == 1e-3);

  const auto g = write_tmp("prec2.json", "{\"seed\": 5}");
  CHECK(cli::load_config(g, json::object(), kDefaults)["seed"] == 5);
  CHECK(cli::load_config(g, json{{"seed", 6}}, kDefaults)["seed"] == 6);

  setenv("MOMO_SEED", "x1", 1);
  CHECK_THROWS_AS(cli::load_config(std::nullopt, json::object(), kDefaults), Error);
  unsetenv("MOMO_SEED");
}

TEST_CASE("config: malformed file names the line") {
  const auto f = write_tmp("bad.json", "{\n  \"steps\": 7,\n  \"out\": ,\n}\n");
  try {
    cli::load_config(f, json::object(), kDefaults);
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Parse);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK_THROWS_AS(cli::parse_config_text("[1, 2]", "x"), Error);
}

TEST_CASE("config: unknown keys and wrong types are schema errors") {
  const auto unknown = write_tmp("unknown.json", "{\"stepz\": 3}");
  const auto wrong = write_tmp("wrong.json", "{\"steps\": \"many\"}");
  const auto frac = write_tmp("frac.json", "{\"steps\": 2.5}");
  const auto widen = write_tmp("widen.json", "{\"lr\": 1}");
  for (const auto& p : {unknown, wrong, frac}) {
    try {
      cli::load_config(p, json::object(), kDefaults);
      FAIL("expected a schema error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Schema);
    }
  }
  CHECK(cli::load_config(widen, json::object(), kDefaults)["lr"] == 1);
}

TEST_CASE("manifest carries the command, config and checkpoint hash") {
  const json cfg = {{"steps", 3}};
  const auto m = cli::manifest("train", cfg, std::string("00ff"));
  CHECK(m["tool"] == "momo");
  CHECK(m["version"] == cli::kToolVersion);
  CHECK(m["command"] == "train");
  CHECK(m["config"] == cfg);
  CHECK(m["checkpoint_hash"] == "00ff");
  CHECK(cli::manifest("corpus build", cfg, std::nullopt)["checkpoint_hash"].is_null());
  CHECK(cli::hex64(255) == "00000000000000ff");
}
