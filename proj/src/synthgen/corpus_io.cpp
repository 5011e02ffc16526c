#include <cstdio>
#include <fstream>
#include <sstream>

#include "momo/error.hpp"
#include "momo/synthgen.hpp"

namespace momo::synth {

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "motions");
  nlohmann::json samples = nlohmann::json::array();
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "motions/%06zu.json", i);
    const Sample& s = corpus.samples[i];
    motion::Motion m = s.motion;
    m.text = s.label;
    motion::write_motion(m, dir / name);
    samples.push_back({{"id", i},
                       {"label", s.label},
                       {"split", corpus.is_test[i] ? "test" : "train"},
                       {"spec", to_json(s.spec)},
                       {"file", name}});
  }
  std::ofstream f(dir / "corpus.json", std::ios::binary);
  require(f.good(), ErrorKind::Io, "cannot write " + (dir / "corpus.json").string());
  f << nlohmann::json{{"version", "momo-corpus-1"}, {"samples", samples}}.dump(2) << '\n';
}

Corpus read_corpus(const std::filesystem::path& dir) {
  std::ifstream f(dir / "corpus.json");
  require(f.good(), ErrorKind::Io, "cannot read " + (dir / "corpus.json").string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::Parse, "corpus.json: " + std::string(e.what()));
  }
  require(j.value("version", "") == "momo-corpus-1", ErrorKind::Schema, "corpus.json: unknown version");
  require(j.contains("samples") && j["samples"].is_array(), ErrorKind::Schema, "corpus.json: missing 'samples'");
  Corpus c;
  for (std::size_t i = 0; i < j["samples"].size(); ++i) {
    const auto& e = j["samples"][i];
    const std::string where = "corpus.json: samples[" + std::to_string(i) + "]";
    require(e.contains("spec") && e.contains("file") && e.contains("label") && e.contains("split"), ErrorKind::Schema,
            where + " needs spec, file, label and split");
    Sample s = generate(spec_from_json(e["spec"]));
    s.motion = motion::read_motion(dir / e["file"].get<std::string>());
    s.label = e["label"].get<std::string>();
    c.samples.push_back(std::move(s));
    c.is_test.push_back(e["split"].get<std::string>() == "test");
  }
  return c;
}

}  // namespace momo::synth
