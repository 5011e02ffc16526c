#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "momo/error.hpp"
#include "momo/synthgen.hpp"

namespace momo::synth {

const char* to_string(Verb v) noexcept {
  switch (v) {
    case Verb::Walk: return "walk";
    case Verb::Run: return "run";
    case Verb::Jump: return "jump";
    case Verb::Stand: return "stand";
  }
  return "?";
}

const char* to_string(Motif m) noexcept {
  switch (m) {
    case Motif::Neutral: return "neutral";
    case Motif::ArmsUp: return "arms-up";
    case Motif::Crouch: return "crouch";
    case Motif::WideArms: return "wide-arms";
    case Motif::Wave: return "wave";
    case Motif::Chicken: return "chicken";
  }
  return "?";
}

Verb parse_verb(std::string_view s) {
  for (Verb v : kVerbs)
    if (s == to_string(v)) return v;
  fail(ErrorKind::InvalidArgument, "unknown verb '" + std::string(s) + "'");
}

Motif parse_motif(std::string_view s) {
  for (Motif m : kMotifs)
    if (s == to_string(m)) return m;
  fail(ErrorKind::InvalidArgument, "unknown motif '" + std::string(s) + "'");
}

void GaitSpec::validate() const {
  require(static_cast<int>(verb) >= 0 && static_cast<int>(verb) <= 3, ErrorKind::InvalidArgument, "invalid verb");
  require(static_cast<int>(motif) >= 0 && static_cast<int>(motif) <= 5, ErrorKind::InvalidArgument, "invalid motif");
  require(period >= 1, ErrorKind::InvalidArgument, "period must be positive");
  if (locomotion()) {
    require(period >= 4, ErrorKind::InvalidArgument, "period must be >= 4 for locomotion");
    require(verb == Verb::Jump || period % 2 == 0, ErrorKind::InvalidArgument,
            "alternating gaits need an even period");
    require(frames >= static_cast<std::size_t>(period), ErrorKind::InvalidArgument, "frames must be >= period");
  }
  require(frames >= 1, ErrorKind::InvalidArgument, "frames must be >= 1");
  require(phase_offset >= 0 && phase_offset < period, ErrorKind::InvalidArgument, "phase_offset outside [0, period)");
  require(std::isfinite(speed) && speed >= 0.0 && speed < 0.5, ErrorKind::InvalidArgument, "speed outside [0, 0.5)");
  require(std::isfinite(jitter) && jitter >= 0.0, ErrorKind::InvalidArgument, "jitter must be >= 0");
  require(std::isfinite(turn_rate), ErrorKind::InvalidArgument, "turn_rate not finite");
  require(fps > 0, ErrorKind::InvalidArgument, "fps must be positive");
}

nlohmann::json to_json(const GaitSpec& s) {
  return {{"period", s.period}, {"phase_offset", s.phase_offset}, {"verb", to_string(s.verb)},
          {"motif", to_string(s.motif)}, {"speed", s.speed}, {"frames", s.frames},
          {"seed", s.seed}, {"jitter", s.jitter}, {"turn_rate", s.turn_rate}, {"fps", s.fps}};
}

GaitSpec spec_from_json(const nlohmann::json& j) {
  GaitSpec s;
  try {
    s.period = j.value("period", s.period);
    s.phase_offset = j.value("phase_offset", s.phase_offset);
    s.verb = parse_verb(j.value("verb", std::string(to_string(s.verb))));
    s.motif = parse_motif(j.value("motif", std::string(to_string(s.motif))));
    s.speed = j.value("speed", s.speed);
    s.frames = j.value("frames", s.frames);
    s.seed = j.value("seed", s.seed);
    s.jitter = j.value("jitter", s.jitter);
    s.turn_rate = j.value("turn_rate", s.turn_rate);
    s.fps = j.value("fps", s.fps);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("gait spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::string label_for(Verb v, Motif m) {
  std::string text = std::string("a person ") + to_string(v) + "s";
  switch (m) {
    case Motif::Neutral: break;
    case Motif::ArmsUp: text += " and raises both arms"; break;
    case Motif::Crouch: text += " hunched like an old man"; break;
    case Motif::WideArms: text += " with arms out like a robot"; break;
    case Motif::Wave: text += " and waves"; break;
    case Motif::Chicken: text += " like a chicken"; break;
  }
  return text;
}

std::vector<std::size_t> Corpus::train_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (!is_test[i]) out.push_back(i);
  return out;
}

std::vector<std::size_t> Corpus::test_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (is_test[i]) out.push_back(i);
  return out;
}

namespace {

struct VerbRanges {
  std::vector<std::vector<int>> period_bins;
  double speed_lo, speed_hi;
};

VerbRanges ranges(Verb v) {
  switch (v) {
    case Verb::Walk: return {{{16, 18}, {20, 22}, {24, 26}}, 0.025, 0.045};
    case Verb::Run: return {{{10, 12}, {14}, {16, 18}}, 0.07, 0.10};
    case Verb::Jump: return {{{14, 16}, {18, 20}, {22, 24}}, 0.01, 0.025};
    case Verb::Stand: return {{{20}}, 0.0, 0.0};
  }
  return {{{20}}, 0.0, 0.0};
}

}  // namespace

Corpus build_corpus(std::size_t size, std::uint64_t seed, const CorpusOptions& options) {
  require(size >= 1, ErrorKind::InvalidArgument, "corpus size must be >= 1");
  constexpr std::size_t cells = std::size(kVerbs) * std::size(kMotifs);
  std::mt19937_64 rng(seed);
  std::vector<Sample> ordered;
  std::vector<bool> test_flag;
  ordered.reserve(size);
  for (std::size_t i = 0; i < size; ++i) {
    const std::size_t cell = i % cells;
    const std::size_t within = i / cells;
    const Verb verb = kVerbs[cell / std::size(kMotifs)];
    const Motif motif = kMotifs[cell % std::size(kMotifs)];
    const VerbRanges r = ranges(verb);
    const auto& bin = r.period_bins[within % r.period_bins.size()];
    GaitSpec s;
    s.verb = verb;
    s.motif = motif;
    s.period = bin[std::uniform_int_distribution<std::size_t>(0, bin.size() - 1)(rng)];
    s.phase_offset = std::uniform_int_distribution<int>(0, s.period - 1)(rng);
    s.speed = r.speed_lo + (r.speed_hi - r.speed_lo) * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    s.frames = std::max<std::size_t>(options.frames, static_cast<std::size_t>(s.period));
    s.seed = rng();
    s.jitter = options.jitter;
    ordered.push_back(generate(s));
    test_flag.push_back(within % 10 == 9);
  }
  std::vector<std::size_t> perm(size);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Corpus c;
  c.samples.reserve(size);
  for (std::size_t k : perm) {
    c.samples.push_back(std::move(ordered[k]));
    c.is_test.push_back(test_flag[k]);
  }
  return c;
}

}  // namespace momo::synth
