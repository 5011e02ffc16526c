#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "momo/matrix.hpp"
#include "momo/motion.hpp"

namespace momo::synth {

enum class Verb { Walk, Run, Jump, Stand };
enum class Motif { Neutral, ArmsUp, Crouch, WideArms, Wave, Chicken };

inline constexpr Verb kVerbs[] = {Verb::Walk, Verb::Run, Verb::Jump, Verb::Stand};
inline constexpr Motif kMotifs[] = {Motif::Neutral, Motif::ArmsUp,  Motif::Crouch,
                                    Motif::WideArms, Motif::Wave,  Motif::Chicken};

const char* to_string(Verb v) noexcept;
const char* to_string(Motif m) noexcept;
Verb parse_verb(std::string_view s);
Motif parse_motif(std::string_view s);

struct GaitSpec {
  int period = 20;        // frames per gait cycle
  int phase_offset = 0;   // frames, in [0, period)
  Verb verb = Verb::Walk;
  Motif motif = Motif::Neutral;
  double speed = 0.04;    // m/frame
  std::size_t frames = 60;
  std::uint64_t seed = 0;
  double jitter = 0.0;    // radians, uniform on arm and torso angles
  double turn_rate = 0.0; // rad/frame
  int fps = 20;

  void validate() const;
  bool locomotion() const noexcept { return verb != Verb::Stand; }
};

nlohmann::json to_json(const GaitSpec& s);
GaitSpec spec_from_json(const nlohmann::json& j);

std::string label_for(Verb v, Motif m);

struct Sample {
  motion::Motion motion;
  std::string label;
  GaitSpec spec;
  Matrix contact_truth;        // N x 4, stance mask of the foot joints
  std::vector<double> phase;   // left-foot gait phase in [0,1) per frame
};

Sample generate(const GaitSpec& spec);

// Stance frames per cycle for a verb at a given period.
int stance_frames(Verb v, int period);

struct CorpusOptions {
  std::size_t frames = 60;
  double jitter = 0.02;
};

struct Corpus {
  std::vector<Sample> samples;
  std::vector<bool> is_test;

  std::vector<std::size_t> train_indices() const;
  std::vector<std::size_t> test_indices() const;
};

// Stratified over verb x motif cells and period bins; every tenth sample of a
// cell goes to the test split. Sample order is shuffled deterministically.
Corpus build_corpus(std::size_t size, std::uint64_t seed, const CorpusOptions& options = {});

// Directory layout: corpus.json (labels, splits, generator specs) plus one
// motion file per sample under motions/. Reading regenerates phase and contact
// ground truth from the stored specs.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus read_corpus(const std::filesystem::path& dir);

}  // namespace momo::synth
