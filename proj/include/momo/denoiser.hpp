#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "momo/matrix.hpp"
#include "momo/tape.hpp"

namespace momo::model {

// Closed word list. Id 0 is <unk>, id 1 is the learned null prompt.
class Vocabulary {
 public:
  static constexpr std::size_t kUnk = 0;
  static constexpr std::size_t kNull = 1;

  static const Vocabulary& standard();

  std::size_t size() const noexcept { return words_.size(); }
  std::size_t id(std::string_view word) const;
  const std::string& word(std::size_t id) const { return words_.at(id); }
  // Whitespace split, lowercase. Empty text encodes as the single null id.
  std::vector<std::size_t> tokenize(std::string_view text) const;

 private:
  explicit Vocabulary(std::vector<std::string> words);
  std::vector<std::string> words_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

struct DenoiserConfig {
  std::size_t layers = 4;
  std::size_t latent = 64;
  std::size_t heads = 4;
  std::size_t ff = 256;
  std::size_t vocab = 0;  // 0 = size of the standard vocabulary
  std::size_t max_frames = 80;
  std::size_t steps = 100;
  std::size_t features = 95;

  void validate() const;
  std::size_t head_dim() const noexcept { return latent / heads; }
  nlohmann::json to_json() const;
  static DenoiserConfig from_json(const nlohmann::json& j);
  friend bool operator==(const DenoiserConfig&, const DenoiserConfig&) = default;
};

struct PromptEncoding {
  std::vector<std::size_t> ids;
  bool null = false;
  Matrix pooled;  // 1 x C
  Matrix tokens;  // words x C
};

// Self-attention internals of one layer for one call. Row 0 is the condition
// token, rows 1.. are frame tokens.
struct LayerIO {
  Matrix ih, q, k, v, oh;
  std::vector<Matrix> scores;  // per head, filled when scores are requested
};

enum class InjectScope { FrameTokens, AllTokens };

// Replacement sources for one layer's self-attention. q comes from the
// leader stream, k and v from the follower stream; both include the
// condition-token row 0. k and v may hold more frame rows than q.
struct LayerInjection {
  Matrix q, k, v;
  // Hard variant: each frame query takes the single follower frame value
  // with the largest full-width logit instead of a softmax mix.
  bool hard = false;
};

struct Taps {
  bool capture = false;
  bool capture_scores = false;
  std::vector<LayerIO> captured;  // one per layer after a capture call
  // Per-layer injection sources; empty or nullptr entries mean standard attention.
  std::vector<const LayerInjection*> inject;
  InjectScope scope = InjectScope::FrameTokens;
  long step = -1;  // for error messages only
};

// Per-channel affine normalisation of the feature space the model runs in.
struct Normalizer {
  Matrix mean;  // 1 x F
  Matrix std;   // 1 x F

  static Normalizer identity(std::size_t features);
  static Normalizer fit(const std::vector<const Matrix*>& motions, double std_floor = 0.01);
  Matrix normalize(const Matrix& x) const;
  Matrix denormalize(const Matrix& x) const;
};

class Denoiser {
 public:
  Denoiser(DenoiserConfig config, std::uint64_t seed);

  const DenoiserConfig& config() const noexcept { return config_; }
  const Vocabulary& vocabulary() const noexcept { return Vocabulary::standard(); }

  PromptEncoding encode_prompt(std::string_view text) const;

  // x_t is N x F in normalised feature space; returns x̂0 (N x F).
  Matrix denoise(const Matrix& x_t, std::size_t t, const PromptEncoding& prompt, Taps* taps = nullptr) const;

  // Same network on a recording tape, with parameters bound for gradients.
  num::Var forward(num::Tape& tape, const Matrix& x_t, std::size_t t, std::span<const std::size_t> ids);

  std::vector<num::Parameter*> parameters();
  std::vector<const num::Parameter*> parameters() const;
  num::Parameter& parameter(std::string_view name);
  const num::Parameter& parameter(std::string_view name) const;

  Normalizer normalizer;

  void save(const std::filesystem::path& path) const;
  static Denoiser load(const std::filesystem::path& path);
  // Round every weight to 32-bit float, matching what save() stores.
  void round_to_storage();

 private:
  struct Layer {
    num::Parameter sa_wq, sa_bq, sa_wk, sa_bk, sa_wv, sa_bv, sa_wo, sa_bo, ln1_g, ln1_b;
    num::Parameter ca_wq, ca_bq, ca_wk, ca_bk, ca_wv, ca_bv, ca_wo, ca_bo, ln2_g, ln2_b;
    num::Parameter ff_w1, ff_b1, ff_w2, ff_b2, ln3_g, ln3_b;
  };

  template <typename Leaf>
  num::Var run(num::Tape& tape, Leaf&& leaf, const Matrix& x_t, std::size_t t,
               std::span<const std::size_t> ids, Taps* taps) const;

  DenoiserConfig config_;
  num::Parameter tok_emb_, cond_w_, cond_b_, time_w1_, time_b1_, time_w2_, time_b2_;
  num::Parameter in_w_, in_b_, out_w_, out_b_;
  std::vector<Layer> layers_;
};

// Sinusoidal embedding of a scalar position into `dim` channels.
Matrix sinusoid(double position, std::size_t dim);

// Standard multi-head attention of query rows against key/value rows.
// Returns the head-concatenated output (rows(q) x C) and, optionally, per-head scores.
Matrix multi_head_attention(const Matrix& q, const Matrix& k, const Matrix& v, std::size_t heads,
                            std::vector<Matrix>* scores = nullptr);

// Hex digest (64-bit FNV-1a) of a file's bytes.
std::string file_hash(const std::filesystem::path& path);

// Captured matrices keyed by (stream, layer, step, branch, element).
struct TraceKey {
  std::string stream;
  std::size_t layer = 0;
  std::size_t step = 0;
  std::string branch;   // "cond" | "uncond"
  std::string element;  // "ih" | "q" | "k" | "v" | "oh" | "x"

  auto operator<=>(const TraceKey&) const = default;
};

class TraceBundle {
 public:
  void put(const TraceKey& key, Matrix m);
  bool contains(const TraceKey& key) const { return entries_.count(key) != 0; }
  const Matrix& get(const TraceKey& key) const;  // throws NotCaptured
  std::size_t size() const noexcept { return entries_.size(); }
  const std::map<TraceKey, Matrix>& entries() const noexcept { return entries_; }

  // Directory layout: index.json plus one binary file per matrix
  // (rows u32, cols u32, then rows*cols little-endian float64).
  void write(const std::filesystem::path& dir) const;
  static TraceBundle read(const std::filesystem::path& dir);

 private:
  std::map<TraceKey, Matrix> entries_;
};

void write_matrix_binary(const Matrix& m, const std::filesystem::path& path);
Matrix read_matrix_binary(const std::filesystem::path& path);

}  // namespace momo::model
