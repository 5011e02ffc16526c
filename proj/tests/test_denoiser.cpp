#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "momo/denoiser.hpp"
#include "momo/error.hpp"
#include "momo/synthgen.hpp"

using namespace momo;
using namespace momo::model;

namespace {

Matrix noise(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Matrix m(r, c);
  for (double& v : m.values()) v = nd(rng);
  return m;
}

DenoiserConfig small_config() {
  DenoiserConfig c;
  c.layers = 3;
  c.latent = 16;
  c.heads = 2;
  c.ff = 24;
  c.features = 95;
  c.steps = 20;
  return c;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "momo_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("vocabulary and prompt encoding") {
  const Vocabulary& v = Vocabulary::standard();
  CHECK(v.size() >= 30);
  CHECK(v.size() <= 48);
  CHECK(v.tokenize("") == std::vector<std::size_t>{Vocabulary::kNull});
  CHECK(v.tokenize("   ") == std::vector<std::size_t>{Vocabulary::kNull});
  CHECK(v.tokenize("A Person WALKS") == v.tokenize("a person walks"));
  CHECK(v.tokenize("a zebra")[1] == Vocabulary::kUnk);
  CHECK(v.tokenize("<null>")[0] == Vocabulary::kUnk);
  // every generator label is inside the vocabulary
  for (auto verb : synth::kVerbs)
    for (auto motif : synth::kMotifs)
      for (std::size_t id : v.tokenize(synth::label_for(verb, motif))) CHECK(id != Vocabulary::kUnk);

  const Denoiser d(small_config(), 1);
  const auto e = d.encode_prompt("");
  CHECK(e.null);
  CHECK(e.ids == std::vector<std::size_t>{Vocabulary::kNull});
  const auto a = d.encode_prompt("a person walks");
  const auto a2 = d.encode_prompt("a person walks");
  CHECK(a.ids == a2.ids);
  CHECK(a.pooled == a2.pooled);
  CHECK(a.tokens == a2.tokens);
  const auto b = d.encode_prompt("a person runs");
  CHECK(a.ids != b.ids);
  CHECK(a.tokens.rows() == 3);
  CHECK(a.pooled.cols() == 16);
}

TEST_CASE("config validation") {
  DenoiserConfig c = small_config();
  c.heads = 3;
  CHECK_THROWS_AS(Denoiser(c, 1), Error);
  c = small_config();
  c.layers = 1;
  CHECK_THROWS_AS(Denoiser(c, 1), Error);
  CHECK(DenoiserConfig::from_json(small_config().to_json()) == small_config());
}

TEST_CASE("denoise is deterministic and attention rows sum to one") {
  const Denoiser d(small_config(), 2);
  const auto p = d.encode_prompt("a person walks like a chicken");
  for (std::size_t n : {1u, 7u}) {
    const Matrix x = noise(n, 95, n);
    Taps taps;
    taps.capture = true;
    taps.capture_scores = true;
    const Matrix y1 = d.denoise(x, 5, p, &taps);
    const Matrix y2 = d.denoise(x, 5, p);
    CHECK(y1 == y2);
    CHECK(y1.rows() == n);
    CHECK(taps.captured.size() == 3);
    for (const auto& io : taps.captured) {
      CHECK(io.scores.size() == 2);
      for (const Matrix& a : io.scores) {
        CHECK(a.rows() == n + 1);
        CHECK(a.cols() == n + 1);
        for (std::size_t r = 0; r < a.rows(); ++r) {
          double s = 0.0;
          for (double v : a.row(r)) s += v;
          CHECK(std::abs(s - 1.0) <= 1e-9);
        }
      }
    }
  }
  CHECK_THROWS_AS(d.denoise(noise(81, 95, 1), 0, p), Error);
  CHECK_THROWS_AS(d.denoise(noise(4, 95, 1), 20, p), Error);
}

TEST_CASE("layer-0 scores match an out-of-model computation") {
  const Denoiser d(small_config(), 3);
  const auto p = d.encode_prompt("a person runs");
  const Matrix x = noise(6, 95, 4);
  Taps taps;
  taps.capture = true;
  taps.capture_scores = true;
  d.denoise(x, 11, p, &taps);
  const LayerIO& io = taps.captured[0];
  const Matrix& wq = d.parameter("layers.0.sa_wq").value;
  const Matrix& bq = d.parameter("layers.0.sa_bq").value;
  const Matrix& wk = d.parameter("layers.0.sa_wk").value;
  const Matrix& bk = d.parameter("layers.0.sa_bk").value;
  const std::size_t c = 16, dh = 8, tokens = 7;
  for (std::size_t h = 0; h < 2; ++h) {
    for (std::size_t i = 0; i < tokens; ++i) {
      std::vector<double> logits(tokens);
      for (std::size_t j = 0; j < tokens; ++j) {
        double dot = 0.0;
        for (std::size_t a = h * dh; a < (h + 1) * dh; ++a) {
          double qi = bq(0, a), kj = bk(0, a);
          for (std::size_t b = 0; b < c; ++b) {
            qi += io.ih(i, b) * wq(a, b);
            kj += io.ih(j, b) * wk(a, b);
          }
          dot += qi * kj;
        }
        logits[j] = dot / std::sqrt(static_cast<double>(dh));
      }
      const double mx = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (double& l : logits) z += (l = std::exp(l - mx));
      for (std::size_t j = 0; j < tokens; ++j) CHECK(std::abs(io.scores[h](i, j) - logits[j] / z) < 1e-12);
    }
  }
  // standalone attention reproduces OH from the captured Q, K, V
  const Matrix att = multi_head_attention(io.q, io.k, io.v, 2);
  Matrix oh = matmul_nt(att, d.parameter("layers.0.sa_wo").value);
  for (std::size_t r = 0; r < oh.rows(); ++r)
    for (std::size_t col = 0; col < c; ++col) oh(r, col) += io.ih(r, col) + d.parameter("layers.0.sa_bo").value(0, col);
  CHECK(max_abs_diff(oh, io.oh) < 1e-12);
}

TEST_CASE("self-injection reproduces the tap-off output for every layer subset") {
  const Denoiser d(small_config(), 5);
  const auto p = d.encode_prompt("a person walks and waves");
  const Matrix x = noise(9, 95, 6);
  const Matrix base = d.denoise(x, 7, p);
  Taps cap;
  cap.capture = true;
  d.denoise(x, 7, p, &cap);
  std::vector<LayerInjection> own(3);
  for (std::size_t l = 0; l < 3; ++l) own[l] = {cap.captured[l].q, cap.captured[l].k, cap.captured[l].v, false};
  for (auto scope : {InjectScope::FrameTokens, InjectScope::AllTokens}) {
    for (unsigned mask = 0; mask < 8; ++mask) {
      Taps inj;
      inj.scope = scope;
      inj.inject.assign(3, nullptr);
      for (std::size_t l = 0; l < 3; ++l)
        if (mask & (1u << l)) inj.inject[l] = &own[l];
      CHECK(max_abs_diff(d.denoise(x, 7, p, &inj), base) <= 1e-6);
    }
  }
}

TEST_CASE("injection errors name the layer and step") {
  const Denoiser d(small_config(), 5);
  const auto p = d.encode_prompt("a person walks");
  const Matrix x = noise(4, 95, 6);
  LayerInjection bad{Matrix(5, 15), Matrix(3, 16), Matrix(3, 16), false};
  Taps t;
  t.step = 42;
  t.inject = {nullptr, &bad, nullptr};
  try {
    d.denoise(x, 3, p, &t);
    FAIL("expected injection error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Injection);
    CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
    CHECK(std::string(e.what()).find("step 42") != std::string::npos);
  }
  LayerInjection wrong_rows{Matrix(3, 16), Matrix(3, 16), Matrix(3, 16), false};
  t.inject = {&wrong_rows, nullptr, nullptr};
  CHECK_THROWS_AS(d.denoise(x, 3, p, &t), Error);
  t.inject = {nullptr};
  CHECK_THROWS_AS(d.denoise(x, 3, p, &t), Error);
}

TEST_CASE("permuting the embedding table together with token ids leaves outputs unchanged") {
  Denoiser d(small_config(), 8);
  const Matrix x = noise(5, 95, 9);
  PromptEncoding p = d.encode_prompt("a person jumps like a chicken");
  const Matrix base = d.denoise(x, 4, p);
  const std::size_t v = d.config().vocab;
  std::vector<std::size_t> perm(v);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(1);
  std::shuffle(perm.begin(), perm.end(), rng);
  Matrix& table = d.parameter("tok_emb").value;
  Matrix permuted(table.rows(), table.cols());
  for (std::size_t i = 0; i < v; ++i) std::copy(table.row(i).begin(), table.row(i).end(), permuted.row(perm[i]).begin());
  table = permuted;
  for (std::size_t& id : p.ids) id = perm[id];
  CHECK(max_abs_diff(d.denoise(x, 4, p), base) <= 1e-12);
}

TEST_CASE("full toy denoiser passes grad_check") {
  // Desk-default architecture on a short clip.
  Denoiser d(DenoiserConfig{}, 11);
  const Matrix x = noise(4, 95, 12);
  const Matrix target = noise(4, 95, 13);
  const auto ids = d.vocabulary().tokenize("a person walks and raises both arms");
  std::vector<num::Parameter*> params;
  // Key biases shift every logit of a query row by the same amount, so
  // softmax makes their gradient exactly zero; relative error is undefined there.
  for (num::Parameter* p : d.parameters())
    if (p->name.find("_bk") == std::string::npos) params.push_back(p);
  auto loss = [&](num::Tape& t) { return num::mse(d.forward(t, x, 17, ids), t.constant(target)); };
  num::GradCheckOptions opt;
  opt.max_coords = 64;
  opt.seed = 5;
  const auto report = num::grad_check(loss, params, opt);
  CHECK(report.coords_checked == 64);
  CHECK(report.max_relative_error < 1e-4);

  // The excluded key-bias gradients really are zero up to round-off.
  num::Tape t;
  t.backward(loss(t));
  CHECK(frobenius_norm(d.parameter("layers.0.sa_bk").grad) < 1e-12);
}

TEST_CASE("checkpoint round trip") {
  Denoiser d(small_config(), 13);
  d.normalizer.mean = noise(1, 95, 1);
  d.normalizer.std = Matrix(1, 95, 0.5);
  d.round_to_storage();
  const auto dir = temp_dir("ckpt");
  d.save(dir / "m.ckpt");
  const Denoiser r = Denoiser::load(dir / "m.ckpt");
  CHECK(r.config() == d.config());
  const auto pa = d.parameters();
  const auto pb = r.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);
  CHECK(r.normalizer.mean == d.normalizer.mean);
  const auto p = d.encode_prompt("a person walks");
  const Matrix x = noise(5, 95, 2);
  CHECK(r.denoise(x, 3, p) == d.denoise(x, 3, p));
  d.save(dir / "m2.ckpt");
  CHECK(file_hash(dir / "m.ckpt") == file_hash(dir / "m2.ckpt"));
  CHECK(file_hash(dir / "m.ckpt").size() == 16);

  {
    std::ofstream junk(dir / "junk.ckpt");
    junk << "NOPE";
  }
  CHECK_THROWS_AS(Denoiser::load(dir / "junk.ckpt"), Error);
}

TEST_CASE("trace bundle round trip") {
  TraceBundle b;
  b.put({"ldr", 1, 30, "cond", "q"}, noise(3, 4, 1));
  b.put({"flw", 2, 10, "uncond", "k"}, noise(5, 4, 2));
  const auto dir = temp_dir("trace");
  b.write(dir);
  const TraceBundle r = TraceBundle::read(dir);
  CHECK(r.size() == 2);
  CHECK(r.get({"ldr", 1, 30, "cond", "q"}) == b.get({"ldr", 1, 30, "cond", "q"}));
  try {
    r.get({"ldr", 0, 30, "cond", "q"});
    FAIL("expected not-captured");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NotCaptured);
  }
}
