#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "momo/denoiser.hpp"
#include "momo/error.hpp"

namespace momo::model {

using num::Parameter;
using num::Tape;
using num::Var;

void DenoiserConfig::validate() const {
  require(layers >= 2, ErrorKind::InvalidArgument, "config: layers must be >= 2");
  require(heads >= 1 && latent % heads == 0, ErrorKind::InvalidArgument, "config: latent must be divisible by heads");
  require(latent >= 2 && latent % 2 == 0, ErrorKind::InvalidArgument, "config: latent must be even");
  require(ff >= 1, ErrorKind::InvalidArgument, "config: ff must be >= 1");
  require(max_frames >= 1, ErrorKind::InvalidArgument, "config: max_frames must be >= 1");
  require(steps >= 2, ErrorKind::InvalidArgument, "config: steps must be >= 2");
  require(features >= 1, ErrorKind::InvalidArgument, "config: features must be >= 1");
  require(vocab == 0 || vocab >= Vocabulary::standard().size(), ErrorKind::InvalidArgument,
          "config: vocab smaller than the standard vocabulary");
}

nlohmann::json DenoiserConfig::to_json() const {
  return {{"layers", layers}, {"latent", latent}, {"heads", heads}, {"ff", ff},
          {"vocab", vocab}, {"max_frames", max_frames}, {"steps", steps}, {"features", features}};
}

DenoiserConfig DenoiserConfig::from_json(const nlohmann::json& j) {
  DenoiserConfig c;
  try {
    c.layers = j.value("layers", c.layers);
    c.latent = j.value("latent", c.latent);
    c.heads = j.value("heads", c.heads);
    c.ff = j.value("ff", c.ff);
    c.vocab = j.value("vocab", c.vocab);
    c.max_frames = j.value("max_frames", c.max_frames);
    c.steps = j.value("steps", c.steps);
    c.features = j.value("features", c.features);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("denoiser config: ") + e.what());
  }
  c.validate();
  return c;
}

Normalizer Normalizer::identity(std::size_t features) {
  return {Matrix(1, features, 0.0), Matrix(1, features, 1.0)};
}

Normalizer Normalizer::fit(const std::vector<const Matrix*>& motions, double std_floor) {
  require(!motions.empty(), ErrorKind::InvalidArgument, "normalizer: no motions");
  const std::size_t f = motions.front()->cols();
  Normalizer n{Matrix(1, f), Matrix(1, f)};
  double count = 0.0;
  for (const Matrix* m : motions) {
    require(m->cols() == f, ErrorKind::InvalidArgument, "normalizer: feature widths differ");
    for (std::size_t r = 0; r < m->rows(); ++r)
      for (std::size_t c = 0; c < f; ++c) n.mean(0, c) += (*m)(r, c);
    count += static_cast<double>(m->rows());
  }
  for (std::size_t c = 0; c < f; ++c) n.mean(0, c) /= count;
  for (const Matrix* m : motions)
    for (std::size_t r = 0; r < m->rows(); ++r)
      for (std::size_t c = 0; c < f; ++c) {
        const double d = (*m)(r, c) - n.mean(0, c);
        n.std(0, c) += d * d;
      }
  for (std::size_t c = 0; c < f; ++c) n.std(0, c) = std::max(std::sqrt(n.std(0, c) / count), std_floor);
  return n;
}

Matrix Normalizer::normalize(const Matrix& x) const {
  require(x.cols() == mean.cols(), ErrorKind::InvalidArgument, "normalize: feature width mismatch");
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = (x(r, c) - mean(0, c)) / std(0, c);
  return out;
}

Matrix Normalizer::denormalize(const Matrix& x) const {
  require(x.cols() == mean.cols(), ErrorKind::InvalidArgument, "denormalize: feature width mismatch");
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = x(r, c) * std(0, c) + mean(0, c);
  return out;
}

Matrix sinusoid(double position, std::size_t dim) {
  Matrix out(1, dim);
  const std::size_t half = dim / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    out(0, i) = std::sin(position * freq);
    out(0, half + i) = std::cos(position * freq);
  }
  return out;
}

Matrix multi_head_attention(const Matrix& q, const Matrix& k, const Matrix& v, std::size_t heads,
                            std::vector<Matrix>* scores) {
  require(q.cols() == k.cols() && k.cols() == v.cols() && k.rows() == v.rows(), ErrorKind::Injection,
          "attention: Q/K/V shapes disagree");
  require(heads >= 1 && q.cols() % heads == 0, ErrorKind::Injection, "attention: heads do not divide C");
  const std::size_t dh = q.cols() / heads;
  const double s = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix out(q.rows(), q.cols());
  if (scores) scores->clear();
  for (std::size_t h = 0; h < heads; ++h) {
    const Matrix qh = q.cols_slice(h * dh, (h + 1) * dh);
    const Matrix kh = k.cols_slice(h * dh, (h + 1) * dh);
    const Matrix vh = v.cols_slice(h * dh, (h + 1) * dh);
    Matrix a = matmul_nt(qh, kh);
    for (double& x : a.values()) x *= s;
    num::softmax_rows_inplace(a);
    const Matrix o = matmul(a, vh);
    for (std::size_t r = 0; r < o.rows(); ++r)
      for (std::size_t c = 0; c < dh; ++c) out(r, h * dh + c) = o(r, c);
    if (scores) scores->push_back(std::move(a));
  }
  return out;
}

namespace {

Matrix gaussian(std::size_t r, std::size_t c, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, stddev);
  Matrix m(r, c);
  for (double& v : m.values()) v = nd(rng);
  return m;
}

Parameter linear_w(const std::string& name, std::size_t out, std::size_t in, std::mt19937_64& rng) {
  return Parameter(name, gaussian(out, in, 1.0 / std::sqrt(static_cast<double>(in)), rng));
}

Parameter zeros(const std::string& name, std::size_t r, std::size_t c) { return Parameter(name, Matrix(r, c)); }
Parameter ones(const std::string& name, std::size_t r, std::size_t c) { return Parameter(name, Matrix(r, c, 1.0)); }

Var attention_var(Var q, Var k, Var v, std::size_t heads, std::vector<Matrix>* scores) {
  const std::size_t c = q.cols();
  const std::size_t dh = c / heads;
  const double s = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = heads == 1 ? q : num::slice_cols(q, h * dh, (h + 1) * dh);
    Var kh = heads == 1 ? k : num::slice_cols(k, h * dh, (h + 1) * dh);
    Var vh = heads == 1 ? v : num::slice_cols(v, h * dh, (h + 1) * dh);
    Var a = num::softmax_rows(num::scale(num::matmul_nt(qh, kh), s));
    if (scores) scores->push_back(a.value());
    outs.push_back(num::matmul(a, vh));
  }
  return heads == 1 ? outs.front() : num::concat_cols(outs);
}

// Each query row takes the value row whose full-width logit is largest
// (first index on ties) among rows [first, k.rows()).
Matrix hard_select(const Matrix& q, const Matrix& k, const Matrix& v, std::size_t first) {
  Matrix out(q.rows(), v.cols());
  for (std::size_t r = 0; r < q.rows(); ++r) {
    std::size_t best = first;
    double best_val = -INFINITY;
    for (std::size_t j = first; j < k.rows(); ++j) {
      double d = 0.0;
      for (std::size_t c = 0; c < q.cols(); ++c) d += q(r, c) * k(j, c);
      if (d > best_val) {
        best_val = d;
        best = j;
      }
    }
    for (std::size_t c = 0; c < v.cols(); ++c) out(r, c) = v(best, c);
  }
  return out;
}

std::string where(std::size_t layer, long step) {
  return "injection at layer " + std::to_string(layer) + ", step " + std::to_string(step);
}

}  // namespace

Denoiser::Denoiser(DenoiserConfig config, std::uint64_t seed) : config_(config) {
  if (config_.vocab == 0) config_.vocab = Vocabulary::standard().size();
  config_.validate();
  normalizer = Normalizer::identity(config_.features);
  std::mt19937_64 rng(seed);
  const std::size_t c = config_.latent;
  tok_emb_ = Parameter("tok_emb", gaussian(config_.vocab, c, 1.0, rng));
  cond_w_ = linear_w("cond_w", c, c, rng);
  cond_b_ = zeros("cond_b", 1, c);
  time_w1_ = linear_w("time_w1", c, c, rng);
  time_b1_ = zeros("time_b1", 1, c);
  time_w2_ = linear_w("time_w2", c, c, rng);
  time_b2_ = zeros("time_b2", 1, c);
  in_w_ = linear_w("in_w", c, config_.features, rng);
  in_b_ = zeros("in_b", 1, c);
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    Layer L{
        linear_w(p + "sa_wq", c, c, rng), zeros(p + "sa_bq", 1, c),
        linear_w(p + "sa_wk", c, c, rng), zeros(p + "sa_bk", 1, c),
        linear_w(p + "sa_wv", c, c, rng), zeros(p + "sa_bv", 1, c),
        linear_w(p + "sa_wo", c, c, rng), zeros(p + "sa_bo", 1, c),
        ones(p + "ln1_g", 1, c), zeros(p + "ln1_b", 1, c),
        linear_w(p + "ca_wq", c, c, rng), zeros(p + "ca_bq", 1, c),
        linear_w(p + "ca_wk", c, c, rng), zeros(p + "ca_bk", 1, c),
        linear_w(p + "ca_wv", c, c, rng), zeros(p + "ca_bv", 1, c),
        linear_w(p + "ca_wo", c, c, rng), zeros(p + "ca_bo", 1, c),
        ones(p + "ln2_g", 1, c), zeros(p + "ln2_b", 1, c),
        linear_w(p + "ff_w1", config_.ff, c, rng), zeros(p + "ff_b1", 1, config_.ff),
        linear_w(p + "ff_w2", c, config_.ff, rng), zeros(p + "ff_b2", 1, c),
        ones(p + "ln3_g", 1, c), zeros(p + "ln3_b", 1, c),
    };
    layers_.push_back(std::move(L));
  }
  out_w_ = linear_w("out_w", config_.features, c, rng);
  out_b_ = zeros("out_b", 1, config_.features);
}

std::vector<Parameter*> Denoiser::parameters() {
  std::vector<Parameter*> out = {&tok_emb_, &cond_w_, &cond_b_, &time_w1_, &time_b1_,
                                 &time_w2_, &time_b2_, &in_w_,   &in_b_};
  for (Layer& L : layers_) {
    for (Parameter* p : {&L.sa_wq, &L.sa_bq, &L.sa_wk, &L.sa_bk, &L.sa_wv, &L.sa_bv, &L.sa_wo, &L.sa_bo,
                         &L.ln1_g, &L.ln1_b, &L.ca_wq, &L.ca_bq, &L.ca_wk, &L.ca_bk, &L.ca_wv, &L.ca_bv,
                         &L.ca_wo, &L.ca_bo, &L.ln2_g, &L.ln2_b, &L.ff_w1, &L.ff_b1, &L.ff_w2, &L.ff_b2,
                         &L.ln3_g, &L.ln3_b})
      out.push_back(p);
  }
  out.push_back(&out_w_);
  out.push_back(&out_b_);
  return out;
}

std::vector<const Parameter*> Denoiser::parameters() const {
  auto mut = const_cast<Denoiser*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

Parameter& Denoiser::parameter(std::string_view name) {
  for (Parameter* p : parameters())
    if (p->name == name) return *p;
  fail(ErrorKind::InvalidArgument, "no parameter named " + std::string(name));
}

const Parameter& Denoiser::parameter(std::string_view name) const {
  return const_cast<Denoiser*>(this)->parameter(name);
}

void Denoiser::round_to_storage() {
  for (Parameter* p : parameters())
    for (double& v : p->value.values()) v = static_cast<double>(static_cast<float>(v));
  for (double& v : normalizer.mean.values()) v = static_cast<double>(static_cast<float>(v));
  for (double& v : normalizer.std.values()) v = static_cast<double>(static_cast<float>(v));
}

PromptEncoding Denoiser::encode_prompt(std::string_view text) const {
  PromptEncoding enc;
  enc.ids = vocabulary().tokenize(text);
  enc.null = enc.ids.size() == 1 && enc.ids[0] == Vocabulary::kNull;
  Matrix words(enc.ids.size(), config_.latent);
  for (std::size_t i = 0; i < enc.ids.size(); ++i) {
    const auto row = tok_emb_.value.row(enc.ids[i]);
    std::copy(row.begin(), row.end(), words.row(i).begin());
  }
  Matrix mean(1, config_.latent);
  for (std::size_t i = 0; i < words.rows(); ++i)
    for (std::size_t c = 0; c < config_.latent; ++c) mean(0, c) += words(i, c);
  for (double& v : mean.values()) v /= static_cast<double>(words.rows());
  enc.pooled = matmul_nt(mean, cond_w_.value);
  for (std::size_t c = 0; c < config_.latent; ++c) enc.pooled(0, c) += cond_b_.value(0, c);
  enc.tokens = std::move(words);
  return enc;
}

template <typename Leaf>
Var Denoiser::run(Tape& tape, Leaf&& leaf, const Matrix& x_t, std::size_t t, std::span<const std::size_t> ids,
                  Taps* taps) const {
  const std::size_t n = x_t.rows();
  const std::size_t c = config_.latent;
  const std::size_t heads = config_.heads;
  require(n >= 1 && n <= config_.max_frames, ErrorKind::InvalidArgument,
          "denoise: frame count " + std::to_string(n) + " outside [1, " + std::to_string(config_.max_frames) + "]");
  require(x_t.cols() == config_.features, ErrorKind::InvalidArgument, "denoise: feature width mismatch");
  require(t < config_.steps, ErrorKind::InvalidArgument, "denoise: t outside [0, T)");
  require(!ids.empty(), ErrorKind::InvalidArgument, "denoise: empty token list");
  for (std::size_t id : ids) require(id < config_.vocab, ErrorKind::InvalidArgument, "denoise: token id out of range");
  const bool injecting = taps != nullptr && !taps->inject.empty();
  if (injecting) {
    require(taps->inject.size() == config_.layers, ErrorKind::Injection,
            "injection table has " + std::to_string(taps->inject.size()) + " layers, model has " +
                std::to_string(config_.layers));
  }
  if (taps != nullptr && taps->capture) taps->captured.assign(config_.layers, LayerIO{});

  Var x = tape.constant(x_t);
  Matrix pe(n, c);
  for (std::size_t i = 0; i < n; ++i) {
    const Matrix s = sinusoid(static_cast<double>(i), c);
    std::copy(s.values().begin(), s.values().end(), pe.row(i).begin());
  }
  Var frames = num::add(num::add_row(num::matmul_nt(x, leaf(in_w_)), leaf(in_b_)), tape.constant(std::move(pe)));
  Var temb = num::add_row(
      num::matmul_nt(num::gelu(num::add_row(num::matmul_nt(tape.constant(sinusoid(static_cast<double>(t), c)),
                                                           leaf(time_w1_)),
                                            leaf(time_b1_))),
                     leaf(time_w2_)),
      leaf(time_b2_));
  Var words = num::embedding(leaf(tok_emb_), ids);
  Var pooled = num::add_row(num::matmul_nt(num::mean_rows(words), leaf(cond_w_)), leaf(cond_b_));
  Var cond = num::add(pooled, temb);
  Var seq[] = {cond, frames};
  Var h = num::concat_rows(seq);

  for (std::size_t l = 0; l < config_.layers; ++l) {
    const Layer& L = layers_[l];
    Var ih = h;
    Var q = num::add_row(num::matmul_nt(ih, leaf(L.sa_wq)), leaf(L.sa_bq));
    Var k = num::add_row(num::matmul_nt(ih, leaf(L.sa_wk)), leaf(L.sa_bk));
    Var v = num::add_row(num::matmul_nt(ih, leaf(L.sa_wv)), leaf(L.sa_bv));
    const LayerInjection* inj = injecting ? taps->inject[l] : nullptr;
    LayerIO* io = (taps != nullptr && taps->capture) ? &taps->captured[l] : nullptr;
    std::vector<Matrix>* scores = (io != nullptr && taps->capture_scores) ? &io->scores : nullptr;

    Var att;
    if (inj == nullptr) {
      att = attention_var(q, k, v, heads, scores);
    } else {
      const long step = taps->step;
      require(inj->q.cols() == c && inj->k.cols() == c && inj->v.cols() == c, ErrorKind::Injection,
              where(l, step) + ": source width differs from C=" + std::to_string(c));
      require(inj->k.rows() == inj->v.rows(), ErrorKind::Injection, where(l, step) + ": K and V row counts differ");
      require(inj->q.rows() == n + 1, ErrorKind::Injection,
              where(l, step) + ": Q source has " + std::to_string(inj->q.rows()) + " rows, stream has " +
                  std::to_string(n + 1));
      require(inj->k.rows() >= 2, ErrorKind::Injection, where(l, step) + ": K/V source has no frame tokens");
      if (taps->scope == InjectScope::AllTokens) {
        if (inj->hard) {
          att = tape.constant(hard_select(inj->q, inj->k, inj->v, 0));
        } else {
          att = attention_var(tape.constant(inj->q), tape.constant(inj->k), tape.constant(inj->v), heads, scores);
        }
      } else {
        Var cond_att = attention_var(num::slice_rows(q, 0, 1), k, v, heads, nullptr);
        const std::size_t m = inj->k.rows();
        Var frame_att;
        if (inj->hard) {
          frame_att = tape.constant(hard_select(inj->q.rows_slice(1, n + 1), inj->k, inj->v, 1));
        } else {
          Var kparts[] = {num::slice_rows(k, 0, 1), tape.constant(inj->k.rows_slice(1, m))};
          Var vparts[] = {num::slice_rows(v, 0, 1), tape.constant(inj->v.rows_slice(1, m))};
          frame_att = attention_var(tape.constant(inj->q.rows_slice(1, n + 1)), num::concat_rows(kparts),
                                    num::concat_rows(vparts), heads, scores);
        }
        Var parts[] = {cond_att, frame_att};
        att = num::concat_rows(parts);
      }
    }
    Var oh = num::add(ih, num::add_row(num::matmul_nt(att, leaf(L.sa_wo)), leaf(L.sa_bo)));
    if (io != nullptr) {
      io->ih = ih.value();
      io->q = q.value();
      io->k = k.value();
      io->v = v.value();
      io->oh = oh.value();
    }
    h = num::layer_norm(oh, leaf(L.ln1_g), leaf(L.ln1_b));

    Var cq = num::add_row(num::matmul_nt(h, leaf(L.ca_wq)), leaf(L.ca_bq));
    Var ck = num::add_row(num::matmul_nt(words, leaf(L.ca_wk)), leaf(L.ca_bk));
    Var cv = num::add_row(num::matmul_nt(words, leaf(L.ca_wv)), leaf(L.ca_bv));
    Var catt = attention_var(cq, ck, cv, heads, nullptr);
    h = num::layer_norm(num::add(h, num::add_row(num::matmul_nt(catt, leaf(L.ca_wo)), leaf(L.ca_bo))),
                        leaf(L.ln2_g), leaf(L.ln2_b));

    Var f = num::add_row(
        num::matmul_nt(num::gelu(num::add_row(num::matmul_nt(h, leaf(L.ff_w1)), leaf(L.ff_b1))), leaf(L.ff_w2)),
        leaf(L.ff_b2));
    h = num::layer_norm(num::add(h, f), leaf(L.ln3_g), leaf(L.ln3_b));
  }
  return num::add_row(num::matmul_nt(num::slice_rows(h, 1, n + 1), leaf(out_w_)), leaf(out_b_));
}

Matrix Denoiser::denoise(const Matrix& x_t, std::size_t t, const PromptEncoding& prompt, Taps* taps) const {
  Tape tape(false);
  auto leaf = [&tape](const Parameter& p) { return tape.constant(p.value); };
  Var out = run(tape, leaf, x_t, t, prompt.ids, taps);
  Matrix result = out.value();
  if (!result.all_finite()) fail(ErrorKind::NonFinite, "denoise produced non-finite values at t=" + std::to_string(t));
  return result;
}

Var Denoiser::forward(Tape& tape, const Matrix& x_t, std::size_t t, std::span<const std::size_t> ids) {
  auto leaf = [&tape](const Parameter& p) { return tape.param(const_cast<Parameter&>(p)); };
  return run(tape, leaf, x_t, t, ids, nullptr);
}

}  // namespace momo::model
