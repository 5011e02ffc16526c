// End-to-end acceptance run: trains the desk model, then checks every
// criterion and prints one PASS/FAIL line for each.
//
//   acceptance --cli <path to momo> [--workdir dir] [--steps n] [--reuse]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "momo/analysis.hpp"
#include "momo/baselines.hpp"
#include "momo/diffusion.hpp"
#include "momo/error.hpp"
#include "momo/evalkit.hpp"
#include "momo/synthgen.hpp"
#include "momo/tape.hpp"
#include "momo/transfer.hpp"

using namespace momo;
using nlohmann::json;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Matrix gaussian(std::size_t r, std::size_t c, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, scale);
  Matrix m(r, c);
  for (double& v : m.values()) v = nd(rng);
  return m;
}

// ---- shared state -----------------------------------------------------------------

struct Setup {
  fs::path work;
  std::string cli;
  std::size_t train_steps = 15000;
  bool reuse = false;
};

constexpr std::uint64_t kCorpusSeed = 1;
constexpr std::uint64_t kModelSeed = 7;
constexpr std::uint64_t kTrainSeed = 3;
constexpr std::uint64_t kBenchCorpusSeed = 11;

struct Trained {
  std::unique_ptr<model::Denoiser> model;
  std::vector<double> losses;
  double seconds = 0.0;
};

synth::Corpus training_corpus() { return synth::build_corpus(240, kCorpusSeed, {60, 0.02}); }

// ---- 1: numerics --------------------------------------------------------------------

double unary_check(const std::function<num::Var(num::Tape&, num::Var)>& op, Matrix input, std::uint64_t seed) {
  num::Parameter p("x", std::move(input));
  num::Tape sizing(false);
  const Matrix shape = op(sizing, sizing.constant(p.value)).value();
  const Matrix target = gaussian(shape.rows(), shape.cols(), seed + 100);
  num::Parameter* ps[] = {&p};
  auto loss = [&](num::Tape& t) { return num::mse(op(t, t.param(p)), t.constant(target)); };
  return num::grad_check(loss, ps).max_relative_error;
}

Outcome criterion_numerics() {
  using namespace num;
  const auto t0 = Clock::now();
  std::vector<double> errs;
  auto g = [](std::size_t r, std::size_t c, std::uint64_t s, double k = 1.0) { return gaussian(r, c, s, k); };
  errs.push_back(unary_check([&](Tape& t, Var x) { return matmul(x, t.constant(g(4, 3, 1))); }, g(2, 4, 2), 1));
  errs.push_back(unary_check([&](Tape& t, Var x) { return matmul(t.constant(g(3, 2, 3)), x); }, g(2, 4, 4), 2));
  errs.push_back(unary_check([&](Tape& t, Var x) { return matmul_nt(x, t.constant(g(5, 4, 5))); }, g(2, 4, 6), 3));
  errs.push_back(unary_check([&](Tape& t, Var x) { return matmul_nt(t.constant(g(3, 4, 7)), x); }, g(5, 4, 8), 4));
  errs.push_back(unary_check([&](Tape& t, Var x) { return add(x, t.constant(g(3, 3, 10))); }, g(3, 3, 11), 6));
  errs.push_back(unary_check([&](Tape& t, Var x) { return sub(t.constant(g(3, 3, 12)), x); }, g(3, 3, 13), 7));
  errs.push_back(unary_check([&](Tape& t, Var x) { return add_row(t.constant(g(4, 3, 14)), x); }, g(1, 3, 15), 8));
  errs.push_back(unary_check([&](Tape&, Var x) { return scale(x, -1.7); }, g(2, 5, 18), 10));
  errs.push_back(unary_check([&](Tape&, Var x) { return softmax_rows(x); }, g(3, 6, 19), 11));
  errs.push_back(unary_check([&](Tape& t, Var x) {
    return layer_norm(x, t.constant(g(1, 6, 20)), t.constant(g(1, 6, 21)));
  }, g(3, 6, 22), 12));
  errs.push_back(unary_check([&](Tape& t, Var w) {
    return layer_norm(t.constant(g(3, 6, 23)), w, t.constant(g(1, 6, 24)));
  }, g(1, 6, 25), 13));
  errs.push_back(unary_check([&](Tape& t, Var b) {
    return layer_norm(t.constant(g(3, 6, 26)), t.constant(g(1, 6, 27)), b);
  }, g(1, 6, 28), 14));
  errs.push_back(unary_check([](Tape&, Var x) {
    const std::size_t ids[] = {2, 0, 2, 4};
    return embedding(x, ids);
  }, g(5, 3, 29), 15));
  errs.push_back(unary_check([](Tape&, Var x) { return transpose(x); }, g(3, 5, 30), 16));
  errs.push_back(unary_check([](Tape&, Var x) { return slice_cols(x, 1, 4); }, g(3, 5, 31), 17));
  errs.push_back(unary_check([](Tape&, Var x) { return slice_rows(x, 1, 3); }, g(4, 5, 32), 18));
  errs.push_back(unary_check([&](Tape& t, Var x) {
    Var parts[] = {x, t.constant(g(3, 2, 33)), x};
    return concat_cols(parts);
  }, g(3, 4, 34), 19));
  errs.push_back(unary_check([&](Tape& t, Var x) {
    Var parts[] = {t.constant(g(2, 4, 35)), x};
    return concat_rows(parts);
  }, g(3, 4, 36), 20));
  errs.push_back(unary_check([](Tape&, Var x) { return gelu(x); }, g(3, 4, 37, 2.0), 21));
  errs.push_back(unary_check([](Tape&, Var x) { return mean_rows(x); }, g(5, 3, 38), 22));
  errs.push_back(unary_check([&](Tape& t, Var x) {
    Var parts[] = {mse(x, t.constant(g(2, 3, 39))), scale(mse(x, t.constant(Matrix(2, 3))), 2.0)};
    return sum_scalars(parts);
  }, g(2, 3, 40), 23));
  const double prim = *std::max_element(errs.begin(), errs.end());

  model::Denoiser d(model::DenoiserConfig{}, 11);
  const Matrix x = gaussian(4, 95, 12), target = gaussian(4, 95, 13);
  const auto ids = d.vocabulary().tokenize("a person walks and raises both arms");
  std::vector<Parameter*> params;
  // Key-bias gradients are identically zero under softmax; see the unit test.
  for (Parameter* p : d.parameters())
    if (p->name.find("_bk") == std::string::npos) params.push_back(p);
  auto loss = [&](Tape& t) { return mse(d.forward(t, x, 17, ids), t.constant(target)); };
  GradCheckOptions opt;
  opt.max_coords = 256;
  opt.seed = 5;
  const double full = grad_check(loss, params, opt).max_relative_error;
  const double secs = seconds_since(t0);
  return {prim < 1e-4 && full < 1e-4 && secs < 60.0,
          "primitives max rel err " + fmt("%.2e", prim) + ", full denoiser " + fmt("%.2e", full) + ", " +
              fmt("%.1f", secs) + " s"};
}

// ---- 2: diffusion machinery -----------------------------------------------------------

Outcome criterion_diffusion() {
  const auto s = diff::build_schedule(100);
  const Matrix c = gaussian(7, 4, 7), x = gaussian(7, 4, 8);
  const diff::Predictor constant = [&](const Matrix&, std::size_t) { return c; };
  double round_trip = 0.0;
  for (std::size_t stride : {1u, 7u}) {
    const auto traj = diff::invert_loop(s, x, constant, stride);
    round_trip = std::max(round_trip, max_abs_diff(diff::sample_loop(s, traj.back(), constant, stride).final_state, x));
  }

  bool moments = true;
  const std::size_t draws = 10000;
  for (std::size_t t : {5u, 40u, 90u}) {
    const double ab = s.alpha_bar[t];
    const Matrix x0 = Matrix{{0.7, -1.3}};
    std::mt19937_64 rng(17 + t);
    std::normal_distribution<double> nd;
    double sum[2] = {0, 0}, sq[2] = {0, 0};
    for (std::size_t i = 0; i < draws; ++i) {
      const Matrix xt = diff::forward_diffuse(x0, s, t, Matrix{{nd(rng), nd(rng)}});
      for (int k = 0; k < 2; ++k) {
        sum[k] += xt(0, k);
        sq[k] += xt(0, k) * xt(0, k);
      }
    }
    for (int k = 0; k < 2; ++k) {
      const double mean = sum[k] / draws, var = sq[k] / draws - mean * mean, ev = 1.0 - ab;
      moments = moments && std::abs(mean - std::sqrt(ab) * x0(0, k)) <= 3.0 * std::sqrt(ev / draws) &&
                std::abs(var - ev) <= 3.0 * ev * std::sqrt(2.0 / (draws - 1));
    }
  }

  bool monotone = true;
  for (std::size_t tc : {10u, 100u, 1000u}) {
    const auto sc = diff::build_schedule(tc);
    for (std::size_t t = 1; t < tc; ++t) monotone = monotone && sc.alpha_bar[t] < sc.alpha_bar[t - 1];
  }
  return {round_trip <= 1e-9 && moments && monotone,
          "oracle round trip " + fmt("%.2e", round_trip) + ", moments within 3 SE: " + (moments ? "yes" : "no") +
              ", alpha_bar monotone: " + (monotone ? "yes" : "no")};
}

// ---- 4: training ------------------------------------------------------------------------

Trained train_model(const Setup& setup) {
  Trained out;
  const fs::path ckpt = setup.work / "desk.ckpt", record = setup.work / "desk.train.json";
  if (setup.reuse && fs::exists(ckpt) && fs::exists(record)) {
    out.model = std::make_unique<model::Denoiser>(model::Denoiser::load(ckpt));
    std::ifstream f(record);
    const json j = json::parse(f);
    out.losses = j.at("losses").get<std::vector<double>>();
    out.seconds = j.at("seconds").get<double>();
    std::cout << "  reusing " << ckpt.string() << "\n";
    return out;
  }
  const auto corpus = training_corpus();
  auto m = std::make_unique<model::Denoiser>(model::DenoiserConfig{}, kModelSeed);
  const auto train = corpus.train_indices();
  std::vector<const Matrix*> feats;
  for (auto i : train) feats.push_back(&corpus.samples[i].motion.features);
  m->normalizer = model::Normalizer::fit(feats);
  std::vector<diff::TrainExample> data;
  for (auto i : train)
    data.push_back({m->normalizer.normalize(corpus.samples[i].motion.features),
                    m->vocabulary().tokenize(corpus.samples[i].label)});
  diff::TrainConfig tc;
  tc.steps = setup.train_steps;
  tc.batch = 8;
  tc.lr = 1e-3;
  tc.lr_final = 1e-4;
  tc.cond_dropout = 0.1;
  tc.seed = kTrainSeed;
  const auto t0 = Clock::now();
  double window = 0.0;
  out.losses = diff::train(*m, diff::build_schedule(m->config().steps), data, tc, [&](std::size_t step, double l) {
    window += l;
    if ((step + 1) % 1000 == 0) {
      std::cout << "  train step " << step + 1 << " loss " << fmt("%.4f", window / 1000) << " "
                << fmt("%.0f", seconds_since(t0)) << " s" << std::endl;
      window = 0.0;
    }
  });
  out.seconds = seconds_since(t0);
  m->round_to_storage();
  m->save(ckpt);
  std::ofstream(record) << json{{"losses", out.losses}, {"seconds", out.seconds}}.dump() << "\n";
  out.model = std::move(m);
  return out;
}

Outcome criterion_training(const Trained& t) {
  const std::size_t w = std::min<std::size_t>(100, t.losses.size());
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < w; ++i) {
    first += t.losses[i] / w;
    last += t.losses[t.losses.size() - w + i] / w;
  }
  const double ratio = last / first;
  return {ratio < 0.25 && t.losses.size() <= 20000 && t.seconds < 1800.0,
          std::to_string(t.losses.size()) + " steps, loss " + fmt("%.4f", first) + " -> " + fmt("%.4f", last) +
              " (ratio " + fmt("%.3f", ratio) + "), " + fmt("%.0f", t.seconds) + " s"};
}

// ---- 3: mixed-attention identity ----------------------------------------------------------

Outcome criterion_identity(const model::Denoiser& m, const diff::NoiseSchedule& s) {
  const std::size_t L = m.config().layers, T = s.steps;
  diff::SamplerConfig sc;
  xfer::Source prompt_src;
  prompt_src.prompt = "a person walks and waves";
  prompt_src.seed = 21;
  prompt_src.frames = 60;
  const auto plain = diff::sample(m, s, prompt_src.prompt, 60, sc, diff::initial_noise(60, 95, 21));

  const auto corpus = training_corpus();
  motion::Motion mo = corpus.samples[corpus.train_indices()[0]].motion;
  mo.text = corpus.samples[corpus.train_indices()[0]].label;
  xfer::Source motion_src;
  motion_src.motion = mo;
  const auto noise = diff::ddim_invert(m, s, diff::to_model_space(m, mo), *mo.text).back();
  // Inverted streams replay at guidance 1, so the identity for a motion
  // source holds against generation at guidance 1.
  diff::SamplerConfig sc1 = sc;
  sc1.guidance = 1.0;
  const auto plain_inv = diff::sample(m, s, *mo.text, mo.frames(), sc1, noise);

  const std::pair<std::size_t, std::size_t> layers[] = {{1, L}, {2, L}, {1, 1}, {L, L}, {2, 3}, {1, 2}};
  double worst = 0.0;
  std::size_t subsets = 0;
  for (const auto& [a, b] : layers) {
    for (auto scope : {model::InjectScope::FrameTokens, model::InjectScope::AllTokens}) {
      auto cfg = xfer::TransferConfig::defaults_for(L, T);
      cfg.s_layer = a;
      cfg.e_layer = b;
      cfg.scope = scope;
      cfg.direction = xfer::DirectionMode::Off;
      worst = std::max(worst, max_abs_diff(xfer::transfer(m, s, prompt_src, prompt_src, cfg, sc).out_model, plain.x0_hat));
      ++subsets;
    }
  }
  for (const auto& [a, b] : {std::pair<std::size_t, std::size_t>{2, L}, {1, 2}}) {
    auto cfg = xfer::TransferConfig::defaults_for(L, T);
    cfg.s_layer = a;
    cfg.e_layer = b;
    cfg.direction = xfer::DirectionMode::Off;
    worst = std::max(worst, max_abs_diff(xfer::transfer(m, s, motion_src, motion_src, cfg, sc1).out_model, plain_inv.x0_hat));
    ++subsets;
  }

  auto empty = xfer::TransferConfig::empty();
  empty.direction = xfer::DirectionMode::Off;
  xfer::Source other = prompt_src;
  other.prompt = "a person runs like a chicken";
  other.seed = 22;
  const bool bitwise = xfer::transfer(m, s, prompt_src, other, empty, sc).out_model ==
                       diff::sample(m, s, other.prompt, 60, sc, diff::initial_noise(60, 95, 21)).x0_hat;
  return {worst <= 1e-5 && bitwise && subsets >= 5,
          std::to_string(subsets) + " layer/scope subsets, max abs diff " + fmt("%.2e", worst) +
              ", empty ranges bitwise: " + (bitwise ? "yes" : "no")};
}

// ---- 5: inversion ------------------------------------------------------------------------

Outcome criterion_inversion(const model::Denoiser& m, const diff::NoiseSchedule& s) {
  const auto corpus = training_corpus();
  const auto train = corpus.train_indices();
  std::size_t ok = 0;
  double worst = 0.0;
  diff::SamplerConfig sc;
  sc.guidance = 1.0;
  for (std::size_t k = 0; k < 20; ++k) {
    const auto& smp = corpus.samples[train[k]];
    const Matrix x0 = diff::to_model_space(m, smp.motion);
    const auto noise = diff::ddim_invert(m, s, x0, smp.label).back();
    const auto r = diff::sample(m, s, smp.label, x0.rows(), sc, noise);
    const double e = relative_l2(diff::from_model_space(m, r.x0_hat, smp.label).features, smp.motion.features);
    ok += e < 5e-2;
    worst = std::max(worst, e);
  }
  return {ok >= 18, std::to_string(ok) + "/20 round trips under 5e-2 relative L2 (worst " + fmt("%.3f", worst) + ")"};
}

// ---- 6: desk benchmark -------------------------------------------------------------------

Outcome criterion_benchmark(const model::Denoiser& m, const diff::NoiseSchedule& s, const fs::path& work) {
  const auto train_corpus = training_corpus();
  std::vector<motion::Motion> reference;
  std::vector<std::string> ref_motifs;
  for (auto i : train_corpus.train_indices()) {
    reference.push_back(train_corpus.samples[i].motion);
    ref_motifs.push_back(synth::to_string(train_corpus.samples[i].spec.motif));
  }
  const auto clf = eval::MotifClassifier::fit(reference, ref_motifs);

  const auto bc = synth::build_corpus(480, kBenchCorpusSeed, {60, 0.02});
  std::vector<motion::Motion> motions;
  std::vector<std::string> labels, motifs;
  for (const auto& x : bc.samples) {
    motion::Motion mo = x.motion;
    mo.text = x.label;
    motions.push_back(std::move(mo));
    labels.push_back(x.label);
    motifs.push_back(synth::to_string(x.spec.motif));
  }
  // Same-verb pairs: 17 walk, 17 run, 16 jump leaders with styled followers.
  std::vector<eval::BenchmarkPair> pairs;
  const std::pair<const char*, std::size_t> verbs[] = {{"walk", 17}, {"run", 17}, {"jump", 16}};
  for (const auto& [verb, count] : verbs) {
    eval::BenchmarkOptions o;
    o.leader_keywords = {verb};
    o.cap = 5;
    o.exclude_styled_leaders = true;
    o.max_pairs = count;
    std::vector<std::string> same_verb = labels;
    for (auto& l : same_verb)
      if (!eval::contains_any(l, {verb})) l.clear();
    for (auto p : eval::build_benchmark(same_verb, o)) {
      p.id = pairs.size();
      pairs.push_back(p);
    }
  }
  const eval::BenchmarkData data{&motions, &motifs, &clf, &reference};
  const auto cfg = xfer::TransferConfig::defaults_for(m.config().layers, s.steps);
  const diff::SamplerConfig sc;
  const eval::Method momo = [&](const eval::BenchmarkPair& p) {
    return xfer::transfer(m, s, xfer::Source{motions[p.leader]}, xfer::Source{motions[p.follower]}, cfg, sc).out;
  };
  const eval::Method nn = [&](const eval::BenchmarkPair& p) {
    return base::nn_motion_space(motions[p.leader], motions[p.follower]);
  };
  const fs::path dir = work / "bench";
  fs::remove_all(dir);
  const auto t0 = Clock::now();
  const auto rm = eval::run_benchmark(pairs, "momo", momo, data, dir / "momo.csv", dir / "momo.json");
  const auto rn = eval::run_benchmark(pairs, "nn-motion", nn, data, dir / "nn-motion.csv", dir / "nn-motion.json");
  std::size_t wins = 0;
  for (std::size_t i = 0; i < rm.rows.size(); ++i) wins += rm.rows[i].jitter < rn.rows[i].jitter;
  const double win_rate = pairs.empty() ? 0.0 : static_cast<double>(wins) / pairs.size();
  const bool pass = pairs.size() == 50 && rm.mean.contact >= 0.75 && rm.mean.follower_rot >= 0.85 &&
                    rm.mean.motif_top1 >= 0.7 && win_rate >= 0.8;
  return {pass, std::to_string(pairs.size()) + " pairs: contact " + fmt("%.3f", rm.mean.contact) + " (>=0.75), rot " +
                    fmt("%.3f", rm.mean.follower_rot) + " (>=0.85), top-1 " + fmt("%.3f", rm.mean.motif_top1) +
                    " (>=0.7), jitter below nn-motion on " + std::to_string(wins) + "/" +
                    std::to_string(pairs.size()) + " (>=80%), frechet " +
                    (rm.frechet ? fmt("%.3f", *rm.frechet) : std::string("n/a")) + ", " +
                    fmt("%.0f", seconds_since(t0)) + " s"};
}

// ---- 7: analysis ---------------------------------------------------------------------------

Outcome criterion_analysis(const model::Denoiser& m, const diff::NoiseSchedule& s) {
  const auto corpus = training_corpus();
  std::vector<motion::Motion> motions;
  std::vector<const synth::Sample*> samples;
  for (auto i : corpus.train_indices()) {
    const auto& smp = corpus.samples[i];
    if (!smp.spec.locomotion()) continue;
    motion::Motion mo = smp.motion;
    mo.text = smp.label;
    motions.push_back(std::move(mo));
    samples.push_back(&smp);
    if (motions.size() == 48) break;
  }
  double purity[2][2];  // [element][phase, motif]
  for (int e = 0; e < 2; ++e) {
    ana::AnalysisConfig c;
    c.element = e == 0 ? ana::Element::Q : ana::Element::K;
    const auto f = ana::collect_features(m, s, motions, c);
    const auto r = ana::cluster(f, c);
    std::vector<std::size_t> phase, motif;
    for (const auto& key : f.keys) {
      phase.push_back(ana::phase_bin(samples[key.motion]->phase[key.frame]));
      motif.push_back(static_cast<std::size_t>(samples[key.motion]->spec.motif));
    }
    purity[e][0] = ana::purity(r.labels, phase);
    purity[e][1] = ana::purity(r.labels, motif);
  }

  // Neutral walk leaders against styled walk followers, both from the benchmark corpus.
  const auto held_out = synth::build_corpus(480, kBenchCorpusSeed, {60, 0.02});
  std::vector<std::size_t> plain_walks, styled_walks;
  for (std::size_t i = 0; i < held_out.samples.size(); ++i) {
    const auto& spec = held_out.samples[i].spec;
    if (spec.verb != synth::Verb::Walk) continue;
    (spec.motif == synth::Motif::Neutral ? plain_walks : styled_walks).push_back(i);
  }
  double err_sum = 0.0;
  std::size_t npairs = 0;
  for (; npairs < 10 && !plain_walks.empty() && npairs < styled_walks.size(); ++npairs) {
    const auto& ls = held_out.samples[plain_walks[npairs % plain_walks.size()]];
    const auto& fs_ = held_out.samples[styled_walks[npairs]];
    motion::Motion l = ls.motion, f = fs_.motion;
    l.text = ls.label;
    f.text = fs_.label;
    const auto corr = ana::correspondence(m, s, l, f, ana::AnalysisConfig{});
    double e = 0.0;
    for (std::size_t n = 0; n < corr.argmax.size(); ++n) e += ana::phase_distance(ls.phase[n], fs_.phase[corr.argmax[n]]);
    err_sum += e / corr.argmax.size();
  }
  const double phase_err = npairs == 0 ? 1.0 : err_sum / npairs;
  const bool pass = purity[0][0] > purity[0][1] && purity[1][1] > purity[1][0] && npairs > 0 && phase_err <= 0.125;
  return {pass, "Q purity phase " + fmt("%.3f", purity[0][0]) + " vs motif " + fmt("%.3f", purity[0][1]) +
                    "; K purity motif " + fmt("%.3f", purity[1][1]) + " vs phase " + fmt("%.3f", purity[1][0]) +
                    "; walk->walk phase error " + fmt("%.4f", phase_err) + " cycles over " + std::to_string(npairs) +
                    " pairs (<=0.125)"};
}

// ---- 8: metric unit suite ------------------------------------------------------------------

Outcome criterion_metrics() {
  std::vector<std::string> failures;
  auto check = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };
  const Matrix a{{1, 0, 1, 0}, {0, 1, 1, 0}};
  Matrix comp = a;
  for (double& v : comp.values()) v = 1.0 - v;
  Matrix six = a;
  six(0, 0) = 0;
  six(1, 3) = 1;
  check(eval::contact_similarity(a, a) == 1.0, "contact identical");
  check(eval::contact_similarity(a, comp) == 0.0, "contact complement");
  check(eval::contact_similarity(a, six) == 0.75, "contact 6 of 8");

  const Matrix leader{{0.0}, {10.0}}, follower{{2.0}, {4.0}};
  check(eval::follower_similarity(Matrix{{2.0}, {4.0}}, leader, follower) == 1.0, "follower copied");
  check(eval::follower_similarity(Matrix{{0.0}, {10.0}}, leader, follower) == 0.0, "leader copied");
  check(eval::follower_similarity(Matrix{{2.0}, {4.0}, {1.0}}, leader, follower) == 2.5 / 3.0, "equidistant tie");

  eval::Gaussian g1{{0.5, -1.0, 2.0}, Matrix{{2.0, 0.3, 0.1}, {0.3, 1.0, -0.2}, {0.1, -0.2, 1.5}}};
  eval::Gaussian g2 = g1;
  g2.mean = {1.5, 1.0, 0.0};
  check(std::abs(eval::frechet_distance(g1, g1)) <= 1e-6, "frechet A=B");
  check(std::abs(eval::frechet_distance(g1, g2) - 9.0) <= 1e-6, "frechet mean shift");

  std::vector<std::string> labels = {"a person walks", "a person runs"};
  for (int i = 0; i < 3; ++i) labels.push_back("a person walks like a chicken");
  eval::BenchmarkOptions o;
  o.leader_keywords = {"walks", "runs"};
  o.follower_keywords = {"chicken"};
  o.exclude_styled_leaders = true;
  check(eval::build_benchmark(labels, o).size() == 2, "cap 2 leaders x 3 followers");
  std::vector<std::string> many(25, "a person walks");
  many.push_back("a person jumps like a chicken");
  eval::BenchmarkOptions o2;
  o2.leader_keywords = {"walks"};
  o2.follower_keywords = {"chicken"};
  check(eval::build_benchmark(many, o2).size() == 20, "cap 25 leaders x 1 follower");

  const auto corpus = synth::build_corpus(24, 5, {40, 0.02});
  std::vector<motion::Motion> motions;
  std::vector<std::string> motifs;
  for (const auto& x : corpus.samples) {
    motions.push_back(x.motion);
    motifs.push_back(synth::to_string(x.spec.motif));
  }
  const auto clf = eval::MotifClassifier::fit(motions, motifs);
  const auto empty = eval::run_benchmark({}, "momo", [](const eval::BenchmarkPair&) -> motion::Motion {
    fail(ErrorKind::InvalidArgument, "not called");
  }, {&motions, &motifs, &clf, nullptr});
  check(empty.rows.empty(), "0 pairs");
  const eval::BenchmarkPair pair{0, 0, 1};
  const auto nn = eval::run_benchmark({pair}, "nn-motion", [&](const eval::BenchmarkPair& p) {
    return base::nn_motion_space(motions[p.leader], motions[p.follower]);
  }, {&motions, &motifs, &clf, nullptr});
  check(nn.rows.size() == 1 && nn.rows[0].follower_rot == 1.0 && nn.rows[0].follower_loc == 1.0, "nn-motion 1 pair");

  std::string detail = "contact, follower, frechet, cap and benchmark examples";
  if (failures.empty()) return {true, detail + " exact"};
  for (const auto& f : failures) detail += "; failed: " + f;
  return {false, detail};
}

// ---- 9: CLI determinism ----------------------------------------------------------------------

struct CliStep {
  std::string command;
  std::string config_name;
  json config;
};

std::vector<CliStep> cli_steps() {
  const std::string l = "c/motions/000000.json", f = "c/motions/000003.json";
  return {
      {"corpus build", "corpus.json", {{"size", 24}, {"seed", 4}, {"frames", 40}, {"out", "c"}}},
      {"train", "train.json",
       {{"corpus", "c"}, {"out", "m.ckpt"}, {"steps", 30}, {"layers", 2}, {"latent", 16}, {"heads", 2},
        {"ff", 32}, {"diffusion_steps", 10}, {"max_frames", 48}, {"seed", 2}}},
      {"sample", "sample.json", {{"ckpt", "m.ckpt"}, {"prompt", "a person runs and waves"}, {"frames", 40}, {"out", "s.json"}}},
      {"invert", "invert.json", {{"ckpt", "m.ckpt"}, {"motion", l}, {"out", "n.json"}, {"reconstruct", "r.json"}}},
      {"transfer", "transfer.json",
       {{"ckpt", "m.ckpt"}, {"leader", l}, {"follower", f}, {"out", "t.json"}, {"trace_dir", "trace"},
        {"trace_steps", {2, 5}}}},
      {"transfer", "transfer_nn.json", {{"method", "nn-softmax"}, {"leader", l}, {"follower", f}, {"out", "t_nn.json"}}},
      {"transfer", "transfer_latent.json",
       {{"method", "nn-latent"}, {"ckpt", "m.ckpt"}, {"leader", l}, {"follower", f}, {"out", "t_latent.json"}}},
      {"analyze qk-cluster", "qk.json",
       {{"ckpt", "m.ckpt"}, {"corpus", "c"}, {"max_motions", 4}, {"dims", 3}, {"clusters", 4}, {"out", "qk"}}},
      {"analyze correspondence", "corr.json", {{"ckpt", "m.ckpt"}, {"leader", l}, {"follower", f}, {"out", "corr"}}},
      {"analyze attn-map", "attn.json", {{"ckpt", "m.ckpt"}, {"leader", l}, {"follower", f}, {"out", "attn"}}},
      {"bench build", "bench.json", {{"corpus", "c"}, {"cap", 2}, {"max_pairs", 3}, {"out", "b.json"}}},
      {"bench run", "bench_run.json", {{"bench", "b.json"}, {"corpus", "c"}, {"ckpt", "m.ckpt"}, {"out", "br"}}},
      {"metrics", "metrics.json",
       {{"motion", "t.json"}, {"leader", l}, {"follower", f}, {"corpus", "c"}, {"motif", "wave"}, {"out", "mt.json"}}},
  };
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    files[fs::relative(e.path(), root).generic_string()] = ss.str();
  }
  return files;
}

Outcome criterion_cli(const Setup& setup) {
  const fs::path base = fs::absolute(setup.work / "cli");
  fs::remove_all(base);
  const auto steps = cli_steps();
  std::vector<std::string> failures;
  for (const char* run : {"run1", "run2"}) {
    const fs::path dir = base / run;
    fs::create_directories(dir);
    for (const auto& st : steps) {
      std::ofstream(dir / st.config_name) << st.config.dump(2) << "\n";
      const std::string cmd = "cd '" + dir.string() + "' && env -u MOMO_SEED '" + setup.cli + "' " + st.command +
                              " --config " + st.config_name + " > /dev/null 2> " + st.config_name + ".stderr";
      if (std::system(cmd.c_str()) != 0) failures.push_back(std::string(run) + ": " + st.command + " failed");
    }
  }
  const auto a = snapshot(base / "run1"), b = snapshot(base / "run2");
  std::size_t compared = 0;
  for (const auto& [name, bytes] : a) {
    const auto it = b.find(name);
    if (it == b.end()) {
      failures.push_back("missing in run2: " + name);
    } else if (it->second != bytes) {
      failures.push_back("differs: " + name);
    } else {
      ++compared;
    }
  }
  if (a.size() != b.size()) failures.push_back("file sets differ");
  std::size_t manifests = 0;
  for (const auto& [name, bytes] : a) manifests += name.find("manifest.json") != std::string::npos;
  if (manifests < steps.size()) failures.push_back("expected a manifest per subcommand run");
  std::string detail = std::to_string(steps.size()) + " subcommand runs twice, " + std::to_string(compared) +
                       " output files byte-identical, " + std::to_string(manifests) + " manifests";
  for (std::size_t i = 0; i < std::min<std::size_t>(failures.size(), 5); ++i) detail += "; " + failures[i];
  return {failures.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance run over the desk-scale model"};
  Setup setup;
  setup.work = "acceptance_work";
  std::string work = setup.work.string();
  app.add_option("--cli", setup.cli, "path to the momo executable")->required();
  app.add_option("--workdir", work, "scratch directory");
  app.add_option("--steps", setup.train_steps, "training steps for the desk model");
  app.add_flag("--reuse", setup.reuse, "reuse a checkpoint trained by an earlier run in the workdir");
  CLI11_PARSE(app, argc, argv);
  setup.work = work;
  setup.cli = fs::absolute(setup.cli).string();
  fs::create_directories(setup.work);

  std::vector<std::pair<int, Outcome>> results;
  auto run = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    std::cout << "criterion " << id << " (" << name << ") running" << std::endl;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << "  done in " << fmt("%.0f", seconds_since(t0)) << " s" << std::endl;
    results.emplace_back(id, o);
  };

  run(1, "numerics", criterion_numerics);
  run(2, "diffusion", criterion_diffusion);
  run(8, "metrics", criterion_metrics);
  run(9, "cli determinism", [&] { return criterion_cli(setup); });
  Trained trained;
  run(4, "training", [&] {
    trained = train_model(setup);
    return criterion_training(trained);
  });
  if (trained.model) {
    const auto& m = *trained.model;
    const auto s = diff::build_schedule(m.config().steps);
    run(3, "mixed-attention identity", [&] { return criterion_identity(m, s); });
    run(5, "inversion", [&] { return criterion_inversion(m, s); });
    run(6, "desk benchmark", [&] { return criterion_benchmark(m, s, setup.work); });
    run(7, "analysis", [&] { return criterion_analysis(m, s); });
  } else {
    for (int id : {3, 5, 6, 7}) results.emplace_back(id, Outcome{false, "no trained model"});
  }

  std::sort(results.begin(), results.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
  std::cout << "\n";
  bool all = true;
  for (const auto& [id, o] : results) {
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << "\n";
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
