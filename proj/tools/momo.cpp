#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>

#include <CLI11.hpp>

#include "momo/analysis.hpp"
#include "momo/baselines.hpp"
#include "momo/cli.hpp"
#include "momo/error.hpp"
#include "momo/evalkit.hpp"
#include "momo/synthgen.hpp"
#include "momo/transfer.hpp"

using namespace momo;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Registers options whose resolved values come from flag, config file,
// MOMO_SEED or the built-in default, in that order.
class Binder {
 public:
  explicit Binder(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_, "JSON config file; flags override its values")->check(CLI::ExistingFile);
  }

  template <class T>
  CLI::Option* opt(const std::string& flag, const std::string& key, T& var, const std::string& help) {
    CLI::Option* o = app_->add_option(flag, var, help)->capture_default_str();
    defaults_[key] = var;
    collect_.push_back([o, &var, key](json& ov) {
      if (o->count() > 0) ov[key] = var;
    });
    assign_.push_back([&var, key](const json& r) { var = r.at(key).get<T>(); });
    return o;
  }

  CLI::Option* flag(const std::string& flag, const std::string& key, bool& var, const std::string& help) {
    CLI::Option* o = app_->add_flag(flag, var, help);
    defaults_[key] = var;
    collect_.push_back([o, &var, key](json& ov) {
      if (o->count() > 0) ov[key] = var;
    });
    assign_.push_back([&var, key](const json& r) { var = r.at(key).get<bool>(); });
    return o;
  }

  json resolve() {
    json ov = json::object();
    for (auto& c : collect_) c(ov);
    json r;
    try {
      r = cli::load_config(config_.empty() ? std::nullopt : std::optional<fs::path>(config_), ov, defaults_);
      for (auto& a : assign_) a(r);
    } catch (const Error& e) {
      throw UsageError(e.what());
    } catch (const json::exception& e) {
      throw UsageError(std::string("config: ") + e.what());
    }
    return r;
  }

 private:
  CLI::App* app_;
  std::string config_;
  json defaults_ = json::object();
  std::vector<std::function<void(json&)>> collect_;
  std::vector<std::function<void(const json&)>> assign_;
};

void write_manifest(const fs::path& path, const std::string& command, const json& config,
                    const std::string& checkpoint) {
  std::optional<std::string> hash;
  if (!checkpoint.empty()) hash = model::file_hash(checkpoint);
  cli::write_json(path, cli::manifest(command, config, hash));
}

fs::path sidecar(const fs::path& out) { return out.string() + ".manifest.json"; }

void require_set(const std::string& value, const std::string& flag) {
  if (value.empty()) throw UsageError(flag + " is required");
}

motion::Motion load_motion(const std::string& path) { return motion::read_motion(path); }

struct CorpusView {
  synth::Corpus corpus;
  std::vector<motion::Motion> motions;
  std::vector<std::string> labels, motifs;
};

CorpusView load_corpus(const std::string& dir) {
  CorpusView v;
  v.corpus = synth::read_corpus(dir);
  for (const auto& s : v.corpus.samples) {
    motion::Motion m = s.motion;
    m.text = s.label;
    v.motions.push_back(std::move(m));
    v.labels.push_back(s.label);
    v.motifs.push_back(synth::to_string(s.spec.motif));
  }
  return v;
}

// ---- corpus -------------------------------------------------------------------

struct CorpusArgs {
  std::size_t size = 240;
  std::uint64_t seed = 1;
  std::size_t frames = 60;
  double jitter = 0.02;
  std::string out = "corpus";
};

void add_corpus(CLI::App& root) {
  auto* group = root.add_subcommand("corpus", "Synthetic gait corpus");
  group->require_subcommand(1);
  auto* build = group->add_subcommand("build", "Generate a labelled corpus directory");
  auto a = std::make_shared<CorpusArgs>();
  auto b = std::make_shared<Binder>(build);
  b->opt("--size", "size", a->size, "number of samples");
  b->opt("--seed", "seed", a->seed, "corpus seed");
  b->opt("--frames", "frames", a->frames, "frames per sample (at least one period)");
  b->opt("--jitter", "jitter", a->jitter, "uniform angle jitter in radians");
  b->opt("--out", "out", a->out, "output directory");
  build->callback([a, b] {
    const json cfg = b->resolve();
    const auto c = synth::build_corpus(a->size, a->seed, {a->frames, a->jitter});
    synth::write_corpus(c, a->out);
    write_manifest(fs::path(a->out) / "manifest.json", "corpus build", cfg, "");
  });
}

// ---- train --------------------------------------------------------------------

struct TrainArgs {
  std::string corpus, out = "model.ckpt";
  std::size_t steps = 4000, batch = 8, layers = 4, latent = 64, heads = 4, ff = 256, diffusion_steps = 100,
              max_frames = 80;
  double lr = 1e-3, lr_final = 1e-4, dropout = 0.1;
  std::uint64_t seed = 0;
};

void add_train(CLI::App& root) {
  auto* app = root.add_subcommand("train", "Train the denoiser on a corpus's train split");
  auto a = std::make_shared<TrainArgs>();
  auto b = std::make_shared<Binder>(app);
  b->opt("--corpus", "corpus", a->corpus, "corpus directory");
  b->opt("--out", "out", a->out, "checkpoint path");
  b->opt("--steps", "steps", a->steps, "optimizer steps");
  b->opt("--batch", "batch", a->batch, "samples per step");
  b->opt("--lr", "lr", a->lr, "initial learning rate");
  b->opt("--lr-final", "lr_final", a->lr_final, "learning rate at the last step");
  b->opt("--dropout", "dropout", a->dropout, "prompt dropout probability");
  b->opt("--seed", "seed", a->seed, "initialisation and batching seed");
  b->opt("--layers", "layers", a->layers, "transformer layers");
  b->opt("--latent", "latent", a->latent, "latent width C");
  b->opt("--heads", "heads", a->heads, "attention heads");
  b->opt("--ff", "ff", a->ff, "feed-forward width");
  b->opt("--diffusion-steps", "diffusion_steps", a->diffusion_steps, "diffusion steps T");
  b->opt("--max-frames", "max_frames", a->max_frames, "longest motion the model accepts");
  app->callback([a, b] {
    const json cfg = b->resolve();
    require_set(a->corpus, "--corpus");
    const CorpusView cv = load_corpus(a->corpus);
    model::DenoiserConfig mc;
    mc.layers = a->layers;
    mc.latent = a->latent;
    mc.heads = a->heads;
    mc.ff = a->ff;
    mc.steps = a->diffusion_steps;
    mc.max_frames = a->max_frames;
    model::Denoiser m(mc, a->seed);
    const auto train = cv.corpus.train_indices();
    std::vector<const Matrix*> feats;
    for (auto i : train) feats.push_back(&cv.motions[i].features);
    m.normalizer = model::Normalizer::fit(feats);
    std::vector<diff::TrainExample> data;
    for (auto i : train) data.push_back({m.normalizer.normalize(cv.motions[i].features), m.vocabulary().tokenize(cv.labels[i])});
    diff::TrainConfig tc;
    tc.steps = a->steps;
    tc.batch = a->batch;
    tc.lr = a->lr;
    tc.lr_final = a->lr_final;
    tc.cond_dropout = a->dropout;
    tc.seed = a->seed;
    const auto losses = diff::train(m, diff::build_schedule(mc.steps), data, tc);
    m.round_to_storage();
    m.save(a->out);
    std::ofstream log(a->out + ".loss.csv", std::ios::binary);
    log << "step,loss\n";
    char buf[40];
    for (std::size_t i = 0; i < losses.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", losses[i]);
      log << i << ',' << buf << '\n';
    }
    write_manifest(sidecar(a->out), "train", cfg, a->out);
  });
}

// ---- sample / invert ------------------------------------------------------------

struct SampleArgs {
  std::string ckpt, prompt = "a person walks", out = "sample.json";
  std::size_t frames = 60, stride = 1;
  std::uint64_t seed = 0;
  double guidance = 2.5;
};

void add_sample(CLI::App& root) {
  auto* app = root.add_subcommand("sample", "Generate a motion from a prompt");
  auto a = std::make_shared<SampleArgs>();
  auto b = std::make_shared<Binder>(app);
  b->opt("--ckpt", "ckpt", a->ckpt, "checkpoint");
  b->opt("--prompt", "prompt", a->prompt, "text prompt");
  b->opt("--frames", "frames", a->frames, "output length");
  b->opt("--seed", "seed", a->seed, "noise seed");
  b->opt("--guidance", "guidance", a->guidance, "classifier-free guidance scale");
  b->opt("--stride", "stride", a->stride, "DDIM step stride");
  b->opt("--out", "out", a->out, "output motion file");
  app->callback([a, b] {
    const json cfg = b->resolve();
    require_set(a->ckpt, "--ckpt");
    const auto m = model::Denoiser::load(a->ckpt);
    const auto s = diff::build_schedule(m.config().steps);
    diff::SamplerConfig sc{a->guidance, a->stride, a->seed};
    const auto r = diff::sample(m, s, a->prompt, a->frames, sc);
    motion::write_motion(diff::from_model_space(m, r.x0_hat, a->prompt), a->out);
    write_manifest(sidecar(a->out), "sample", cfg, a->ckpt);
  });
}

struct InvertArgs {
  std::string ckpt, motion, prompt, out = "noise.json", reconstruct;
  std::size_t stride = 1;
};

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
  return rows;
}

void add_invert(CLI::App& root) {
  auto* app = root.add_subcommand("invert", "DDIM-invert a motion to its initial noise");
  auto a = std::make_shared<InvertArgs>();
  auto b = std::make_shared<Binder>(app);
  b->opt("--ckpt", "ckpt", a->ckpt, "checkpoint");
  b->opt("--motion", "motion", a->motion, "input motion file");
  b->opt("--prompt", "prompt", a->prompt, "prompt (default: the motion's text)");
  b->opt("--stride", "stride", a->stride, "DDIM step stride");
  b->opt("--out", "out", a->out, "noise output (JSON matrix, model space)");
  b->opt("--reconstruct", "reconstruct", a->reconstruct, "also write the motion sampled back from the noise");
  app->callback([a, b] {
    const json cfg = b->resolve();
    require_set(a->ckpt, "--ckpt");
    require_set(a->motion, "--motion");
    const auto m = model::Denoiser::load(a->ckpt);
    const auto s = diff::build_schedule(m.config().steps);
    const motion::Motion mo = load_motion(a->motion);
    const std::string prompt = a->prompt.empty() ? mo.text.value_or("") : a->prompt;
    const auto traj = diff::ddim_invert(m, s, diff::to_model_space(m, mo), prompt, a->stride);
    cli::write_json(a->out, {{"prompt", prompt},
                             {"step", s.steps - 1},
                             {"frames", traj.back().rows()},
                             {"features", traj.back().cols()},
                             {"noise", matrix_json(traj.back())}});
    if (!a->reconstruct.empty()) {
      diff::SamplerConfig sc{1.0, a->stride, 0};
      const auto r = diff::sample(m, s, prompt, mo.frames(), sc, traj.back());
      motion::write_motion(diff::from_model_space(m, r.x0_hat, prompt, mo.fps), a->reconstruct);
    }
    write_manifest(sidecar(a->out), "invert", cfg, a->ckpt);
  });
}

// ---- transfer -----------------------------------------------------------------

struct TransferArgs {
  std::string ckpt, leader, leader_prompt, follower, follower_prompt, out = "transfer.json";
  std::uint64_t leader_seed = 0, follower_seed = 1;
  std::size_t leader_frames = 60, follower_frames = 60, seeds = 1, stride = 1;
  std::string method = "momo", prompt_policy = "follower", fixed_prompt = "a person", direction = "root-yaw-copy",
              scope = "frame-tokens-only", trace_dir;
  long s_layer = 2, e_layer = -1, s_step = -1, e_step = -1, nn_layer = -1, nn_step = -1;
  std::vector<double> angles = {0.0};
  std::vector<std::size_t> trace_steps;
  double guidance = 2.5, temperature = 1.0;
};

void bind_transfer(Binder& b, TransferArgs& a) {
  b.opt("--method", "method", a.method, "momo | nn-motion | nn-softmax | nn-latent");
  b.opt("--s-layer", "s_layer", a.s_layer, "first injected layer (1-based)");
  b.opt("--e-layer", "e_layer", a.e_layer, "last injected layer (-1: L)");
  b.opt("--s-step", "s_step", a.s_step, "first injected step (-1: ceil(0.1T))");
  b.opt("--e-step", "e_step", a.e_step, "last injected step (-1: ceil(0.9T))");
  b.opt("--prompt-policy", "prompt_policy", a.prompt_policy, "follower | none | fixed");
  b.opt("--fixed-prompt", "fixed_prompt", a.fixed_prompt, "prompt for the fixed policy");
  b.opt("--direction", "direction", a.direction,
        "off | root-yaw-copy | follower-rotation-augment | follower-multi-seed");
  b.opt("--angles", "angles", a.angles, "rotation-augment angles in radians");
  b.opt("--seeds", "seeds", a.seeds, "multi-seed follower count");
  b.opt("--scope", "scope", a.scope, "frame-tokens-only | all-tokens");
  b.opt("--guidance", "guidance", a.guidance, "classifier-free guidance scale");
  b.opt("--stride", "stride", a.stride, "DDIM step stride");
  b.opt("--temperature", "temperature", a.temperature, "nn-softmax temperature");
  b.opt("--nn-layer", "nn_layer", a.nn_layer, "nn-latent layer, 0-based (-1: L-1)");
  b.opt("--nn-step", "nn_step", a.nn_step, "nn-latent step (-1: round(0.3T))");
}

xfer::TransferConfig transfer_config(const TransferArgs& a, std::size_t layers, std::size_t steps) {
  auto c = xfer::TransferConfig::defaults_for(layers, steps);
  c.s_layer = static_cast<std::size_t>(a.s_layer);
  if (a.e_layer >= 0) c.e_layer = static_cast<std::size_t>(a.e_layer);
  if (a.s_step >= 0) c.s_step = static_cast<std::size_t>(a.s_step);
  if (a.e_step >= 0) c.e_step = static_cast<std::size_t>(a.e_step);
  c.prompt = xfer::parse_prompt_policy(a.prompt_policy);
  c.fixed_prompt = a.fixed_prompt;
  c.direction = xfer::parse_direction_mode(a.direction);
  c.angles = a.angles;
  c.seeds = a.seeds;
  if (a.scope == "frame-tokens-only") c.scope = model::InjectScope::FrameTokens;
  else if (a.scope == "all-tokens") c.scope = model::InjectScope::AllTokens;
  else fail(ErrorKind::InvalidArgument, "unknown scope '" + a.scope + "'");
  c.validate(layers, steps);
  return c;
}

using Runner = std::function<motion::Motion(const xfer::Source&, const xfer::Source&)>;

// Builds the method named in `a`; model-free methods need motion sources.
Runner make_runner(const TransferArgs& a, const model::Denoiser* m, const diff::NoiseSchedule* s,
                   model::TraceBundle* trace, const xfer::TraceOptions& topt) {
  if (a.method == "nn-motion" || a.method == "nn-softmax") {
    const bool soft = a.method == "nn-softmax";
    const double tau = a.temperature;
    return [soft, tau](const xfer::Source& l, const xfer::Source& f) {
      require(l.motion && f.motion, ErrorKind::InvalidArgument, "nearest-neighbour methods need motion files");
      return soft ? base::nn_softmax(*l.motion, *f.motion, tau) : base::nn_motion_space(*l.motion, *f.motion);
    };
  }
  require(m != nullptr, ErrorKind::InvalidArgument, "method '" + a.method + "' needs --ckpt");
  const auto cfg = transfer_config(a, m->config().layers, s->steps);
  const diff::SamplerConfig sc{a.guidance, a.stride, 0};
  if (a.method == "momo") {
    return [=](const xfer::Source& l, const xfer::Source& f) {
      return xfer::transfer(*m, *s, l, f, cfg, sc, trace, topt).out;
    };
  }
  if (a.method == "nn-latent") {
    base::NnConfig nc;
    nc.variant = base::NnVariant::LatentSpace;
    nc.layer = a.nn_layer;
    nc.step = a.nn_step;
    return [=](const xfer::Source& l, const xfer::Source& f) {
      return base::nn_latent(*m, *s, l, f, nc, sc, cfg).out;
    };
  }
  fail(ErrorKind::InvalidArgument, "unknown method '" + a.method + "'");
}

void add_transfer(CLI::App& root) {
  auto* app = root.add_subcommand("transfer", "Transfer a follower's motifs onto a leader's outline");
  auto a = std::make_shared<TransferArgs>();
  auto b = std::make_shared<Binder>(app);
  b->opt("--ckpt", "ckpt", a->ckpt, "checkpoint");
  b->opt("--leader", "leader", a->leader, "leader motion file (inverted)");
  b->opt("--leader-prompt", "leader_prompt", a->leader_prompt, "leader prompt when no file is given");
  b->opt("--leader-seed", "leader_seed", a->leader_seed, "leader noise seed");
  b->opt("--leader-frames", "leader_frames", a->leader_frames, "leader length for prompt sources");
  b->opt("--follower", "follower", a->follower, "follower motion file (inverted)");
  b->opt("--follower-prompt", "follower_prompt", a->follower_prompt, "follower prompt when no file is given");
  b->opt("--follower-seed", "follower_seed", a->follower_seed, "follower noise seed");
  b->opt("--follower-frames", "follower_frames", a->follower_frames, "follower length for prompt sources");
  bind_transfer(*b, *a);
  b->opt("--trace-dir", "trace_dir", a->trace_dir, "write an attention trace bundle here");
  b->opt("--trace-steps", "trace_steps", a->trace_steps, "diffusion steps to record in the trace");
  b->opt("--out", "out", a->out, "output motion file");
  app->callback([a, b] {
    const json cfg = b->resolve();
    auto source = [](const std::string& file, const std::string& prompt, std::uint64_t seed, std::size_t frames,
                     const char* what) {
      xfer::Source s;
      if (!file.empty()) {
        s.motion = load_motion(file);
        s.prompt = prompt;
      } else {
        if (prompt.empty()) throw UsageError(std::string("--") + what + " or --" + what + "-prompt is required");
        s.prompt = prompt;
        s.seed = seed;
        s.frames = frames;
      }
      return s;
    };
    const auto leader = source(a->leader, a->leader_prompt, a->leader_seed, a->leader_frames, "leader");
    const auto follower = source(a->follower, a->follower_prompt, a->follower_seed, a->follower_frames, "follower");
    std::unique_ptr<model::Denoiser> m;
    std::unique_ptr<diff::NoiseSchedule> s;
    if (!a->ckpt.empty()) {
      m = std::make_unique<model::Denoiser>(model::Denoiser::load(a->ckpt));
      s = std::make_unique<diff::NoiseSchedule>(diff::build_schedule(m->config().steps));
    }
    model::TraceBundle trace;
    xfer::TraceOptions topt;
    topt.steps.insert(a->trace_steps.begin(), a->trace_steps.end());
    const bool tracing = !a->trace_dir.empty();
    const Runner run = make_runner(*a, m.get(), s.get(), tracing ? &trace : nullptr, topt);
    motion::write_motion(run(leader, follower), a->out);
    if (tracing) trace.write(a->trace_dir);
    write_manifest(sidecar(a->out), "transfer", cfg, a->ckpt);
  });
}

// ---- analyze --------------------------------------------------------------------

struct AnalyzeArgs {
  std::string ckpt, corpus, leader, follower, element = "q", split = "train", out = "analysis";
  long layer = -1, step = -1;
  std::size_t dims = 10, clusters = 10, max_motions = 48, stride = 1;
  std::uint64_t seed = 0;
};

void bind_analysis(Binder& b, AnalyzeArgs& a) {
  b.opt("--ckpt", "ckpt", a.ckpt, "checkpoint");
  b.opt("--layer", "layer", a.layer, "self-attention layer, 0-based (-1: L-1)");
  b.opt("--step", "step", a.step, "diffusion step (-1: round(0.3T))");
  b.opt("--stride", "stride", a.stride, "inversion stride");
  b.opt("--out", "out", a.out, "output directory");
}

ana::AnalysisConfig analysis_config(const AnalyzeArgs& a) {
  ana::AnalysisConfig c;
  c.layer = a.layer;
  c.step = a.step;
  c.dims = a.dims;
  c.clusters = a.clusters;
  c.element = ana::parse_element(a.element);
  c.seed = a.seed;
  c.stride = a.stride;
  return c;
}

void add_analyze(CLI::App& root) {
  auto* group = root.add_subcommand("analyze", "Attention feature analysis");
  group->require_subcommand(1);

  auto* qk = group->add_subcommand("qk-cluster", "PCA + k-means of per-frame Q or K features");
  auto a = std::make_shared<AnalyzeArgs>();
  auto b = std::make_shared<Binder>(qk);
  bind_analysis(*b, *a);
  b->opt("--corpus", "corpus", a->corpus, "corpus directory");
  b->opt("--split", "split", a->split, "train | test | all");
  b->opt("--max-motions", "max_motions", a->max_motions, "locomotion samples to use (0: all)");
  b->opt("--element", "element", a->element, "q | k");
  b->opt("--dims", "dims", a->dims, "PCA dimensions");
  b->opt("--clusters", "clusters", a->clusters, "k-means clusters");
  b->opt("--seed", "seed", a->seed, "k-means seed");
  qk->callback([a, b] {
    const json cfg = b->resolve();
    require_set(a->ckpt, "--ckpt");
    require_set(a->corpus, "--corpus");
    const auto m = model::Denoiser::load(a->ckpt);
    const auto s = diff::build_schedule(m.config().steps);
    const CorpusView cv = load_corpus(a->corpus);
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < cv.motions.size(); ++i) {
      const bool test = cv.corpus.is_test[i];
      if ((a->split == "train" && test) || (a->split == "test" && !test)) continue;
      if (!cv.corpus.samples[i].spec.locomotion()) continue;
      if (a->max_motions != 0 && ids.size() >= a->max_motions) break;
      ids.push_back(i);
    }
    std::vector<motion::Motion> motions;
    for (auto i : ids) motions.push_back(cv.motions[i]);
    const auto c = analysis_config(*a);
    const auto features = ana::collect_features(m, s, motions, c);
    const auto r = ana::cluster(features, c);
    std::vector<std::size_t> phase, motif;
    std::vector<ana::ClusterRow> rows;
    for (std::size_t k = 0; k < features.keys.size(); ++k) {
      const auto& key = features.keys[k];
      const auto& smp = cv.corpus.samples[ids[key.motion]];
      phase.push_back(ana::phase_bin(smp.phase[key.frame]));
      motif.push_back(static_cast<std::size_t>(smp.spec.motif));
      rows.push_back({ids[key.motion], key.frame, r.labels[k], phase.back(), synth::to_string(smp.spec.motif)});
    }
    const fs::path out = a->out;
    ana::write_cluster_csv(out / "clusters.csv", rows);
    cli::write_json(out / "summary.json", {{"frames", rows.size()},
                                           {"motions", ids.size()},
                                           {"purity_phase", ana::purity(r.labels, phase)},
                                           {"purity_motif", ana::purity(r.labels, motif)},
                                           {"kmeans_objective", r.kmeans.objective},
                                           {"explained_variance", r.pca.explained_variance},
                                           {"frame_index_correlation", ana::frame_index_correlation(features, r)}});
    if (!motions.empty()) {
      std::vector<std::size_t> first(r.labels.begin(), r.labels.begin() + static_cast<long>(motions[0].frames()));
      ana::write_strip_svg(out / "strip.svg", motions[0], first, 2);
    }
    write_manifest(out / "manifest.json", "analyze qk-cluster", cfg, a->ckpt);
  });

  auto pair_cmd = [&](const char* name, const char* help, bool maps) {
    auto* app = group->add_subcommand(name, help);
    auto pa = std::make_shared<AnalyzeArgs>();
    auto pb = std::make_shared<Binder>(app);
    bind_analysis(*pb, *pa);
    pb->opt("--leader", "leader", pa->leader, "leader motion file");
    pb->opt("--follower", "follower", pa->follower, "follower motion file");
    app->callback([pa, pb, maps, name] {
      const json cfg = pb->resolve();
      require_set(pa->ckpt, "--ckpt");
      require_set(pa->leader, "--leader");
      require_set(pa->follower, "--follower");
      const auto m = model::Denoiser::load(pa->ckpt);
      const auto s = diff::build_schedule(m.config().steps);
      const auto l = load_motion(pa->leader), f = load_motion(pa->follower);
      const fs::path out = pa->out;
      const auto c = analysis_config(*pa);
      if (maps) {
        const auto r = ana::attention_maps(m, s, l, f, c);
        ana::write_matrix_csv(out / "leader_leader.csv", r.leader_leader);
        ana::write_matrix_csv(out / "follower_follower.csv", r.follower_follower);
        ana::write_matrix_csv(out / "leader_follower.csv", r.leader_follower);
        ana::write_heatmap_svg(out / "leader_leader.svg", r.leader_leader);
        ana::write_heatmap_svg(out / "follower_follower.svg", r.follower_follower);
        ana::write_heatmap_svg(out / "leader_follower.svg", r.leader_follower);
      } else {
        const auto r = ana::correspondence(m, s, l, f, c);
        ana::write_matrix_csv(out / "logits.csv", r.logits);
        std::ofstream csv(out / "correspondence.csv", std::ios::binary);
        csv << "leader_frame,follower_frame\n";
        for (std::size_t n = 0; n < r.argmax.size(); ++n) csv << n << ',' << r.argmax[n] << '\n';
      }
      write_manifest(out / "manifest.json", std::string("analyze ") + name, cfg, pa->ckpt);
    });
  };
  pair_cmd("correspondence", "Per-leader-frame argmax of Q_leader K_follower^T", false);
  pair_cmd("attn-map", "Softmax attention maps (leader/leader, follower/follower, leader/follower)", true);
}

// ---- bench ----------------------------------------------------------------------

struct BenchBuildArgs {
  std::string corpus, out = "bench.json";
  std::size_t cap = 20, max_pairs = 0;
  bool exclude_styled = false;
  std::vector<std::string> leader_keywords = eval::leader_keywords(), follower_keywords = eval::follower_keywords();
};

struct BenchRunArgs : TransferArgs {
  std::string bench, corpus, out_dir = "bench_out";
};

void add_bench(CLI::App& root) {
  auto* group = root.add_subcommand("bench", "Transfer benchmark");
  group->require_subcommand(1);

  auto* build = group->add_subcommand("build", "Keyword-filtered leader/follower pairs with a follower cap");
  auto a = std::make_shared<BenchBuildArgs>();
  auto b = std::make_shared<Binder>(build);
  b->opt("--corpus", "corpus", a->corpus, "corpus directory");
  b->opt("--cap", "cap", a->cap, "maximum uses of one follower");
  b->opt("--max-pairs", "max_pairs", a->max_pairs, "stop after this many pairs (0: no limit)");
  b->flag("--exclude-styled", "exclude_styled", a->exclude_styled, "drop leaders that match a follower keyword");
  b->opt("--leader-keywords", "leader_keywords", a->leader_keywords, "leader keywords");
  b->opt("--follower-keywords", "follower_keywords", a->follower_keywords, "follower (motif) keywords");
  b->opt("--out", "out", a->out, "benchmark file");
  build->callback([a, b] {
    const json cfg = b->resolve();
    require_set(a->corpus, "--corpus");
    const CorpusView cv = load_corpus(a->corpus);
    eval::BenchmarkOptions o;
    o.leader_keywords = a->leader_keywords;
    o.follower_keywords = a->follower_keywords;
    o.cap = a->cap;
    o.exclude_styled_leaders = a->exclude_styled;
    o.max_pairs = a->max_pairs;
    cli::write_json(a->out, eval::benchmark_to_json(eval::build_benchmark(cv.labels, o)));
    write_manifest(sidecar(a->out), "bench build", cfg, "");
  });

  auto* run = group->add_subcommand("run", "Run a method over a benchmark (resumable)");
  auto r = std::make_shared<BenchRunArgs>();
  auto rb = std::make_shared<Binder>(run);
  rb->opt("--bench", "bench", r->bench, "benchmark file");
  rb->opt("--corpus", "corpus", r->corpus, "corpus directory the benchmark refers to");
  rb->opt("--ckpt", "ckpt", r->ckpt, "checkpoint (model-based methods)");
  bind_transfer(*rb, *r);
  rb->opt("--out", "out", r->out_dir, "output directory");
  run->callback([r, rb] {
    const json cfg = rb->resolve();
    require_set(r->bench, "--bench");
    require_set(r->corpus, "--corpus");
    std::ifstream bf(r->bench);
    require(bf.good(), ErrorKind::Io, "cannot read " + r->bench);
    json bj;
    try {
      bj = json::parse(bf);
    } catch (const json::parse_error& e) {
      fail(ErrorKind::Parse, r->bench + ": " + e.what());
    }
    const auto pairs = eval::benchmark_from_json(bj);
    const CorpusView cv = load_corpus(r->corpus);
    std::vector<motion::Motion> train;
    std::vector<std::string> train_motifs;
    for (auto i : cv.corpus.train_indices()) {
      train.push_back(cv.motions[i]);
      train_motifs.push_back(cv.motifs[i]);
    }
    const auto clf = eval::MotifClassifier::fit(train, train_motifs);
    std::unique_ptr<model::Denoiser> m;
    std::unique_ptr<diff::NoiseSchedule> s;
    if (!r->ckpt.empty()) {
      m = std::make_unique<model::Denoiser>(model::Denoiser::load(r->ckpt));
      s = std::make_unique<diff::NoiseSchedule>(diff::build_schedule(m->config().steps));
    }
    const Runner runner = make_runner(*r, m.get(), s.get(), nullptr, {});
    const eval::Method method = [&](const eval::BenchmarkPair& p) {
      xfer::Source l, f;
      l.motion = cv.motions[p.leader];
      f.motion = cv.motions[p.follower];
      return runner(l, f);
    };
    const fs::path out = r->out_dir;
    eval::run_benchmark(pairs, r->method, method, {&cv.motions, &cv.motifs, &clf, &train}, out / "results.csv",
                        out / "aggregate.json");
    write_manifest(out / "manifest.json", "bench run", cfg, r->ckpt);
  });
}

// ---- metrics --------------------------------------------------------------------

struct MetricsArgs {
  std::string motion, leader, follower, corpus, motif, out = "metrics.json";
};

void add_metrics(CLI::App& root) {
  auto* app = root.add_subcommand("metrics", "Score one transfer output against its leader and follower");
  auto a = std::make_shared<MetricsArgs>();
  auto b = std::make_shared<Binder>(app);
  b->opt("--motion", "motion", a->motion, "output motion file");
  b->opt("--leader", "leader", a->leader, "leader motion file");
  b->opt("--follower", "follower", a->follower, "follower motion file");
  b->opt("--corpus", "corpus", a->corpus, "corpus for the motif classifier (optional)");
  b->opt("--motif", "motif", a->motif, "follower motif label for motif precision");
  b->opt("--out", "out", a->out, "metrics JSON");
  app->callback([a, b] {
    const json cfg = b->resolve();
    require_set(a->motion, "--motion");
    require_set(a->leader, "--leader");
    require_set(a->follower, "--follower");
    const auto o = load_motion(a->motion), l = load_motion(a->leader), f = load_motion(a->follower);
    json j = {{"contact_similarity", eval::foot_contact_similarity(o, l)},
              {"follower_rot_similarity", eval::follower_similarity(o, l, f, eval::Channel::Rotations)},
              {"follower_loc_similarity", eval::follower_similarity(o, l, f, eval::Channel::Locations)},
              {"jitter", eval::jitter(o)}};
    if (!a->corpus.empty()) {
      const CorpusView cv = load_corpus(a->corpus);
      std::vector<motion::Motion> train;
      std::vector<std::string> motifs;
      for (auto i : cv.corpus.train_indices()) {
        train.push_back(cv.motions[i]);
        motifs.push_back(cv.motifs[i]);
      }
      const auto clf = eval::MotifClassifier::fit(train, motifs);
      j["motif_ranking"] = clf.ranking(o);
      if (!a->motif.empty()) {
        const auto p = eval::motif_precision({o}, {a->motif}, clf);
        j["motif-precision"] = {{"top1", p.top1}, {"top3", p.top3}};
      }
    }
    cli::write_json(a->out, j);
    write_manifest(sidecar(a->out), "metrics", cfg, "");
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"momo: motion transfer with mixed self-attention over a toy motion diffusion model"};
  app.set_version_flag("--version", cli::kToolVersion);
  app.require_subcommand(1);
  add_corpus(app);
  add_train(app);
  add_sample(app);
  add_invert(app);
  add_transfer(app);
  add_analyze(app);
  add_bench(app);
  add_metrics(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
