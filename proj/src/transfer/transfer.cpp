#include <cmath>
#include <string>

#include "momo/error.hpp"
#include "momo/transfer.hpp"

namespace momo::xfer {

using model::Denoiser;
using model::LayerInjection;
using model::PromptEncoding;
using model::Taps;

Matrix mixed_attention(const Matrix& q_ldr, const Matrix& k_flw, const Matrix& v_flw, const Matrix& ih_out,
                       std::size_t heads, const Matrix* w_o, const Matrix* b_o) {
  require(q_ldr.cols() == k_flw.cols() && k_flw.cols() == v_flw.cols(), ErrorKind::Injection,
          "mixed_attention: Q/K/V widths differ");
  require(k_flw.rows() == v_flw.rows() && k_flw.rows() >= 1, ErrorKind::Injection,
          "mixed_attention: K and V need the same nonzero row count");
  require(ih_out.rows() == q_ldr.rows() && ih_out.cols() == q_ldr.cols(), ErrorKind::Injection,
          "mixed_attention: IH must match Q's shape");
  require(heads >= 1 && q_ldr.cols() % heads == 0, ErrorKind::Injection, "mixed_attention: heads do not divide C");
  Matrix att = model::multi_head_attention(q_ldr, k_flw, v_flw, heads);
  if (w_o != nullptr) {
    att = matmul_nt(att, *w_o);
    if (b_o != nullptr)
      for (std::size_t r = 0; r < att.rows(); ++r)
        for (std::size_t c = 0; c < att.cols(); ++c) att(r, c) += (*b_o)(0, c);
  }
  for (std::size_t i = 0; i < att.size(); ++i) att.values()[i] += ih_out.values()[i];
  return att;
}

PromptPolicy parse_prompt_policy(const std::string& s) {
  if (s == "follower") return PromptPolicy::Follower;
  if (s == "none") return PromptPolicy::None;
  if (s == "fixed") return PromptPolicy::Fixed;
  fail(ErrorKind::InvalidArgument, "unknown prompt policy '" + s + "'");
}

DirectionMode parse_direction_mode(const std::string& s) {
  if (s == "off") return DirectionMode::Off;
  if (s == "root-yaw-copy") return DirectionMode::RootYawCopy;
  if (s == "follower-rotation-augment") return DirectionMode::RotationAugment;
  if (s == "follower-multi-seed") return DirectionMode::MultiSeed;
  fail(ErrorKind::InvalidArgument, "unknown direction mode '" + s + "'");
}

const char* to_string(PromptPolicy p) noexcept {
  switch (p) {
    case PromptPolicy::Follower: return "follower";
    case PromptPolicy::None: return "none";
    case PromptPolicy::Fixed: return "fixed";
  }
  return "?";
}

const char* to_string(DirectionMode d) noexcept {
  switch (d) {
    case DirectionMode::Off: return "off";
    case DirectionMode::RootYawCopy: return "root-yaw-copy";
    case DirectionMode::RotationAugment: return "follower-rotation-augment";
    case DirectionMode::MultiSeed: return "follower-multi-seed";
  }
  return "?";
}

TransferConfig TransferConfig::defaults_for(std::size_t layers, std::size_t steps) {
  TransferConfig c;
  c.s_layer = 2;
  c.e_layer = layers;
  c.s_step = static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(steps)));
  c.e_step = std::min(steps - 1, static_cast<std::size_t>(std::ceil(0.9 * static_cast<double>(steps))));
  return c;
}

TransferConfig TransferConfig::empty() {
  TransferConfig c;
  c.s_layer = 1;
  c.e_layer = 0;
  c.s_step = 1;
  c.e_step = 0;
  return c;
}

void TransferConfig::validate(std::size_t layers, std::size_t steps) const {
  if (s_layer <= e_layer) {
    require(s_layer >= 1 && e_layer <= layers, ErrorKind::InvalidArgument,
            "layer range must satisfy 1 <= s-layer <= e-layer <= " + std::to_string(layers));
  }
  if (s_step <= e_step) {
    require(e_step <= steps - 1, ErrorKind::InvalidArgument,
            "step range must satisfy 0 <= s-step <= e-step <= " + std::to_string(steps - 1));
  }
  require(direction != DirectionMode::RotationAugment || !angles.empty(), ErrorKind::InvalidArgument,
          "rotation-augment needs at least one angle");
  require(direction != DirectionMode::MultiSeed || seeds >= 1, ErrorKind::InvalidArgument,
          "multi-seed needs k >= 1");
}

bool TransferConfig::injects(std::size_t layer0, std::size_t step) const noexcept {
  return s_layer <= e_layer && s_step <= e_step && layer0 + 1 >= s_layer && layer0 + 1 <= e_layer &&
         step >= s_step && step <= e_step;
}

nlohmann::json TransferConfig::to_json() const {
  return {{"s_layer", s_layer},
          {"e_layer", e_layer},
          {"s_step", s_step},
          {"e_step", e_step},
          {"prompt", to_string(prompt)},
          {"fixed_prompt", fixed_prompt},
          {"direction", to_string(direction)},
          {"angles", angles},
          {"seeds", seeds},
          {"scope", scope == model::InjectScope::FrameTokens ? "frame-tokens-only" : "all-tokens"},
          {"hard", hard}};
}

motion::Motion apply_direction_control(const motion::Motion& out, const motion::Motion& leader, DirectionMode mode) {
  if (mode != DirectionMode::RootYawCopy) return out;
  require(out.frames() == leader.frames(), ErrorKind::InvalidArgument,
          "root-yaw-copy needs equal lengths (out " + std::to_string(out.frames()) + ", leader " +
              std::to_string(leader.frames()) + ")");
  require(out.features.cols() == leader.features.cols(), ErrorKind::InvalidArgument,
          "root-yaw-copy needs equal feature widths");
  motion::Motion r = out;
  const motion::FeatureLayout l(out.skeleton.joints());
  for (std::size_t n = 0; n < out.frames(); ++n) r.features(n, l.root_yaw_vel) = leader.features(n, l.root_yaw_vel);
  r.heading = leader.heading;
  return r;
}

namespace {

struct Stream {
  std::string name;
  Matrix x;
  PromptEncoding cond;
  double guidance = 1.0;
  std::optional<motion::Motion> original;
  std::string text;
};

Stream make_stream(const Denoiser& m, const diff::NoiseSchedule& s, const Source& src, std::string name,
                   double guidance, std::size_t stride, std::optional<double> angle = std::nullopt) {
  Stream st;
  st.name = std::move(name);
  if (src.motion) {
    motion::Motion mo = *src.motion;
    if (angle) mo = motion::rotate_about_vertical(mo, *angle);
    st.text = src.prompt.empty() ? mo.text.value_or("") : src.prompt;
    st.cond = m.encode_prompt(st.text);
    // Replaying an inverted motion uses the inversion's guidance.
    const Matrix x0 = diff::to_model_space(m, mo);
    require(x0.all_finite(), ErrorKind::NonFinite, st.name + " stream is non-finite at step 0 (inversion input)");
    auto predict = [&](const Matrix& x, std::size_t t) {
      try {
        return m.denoise(x, t, st.cond);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::NonFinite) throw;
        fail(ErrorKind::NonFinite, st.name + " inversion diverged at step " + std::to_string(t) + ": " + e.what());
      }
    };
    st.x = diff::invert_loop(s, x0, predict, stride).back();
    require(st.x.all_finite(), ErrorKind::NonFinite, st.name + " inversion produced non-finite noise");
    st.guidance = 1.0;
    st.original = std::move(mo);
  } else {
    st.text = src.prompt;
    st.cond = m.encode_prompt(st.text);
    st.x = diff::initial_noise(src.frames, m.config().features, src.seed);
    st.guidance = guidance;
  }
  return st;
}

void record(model::TraceBundle* trace, const TraceOptions& opt, const std::string& stream, std::size_t step,
            const char* branch, const Taps& taps) {
  if (trace == nullptr || !opt.steps.count(step)) return;
  for (std::size_t l = 0; l < taps.captured.size(); ++l) {
    const model::LayerIO& io = taps.captured[l];
    const std::pair<const char*, const Matrix*> items[] = {
        {"ih", &io.ih}, {"q", &io.q}, {"k", &io.k}, {"v", &io.v}, {"oh", &io.oh}};
    for (const auto& [el, mat] : items)
      if (opt.elements.count(el)) trace->put({stream, l, step, branch, el}, *mat);
  }
}

}  // namespace

TransferResult transfer(const Denoiser& m, const diff::NoiseSchedule& s, const Source& leader, const Source& follower,
                        const TransferConfig& cfg, const diff::SamplerConfig& sampler, model::TraceBundle* trace,
                        const TraceOptions& trace_options) {
  const std::size_t layers = m.config().layers;
  cfg.validate(layers, s.steps);
  require(s.steps == m.config().steps, ErrorKind::InvalidArgument, "schedule length differs from the model's T");
  require(sampler.guidance >= 0.0, ErrorKind::InvalidArgument, "guidance scale must be >= 0");

  Stream ldr = make_stream(m, s, leader, "ldr", sampler.guidance, sampler.stride);
  std::vector<Stream> flw;
  if (cfg.direction == DirectionMode::RotationAugment) {
    for (std::size_t i = 0; i < cfg.angles.size(); ++i) {
      flw.push_back(make_stream(m, s, follower, "flw" + (i ? std::to_string(i) : std::string()), sampler.guidance,
                                sampler.stride, cfg.angles[i]));
    }
  } else if (cfg.direction == DirectionMode::MultiSeed) {
    require(!follower.motion, ErrorKind::InvalidArgument, "multi-seed direction control needs a prompt follower");
    for (std::size_t i = 0; i < cfg.seeds; ++i) {
      Source src = follower;
      src.seed = follower.seed + i;
      flw.push_back(make_stream(m, s, src, "flw" + (i ? std::to_string(i) : std::string()), sampler.guidance,
                                sampler.stride));
    }
  } else {
    flw.push_back(make_stream(m, s, follower, "flw", sampler.guidance, sampler.stride));
  }

  Stream out;
  out.name = "out";
  out.x = ldr.x;
  out.guidance = sampler.guidance;
  switch (cfg.prompt) {
    case PromptPolicy::Follower: out.text = flw.front().text; break;
    case PromptPolicy::None: out.text = ""; break;
    case PromptPolicy::Fixed: out.text = cfg.fixed_prompt; break;
  }
  out.cond = m.encode_prompt(out.text);
  const PromptEncoding null = m.encode_prompt("");

  TransferResult result;
  result.leader_noise = ldr.x;
  for (const Stream& f : flw) result.follower_tokens += f.x.rows();

  const auto ts = diff::sampling_steps(s.steps, sampler.stride);
  Matrix ldr_x0, out_x0;
  std::vector<Matrix> flw_x0(flw.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const std::size_t t = ts[i];
    bool inject_now = false;
    for (std::size_t l = 0; l < layers; ++l) inject_now = inject_now || cfg.injects(l, t);
    const bool need_uncond = out.guidance != 1.0;
    const bool capture = inject_now || (trace != nullptr && trace_options.steps.count(t));

    try {
      // Leader and follower streams, capturing both guidance branches.
      auto run_source = [&](Stream& st, Taps& tc, Taps& tu) {
        tc.capture = tu.capture = capture;
        tc.step = tu.step = static_cast<long>(t);
        Matrix c = m.denoise(st.x, t, st.cond, &tc);
        const bool want_u = st.guidance != 1.0 || (capture && need_uncond);
        Matrix u = want_u ? m.denoise(st.x, t, null, &tu) : Matrix();
        return st.guidance == 1.0 ? c : diff::guide(c, u, st.guidance);
      };
      Taps ldr_c, ldr_u;
      ldr_x0 = run_source(ldr, ldr_c, ldr_u);
      std::vector<Taps> flw_c(flw.size()), flw_u(flw.size());
      for (std::size_t f = 0; f < flw.size(); ++f) flw_x0[f] = run_source(flw[f], flw_c[f], flw_u[f]);
      record(trace, trace_options, "ldr", t, "cond", ldr_c);
      record(trace, trace_options, "ldr", t, "uncond", ldr_u);
      for (std::size_t f = 0; f < flw.size(); ++f) {
        record(trace, trace_options, flw[f].name, t, "cond", flw_c[f]);
        record(trace, trace_options, flw[f].name, t, "uncond", flw_u[f]);
      }

      // Out stream with matching-branch injection.
      auto build = [&](const Taps& lt, const std::vector<Taps>& ft, std::vector<LayerInjection>& store) {
        std::vector<const LayerInjection*> table(layers, nullptr);
        if (!inject_now) return table;
        store.assign(layers, LayerInjection{});
        for (std::size_t l = 0; l < layers; ++l) {
          if (!cfg.injects(l, t)) continue;
          LayerInjection& inj = store[l];
          inj.q = lt.captured[l].q;
          inj.hard = cfg.hard;
          std::vector<Matrix> ks = {ft.front().captured[l].k.rows_slice(0, 1)};
          std::vector<Matrix> vs = {ft.front().captured[l].v.rows_slice(0, 1)};
          for (const Taps& f : ft) {
            const Matrix& k = f.captured[l].k;
            const Matrix& v = f.captured[l].v;
            ks.push_back(k.rows_slice(1, k.rows()));
            vs.push_back(v.rows_slice(1, v.rows()));
          }
          inj.k = vstack(ks);
          inj.v = vstack(vs);
          table[l] = &inj;
        }
        return table;
      };
      std::vector<LayerInjection> store_c, store_u;
      Taps out_c, out_u;
      out_c.scope = out_u.scope = cfg.scope;
      out_c.step = out_u.step = static_cast<long>(t);
      out_c.inject = build(ldr_c, flw_c, store_c);
      out_c.capture = out_u.capture = trace != nullptr && trace_options.steps.count(t);
      Matrix c = m.denoise(out.x, t, out.cond, &out_c);
      if (need_uncond) {
        out_u.inject = build(ldr_u, flw_u, store_u);
        const Matrix u = m.denoise(out.x, t, null, &out_u);
        out_x0 = diff::guide(c, u, out.guidance);
      } else {
        out_x0 = std::move(c);
      }
      record(trace, trace_options, "out", t, "cond", out_c);
      if (need_uncond) record(trace, trace_options, "out", t, "uncond", out_u);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NonFinite) throw;
      fail(ErrorKind::NonFinite, "transfer diverged at step " + std::to_string(t) + ": " + e.what());
    }

    if (i + 1 < ts.size()) {
      const std::size_t next = ts[i + 1];
      ldr.x = diff::ddim_step(ldr.x, ldr_x0, t, next, s);
      for (std::size_t f = 0; f < flw.size(); ++f) flw[f].x = diff::ddim_step(flw[f].x, flw_x0[f], t, next, s);
      out.x = diff::ddim_step(out.x, out_x0, t, next, s);
    }
  }

  const int fps = leader.motion ? leader.motion->fps : 20;
  result.out_model = out_x0;
  result.out = diff::from_model_space(m, out_x0, out.text, fps);
  result.leader = ldr.original ? *ldr.original : diff::from_model_space(m, ldr_x0, ldr.text, fps);
  for (std::size_t f = 0; f < flw.size(); ++f) {
    result.followers.push_back(flw[f].original ? *flw[f].original
                                               : diff::from_model_space(m, flw_x0[f], flw[f].text, fps));
  }
  result.out = apply_direction_control(result.out, result.leader, cfg.direction);
  return result;
}

}  // namespace momo::xfer
