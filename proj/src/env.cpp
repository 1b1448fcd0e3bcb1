#include "tadpole/env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "tadpole/random.hpp"

namespace tadpole {

double norm(Vec2 v) { return std::hypot(v.x, v.y); }

double distance(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

Action clip_action(Action a) {
  a.acceleration.x = std::clamp(a.acceleration.x, -1.0, 1.0);
  a.acceleration.y = std::clamp(a.acceleration.y, -1.0, 1.0);
  return a;
}

std::string env_kind_name(EnvKind kind) {
  return kind == EnvKind::blob_world ? "blob-world" : "trajectory-world";
}

EnvKind parse_env_kind(const std::string& name) {
  if (name == "blob-world") return EnvKind::blob_world;
  if (name == "trajectory-world") return EnvKind::trajectory_world;
  throw std::invalid_argument("unknown environment '" + name + "'");
}

void EnvSpec::validate() const {
  if (height < 1 || width < 1) throw std::invalid_argument("resolution must be >= 1");
  if (episode_length < 1) throw std::invalid_argument("episode_length must be >= 1");
  if (!(damping >= 0.0 && damping <= 1.0)) throw std::invalid_argument("damping must be in [0,1]");
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be > 0");
  if (!(v_max > 0.0)) throw std::invalid_argument("v_max must be > 0");
  if (!(blob_radius > 0.0)) throw std::invalid_argument("blob_radius must be > 0");
  if (!(init_spread >= 0.0 && init_spread <= 0.5)) {
    throw std::invalid_argument("init_spread must be in [0, 0.5]");
  }
}

EnvState reset(const EnvSpec& spec, std::uint64_t seed) {
  EnvState s;
  if (spec.randomized_init) {
    RandomStream rng(derive_seed(seed, 0x1a17));
    s.position.x = 0.5 + spec.init_spread * (2.0 * rng.uniform() - 1.0);
    s.position.y = 0.5 + spec.init_spread * (2.0 * rng.uniform() - 1.0);
  }
  return s;
}

EnvState step(const EnvState& state, const Action& action, const EnvSpec& spec) {
  const Action a = clip_action(action);
  EnvState next;
  Vec2 v{spec.damping * state.velocity.x + spec.dt * a.acceleration.x,
         spec.damping * state.velocity.y + spec.dt * a.acceleration.y};
  const double speed = norm(v);
  if (speed > spec.v_max) {
    v.x *= spec.v_max / speed;
    v.y *= spec.v_max / speed;
  }
  next.velocity = v;
  next.position.x = std::clamp(state.position.x + spec.dt * v.x, 0.0, 1.0);
  next.position.y = std::clamp(state.position.y + spec.dt * v.y, 0.0, 1.0);
  return next;
}

Tensor render_position(Vec2 position, const EnvSpec& spec) {
  const double cx = position.x * static_cast<double>(spec.width - 1);
  const double cy = (1.0 - position.y) * static_cast<double>(spec.height - 1);
  const double inv = 1.0 / (2.0 * spec.blob_radius * spec.blob_radius);
  std::vector<double> gx(spec.width), gy(spec.height);
  for (std::size_t j = 0; j < spec.width; ++j) {
    const double d = static_cast<double>(j) - cx;
    gx[j] = std::exp(-d * d * inv);
  }
  for (std::size_t i = 0; i < spec.height; ++i) {
    const double d = static_cast<double>(i) - cy;
    gy[i] = std::exp(-d * d * inv);
  }
  Tensor out({spec.height, spec.width});
  for (std::size_t i = 0; i < spec.height; ++i) {
    for (std::size_t j = 0; j < spec.width; ++j) {
      out[i * spec.width + j] = gy[i] * gx[j];
    }
  }
  return out;
}

Tensor render(const EnvState& state, const EnvSpec& spec) {
  return render_position(state.position, spec);
}

PromptDefinition parse_prompt(const std::string& name) {
  PromptDefinition d;
  d.name = name;
  if (name == "top-right") {
    d.goal = {0.8, 0.8};
  } else if (name == "top-left") {
    d.goal = {0.2, 0.8};
  } else if (name == "bottom-right") {
    d.goal = {0.8, 0.2};
  } else if (name == "bottom-left") {
    d.goal = {0.2, 0.2};
  } else if (name == "center") {
    d.goal = {0.5, 0.5};
  } else if (name == "moving-right") {
    d.is_motion = true;
    d.direction = {1.0, 0.0};
  } else if (name == "moving-left") {
    d.is_motion = true;
    d.direction = {-1.0, 0.0};
  } else if (name == "moving-up") {
    d.is_motion = true;
    d.direction = {0.0, 1.0};
  } else if (name == "moving-down") {
    d.is_motion = true;
    d.direction = {0.0, -1.0};
  } else {
    throw std::invalid_argument("unknown prompt '" + name + "'");
  }
  return d;
}

std::vector<PromptDefinition> parse_prompt_list(const std::string& csv) {
  std::vector<PromptDefinition> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) continue;
    out.push_back(parse_prompt(item.substr(b, e - b + 1)));
  }
  if (out.empty()) throw std::invalid_argument("empty prompt list");
  return out;
}

std::vector<Vec2> template_positions(const PromptDefinition& def, std::size_t n) {
  if (!def.is_motion) return std::vector<Vec2>(n, def.goal);
  std::vector<Vec2> out;
  out.reserve(n);
  const double mid = 0.5 * static_cast<double>(n - 1);
  for (std::size_t f = 0; f < n; ++f) {
    const double k = def.speed * (static_cast<double>(f) - mid);
    out.push_back({0.5 + def.direction.x * k, 0.5 + def.direction.y * k});
  }
  return out;
}

std::vector<Tensor> template_frames(const PromptDefinition& def, std::size_t n,
                                    const EnvSpec& spec) {
  std::vector<Tensor> frames;
  for (const Vec2& p : template_positions(def, n)) {
    frames.push_back(render_position(p, spec));
  }
  return frames;
}

GaussianMixturePrior make_prompt_prior(const EnvSpec& spec,
                                       const std::vector<PromptDefinition>& prompts,
                                       std::size_t window_frames, double sigma) {
  if (prompts.empty()) throw std::invalid_argument("make_prompt_prior: empty prompt list");
  std::vector<MixtureComponent> comps;
  const double w = 1.0 / static_cast<double>(prompts.size());
  for (std::size_t k = 0; k < prompts.size(); ++k) {
    MixtureComponent c;
    c.weight = w;
    c.sigma = sigma;
    c.label = static_cast<int>(k);
    if (window_frames == 0) {
      c.mean = prompts[k].is_motion ? template_frames(prompts[k], 1, spec)[0]
                                    : render_position(prompts[k].goal, spec);
    } else {
      const auto frames = template_frames(prompts[k], window_frames, spec);
      c.mean = stack_frames(frames);
    }
    comps.push_back(std::move(c));
  }
  return GaussianMixturePrior(std::move(comps));
}

GaussianMixturePrior make_frame_marginal_prior(
    const EnvSpec& spec, const std::vector<PromptDefinition>& prompts,
    std::size_t n, double sigma) {
  if (prompts.empty()) throw std::invalid_argument("frame marginal prior: empty prompt list");
  if (n < 1) throw std::invalid_argument("frame marginal prior: n must be >= 1");
  std::vector<MixtureComponent> comps;
  const double w = 1.0 / static_cast<double>(prompts.size() * n);
  for (std::size_t k = 0; k < prompts.size(); ++k) {
    for (auto& frame : template_frames(prompts[k], n, spec)) {
      comps.push_back({w, std::move(frame), sigma, static_cast<int>(k)});
    }
  }
  return GaussianMixturePrior(std::move(comps));
}

bool goal_reached(const EnvState& state, const PromptDefinition& prompt,
                  double tolerance) {
  if (prompt.is_motion) {
    throw std::invalid_argument("motion prompt '" + prompt.name + "' has no goal");
  }
  return distance(state.position, prompt.goal) <= tolerance;
}

bool task_success(const EnvState& start, const EnvState& end,
                  const PromptDefinition& prompt, double tolerance) {
  if (!prompt.is_motion) return goal_reached(end, prompt, tolerance);
  const double along = (end.position.x - start.position.x) * prompt.direction.x +
                       (end.position.y - start.position.y) * prompt.direction.y;
  return along >= tolerance;
}

std::string prompt_caption(const PromptDefinition& prompt) {
  std::string words = prompt.name;
  std::replace(words.begin(), words.end(), '-', ' ');
  if (prompt.is_motion) return "a white dot " + words + " on a black background";
  if (prompt.name == "center") return "a white dot in the center of a black background";
  return "a white dot in the " + words + " corner of a black background";
}

double diagnostic_step(const EnvState& before, const EnvState& after,
                       const PromptDefinition& prompt) {
  if (prompt.is_motion) {
    return (after.position.x - before.position.x) * prompt.direction.x +
           (after.position.y - before.position.y) * prompt.direction.y;
  }
  return -distance(after.position, prompt.goal);
}

namespace {

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void write_binary(const std::string& path, const std::string& header,
                  const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << header;
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace

void write_pgm(const std::string& path, const Tensor& frame) {
  if (frame.shape().size() != 2) throw std::invalid_argument("write_pgm expects [H, W]");
  const std::size_t h = frame.shape()[0], w = frame.shape()[1];
  std::vector<std::uint8_t> bytes(frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) bytes[i] = to_byte(frame[i]);
  write_binary(path, "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n",
               bytes);
}

void write_ppm(const std::string& path, std::size_t height, std::size_t width,
               const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != height * width * 3) throw std::invalid_argument("write_ppm: size mismatch");
  write_binary(path,
               "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n",
               rgb);
}

std::vector<std::uint8_t> upscale_rgb8(const Tensor& frame, std::size_t out_h,
                                       std::size_t out_w) {
  if (frame.shape().size() != 2) throw std::invalid_argument("upscale expects [H, W]");
  const std::size_t h = frame.shape()[0], w = frame.shape()[1];
  std::vector<std::uint8_t> out(out_h * out_w * 3);
  for (std::size_t i = 0; i < out_h; ++i) {
    const std::size_t si = i * h / out_h;
    for (std::size_t j = 0; j < out_w; ++j) {
      const std::size_t sj = j * w / out_w;
      const std::uint8_t v = to_byte(frame[si * w + sj]);
      std::uint8_t* px = &out[(i * out_w + j) * 3];
      px[0] = px[1] = px[2] = v;
    }
  }
  return out;
}

}  // namespace tadpole
