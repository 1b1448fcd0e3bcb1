#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tadpole/denoiser.hpp"
#include "tadpole/tensor.hpp"

namespace tadpole {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

double norm(Vec2 v);
double distance(Vec2 a, Vec2 b);

// Positions live in the unit arena [0,1]^2, y pointing up.
struct EnvState {
  Vec2 position{0.5, 0.5};
  Vec2 velocity{0.0, 0.0};
};

struct Action {
  Vec2 acceleration;
};

Action clip_action(Action a);

enum class EnvKind { blob_world, trajectory_world };

std::string env_kind_name(EnvKind kind);
EnvKind parse_env_kind(const std::string& name);

struct EnvSpec {
  EnvKind kind = EnvKind::blob_world;
  std::size_t height = 16;
  std::size_t width = 16;
  double damping = 0.9;
  double dt = 0.1;
  double v_max = 0.5;
  double blob_radius = 2.0;  // Gaussian std in pixels
  std::size_t episode_length = 300;
  bool randomized_init = false;
  double init_spread = 0.3;  // half-width of the randomized start box

  void validate() const;
  std::vector<std::size_t> observation_shape() const { return {height, width}; }
};

EnvState reset(const EnvSpec& spec, std::uint64_t seed);

// velocity <- clamp(damping * v + dt * a), position <- clamp(p + dt * v).
EnvState step(const EnvState& state, const Action& action, const EnvSpec& spec);

// Unit-peak Gaussian blob at `position`.
Tensor render_position(Vec2 position, const EnvSpec& spec);
Tensor render(const EnvState& state, const EnvSpec& spec);

// A caption grounded in the toy world. Goal prompts name a position,
// motion prompts a direction of travel.
struct PromptDefinition {
  std::string name;
  bool is_motion = false;
  Vec2 goal;
  Vec2 direction;
  double speed = 0.05;  // arena units per frame
};

// Known names: top-right, top-left, bottom-right, bottom-left, center,
// moving-right, moving-left, moving-up, moving-down.
PromptDefinition parse_prompt(const std::string& name);
std::vector<PromptDefinition> parse_prompt_list(const std::string& csv);

// Positions of a motion template over n frames, centred on the arena.
std::vector<Vec2> template_positions(const PromptDefinition& def, std::size_t n);
// Renders of those positions, one [H, W] tensor per frame.
std::vector<Tensor> template_frames(const PromptDefinition& def, std::size_t n,
                                    const EnvSpec& spec);

// One equally weighted component per prompt, component k labelled k.
// window_frames 0 builds single-frame [H, W] components; otherwise
// [n, H, W] stacks (goal prompts repeat the goal frame).
GaussianMixturePrior make_prompt_prior(const EnvSpec& spec,
                                       const std::vector<PromptDefinition>& prompts,
                                       std::size_t window_frames = 0,
                                       double sigma = 0.05);

// Single-frame prior whose components are the individual frames of each
// motion template (n per prompt, labelled with the prompt index). This is
// what an image model sees of a video distribution.
GaussianMixturePrior make_frame_marginal_prior(
    const EnvSpec& spec, const std::vector<PromptDefinition>& prompts,
    std::size_t n, double sigma = 0.05);

bool goal_reached(const EnvState& state, const PromptDefinition& prompt,
                  double tolerance = 0.15);

// Episode-level success: goal prompts end within `tolerance` of the goal,
// motion prompts travel at least `tolerance` along the prompted direction.
bool task_success(const EnvState& start, const EnvState& end,
                  const PromptDefinition& prompt, double tolerance = 0.15);

// Caption sent to a text-conditioned backend for this prompt.
std::string prompt_caption(const PromptDefinition& prompt);

// Per-step ground-truth score, never shown to the learner. Goal prompts:
// minus the distance to the goal. Motion prompts: displacement along the
// prompted direction.
double diagnostic_step(const EnvState& before, const EnvState& after,
                       const PromptDefinition& prompt);

// Binary PGM (P5) of an [H, W] tensor, values clamped to [0,1].
void write_pgm(const std::string& path, const Tensor& frame);
// Binary PPM (P6) of an RGB8 buffer.
void write_ppm(const std::string& path, std::size_t height, std::size_t width,
               const std::vector<std::uint8_t>& rgb);

// Nearest-neighbour upscale of an [H, W] frame to out_h x out_w grey RGB8.
std::vector<std::uint8_t> upscale_rgb8(const Tensor& frame, std::size_t out_h,
                                       std::size_t out_w);

}  // namespace tadpole
