#include "tadpole/policy.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace tadpole {

void PlannerConfig::validate() const {
  if (horizon < 1) throw std::invalid_argument("planner horizon must be >= 1");
  if (population < 1) throw std::invalid_argument("planner population must be >= 1");
  if (elite_count < 1) throw std::invalid_argument("planner elite_count must be >= 1");
  if (elite_count > population) {
    throw std::invalid_argument("planner elite_count exceeds population");
  }
  if (iterations < 1) throw std::invalid_argument("planner iterations must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw std::invalid_argument("planner momentum must be in [0,1)");
  }
  if (!(discount > 0.0 && discount <= 1.0)) {
    throw std::invalid_argument("planner discount must be in (0,1]");
  }
  if (!(init_std > 0.0) || !(min_std >= 0.0)) {
    throw std::invalid_argument("planner std settings must be positive");
  }
}

RefitResult refit_distribution(const std::vector<std::vector<double>>& samples,
                               const std::vector<double>& scores,
                               std::size_t elite_count,
                               const std::vector<double>& old_mean,
                               const std::vector<double>& old_std,
                               double momentum, double min_std) {
  if (samples.size() != scores.size() || samples.empty()) {
    throw std::invalid_argument("refit: samples and scores must match and be non-empty");
  }
  if (elite_count < 1 || elite_count > samples.size()) {
    throw std::invalid_argument("refit: bad elite count");
  }
  const std::size_t dim = old_mean.size();
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  // Stable so ties keep candidate order and the refit stays deterministic.
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RefitResult out{std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0)};
  const double inv = 1.0 / static_cast<double>(elite_count);
  for (std::size_t e = 0; e < elite_count; ++e) {
    const auto& s = samples[order[e]];
    for (std::size_t d = 0; d < dim; ++d) out.mean[d] += s[d] * inv;
  }
  for (std::size_t e = 0; e < elite_count; ++e) {
    const auto& s = samples[order[e]];
    for (std::size_t d = 0; d < dim; ++d) {
      const double dev = s[d] - out.mean[d];
      out.std[d] += dev * dev * inv;
    }
  }
  for (std::size_t d = 0; d < dim; ++d) {
    out.mean[d] = momentum * old_mean[d] + (1.0 - momentum) * out.mean[d];
    const double s = std::sqrt(out.std[d]);
    out.std[d] = std::max(min_std, momentum * old_std[d] + (1.0 - momentum) * s);
  }
  return out;
}

namespace {

std::vector<Action> unflatten(const std::vector<double>& flat) {
  std::vector<Action> out(flat.size() / 2);
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k].acceleration = {flat[2 * k], flat[2 * k + 1]};
  }
  return out;
}

}  // namespace

PlanResult cem_plan(const PlanQuery& query, const EnvSpec& spec,
                    const StepRewardFn& reward_eval, const PlannerConfig& config,
                    RandomStream& rng) {
  config.validate();
  if (query.window < 1) throw std::invalid_argument("plan: window must be >= 1");
  const std::size_t H = config.horizon;
  const std::size_t dim = 2 * H;
  const std::size_t n = query.window;

  std::vector<double> mean(dim, 0.0);
  for (std::size_t k = 0; k < std::min(H, query.warm_start.size()); ++k) {
    mean[2 * k] = query.warm_start[k].acceleration.x;
    mean[2 * k + 1] = query.warm_start[k].acceleration.y;
  }
  std::vector<double> stdev(dim, config.init_std);

  // Frames preceding the first imagined one, padded at episode start.
  std::vector<Tensor> prefix;
  if (n > 1) {
    const Tensor first = query.history.empty() ? render(query.state, spec)
                                               : query.history.front();
    const std::size_t have = std::min(query.history.size(), n - 1);
    for (std::size_t i = have; i < n - 1; ++i) prefix.push_back(first);
    for (std::size_t i = query.history.size() - have; i < query.history.size(); ++i) {
      prefix.push_back(query.history[i]);
    }
  }

  std::vector<std::vector<NoiseDraw>> draws(config.iterations);
  for (std::size_t it = 0; it < config.iterations; ++it) {
    if (it > 0 && config.share_noise_across_iterations) {
      draws[it] = draws[0];
      continue;
    }
    for (std::size_t k = 0; k < H; ++k) draws[it].push_back(draw_noise(query.sampler, rng));
  }

  std::vector<Tensor> frames;
  frames.reserve(prefix.size() + H);
  auto score_sequence = [&](const std::vector<double>& seq, std::size_t it) {
    frames.assign(prefix.begin(), prefix.end());
    EnvState s = query.state;
    double total = 0.0, g = 1.0;
    for (std::size_t k = 0; k < H; ++k) {
      const Action a{{seq[2 * k], seq[2 * k + 1]}};
      const EnvState next = step(s, a, spec);
      frames.push_back(render(next, spec));
      const std::span<const Tensor> window(frames.data() + frames.size() - n, n);
      total += g * reward_eval({s, a, next, window, draws[it][k], k});
      g *= config.discount;
      s = next;
    }
    return total;
  };

  PlanResult result;
  std::vector<double> best;
  double best_score = -INFINITY;
  std::vector<std::vector<double>> samples(config.population, std::vector<double>(dim));
  std::vector<double> scores(config.population);
  for (std::size_t it = 0; it < config.iterations; ++it) {
    for (std::size_t i = 0; i < config.population; ++i) {
      auto& s = samples[i];
      if (i == 0 && it > 0) {
        s = best;
      } else if (i == (it > 0 ? 1u : 0u)) {
        for (std::size_t d = 0; d < dim; ++d) s[d] = std::clamp(mean[d], -1.0, 1.0);
      } else {
        for (std::size_t d = 0; d < dim; ++d) {
          s[d] = std::clamp(mean[d] + stdev[d] * rng.normal(), -1.0, 1.0);
        }
      }
    }
    double iter_best = -INFINITY;
    std::size_t iter_arg = 0;
    for (std::size_t i = 0; i < config.population; ++i) {
      scores[i] = score_sequence(samples[i], it);
      if (!std::isfinite(scores[i])) throw std::runtime_error("plan: non-finite candidate score");
      if (scores[i] > iter_best) {
        iter_best = scores[i];
        iter_arg = i;
      }
    }
    best = samples[iter_arg];
    best_score = iter_best;
    result.best_score_trace.push_back(best_score);
    auto refit = refit_distribution(samples, scores, config.elite_count, mean, stdev,
                                    config.momentum, config.min_std);
    mean = std::move(refit.mean);
    stdev = std::move(refit.std);
  }
  for (double& m : mean) m = std::clamp(m, -1.0, 1.0);
  result.mean_sequence = unflatten(mean);
  result.best_sequence = unflatten(best);
  result.action = result.mean_sequence.front();
  return result;
}

StepRewardFn tadpole_step_reward(TermSource& source, const Prompt& prompt,
                                 const RewardWeights& weights) {
  return [&source, prompt, weights](const StepContext& ctx) {
    const WindowTerms terms = source.window_terms(ctx.window, prompt, ctx.draw);
    double sum = 0.0;
    for (std::size_t f = 0; f < terms.r_align.size(); ++f) {
      sum += compose_terms(terms.r_align[f], terms.r_rec[f], weights).r_total;
    }
    return sum / static_cast<double>(terms.r_align.size());
  };
}

double Episode::cumulative_total() const {
  double s = 0.0;
  for (const auto& r : records) s += r.reward.r_total;
  return s;
}

double Episode::cumulative_align() const {
  double s = 0.0;
  for (const auto& r : records) s += r.reward.r_align;
  return s;
}

double Episode::cumulative_rec() const {
  double s = 0.0;
  for (const auto& r : records) s += r.reward.r_rec;
  return s;
}

double Episode::diagnostic_return() const {
  double s = 0.0;
  for (const auto& r : records) s += r.diagnostic;
  return s;
}

EnvState Episode::final_state() const {
  if (records.empty()) throw std::logic_error("episode has no records");
  return records.back().next_state;
}

LinearGaussianPolicy::LinearGaussianPolicy(double std) : std_(std) {
  if (!(std > 0.0) || !std::isfinite(std)) throw std::invalid_argument("policy std must be > 0");
}

LinearGaussianPolicy::LinearGaussianPolicy(std::array<double, kParams> weights,
                                           double std)
    : weights_(weights), std_(std) {
  if (!(std > 0.0) || !std::isfinite(std)) throw std::invalid_argument("policy std must be > 0");
  for (double w : weights_) {
    if (!std::isfinite(w)) throw std::invalid_argument("policy weights must be finite");
  }
}

std::array<double, LinearGaussianPolicy::kFeatures> LinearGaussianPolicy::features(
    const EnvState& s) {
  return {s.position.x, s.position.y, s.velocity.x, s.velocity.y, 1.0};
}

Vec2 LinearGaussianPolicy::mean(const EnvState& s) const {
  const auto phi = features(s);
  Vec2 m;
  for (std::size_t j = 0; j < kFeatures; ++j) {
    m.x += weights_[j] * phi[j];
    m.y += weights_[kFeatures + j] * phi[j];
  }
  return m;
}

double LinearGaussianPolicy::log_prob(const EnvState& s, const Action& a) const {
  const Vec2 m = mean(s);
  const double zx = (a.acceleration.x - m.x) / std_;
  const double zy = (a.acceleration.y - m.y) / std_;
  return -0.5 * (zx * zx + zy * zy) - 2.0 * std::log(std_) - std::log(2.0 * M_PI);
}

Action LinearGaussianPolicy::sample(const EnvState& s, RandomStream& rng) const {
  const Vec2 m = mean(s);
  const double nx = rng.normal();
  const double ny = rng.normal();
  return {{m.x + std_ * nx, m.y + std_ * ny}};
}

void RandomActor::begin_episode(std::uint64_t seed) { rng_ = RandomStream(seed); }

Action RandomActor::act(const EnvState&, std::span<const Tensor>, std::size_t) {
  const double x = 2.0 * rng_.uniform() - 1.0;
  const double y = 2.0 * rng_.uniform() - 1.0;
  return {{x, y}};
}

Action ScriptedActor::act(const EnvState& s, std::span<const Tensor>, std::size_t) {
  return clip_action({{kp_ * (goal_.x - s.position.x) - kd_ * s.velocity.x,
                       kp_ * (goal_.y - s.position.y) - kd_ * s.velocity.y}});
}

void PolicyActor::begin_episode(std::uint64_t seed) { rng_ = RandomStream(seed); }

Action PolicyActor::act(const EnvState& s, std::span<const Tensor>, std::size_t) {
  if (!stochastic_) {
    const Vec2 m = policy_.mean(s);
    return {m};
  }
  return policy_.sample(s, rng_);
}

PlannerActor::PlannerActor(const EnvSpec& spec, TermSource& source, Prompt prompt,
                           RewardConfig reward, PlannerConfig planner)
    : spec_(spec),
      reward_fn_(tadpole_step_reward(source, prompt, reward.weights)),
      reward_(reward),
      planner_(planner) {
  planner_.validate();
}

void PlannerActor::begin_episode(std::uint64_t seed) {
  seed_ = seed;
  warm_.clear();
}

Action PlannerActor::act(const EnvState& state, std::span<const Tensor> history,
                         std::size_t t) {
  RandomStream rng(derive_seed(seed_, t));
  PlanQuery q{state, history, reward_.effective_window(), warm_, reward_.sampler};
  PlanResult plan = cem_plan(q, spec_, reward_fn_, planner_, rng);
  warm_.assign(plan.mean_sequence.begin() + 1, plan.mean_sequence.end());
  warm_.push_back(plan.mean_sequence.back());
  return plan.action;
}

Episode rollout_episode(const EnvSpec& spec, Actor& actor,
                        const RewardConfig& reward, TermSource& source,
                        const Task& task, std::uint64_t episode_seed) {
  spec.validate();
  const std::size_t n = reward.effective_window();
  VideoRewardConfig vcfg{n, reward.weights, reward.sampler};
  VideoRewardAccumulator acc(vcfg, source, task.prompt, derive_seed(episode_seed, 1),
                             spec.episode_length);
  actor.begin_episode(derive_seed(episode_seed, 2));

  Episode ep;
  EnvState state = reset(spec, derive_seed(episode_seed, 0));
  ep.initial_observation = render(state, spec);
  std::vector<Tensor> history{ep.initial_observation};
  std::vector<StepRecord> pending;

  for (std::size_t t = 0; t < spec.episode_length; ++t) {
    StepRecord rec;
    rec.state = state;
    rec.action = actor.act(state, history, t);
    rec.next_state = step(state, rec.action, spec);
    rec.observation = render(rec.next_state, spec);
    rec.sparse_success =
        !task.definition.is_motion && goal_reached(rec.next_state, task.definition);
    rec.diagnostic = diagnostic_step(state, rec.next_state, task.definition);

    try {
      acc.push(rec.observation);
    } catch (const std::exception& e) {
      throw std::runtime_error("episode aborted at step " + std::to_string(t) + ": " +
                               e.what());
    }
    history.push_back(rec.observation);
    if (history.size() > std::max<std::size_t>(n, 1)) history.erase(history.begin());
    state = rec.next_state;
    pending.push_back(std::move(rec));

    for (const RewardTerms& r : acc.take_finalized()) {
      StepRecord done = std::move(pending.front());
      pending.erase(pending.begin());
      done.reward = r;
      done.shaped_reward = compose_with_sparse(r.r_total, done.sparse_success,
                                               reward.sparse_scale);
      ep.records.push_back(std::move(done));
    }
  }
  if (!pending.empty()) throw std::logic_error("rollout: unfinalized rewards remain");
  return ep;
}

std::vector<double> returns_to_go(const Episode& episode, double gamma) {
  std::vector<double> g(episode.records.size());
  double acc = 0.0;
  for (std::size_t i = g.size(); i-- > 0;) {
    acc = episode.records[i].shaped_reward + gamma * acc;
    g[i] = acc;
  }
  return g;
}

namespace {

// Advantages per episode: return-to-go minus the across-episode mean at
// the same timestep.
std::vector<std::vector<double>> advantages(std::span<const Episode> episodes,
                                            double gamma) {
  if (episodes.empty()) throw std::invalid_argument("reinforce: need at least one episode");
  std::vector<std::vector<double>> g;
  std::size_t longest = 0;
  for (const auto& ep : episodes) {
    g.push_back(returns_to_go(ep, gamma));
    longest = std::max(longest, g.back().size());
  }
  std::vector<double> sum(longest, 0.0), count(longest, 0.0);
  for (const auto& gi : g) {
    for (std::size_t t = 0; t < gi.size(); ++t) {
      sum[t] += gi[t];
      count[t] += 1.0;
    }
  }
  for (auto& gi : g) {
    for (std::size_t t = 0; t < gi.size(); ++t) gi[t] -= sum[t] / count[t];
  }
  return g;
}

}  // namespace

std::array<double, LinearGaussianPolicy::kParams> reinforce_gradient(
    const LinearGaussianPolicy& policy, std::span<const Episode> episodes,
    double gamma) {
  const auto adv = advantages(episodes, gamma);
  constexpr std::size_t F = LinearGaussianPolicy::kFeatures;
  std::array<double, LinearGaussianPolicy::kParams> grad{};
  const double var = policy.std_dev() * policy.std_dev();
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const auto& recs = episodes[e].records;
    for (std::size_t t = 0; t < recs.size(); ++t) {
      const double a_t = adv[e][t];
      if (a_t == 0.0) continue;
      const auto phi = LinearGaussianPolicy::features(recs[t].state);
      const Vec2 m = policy.mean(recs[t].state);
      const double dx = (recs[t].action.acceleration.x - m.x) / var;
      const double dy = (recs[t].action.acceleration.y - m.y) / var;
      for (std::size_t j = 0; j < F; ++j) {
        grad[j] += a_t * dx * phi[j];
        grad[F + j] += a_t * dy * phi[j];
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(episodes.size());
  for (double& g : grad) {
    g *= inv;
    if (!std::isfinite(g)) throw std::runtime_error("reinforce: non-finite gradient");
  }
  return grad;
}

double reinforce_surrogate(const LinearGaussianPolicy& policy,
                           std::span<const Episode> episodes, double gamma) {
  const auto adv = advantages(episodes, gamma);
  double j = 0.0;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const auto& recs = episodes[e].records;
    for (std::size_t t = 0; t < recs.size(); ++t) {
      j += adv[e][t] * policy.log_prob(recs[t].state, recs[t].action);
    }
  }
  return j / static_cast<double>(episodes.size());
}

LinearGaussianPolicy reinforce_update(const LinearGaussianPolicy& policy,
                                      std::span<const Episode> episodes, double lr,
                                      double gamma) {
  if (!std::isfinite(lr)) throw std::invalid_argument("reinforce: learning rate must be finite");
  const auto grad = reinforce_gradient(policy, episodes, gamma);
  auto w = policy.weights();
  for (std::size_t i = 0; i < w.size(); ++i) w[i] += lr * grad[i];
  return LinearGaussianPolicy(w, policy.std_dev());
}

std::uint64_t episode_seed(std::uint64_t run_seed, std::size_t episode) {
  return derive_seed(run_seed, 0x5eed0000ULL + episode);
}

namespace {

EpisodeLogRow make_row(std::size_t index, const Episode& ep, const Task& task,
                       double seconds) {
  EpisodeLogRow row;
  row.episode = index;
  row.cumulative_r_total = ep.cumulative_total();
  row.cumulative_r_align = ep.cumulative_align();
  row.cumulative_r_rec = ep.cumulative_rec();
  row.diagnostic_return = ep.diagnostic_return();
  row.wall_seconds = seconds;
  row.success = !ep.records.empty() &&
                task_success(ep.records.front().state, ep.final_state(), task.definition);
  return row;
}

}  // namespace

TrainResult train(const TrainSetup& setup, TermSource& source) {
  setup.env.validate();
  setup.planner.validate();
  if (setup.batch_episodes < 1) throw std::invalid_argument("batch_episodes must be >= 1");
  TrainResult result{{}, LinearGaussianPolicy(setup.policy_std), {}};
  using clock = std::chrono::steady_clock;

  std::unique_ptr<PlannerActor> planner;
  if (setup.optimizer == OptimizerKind::planner) {
    planner = std::make_unique<PlannerActor>(setup.env, source, setup.task.prompt,
                                             setup.reward, setup.planner);
  }
  std::vector<Episode> batch;
  for (std::size_t e = 0; e < setup.episodes; ++e) {
    const auto t0 = clock::now();
    Episode ep;
    if (planner) {
      ep = rollout_episode(setup.env, *planner, setup.reward, source, setup.task,
                           episode_seed(setup.seed, e));
    } else {
      PolicyActor actor(result.policy, true);
      ep = rollout_episode(setup.env, actor, setup.reward, source, setup.task,
                           episode_seed(setup.seed, e));
    }
    const double secs =
        setup.log_wall_time ? std::chrono::duration<double>(clock::now() - t0).count() : 0.0;
    result.log.push_back(make_row(e, ep, setup.task, secs));
    if (!planner) {
      batch.push_back(ep);
      if (batch.size() == setup.batch_episodes || e + 1 == setup.episodes) {
        result.policy = reinforce_update(result.policy, batch, setup.learning_rate,
                                         setup.planner.discount);
        batch.clear();
      }
    }
    result.last_episode = std::move(ep);
  }
  return result;
}

}  // namespace tadpole
