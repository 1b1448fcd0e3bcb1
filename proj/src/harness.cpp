#include "tadpole/harness.hpp"

#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>
#include <stdexcept>

namespace tadpole {

namespace fs = std::filesystem;

const char* const kRunLogHeader =
    "episode,cumulative_r_total,cumulative_r_align,cumulative_r_rec,diagnostic_return,"
    "wall_seconds";
const char* const kEpisodeHeader =
    "t,px,py,vx,vy,ax,ay,next_px,next_py,next_vx,next_vy,r_align,r_rec,r_total,"
    "shaped_reward,diagnostic,sparse_success";
const char* const kNoiseSweepHeader =
    "t_noise,mean_r_total_aligned,mean_r_total_misaligned,gap";
const char* const kWeightSweepHeader = "w1,w2,final_diagnostic_return,seed";
const char* const kEvalHeader = "prompt,episodes,success_rate,mean_diagnostic_return";

std::string format_double(double v) {
  // Shortest text that parses back to the same double.
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

GaussianMixturePrior build_prior(const RunConfig& cfg) {
  const auto defs = cfg.prompt_definitions();
  if (cfg.reward.mode == RewardMode::video) {
    return make_prompt_prior(cfg.env, defs, cfg.reward.window, cfg.prior_sigma);
  }
  const bool any_motion =
      std::any_of(defs.begin(), defs.end(), [](const auto& d) { return d.is_motion; });
  if (any_motion) {
    return make_frame_marginal_prior(cfg.env, defs, cfg.template_frames, cfg.prior_sigma);
  }
  return make_prompt_prior(cfg.env, defs, 0, cfg.prior_sigma);
}

Backend::Backend(const RunConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  if (cfg.backend == BackendKind::analytic) {
    denoiser_ = std::make_unique<AnalyticDenoiser>(build_prior(cfg), default_schedule(),
                                                   cfg.denoiser);
    source_ = std::make_unique<AnalyticTermSource>(*denoiser_);
  } else {
    source_ = std::make_unique<BridgeClient>(parse_endpoint(cfg.bridge_endpoint), cfg.bridge);
  }
}

std::unique_ptr<TermSource> Backend::fresh_source() const {
  if (!denoiser_) throw std::logic_error("only analytic backends hand out extra sources");
  return std::make_unique<AnalyticTermSource>(*denoiser_);
}

Prompt Backend::prompt_for(const std::string& name) const {
  const std::size_t k = cfg_.prompt_index(name);
  if (denoiser_) return Prompt::component(static_cast<int>(k));
  return Prompt::caption(prompt_caption(cfg_.prompt_definitions()[k]));
}

Task make_task(const RunConfig& cfg, const Backend& backend, const std::string& prompt) {
  return {cfg.prompt_definitions()[cfg.prompt_index(prompt)], backend.prompt_for(prompt)};
}

TrainSetup make_train_setup(const RunConfig& cfg, const Backend& backend) {
  TrainSetup s;
  s.env = cfg.env;
  s.task = make_task(cfg, backend, cfg.prompt);
  s.reward = cfg.reward;
  s.planner = cfg.planner;
  s.optimizer = cfg.optimizer;
  s.episodes = cfg.episodes;
  s.seed = cfg.seed;
  s.learning_rate = cfg.learning_rate;
  s.batch_episodes = cfg.batch_episodes;
  s.policy_std = cfg.policy_std;
  s.log_wall_time = cfg.log_wall_time;
  return s;
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  return out;
}

std::string read_file(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(std::string("cannot read ") + what + " '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_manifest(const RunConfig& cfg, const std::string& command,
                    const std::vector<std::string>& files) {
  auto out = open_out((fs::path(cfg.out) / "manifest.txt").string());
  out << "# tadpole run manifest\n"
      << "command = " << command << "\n"
      << "csv_schema = 1\n";
  for (const auto& f : files) out << "output = " << f << "\n";
  out << "# effective configuration\n" << dump_run_config(cfg);
}

std::uint64_t double_bits(double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, sizeof u);
  return u;
}

}  // namespace

void write_policy_artifact(const std::string& path, const PolicyArtifact& a) {
  auto out = open_out(path);
  out << "kind = " << a.kind << "\n"
      << "prompt = " << a.prompt << "\n"
      << "seed = " << a.seed << "\n";
  if (a.kind == "reinforce") {
    out << "std = " << format_double(a.policy.std_dev()) << "\n" << "weights = ";
    const auto& w = a.policy.weights();
    for (std::size_t i = 0; i < w.size(); ++i) out << (i ? "," : "") << format_double(w[i]);
    out << "\n";
  }
}

PolicyArtifact read_policy_artifact(const std::string& path) {
  const auto kv = parse_key_values(read_file(path, "policy artifact"), path);
  auto get = [&](const char* key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw std::runtime_error(path + ": missing '" + key + "'");
    return it->second;
  };
  PolicyArtifact a;
  a.kind = get("kind");
  a.prompt = kv.count("prompt") ? kv.at("prompt") : std::string{};
  a.seed = kv.count("seed") ? std::stoull(kv.at("seed")) : 0;
  if (a.kind == "reinforce") {
    std::array<double, LinearGaussianPolicy::kParams> w{};
    std::stringstream ss(get("weights"));
    std::string item;
    std::size_t i = 0;
    while (std::getline(ss, item, ',')) {
      if (i >= w.size()) throw std::runtime_error(path + ": too many weights");
      w[i++] = std::stod(item);
    }
    if (i != w.size()) throw std::runtime_error(path + ": expected 10 weights");
    a.policy = LinearGaussianPolicy(w, std::stod(get("std")));
  } else if (a.kind != "planner" && a.kind != "scripted" && a.kind != "random" &&
             a.kind != "zero") {
    throw std::runtime_error(path + ": unknown policy kind '" + a.kind + "'");
  }
  return a;
}

void write_run_log(const std::string& path, const std::vector<EpisodeLogRow>& rows) {
  auto out = open_out(path);
  out << kRunLogHeader << "\n";
  for (const auto& r : rows) {
    out << r.episode << "," << format_double(r.cumulative_r_total) << ","
        << format_double(r.cumulative_r_align) << "," << format_double(r.cumulative_r_rec)
        << "," << format_double(r.diagnostic_return) << "," << format_double(r.wall_seconds)
        << "\n";
  }
}

void write_episode_csv(const std::string& path, const Episode& ep) {
  auto out = open_out(path);
  out << kEpisodeHeader << "\n";
  for (std::size_t t = 0; t < ep.records.size(); ++t) {
    const auto& r = ep.records[t];
    const double v[] = {r.state.position.x,      r.state.position.y,
                        r.state.velocity.x,      r.state.velocity.y,
                        r.action.acceleration.x, r.action.acceleration.y,
                        r.next_state.position.x, r.next_state.position.y,
                        r.next_state.velocity.x, r.next_state.velocity.y,
                        r.reward.r_align,        r.reward.r_rec,
                        r.reward.r_total,        r.shaped_reward,
                        r.diagnostic};
    out << t;
    for (double x : v) out << "," << format_double(x);
    out << "," << (r.sparse_success ? 1 : 0) << "\n";
  }
}

EpisodeTrace read_episode_csv(const std::string& path) {
  std::istringstream in(read_file(path, "episode"));
  std::string line;
  if (!std::getline(in, line) || line != kEpisodeHeader) {
    throw std::runtime_error(path + ": not an episode CSV (bad header)");
  }
  EpisodeTrace trace;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> cols;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        cols.push_back(std::stod(item));
      } catch (const std::logic_error&) {
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad number");
      }
    }
    if (cols.size() != 17) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected 17 columns");
    }
    EnvState s;
    s.position = {cols[7], cols[8]};
    s.velocity = {cols[9], cols[10]};
    trace.next_states.push_back(s);
  }
  return trace;
}

std::vector<NoiseSweepRow> run_noise_sweep(const RunConfig& cfg, Backend& backend) {
  if (cfg.sweep_noise_grid.empty()) throw std::invalid_argument("noise sweep: empty grid");
  if (cfg.sweep_draws < 1) throw std::invalid_argument("noise sweep: sweep_draws must be >= 1");
  const auto& sched = backend.source().schedule();
  for (int t : cfg.sweep_noise_grid) sched.require_level(t);

  const auto defs = cfg.prompt_definitions();
  const auto frames = template_frames(defs[cfg.prompt_index(cfg.sweep_observation)],
                                      cfg.reward.effective_window(), cfg.env);
  const Prompt aligned = backend.prompt_for(cfg.prompt);
  const Prompt misaligned = backend.prompt_for(cfg.sweep_misaligned_prompt);

  auto cell = [&](TermSource& source, int t) {
    const std::uint64_t cell_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(t));
    double sa = 0.0, sm = 0.0;
    auto window_total = [&](const WindowTerms& w) {
      double s = 0.0;
      for (std::size_t f = 0; f < w.r_align.size(); ++f) {
        s += compose_terms(w.r_align[f], w.r_rec[f], cfg.reward.weights).r_total;
      }
      return s / static_cast<double>(w.r_align.size());
    };
    for (std::size_t i = 0; i < cfg.sweep_draws; ++i) {
      const NoiseDraw draw{t, derive_seed(cell_seed, i)};
      sa += window_total(source.window_terms(frames, aligned, draw));
      sm += window_total(source.window_terms(frames, misaligned, draw));
    }
    NoiseSweepRow row;
    row.t_noise = t;
    row.mean_r_total_aligned = sa / static_cast<double>(cfg.sweep_draws);
    row.mean_r_total_misaligned = sm / static_cast<double>(cfg.sweep_draws);
    row.gap = row.mean_r_total_aligned - row.mean_r_total_misaligned;
    return row;
  };

  std::vector<NoiseSweepRow> rows;
  if (!backend.parallel_safe()) {
    for (int t : cfg.sweep_noise_grid) rows.push_back(cell(backend.source(), t));
    return rows;
  }
  std::vector<std::future<NoiseSweepRow>> jobs;
  for (int t : cfg.sweep_noise_grid) {
    jobs.push_back(std::async(std::launch::async, [&, t] {
      auto source = backend.fresh_source();
      return cell(*source, t);
    }));
  }
  for (auto& j : jobs) rows.push_back(j.get());
  return rows;
}

std::vector<WeightSweepRow> run_weight_sweep(const RunConfig& cfg, Backend& backend) {
  if (cfg.sweep_weight_grid.empty()) throw std::invalid_argument("weight sweep: empty grid");
  if (cfg.sweep_episodes < 1) throw std::invalid_argument("weight sweep: sweep_episodes must be >= 1");

  auto cell = [&](TermSource& source, double w1, double w2) {
    TrainSetup setup = make_train_setup(cfg, backend);
    setup.reward.weights = {w1, w2};
    setup.episodes = cfg.sweep_episodes;
    setup.log_wall_time = false;
    setup.seed = derive_seed(derive_seed(cfg.seed, double_bits(w1)), double_bits(w2));
    const TrainResult result = train(setup, source);
    return WeightSweepRow{w1, w2, result.log.back().diagnostic_return, setup.seed};
  };

  std::vector<WeightSweepRow> rows;
  if (!backend.parallel_safe()) {
    for (auto [w1, w2] : cfg.sweep_weight_grid) rows.push_back(cell(backend.source(), w1, w2));
    return rows;
  }
  std::vector<std::future<WeightSweepRow>> jobs;
  for (auto [w1, w2] : cfg.sweep_weight_grid) {
    jobs.push_back(std::async(std::launch::async, [&, w1, w2] {
      auto source = backend.fresh_source();
      return cell(*source, w1, w2);
    }));
  }
  for (auto& j : jobs) rows.push_back(j.get());
  return rows;
}

std::vector<EvalRow> run_eval(const RunConfig& cfg, Backend& backend,
                              const PolicyArtifact& artifact) {
  const std::vector<std::string> prompts =
      cfg.eval_prompts.empty() ? std::vector<std::string>{cfg.prompt} : cfg.eval_prompts;
  const std::uint64_t eval_seed = derive_seed(cfg.seed, 0xe7a1);
  std::vector<EvalRow> rows;
  for (const auto& name : prompts) {
    const Task task = make_task(cfg, backend, name);
    std::unique_ptr<Actor> actor;
    if (artifact.kind == "planner") {
      actor = std::make_unique<PlannerActor>(cfg.env, backend.source(), task.prompt,
                                             cfg.reward, cfg.planner);
    } else if (artifact.kind == "reinforce") {
      actor = std::make_unique<PolicyActor>(artifact.policy, false);
    } else if (artifact.kind == "scripted") {
      if (task.definition.is_motion) {
        actor = std::make_unique<ScriptedActor>(
            Vec2{0.5 + 0.45 * task.definition.direction.x,
                 0.5 + 0.45 * task.definition.direction.y});
      } else {
        actor = std::make_unique<ScriptedActor>(task.definition.goal);
      }
    } else if (artifact.kind == "random") {
      actor = std::make_unique<RandomActor>();
    } else {
      actor = std::make_unique<ZeroActor>();
    }
    EvalRow row;
    row.prompt = name;
    row.episodes = cfg.eval_episodes;
    double successes = 0.0, diag = 0.0;
    for (std::size_t i = 0; i < cfg.eval_episodes; ++i) {
      const Episode ep = rollout_episode(cfg.env, *actor, cfg.reward, backend.source(), task,
                                         derive_seed(eval_seed, i));
      if (task_success(ep.records.front().state, ep.final_state(), task.definition)) {
        successes += 1.0;
      }
      diag += ep.diagnostic_return();
    }
    row.success_rate = successes / static_cast<double>(cfg.eval_episodes);
    row.mean_diagnostic_return = diag / static_cast<double>(cfg.eval_episodes);
    rows.push_back(row);
  }
  return rows;
}

void cmd_train(const RunConfig& cfg, std::ostream& log) {
  Backend backend(cfg);
  const TrainSetup setup = make_train_setup(cfg, backend);
  const TrainResult result = train(setup, backend.source());
  fs::create_directories(cfg.out);
  const fs::path out(cfg.out);
  write_run_log((out / "run_log.csv").string(), result.log);
  write_episode_csv((out / "episode.csv").string(), result.last_episode);
  PolicyArtifact artifact;
  artifact.kind = cfg.optimizer == OptimizerKind::planner ? "planner" : "reinforce";
  artifact.prompt = cfg.prompt;
  artifact.seed = cfg.seed;
  artifact.policy = result.policy;
  write_policy_artifact((out / "policy.txt").string(), artifact);
  write_manifest(cfg, "train", {"run_log.csv", "episode.csv", "policy.txt"});
  std::size_t successes = 0;
  for (const auto& r : result.log) successes += r.success ? 1 : 0;
  log << "train: " << result.log.size() << " episodes, " << successes
      << " successful, artifacts in " << cfg.out << "\n";
}

void cmd_eval(const RunConfig& cfg, const std::string& policy_path, std::ostream& log) {
  const PolicyArtifact artifact = read_policy_artifact(policy_path);
  Backend backend(cfg);
  const auto rows = run_eval(cfg, backend, artifact);
  fs::create_directories(cfg.out);
  auto out = open_out((fs::path(cfg.out) / "eval.csv").string());
  out << kEvalHeader << "\n";
  for (const auto& r : rows) {
    out << r.prompt << "," << r.episodes << "," << format_double(r.success_rate) << ","
        << format_double(r.mean_diagnostic_return) << "\n";
    log << "eval " << r.prompt << ": success " << r.success_rate * 100.0 << "% over "
        << r.episodes << " episodes, mean diagnostic return " << r.mean_diagnostic_return
        << "\n";
  }
  write_manifest(cfg, "eval", {"eval.csv"});
}

void cmd_sweep_noise(const RunConfig& cfg, std::ostream& log) {
  Backend backend(cfg);
  const auto rows = run_noise_sweep(cfg, backend);
  fs::create_directories(cfg.out);
  auto out = open_out((fs::path(cfg.out) / "noise_sweep.csv").string());
  out << kNoiseSweepHeader << "\n";
  for (const auto& r : rows) {
    out << r.t_noise << "," << format_double(r.mean_r_total_aligned) << ","
        << format_double(r.mean_r_total_misaligned) << "," << format_double(r.gap) << "\n";
  }
  write_manifest(cfg, "sweep-noise", {"noise_sweep.csv"});
  log << "sweep-noise: " << rows.size() << " levels written to " << cfg.out << "\n";
}

void cmd_sweep_weights(const RunConfig& cfg, std::ostream& log) {
  Backend backend(cfg);
  const auto rows = run_weight_sweep(cfg, backend);
  fs::create_directories(cfg.out);
  auto out = open_out((fs::path(cfg.out) / "weight_sweep.csv").string());
  out << kWeightSweepHeader << "\n";
  for (const auto& r : rows) {
    out << format_double(r.w1) << "," << format_double(r.w2) << ","
        << format_double(r.final_diagnostic_return) << "," << r.seed << "\n";
  }
  write_manifest(cfg, "sweep-weights", {"weight_sweep.csv"});
  log << "sweep-weights: " << rows.size() << " cells written to " << cfg.out << "\n";
}

void cmd_render(const RunConfig& cfg, const std::string& episode_path, std::ostream& log) {
  if (!fs::exists(episode_path)) {
    throw std::runtime_error("episode file '" + episode_path + "' does not exist");
  }
  const EpisodeTrace trace = read_episode_csv(episode_path);
  const fs::path dir = fs::path(cfg.out) / "frames";
  fs::create_directories(dir);
  auto manifest = open_out((dir / "frames.txt").string());
  manifest << "# frames: " << trace.next_states.size() << "\n";
  for (std::size_t t = 0; t < trace.next_states.size(); ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04zu.pgm", t);
    write_pgm((dir / name).string(), render(trace.next_states[t], cfg.env));
    manifest << name << "\n";
  }
  log << "render: " << trace.next_states.size() << " frames in " << dir.string() << "\n";
}

void cmd_bridge_check(const RunConfig& cfg, std::ostream& log) {
  if (cfg.backend != BackendKind::bridge) {
    throw std::invalid_argument("bridge-check needs backend = bridge");
  }
  BridgeClient client(parse_endpoint(cfg.bridge_endpoint), cfg.bridge);
  const Handshake& h = client.handshake();
  log << "bridge handshake: protocol_version=" << h.protocol_version
      << " max_window=" << h.max_window << " schedule_T=" << h.schedule_T
      << " model_id=" << h.model_id << " resize_method=" << h.resize_method << "\n";
  const auto defs = cfg.prompt_definitions();
  const auto& def = defs[cfg.prompt_index(cfg.prompt)];
  const auto frames = template_frames(def, 1, cfg.env);
  const int t = (cfg.reward.sampler.lo + cfg.reward.sampler.hi) / 2;
  const WindowTerms terms = remote_reward_terms(
      frames, Prompt::caption(prompt_caption(def)), t, cfg.seed, client);
  log << "bridge terms at t=" << t << ": r_align=" << format_double(terms.r_align[0])
      << " r_rec=" << format_double(terms.r_rec[0]) << "\n";
}

}  // namespace tadpole
