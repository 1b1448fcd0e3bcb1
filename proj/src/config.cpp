#include "tadpole/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace tadpole {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::logic_error&) {
    throw std::invalid_argument("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    if (v.empty() || v[0] == '-') throw std::invalid_argument(v);
    std::size_t used = 0;
    const unsigned long long u = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return u;
  } catch (const std::logic_error&) {
    throw std::invalid_argument("config key '" + key +
                                "': expected a non-negative integer, got '" + v + "'");
  }
}

std::size_t to_size(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(to_u64(key, v));
}

int to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const int i = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::logic_error&) {
    throw std::invalid_argument("config key '" + key + "': expected an integer, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config key '" + key + "': expected true or false, got '" + v + "'");
}

std::string fmt(double v) {
  // Shortest text that parses back to the same double.
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::map<std::string, std::string> parse_key_values(const std::string& text,
                                                    const std::string& origin) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw std::invalid_argument(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || !std::all_of(key.begin(), key.end(), [](char c) {
          return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
        })) {
      throw std::invalid_argument(where + ": bad key '" + key + "'");
    }
    if (!out.emplace(key, value).second) {
      throw std::invalid_argument(where + ": duplicate key '" + key + "'");
    }
  }
  return out;
}

void RunConfig::validate() const {
  env.validate();
  planner.validate();
  reward.weights.validate();
  if (prompts.empty()) throw std::invalid_argument("config: prompts must not be empty");
  prompt_index(prompt);
  for (const auto& p : eval_prompts) prompt_index(p);
  prompt_index(sweep_observation);
  prompt_index(sweep_misaligned_prompt);
  if (!(prior_sigma >= 0.0)) throw std::invalid_argument("config: prior_sigma must be >= 0");
  if (!(template_speed > 0.0)) throw std::invalid_argument("config: template_speed must be > 0");
  if (template_frames < 1) throw std::invalid_argument("config: template_frames must be >= 1");
  if (reward.window < 1) throw std::invalid_argument("config: window must be >= 1");
  if (reward.mode == RewardMode::image && reward.window != 1) {
    throw std::invalid_argument("config: window > 1 requires reward_mode = video");
  }
  if (reward.window > env.episode_length) {
    throw std::invalid_argument("config: window exceeds episode_length");
  }
  if (reward.sampler.lo < 0 || reward.sampler.lo > reward.sampler.hi) {
    throw std::invalid_argument("config: need 0 <= noise_lo <= noise_hi");
  }
  if (!std::isfinite(reward.sparse_scale)) throw std::invalid_argument("config: sparse_scale must be finite");
  if (denoiser.uncond_temperature < 1.0) {
    throw std::invalid_argument("config: uncond_temperature must be >= 1");
  }
  if (batch_episodes < 1) throw std::invalid_argument("config: batch_episodes must be >= 1");
  if (!(policy_std > 0.0)) throw std::invalid_argument("config: policy_std must be > 0");
  if (eval_episodes < 1) throw std::invalid_argument("config: eval_episodes must be >= 1");
  if (backend == BackendKind::bridge) parse_endpoint(bridge_endpoint);
}

std::vector<PromptDefinition> RunConfig::prompt_definitions() const {
  std::vector<PromptDefinition> out;
  for (const auto& name : prompts) {
    PromptDefinition d = parse_prompt(name);
    d.speed = template_speed;
    out.push_back(d);
  }
  return out;
}

std::size_t RunConfig::prompt_index(const std::string& name) const {
  const auto it = std::find(prompts.begin(), prompts.end(), name);
  if (it == prompts.end()) {
    throw std::invalid_argument("config: prompt '" + name + "' is not listed in prompts");
  }
  return static_cast<std::size_t>(it - prompts.begin());
}

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
  RunConfig c;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"env", [&](auto&, auto& v) { c.env.kind = parse_env_kind(v); }},
      {"height", [&](auto& k, auto& v) { c.env.height = to_size(k, v); }},
      {"width", [&](auto& k, auto& v) { c.env.width = to_size(k, v); }},
      {"damping", [&](auto& k, auto& v) { c.env.damping = to_double(k, v); }},
      {"dt", [&](auto& k, auto& v) { c.env.dt = to_double(k, v); }},
      {"v_max", [&](auto& k, auto& v) { c.env.v_max = to_double(k, v); }},
      {"blob_radius", [&](auto& k, auto& v) { c.env.blob_radius = to_double(k, v); }},
      {"episode_length", [&](auto& k, auto& v) { c.env.episode_length = to_size(k, v); }},
      {"randomized_init", [&](auto& k, auto& v) { c.env.randomized_init = to_bool(k, v); }},
      {"init_spread", [&](auto& k, auto& v) { c.env.init_spread = to_double(k, v); }},
      {"prompts", [&](auto&, auto& v) { c.prompts = split_list(v); }},
      {"prompt", [&](auto&, auto& v) { c.prompt = v; }},
      {"prior_sigma", [&](auto& k, auto& v) { c.prior_sigma = to_double(k, v); }},
      {"template_speed", [&](auto& k, auto& v) { c.template_speed = to_double(k, v); }},
      {"template_frames", [&](auto& k, auto& v) { c.template_frames = to_size(k, v); }},
      {"reward_mode",
       [&](auto&, auto& v) {
         if (v == "image") {
           c.reward.mode = RewardMode::image;
         } else if (v == "video") {
           c.reward.mode = RewardMode::video;
         } else {
           throw std::invalid_argument("config: reward_mode must be image or video");
         }
       }},
      {"window", [&](auto& k, auto& v) { c.reward.window = to_size(k, v); }},
      {"w1", [&](auto& k, auto& v) { c.reward.weights.w1 = to_double(k, v); }},
      {"w2", [&](auto& k, auto& v) { c.reward.weights.w2 = to_double(k, v); }},
      {"noise_lo", [&](auto& k, auto& v) { c.reward.sampler.lo = to_int(k, v); }},
      {"noise_hi", [&](auto& k, auto& v) { c.reward.sampler.hi = to_int(k, v); }},
      {"sparse_scale", [&](auto& k, auto& v) { c.reward.sparse_scale = to_double(k, v); }},
      {"denoiser_rule",
       [&](auto&, auto& v) {
         if (v == "recognition_gated") {
           c.denoiser.rule = ConditioningRule::recognition_gated;
         } else if (v == "component_selector") {
           c.denoiser.rule = ConditioningRule::component_selector;
         } else {
           throw std::invalid_argument("config: unknown denoiser_rule '" + v + "'");
         }
       }},
      {"uncond_temperature",
       [&](auto& k, auto& v) { c.denoiser.uncond_temperature = to_double(k, v); }},
      {"backend",
       [&](auto&, auto& v) {
         if (v == "analytic") {
           c.backend = BackendKind::analytic;
         } else if (v == "bridge") {
           c.backend = BackendKind::bridge;
         } else {
           throw std::invalid_argument("config: backend must be analytic or bridge");
         }
       }},
      {"bridge_endpoint", [&](auto&, auto& v) { c.bridge_endpoint = v; }},
      {"bridge_timeout_ms",
       [&](auto& k, auto& v) { c.bridge.timeout = std::chrono::milliseconds(to_u64(k, v)); }},
      {"bridge_upscale", [&](auto& k, auto& v) { c.bridge.upscale = to_size(k, v); }},
      {"optimizer",
       [&](auto&, auto& v) {
         if (v == "planner") {
           c.optimizer = OptimizerKind::planner;
         } else if (v == "reinforce") {
           c.optimizer = OptimizerKind::reinforce;
         } else {
           throw std::invalid_argument("config: optimizer must be planner or reinforce");
         }
       }},
      {"planner_horizon", [&](auto& k, auto& v) { c.planner.horizon = to_size(k, v); }},
      {"planner_population", [&](auto& k, auto& v) { c.planner.population = to_size(k, v); }},
      {"planner_elites", [&](auto& k, auto& v) { c.planner.elite_count = to_size(k, v); }},
      {"planner_iterations", [&](auto& k, auto& v) { c.planner.iterations = to_size(k, v); }},
      {"planner_momentum", [&](auto& k, auto& v) { c.planner.momentum = to_double(k, v); }},
      {"planner_init_std", [&](auto& k, auto& v) { c.planner.init_std = to_double(k, v); }},
      {"planner_min_std", [&](auto& k, auto& v) { c.planner.min_std = to_double(k, v); }},
      {"discount", [&](auto& k, auto& v) { c.planner.discount = to_double(k, v); }},
      {"episodes", [&](auto& k, auto& v) { c.episodes = to_size(k, v); }},
      {"seed", [&](auto& k, auto& v) { c.seed = to_u64(k, v); }},
      {"out", [&](auto&, auto& v) { c.out = v; }},
      {"learning_rate", [&](auto& k, auto& v) { c.learning_rate = to_double(k, v); }},
      {"batch_episodes", [&](auto& k, auto& v) { c.batch_episodes = to_size(k, v); }},
      {"policy_std", [&](auto& k, auto& v) { c.policy_std = to_double(k, v); }},
      {"log_wall_time", [&](auto& k, auto& v) { c.log_wall_time = to_bool(k, v); }},
      {"eval_episodes", [&](auto& k, auto& v) { c.eval_episodes = to_size(k, v); }},
      {"eval_prompts", [&](auto&, auto& v) { c.eval_prompts = split_list(v); }},
      {"sweep_noise_grid",
       [&](auto& k, auto& v) {
         c.sweep_noise_grid.clear();
         for (const auto& item : split_list(v)) c.sweep_noise_grid.push_back(to_int(k, item));
       }},
      {"sweep_draws", [&](auto& k, auto& v) { c.sweep_draws = to_size(k, v); }},
      {"sweep_observation", [&](auto&, auto& v) { c.sweep_observation = v; }},
      {"sweep_misaligned_prompt", [&](auto&, auto& v) { c.sweep_misaligned_prompt = v; }},
      {"sweep_weight_grid",
       [&](auto& k, auto& v) {
         c.sweep_weight_grid.clear();
         for (const auto& item : split_list(v)) {
           const auto colon = item.find(':');
           if (colon == std::string::npos) {
             throw std::invalid_argument("config: sweep_weight_grid cells are w1:w2");
           }
           c.sweep_weight_grid.emplace_back(to_double(k, trim(item.substr(0, colon))),
                                            to_double(k, trim(item.substr(colon + 1))));
         }
       }},
      {"sweep_episodes", [&](auto& k, auto& v) { c.sweep_episodes = to_size(k, v); }},
  };

  for (const auto& [key, value] : parse_key_values(text, origin)) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw std::invalid_argument(origin + ": unknown key '" + key + "'");
    it->second(key, value);
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path);
}

std::string dump_run_config(const RunConfig& c) {
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
    return s;
  };
  std::ostringstream o;
  o << "env = " << env_kind_name(c.env.kind) << "\n"
    << "height = " << c.env.height << "\n"
    << "width = " << c.env.width << "\n"
    << "damping = " << fmt(c.env.damping) << "\n"
    << "dt = " << fmt(c.env.dt) << "\n"
    << "v_max = " << fmt(c.env.v_max) << "\n"
    << "blob_radius = " << fmt(c.env.blob_radius) << "\n"
    << "episode_length = " << c.env.episode_length << "\n"
    << "randomized_init = " << (c.env.randomized_init ? "true" : "false") << "\n"
    << "init_spread = " << fmt(c.env.init_spread) << "\n"
    << "prompts = " << join(c.prompts) << "\n"
    << "prompt = " << c.prompt << "\n"
    << "prior_sigma = " << fmt(c.prior_sigma) << "\n"
    << "template_speed = " << fmt(c.template_speed) << "\n"
    << "template_frames = " << c.template_frames << "\n"
    << "reward_mode = " << (c.reward.mode == RewardMode::image ? "image" : "video") << "\n"
    << "window = " << c.reward.window << "\n"
    << "w1 = " << fmt(c.reward.weights.w1) << "\n"
    << "w2 = " << fmt(c.reward.weights.w2) << "\n"
    << "noise_lo = " << c.reward.sampler.lo << "\n"
    << "noise_hi = " << c.reward.sampler.hi << "\n"
    << "sparse_scale = " << fmt(c.reward.sparse_scale) << "\n"
    << "denoiser_rule = "
    << (c.denoiser.rule == ConditioningRule::recognition_gated ? "recognition_gated"
                                                                : "component_selector")
    << "\n"
    << "uncond_temperature = " << fmt(c.denoiser.uncond_temperature) << "\n"
    << "backend = " << (c.backend == BackendKind::analytic ? "analytic" : "bridge") << "\n"
    << "bridge_endpoint = " << c.bridge_endpoint << "\n"
    << "bridge_timeout_ms = " << c.bridge.timeout.count() << "\n"
    << "bridge_upscale = " << c.bridge.upscale << "\n"
    << "optimizer = " << (c.optimizer == OptimizerKind::planner ? "planner" : "reinforce") << "\n"
    << "planner_horizon = " << c.planner.horizon << "\n"
    << "planner_population = " << c.planner.population << "\n"
    << "planner_elites = " << c.planner.elite_count << "\n"
    << "planner_iterations = " << c.planner.iterations << "\n"
    << "planner_momentum = " << fmt(c.planner.momentum) << "\n"
    << "planner_init_std = " << fmt(c.planner.init_std) << "\n"
    << "planner_min_std = " << fmt(c.planner.min_std) << "\n"
    << "discount = " << fmt(c.planner.discount) << "\n"
    << "episodes = " << c.episodes << "\n"
    << "seed = " << c.seed << "\n"
    << "out = " << c.out << "\n"
    << "learning_rate = " << fmt(c.learning_rate) << "\n"
    << "batch_episodes = " << c.batch_episodes << "\n"
    << "policy_std = " << fmt(c.policy_std) << "\n"
    << "log_wall_time = " << (c.log_wall_time ? "true" : "false") << "\n"
    << "eval_episodes = " << c.eval_episodes << "\n";
  if (!c.eval_prompts.empty()) o << "eval_prompts = " << join(c.eval_prompts) << "\n";
  o << "sweep_noise_grid = ";
  for (std::size_t i = 0; i < c.sweep_noise_grid.size(); ++i) {
    o << (i ? "," : "") << c.sweep_noise_grid[i];
  }
  o << "\n"
    << "sweep_draws = " << c.sweep_draws << "\n"
    << "sweep_observation = " << c.sweep_observation << "\n"
    << "sweep_misaligned_prompt = " << c.sweep_misaligned_prompt << "\n"
    << "sweep_weight_grid = ";
  for (std::size_t i = 0; i < c.sweep_weight_grid.size(); ++i) {
    o << (i ? "," : "") << fmt(c.sweep_weight_grid[i].first) << ":"
      << fmt(c.sweep_weight_grid[i].second);
  }
  o << "\n"
    << "sweep_episodes = " << c.sweep_episodes << "\n";
  return o.str();
}

}  // namespace tadpole
