// Command-line front end: tadpole <subcommand> --config PATH [overrides].
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "tadpole/harness.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> backend;
  std::optional<std::string> bridge_endpoint;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "Run configuration file")->required();
  cmd->add_option("--seed", o.seed, "Override the configured seed");
  cmd->add_option("--out", o.out, "Override the output directory");
  cmd->add_option("--backend", o.backend, "analytic or bridge")
      ->check(CLI::IsMember({"analytic", "bridge"}));
  cmd->add_option("--bridge-endpoint", o.bridge_endpoint, "Bridge HOST:PORT");
}

tadpole::RunConfig resolve(const Overrides& o) {
  tadpole::RunConfig cfg = tadpole::load_run_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.out) cfg.out = *o.out;
  if (o.backend) {
    cfg.backend = *o.backend == "bridge" ? tadpole::BackendKind::bridge
                                         : tadpole::BackendKind::analytic;
  }
  if (o.bridge_endpoint) cfg.bridge_endpoint = *o.bridge_endpoint;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text-conditioned diffusion rewards for toy control tasks"};
  app.require_subcommand(1);

  Overrides o;
  std::string policy_path, episode_path;
  auto* train = app.add_subcommand("train", "Roll out and optimise against the reward");
  auto* eval = app.add_subcommand("eval", "Evaluate a policy artifact");
  auto* sweep_noise = app.add_subcommand("sweep-noise", "Reward gap across noise levels");
  auto* sweep_weights = app.add_subcommand("sweep-weights", "Short runs across w1/w2 cells");
  auto* render = app.add_subcommand("render", "Export the frames of a stored episode");
  auto* bridge_check = app.add_subcommand("bridge-check", "Handshake and one request");
  for (auto* cmd : {train, eval, sweep_noise, sweep_weights, render, bridge_check}) {
    add_common(cmd, o);
  }
  eval->add_option("--policy", policy_path, "Policy artifact (default OUT/policy.txt)");
  render->add_option("--episode", episode_path, "Episode CSV (default OUT/episode.csv)");

  CLI11_PARSE(app, argc, argv);

  try {
    const tadpole::RunConfig cfg = resolve(o);
    if (*train) {
      tadpole::cmd_train(cfg, std::cout);
    } else if (*eval) {
      tadpole::cmd_eval(cfg, policy_path.empty() ? cfg.out + "/policy.txt" : policy_path,
                        std::cout);
    } else if (*sweep_noise) {
      tadpole::cmd_sweep_noise(cfg, std::cout);
    } else if (*sweep_weights) {
      tadpole::cmd_sweep_weights(cfg, std::cout);
    } else if (*render) {
      tadpole::cmd_render(cfg, episode_path.empty() ? cfg.out + "/episode.csv" : episode_path,
                          std::cout);
    } else if (*bridge_check) {
      tadpole::cmd_bridge_check(cfg, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "tadpole: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
