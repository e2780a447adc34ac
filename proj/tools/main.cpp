#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <map>

#include "commands.hpp"

namespace {

using Handler = std::function<void(sirld::cli::RunContext&)>;

int run(int argc, char** argv) {
  CLI::App app{"sirld: simulation, rate functions and rare-event estimates for a weighted SIR chain"};
  app.require_subcommand(1);

  std::string config_file;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
  app.add_option("--config", config_file, "INI configuration file")->required();
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", seed, "master seed, overrides [seeds] master");
  app.add_option("--threads", threads, "replica worker threads")->check(CLI::PositiveNumber);

  const std::map<std::string, std::pair<std::string, Handler>> commands{
      {"env", {"sample an environment and report its discrepancy", sirld::cli::cmd_env}},
      {"simulate", {"simulate trajectories and compare with the fluid limit", sirld::cli::cmd_simulate}},
      {"fluid", {"solve the fluid, tilted, controlled and linearised ODEs", sirld::cli::cmd_fluid}},
      {"rate", {"evaluate the rate functions of a path", sirld::cli::cmd_rate}},
      {"estimate-ldp", {"estimate large-deviation probabilities over n", sirld::cli::cmd_estimate_ldp}},
      {"estimate-mdp", {"estimate moderate-deviation probabilities over n", sirld::cli::cmd_estimate_mdp}},
      {"delta", {"tail frequencies of the discrepancy statistic", sirld::cli::cmd_delta}},
  };
  std::string path_override;
  for (const auto& [name, entry] : commands) {
    CLI::App* sub = app.add_subcommand(name, entry.first);
    if (name == "rate") {
      sub->add_option("--path", path_override, "path CSV, overrides [rate] path");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    sirld::cli::RunContext ctx;
    ctx.config = sirld::cli::Config::load(config_file);
    ctx.out_dir = out_dir;
    ctx.master_seed = seed.value_or(ctx.config.master_seed());
    ctx.threads = threads;
    if (!path_override.empty()) {
      ctx.path_override = path_override;
    }
    commands.at(name).second(ctx);
    sirld::cli::write_manifest(ctx, name);
  } catch (const sirld::cli::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const sirld::InvalidInput& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 2;
  } catch (const sirld::NumericRefusal& e) {
    std::cerr << "numeric refusal: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
