#include "ldpms/cli/commands.hpp"

#include <CLI11.hpp>

#include <map>

int main(int argc, char** argv) {
  CLI::App app{"Multiscale jump-diffusion large-deviation toolkit"};
  app.require_subcommand(1);

  std::string config;
  std::uint64_t seed = 0;
  std::string out_dir;
  int threads = 0;
  bool eps_from_stdin = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "run configuration (JSON) or a previous manifest.json")->required();
    sub->add_option("--seed", seed, "override scheme.seed");
    sub->add_option("--out", out_dir, "override output.directory");
    sub->add_option("--threads", threads, "worker threads (default: LDPMS_THREADS, then all cores)")
        ->check(CLI::PositiveNumber);
    sub->add_flag("--eps-from-stdin", eps_from_stdin, "read the epsilon list from stdin");
  };
  for (const char* name : {"check", "simulate", "rate", "bound", "ldp"}) {
    static const std::map<std::string, std::string> help{
        {"check", "check ellipticity, Lipschitz/growth and scale-separation assumptions"},
        {"simulate", "simulate trajectories to CSV"},
        {"rate", "estimate the rate function on a velocity grid"},
        {"bound", "transition-density bound from the symbol"},
        {"ldp", "Monte Carlo eps log p sweep against the rate infimum"}};
    add_common(app.add_subcommand(name, help.at(name)));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : ldpms::cli::kConfig;
  }

  ldpms::cli::Overrides ov;
  const CLI::App* sub = app.get_subcommands().front();
  if (sub->count("--seed")) ov.seed = seed;
  if (sub->count("--out")) ov.out_dir = out_dir;
  ov.threads = threads;
  if (eps_from_stdin) {
    try {
      ov.epsilons = ldpms::cli::parse_number_list(std::cin);
    } catch (const ldpms::ConfigError& e) {
      std::cerr << "config error: " << e.what() << '\n';
      return ldpms::cli::kConfig;
    }
  }
  return ldpms::cli::run(sub->get_name(), config, ov, std::cout, std::cerr);
}
