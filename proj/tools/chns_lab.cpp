// Command-line runner for the phase-field experiments.
//
//   chns_lab simulate --config run.ini [--out DIR] [--threads N] [--seed S]
//   chns_lab verify --out DIR
//
// Exit status: 0 all invariant checks passed, 1 a check failed,
// 2 bad usage or configuration, 3 solver failure or missing artifacts.

#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "chns/pipeline.hpp"

namespace {

int print(const chns::Report& rep) {
  for (const auto& c : rep.checks)
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << (c.detail.empty() ? "" : ": " + c.detail) << '\n';
  std::cout << (rep.passed() ? "all checks passed" : "some checks failed") << std::endl;
  return rep.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cahn-Hilliard / Navier-Stokes experiment runner"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::optional<int> threads;
  std::optional<unsigned long> seed;
  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", config_path, "scenario file (sectioned key = value)");
    if (needs_config) c->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "run directory; overrides output.dir");
    sub->add_option("--threads", threads, "worker threads; overrides run.threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "seed; overrides run.seed");
  };
  for (const char* name : {"simulate", "control", "pod", "adapt"})
    add_common(app.add_subcommand(name, std::string("run the ") + name + " pipeline"), true);
  auto* verify = app.add_subcommand("verify", "re-check a finished run from its files");
  add_common(verify, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();

  try {
    if (cmd == "verify") {
      std::string dir = out_dir;
      if (dir.empty() && !config_path.empty()) dir = chns::load_config(config_path).output.dir;
      if (dir.empty()) {
        std::cerr << "verify: give --out DIR or --config PATH\n";
        return 2;
      }
      return print(chns::verify_run(dir));
    }

    chns::ScenarioConfig cfg = chns::load_config(config_path);
    if (!out_dir.empty()) cfg.output.dir = out_dir;
    if (threads) cfg.threads = *threads;
    if (seed) cfg.seed = *seed;
    cfg.validate();
    std::cerr << cmd << ": " << chns::to_string(cfg.scenario) << " -> " << cfg.output.dir << std::endl;
    return print(chns::run_pipeline(chns::parse_command(cmd), cfg, cfg.output.dir, &std::cerr));
  } catch (const chns::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const chns::PipelineError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
