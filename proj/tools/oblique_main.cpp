#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <thread>

#include "oblique/experiment.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

int default_threads() {
  if (const char* env = std::getenv("OBLIQUE_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"oblique - randomized sketching experiments"};
  app.require_subcommand(1);

  std::string config_path;
  int threads = default_threads();
  bool timings = false;
  std::uint64_t seed_override = 0;
  bool has_seed = false;

  CLI::App* run = app.add_subcommand("run", "run an experiment config");
  run->add_option("config", config_path, "experiment config (JSON)")
      ->required();
  run->add_option("--threads", threads, "worker threads");
  run->add_flag("--timings", timings,
                "write measured wall times into the result file (makes the "
                "file non-reproducible across runs)");
  run->add_option("--seed", seed_override, "override the config seed")
      ->each([&](const std::string&) { has_seed = true; });

  CLI::App* validate = app.add_subcommand("validate", "check a config");
  validate->add_option("config", config_path, "experiment config (JSON)")
      ->required();

  app.add_subcommand("version", "print the version");

  CLI11_PARSE(app, argc, argv);

  if (app.got_subcommand("version")) {
    std::cout << "oblique " << kVersion << "\n";
    return 0;
  }

  try {
    const oblique::ExperimentConfig cfg =
        oblique::parse_config_file(config_path);
    if (app.got_subcommand("validate")) {
      const oblique::ValidationReport rep = oblique::validate_config(cfg);
      for (const auto& d : rep.diagnostics) {
        std::cout << "note: " << d << "\n";
      }
      if (!rep.ok()) {
        for (const auto& v : rep.violations) {
          std::cerr << "violation: " << v << "\n";
        }
        return 2;
      }
      std::cout << "config ok: " << config_path << "\n";
      return 0;
    }

    oblique::RunOptions opts;
    opts.threads = threads;
    opts.timings = timings;
    if (has_seed) opts.seed_override = seed_override;
    const oblique::RunOutcome out = oblique::run_experiment(cfg, opts);
    oblique::write_results(cfg, out);
    std::cout << oblique::summary_table(out);
    for (const auto& w : out.warnings) {
      std::cerr << "warning: " << w << "\n";
    }
    std::cout << "wrote " << out.rows.size() << " rows to " << cfg.output.path
              << "\n";
    return 0;
  } catch (const oblique::AllTrialsRejectedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const oblique::InvalidConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const oblique::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
