#ifndef OBLIQUE_EXPERIMENT_HPP
#define OBLIQUE_EXPERIMENT_HPP

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "oblique/types.hpp"

namespace oblique {

struct SketchConfig {
  std::string family;  // uniform|rownorm|lev|shrinkage|srht|dsrht|gaussian|sparse_sign
  bool debiased = false;
  std::optional<double> lambda;   // shrinkage
  std::optional<Index> sparse_s;  // sparse_sign
};

struct DataConfig {
  std::string source;  // synthetic|csv|lowerbound
  // synthetic
  std::string kind = "gaussian";  // gaussian|coherent|powerlaw
  Index n = 0;
  Index p = 0;
  Index spike = 0;
  double exponent = 0.0;
  double noise_std = 1.0;
  // csv
  std::string path;
  bool has_header = false;
  std::optional<Index> response_column;
  std::string standardize = "none";  // none|columns|response|both
  // lowerbound
  Index k = 0;
};

struct ZetaConfig {
  bool enabled = true;
  double eps = -1.0;  // -1 = "auto" (resolved per cell)
};

struct OutputConfig {
  std::string path = "results.csv";
  std::string format = "csv";  // csv|json
};

struct ExperimentConfig {
  std::string experiment;  // ols|cur|projection|lowerbound|oracle-check|inversion-check
  DataConfig data;
  std::vector<SketchConfig> sketches;
  std::vector<Index> m_grid;
  std::vector<Index> mc_grid;  // cur; falls back to m_grid
  std::vector<Index> mr_grid;
  Index c = 0;
  Index r = 0;
  long trials = 1000;
  std::uint64_t seed = 0;
  ZetaConfig zeta;
  std::uint64_t oracle_budget = 1000000;
  OutputConfig output;
};

ExperimentConfig parse_config_json(const nlohmann::json& j);
ExperimentConfig parse_config_file(const std::string& path);
nlohmann::json resolved_config_json(const ExperimentConfig& cfg);

struct ValidationReport {
  std::vector<std::string> violations;
  std::vector<std::string> diagnostics;
  bool ok() const { return violations.empty(); }
};

/// Structural and semantic checks; when the config is structurally sound the
/// diagnostics also echo resolved quantities (auto zeta eps per cell, data
/// provenance).
ValidationReport validate_config(const ExperimentConfig& cfg);

struct ResultRow {
  std::string experiment;
  std::string family;
  bool debiased = false;
  std::optional<Index> m;
  std::optional<Index> m_c;
  std::optional<Index> m_r;
  double bias = 0.0;
  double variance = 0.0;
  double bias_rel = 0.0;
  double variance_rel = 0.0;
  double bias_stderr = 0.0;
  double variance_stderr = 0.0;
  long accepted = 0;
  long rejected = 0;
  std::optional<double> predicted;
  double wall_time_ms = 0.0;
  std::uint64_t seed = 0;
};

struct RunOptions {
  int threads = 1;
  bool timings = false;  // measured wall times in the file are opt-in so that
                         // identical config + seed yields byte-identical files
  std::optional<std::uint64_t> seed_override;
};

struct RunOutcome {
  std::vector<ResultRow> rows;
  nlohmann::json resolved_config;
  std::vector<double> measured_wall_ms;  // always measured, for the summary
  std::vector<std::string> warnings;     // soft-check violations (Jensen)
};

RunOutcome run_experiment(const ExperimentConfig& cfg,
                          const RunOptions& opts = {});

void write_results_csv(std::ostream& os, const RunOutcome& out);
void write_results_json(std::ostream& os, const RunOutcome& out);
/// Writes to cfg.output.path in cfg.output.format.
void write_results(const ExperimentConfig& cfg, const RunOutcome& out);

std::string summary_table(const RunOutcome& out);

}  // namespace oblique

#endif  // OBLIQUE_EXPERIMENT_HPP
