#include "oblique/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "oblique/adversarial.hpp"
#include "oblique/dataio.hpp"
#include "oblique/estimators.hpp"
#include "oblique/inversion.hpp"
#include "oblique/matcore.hpp"
#include "oblique/metrics.hpp"
#include "oblique/oracle.hpp"

namespace oblique {

using nlohmann::json;

namespace {

constexpr std::uint64_t kDataSalt = 0xDA7A5EEDULL;
constexpr std::uint64_t kSelectSalt = 0x5E1EC75EULL;
constexpr std::uint64_t kCellSalt = 0xCE11BA5EULL;

const std::set<std::string> kExperiments = {
    "ols", "cur", "projection", "lowerbound", "oracle-check",
    "inversion-check"};
const std::set<std::string> kFamilies = {"uniform",  "rownorm", "lev",
                                         "shrinkage", "srht",   "dsrht",
                                         "gaussian", "sparse_sign"};
const std::set<std::string> kRowSamplingFamilies = {"uniform", "rownorm",
                                                    "lev", "shrinkage"};

// --- strict json accessors ---------------------------------------------------

void require_keys(const json& j, const std::set<std::string>& allowed,
                  const std::string& where) {
  if (!j.is_object()) {
    throw InvalidConfigError(where + " must be a JSON object");
  }
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) {
      throw InvalidConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
T get_as(const json& j, const std::string& where);

template <>
std::string get_as<std::string>(const json& j, const std::string& where) {
  if (!j.is_string()) throw InvalidConfigError(where + " must be a string");
  return j.get<std::string>();
}

template <>
bool get_as<bool>(const json& j, const std::string& where) {
  if (!j.is_boolean()) throw InvalidConfigError(where + " must be a boolean");
  return j.get<bool>();
}

template <>
double get_as<double>(const json& j, const std::string& where) {
  if (!j.is_number()) throw InvalidConfigError(where + " must be a number");
  return j.get<double>();
}

template <>
Index get_as<Index>(const json& j, const std::string& where) {
  if (!j.is_number_integer()) {
    throw InvalidConfigError(where + " must be an integer");
  }
  return j.get<Index>();
}

template <>
std::uint64_t get_as<std::uint64_t>(const json& j, const std::string& where) {
  if (!j.is_number_unsigned() && !j.is_number_integer()) {
    throw InvalidConfigError(where + " must be a non-negative integer");
  }
  return j.get<std::uint64_t>();
}

std::vector<Index> get_index_array(const json& j, const std::string& where) {
  if (!j.is_array()) throw InvalidConfigError(where + " must be an array");
  std::vector<Index> out;
  for (size_t i = 0; i < j.size(); ++i) {
    out.push_back(get_as<Index>(j[i], where + "[" + std::to_string(i) + "]"));
  }
  return out;
}

}  // namespace

ExperimentConfig parse_config_json(const json& j) {
  require_keys(j,
               {"experiment", "data", "sketches", "m_grid", "mc_grid",
                "mr_grid", "c", "r", "trials", "seed", "zeta", "oracle_budget",
                "output"},
               "config");
  ExperimentConfig cfg;
  if (!j.contains("experiment")) {
    throw InvalidConfigError("config requires 'experiment'");
  }
  cfg.experiment = get_as<std::string>(j.at("experiment"), "experiment");

  if (!j.contains("data")) throw InvalidConfigError("config requires 'data'");
  const json& jd = j.at("data");
  require_keys(jd,
               {"source", "kind", "n", "p", "spike", "exponent", "noise_std",
                "path", "has_header", "response_column", "standardize", "k"},
               "data");
  cfg.data.source = jd.contains("source")
                        ? get_as<std::string>(jd.at("source"), "data.source")
                        : "synthetic";
  if (jd.contains("kind")) cfg.data.kind = get_as<std::string>(jd.at("kind"), "data.kind");
  if (jd.contains("n")) cfg.data.n = get_as<Index>(jd.at("n"), "data.n");
  if (jd.contains("p")) cfg.data.p = get_as<Index>(jd.at("p"), "data.p");
  if (jd.contains("spike")) cfg.data.spike = get_as<Index>(jd.at("spike"), "data.spike");
  if (jd.contains("exponent")) cfg.data.exponent = get_as<double>(jd.at("exponent"), "data.exponent");
  if (jd.contains("noise_std")) cfg.data.noise_std = get_as<double>(jd.at("noise_std"), "data.noise_std");
  if (jd.contains("path")) cfg.data.path = get_as<std::string>(jd.at("path"), "data.path");
  if (jd.contains("has_header")) cfg.data.has_header = get_as<bool>(jd.at("has_header"), "data.has_header");
  if (jd.contains("response_column")) {
    cfg.data.response_column = get_as<Index>(jd.at("response_column"), "data.response_column");
  }
  if (jd.contains("standardize")) cfg.data.standardize = get_as<std::string>(jd.at("standardize"), "data.standardize");
  if (jd.contains("k")) cfg.data.k = get_as<Index>(jd.at("k"), "data.k");

  if (j.contains("sketches")) {
    const json& js = j.at("sketches");
    if (!js.is_array()) throw InvalidConfigError("sketches must be an array");
    for (size_t i = 0; i < js.size(); ++i) {
      const std::string where = "sketches[" + std::to_string(i) + "]";
      const json& e = js[i];
      require_keys(e, {"family", "debiased", "lambda", "s"}, where);
      SketchConfig sc;
      if (!e.contains("family")) {
        throw InvalidConfigError(where + " requires 'family'");
      }
      sc.family = get_as<std::string>(e.at("family"), where + ".family");
      if (e.contains("debiased")) sc.debiased = get_as<bool>(e.at("debiased"), where + ".debiased");
      if (e.contains("lambda")) sc.lambda = get_as<double>(e.at("lambda"), where + ".lambda");
      if (e.contains("s")) sc.sparse_s = get_as<Index>(e.at("s"), where + ".s");
      cfg.sketches.push_back(std::move(sc));
    }
  }

  if (j.contains("m_grid")) cfg.m_grid = get_index_array(j.at("m_grid"), "m_grid");
  if (j.contains("mc_grid")) cfg.mc_grid = get_index_array(j.at("mc_grid"), "mc_grid");
  if (j.contains("mr_grid")) cfg.mr_grid = get_index_array(j.at("mr_grid"), "mr_grid");
  if (j.contains("c")) cfg.c = get_as<Index>(j.at("c"), "c");
  if (j.contains("r")) cfg.r = get_as<Index>(j.at("r"), "r");
  if (j.contains("trials")) cfg.trials = static_cast<long>(get_as<Index>(j.at("trials"), "trials"));
  if (j.contains("seed")) cfg.seed = get_as<std::uint64_t>(j.at("seed"), "seed");

  if (j.contains("zeta")) {
    const json& jz = j.at("zeta");
    require_keys(jz, {"enabled", "eps"}, "zeta");
    if (jz.contains("enabled")) cfg.zeta.enabled = get_as<bool>(jz.at("enabled"), "zeta.enabled");
    if (jz.contains("eps")) {
      if (jz.at("eps").is_string()) {
        if (jz.at("eps").get<std::string>() != "auto") {
          throw InvalidConfigError("zeta.eps must be a number or \"auto\"");
        }
        cfg.zeta.eps = -1.0;
      } else {
        cfg.zeta.eps = get_as<double>(jz.at("eps"), "zeta.eps");
      }
    }
  }
  if (j.contains("oracle_budget")) {
    cfg.oracle_budget = get_as<std::uint64_t>(j.at("oracle_budget"), "oracle_budget");
  }
  if (j.contains("output")) {
    const json& jo = j.at("output");
    require_keys(jo, {"path", "format"}, "output");
    if (jo.contains("path")) cfg.output.path = get_as<std::string>(jo.at("path"), "output.path");
    if (jo.contains("format")) cfg.output.format = get_as<std::string>(jo.at("format"), "output.format");
  }
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfigError("cannot open config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw InvalidConfigError("config parse error: " + std::string(e.what()));
  }
  return parse_config_json(j);
}

json resolved_config_json(const ExperimentConfig& cfg) {
  json j;
  j["experiment"] = cfg.experiment;
  json jd;
  jd["source"] = cfg.data.source;
  if (cfg.data.source == "synthetic") {
    jd["kind"] = cfg.data.kind;
    jd["n"] = cfg.data.n;
    jd["p"] = cfg.data.p;
    jd["spike"] = cfg.data.spike;
    jd["exponent"] = cfg.data.exponent;
    jd["noise_std"] = cfg.data.noise_std;
  } else if (cfg.data.source == "csv") {
    jd["path"] = cfg.data.path;
    jd["has_header"] = cfg.data.has_header;
    if (cfg.data.response_column) jd["response_column"] = *cfg.data.response_column;
    jd["standardize"] = cfg.data.standardize;
  } else if (cfg.data.source == "lowerbound") {
    jd["k"] = cfg.data.k;
    jd["n"] = cfg.data.n;
  }
  j["data"] = jd;
  json js = json::array();
  for (const auto& s : cfg.sketches) {
    json e;
    e["family"] = s.family;
    e["debiased"] = s.debiased;
    if (s.lambda) e["lambda"] = *s.lambda;
    if (s.sparse_s) e["s"] = *s.sparse_s;
    js.push_back(e);
  }
  j["sketches"] = js;
  j["m_grid"] = cfg.m_grid;
  if (cfg.experiment == "cur") {
    j["mc_grid"] = cfg.mc_grid.empty() ? cfg.m_grid : cfg.mc_grid;
    j["mr_grid"] = cfg.mr_grid.empty() ? cfg.m_grid : cfg.mr_grid;
    j["c"] = cfg.c;
    j["r"] = cfg.r;
  }
  j["trials"] = cfg.trials;
  j["seed"] = cfg.seed;
  j["zeta"]["enabled"] = cfg.zeta.enabled;
  if (cfg.zeta.eps > 0.0) {
    j["zeta"]["eps"] = cfg.zeta.eps;
  } else {
    j["zeta"]["eps"] = "auto";
  }
  if (cfg.experiment == "oracle-check") j["oracle_budget"] = cfg.oracle_budget;
  j["output"]["path"] = cfg.output.path;
  j["output"]["format"] = cfg.output.format;
  j["protocol"] = "desk-scale synthetic Monte-Carlo (not the 500-run real-data protocol)";
  return j;
}

// --- data construction -------------------------------------------------------

namespace {

struct BuiltData {
  Dataset ds;
  std::optional<LowerBoundInstance> lb;
};

BuiltData build_data(const ExperimentConfig& cfg, std::uint64_t seed) {
  BuiltData out;
  const DataConfig& d = cfg.data;
  if (d.source == "synthetic") {
    Rng rng(split_seed(seed, kDataSalt));
    if (d.kind == "gaussian") {
      out.ds = synth_gaussian(d.n, d.p, rng, d.noise_std);
    } else if (d.kind == "coherent") {
      out.ds = synth_coherent(d.n, d.p, d.spike, rng, d.noise_std);
    } else if (d.kind == "powerlaw") {
      out.ds = synth_powerlaw_rows(d.n, d.p, d.exponent, rng, d.noise_std);
    } else {
      throw InvalidConfigError("unknown synthetic kind '" + d.kind + "'");
    }
  } else if (d.source == "csv") {
    out.ds = load_matrix_csv(d.path, d.has_header, d.response_column);
    if (d.standardize == "columns") {
      out.ds = standardize(out.ds, StandardizeTarget::Columns);
    } else if (d.standardize == "response") {
      out.ds = standardize(out.ds, StandardizeTarget::Response);
    } else if (d.standardize == "both") {
      out.ds = standardize(out.ds, StandardizeTarget::Both);
    } else if (d.standardize != "none") {
      throw InvalidConfigError("unknown standardize target '" + d.standardize + "'");
    }
  } else if (d.source == "lowerbound") {
    const Index n = d.n > 0 ? d.n : 8 * d.k;
    out.lb = lower_bound_instance(d.k, n);
    out.ds.x = out.lb->x;
    out.ds.y = out.lb->y.col(0);
    out.ds.name = "lowerbound";
    out.ds.provenance = "lowerbound instance k=" + std::to_string(d.k);
  } else {
    throw InvalidConfigError("unknown data source '" + d.source + "'");
  }
  return out;
}

SketchSpec make_sketch_spec(const SketchConfig& sc, const Matrix& target) {
  SketchSpec spec;
  if (sc.family == "uniform" || sc.family == "rownorm" || sc.family == "lev" ||
      sc.family == "shrinkage") {
    spec.family = SketchSpec::Family::RowSampling;
    PlanKind kind = PlanKind::Uniform;
    if (sc.family == "rownorm") kind = PlanKind::RowNorm;
    if (sc.family == "lev") kind = PlanKind::ExactLeverage;
    if (sc.family == "shrinkage") kind = PlanKind::Shrinkage;
    spec.plan = build_distribution(target, kind, sc.lambda.value_or(0.0));
    spec.debiased = sc.debiased;
  } else if (sc.family == "srht") {
    spec.family = SketchSpec::Family::Srht;
    spec.debiased = false;
  } else if (sc.family == "dsrht") {
    spec.family = SketchSpec::Family::Srht;
    spec.debiased = true;
  } else if (sc.family == "gaussian") {
    spec.family = SketchSpec::Family::Gaussian;
  } else if (sc.family == "sparse_sign") {
    spec.family = SketchSpec::Family::SparseSign;
    spec.sparse_nnz = sc.sparse_s.value_or(0);
  } else {
    throw InvalidConfigError("unknown sketch family '" + sc.family + "'");
  }
  return spec;
}

double rel_frobenius(const Matrix& a, const Matrix& b) {
  return (a - b).norm() / b.norm();
}

}  // namespace

// --- validation --------------------------------------------------------------

ValidationReport validate_config(const ExperimentConfig& cfg) {
  ValidationReport rep;
  auto fail = [&](const std::string& s) { rep.violations.push_back(s); };
  auto note = [&](const std::string& s) { rep.diagnostics.push_back(s); };

  if (!kExperiments.count(cfg.experiment)) {
    fail("unknown experiment '" + cfg.experiment + "'");
  }
  const bool is_lowerbound = cfg.experiment == "lowerbound";
  if (is_lowerbound != (cfg.data.source == "lowerbound")) {
    fail("the lowerbound data source and the lowerbound experiment must be used together");
  }

  if (cfg.data.source == "synthetic") {
    if (cfg.data.n < 1 || cfg.data.p < 1 || cfg.data.n < cfg.data.p) {
      fail("synthetic data requires n >= p >= 1");
    }
    if (cfg.data.kind == "coherent" &&
        (cfg.data.spike < 1 || cfg.data.spike > cfg.data.n)) {
      fail("coherent data requires 1 <= spike <= n");
    }
    if (cfg.data.noise_std < 0.0) fail("noise_std must be >= 0");
  } else if (cfg.data.source == "csv") {
    if (cfg.data.path.empty()) fail("csv data requires a path");
    if (cfg.data.standardize != "none" && cfg.data.standardize != "columns" &&
        cfg.data.standardize != "response" && cfg.data.standardize != "both") {
      fail("standardize must be none|columns|response|both");
    }
  } else if (cfg.data.source == "lowerbound") {
    if (cfg.data.k < 1) fail("lowerbound data requires k >= 1");
    if (cfg.data.n > 0 && cfg.data.n < 8 * cfg.data.k) {
      fail("lowerbound data requires n >= 8k");
    }
  } else {
    fail("unknown data source '" + cfg.data.source + "'");
  }

  if (cfg.m_grid.empty()) fail("m_grid empty");
  for (size_t i = 0; i < cfg.m_grid.size(); ++i) {
    if (cfg.m_grid[i] < 1) fail("m_grid entries must be >= 1");
    if (i > 0 && cfg.m_grid[i] <= cfg.m_grid[i - 1]) {
      fail("m_grid must be strictly increasing");
    }
  }
  if (cfg.trials < 1) fail("trials must be >= 1");
  if (!(cfg.zeta.eps > 0.0) && cfg.zeta.eps != -1.0) {
    fail("zeta.eps must be positive or \"auto\"");
  }
  if (cfg.output.format != "csv" && cfg.output.format != "json") {
    fail("output.format must be csv or json");
  }
  if (cfg.output.path.empty()) fail("output.path empty");

  if (is_lowerbound) {
    if (!cfg.sketches.empty()) {
      note("lowerbound experiment ignores the sketches list (it uses the "
           "instance's half-approximation plan)");
    }
  } else if (cfg.sketches.empty()) {
    fail("sketches empty");
  }

  for (size_t i = 0; i < cfg.sketches.size(); ++i) {
    const SketchConfig& s = cfg.sketches[i];
    const std::string where = "sketches[" + std::to_string(i) + "]";
    if (!kFamilies.count(s.family)) {
      fail(where + ": unknown family '" + s.family + "'");
      continue;
    }
    if (s.family == "shrinkage") {
      if (!s.lambda) {
        fail(where + ": shrinkage requires lambda in [0, 1]");
      } else if (*s.lambda < 0.0 || *s.lambda > 1.0) {
        fail(where + ": shrinkage lambda must be in [0, 1]");
      }
    }
    if (s.family == "sparse_sign" && (!s.sparse_s || *s.sparse_s < 1)) {
      fail(where + ": sparse_sign requires s >= 1");
    }
    if (s.family == "srht" && s.debiased) {
      fail(where + ": debiased srht is rejected - the plain SRHT is already "
                   "near-unbiased and admits no matrix debias; use family "
                   "'dsrht', which debiases the uniform sampling stage with "
                   "the leverage scores of the sign-flipped transformed "
                   "matrix");
    }
    if ((s.family == "gaussian" || s.family == "sparse_sign") && s.debiased) {
      fail(where + ": family '" + s.family + "' has no debiased variant");
    }
    if (cfg.experiment == "projection" &&
        (s.family == "gaussian" || s.family == "sparse_sign")) {
      fail(where + ": projection experiment supports row-sampling and srht "
                   "families only");
    }
    if (cfg.experiment == "oracle-check" && !kRowSamplingFamilies.count(s.family)) {
      fail(where + ": oracle-check supports row-sampling families only "
                   "(enumeration needs a sampling distribution)");
    }
    if (cfg.experiment == "inversion-check" &&
        !kRowSamplingFamilies.count(s.family) && s.family != "gaussian") {
      fail(where + ": inversion-check supports row-sampling families and "
                   "gaussian only");
    }
  }

  if (cfg.experiment == "cur") {
    if (cfg.c < 1 || cfg.r < 1) fail("cur requires c >= 1 and r >= 1");
    if (!cfg.mc_grid.empty() || !cfg.mr_grid.empty()) {
      const auto& mc = cfg.mc_grid.empty() ? cfg.m_grid : cfg.mc_grid;
      const auto& mr = cfg.mr_grid.empty() ? cfg.m_grid : cfg.mr_grid;
      if (mc.size() != mr.size()) {
        fail("mc_grid and mr_grid must have equal length");
      }
    }
  }
  if (cfg.experiment == "oracle-check" && cfg.zeta.enabled) {
    note("oracle-check runs its Monte-Carlo with zeta disabled "
         "(enumeration is unconditional)");
  }

  if (!rep.violations.empty()) return rep;

  // Data-dependent diagnostics: provenance, resolved auto eps, budgets.
  try {
    const BuiltData data = build_data(cfg, cfg.seed);
    const Matrix& x = data.ds.x;
    note("data: " + data.ds.provenance);
    if ((cfg.experiment == "ols" || cfg.experiment == "oracle-check") &&
        !data.ds.y) {
      fail("experiment '" + cfg.experiment + "' requires a response column");
    }
    if (cfg.experiment == "cur") {
      if (cfg.c > x.cols()) fail("c exceeds the number of columns");
      if (cfg.r > x.rows()) fail("r exceeds the number of rows");
    }
    const ThinFactorization f = thin_factorize(x);
    {
      const Vector rown = x.rowwise().squaredNorm();
      double minratio = std::numeric_limits<double>::infinity();
      const double fro = rown.sum();
      for (Index i = 0; i < rown.size(); ++i) {
        if (rown(i) > 0.0) minratio = std::min(minratio, rown(i) / fro);
      }
      std::ostringstream os;
      os << "min nonzero row-norm ratio min_i ||x_i||^2/||X||_F^2 = "
         << minratio << " (rank " << f.numeric_rank << ")";
      note(os.str());
    }
    for (const auto& s : cfg.sketches) {
      if (s.family == "sparse_sign" && s.sparse_s && *s.sparse_s > x.rows()) {
        fail("sparse_sign s exceeds the number of rows");
      }
    }
    if (cfg.zeta.enabled && cfg.zeta.eps <= 0.0 &&
        cfg.experiment != "lowerbound" && cfg.experiment != "oracle-check") {
      for (const auto& s : cfg.sketches) {
        double theta = 1.0;
        if (kRowSamplingFamilies.count(s.family)) {
          const SketchSpec spec = make_sketch_spec(s, x);
          theta = spec.plan.theta_max;
        }
        for (Index m : cfg.m_grid) {
          std::ostringstream os;
          os << "zeta eps auto: family=" << s.family << " m=" << m
             << " -> eps=" << auto_embedding_eps(theta, f.numeric_rank, m);
          note(os.str());
        }
      }
    }
    if (cfg.experiment == "oracle-check") {
      Index support = 0;
      for (const auto& s : cfg.sketches) {
        const SketchSpec spec = make_sketch_spec(s, x);
        support = 0;
        for (Index i = 0; i < spec.plan.probabilities.size(); ++i) {
          if (spec.plan.probabilities(i) > 0.0) ++support;
        }
        for (Index m : cfg.m_grid) {
          const double tuples =
              std::pow(static_cast<double>(support), static_cast<double>(m));
          if (tuples > static_cast<double>(cfg.oracle_budget)) {
            fail("oracle-check: support^m = " + std::to_string(tuples) +
                 " exceeds oracle_budget");
          } else {
            note("oracle-check: family=" + s.family + " m=" + std::to_string(m) +
                 " enumerates " + std::to_string(static_cast<long long>(tuples)) +
                 " tuples");
          }
        }
      }
    }
  } catch (const Error& e) {
    fail(std::string("data error: ") + e.what());
  }
  return rep;
}

// --- runner ------------------------------------------------------------------

namespace {

struct CellClock {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double ms() const {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - t0)
        .count();
  }
};

// Jensen soft check: L(E[beta]) <= E[L(beta)] since the loss is convex, so
// bias above variance by more than the stderr slack flags a harness problem.
void jensen_check(const ResultRow& row, const TrialStats& st,
                  std::vector<std::string>& warnings) {
  if (st.bias > st.variance + 3.0 * (st.bias_stderr + st.variance_stderr)) {
    std::ostringstream os;
    os << "Jensen check violated for " << row.family << " (m="
       << row.m.value_or(row.m_c.value_or(0)) << "): bias " << st.bias
       << " > variance " << st.variance << " + slack";
    warnings.push_back(os.str());
  }
}

void fill_from_stats(ResultRow& row, const TrialStats& st) {
  row.bias = st.bias;
  row.variance = st.variance;
  row.bias_rel = st.bias_rel();
  row.variance_rel = st.variance_rel();
  row.bias_stderr = st.bias_stderr;
  row.variance_stderr = st.variance_stderr;
  row.accepted = st.accepted;
  row.rejected = st.rejected;
}

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
  {
    const ValidationReport rep = validate_config(cfg);
    if (!rep.ok()) {
      std::string msg = "invalid config:";
      for (const auto& v : rep.violations) msg += "\n  - " + v;
      throw InvalidConfigError(msg);
    }
  }
  ExperimentConfig cfg_eff = cfg;
  if (opts.seed_override) cfg_eff.seed = *opts.seed_override;
  const std::uint64_t seed = cfg_eff.seed;

  RunOutcome out;
  out.resolved_config = resolved_config_json(cfg_eff);

  const BuiltData data = build_data(cfg_eff, seed);
  const Matrix& x = data.ds.x;

  McOptions mc;
  mc.threads = std::max(1, opts.threads);

  ZetaPolicy zeta;
  zeta.enabled = cfg_eff.zeta.enabled;
  zeta.eps = cfg_eff.zeta.eps > 0.0 ? cfg_eff.zeta.eps : 0.0;

  long cell_index = 0;
  auto cell_seed = [&]() {
    return split_seed(seed, kCellSalt + static_cast<std::uint64_t>(cell_index));
  };

  if (cfg_eff.experiment == "ols") {
    const Matrix y = *data.ds.y;
    const Vector resid = residual_vector(x, y);
    for (const auto& sc : cfg_eff.sketches) {
      const SketchSpec spec = make_sketch_spec(sc, x);
      for (Index m : cfg_eff.m_grid) {
        CellClock clock;
        ResultRow row;
        row.experiment = cfg_eff.experiment;
        row.family = sc.family;
        row.debiased = spec.debiased;
        row.m = m;
        row.seed = cell_seed();
        OlsMcSpec ols{x, y, spec, m};
        const TrialStats st =
            monte_carlo_bias_variance(ols, cfg_eff.trials, zeta, row.seed, mc);
        fill_from_stats(row, st);
        jensen_check(row, st, out.warnings);
        if (spec.family == SketchSpec::Family::RowSampling) {
          row.predicted = delta_x(x, spec.plan, m, resid);
        }
        out.measured_wall_ms.push_back(clock.ms());
        row.wall_time_ms = opts.timings ? out.measured_wall_ms.back() : 0.0;
        out.rows.push_back(std::move(row));
        ++cell_index;
      }
    }
  } else if (cfg_eff.experiment == "projection") {
    for (const auto& sc : cfg_eff.sketches) {
      const SketchSpec spec = make_sketch_spec(sc, x);
      for (Index m : cfg_eff.m_grid) {
        CellClock clock;
        ResultRow row;
        row.experiment = cfg_eff.experiment;
        row.family = sc.family;
        row.debiased = spec.debiased;
        row.m = m;
        row.seed = cell_seed();
        const ProjectionMoments pm =
            projection_moments(x, spec, m, cfg_eff.trials, zeta, row.seed, mc);
        row.bias = pm.bias_F2;
        row.variance = pm.second_moment;
        row.bias_rel = pm.bias_F2 / pm.perp_F2;
        row.variance_rel = pm.second_moment / pm.perp_F2;
        row.bias_stderr = std::numeric_limits<double>::quiet_NaN();
        row.variance_stderr = std::numeric_limits<double>::quiet_NaN();
        row.accepted = pm.accepted;
        row.rejected = pm.rejected;
        row.predicted = pm.predicted_trace;
        out.measured_wall_ms.push_back(clock.ms());
        row.wall_time_ms = opts.timings ? out.measured_wall_ms.back() : 0.0;
        out.rows.push_back(std::move(row));
        ++cell_index;
      }
    }
  } else if (cfg_eff.experiment == "cur") {
    Rng sel_rng(split_seed(seed, kSelectSalt));
    const ColumnRowSelection sel =
        select_columns_rows(x, cfg_eff.c, cfg_eff.r, sel_rng);
    const Matrix rt = sel.r.transpose();
    const auto& mc_grid = cfg_eff.mc_grid.empty() ? cfg_eff.m_grid : cfg_eff.mc_grid;
    const auto& mr_grid = cfg_eff.mr_grid.empty() ? cfg_eff.m_grid : cfg_eff.mr_grid;
    for (const auto& sc : cfg_eff.sketches) {
      const SketchSpec spec_c = make_sketch_spec(sc, sel.c);
      const SketchSpec spec_r = make_sketch_spec(sc, rt);
      for (size_t gi = 0; gi < mc_grid.size(); ++gi) {
        CellClock clock;
        ResultRow row;
        row.experiment = cfg_eff.experiment;
        row.family = sc.family;
        row.debiased = spec_c.debiased;
        row.m_c = mc_grid[gi];
        row.m_r = mr_grid[gi];
        row.seed = cell_seed();
        CurMcSpec cur{x, sel.c, sel.r, spec_c, spec_r, mc_grid[gi], mr_grid[gi]};
        const TrialStats st =
            monte_carlo_bias_variance(cur, cfg_eff.trials, zeta, row.seed, mc);
        fill_from_stats(row, st);
        jensen_check(row, st, out.warnings);
        if (spec_c.family == SketchSpec::Family::RowSampling) {
          row.predicted = delta_cur(x, sel.c, sel.r, spec_c.plan, spec_r.plan,
                                    mc_grid[gi], mr_grid[gi])
                              .leading();
        }
        out.measured_wall_ms.push_back(clock.ms());
        row.wall_time_ms = opts.timings ? out.measured_wall_ms.back() : 0.0;
        out.rows.push_back(std::move(row));
        ++cell_index;
      }
    }
  } else if (cfg_eff.experiment == "lowerbound") {
    std::vector<double> gamma_grid;
    for (int g = 0; g <= 200; ++g) gamma_grid.push_back(g / 100.0);
    for (Index m : cfg_eff.m_grid) {
      CellClock clock;
      ResultRow row;
      row.experiment = cfg_eff.experiment;
      row.family = "halfapprox";
      row.debiased = false;
      row.m = m;
      row.seed = cell_seed();
      const ScalarDebiasFloor floor = scalar_debias_floor(
          *data.lb, m, gamma_grid, cfg_eff.trials, row.seed, mc);
      fill_from_stats(row, floor.stats);
      row.bias = floor.plain_bias;
      row.bias_rel = floor.plain_bias / floor.stats.normalizer;
      row.predicted = floor.normalized;
      out.measured_wall_ms.push_back(clock.ms());
      row.wall_time_ms = opts.timings ? out.measured_wall_ms.back() : 0.0;
      out.rows.push_back(std::move(row));
      ++cell_index;
    }
  } else if (cfg_eff.experiment == "oracle-check") {
    const Matrix y = *data.ds.y;
    ZetaPolicy off;
    off.enabled = false;
    for (const auto& sc : cfg_eff.sketches) {
      const SketchSpec spec = make_sketch_spec(sc, x);
      for (Index m : cfg_eff.m_grid) {
        CellClock clock;
        ResultRow row;
        row.experiment = cfg_eff.experiment;
        row.family = sc.family;
        row.debiased = spec.debiased;
        row.m = m;
        row.seed = cell_seed();
        EnumerationBudget budget{cfg_eff.oracle_budget};
        const BetaEnumeration oracle = enumerate_expectation_beta(
            x, y, spec.plan, m, spec.debiased, budget);
        OlsMcSpec ols{x, y, spec, m};
        const TrialStats st =
            monte_carlo_bias_variance(ols, cfg_eff.trials, off, row.seed, mc);
        fill_from_stats(row, st);
        jensen_check(row, st, out.warnings);
        row.predicted = oracle.exact_bias;
        out.measured_wall_ms.push_back(clock.ms());
        row.wall_time_ms = opts.timings ? out.measured_wall_ms.back() : 0.0;
        out.rows.push_back(std::move(row));
        ++cell_index;
      }
    }
  } else if (cfg_eff.experiment == "inversion-check") {
    const ThinFactorization f = thin_factorize(x);
    const Matrix gram_inv = pseudoinverse(x.transpose() * x);
    for (const auto& sc : cfg_eff.sketches) {
      const SketchSpec spec = make_sketch_spec(sc, x);
      for (Index m : cfg_eff.m_grid) {
        CellClock clock;
        ResultRow row;
        row.experiment = cfg_eff.experiment;
        row.family = sc.family;
        row.debiased = false;
        row.m = m;
        row.seed = cell_seed();

        Matrix target;
        if (spec.family == SketchSpec::Family::RowSampling) {
          const FixedPointDiag fp = solve_fixed_point_D(x, spec.plan, m);
          target = pseudoinverse(x.transpose() * fp.d.asDiagonal() * x);
        } else {
          target = gaussian_inverse_scale(m, f.numeric_rank) * gram_inv;
        }

        double eps = zeta.eps;
        if (zeta.enabled && eps <= 0.0) {
          const double theta = spec.family == SketchSpec::Family::RowSampling
                                   ? spec.plan.theta_max
                                   : 1.0;
          eps = auto_embedding_eps(theta, f.numeric_rank, m);
        }
        std::optional<AliasTable> table;
        if (spec.family == SketchSpec::Family::RowSampling) {
          table.emplace(spec.plan.probabilities);
        }

        Matrix mean_inv = Matrix::Zero(x.cols(), x.cols());
        long accepted = 0;
        long rejected = 0;
        for (long t = 0; t < cfg_eff.trials; ++t) {
          Rng rng(split_seed(row.seed, static_cast<std::uint64_t>(t)));
          SketchOperator op =
              spec.family == SketchSpec::Family::RowSampling
                  ? row_sampling_operator(
                        draw_sample(*table, spec.plan, m, rng), x.rows(), false)
                  : gaussian_operator(x.rows(), m, rng);
          if (zeta.enabled &&
              !subspace_embedding_check(f.orthonormal_basis, op, eps)) {
            ++rejected;
            continue;
          }
          const Matrix xs = apply_sketch(op, x);
          const ThinFactorization fs = thin_factorize(xs);
          if (fs.numeric_rank < f.numeric_rank) {
            ++rejected;
            continue;
          }
          mean_inv += fs.right_factor.transpose() *
                      fs.singular_values.array().square().inverse().matrix().asDiagonal() *
                      fs.right_factor;
          ++accepted;
        }
        if (accepted == 0) {
          throw AllTrialsRejectedError("inversion-check: every trial rejected");
        }
        mean_inv /= static_cast<double>(accepted);

        row.bias = rel_frobenius(mean_inv, target);
        row.variance = rel_frobenius(mean_inv, gram_inv);
        row.bias_rel = row.bias;
        row.variance_rel = row.variance;
        row.bias_stderr = std::numeric_limits<double>::quiet_NaN();
        row.variance_stderr = std::numeric_limits<double>::quiet_NaN();
        row.accepted = accepted;
        row.rejected = rejected;
        row.predicted = rel_frobenius(target, gram_inv);
        out.measured_wall_ms.push_back(clock.ms());
        row.wall_time_ms = opts.timings ? out.measured_wall_ms.back() : 0.0;
        out.rows.push_back(std::move(row));
        ++cell_index;
      }
    }
  } else {
    throw InvalidConfigError("unknown experiment '" + cfg_eff.experiment + "'");
  }
  return out;
}

// --- writers -----------------------------------------------------------------

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_results_csv(std::ostream& os, const RunOutcome& out) {
  os << "# oblique-results-v1\n";
  os << "# config: " << out.resolved_config.dump() << "\n";
  os << "experiment,family,debiased,m,m_c,m_r,bias,variance,bias_rel,"
        "variance_rel,bias_stderr,variance_stderr,accepted,rejected,"
        "predicted,wall_time_ms,seed\n";
  for (const auto& r : out.rows) {
    os << r.experiment << ',' << r.family << ',' << (r.debiased ? 1 : 0) << ',';
    if (r.m) os << *r.m;
    os << ',';
    if (r.m_c) os << *r.m_c;
    os << ',';
    if (r.m_r) os << *r.m_r;
    os << ',';
    os << fmt_double(r.bias) << ',' << fmt_double(r.variance) << ','
       << fmt_double(r.bias_rel) << ',' << fmt_double(r.variance_rel) << ','
       << fmt_double(r.bias_stderr) << ',' << fmt_double(r.variance_stderr)
       << ',' << r.accepted << ',' << r.rejected << ',';
    if (r.predicted) os << fmt_double(*r.predicted);
    os << ',' << fmt_double(r.wall_time_ms) << ',' << r.seed << '\n';
  }
}

void write_results_json(std::ostream& os, const RunOutcome& out) {
  json j;
  j["schema"] = "oblique-results-v1";
  j["config"] = out.resolved_config;
  json rows = json::array();
  for (const auto& r : out.rows) {
    json e;
    e["experiment"] = r.experiment;
    e["family"] = r.family;
    e["debiased"] = r.debiased;
    if (r.m) e["m"] = *r.m; else e["m"] = nullptr;
    if (r.m_c) e["m_c"] = *r.m_c; else e["m_c"] = nullptr;
    if (r.m_r) e["m_r"] = *r.m_r; else e["m_r"] = nullptr;
    e["bias"] = r.bias;
    e["variance"] = r.variance;
    e["bias_rel"] = r.bias_rel;
    e["variance_rel"] = r.variance_rel;
    e["bias_stderr"] =
        std::isnan(r.bias_stderr) ? json(nullptr) : json(r.bias_stderr);
    e["variance_stderr"] =
        std::isnan(r.variance_stderr) ? json(nullptr) : json(r.variance_stderr);
    e["accepted"] = r.accepted;
    e["rejected"] = r.rejected;
    if (r.predicted) e["predicted"] = *r.predicted; else e["predicted"] = nullptr;
    e["wall_time_ms"] = r.wall_time_ms;
    e["seed"] = r.seed;
    rows.push_back(e);
  }
  j["rows"] = rows;
  os << j.dump(2) << "\n";
}

void write_results(const ExperimentConfig& cfg, const RunOutcome& out) {
  std::ofstream os(cfg.output.path, std::ios::binary);
  if (!os) {
    throw Error("cannot open output file '" + cfg.output.path + "'");
  }
  if (cfg.output.format == "json") {
    write_results_json(os, out);
  } else {
    write_results_csv(os, out);
  }
}

std::string summary_table(const RunOutcome& out) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof(line), "%-14s %-12s %-3s %-6s %-6s %-12s %-12s %-9s %-9s %-10s %-9s\n",
                "experiment", "family", "db", "m/mc", "mr", "bias", "variance",
                "accepted", "rejected", "predicted", "ms");
  os << line;
  for (size_t i = 0; i < out.rows.size(); ++i) {
    const auto& r = out.rows[i];
    const double ms =
        i < out.measured_wall_ms.size() ? out.measured_wall_ms[i] : 0.0;
    std::string m1 = r.m ? std::to_string(*r.m)
                         : (r.m_c ? std::to_string(*r.m_c) : "");
    std::string m2 = r.m_r ? std::to_string(*r.m_r) : "";
    std::snprintf(line, sizeof(line),
                  "%-14s %-12s %-3d %-6s %-6s %-12.4g %-12.4g %-9ld %-9ld %-10.4g %-9.1f\n",
                  r.experiment.c_str(), r.family.c_str(), r.debiased ? 1 : 0,
                  m1.c_str(), m2.c_str(), r.bias, r.variance, r.accepted,
                  r.rejected, r.predicted.value_or(std::nan("")), ms);
    os << line;
  }
  return os.str();
}

}  // namespace oblique
