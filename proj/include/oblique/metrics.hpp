#ifndef OBLIQUE_METRICS_HPP
#define OBLIQUE_METRICS_HPP

#include <cstdint>
#include <functional>
#include <variant>

#include "oblique/estimators.hpp"
#include "oblique/sketching.hpp"
#include "oblique/types.hpp"

namespace oblique {

/// Per-trial acceptance filter: the eigenvalue sandwich of (S U)^T (S U)
/// on the relevant orthonormal basis, checked on the plain (non-debiased)
/// sketch. eps <= 0 selects the auto value
/// sqrt(3 k theta_max log(2k/delta) / m) with delta below.
struct ZetaPolicy {
  bool enabled = true;
  double eps = 0.0;  // <= 0 -> auto
  double delta = 0.01;
};

double auto_embedding_eps(double theta_max, Index rank, Index m,
                          double delta = 0.01);

/// r = y - X beta_OLS
Vector residual_vector(const Matrix& x, const Matrix& y);

/// Delta(X) = sum_i r_i^2 l_i / (m pi_i); terms with l_i = 0 contribute 0.
double delta_x(const Matrix& x, const SamplingPlan& plan, Index m,
               const Vector& r);

/// The two weighted-residual Frobenius norms of the CUR variance prediction:
/// delta_1 over (I - W_C W_C^T) X, delta_2 over (I - V_R V_R^T) X^T.
struct CurDeltas {
  double delta_1 = 0.0;
  double delta_2 = 0.0;
  double leading() const {
    const double s = delta_1 + delta_2;
    return s * s;
  }
  /// Full prediction for a caller-supplied eps * L(U_CUR) value.
  double total(double eps_loss) const {
    const double s = delta_1 + delta_2;
    return s * s + std::sqrt(eps_loss) * s;
  }
};

CurDeltas delta_cur(const Matrix& x, const Matrix& c, const Matrix& r,
                    const SamplingPlan& plan_c, const SamplingPlan& plan_r,
                    Index m_c, Index m_r);

// --- Monte-Carlo harness -----------------------------------------------------

struct TrialStats {
  long accepted = 0;
  long rejected = 0;
  Vector mean_estimate;  // beta, or the CUR core flattened column-major
  double mean_loss = 0.0;
  double bias = 0.0;      // L(mean_estimate) - normalizer
  double variance = 0.0;  // mean_loss - normalizer (reported raw, may be <0)
  double bias_stderr = 0.0;
  double variance_stderr = 0.0;
  double normalizer = 0.0;

  double bias_rel() const { return bias / normalizer; }
  double variance_rel() const { return variance / normalizer; }
};

struct TrialOutcome {
  bool accepted = false;
  Vector estimate;
  double loss = 0.0;
};

struct McOptions {
  int threads = 1;
  int bootstrap_resamples = 200;
  /// Test hook; invoked serially in trial order after all trials ran.
  std::function<void(long, const TrialOutcome&)> probe;
  /// Pythagorean guard: accepted losses must be >= normalizer - slack.
  bool check_loss_floor = true;
};

/// Runs `trials` independent trials with per-trial seeds split(base_seed, t),
/// aggregates accepted ones with a deterministic pairwise-tree reduction
/// (bit-reproducible for any thread count), and bootstraps the bias stderr.
TrialStats run_monte_carlo(
    const std::function<TrialOutcome(std::uint64_t)>& trial, long trials,
    std::uint64_t base_seed, Index estimate_dim,
    const std::function<double(const Vector&)>& loss_of_mean,
    double normalizer, const McOptions& opts = {});

// --- named estimator specs ---------------------------------------------------

struct SketchSpec {
  enum class Family { RowSampling, Srht, Gaussian, SparseSign };
  Family family = Family::RowSampling;
  SamplingPlan plan;       // RowSampling only
  bool debiased = false;   // RowSampling, or Srht for the after-HD variant
  Index sparse_nnz = 0;    // SparseSign only
  double debias_floor = 1e-8;
};

struct OlsMcSpec {
  Matrix x;
  Matrix y;
  SketchSpec sketch;
  Index m = 0;
};

struct CurMcSpec {
  Matrix x;
  Matrix c;
  Matrix r;
  SketchSpec sketch_c;  // plan over rows of C
  SketchSpec sketch_r;  // plan over rows of R^T
  Index m_c = 0;
  Index m_r = 0;
};

using EstimatorSpec = std::variant<OlsMcSpec, CurMcSpec>;

TrialStats monte_carlo_bias_variance(const EstimatorSpec& spec, long trials,
                                     const ZetaPolicy& zeta,
                                     std::uint64_t base_seed,
                                     const McOptions& opts = {});

// --- projection moments ------------------------------------------------------

struct ProjectionMoments {
  double bias_F2 = 0.0;         // ||mean P_check - P||_F^2
  double second_moment = 0.0;   // mean ||P_check - P||_F^2
  double predicted_trace = 0.0; // tr(P_perp diag{l_i/(m pi_i)})
  double perp_F2 = 0.0;         // ||P_perp||_F^2
  long accepted = 0;
  long rejected = 0;
};

/// Supports RowSampling and Srht families; for Srht the predicted trace uses
/// the flattened-score approximation (k/m) ||P_perp||_F^2 on the padded space.
ProjectionMoments projection_moments(const Matrix& x, const SketchSpec& sketch,
                                     Index m, long trials,
                                     const ZetaPolicy& zeta,
                                     std::uint64_t base_seed,
                                     const McOptions& opts = {});

}  // namespace oblique

#endif  // OBLIQUE_METRICS_HPP
