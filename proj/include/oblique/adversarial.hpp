#ifndef OBLIQUE_ADVERSARIAL_HPP
#define OBLIQUE_ADVERSARIAL_HPP

#include <cstdint>

#include "oblique/metrics.hpp"
#include "oblique/sketching.hpp"
#include "oblique/types.hpp"

namespace oblique {

/// The p = 4k construction whose subsampled OLS bias no scalar rescaling can
/// repair: column j carries (1/2, sqrt(3)/2) in rows (2j-1, 2j), X^T X = I_p,
/// leverage scores in {1/4, 3/4, 0}, and the plan is uniform on the first 2p
/// rows (a 1/2-approximation of exact leverage sampling).
struct LowerBoundInstance {
  Matrix x;          // n x p
  Matrix y;          // n x 1
  SamplingPlan plan;
  Vector beta_star;  // the exact OLS solution
};

LowerBoundInstance lower_bound_instance(Index k, Index n);

/// True iff every column pair {2j-1, 2j} was hit at least once — the
/// full-rank event used as the acceptance rule for this instance.
bool pair_cover_event(const LowerBoundInstance& inst,
                      const std::vector<Index>& drawn_rows);

struct ScalarDebiasFloor {
  double min_bias = 0.0;      // min over gamma of L(gamma E[beta~]) - L(beta*)
  double argmin_gamma = 0.0;  // grid argmin
  double closed_form_gamma = 0.0;
  double normalized = 0.0;    // min_bias * m^2 / (p^2 ||r||^2)
  double plain_bias = 0.0;    // gamma = 1 entry
  TrialStats stats;           // the underlying Monte-Carlo run
};

/// Estimates E_zeta[beta~] by Monte Carlo under the pair-cover event, then
/// minimizes L(gamma * E[beta~]) over the grid (closed form cross-checked).
ScalarDebiasFloor scalar_debias_floor(const LowerBoundInstance& inst, Index m,
                                      const std::vector<double>& gamma_grid,
                                      long trials, std::uint64_t base_seed,
                                      const McOptions& opts = {});

}  // namespace oblique

#endif  // OBLIQUE_ADVERSARIAL_HPP
