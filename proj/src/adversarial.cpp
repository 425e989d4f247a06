#include "oblique/adversarial.hpp"

#include <cmath>

#include "oblique/estimators.hpp"
#include "oblique/matcore.hpp"

namespace oblique {

LowerBoundInstance lower_bound_instance(Index k, Index n) {
  if (k < 1 || n < 8 * k) {
    throw InvalidDimensionsError(
        "lower_bound_instance: need k >= 1 and n >= 8k");
  }
  const Index p = 4 * k;
  const double half = 0.5;
  const double root3_half = std::sqrt(3.0) / 2.0;

  LowerBoundInstance inst;
  inst.x = Matrix::Zero(n, p);
  inst.y = Matrix::Zero(n, 1);
  for (Index j = 0; j < p; ++j) {
    inst.x(2 * j, j) = half;
    inst.x(2 * j + 1, j) = root3_half;
  }
  for (Index i = 0; i < 2 * p; ++i) {
    if (i < p) {
      inst.y(i, 0) = (i % 2 == 0) ? -1.0 : 1.0;  // odd 1-based rows get -1
    } else {
      inst.y(i, 0) = 1.0;
    }
  }

  Vector pi = Vector::Zero(n);
  pi.head(2 * p).setConstant(1.0 / static_cast<double>(2 * p));
  inst.plan = custom_plan(inst.x, pi);

  inst.beta_star = Vector::Zero(p);
  for (Index i = 0; i < p; ++i) {
    inst.beta_star(i) =
        (i < p / 2) ? root3_half - half : root3_half + half;
  }
  return inst;
}

bool pair_cover_event(const LowerBoundInstance& inst,
                      const std::vector<Index>& drawn_rows) {
  const Index p = inst.x.cols();
  std::vector<std::uint8_t> hit(static_cast<size_t>(p), 0);
  for (Index row : drawn_rows) {
    if (row < 2 * p) hit[static_cast<size_t>(row / 2)] = 1;
  }
  for (auto h : hit) {
    if (!h) return false;
  }
  return true;
}

ScalarDebiasFloor scalar_debias_floor(const LowerBoundInstance& inst, Index m,
                                      const std::vector<double>& gamma_grid,
                                      long trials, std::uint64_t base_seed,
                                      const McOptions& opts) {
  if (gamma_grid.empty()) {
    throw InvalidConfigError("scalar_debias_floor: empty gamma grid");
  }
  const Matrix& x = inst.x;
  const Matrix& y = inst.y;
  const Index p = x.cols();
  const Vector beta_ols = ols_exact(x, y).beta;
  const double loss_ref = loss_ols(x, y, beta_ols);
  const Vector r = y - x * beta_ols;

  const AliasTable table(inst.plan.probabilities);
  auto trial = [&](std::uint64_t seed) -> TrialOutcome {
    Rng rng(seed);
    const RowSample sample = draw_sample(table, inst.plan, m, rng);
    TrialOutcome out;
    if (!pair_cover_event(inst, sample.indices)) return out;
    const SketchOperator op =
        row_sampling_operator(sample, x.rows(), /*debiased=*/false);
    const OlsSolution sol = ols_subsampled(x, y, op);
    out.accepted = true;
    out.estimate = sol.beta;
    out.loss = loss_ols(x, y, sol.beta);
    return out;
  };
  auto loss_of_mean = [&](const Vector& beta) { return loss_ols(x, y, beta); };

  ScalarDebiasFloor out;
  out.stats =
      run_monte_carlo(trial, trials, base_seed, p, loss_of_mean, loss_ref, opts);

  const Vector& mean_beta = out.stats.mean_estimate;
  out.plain_bias = loss_ols(x, y, mean_beta) - loss_ref;
  double best = std::numeric_limits<double>::infinity();
  double best_gamma = gamma_grid.front();
  for (double g : gamma_grid) {
    const double bias = loss_ols(x, y, g * mean_beta) - loss_ref;
    if (bias < best) {
      best = bias;
      best_gamma = g;
    }
  }
  out.min_bias = best;
  out.argmin_gamma = best_gamma;

  // L(gamma b) is quadratic in gamma with minimizer <Xb, y>/||Xb||^2.
  const Vector xb = x * mean_beta;
  out.closed_form_gamma = xb.dot(y.col(0)) / xb.squaredNorm();

  const double pd = static_cast<double>(p);
  const double md = static_cast<double>(m);
  out.normalized = out.min_bias * md * md / (pd * pd * r.squaredNorm());
  return out;
}

}  // namespace oblique
