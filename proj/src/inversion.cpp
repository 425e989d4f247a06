#include "oblique/inversion.hpp"

#include <cmath>

#include "oblique/matcore.hpp"

namespace oblique {

FixedPointDiag solve_fixed_point_D(const Matrix& x, const SamplingPlan& plan,
                                   Index m, double tol, Index max_iters,
                                   double damping) {
  require_finite(x, "solve_fixed_point_D: X");
  require_shape(plan.probabilities.size() == x.rows(),
                "solve_fixed_point_D: plan size mismatch");
  if (damping <= 0.0 || damping > 1.0) {
    throw InvalidConfigError("solve_fixed_point_D: damping must be in (0,1]");
  }
  const Index n = x.rows();
  const Index full_rank = thin_factorize(x).numeric_rank;
  const Vector row_sq = x.rowwise().squaredNorm();
  const double md = static_cast<double>(m);

  FixedPointDiag fp;
  fp.d = Vector::Ones(n);

  for (Index it = 0; it < max_iters; ++it) {
    // X^T D X via the factorization of sqrt(D) X; quadratic forms come from
    // T = X V Sigma^{-1}: x_i^T (X^T D X)^{-1} x_i = ||row_i(T)||^2.
    Matrix xd = fp.d.cwiseSqrt().asDiagonal() * x;
    const ThinFactorization f = thin_factorize(xd);
    if (f.numeric_rank < full_rank) {
      throw SingularIntermediateError(
          "solve_fixed_point_D: X^T D X became numerically singular at "
          "iteration " +
          std::to_string(it));
    }
    const Matrix t = x * f.right_factor.transpose() *
                     f.singular_values.cwiseInverse().asDiagonal();
    const Vector quad = t.rowwise().squaredNorm();

    double delta = 0.0;
    for (Index i = 0; i < n; ++i) {
      double next;
      if (row_sq(i) == 0.0) {
        next = 1.0;
      } else if (plan.probabilities(i) <= 0.0) {
        next = 0.0;
      } else {
        next = 1.0 / (1.0 + quad(i) / (md * plan.probabilities(i)));
      }
      next = damping * next + (1.0 - damping) * fp.d(i);
      delta = std::max(delta, std::abs(next - fp.d(i)));
      fp.d(i) = next;
    }
    fp.iterations = it + 1;
    fp.residual = delta;
    fp.residual_history.push_back(delta);
    if (delta <= tol) return fp;
  }
  throw NoConvergenceError("solve_fixed_point_D: no convergence after " +
                           std::to_string(max_iters) +
                           " iterations (residual " +
                           std::to_string(fp.residual) + ")");
}

double gaussian_inverse_scale(Index m, Index p) {
  if (m <= p + 1) {
    throw UndefinedScaleError(
        "gaussian_inverse_scale: requires m > p + 1 (inverse-Wishart mean)");
  }
  return static_cast<double>(m) / static_cast<double>(m - p - 1);
}

}  // namespace oblique
