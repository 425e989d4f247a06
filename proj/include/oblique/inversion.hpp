#ifndef OBLIQUE_INVERSION_HPP
#define OBLIQUE_INVERSION_HPP

#include <vector>

#include "oblique/sketching.hpp"
#include "oblique/types.hpp"

namespace oblique {

/// Diagonal solving D_ii = (1 + x_i^T (X^T D X)^{-1} x_i / (m pi_i))^{-1};
/// E[(X~^T X~)^{-1}] concentrates around (X^T D X)^{-1} rather than
/// (X^T X)^{-1}.
struct FixedPointDiag {
  Vector d;             // D_11..D_nn, each in [0, 1]
  Index iterations = 0;
  double residual = 0.0;  // max-abs change at convergence
  std::vector<double> residual_history;  // one entry per iteration
};

/// Plain fixed-point iteration from D = I. Rows with pi_i = 0 and x_i != 0
/// get D_ii = 0; zero rows get D_ii = 1. `damping` in (0, 1] blends each
/// iterate with the previous one (1 = undamped).
FixedPointDiag solve_fixed_point_D(const Matrix& x, const SamplingPlan& plan,
                                   Index m, double tol = 1e-10,
                                   Index max_iters = 1000,
                                   double damping = 1.0);

/// m / (m - p - 1), the exact inverse-Wishart rescaling for Gaussian sketches.
double gaussian_inverse_scale(Index m, Index p);

}  // namespace oblique

#endif  // OBLIQUE_INVERSION_HPP
