#ifndef OBLIQUE_MATCORE_HPP
#define OBLIQUE_MATCORE_HPP

#include <utility>

#include "oblique/types.hpp"

namespace oblique {

/// Thin SVD truncated at the numeric rank: X = basis * diag(sv) * right_factor.
struct ThinFactorization {
  Matrix orthonormal_basis;  // n x k, orthonormal columns
  Vector singular_values;    // length k, nonincreasing, all > rank tolerance
  Matrix right_factor;       // k x p (rows of V^T)
  Index numeric_rank = 0;
};

/// rank_tol < 0 selects the default eps * max(n,p) * sigma_max.
ThinFactorization thin_factorize(const Matrix& x, double rank_tol = -1.0);

/// Moore-Penrose pseudoinverse (p x n), minimum-norm on rank-deficient input.
Matrix pseudoinverse(const Matrix& x, double rank_tol = -1.0);
Matrix pseudoinverse(const ThinFactorization& f);

/// l_i = squared norm of row i of the orthonormal basis; sums to the rank.
Vector leverage_scores(const Matrix& x);
Vector leverage_scores(const ThinFactorization& f);

/// (P, P_perp) with P = basis * basis^T and P_perp = I - P.
std::pair<Matrix, Matrix> orthogonal_projection(const Matrix& x);

/// ||y - X beta||^2
double loss_ols(const Matrix& x, const Matrix& y, const Matrix& beta);

/// ||C U R - X||_F^2
double loss_cur(const Matrix& x, const Matrix& c, const Matrix& u,
                const Matrix& r);

}  // namespace oblique

#endif  // OBLIQUE_MATCORE_HPP
