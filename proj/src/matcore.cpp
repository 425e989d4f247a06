#include "oblique/matcore.hpp"

#include <Eigen/SVD>
#include <limits>

namespace oblique {

ThinFactorization thin_factorize(const Matrix& x, double rank_tol) {
  require_finite(x, "thin_factorize: X");
  Eigen::BDCSVD<Matrix> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  if (rank_tol < 0.0) {
    const double sigma_max = sv.size() > 0 ? sv(0) : 0.0;
    rank_tol = std::numeric_limits<double>::epsilon() *
               static_cast<double>(std::max(x.rows(), x.cols())) * sigma_max;
  }
  Index k = 0;
  while (k < sv.size() && sv(k) > rank_tol) ++k;

  ThinFactorization f;
  f.numeric_rank = k;
  f.orthonormal_basis = svd.matrixU().leftCols(k);
  f.singular_values = sv.head(k);
  f.right_factor = svd.matrixV().leftCols(k).transpose();
  return f;
}

Matrix pseudoinverse(const ThinFactorization& f) {
  if (f.numeric_rank == 0) {
    return Matrix::Zero(f.right_factor.cols(), f.orthonormal_basis.rows());
  }
  return f.right_factor.transpose() *
         f.singular_values.cwiseInverse().asDiagonal() *
         f.orthonormal_basis.transpose();
}

Matrix pseudoinverse(const Matrix& x, double rank_tol) {
  require_finite(x, "pseudoinverse: X");
  return pseudoinverse(thin_factorize(x, rank_tol));
}

Vector leverage_scores(const ThinFactorization& f) {
  return f.orthonormal_basis.rowwise().squaredNorm();
}

Vector leverage_scores(const Matrix& x) {
  require_finite(x, "leverage_scores: X");
  return leverage_scores(thin_factorize(x));
}

std::pair<Matrix, Matrix> orthogonal_projection(const Matrix& x) {
  require_finite(x, "orthogonal_projection: X");
  const ThinFactorization f = thin_factorize(x);
  Matrix p = f.orthonormal_basis * f.orthonormal_basis.transpose();
  Matrix p_perp = Matrix::Identity(x.rows(), x.rows()) - p;
  return {std::move(p), std::move(p_perp)};
}

double loss_ols(const Matrix& x, const Matrix& y, const Matrix& beta) {
  require_shape(y.rows() == x.rows() && y.cols() == 1,
                "loss_ols: y must be n x 1");
  require_shape(beta.rows() == x.cols() && beta.cols() == 1,
                "loss_ols: beta must be p x 1");
  return (y - x * beta).squaredNorm();
}

double loss_cur(const Matrix& x, const Matrix& c, const Matrix& u,
                const Matrix& r) {
  require_shape(c.rows() == x.rows(), "loss_cur: C rows must match X");
  require_shape(r.cols() == x.cols(), "loss_cur: R cols must match X");
  require_shape(u.rows() == c.cols() && u.cols() == r.rows(),
                "loss_cur: U must be c x r");
  return (c * u * r - x).squaredNorm();
}

}  // namespace oblique
