#ifndef OBLIQUE_ESTIMATORS_HPP
#define OBLIQUE_ESTIMATORS_HPP

#include <optional>
#include <string>
#include <vector>

#include "oblique/sketching.hpp"
#include "oblique/types.hpp"

namespace oblique {

struct OlsSolution {
  Vector beta;
  std::string sketch_descriptor;  // "exact" or the sketch tag
  std::optional<bool> embedding_passed;
};

struct CurSolution {
  Matrix u;  // c x r core
  std::vector<Index> col_indices;
  std::vector<Index> row_indices;
  std::string sc_descriptor;
  std::string sr_descriptor;
};

/// beta = X^dagger y
OlsSolution ols_exact(const Matrix& x, const Matrix& y);

/// beta~ = (S X)^dagger (S y); minimum-norm on rank-deficient sketches.
OlsSolution ols_subsampled(const Matrix& x, const Matrix& y,
                           const SketchOperator& op);

/// beta-check via the debias weights attached to `sample`.
OlsSolution ols_debiased(const Matrix& x, const Matrix& y,
                         const SamplingPlan& plan, const RowSample& sample);

/// n x n oblique projection X (S X)^dagger S.
Matrix oblique_projection(const Matrix& x, const SketchOperator& op);

struct ColumnRowSelection {
  Matrix c;  // n x c
  Matrix r;  // r x p
  std::vector<Index> col_ids;
  std::vector<Index> row_ids;
};

/// c distinct columns by squared column norm and r distinct rows by squared
/// row norm, each via sequential weighted draws without replacement.
ColumnRowSelection select_columns_rows(const Matrix& x, Index c, Index r,
                                       Rng& rng);

/// U_CUR = C^dagger X R^dagger, the reconstruction-error minimizer.
CurSolution cur_exact(const Matrix& x, const Matrix& c, const Matrix& r);

/// U~ = (S_C C)^dagger (S_C X S_R^T) (R S_R^T)^dagger.
CurSolution cur_fast(const Matrix& x, const Matrix& c, const Matrix& r,
                     const SketchOperator& op_c, const SketchOperator& op_r);

/// Debiased core: both sketches carry debias weights, computed against the
/// leverage scores of C and R^T respectively.
CurSolution cur_debiased(const Matrix& x, const Matrix& c, const Matrix& r,
                         const SamplingPlan& plan_c, const RowSample& sample_c,
                         const SamplingPlan& plan_r, const RowSample& sample_r);

}  // namespace oblique

#endif  // OBLIQUE_ESTIMATORS_HPP
