#include "oblique/estimators.hpp"

#include <cmath>
#include <numeric>

#include "oblique/matcore.hpp"

namespace oblique {

OlsSolution ols_exact(const Matrix& x, const Matrix& y) {
  require_shape(y.rows() == x.rows() && y.cols() == 1,
                "ols_exact: y must be n x 1");
  OlsSolution sol;
  sol.beta = pseudoinverse(x) * y;
  sol.sketch_descriptor = "exact";
  return sol;
}

OlsSolution ols_subsampled(const Matrix& x, const Matrix& y,
                           const SketchOperator& op) {
  require_shape(y.rows() == x.rows() && y.cols() == 1,
                "ols_subsampled: y must be n x 1");
  const Matrix xs = apply_sketch(op, x);
  const Matrix ys = apply_sketch(op, y);
  OlsSolution sol;
  sol.beta = pseudoinverse(xs) * ys;
  sol.sketch_descriptor = op.describe();
  return sol;
}

OlsSolution ols_debiased(const Matrix& x, const Matrix& y,
                         const SamplingPlan& /*plan*/, const RowSample& sample) {
  if (!sample.debias_weights) {
    throw DebiasUndefinedError("ols_debiased: sample carries no debias weights");
  }
  const SketchOperator op =
      row_sampling_operator(sample, x.rows(), /*debiased=*/true);
  OlsSolution sol = ols_subsampled(x, y, op);
  sol.sketch_descriptor = "row_sampling_debiased";
  return sol;
}

Matrix oblique_projection(const Matrix& x, const SketchOperator& op) {
  require_shape(x.rows() == op.input_dim() ||
                    std::holds_alternative<SrhtOp>(op.op),
                "oblique_projection: operator dimension mismatch");
  const Matrix xs = apply_sketch(op, x);
  const Matrix sx_pinv = pseudoinverse(xs);  // p x m
  // Columns of S^T arrive via the operator applied to I; avoid the dense
  // n x n identity only for row sampling, where S has one nonzero per row.
  if (const auto* rs = std::get_if<RowSamplingOp>(&op.op)) {
    Matrix k = Matrix::Zero(x.cols(), x.rows());
    for (size_t s = 0; s < rs->sample.indices.size(); ++s) {
      double w = rs->sample.base_weights(static_cast<Index>(s));
      if (rs->debiased) w *= (*rs->sample.debias_weights)(static_cast<Index>(s));
      k.col(rs->sample.indices[s]) += w * sx_pinv.col(static_cast<Index>(s));
    }
    return x * k;
  }
  const Matrix s_dense =
      apply_sketch(op, Matrix::Identity(op.input_dim(), op.input_dim()));
  return x * (sx_pinv * s_dense);
}

ColumnRowSelection select_columns_rows(const Matrix& x, Index c, Index r,
                                       Rng& rng) {
  require_finite(x, "select_columns_rows: X");
  if (c < 1 || c > x.cols() || r < 1 || r > x.rows()) {
    throw InvalidDimensionsError(
        "select_columns_rows: need 1 <= c <= p and 1 <= r <= n");
  }

  auto draw_without_replacement = [&](Vector weights, Index count,
                                      const char* what) {
    std::vector<Index> ids;
    Index nonzero = 0;
    for (Index i = 0; i < weights.size(); ++i) {
      if (weights(i) > 0.0) ++nonzero;
    }
    if (nonzero < count) {
      throw InsufficientNonzeroError(
          std::string("select_columns_rows: fewer than requested nonzero ") +
          what);
    }
    for (Index k = 0; k < count; ++k) {
      const double total = weights.sum();
      double u = rng.next_double() * total;
      Index chosen = -1;
      for (Index i = 0; i < weights.size(); ++i) {
        if (weights(i) <= 0.0) continue;
        u -= weights(i);
        if (u <= 0.0) {
          chosen = i;
          break;
        }
      }
      if (chosen < 0) {  // fp underflow at the tail: take the last positive
        for (Index i = weights.size() - 1; i >= 0; --i) {
          if (weights(i) > 0.0) {
            chosen = i;
            break;
          }
        }
      }
      ids.push_back(chosen);
      weights(chosen) = 0.0;
    }
    return ids;
  };

  ColumnRowSelection sel;
  sel.col_ids = draw_without_replacement(x.colwise().squaredNorm().transpose(),
                                         c, "columns");
  sel.row_ids = draw_without_replacement(x.rowwise().squaredNorm(), r, "rows");

  sel.c.resize(x.rows(), c);
  for (Index j = 0; j < c; ++j) sel.c.col(j) = x.col(sel.col_ids[static_cast<size_t>(j)]);
  sel.r.resize(r, x.cols());
  for (Index i = 0; i < r; ++i) sel.r.row(i) = x.row(sel.row_ids[static_cast<size_t>(i)]);
  return sel;
}

CurSolution cur_exact(const Matrix& x, const Matrix& c, const Matrix& r) {
  require_shape(c.rows() == x.rows(), "cur_exact: C rows must match X");
  require_shape(r.cols() == x.cols(), "cur_exact: R cols must match X");
  CurSolution sol;
  sol.u = pseudoinverse(c) * x * pseudoinverse(r);
  sol.sc_descriptor = "exact";
  sol.sr_descriptor = "exact";
  return sol;
}

CurSolution cur_fast(const Matrix& x, const Matrix& c, const Matrix& r,
                     const SketchOperator& op_c, const SketchOperator& op_r) {
  require_shape(c.rows() == x.rows(), "cur_fast: C rows must match X");
  require_shape(r.cols() == x.cols(), "cur_fast: R cols must match X");
  const Matrix sc_c = apply_sketch(op_c, c);              // m_c x c
  const Matrix sc_x = apply_sketch(op_c, x);              // m_c x p
  const Matrix sc_x_sr = apply_sketch(op_r, sc_x.transpose()).transpose();
  const Matrix r_sr = apply_sketch(op_r, r.transpose()).transpose();  // r x m_r
  CurSolution sol;
  sol.u = pseudoinverse(sc_c) * sc_x_sr * pseudoinverse(r_sr);
  sol.sc_descriptor = op_c.describe();
  sol.sr_descriptor = op_r.describe();
  return sol;
}

CurSolution cur_debiased(const Matrix& x, const Matrix& c, const Matrix& r,
                         const SamplingPlan& /*plan_c*/, const RowSample& sample_c,
                         const SamplingPlan& /*plan_r*/,
                         const RowSample& sample_r) {
  if (!sample_c.debias_weights || !sample_r.debias_weights) {
    throw DebiasUndefinedError("cur_debiased: samples must carry debias weights");
  }
  const SketchOperator op_c =
      row_sampling_operator(sample_c, c.rows(), /*debiased=*/true);
  const SketchOperator op_r =
      row_sampling_operator(sample_r, r.cols(), /*debiased=*/true);
  return cur_fast(x, c, r, op_c, op_r);
}

}  // namespace oblique
