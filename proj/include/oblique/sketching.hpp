#ifndef OBLIQUE_SKETCHING_HPP
#define OBLIQUE_SKETCHING_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "oblique/matcore.hpp"
#include "oblique/rng.hpp"
#include "oblique/types.hpp"

namespace oblique {

enum class PlanKind { Uniform, RowNorm, ExactLeverage, Shrinkage, Custom };

/// Importance distribution over the rows of a matrix plus the quantities the
/// debiasing formulas need (leverage scores and the theta approximation
/// factors theta_i = l_i / (pi_i * rank), taken over rows with l_i > 0).
struct SamplingPlan {
  Vector probabilities;  // pi_i >= 0, sums to 1
  Vector leverage;       // l_i in [0, 1]
  double theta_min = 1.0;
  double theta_max = 1.0;
  PlanKind kind = PlanKind::Custom;
  double shrink_lambda = 0.0;  // meaningful for Shrinkage only
  Index rank = 0;              // numeric rank backing the leverage scores
};

SamplingPlan build_distribution(const Matrix& x, PlanKind kind,
                                double lambda = 0.0);

/// Plan with caller-supplied probabilities; leverage and theta filled from X.
SamplingPlan custom_plan(const Matrix& x, const Vector& probabilities);

/// Walker alias table: O(n) build, O(1) per draw. Zero-probability cells are
/// never returned.
class AliasTable {
 public:
  explicit AliasTable(const Vector& probabilities);
  Index sample(Rng& rng) const;
  Index size() const { return static_cast<Index>(threshold_.size()); }

 private:
  std::vector<double> threshold_;
  std::vector<Index> alias_;
};

/// m row indices drawn i.i.d. with replacement plus their rescaling weights.
struct RowSample {
  std::vector<Index> indices;       // each in [0, n)
  Vector base_weights;              // 1/sqrt(m * pi_{i_s})
  std::optional<Vector> debias_weights;  // 1/sqrt(1 - l_{i_s}/(m pi_{i_s}))
};

RowSample draw_sample(const SamplingPlan& plan, Index m, Rng& rng);
RowSample draw_sample(const AliasTable& table, const SamplingPlan& plan,
                      Index m, Rng& rng);

/// Fills debias_weights; throws DebiasUndefinedError when a drawn index has
/// 1 - l_i/(m pi_i) <= floor. Weights are 1 on zero-leverage rows.
RowSample attach_debias_weights(RowSample sample, const SamplingPlan& plan,
                                double floor = 1e-8);

// --- sketch operators -------------------------------------------------------

struct RowSamplingOp {
  RowSample sample;
  bool debiased = false;  // apply base * debias weights when true
  Index n = 0;
};

/// Composite S H D / sqrt(N) with uniform selection rescaled by sqrt(N/m).
/// Inputs with n <= N rows are zero-padded. Optional per-selected-row debias
/// weights implement the debiased-uniform-after-HD variant.
struct SrhtOp {
  Vector sign_diag;             // length N, entries +-1
  std::vector<Index> indices;   // m uniform indices in [0, N)
  Index padded_dim = 0;         // N, a power of two
  Index n = 0;                  // accepted input row count (n <= N)
  std::optional<Vector> debias_weights;
};

struct GaussianOp {
  Matrix s;  // m x n, i.i.d. N(0, 1/m)
};

struct SparseSignOp {
  std::vector<std::vector<Index>> positions;  // per row, s distinct columns
  std::vector<std::vector<double>> signs;     // matching +-1 signs
  Index n = 0;
  double value = 0.0;  // sqrt(n / (m*s)) so that E[S^T S] = I
};

struct SketchOperator {
  std::variant<RowSamplingOp, SrhtOp, GaussianOp, SparseSignOp> op;

  Index input_dim() const;
  Index output_dim() const;
  std::string describe() const;
};

SketchOperator row_sampling_operator(RowSample sample, Index n,
                                     bool debiased = false);
/// Deterministic sample hitting each of the n rows exactly once with weight 1.
SketchOperator full_sample_operator(Index n);
SketchOperator srht_operator(Index n, Index m, Rng& rng);
/// SRHT with debias weights computed from the leverage scores of
/// H_N D_N X_pad / sqrt(N); `basis` is an orthonormal column basis of X.
SketchOperator srht_debiased_operator(const Matrix& basis, Index m, Rng& rng,
                                      double floor = 1e-8);
SketchOperator gaussian_operator(Index n, Index m, Rng& rng);
SketchOperator sparse_sign_operator(Index n, Index m, Index s, Rng& rng);

/// Copy of `op` with any debias stage removed (the conditioning event is
/// defined on the plain sketch).
SketchOperator base_operator(const SketchOperator& op);

Matrix apply_sketch(const SketchOperator& op, const Matrix& m);

/// S^T z for an m x cols input z; output has input_dim rows (padded_dim for
/// SRHT operators).
Matrix apply_sketch_transpose(const SketchOperator& op, const Matrix& z);

/// In-place unnormalized Walsh-Hadamard transform, length a power of two.
void fwht_inplace(std::span<double> v);
void fwht_inplace(Vector& v);
/// Applies the transform to every column.
void fwht_columns_inplace(Matrix& m);

inline Index next_pow2(Index n) {
  Index p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// True iff all eigenvalues of (S U)^T (S U) lie in [(1+eps)^-1, 1+eps].
bool subspace_embedding_check(const Matrix& basis, const SketchOperator& op,
                              double eps);

}  // namespace oblique

#endif  // OBLIQUE_SKETCHING_HPP
