#ifndef OBLIQUE_ORACLE_HPP
#define OBLIQUE_ORACLE_HPP

#include <cstdint>
#include <functional>
#include <vector>

#include "oblique/sketching.hpp"
#include "oblique/types.hpp"

namespace oblique {

struct EnumerationBudget {
  std::uint64_t max_tuples = 1000000;
};

/// Optional acceptance rule over the drawn row indices of a tuple. When set,
/// expectations are renormalized over the accepted mass (conditional
/// expectation); when empty, the enumeration is unconditional.
using TupleAcceptFn = std::function<bool(const std::vector<Index>&)>;

/// Exact E[beta], bias, and variance by summing over every ordered index
/// tuple in support^m with product weights (the i.i.d.-with-replacement
/// model).
struct BetaEnumeration {
  Vector expected_beta;
  double exact_bias = 0.0;       // L(E[beta]) - L(beta_OLS)
  double exact_variance = 0.0;   // E[L(beta)] - L(beta_OLS)
  double weight_sum = 0.0;       // total tuple mass, == 1 up to roundoff
  double accepted_weight = 0.0;  // mass of accepted tuples
  std::uint64_t tuples = 0;
};

BetaEnumeration enumerate_expectation_beta(const Matrix& x, const Matrix& y,
                                           const SamplingPlan& plan, Index m,
                                           bool debiased,
                                           const EnumerationBudget& budget = {},
                                           const TupleAcceptFn& accept = {});

struct ProjectionEnumeration {
  Matrix expected_projection;  // n x n
  double bias_F2 = 0.0;        // ||E[P~] - P||_F^2
  double second_moment = 0.0;  // E ||P~ - P||_F^2
  double weight_sum = 0.0;
  double accepted_weight = 0.0;
  std::uint64_t tuples = 0;
};

ProjectionEnumeration enumerate_expectation_projection(
    const Matrix& x, const SamplingPlan& plan, Index m, bool debiased,
    const EnumerationBudget& budget = {}, const TupleAcceptFn& accept = {});

}  // namespace oblique

#endif  // OBLIQUE_ORACLE_HPP
