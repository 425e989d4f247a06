#include <doctest.h>

#include <cmath>

#include "oblique/matcore.hpp"
#include "oblique/metrics.hpp"
#include "oblique/oracle.hpp"
#include "test_util.hpp"

using namespace oblique;
using testutil::block_instance;
using testutil::random_matrix;

TEST_CASE("oracle: all-ones instance enumerates to zero bias") {
  const Matrix x = Matrix::Ones(3, 1);
  Matrix y(3, 1);
  y << 1.0, 2.0, 4.0;
  const SamplingPlan plan = build_distribution(x, PlanKind::Uniform);
  const BetaEnumeration e = enumerate_expectation_beta(x, y, plan, 2, false);
  CHECK(e.tuples == 9);
  CHECK(std::abs(e.weight_sum - 1.0) < 1e-12);
  const double ybar = (1.0 + 2.0 + 4.0) / 3.0;
  CHECK(e.expected_beta(0) == doctest::Approx(ybar).epsilon(1e-12));
  CHECK(std::abs(e.exact_bias) < 1e-12);

  // independent 9-term hand enumeration of the variance
  const Vector beta_ols = ols_exact(x, y).beta;
  const double loss_ref = loss_ols(x, y, beta_ols);
  double var_hand = 0.0;
  for (Index i = 0; i < 3; ++i) {
    for (Index j = 0; j < 3; ++j) {
      const double b = 0.5 * (y(i, 0) + y(j, 0));  // equal weights cancel
      Matrix bm(1, 1);
      bm << b;
      var_hand += (1.0 / 9.0) * (loss_ols(x, y, bm) - loss_ref);
    }
  }
  CHECK(e.exact_variance == doctest::Approx(var_hand).epsilon(1e-12));
}

TEST_CASE("oracle: degenerate distribution yields the single-row solution") {
  Rng rng(3);
  const Matrix x = random_matrix(rng, 3, 2);
  const Matrix y = random_matrix(rng, 3, 1);
  Vector pi(3);
  pi << 1, 0, 0;
  const SamplingPlan plan = custom_plan(x, pi);
  const BetaEnumeration e = enumerate_expectation_beta(x, y, plan, 3, false);
  CHECK(e.tuples == 1);
  const Vector minnorm = pseudoinverse(x.row(0)) * y.row(0);
  CHECK((e.expected_beta - minnorm).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("oracle: block instance k=1, m=6 shows the coordinate shifts") {
  const auto inst = block_instance(1, 8);
  Vector pi = Vector::Constant(8, 1.0 / 8.0);
  const SamplingPlan plan = custom_plan(inst.x, pi);
  const BetaEnumeration e =
      enumerate_expectation_beta(inst.x, inst.y, plan, 6, false);
  CHECK(e.tuples == 262144);  // 8^6
  CHECK(std::abs(e.weight_sum - 1.0) < 1e-12);
  CHECK(e.accepted_weight == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(e.exact_bias > 0.0);

  // unconditionally the minimum-norm zeros of uncovered pairs pull both
  // coordinates down; the full sign pattern needs the pair-cover event
  const double beta1 = std::sqrt(3.0) / 2.0 - 0.5;
  CHECK(e.expected_beta(0) < beta1);
  CHECK(e.expected_beta(0) == doctest::Approx(-0.135984).epsilon(1e-4));
  CHECK(e.expected_beta(3) == doctest::Approx(1.23996).epsilon(1e-4));
}

TEST_CASE("oracle: budget is enforced") {
  const Matrix x = Matrix::Ones(12, 1);
  Matrix y = Matrix::Ones(12, 1);
  const SamplingPlan plan = build_distribution(x, PlanKind::Uniform);
  EnumerationBudget tiny;
  tiny.max_tuples = 100;
  CHECK_THROWS_AS(enumerate_expectation_beta(x, y, plan, 4, false, tiny),
                  BudgetExceededError);
}

TEST_CASE("oracle: row permutation leaves the expectation unchanged") {
  Rng rng(5);
  const Matrix x = random_matrix(rng, 4, 2);
  const Matrix y = random_matrix(rng, 4, 1);
  Vector pi(4);
  pi << 0.4, 0.3, 0.2, 0.1;
  const SamplingPlan plan = custom_plan(x, pi);
  const BetaEnumeration a = enumerate_expectation_beta(x, y, plan, 3, false);

  // permute the rows (and matching probabilities); the sampling model and
  // hence E[beta] are unchanged, only the tuple iteration order differs
  std::vector<Index> perm = {2, 0, 3, 1};
  Matrix xp(4, 2);
  Matrix yp(4, 1);
  Vector pip(4);
  for (Index i = 0; i < 4; ++i) {
    xp.row(i) = x.row(perm[static_cast<size_t>(i)]);
    yp.row(i) = y.row(perm[static_cast<size_t>(i)]);
    pip(i) = pi(perm[static_cast<size_t>(i)]);
  }
  const SamplingPlan plan_p = custom_plan(xp, pip);
  const BetaEnumeration b = enumerate_expectation_beta(xp, yp, plan_p, 3, false);
  CHECK((a.expected_beta - b.expected_beta).cwiseAbs().maxCoeff() < 1e-13);
  CHECK(a.exact_variance == doctest::Approx(b.exact_variance).epsilon(1e-13));
}

TEST_CASE("oracle: debiased enumeration matches classical under exact leverage") {
  Rng rng(7);
  const Matrix x = random_matrix(rng, 5, 2);
  const Matrix y = random_matrix(rng, 5, 1);
  const SamplingPlan plan = build_distribution(x, PlanKind::ExactLeverage);
  const BetaEnumeration cls = enumerate_expectation_beta(x, y, plan, 4, false);
  const BetaEnumeration deb = enumerate_expectation_beta(x, y, plan, 4, true);
  CHECK((cls.expected_beta - deb.expected_beta).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(cls.exact_bias == doctest::Approx(deb.exact_bias).epsilon(1e-8));
}

TEST_CASE("oracle: conditional enumeration reproduces the pair-cover law") {
  // Conditioned on every column pair being hit, the k=1, m=6 instance shows
  // the coordinate shifts in both directions. Values frozen from an
  // independent direct enumeration (below); the cover probability is the
  // exact inclusion-exclusion value 1 - 4(3/4)^6 + 6(1/2)^6 - 4(1/4)^6.
  const auto inst = block_instance(1, 8);
  Vector pi = Vector::Constant(8, 1.0 / 8.0);
  const SamplingPlan plan = custom_plan(inst.x, pi);
  auto covers_all_pairs = [](const std::vector<Index>& rows) {
    bool hit[4] = {false, false, false, false};
    for (Index r : rows) hit[r / 2] = true;
    return hit[0] && hit[1] && hit[2] && hit[3];
  };
  const BetaEnumeration cond = enumerate_expectation_beta(
      inst.x, inst.y, plan, 6, false, {}, covers_all_pairs);
  CHECK(cond.accepted_weight == doctest::Approx(0.380859375).epsilon(1e-12));
  CHECK(std::abs(cond.weight_sum - 1.0) < 1e-12);

  // independent oracle: direct loop over all 8^6 tuples
  Vector num = Vector::Zero(4);
  double den = 0.0;
  std::vector<Index> digits(6, 0);
  for (;;) {
    bool hit[4] = {false, false, false, false};
    for (Index r : digits) hit[r / 2] = true;
    if (hit[0] && hit[1] && hit[2] && hit[3]) {
      Matrix xs(6, 4);
      Vector ys(6);
      const double w = 1.0 / std::sqrt(6.0 / 8.0);  // 1/sqrt(m pi)
      for (Index t = 0; t < 6; ++t) {
        xs.row(t) = w * inst.x.row(digits[static_cast<size_t>(t)]);
        ys(t) = w * inst.y(digits[static_cast<size_t>(t)], 0);
      }
      num += pseudoinverse(xs) * ys;
      den += 1.0;
    }
    Index pos = 5;
    while (pos >= 0) {
      if (++digits[static_cast<size_t>(pos)] < 8) break;
      digits[static_cast<size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) break;
  }
  const Vector hand = num / den;
  CHECK((cond.expected_beta - hand).cwiseAbs().maxCoeff() < 1e-10);

  // the two-sided coordinate shift shows up conditionally
  const double beta1 = std::sqrt(3.0) / 2.0 - 0.5;
  const double beta4 = std::sqrt(3.0) / 2.0 + 0.5;
  CHECK(cond.expected_beta(0) < beta1);
  CHECK(cond.expected_beta(3) > beta4);
  CHECK(cond.expected_beta(0) == doctest::Approx(-0.2445).epsilon(1e-3));
  CHECK(cond.expected_beta(3) == doctest::Approx(1.5296).epsilon(1e-3));
  CHECK(cond.exact_bias > 0.0);
}

TEST_CASE("oracle: projection enumeration on the all-ones instance") {
  const Matrix x = Matrix::Ones(3, 1);
  const SamplingPlan plan = build_distribution(x, PlanKind::Uniform);
  const ProjectionEnumeration e =
      enumerate_expectation_projection(x, plan, 2, false);
  CHECK(e.tuples == 9);
  CHECK(std::abs(e.weight_sum - 1.0) < 1e-12);

  // independent oracle: average the oblique projections over all 9 tuples
  const Matrix p_exact = orthogonal_projection(x).first;
  Matrix acc = Matrix::Zero(3, 3);
  double dist = 0.0;
  for (Index i = 0; i < 3; ++i) {
    for (Index j = 0; j < 3; ++j) {
      Matrix s = Matrix::Zero(2, 3);
      const double w = 1.0 / std::sqrt(2.0 / 3.0);  // 1/sqrt(m pi)
      s(0, i) += w;
      s(1, j) += w;
      const Matrix pt = x * (pseudoinverse(s * x) * s);
      acc += pt / 9.0;
      dist += (pt - p_exact).squaredNorm() / 9.0;
    }
  }
  CHECK((e.expected_projection - acc).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(e.second_moment == doctest::Approx(dist).epsilon(1e-12));
  CHECK(e.bias_F2 == doctest::Approx((acc - p_exact).squaredNorm()).epsilon(1e-10));
}

TEST_CASE("oracle: projection enumeration agrees with Monte Carlo") {
  const Matrix x = Matrix::Ones(3, 1);
  const SamplingPlan plan = build_distribution(x, PlanKind::Uniform);
  const ProjectionEnumeration e =
      enumerate_expectation_projection(x, plan, 2, false);

  SketchSpec spec;
  spec.family = SketchSpec::Family::RowSampling;
  spec.plan = plan;
  ZetaPolicy zeta;
  zeta.enabled = false;
  const ProjectionMoments pm = projection_moments(x, spec, 2, 40000, zeta, 13);
  // second moment is an average of a bounded per-trial quantity
  CHECK(pm.second_moment == doctest::Approx(e.second_moment).epsilon(0.05));
}

TEST_CASE("oracle: debiased projection enumeration under exact leverage") {
  Rng rng(11);
  const Matrix x = random_matrix(rng, 4, 2);
  const SamplingPlan plan = build_distribution(x, PlanKind::ExactLeverage);
  const ProjectionEnumeration cls =
      enumerate_expectation_projection(x, plan, 3, false);
  const ProjectionEnumeration deb =
      enumerate_expectation_projection(x, plan, 3, true);
  CHECK((cls.expected_projection - deb.expected_projection)
            .cwiseAbs()
            .maxCoeff() < 1e-10);
}

TEST_CASE("oracle: monte carlo converges to the enumerated values") {
  const Matrix x = Matrix::Ones(3, 1);
  Matrix y(3, 1);
  y << 1.0, 2.0, 4.0;
  const SamplingPlan plan = build_distribution(x, PlanKind::Uniform);
  const BetaEnumeration e = enumerate_expectation_beta(x, y, plan, 2, false);

  SketchSpec spec;
  spec.family = SketchSpec::Family::RowSampling;
  spec.plan = plan;
  OlsMcSpec ols{x, y, spec, 2};
  ZetaPolicy zeta;
  zeta.enabled = false;
  const TrialStats st = monte_carlo_bias_variance(ols, 200000, zeta, 17);
  CHECK(std::abs(st.bias - e.exact_bias) < 4.0 * st.bias_stderr + 1e-9);
  CHECK(std::abs(st.variance - e.exact_variance) <
        4.0 * st.variance_stderr);
}
