#include "oblique/oracle.hpp"

#include <cmath>

#include "oblique/matcore.hpp"

namespace oblique {

namespace {

// Neumaier compensated accumulator; keeps sums independent of the tuple
// iteration order up to ~1 ulp.
struct Kahan {
  double sum = 0.0;
  double comp = 0.0;
  void add(double v) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v)) {
      comp += (sum - t) + v;
    } else {
      comp += (v - t) + sum;
    }
    sum = t;
  }
  double value() const { return sum + comp; }
};

struct KahanVec {
  std::vector<Kahan> cells;
  explicit KahanVec(Index n) : cells(static_cast<size_t>(n)) {}
  void add(const Vector& v, double w) {
    for (Index i = 0; i < v.size(); ++i) {
      cells[static_cast<size_t>(i)].add(w * v(i));
    }
  }
  Vector value() const {
    Vector out(static_cast<Index>(cells.size()));
    for (size_t i = 0; i < cells.size(); ++i) out(static_cast<Index>(i)) = cells[i].value();
    return out;
  }
};

struct Support {
  std::vector<Index> rows;          // rows with pi > 0
  std::vector<double> prob;         // their probabilities
  std::vector<double> weight;       // 1/sqrt(m pi), optionally * debias
  std::uint64_t tuples = 0;
};

Support build_support(const SamplingPlan& plan, Index m, bool debiased,
                      const EnumerationBudget& budget) {
  Support s;
  const double md = static_cast<double>(m);
  for (Index i = 0; i < plan.probabilities.size(); ++i) {
    const double pi = plan.probabilities(i);
    if (pi <= 0.0) continue;
    s.rows.push_back(i);
    s.prob.push_back(pi);
    double w = 1.0 / std::sqrt(md * pi);
    if (debiased) {
      const double l = plan.leverage(i);
      if (l > 0.0) {
        const double t = 1.0 - l / (md * pi);
        if (!(t > 1e-8)) {
          throw DebiasUndefinedError(
              "enumerate: debias weight undefined at row " + std::to_string(i));
        }
        w /= std::sqrt(t);
      }
    }
    s.weight.push_back(w);
  }
  // support^m against the budget, with overflow care
  double count = 1.0;
  for (Index k = 0; k < m; ++k) count *= static_cast<double>(s.rows.size());
  if (count > static_cast<double>(budget.max_tuples)) {
    throw BudgetExceededError(
        "enumerate: support^m = " + std::to_string(count) +
        " exceeds the tuple budget " + std::to_string(budget.max_tuples));
  }
  s.tuples = static_cast<std::uint64_t>(count);
  return s;
}

// Calls fn(tuple) for every ordered tuple in support^m (odometer order).
template <typename Fn>
void for_each_tuple(size_t support_size, Index m, Fn&& fn) {
  std::vector<size_t> digits(static_cast<size_t>(m), 0);
  for (;;) {
    fn(digits);
    Index pos = m - 1;
    while (pos >= 0) {
      if (++digits[static_cast<size_t>(pos)] < support_size) break;
      digits[static_cast<size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) return;
  }
}

}  // namespace

BetaEnumeration enumerate_expectation_beta(const Matrix& x, const Matrix& y,
                                           const SamplingPlan& plan, Index m,
                                           bool debiased,
                                           const EnumerationBudget& budget,
                                           const TupleAcceptFn& accept) {
  require_shape(y.rows() == x.rows() && y.cols() == 1,
                "enumerate_expectation_beta: y must be n x 1");
  const Support sup = build_support(plan, m, debiased, budget);
  const Index p = x.cols();

  const Vector beta_ols = pseudoinverse(x) * y;
  const double loss_ref = loss_ols(x, y, beta_ols);

  KahanVec beta_acc(p);
  Kahan loss_acc;
  Kahan weight_acc;
  Kahan accepted_acc;

  Matrix xs(m, p);
  Vector ys(m);
  std::vector<Index> rows(static_cast<size_t>(m));
  for_each_tuple(sup.rows.size(), m, [&](const std::vector<size_t>& digits) {
    double w = 1.0;
    for (Index s = 0; s < m; ++s) {
      const size_t d = digits[static_cast<size_t>(s)];
      rows[static_cast<size_t>(s)] = sup.rows[d];
      w *= sup.prob[d];
    }
    weight_acc.add(w);
    if (accept && !accept(rows)) return;
    for (Index s = 0; s < m; ++s) {
      const size_t d = digits[static_cast<size_t>(s)];
      xs.row(s) = sup.weight[d] * x.row(sup.rows[d]);
      ys(s) = sup.weight[d] * y(sup.rows[d], 0);
    }
    const Vector beta = pseudoinverse(xs) * ys;
    beta_acc.add(beta, w);
    loss_acc.add(w * loss_ols(x, y, beta));
    accepted_acc.add(w);
  });

  BetaEnumeration out;
  out.weight_sum = weight_acc.value();
  out.accepted_weight = accepted_acc.value();
  if (out.accepted_weight <= 0.0) {
    throw AllTrialsRejectedError(
        "enumerate_expectation_beta: the acceptance rule excludes every tuple");
  }
  out.expected_beta = beta_acc.value() / out.accepted_weight;
  out.exact_bias = loss_ols(x, y, out.expected_beta) - loss_ref;
  out.exact_variance = loss_acc.value() / out.accepted_weight - loss_ref;
  out.tuples = sup.tuples;
  return out;
}

ProjectionEnumeration enumerate_expectation_projection(
    const Matrix& x, const SamplingPlan& plan, Index m, bool debiased,
    const EnumerationBudget& budget, const TupleAcceptFn& accept) {
  const Support sup = build_support(plan, m, debiased, budget);
  const Index n = x.rows();
  const Index p = x.cols();

  const Matrix proj = orthogonal_projection(x).first;

  std::vector<Kahan> p_acc(static_cast<size_t>(n * n));
  Kahan dist_acc;
  Kahan weight_acc;
  Kahan accepted_acc;

  Matrix xs(m, p);
  Matrix s_dense(m, n);
  std::vector<Index> rows(static_cast<size_t>(m));
  for_each_tuple(sup.rows.size(), m, [&](const std::vector<size_t>& digits) {
    double w = 1.0;
    for (Index s = 0; s < m; ++s) {
      const size_t d = digits[static_cast<size_t>(s)];
      rows[static_cast<size_t>(s)] = sup.rows[d];
      w *= sup.prob[d];
    }
    weight_acc.add(w);
    if (accept && !accept(rows)) return;
    s_dense.setZero();
    for (Index s = 0; s < m; ++s) {
      const size_t d = digits[static_cast<size_t>(s)];
      xs.row(s) = sup.weight[d] * x.row(sup.rows[d]);
      s_dense(s, sup.rows[d]) = sup.weight[d];
    }
    const Matrix pt = x * (pseudoinverse(xs) * s_dense);
    for (Index j = 0; j < n; ++j) {
      for (Index i = 0; i < n; ++i) {
        p_acc[static_cast<size_t>(j * n + i)].add(w * pt(i, j));
      }
    }
    dist_acc.add(w * (pt - proj).squaredNorm());
    accepted_acc.add(w);
  });

  ProjectionEnumeration out;
  out.weight_sum = weight_acc.value();
  out.accepted_weight = accepted_acc.value();
  if (out.accepted_weight <= 0.0) {
    throw AllTrialsRejectedError(
        "enumerate_expectation_projection: the acceptance rule excludes every "
        "tuple");
  }
  out.expected_projection.resize(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) {
      out.expected_projection(i, j) =
          p_acc[static_cast<size_t>(j * n + i)].value() / out.accepted_weight;
    }
  }
  out.bias_F2 = (out.expected_projection - proj).squaredNorm();
  out.second_moment = dist_acc.value() / out.accepted_weight;
  out.tuples = sup.tuples;
  return out;
}

}  // namespace oblique
