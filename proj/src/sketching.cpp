#include "oblique/sketching.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <deque>

namespace oblique {

namespace {

void fill_theta(SamplingPlan& plan) {
  double tmin = std::numeric_limits<double>::infinity();
  double tmax = 0.0;
  bool any = false;
  const double rank = static_cast<double>(plan.rank);
  for (Index i = 0; i < plan.leverage.size(); ++i) {
    const double l = plan.leverage(i);
    if (l <= 0.0) continue;
    any = true;
    const double pi = plan.probabilities(i);
    const double theta = pi > 0.0 ? l / (pi * rank)
                                  : std::numeric_limits<double>::infinity();
    tmin = std::min(tmin, theta);
    tmax = std::max(tmax, theta);
  }
  if (!any) {
    tmin = tmax = 1.0;
  }
  plan.theta_min = tmin;
  plan.theta_max = tmax;
}

}  // namespace

SamplingPlan build_distribution(const Matrix& x, PlanKind kind,
                                double lambda) {
  require_finite(x, "build_distribution: X");
  const Index n = x.rows();
  const ThinFactorization f = thin_factorize(x);

  SamplingPlan plan;
  plan.kind = kind;
  plan.leverage = leverage_scores(f);
  plan.rank = f.numeric_rank;

  const double lev_sum = plan.leverage.sum();
  switch (kind) {
    case PlanKind::Uniform:
      plan.probabilities = Vector::Constant(n, 1.0 / static_cast<double>(n));
      break;
    case PlanKind::RowNorm: {
      Vector sq = x.rowwise().squaredNorm();
      const double total = sq.sum();
      if (total <= 0.0) {
        throw AllZeroRowsError("build_distribution: ||X||_F = 0");
      }
      plan.probabilities = sq / total;
      break;
    }
    case PlanKind::ExactLeverage:
      plan.probabilities = plan.leverage / lev_sum;
      break;
    case PlanKind::Shrinkage: {
      if (lambda < 0.0 || lambda > 1.0) {
        throw InvalidConfigError("shrinkage lambda must be in [0, 1]");
      }
      plan.shrink_lambda = lambda;
      plan.probabilities =
          lambda * (plan.leverage / lev_sum) +
          Vector::Constant(n, (1.0 - lambda) / static_cast<double>(n));
      break;
    }
    case PlanKind::Custom:
      throw InvalidConfigError(
          "build_distribution: use custom_plan for custom probabilities");
  }
  plan.probabilities /= plan.probabilities.sum();
  fill_theta(plan);
  return plan;
}

SamplingPlan custom_plan(const Matrix& x, const Vector& probabilities) {
  require_finite(x, "custom_plan: X");
  require_shape(probabilities.size() == x.rows(),
                "custom_plan: probabilities length must equal rows(X)");
  if (probabilities.minCoeff() < 0.0) {
    throw InvalidConfigError("custom_plan: negative probability");
  }
  const double total = probabilities.sum();
  if (total <= 0.0) {
    throw InvalidConfigError("custom_plan: probabilities sum to zero");
  }
  const ThinFactorization f = thin_factorize(x);
  SamplingPlan plan;
  plan.kind = PlanKind::Custom;
  plan.probabilities = probabilities / total;
  plan.leverage = leverage_scores(f);
  plan.rank = f.numeric_rank;
  fill_theta(plan);
  return plan;
}

AliasTable::AliasTable(const Vector& probabilities) {
  const Index n = probabilities.size();
  threshold_.assign(static_cast<size_t>(n), 0.0);
  alias_.assign(static_cast<size_t>(n), -1);

  std::deque<Index> small, large;
  const double nd = static_cast<double>(n);
  for (Index i = 0; i < n; ++i) {
    threshold_[static_cast<size_t>(i)] = nd * probabilities(i);
    if (threshold_[static_cast<size_t>(i)] < 1.0) {
      small.push_back(i);
    } else {
      large.push_back(i);
    }
  }
  while (!small.empty() && !large.empty()) {
    const Index s = small.front();
    const Index l = large.front();
    small.pop_front();
    large.pop_front();
    alias_[static_cast<size_t>(s)] = l;
    threshold_[static_cast<size_t>(l)] -=
        1.0 - threshold_[static_cast<size_t>(s)];
    if (threshold_[static_cast<size_t>(l)] < 1.0) {
      small.push_back(l);
    } else {
      large.push_back(l);
    }
  }
  // Leftovers are within rounding of 1; saturate so they always accept.
  for (Index i : small) threshold_[static_cast<size_t>(i)] = 1.0;
  for (Index i : large) threshold_[static_cast<size_t>(i)] = 1.0;
}

Index AliasTable::sample(Rng& rng) const {
  const Index cell = static_cast<Index>(
      rng.next_below(static_cast<std::uint64_t>(threshold_.size())));
  const double u = rng.next_double();
  if (u < threshold_[static_cast<size_t>(cell)]) return cell;
  return alias_[static_cast<size_t>(cell)];
}

RowSample draw_sample(const AliasTable& table, const SamplingPlan& plan,
                      Index m, Rng& rng) {
  RowSample s;
  s.indices.resize(static_cast<size_t>(m));
  s.base_weights.resize(m);
  const double md = static_cast<double>(m);
  for (Index t = 0; t < m; ++t) {
    const Index i = table.sample(rng);
    s.indices[static_cast<size_t>(t)] = i;
    s.base_weights(t) = 1.0 / std::sqrt(md * plan.probabilities(i));
  }
  return s;
}

RowSample draw_sample(const SamplingPlan& plan, Index m, Rng& rng) {
  AliasTable table(plan.probabilities);
  return draw_sample(table, plan, m, rng);
}

RowSample attach_debias_weights(RowSample sample, const SamplingPlan& plan,
                                double floor) {
  const auto m = static_cast<double>(sample.indices.size());
  Vector w(static_cast<Index>(sample.indices.size()));
  for (size_t s = 0; s < sample.indices.size(); ++s) {
    const Index i = sample.indices[s];
    const double l = plan.leverage(i);
    if (l <= 0.0) {
      w(static_cast<Index>(s)) = 1.0;
      continue;
    }
    const double t = 1.0 - l / (m * plan.probabilities(i));
    if (!(t > floor)) {
      throw DebiasUndefinedError(
          "attach_debias_weights: 1 - l_i/(m pi_i) <= floor at row " +
          std::to_string(i) + " (m too small relative to theta_max * p)");
    }
    w(static_cast<Index>(s)) = 1.0 / std::sqrt(t);
  }
  sample.debias_weights = std::move(w);
  return sample;
}

// --- operators ---------------------------------------------------------------

Index SketchOperator::input_dim() const {
  return std::visit(
      [](const auto& v) -> Index {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, GaussianOp>) {
          return v.s.cols();
        } else {
          return v.n;
        }
      },
      op);
}

Index SketchOperator::output_dim() const {
  return std::visit(
      [](const auto& v) -> Index {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, RowSamplingOp>) {
          return static_cast<Index>(v.sample.indices.size());
        } else if constexpr (std::is_same_v<T, SrhtOp>) {
          return static_cast<Index>(v.indices.size());
        } else if constexpr (std::is_same_v<T, GaussianOp>) {
          return v.s.rows();
        } else {
          return static_cast<Index>(v.positions.size());
        }
      },
      op);
}

std::string SketchOperator::describe() const {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, RowSamplingOp>) {
          return v.debiased ? "row_sampling_debiased" : "row_sampling";
        } else if constexpr (std::is_same_v<T, SrhtOp>) {
          return v.debias_weights ? "dsrht" : "srht";
        } else if constexpr (std::is_same_v<T, GaussianOp>) {
          return "gaussian";
        } else {
          return "sparse_sign";
        }
      },
      op);
}

SketchOperator row_sampling_operator(RowSample sample, Index n,
                                     bool debiased) {
  if (debiased && !sample.debias_weights) {
    throw DebiasUndefinedError(
        "row_sampling_operator: debiased flag without debias weights");
  }
  return SketchOperator{RowSamplingOp{std::move(sample), debiased, n}};
}

SketchOperator full_sample_operator(Index n) {
  RowSample s;
  s.indices.resize(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i) s.indices[static_cast<size_t>(i)] = i;
  s.base_weights = Vector::Ones(n);
  return SketchOperator{RowSamplingOp{std::move(s), false, n}};
}

SketchOperator srht_operator(Index n, Index m, Rng& rng) {
  SrhtOp op;
  op.n = n;
  op.padded_dim = next_pow2(n);
  op.sign_diag.resize(op.padded_dim);
  for (Index i = 0; i < op.padded_dim; ++i) op.sign_diag(i) = rng.next_sign();
  op.indices.resize(static_cast<size_t>(m));
  for (Index s = 0; s < m; ++s) {
    op.indices[static_cast<size_t>(s)] = static_cast<Index>(
        rng.next_below(static_cast<std::uint64_t>(op.padded_dim)));
  }
  return SketchOperator{std::move(op)};
}

SketchOperator srht_debiased_operator(const Matrix& basis, Index m, Rng& rng,
                                      double floor) {
  SketchOperator sk = srht_operator(basis.rows(), m, rng);
  auto& op = std::get<SrhtOp>(sk.op);
  const Index big_n = op.padded_dim;

  // H D / sqrt(N) is orthogonal, so it maps the basis of X to a basis of
  // H_N D_N X_pad / sqrt(N); its row norms are the transformed leverage
  // scores. Uniform pi = 1/N turns Eq.-style weights into 1/sqrt(1 - N l/m).
  Matrix u_hd = Matrix::Zero(big_n, basis.cols());
  u_hd.topRows(basis.rows()) =
      op.sign_diag.head(basis.rows()).asDiagonal() * basis;
  fwht_columns_inplace(u_hd);
  u_hd /= std::sqrt(static_cast<double>(big_n));
  const Vector lev_hd = u_hd.rowwise().squaredNorm();

  Vector w(static_cast<Index>(op.indices.size()));
  const double md = static_cast<double>(m);
  for (size_t s = 0; s < op.indices.size(); ++s) {
    const double l = lev_hd(op.indices[s]);
    const double t = 1.0 - l * static_cast<double>(big_n) / md;
    if (!(t > floor)) {
      throw DebiasUndefinedError(
          "srht_debiased_operator: 1 - N l_i / m <= floor at padded row " +
          std::to_string(op.indices[s]));
    }
    w(static_cast<Index>(s)) = 1.0 / std::sqrt(t);
  }
  op.debias_weights = std::move(w);
  return sk;
}

SketchOperator gaussian_operator(Index n, Index m, Rng& rng) {
  GaussianOp op;
  op.s.resize(m, n);
  const double sd = 1.0 / std::sqrt(static_cast<double>(m));
  // Row-major fill order: the stream is a function of (seed, m, n) only.
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < n; ++j) op.s(i, j) = sd * rng.next_gaussian();
  }
  return SketchOperator{std::move(op)};
}

SketchOperator sparse_sign_operator(Index n, Index m, Index s, Rng& rng) {
  if (s < 1 || s > n) {
    throw InvalidSparsityError("sparse_sign_operator: need 1 <= s <= n");
  }
  SparseSignOp op;
  op.n = n;
  op.value = std::sqrt(static_cast<double>(n) /
                       (static_cast<double>(m) * static_cast<double>(s)));
  op.positions.resize(static_cast<size_t>(m));
  op.signs.resize(static_cast<size_t>(m));
  std::vector<Index> pool(static_cast<size_t>(n));
  for (Index r = 0; r < m; ++r) {
    // partial Fisher-Yates: first s entries become the distinct positions
    for (Index i = 0; i < n; ++i) pool[static_cast<size_t>(i)] = i;
    auto& pos = op.positions[static_cast<size_t>(r)];
    auto& sgn = op.signs[static_cast<size_t>(r)];
    pos.resize(static_cast<size_t>(s));
    sgn.resize(static_cast<size_t>(s));
    for (Index i = 0; i < s; ++i) {
      const Index j =
          i + static_cast<Index>(rng.next_below(
                  static_cast<std::uint64_t>(n - i)));
      std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
      pos[static_cast<size_t>(i)] = pool[static_cast<size_t>(i)];
      sgn[static_cast<size_t>(i)] = rng.next_sign();
    }
  }
  return SketchOperator{std::move(op)};
}

SketchOperator base_operator(const SketchOperator& op) {
  SketchOperator out = op;
  std::visit(
      [](auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, RowSamplingOp>) {
          v.debiased = false;
        } else if constexpr (std::is_same_v<T, SrhtOp>) {
          v.debias_weights.reset();
        }
      },
      out.op);
  return out;
}

void fwht_inplace(std::span<double> v) {
  const size_t n = v.size();
  if (n == 0 || (n & (n - 1)) != 0) {
    throw NotPowerOfTwoError("fwht_inplace: length must be a power of two");
  }
  for (size_t h = 1; h < n; h <<= 1) {
    for (size_t i = 0; i < n; i += 2 * h) {
      for (size_t j = i; j < i + h; ++j) {
        const double a = v[j];
        const double b = v[j + h];
        v[j] = a + b;
        v[j + h] = a - b;
      }
    }
  }
}

void fwht_inplace(Vector& v) {
  fwht_inplace(std::span<double>(v.data(), static_cast<size_t>(v.size())));
}

void fwht_columns_inplace(Matrix& m) {
  for (Index j = 0; j < m.cols(); ++j) {
    fwht_inplace(
        std::span<double>(m.col(j).data(), static_cast<size_t>(m.rows())));
  }
}

namespace {

Matrix apply_row_sampling(const RowSamplingOp& op, const Matrix& m) {
  require_shape(m.rows() == op.n, "apply_sketch: row count mismatch");
  const Index out_rows = static_cast<Index>(op.sample.indices.size());
  Matrix out(out_rows, m.cols());
  for (Index s = 0; s < out_rows; ++s) {
    double w = op.sample.base_weights(s);
    if (op.debiased) w *= (*op.sample.debias_weights)(s);
    out.row(s) = w * m.row(op.sample.indices[static_cast<size_t>(s)]);
  }
  return out;
}

Matrix apply_srht(const SrhtOp& op, const Matrix& m) {
  require_shape(m.rows() == op.n || m.rows() == op.padded_dim,
                "apply_sketch: row count mismatch (srht)");
  const Index big_n = op.padded_dim;
  const Index out_rows = static_cast<Index>(op.indices.size());
  const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(big_n));
  const double sel =
      std::sqrt(static_cast<double>(big_n) / static_cast<double>(out_rows));

  Matrix out(out_rows, m.cols());
  Vector buf(big_n);
  for (Index j = 0; j < m.cols(); ++j) {
    buf.setZero();
    buf.head(m.rows()) =
        op.sign_diag.head(m.rows()).cwiseProduct(m.col(j));
    fwht_inplace(buf);
    for (Index s = 0; s < out_rows; ++s) {
      double w = sel;
      if (op.debias_weights) w *= (*op.debias_weights)(s);
      out(s, j) = w * inv_sqrt_n * buf(op.indices[static_cast<size_t>(s)]);
    }
  }
  return out;
}

Matrix apply_sparse_sign(const SparseSignOp& op, const Matrix& m) {
  require_shape(m.rows() == op.n, "apply_sketch: row count mismatch");
  const Index out_rows = static_cast<Index>(op.positions.size());
  Matrix out = Matrix::Zero(out_rows, m.cols());
  for (Index r = 0; r < out_rows; ++r) {
    const auto& pos = op.positions[static_cast<size_t>(r)];
    const auto& sgn = op.signs[static_cast<size_t>(r)];
    for (size_t k = 0; k < pos.size(); ++k) {
      out.row(r) += (op.value * sgn[k]) * m.row(pos[k]);
    }
  }
  return out;
}

}  // namespace

Matrix apply_sketch(const SketchOperator& op, const Matrix& m) {
  return std::visit(
      [&](const auto& v) -> Matrix {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, RowSamplingOp>) {
          return apply_row_sampling(v, m);
        } else if constexpr (std::is_same_v<T, SrhtOp>) {
          return apply_srht(v, m);
        } else if constexpr (std::is_same_v<T, GaussianOp>) {
          require_shape(m.rows() == v.s.cols(),
                        "apply_sketch: row count mismatch (gaussian)");
          return v.s * m;
        } else {
          return apply_sparse_sign(v, m);
        }
      },
      op.op);
}

Matrix apply_sketch_transpose(const SketchOperator& op, const Matrix& z) {
  require_shape(z.rows() == op.output_dim(),
                "apply_sketch_transpose: row count mismatch");
  return std::visit(
      [&](const auto& v) -> Matrix {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, RowSamplingOp>) {
          Matrix out = Matrix::Zero(v.n, z.cols());
          for (size_t s = 0; s < v.sample.indices.size(); ++s) {
            double w = v.sample.base_weights(static_cast<Index>(s));
            if (v.debiased) {
              w *= (*v.sample.debias_weights)(static_cast<Index>(s));
            }
            out.row(v.sample.indices[s]) += w * z.row(static_cast<Index>(s));
          }
          return out;
        } else if constexpr (std::is_same_v<T, SrhtOp>) {
          // S = sqrt(N/m) * sel * H D / sqrt(N) and H is symmetric, so
          // S^T z = D H (sel^T z) * sqrt(N/m) / sqrt(N).
          const Index big_n = v.padded_dim;
          const double sel = std::sqrt(static_cast<double>(big_n) /
                                       static_cast<double>(v.indices.size()));
          Matrix buf = Matrix::Zero(big_n, z.cols());
          for (size_t s = 0; s < v.indices.size(); ++s) {
            double w = sel;
            if (v.debias_weights) w *= (*v.debias_weights)(static_cast<Index>(s));
            buf.row(v.indices[s]) += w * z.row(static_cast<Index>(s));
          }
          fwht_columns_inplace(buf);
          buf = v.sign_diag.asDiagonal() * buf;
          buf /= std::sqrt(static_cast<double>(big_n));
          return buf;
        } else if constexpr (std::is_same_v<T, GaussianOp>) {
          return v.s.transpose() * z;
        } else {
          Matrix out = Matrix::Zero(v.n, z.cols());
          for (size_t r = 0; r < v.positions.size(); ++r) {
            const auto& pos = v.positions[r];
            const auto& sgn = v.signs[r];
            for (size_t k = 0; k < pos.size(); ++k) {
              out.row(pos[k]) +=
                  (v.value * sgn[k]) * z.row(static_cast<Index>(r));
            }
          }
          return out;
        }
      },
      op.op);
}

bool subspace_embedding_check(const Matrix& basis, const SketchOperator& op,
                              double eps) {
  if (eps <= 0.0) {
    throw InvalidConfigError("subspace_embedding_check: eps must be > 0");
  }
  const Matrix su = apply_sketch(op, basis);
  require_shape(su.cols() == basis.cols(), "subspace_embedding_check: shape");
  const Matrix gram = su.transpose() * su;
  Eigen::SelfAdjointEigenSolver<Matrix> es(gram,
                                           Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  return lo >= 1.0 / (1.0 + eps) && hi <= 1.0 + eps;
}

}  // namespace oblique
