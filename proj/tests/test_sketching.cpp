#include <doctest.h>

#include <cmath>
#include <set>

#include "oblique/matcore.hpp"
#include "oblique/sketching.hpp"
#include "test_util.hpp"

using namespace oblique;
using testutil::block_instance;
using testutil::random_matrix;

namespace {

// explicit Walsh-Hadamard matrix, the oracle for the fast transform
Matrix hadamard(Index n) {
  if (n == 1) return Matrix::Ones(1, 1);
  const Matrix h = hadamard(n / 2);
  Matrix out(n, n);
  out.topLeftCorner(n / 2, n / 2) = h;
  out.topRightCorner(n / 2, n / 2) = h;
  out.bottomLeftCorner(n / 2, n / 2) = h;
  out.bottomRightCorner(n / 2, n / 2) = -h;
  return out;
}

}  // namespace

TEST_CASE("sketching: build_distribution closed forms") {
  const Matrix ones = Matrix::Ones(3, 1);
  const SamplingPlan lev = build_distribution(ones, PlanKind::ExactLeverage);
  for (Index i = 0; i < 3; ++i) {
    CHECK(lev.probabilities(i) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  CHECK(lev.theta_min == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(lev.theta_max == doctest::Approx(1.0).epsilon(1e-10));

  Matrix x(4, 2);
  x << 1, 0, 0, 1, 0, 0, 0, 0;
  const SamplingPlan rn = build_distribution(x, PlanKind::RowNorm);
  CHECK(rn.probabilities(0) == doctest::Approx(0.5));
  CHECK(rn.probabilities(1) == doctest::Approx(0.5));
  CHECK(rn.probabilities(2) == doctest::Approx(0.0));
  CHECK(rn.theta_min == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(rn.theta_max == doctest::Approx(1.0).epsilon(1e-10));

  const SamplingPlan uni = build_distribution(x, PlanKind::Uniform);
  CHECK(uni.probabilities(3) == doctest::Approx(0.25));

  Rng rng(5);
  const Matrix xr = random_matrix(rng, 10, 3);
  const SamplingPlan sh = build_distribution(xr, PlanKind::Shrinkage, 0.5);
  CHECK(sh.probabilities.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sh.theta_min <= 1.0 + 1e-12);
  CHECK(sh.theta_max >= 1.0 - 1e-12);

  CHECK_THROWS_AS(build_distribution(Matrix::Zero(3, 2), PlanKind::RowNorm),
                  AllZeroRowsError);
}

TEST_CASE("sketching: the half-approximation plan straddles theta = 1") {
  const auto inst = block_instance(1, 8);
  Vector pi = Vector::Constant(8, 1.0 / 8.0);
  const SamplingPlan plan = custom_plan(inst.x, pi);
  CHECK(plan.theta_min == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(plan.theta_max == doctest::Approx(1.5).epsilon(1e-10));
}

TEST_CASE("sketching: plan invariants") {
  Rng rng(6);
  const Matrix x = random_matrix(rng, 12, 4);
  for (PlanKind kind : {PlanKind::Uniform, PlanKind::RowNorm,
                        PlanKind::ExactLeverage, PlanKind::Shrinkage}) {
    const SamplingPlan plan = build_distribution(x, kind, 0.7);
    CHECK(std::abs(plan.probabilities.sum() - 1.0) < 1e-12);
    CHECK(plan.probabilities.minCoeff() >= 0.0);
    CHECK(plan.theta_min <= 1.0 + 1e-9);
    CHECK(plan.theta_max >= 1.0 - 1e-9);
  }
  const SamplingPlan lev = build_distribution(x, PlanKind::ExactLeverage);
  for (Index i = 0; i < 12; ++i) {
    CHECK(std::abs(lev.probabilities(i) - lev.leverage(i) / 4.0) < 1e-12);
  }
}

TEST_CASE("sketching: draw_sample degenerate and fixed-weight cases") {
  Matrix x(3, 1);
  x << 2, 1, 1;
  Vector pi(3);
  pi << 1, 0, 0;
  const SamplingPlan plan = custom_plan(x, pi);
  Rng rng(77);
  const RowSample s = draw_sample(plan, 4, rng);
  for (Index i : s.indices) CHECK(i == 0);
  for (Index t = 0; t < 4; ++t) CHECK(s.base_weights(t) == doctest::Approx(0.5));

  const SamplingPlan uni =
      build_distribution(Matrix::Ones(3, 1), PlanKind::Uniform);
  Rng rng2(78);
  const RowSample s2 = draw_sample(uni, 2, rng2);
  for (Index t = 0; t < 2; ++t) {
    CHECK(s2.base_weights(t) == doctest::Approx(std::sqrt(1.5)));
  }

  Rng ra(99), rb(99);
  const RowSample sa = draw_sample(uni, 16, ra);
  const RowSample sb = draw_sample(uni, 16, rb);
  CHECK(sa.indices == sb.indices);
}

TEST_CASE("sketching: empirical draw frequencies match the distribution") {
  Rng rng(123);
  const Matrix x = random_matrix(rng, 4, 2);
  Vector pi(4);
  pi << 0.45, 0.3, 0.2, 0.05;
  const SamplingPlan plan = custom_plan(x, pi);
  const AliasTable table(plan.probabilities);

  const long draws = 1000000;
  std::vector<long> count(4, 0);
  Rng draw_rng(321);
  for (long t = 0; t < draws; ++t) {
    ++count[static_cast<size_t>(table.sample(draw_rng))];
  }
  for (Index i = 0; i < 4; ++i) {
    const double phat =
        static_cast<double>(count[static_cast<size_t>(i)]) / draws;
    const double se = std::sqrt(pi(i) * (1 - pi(i)) / draws);
    CHECK(std::abs(phat - pi(i)) < 4.0 * se);  // binomial oracle
  }
}

TEST_CASE("sketching: debias weights — constant under exact leverage") {
  Rng rng(31);
  const Matrix x = random_matrix(rng, 32, 4);
  const SamplingPlan plan = build_distribution(x, PlanKind::ExactLeverage);
  const Index m = 8;
  RowSample s = draw_sample(plan, m, rng);
  s = attach_debias_weights(std::move(s), plan);
  const double expect = std::sqrt(static_cast<double>(m) / (m - 4));
  for (Index t = 0; t < m; ++t) {
    CHECK((*s.debias_weights)(t) == doctest::Approx(expect).epsilon(1e-12));
    CHECK((*s.debias_weights)(t) >= 1.0);
  }
  CHECK(expect == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("sketching: debias weights on the block instance (arithmetic)") {
  const auto inst = block_instance(1, 8);
  Vector pi = Vector::Constant(8, 1.0 / 8.0);
  const SamplingPlan plan = custom_plan(inst.x, pi);
  RowSample s;
  s.indices = {1, 0, 2, 3, 4, 5, 6, 7};  // m = 8; first two have l = 3/4, 1/4
  s.base_weights = Vector::Ones(8);
  s = attach_debias_weights(std::move(s), plan);
  // l = 3/4, m pi = 1: w = 1/sqrt(1/4) = 2; l = 1/4: w = 1/sqrt(3/4)
  CHECK((*s.debias_weights)(0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK((*s.debias_weights)(1) ==
        doctest::Approx(1.0 / std::sqrt(0.75)).epsilon(1e-12));
}

TEST_CASE("sketching: zero-leverage rows get debias weight 1") {
  Matrix x(4, 2);
  x << 1, 0, 0, 1, 0, 0, 0, 0;
  const SamplingPlan plan = build_distribution(x, PlanKind::Uniform);
  RowSample s;
  s.indices = {2, 3};
  s.base_weights = Vector::Ones(2);
  s = attach_debias_weights(std::move(s), plan, 1e-8);
  CHECK((*s.debias_weights)(0) == 1.0);
  CHECK((*s.debias_weights)(1) == 1.0);
}

TEST_CASE("sketching: debias undefined when m is too small") {
  Matrix x(4, 1);
  x << 10, 0.1, 0.1, 0.1;  // one dominant row, leverage near 1
  const SamplingPlan plan = build_distribution(x, PlanKind::Uniform);
  RowSample s;
  s.indices = {0};
  s.base_weights = Vector::Ones(1);
  CHECK_THROWS_AS(attach_debias_weights(std::move(s), plan, 1e-8),
                  DebiasUndefinedError);
}

TEST_CASE("sketching: fwht closed forms") {
  Vector v(4);
  v << 1, 0, 0, 0;
  fwht_inplace(v);
  for (Index i = 0; i < 4; ++i) CHECK(v(i) == doctest::Approx(1.0));

  Vector w(4);
  w << 1, 1, 1, 1;
  fwht_inplace(w);
  CHECK(w(0) == doctest::Approx(4.0));
  for (Index i = 1; i < 4; ++i) CHECK(w(i) == doctest::Approx(0.0));

  Vector u(2);
  u << 1, -1;
  fwht_inplace(u);
  CHECK(u(0) == doctest::Approx(0.0));
  CHECK(u(1) == doctest::Approx(2.0));

  Vector bad(3);
  bad.setZero();
  CHECK_THROWS_AS(fwht_inplace(bad), NotPowerOfTwoError);
}

TEST_CASE("sketching: fwht equals the explicit Hadamard product") {
  Rng rng(41);
  for (Index n : {2, 4, 8, 16, 32, 64}) {
    const Matrix h = hadamard(n);
    CHECK((h.transpose() * h - static_cast<double>(n) * Matrix::Identity(n, n))
              .cwiseAbs()
              .maxCoeff() < 1e-12);
    Vector v = random_matrix(rng, n, 1);
    Vector expect = h * v;
    fwht_inplace(v);
    CHECK((v - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("sketching: row-sampling apply repeats and rescales rows") {
  Rng rng(43);
  const Matrix m = random_matrix(rng, 5, 3);
  RowSample s;
  s.indices = {1, 1};
  s.base_weights = Vector::Constant(2, 0.7);
  const SketchOperator op = row_sampling_operator(s, 5, false);
  const Matrix sm = apply_sketch(op, m);
  CHECK((sm.row(0) - 0.7 * m.row(1)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((sm.row(1) - 0.7 * m.row(1)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("sketching: full deterministic sample acts as the identity") {
  Rng rng(47);
  const Matrix m = random_matrix(rng, 6, 2);
  const SketchOperator op = full_sample_operator(6);
  const Matrix sm = apply_sketch(op, m);
  CHECK((sm - m).cwiseAbs().maxCoeff() < 1e-15);
  const Matrix sts =
      apply_sketch_transpose(op, apply_sketch(op, Matrix::Identity(6, 6)));
  CHECK((sts - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("sketching: srht hand case N=2") {
  SrhtOp op;
  op.n = 2;
  op.padded_dim = 2;
  op.sign_diag = Vector::Ones(2);
  op.indices = {0};
  const SketchOperator sk{op};
  Matrix m(2, 1);
  m << 3, 5;
  // sqrt(N/m) * (1/sqrt(N)) * (row 0 of H2) = (1/sqrt(m)) * (row1 + row2)
  const Matrix out = apply_sketch(sk, m);
  CHECK(out(0, 0) == doctest::Approx(8.0));
}

TEST_CASE("sketching: srht composite equals its explicit dense form") {
  Rng rng(53);
  for (Index n : {5, 8, 13}) {
    const Index m = 4;
    const SketchOperator op = srht_operator(n, m, rng);
    const auto& srht = std::get<SrhtOp>(op.op);
    const Index big_n = srht.padded_dim;

    const Matrix h = hadamard(big_n);
    Matrix sel = Matrix::Zero(m, big_n);
    for (Index s = 0; s < m; ++s) {
      sel(s, srht.indices[static_cast<size_t>(s)]) =
          std::sqrt(static_cast<double>(big_n) / m);
    }
    const Matrix dense = sel * h * srht.sign_diag.asDiagonal() /
                         std::sqrt(static_cast<double>(big_n));

    const Matrix x = random_matrix(rng, n, 3);
    Matrix x_pad = Matrix::Zero(big_n, 3);
    x_pad.topRows(n) = x;
    CHECK((apply_sketch(op, x) - dense * x_pad).cwiseAbs().maxCoeff() < 1e-10);
    // transpose route agrees with the dense transpose
    const Matrix z = random_matrix(rng, m, 2);
    CHECK((apply_sketch_transpose(op, z) - dense.transpose() * z)
              .cwiseAbs()
              .maxCoeff() < 1e-10);
  }
}

TEST_CASE("sketching: srht padding rule") {
  Rng rng(59);
  CHECK(std::get<SrhtOp>(srht_operator(4, 2, rng).op).padded_dim == 4);
  CHECK(std::get<SrhtOp>(srht_operator(5, 2, rng).op).padded_dim == 8);
}

TEST_CASE("sketching: srht composite gram is unbiased (MC oracle)") {
  const Index big_n = 8, m = 4;
  Rng rng(61);
  Matrix acc = Matrix::Zero(big_n, big_n);
  const int draws = 10000;
  const Matrix eye = Matrix::Identity(big_n, big_n);
  for (int d = 0; d < draws; ++d) {
    const SketchOperator op = srht_operator(big_n, m, rng);
    const Matrix s = apply_sketch(op, eye);
    acc += s.transpose() * s;
  }
  acc /= draws;
  CHECK((acc - eye).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("sketching: srht flattens the leverage scores of a coherent matrix") {
  const Index n = 1024, p = 8;
  Rng rng(67);
  Matrix x = random_matrix(rng, n, p);
  // dominant orthogonal spike block: leverage ~1 on the first p rows
  x.topRows(p) = static_cast<double>(n) * Matrix::Identity(p, p);
  const Matrix basis = thin_factorize(x).orthonormal_basis;
  const double bound = 3.0 * static_cast<double>(p) / static_cast<double>(n);

  for (int d = 0; d < 100; ++d) {
    Matrix u_hd = basis;
    for (Index i = 0; i < n; ++i) u_hd.row(i) *= rng.next_sign();
    fwht_columns_inplace(u_hd);
    u_hd /= std::sqrt(static_cast<double>(n));
    CHECK(u_hd.rowwise().squaredNorm().maxCoeff() <= bound);
  }
}

TEST_CASE("sketching: gaussian operator moments") {
  Rng rng(71);
  const Index m = 1000, n = 1000;
  const SketchOperator op = gaussian_operator(n, m, rng);
  const auto& g = std::get<GaussianOp>(op.op);
  CHECK(g.s.rows() == m);
  CHECK(g.s.cols() == n);
  const double mean = g.s.mean();
  const double var = g.s.array().square().mean() - mean * mean;
  const double entry_sd = 1.0 / std::sqrt(static_cast<double>(m));
  CHECK(std::abs(mean) < 4.0 * entry_sd / 1000.0);  // 10^6 entries
  CHECK(std::abs(var - 1.0 / m) < 0.02 / m);
}

TEST_CASE("sketching: gaussian gram is unbiased (MC oracle)") {
  Rng rng(73);
  const Index n = 10, m = 40;
  Matrix acc = Matrix::Zero(n, n);
  const int draws = 10000;
  for (int d = 0; d < draws; ++d) {
    const SketchOperator op = gaussian_operator(n, m, rng);
    const auto& g = std::get<GaussianOp>(op.op);
    acc += g.s.transpose() * g.s;
  }
  acc /= draws;
  CHECK((acc - Matrix::Identity(n, n)).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("sketching: sparse sign magnitudes and sparsity") {
  Rng rng(79);
  const SketchOperator op = sparse_sign_operator(4, 2, 2, rng);
  const auto& ss = std::get<SparseSignOp>(op.op);
  CHECK(ss.value == doctest::Approx(1.0));  // sqrt(4 / (2*2))
  for (const auto& pos : ss.positions) {
    CHECK(pos.size() == 2);
    CHECK(std::set<Index>(pos.begin(), pos.end()).size() == 2);  // distinct
  }

  const SketchOperator dense = sparse_sign_operator(6, 3, 6, rng);
  CHECK(std::get<SparseSignOp>(dense.op).value ==
        doctest::Approx(1.0 / std::sqrt(3.0)));

  CHECK_THROWS_AS(sparse_sign_operator(4, 2, 0, rng), InvalidSparsityError);
  CHECK_THROWS_AS(sparse_sign_operator(4, 2, 5, rng), InvalidSparsityError);
}

TEST_CASE("sketching: sparse sign gram is unbiased (MC oracle)") {
  Rng rng(83);
  const Index n = 8, m = 32, s = 2;
  Matrix acc = Matrix::Zero(n, n);
  const int draws = 10000;
  const Matrix eye = Matrix::Identity(n, n);
  for (int d = 0; d < draws; ++d) {
    const SketchOperator op = sparse_sign_operator(n, m, s, rng);
    const Matrix sm = apply_sketch(op, eye);
    acc += sm.transpose() * sm;
  }
  acc /= draws;
  CHECK((acc - eye).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("sketching: row-sampling gram is unbiased for every plan kind") {
  Rng rng(89);
  const Matrix x = random_matrix(rng, 20, 3);
  const Matrix gram = x.transpose() * x;
  const Index m = 10;
  const int draws = 10000;
  for (PlanKind kind : {PlanKind::Uniform, PlanKind::RowNorm,
                        PlanKind::ExactLeverage, PlanKind::Shrinkage}) {
    const SamplingPlan plan = build_distribution(x, kind, 0.5);
    const AliasTable table(plan.probabilities);
    Matrix acc = Matrix::Zero(3, 3);
    Matrix acc_sq = Matrix::Zero(3, 3);
    for (int d = 0; d < draws; ++d) {
      const RowSample s = draw_sample(table, plan, m, rng);
      const Matrix xs = apply_sketch(row_sampling_operator(s, 20, false), x);
      const Matrix g = xs.transpose() * xs;
      acc += g;
      acc_sq += g.cwiseProduct(g);
    }
    acc /= draws;
    acc_sq /= draws;
    for (Index a = 0; a < 3; ++a) {
      for (Index b = 0; b < 3; ++b) {
        const double se = std::sqrt(
            std::max(0.0, acc_sq(a, b) - acc(a, b) * acc(a, b)) / draws);
        CHECK(std::abs(acc(a, b) - gram(a, b)) < 5.0 * se + 1e-12);
      }
    }
  }
}

TEST_CASE("sketching: embedding check basics") {
  Rng rng(97);
  const Matrix x = random_matrix(rng, 8, 2);
  const Matrix basis = thin_factorize(x).orthonormal_basis;
  CHECK(subspace_embedding_check(basis, full_sample_operator(8), 1e-9));

  RowSample rep;
  rep.indices = {3, 3, 3};
  rep.base_weights = Vector::Ones(3);
  CHECK_FALSE(subspace_embedding_check(
      basis, row_sampling_operator(rep, 8, false), 10.0));
}

TEST_CASE("sketching: exact-leverage embedding pass rate at m = 256") {
  Rng rng(101);
  const Matrix x = random_matrix(rng, 512, 4);
  const Matrix basis = thin_factorize(x).orthonormal_basis;
  const SamplingPlan plan = build_distribution(x, PlanKind::ExactLeverage);
  const AliasTable table(plan.probabilities);
  int pass = 0;
  const int draws = 1000;
  for (int d = 0; d < draws; ++d) {
    const RowSample s = draw_sample(table, plan, 256, rng);
    if (subspace_embedding_check(basis, row_sampling_operator(s, 512, false),
                                 1.0)) {
      ++pass;
    }
  }
  CHECK(pass >= 990);
}

TEST_CASE("sketching: operators are deterministic per seed") {
  Rng xr(1);
  const Matrix x = random_matrix(xr, 16, 3);
  Rng a(7), b(7);
  const auto sa = std::get<SrhtOp>(srht_operator(16, 4, a).op);
  const auto sb = std::get<SrhtOp>(srht_operator(16, 4, b).op);
  CHECK(sa.indices == sb.indices);
  CHECK((sa.sign_diag - sb.sign_diag).cwiseAbs().maxCoeff() == 0.0);

  Rng c(9), d(9);
  const SketchOperator opc = gaussian_operator(5, 3, c);
  const SketchOperator opd = gaussian_operator(5, 3, d);
  CHECK((std::get<GaussianOp>(opc.op).s - std::get<GaussianOp>(opd.op).s)
            .cwiseAbs()
            .maxCoeff() == 0.0);

  Rng e(11), f(11);
  const SketchOperator ope = sparse_sign_operator(8, 4, 2, e);
  const SketchOperator opf = sparse_sign_operator(8, 4, 2, f);
  CHECK(std::get<SparseSignOp>(ope.op).positions ==
        std::get<SparseSignOp>(opf.op).positions);
  CHECK(std::get<SparseSignOp>(ope.op).signs ==
        std::get<SparseSignOp>(opf.op).signs);

  const SamplingPlan plan = build_distribution(x, PlanKind::ExactLeverage);
  Rng g(13), h(13);
  CHECK(draw_sample(plan, 8, g).indices == draw_sample(plan, 8, h).indices);
}

TEST_CASE("sketching: dsrht weights are finite and at least 1") {
  Rng rng(103);
  Matrix x = random_matrix(rng, 64, 4);
  x.topRows(4) *= 8.0;
  const Matrix basis = thin_factorize(x).orthonormal_basis;
  const SketchOperator op = srht_debiased_operator(basis, 32, rng);
  const auto& srht = std::get<SrhtOp>(op.op);
  REQUIRE(srht.debias_weights.has_value());
  for (Index s = 0; s < 32; ++s) {
    CHECK((*srht.debias_weights)(s) >= 1.0);
    CHECK(std::isfinite((*srht.debias_weights)(s)));
  }
  // base_operator strips the debias stage
  const SketchOperator base = base_operator(op);
  CHECK_FALSE(std::get<SrhtOp>(base.op).debias_weights.has_value());
}
