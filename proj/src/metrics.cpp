#include "oblique/metrics.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "oblique/matcore.hpp"
#include "oblique/rng.hpp"

namespace oblique {

double auto_embedding_eps(double theta_max, Index rank, Index m,
                          double delta) {
  if (!std::isfinite(theta_max) || theta_max <= 0.0) {
    throw InvalidConfigError(
        "auto_embedding_eps: theta_max must be finite and positive");
  }
  const double k = static_cast<double>(std::max<Index>(rank, 1));
  return std::sqrt(3.0 * k * theta_max * std::log(2.0 * k / delta) /
                   static_cast<double>(m));
}

Vector residual_vector(const Matrix& x, const Matrix& y) {
  const OlsSolution sol = ols_exact(x, y);
  return y - x * sol.beta;
}

double delta_x(const Matrix& x, const SamplingPlan& plan, Index m,
               const Vector& r) {
  require_shape(r.size() == x.rows(), "delta_x: r length must equal rows(X)");
  require_shape(plan.probabilities.size() == x.rows(),
                "delta_x: plan size mismatch");
  const double md = static_cast<double>(m);
  double acc = 0.0;
  for (Index i = 0; i < r.size(); ++i) {
    const double l = plan.leverage(i);
    if (l <= 0.0) continue;
    const double pi = plan.probabilities(i);
    if (pi <= 0.0) {
      throw UndefinedTermError("delta_x: l_i > 0 with pi_i = 0 at row " +
                               std::to_string(i));
    }
    acc += r(i) * r(i) * l / (md * pi);
  }
  return acc;
}

namespace {

double weighted_frobenius(const Matrix& b, const Vector& leverage,
                          const Vector& pi, Index m, const char* what) {
  const double md = static_cast<double>(m);
  double acc = 0.0;
  for (Index i = 0; i < b.rows(); ++i) {
    const double l = leverage(i);
    if (l <= 0.0) continue;
    if (pi(i) <= 0.0) {
      throw UndefinedTermError(std::string(what) +
                               ": l_i > 0 with pi_i = 0 at row " +
                               std::to_string(i));
    }
    acc += l / (md * pi(i)) * b.row(i).squaredNorm();
  }
  return std::sqrt(acc);
}

}  // namespace

CurDeltas delta_cur(const Matrix& x, const Matrix& c, const Matrix& r,
                    const SamplingPlan& plan_c, const SamplingPlan& plan_r,
                    Index m_c, Index m_r) {
  require_shape(c.rows() == x.rows(), "delta_cur: C rows must match X");
  require_shape(r.cols() == x.cols(), "delta_cur: R cols must match X");
  require_shape(plan_c.probabilities.size() == c.rows(),
                "delta_cur: plan_c must cover rows of C");
  require_shape(plan_r.probabilities.size() == r.cols(),
                "delta_cur: plan_r must cover rows of R^T");

  const Matrix w_c = thin_factorize(c).orthonormal_basis;      // n x k_c
  const Matrix v_r = thin_factorize(r.transpose()).orthonormal_basis;  // p x k_r
  const Matrix b1 = x - w_c * (w_c.transpose() * x);
  const Matrix b2 = x.transpose() - v_r * (v_r.transpose() * x.transpose());

  CurDeltas d;
  d.delta_1 = weighted_frobenius(b1, plan_c.leverage, plan_c.probabilities,
                                 m_c, "delta_cur (C side)");
  d.delta_2 = weighted_frobenius(b2, plan_r.leverage, plan_r.probabilities,
                                 m_r, "delta_cur (R side)");
  return d;
}

// --- Monte-Carlo driver ------------------------------------------------------

namespace {

void tree_sum_estimates(const Matrix& est, const std::vector<std::uint8_t>& ok,
                        long lo, long hi, Vector& out) {
  if (hi - lo <= 64) {
    for (long t = lo; t < hi; ++t) {
      if (ok[static_cast<size_t>(t)]) out += est.col(t);
    }
    return;
  }
  const long mid = lo + (hi - lo) / 2;
  Vector right = Vector::Zero(out.size());
  tree_sum_estimates(est, ok, lo, mid, out);
  tree_sum_estimates(est, ok, mid, hi, right);
  out += right;
}

double tree_sum_losses(const std::vector<double>& loss,
                       const std::vector<std::uint8_t>& ok, long lo, long hi) {
  if (hi - lo <= 64) {
    double s = 0.0;
    for (long t = lo; t < hi; ++t) {
      if (ok[static_cast<size_t>(t)]) s += loss[static_cast<size_t>(t)];
    }
    return s;
  }
  const long mid = lo + (hi - lo) / 2;
  return tree_sum_losses(loss, ok, lo, mid) +
         tree_sum_losses(loss, ok, mid, hi);
}

constexpr std::uint64_t kBootstrapSalt = 0x426f6f7473747261ULL;

}  // namespace

TrialStats run_monte_carlo(
    const std::function<TrialOutcome(std::uint64_t)>& trial, long trials,
    std::uint64_t base_seed, Index estimate_dim,
    const std::function<double(const Vector&)>& loss_of_mean,
    double normalizer, const McOptions& opts) {
  if (trials < 1) throw InvalidConfigError("run_monte_carlo: trials >= 1");

  Matrix estimates = Matrix::Zero(estimate_dim, trials);
  std::vector<double> losses(static_cast<size_t>(trials), 0.0);
  std::vector<std::uint8_t> ok(static_cast<size_t>(trials), 0);

  auto worker_range = [&](long lo, long hi) {
    for (long t = lo; t < hi; ++t) {
      const TrialOutcome out = trial(split_seed(base_seed, static_cast<std::uint64_t>(t)));
      if (out.accepted) {
        ok[static_cast<size_t>(t)] = 1;
        estimates.col(t) = out.estimate;
        losses[static_cast<size_t>(t)] = out.loss;
      }
    }
  };

  const int threads = std::max(1, opts.threads);
  if (threads == 1 || trials < 256) {
    worker_range(0, trials);
  } else {
    std::atomic<long> next_block{0};
    std::exception_ptr worker_error;
    std::mutex error_mutex;
    const long block = 256;
    const long nblocks = (trials + block - 1) / block;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(threads));
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&]() {
        try {
          for (;;) {
            const long b = next_block.fetch_add(1);
            if (b >= nblocks) return;
            worker_range(b * block, std::min(trials, (b + 1) * block));
          }
        } catch (...) {
          const std::lock_guard<std::mutex> lock(error_mutex);
          if (!worker_error) worker_error = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    if (worker_error) std::rethrow_exception(worker_error);
  }

  TrialStats stats;
  stats.normalizer = normalizer;
  for (long t = 0; t < trials; ++t) {
    if (ok[static_cast<size_t>(t)]) {
      ++stats.accepted;
    } else {
      ++stats.rejected;
    }
  }
  if (stats.accepted == 0) {
    throw AllTrialsRejectedError("run_monte_carlo: every trial was rejected");
  }

  if (opts.check_loss_floor) {
    const double slack = 1e-9 * std::max(1.0, std::abs(normalizer));
    for (long t = 0; t < trials; ++t) {
      if (ok[static_cast<size_t>(t)] &&
          losses[static_cast<size_t>(t)] < normalizer - slack) {
        throw Error("run_monte_carlo: accepted trial " + std::to_string(t) +
                    " has loss below the exact-solution floor");
      }
    }
  }

  Vector sum_est = Vector::Zero(estimate_dim);
  tree_sum_estimates(estimates, ok, 0, trials, sum_est);
  const double sum_loss = tree_sum_losses(losses, ok, 0, trials);
  const double acc = static_cast<double>(stats.accepted);

  stats.mean_estimate = sum_est / acc;
  stats.mean_loss = sum_loss / acc;
  stats.bias = loss_of_mean(stats.mean_estimate) - normalizer;
  stats.variance = stats.mean_loss - normalizer;

  // variance stderr: sample std of the per-trial losses over accepted trials
  if (stats.accepted > 1) {
    double ss = 0.0;
    for (long t = 0; t < trials; ++t) {
      if (!ok[static_cast<size_t>(t)]) continue;
      const double d = losses[static_cast<size_t>(t)] - stats.mean_loss;
      ss += d * d;
    }
    stats.variance_stderr = std::sqrt(ss / (acc - 1.0)) / std::sqrt(acc);
  }

  // bias stderr: nonparametric bootstrap over the accepted trial estimates
  if (opts.bootstrap_resamples > 0 && stats.accepted > 1) {
    std::vector<long> accepted_ids;
    accepted_ids.reserve(static_cast<size_t>(stats.accepted));
    for (long t = 0; t < trials; ++t) {
      if (ok[static_cast<size_t>(t)]) accepted_ids.push_back(t);
    }
    const int b_total = opts.bootstrap_resamples;
    std::vector<double> boot(static_cast<size_t>(b_total));
    Vector mean_b(estimate_dim);
    for (int b = 0; b < b_total; ++b) {
      Rng rng(split_seed(base_seed ^ kBootstrapSalt,
                         static_cast<std::uint64_t>(b)));
      mean_b.setZero();
      for (long k = 0; k < stats.accepted; ++k) {
        const long pick = accepted_ids[static_cast<size_t>(rng.next_below(
            static_cast<std::uint64_t>(accepted_ids.size())))];
        mean_b += estimates.col(pick);
      }
      mean_b /= acc;
      boot[static_cast<size_t>(b)] = loss_of_mean(mean_b) - normalizer;
    }
    double mb = 0.0;
    for (double v : boot) mb += v;
    mb /= static_cast<double>(b_total);
    double ss = 0.0;
    for (double v : boot) ss += (v - mb) * (v - mb);
    stats.bias_stderr = std::sqrt(ss / static_cast<double>(b_total - 1));
  }

  if (opts.probe) {
    for (long t = 0; t < trials; ++t) {
      TrialOutcome out;
      out.accepted = ok[static_cast<size_t>(t)] != 0;
      out.estimate = estimates.col(t);
      out.loss = losses[static_cast<size_t>(t)];
      opts.probe(t, out);
    }
  }
  return stats;
}

// --- named estimators --------------------------------------------------------

namespace {

struct SketchContext {
  ThinFactorization fact;      // of the sketched matrix (X, C, or R^T)
  std::optional<AliasTable> table;
  double zeta_eps = 0.0;
  bool zeta_enabled = false;
};

SketchContext make_context(const Matrix& target, const SketchSpec& spec,
                           Index m, const ZetaPolicy& zeta) {
  SketchContext ctx;
  ctx.fact = thin_factorize(target);
  if (spec.family == SketchSpec::Family::RowSampling) {
    require_shape(spec.plan.probabilities.size() == target.rows(),
                  "monte_carlo: plan does not cover the sketched matrix");
    ctx.table.emplace(spec.plan.probabilities);
  }
  ctx.zeta_enabled = zeta.enabled;
  if (zeta.enabled) {
    if (zeta.eps > 0.0) {
      ctx.zeta_eps = zeta.eps;
    } else {
      const double theta = spec.family == SketchSpec::Family::RowSampling
                               ? spec.plan.theta_max
                               : 1.0;
      ctx.zeta_eps =
          auto_embedding_eps(theta, ctx.fact.numeric_rank, m, zeta.delta);
    }
  }
  return ctx;
}

/// Draws one realization of the sketch described by `spec`.
SketchOperator realize_sketch(const SketchSpec& spec, const SketchContext& ctx,
                              Index n, Index m, Rng& rng) {
  switch (spec.family) {
    case SketchSpec::Family::RowSampling: {
      RowSample s = draw_sample(*ctx.table, spec.plan, m, rng);
      if (spec.debiased) {
        s = attach_debias_weights(std::move(s), spec.plan, spec.debias_floor);
      }
      return row_sampling_operator(std::move(s), n, spec.debiased);
    }
    case SketchSpec::Family::Srht:
      if (spec.debiased) {
        return srht_debiased_operator(ctx.fact.orthonormal_basis, m, rng,
                                      spec.debias_floor);
      }
      return srht_operator(n, m, rng);
    case SketchSpec::Family::Gaussian:
      return gaussian_operator(n, m, rng);
    case SketchSpec::Family::SparseSign:
      return sparse_sign_operator(n, m, spec.sparse_nnz, rng);
  }
  throw InvalidConfigError("realize_sketch: unknown family");
}

bool zeta_accepts(const SketchContext& ctx, const SketchOperator& op) {
  if (!ctx.zeta_enabled) return true;
  return subspace_embedding_check(ctx.fact.orthonormal_basis,
                                  base_operator(op), ctx.zeta_eps);
}

TrialStats run_ols_mc(const OlsMcSpec& spec, long trials,
                      const ZetaPolicy& zeta, std::uint64_t base_seed,
                      const McOptions& opts) {
  const SketchContext ctx = make_context(spec.x, spec.sketch, spec.m, zeta);
  const OlsSolution exact = ols_exact(spec.x, spec.y);
  const double normalizer = loss_ols(spec.x, spec.y, exact.beta);

  auto trial = [&](std::uint64_t seed) -> TrialOutcome {
    Rng rng(seed);
    const SketchOperator op =
        realize_sketch(spec.sketch, ctx, spec.x.rows(), spec.m, rng);
    TrialOutcome out;
    if (!zeta_accepts(ctx, op)) return out;
    const OlsSolution sol = ols_subsampled(spec.x, spec.y, op);
    out.accepted = true;
    out.estimate = sol.beta;
    out.loss = loss_ols(spec.x, spec.y, sol.beta);
    return out;
  };

  auto loss_of_mean = [&](const Vector& beta) {
    return loss_ols(spec.x, spec.y, beta);
  };
  return run_monte_carlo(trial, trials, base_seed, spec.x.cols(), loss_of_mean,
                         normalizer, opts);
}

TrialStats run_cur_mc(const CurMcSpec& spec, long trials,
                      const ZetaPolicy& zeta, std::uint64_t base_seed,
                      const McOptions& opts) {
  const Matrix rt = spec.r.transpose();
  const SketchContext ctx_c = make_context(spec.c, spec.sketch_c, spec.m_c, zeta);
  const SketchContext ctx_r = make_context(rt, spec.sketch_r, spec.m_r, zeta);
  const CurSolution exact = cur_exact(spec.x, spec.c, spec.r);
  const double normalizer = loss_cur(spec.x, spec.c, exact.u, spec.r);
  const Index dim = spec.c.cols() * spec.r.rows();

  auto trial = [&](std::uint64_t seed) -> TrialOutcome {
    Rng rng(seed);
    const SketchOperator op_c =
        realize_sketch(spec.sketch_c, ctx_c, spec.c.rows(), spec.m_c, rng);
    const SketchOperator op_r =
        realize_sketch(spec.sketch_r, ctx_r, rt.rows(), spec.m_r, rng);
    TrialOutcome out;
    if (!zeta_accepts(ctx_c, op_c) || !zeta_accepts(ctx_r, op_r)) return out;
    const CurSolution sol = cur_fast(spec.x, spec.c, spec.r, op_c, op_r);
    out.accepted = true;
    out.estimate = Eigen::Map<const Vector>(sol.u.data(), dim);
    out.loss = loss_cur(spec.x, spec.c, sol.u, spec.r);
    return out;
  };

  auto loss_of_mean = [&](const Vector& flat) {
    const Eigen::Map<const Matrix> u(flat.data(), spec.c.cols(),
                                     spec.r.rows());
    return loss_cur(spec.x, spec.c, u, spec.r);
  };
  return run_monte_carlo(trial, trials, base_seed, dim, loss_of_mean,
                         normalizer, opts);
}

}  // namespace

TrialStats monte_carlo_bias_variance(const EstimatorSpec& spec, long trials,
                                     const ZetaPolicy& zeta,
                                     std::uint64_t base_seed,
                                     const McOptions& opts) {
  return std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, OlsMcSpec>) {
          return run_ols_mc(s, trials, zeta, base_seed, opts);
        } else {
          return run_cur_mc(s, trials, zeta, base_seed, opts);
        }
      },
      spec);
}

// --- projection moments ------------------------------------------------------

ProjectionMoments projection_moments(const Matrix& x, const SketchSpec& sketch,
                                     Index m, long trials,
                                     const ZetaPolicy& zeta,
                                     std::uint64_t base_seed,
                                     const McOptions& opts) {
  if (sketch.family != SketchSpec::Family::RowSampling &&
      sketch.family != SketchSpec::Family::Srht) {
    throw InvalidConfigError(
        "projection_moments: supported families are row sampling and srht");
  }
  const bool srht = sketch.family == SketchSpec::Family::Srht;

  // For SRHT the oblique projection lives on the zero-padded space.
  Matrix xw;
  if (srht) {
    const Index big_n = next_pow2(x.rows());
    xw = Matrix::Zero(big_n, x.cols());
    xw.topRows(x.rows()) = x;
  } else {
    xw = x;
  }
  const Index n = xw.rows();

  const SketchContext ctx = make_context(xw, sketch, m, zeta);
  const Index k = ctx.fact.numeric_rank;
  const Matrix& u = ctx.fact.orthonormal_basis;  // n x k
  const Matrix ut = u.transpose();               // k x n
  const Matrix sigma_vt =
      ctx.fact.singular_values.asDiagonal() * ctx.fact.right_factor;  // k x p

  ProjectionMoments pm;
  pm.perp_F2 = static_cast<double>(n - k);
  if (srht) {
    pm.predicted_trace =
        static_cast<double>(k) / static_cast<double>(m) * pm.perp_F2;
  } else {
    const double md = static_cast<double>(m);
    double acc = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double l = ctx.fact.orthonormal_basis.row(i).squaredNorm();
      if (l <= 0.0) continue;
      const double pi = sketch.plan.probabilities(i);
      if (pi <= 0.0) {
        throw UndefinedTermError(
            "projection_moments: l_i > 0 with pi_i = 0 at row " +
            std::to_string(i));
      }
      acc += (1.0 - l) * l / (md * pi);
    }
    pm.predicted_trace = acc;
  }

  struct Block {
    Matrix g_sum;
    double dist2_sum = 0.0;
    long accepted = 0;
    long rejected = 0;
  };
  const long block_size = 128;
  const long nblocks = (trials + block_size - 1) / block_size;
  std::vector<Block> blocks(static_cast<size_t>(nblocks));

  auto run_block = [&](long b) {
    Block& blk = blocks[static_cast<size_t>(b)];
    blk.g_sum = Matrix::Zero(k, n);
    const long lo = b * block_size;
    const long hi = std::min(trials, lo + block_size);
    for (long t = lo; t < hi; ++t) {
      Rng rng(split_seed(base_seed, static_cast<std::uint64_t>(t)));
      const SketchOperator op = realize_sketch(sketch, ctx, n, m, rng);
      if (!zeta_accepts(ctx, op)) {
        ++blk.rejected;
        continue;
      }
      // P_check = X (S X)^dagger S = U G with G = Sigma V^T (S X)^dagger S,
      // so moments of P_check - P = U (G - U^T) reduce to moments of G.
      const Matrix xs = apply_sketch(op, xw);                    // m x p
      const Matrix t_small = sigma_vt * pseudoinverse(xs);       // k x m
      const Matrix g =
          apply_sketch_transpose(op, t_small.transpose()).transpose();  // k x n
      blk.g_sum += g;
      blk.dist2_sum += (g - ut).squaredNorm();
      ++blk.accepted;
    }
  };

  const int threads = std::max(1, opts.threads);
  if (threads == 1 || nblocks == 1) {
    for (long b = 0; b < nblocks; ++b) run_block(b);
  } else {
    std::atomic<long> next{0};
    std::exception_ptr worker_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&]() {
        try {
          for (;;) {
            const long b = next.fetch_add(1);
            if (b >= nblocks) return;
            run_block(b);
          }
        } catch (...) {
          const std::lock_guard<std::mutex> lock(error_mutex);
          if (!worker_error) worker_error = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    if (worker_error) std::rethrow_exception(worker_error);
  }

  // pairwise-tree merge over blocks
  std::function<Block(long, long)> merge = [&](long lo, long hi) -> Block {
    if (hi - lo == 1) return std::move(blocks[static_cast<size_t>(lo)]);
    const long mid = lo + (hi - lo) / 2;
    Block a = merge(lo, mid);
    Block c = merge(mid, hi);
    a.g_sum += c.g_sum;
    a.dist2_sum += c.dist2_sum;
    a.accepted += c.accepted;
    a.rejected += c.rejected;
    return a;
  };
  Block total = merge(0, nblocks);
  pm.accepted = total.accepted;
  pm.rejected = total.rejected;
  if (pm.accepted == 0) {
    throw AllTrialsRejectedError("projection_moments: every trial rejected");
  }
  const double acc = static_cast<double>(pm.accepted);
  pm.bias_F2 = (total.g_sum / acc - ut).squaredNorm();
  pm.second_moment = total.dist2_sum / acc;
  return pm;
}

}  // namespace oblique
