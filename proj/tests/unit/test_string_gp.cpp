#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace stringgp;

namespace {

StringPartition mixed_partition() {
  StringPartition p;
  p.boundaries = {0.0, 0.7, 1.5, 3.0};
  p.strings = {{KernelSpec::squared_exponential(1.0, 0.4), MeanFunction::constant(1.0)},
               {KernelSpec::matern52(2.0, 0.3), MeanFunction::constant(2.0)},
               {KernelSpec::rational_quadratic(0.5, 0.6, 2.0), MeanFunction::constant(3.0)}};
  return p;
}

StringPartition three_strings() {
  StringPartition p;
  p.boundaries = {0.0, 1.0, 2.0, 3.0};
  p.strings = {{KernelSpec::squared_exponential(1.0, 0.3), MeanFunction::constant(1.0)},
               {KernelSpec::squared_exponential(1.0, 0.2), MeanFunction::constant(2.0)},
               {KernelSpec::periodic(1.0, 1.0, 0.3), MeanFunction::constant(3.0)}};
  return p;
}

}  // namespace

TEST(BoundaryMoments, SingleStringStartsAtKernelBlock) {
  const KernelSpec k = KernelSpec::squared_exponential(1.3, 0.4);
  const auto bm = boundary_moments(StringPartition::uniform(k, 0.0, 1.0, 1));
  ASSERT_EQ(bm.size(), 2u);
  EXPECT_EQ(bm.offset[0], Vec2::Zero());
  EXPECT_LT((bm.cov[0] - eval_block(k, 0.0, 0.0)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(BoundaryMoments, MatchDenseSchurComplement) {
  const StringPartition p = mixed_partition();
  const auto bm = boundary_moments(p);
  for (std::size_t k = 1; k <= p.num_strings(); ++k) {
    const KernelSpec& ker = p.strings[k - 1].kernel;
    const double a = p.boundaries[k - 1], b = p.boundaries[k];
    const MatrixXd C = testutil::joint_cov(ker, {b, a});
    const auto dense = testutil::condition_dense(C, VectorXd::Zero(4), 0, 2, Vec2(0.3, -0.2));
    EXPECT_LT((bm.cov[k] - dense.cov).cwiseAbs().maxCoeff(), 1e-12) << k;
    // mean given z_{a} = (0.3, -0.2), with a constant string mean c
    const double c = p.strings[k - 1].mean(a)(0);
    const Vec2 got = bm.mean(k, Vec2(0.3 + c, -0.2)) - Vec2(c, 0.0);
    EXPECT_LT((got - dense.mean).cwiseAbs().maxCoeff(), 1e-12) << k;
  }
}

TEST(BoundaryMoments, PeriodicStringOverFullPeriodIsDegenerate) {
  StringPartition p = StringPartition::uniform(KernelSpec::periodic(1.0, 1.0, 0.5), 0.0, 1.0, 2);
  EXPECT_THROW(boundary_moments(p), DegeneracyError);
  EXPECT_THROW(StringGP{p}, DegeneracyError);
  EXPECT_NO_THROW(boundary_moments(p, false));
}

TEST(StringGP, UniformPartitionReproducesBaseKernelWithinStrings) {
  Rng rng(20);
  for (Family f : {Family::SquaredExponential, Family::RationalQuadratic, Family::Matern52,
                   Family::SpectralMixture}) {
    const KernelSpec k = testutil::random_kernel(f, rng);
    const std::size_t K = 4;
    StringGP gp(StringPartition::uniform(k, 0.0, 2.0, K));
    double across = 0.0;
    for (int r = 0; r < 200; ++r) {
      const std::size_t s = static_cast<std::size_t>(uniform(rng, 0.0, static_cast<double>(K)));
      const double lo = 0.5 * static_cast<double>(s), hi = lo + 0.5;
      const double u = uniform(rng, lo, hi), v = uniform(rng, lo, hi);
      EXPECT_LT((gp.global_cov(u, v) - eval_block(k, u, v)).cwiseAbs().maxCoeff(), 1e-10) << family_name(f);
      const double x = uniform(rng, 0.0, 2.0), y = uniform(rng, 0.0, 2.0);
      across = std::max(across, std::abs(gp.global_value_cov(x, y) - eval_value(k, x, y)));
    }
    EXPECT_GT(across, 1e-6) << family_name(f) << " should deviate across strings";
  }
}

TEST(StringGP, Matern32UniformPartitionIsExactEverywhere) {
  const KernelSpec k = KernelSpec::matern32(1.0, 0.5);
  StringGP gp(StringPartition::uniform(k, 0.0, 1.0, 5));
  Rng rng(21);
  for (int r = 0; r < 500; ++r) {
    const double u = uniform(rng, 0.0, 1.0), v = uniform(rng, 0.0, 1.0);
    EXPECT_LT((gp.global_cov(u, v) - eval_block(k, u, v)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(StringGP, GlobalMomentsMatchTwoSidedOracle) {
  const StringPartition p = mixed_partition();
  StringGP gp(p);
  testutil::TwoSidedOracle oracle(p);
  Rng rng(22);
  for (int r = 0; r < 300; ++r) {
    const double u = uniform(rng, 0.0, 3.0), v = uniform(rng, 0.0, 3.0);
    EXPECT_LT((gp.global_cov(u, v) - oracle.cov(u, v)).cwiseAbs().maxCoeff(), 1e-10) << u << " " << v;
    EXPECT_LT((gp.global_mean(u) - oracle.mean(u)).cwiseAbs().maxCoeff(), 1e-10) << u;
  }
  for (double a : p.boundaries)
    for (double b : p.boundaries)
      EXPECT_LT((gp.global_cov(a, b) - oracle.cov(a, b)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(StringGP, FirstBoundaryCovarianceIsFirstKernelBlock) {
  const StringPartition p = mixed_partition();
  StringGP gp(p);
  EXPECT_LT((gp.global_cov(0.0, 0.0) - eval_block(p.strings[0].kernel, 0.0, 0.0)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(StringGP, MeanFunctionCases) {
  StringGP zero(StringPartition::uniform(KernelSpec::squared_exponential(1, 0.3), 0.0, 1.0, 3));
  StringGP single(StringPartition::uniform(KernelSpec::squared_exponential(1, 0.3), 0.0, 1.0, 1,
                                           MeanFunction::constant(1.7)));
  for (double t = 0.0; t <= 1.0; t += 0.05) {
    EXPECT_EQ(zero.global_mean(t), Vec2::Zero());
    EXPECT_NEAR(single.global_mean(t)(0), 1.7, 1e-12);
    EXPECT_NEAR(single.global_mean(t)(1), 0.0, 1e-12);
  }
}

TEST(StringGP, CovarianceIsSymmetricAndGramIsPsd) {
  StringGP gp(mixed_partition());
  Rng rng(23);
  std::vector<double> xs;
  for (int i = 0; i < 60; ++i) xs.push_back(uniform(rng, 0.0, 3.0));
  for (int r = 0; r < 100; ++r) {
    const double u = uniform(rng, 0.0, 3.0), v = uniform(rng, 0.0, 3.0);
    EXPECT_LT((gp.global_cov(u, v) - gp.global_cov(v, u).transpose()).cwiseAbs().maxCoeff(), 1e-12);
  }
  const MatrixXd G = gp.value_gram(xs);
  EXPECT_LT((G - G.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_GE(testutil::min_eigenvalue(G), -1e-8);
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (std::size_t j = 0; j < xs.size(); ++j)
      EXPECT_NEAR(G(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), gp.global_value_cov(xs[i], xs[j]),
                  1e-12);
}

TEST(StringGP, CrossBlocksAreDerivativesOfValueCovariance) {
  StringGP gp(mixed_partition());
  Rng rng(24);
  const double h = 1e-5;
  int checked = 0;
  while (checked < 100) {
    const double u = uniform(rng, 0.0, 3.0), v = uniform(rng, 0.0, 3.0);
    bool near = false;
    for (double a : gp.partition().boundaries) near = near || std::abs(u - a) < 1e-3 || std::abs(v - a) < 1e-3;
    if (near) continue;
    const Mat2 B = gp.global_cov(u, v);
    const double dv = (gp.global_value_cov(u, v + h) - gp.global_value_cov(u, v - h)) / (2 * h);
    const double du = (gp.global_value_cov(u + h, v) - gp.global_value_cov(u - h, v)) / (2 * h);
    const double duv = (gp.global_cov(u + h, v)(0, 1) - gp.global_cov(u - h, v)(0, 1)) / (2 * h);
    const double floor = 1e-3;
    EXPECT_NEAR(B(0, 1), dv, 1e-4 * std::max(std::abs(B(0, 1)), floor)) << u << " " << v;
    EXPECT_NEAR(B(1, 0), du, 1e-4 * std::max(std::abs(B(1, 0)), floor)) << u << " " << v;
    EXPECT_NEAR(B(1, 1), duv, 1e-4 * std::max(std::abs(B(1, 1)), floor)) << u << " " << v;
    ++checked;
  }
}

TEST(StringGP, QueriesOutsideDomainThrow) {
  StringGP gp(mixed_partition());
  EXPECT_THROW(gp.global_cov(-0.1, 1.0), InputError);
  EXPECT_THROW(gp.global_mean(3.5), InputError);
}

TEST(PathSampler, EmptyStringTimesGiveBoundaryStatesOnly) {
  StringGP gp(three_strings());
  Rng rng(25);
  const auto d = sample_path(gp, {}, rng);
  ASSERT_EQ(d.states.size(), 4u);
  EXPECT_EQ(d.times, gp.partition().boundaries);
  for (bool b : d.boundary) EXPECT_TRUE(b);
}

TEST(PathSampler, RejectsTimesOutsideTheirString) {
  StringGP gp(three_strings());
  EXPECT_THROW(PathSampler(gp, {{0.5}, {1.0}, {2.5}}), InputError);
  EXPECT_THROW(PathSampler(gp, {{0.5}, {1.5}}), InputError);
}

TEST(PathSampler, SameSeedSameDraw) {
  StringGP gp(three_strings());
  PathSampler s(gp, {{0.5}, {1.2, 1.7}, {2.5}});
  Rng r1(26), r2(26);
  const auto a = s.draw(r1), b = s.draw(r2);
  ASSERT_EQ(a.states.size(), b.states.size());
  for (std::size_t i = 0; i < a.states.size(); ++i) EXPECT_EQ(a.states[i], b.states[i]);
}

TEST(PathSampler, MonteCarloMomentsMatchGlobalMoments) {
  const StringPartition p = three_strings();
  StringGP gp(p);
  const std::vector<std::vector<double>> times{{0.3, 0.8}, {1.1, 1.6}, {2.2, 2.9}};
  PathSampler s(gp, times);
  Rng rng(27);
  const int n = 20000;
  const int m = 10;  // 4 boundaries + 6 interior
  std::vector<VectorXd> draws;
  std::vector<double> ts;
  VectorXd mean = VectorXd::Zero(2 * m);
  for (int i = 0; i < n; ++i) {
    const auto d = s.draw(rng);
    if (ts.empty()) ts = d.times;
    VectorXd z(2 * m);
    for (int j = 0; j < m; ++j) z.segment<2>(2 * j) = d.states[static_cast<std::size_t>(j)];
    mean += z;
    draws.push_back(z);
  }
  mean /= n;
  MatrixXd cov = MatrixXd::Zero(2 * m, 2 * m);
  for (const auto& z : draws) cov += (z - mean) * (z - mean).transpose();
  cov /= n - 1;
  for (int i = 0; i < m; ++i) {
    const double ti = ts[static_cast<std::size_t>(i)];
    const Vec2 mu = gp.global_mean(ti);
    for (int a = 0; a < 2; ++a) {
      const double var = gp.global_cov(ti, ti)(a, a);
      EXPECT_NEAR(mean(2 * i + a), mu(a), 4.0 * std::sqrt(var / n)) << "t=" << ti;
    }
    for (int j = 0; j < m; ++j) {
      const double tj = ts[static_cast<std::size_t>(j)];
      const Mat2 want = gp.global_cov(ti, tj);
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          const double vi = gp.global_cov(ti, ti)(a, a), vj = gp.global_cov(tj, tj)(b, b);
          const double se = std::sqrt((vi * vj + want(a, b) * want(a, b)) / n);
          EXPECT_NEAR(cov(2 * i + a, 2 * j + b), want(a, b), 4.0 * se) << ti << " " << tj;
        }
    }
  }
}

TEST(KernelErrorTable, ZeroForOneStringAndForMatern32) {
  for (const auto& row : kernel_error_table(KernelSpec::squared_exponential(1, 0.5), {1}, 40)) {
    EXPECT_LE(row.max, 1e-12);
    EXPECT_EQ(row.strings, 1u);
  }
  for (const auto& row : kernel_error_table(KernelSpec::matern32(1, 0.5), {2, 4}, 40)) EXPECT_LE(row.max, 1e-8);
}

TEST(KernelErrorTable, SquaredExponentialTwoStrings) {
  const auto rows = kernel_error_table(KernelSpec::squared_exponential(1, 0.5), {2}, 100);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_NEAR(rows[0].min, 0.0, 0.005);
  EXPECT_NEAR(rows[0].avg, 0.01, 0.005);
  EXPECT_NEAR(rows[0].max, 0.13, 0.02);
}

TEST(KernelErrorTable, RejectsNonStationaryAndBadArguments) {
  EXPECT_THROW(kernel_error_table(KernelSpec::linear(1, 0), {2}, 10), InputError);
  EXPECT_THROW(kernel_error_table(KernelSpec::matern32(1, 1), {0}, 10), InputError);
  EXPECT_THROW(kernel_error_table(KernelSpec::matern32(1, 1), {2}, 1), InputError);
}
