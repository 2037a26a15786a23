#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace stringgp;

namespace {

VectorXd stack(const std::vector<Vec2>& v) {
  VectorXd out(2 * static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out.segment<2>(2 * static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

}  // namespace

TEST(DerivativeGP, LeftConditioningMatchesDenseOracle) {
  Rng rng(10);
  for (Family f : {Family::SquaredExponential, Family::RationalQuadratic, Family::Matern52, Family::Periodic,
                   Family::SpectralMixture}) {
    const KernelSpec k = testutil::random_kernel(f, rng);
    const double a = 0.2, t = 0.55;
    const BoundaryCondition bc{a, 0.7, -1.3};
    const auto got = condition_left(MeanFunction::zero(), k, bc, t);
    const MatrixXd C = testutil::joint_cov(k, {t, a});
    const auto want = testutil::condition_dense(C, VectorXd::Zero(4), 0, 2, bc.state());
    EXPECT_LT((got.mean - want.mean).cwiseAbs().maxCoeff(), 1e-10) << family_name(f);
    EXPECT_LT((got.cov - want.cov).cwiseAbs().maxCoeff(), 1e-10) << family_name(f);
  }
}

TEST(DerivativeGP, BridgeConditioningMatchesDenseOracle) {
  Rng rng(11);
  for (Family f : {Family::SquaredExponential, Family::RationalQuadratic, Family::Matern32, Family::Matern52,
                   Family::SpectralMixture}) {
    const KernelSpec k = testutil::random_kernel(f, rng);
    const double a = -0.3, b = 0.4, t = 0.1;
    const BoundaryCondition ba{a, 0.4, 0.9}, bb{b, -0.2, 0.1};
    const MeanFunction m = MeanFunction::constant(0.25);
    const auto got = condition_both(m, k, ba, bb, t);
    const MatrixXd C = testutil::joint_cov(k, {t, a, b});
    VectorXd mu(6);
    mu << 0.25, 0, 0.25, 0, 0.25, 0;
    VectorXd obs(4);
    obs << ba.state(), bb.state();
    const auto want = testutil::condition_dense(C, mu, 0, 2, obs);
    EXPECT_LT((got.mean - want.mean).cwiseAbs().maxCoeff(), 1e-10) << family_name(f);
    EXPECT_LT((got.cov - want.cov).cwiseAbs().maxCoeff(), 1e-10) << family_name(f);
  }
}

TEST(DerivativeGP, EndpointsReproduceBoundaryConditions) {
  const KernelSpec k = KernelSpec::matern52(1.4, 0.3);
  const BoundaryCondition ba{0.0, 1.1, -0.4}, bb{0.8, -0.7, 2.0};
  const auto left = condition_left(MeanFunction::zero(), k, ba, 0.0);
  EXPECT_LT((left.mean - ba.state()).norm(), 1e-10);
  EXPECT_LT(left.cov.cwiseAbs().maxCoeff(), 1e-10);
  for (const auto& bc : {ba, bb}) {
    const auto both = condition_both(MeanFunction::zero(), k, ba, bb, bc.time);
    EXPECT_LT((both.mean - bc.state()).norm(), 1e-9);
    EXPECT_LT(both.cov.cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(DerivativeGP, CovarianceIgnoresBoundaryValuesAndMeanIsAffine) {
  const KernelSpec k = KernelSpec::squared_exponential(0.8, 0.35);
  const MeanFunction m = MeanFunction::constant(-0.5);
  const double a = 0.0, b = 1.0, t = 0.37;
  auto moments = [&](double va, double da, double vb, double db) {
    return condition_both(m, k, {a, va, da}, {b, vb, db}, t);
  };
  const auto m1 = moments(1, 0, 0, 0), m2 = moments(0, 2, 3, -1), m12 = moments(1, 2, 3, -1),
             m0 = moments(0, 0, 0, 0);
  EXPECT_LT((m1.cov - m2.cov).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((m12.cov - m0.cov).cwiseAbs().maxCoeff(), 1e-14);
  // mean(x + y) - mean(0) = (mean(x) - mean(0)) + (mean(y) - mean(0))
  EXPECT_LT(((m12.mean - m0.mean) - (m1.mean - m0.mean) - (m2.mean - m0.mean)).norm(), 1e-12);
}

TEST(DerivativeGP, ConditioningReducesVariance) {
  Rng rng(12);
  for (Family f : {Family::SquaredExponential, Family::Matern32, Family::RationalQuadratic}) {
    const KernelSpec k = testutil::random_kernel(f, rng);
    for (int r = 0; r < 50; ++r) {
      const double a = uniform(rng, -1.0, 0.0), b = a + uniform(rng, 0.1, 1.0);
      const double t = uniform(rng, a, b);
      const Mat2 prior = eval_block(k, t, t);
      const Mat2 left = LeftConditioner(k, a).cov(t, t);
      const Mat2 both = BridgeConditioner(k, a, b).cov(t, t);
      EXPECT_GE(testutil::min_eigenvalue(prior - left), -1e-10);
      EXPECT_GE(testutil::min_eigenvalue(left - both), -1e-10);
    }
  }
}

TEST(DerivativeGP, BridgeRejectsDegenerateAndUnorderedBoundaries) {
  EXPECT_THROW(BridgeConditioner(KernelSpec::squared_exponential(1, 1), 1.0, 0.5), InputError);
  EXPECT_THROW(BridgeConditioner(KernelSpec::periodic(1, 1, 0.5), 0.0, 0.5), DegeneracyError);
  EXPECT_THROW(BridgeConditioner(KernelSpec::linear(1, 0.0), 0.0, 0.5), DegeneracyError);
  EXPECT_THROW(condition_both(MeanFunction::zero(), KernelSpec::matern32(1, 1), {0, 0, 0}, {1, 0, 0}, 1.5),
               InputError);
}

TEST(DerivativeGP, ConditionedDrawsHitPrescribedStateAndHaveBridgeMoments) {
  // Single string pinned at both ends by a degenerate-free boundary prior:
  // draws of interior states should match the bridge mean/variance on average.
  const KernelSpec k = KernelSpec::squared_exponential(1.0, 0.3);
  StringPartition p = StringPartition::uniform(k, 0.0, 1.0, 1);
  StringGP gp(p);
  PathSampler sampler(gp, {{0.25, 0.5, 0.75}});
  Rng rng(13);
  const int n = 20000;
  std::vector<VectorXd> draws;
  VectorXd mean = VectorXd::Zero(10);
  for (int i = 0; i < n; ++i) {
    const auto d = sampler.draw(rng);
    ASSERT_EQ(d.states.size(), 5u);
    EXPECT_TRUE(d.boundary.front());
    EXPECT_TRUE(d.boundary.back());
    draws.push_back(stack(d.states));
    mean += draws.back();
  }
  mean /= n;
  MatrixXd cov = MatrixXd::Zero(10, 10);
  for (const auto& d : draws) cov += (d - mean) * (d - mean).transpose();
  cov /= n - 1;
  const MatrixXd want = testutil::joint_cov(k, {0.0, 0.25, 0.5, 0.75, 1.0});
  for (Eigen::Index i = 0; i < 10; ++i) {
    const double se = std::sqrt(want(i, i) / n);
    EXPECT_NEAR(mean(i), 0.0, 5 * se);
    for (Eigen::Index j = 0; j < 10; ++j) {
      const double cse = std::sqrt((want(i, i) * want(j, j) + want(i, j) * want(i, j)) / n);
      EXPECT_NEAR(cov(i, j), want(i, j), 5 * cse) << i << "," << j;
    }
  }
}
