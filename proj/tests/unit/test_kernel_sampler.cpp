#include <gtest/gtest.h>

#include "stringgp/kernel_sampler.hpp"
#include "test_util.hpp"

using namespace stringgp;

namespace {

struct Toy {
  MatrixXd X, Xs;
  VectorXd y;
};

Toy toy(std::size_t n) {
  Toy t;
  t.X.resize(static_cast<Eigen::Index>(n), 1);
  t.y.resize(static_cast<Eigen::Index>(n));
  Rng rng(70);
  for (Eigen::Index i = 0; i < t.X.rows(); ++i) {
    const double x = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    t.X(i, 0) = x;
    t.y(i) = (x < 0.5 ? std::sin(6 * x) : 0.3 * std::sin(30 * x)) + 0.05 * std_normal(rng);
  }
  t.Xs = VectorXd::LinSpaced(5, 0.1, 0.9);
  return t;
}

McmcDimension unit_dim(double rho = 1.0) {
  McmcDimension d;
  d.boundaries = {0.0, 1.0};
  d.lower = 0.0;
  d.upper = 1.0;
  d.family = Family::SquaredExponential;
  d.theta_size = 2;
  d.alpha = 2.0;
  d.beta = 1.0;
  d.rho = rho;
  d.init_log_theta = Eigen::Vector2d(0.0, std::log(0.2));
  return d;
}

}  // namespace

TEST(KernelSampler, RunsAndIsDeterministic) {
  const Toy t = toy(40);
  KernelSamplerConfig cfg;
  cfg.iters = 60;
  cfg.burnin = 20;
  cfg.thin = 2;
  cfg.seed = 5;
  KernelSampler a({unit_dim()}, LinkFunction::sum(1), t.X, t.y, t.Xs, 0.01, cfg);
  KernelSampler b({unit_dim()}, LinkFunction::sum(1), t.X, t.y, t.Xs, 0.01, cfg);
  const auto ca = a.run(), cb = b.run();
  ASSERT_EQ(ca.iterations.size(), 20u);
  ASSERT_EQ(ca.f_test.size(), 20u);
  for (std::size_t i = 0; i < ca.f_test.size(); ++i) {
    EXPECT_EQ(ca.f_test[i], cb.f_test[i]);
    EXPECT_EQ(ca.boundaries[i], cb.boundaries[i]);
    EXPECT_EQ(ca.f_test[i].size(), 5);
    EXPECT_GT(ca.noise[i], 0.0);
    EXPECT_TRUE(std::isfinite(ca.log_likelihood[i]));
    for (const auto& dim : ca.boundaries[i])
      for (std::size_t k = 1; k < dim.size(); ++k) EXPECT_LT(dim[k - 1], dim[k]);
  }
}

TEST(KernelSampler, LatentDrawsAverageToPredictiveMean) {
  const Toy t = toy(30);
  KernelSamplerConfig cfg;
  cfg.iters = 4000;
  cfg.seed = 6;
  cfg.learn_noise = false;
  cfg.between_models = false;
  McmcDimension pinned = unit_dim(1e-14);
  pinned.init_log_theta = Eigen::Vector2d::Zero();  // the prior centre
  KernelSampler s({pinned}, LinkFunction::sum(1), t.X, t.y, t.Xs, 0.01, cfg);
  const RegressionModel m = s.regression_model(s.state());
  const Prediction p = predict(m, t.Xs);
  const auto chain = s.run();
  for (Eigen::Index i = 0; i < t.Xs.rows(); ++i) {
    std::vector<double> v;
    for (const auto& f : chain.f_test) v.push_back(f(i));
    const auto e = testutil::batch_means(v);
    EXPECT_NEAR(e.mean, p.mean(i), 4 * std::sqrt(p.cov(i, i) / static_cast<double>(v.size())) + 1e-9);
  }
}

TEST(KernelSampler, AddThenDeleteRestoresState) {
  const Toy t = toy(20);
  KernelSamplerConfig cfg;
  KernelSampler s({unit_dim()}, LinkFunction::sum(1), t.X, t.y, t.Xs, 0.01, cfg);
  const auto before = s.state();
  const double ll = s.log_likelihood();
  ASSERT_TRUE(s.propose_add(0, 0.37, Eigen::Vector2d(0.4, -0.9), -std::numeric_limits<double>::infinity()));
  EXPECT_EQ(s.state().boundaries[0], (std::vector<double>{0.37}));
  ASSERT_TRUE(s.propose_delete(0, 0, -std::numeric_limits<double>::infinity()));
  EXPECT_TRUE(s.state().boundaries[0].empty());
  EXPECT_LT((s.state().log_theta[0][0] - before.log_theta[0][0]).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(s.log_likelihood(), ll, 1e-8);
}

TEST(KernelSampler, CollapsedLikelihoodMatchesRegression) {
  const Toy t = toy(25);
  KernelSampler s({unit_dim()}, LinkFunction::sum(1), t.X, t.y, t.Xs, 0.02, {});
  auto st = s.state();
  st.boundaries[0] = {0.5};
  st.log_theta[0].push_back(Eigen::Vector2d(-0.5, std::log(0.05)));
  EXPECT_NEAR(s.collapsed(st), log_marginal_likelihood(s.regression_model(st)), 1e-12);
}

TEST(KernelSampler, RejectsBadInputs) {
  const Toy t = toy(10);
  McmcDimension lin = unit_dim();
  lin.family = Family::Linear;
  EXPECT_THROW(KernelSampler({lin}, LinkFunction::sum(1), t.X, t.y, t.Xs, 0.01, {}), InputError);
  EXPECT_THROW(KernelSampler({unit_dim()}, LinkFunction::sum(1), t.X, t.y, t.Xs, 0.0, {}), InputError);
  EXPECT_THROW(KernelSampler({unit_dim(), unit_dim()}, LinkFunction::sum(2), t.X, t.y, t.Xs, 0.01, {}), InputError);
  KernelSamplerConfig cfg;
  cfg.iters = 2;
  cfg.burnin = 3;
  KernelSampler s({unit_dim()}, LinkFunction::sum(1), t.X, t.y, t.Xs, 0.01, cfg);
  EXPECT_THROW(s.run(), InputError);
}
