#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "stringgp/likelihoods.hpp"
#include "stringgp/mcmc.hpp"
#include "stringgp/regression.hpp"

namespace stringgp::experiments {

inline double f0(double t) {
  const double pi = std::numbers::pi;
  return t <= 0.5 ? std::sin(60.0 * pi * t) : 3.75 * std::sin(16.0 * pi * t);
}

inline double f1(double t) {
  const double pi = std::numbers::pi;
  return t <= 0.5 ? std::sin(16.0 * pi * t) : 0.5 * std::sin(32.0 * pi * t);
}

inline double f2(double u, double v) { return f0(u) * f1(v); }
inline double f3(double u, double v) { return std::sqrt(f0(u) * f0(u) + f1(v) * f1(v)); }

struct ErrorReport {
  double abs_mean = 0.0, abs_2sd = 0.0, sq_mean = 0.0, sq_2sd = 0.0;
  std::size_t points = 0;
};

inline ErrorReport error_report(const VectorXd& pred, const VectorXd& truth) {
  ErrorReport r;
  const Eigen::Index n = pred.size();
  r.points = static_cast<std::size_t>(n);
  if (n == 0) return r;
  const Eigen::ArrayXd a = (pred - truth).array().abs();
  const Eigen::ArrayXd s = a.square();
  auto sd = [](const Eigen::ArrayXd& v) {
    const double m = v.mean();
    return std::sqrt((v - m).square().sum() / static_cast<double>(std::max<Eigen::Index>(1, v.size() - 1)));
  };
  r.abs_mean = a.mean();
  r.abs_2sd = 2.0 * sd(a);
  r.sq_mean = s.mean();
  r.sq_2sd = 2.0 * sd(s);
  return r;
}

struct Dataset1D {
  std::vector<double> train_t, test_t;
  VectorXd train_y, test_y;
};

// Training samples on [0.25, 0.75] at the given frequency; test samples on
// the rest of [0, 1] at the same frequency.
inline Dataset1D extrapolation_data(int which, double frequency = 300.0) {
  Dataset1D d;
  auto f = which == 0 ? f0 : f1;
  const int n = static_cast<int>(std::lround(frequency));
  std::vector<double> ytr, yte;
  for (int i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / frequency;
    if (t >= 0.25 - 1e-12 && t <= 0.75 + 1e-12) {
      d.train_t.push_back(t);
      ytr.push_back(f(t));
    } else {
      d.test_t.push_back(t);
      yte.push_back(f(t));
    }
  }
  d.train_y = Eigen::Map<VectorXd>(ytr.data(), static_cast<Eigen::Index>(ytr.size()));
  d.test_y = Eigen::Map<VectorXd>(yte.data(), static_cast<Eigen::Index>(yte.size()));
  return d;
}

// Starting kernel for a family, scaled to the unit interval.
inline KernelSpec default_kernel(Family f, std::size_t components = 1) {
  switch (f) {
    case Family::SquaredExponential: return KernelSpec::squared_exponential(1.0, 0.1);
    case Family::RationalQuadratic: return KernelSpec::rational_quadratic(1.0, 0.1, 1.0);
    case Family::Matern32: return KernelSpec::matern32(1.0, 0.1);
    case Family::Matern52: return KernelSpec::matern52(1.0, 0.1);
    case Family::Periodic: return KernelSpec::periodic(1.0, 1.0, 0.1);
    case Family::SpectralMixture: {
      std::vector<double> p;
      for (std::size_t q = 0; q < components; ++q) {
        p.push_back(1.0 / static_cast<double>(components));
        p.push_back(2.0);
        p.push_back(5.0 * static_cast<double>(q + 1));
      }
      return KernelSpec::spectral_mixture(p);
    }
    case Family::Linear: return KernelSpec::linear(1.0, 0.0);
  }
  return KernelSpec{};
}

struct ExtrapolationResult {
  ErrorReport report;
  FitResult fit;
  Prediction prediction;
  Dataset1D data;
};

// Fits a (string) GP with the given family and number of strings on [0, 1] to
// the training restriction of f0 or f1 and scores the extrapolation.
inline ExtrapolationResult run_extrapolation(int which, Family family, std::size_t strings, std::uint64_t seed,
                                             std::size_t components = 1, int restarts = 5) {
  ExtrapolationResult out;
  out.data = extrapolation_data(which);
  const auto& d = out.data;
  RegressionModel m;
  m.dims = {StringPartition::uniform(default_kernel(family, components), 0.0, 1.0, strings)};
  m.link = LinkFunction::sum(1);
  m.X = Eigen::Map<const VectorXd>(d.train_t.data(), static_cast<Eigen::Index>(d.train_t.size()));
  m.y = d.train_y;
  m.noise.variances = {1e-4};
  m.noise.floor = 1e-8;
  FitConfig cfg;
  cfg.seed = seed;
  cfg.restarts = restarts;
  cfg.learn_boundaries = strings > 1;
  out.fit = fit_mle(m, cfg);
  const MatrixXd Xs = Eigen::Map<const VectorXd>(d.test_t.data(), static_cast<Eigen::Index>(d.test_t.size()));
  out.prediction = predict(out.fit.model, Xs);
  out.report = error_report(out.prediction.mean, d.test_y);
  return out;
}

// Product-link regression on a full Cartesian grid (u_i, v_j): the value
// covariance is the Kronecker product of the two axis Gram matrices.
struct GridModel {
  StringPartition u, v;
  double noise = 1e-4;
  double floor = 1e-8;
  std::vector<double> gu, gv;  // axis coordinates
  MatrixXd Y;                  // Y(i, j) at (gu[i], gv[j])
};

struct GridSystem {
  MatrixXd Qu, Qv, A;
  VectorXd lu, lv;
  double log_likelihood = 0.0;
};

inline GridSystem grid_solve(const GridModel& m) {
  GridSystem g;
  const StringGP su(m.u, false), sv(m.v, false);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eu(su.value_gram(m.gu)), ev(sv.value_gram(m.gv));
  g.Qu = eu.eigenvectors();
  g.Qv = ev.eigenvectors();
  g.lu = eu.eigenvalues().cwiseMax(0.0);
  g.lv = ev.eigenvalues().cwiseMax(0.0);
  const double s2 = m.noise + m.floor;
  const MatrixXd D = (g.lu * g.lv.transpose()).array() + s2;
  const MatrixXd At = (g.Qu.transpose() * m.Y * g.Qv).array() / D.array();
  g.A = g.Qu * At * g.Qv.transpose();
  const double n = static_cast<double>(m.Y.size());
  g.log_likelihood = -0.5 * (m.Y.array() * g.A.array()).sum() - 0.5 * D.array().log().sum() -
                     0.5 * n * std::log(2.0 * std::numbers::pi);
  return g;
}

inline MatrixXd grid_predict(const GridModel& m, const std::vector<double>& tu, const std::vector<double>& tv) {
  const GridSystem g = grid_solve(m);
  const StringGP su(m.u, false), sv(m.v, false);
  return su.value_gram(tu, m.gu) * g.A * sv.value_gram(m.gv, tv);
}

inline GridModel fit_grid(const GridModel& init, const FitConfig& cfg) {
  RegressionModel pu, pv;
  pu.dims = {init.u};
  pv.dims = {init.v};
  ParameterMap pm{false, cfg.learn_boundaries};
  const Eigen::Index nu = pm.pack(pu).size();
  auto unpack = [&](const VectorXd& x) {
    GridModel m = init;
    m.u = pm.unpack(pu, x.head(nu)).dims[0];
    m.v = pm.unpack(pv, x.segment(nu, x.size() - nu - 1)).dims[0];
    m.noise = std::exp(x(x.size() - 1));
    return m;
  };
  auto objective = [&](const VectorXd& x) {
    try {
      const double ll = grid_solve(unpack(x)).log_likelihood;
      return std::isfinite(ll) ? -ll : std::numeric_limits<double>::infinity();
    } catch (const std::exception&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  auto pack = [&](const GridModel& m) {
    RegressionModel a = pu, b = pv;
    a.dims = {m.u};
    b.dims = {m.v};
    const VectorXd xa = pm.pack(a), xb = pm.pack(b);
    VectorXd x(xa.size() + xb.size() + 1);
    x << xa, xb, std::log(m.noise);
    return x;
  };
  // Spectral starting values along each axis from the most energetic slice.
  GridModel start = init;
  {
    RegressionModel a;
    a.dims = {init.u};
    a.X = Eigen::Map<const VectorXd>(init.gu.data(), static_cast<Eigen::Index>(init.gu.size()));
    Eigen::Index best = 0;
    init.Y.colwise().squaredNorm().maxCoeff(&best);
    a.y = init.Y.col(best);
    start.u = spectral_initialization(a).dims[0];
    RegressionModel b;
    b.dims = {init.v};
    b.X = Eigen::Map<const VectorXd>(init.gv.data(), static_cast<Eigen::Index>(init.gv.size()));
    init.Y.rowwise().squaredNorm().maxCoeff(&best);
    b.y = init.Y.row(best).transpose();
    start.v = spectral_initialization(b).dims[0];
  }
  std::vector<VectorXd> starts{pack(init), pack(start)};
  Rng rng = substream(cfg.seed, {0x9e1d});
  for (int r = 0; r < cfg.restarts; ++r) {
    VectorXd x = starts[1];
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) += cfg.restart_spread * std_normal(rng);
    starts.push_back(x);
  }
  double best = std::numeric_limits<double>::infinity();
  GridModel out = init;
  for (const auto& s : starts) {
    const auto res = minimize_bfgs(objective, s, cfg.optimizer);
    if (res.value < best) {
      best = res.value;
      out = unpack(res.x);
    }
  }
  if (!std::isfinite(best)) throw NumericalError("grid likelihood not finite at any starting point");
  return out;
}

struct InterpolationResult {
  ErrorReport report;
  GridModel model;
};

// f2 or f3 observed on ([0, 0.4] U [0.6, 1])^2 and predicted on the rest of the
// regular grid with `per_axis` + 1 points per axis.
inline InterpolationResult run_interpolation(int which, Family family, std::size_t strings, std::uint64_t seed,
                                             std::size_t per_axis = 100, int restarts = 3) {
  std::vector<double> all, train_axis;
  for (std::size_t i = 0; i <= per_axis; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(per_axis);
    all.push_back(t);
    if (t <= 0.4 + 1e-12 || t >= 0.6 - 1e-12) train_axis.push_back(t);
  }
  auto f = which == 2 ? f2 : f3;
  GridModel m;
  m.u = StringPartition::uniform(default_kernel(family), 0.0, 1.0, strings);
  m.v = m.u;
  m.gu = train_axis;
  m.gv = train_axis;
  m.Y.resize(static_cast<Eigen::Index>(train_axis.size()), static_cast<Eigen::Index>(train_axis.size()));
  for (std::size_t i = 0; i < train_axis.size(); ++i)
    for (std::size_t j = 0; j < train_axis.size(); ++j)
      m.Y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = f(train_axis[i], train_axis[j]);
  FitConfig cfg;
  cfg.seed = seed;
  cfg.restarts = restarts;
  cfg.learn_boundaries = strings > 1;
  InterpolationResult out;
  out.model = fit_grid(m, cfg);
  const MatrixXd P = grid_predict(out.model, all, all);
  std::vector<double> pred, truth;
  for (std::size_t i = 0; i < all.size(); ++i)
    for (std::size_t j = 0; j < all.size(); ++j) {
      const bool held_out = (all[i] > 0.4 + 1e-12 && all[i] < 0.6 - 1e-12) || (all[j] > 0.4 + 1e-12 && all[j] < 0.6 - 1e-12);
      if (!held_out) continue;
      pred.push_back(P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      truth.push_back(f(all[i], all[j]));
    }
  out.report = error_report(Eigen::Map<VectorXd>(pred.data(), static_cast<Eigen::Index>(pred.size())),
                            Eigen::Map<VectorXd>(truth.data(), static_cast<Eigen::Index>(truth.size())));
  return out;
}

// Heteroskedastic analogue of the motorcycle data: flat signal with small
// noise on [0, 20), a damped oscillation with large noise on [20, 40) and
// moderate noise on [40, 60]. Group g has noise sd `sd[g]`.
struct Heteroskedastic {
  VectorXd t, y;
  std::vector<double> cuts{0.0, 20.0, 40.0, 60.0};
  std::vector<double> sd{1.0, 20.0, 8.0};
};

inline double motorcycle_signal(double t) {
  if (t < 20.0) return 0.0;
  return -80.0 * std::exp(-(t - 20.0) / 12.0) * std::sin(2.0 * std::numbers::pi * (t - 20.0) / 16.0);
}

inline Heteroskedastic motorcycle_synthetic(std::size_t n, std::uint64_t seed) {
  Heteroskedastic h;
  Rng rng = substream(seed, {0x3070});
  h.t.resize(static_cast<Eigen::Index>(n));
  h.y.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double t = 60.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    const std::size_t g = t < 20.0 ? 0 : (t < 40.0 ? 1 : 2);
    h.t(static_cast<Eigen::Index>(i)) = t;
    h.y(static_cast<Eigen::Index>(i)) = motorcycle_signal(t) + h.sd[g] * std_normal(rng);
  }
  return h;
}

struct HeteroskedasticResult {
  FitResult fit;
  std::vector<double> group_sd;         // mean predictive sd per noise group
  std::vector<double> noise_sd;         // learned noise sd per group
  double rmse = 0.0;                    // of the posterior mean against the signal
};

// Per-string noise string GP with boundaries at the regime changes.
inline HeteroskedasticResult run_motorcycle(std::uint64_t seed, std::size_t n = 133, Family family = Family::Matern32,
                                            int restarts = 3) {
  const Heteroskedastic h = motorcycle_synthetic(n, seed);
  RegressionModel m;
  StringPartition p;
  p.boundaries = h.cuts;
  KernelSpec k = default_kernel(family);
  k.params[0] = 100.0;
  k.params[1] = 5.0;
  p.strings.assign(3, StringSpec{k, MeanFunction::zero()});
  m.dims = {p};
  m.noise.mode = NoiseMode::PerString;
  m.noise.variances = {10.0, 10.0, 10.0};
  m.noise.floor = 1e-6;
  m.X = h.t;
  m.y = h.y;
  FitConfig cfg;
  cfg.seed = seed;
  cfg.restarts = restarts;
  HeteroskedasticResult r;
  r.fit = fit_mle(m, cfg);
  const Prediction pr = predict(r.fit.model, m.X);
  const VectorXd sd = pr.std();
  std::vector<double> acc(3, 0.0), cnt(3, 0.0);
  double se = 0.0;
  for (Eigen::Index i = 0; i < h.t.size(); ++i) {
    const std::size_t g = r.fit.model.group_of(h.t.segment(i, 1));
    acc[g] += sd(i);
    cnt[g] += 1.0;
    se += std::pow(pr.mean(i) - motorcycle_signal(h.t(i)), 2);
  }
  for (std::size_t g = 0; g < 3; ++g) {
    r.group_sd.push_back(acc[g] / std::max(cnt[g], 1.0));
    r.noise_sd.push_back(std::sqrt(r.fit.model.noise.variances[g] + r.fit.model.noise.floor));
  }
  r.rmse = std::sqrt(se / static_cast<double>(h.t.size()));
  return r;
}

// Large-N additive regression standing in for the airline delay data: inputs
// on a 0.001 lattice in [0, 1]^d, a regime change in the first input.
struct AdditiveData {
  MatrixXd X_train, X_test;
  VectorXd y_train, f_test;
  double noise_sd = 0.3;
};

inline double airline_signal(const VectorXd& x) {
  const double pi = std::numbers::pi;
  double f = x(0) < 0.5 ? std::sin(4.0 * pi * x(0)) : 0.5 * std::sin(12.0 * pi * x(0));
  for (Eigen::Index j = 1; j < x.size(); ++j) f += std::cos(2.0 * pi * (static_cast<double>(j) * x(j)));
  return f;
}

inline AdditiveData airline_synthetic(std::size_t n_train, std::size_t n_test, std::size_t d, std::uint64_t seed) {
  if (d == 0) throw InputError("at least one input dimension required");
  AdditiveData a;
  Rng rng = substream(seed, {0xa1e});
  auto draw = [&](std::size_t n, MatrixXd& X) {
    X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < X.rows(); ++i)
      for (Eigen::Index j = 0; j < X.cols(); ++j) X(i, j) = std::round(1000.0 * uniform(rng)) / 1000.0;
  };
  draw(n_train, a.X_train);
  draw(n_test, a.X_test);
  a.y_train.resize(a.X_train.rows());
  for (Eigen::Index i = 0; i < a.X_train.rows(); ++i)
    a.y_train(i) = airline_signal(a.X_train.row(i).transpose()) + a.noise_sd * std_normal(rng);
  a.f_test.resize(a.X_test.rows());
  for (Eigen::Index i = 0; i < a.X_test.rows(); ++i) a.f_test(i) = airline_signal(a.X_test.row(i).transpose());
  return a;
}

struct SamplerReport {
  double mse = 0.0;          // posterior-mean predictions against the truth at test inputs
  double seconds = 0.0;
  OperationCounts ops;
  std::vector<double> mean_changepoints;  // posterior mean count per dimension
  McmcChain chain;
};

inline SamplerReport run_airline(std::size_t n_train, std::size_t d, const McmcConfig& cfg, std::uint64_t seed,
                                 std::size_t n_test = 200) {
  const AdditiveData a = airline_synthetic(n_train, n_test, d, seed);
  McmcModel model = McmcModel::from_inputs(a.X_train, a.X_test, Family::SquaredExponential, 2, 1.0, 1.0, 1.0);
  for (auto& s : model.slots) {
    const auto [al, be] = default_hyperprior(s.boundaries.size(), s.upper - s.lower);
    s.alpha = al;
    s.beta = be;
    s.init_log_theta = (VectorXd(2) << std::log(0.5), std::log(0.2)).finished();
  }
  GaussianLikelihood lik(a.y_train, a.noise_sd * a.noise_sd, 2.0, 0.1);
  const auto t0 = std::chrono::steady_clock::now();
  McmcSampler sampler(model, lik, cfg);
  SamplerReport r;
  r.chain = sampler.run();
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.ops = sampler.operations();
  VectorXd mean = VectorXd::Zero(a.f_test.size());
  for (const auto& f : r.chain.f_test) mean += f;
  if (!r.chain.f_test.empty()) mean /= static_cast<double>(r.chain.f_test.size());
  r.mse = (mean - a.f_test).squaredNorm() / static_cast<double>(std::max<Eigen::Index>(1, a.f_test.size()));
  r.mean_changepoints.assign(d, 0.0);
  for (const auto& cps : r.chain.changepoints)
    for (std::size_t j = 0; j < d; ++j) r.mean_changepoints[j] += static_cast<double>(cps[j].size());
  for (auto& v : r.mean_changepoints) v /= static_cast<double>(std::max<std::size_t>(1, r.chain.changepoints.size()));
  return r;
}

struct PortfolioReport {
  double excess_log_wealth = 0.0;  // posterior-mean portfolio against equal weights
  double sharpe = 0.0, benchmark_sharpe = 0.0;
  double seconds = 0.0;
  McmcChain chain;
};

// Gamma-utility sampler on a synthetic panel; the latent function maps an
// asset characteristic to an unnormalized log portfolio weight.
inline PortfolioReport run_portfolio(std::size_t assets, std::size_t periods, const McmcConfig& cfg,
                                     std::uint64_t seed, UtilityKind kind = UtilityKind::SharpeRatio) {
  const MarketData m = synthetic_market(assets, periods, 0.004, seed);
  MatrixXd X(static_cast<Eigen::Index>(assets * periods), 1);
  for (std::size_t t = 0; t < periods; ++t)
    for (std::size_t i = 0; i < assets; ++i)
      X(static_cast<Eigen::Index>(t * assets + i), 0) =
          std::round(1000.0 * m.characteristics(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i))) / 1000.0;
  const auto [shape, rate] = kind == UtilityKind::SharpeRatio ? gamma_from_moments(2.0, 1.0)
                                                              : gamma_from_moments(0.5, 0.25);
  GammaUtilityLikelihood lik(m, kind, shape, rate);
  McmcModel model = McmcModel::from_inputs(X, MatrixXd(0, 1), Family::SquaredExponential, 2, 1.0, 1.0, 1.0);
  for (auto& s : model.slots) {
    const auto [al, be] = default_hyperprior(s.boundaries.size(), s.upper - s.lower);
    s.alpha = al;
    s.beta = be;
  }
  McmcConfig c = cfg;
  c.record_train = true;
  const auto t0 = std::chrono::steady_clock::now();
  PortfolioReport r;
  r.chain = run_sampler(model, lik, c);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  VectorXd g = VectorXd::Zero(X.rows());
  for (const auto& f : r.chain.f_train) g += f;
  if (!r.chain.f_train.empty()) g /= static_cast<double>(r.chain.f_train.size());
  r.excess_log_wealth = portfolio_utility(g, m, UtilityKind::ExcessReturn);
  r.sharpe = portfolio_utility(g, m, UtilityKind::SharpeRatio);
  r.benchmark_sharpe = portfolio_utility(VectorXd::Zero(X.rows()), m, UtilityKind::SharpeRatio);
  return r;
}

}  // namespace stringgp::experiments
