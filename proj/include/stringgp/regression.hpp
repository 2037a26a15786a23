#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <future>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include "stringgp/membrane.hpp"
#include "stringgp/optimizer.hpp"
#include "stringgp/random.hpp"
#include "stringgp/string_gp.hpp"

namespace stringgp {

enum class NoiseMode { Shared, PerString };

struct NoiseModel {
  NoiseMode mode = NoiseMode::Shared;
  std::vector<double> variances{1e-2};
  // Added to every learned variance; keeps noiseless data sets well posed.
  double floor = 0.0;
};

// Maximum marginal likelihood regression under a string GP (or string GP
// kernel) prior. X holds one row per input.
struct RegressionModel {
  std::vector<StringPartition> dims;
  LinkFunction link = LinkFunction::sum(1);
  NoiseModel noise;
  MatrixXd X;
  VectorXd y;

  std::size_t dimension() const { return dims.size(); }
  std::size_t num_groups() const {
    if (noise.mode == NoiseMode::Shared) return 1;
    std::size_t g = 1;
    for (const auto& p : dims) g *= p.num_strings();
    return g;
  }

  // Noise group of an input: mixed-radix index of the strings its coordinates fall in.
  std::size_t group_of(const VectorXd& x) const {
    if (noise.mode == NoiseMode::Shared) return 0;
    std::size_t g = 0;
    for (std::size_t j = 0; j < dims.size(); ++j) g = g * dims[j].num_strings() + dims[j].locate(x(j));
    return g;
  }

  void validate() const {
    if (dims.empty()) throw InputError("regression model needs at least one input dimension");
    if (link.dimension != dims.size()) throw InputError("link dimension does not match the number of input dimensions");
    link.validate();
    for (const auto& p : dims) p.validate(false);
    if (noise.variances.size() != num_groups())
      throw InputError("expected " + std::to_string(num_groups()) + " noise variances");
    for (double v : noise.variances)
      if (!(v >= 0.0)) throw InputError("noise variances must be non-negative");
    if (X.rows() == 0) throw InputError("empty data set");
    if (static_cast<std::size_t>(X.cols()) != dims.size()) throw InputError("input columns do not match model dimension");
    if (y.size() != X.rows()) throw InputError("target length does not match inputs");
  }
};

namespace detail {

inline std::vector<StringGP> build_dims(const std::vector<StringPartition>& dims) {
  std::vector<StringGP> out;
  out.reserve(dims.size());
  for (const auto& p : dims) out.emplace_back(p, false);
  return out;
}

inline std::vector<double> column(const MatrixXd& X, std::size_t j) {
  std::vector<double> c(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) c[static_cast<std::size_t>(i)] = X(i, static_cast<Eigen::Index>(j));
  return c;
}

}  // namespace detail

// Prior mean of f at each row of A and the value covariance between rows of A and B.
inline void prior_moments(const std::vector<StringGP>& gps, const LinkFunction& link, const MatrixXd& A,
                          const MatrixXd& B, VectorXd* mean_a, MatrixXd* cov_ab) {
  const std::size_t d = gps.size();
  const auto c = link.coefficients();
  std::vector<MatrixXd> G(d);
  std::vector<std::vector<double>> ma(d), mb(d);
  bool zero_mean = true;
  for (std::size_t j = 0; j < d; ++j) {
    const auto ca = detail::column(A, j), cb = detail::column(B, j);
    if (cov_ab) G[j] = gps[j].value_gram(ca, cb);
    ma[j].resize(ca.size());
    mb[j].resize(cb.size());
    for (std::size_t i = 0; i < ca.size(); ++i) ma[j][i] = gps[j].global_mean(ca[i])(0);
    for (std::size_t i = 0; i < cb.size(); ++i) mb[j][i] = gps[j].global_mean(cb[i])(0);
    for (double v : ma[j]) zero_mean = zero_mean && v == 0.0;
    for (double v : mb[j]) zero_mean = zero_mean && v == 0.0;
  }
  const Eigen::Index na = A.rows(), nb = B.rows();
  if (mean_a) {
    mean_a->resize(na);
    std::vector<double> m(d);
    for (Eigen::Index i = 0; i < na; ++i) {
      for (std::size_t j = 0; j < d; ++j) m[j] = ma[j][static_cast<std::size_t>(i)];
      (*mean_a)(i) = detail::first_moment(c, m, detail::kNone);
    }
  }
  if (!cov_ab) return;
  if (link.kind == LinkKind::SymmetricSum) {
    *cov_ab = MatrixXd::Zero(na, nb);
    for (std::size_t j = 0; j < d; ++j) *cov_ab += G[j];
    return;
  }
  cov_ab->resize(na, nb);
  std::vector<double> mu(d), mv(d), k(d);
  for (Eigen::Index i = 0; i < na; ++i)
    for (Eigen::Index l = 0; l < nb; ++l) {
      for (std::size_t j = 0; j < d; ++j) {
        mu[j] = zero_mean ? 0.0 : ma[j][static_cast<std::size_t>(i)];
        mv[j] = zero_mean ? 0.0 : mb[j][static_cast<std::size_t>(l)];
        k[j] = G[j](i, l);
      }
      (*cov_ab)(i, l) = membrane_value_cov(c, mu, mv, k);
    }
}

struct GramSystem {
  std::vector<StringGP> gps;
  VectorXd residual;  // y minus prior mean
  linalg::JitteredCholesky chol;
  VectorXd alpha;     // K_y^{-1} residual
};

inline GramSystem assemble(const RegressionModel& m) {
  GramSystem g;
  g.gps = detail::build_dims(m.dims);
  VectorXd mean;
  MatrixXd K;
  prior_moments(g.gps, m.link, m.X, m.X, &mean, &K);
  for (Eigen::Index i = 0; i < m.X.rows(); ++i)
    K(i, i) += m.noise.floor + m.noise.variances[m.group_of(m.X.row(i).transpose())];
  g.residual = m.y - mean;
  g.chol = linalg::cholesky(K);
  g.alpha = g.chol.llt.solve(g.residual);
  return g;
}

inline double log_marginal_likelihood(const RegressionModel& m) {
  m.validate();
  const GramSystem g = assemble(m);
  const double logdet = 2.0 * g.chol.llt.matrixLLT().diagonal().array().log().sum();
  const double n = static_cast<double>(m.y.size());
  return -0.5 * g.residual.dot(g.alpha) - 0.5 * logdet - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

struct Prediction {
  VectorXd mean;
  MatrixXd cov;
  VectorXd std() const { return cov.diagonal().cwiseMax(0.0).cwiseSqrt(); }
};

// Posterior law of the noise-free latent values at the rows of Xs.
inline Prediction predict(const RegressionModel& m, const MatrixXd& Xs) {
  m.validate();
  if (static_cast<std::size_t>(Xs.cols()) != m.dimension()) throw InputError("test inputs have wrong dimension");
  const GramSystem g = assemble(m);
  VectorXd ms;
  MatrixXd Ksx, Kss;
  prior_moments(g.gps, m.link, Xs, m.X, &ms, &Ksx);
  prior_moments(g.gps, m.link, Xs, Xs, nullptr, &Kss);
  Prediction p;
  p.mean = ms + Ksx * g.alpha;
  const MatrixXd V = g.chol.llt.matrixL().solve(Ksx.transpose());
  p.cov = Kss - V.transpose() * V;
  return p;
}

// Free parameters in unconstrained coordinates: log kernel parameters (raw
// for signed ones), log noise variances, and boundary increment logits.
struct ParameterMap {
  bool learn_noise = true;
  bool learn_boundaries = false;

  VectorXd pack(const RegressionModel& m) const {
    std::vector<double> v;
    for (const auto& p : m.dims)
      for (const auto& s : p.strings)
        for (std::size_t i = 0; i < s.kernel.size(); ++i)
          v.push_back(s.kernel.positive(i) ? std::log(s.kernel.params[i]) : s.kernel.params[i]);
    if (learn_noise)
      for (double nv : m.noise.variances) v.push_back(std::log(std::max(nv, 1e-300)));
    if (learn_boundaries)
      for (const auto& p : m.dims) {
        const std::size_t K = p.num_strings();
        const double last = p.boundaries[K] - p.boundaries[K - 1];
        for (std::size_t s = 0; s + 1 < K; ++s) v.push_back(std::log((p.boundaries[s + 1] - p.boundaries[s]) / last));
      }
    return Eigen::Map<VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  RegressionModel unpack(const RegressionModel& base, const VectorXd& v) const {
    RegressionModel m = base;
    Eigen::Index i = 0;
    for (auto& p : m.dims)
      for (auto& s : p.strings)
        for (std::size_t k = 0; k < s.kernel.size(); ++k, ++i)
          s.kernel.params[k] = s.kernel.positive(k) ? std::exp(v(i)) : v(i);
    if (learn_noise)
      for (auto& nv : m.noise.variances) nv = std::exp(v(i++));
    if (learn_boundaries)
      for (auto& p : m.dims) {
        const std::size_t K = p.num_strings();
        std::vector<double> w(K, 1.0);
        for (std::size_t s = 0; s + 1 < K; ++s) w[s] = std::exp(v(i++));
        double total = 0.0;
        for (double x : w) total += x;
        const double lo = p.boundaries.front(), span = p.boundaries.back() - lo;
        double acc = 0.0;
        for (std::size_t s = 0; s + 1 < K; ++s) {
          acc += w[s];
          p.boundaries[s + 1] = lo + span * acc / total;
        }
      }
    return m;
  }

  std::size_t size(const RegressionModel& m) const { return static_cast<std::size_t>(pack(m).size()); }
};

struct FitConfig {
  OptimizerConfig optimizer;
  int restarts = 5;
  std::uint64_t seed = 0;
  bool learn_noise = true;
  bool learn_boundaries = false;
  bool spectral_init = true;
  double restart_spread = 1.0;
};

struct FitResult {
  RegressionModel model;
  double log_likelihood = -std::numeric_limits<double>::infinity();
  std::size_t num_parameters = 0;
  int starts_tried = 0;
  bool line_search_failed = false;
};

// Dominant frequency of (t, y) samples by a direct periodogram scan.
inline double dominant_frequency(const std::vector<double>& t, const std::vector<double>& y) {
  if (t.size() < 4) return 0.0;
  const auto [tmin, tmax] = std::minmax_element(t.begin(), t.end());
  const double span = *tmax - *tmin;
  if (!(span > 0.0)) return 0.0;
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  const double dt = span / static_cast<double>(t.size() - 1);
  const double fmax = 0.5 / dt, df = 0.1 / span;
  double best = 0.0, best_power = -1.0;
  for (double f = 1.0 / span; f <= fmax; f += df) {
    std::complex<double> acc = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i)
      acc += (y[i] - mean) * std::polar(1.0, -2.0 * std::numbers::pi * f * t[i]);
    const double pw = std::norm(acc);
    if (pw > best_power) {
      best_power = pw;
      best = f;
    }
  }
  return best;
}

// Data-driven starting values: output variance from the data in each string,
// and period or spectral location from the dominant frequency there.
inline RegressionModel spectral_initialization(const RegressionModel& m) {
  RegressionModel out = m;
  for (std::size_t j = 0; j < out.dims.size(); ++j) {
    auto& p = out.dims[j];
    for (std::size_t s = 0; s < p.num_strings(); ++s) {
      std::vector<double> t, y;
      for (Eigen::Index i = 0; i < m.X.rows(); ++i) {
        const double x = m.X(i, static_cast<Eigen::Index>(j));
        if (x >= p.boundaries[s] && x <= p.boundaries[s + 1]) {
          t.push_back(x);
          y.push_back(m.y(i));
        }
      }
      if (t.size() < 4) continue;
      std::vector<std::size_t> idx(t.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return t[a] < t[b]; });
      std::vector<double> ts, ys;
      for (auto i : idx) {
        ts.push_back(t[i]);
        ys.push_back(y[i]);
      }
      double mean = 0.0, var = 0.0;
      for (double v : ys) mean += v;
      mean /= static_cast<double>(ys.size());
      for (double v : ys) var += (v - mean) * (v - mean);
      var = std::max(var / static_cast<double>(ys.size()), 1e-6);
      const double f = dominant_frequency(ts, ys);
      auto& k = p.strings[s].kernel;
      if (k.family == Family::Periodic && f > 0.0) {
        k.params = {var, 1.0, 1.0 / f};
      } else if (k.family == Family::SpectralMixture && f > 0.0) {
        const double span = ts.back() - ts.front();
        for (std::size_t q = 0; q < k.components(); ++q) {
          k.params[3 * q] = var / static_cast<double>(k.components());
          k.params[3 * q + 1] = 1.0 / span;
          k.params[3 * q + 2] = f * static_cast<double>(q + 1);
        }
      } else if (k.family != Family::Linear) {
        k.params[0] = var;
      }
    }
  }
  return out;
}

inline bool has_spectral_kernels(const RegressionModel& m) {
  for (const auto& p : m.dims)
    for (const auto& s : p.strings)
      if (s.kernel.family == Family::Periodic || s.kernel.family == Family::SpectralMixture) return true;
  return false;
}

inline FitResult fit_mle(const RegressionModel& init, const FitConfig& cfg = {}) {
  init.validate();
  ParameterMap pm{cfg.learn_noise, cfg.learn_boundaries};
  auto objective = [&](const VectorXd& v) -> double {
    try {
      const RegressionModel m = pm.unpack(init, v);
      const double ll = log_marginal_likelihood(m);
      return std::isfinite(ll) ? -ll : std::numeric_limits<double>::infinity();
    } catch (const std::exception&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  std::vector<VectorXd> starts{pm.pack(init)};
  if (cfg.spectral_init && has_spectral_kernels(init)) starts.push_back(pm.pack(spectral_initialization(init)));
  Rng rng = substream(cfg.seed, {0x5eed});
  const VectorXd centre = starts.back();
  for (int r = 0; r < cfg.restarts; ++r) {
    VectorXd v = centre;
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) += cfg.restart_spread * std_normal(rng);
    starts.push_back(v);
  }
  FitResult best;
  best.model = init;
  best.num_parameters = static_cast<std::size_t>(starts[0].size());
  // Starts run concurrently; results are reduced in start order so the fit is deterministic.
  std::vector<std::future<OptimizerResult>> runs;
  for (const auto& s : starts)
    runs.push_back(std::async(std::launch::async, [&objective, &cfg, s] { return minimize_bfgs(objective, s, cfg.optimizer); }));
  for (auto& run : runs) {
    ++best.starts_tried;
    const auto res = run.get();
    if (std::isfinite(res.value) && -res.value > best.log_likelihood) {
      best.log_likelihood = -res.value;
      best.model = pm.unpack(init, res.x);
      best.line_search_failed = res.line_search_failed;
    }
  }
  if (!std::isfinite(best.log_likelihood)) throw NumericalError("marginal likelihood not finite at any starting point");
  return best;
}

enum class InformationCriterion { AIC, BIC };

inline double information_criterion(const FitResult& f, InformationCriterion c, std::size_t n) {
  const double k = static_cast<double>(f.num_parameters);
  return c == InformationCriterion::AIC ? 2.0 * k - 2.0 * f.log_likelihood
                                        : k * std::log(static_cast<double>(n)) - 2.0 * f.log_likelihood;
}

struct BoundarySelection {
  std::vector<std::size_t> counts;  // chosen number of strings per dimension
  FitResult fit;
  std::vector<std::pair<std::vector<std::size_t>, double>> scores;
};

// Fits every combination of candidate string counts (one list per dimension,
// kernels copied from the first string of each template dimension) and keeps
// the one minimizing the information criterion; ties go to fewer strings.
inline BoundarySelection select_boundaries(const RegressionModel& tmpl,
                                           const std::vector<std::vector<std::size_t>>& candidates,
                                           InformationCriterion crit, FitConfig cfg = {}) {
  tmpl.validate();
  if (candidates.size() != tmpl.dimension()) throw InputError("one candidate list per dimension required");
  std::vector<std::size_t> idx(candidates.size(), 0);
  for (const auto& c : candidates)
    if (c.empty()) throw InputError("empty candidate list");
  std::vector<std::vector<std::size_t>> combos;
  while (true) {
    std::vector<std::size_t> counts(candidates.size());
    for (std::size_t j = 0; j < candidates.size(); ++j) counts[j] = candidates[j][idx[j]];
    combos.push_back(counts);
    std::size_t j = 0;
    while (j < idx.size() && ++idx[j] == candidates[j].size()) idx[j++] = 0;
    if (j == idx.size()) break;
  }
  std::vector<std::future<FitResult>> fits;
  for (const auto& counts : combos) {
    RegressionModel m = tmpl;
    for (std::size_t j = 0; j < counts.size(); ++j) {
      const auto& p = tmpl.dims[j];
      m.dims[j] = StringPartition::uniform(p.strings[0].kernel, p.lower(), p.upper(), counts[j], p.strings[0].mean);
    }
    m.noise.variances.assign(m.num_groups(), tmpl.noise.variances.front());
    fits.push_back(std::async(std::launch::async, [m = std::move(m), cfg] { return fit_mle(m, cfg); }));
  }
  BoundarySelection best;
  double best_score = std::numeric_limits<double>::infinity();
  std::size_t best_total = 0;
  for (std::size_t c = 0; c < combos.size(); ++c) {
    FitResult fr = fits[c].get();
    const auto& counts = combos[c];
    std::size_t total = 0;
    for (std::size_t n : counts) total += n;
    const double score = information_criterion(fr, crit, static_cast<std::size_t>(tmpl.y.size()));
    best.scores.emplace_back(counts, score);
    if (score < best_score || (score == best_score && total < best_total)) {
      best_score = score;
      best_total = total;
      best.counts = counts;
      best.fit = std::move(fr);
    }
  }
  return best;
}

}  // namespace stringgp
