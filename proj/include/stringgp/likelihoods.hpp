#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "stringgp/errors.hpp"
#include "stringgp/linalg.hpp"
#include "stringgp/random.hpp"

namespace stringgp {

// log p(D | f, u) plus the prior and update rule of the extra parameters u.
class Likelihood {
 public:
  virtual ~Likelihood() = default;
  virtual double log_likelihood(const VectorXd& f, const VectorXd& u) const = 0;
  virtual VectorXd initial_u() const { return {}; }
  // One Markov transition of u given f, leaving p(u | f, D) invariant.
  virtual void update_u(const VectorXd& /*f*/, VectorXd& /*u*/, Rng& /*rng*/) const {}
  virtual std::string name() const = 0;
};

class FlatLikelihood final : public Likelihood {
 public:
  double log_likelihood(const VectorXd&, const VectorXd&) const override { return 0.0; }
  std::string name() const override { return "flat"; }
};

// y_i = f_i + eps_i with eps_i ~ N(0, u[0]) and u[0] ~ InvGamma(a, b).
class GaussianLikelihood final : public Likelihood {
 public:
  enum class Update { Conjugate, MetropolisHastings, Fixed };

  GaussianLikelihood(VectorXd y, double noise_variance, double prior_shape = 1.0, double prior_scale = 1.0,
                     Update update = Update::Conjugate, double proposal_scale = 0.3)
      : y_(std::move(y)), init_(noise_variance), a_(prior_shape), b_(prior_scale), update_(update),
        step_(proposal_scale) {
    if (!(noise_variance > 0.0)) throw InputError("noise variance must be positive");
  }

  double log_likelihood(const VectorXd& f, const VectorXd& u) const override {
    if (f.size() != y_.size()) throw InputError("latent vector does not match targets");
    const double s2 = u(0);
    const double n = static_cast<double>(y_.size());
    return -0.5 * (y_ - f).squaredNorm() / s2 - 0.5 * n * std::log(2.0 * std::numbers::pi * s2);
  }

  VectorXd initial_u() const override { return VectorXd::Constant(1, init_); }

  double log_prior(double s2) const {
    if (!(s2 > 0.0)) return -std::numeric_limits<double>::infinity();
    return -(a_ + 1.0) * std::log(s2) - b_ / s2;
  }

  void update_u(const VectorXd& f, VectorXd& u, Rng& rng) const override {
    if (update_ == Update::Fixed) return;
    if (update_ == Update::Conjugate) {
      const double shape = a_ + 0.5 * static_cast<double>(y_.size());
      const double rate = b_ + 0.5 * (y_ - f).squaredNorm();
      u(0) = 1.0 / gamma_rate(rng, shape, rate);
      return;
    }
    // Log-scale random walk; the Jacobian of the log map enters the ratio.
    const double cur = u(0);
    const double prop = cur * std::exp(step_ * std_normal(rng));
    VectorXd up = u;
    up(0) = prop;
    const double log_r = log_likelihood(f, up) + log_prior(prop) + std::log(prop) -
                         log_likelihood(f, u) - log_prior(cur) - std::log(cur);
    if (std::log(uniform(rng)) < log_r) u(0) = prop;
  }

  const VectorXd& targets() const { return y_; }
  std::string name() const override { return "gaussian"; }

 private:
  VectorXd y_;
  double init_, a_, b_;
  Update update_;
  double step_;
};

// Gamma parameters (shape, rate) matching a mean and a variance.
inline std::pair<double, double> gamma_from_moments(double mean, double var) {
  if (!(mean > 0.0) || !(var > 0.0)) throw InputError("gamma moments must be positive");
  return {mean * mean / var, mean / var};
}

inline double gamma_log_pdf(double x, double shape, double rate) {
  if (!(x > 0.0) || !std::isfinite(x)) return -std::numeric_limits<double>::infinity();
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

// Panel of n assets over T periods. gross_returns(t, i) is the growth factor
// of asset i over (t, t+1]; characteristics(t, i) is the input at which the
// latent function is evaluated for asset i at time t.
struct MarketData {
  MatrixXd gross_returns;
  MatrixXd characteristics;

  std::size_t periods() const { return static_cast<std::size_t>(gross_returns.rows()); }
  std::size_t assets() const { return static_cast<std::size_t>(gross_returns.cols()); }
};

enum class UtilityKind { ExcessReturn, SharpeRatio };

// Portfolio weights proportional to exp(g) across assets at each time.
// Latent vector layout: g[t * n + i].
inline MatrixXd portfolio_weights(const VectorXd& g, std::size_t T, std::size_t n) {
  MatrixXd w(T, n);
  for (std::size_t t = 0; t < T; ++t) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, g(static_cast<Eigen::Index>(t * n + i)));
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      w(t, i) = std::exp(g(static_cast<Eigen::Index>(t * n + i)) - mx);
      s += w(t, i);
    }
    w.row(t) /= s;
  }
  return w;
}

inline VectorXd portfolio_returns(const MatrixXd& weights, const MarketData& m) {
  return (weights.cwiseProduct(m.gross_returns)).rowwise().sum();
}

inline double log_wealth(const VectorXd& gross) { return gross.array().log().sum(); }

// Utility of the portfolio driven by latent g: excess log-wealth over the
// equally weighted benchmark, or the annualized Sharpe ratio of daily returns.
inline double portfolio_utility(const VectorXd& g, const MarketData& m, UtilityKind kind) {
  const std::size_t T = m.periods(), n = m.assets();
  if (static_cast<std::size_t>(g.size()) != T * n) throw InputError("latent vector does not match market panel");
  const VectorXd r = portfolio_returns(portfolio_weights(g, T, n), m);
  if (kind == UtilityKind::ExcessReturn) {
    const VectorXd rb = portfolio_returns(portfolio_weights(VectorXd::Zero(static_cast<Eigen::Index>(T * n)), T, n), m);
    return log_wealth(r) - log_wealth(rb);
  }
  const VectorXd daily = r.array() - 1.0;
  const double mean = daily.mean();
  const double var = (daily.array() - mean).square().sum() / std::max<double>(1.0, static_cast<double>(T) - 1.0);
  if (!(var > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return mean * std::sqrt(252.0) / std::sqrt(var);
}

class GammaUtilityLikelihood final : public Likelihood {
 public:
  GammaUtilityLikelihood(MarketData data, UtilityKind kind, double shape, double rate)
      : data_(std::move(data)), kind_(kind), shape_(shape), rate_(rate) {
    if (!(shape > 0.0) || !(rate > 0.0)) throw InputError("gamma utility parameters must be positive");
    if (data_.gross_returns.rows() != data_.characteristics.rows() ||
        data_.gross_returns.cols() != data_.characteristics.cols())
      throw InputError("returns and characteristics panels differ in shape");
  }

  double log_likelihood(const VectorXd& g, const VectorXd&) const override {
    const double U = portfolio_utility(g, data_, kind_);
    if (!std::isfinite(U)) return -std::numeric_limits<double>::infinity();
    return gamma_log_pdf(U, shape_, rate_);
  }

  const MarketData& data() const { return data_; }
  std::string name() const override { return "gamma_utility"; }

 private:
  MarketData data_;
  UtilityKind kind_;
  double shape_, rate_;
};

// Synthetic panel: characteristics follow independent random walks and each
// asset's expected daily return increases with its characteristic.
inline MarketData synthetic_market(std::size_t assets, std::size_t periods, double signal, std::uint64_t seed) {
  Rng rng = substream(seed, {0xa55e7});
  MarketData m;
  m.gross_returns.resize(static_cast<Eigen::Index>(periods), static_cast<Eigen::Index>(assets));
  m.characteristics.resize(static_cast<Eigen::Index>(periods), static_cast<Eigen::Index>(assets));
  std::vector<double> c(assets);
  for (auto& v : c) v = uniform(rng);
  for (std::size_t t = 0; t < periods; ++t)
    for (std::size_t i = 0; i < assets; ++i) {
      c[i] = std::clamp(c[i] + 0.02 * std_normal(rng), 0.0, 1.0);
      m.characteristics(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) = c[i];
      const double mu = signal * (c[i] - 0.5);
      m.gross_returns(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) =
          std::max(1e-3, 1.0 + mu + 0.01 * std_normal(rng));
    }
  return m;
}

}  // namespace stringgp
