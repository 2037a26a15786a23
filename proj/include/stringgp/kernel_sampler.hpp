#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "stringgp/mcmc.hpp"
#include "stringgp/regression.hpp"

namespace stringgp {

// Fully Bayesian regression under a string GP kernel: the boundary times of
// each dimension form the point process, each string carries its own
// hyper-parameters, and the latent values are integrated out of the moves
// over (boundaries, hyper-parameters, noise). Latent values are then drawn
// exactly from their Gaussian conditional.
struct KernelSamplerConfig {
  std::size_t iters = 1000, burnin = 0, thin = 1;
  std::uint64_t seed = 0;
  bool learn_noise = true;
  double noise_shape = 1.0, noise_scale = 0.01;  // inverse-gamma prior on the noise variance
  double noise_step = 0.3;
  bool between_models = true;
  double add_probability_empty = 0.5;
  bool draw_latent = true;
};

struct KernelSamplerState {
  std::vector<double> lambda;
  std::vector<std::vector<double>> boundaries;  // interior boundary times per dimension
  std::vector<std::vector<VectorXd>> log_theta;  // boundaries.size() + 1 per dimension
  double noise = 1e-2;
};

struct KernelSamplerChain {
  std::vector<std::size_t> iterations;
  std::vector<VectorXd> f_test;
  std::vector<std::vector<std::vector<double>>> boundaries;
  std::vector<double> noise, log_likelihood;
  std::size_t add_proposed = 0, add_accepted = 0, delete_proposed = 0, delete_accepted = 0;
};

class KernelSampler {
 public:
  KernelSampler(std::vector<McmcDimension> dims, LinkFunction link, MatrixXd X, VectorXd y, MatrixXd Xs,
                double noise, KernelSamplerConfig cfg)
      : dims_(std::move(dims)), link_(std::move(link)), X_(std::move(X)), y_(std::move(y)), Xs_(std::move(Xs)),
        cfg_(cfg) {
    if (dims_.empty() || static_cast<std::size_t>(X_.cols()) != dims_.size())
      throw InputError("one dimension record per input column required");
    if (link_.dimension != dims_.size()) throw InputError("link dimension does not match inputs");
    if (Xs_.rows() > 0 && Xs_.cols() != X_.cols()) throw InputError("test inputs have wrong width");
    if (!(noise > 0.0)) throw InputError("noise variance must be positive");
    for (const auto& d : dims_) {
      if (d.family == Family::Linear) throw InputError("linear kernel is not supported by the sampler");
      if (!(d.upper > d.lower)) throw InputError("empty domain");
    }
    state_.noise = noise;
    for (const auto& d : dims_) {
      state_.lambda.push_back(d.alpha / d.beta);
      state_.boundaries.emplace_back();
      state_.log_theta.push_back({d.init_log_theta.size() ? d.init_log_theta
                                                          : VectorXd::Zero(static_cast<Eigen::Index>(d.theta_size))});
    }
    ll_ = collapsed(state_);
    if (!std::isfinite(ll_)) throw NumericalError("marginal likelihood not finite at the initial state");
  }

  const KernelSamplerState& state() const { return state_; }
  KernelSamplerState& mutable_state() { return state_; }
  double log_likelihood() const { return ll_; }
  const KernelSamplerChain& chain() const { return chain_; }

  RegressionModel regression_model(const KernelSamplerState& s) const {
    RegressionModel m;
    m.link = link_;
    m.X = X_;
    m.y = y_;
    m.noise.variances = {s.noise};
    for (std::size_t j = 0; j < dims_.size(); ++j) {
      StringPartition p;
      p.boundaries.push_back(dims_[j].lower);
      for (double b : s.boundaries[j]) p.boundaries.push_back(b);
      p.boundaries.push_back(dims_[j].upper);
      for (const auto& th : s.log_theta[j])
        p.strings.push_back({kernel_from_log_theta(dims_[j].family, th), MeanFunction::zero()});
      m.dims.push_back(std::move(p));
    }
    return m;
  }

  double collapsed(const KernelSamplerState& s) const {
    try {
      const double ll = log_marginal_likelihood(regression_model(s));
      return std::isfinite(ll) ? ll : -std::numeric_limits<double>::infinity();
    } catch (const std::exception&) {
      return -std::numeric_limits<double>::infinity();
    }
  }

  void update_lambda(Rng& rng) {
    for (std::size_t j = 0; j < dims_.size(); ++j) {
      const double n = static_cast<double>(state_.boundaries[j].size());
      state_.lambda[j] = gamma_rate(rng, dims_[j].alpha + n, dims_[j].beta + (dims_[j].upper - dims_[j].lower));
    }
  }

  void update_noise(Rng& rng) {
    const double a = cfg_.noise_shape, b = cfg_.noise_scale;
    auto log_prior = [&](double v) { return -(a + 1.0) * std::log(v) - b / v; };
    KernelSamplerState prop = state_;
    prop.noise = state_.noise * std::exp(cfg_.noise_step * std_normal(rng));
    const double ll = collapsed(prop);
    const double r = ll - ll_ + log_prior(prop.noise) - log_prior(state_.noise) + std::log(prop.noise / state_.noise);
    if (std::log(1.0 - uniform(rng)) < r) {
      state_ = std::move(prop);
      ll_ = ll;
    }
  }

  void ess_update_theta(Rng& rng) {
    std::vector<double> var;
    for (std::size_t j = 0; j < dims_.size(); ++j)
      for (const auto& th : state_.log_theta[j])
        for (Eigen::Index i = 0; i < th.size(); ++i) var.push_back(dims_[j].rho);
    const Eigen::Index n = static_cast<Eigen::Index>(var.size());
    VectorXd cur(n), nu(n);
    Eigen::Index k = 0;
    for (const auto& d : state_.log_theta)
      for (const auto& th : d) {
        cur.segment(k, th.size()) = th;
        k += th.size();
      }
    for (Eigen::Index i = 0; i < n; ++i) nu(i) = std::sqrt(var[static_cast<std::size_t>(i)]) * std_normal(rng);
    auto assign = [&](KernelSamplerState& s, const VectorXd& v) {
      Eigen::Index i = 0;
      for (auto& d : s.log_theta)
        for (auto& th : d) {
          th = v.segment(i, th.size());
          i += th.size();
        }
    };
    KernelSamplerState trial = state_;
    auto ll = [&](const VectorXd& v) {
      assign(trial, v);
      return collapsed(trial);
    };
    const auto res = elliptical_slice(cur, ll_, nu, ll, rng);
    assign(state_, res.first);
    ll_ = res.second;
  }

  void update_boundaries(Rng& rng) {
    for (std::size_t j = 0; j < dims_.size(); ++j) {
      const std::size_t n = state_.boundaries[j].size();
      for (std::size_t p = 0; p < n; ++p) {
        const auto& b = state_.boundaries[j];
        const double lo = p == 0 ? dims_[j].lower : b[p - 1];
        const double hi = p + 1 == n ? dims_[j].upper : b[p + 1];
        KernelSamplerState prop = state_;
        prop.boundaries[j][p] = uniform(rng, lo, hi);
        const double log_u = std::log(1.0 - uniform(rng));
        if (!(prop.boundaries[j][p] > lo && prop.boundaries[j][p] < hi)) continue;
        const double ll = collapsed(prop);
        if (log_u < ll - ll_) {
          state_ = std::move(prop);
          ll_ = ll;
        }
      }
    }
  }

  double add_probability(std::size_t n) const { return n == 0 ? cfg_.add_probability_empty : 1.0 / 3.0; }
  double delete_probability(std::size_t n) const { return n == 0 ? 0.0 : 1.0 / 3.0; }

  bool propose_add(std::size_t j, double c_star, const VectorXd& theta_star, double log_u) {
    const auto& d = dims_[j];
    auto& b = state_.boundaries[j];
    const std::size_t n = b.size();
    if (!(c_star > d.lower && c_star < d.upper) || std::find(b.begin(), b.end(), c_star) != b.end()) return false;
    const std::size_t p = static_cast<std::size_t>(std::lower_bound(b.begin(), b.end(), c_star) - b.begin());
    KernelSamplerState prop = state_;
    const VectorXd theta_p = prop.log_theta[j][p];
    auto [left, right] = rotate_split(theta_p, theta_star);
    prop.boundaries[j].insert(prop.boundaries[j].begin() + static_cast<std::ptrdiff_t>(p), c_star);
    prop.log_theta[j][p] = left;
    prop.log_theta[j].insert(prop.log_theta[j].begin() + static_cast<std::ptrdiff_t>(p) + 1, right);
    const double ll = collapsed(prop);
    const double L = d.upper - d.lower;
    const double r = ll - ll_ + std::log(state_.lambda[j] * L / static_cast<double>(n + 1)) +
                     log_normal_density(left, d.rho) + log_normal_density(right, d.rho) -
                     log_normal_density(theta_p, d.rho) - log_normal_density(theta_star, d.rho) +
                     std::log(delete_probability(n + 1)) - std::log(add_probability(n));
    if (log_u < r) {
      state_ = std::move(prop);
      ll_ = ll;
      return true;
    }
    return false;
  }

  bool propose_delete(std::size_t j, std::size_t victim, double log_u) {
    const auto& d = dims_[j];
    const std::size_t n = state_.boundaries[j].size();
    if (victim >= n) return false;
    KernelSamplerState prop = state_;
    const VectorXd left = prop.log_theta[j][victim], right = prop.log_theta[j][victim + 1];
    auto [merged, removed] = rotate_merge(left, right);
    prop.boundaries[j].erase(prop.boundaries[j].begin() + static_cast<std::ptrdiff_t>(victim));
    prop.log_theta[j][victim] = merged;
    prop.log_theta[j].erase(prop.log_theta[j].begin() + static_cast<std::ptrdiff_t>(victim) + 1);
    const double ll = collapsed(prop);
    const double L = d.upper - d.lower;
    const double r = ll - ll_ + std::log(static_cast<double>(n) / (state_.lambda[j] * L)) +
                     log_normal_density(merged, d.rho) + log_normal_density(removed, d.rho) -
                     log_normal_density(left, d.rho) - log_normal_density(right, d.rho) +
                     std::log(add_probability(n - 1)) - std::log(delete_probability(n));
    if (log_u < r) {
      state_ = std::move(prop);
      ll_ = ll;
      return true;
    }
    return false;
  }

  void between_models_step(Rng& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, dims_.size() - 1);
    const std::size_t j = pick(rng);
    const std::size_t n = state_.boundaries[j].size();
    const double r = uniform(rng);
    const auto& d = dims_[j];
    if (r < add_probability(n)) {
      const double c = uniform(rng, d.lower, d.upper);
      VectorXd th(static_cast<Eigen::Index>(d.theta_size));
      for (Eigen::Index i = 0; i < th.size(); ++i) th(i) = std::sqrt(d.rho) * std_normal(rng);
      ++chain_.add_proposed;
      if (propose_add(j, c, th, std::log(1.0 - uniform(rng)))) ++chain_.add_accepted;
    } else if (r < add_probability(n) + delete_probability(n)) {
      std::uniform_int_distribution<std::size_t> victim(0, n - 1);
      const std::size_t v = victim(rng);
      ++chain_.delete_proposed;
      if (propose_delete(j, v, std::log(1.0 - uniform(rng)))) ++chain_.delete_accepted;
    }
  }

  // Exact draw of the latent values at the test inputs given the current state.
  VectorXd draw_latent(Rng& rng) const {
    if (Xs_.rows() == 0) return {};
    const Prediction p = predict(regression_model(state_), Xs_);
    const MatrixXd F = linalg::psd_factor(p.cov);
    VectorXd e(F.cols());
    for (Eigen::Index i = 0; i < e.size(); ++i) e(i) = std_normal(rng);
    return p.mean + F * e;
  }

  void step(std::size_t iter) {
    auto rng_for = [&](std::uint64_t phase) { return substream(cfg_.seed, {iter, phase}); };
    {
      Rng r = rng_for(1);
      update_lambda(r);
    }
    if (cfg_.learn_noise) {
      Rng r = rng_for(2);
      update_noise(r);
    }
    {
      Rng r = rng_for(3);
      ess_update_theta(r);
    }
    {
      Rng r = rng_for(5);
      update_boundaries(r);
    }
    if (cfg_.between_models) {
      Rng r = rng_for(6);
      between_models_step(r);
    }
    if (!std::isfinite(ll_)) throw NumericalError("marginal likelihood became non-finite at iteration " + std::to_string(iter));
  }

  KernelSamplerChain run() {
    if (cfg_.thin == 0) throw InputError("thinning must be positive");
    if (cfg_.burnin > cfg_.iters) throw InputError("burn-in exceeds iterations");
    for (std::size_t it = 0; it < cfg_.iters; ++it) {
      step(it);
      if (it < cfg_.burnin || (it - cfg_.burnin) % cfg_.thin != 0) continue;
      chain_.iterations.push_back(it);
      if (cfg_.draw_latent) {
        Rng r = substream(cfg_.seed, {it, 7});
        chain_.f_test.push_back(draw_latent(r));
      }
      chain_.boundaries.push_back(state_.boundaries);
      chain_.noise.push_back(state_.noise);
      chain_.log_likelihood.push_back(ll_);
    }
    return chain_;
  }

 private:
  std::vector<McmcDimension> dims_;
  LinkFunction link_;
  MatrixXd X_;
  VectorXd y_;
  MatrixXd Xs_;
  KernelSamplerConfig cfg_;
  KernelSamplerState state_;
  double ll_ = 0.0;
  KernelSamplerChain chain_;
};

}  // namespace stringgp
