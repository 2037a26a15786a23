#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "stringgp/errors.hpp"
#include "stringgp/kernels.hpp"
#include "stringgp/likelihoods.hpp"
#include "stringgp/linalg.hpp"
#include "stringgp/membrane.hpp"
#include "stringgp/random.hpp"
#include "stringgp/string_gp.hpp"

namespace stringgp {

// Configuration index of every string, string s ending at boundaries[s + 1]:
// the number of change-points strictly below that boundary.
inline std::vector<std::size_t> kernel_membership(const std::vector<double>& boundaries,
                                                  const std::vector<double>& changepoints) {
  std::vector<std::size_t> out;
  if (boundaries.size() < 2) return out;
  out.resize(boundaries.size() - 1);
  for (std::size_t s = 0; s + 1 < boundaries.size(); ++s)
    out[s] = static_cast<std::size_t>(
        std::lower_bound(changepoints.begin(), changepoints.end(), boundaries[s + 1]) - changepoints.begin());
  return out;
}

// Affine maps from standard-normal x to boundary states z:
// z_0 = L_0 x_0 and z_k = M_k z_{k-1} + L_k x_k.
struct WhiteningFactors {
  std::vector<Mat2> M, L;
  std::vector<bool> clamped;

  std::size_t size() const { return L.size(); }
};

inline std::vector<Vec2> unwhiten(const std::vector<Vec2>& x, const WhiteningFactors& f) {
  std::vector<Vec2> z(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) z[k] = (k == 0 ? Vec2::Zero() : Vec2(f.M[k] * z[k - 1])) + f.L[k] * x[k];
  return z;
}

// Inverse map; a singular L_k is inverted in the least-squares sense and flagged.
inline std::vector<Vec2> whiten(const std::vector<Vec2>& z, const WhiteningFactors& f, bool* singular = nullptr) {
  std::vector<Vec2> x(z.size());
  bool any = false;
  for (std::size_t k = 0; k < z.size(); ++k) {
    const Vec2 r = z[k] - (k == 0 ? Vec2::Zero() : Vec2(f.M[k] * z[k - 1]));
    const Mat2& L = f.L[k];
    const bool sing = linalg::is_degenerate(Mat2(L * L.transpose()), 1e-14);
    any = any || sing;
    x[k] = sing ? Vec2(linalg::pinv(L) * r) : Vec2(L.partialPivLu().solve(r));
  }
  if (singular) *singular = any;
  return x;
}

inline KernelSpec kernel_from_log_theta(Family family, const VectorXd& log_theta) {
  if (family == Family::Linear) throw InputError("linear kernel is not supported by the sampler");
  KernelSpec k{family, std::vector<double>(static_cast<std::size_t>(log_theta.size()))};
  for (Eigen::Index i = 0; i < log_theta.size(); ++i) k.params[static_cast<std::size_t>(i)] = std::exp(log_theta(i));
  return k;
}

// Factor for boundary k (k = 0 uses the first string's kernel at a_0).
inline void whitening_factor(const KernelSpec& k, const std::vector<double>& b, std::size_t idx, Mat2& M, Mat2& L,
                             bool& clamped) {
  if (idx == 0) {
    M.setZero();
    L = linalg::psd_sqrt(eval_block(k, b[0], b[0]), &clamped);
    return;
  }
  Mat2 Sigma;
  string_transition(k, b[idx - 1], b[idx], M, Sigma, false);
  L = linalg::psd_sqrt(Sigma, &clamped);
}

// Reversible-jump rotation of hyper-parameters (log space) at angle alpha.
inline std::pair<VectorXd, VectorXd> rotate_split(const VectorXd& theta_p, const VectorXd& theta_star,
                                                  double alpha = std::numbers::pi / 4.0) {
  const double c = std::cos(alpha), s = std::sin(alpha);
  return {c * theta_p - s * theta_star, s * theta_p + c * theta_star};
}

inline std::pair<VectorXd, VectorXd> rotate_merge(const VectorXd& left, const VectorXd& right,
                                                  double alpha = std::numbers::pi / 4.0) {
  const double c = std::cos(alpha), s = std::sin(alpha);
  return {c * left + s * right, -s * left + c * right};
}

// Jacobian of the split map (theta_p, theta*) -> (left, right) per coordinate.
inline Mat2 rotation_jacobian(double alpha = std::numbers::pi / 4.0) {
  Mat2 J;
  J << std::cos(alpha), -std::sin(alpha), std::sin(alpha), std::cos(alpha);
  return J;
}

inline double log_normal_density(const VectorXd& v, double var) {
  const double n = static_cast<double>(v.size());
  return -0.5 * v.squaredNorm() / var - 0.5 * n * std::log(2.0 * std::numbers::pi * var);
}

inline VectorXd ellipse_point(const VectorXd& x0, const VectorXd& nu, double angle) {
  return x0 * std::cos(angle) + nu * std::sin(angle);
}

// One elliptical slice sampling transition for a zero-mean Gaussian prior,
// nu being a fresh prior draw. Returns the new point and its log-likelihood.
inline std::pair<VectorXd, double> elliptical_slice(const VectorXd& x0, double ll0, const VectorXd& nu,
                                                    const std::function<double(const VectorXd&)>& loglik, Rng& rng,
                                                    int max_shrinks = 500) {
  const double log_y = ll0 + std::log(1.0 - uniform(rng));
  double angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  double lo = angle - 2.0 * std::numbers::pi, hi = angle;
  for (int i = 0; i < max_shrinks; ++i) {
    const VectorXd x = ellipse_point(x0, nu, angle);
    const double ll = loglik(x);
    if (ll > log_y) return {x, ll};
    if (angle < 0.0)
      lo = angle;
    else
      hi = angle;
    angle = uniform(rng, lo, hi);
  }
  return {x0, ll0};
}

struct McmcDimension {
  std::vector<double> boundaries;  // sorted distinct coordinates (training and test)
  double lower = 0.0, upper = 1.0;  // change-point domain
  Family family = Family::SquaredExponential;
  std::size_t theta_size = 2;
  double alpha = 1.0, beta = 1.0, rho = 1.0;
  VectorXd init_log_theta;  // defaults to zeros
};

// Hyper-prior giving a prior mean change-point count of 5% of the number of
// distinct coordinates and a prior variance 50 times that mean.
inline std::pair<double, double> default_hyperprior(std::size_t distinct, double length) {
  const double mean = std::max(0.05 * static_cast<double>(distinct), 1e-3);
  const double beta = length / 49.0;
  return {mean * beta / length, beta};
}

struct McmcModel {
  std::size_t outputs = 1;
  std::size_t input_dim = 1;
  LinkFunction link = LinkFunction::sum(1);
  std::vector<McmcDimension> slots;  // output-major, outputs * input_dim entries
  MatrixXd X_train, X_test;

  std::size_t num_slots() const { return slots.size(); }

  // Boundaries at the distinct coordinates of training and test inputs.
  static McmcModel from_inputs(const MatrixXd& X_train, const MatrixXd& X_test, Family family,
                               std::size_t theta_size, double alpha, double beta, double rho, std::size_t outputs = 1,
                               LinkFunction link = LinkFunction::sum(1)) {
    McmcModel m;
    m.outputs = outputs;
    m.input_dim = static_cast<std::size_t>(X_train.cols());
    m.link = link;
    if (m.link.dimension != m.input_dim) m.link = LinkFunction::sum(m.input_dim);
    m.X_train = X_train;
    m.X_test = X_test.size() == 0 ? MatrixXd(0, X_train.cols()) : X_test;
    for (std::size_t l = 0; l < outputs; ++l)
      for (std::size_t j = 0; j < m.input_dim; ++j) {
        McmcDimension dm;
        std::vector<double> b;
        for (Eigen::Index i = 0; i < m.X_train.rows(); ++i) b.push_back(m.X_train(i, static_cast<Eigen::Index>(j)));
        for (Eigen::Index i = 0; i < m.X_test.rows(); ++i) b.push_back(m.X_test(i, static_cast<Eigen::Index>(j)));
        std::sort(b.begin(), b.end());
        b.erase(std::unique(b.begin(), b.end()), b.end());
        dm.boundaries = b;
        dm.lower = b.front();
        dm.upper = b.back();
        dm.family = family;
        dm.theta_size = theta_size;
        dm.alpha = alpha;
        dm.beta = beta;
        dm.rho = rho;
        m.slots.push_back(dm);
      }
    return m;
  }

  void validate() const {
    if (outputs == 0 || input_dim == 0) throw InputError("sampler needs at least one output and one input dimension");
    if (slots.size() != outputs * input_dim) throw InputError("one dimension record per output and input dimension required");
    if (link.dimension != input_dim) throw InputError("link dimension does not match inputs");
    if (static_cast<std::size_t>(X_train.cols()) != input_dim) throw InputError("training inputs have wrong width");
    if (X_test.rows() > 0 && static_cast<std::size_t>(X_test.cols()) != input_dim)
      throw InputError("test inputs have wrong width");
    for (const auto& s : slots) {
      if (s.boundaries.size() < 2) throw InputError("each dimension needs at least two distinct boundary times");
      if (!(s.upper > s.lower)) throw InputError("empty change-point domain");
      if (!(s.alpha > 0.0 && s.beta > 0.0 && s.rho > 0.0)) throw InputError("hyper-prior parameters must be positive");
      if (s.init_log_theta.size() != 0 && static_cast<std::size_t>(s.init_log_theta.size()) != s.theta_size)
        throw InputError("initial hyper-parameters have the wrong size");
    }
  }
};

struct McmcConfig {
  std::size_t iters = 1000, burnin = 0, thin = 1;
  std::uint64_t seed = 0;
  bool update_lambda = true, update_u = true, update_theta = true, update_x = true, update_changepoints = true;
  bool between_models = true;
  double add_probability_empty = 0.5;  // chance of proposing an add with no change-points
  bool record_train = false, record_gradients = true;
  bool init_x_from_prior = true;
};

struct SlotState {
  double lambda = 1.0;
  std::vector<double> changepoints;
  std::vector<VectorXd> log_theta;  // changepoints.size() + 1 configurations
  std::vector<Vec2> x;
  // derived
  std::vector<std::size_t> membership;
  std::vector<VectorXd> used_theta;  // configuration behind each factor
  WhiteningFactors factors;
  std::vector<Vec2> z;
};

struct McmcChain {
  std::vector<std::size_t> iterations;
  std::vector<VectorXd> f_train, f_test, grad_test;
  std::vector<std::vector<std::vector<double>>> changepoints;
  std::vector<std::vector<double>> lambda;
  std::vector<VectorXd> u;
  std::vector<double> log_likelihood;
  std::size_t add_proposed = 0, add_accepted = 0, delete_proposed = 0, delete_accepted = 0;
  std::size_t shift_proposed = 0, shift_accepted = 0;
};

struct OperationCounts {
  std::size_t factor_builds = 0, unwhiten_steps = 0, likelihood_evals = 0;
};

class McmcSampler {
 public:
  using Observer = std::function<void(std::size_t, const McmcSampler&)>;

  McmcSampler(McmcModel model, const Likelihood& lik, McmcConfig cfg)
      : model_(std::move(model)), lik_(lik), cfg_(cfg) {
    model_.validate();
    build_index();
    Rng rng = substream(cfg_.seed, {0xfeed});
    slots_.resize(model_.num_slots());
    for (std::size_t s = 0; s < slots_.size(); ++s) {
      const auto& dm = model_.slots[s];
      auto& st = slots_[s];
      st.lambda = dm.alpha / dm.beta;
      st.log_theta.assign(1, dm.init_log_theta.size() ? dm.init_log_theta
                                                      : VectorXd::Zero(static_cast<Eigen::Index>(dm.theta_size)));
      st.x.assign(dm.boundaries.size(), Vec2::Zero());
      if (cfg_.init_x_from_prior)
        for (auto& v : st.x) v = Vec2(std_normal(rng), std_normal(rng));
      rebuild(s);
    }
    u_ = lik_.initial_u();
    recompute_f();
    ll_ = evaluate();
  }

  // state access
  const McmcModel& model() const { return model_; }
  const std::vector<SlotState>& slots() const { return slots_; }
  SlotState& slot(std::size_t s) { return slots_[s]; }
  const VectorXd& u() const { return u_; }
  const VectorXd& f_train() const { return f_train_; }
  double log_likelihood() const { return ll_; }
  const OperationCounts& operations() const { return ops_; }
  const McmcChain& chain() const { return chain_; }

  // Rebuild derived quantities of one slot after its state was edited.
  void refresh(std::size_t s) {
    rebuild(s);
    recompute_f();
    ll_ = evaluate();
  }

  void update_lambda(Rng& rng) {
    for (std::size_t s = 0; s < slots_.size(); ++s) {
      const auto& dm = model_.slots[s];
      const double n = static_cast<double>(slots_[s].changepoints.size());
      slots_[s].lambda = gamma_rate(rng, dm.alpha + n, dm.beta + (dm.upper - dm.lower));
    }
  }

  void update_u(Rng& rng) {
    if (u_.size() == 0) return;
    lik_.update_u(f_train_, u_, rng);
    ll_ = evaluate();
  }

  void ess_update_theta(Rng& rng) {
    std::vector<double> var;
    for (std::size_t s = 0; s < slots_.size(); ++s)
      for (const auto& th : slots_[s].log_theta)
        for (Eigen::Index i = 0; i < th.size(); ++i) var.push_back(model_.slots[s].rho);
    const Eigen::Index n = static_cast<Eigen::Index>(var.size());
    VectorXd cur(n), nu(n);
    Eigen::Index k = 0;
    for (const auto& st : slots_)
      for (const auto& th : st.log_theta) {
        cur.segment(k, th.size()) = th;
        k += th.size();
      }
    for (Eigen::Index i = 0; i < n; ++i) nu(i) = std::sqrt(var[static_cast<std::size_t>(i)]) * std_normal(rng);
    auto set = [&](const VectorXd& v) {
      Eigen::Index j = 0;
      for (std::size_t s = 0; s < slots_.size(); ++s) {
        for (auto& th : slots_[s].log_theta) {
          th = v.segment(j, th.size());
          j += th.size();
        }
        rebuild(s);
      }
      recompute_f();
      return evaluate();
    };
    auto res = elliptical_slice(cur, ll_, nu, set, rng);
    ll_ = set(res.first);
  }

  void ess_update_x(Rng& rng) {
    std::size_t total = 0;
    for (const auto& st : slots_) total += 2 * st.x.size();
    VectorXd cur(static_cast<Eigen::Index>(total)), nu(static_cast<Eigen::Index>(total));
    Eigen::Index k = 0;
    for (const auto& st : slots_)
      for (const auto& v : st.x) {
        cur.segment<2>(k) = v;
        k += 2;
      }
    for (Eigen::Index i = 0; i < nu.size(); ++i) nu(i) = std_normal(rng);
    auto set = [&](const VectorXd& v) {
      Eigen::Index j = 0;
      for (std::size_t s = 0; s < slots_.size(); ++s) {
        for (auto& xv : slots_[s].x) {
          xv = v.segment<2>(j);
          j += 2;
        }
        unwhiten_slot(s);
      }
      recompute_f();
      return evaluate();
    };
    auto res = elliptical_slice(cur, ll_, nu, set, rng);
    ll_ = set(res.first);
  }

  // Sequential sweep over change-points; each is proposed uniformly between
  // its neighbours (or the domain ends).
  void update_changepoints(Rng& rng) {
    for (std::size_t s = 0; s < slots_.size(); ++s) {
      const auto& dm = model_.slots[s];
      const std::size_t n = slots_[s].changepoints.size();
      for (std::size_t p = 0; p < n; ++p) {
        auto& cps = slots_[s].changepoints;
        const double lo = p == 0 ? dm.lower : cps[p - 1];
        const double hi = p + 1 == n ? dm.upper : cps[p + 1];
        const double proposal = uniform(rng, lo, hi);
        const double log_u = std::log(1.0 - uniform(rng));
        ++chain_.shift_proposed;
        if (!(proposal > lo && proposal < hi)) continue;
        std::vector<double> moved = cps;
        moved[p] = proposal;
        if (kernel_membership(dm.boundaries, moved) == slots_[s].membership) {
          cps[p] = proposal;
          ++chain_.shift_accepted;
          continue;
        }
        const SlotState backup = slots_[s];
        cps[p] = proposal;
        const VectorXd f_old = f_train_;
        const double ll_old = ll_;
        rebuild(s);
        recompute_f();
        const double ll_new = evaluate();
        if (log_u < ll_new - ll_old) {
          ll_ = ll_new;
          ++chain_.shift_accepted;
        } else {
          slots_[s] = backup;
          f_train_ = f_old;
          ll_ = ll_old;
        }
      }
    }
  }

  double add_probability(std::size_t n) const { return n == 0 ? cfg_.add_probability_empty : 1.0 / 3.0; }
  double delete_probability(std::size_t n) const { return n == 0 ? 0.0 : 1.0 / 3.0; }

  // Log acceptance ratio and new state for adding c* with hyper-parameters
  // theta* (log space) in slot s. The state is updated in place when accepted.
  bool propose_add(std::size_t s, double c_star, const VectorXd& theta_star, double log_u,
                   double* log_ratio = nullptr) {
    const auto& dm = model_.slots[s];
    auto& st = slots_[s];
    const std::size_t n = st.changepoints.size();
    if (!(c_star > dm.lower && c_star < dm.upper)) return false;
    if (std::find(st.changepoints.begin(), st.changepoints.end(), c_star) != st.changepoints.end()) return false;
    const std::size_t p = static_cast<std::size_t>(
        std::lower_bound(st.changepoints.begin(), st.changepoints.end(), c_star) - st.changepoints.begin());
    const SlotState backup = st;
    const VectorXd f_old = f_train_;
    const double ll_old = ll_;
    const VectorXd theta_p = st.log_theta[p];
    auto [left, right] = rotate_split(theta_p, theta_star);
    st.changepoints.insert(st.changepoints.begin() + static_cast<std::ptrdiff_t>(p), c_star);
    st.log_theta[p] = left;
    st.log_theta.insert(st.log_theta.begin() + static_cast<std::ptrdiff_t>(p) + 1, right);
    rebuild(s);
    recompute_f();
    const double ll_new = evaluate();
    const double L = dm.upper - dm.lower;
    const double prior = log_normal_density(left, dm.rho) + log_normal_density(right, dm.rho) -
                         log_normal_density(theta_p, dm.rho) - log_normal_density(theta_star, dm.rho);
    const double move = std::log(delete_probability(n + 1)) - std::log(add_probability(n));
    const double lr = (ll_new - ll_old) + std::log(st.lambda * L / static_cast<double>(n + 1)) + prior + move;
    if (log_ratio) *log_ratio = lr;
    if (log_u < lr) {
      ll_ = ll_new;
      return true;
    }
    st = backup;
    f_train_ = f_old;
    ll_ = ll_old;
    return false;
  }

  bool propose_delete(std::size_t s, std::size_t victim, double log_u, double* log_ratio = nullptr) {
    const auto& dm = model_.slots[s];
    auto& st = slots_[s];
    const std::size_t n = st.changepoints.size();
    if (victim >= n) return false;
    const SlotState backup = st;
    const VectorXd f_old = f_train_;
    const double ll_old = ll_;
    const VectorXd left = st.log_theta[victim], right = st.log_theta[victim + 1];
    auto [merged, removed] = rotate_merge(left, right);
    st.changepoints.erase(st.changepoints.begin() + static_cast<std::ptrdiff_t>(victim));
    st.log_theta[victim] = merged;
    st.log_theta.erase(st.log_theta.begin() + static_cast<std::ptrdiff_t>(victim) + 1);
    rebuild(s);
    recompute_f();
    const double ll_new = evaluate();
    const double L = dm.upper - dm.lower;
    const double prior = log_normal_density(merged, dm.rho) + log_normal_density(removed, dm.rho) -
                         log_normal_density(left, dm.rho) - log_normal_density(right, dm.rho);
    const double move = std::log(add_probability(n - 1)) - std::log(delete_probability(n));
    const double lr = (ll_new - ll_old) + std::log(static_cast<double>(n) / (st.lambda * L)) + prior + move;
    if (log_ratio) *log_ratio = lr;
    if (log_u < lr) {
      ll_ = ll_new;
      return true;
    }
    st = backup;
    f_train_ = f_old;
    ll_ = ll_old;
    return false;
  }

  void between_models_step(Rng& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, slots_.size() - 1);
    const std::size_t s = pick(rng);
    const std::size_t n = slots_[s].changepoints.size();
    const double r = uniform(rng);
    const auto& dm = model_.slots[s];
    if (r < add_probability(n)) {
      const double c_star = uniform(rng, dm.lower, dm.upper);
      VectorXd th(static_cast<Eigen::Index>(dm.theta_size));
      for (Eigen::Index i = 0; i < th.size(); ++i) th(i) = std::sqrt(dm.rho) * std_normal(rng);
      ++chain_.add_proposed;
      if (propose_add(s, c_star, th, std::log(1.0 - uniform(rng)))) ++chain_.add_accepted;
    } else if (r < add_probability(n) + delete_probability(n)) {
      std::uniform_int_distribution<std::size_t> victim(0, n - 1);
      const std::size_t v = victim(rng);
      ++chain_.delete_proposed;
      if (propose_delete(s, v, std::log(1.0 - uniform(rng)))) ++chain_.delete_accepted;
    }
  }

  void step(std::size_t iter) {
    iter_ = iter;
    auto rng_for = [&](std::uint64_t phase) { return substream(cfg_.seed, {iter, phase}); };
    if (cfg_.update_lambda) {
      Rng r = rng_for(1);
      update_lambda(r);
    }
    if (cfg_.update_u) {
      Rng r = rng_for(2);
      update_u(r);
    }
    if (cfg_.update_theta) {
      Rng r = rng_for(3);
      ess_update_theta(r);
    }
    if (cfg_.update_x) {
      Rng r = rng_for(4);
      ess_update_x(r);
    }
    if (cfg_.update_changepoints) {
      Rng r = rng_for(5);
      update_changepoints(r);
    }
    if (cfg_.between_models) {
      Rng r = rng_for(6);
      between_models_step(r);
    }
  }

  McmcChain run(const Observer& observer = {}) {
    if (cfg_.thin == 0) throw InputError("thinning must be positive");
    if (cfg_.burnin > cfg_.iters) throw InputError("burn-in exceeds iterations");
    for (std::size_t it = 0; it < cfg_.iters; ++it) {
      step(it);
      if (observer) observer(it, *this);
      if (it >= cfg_.burnin && (it - cfg_.burnin) % cfg_.thin == 0) record(it);
    }
    return chain_;
  }

  // Latent values and gradients at the test inputs for the current state.
  VectorXd f_test() const { return evaluate_f(test_idx_, model_.X_test.rows()); }

  VectorXd grad_test() const {
    const std::size_t d = model_.input_dim, M = static_cast<std::size_t>(model_.X_test.rows());
    VectorXd g(static_cast<Eigen::Index>(model_.outputs * M * d));
    std::vector<double> z(d), dz(d);
    for (std::size_t l = 0; l < model_.outputs; ++l)
      for (std::size_t i = 0; i < M; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
          const std::size_t s = l * d + j;
          const Vec2& v = slots_[s].z[test_idx_[s][i]];
          z[j] = v(0);
          dz[j] = v(1);
        }
        const auto gr = membrane_gradient(model_.link, z, dz);
        for (std::size_t j = 0; j < d; ++j) g(static_cast<Eigen::Index>((l * M + i) * d + j)) = gr[j];
      }
    return g;
  }

  std::string dump(std::size_t iter) const {
    std::ostringstream os;
    os << "iteration " << iter << ", log-likelihood " << ll_ << '\n';
    for (std::size_t s = 0; s < slots_.size(); ++s)
      os << "  dimension " << s << ": lambda " << slots_[s].lambda << ", change-points "
         << slots_[s].changepoints.size() << '\n';
    return os.str();
  }

 private:
  void build_index() {
    const std::size_t d = model_.input_dim;
    train_idx_.resize(model_.num_slots());
    test_idx_.resize(model_.num_slots());
    for (std::size_t s = 0; s < model_.num_slots(); ++s) {
      const auto& b = model_.slots[s].boundaries;
      const std::size_t j = s % d;
      auto index = [&](const MatrixXd& X, std::vector<std::size_t>& out) {
        out.resize(static_cast<std::size_t>(X.rows()));
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
          const double v = X(i, static_cast<Eigen::Index>(j));
          auto it = std::lower_bound(b.begin(), b.end(), v);
          if (it == b.end() || *it != v) throw InputError("input coordinate missing from boundary times");
          out[static_cast<std::size_t>(i)] = static_cast<std::size_t>(it - b.begin());
        }
      };
      index(model_.X_train, train_idx_[s]);
      index(model_.X_test, test_idx_[s]);
    }
  }

  void rebuild(std::size_t s) {
    const auto& dm = model_.slots[s];
    auto& st = slots_[s];
    st.membership = kernel_membership(dm.boundaries, st.changepoints);
    const std::size_t nb = dm.boundaries.size();
    if (st.factors.size() != nb) {
      st.factors.M.assign(nb, Mat2::Zero());
      st.factors.L.assign(nb, Mat2::Zero());
      st.factors.clamped.assign(nb, false);
      st.used_theta.assign(nb, VectorXd());
    }
    for (std::size_t k = 0; k < nb; ++k) {
      const std::size_t cfg = st.membership[k == 0 ? 0 : k - 1];
      const VectorXd& th = st.log_theta[cfg];
      if (st.used_theta[k].size() == th.size() && st.used_theta[k] == th) continue;
      bool clamped = false;
      Mat2 M, L;
      whitening_factor(kernel_from_log_theta(dm.family, th), dm.boundaries, k, M, L, clamped);
      st.factors.M[k] = M;
      st.factors.L[k] = L;
      st.factors.clamped[k] = clamped;
      st.used_theta[k] = th;
      ++ops_.factor_builds;
    }
    unwhiten_slot(s);
  }

  void unwhiten_slot(std::size_t s) {
    auto& st = slots_[s];
    st.z = unwhiten(st.x, st.factors);
    ops_.unwhiten_steps += st.z.size();
  }

  VectorXd evaluate_f(const std::vector<std::vector<std::size_t>>& idx, Eigen::Index rows) const {
    const std::size_t d = model_.input_dim, N = static_cast<std::size_t>(rows);
    VectorXd f(static_cast<Eigen::Index>(model_.outputs * N));
    const bool sum = model_.link.kind == LinkKind::SymmetricSum;
    std::vector<double> z(d);
    for (std::size_t l = 0; l < model_.outputs; ++l)
      for (std::size_t i = 0; i < N; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const std::size_t s = l * d + j;
          z[j] = slots_[s].z[idx[s][i]](0);
          acc += z[j];
        }
        f(static_cast<Eigen::Index>(l * N + i)) = sum ? acc : link_eval_and_partials(model_.link, z).value;
      }
    return f;
  }

  void recompute_f() { f_train_ = evaluate_f(train_idx_, model_.X_train.rows()); }

  // -inf is a valid value (outside the likelihood's support); NaN and +inf abort.
  double evaluate() {
    ++ops_.likelihood_evals;
    const double ll = lik_.log_likelihood(f_train_, u_);
    if (std::isnan(ll) || ll == std::numeric_limits<double>::infinity())
      throw NumericalError("likelihood returned a non-finite value\n" + dump(iter_));
    return ll;
  }

  void record(std::size_t it) {
    chain_.iterations.push_back(it);
    if (cfg_.record_train) chain_.f_train.push_back(f_train_);
    chain_.f_test.push_back(f_test());
    if (cfg_.record_gradients) chain_.grad_test.push_back(grad_test());
    std::vector<std::vector<double>> cps;
    std::vector<double> lam;
    for (const auto& st : slots_) {
      cps.push_back(st.changepoints);
      lam.push_back(st.lambda);
    }
    chain_.changepoints.push_back(std::move(cps));
    chain_.lambda.push_back(std::move(lam));
    chain_.u.push_back(u_);
    chain_.log_likelihood.push_back(ll_);
  }

  McmcModel model_;
  const Likelihood& lik_;
  McmcConfig cfg_;
  std::vector<SlotState> slots_;
  std::vector<std::vector<std::size_t>> train_idx_, test_idx_;
  VectorXd u_, f_train_;
  double ll_ = 0.0;
  std::size_t iter_ = 0;
  OperationCounts ops_;
  McmcChain chain_;
};

inline McmcChain run_sampler(const McmcModel& model, const Likelihood& lik, const McmcConfig& cfg,
                             const McmcSampler::Observer& observer = {}) {
  McmcSampler s(model, lik, cfg);
  return s.run(observer);
}

}  // namespace stringgp
