#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "stringgp/stringgp.hpp"

namespace testutil {

using namespace stringgp;

// Random kernel of the given family with moderate hyper-parameters.
inline KernelSpec random_kernel(Family f, Rng& rng) {
  const double var = uniform(rng, 0.5, 2.0), scale = uniform(rng, 0.2, 1.0);
  switch (f) {
    case Family::RationalQuadratic: return KernelSpec::rational_quadratic(var, scale, uniform(rng, 0.5, 3.0));
    case Family::Periodic: return KernelSpec::periodic(var, uniform(rng, 0.5, 2.0), uniform(rng, 0.5, 2.0));
    case Family::SpectralMixture:
      return KernelSpec::spectral_mixture({var, uniform(rng, 0.2, 1.0), uniform(rng, 0.1, 1.0), 0.5 * var,
                                           uniform(rng, 0.2, 1.0), uniform(rng, 0.5, 2.0)});
    case Family::Linear: return KernelSpec::linear(var, uniform(rng, -1.0, 1.0));
    default: return KernelSpec{f, {var, scale}};
  }
}

inline const std::vector<Family>& all_families() {
  static const std::vector<Family> f{Family::SquaredExponential, Family::RationalQuadratic, Family::Matern32,
                                     Family::Matern52,           Family::Periodic,          Family::SpectralMixture,
                                     Family::Linear};
  return f;
}

// Joint covariance of (z_t, z'_t) over times ts, ordered (z_t0, z'_t0, z_t1, ...).
inline MatrixXd joint_cov(const KernelSpec& k, const std::vector<double>& ts) {
  const auto n = static_cast<Eigen::Index>(ts.size());
  MatrixXd C(2 * n, 2 * n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      C.block<2, 2>(2 * i, 2 * j) = eval_block(k, ts[static_cast<std::size_t>(i)], ts[static_cast<std::size_t>(j)]);
  return C;
}

// Dense Gaussian conditioning: moments of block `q` given the rest equal to `obs`.
struct Conditioned {
  VectorXd mean;
  MatrixXd cov;
};

inline Conditioned condition_dense(const MatrixXd& C, const VectorXd& mu, Eigen::Index q, Eigen::Index nq,
                                   const VectorXd& obs) {
  const Eigen::Index n = C.rows();
  std::vector<Eigen::Index> rest;
  for (Eigen::Index i = 0; i < n; ++i)
    if (i < q || i >= q + nq) rest.push_back(i);
  const auto m = static_cast<Eigen::Index>(rest.size());
  MatrixXd Crr(m, m), Cqr(nq, m);
  VectorXd mr(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    mr(i) = mu(rest[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < m; ++j) Crr(i, j) = C(rest[static_cast<std::size_t>(i)], rest[static_cast<std::size_t>(j)]);
    for (Eigen::Index j = 0; j < nq; ++j) Cqr(j, i) = C(q + j, rest[static_cast<std::size_t>(i)]);
  }
  const Eigen::FullPivLU<MatrixXd> lu(Crr);
  Conditioned out;
  out.mean = mu.segment(q, nq) + Cqr * lu.solve(obs - mr);
  out.cov = C.block(q, q, nq, nq) - Cqr * lu.solve(Cqr.transpose());
  return out;
}

inline double min_eigenvalue(const MatrixXd& A) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (A + A.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

// Plain GP log marginal likelihood with a dense Gram matrix.
inline double dense_log_marginal(const MatrixXd& K, const VectorXd& y) {
  const Eigen::LLT<MatrixXd> llt(K);
  const VectorXd a = llt.solve(y);
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * y.dot(a) - 0.5 * logdet - 0.5 * static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi);
}

// Mean and standard error of a correlated series by batch means.
struct BatchEstimate {
  double mean = 0.0, se = 0.0;
};

inline BatchEstimate batch_means(const std::vector<double>& x, std::size_t batches = 50) {
  BatchEstimate e;
  const std::size_t n = x.size(), b = n / batches;
  if (b == 0) return e;
  std::vector<double> m(batches, 0.0);
  for (std::size_t i = 0; i < batches; ++i) {
    for (std::size_t j = 0; j < b; ++j) m[i] += x[i * b + j];
    m[i] /= static_cast<double>(b);
  }
  for (double v : m) e.mean += v;
  e.mean /= static_cast<double>(batches);
  double s2 = 0.0;
  for (double v : m) s2 += (v - e.mean) * (v - e.mean);
  s2 /= static_cast<double>(batches - 1);
  e.se = std::sqrt(s2 / static_cast<double>(batches));
  return e;
}

// Global moments assembled independently of StringGP: the Markov chain of
// boundary states followed by two-sided (bridge) conditioning inside strings.
class TwoSidedOracle {
 public:
  explicit TwoSidedOracle(StringPartition p) : p_(std::move(p)) {
    const std::size_t K = p_.num_strings();
    kbar_.resize(K + 1);
    mbar_.resize(K + 1);
    M_.assign(K + 1, Mat2::Identity());
    const auto& s0 = p_.strings[0];
    kbar_[0] = eval_block(s0.kernel, p_.boundaries[0], p_.boundaries[0]);
    mbar_[0] = s0.mean(p_.boundaries[0]);
    for (std::size_t k = 1; k <= K; ++k) {
      const auto& s = p_.strings[k - 1];
      const double a = p_.boundaries[k - 1], b = p_.boundaries[k];
      const Mat2 Kaa = eval_block(s.kernel, a, a), Kba = eval_block(s.kernel, b, a);
      M_[k] = Kba * Kaa.inverse();
      const Mat2 Sigma = eval_block(s.kernel, b, b) - M_[k] * Kba.transpose();
      kbar_[k] = Sigma + M_[k] * kbar_[k - 1] * M_[k].transpose();
      mbar_[k] = s.mean(b) + M_[k] * (mbar_[k - 1] - s.mean(a));
    }
  }

  // cov(z_{a_i}, z_{a_j})
  Mat2 boundary_cov(std::size_t i, std::size_t j) const {
    if (i < j) return boundary_cov(j, i).transpose();
    Mat2 C = kbar_[j];
    for (std::size_t k = j + 1; k <= i; ++k) C = (M_[k] * C).eval();
    return C;
  }

  Vec2 mean(double t) const {
    const std::size_t s = p_.locate(t);
    const auto& st = p_.strings[s];
    const double a = p_.boundaries[s], b = p_.boundaries[s + 1];
    Vec4 r;
    r << mbar_[s] - st.mean(a), mbar_[s + 1] - st.mean(b);
    return st.mean(t) + BridgeConditioner(st.kernel, a, b).gain(t) * r;
  }

  Mat2 cov(double u, double v) const {
    const std::size_t s = p_.locate(u), q = p_.locate(v);
    const BridgeConditioner bu(p_.strings[s].kernel, p_.boundaries[s], p_.boundaries[s + 1]);
    const BridgeConditioner bv(p_.strings[q].kernel, p_.boundaries[q], p_.boundaries[q + 1]);
    Mat4 C;
    C.block<2, 2>(0, 0) = boundary_cov(s, q);
    C.block<2, 2>(0, 2) = boundary_cov(s, q + 1);
    C.block<2, 2>(2, 0) = boundary_cov(s + 1, q);
    C.block<2, 2>(2, 2) = boundary_cov(s + 1, q + 1);
    Mat2 out = bu.gain(u) * C * bv.gain(v).transpose();
    if (s == q) out += bu.cov(u, v);
    return out;
  }

 private:
  StringPartition p_;
  std::vector<Mat2> kbar_, M_;
  std::vector<Vec2> mbar_;
};

}  // namespace testutil
