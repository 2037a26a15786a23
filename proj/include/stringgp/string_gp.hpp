#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "stringgp/derivative_gp.hpp"
#include "stringgp/kernels.hpp"
#include "stringgp/linalg.hpp"
#include "stringgp/random.hpp"

namespace stringgp {

struct StringSpec {
  KernelSpec kernel;
  MeanFunction mean = MeanFunction::zero();
};

// Boundary times a_0 < ... < a_K and the K strings between them. String s
// (0-based) lives on [a_s, a_{s+1}].
struct StringPartition {
  std::vector<double> boundaries;
  std::vector<StringSpec> strings;

  std::size_t num_strings() const { return strings.size(); }
  double lower() const { return boundaries.front(); }
  double upper() const { return boundaries.back(); }

  static StringPartition uniform(const KernelSpec& k, double lo, double hi, std::size_t K,
                                 const MeanFunction& m = MeanFunction::zero()) {
    StringPartition p;
    for (std::size_t i = 0; i <= K; ++i)
      p.boundaries.push_back(i == K ? hi : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(K));
    p.strings.assign(K, StringSpec{k, m});
    return p;
  }

  void validate(bool check_degeneracy = true) const {
    if (strings.empty()) throw InputError("partition needs at least one string");
    if (boundaries.size() != strings.size() + 1)
      throw InputError("partition needs exactly one more boundary time than strings");
    for (std::size_t i = 1; i < boundaries.size(); ++i)
      if (!(boundaries[i] > boundaries[i - 1])) throw InputError("boundary times must be strictly increasing");
    for (std::size_t s = 0; s < strings.size(); ++s) {
      strings[s].kernel.validate();
      if (!check_degeneracy) continue;
      const auto f = degeneracy_check(strings[s].kernel, boundaries[s], boundaries[s + 1]);
      if (f.degenerate_at_a) throw DegeneracyError("string kernel degenerate at boundary", boundaries[s]);
      if (f.degenerate_at_b_given_a)
        throw DegeneracyError("string kernel degenerate at boundary given previous boundary", boundaries[s + 1]);
    }
  }

  // Index of the string containing t. Interior boundary times resolve to the
  // string on their left.
  std::size_t locate(double t) const {
    if (!(t >= boundaries.front() && t <= boundaries.back()))
      throw InputError("time " + std::to_string(t) + " outside partition domain [" +
                       std::to_string(boundaries.front()) + ", " + std::to_string(boundaries.back()) + "]");
    auto it = std::lower_bound(boundaries.begin() + 1, boundaries.end(), t);
    return static_cast<std::size_t>(it - boundaries.begin()) - 1;
  }
};

// Law of the boundary states: z_0 ~ N(offset_0, cov_0) and
// z_k | z_{k-1} ~ N(offset_k + transition_k z_{k-1}, cov_k).
struct BoundaryMoments {
  std::vector<Mat2> transition;
  std::vector<Vec2> offset;
  std::vector<Mat2> cov;

  std::size_t size() const { return cov.size(); }
  Vec2 mean(std::size_t k, const Vec2& previous) const {
    return k == 0 ? offset[0] : Vec2(offset[k] + transition[k] * previous);
  }
};

// Transition factor and conditional covariance for one string, from its
// kernel's blocks at the string's two endpoints.
inline void string_transition(const KernelSpec& k, double a, double b, Mat2& M, Mat2& Sigma,
                              bool strict) {
  const Mat2 Kaa = eval_block(k, a, a), Kba = eval_block(k, b, a), Kbb = eval_block(k, b, b);
  if (strict) {
    if (linalg::is_degenerate(Kaa)) throw DegeneracyError("string kernel degenerate at boundary", a);
    M = Kba * linalg::spd_inverse<2>(Kaa, a, "boundary recursion");
  } else {
    M = Kba * (linalg::is_degenerate(Kaa) ? linalg::pinv(Kaa) : Mat2(Kaa.inverse()));
  }
  Sigma = Kbb - M * Kba.transpose();
  Sigma = 0.5 * (Sigma + Sigma.transpose()).eval();
  if (strict && linalg::is_degenerate(Sigma))
    throw DegeneracyError("string kernel degenerate at boundary given previous boundary", b);
}

inline BoundaryMoments boundary_moments(const StringPartition& p, bool strict = true) {
  if (strict) p.validate(false);
  const std::size_t K = p.num_strings();
  BoundaryMoments bm;
  bm.transition.assign(K + 1, Mat2::Zero());
  bm.offset.assign(K + 1, Vec2::Zero());
  bm.cov.assign(K + 1, Mat2::Zero());
  const auto& first = p.strings[0];
  bm.offset[0] = first.mean(p.boundaries[0]);
  bm.cov[0] = eval_block(first.kernel, p.boundaries[0], p.boundaries[0]);
  if (strict && linalg::is_degenerate(bm.cov[0]))
    throw DegeneracyError("string kernel degenerate at boundary", p.boundaries[0]);
  for (std::size_t k = 1; k <= K; ++k) {
    const auto& s = p.strings[k - 1];
    const double a = p.boundaries[k - 1], b = p.boundaries[k];
    string_transition(s.kernel, a, b, bm.transition[k], bm.cov[k], strict);
    bm.offset[k] = s.mean(b) - bm.transition[k] * s.mean(a);
  }
  return bm;
}

struct DerivativePathSample {
  std::vector<double> times;
  std::vector<Vec2> states;  // (z, z') per time
  std::vector<bool> boundary;
  std::uint64_t seed = 0;
};

// Univariate string GP with cached global moment recursions.
//
// Interior covariances are written relative to the left boundary of each
// string: given z at a_s, the string is independent of everything on its left,
// so cov(z_u, z_v) = k_s(u, v) + G_u D_s G_v^T within string s, where
// G_u = K_s(u, a_s) K_s(a_s, a_s)^{-1} and D_s is the excess of the global
// boundary covariance at a_s over k_s's own block there.
class StringGP {
 public:
  explicit StringGP(StringPartition p, bool strict = true) : p_(std::move(p)) {
    if (strict) p_.validate(true);
    moments_ = boundary_moments(p_, strict);
    const std::size_t K = p_.num_strings();
    left_inv_.resize(K);
    delta_.resize(K);
    dmean_.resize(K);
    kbar_.resize(K + 1);
    mbar_.resize(K + 1);
    kbar_[0] = moments_.cov[0];
    mbar_[0] = moments_.offset[0];
    for (std::size_t s = 0; s < K; ++s) {
      const auto& st = p_.strings[s];
      const double a = p_.boundaries[s], b = p_.boundaries[s + 1];
      const Mat2 Kaa = eval_block(st.kernel, a, a);
      left_inv_[s] = strict ? linalg::spd_inverse<2>(Kaa, a, "global covariance")
                            : (linalg::is_degenerate(Kaa) ? linalg::pinv(Kaa) : Mat2(Kaa.inverse()));
      delta_[s] = kbar_[s] - Kaa;
      dmean_[s] = mbar_[s] - st.mean(a);
      const Mat2& M = moments_.transition[s + 1];
      kbar_[s + 1] = eval_block(st.kernel, b, b) + M * delta_[s] * M.transpose();
      mbar_[s + 1] = st.mean(b) + M * dmean_[s];
    }
  }

  const StringPartition& partition() const { return p_; }
  const BoundaryMoments& moments() const { return moments_; }
  std::size_t num_strings() const { return p_.num_strings(); }

  // Global covariance and mean of the boundary states.
  const Mat2& boundary_cov(std::size_t k) const { return kbar_[k]; }
  const Vec2& boundary_mean(std::size_t k) const { return mbar_[k]; }

  Mat2 gain(std::size_t s, double t) const {
    return eval_block(p_.strings[s].kernel, t, p_.boundaries[s]) * left_inv_[s];
  }

  Vec2 global_mean(double t) const {
    const std::size_t s = p_.locate(t);
    return p_.strings[s].mean(t) + gain(s, t) * dmean_[s];
  }

  Mat2 global_cov(double u, double v) const {
    const std::size_t p = p_.locate(u), q = p_.locate(v);
    if (p > q) return cross(q, v, p, u).transpose();
    if (p == q) return within(p, u, v);
    return cross(p, u, q, v);
  }

  double global_value_cov(double u, double v) const { return global_cov(u, v)(0, 0); }

  // Value-value covariance matrix between two sets of times.
  MatrixXd value_gram(const std::vector<double>& xs, const std::vector<double>& ys) const {
    const Cached cx = cache(xs), cy = cache(ys);
    const std::size_t K = num_strings();
    // P[p][q] maps the row vector of cov(z_u, z_{a_{p+1}}) to cov(z_u, z_{a_q}).
    std::vector<std::vector<Mat2>> P(K, std::vector<Mat2>(K, Mat2::Identity()));
    for (std::size_t p = 0; p < K; ++p)
      for (std::size_t q = p + 2; q < K; ++q) P[p][q] = P[p][q - 1] * moments_.transition[q].transpose();
    MatrixXd G(xs.size(), ys.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const std::size_t p = cx.s[i];
      for (std::size_t j = 0; j < ys.size(); ++j) {
        const std::size_t q = cy.s[j];
        double val;
        if (p == q) {
          val = eval_value(p_.strings[p].kernel, xs[i], ys[j]);
          if (!zero_delta(p)) val += cx.w[i].transpose() * delta_[p] * cy.w[j];
        } else if (p < q) {
          val = cx.fwd[i].transpose() * P[p][q] * cy.w[j];
        } else {
          val = cy.fwd[j].transpose() * P[q][p] * cx.w[i];
        }
        G(i, j) = val;
      }
    }
    return G;
  }

  MatrixXd value_gram(const std::vector<double>& xs) const { return value_gram(xs, xs); }

 private:
  struct Cached {
    std::vector<std::size_t> s;
    std::vector<Vec2> w;    // first row of the gain
    std::vector<Vec2> fwd;  // first row of cov(z_u, z_{a_{s+1}})
  };

  bool zero_delta(std::size_t s) const { return delta_[s].isZero(0.0); }

  Cached cache(const std::vector<double>& xs) const {
    Cached c;
    c.s.resize(xs.size());
    c.w.resize(xs.size());
    c.fwd.resize(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const std::size_t s = p_.locate(xs[i]);
      const Mat2 G = gain(s, xs[i]);
      c.s[i] = s;
      c.w[i] = G.row(0).transpose();
      c.fwd[i] = to_right(s, xs[i], G).row(0).transpose();
    }
    return c;
  }

  Mat2 within(std::size_t s, double u, double v) const {
    Mat2 out = eval_block(p_.strings[s].kernel, u, v);
    if (!zero_delta(s)) out += gain(s, u) * delta_[s] * gain(s, v).transpose();
    return out;
  }

  // cov(z_u, z_{a_{s+1}}) for u in string s.
  Mat2 to_right(std::size_t s, double u, const Mat2& Gu) const {
    const Mat2& M = moments_.transition[s + 1];
    Mat2 out = eval_block(p_.strings[s].kernel, u, p_.boundaries[s + 1]);
    if (!zero_delta(s)) out += Gu * delta_[s] * M.transpose();
    return out;
  }

  // u in string p, v in string q, p < q.
  Mat2 cross(std::size_t p, double u, std::size_t q, double v) const {
    Mat2 C = to_right(p, u, gain(p, u));
    for (std::size_t k = p + 2; k <= q; ++k) C = C * moments_.transition[k].transpose();
    return C * gain(q, v).transpose();
  }

  StringPartition p_;
  BoundaryMoments moments_;
  std::vector<Mat2> left_inv_, delta_, kbar_;
  std::vector<Vec2> dmean_, mbar_;
};

// Joint sampler of boundary and interior states (value and derivative).
class PathSampler {
 public:
  PathSampler(const StringGP& gp, std::vector<std::vector<double>> string_times)
      : gp_(gp), times_(std::move(string_times)) {
    const auto& p = gp_.partition();
    const std::size_t K = p.num_strings();
    if (times_.empty()) times_.assign(K, {});
    if (times_.size() != K) throw InputError("one list of string times per string required");
    const auto& bm = gp_.moments();
    chol_.resize(K + 1);
    for (std::size_t k = 0; k <= K; ++k) chol_[k] = linalg::psd_sqrt(bm.cov[k]);
    interior_.resize(K);
    for (std::size_t s = 0; s < K; ++s) {
      auto& ts = times_[s];
      std::sort(ts.begin(), ts.end());
      const double a = p.boundaries[s], b = p.boundaries[s + 1];
      for (double t : ts)
        if (!(t > a && t < b)) throw InputError("string time " + std::to_string(t) + " not strictly inside its string");
      if (ts.empty()) continue;
      const auto& st = p.strings[s];
      BridgeConditioner br(st.kernel, a, b);
      const std::size_t n = ts.size();
      Interior& in = interior_[s];
      in.gain.resize(2 * n, 4);
      in.prior_mean.resize(2 * n);
      MatrixXd C(2 * n, 2 * n);
      for (std::size_t i = 0; i < n; ++i) {
        in.gain.block(2 * i, 0, 2, 4) = br.gain(ts[i]);
        in.prior_mean.segment<2>(2 * i) = st.mean(ts[i]);
        for (std::size_t j = 0; j <= i; ++j) {
          const Mat2 c = br.cov(ts[i], ts[j]);
          C.block<2, 2>(2 * i, 2 * j) = c;
          C.block<2, 2>(2 * j, 2 * i) = c.transpose();
        }
      }
      in.mean_a = st.mean(a);
      in.mean_b = st.mean(b);
      in.factor = linalg::psd_factor(C);
    }
  }

  DerivativePathSample draw(Rng& rng) const {
    const auto& p = gp_.partition();
    const auto& bm = gp_.moments();
    const std::size_t K = p.num_strings();
    DerivativePathSample out;
    out.seed = rng();
    std::vector<Vec2> zb(K + 1);
    Rng brng = substream(out.seed, {0});
    for (std::size_t k = 0; k <= K; ++k) {
      const Vec2 xi(std_normal(brng), std_normal(brng));
      zb[k] = bm.mean(k, k == 0 ? Vec2::Zero() : zb[k - 1]) + chol_[k] * xi;
    }
    for (std::size_t s = 0; s < K; ++s) {
      out.times.push_back(p.boundaries[s]);
      out.states.push_back(zb[s]);
      out.boundary.push_back(true);
      const auto& ts = times_[s];
      if (ts.empty()) continue;
      Rng srng = substream(out.seed, {1, s});
      const Interior& in = interior_[s];
      Vec4 r;
      r << zb[s] - in.mean_a, zb[s + 1] - in.mean_b;
      VectorXd xi(in.factor.cols());
      for (Eigen::Index i = 0; i < xi.size(); ++i) xi(i) = std_normal(srng);
      const VectorXd z = in.prior_mean + in.gain * r + in.factor * xi;
      for (std::size_t i = 0; i < ts.size(); ++i) {
        out.times.push_back(ts[i]);
        out.states.push_back(z.segment<2>(2 * i));
        out.boundary.push_back(false);
      }
    }
    out.times.push_back(p.boundaries[K]);
    out.states.push_back(zb[K]);
    out.boundary.push_back(true);
    return out;
  }

 private:
  struct Interior {
    MatrixXd gain;
    VectorXd prior_mean;
    Vec2 mean_a, mean_b;
    MatrixXd factor;
  };
  const StringGP& gp_;
  std::vector<std::vector<double>> times_;
  std::vector<Mat2> chol_;
  std::vector<Interior> interior_;
};

inline DerivativePathSample sample_path(const StringGP& gp, const std::vector<std::vector<double>>& string_times,
                                        Rng& rng) {
  return PathSampler(gp, string_times).draw(rng);
}

struct KernelErrorStats {
  std::size_t strings = 0;
  double min = 0.0, avg = 0.0, max = 0.0;
};

// Absolute value-value error between a uniform string GP kernel with K equal
// strings on [0, 1] and its base kernel, over a grid x grid lattice.
inline std::vector<KernelErrorStats> kernel_error_table(const KernelSpec& base, const std::vector<std::size_t>& counts,
                                                        std::size_t grid) {
  if (!base.stationary()) throw InputError("kernel error table requires a stationary kernel");
  if (grid < 2) throw InputError("grid resolution must be at least 2");
  std::vector<double> xs(grid);
  for (std::size_t i = 0; i < grid; ++i) xs[i] = static_cast<double>(i) / static_cast<double>(grid - 1);
  std::vector<KernelErrorStats> out;
  for (std::size_t K : counts) {
    if (K == 0) throw InputError("string count must be positive");
    StringGP gp(StringPartition::uniform(base, 0.0, 1.0, K));
    const MatrixXd G = gp.value_gram(xs);
    KernelErrorStats st{K, std::numeric_limits<double>::infinity(), 0.0, 0.0};
    for (std::size_t i = 0; i < grid; ++i)
      for (std::size_t j = 0; j < grid; ++j) {
        const double e = std::abs(G(i, j) - eval_value(base, xs[i], xs[j]));
        st.min = std::min(st.min, e);
        st.max = std::max(st.max, e);
        st.avg += e;
      }
    st.avg /= static_cast<double>(grid * grid);
    out.push_back(st);
  }
  return out;
}

}  // namespace stringgp
