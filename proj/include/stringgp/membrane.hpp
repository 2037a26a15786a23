#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "stringgp/errors.hpp"
#include "stringgp/linalg.hpp"
#include "stringgp/string_gp.hpp"

namespace stringgp {

enum class LinkKind { SymmetricSum, Product, ElementarySymmetric, WeightedFullAdditive };

// phi(x) = sum_n coef[n] e_n(x)
struct LinkFunction {
  LinkKind kind = LinkKind::SymmetricSum;
  std::size_t dimension = 1;
  std::size_t order = 1;
  std::vector<double> weights;  // weights[i] multiplies e_{i+1}, full additive kind only

  static LinkFunction sum(std::size_t d) { return {LinkKind::SymmetricSum, d, 1, {}}; }
  static LinkFunction product(std::size_t d) { return {LinkKind::Product, d, d, {}}; }
  static LinkFunction elementary(std::size_t d, std::size_t n) { return {LinkKind::ElementarySymmetric, d, n, {}}; }
  static LinkFunction full_additive(std::vector<double> w) {
    return {LinkKind::WeightedFullAdditive, w.size(), w.size(), std::move(w)};
  }

  void validate() const {
    if (dimension < 1) throw InputError("link dimension must be at least 1");
    if (kind == LinkKind::ElementarySymmetric && (order < 1 || order > dimension))
      throw InputError("elementary symmetric link order must lie in [1, d]");
    if (kind == LinkKind::WeightedFullAdditive && weights.size() != dimension)
      throw InputError("full additive link needs one weight per dimension");
  }

  std::vector<double> coefficients() const {
    std::vector<double> c(dimension + 1, 0.0);
    switch (kind) {
      case LinkKind::SymmetricSum: c[1] = 1.0; break;
      case LinkKind::Product: c[dimension] = 1.0; break;
      case LinkKind::ElementarySymmetric: c[order] = 1.0; break;
      case LinkKind::WeightedFullAdditive:
        for (std::size_t i = 0; i < dimension; ++i) c[i + 1] = weights[i];
        break;
    }
    return c;
  }
};

// e_0 ... e_n of x by the summation recurrence, skipping coordinate `skip`.
inline std::vector<double> elementary_symmetric(const std::vector<double>& x, std::size_t n,
                                                std::size_t skip = static_cast<std::size_t>(-1)) {
  std::vector<double> e(n + 1, 0.0);
  e[0] = 1.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (j == skip) continue;
    for (std::size_t k = n; k >= 1; --k) e[k] += x[j] * e[k - 1];
  }
  return e;
}

struct LinkValue {
  double value = 0.0;
  std::vector<double> gradient;
};

inline LinkValue link_eval_and_partials(const LinkFunction& link, const std::vector<double>& x) {
  if (x.size() != link.dimension) throw InputError("link input has wrong dimension");
  const auto c = link.coefficients();
  const std::size_t d = x.size();
  LinkValue out;
  const auto e = elementary_symmetric(x, d);
  for (std::size_t n = 1; n <= d; ++n) out.value += c[n] * e[n];
  out.gradient.assign(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    const auto ej = elementary_symmetric(x, d - 1, j);
    for (std::size_t n = 1; n <= d; ++n) out.gradient[j] += c[n] * ej[n - 1];
  }
  return out;
}

// Gradient of f = phi(z^1, ..., z^d) along the coordinates: z'_j times the j-th partial.
inline std::vector<double> membrane_gradient(const LinkFunction& link, const std::vector<double>& z,
                                             const std::vector<double>& dz) {
  if (dz.size() != z.size()) throw InputError("value and derivative vectors differ in size");
  auto lv = link_eval_and_partials(link, z);
  for (std::size_t j = 0; j < z.size(); ++j) lv.gradient[j] *= dz[j];
  return lv.gradient;
}

struct MembraneModel {
  std::vector<StringGP> dims;
  LinkFunction link;

  std::size_t dimension() const { return dims.size(); }
};

struct MembraneMoments {
  double mean_u = 0.0, mean_v = 0.0;
  VectorXd grad_mean_u, grad_mean_v;
  double cov = 0.0;             // cov(f(u), f(v))
  VectorXd cov_grad_value;      // i: cov(d_i f(u), f(v))
  VectorXd cov_value_grad;      // j: cov(f(u), d_j f(v))
  MatrixXd cov_grad_grad;       // (i, j): cov(d_i f(u), d_j f(v))
};

namespace detail {

constexpr std::size_t kNone = static_cast<std::size_t>(-1);

// E[phi_a(X) phi_b(Y)] for independent coordinate pairs (X_i, Y_i), where a
// forced coordinate must belong to the selected subset.
inline double product_moment(const std::vector<double>& ca, const std::vector<double>& cb,
                             const std::vector<double>& ex, const std::vector<double>& ey,
                             const std::vector<double>& exy, std::size_t force_a, std::size_t force_b) {
  const std::size_t d = ex.size();
  MatrixXd D = MatrixXd::Zero(d + 1, d + 1);
  D(0, 0) = 1.0;
  for (std::size_t i = 0; i < d; ++i) {
    MatrixXd N = MatrixXd::Zero(d + 1, d + 1);
    const bool fa = i == force_a, fb = i == force_b;
    for (std::size_t s = 0; s <= i; ++s)
      for (std::size_t t = 0; t <= i; ++t) {
        const double w = D(s, t);
        if (w == 0.0) continue;
        if (!fa && !fb) N(s, t) += w;
        if (!fb) N(s + 1, t) += w * ex[i];
        if (!fa) N(s, t + 1) += w * ey[i];
        N(s + 1, t + 1) += w * exy[i];
      }
    D.swap(N);
  }
  double out = 0.0;
  for (std::size_t s = 1; s <= d; ++s)
    for (std::size_t t = 1; t <= d; ++t) out += ca[s] * cb[t] * D(s, t);
  return out;
}

inline double first_moment(const std::vector<double>& c, const std::vector<double>& ex, std::size_t force) {
  const std::size_t d = ex.size();
  std::vector<double> D(d + 1, 0.0);
  D[0] = 1.0;
  for (std::size_t i = 0; i < d; ++i) {
    std::vector<double> N(d + 1, 0.0);
    for (std::size_t s = 0; s <= i; ++s) {
      if (i != force) N[s] += D[s];
      N[s + 1] += D[s] * ex[i];
    }
    D.swap(N);
  }
  double out = 0.0;
  for (std::size_t s = 1; s <= d; ++s) out += c[s] * D[s];
  return out;
}

}  // namespace detail

inline MembraneMoments membrane_moments(const MembraneModel& model, const std::vector<double>& u,
                                        const std::vector<double>& v) {
  const std::size_t d = model.dimension();
  if (u.size() != d || v.size() != d) throw InputError("input has wrong dimension");
  if (model.link.dimension != d) throw InputError("link dimension does not match model");
  const auto c = model.link.coefficients();
  std::vector<Vec2> mu(d), mv(d);
  std::vector<Mat2> K(d);
  for (std::size_t i = 0; i < d; ++i) {
    mu[i] = model.dims[i].global_mean(u[i]);
    mv[i] = model.dims[i].global_mean(v[i]);
    K[i] = model.dims[i].global_cov(u[i], v[i]);
  }
  using detail::kNone;
  // Coordinate moments with slot selection: 0 = value, 1 = derivative.
  auto moments = [&](std::size_t fa, std::size_t fb, std::vector<double>& ex, std::vector<double>& ey,
                     std::vector<double>& exy) {
    ex.resize(d);
    ey.resize(d);
    exy.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
      const int sa = i == fa ? 1 : 0, sb = i == fb ? 1 : 0;
      ex[i] = mu[i](sa);
      ey[i] = mv[i](sb);
      exy[i] = K[i](sa, sb) + ex[i] * ey[i];
    }
  };
  std::vector<double> ex, ey, exy;
  MembraneMoments out;
  auto mean_of = [&](const std::vector<Vec2>& m, std::size_t force) {
    std::vector<double> e(d);
    for (std::size_t i = 0; i < d; ++i) e[i] = m[i](i == force ? 1 : 0);
    return detail::first_moment(c, e, force);
  };
  out.mean_u = mean_of(mu, kNone);
  out.mean_v = mean_of(mv, kNone);
  out.grad_mean_u.resize(d);
  out.grad_mean_v.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    out.grad_mean_u(i) = mean_of(mu, i);
    out.grad_mean_v(i) = mean_of(mv, i);
  }
  moments(kNone, kNone, ex, ey, exy);
  out.cov = detail::product_moment(c, c, ex, ey, exy, kNone, kNone) - out.mean_u * out.mean_v;
  out.cov_grad_value.resize(d);
  out.cov_value_grad.resize(d);
  out.cov_grad_grad.resize(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    moments(i, kNone, ex, ey, exy);
    out.cov_grad_value(i) = detail::product_moment(c, c, ex, ey, exy, i, kNone) - out.grad_mean_u(i) * out.mean_v;
    moments(kNone, i, ex, ey, exy);
    out.cov_value_grad(i) = detail::product_moment(c, c, ex, ey, exy, kNone, i) - out.mean_u * out.grad_mean_v(i);
    for (std::size_t j = 0; j < d; ++j) {
      moments(i, j, ex, ey, exy);
      out.cov_grad_grad(i, j) =
          detail::product_moment(c, c, ex, ey, exy, i, j) - out.grad_mean_u(i) * out.grad_mean_v(j);
    }
  }
  return out;
}

// cov(f(u), f(v)) and E f(u), E f(v) from per-dimension scalar moments; the
// value-only fast path used by regression.
inline double membrane_value_cov(const std::vector<double>& c, const std::vector<double>& mu,
                                 const std::vector<double>& mv, const std::vector<double>& kuv) {
  const std::size_t d = mu.size();
  bool zero_mean = true;
  for (std::size_t i = 0; i < d; ++i) zero_mean = zero_mean && mu[i] == 0.0 && mv[i] == 0.0;
  if (zero_mean) {
    double out = 0.0;
    const auto e = elementary_symmetric(kuv, d);
    for (std::size_t n = 1; n <= d; ++n) out += c[n] * c[n] * e[n];
    return out;
  }
  std::vector<double> exy(d);
  for (std::size_t i = 0; i < d; ++i) exy[i] = kuv[i] + mu[i] * mv[i];
  return detail::product_moment(c, c, mu, mv, exy, detail::kNone, detail::kNone) -
         detail::first_moment(c, mu, detail::kNone) * detail::first_moment(c, mv, detail::kNone);
}

// Isotropic radial profile rho(s) with s the squared distance.
struct RadialProfile {
  std::function<double(double)> rho, drho, d2rho;

  // exp(-2 s), i.e. a unit-variance SE kernel with input scale 0.5.
  static RadialProfile squared_exponential(double c = 2.0) {
    return {[c](double s) { return std::exp(-c * s); }, [c](double s) { return -c * std::exp(-c * s); },
            [c](double s) { return c * c * std::exp(-c * s); }};
  }
};

struct FlexibilityMetrics {
  double H_f = 0.0, H_g = 0.0, I_f = 0.0, I_g = 0.0;
};

// Entropy of the gradient at a point and mutual information between the
// gradients at two points, for an additively separable string GP f and an
// isotropic GP g sharing the same radial profile.
inline FlexibilityMetrics flexibility_metrics(const RadialProfile& rho, const std::vector<double>& x,
                                              const std::vector<double>& y) {
  const std::size_t d = x.size();
  if (y.size() != d || d == 0) throw InputError("flexibility inputs must share a positive dimension");
  double s = 0.0;
  std::vector<double> delta(d);
  for (std::size_t i = 0; i < d; ++i) {
    delta[i] = x[i] - y[i];
    s += delta[i] * delta[i];
  }
  if (s == 0.0) throw InputError("flexibility metrics need x != y");
  const double a = -2.0 * rho.drho(0.0);
  if (!(a > 0.0)) throw InputError("radial profile gives a non-positive gradient variance");
  const double r1 = rho.drho(s), r2 = rho.d2rho(s);
  MatrixXd Cf = MatrixXd::Zero(d, d), Cg(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      if (i == j) {
        Cg(i, i) = -2.0 * (r1 + 2.0 * delta[i] * delta[i] * r2);
        Cf(i, i) = Cg(i, i);
      } else {
        Cg(i, j) = -4.0 * delta[i] * delta[j] * r2;
      }
    }
  const double log2pie = std::log(2.0 * std::numbers::pi) + 1.0;
  const double logdet_marg = static_cast<double>(d) * std::log(a);
  auto joint_logdet = [&](const MatrixXd& C) {
    MatrixXd J(2 * d, 2 * d);
    J.setZero();
    J.topLeftCorner(d, d).diagonal().setConstant(a);
    J.bottomRightCorner(d, d).diagonal().setConstant(a);
    J.topRightCorner(d, d) = C;
    J.bottomLeftCorner(d, d) = C.transpose();
    Eigen::LLT<MatrixXd> llt(J);
    if (llt.info() != Eigen::Success) throw InputError("radial profile not admissible at this pair");
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  };
  FlexibilityMetrics m;
  m.H_f = 0.5 * static_cast<double>(d) * log2pie + 0.5 * logdet_marg;
  MatrixXd Sg(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) Sg(i, j) = i == j ? -2.0 * rho.drho(0.0) : 0.0;
  m.H_g = 0.5 * static_cast<double>(d) * log2pie + 0.5 * std::log(Sg.determinant());
  m.I_f = logdet_marg - 0.5 * joint_logdet(Cf);
  m.I_g = logdet_marg - 0.5 * joint_logdet(Cg);
  return m;
}

}  // namespace stringgp
