#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "stringgp/errors.hpp"
#include "stringgp/linalg.hpp"

namespace stringgp {

enum class Family {
  SquaredExponential,
  RationalQuadratic,
  Matern32,
  Matern52,
  Periodic,
  SpectralMixture,
  Linear,
};

// Parameter layout per family:
//   SE, Matern32, Matern52 : variance, scale
//   RationalQuadratic      : variance, scale, alpha
//   Periodic               : variance, scale, period
//   SpectralMixture        : (variance, gamma, mu) repeated per component
//   Linear                 : variance, offset   (offset may take any sign)
struct KernelSpec {
  Family family = Family::SquaredExponential;
  std::vector<double> params{1.0, 1.0};

  static KernelSpec squared_exponential(double variance, double scale) {
    return {Family::SquaredExponential, {variance, scale}};
  }
  static KernelSpec rational_quadratic(double variance, double scale, double alpha) {
    return {Family::RationalQuadratic, {variance, scale, alpha}};
  }
  static KernelSpec matern32(double variance, double scale) {
    return {Family::Matern32, {variance, scale}};
  }
  static KernelSpec matern52(double variance, double scale) {
    return {Family::Matern52, {variance, scale}};
  }
  static KernelSpec periodic(double variance, double scale, double period) {
    return {Family::Periodic, {variance, scale, period}};
  }
  static KernelSpec spectral_mixture(std::vector<double> variance_gamma_mu) {
    return {Family::SpectralMixture, std::move(variance_gamma_mu)};
  }
  static KernelSpec linear(double variance, double offset) {
    return {Family::Linear, {variance, offset}};
  }

  bool stationary() const { return family != Family::Linear; }
  std::size_t size() const { return params.size(); }

  // Whether parameter i is constrained positive (and therefore lives in log space
  // during optimization and sampling).
  bool positive(std::size_t i) const { return !(family == Family::Linear && i == 1); }

  std::size_t components() const {
    return family == Family::SpectralMixture ? params.size() / 3 : 1;
  }

  // k(t, t) for stationary families.
  double variance() const {
    if (family == Family::SpectralMixture) {
      double s = 0.0;
      for (std::size_t q = 0; q < components(); ++q) s += params[3 * q];
      return s;
    }
    return params[0];
  }

  bool operator==(const KernelSpec& o) const { return family == o.family && params == o.params; }

  void validate() const;
};

inline std::size_t expected_param_count(Family f) {
  switch (f) {
    case Family::SquaredExponential:
    case Family::Matern32:
    case Family::Matern52:
    case Family::Linear:
      return 2;
    case Family::RationalQuadratic:
    case Family::Periodic:
      return 3;
    case Family::SpectralMixture:
      return 3;
  }
  return 0;
}

inline std::string family_name(Family f) {
  switch (f) {
    case Family::SquaredExponential: return "se";
    case Family::RationalQuadratic: return "rq";
    case Family::Matern32: return "matern32";
    case Family::Matern52: return "matern52";
    case Family::Periodic: return "periodic";
    case Family::SpectralMixture: return "sm";
    case Family::Linear: return "linear";
  }
  return "?";
}

inline Family parse_family(const std::string& s) {
  if (s == "se" || s == "squared_exponential" || s == "SquaredExponential") return Family::SquaredExponential;
  if (s == "rq" || s == "rational_quadratic" || s == "RationalQuadratic") return Family::RationalQuadratic;
  if (s == "matern32" || s == "Matern32") return Family::Matern32;
  if (s == "matern52" || s == "Matern52") return Family::Matern52;
  if (s == "periodic" || s == "Periodic") return Family::Periodic;
  if (s == "sm" || s == "spectral_mixture" || s == "SpectralMixture") return Family::SpectralMixture;
  if (s == "linear" || s == "Linear") return Family::Linear;
  throw InputError("unknown kernel family '" + s + "'");
}

inline std::vector<std::string> param_names(const KernelSpec& k) {
  switch (k.family) {
    case Family::SquaredExponential:
    case Family::Matern32:
    case Family::Matern52:
      return {"variance", "scale"};
    case Family::RationalQuadratic: return {"variance", "scale", "alpha"};
    case Family::Periodic: return {"variance", "scale", "period"};
    case Family::Linear: return {"variance", "offset"};
    case Family::SpectralMixture: {
      if (k.components() == 1) return {"variance", "gamma", "mu"};
      std::vector<std::string> n;
      for (std::size_t q = 1; q <= k.components(); ++q)
        for (const char* b : {"variance_", "gamma_", "mu_"}) n.push_back(b + std::to_string(q));
      return n;
    }
  }
  return {};
}

inline void KernelSpec::validate() const {
  const std::size_t n = expected_param_count(family);
  if (family == Family::SpectralMixture) {
    if (params.empty() || params.size() % 3 != 0)
      throw InputError("spectral mixture needs 3 parameters per component");
  } else if (params.size() != n) {
    throw InputError(family_name(family) + " kernel needs " + std::to_string(n) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!std::isfinite(params[i])) throw InputError("non-finite kernel parameter");
    if (positive(i) && !(params[i] > 0.0))
      throw InputError(family_name(family) + " kernel parameter '" + param_names(*this)[i] +
                       "' must be positive");
  }
}

namespace detail {

// g, g', g'' of a stationary profile at lag tau = u - v.
struct Profile {
  double g, d1, d2;
};

inline Profile stationary_profile(const KernelSpec& k, double tau) {
  const auto& p = k.params;
  switch (k.family) {
    case Family::SquaredExponential: {
      const double l2 = p[1] * p[1];
      const double g = p[0] * std::exp(-0.5 * tau * tau / l2);
      return {g, -tau / l2 * g, (tau * tau / l2 - 1.0) / l2 * g};
    }
    case Family::RationalQuadratic: {
      const double s2 = p[0], l2 = p[1] * p[1], a = p[2];
      const double q = 1.0 + tau * tau / (2.0 * a * l2);
      const double qa1 = std::pow(q, -a - 1.0);
      return {s2 * qa1 * q, -s2 * tau / l2 * qa1,
              -s2 / l2 * qa1 / q * (q - (a + 1.0) * tau * tau / (a * l2))};
    }
    case Family::Matern32: {
      const double a = std::sqrt(3.0) / p[1], r = std::abs(tau);
      const double e = p[0] * std::exp(-a * r);
      return {(1.0 + a * r) * e, -a * a * tau * e, -a * a * (1.0 - a * r) * e};
    }
    case Family::Matern52: {
      const double a = std::sqrt(5.0) / p[1], r = std::abs(tau);
      const double e = p[0] * std::exp(-a * r);
      const double a2 = a * a;
      return {(1.0 + a * r + a2 * tau * tau / 3.0) * e, -a2 / 3.0 * tau * (1.0 + a * r) * e,
              -a2 / 3.0 * (1.0 + a * r - a2 * tau * tau) * e};
    }
    case Family::Periodic: {
      const double l2 = p[1] * p[1], w = std::numbers::pi / p[2];
      const double s = std::sin(w * tau);
      const double g = p[0] * std::exp(-2.0 * s * s / l2);
      const double h1 = -2.0 * w * std::sin(2.0 * w * tau) / l2;
      const double h2 = -4.0 * w * w * std::cos(2.0 * w * tau) / l2;
      return {g, g * h1, g * (h1 * h1 + h2)};
    }
    case Family::SpectralMixture: {
      Profile out{0.0, 0.0, 0.0};
      const double pi = std::numbers::pi;
      for (std::size_t q = 0; q < k.components(); ++q) {
        const double w = p[3 * q], b = 2.0 * pi * pi * p[3 * q + 1] * p[3 * q + 1],
                     c = 2.0 * pi * p[3 * q + 2];
        const double e = w * std::exp(-b * tau * tau);
        const double cs = std::cos(c * tau), sn = std::sin(c * tau);
        out.g += e * cs;
        out.d1 += e * (-2.0 * b * tau * cs - c * sn);
        out.d2 += e * ((4.0 * b * b * tau * tau - 2.0 * b - c * c) * cs + 4.0 * b * c * tau * sn);
      }
      return out;
    }
    case Family::Linear:
      break;
  }
  return {0.0, 0.0, 0.0};
}

}  // namespace detail

// Value covariance k(u, v).
inline double eval_value(const KernelSpec& k, double u, double v) {
  if (k.family == Family::Linear) return k.params[0] * (u - k.params[1]) * (v - k.params[1]);
  if (k.family == Family::SquaredExponential) {
    const double t = (u - v) / k.params[1];
    return k.params[0] * std::exp(-0.5 * t * t);
  }
  return detail::stationary_profile(k, u - v).g;
}

// Derivative covariance block [[k, dk/dy], [dk/dx, d2k/dxdy]] at (u, v).
inline Mat2 eval_block(const KernelSpec& k, double u, double v) {
  Mat2 B;
  if (k.family == Family::Linear) {
    const double s2 = k.params[0], c = k.params[1];
    B << s2 * (u - c) * (v - c), s2 * (u - c), s2 * (v - c), s2;
  } else {
    const auto p = detail::stationary_profile(k, u - v);
    B << p.g, -p.d1, p.d1, -p.d2;
  }
  if (!B.allFinite()) throw NumericalError("non-finite kernel evaluation; invalid hyper-parameters");
  return B;
}

struct DegeneracyFlags {
  bool degenerate_at_a = false;
  bool degenerate_at_b_given_a = false;
};

// Conditional covariance of (z_b, z'_b) given (z_a, z'_a) under kernel k.
inline Mat2 conditional_block(const KernelSpec& k, double a, double b) {
  const Mat2 Kaa = eval_block(k, a, a), Kba = eval_block(k, b, a), Kbb = eval_block(k, b, b);
  const Mat2 S = Kbb - Kba * Kaa.ldlt().solve(Kba.transpose());
  return 0.5 * (S + S.transpose());
}

inline DegeneracyFlags degeneracy_check(const KernelSpec& k, double a, double b) {
  DegeneracyFlags f;
  const Mat2 Kaa = eval_block(k, a, a);
  f.degenerate_at_a = linalg::is_degenerate(Kaa);
  if (f.degenerate_at_a) {
    f.degenerate_at_b_given_a = true;
    return f;
  }
  f.degenerate_at_b_given_a = linalg::is_degenerate(conditional_block(k, a, b));
  return f;
}

}  // namespace stringgp
