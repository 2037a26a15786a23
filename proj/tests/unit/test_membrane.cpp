#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace stringgp;

namespace {

// e_n(x) by summing over all subsets of size n.
double brute_elementary(const std::vector<double>& x, std::size_t n) {
  const std::size_t d = x.size();
  double out = 0.0;
  for (unsigned mask = 0; mask < (1u << d); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) != n) continue;
    double p = 1.0;
    for (std::size_t i = 0; i < d; ++i)
      if (mask & (1u << i)) p *= x[i];
    out += p;
  }
  return out;
}

double link_value(const LinkFunction& l, const std::vector<double>& x) {
  const auto c = l.coefficients();
  double v = 0.0;
  for (std::size_t n = 1; n <= x.size(); ++n) v += c[n] * brute_elementary(x, n);
  return v;
}

MembraneModel model_2d(const LinkFunction& link, const MeanFunction& m0, const MeanFunction& m1) {
  StringPartition p0;
  p0.boundaries = {0.0, 0.4, 1.0};
  p0.strings = {{KernelSpec::squared_exponential(1.0, 0.3), m0}, {KernelSpec::matern52(0.7, 0.2), m0}};
  StringPartition p1 = StringPartition::uniform(KernelSpec::rational_quadratic(1.2, 0.4, 1.5), 0.0, 1.0, 3, m1);
  return MembraneModel{{StringGP(p0), StringGP(p1)}, link};
}

MembraneModel model_3d(const LinkFunction& link) {
  MembraneModel m{{}, link};
  m.dims.emplace_back(StringPartition::uniform(KernelSpec::squared_exponential(1.0, 0.3), 0.0, 1.0, 2,
                                               MeanFunction::constant(0.5)));
  m.dims.emplace_back(StringPartition::uniform(KernelSpec::matern52(0.8, 0.4), 0.0, 1.0, 3,
                                               MeanFunction::constant(-1.0)));
  m.dims.emplace_back(StringPartition::uniform(KernelSpec::rational_quadratic(1.1, 0.3, 2.0), 0.0, 1.0, 1,
                                               MeanFunction::constant(2.0)));
  return m;
}

// Exact moments of phi by expanding into monomials over coordinate subsets.
// slot_u[i] / slot_v[i] pick value (0) or derivative (1) of coordinate i;
// `force` requires coordinate i in the subset (gradient terms).
struct Brute {
  const MembraneModel& m;
  std::vector<Vec2> mu, mv;
  std::vector<Mat2> K;

  Brute(const MembraneModel& model, const std::vector<double>& u, const std::vector<double>& v) : m(model) {
    for (std::size_t i = 0; i < m.dimension(); ++i) {
      mu.push_back(m.dims[i].global_mean(u[i]));
      mv.push_back(m.dims[i].global_mean(v[i]));
      K.push_back(m.dims[i].global_cov(u[i], v[i]));
    }
  }

  static constexpr int kNone = -1;

  double mean(const std::vector<Vec2>& mean, int force) const {
    const std::size_t d = m.dimension();
    const auto c = m.link.coefficients();
    double out = 0.0;
    for (unsigned S = 0; S < (1u << d); ++S) {
      if (force != kNone && !(S & (1u << force))) continue;
      double p = c[static_cast<std::size_t>(__builtin_popcount(S))];
      for (std::size_t i = 0; i < d; ++i)
        if (S & (1u << i)) p *= mean[i](static_cast<int>(i) == force ? 1 : 0);
      out += p;
    }
    return out;
  }

  double second(int fu, int fv) const {
    const std::size_t d = m.dimension();
    const auto c = m.link.coefficients();
    double out = 0.0;
    for (unsigned S = 1; S < (1u << d); ++S) {
      if (fu != kNone && !(S & (1u << fu))) continue;
      for (unsigned T = 1; T < (1u << d); ++T) {
        if (fv != kNone && !(T & (1u << fv))) continue;
        double p = c[static_cast<std::size_t>(__builtin_popcount(S))] * c[static_cast<std::size_t>(__builtin_popcount(T))];
        for (std::size_t i = 0; i < d; ++i) {
          const int a = static_cast<int>(i) == fu ? 1 : 0, b = static_cast<int>(i) == fv ? 1 : 0;
          const bool inS = S & (1u << i), inT = T & (1u << i);
          if (inS && inT) p *= K[i](a, b) + mu[i](a) * mv[i](b);
          else if (inS) p *= mu[i](a);
          else if (inT) p *= mv[i](b);
        }
        out += p;
      }
    }
    return out;
  }

  double cov(int fu, int fv) const { return second(fu, fv) - mean(mu, fu) * mean(mv, fv); }
};

}  // namespace

TEST(Link, ElementarySymmetricExamples) {
  auto a = link_eval_and_partials(LinkFunction::sum(3), {1, 2, 3});
  EXPECT_DOUBLE_EQ(a.value, 6.0);
  EXPECT_EQ(a.gradient, (std::vector<double>{1, 1, 1}));
  auto b = link_eval_and_partials(LinkFunction::product(3), {2, 3, 4});
  EXPECT_DOUBLE_EQ(b.value, 24.0);
  EXPECT_EQ(b.gradient, (std::vector<double>{12, 8, 6}));
  auto c = link_eval_and_partials(LinkFunction::elementary(3, 2), {1, 1, 1});
  EXPECT_DOUBLE_EQ(c.value, 3.0);
  EXPECT_EQ(c.gradient, (std::vector<double>{2, 2, 2}));
}

TEST(Link, RecurrenceMatchesSubsetEnumeration) {
  Rng rng(30);
  for (std::size_t d = 1; d <= 8; ++d) {
    std::vector<double> x(d);
    for (auto& v : x) v = uniform(rng, -2.0, 2.0);
    const auto e = elementary_symmetric(x, d);
    for (std::size_t n = 0; n <= d; ++n) EXPECT_NEAR(e[n], brute_elementary(x, n), 1e-10) << d << " " << n;
  }
}

TEST(Link, PartialsMatchFiniteDifferences) {
  Rng rng(31);
  for (std::size_t d = 1; d <= 6; ++d) {
    std::vector<LinkFunction> links{LinkFunction::sum(d), LinkFunction::product(d),
                                    LinkFunction::elementary(d, (d + 1) / 2)};
    std::vector<double> w(d);
    for (auto& v : w) v = uniform(rng, -1.0, 1.0);
    links.push_back(LinkFunction::full_additive(w));
    for (const auto& l : links) {
      std::vector<double> x(d);
      for (auto& v : x) v = uniform(rng, -1.5, 1.5);
      const auto lv = link_eval_and_partials(l, x);
      EXPECT_NEAR(lv.value, link_value(l, x), 1e-10);
      for (std::size_t j = 0; j < d; ++j) {
        auto xp = x, xm = x;
        xp[j] += 1e-6;
        xm[j] -= 1e-6;
        const double fd = (link_value(l, xp) - link_value(l, xm)) / 2e-6;
        EXPECT_NEAR(lv.gradient[j], fd, 1e-6 * std::max(1.0, std::abs(fd)));
      }
    }
  }
}

TEST(Link, ValidationAndDimensionChecks) {
  EXPECT_THROW(LinkFunction::elementary(3, 4).validate(), InputError);
  EXPECT_THROW(LinkFunction::elementary(3, 0).validate(), InputError);
  EXPECT_THROW((LinkFunction{LinkKind::WeightedFullAdditive, 3, 3, {1.0}}).validate(), InputError);
  EXPECT_THROW(link_eval_and_partials(LinkFunction::sum(2), {1, 2, 3}), InputError);
}

TEST(MembraneGradient, ScalesPartialsByDerivatives) {
  EXPECT_EQ(membrane_gradient(LinkFunction::sum(3), {5, -1, 2}, {0.1, 0.2, 0.3}), (std::vector<double>{0.1, 0.2, 0.3}));
  EXPECT_EQ(membrane_gradient(LinkFunction::elementary(3, 2), {5, -1, 2}, {0, 0, 0}),
            (std::vector<double>{0, 0, 0}));
}

TEST(MembraneGradient, MatchesFiniteDifferencesAlongSmoothPaths) {
  // z_j(t) = a_j sin(b_j t) + c_j, evaluated with exact derivatives.
  const LinkFunction l = LinkFunction::elementary(3, 2);
  const double A[3] = {1.0, 0.5, 2.0}, B[3] = {3.0, 1.0, 0.7}, C[3] = {0.2, -1.0, 0.5};
  auto z = [&](std::size_t j, double t) { return A[j] * std::sin(B[j] * t) + C[j]; };
  auto dz = [&](std::size_t j, double t) { return A[j] * B[j] * std::cos(B[j] * t); };
  const std::vector<double> t{0.3, 1.1, -0.4};
  std::vector<double> zv(3), dzv(3);
  for (std::size_t j = 0; j < 3; ++j) {
    zv[j] = z(j, t[j]);
    dzv[j] = dz(j, t[j]);
  }
  const auto g = membrane_gradient(l, zv, dzv);
  const double h = 1e-5;
  for (std::size_t j = 0; j < 3; ++j) {
    auto zp = zv, zm = zv;
    zp[j] = z(j, t[j] + h);
    zm[j] = z(j, t[j] - h);
    const double fd = (link_value(l, zp) - link_value(l, zm)) / (2 * h);
    EXPECT_NEAR(g[j], fd, 1e-4 * std::abs(fd));
  }
}

TEST(MembraneMoments, SumLinkAddsUnivariateGrams) {
  const MembraneModel m = model_2d(LinkFunction::sum(2), MeanFunction::zero(), MeanFunction::zero());
  Rng rng(32);
  const std::size_t n = 40;
  std::vector<std::vector<double>> pts(n);
  std::vector<double> x0(n), x1(n);
  for (std::size_t i = 0; i < n; ++i) {
    x0[i] = uniform(rng, 0, 1);
    x1[i] = uniform(rng, 0, 1);
    pts[i] = {x0[i], x1[i]};
  }
  const MatrixXd want = m.dims[0].value_gram(x0) + m.dims[1].value_gram(x1);
  MatrixXd G(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const auto mm = membrane_moments(m, pts[i], pts[j]);
      G(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = mm.cov;
      EXPECT_EQ(mm.mean_u, 0.0);
      EXPECT_EQ(mm.grad_mean_u.cwiseAbs().maxCoeff(), 0.0);
    }
  EXPECT_LT((G - want).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_GE(testutil::min_eigenvalue(G), -1e-8);
}

TEST(MembraneMoments, ProductLinkGivesSeparableKernelInsideStrings) {
  const KernelSpec k0 = KernelSpec::squared_exponential(1.0, 0.3), k1 = KernelSpec::matern52(0.6, 0.25);
  MembraneModel m{{StringGP(StringPartition::uniform(k0, 0.0, 1.0, 2)),
                   StringGP(StringPartition::uniform(k1, 0.0, 1.0, 2))},
                  LinkFunction::product(2)};
  Rng rng(33);
  for (int r = 0; r < 100; ++r) {
    const double lo0 = r % 2 ? 0.5 : 0.0, lo1 = (r / 2) % 2 ? 0.5 : 0.0;
    const std::vector<double> u{uniform(rng, lo0, lo0 + 0.5), uniform(rng, lo1, lo1 + 0.5)};
    const std::vector<double> v{uniform(rng, lo0, lo0 + 0.5), uniform(rng, lo1, lo1 + 0.5)};
    EXPECT_NEAR(membrane_moments(m, u, v).cov, eval_value(k0, u[0], v[0]) * eval_value(k1, u[1], v[1]), 1e-10);
  }
}

TEST(MembraneMoments, MatchSubsetExpansionWithNonzeroMeans) {
  std::vector<LinkFunction> links{LinkFunction::sum(3), LinkFunction::product(3), LinkFunction::elementary(3, 2),
                                  LinkFunction::full_additive({0.5, -1.0, 0.3})};
  Rng rng(34);
  for (const auto& l : links) {
    const MembraneModel m = model_3d(l);
    for (int r = 0; r < 10; ++r) {
      const std::vector<double> u{uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1)};
      const std::vector<double> v{uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1)};
      const auto mm = membrane_moments(m, u, v);
      const Brute b(m, u, v);
      EXPECT_NEAR(mm.mean_u, b.mean(b.mu, Brute::kNone), 1e-10);
      EXPECT_NEAR(mm.mean_v, b.mean(b.mv, Brute::kNone), 1e-10);
      EXPECT_NEAR(mm.cov, b.cov(Brute::kNone, Brute::kNone), 1e-10);
      for (int i = 0; i < 3; ++i) {
        EXPECT_NEAR(mm.grad_mean_u(i), b.mean(b.mu, i), 1e-10);
        EXPECT_NEAR(mm.cov_grad_value(i), b.cov(i, Brute::kNone), 1e-10);
        EXPECT_NEAR(mm.cov_value_grad(i), b.cov(Brute::kNone, i), 1e-10);
        for (int j = 0; j < 3; ++j) EXPECT_NEAR(mm.cov_grad_grad(i, j), b.cov(i, j), 1e-10);
      }
    }
  }
}

TEST(MembraneMoments, CrossBlocksMatchFiniteDifferences) {
  const MembraneModel m = model_2d(LinkFunction::product(2), MeanFunction::constant(0.4),
                                   MeanFunction::constant(-0.3));
  const std::vector<double> u{0.23, 0.61}, v{0.71, 0.12};
  const auto mm = membrane_moments(m, u, v);
  const double h = 1e-5;
  for (std::size_t i = 0; i < 2; ++i) {
    auto up = u, um = u, vp = v, vm = v;
    up[i] += h;
    um[i] -= h;
    vp[i] += h;
    vm[i] -= h;
    const double du = (membrane_moments(m, up, v).cov - membrane_moments(m, um, v).cov) / (2 * h);
    const double dv = (membrane_moments(m, u, vp).cov - membrane_moments(m, u, vm).cov) / (2 * h);
    EXPECT_NEAR(mm.cov_grad_value(static_cast<Eigen::Index>(i)), du, 1e-4 * std::max(1e-3, std::abs(du)));
    EXPECT_NEAR(mm.cov_value_grad(static_cast<Eigen::Index>(i)), dv, 1e-4 * std::max(1e-3, std::abs(dv)));
    const double dm = (membrane_moments(m, up, v).mean_u - membrane_moments(m, um, v).mean_u) / (2 * h);
    EXPECT_NEAR(mm.grad_mean_u(static_cast<Eigen::Index>(i)), dm, 1e-6);
  }
}

TEST(MembraneMoments, ValueFastPathAgrees) {
  const MembraneModel m = model_3d(LinkFunction::elementary(3, 2));
  const std::vector<double> u{0.1, 0.5, 0.9}, v{0.3, 0.2, 0.6};
  std::vector<double> mu, mv, kuv;
  for (std::size_t i = 0; i < 3; ++i) {
    mu.push_back(m.dims[i].global_mean(u[i])(0));
    mv.push_back(m.dims[i].global_mean(v[i])(0));
    kuv.push_back(m.dims[i].global_value_cov(u[i], v[i]));
  }
  EXPECT_NEAR(membrane_value_cov(m.link.coefficients(), mu, mv, kuv), membrane_moments(m, u, v).cov, 1e-12);
}

TEST(Flexibility, EntropiesEqualAndMutualInformationOrdered) {
  Rng rng(35);
  const auto rho = RadialProfile::squared_exponential();
  for (int r = 0; r < 300; ++r) {
    const std::size_t d = 2 + static_cast<std::size_t>(uniform(rng, 0.0, 4.0));
    std::vector<double> x(d), y(d);
    for (std::size_t i = 0; i < d; ++i) {
      x[i] = uniform(rng, 0, 1);
      y[i] = uniform(rng, 0, 1);
    }
    const auto fm = flexibility_metrics(rho, x, y);
    EXPECT_NEAR(fm.H_f, fm.H_g, 1e-10);
    EXPECT_LE(fm.I_f, fm.I_g + 1e-10);
    EXPECT_GE(fm.I_f, -1e-12);
  }
}

TEST(Flexibility, SingleCoordinateDisplacementGivesEqualInformation) {
  const auto rho = RadialProfile::squared_exponential();
  const auto fm = flexibility_metrics(rho, {0.2, 0.5, 0.9}, {0.2, 0.1, 0.9});
  EXPECT_NEAR(fm.I_f, fm.I_g, 1e-12);
  EXPECT_THROW(flexibility_metrics(rho, {0.1, 0.2}, {0.1, 0.2}), InputError);
}
