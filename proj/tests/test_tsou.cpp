#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "superlift/tsou.hpp"

using namespace superlift;

namespace {

TemperedStableMeasure calibrated() { return {calibrate_a_nu(0.1, 0.65, 0.5), 0.1, 0.65}; }

double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, f - i / n, (i + 1) / n - f});
  }
  return d;
}

double two_sample_ks(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

// Mass of the part of the step-increment Levy density not covered by the
// Theta term: int_0^dt int_0^inf a y^{-1-c} (e^{-b t y} - e^{-b E y}) t^{-c} dy dv,
// t = e^{a2 v}, E = e^{a2 dt}.
double xi_mass_quadrature(const TsouCoeffs& k) {
  using boost::math::quadrature::gauss;
  using boost::math::quadrature::gauss_kronrod;
  const auto& m = k.measure;
  const double E = std::exp(k.a2 * k.dt);
  auto inner = [&](double v) {
    const double t = std::exp(k.a2 * v);
    auto f = [&](double y) {
      if (y <= 0.0) return 0.0;
      return m.a_nu * std::pow(y, -1.0 - m.c_nu) *
             std::exp(-m.b_nu * t * y) * -std::expm1(-m.b_nu * (E - t) * y);
    };
    const double scale = 1.0 / (m.b_nu * t);
    const std::vector<double> cuts{0.0, 0.1 * scale, scale, 10.0 * scale, 80.0 * scale};
    double total = 0.0;
    const double p = 1.0 / (1.0 - m.c_nu);
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
      auto g = [&](double w) {
        if (w <= 0.0) return 0.0;
        const double y = std::pow(w, p);
        return f(y) * p * std::pow(w, p - 1.0);
      };
      total += gauss_kronrod<double, 61>::integrate(g, std::pow(cuts[i], 1.0 - m.c_nu),
                                                    std::pow(cuts[i + 1], 1.0 - m.c_nu), 15, 1e-13);
    }
    return total * std::pow(t, -m.c_nu);
  };
  return gauss<double, 20>::integrate(inner, 0.0, k.dt);
}

// Compound-Poisson path of one step built only from the standard library.
double oracle_cp_increment(std::mt19937_64& gen, const TsouCoeffs& k) {
  const auto& m = k.measure;
  const double rate = m.a_nu * std::tgamma(-m.c_nu) * std::pow(m.b_nu, m.c_nu) * k.dt;
  std::poisson_distribution<long> count(rate);
  std::gamma_distribution<double> size(-m.c_nu, 1.0 / m.b_nu);
  std::uniform_real_distribution<double> when(0.0, k.dt);
  const long n = count(gen);
  double sum = 0.0;
  for (long i = 0; i < n; ++i) sum += size(gen) * std::exp(-k.a2 * when(gen));
  return sum;
}

std::vector<double> increments(const TsouCoeffs& k, std::size_t n, std::uint64_t id,
                               TsouMethod method = TsouMethod::exact) {
  RandomStream rs(4242, id);
  const auto p = tsou_parts(k);
  std::vector<double> xs(n);
  for (auto& x : xs) x = tsou_increment(k, p, rs, method);
  return xs;
}

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double var_of(const std::vector<double>& xs) {
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size() - 1);
}

}  // namespace

TEST(Tsou, ZeroMeasureIsPureDecay) {
  const TsouCoeffs k{2.0, {0.0, 0.3, 0.5}, 0.1};
  RandomStream rs(1, 1);
  for (double s : {0.0, 1.0, 7.5}) {
    EXPECT_DOUBLE_EQ(tsou_step(k, s, rs), s * std::exp(-0.2));
  }
}

TEST(Tsou, PoissonIntensityFrozenValues) {
  // 30-digit evaluations of the closed form, cross-checked by double quadrature.
  const TsouCoeffs k1{1.0, calibrated(), 0.01};
  EXPECT_NEAR(tsou_poisson_intensity(k1), 2.50542548020511612e-6, 1e-12 * 2.5e-6);
  const TsouCoeffs k2{0.5, calibrated(), 0.3};
  EXPECT_NEAR(tsou_poisson_intensity(k2), 0.00116247137593517351523, 1e-12 * 1.2e-3);
}

TEST(Tsou, PoissonIntensityMatchesQuadrature) {
  for (double c : {-0.5, 0.0, 0.3, 0.65, 0.9}) {
    for (double dt : {0.05, 0.7}) {
      const TsouCoeffs k{0.8, {1.3, 0.4, c}, dt};
      const double exact = xi_mass_quadrature(k);
      EXPECT_NEAR(tsou_poisson_intensity(k), exact, 1e-8 * exact) << "c=" << c << " dt=" << dt;
    }
  }
}

TEST(Tsou, PoissonIntensityVanishesWithStep) {
  const TsouCoeffs k{1.0, calibrated(), 1e-8};
  EXPECT_LT(tsou_poisson_intensity(k), 1e-6);
  EXPECT_GT(tsou_poisson_intensity(k), 0.0);
}

TEST(Tsou, PartsContinuousAtZeroIndex) {
  const TsouCoeffs k0{1.0, {1.0, 0.5, 0.0}, 0.2};
  const TsouCoeffs ke{1.0, {1.0, 0.5, 1e-7}, 0.2};
  const auto p0 = tsou_parts(k0);
  const auto pe = tsou_parts(ke);
  EXPECT_NEAR(p0.theta_coef, 0.2, 1e-15);  // (a/a2) L at c = 0
  EXPECT_NEAR(pe.theta_coef, p0.theta_coef, 1e-7);
  EXPECT_NEAR(pe.poisson_rate, p0.poisson_rate, 1e-7);
}

TEST(Tsou, ScaledPartsMatchScaledMeasure) {
  const TsouCoeffs k{0.7, {0.9, 0.4, 0.3}, 0.05};
  const TsouCoeffs k3{0.7, k.measure.scaled(3.0), 0.05};
  const auto s = tsou_parts(k).scaled(3.0);
  const auto d = tsou_parts(k3);
  EXPECT_NEAR(s.theta_coef, d.theta_coef, 1e-15);
  EXPECT_NEAR(s.theta_scale, d.theta_scale, 1e-14);
  EXPECT_NEAR(s.poisson_rate, d.poisson_rate, 1e-15);
}

TEST(Tsou, XiTimeDensity) {
  // CDF on [1, E] prop. to ((t^c - 1)/c - ln t)/c, or (ln t)^2 / 2 at c = 0.
  for (double c : {-0.5, 0.0, 0.65}) {
    const double L = 1.0;
    auto prim = [c](double t) {
      const double lt = std::log(t);
      if (c == 0.0) return 0.5 * lt * lt;
      return (std::expm1(c * lt) / c - lt) / c;
    };
    RandomStream rs(8, 8);
    std::vector<double> ts(200000);
    for (auto& t : ts) t = detail::sample_xi_time(rs, c, L);
    const double total = prim(std::exp(L));
    const double d = ks_statistic(ts, [&](double t) { return prim(t) / total; });
    EXPECT_LT(d, 1.63 / std::sqrt(200000.0)) << "c=" << c;
  }
}

TEST(Tsou, ConditionalMean) {
  // E[S'] = s e^{-a2 dt} + M1 (1 - e^{-a2 dt})/a2, Var = M2 (1 - e^{-2 a2 dt})/(2 a2).
  for (double c : {-0.5, 0.0, 0.3, 0.65}) {
    for (double dt : {0.01, 0.5}) {
      const TsouCoeffs k{1.5, {0.8, 0.6, c}, dt};
      const double m1 = moment_mk(k.measure, 1);
      const double m2 = moment_mk(k.measure, 2);
      const double L = k.a2 * dt;
      const double mean = m1 * -std::expm1(-L) / k.a2;
      const double var = m2 * -std::expm1(-2.0 * L) / (2.0 * k.a2);
      const std::size_t n = 400000;
      const auto xs = increments(k, n, static_cast<std::uint64_t>(100 * (c + 1) + 1000 * dt));
      EXPECT_NEAR(mean_of(xs), mean, 4.0 * std::sqrt(var / n)) << "c=" << c << " dt=" << dt;
      EXPECT_NEAR(var_of(xs), var, 0.1 * var) << "c=" << c << " dt=" << dt;
    }
  }
}

TEST(Tsou, CalibratedConditionalMean) {
  const TsouCoeffs k{1.0, calibrated(), 0.01};
  const std::size_t n = 1000000;
  RandomStream rs(3, 3);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += tsou_step(k, 2.0, rs);
  const double exact = 2.0 * std::exp(-0.01) + 0.5 * -std::expm1(-0.01);
  const double sd = std::sqrt(1.75 * -std::expm1(-0.02) / 2.0);
  EXPECT_NEAR(s / n, exact, 4.0 * sd / std::sqrt(static_cast<double>(n)));
}

TEST(Tsou, LaplaceTransform) {
  // E[e^{-u I}] = exp(-int_0^dt psi(u e^{-a2 v}) dv).
  using boost::math::quadrature::gauss;
  for (double c : {-0.5, 0.0, 0.65}) {
    const TsouCoeffs k{2.0, {1.0, 0.5, c}, 0.4};
    const auto xs = increments(k, 400000, 77);
    for (double u : {0.3, 1.0, 3.0}) {
      const double expo = gauss<double, 20>::integrate(
          [&](double v) { return levy_integral_neg(k.measure, u * std::exp(-k.a2 * v)); }, 0.0, k.dt);
      const double exact = std::exp(-expo);
      double s = 0.0;
      for (double x : xs) s += std::exp(-u * x);
      EXPECT_NEAR(s / xs.size(), exact, 4.0 * std::sqrt(exact * (1.0 - exact) / xs.size()))
          << "c=" << c << " u=" << u;
    }
  }
}

TEST(Tsou, ExactAgreesWithIndependentCompoundPoisson) {
  const TsouCoeffs k{1.0, {2.0, 1.0, -0.5}, 0.5};
  const std::size_t n = 200000;
  const auto exact = increments(k, n, 5);
  std::mt19937_64 gen(123);
  std::vector<double> oracle(n);
  for (auto& x : oracle) x = oracle_cp_increment(gen, k);
  EXPECT_LT(two_sample_ks(exact, oracle), 1.63 * std::sqrt(2.0 / n));
  const auto cp = increments(k, n, 6, TsouMethod::compound_poisson);
  EXPECT_LT(two_sample_ks(cp, oracle), 1.63 * std::sqrt(2.0 / n));
}

TEST(Tsou, CompoundPoissonRequiresFiniteActivity) {
  RandomStream rs(1, 1);
  for (double c : {0.0, 0.65}) {
    const TsouCoeffs k{1.0, {1.0, 0.5, c}, 0.1};
    EXPECT_THROW(tsou_step(k, 1.0, rs, TsouMethod::compound_poisson), ConfigError);
  }
}

TEST(Tsou, NonNegative) {
  RandomStream rs(9, 9);
  for (double c : {-2.0, -0.5, 0.0, 0.5, 0.95}) {
    const TsouCoeffs k{1.0, {0.5, 0.2, c}, 0.05};
    double s = 0.0;
    for (int i = 0; i < 100000; ++i) {
      s = tsou_step(k, s, rs);
      ASSERT_GE(s, 0.0) << "c=" << c;
    }
  }
}

TEST(Tsou, StationaryMeanAlongOnePath) {
  const TsouCoeffs k{1.0, calibrated(), 0.05};
  RandomStream rs(21, 0);
  double s = 0.5;
  double sum = 0.0;
  const int n = 2000000;
  for (int i = 0; i < n; ++i) {
    s = tsou_step(k, s, rs);
    sum += s;
  }
  // Stationary variance M2/(2 a2) = 0.875, correlation time 1/a2: ~100000 / 20 effective samples.
  EXPECT_NEAR(sum / n, 0.5, 4.0 * std::sqrt(0.875 * 2.0 / (n * 0.05)));
}
