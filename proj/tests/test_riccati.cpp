#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "superlift/riccati.hpp"

using namespace superlift;

namespace {

ModelSpec single(double r, double sigma, double a, double b, TemperedStableMeasure m) {
  ModelSpec s;
  s.grid = custom_lift({r});
  s.measure = m;
  s.sigma = sigma;
  s.a = a;
  s.b = {b};
  return s;
}

// For N = 1 without excitation the continuous system gives G' = -r G (1 +- sigma^2 G/2),
// so F = int_0^q (b u + a psi(u)) / (u (1 +- sigma^2 u / 2)) du independent of r.
double single_component_f(const ModelSpec& s, double q, bool negative) {
  using boost::math::quadrature::gauss_kronrod;
  const double s2 = s.sigma * s.sigma;
  auto f = [&](double u) {
    if (u <= 0.0) return s.b[0] + s.a * moment_mk(s.measure, 1);
    const double psi = negative ? levy_integral_neg(s.measure, u) : levy_integral_pos(s.measure, u);
    const double denom = negative ? 1.0 + 0.5 * s2 * u : 1.0 - 0.5 * s2 * u;
    return (s.b[0] * u + s.a * psi) / (u * denom);
  };
  return gauss_kronrod<double, 61>::integrate(f, 0.0, q, 15, 1e-13);
}

ModelSpec test_model(Excitation e, std::size_t n) {
  ModelParams p;
  p.n_lift = n;
  p.excitation = e;
  p.a_own = 1.0;
  p.a_agg = 1.0;
  return make_model(p);
}

}  // namespace

TEST(Riccati, PhiBarExamples) {
  EXPECT_NEAR(phi_bar(0.0, 0.75, 0.1), 0.4, 1e-15);
  EXPECT_NEAR(phi_bar(0.5, 0.5, 0.1), 0.1 / 0.4875, 1e-15);
  EXPECT_NEAR(phi_bar(0.5, 0.5, 0.1), 0.2051282051282051, 1e-15);
  EXPECT_EQ(phi_bar(0.3, 0.2, 0.0), 0.0);
}

TEST(Riccati, PhiBarIsFixedPoint) {
  for (double sigma : {0.0, 0.5, 1.5}) {
    for (double am : {0.0, 0.3, 0.9}) {
      const double qmax = phi_bar_q_max(sigma, am);
      for (double frac : {0.01, 0.3, 0.9}) {
        const double q = std::isinf(qmax) ? frac * 10.0 : frac * qmax;
        const double p = phi_bar(sigma, am, q);
        EXPECT_NEAR(phi_bar_map(sigma, am, q, p), p, 1e-12 * p);
      }
    }
  }
}

TEST(Riccati, PhiBarDomain) {
  EXPECT_THROW(phi_bar(0.5, 1.0, 0.1), DomainError);
  EXPECT_THROW(phi_bar(0.5, 0.5, -0.1), DomainError);
  EXPECT_THROW(phi_bar(1.0, 0.5, 1.0), DomainError);  // q_max = 1
  EXPECT_DOUBLE_EQ(phi_bar_q_max(1.0, 0.5), 1.0);
  EXPECT_TRUE(std::isinf(phi_bar_q_max(0.0, 0.5)));
}

TEST(Riccati, ZeroExponentStaysZero) {
  const auto s = test_model(Excitation::aggregate, 8);
  auto st = RiccatiState::initial(8, 0.0);
  for (int k = 0; k < 100; ++k) st = riccati_step_neg(st, s, 1e-3);
  EXPECT_EQ(st.f, 0.0);
  for (double g : st.g) EXPECT_EQ(g, 0.0);
  EXPECT_EQ(exponential_moment(s, 0.0).value, 1.0);
}

TEST(Riccati, OneStepPureDecay) {
  const auto s = single(2.0, 0.0, 0.0, 0.0, {0.0, 1.0, 0.5});
  const auto st = riccati_step_neg(RiccatiState::initial(1, 0.3), s, 1e-3);
  EXPECT_DOUBLE_EQ(st.g[0], 0.3 / (1.0 + 2e-3));
  EXPECT_EQ(st.f, 0.0);
  EXPECT_DOUBLE_EQ(st.time, 1e-3);
}

TEST(Riccati, OneStepWithDiffusionAndJumps) {
  const TemperedStableMeasure m{0.4, 1.0, 0.3};
  const auto s = single(2.0, 0.5, 0.7, 0.2, m);
  const double h = 0.01;
  const double q = 0.3;
  const auto neg = riccati_step_neg(RiccatiState::initial(1, q), s, h);
  EXPECT_NEAR(neg.g[0], (q + h * 2.0 * (-0.125 * q * q)) / (1.0 + h * 2.0), 1e-16);
  EXPECT_NEAR(neg.f, h * 2.0 * (0.2 * q + 0.7 * levy_integral_neg(m, q)), 1e-16);
  const auto pos = riccati_step_pos(RiccatiState::initial(1, q), s, h);
  EXPECT_NEAR(pos.g[0], (q + h * 2.0 * (0.125 * q * q)) / (1.0 + h * 2.0), 1e-16);
  EXPECT_NEAR(pos.f, h * 2.0 * (0.2 * q + 0.7 * levy_integral_pos(m, q)), 1e-16);
}

TEST(Riccati, CouplingTermsPerMode) {
  const TemperedStableMeasure m{0.4, 1.0, 0.3};
  ModelSpec s;
  s.grid = custom_lift({1.0, 3.0});
  s.measure = m;
  s.a = 0.0;
  s.b = {0.0, 0.0};
  s.excitation = Excitation::matrix;
  s.a_matrix = {0.0, 1.0, 0.5, 0.0};
  RiccatiState st;
  st.g = {0.2, 0.6};
  const double h = 1e-3;
  const auto out = riccati_step_neg(st, s, h);
  const double p0 = levy_integral_neg(m, 0.2);
  const double p1 = levy_integral_neg(m, 0.6);
  // (A^T psi)_0 = (A_00 p0 + A_10 p1)/N, (A^T psi)_1 = (A_01 p0 + A_11 p1)/N
  EXPECT_NEAR(out.g[0], (0.2 + h * 1.0 * (0.5 * p1 / 2.0)) / (1.0 + h), 1e-16);
  EXPECT_NEAR(out.g[1], (0.6 + h * 3.0 * (1.0 * p0 / 2.0)) / (1.0 + 3.0 * h), 1e-16);
}

TEST(Riccati, SingleComponentMatchesQuadrature) {
  const TemperedStableMeasure m{calibrate_a_nu(0.1, 0.65, 0.5), 0.1, 0.65};
  for (double sigma : {0.0, 0.5}) {
    const auto s = single(1.0, sigma, 1.0, 0.3, m);
    for (double q : {0.05, 0.5, 2.0}) {
      const double exact = std::exp(-single_component_f(s, q, true));
      const auto res = exponential_moment(s, -q);
      EXPECT_NEAR(res.value, exact, 2e-3 * (1.0 - exact)) << "sigma=" << sigma << " q=" << q;
    }
    const double qp = 0.05;
    const double exact = std::exp(single_component_f(s, qp, false));
    EXPECT_NEAR(exponential_moment(s, qp).value, exact, 2e-3 * (exact - 1.0)) << "sigma=" << sigma;
  }
}

TEST(Riccati, SmallExponentGivesMean) {
  const auto s = test_model(Excitation::aggregate, 16);
  const double mean = stationary_mean(s).mean_x;
  const double eps = 1e-4;
  MomentOptions opt;
  opt.dt_prime = 1e-4;
  const double neg = exponential_moment(s, -eps, opt).value;
  const double pos = exponential_moment(s, eps, opt).value;
  EXPECT_NEAR((pos - neg) / (2.0 * eps), mean, 1e-3 * mean);
  EXPECT_NEAR((1.0 - neg) / eps, mean, 1e-2 * mean);
  EXPECT_LT(neg, 1.0);
  EXPECT_GT(pos, 1.0);
}

TEST(Riccati, BoundHoldsAlongTrajectory) {
  for (auto e : {Excitation::none, Excitation::own, Excitation::aggregate}) {
    const auto s = test_model(e, 16);
    const double q = 1.0;
    const double pb = phi_bar(s.sigma, s.abar() * moment_mk(s.measure, 1), q);
    double worst_hi = 0.0;
    double worst_lo = 1.0;
    const auto res = exponential_moment(s, -q, {}, [&](const RiccatiState& st, double) {
      worst_hi = std::max(worst_hi, st.max_g());
      worst_lo = std::min(worst_lo, st.min_g());
    });
    EXPECT_TRUE(res.bound_held);
    EXPECT_LE(worst_hi, pb);
    EXPECT_GE(worst_lo, 0.0);
  }
}

TEST(Riccati, MomentDecreasesInExponent) {
  const auto s = test_model(Excitation::aggregate, 16);
  double prev = 1.0;
  for (double q : {0.1, 0.5, 1.0, 2.0}) {
    const double v = exponential_moment(s, -q).value;
    EXPECT_LT(v, prev);
    EXPECT_GT(v, 0.0);
    prev = v;
  }
}

TEST(Riccati, TrajectoryRecording) {
  const auto s = test_model(Excitation::aggregate, 8);
  MomentOptions opt;
  opt.record_every = 1.0;
  const auto res = exponential_moment(s, -1.0, opt);
  ASSERT_GE(res.trajectory.size(), 20u);
  EXPECT_EQ(res.trajectory.front().time, 0.0);
  EXPECT_DOUBLE_EQ(res.trajectory.back().f, res.f);
  for (std::size_t k = 1; k < res.trajectory.size(); ++k) {
    EXPECT_GT(res.trajectory[k].time, res.trajectory[k - 1].time);
    EXPECT_GE(res.trajectory[k].f, res.trajectory[k - 1].f);
  }
}

TEST(Riccati, HalvingStepConvergesMonotonically) {
  ModelParams p;
  p.law = MixingLaw{0.8, 1.0};
  p.n_lift = 32;
  const auto s = make_model(p);
  for (double q : {-1.0, 0.05}) {
    std::vector<double> v;
    for (double h : {4e-3, 2e-3, 1e-3}) {
      MomentOptions opt;
      opt.dt_prime = h;
      v.push_back(exponential_moment(s, q, opt).value);
    }
    const double d1 = v[0] - v[1];
    const double d2 = v[1] - v[2];
    EXPECT_GT(d1 * d2, 0.0) << "q=" << q;
    EXPECT_LT(std::abs(d1), 4.0 * std::abs(d2)) << "q=" << q;
    EXPECT_NEAR(d1 / d2, 2.0, 0.2) << "q=" << q;
  }
}

TEST(Riccati, StepsScaleWithDtPrime) {
  const auto s = test_model(Excitation::aggregate, 8);
  std::vector<double> steps;
  auto run = [&](double h) {
    std::vector<std::pair<double, double>> seen;
    MomentOptions opt;
    opt.dt_prime = h;
    (void)exponential_moment(s, -1.0, opt,
                             [&](const RiccatiState& st, double step) { seen.emplace_back(st.time, step); });
    return seen;
  };
  const auto a = run(2e-3);
  const auto b = run(1e-3);
  // Step taken just after t = 30 halves with dt'.
  auto at = [](const auto& seen, double t) {
    for (const auto& [time, step] : seen) {
      if (time >= t) return step;
    }
    return 0.0;
  };
  EXPECT_NEAR(at(a, 30.0) / at(b, 30.0), 2.0, 0.01);
}

TEST(Riccati, PositiveExponentDomain) {
  const auto s = test_model(Excitation::aggregate, 8);
  EXPECT_THROW(exponential_moment(s, 0.11), DomainError);
  EXPECT_NO_THROW(exponential_moment(s, 0.1));
}

TEST(Riccati, RejectsCev) {
  auto s = test_model(Excitation::none, 4);
  s.gamma_cev = 0.5;
  EXPECT_THROW(exponential_moment(s, -1.0), ConfigError);
}

TEST(Riccati, NonConvergenceReported) {
  const auto s = test_model(Excitation::aggregate, 8);
  MomentOptions opt;
  opt.tol = 0.0;
  opt.horizon = 200.0;
  try {
    exponential_moment(s, -1.0, opt);
    FAIL() << "expected DomainError";
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("not converged"), std::string::npos);
  }
}

TEST(Riccati, ContractionCheck) {
  const auto ok = contraction_check(1.0, 0.5);
  EXPECT_DOUBLE_EQ(ok.abar_m1, 0.5);
  EXPECT_DOUBLE_EQ(ok.margin, 0.5);
  EXPECT_TRUE(ok.pass);
  const auto bad = contraction_check(2.0, 0.5);
  EXPECT_FALSE(bad.pass);
  EXPECT_DOUBLE_EQ(bad.margin, 0.0);
  EXPECT_TRUE(contraction_check(test_model(Excitation::aggregate, 4)).pass);
}

TEST(Riccati, StationaryMeanOwnMode) {
  // Each component solves m_i = (a M1/N) / (1 - A2 M1); with a = 1, A2 = 1, M1 = 1/2 the sum is 1.
  const auto s = test_model(Excitation::own, 64);
  const auto m = stationary_mean(s);
  EXPECT_NEAR(m.mean_x, 1.0, 1e-12);
  for (double v : m.component_means) EXPECT_NEAR(v, 1.0 / 64.0, 2e-12 / 64.0);
}

TEST(Riccati, StationaryMeanWithoutExcitation) {
  auto s = test_model(Excitation::none, 32);
  EXPECT_NEAR(stationary_mean(s).mean_x, 0.5, 1e-14);
  s.b.assign(32, 2.0);
  EXPECT_NEAR(stationary_mean(s).mean_x, 2.5, 1e-13);
}

TEST(Riccati, StationaryMeanAggregateClosedForm) {
  // m_i = a M1/N + M1 A1 ybar / r_i with ybar = mean(c) / (1 - A1 M1).
  const auto s = test_model(Excitation::aggregate, 64);
  const double m1 = 0.5;
  double cbar = 0.0;
  double inv_r = 0.0;
  for (double r : s.grid.speeds) {
    cbar += r * m1 / 64.0;
    inv_r += 1.0 / r;
  }
  cbar /= 64.0;
  const double ybar = cbar / (1.0 - m1);
  const double exact = m1 + m1 * ybar * inv_r;
  EXPECT_NEAR(stationary_mean(s).mean_x, exact, 1e-11 * exact);
}

TEST(Riccati, FixedPointMatchesDirectSolve) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto e : {Excitation::none, Excitation::own, Excitation::aggregate, Excitation::matrix}) {
    ModelParams p;
    p.n_lift = 24;
    p.excitation = e;
    p.a_own = 1.5;
    p.a_agg = 1.5;
    if (e == Excitation::matrix) {
      p.a_matrix.resize(24 * 24);
      for (auto& v : p.a_matrix) v = 1.9 * u(gen);
    }
    auto s = make_model(p);
    for (auto& b : s.b) b = u(gen);
    const auto fp = stationary_mean(s, 1e-14);
    const auto dir = stationary_mean_direct(s);
    EXPECT_NEAR(fp.mean_x, dir.mean_x, 1e-11 * dir.mean_x) << to_string(e);
    EXPECT_LT(fp.residual, 1e-12);
    for (std::size_t i = 0; i < 24; ++i) {
      EXPECT_NEAR(fp.component_means[i], dir.component_means[i], 1e-11 * dir.mean_x);
    }
  }
}

TEST(Riccati, StationaryMeanRejectsSupercritical) {
  auto s = test_model(Excitation::aggregate, 8);
  s.a_agg = 3.0;
  EXPECT_THROW(stationary_mean(s), DomainError);
}
