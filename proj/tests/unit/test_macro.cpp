#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "platoon/errors.hpp"
#include "platoon/macro.hpp"

using namespace platoon;

namespace {

const MacroParams kP = MacroParams::example3();

SmoothProfile rho3() { return SmoothProfile::example3_density(); }
SmoothProfile v3() { return SmoothProfile::example3_speed(); }

}  // namespace

TEST(MacroParams, Validation) {
  EXPECT_NO_THROW(kP.validate());
  auto p = kP;
  p.rho_bar = 1.5;
  EXPECT_THROW(p.validate(), PreconditionError);
  p = kP;
  p.omega = -1;
  EXPECT_THROW(p.validate(), PreconditionError);
  p = kP;
  p.v_star = 3.0;
  EXPECT_THROW(p.validate(), PreconditionError);
}

TEST(Profiles, Example3Closed) {
  const auto r = rho3();
  const auto v = v3();
  for (double x : {0.1, 0.3, 0.5, 0.77}) {
    EXPECT_NEAR(r.value(x), 0.1 + 5 * x * x * (x - 1) * (x - 1), 1e-15);
    EXPECT_NEAR(v.value(x), 1 + 8 * std::pow(x, 3) * std::pow(x - 1, 3), 1e-15);
  }
  EXPECT_EQ(r.value(-3.0), 0.1);
  EXPECT_EQ(v.value(4.0), 1.0);
  EXPECT_NEAR(v.sup_dev(1.0), 0.125, 1e-15);
  EXPECT_NO_THROW(verify_declared_bounds(r, -2, 8, 20001));
  EXPECT_NO_THROW(verify_declared_bounds(v, -2, 8, 20001));
}

TEST(Profiles, DerivativesMatchFiniteDifferences) {
  for (const auto& p : {rho3(), v3(), SmoothProfile::bump(0.2, 0.4, 2)}) {
    for (double x = -0.5; x < 1.5; x += 0.0173) {
      const double h = 1e-6;
      EXPECT_NEAR((p.value(x + h) - p.value(x - h)) / (2 * h), p.d1(x), 1e-7);
      EXPECT_NEAR((p.d1(x + h) - p.d1(x - h)) / (2 * h), p.d2(x), 1e-5);
    }
  }
}

TEST(Profiles, LyingBoundIsCaught) {
  auto v = v3();
  v.sup_d1 = 0.1;  // true sup of v0' is larger
  EXPECT_THROW(verify_declared_bounds(v, -2, 8, 2001), ProfileBoundError);
}

TEST(Characteristics, PForwardExamples) {
  const auto v = v3();
  for (double r : {-1.0, 0.2, 0.6, 3.0}) EXPECT_DOUBLE_EQ(p_forward(0.0, r, v, 1.2), 1.2 * r);
  const auto c = SmoothProfile::constant(1.0);
  EXPECT_DOUBLE_EQ(p_forward(2.0, 0.5, c, 1.2), 0.6 + (1 - std::exp(-2.4)));
  const double slope_min = std::min(1.2, 1.2 + v.inf_d1);
  for (double t : {0.0, 0.5, 3.0, std::numeric_limits<double>::infinity()}) {
    for (double r = -0.5; r < 1.5; r += 0.031) {
      for (double h : {1e-3, 0.1}) {
        EXPECT_GE((p_forward(t, r + h, v, 1.2) - p_forward(t, r, v, 1.2)) / h, slope_min - 1e-6);
      }
    }
  }
}

TEST(Characteristics, PInvertRoundTrip) {
  const auto v = v3();
  for (double t : {0.0, 0.3, 1.0, 5.0, std::numeric_limits<double>::infinity()}) {
    for (double r = -1.0; r < 2.0; r += 0.0371) {
      EXPECT_NEAR(p_invert(t, p_forward(t, r, v, 1.2), v, 1.2), r, 1e-10);
    }
  }
  const auto c = SmoothProfile::constant(1.0);
  EXPECT_NEAR(p_invert(2.0, 3.0, c, 1.2), (3.0 - (1 - std::exp(-2.4))) / 1.2, 1e-12);
  EXPECT_NEAR(p_invert(0.0, 3.0, v, 1.2), 2.5, 1e-12);
}

TEST(Characteristics, BracketFailureOnWrongBound) {
  auto v = v3();
  v.sup_value = 0.1;  // true values sit near 1
  v.inf_value = -0.1;
  EXPECT_THROW(p_invert(5.0, 1.3, v, 1.2), ProfileBoundError);
}

TEST(Characteristics, StateExamples) {
  const auto r = rho3();
  const auto v = v3();
  for (double x = -1.0; x < 2.0; x += 0.13) {
    const auto s = characteristic_state(0.0, x, r, v, kP);
    EXPECT_DOUBLE_EQ(s.rho, r.value(x));
    EXPECT_DOUBLE_EQ(s.v, v.value(x));
  }
  const auto c = SmoothProfile::constant(1.0);
  for (double t : {0.5, 2.0}) {
    for (double x = -1.0; x < 4.0; x += 0.11) {
      const auto s = characteristic_state(t, x, r, c, kP);
      EXPECT_NEAR(s.rho, r.value(x - t), 1e-12);
      EXPECT_DOUBLE_EQ(s.v, 1.0);
    }
  }
  for (int t = 0; t <= 5; ++t) {
    double sup = 0;
    for (double x = -2; x <= 8; x += 0.02) {
      sup = std::max(sup, std::abs(characteristic_state(t, x, r, v, kP).v - 1.0));
    }
    EXPECT_LE(sup, std::exp(-1.2 * t) * 0.125 * (1 + 1e-9));
  }
}

TEST(Characteristics, PdeResidualIsSecondOrder) {
  // rho_t + (rho v)_x = 0 and v_t + v v_x = -omega (v - v*), centred differences.
  const auto r = rho3();
  const auto v = v3();
  auto residual = [&](double h) {
    double worst = 0;
    for (double t : {0.7, 1.9}) {
      for (double x = -0.5; x < 3.5; x += 0.05) {
        auto at = [&](double tt, double xx) { return characteristic_state(tt, xx, r, v, kP); };
        const auto c = at(t, x);
        const auto tp = at(t + h, x), tm = at(t - h, x), xp = at(t, x + h), xm = at(t, x - h);
        const double mass = (tp.rho - tm.rho) / (2 * h) + (xp.rho * xp.v - xm.rho * xm.v) / (2 * h);
        const double mom = (tp.v - tm.v) / (2 * h) + c.v * (xp.v - xm.v) / (2 * h) +
                           kP.omega * (c.v - kP.v_star);
        worst = std::max({worst, std::abs(mass), std::abs(mom)});
      }
    }
    return worst;
  };
  const double e1 = residual(4e-3), e2 = residual(2e-3);
  EXPECT_GT(e1, 0.0);
  EXPECT_GE(std::log2(e1 / e2), 1.8) << e1 << " " << e2;
}

TEST(TravelingWave, Examples) {
  const auto r = rho3();
  const auto c = SmoothProfile::constant(1.0);
  for (double x = -1; x < 2; x += 0.07) EXPECT_NEAR(traveling_wave(x, r, c, kP), r.value(x), 1e-12);
  const auto v = v3();
  for (double x = -2; x < 8; x += 0.01) EXPECT_GT(traveling_wave(x, r, v, kP), 0.0);
  // the wave is the t -> inf limit of rho(t, x + v* t)
  for (double x = -0.5; x < 1.5; x += 0.1) {
    EXPECT_NEAR(characteristic_state(30.0, x + 30.0, r, v, kP).rho, traveling_wave(x, r, v, kP),
                1e-12);
  }
}

TEST(DecayAudit, Example3Passes) {
  const auto r = rho3();
  const auto v = v3();
  const DecayAuditConfig cfg;
  const auto field = characteristic_field(r, v, kP, uniform_grid(cfg.x_min, cfg.x_max, cfg.points),
                                          cfg.times);
  const auto audit = decay_audit(field, r, v, kP, cfg.rel_tol);
  EXPECT_EQ(audit.checked, 501 * 6);
  EXPECT_TRUE(audit.passed());
  EXPECT_TRUE(audit.premise_met());
  EXPECT_LE(audit.max_weighted_gap, audit.wave_constant);
  EXPECT_GT(audit.max_weighted_gap, 0.0);
  EXPECT_NEAR(audit.wave_constant, wave_gap_constant(r, v, kP), 0.0);
}

TEST(DecayAudit, ConstantSpeedIsTight) {
  const auto r = rho3();
  const auto c = SmoothProfile::constant(1.0);
  const auto field = characteristic_field(r, c, kP, uniform_grid(-2, 8, 101), {0, 1, 2});
  const auto audit = decay_audit(field, r, c, kP);
  EXPECT_TRUE(audit.passed());
  EXPECT_EQ(audit.worst_speed_ratio, 0.0);
  EXPECT_LE(audit.max_weighted_gap, 1e-12);
}

TEST(DecayAudit, DensePremiseFlaggedNotFailed) {
  const auto r = SmoothProfile::bump(0.5, 0.4, 2);  // peaks at 0.9 > rho_bar
  const auto v = v3();
  const auto field = characteristic_field(r, v, kP, uniform_grid(-2, 8, 101), {0, 1});
  const auto audit = decay_audit(field, r, v, kP);
  EXPECT_FALSE(audit.premise_met());
  EXPECT_EQ(audit.cap_violations, 0);
  EXPECT_TRUE(audit.passed());
}

TEST(CharacteristicField, SerialEqualsParallel) {
  const auto x = uniform_grid(-2, 8, 301);
  const auto a = characteristic_field(rho3(), v3(), kP, x, {0, 2.5, 5}, Exec::serial);
  const auto b = characteristic_field(rho3(), v3(), kP, x, {0, 2.5, 5}, Exec::parallel);
  EXPECT_EQ(a.rho, b.rho);
  EXPECT_EQ(a.v, b.v);
}

TEST(Phi, ShapeAndDomain) {
  for (double rho = 0.01; rho <= kP.rho_bar; rho += 0.01) {
    EXPECT_EQ(phi_value(rho, kP), 0.0);
    EXPECT_EQ(xi_term(rho, 3.0, kP), 0.0);
  }
  for (double rho = kP.rho_bar + 1e-3; rho < kP.rho_max; rho += 1e-3) {
    EXPECT_GT(phi_d1(rho, kP), 0.0);
    EXPECT_GE(phi_d2(rho, kP), 0.0);
    const double h = 1e-7;
    EXPECT_NEAR((phi_value(rho + h, kP) - phi_value(rho - h, kP)) / (2 * h), phi_d1(rho, kP),
                1e-6 * std::max(1.0, phi_d1(rho, kP)));
    EXPECT_NEAR((phi_d1(rho + h, kP) - phi_d1(rho - h, kP)) / (2 * h), phi_d2(rho, kP),
                1e-5 * std::max(1.0, phi_d2(rho, kP)));
    EXPECT_LT(xi_term(rho, 0.5, kP), 0.0);
    EXPECT_EQ(xi_term(rho, 0.0, kP), 0.0);
  }
  double prev = 0;
  for (int k = 1; k <= 8; ++k) {
    const double val = phi_value(kP.rho_max - std::pow(10.0, -k), kP);
    EXPECT_GT(val, prev);
    prev = val;
  }
  EXPECT_THROW(phi_value(0.0, kP), DomainError);
  EXPECT_THROW(phi_d1(1.0, kP), DomainError);
  EXPECT_THROW(xi_term(1.2, 1.0, kP), DomainError);
  EXPECT_NEAR(macro_mu_eff(kP) + macro_gain_g(0.0, kP), kP.omega, 1e-15);
}

TEST(FdSolver, ConfigErrors) {
  FdConfig c;
  c.cfl = 0.95;
  EXPECT_THROW(c.validate(), ConfigError);
  c = FdConfig{};
  c.dx = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = FdConfig{};
  c.output_times = {2, 1};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(FdSolver, TranslationIsFirstOrder) {
  const auto r = rho3();
  const auto c = SmoothProfile::constant(1.0);
  auto err = [&](double dx) {
    FdConfig cfg;
    cfg.dx = dx;
    cfg.output_times = {0, 2};
    const auto f = fd_solver(r, c, kP, cfg);
    double worst = 0;
    for (std::size_t j = 0; j < f.x.size(); ++j) {
      worst = std::max(worst, std::abs(f.rho[1][j] - r.value(f.x[j] - 2.0)));
      EXPECT_NEAR(f.v[1][j], 1.0, 1e-13);
    }
    return worst;
  };
  const double e1 = err(0.02), e2 = err(0.01);
  EXPECT_LT(e1, 0.05);
  EXPECT_GT(e1 / e2, 1.4);
}

TEST(FdSolver, Example3ConvergesAndConservesMass) {
  const auto r = rho3();
  const auto v = v3();
  auto err = [&](double dx, double& defect) {
    FdConfig cfg;
    cfg.dx = dx;
    cfg.output_times = {0, 5};
    const auto f = fd_solver(r, v, kP, cfg);
    defect = f.max_mass_defect;
    double worst = 0;
    for (std::size_t j = 0; j < f.x.size(); ++j) {
      worst = std::max(worst, std::abs(f.rho[1][j] - characteristic_state(5, f.x[j], r, v, kP).rho));
    }
    return worst;
  };
  double d1 = 0, d2 = 0;
  const double e1 = err(1e-2, d1), e2 = err(5e-3, d2);
  EXPECT_GE(e1 / e2, 1.6) << e1 << " " << e2;
  EXPECT_LE(d1, 1e-10);
  EXPECT_LE(d2, 1e-10);
}

TEST(FdSolver, XiActiveSmoke) {
  const auto r = SmoothProfile::bump(0.3, 0.55, 2);  // peak 0.85 > rho_bar
  const auto v = v3();
  FdConfig cfg;
  cfg.dx = 1e-2;
  cfg.output_times = {0, 1, 2};
  const auto f = fd_solver(r, v, kP, cfg);
  EXPECT_GT(f.max_xi, 0.0);
  for (const auto& row : f.rho) {
    for (double x : row) {
      EXPECT_GT(x, 0.0);
      EXPECT_LT(x, kP.rho_max);
    }
  }
  for (const auto& row : f.v) {
    for (double x : row) {
      EXPECT_GE(x, 0.0);
      EXPECT_LE(x, kP.v_max);
    }
  }
}

TEST(FdSolver, SerialEqualsParallel) {
  FdConfig cfg;
  cfg.dx = 1e-2;
  cfg.output_times = {0, 1};
  const auto a = fd_solver(rho3(), v3(), kP, cfg, Exec::serial);
  const auto b = fd_solver(rho3(), v3(), kP, cfg, Exec::parallel);
  EXPECT_EQ(a.rho, b.rho);
  EXPECT_EQ(a.v, b.v);
  EXPECT_EQ(a.max_mass_defect, b.max_mass_defect);
}

TEST(Bridge, PotentialRanges) {
  const PhiPotential V(kP, 3.0, 50);
  EXPECT_DOUBLE_EQ(V.interaction_range(), 3.0 / (50 * kP.rho_bar));
  EXPECT_DOUBLE_EQ(V.collision_distance(), 3.0 / (50 * kP.rho_max));
  const double s = 0.8 * V.interaction_range() + 0.2 * V.collision_distance();
  const double h = 1e-9;
  EXPECT_NEAR((V.value(s + h) - V.value(s - h)) / (2 * h), V.grad(s), 1e-4 * std::abs(V.grad(s)));
  EXPECT_NEAR((V.grad(s + h) - V.grad(s - h)) / (2 * h), V.hess(s), 1e-4 * std::abs(V.hess(s)));
  EXPECT_EQ(V.value(V.interaction_range() * 1.01), 0.0);
}

TEST(Bridge, PlacementHoldsEqualMass) {
  const auto r = rho3();
  const double mass = 1.0;
  const auto x = place_vehicles(r, mass, 40, -1.0);
  ASSERT_EQ(x.size(), 40u);
  EXPECT_DOUBLE_EQ(x.back(), -1.0);
  for (std::size_t i = 1; i < x.size(); ++i) {
    ASSERT_LT(x[i], x[i - 1]);
    // midpoint-rule oracle for the mass between neighbours
    double m = 0;
    const int k = 2000;
    for (int j = 0; j < k; ++j) {
      m += r.value(x[i] + (j + 0.5) * (x[i - 1] - x[i]) / k) * (x[i - 1] - x[i]) / k;
    }
    EXPECT_NEAR(m, mass / 40, 1e-7);
  }
}

TEST(Bridge, TrivialRegime) {
  const auto r = SmoothProfile::constant(0.3);
  const auto c = SmoothProfile::constant(1.0);
  BridgeConfig cfg;
  cfg.sizes = {30, 60};
  const auto rep = micro_macro_bridge(r, c, kP, cfg);
  EXPECT_TRUE(rep.exact_reference);
  for (const auto& row : rep.rows) {
    EXPECT_LE(row.linf_rho, 1e-9);
    EXPECT_LE(row.linf_v, 1e-12);
  }
}

TEST(Bridge, Example3GapShrinks) {
  BridgeConfig cfg;
  const auto rep = micro_macro_bridge(rho3(), v3(), kP, cfg);
  ASSERT_EQ(rep.rows.size(), 3u);
  EXPECT_TRUE(rep.exact_reference);
  EXPECT_GT(rep.rows[0].linf_rho, rep.rows[1].linf_rho);
  EXPECT_GT(rep.rows[1].linf_rho, rep.rows[2].linf_rho);
  std::stringstream ss;
  write_bridge_csv(ss, rep);
  std::string header;
  std::getline(ss, header);
  EXPECT_EQ(header, "n,time,linf_rho,l1_rho,linf_v,l1_v");
}

TEST(Bridge, RejectsJamDensityAndSmallN) {
  const auto c = SmoothProfile::constant(1.0);
  BridgeConfig cfg;
  cfg.sizes = {30};
  // rho0 = rho_max puts every gap exactly on the collision distance
  EXPECT_THROW(micro_macro_bridge(SmoothProfile::constant(kP.rho_max), c, kP, cfg),
               PreconditionError);
  cfg.sizes = {10};
  EXPECT_THROW(micro_macro_bridge(SmoothProfile::constant(0.3), c, kP, cfg), PreconditionError);
}
