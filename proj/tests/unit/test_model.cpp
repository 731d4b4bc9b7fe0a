#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "platoon/errors.hpp"
#include "platoon/model.hpp"

using namespace platoon;

namespace {

ModelParams ex1() { return ModelParams::example1(); }

MicroState random_omega_state(const ModelParams& p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> gap(p.cap_L + 1e-3, p.lambda + 10.0);
  std::uniform_real_distribution<double> speed(0.0, p.v_max);
  MicroState x;
  for (int i = 1; i < p.n; ++i) x.s.push_back(gap(rng));
  for (int i = 0; i < p.n; ++i) x.v.push_back(speed(rng));
  return x;
}

}  // namespace

TEST(ModelParams, Validation) {
  EXPECT_NO_THROW(ex1().validate());
  EXPECT_NO_THROW(ModelParams::disturbance_setup(20).validate());
  auto p = ex1();
  p.lambda = 4.0;
  EXPECT_THROW(p.validate(), PreconditionError);
  p = ex1();
  p.v_star = 36.0;
  EXPECT_THROW(p.validate(), PreconditionError);
  p = ex1();
  p.n = 1;
  EXPECT_THROW(p.validate(), PreconditionError);
  p = ex1();
  p.mu = 0.0;
  EXPECT_THROW(p.validate(), PreconditionError);
  p = ex1();
  p.epsilon = -1.0;
  EXPECT_THROW(p.validate(), PreconditionError);
}

TEST(Potential, ExampleValues) {
  const Model m(ex1());
  EXPECT_DOUBLE_EQ(m.potential_value(10.0), 200.0);
  EXPECT_DOUBLE_EQ(m.potential_value(25.0), 0.0);
  EXPECT_DOUBLE_EQ(m.potential_grad(10.0), -100.0);
  // 6a/b + 6a^2/b^2 + 2a^3/b^3 with a = 10, b = 5
  EXPECT_DOUBLE_EQ(m.potential_hess(10.0), 52.0);
  EXPECT_EQ(m.potential_grad(20.0), 0.0);
  EXPECT_EQ(m.potential_hess(20.0), 0.0);
}

TEST(Potential, CollisionRegionThrows) {
  const Model m(ex1());
  EXPECT_THROW(m.potential_value(5.0), DomainError);
  EXPECT_THROW(m.potential_grad(4.0), DomainError);
  EXPECT_THROW(m.potential_hess(-1.0), DomainError);
}

TEST(Potential, ShapeProperties) {
  const Model m(ex1());
  double prev = 0.0;
  for (int k = 1; k <= 6; ++k) {
    const double v = m.potential_value(5.0 + std::pow(10.0, -k));
    EXPECT_GT(v, prev) << "k=" << k;
    prev = v;
  }
  for (double s = 5.01; s < 20.0; s += 0.01) {
    EXPECT_LT(m.potential_grad(s), 0.0);
    EXPECT_GE(m.potential_hess(s), 0.0);
  }
  for (double s = 20.0; s < 40.0; s += 0.25) {
    EXPECT_EQ(m.potential_value(s), 0.0);
    EXPECT_EQ(m.potential_grad(s), 0.0);
    EXPECT_EQ(m.potential_hess(s), 0.0);
  }
}

TEST(Potential, DerivativesMatchFiniteDifferences) {
  const Model m(ex1());
  for (double s = 5.01; s < 25.0; s += 0.037) {
    const double h = 1e-6 * std::max(1.0, s);
    const double fd1 = (m.potential_value(s + h) - m.potential_value(s - h)) / (2 * h);
    const double fd2 = (m.potential_grad(s + h) - m.potential_grad(s - h)) / (2 * h);
    const double g = m.potential_grad(s);
    const double H = m.potential_hess(s);
    EXPECT_NEAR(fd1, g, 1e-6 * std::max(1.0, std::abs(g))) << "s=" << s;
    EXPECT_NEAR(fd2, H, 1e-6 * std::max(1.0, std::abs(H))) << "s=" << s;
  }
}

TEST(Softening, ExampleValues) {
  const Softening f(0.2);
  EXPECT_EQ(f.value(-0.2), 0.0);
  EXPECT_DOUBLE_EQ(f.value(0.0), 0.1);
  EXPECT_DOUBLE_EQ(f.value(1.0), 1.1);
}

TEST(Softening, DominatesRampAndIsC1) {
  for (double eps : {0.2, 2.0}) {
    const Softening f(eps);
    double prev = f.value(-1e3);
    std::vector<double> xs;
    for (double x = -10 * eps; x <= 10 * eps; x += eps / 200) xs.push_back(x);
    xs.push_back(1e3);
    for (double x : xs) {
      EXPECT_GE(f.value(x), std::max(x, 0.0));
      EXPECT_GE(f.value(x), prev);
      prev = f.value(x);
    }
    for (double knot : {-eps, 0.0}) {
      const double h = 1e-9;
      EXPECT_NEAR(f.derivative(knot - h), f.derivative(knot + h), 1e-6);
      EXPECT_NEAR(f.value(knot - h), f.value(knot + h), 1e-8);
    }
  }
}

TEST(Gain, ExampleValues) {
  const Model m(ex1());
  EXPECT_NEAR(m.gain_g(0.0), 35.0 * 0.1 / (30.0 * 5.0), 1e-15);
  EXPECT_NEAR(m.gain_g(-1.0), 1.0 / 30.0, 1e-15);
  for (double z : {-10.0, -1.0, 0.0, 1.0, 10.0}) EXPECT_GE(m.gain_g(z), 0.0);
  for (double z = -1e3; z <= 1e3; z += 0.5) EXPECT_GE(m.gain_g(z), 0.0) << z;
}

TEST(Gain, OmegaRate) {
  EXPECT_NEAR(Model(ex1()).omega_rate(), 0.5 + 35.0 * 0.1 / 150.0, 1e-15);
  const auto p = ModelParams::disturbance_setup(5);
  EXPECT_NEAR(Model(p).omega_rate(), 2.0 + 35.0 * (p.epsilon / 2) / (30.0 * 5.0), 1e-15);
}

TEST(Gain, ControllerGains) {
  const Model m(ex1());
  MicroState far{{20, 30, 25, 40, 21}, {30, 28, 35, 0, 31, 29}};
  for (double k : m.controller_gains(far)) EXPECT_DOUBLE_EQ(k, m.omega_rate());

  auto p = ex1();
  p.n = 2;
  const Model m2(p);
  const auto k = m2.controller_gains(MicroState{{10}, {30, 30}});
  EXPECT_DOUBLE_EQ(k[0], p.mu + m2.gain_g(100.0));
  EXPECT_DOUBLE_EQ(k[1], p.mu + m2.gain_g(-100.0));

  EXPECT_THROW(m2.controller_gains(MicroState{{4.9}, {30, 30}}), DomainError);
}

TEST(Gain, GainsAtLeastMuOnRandomStates) {
  const auto p = ex1();
  const Model m(p);
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    for (double k : m.controller_gains(random_omega_state(p, rng))) EXPECT_GE(k, p.mu);
  }
}

TEST(VectorField, Equilibrium) {
  const Model m(ex1());
  const auto d = m.micro_vector_field(MicroState{{20, 22, 30, 20, 50}, {30, 30, 30, 30, 30, 30}});
  for (double x : d.s) EXPECT_EQ(x, 0.0);
  for (double x : d.v) EXPECT_EQ(x, 0.0);
}

TEST(VectorField, DecoupledRelaxation) {
  const Model m(ex1());
  const MicroState x{{60, 80, 100, 120, 140}, {34, 33, 32, 31, 30, 29}};
  const auto d = m.micro_vector_field(x);
  for (int i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(d.v[i], -m.omega_rate() * (x.v[i] - 30.0));
  for (int i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(d.s[i], x.v[i] - x.v[i + 1]);
}

TEST(VectorField, TwoVehicleCompressed) {
  auto p = ex1();
  p.n = 2;
  const Model m(p);
  const auto d = m.micro_vector_field(MicroState{{10}, {30, 30}});
  EXPECT_EQ(d.s[0], 0.0);
  EXPECT_DOUBLE_EQ(d.v[0], 100.0);
  EXPECT_DOUBLE_EQ(d.v[1], -100.0);
}

TEST(VectorField, RejectsStatesOutsideOmega) {
  const Model m(ex1());
  EXPECT_THROW(m.micro_vector_field(MicroState{{20, 20, 20, 20, 20}, {30, 30, 36, 30, 30, 30}}),
               DomainError);
  EXPECT_THROW(m.micro_vector_field(MicroState{{20, 5, 20, 20, 20}, {30, 30, 30, 30, 30, 30}}),
               DomainError);
}

TEST(VectorField, FlatRhsAgreesWithStructured) {
  const auto p = ex1();
  const Model m(p);
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = random_omega_state(p, rng);
    const auto d = m.micro_vector_field(x);
    const auto y = flatten(x);
    std::vector<double> dy(y.size());
    m.rhs(y, dy);
    EXPECT_EQ(unflatten(dy, p.n), d);
    EXPECT_EQ(unflatten(y, p.n), x);
  }
}
