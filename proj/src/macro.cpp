#include "platoon/macro.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include "platoon/csv.hpp"
#include "platoon/errors.hpp"
#include "platoon/micro_sim.hpp"
#include "platoon/rk4.hpp"

namespace platoon {

void MacroParams::validate() const {
  auto fail = [](const std::string& what) { throw PreconditionError("MacroParams: " + what); };
  if (!(omega > 0)) fail("omega > 0");
  if (!(rho_bar > 0)) fail("rho_bar > 0");
  if (!(rho_bar < rho_max)) fail("rho_bar < rho_max");
  if (!(v_star > 0)) fail("v_star > 0");
  if (!(v_star < v_max)) fail("v_star < v_max");
  if (!(phi_scale > 0)) fail("phi_scale > 0");
  if (!(m_total >= 0)) fail("m_total >= 0");
  if (!(epsilon > 0)) fail("epsilon > 0");
  if (!(macro_mu_eff(*this) > 0)) fail("omega > g(0)");
}

MacroParams MacroParams::example3() { return MacroParams{}; }

double SmoothProfile::sup_abs() const { return std::max(std::abs(inf_value), std::abs(sup_value)); }
double SmoothProfile::sup_abs_d1() const { return std::max(std::abs(inf_d1), std::abs(sup_d1)); }
double SmoothProfile::sup_dev(double c) const {
  return std::max(std::abs(sup_value - c), std::abs(inf_value - c));
}

SmoothProfile SmoothProfile::constant(double c) {
  SmoothProfile p;
  p.value = [c](double) { return c; };
  p.d1 = [](double) { return 0.0; };
  p.d2 = [](double) { return 0.0; };
  p.inf_value = p.sup_value = c;
  return p;
}

SmoothProfile SmoothProfile::bump(double base, double amp, int power) {
  // q = (4w)^p with w = x(1 - x); sup|q| = 1 at x = 1/2.
  SmoothProfile p;
  double s1 = 0, s2 = 0;  // sup |q'|, sup |q''|
  if (power == 2) {
    p.value = [=](double x) {
      if (x <= 0 || x >= 1) return base;
      const double w = x * (1 - x);
      return base + amp * 16 * w * w;
    };
    p.d1 = [=](double x) {
      if (x <= 0 || x >= 1) return 0.0;
      return amp * 32 * x * (1 - x) * (1 - 2 * x);
    };
    p.d2 = [=](double x) {
      if (x <= 0 || x >= 1) return 0.0;
      return amp * 32 * (1 - 6 * x + 6 * x * x);
    };
    s1 = 16 * std::sqrt(3.0) / 9;
    s2 = 32;
  } else if (power == 3) {
    p.value = [=](double x) {
      if (x <= 0 || x >= 1) return base;
      const double w = x * (1 - x);
      return base + amp * 64 * w * w * w;
    };
    p.d1 = [=](double x) {
      if (x <= 0 || x >= 1) return 0.0;
      const double w = x * (1 - x);
      return amp * 192 * w * w * (1 - 2 * x);
    };
    p.d2 = [=](double x) {
      if (x <= 0 || x >= 1) return 0.0;
      const double w = x * (1 - x);
      return amp * 384 * w * (1 - 5 * w);
    };
    s1 = 7.68 / std::sqrt(5.0);
    s2 = 24;
  } else {
    throw PreconditionError("SmoothProfile::bump: power must be 2 or 3");
  }
  p.inf_value = base + std::min(amp, 0.0);
  p.sup_value = base + std::max(amp, 0.0);
  p.inf_d1 = -std::abs(amp) * s1;
  p.sup_d1 = std::abs(amp) * s1;
  p.sup_abs_d2 = std::abs(amp) * s2;
  p.kinks = {0.0, 1.0};
  return p;
}

SmoothProfile SmoothProfile::example3_density() { return bump(0.1, 5.0 / 16.0, 2); }
SmoothProfile SmoothProfile::example3_speed() { return bump(1.0, -0.125, 3); }

void verify_declared_bounds(const SmoothProfile& p, double a, double b, int samples) {
  if (samples < 2 || !(b > a)) throw PreconditionError("verify_declared_bounds: bad grid");
  auto over = [](double sample, double bound) {
    return sample > bound + 1e-12 * std::max(1.0, std::abs(bound));
  };
  for (int k = 0; k < samples; ++k) {
    const double x = a + (b - a) * k / (samples - 1);
    const double v = p.value(x), d1 = p.d1(x), d2 = p.d2(x);
    auto fail = [x](const char* what) {
      throw ProfileBoundError(std::string("declared bound ") + what + " exceeded at x = " +
                              std::to_string(x));
    };
    if (over(v, p.sup_value)) fail("sup value");
    if (over(-v, -p.inf_value)) fail("inf value");
    if (over(d1, p.sup_d1)) fail("sup d1");
    if (over(-d1, -p.inf_d1)) fail("inf d1");
    if (over(std::abs(d2), p.sup_abs_d2)) fail("sup |d2|");
  }
}

namespace {

// 1 - e^{-omega t}, with t = +inf allowed.
double ramp(double t, double omega) {
  if (std::isinf(t)) return 1.0;
  return -std::expm1(-omega * t);
}

void require_speed_profile(const SmoothProfile& v0, double omega) {
  if (!(v0.inf_d1 > -omega)) {
    throw PreconditionError("speed profile inadmissible: inf v0' must exceed -omega");
  }
}

void require_density_profile(const SmoothProfile& rho0) {
  if (!(rho0.inf_value > 0)) throw PreconditionError("density profile must be positive");
}

}  // namespace

double p_forward(double t, double r, const SmoothProfile& v0, double omega) {
  if (!(t >= 0)) throw PreconditionError("p_forward: t >= 0");
  require_speed_profile(v0, omega);
  return omega * r + ramp(t, omega) * v0.value(r);
}

double p_invert(double t, double y, const SmoothProfile& v0, double omega) {
  if (!(t >= 0)) throw PreconditionError("p_invert: t >= 0");
  require_speed_profile(v0, omega);
  const double c = ramp(t, omega);
  if (v0.inf_d1 == 0 && v0.sup_d1 == 0 && v0.inf_value == v0.sup_value) {
    return (y - c * v0.inf_value) / omega;  // affine case
  }
  const double S = v0.sup_abs();
  double lo = (y - S) / omega;
  double hi = (y + S) / omega;
  auto P = [&](double r) { return omega * r + c * v0.value(r); };
  if (P(lo) > y || P(hi) < y) {
    throw ProfileBoundError("p_invert: declared sup|v0| does not bracket the root");
  }
  while (hi - lo > 1e-12) {
    const double mid = lo + 0.5 * (hi - lo);
    if (mid <= lo || mid >= hi) break;
    if (P(mid) < y) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo + 0.5 * (hi - lo);
}

MacroPoint characteristic_state(double t, double x, const SmoothProfile& rho0,
                                const SmoothProfile& v0, const MacroParams& params) {
  require_density_profile(rho0);
  require_speed_profile(v0, params.omega);
  if (!(t >= 0)) throw PreconditionError("characteristic_state: t >= 0");
  if (t == 0) return {rho0.value(x), v0.value(x)};
  const double w = params.omega;
  const double c = ramp(t, w);
  const double xi = p_invert(t, w * (x - params.v_star * t) + params.v_star * c, v0, w);
  MacroPoint out;
  out.rho = w * rho0.value(xi) / (w + c * v0.d1(xi));
  out.v = params.v_star + std::exp(-w * t) * (v0.value(xi) - params.v_star);
  return out;
}

double traveling_wave(double x, const SmoothProfile& rho0, const SmoothProfile& v0,
                      const MacroParams& params) {
  require_density_profile(rho0);
  const double w = params.omega;
  const double zeta =
      p_invert(std::numeric_limits<double>::infinity(), w * x + params.v_star, v0, w);
  return w * rho0.value(zeta) / (w + v0.d1(zeta));
}

double wave_gap_constant(const SmoothProfile& rho0, const SmoothProfile& v0,
                         const MacroParams& params) {
  require_speed_profile(v0, params.omega);
  const double w = params.omega;
  const double gam = w + v0.inf_d1;
  const double K = rho0.sup_abs() + v0.sup_abs();
  const double c = rho0.sup_abs_d1() + v0.sup_abs_d2;
  const double L = v0.sup_abs_d1();
  const double m = std::min(gam, w);
  return (w / (gam * m)) * (c * (K + params.v_star) * (1 + K / m) + L * K);
}

std::vector<double> uniform_grid(double a, double b, int points) {
  if (points < 2 || !(b > a)) throw PreconditionError("uniform_grid: need b > a and points >= 2");
  std::vector<double> x(points);
  for (int j = 0; j < points; ++j) x[j] = a + (b - a) * j / (points - 1);
  x.back() = b;
  return x;
}

MacroField characteristic_field(const SmoothProfile& rho0, const SmoothProfile& v0,
                                const MacroParams& params, std::vector<double> x,
                                std::vector<double> times, Exec exec) {
  params.validate();
  MacroField field;
  field.x = std::move(x);
  field.times = std::move(times);
  const long nt = static_cast<long>(field.times.size());
  const long nx = static_cast<long>(field.x.size());
  field.rho.assign(nt, std::vector<double>(nx));
  field.v.assign(nt, std::vector<double>(nx));
#pragma omp parallel for collapse(2) schedule(static) if (use_threads(exec))
  for (long k = 0; k < nt; ++k) {
    for (long j = 0; j < nx; ++j) {
      const MacroPoint p = characteristic_state(field.times[k], field.x[j], rho0, v0, params);
      field.rho[k][j] = p.rho;
      field.v[k][j] = p.v;
    }
  }
  return field;
}

DecayAudit decay_audit(const MacroField& field, const SmoothProfile& rho0, const SmoothProfile& v0,
                       const MacroParams& params, double rel_tol) {
  params.validate();
  require_speed_profile(v0, params.omega);
  const double w = params.omega;
  DecayAudit audit;
  audit.wave_constant = wave_gap_constant(rho0, v0, params);
  audit.premise_speed_slope = v0.inf_d1 > -w;
  audit.premise_density =
      rho0.sup_value <= params.rho_bar * (1 + std::min(0.0, v0.inf_d1) / w);
  const double speed_dev0 = v0.sup_dev(params.v_star);

  for (std::size_t k = 0; k < field.times.size(); ++k) {
    const double t = field.times[k];
    const double c = ramp(t, w);
    const double decay = std::exp(-w * t);
    const double density_bound = w * rho0.sup_value / (w + c * v0.inf_d1);
    const double speed_bound = decay * speed_dev0;
    const double weight = std::exp(w * t);
    for (std::size_t j = 0; j < field.x.size(); ++j) {
      const double rho = field.rho[k][j];
      const double dev = std::abs(field.v[k][j] - params.v_star);
      ++audit.checked;

      audit.worst_density_ratio = std::max(audit.worst_density_ratio, rho / density_bound);
      if (rho > density_bound * (1 + rel_tol)) ++audit.density_violations;

      if (speed_bound > 0) audit.worst_speed_ratio = std::max(audit.worst_speed_ratio, dev / speed_bound);
      if (dev > speed_bound * (1 + rel_tol)) ++audit.speed_violations;

      if (!(rho > 0)) ++audit.positivity_violations;

      const double f = traveling_wave(field.x[j] - params.v_star * t, rho0, v0, params);
      const double gap = weight * std::abs(rho - f);
      audit.max_weighted_gap = std::max(audit.max_weighted_gap, gap);
      if (gap > audit.wave_constant * (1 + rel_tol)) ++audit.wave_violations;

      if (audit.premise_met() && rho > params.rho_bar) ++audit.cap_violations;
    }
  }
  return audit;
}

namespace {

void require_density(double rho, const MacroParams& p) {
  if (!(rho > 0 && rho < p.rho_max)) {
    throw DomainError("density outside (0, rho_max): " + std::to_string(rho));
  }
}

}  // namespace

double phi_value(double rho, const MacroParams& p) {
  require_density(rho, p);
  if (rho <= p.rho_bar) return 0.0;
  const double a = rho - p.rho_bar, b = p.rho_max - rho;
  return p.phi_scale * a * a * a * a / b;
}

double phi_d1(double rho, const MacroParams& p) {
  require_density(rho, p);
  if (rho <= p.rho_bar) return 0.0;
  const double a = rho - p.rho_bar, b = p.rho_max - rho;
  const double a3 = a * a * a;
  return p.phi_scale * (4 * a3 / b + a3 * a / (b * b));
}

double phi_d2(double rho, const MacroParams& p) {
  require_density(rho, p);
  if (rho <= p.rho_bar) return 0.0;
  const double a = rho - p.rho_bar, b = p.rho_max - rho;
  const double a2 = a * a;
  return p.phi_scale * (12 * a2 / b + 8 * a2 * a / (b * b) + 2 * a2 * a2 / (b * b * b));
}

double xi_term(double rho, double rho_x, const MacroParams& params) {
  require_density(rho, params);
  if (rho <= params.rho_bar || rho_x == 0) return 0.0;
  return -rho_x * (2 * phi_d1(rho, params) + rho * phi_d2(rho, params));
}

double macro_gain_g(double z, const MacroParams& p) {
  const Softening f(p.epsilon);
  return p.v_max * f.value(z) / (p.v_star * (p.v_max - p.v_star)) - z / p.v_star;
}

double macro_mu_eff(const MacroParams& p) { return p.omega - macro_gain_g(0.0, p); }

void FdConfig::validate() const {
  std::vector<std::string> errors;
  if (!(cfl > 0 && cfl <= 0.9)) errors.push_back("fd.cfl must lie in (0, 0.9]");
  if (!(dx > 0)) errors.push_back("fd.dx > 0");
  if (!(x_max > x_min)) errors.push_back("fd.x_max > fd.x_min");
  if (dx > 0 && x_max > x_min) {
    const double cells = (x_max - x_min) / dx;
    if (std::abs(cells - std::round(cells)) > 1e-9 * cells) {
      errors.push_back("fd.dx must divide x_max - x_min");
    }
  }
  if (output_times.empty()) errors.push_back("fd.output_times must not be empty");
  for (std::size_t k = 0; k < output_times.size(); ++k) {
    if (!(output_times[k] >= 0) || (k > 0 && !(output_times[k] > output_times[k - 1]))) {
      errors.push_back("fd.output_times must be non-negative and increasing");
      break;
    }
  }
  if (!errors.empty()) throw ConfigError(errors);
}

MacroField fd_solver(const SmoothProfile& rho0, const SmoothProfile& v0, const MacroParams& params,
                     const FdConfig& config, Exec exec) {
  params.validate();
  config.validate();
  const long M = std::lround((config.x_max - config.x_min) / config.dx) + 1;
  const double dx = config.dx;
  const double mu_eff = macro_mu_eff(params);

  MacroField field;
  field.x.resize(M);
  for (long j = 0; j < M; ++j) field.x[j] = config.x_min + dx * static_cast<double>(j);
  std::vector<double> rho(M), v(M), rho_next(M), v_next(M), xi(M), flux(M + 1), pressure(M);
  for (long j = 0; j < M; ++j) {
    rho[j] = rho0.value(field.x[j]);
    v[j] = v0.value(field.x[j]);
    if (!(rho[j] > 0 && rho[j] < params.rho_max && v[j] >= 0 && v[j] <= params.v_max)) {
      throw PreconditionError("fd_solver: initial data outside the constraint box at x = " +
                              std::to_string(field.x[j]));
    }
  }
  const double rho_in = rho0.value(config.x_min);
  const double v_in = v0.value(config.x_min);

  auto rho_at = [&](long j) { return j < 0 ? rho_in : rho[std::min(j, M - 1)]; };
  auto v_at = [&](long j) { return j < 0 ? v_in : v[std::min(j, M - 1)]; };

  double t = 0;
  std::size_t next_out = 0;
  auto record = [&] {
    field.times.push_back(t);
    field.rho.push_back(rho);
    field.v.push_back(v);
  };
  while (next_out < config.output_times.size() && config.output_times[next_out] <= 0) {
    record();
    ++next_out;
  }

  while (next_out < config.output_times.size()) {
    // Characteristic speeds are v +- sqrt(rho (2 Phi' + rho Phi'')).
    double s_max = 0;
#pragma omp parallel for reduction(max : s_max) schedule(static) if (use_threads(exec))
    for (long j = 0; j < M; ++j) {
      pressure[j] = 2 * phi_d1(rho[j], params) + rho[j] * phi_d2(rho[j], params);
      s_max = std::max(s_max, std::abs(v[j]) + std::sqrt(rho[j] * pressure[j]));
    }
    const double t_out = config.output_times[next_out];
    double dt = config.cfl * dx / std::max(s_max, 1e-300);
    bool hits_output = false;
    if (t + dt >= t_out) {
      dt = t_out - t;
      hits_output = true;
    }

    double xi_max = 0;
#pragma omp parallel for reduction(max : xi_max) schedule(static) if (use_threads(exec))
    for (long j = 0; j < M; ++j) {
      const double rho_x = (rho_at(j + 1) - rho_at(j - 1)) / (2 * dx);
      xi[j] = rho[j] <= params.rho_bar || rho_x == 0 ? 0.0 : -rho_x * pressure[j];
      xi_max = std::max(xi_max, std::abs(xi[j]));
    }
    field.max_xi = std::max(field.max_xi, xi_max);

    // flux[j] sits between cells j - 1 and j.
#pragma omp parallel for schedule(static) if (use_threads(exec))
    for (long j = 0; j <= M; ++j) {
      const double vh = 0.5 * (v_at(j - 1) + v_at(j));
      flux[j] = vh >= 0 ? vh * rho_at(j - 1) : vh * rho_at(j);
    }

    const double lam = dt / dx;
#pragma omp parallel for schedule(static) if (use_threads(exec))
    for (long j = 0; j < M; ++j) {
      rho_next[j] = rho[j] - lam * (flux[j + 1] - flux[j]);
      const double vj = v[j];
      const double grad = vj >= 0 ? (vj - v_at(j - 1)) / dx : (v_at(j + 1) - vj) / dx;
      const double relax = (mu_eff + macro_gain_g(xi[j], params)) * (vj - params.v_star);
      v_next[j] = vj - dt * vj * grad + dt * (xi[j] - relax);
    }

    // Serial sums keep the mass bookkeeping identical across exec modes.
    const double mass_before = dx * std::accumulate(rho.begin(), rho.end(), 0.0);
    const double mass_after = dx * std::accumulate(rho_next.begin(), rho_next.end(), 0.0);
    const double expected = mass_before + dt * (flux[0] - flux[M]);
    field.max_mass_defect =
        std::max(field.max_mass_defect, std::abs(mass_after - expected) / std::abs(mass_after));

    for (long j = 0; j < M; ++j) {
      const double r = rho_next[j], u = v_next[j];
      if (!(r > 0 && r < params.rho_max && u >= 0 && u <= params.v_max)) {
        throw SolverBlowup("fd_solver: state left the constraint box at t = " +
                           std::to_string(t + dt) + ", x = " + std::to_string(field.x[j]));
      }
    }
    rho.swap(rho_next);
    v.swap(v_next);
    t = hits_output ? t_out : t + dt;
    ++field.steps;
    if (hits_output) {
      record();
      ++next_out;
    }
  }
  return field;
}

PhiPotential::PhiPotential(const MacroParams& params, double mass, int n)
    : params_(params), unit_(mass / n) {
  params.validate();
  if (!(mass > 0) || n < 2) throw PreconditionError("PhiPotential: mass > 0 and n >= 2");
  cap_L_ = unit_ / params.rho_max;
  lambda_ = unit_ / params.rho_bar;
}

double PhiPotential::value(double s) const {
  if (!(s > cap_L_)) throw DomainError("PhiPotential: s <= L");
  if (s >= lambda_) return 0.0;
  return phi_value(unit_ / s, params_);
}

double PhiPotential::grad(double s) const {
  if (!(s > cap_L_)) throw DomainError("PhiPotential: s <= L");
  if (s >= lambda_) return 0.0;
  const double rho = unit_ / s;
  return -phi_d1(rho, params_) * rho / s;
}

double PhiPotential::hess(double s) const {
  if (!(s > cap_L_)) throw DomainError("PhiPotential: s <= L");
  if (s >= lambda_) return 0.0;
  const double rho = unit_ / s;
  return (phi_d2(rho, params_) * rho * rho + 2 * phi_d1(rho, params_) * rho) / (s * s);
}

namespace {

double integrate_profile(const SmoothProfile& rho0, double a, double b) {
  using boost::math::quadrature::gauss_kronrod;
  // Piecewise smooth: integrate each kink-free piece separately.
  double sum = 0;
  double left = a;
  for (double k : rho0.kinks) {
    if (k > left && k < b) {
      sum += gauss_kronrod<double, 31>::integrate(rho0.value, left, k, 6, 1e-10);
      left = k;
    }
  }
  return sum + gauss_kronrod<double, 31>::integrate(rho0.value, left, b, 6, 1e-10);
}

double linear_interp(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
  if (x <= xs.front()) return ys.front();
  if (x >= xs.back()) return ys.back();
  const auto it = std::upper_bound(xs.begin(), xs.end(), x);
  const std::size_t hi = static_cast<std::size_t>(it - xs.begin());
  const std::size_t lo = hi - 1;
  const double u = (x - xs[lo]) / (xs[hi] - xs[lo]);
  return ys[lo] + u * (ys[hi] - ys[lo]);
}

}  // namespace

std::vector<double> place_vehicles(const SmoothProfile& rho0, double mass, int n, double x_tail) {
  require_density_profile(rho0);
  if (!(mass > 0) || n < 2) throw PreconditionError("place_vehicles: mass > 0 and n >= 2");
  const double share = mass / n;
  std::vector<double> x(n);
  x[n - 1] = x_tail;
  for (int i = n - 2; i >= 0; --i) {
    const double start = x[i + 1];
    const double hi = start + share / rho0.inf_value;
    const double lo = start + share / rho0.sup_value;
    if (!(hi > lo)) {  // constant density: the bracket is the answer
      x[i] = 0.5 * (lo + hi);
      continue;
    }
    auto f = [&](double y) {
      return std::make_pair(integrate_profile(rho0, start, y) - share, rho0.value(y));
    };
    std::uintmax_t iters = 100;
    x[i] = boost::math::tools::newton_raphson_iterate(f, 0.5 * (lo + hi), lo, hi, 50, iters);
  }
  return x;
}

BridgeReport micro_macro_bridge(const SmoothProfile& rho0, const SmoothProfile& v0,
                                const MacroParams& params, const BridgeConfig& config) {
  params.validate();
  require_density_profile(rho0);
  require_speed_profile(v0, params.omega);
  if (config.sizes.empty() || config.times.empty()) {
    throw PreconditionError("micro_macro_bridge: need at least one n and one time");
  }
  for (int n : config.sizes) {
    if (n < 20) throw PreconditionError("micro_macro_bridge: n values must be >= 20");
  }
  for (double t : config.times) {
    if (!(t > 0)) throw PreconditionError("micro_macro_bridge: comparison times must be > 0");
  }
  if (!(config.x_head > config.x_tail)) throw PreconditionError("micro_macro_bridge: x_head > x_tail");

  BridgeReport report;
  report.mass = params.m_total > 0 ? params.m_total
                                   : integrate_profile(rho0, config.x_tail, config.x_head);
  const double mass = report.mass;

  // The macro reference: exact characteristics when the density stays below
  // the interaction onset, the finite-difference solver otherwise.
  DecayAudit premise;
  premise.premise_speed_slope = v0.inf_d1 > -params.omega;
  premise.premise_density =
      rho0.sup_value <= params.rho_bar * (1 + std::min(0.0, v0.inf_d1) / params.omega);
  report.exact_reference = premise.premise_met();
  const double t_last = *std::max_element(config.times.begin(), config.times.end());
  MacroField fd;
  if (!report.exact_reference) {
    FdConfig fc;
    fc.x_min = std::floor(config.x_tail) - 1.0;
    fc.x_max = std::ceil(config.x_head + params.v_max * t_last) + 1.0;
    fc.dx = 2e-3;
    std::vector<double> ts(config.times);
    std::sort(ts.begin(), ts.end());
    fc.output_times = ts;
    fd = fd_solver(rho0, v0, params, fc, Exec::serial);
  }

  // Common comparison grid: the image of [x_tail, x_head] shrunk so that the
  // coarsest platoon still covers it.
  const int n_min = *std::min_element(config.sizes.begin(), config.sizes.end());
  const double shrink = config.compare_margin + 2.0 * (mass / n_min) / rho0.inf_value;
  auto image = [&](double r, double t) {
    const double c = ramp(t, params.omega);
    return r + params.v_star * t + (v0.value(r) - params.v_star) * c / params.omega;
  };

  const double mu_eff = macro_mu_eff(params);
  for (int n : config.sizes) {
    const std::vector<double> pos = place_vehicles(rho0, mass, n, config.x_tail);
    auto potential = std::make_shared<PhiPotential>(params, mass, n);
    ModelParams mp;
    mp.mu = mu_eff;
    mp.v_star = params.v_star;
    mp.v_max = params.v_max;
    mp.cap_L = potential->collision_distance();
    mp.lambda = potential->interaction_range();
    mp.epsilon = params.epsilon;
    mp.n = n;
    const Model model(mp, potential);

    MicroState init;
    for (int i = 1; i < n; ++i) init.s.push_back(pos[i - 1] - pos[i]);
    for (int i = 0; i < n; ++i) init.v.push_back(v0.value(pos[i]));
    if (!validate_state(init, mp).member) {
      throw PreconditionError("micro_macro_bridge: initial platoon outside Omega_n for n = " +
                              std::to_string(n) + " (profile too dense)");
    }

    // Augmented state [s, v, x_1] so positions come out of the same RK4 steps.
    const int w = 2 * n - 1;
    auto f = [&model, w, n](double, std::span<const double> y, std::span<double> dy) {
      model.rhs(y.first(w), dy.first(w));
      dy[w] = y[n - 1];
    };
    auto in_domain = [&mp, n, w](std::span<const double> y) {
      for (int i = 0; i < n - 1; ++i) {
        if (!(y[i] > mp.cap_L)) return false;
      }
      for (int i = n - 1; i < w; ++i) {
        if (!(y[i] >= -kSpeedSlack && y[i] <= mp.v_max + kSpeedSlack)) return false;
      }
      return true;
    };
    std::vector<double> y0 = flatten(init);
    y0.push_back(pos[0]);

    std::vector<long> wanted;
    for (double t : config.times) wanted.push_back(std::lround(t / config.dt));
    const long steps = *std::max_element(wanted.begin(), wanted.end());
    std::vector<std::vector<double>> snaps(config.times.size());
    run_fixed_step(f, in_domain, y0, config.dt, steps, 1,
                   [&](long k, double, std::span<const double> y) {
                     for (std::size_t q = 0; q < wanted.size(); ++q) {
                       if (wanted[q] == k) snaps[q].assign(y.begin(), y.end());
                     }
                   });

    for (std::size_t q = 0; q < config.times.size(); ++q) {
      const double t = static_cast<double>(wanted[q]) * config.dt;
      const auto& y = snaps[q];
      // Positions x_1 > ... > x_n, then ascending series for interpolation.
      std::vector<double> x(n);
      x[0] = y[w];
      for (int i = 1; i < n; ++i) x[i] = x[i - 1] - y[i - 1];
      std::vector<double> mid_x, mid_rho, veh_x, veh_v;
      for (int i = n - 1; i >= 1; --i) {
        mid_x.push_back(0.5 * (x[i - 1] + x[i]));
        mid_rho.push_back((mass / n) / y[i - 1]);
      }
      for (int i = n - 1; i >= 0; --i) {
        veh_x.push_back(x[i]);
        veh_v.push_back(y[n - 1 + i]);
      }

      const double a = image(config.x_tail, t) + shrink;
      const double b = image(config.x_head, t) - shrink;
      if (!(b > a) || a < mid_x.front() || b > mid_x.back()) {
        throw PreconditionError("micro_macro_bridge: comparison window not covered; widen "
                                "[x_tail, x_head] or lower compare_margin");
      }
      const std::vector<double> grid = uniform_grid(a, b, config.compare_points);
      BridgeRow row;
      row.n = n;
      row.time = t;
      double prev_dr = 0, prev_dv = 0;
      for (std::size_t g = 0; g < grid.size(); ++g) {
        MacroPoint ref;
        if (report.exact_reference) {
          ref = characteristic_state(t, grid[g], rho0, v0, params);
        } else {
          const auto k = static_cast<std::size_t>(
              std::find(fd.times.begin(), fd.times.end(), config.times[q]) - fd.times.begin());
          ref.rho = linear_interp(fd.x, fd.rho[k], grid[g]);
          ref.v = linear_interp(fd.x, fd.v[k], grid[g]);
        }
        const double dr = std::abs(linear_interp(mid_x, mid_rho, grid[g]) - ref.rho);
        const double dv = std::abs(linear_interp(veh_x, veh_v, grid[g]) - ref.v);
        row.linf_rho = std::max(row.linf_rho, dr);
        row.linf_v = std::max(row.linf_v, dv);
        if (g > 0) {
          const double h = grid[g] - grid[g - 1];
          row.l1_rho += 0.5 * h * (dr + prev_dr);
          row.l1_v += 0.5 * h * (dv + prev_dv);
        }
        prev_dr = dr;
        prev_dv = dv;
      }
      report.rows.push_back(row);
    }
  }
  return report;
}

void write_field_csv(std::ostream& os, const MacroField& field, std::size_t k) {
  const std::string cols[] = {"x", "rho", "v"};
  csv::write_header(os, cols);
  for (std::size_t j = 0; j < field.x.size(); ++j) {
    const double r[] = {field.x[j], field.rho[k][j], field.v[k][j]};
    csv::write_row(os, r);
  }
}

void write_bridge_csv(std::ostream& os, const BridgeReport& report) {
  os << "n,time,linf_rho,l1_rho,linf_v,l1_v\n";
  for (const auto& r : report.rows) {
    os << r.n << ',' << csv::format(r.time) << ',' << csv::format(r.linf_rho) << ','
       << csv::format(r.l1_rho) << ',' << csv::format(r.linf_v) << ',' << csv::format(r.l1_v)
       << '\n';
  }
}

}  // namespace platoon
