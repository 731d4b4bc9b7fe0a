#pragma once

#include <functional>
#include <iosfwd>
#include <limits>
#include <memory>
#include <vector>

#include "platoon/exec.hpp"
#include "platoon/model.hpp"

namespace platoon {

/// Constants of the macroscopic density/speed model.
struct MacroParams {
  double omega = 1.2;      // relaxation rate [1/s]
  double v_star = 1.0;
  double v_max = 2.0;
  double rho_bar = 0.7;    // interaction onset density
  double rho_max = 1.0;    // jam density
  double phi_scale = 1.0;  // coefficient of the quartic Phi
  double m_total = 0.0;    // bridge mass; 0 means "take the platoon's mass"
  double epsilon = 0.2;    // softening width inside g

  void validate() const;
  static MacroParams example3();
};

/// An analytic profile together with declared bounds. The bounds are trusted
/// by the inversion brackets and the estimate constants;
/// verify_declared_bounds samples them.
struct SmoothProfile {
  std::function<double(double)> value;
  std::function<double(double)> d1;
  std::function<double(double)> d2;
  double inf_value = 0, sup_value = 0;
  double inf_d1 = 0, sup_d1 = 0;
  double sup_abs_d2 = 0;
  std::vector<double> kinks;  // points where d2 may jump; quadrature splits there

  double sup_abs() const;
  double sup_abs_d1() const;
  /// sup |value - c|
  double sup_dev(double c) const;

  /// Constant profile c.
  static SmoothProfile constant(double c);
  /// base + amp (4x(1-x))^p on (0, 1), base elsewhere; p in {2, 3}.
  static SmoothProfile bump(double base, double amp, int p);
  /// 0.1 + 5x^2(x-1)^2 on (0, 1).
  static SmoothProfile example3_density();
  /// 1 + 8x^3(x-1)^3 on (0, 1).
  static SmoothProfile example3_speed();
};

/// Throws ProfileBoundError naming the first declared bound that a sample on
/// [a, b] exceeds (relative slack 1e-12).
void verify_declared_bounds(const SmoothProfile& p, double a, double b, int samples);

/// P_t(r) = omega r + (1 - e^{-omega t}) v0(r). t = +inf gives P_inf.
double p_forward(double t, double r, const SmoothProfile& v0, double omega);
/// Unique r with P_t(r) = y, bisected to 1e-12 on the declared bracket.
double p_invert(double t, double y, const SmoothProfile& v0, double omega);

struct MacroPoint {
  double rho = 0;
  double v = 0;
};

/// Exact solution of the small-density system by characteristics.
MacroPoint characteristic_state(double t, double x, const SmoothProfile& rho0,
                                const SmoothProfile& v0, const MacroParams& params);

/// Limit profile f(x) = omega rho0(z) / (omega + v0'(z)), z = P_inf^{-1}(omega x + v*).
double traveling_wave(double x, const SmoothProfile& rho0, const SmoothProfile& v0,
                      const MacroParams& params);

/// Constant of the weighted traveling-wave estimate, assembled from the
/// declared profile bounds.
double wave_gap_constant(const SmoothProfile& rho0, const SmoothProfile& v0,
                         const MacroParams& params);

/// Density and speed on a uniform space grid at a list of times.
struct MacroField {
  std::vector<double> x;
  std::vector<double> times;
  std::vector<std::vector<double>> rho;  // rho[k][j] at times[k], x[j]
  std::vector<std::vector<double>> v;

  // Filled by fd_solver only.
  long steps = 0;
  double max_xi = 0;               // max |Xi| seen
  double max_mass_defect = 0;      // worst relative per-step mass residual
};

std::vector<double> uniform_grid(double a, double b, int points);

MacroField characteristic_field(const SmoothProfile& rho0, const SmoothProfile& v0,
                                const MacroParams& params, std::vector<double> x,
                                std::vector<double> times, Exec exec = Exec::parallel);

struct DecayAuditConfig {
  double x_min = -2.0, x_max = 8.0;
  int points = 501;
  std::vector<double> times{0, 1, 2, 3, 4, 5};
  double rel_tol = 1e-9;  // slack on the three pointwise upper bounds
};

struct DecayAudit {
  long checked = 0;
  long density_violations = 0;   // sup rho vs time-dependent bound
  long speed_violations = 0;     // exponential speed decay
  long positivity_violations = 0;
  long wave_violations = 0;      // e^{wt}|rho - f(x - v* t)| vs constant
  double worst_density_ratio = 0;  // max rho / bound
  double worst_speed_ratio = 0;    // max |v - v*| / bound (0 where the bound is 0 and so is the gap)
  double max_weighted_gap = 0;
  double wave_constant = 0;

  // Small-density regime: premises and, when both hold, the density cap.
  bool premise_speed_slope = false;  // inf v0' > -omega
  bool premise_density = false;      // sup rho0 <= rho_bar (1 + min(0, inf v0')/omega)
  bool premise_met() const { return premise_speed_slope && premise_density; }
  long cap_violations = 0;           // rho > rho_bar, counted only if premise_met

  bool passed() const {
    return density_violations == 0 && speed_violations == 0 && positivity_violations == 0 &&
           wave_violations == 0 && cap_violations == 0;
  }
};

DecayAudit decay_audit(const MacroField& field, const SmoothProfile& rho0, const SmoothProfile& v0,
                       const MacroParams& params, double rel_tol = 1e-9);

/// Phi(rho) = phi_scale (rho - rho_bar)^4 / (rho_max - rho) above rho_bar, 0 below.
/// All three throw DomainError outside (0, rho_max).
double phi_value(double rho, const MacroParams& params);
double phi_d1(double rho, const MacroParams& params);
double phi_d2(double rho, const MacroParams& params);

/// Xi = -rho_x (2 Phi'(rho) + rho Phi''(rho)).
double xi_term(double rho, double rho_x, const MacroParams& params);

/// g(z) with the macro constants; mu_eff = omega - g(0).
double macro_gain_g(double z, const MacroParams& params);
double macro_mu_eff(const MacroParams& params);

struct FdConfig {
  double x_min = -2.0, x_max = 8.0;
  double dx = 1e-2;
  double cfl = 0.9;  // upwind diffusion scales with 1 - cfl
  std::vector<double> output_times{0, 1, 2, 3, 4, 5};

  /// Throws ConfigError (cfl outside (0, 0.9], bad grid, unsorted times).
  void validate() const;
};

/// First-order upwind solver for the full system with the Xi coupling.
/// Left boundary: inflow of the profiles' state at x_min; right: zero gradient.
MacroField fd_solver(const SmoothProfile& rho0, const SmoothProfile& v0, const MacroParams& params,
                     const FdConfig& config, Exec exec = Exec::parallel);

/// V_n(s) = Phi(m / (n s)); collision distance m/(n rho_max), range m/(n rho_bar).
class PhiPotential final : public Potential {
 public:
  PhiPotential(const MacroParams& params, double mass, int n);

  double value(double s) const override;
  double grad(double s) const override;
  double hess(double s) const override;
  double collision_distance() const override { return cap_L_; }
  double interaction_range() const override { return lambda_; }

 private:
  MacroParams params_;
  double unit_;  // m / n
  double cap_L_;
  double lambda_;
};

struct BridgeConfig {
  std::vector<int> sizes{50, 100, 200};
  std::vector<double> times{2.0};
  double x_tail = -1.0;   // position of the last vehicle
  double x_head = 2.0;    // used to fix m when params.m_total is 0
  double dt = 1e-3;
  int compare_points = 401;
  double compare_margin = 0.1;
};

struct BridgeRow {
  int n = 0;
  double time = 0;
  double linf_rho = 0, l1_rho = 0, linf_v = 0, l1_v = 0;
};

struct BridgeReport {
  double mass = 0;
  bool exact_reference = false;  // characteristics (true) or fd_solver (false)
  std::vector<BridgeRow> rows;
};

/// Vehicle positions x_1 > ... > x_n with mass m/n of rho0 between neighbours.
std::vector<double> place_vehicles(const SmoothProfile& rho0, double mass, int n, double x_tail);

BridgeReport micro_macro_bridge(const SmoothProfile& rho0, const SmoothProfile& v0,
                                const MacroParams& params, const BridgeConfig& config);

/// One time slice as `x,rho,v`.
void write_field_csv(std::ostream& os, const MacroField& field, std::size_t k);
/// `n,time,linf_rho,l1_rho,linf_v,l1_v`.
void write_bridge_csv(std::ostream& os, const BridgeReport& report);

}  // namespace platoon
