#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "platoon/exec.hpp"
#include "platoon/micro_sim.hpp"
#include "platoon/model.hpp"

namespace platoon {

/// Leader speed deviation d(t) = alpha sin(omega_bar t).
struct DisturbanceSpec {
  double alpha = -2.5;     // [m/s]
  double omega_bar = 0.1;  // [rad/s]

  /// alpha must keep v* + d inside [0, v_max]; omega_bar > 0.
  void validate(const ModelParams& params) const;
  double operator()(double t) const;
};

/// Follow-the-Leader baseline controller constants.
struct FtLParams {
  double a = 5.1;         // lower integration limit of G [m]
  double k = 1.2;         // total gain [1/s]
  double beta_ftl = 34.4; // ramp onset [m]
  double zeta = 64.43;    // decay onset [m]
  double g_max = 1.15;    // gain plateau [1/s]
  double b = 34.4;        // ramp offset [m]; taken equal to beta_ftl

  void validate() const;
};

/// Piecewise gain: 0 up to b, ramp r - b up to g_max + b, plateau g_max up
/// to zeta, then g_max e^{zeta - r}.
double ftl_gbar(double r, const FtLParams& ftl);
/// G(s) = integral of gbar from a to s, in closed form.
double ftl_G(double s, const FtLParams& ftl);
/// Spacing at which G equals v; throws PreconditionError if v is out of range.
double ftl_G_inverse(double v, const FtLParams& ftl);

enum class FtLStart {
  lambda_spacing,  // s_i(0) = lambda, v_i(0) = v*
  balanced,           // s_i(0) = G^{-1}(v*), v_i(0) = v*
};

/// Sup-norm measurement window: max(400 s, 20 periods).
double measurement_horizon(double omega_bar);

/// Bidirectional platoon driven by the leader disturbance, started at the
/// equilibrium v_i = v*, s_i = lambda. The recorded v_1 column is v* + d(t).
Trajectory simulate_disturbed_inviscid(const Model& model, const DisturbanceSpec& spec,
                                       const IntegratorConfig& config);

/// Follow-the-Leader platoon under the same leader disturbance.
Trajectory simulate_ftl(const FtLParams& ftl, const ModelParams& params,
                        const DisturbanceSpec& spec, const IntegratorConfig& config,
                        FtLStart start = FtLStart::lambda_spacing);

struct AmplificationReport {
  int n = 0;
  double alpha = 0;
  double omega_bar = 0;
  double window = 0;           // measured horizon [s]
  std::vector<double> gamma;   // gamma[j] belongs to vehicle i = j + 2
  std::vector<double> delta;

  double gamma_last() const { return gamma.back(); }
  double delta_last() const { return delta.back(); }
};

/// gamma_i = sup |v_i - v*| / |alpha|, delta_i = sup |V'(s_i)| / |alpha| over
/// the recorded snapshots, i = 2..n.
AmplificationReport amplification_factors(const Trajectory& traj, const Model& model,
                                          const DisturbanceSpec& spec);

enum class Controller { inviscid, ftl };
const char* to_string(Controller c);

struct SweepGrid {
  std::vector<double> omega_bars;
  std::vector<int> sizes;
  std::vector<Controller> controllers;
  double alpha = -2.5;
};

struct SweepSettings {
  double dt = 1e-3;
  int record_stride = 20;
  double horizon_scale = 1.0;  // multiplies measurement_horizon
  FtLStart ftl_start = FtLStart::lambda_spacing;
};

struct SweepCell {
  Controller controller = Controller::inviscid;
  int n = 0;
  double omega_bar = 0;
  double alpha = 0;
  std::optional<AmplificationReport> report;
  std::string error;  // set when the cell failed
};

/// Runs every (controller, n, omega_bar) cell; the result is ordered by grid
/// index whatever the completion order. `base` supplies every constant but n.
std::vector<SweepCell> sweep(const SweepGrid& grid, const ModelParams& base, const FtLParams& ftl,
                             const SweepSettings& settings, Exec exec = Exec::parallel);

/// `model,n,omega_bar,alpha,i,gamma,delta`, one row per follower per cell.
void write_sweep_csv(std::ostream& os, const std::vector<SweepCell>& cells);
/// `model,n,omega_bar,gamma_nn,delta_nn,status`, one row per cell.
void write_sweep_summary(std::ostream& os, const std::vector<SweepCell>& cells);

}  // namespace platoon
