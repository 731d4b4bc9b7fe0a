#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "platoon/exec.hpp"
#include "platoon/micro_sim.hpp"
#include "platoon/model.hpp"

namespace platoon {

struct LyapunovConfig {
  double beta = 1.0;          // strictness of the decay bound
  double fd_dt = 1e-4;        // half-step of the centred dW/dt estimate [s]
  int envelope_samples = 4096;
  // Skip the monotone fast paths and always maximise on the dense grids.
  bool force_dense_envelopes = false;

  void validate() const;
};

/// Mechanical energy relative to an observer moving at v*:
/// H = 1/2 sum (v_i - v*)^2 + sum V(s_i).
double energy_H(const Model& model, const MicroState& state);

/// dH/dt = -sum k_i (v_i - v*)^2 along the flow.
double energy_H_rate(const Model& model, const MicroState& state);

/// Unique s in (L, lambda] with V(s) = r, by bisection to the last ulp.
/// Returns the lower bracket end, so V(result) >= r always holds.
double v_inverse(const Potential& potential, double r);

/// The derived ingredients of the strict Lyapunov function, all evaluable
/// at an energy level r >= 0 (or a distance q for the b1, b2, h envelopes).
///
/// For the shipped potential the envelopes are monotone and each sup is
/// attained at the left end of its interval; construction verifies this on
/// the sample grid and falls back to dense-grid maximisation otherwise.
class CertificateTables {
 public:
  /// Everything that depends on r through rho(r), computed with one inversion.
  struct Level {
    double rho = 0.0;
    double gamma = 0.0;
    double phi = 0.0;
    double phi_tilde = 0.0;
    double R = 0.0;
    double kappa = 0.0;
  };

  CertificateTables(const Model& model, LyapunovConfig config);

  const Model& model() const { return model_; }
  const LyapunovConfig& config() const { return config_; }

  double rho(double r) const;
  double b1(double q) const;  // max |V'| on [q, lambda]
  double b2(double q) const;  // max V'' on [q, lambda]
  double h(double q) const;   // sup (V')^2 / V on [q, lambda)
  double gamma(double r) const;
  double phi(double r) const;
  double phi_tilde(double r) const;
  double weight_R(double r) const;
  double kappa(double r) const;
  Level at(double r) const;

  /// 4^i for i = 0..2n.
  double weight(int i) const { return pow4_[i]; }

  bool b1_monotone() const { return b1_fast_; }
  bool b2_monotone() const { return b2_fast_; }
  bool h_monotone() const { return h_fast_; }

 private:
  double ratio(double d) const;
  double gain_cap(double c) const;
  static double suffix_lookup(const std::vector<double>& grid, const std::vector<double>& suffix,
                              double q);

  Model model_;
  LyapunovConfig config_;
  std::vector<double> pow4_;
  std::vector<double> grid_;  // sample points on (L, lambda], increasing
  std::vector<double> b1_suffix_, b2_suffix_, h_suffix_;
  bool b1_fast_ = false;
  bool b2_fast_ = false;
  bool h_fast_ = false;
};

/// W = R(H) H - sum_{i=2}^n 4^i V'(s_i)(v_i - v*), with R taken as R~.
double strict_W(const CertificateTables& tables, const MicroState& state);

/// Right-hand side of the decay inequality:
/// -beta mu sum (v_i - v*)^2 - 1/8 sum_{i=2}^n 4^i V'(s_i)^2.
double decay_bound(const CertificateTables& tables, const MicroState& state);

struct AuditRow {
  double t = 0, H = 0, W = 0, kappaH = 0, dWdt = 0, rhs_bound = 0, margin = 0;
};

struct CertificateReport {
  std::vector<AuditRow> rows;
  double worst_lower_margin = 0;   // min (W - H)
  double worst_upper_margin = 0;   // min (kappa(H) H - W)
  double worst_decay_margin = 0;   // min (rhs + tol - dW/dt)
  long sandwich_violations = 0;
  long decay_violations = 0;

  bool passed() const { return sandwich_violations == 0 && decay_violations == 0; }
};

/// Sandwich and decay checks at every interior snapshot. dW/dt is the centred
/// difference of W over one RK4 step of +-fd_dt from the snapshot; the decay
/// tolerance is 1e-3 |rhs| + 1e-6.
CertificateReport audit_trajectory(const Trajectory& traj, const CertificateTables& tables,
                                   Exec exec = Exec::parallel);

void write_audit_csv(std::ostream& os, const CertificateReport& report);

/// Violation counts of the pointwise ingredient bounds on a batch of states.
struct ClaimReport {
  long states = 0;
  long gain_violations = 0;      // k_i <= phi(H)
  long hess_violations = 0;      // V''(s_i) <= phi~(H)
  long ratio_violations = 0;     // V'(s_i)^2 <= gamma(H) V(s_i)
  long sandwich_violations = 0;  // H <= W <= kappa(H) H

  long total() const {
    return gain_violations + hess_violations + ratio_violations + sandwich_violations;
  }
};

ClaimReport check_claims(const CertificateTables& tables, std::span<const MicroState> states,
                         Exec exec = Exec::parallel);

/// Seeded states of Omega with spacings clustered near L, spread over
/// (L, lambda) and beyond lambda, and speeds uniform on [0, v_max].
std::vector<MicroState> random_omega_states(const ModelParams& params, int count,
                                            std::uint64_t seed);

}  // namespace platoon
