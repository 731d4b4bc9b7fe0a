#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "platoon/model.hpp"

namespace platoon {

struct IntegratorConfig {
  double dt = 1e-3;
  double horizon = 10.0;
  int record_stride = 1;

  void validate() const;
  long steps() const;
};

/// Uniformly sampled platoon trajectory stored row-major as
/// [s_2..s_n, v_1..v_n] per snapshot.
class Trajectory {
 public:
  Trajectory(ModelParams params, double dt, int record_stride);

  const ModelParams& params() const { return params_; }
  int vehicles() const { return params_.n; }
  int width() const { return 2 * params_.n - 1; }
  double dt() const { return dt_; }
  int record_stride() const { return record_stride_; }
  double record_interval() const { return dt_ * record_stride_; }

  std::size_t size() const { return times_.size(); }
  bool empty() const { return times_.empty(); }
  double time(std::size_t k) const { return times_[k]; }
  const std::vector<double>& times() const { return times_; }
  std::span<const double> row(std::size_t k) const;
  std::span<const double> spacings(std::size_t k) const;
  std::span<const double> speeds(std::size_t k) const;
  MicroState snapshot(std::size_t k) const;

  void reserve(std::size_t snapshots);
  void append(double t, std::span<const double> row);

  bool operator==(const Trajectory&) const = default;

 private:
  ModelParams params_;
  double dt_;
  int record_stride_;
  std::vector<double> times_;
  std::vector<double> data_;
};

/// Membership in Omega with each constraint reported separately.
struct OmegaVerdict {
  bool member = true;
  bool spacing_ok = true;      // min s_i > L
  bool speed_upper_ok = true;  // max v_i <= v_max
  bool speed_lower_ok = true;  // min v_i >= 0
  std::vector<int> spacing_violations;  // offending i (2..n)
  std::vector<int> upper_violations;    // offending i (1..n)
  std::vector<int> lower_violations;
};

OmegaVerdict validate_state(const MicroState& state, const ModelParams& params);

/// Classical RK4 with Omega-exit step halving.
Trajectory integrate(const Model& model, const MicroState& initial, const IntegratorConfig& config);

/// Exact solution for widely spaced platoons (all spacings stay >= lambda):
/// v_i(t) = v* + e^{-wt}(v_i(0) - v*), s_i(t) = s_i(0) + (v_{i-1}(0) - v_i(0))(1 - e^{-wt})/w.
/// Throws PreconditionError naming the first index that violates
/// s_i(0) >= max(lambda - (v_{i-1}(0) - v_i(0))/w, lambda).
MicroState closed_form_prop31(const Model& model, const MicroState& initial, double t);

/// Smallest spacings satisfying the closed-form precondition for the given
/// speeds, each widened by `extra_gap`.
MicroState closed_form_compliant_state(const Model& model, std::span<const double> speeds,
                                  double extra_gap);

/// Euclidean distance to the equilibrium set S (spacings >= lambda, v = v*).
double dist_to_S(const Model& model, const MicroState& state);

struct SpacingAudit {
  std::vector<double> bound;        // max(lambda, s_i(0)) + v_max / mu, per i = 2..n
  std::vector<double> max_spacing;  // max over snapshots, per i
  double tightest_margin = 0.0;     // min over i, t of bound - s_i(t)
  long violations = 0;
};

SpacingAudit spacing_bound_audit(const Trajectory& traj, const Model& model);

/// Deterministic draw of s_i(0) in (16, 24) and v_i(0) in (27, 34) for the
/// asymptotic-stability experiment.
MicroState example1_initial_state(const ModelParams& params, std::uint64_t seed);

/// CSV with header `t,s2..sn,v1..vn`, 17 significant digits.
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);
Trajectory read_trajectory_csv(std::istream& is, const ModelParams& params, double dt,
                               int record_stride);

}  // namespace platoon
