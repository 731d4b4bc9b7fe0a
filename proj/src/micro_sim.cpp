#include "platoon/micro_sim.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <string>

#include "platoon/csv.hpp"
#include "platoon/errors.hpp"
#include "platoon/rk4.hpp"

namespace platoon {

void IntegratorConfig::validate() const {
  if (!(dt > 0)) throw PreconditionError("IntegratorConfig: dt > 0");
  if (!(horizon > 0)) throw PreconditionError("IntegratorConfig: horizon > 0");
  if (record_stride < 1) throw PreconditionError("IntegratorConfig: record_stride >= 1");
}

long IntegratorConfig::steps() const { return std::lround(horizon / dt); }

Trajectory::Trajectory(ModelParams params, double dt, int record_stride)
    : params_(params), dt_(dt), record_stride_(record_stride) {}

std::span<const double> Trajectory::row(std::size_t k) const {
  return std::span<const double>(data_).subspan(k * width(), width());
}

std::span<const double> Trajectory::spacings(std::size_t k) const {
  return row(k).first(params_.n - 1);
}

std::span<const double> Trajectory::speeds(std::size_t k) const {
  return row(k).last(params_.n);
}

MicroState Trajectory::snapshot(std::size_t k) const { return unflatten(row(k), params_.n); }

void Trajectory::reserve(std::size_t snapshots) {
  times_.reserve(snapshots);
  data_.reserve(snapshots * width());
}

void Trajectory::append(double t, std::span<const double> r) {
  if (static_cast<int>(r.size()) != width()) {
    throw PreconditionError("Trajectory::append: row width mismatch");
  }
  times_.push_back(t);
  data_.insert(data_.end(), r.begin(), r.end());
}

OmegaVerdict validate_state(const MicroState& state, const ModelParams& params) {
  OmegaVerdict verdict;
  for (std::size_t i = 0; i < state.s.size(); ++i) {
    if (!(state.s[i] > params.cap_L)) verdict.spacing_violations.push_back(static_cast<int>(i) + 2);
  }
  for (std::size_t i = 0; i < state.v.size(); ++i) {
    if (!(state.v[i] <= params.v_max)) verdict.upper_violations.push_back(static_cast<int>(i) + 1);
    if (!(state.v[i] >= 0.0)) verdict.lower_violations.push_back(static_cast<int>(i) + 1);
  }
  verdict.spacing_ok = verdict.spacing_violations.empty();
  verdict.speed_upper_ok = verdict.upper_violations.empty();
  verdict.speed_lower_ok = verdict.lower_violations.empty();
  const bool sized = state.vehicles() == params.n &&
                     static_cast<int>(state.s.size()) == params.n - 1;
  verdict.member =
      sized && verdict.spacing_ok && verdict.speed_upper_ok && verdict.speed_lower_ok;
  return verdict;
}

Trajectory integrate(const Model& model, const MicroState& initial, const IntegratorConfig& config) {
  config.validate();
  const auto verdict = validate_state(initial, model.params());
  if (!verdict.member) throw DomainError("integrate: initial state outside Omega");

  const ModelParams& p = model.params();
  const int n = p.n;
  auto f = [&model](double, std::span<const double> y, std::span<double> dy) { model.rhs(y, dy); };
  auto in_domain = [&p, n](std::span<const double> y) {
    for (int i = 0; i < n - 1; ++i) {
      if (!(y[i] > p.cap_L)) return false;
    }
    for (int i = n - 1; i < 2 * n - 1; ++i) {
      if (!(y[i] >= -kSpeedSlack && y[i] <= p.v_max + kSpeedSlack)) return false;
    }
    return true;
  };

  const long steps = config.steps();
  Trajectory traj(p, config.dt, config.record_stride);
  traj.reserve(static_cast<std::size_t>(steps / config.record_stride) + 1);
  run_fixed_step(f, in_domain, flatten(initial), config.dt, steps, config.record_stride,
                 [&traj](long, double t, std::span<const double> y) { traj.append(t, y); });
  return traj;
}

MicroState closed_form_prop31(const Model& model, const MicroState& initial, double t) {
  const ModelParams& p = model.params();
  model.require_in_omega(initial);
  const double w = model.omega_rate();
  for (std::size_t j = 0; j < initial.s.size(); ++j) {
    const double dv = initial.v[j] - initial.v[j + 1];
    const double needed = std::max(p.lambda - dv / w, p.lambda);
    if (initial.s[j] < needed) {
      throw PreconditionError("closed_form_prop31: spacing s_" + std::to_string(j + 2) +
                              " below max(lambda - (v_{i-1} - v_i)/omega, lambda)");
    }
  }
  const double decay = std::exp(-w * t);
  const double growth = -std::expm1(-w * t);  // 1 - e^{-wt}
  MicroState out = initial;
  for (std::size_t i = 0; i < out.v.size(); ++i) {
    out.v[i] = p.v_star + decay * (initial.v[i] - p.v_star);
  }
  for (std::size_t j = 0; j < out.s.size(); ++j) {
    out.s[j] = initial.s[j] + (initial.v[j] - initial.v[j + 1]) * growth / w;
  }
  return out;
}

MicroState closed_form_compliant_state(const Model& model, std::span<const double> speeds,
                                  double extra_gap) {
  const ModelParams& p = model.params();
  if (static_cast<int>(speeds.size()) != p.n) {
    throw PreconditionError("closed_form_compliant_state: need n speeds");
  }
  const double w = model.omega_rate();
  MicroState state;
  state.v.assign(speeds.begin(), speeds.end());
  for (int j = 0; j + 1 < p.n; ++j) {
    const double dv = speeds[j] - speeds[j + 1];
    state.s.push_back(std::max(p.lambda - dv / w, p.lambda) + extra_gap);
  }
  return state;
}

double dist_to_S(const Model& model, const MicroState& state) {
  model.require_in_omega(state);
  const ModelParams& p = model.params();
  double sum = 0.0;
  for (double s : state.s) {
    const double gap = std::max(p.lambda - s, 0.0);
    sum += gap * gap;
  }
  for (double v : state.v) sum += (v - p.v_star) * (v - p.v_star);
  return std::sqrt(sum);
}

SpacingAudit spacing_bound_audit(const Trajectory& traj, const Model& model) {
  const ModelParams& p = model.params();
  SpacingAudit audit;
  if (traj.empty()) return audit;
  const auto s0 = traj.spacings(0);
  const double slack = p.v_max / p.mu;
  for (double s : s0) audit.bound.push_back(std::max(p.lambda, s) + slack);
  audit.max_spacing.assign(s0.begin(), s0.end());
  audit.tightest_margin = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const auto s = traj.spacings(k);
    for (std::size_t j = 0; j < s.size(); ++j) {
      audit.max_spacing[j] = std::max(audit.max_spacing[j], s[j]);
      const double margin = audit.bound[j] - s[j];
      audit.tightest_margin = std::min(audit.tightest_margin, margin);
      if (margin < 0) ++audit.violations;
    }
  }
  return audit;
}

namespace {

// Uniform draw on the open interval (a, b) from the raw 64-bit engine output.
// std::uniform_real_distribution is implementation-defined, this is not.
double open_uniform(std::mt19937_64& rng, double a, double b) {
  double u = 0.0;
  do {
    u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  } while (u == 0.0);
  return a + (b - a) * u;
}

}  // namespace

MicroState example1_initial_state(const ModelParams& params, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  MicroState state;
  for (int i = 0; i + 1 < params.n; ++i) state.s.push_back(open_uniform(rng, 16.0, 24.0));
  for (int i = 0; i < params.n; ++i) state.v.push_back(open_uniform(rng, 27.0, 34.0));
  return state;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  const int n = traj.vehicles();
  std::vector<std::string> header{"t"};
  for (int i = 2; i <= n; ++i) header.push_back("s" + std::to_string(i));
  for (int i = 1; i <= n; ++i) header.push_back("v" + std::to_string(i));
  csv::write_header(os, header);
  std::vector<double> row(traj.width() + 1);
  for (std::size_t k = 0; k < traj.size(); ++k) {
    row[0] = traj.time(k);
    const auto r = traj.row(k);
    std::copy(r.begin(), r.end(), row.begin() + 1);
    csv::write_row(os, row);
  }
}

Trajectory read_trajectory_csv(std::istream& is, const ModelParams& params, double dt,
                               int record_stride) {
  const auto table = csv::read(is);
  if (static_cast<int>(table.header.size()) != 2 * params.n) {
    throw PreconditionError("read_trajectory_csv: column count does not match n");
  }
  Trajectory traj(params, dt, record_stride);
  std::vector<double> row(2 * params.n - 1);
  for (const auto& cells : table.rows) {
    for (std::size_t c = 1; c < cells.size(); ++c) row[c - 1] = csv::parse_double(cells[c]);
    traj.append(csv::parse_double(cells[0]), row);
  }
  return traj;
}

}  // namespace platoon
