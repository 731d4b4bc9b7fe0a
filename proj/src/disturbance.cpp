#include "platoon/disturbance.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numbers>
#include <ostream>

#include "platoon/csv.hpp"
#include "platoon/errors.hpp"
#include "platoon/rk4.hpp"

namespace platoon {

void DisturbanceSpec::validate(const ModelParams& params) const {
  if (!(alpha >= -params.v_star && alpha <= params.v_max - params.v_star)) {
    throw PreconditionError("DisturbanceSpec: alpha outside [-v*, v_max - v*]");
  }
  if (!(omega_bar > 0)) throw PreconditionError("DisturbanceSpec: omega_bar > 0");
}

double DisturbanceSpec::operator()(double t) const { return alpha * std::sin(omega_bar * t); }

void FtLParams::validate() const {
  if (!(a > 0)) throw PreconditionError("FtLParams: a > 0");
  if (!(beta_ftl > a)) throw PreconditionError("FtLParams: beta_ftl > a");
  if (!(g_max > 0)) throw PreconditionError("FtLParams: g_max > 0");
  if (!(k > g_max)) throw PreconditionError("FtLParams: k > g_max");
  if (!(zeta > g_max + b)) throw PreconditionError("FtLParams: zeta > g_max + b");
  if (!(b >= a)) throw PreconditionError("FtLParams: b >= a");
}

double ftl_gbar(double r, const FtLParams& ftl) {
  if (r <= ftl.b) return 0.0;
  if (r <= ftl.g_max + ftl.b) return r - ftl.b;
  if (r <= ftl.zeta) return ftl.g_max;
  return ftl.g_max * std::exp(ftl.zeta - r);
}

double ftl_G(double s, const FtLParams& ftl) {
  // gbar vanishes on [a, b], so G is zero there and below.
  if (s <= ftl.b) return 0.0;
  const double ramp_end = ftl.g_max + ftl.b;
  if (s <= ramp_end) return 0.5 * (s - ftl.b) * (s - ftl.b);
  const double ramp_area = 0.5 * ftl.g_max * ftl.g_max;
  if (s <= ftl.zeta) return ramp_area + ftl.g_max * (s - ramp_end);
  const double plateau_area = ftl.g_max * (ftl.zeta - ramp_end);
  return ramp_area + plateau_area - ftl.g_max * std::expm1(ftl.zeta - s);
}

double ftl_G_inverse(double v, const FtLParams& ftl) {
  const double ramp_end = ftl.g_max + ftl.b;
  const double sup = 0.5 * ftl.g_max * ftl.g_max + ftl.g_max * (ftl.zeta - ramp_end) + ftl.g_max;
  if (!(v > 0 && v < sup)) throw PreconditionError("ftl_G_inverse: speed outside (0, sup G)");
  double lo = ftl.b;
  double hi = ftl.zeta;
  while (ftl_G(hi, ftl) < v) hi += (hi - ftl.b);
  while (true) {
    const double mid = lo + 0.5 * (hi - lo);
    if (mid <= lo || mid >= hi) break;
    if (ftl_G(mid, ftl) < v) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return hi;
}

double measurement_horizon(double omega_bar) {
  return std::max(400.0, 20.0 * 2.0 * std::numbers::pi / omega_bar);
}

namespace {

// Follower-only state [s_2..s_n, v_2..v_n]; records expand it to the full
// row with v_1 = v* + d(t).
template <class Rhs, class InDomain>
Trajectory run_follower_system(Rhs& f, InDomain& in_domain, const ModelParams& params,
                               const DisturbanceSpec& spec, std::vector<double> y0,
                               const IntegratorConfig& config) {
  const int n = params.n;
  Trajectory traj(params, config.dt, config.record_stride);
  const long steps = config.steps();
  traj.reserve(static_cast<std::size_t>(steps / config.record_stride) + 1);
  std::vector<double> row(2 * n - 1);
  run_fixed_step(f, in_domain, std::move(y0), config.dt, steps, config.record_stride,
                 [&](long, double t, std::span<const double> y) {
                   std::copy(y.begin(), y.begin() + (n - 1), row.begin());
                   row[n - 1] = params.v_star + spec(t);
                   std::copy(y.begin() + (n - 1), y.end(), row.begin() + n);
                   traj.append(t, row);
                 });
  return traj;
}

}  // namespace

Trajectory simulate_disturbed_inviscid(const Model& model, const DisturbanceSpec& spec,
                                       const IntegratorConfig& config) {
  const ModelParams& p = model.params();
  spec.validate(p);
  config.validate();
  const int n = p.n;
  const int m = n - 1;  // followers
  const Potential& V = model.potential();

  auto f = [&](double t, std::span<const double> y, std::span<double> dy) {
    const double* s = y.data();
    const double* v = y.data() + m;  // v[j] is vehicle j + 2
    double v_ahead = p.v_star + spec(t);
    for (int j = 0; j < m; ++j) {
      const double grad_here = V.grad(s[j]);
      const double grad_behind = j + 1 < m ? V.grad(s[j + 1]) : 0.0;
      const double force = grad_here - grad_behind;
      const double k = p.mu + model.gain_g(force);
      dy[j] = v_ahead - v[j];
      dy[m + j] = -k * (v[j] - p.v_star) + force;
      v_ahead = v[j];
    }
  };
  auto in_domain = [&p, m](std::span<const double> y) {
    for (int j = 0; j < m; ++j) {
      if (!(y[j] > p.cap_L)) return false;
      const double v = y[m + j];
      if (!(v >= -kSpeedSlack && v <= p.v_max + kSpeedSlack)) return false;
    }
    return true;
  };

  std::vector<double> y0(2 * m);
  std::fill(y0.begin(), y0.begin() + m, p.lambda);
  std::fill(y0.begin() + m, y0.end(), p.v_star);
  return run_follower_system(f, in_domain, p, spec, std::move(y0), config);
}

Trajectory simulate_ftl(const FtLParams& ftl, const ModelParams& params,
                        const DisturbanceSpec& spec, const IntegratorConfig& config,
                        FtLStart start) {
  ftl.validate();
  params.validate();
  spec.validate(params);
  config.validate();
  const int m = params.n - 1;

  auto f = [&](double t, std::span<const double> y, std::span<double> dy) {
    const double* s = y.data();
    const double* v = y.data() + m;
    double v_ahead = params.v_star + spec(t);
    for (int j = 0; j < m; ++j) {
      const double gain = ftl_gbar(s[j], ftl);
      dy[j] = v_ahead - v[j];
      dy[m + j] = (ftl.k - gain) * ftl_G(s[j], ftl) + gain * v_ahead - ftl.k * v[j];
      v_ahead = v[j];
    }
  };
  // The baseline has no collision potential; it only needs positive gaps.
  auto in_domain = [m](std::span<const double> y) {
    for (int j = 0; j < m; ++j) {
      if (!(y[j] > 0.0) || !std::isfinite(y[m + j])) return false;
    }
    return true;
  };

  const double s0 = start == FtLStart::balanced ? ftl_G_inverse(params.v_star, ftl) : params.lambda;
  std::vector<double> y0(2 * m);
  std::fill(y0.begin(), y0.begin() + m, s0);
  std::fill(y0.begin() + m, y0.end(), params.v_star);
  return run_follower_system(f, in_domain, params, spec, std::move(y0), config);
}

AmplificationReport amplification_factors(const Trajectory& traj, const Model& model,
                                          const DisturbanceSpec& spec) {
  if (spec.alpha == 0.0) {
    throw PreconditionError("amplification_factors: alpha = 0 makes the ratio undefined");
  }
  const ModelParams& p = model.params();
  const int n = traj.vehicles();
  AmplificationReport report;
  report.n = n;
  report.alpha = spec.alpha;
  report.omega_bar = spec.omega_bar;
  report.window = traj.empty() ? 0.0 : traj.time(traj.size() - 1);
  std::vector<double> speed_sup(n - 1, 0.0), force_sup(n - 1, 0.0);
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const auto s = traj.spacings(k);
    const auto v = traj.speeds(k);
    for (int j = 0; j + 1 < n; ++j) {
      speed_sup[j] = std::max(speed_sup[j], std::abs(v[j + 1] - p.v_star));
      force_sup[j] = std::max(force_sup[j], std::abs(model.potential_grad(s[j])));
    }
  }
  // |d| is exactly |alpha| for a sinusoid; sampled peaks would undershoot.
  const double norm = std::abs(spec.alpha);
  for (int j = 0; j + 1 < n; ++j) {
    report.gamma.push_back(speed_sup[j] / norm);
    report.delta.push_back(force_sup[j] / norm);
  }
  return report;
}

const char* to_string(Controller c) { return c == Controller::inviscid ? "inviscid" : "ftl"; }

std::vector<SweepCell> sweep(const SweepGrid& grid, const ModelParams& base, const FtLParams& ftl,
                             const SweepSettings& settings, Exec exec) {
  std::vector<SweepCell> cells;
  for (Controller c : grid.controllers) {
    for (int n : grid.sizes) {
      for (double w : grid.omega_bars) {
        SweepCell cell;
        cell.controller = c;
        cell.n = n;
        cell.omega_bar = w;
        cell.alpha = grid.alpha;
        cells.push_back(cell);
      }
    }
  }

  const long count = static_cast<long>(cells.size());
#pragma omp parallel for schedule(dynamic, 1) if (use_threads(exec))
  for (long idx = 0; idx < count; ++idx) {
    SweepCell& cell = cells[static_cast<std::size_t>(idx)];
    try {
      ModelParams params = base;
      params.n = cell.n;
      const Model model(params);
      const DisturbanceSpec spec{cell.alpha, cell.omega_bar};
      const IntegratorConfig config{settings.dt,
                                    measurement_horizon(cell.omega_bar) * settings.horizon_scale,
                                    settings.record_stride};
      const Trajectory traj = cell.controller == Controller::inviscid
                                  ? simulate_disturbed_inviscid(model, spec, config)
                                  : simulate_ftl(ftl, params, spec, config, settings.ftl_start);
      cell.report = amplification_factors(traj, model, spec);
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
  }
  return cells;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepCell>& cells) {
  os << "model,n,omega_bar,alpha,i,gamma,delta\n";
  for (const auto& cell : cells) {
    if (!cell.report) continue;
    const auto& r = *cell.report;
    for (std::size_t j = 0; j < r.gamma.size(); ++j) {
      os << to_string(cell.controller) << ',' << cell.n << ',' << csv::format(cell.omega_bar)
         << ',' << csv::format(cell.alpha) << ',' << j + 2 << ',' << csv::format(r.gamma[j])
         << ',' << csv::format(r.delta[j]) << '\n';
    }
  }
}

void write_sweep_summary(std::ostream& os, const std::vector<SweepCell>& cells) {
  os << "model,n,omega_bar,gamma_nn,delta_nn,status\n";
  for (const auto& cell : cells) {
    os << to_string(cell.controller) << ',' << cell.n << ',' << csv::format(cell.omega_bar) << ',';
    if (cell.report) {
      os << csv::format(cell.report->gamma_last()) << ',' << csv::format(cell.report->delta_last())
         << ",ok\n";
    } else {
      os << "nan,nan,failed: " << cell.error << '\n';
    }
  }
}

}  // namespace platoon
