#include "platoon/lyapunov.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <ostream>
#include <random>

#include "platoon/csv.hpp"
#include "platoon/errors.hpp"
#include "platoon/rk4.hpp"

namespace platoon {

void LyapunovConfig::validate() const {
  if (!(beta > 0)) throw PreconditionError("LyapunovConfig: beta > 0");
  if (!(fd_dt > 0)) throw PreconditionError("LyapunovConfig: fd_dt > 0");
  if (envelope_samples < 64) throw PreconditionError("LyapunovConfig: envelope_samples >= 64");
}

double energy_H(const Model& model, const MicroState& state) {
  model.require_in_omega(state);
  const double v_star = model.params().v_star;
  double kinetic = 0.0;
  for (double v : state.v) kinetic += (v - v_star) * (v - v_star);
  double potential = 0.0;
  for (double s : state.s) potential += model.potential_value(s);
  return 0.5 * kinetic + potential;
}

double energy_H_rate(const Model& model, const MicroState& state) {
  const auto k = model.controller_gains(state);
  const double v_star = model.params().v_star;
  double rate = 0.0;
  for (std::size_t i = 0; i < k.size(); ++i) {
    rate -= k[i] * (state.v[i] - v_star) * (state.v[i] - v_star);
  }
  return rate;
}

double v_inverse(const Potential& potential, double r) {
  const double cap_L = potential.collision_distance();
  const double lambda = potential.interaction_range();
  if (!(r > 0)) return lambda;
  // Invariant: V(lo) >= r > V(hi); V(L+) is +inf.
  double lo = cap_L;
  double hi = lambda;
  while (true) {
    const double mid = lo + 0.5 * (hi - lo);
    if (mid <= lo || mid >= hi) break;
    if (potential.value(mid) >= r) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo > cap_L ? lo : hi;
}

namespace {

// Sample points on (L, lambda]: a geometric cluster towards L merged with a
// uniform grid.
std::vector<double> envelope_grid(double cap_L, double lambda, int samples) {
  std::vector<double> grid;
  grid.reserve(2 * samples);
  const double width = lambda - cap_L;
  const double log_min = std::log(1e-9);
  for (int j = 0; j < samples; ++j) {
    const double frac = static_cast<double>(j) / (samples - 1);
    grid.push_back(cap_L + width * std::exp(log_min * (1.0 - frac)));
    grid.push_back(cap_L + width * frac);
  }
  grid.back() = lambda;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  while (!grid.empty() && !(grid.front() > cap_L)) grid.erase(grid.begin());
  grid.back() = lambda;
  return grid;
}

bool non_increasing(const std::vector<double>& values) {
  for (std::size_t j = 1; j < values.size(); ++j) {
    if (values[j] > values[j - 1] * (1.0 + 1e-12) + 1e-300) return false;
  }
  return true;
}

std::vector<double> suffix_max(const std::vector<double>& values) {
  std::vector<double> out(values.size());
  double running = 0.0;
  for (std::size_t j = values.size(); j-- > 0;) {
    running = std::max(running, values[j]);
    out[j] = running;
  }
  return out;
}

}  // namespace

CertificateTables::CertificateTables(const Model& model, LyapunovConfig config)
    : model_(model), config_(config) {
  config_.validate();
  const int n = model_.vehicles();
  if (n > 250) {
    throw SizeError("CertificateTables: 4^(2n) exhausts double precision for n > 250");
  }
  pow4_.resize(2 * n + 1);
  pow4_[0] = 1.0;
  for (int i = 1; i <= 2 * n; ++i) pow4_[i] = 4.0 * pow4_[i - 1];

  const auto& V = model_.potential();
  grid_ = envelope_grid(V.collision_distance(), V.interaction_range(), config_.envelope_samples);
  std::vector<double> abs_grad(grid_.size()), hess(grid_.size()), ratios(grid_.size());
  for (std::size_t j = 0; j < grid_.size(); ++j) {
    abs_grad[j] = std::abs(V.grad(grid_[j]));
    hess[j] = V.hess(grid_[j]);
    ratios[j] = ratio(grid_[j]);
  }
  b1_suffix_ = suffix_max(abs_grad);
  b2_suffix_ = suffix_max(hess);
  h_suffix_ = suffix_max(ratios);
  if (!config_.force_dense_envelopes) {
    b1_fast_ = non_increasing(abs_grad);
    b2_fast_ = non_increasing(hess);
    h_fast_ = non_increasing(ratios);
  }
}

double CertificateTables::ratio(double d) const {
  const auto& V = model_.potential();
  if (d >= V.interaction_range()) return 0.0;
  const double value = V.value(d);
  // (V')^2 / V -> 2 V'' as d -> lambda-, which itself tends to 0.
  if (value < 1e-30) return 2.0 * V.hess(d);
  const double grad = V.grad(d);
  return grad * grad / value;
}

double CertificateTables::suffix_lookup(const std::vector<double>& grid,
                                        const std::vector<double>& suffix, double q) {
  const auto it = std::lower_bound(grid.begin(), grid.end(), q);
  if (it == grid.end()) return 0.0;
  return suffix[static_cast<std::size_t>(it - grid.begin())];
}

double CertificateTables::rho(double r) const { return v_inverse(model_.potential(), r); }

double CertificateTables::b1(double q) const {
  const auto& V = model_.potential();
  if (!(q > V.collision_distance())) throw DomainError("envelope_b1: q <= L");
  if (q >= V.interaction_range()) return 0.0;
  const double at_q = std::abs(V.grad(q));
  if (b1_fast_) return at_q;
  return std::max(at_q, suffix_lookup(grid_, b1_suffix_, q));
}

double CertificateTables::b2(double q) const {
  const auto& V = model_.potential();
  if (!(q > V.collision_distance())) throw DomainError("envelope_b2: q <= L");
  if (q >= V.interaction_range()) return 0.0;
  const double at_q = V.hess(q);
  if (b2_fast_) return at_q;
  return std::max(at_q, suffix_lookup(grid_, b2_suffix_, q));
}

double CertificateTables::h(double q) const {
  const auto& V = model_.potential();
  if (!(q > V.collision_distance())) throw DomainError("ratio envelope: q <= L");
  if (q >= V.interaction_range()) return 0.0;
  const double at_q = ratio(q);
  if (h_fast_) return at_q;
  return std::max(at_q, suffix_lookup(grid_, h_suffix_, q));
}

double CertificateTables::gain_cap(double c) const {
  // g is convex for the shipped softening, so its max on [-c, c] sits at an end.
  if (!config_.force_dense_envelopes) return std::max(model_.gain_g(-c), model_.gain_g(c));
  const int m = config_.envelope_samples;
  double best = std::max(model_.gain_g(-c), model_.gain_g(c));
  for (int j = 0; j < m; ++j) {
    const double z = -c + 2.0 * c * static_cast<double>(j) / (m - 1);
    best = std::max(best, model_.gain_g(z));
  }
  return best;
}

CertificateTables::Level CertificateTables::at(double r) const {
  const ModelParams& p = model_.params();
  const int n = p.n;
  Level level;
  level.rho = rho(r);
  level.gamma = h(level.rho);
  level.phi = p.mu + gain_cap(2.0 * b1(level.rho));
  level.phi_tilde = b2(level.rho);
  level.R = 2.0 + 0.5 * pow4_[2 * n] * level.gamma +
            pow4_[n] * (level.phi + 3.5 / p.mu * level.phi_tilde) + config_.beta / p.mu;
  level.kappa = 1.0 + level.R + 0.5 * pow4_[2 * n] * level.gamma;
  return level;
}

double CertificateTables::gamma(double r) const { return h(rho(r)); }
double CertificateTables::phi(double r) const { return at(r).phi; }
double CertificateTables::phi_tilde(double r) const { return b2(rho(r)); }
double CertificateTables::weight_R(double r) const { return at(r).R; }
double CertificateTables::kappa(double r) const { return at(r).kappa; }

namespace {

double cross_term(const CertificateTables& tables, const MicroState& state) {
  const Model& model = tables.model();
  const double v_star = model.params().v_star;
  double sum = 0.0;
  for (std::size_t j = 0; j < state.s.size(); ++j) {
    const int i = static_cast<int>(j) + 2;
    sum += tables.weight(i) * model.potential_grad(state.s[j]) * (state.v[j + 1] - v_star);
  }
  return sum;
}

struct WParts {
  double H;
  double W;
  double kappaH;
};

WParts evaluate_W(const CertificateTables& tables, const MicroState& state) {
  const double H = energy_H(tables.model(), state);
  const auto level = tables.at(H);
  return {H, level.R * H - cross_term(tables, state), level.kappa * H};
}

}  // namespace

double strict_W(const CertificateTables& tables, const MicroState& state) {
  return evaluate_W(tables, state).W;
}

double decay_bound(const CertificateTables& tables, const MicroState& state) {
  const Model& model = tables.model();
  const ModelParams& p = model.params();
  model.require_in_omega(state);
  double kinetic = 0.0;
  for (double v : state.v) kinetic += (v - p.v_star) * (v - p.v_star);
  double forces = 0.0;
  for (std::size_t j = 0; j < state.s.size(); ++j) {
    const double g = model.potential_grad(state.s[j]);
    forces += tables.weight(static_cast<int>(j) + 2) * g * g;
  }
  return -tables.config().beta * p.mu * kinetic - 0.125 * forces;
}

CertificateReport audit_trajectory(const Trajectory& traj, const CertificateTables& tables,
                                   Exec exec) {
  const double fd_dt = tables.config().fd_dt;
  if (traj.record_interval() > 10.0 * fd_dt * (1.0 + 1e-9)) {
    throw PreconditionError(
        "audit_trajectory: snapshots too sparse (record_stride * dt must be <= 10 fd_dt)");
  }
  const Model& model = tables.model();
  const int n = model.vehicles();
  if (traj.vehicles() != n) throw PreconditionError("audit_trajectory: platoon size mismatch");

  CertificateReport report;
  if (traj.size() < 3) return report;
  const long interior = static_cast<long>(traj.size()) - 2;
  report.rows.resize(static_cast<std::size_t>(interior));

  std::exception_ptr failure;
#pragma omp parallel if (use_threads(exec))
  {
    Rk4Workspace ws(2 * n - 1);
    std::vector<double> ahead(2 * n - 1), behind(2 * n - 1);
    auto f = [&model](double, std::span<const double> y, std::span<double> dy) {
      model.rhs(y, dy);
    };
#pragma omp for schedule(static)
    for (long k = 0; k < interior; ++k) {
      try {
        const std::size_t idx = static_cast<std::size_t>(k) + 1;
        const auto row = traj.row(idx);
        const auto state = traj.snapshot(idx);
        const auto here = evaluate_W(tables, state);
        rk4_step(f, 0.0, row, fd_dt, std::span<double>(ahead), ws);
        rk4_step(f, 0.0, row, -fd_dt, std::span<double>(behind), ws);
        const double w_ahead = strict_W(tables, unflatten(ahead, n));
        const double w_behind = strict_W(tables, unflatten(behind, n));
        AuditRow& out = report.rows[static_cast<std::size_t>(k)];
        out.t = traj.time(idx);
        out.H = here.H;
        out.W = here.W;
        out.kappaH = here.kappaH;
        out.dWdt = (w_ahead - w_behind) / (2.0 * fd_dt);
        out.rhs_bound = decay_bound(tables, state);
        const double tol = 1e-3 * std::abs(out.rhs_bound) + 1e-6;
        out.margin = out.rhs_bound + tol - out.dWdt;
      } catch (...) {
#pragma omp critical(platoon_audit_failure)
        if (!failure) failure = std::current_exception();
      }
    }
  }
  if (failure) std::rethrow_exception(failure);

  report.worst_lower_margin = std::numeric_limits<double>::infinity();
  report.worst_upper_margin = std::numeric_limits<double>::infinity();
  report.worst_decay_margin = std::numeric_limits<double>::infinity();
  for (const auto& row : report.rows) {
    const double lower = row.W - row.H;
    const double upper = row.kappaH - row.W;
    report.worst_lower_margin = std::min(report.worst_lower_margin, lower);
    report.worst_upper_margin = std::min(report.worst_upper_margin, upper);
    report.worst_decay_margin = std::min(report.worst_decay_margin, row.margin);
    if (lower < 0 || upper < 0) ++report.sandwich_violations;
    if (row.margin < 0) ++report.decay_violations;
  }
  return report;
}

void write_audit_csv(std::ostream& os, const CertificateReport& report) {
  const std::vector<std::string> header{"t", "H", "W", "kappaH", "dWdt", "rhs_bound", "margin"};
  csv::write_header(os, header);
  for (const auto& r : report.rows) {
    const double values[] = {r.t, r.H, r.W, r.kappaH, r.dWdt, r.rhs_bound, r.margin};
    csv::write_row(os, values);
  }
}

ClaimReport check_claims(const CertificateTables& tables, std::span<const MicroState> states,
                         Exec exec) {
  const Model& model = tables.model();
  const long count = static_cast<long>(states.size());
  std::vector<ClaimReport> per_state(states.size());

  std::exception_ptr failure;
#pragma omp parallel for schedule(static) if (use_threads(exec))
  for (long k = 0; k < count; ++k) {
    try {
      const MicroState& state = states[static_cast<std::size_t>(k)];
      ClaimReport& out = per_state[static_cast<std::size_t>(k)];
      const auto parts = evaluate_W(tables, state);
      const auto level = tables.at(parts.H);
      for (double k_i : model.controller_gains(state)) {
        if (k_i > level.phi) ++out.gain_violations;
      }
      for (double s : state.s) {
        if (model.potential_hess(s) > level.phi_tilde) ++out.hess_violations;
        const double g = model.potential_grad(s);
        if (g * g > level.gamma * model.potential_value(s)) ++out.ratio_violations;
      }
      if (parts.W < parts.H || parts.W > parts.kappaH) ++out.sandwich_violations;
    } catch (...) {
#pragma omp critical(platoon_claim_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  ClaimReport total;
  total.states = count;
  for (const auto& r : per_state) {
    total.gain_violations += r.gain_violations;
    total.hess_violations += r.hess_violations;
    total.ratio_violations += r.ratio_violations;
    total.sandwich_violations += r.sandwich_violations;
  }
  return total;
}

std::vector<MicroState> random_omega_states(const ModelParams& params, int count,
                                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto unit = [&rng] {
    double u = 0.0;
    do {
      u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    } while (u == 0.0);
    return u;
  };
  const double width = params.lambda - params.cap_L;
  std::vector<MicroState> states;
  states.reserve(static_cast<std::size_t>(count));
  for (int c = 0; c < count; ++c) {
    MicroState state;
    for (int i = 0; i + 1 < params.n; ++i) {
      const double u = unit();
      switch (rng() % 3) {
        case 0: state.s.push_back(params.cap_L + width * std::max(u * u * u, 1e-9)); break;
        case 1: state.s.push_back(params.cap_L + width * u); break;
        default: state.s.push_back(params.lambda + 10.0 * u); break;
      }
    }
    for (int i = 0; i < params.n; ++i) state.v.push_back(params.v_max * unit());
    states.push_back(std::move(state));
  }
  return states;
}

}  // namespace platoon
