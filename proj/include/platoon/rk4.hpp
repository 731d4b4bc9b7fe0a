#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "platoon/errors.hpp"

namespace platoon {

/// Scratch buffers for one classical RK4 integrator instance.
struct Rk4Workspace {
  explicit Rk4Workspace(std::size_t dim)
      : k1(dim), k2(dim), k3(dim), k4(dim), stage(dim), out(dim) {}

  std::vector<double> k1, k2, k3, k4, stage, out;
};

/// One classical fourth-order Runge-Kutta step of size h (h may be negative).
/// `f(t, y, dy)` evaluates the vector field.
template <class Rhs>
void rk4_step(Rhs& f, double t, std::span<const double> y, double h, std::span<double> out,
              Rk4Workspace& ws) {
  const std::size_t m = y.size();
  f(t, y, std::span<double>(ws.k1));
  for (std::size_t i = 0; i < m; ++i) ws.stage[i] = y[i] + 0.5 * h * ws.k1[i];
  f(t + 0.5 * h, std::span<const double>(ws.stage), std::span<double>(ws.k2));
  for (std::size_t i = 0; i < m; ++i) ws.stage[i] = y[i] + 0.5 * h * ws.k2[i];
  f(t + 0.5 * h, std::span<const double>(ws.stage), std::span<double>(ws.k3));
  for (std::size_t i = 0; i < m; ++i) ws.stage[i] = y[i] + h * ws.k3[i];
  f(t + h, std::span<const double>(ws.stage), std::span<double>(ws.k4));
  for (std::size_t i = 0; i < m; ++i) {
    out[i] = y[i] + (h / 6.0) * (ws.k1[i] + 2.0 * ws.k2[i] + 2.0 * ws.k3[i] + ws.k4[i]);
  }
}

inline constexpr int kMaxHalvings = 20;

namespace detail {

template <class Rhs, class InDomain>
bool try_rk4_step(Rhs& f, InDomain& in_domain, double t, std::span<const double> y, double h,
                  Rk4Workspace& ws) {
  try {
    rk4_step(f, t, y, h, std::span<double>(ws.out), ws);
  } catch (const DomainError&) {
    return false;
  }
  return in_domain(std::span<const double>(ws.out));
}

}  // namespace detail

/// Advances y over [t, t + h]. A step whose result (or any stage) leaves the
/// domain is replaced by two half steps, recursively, at most kMaxHalvings
/// levels deep.
template <class Rhs, class InDomain>
void advance_with_halving(Rhs& f, InDomain& in_domain, double t, std::vector<double>& y, double h,
                          Rk4Workspace& ws, int halvings = 0) {
  if (detail::try_rk4_step(f, in_domain, t, y, h, ws)) {
    y.swap(ws.out);
    return;
  }
  if (halvings == kMaxHalvings) {
    throw IntegrationFailure("state left the admissible set after " +
                             std::to_string(kMaxHalvings) + " step halvings at t = " +
                             std::to_string(t) + "; dt is far too large");
  }
  advance_with_halving(f, in_domain, t, y, 0.5 * h, ws, halvings + 1);
  advance_with_halving(f, in_domain, t + 0.5 * h, y, 0.5 * h, ws, halvings + 1);
}

/// Fixed-step driver. Calls `record(index, t, y)` at t = 0 and after every
/// `stride` steps; times are computed as products, not running sums.
template <class Rhs, class InDomain, class Record>
void run_fixed_step(Rhs& f, InDomain& in_domain, std::vector<double> y, double dt, long steps,
                    int stride, Record&& record) {
  Rk4Workspace ws(y.size());
  record(0L, 0.0, std::span<const double>(y));
  for (long k = 1; k <= steps; ++k) {
    const double t = static_cast<double>(k - 1) * dt;
    advance_with_halving(f, in_domain, t, y, dt, ws);
    if (k % stride == 0) {
      record(k / stride, static_cast<double>(k) * dt, std::span<const double>(y));
    }
  }
}

}  // namespace platoon
