#include "platoon/model.hpp"

#include <cmath>
#include <string>

#include "platoon/errors.hpp"

namespace platoon {

void ModelParams::validate() const {
  auto fail = [](const std::string& what) { throw PreconditionError("ModelParams: " + what); };
  if (!(mu > 0)) fail("mu > 0");
  if (!(v_star > 0)) fail("v_star > 0");
  if (!(v_star < v_max)) fail("v_star < v_max");
  if (!(cap_L > 0)) fail("cap_L > 0");
  if (!(lambda > cap_L)) fail("lambda > cap_L");
  if (!(epsilon > 0)) fail("epsilon > 0");
  if (n < 2) fail("n >= 2");
}

ModelParams ModelParams::example1() {
  return ModelParams{.mu = 0.5, .v_star = 30.0, .v_max = 35.0, .cap_L = 5.0,
                     .lambda = 20.0, .epsilon = 0.2, .n = 6};
}

ModelParams ModelParams::disturbance_setup(int n) {
  return ModelParams{.mu = 2.0, .v_star = 30.0, .v_max = 35.0, .cap_L = 5.1,
                     .lambda = 61.0, .epsilon = 2.0, .n = n};
}

CubicPotential::CubicPotential(double cap_L, double lambda) : cap_L_(cap_L), lambda_(lambda) {
  if (!(cap_L > 0 && lambda > cap_L)) {
    throw PreconditionError("CubicPotential: requires lambda > cap_L > 0");
  }
}

namespace {

void guard_collision(double s, double cap_L) {
  if (!(s > cap_L)) {
    throw DomainError("potential evaluated in the collision region s <= L (s = " +
                      std::to_string(s) + ")");
  }
}

}  // namespace

double CubicPotential::value(double s) const {
  guard_collision(s, cap_L_);
  if (s >= lambda_) return 0.0;
  const double a = lambda_ - s;
  const double b = s - cap_L_;
  return a * a * a / b;
}

double CubicPotential::grad(double s) const {
  guard_collision(s, cap_L_);
  if (s >= lambda_) return 0.0;
  const double a = lambda_ - s;
  const double b = s - cap_L_;
  return -a * a * (3.0 * b + a) / (b * b);
}

double CubicPotential::hess(double s) const {
  guard_collision(s, cap_L_);
  if (s >= lambda_) return 0.0;
  const double r = (lambda_ - s) / (s - cap_L_);
  return 6.0 * r + 6.0 * r * r + 2.0 * r * r * r;
}

Softening::Softening(double epsilon) : epsilon_(epsilon) {
  if (!(epsilon > 0)) throw PreconditionError("Softening: epsilon > 0");
}

double Softening::value(double x) const {
  if (x <= -epsilon_) return 0.0;
  if (x < 0.0) return (x + epsilon_) * (x + epsilon_) / (2.0 * epsilon_);
  return (epsilon_ * epsilon_ + 2.0 * epsilon_ * x) / (2.0 * epsilon_);
}

double Softening::derivative(double x) const {
  if (x <= -epsilon_) return 0.0;
  if (x < 0.0) return (x + epsilon_) / epsilon_;
  return 1.0;
}

std::vector<double> flatten(const MicroState& state) {
  std::vector<double> y;
  y.reserve(state.s.size() + state.v.size());
  y.insert(y.end(), state.s.begin(), state.s.end());
  y.insert(y.end(), state.v.begin(), state.v.end());
  return y;
}

MicroState unflatten(std::span<const double> y, int n) {
  MicroState state;
  state.s.assign(y.begin(), y.begin() + (n - 1));
  state.v.assign(y.begin() + (n - 1), y.begin() + (2 * n - 1));
  return state;
}

Model::Model(const ModelParams& params)
    : Model(params, std::make_shared<CubicPotential>(params.cap_L, params.lambda)) {}

Model::Model(const ModelParams& params, std::shared_ptr<const Potential> potential)
    : params_(params), potential_(std::move(potential)), softening_(params.epsilon) {
  params_.validate();
  if (!potential_) throw PreconditionError("Model: null potential");
  const double tol = 1e-12 * params_.lambda;
  if (std::abs(potential_->collision_distance() - params_.cap_L) > tol ||
      std::abs(potential_->interaction_range() - params_.lambda) > tol) {
    throw PreconditionError("Model: potential range does not match cap_L/lambda");
  }
}

double Model::potential_value(double s) const { return potential_->value(s); }
double Model::potential_grad(double s) const { return potential_->grad(s); }
double Model::potential_hess(double s) const { return potential_->hess(s); }

double Model::gain_g(double z) const {
  const double vs = params_.v_star;
  const double vm = params_.v_max;
  return vm * softening_.value(z) / (vs * (vm - vs)) - z / vs;
}

double Model::omega_rate() const { return params_.mu + gain_g(0.0); }

void Model::require_in_omega(const MicroState& state) const {
  const int n = params_.n;
  if (state.vehicles() != n || static_cast<int>(state.s.size()) != n - 1) {
    throw DomainError("state size does not match platoon size n = " + std::to_string(n));
  }
  for (std::size_t i = 0; i < state.s.size(); ++i) {
    if (!(state.s[i] > params_.cap_L)) {
      throw DomainError("spacing s_" + std::to_string(i + 2) + " <= L (outside Omega)");
    }
  }
  for (std::size_t i = 0; i < state.v.size(); ++i) {
    const double v = state.v[i];
    if (!(v >= -kSpeedSlack && v <= params_.v_max + kSpeedSlack)) {
      throw DomainError("speed v_" + std::to_string(i + 1) + " outside [0, v_max] (outside Omega)");
    }
  }
}

void Model::gains_flat(std::span<const double> s, std::span<double> out) const {
  const int n = params_.n;
  double grad_prev = 0.0;
  for (int j = 0; j < n; ++j) {
    const double grad_next = j < n - 1 ? potential_->grad(s[j]) : 0.0;
    out[j] = params_.mu + gain_g(grad_prev - grad_next);
    grad_prev = grad_next;
  }
}

std::vector<double> Model::controller_gains(const MicroState& state) const {
  require_in_omega(state);
  std::vector<double> k(params_.n);
  gains_flat(state.s, k);
  return k;
}

void Model::rhs(std::span<const double> y, std::span<double> dy) const {
  const int n = params_.n;
  const double* s = y.data();
  const double* v = y.data() + (n - 1);
  double* ds = dy.data();
  double* dv = dy.data() + (n - 1);
  const double v_star = params_.v_star;

  double grad_prev = 0.0;
  for (int j = 0; j < n; ++j) {
    const double grad_next = j < n - 1 ? potential_->grad(s[j]) : 0.0;
    // Net spacing force on vehicle j: V'(s_j) - V'(s_{j+1}) with the
    // missing neighbour terms dropped for the leader and the last vehicle.
    const double force = grad_prev - grad_next;
    const double k = params_.mu + gain_g(force);
    dv[j] = -k * (v[j] - v_star) + force;
    if (j > 0) ds[j - 1] = v[j - 1] - v[j];
    grad_prev = grad_next;
  }
}

MicroState Model::micro_vector_field(const MicroState& state) const {
  require_in_omega(state);
  const auto y = flatten(state);
  std::vector<double> dy(y.size());
  rhs(y, dy);
  return unflatten(dy, params_.n);
}

}  // namespace platoon
