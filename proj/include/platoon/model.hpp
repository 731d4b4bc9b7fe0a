#pragma once

#include <memory>
#include <span>
#include <vector>

namespace platoon {

/// Platoon constants. Units: mu [1/s], speeds [m/s], distances [m].
struct ModelParams {
  double mu = 0.5;
  double v_star = 30.0;
  double v_max = 35.0;
  double cap_L = 5.0;    // collision distance
  double lambda = 20.0;  // interaction range
  double epsilon = 0.2;  // softening width of f
  int n = 6;             // vehicle count

  /// Throws PreconditionError naming the first violated invariant.
  void validate() const;

  /// Parameters of the asymptotic-stability example (n = 6, L = 5, lambda = 20).
  static ModelParams example1();
  /// Parameters of the disturbance benchmark (L = 5.1, lambda = 61, mu = 2).
  static ModelParams disturbance_setup(int n);

  bool operator==(const ModelParams&) const = default;
};

/// Repulsive inter-vehicle potential V on (L, inf), vanishing on [lambda, inf).
/// Implementations provide analytic first and second derivatives.
class Potential {
 public:
  virtual ~Potential() = default;

  virtual double value(double s) const = 0;
  virtual double grad(double s) const = 0;
  virtual double hess(double s) const = 0;
  virtual double collision_distance() const = 0;
  virtual double interaction_range() const = 0;
};

/// V(q) = (lambda - q)^3 / (q - L) on (L, lambda], 0 beyond.
class CubicPotential final : public Potential {
 public:
  CubicPotential(double cap_L, double lambda);

  double value(double s) const override;
  double grad(double s) const override;
  double hess(double s) const override;
  double collision_distance() const override { return cap_L_; }
  double interaction_range() const override { return lambda_; }

 private:
  double cap_L_;
  double lambda_;
};

/// C^1 convex softening f with f(x) >= max(x, 0):
///   0 for x <= -eps, (x + eps)^2 / (2 eps) on (-eps, 0), eps/2 + x for x >= 0.
class Softening {
 public:
  explicit Softening(double epsilon);

  double value(double x) const;
  double derivative(double x) const;
  double epsilon() const { return epsilon_; }

 private:
  double epsilon_;
};

/// Spacings s_2..s_n (s[0] is s_2) and speeds v_1..v_n (v[0] is v_1).
struct MicroState {
  std::vector<double> s;
  std::vector<double> v;

  int vehicles() const { return static_cast<int>(v.size()); }
  bool operator==(const MicroState&) const = default;
};

/// Flat layout used by the integrators: [s_2..s_n, v_1..v_n].
std::vector<double> flatten(const MicroState& state);
MicroState unflatten(std::span<const double> y, int n);

/// Speeds produced by the integrators may sit a rounding error outside
/// [0, v_max]; the certificate functions accept that slack.
inline constexpr double kSpeedSlack = 1e-9;

/// The closed-loop bidirectional platoon: constants, potential and softening.
class Model {
 public:
  /// Uses the cubic potential built from params.cap_L and params.lambda.
  explicit Model(const ModelParams& params);
  /// Custom potential; its collision distance and range must match params.
  Model(const ModelParams& params, std::shared_ptr<const Potential> potential);

  const ModelParams& params() const { return params_; }
  const Potential& potential() const { return *potential_; }
  const Softening& softening() const { return softening_; }
  int vehicles() const { return params_.n; }

  // Guarded potential: throws DomainError for s <= L.
  double potential_value(double s) const;
  double potential_grad(double s) const;
  double potential_hess(double s) const;

  double softening_value(double x) const { return softening_.value(x); }
  /// g(z) = v_max f(z) / (v*(v_max - v*)) - z / v*.
  double gain_g(double z) const;
  /// omega = mu + g(0): the relaxation rate when no spacing is compressed.
  double omega_rate() const;

  std::vector<double> controller_gains(const MicroState& state) const;
  MicroState micro_vector_field(const MicroState& state) const;

  /// Throws DomainError unless min s > L and speeds lie in
  /// [-kSpeedSlack, v_max + kSpeedSlack].
  void require_in_omega(const MicroState& state) const;

  /// Unchecked right-hand side on the flat layout. Throws DomainError only
  /// when a spacing reaches the collision region.
  void rhs(std::span<const double> y, std::span<double> dy) const;

  /// Gains k_1..k_n written into `out` from the spacing block of a flat state.
  void gains_flat(std::span<const double> s, std::span<double> out) const;

 private:
  ModelParams params_;
  std::shared_ptr<const Potential> potential_;
  Softening softening_;
};

}  // namespace platoon
