#pragma once

#include <functional>
#include <vector>

#include "rod_model.hpp"
#include "series.hpp"

namespace pcsrod {

// Equation of motion pieces: mass * qdd + bias = [0; tau_s] + J^T f, with
// bias carrying Coriolis and gravity terms. mass is symmetric PSD over the
// full layout and PD on the active coordinates.
struct MassBias {
  MatX mass;
  VecX bias;
};

enum class WrenchFrame { World, Local };

// A wrench (moment, force) acting at a material point, expressed either in
// world axes or in the local frame at that point.
struct Wrench {
  Vec3 moment = Vec3::Zero();
  Vec3 force = Vec3::Zero();
  WrenchFrame frame = WrenchFrame::World;

  Vec6 stacked() const { return make_twist(moment, force); }
  static Wrench FromStacked(const Vec6& v,
                            WrenchFrame frame = WrenchFrame::World) {
    return Wrench{angular_part(v), linear_part(v), frame};
  }
};

struct AppliedWrench {
  double s = 0.0;
  Wrench wrench;
};

// Diagonal segment-wise stiffness and viscosity over angular strains;
// entries are >= 0. Row i carries (x, y, z) coefficients of segment i.
struct ViscoElasticity {
  MatX stiffness;  // N x 3
  MatX damping;    // N x 3

  static ViscoElasticity Zero(int nseg) {
    ViscoElasticity ve;
    ve.stiffness = MatX::Zero(nseg, 3);
    ve.damping = MatX::Zero(nseg, 3);
    return ve;
  }
};

// Mass matrix and bias assembled by per-segment Gauss-Legendre quadrature of
// the cross-section inertia plus the lumped base attachment. Gravity enters
// the bias only.
MassBias mass_bias(const RodModel& model, const RodState& state,
                   const Vec3& gravity);

// Generalized force mass*qdd + bias - sum J^T f by an outward
// velocity/acceleration sweep and an inward force sweep; never forms the
// mass matrix.
VecX inverse_dynamics(const RodModel& model, const RodState& state,
                      const VecX& qdd, const Vec3& gravity,
                      const std::vector<AppliedWrench>& external = {});

// tau_s = K (q_eq - q_s) - D q_s_dot over angular strain coordinates,
// returned on the full coordinate layout (zeros elsewhere).
VecX generalized_elastic_force(const RodModel& model, const ViscoElasticity& ve,
                               const RodState& state);

// Body-frame d(eta)/dt at abscissa s for a given generalized acceleration;
// the time-derivative counterpart of velocity_at (no gravity folded in).
Twist body_acceleration_at(const RodModel& model, const RodState& state,
                           const VecX& qdd, double s);

// Wrench applied by the environment at contact_s, recovered per frame from
// the base partition of the equation of motion. Returned as (moment, force)
// in world axes about the contact point. Requires strain/base accelerations
// in the series.
std::vector<Vec6> estimate_grf(const RodModel& model, const FrameSeries& series,
                               double contact_s, const Vec3& gravity);

struct EnergyBreakdown {
  double kinetic = 0.0;
  double elastic = 0.0;
  double gravitational = 0.0;
  double mechanical() const { return kinetic + elastic; }
};

EnergyBreakdown mechanical_energy(const RodModel& model,
                                  const ViscoElasticity& ve,
                                  const RodState& state, const Vec3& gravity);

enum class Integrator {
  Trapezoid,           // linearly implicit trapezoid on the viscoelastic force
  SemiImplicitEuler,   // linearly implicit Euler (strongly damped, monotone)
  Rk4,                 // explicit; oracle use at small dt
};

struct SimOptions {
  double dt = 1e-4;
  Integrator scheme = Integrator::Trapezoid;
  Vec3 gravity = Vec3(0, 0, -9.81);
  bool base_locked = true;
  // abort when kinetic+elastic energy grows 10x over any 1 s window while
  // no external wrench acts
  bool check_stability = true;
};

// External load profile for simulation and synthetic experiments.
struct LoadSchedule {
  enum class Type { None, Constant, HoldRelease, Chirp };
  Type type = Type::None;
  Vec6 wrench = Vec6::Zero();  // (moment, force) amplitude
  WrenchFrame frame = WrenchFrame::World;
  double s = 0.0;          // application abscissa
  double t_on = 0.0;
  double t_release = 0.2;  // HoldRelease: drop to zero at this time
  double ramp = 0.0;       // optional smooth ramp-in after t_on
  double chirp_f0 = 0.5, chirp_f1 = 5.0;

  std::vector<AppliedWrench> eval(double t) const;
  bool quiescent(double t) const;
};

RodState forward_dynamics_step(const RodModel& model, const ViscoElasticity& ve,
                               const RodState& state,
                               const std::vector<AppliedWrench>& external,
                               const SimOptions& options);

// Static equilibrium of the clamped-base rod under a constant wrench:
// damped Newton on the active strain coordinates of
//   K (q_eq - q) + (J^T f - b(q))_active = 0.
RodState solve_static_equilibrium(const RodModel& model,
                                  const ViscoElasticity& ve,
                                  const std::vector<AppliedWrench>& external,
                                  const Vec3& gravity,
                                  double tol = 1e-10, int max_iters = 100);

struct SimRecord {
  double t = 0.0;
  RodState state;
  VecX qdd;      // full-width generalized acceleration used at t
  Vec6 applied;  // scheduled wrench at t (as given, before frame conversion)
  EnergyBreakdown energy;
};

using SimSink = std::function<void(const SimRecord&)>;

// Fixed-step integration over [0, duration]; the sink receives every
// `decimation`-th step including t = 0 and the final step.
void simulate(const RodModel& model, const ViscoElasticity& ve,
              const RodState& initial, const LoadSchedule& schedule,
              double duration, const SimOptions& options, int decimation,
              const SimSink& sink);

}  // namespace pcsrod
