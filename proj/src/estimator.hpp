#pragma once

#include <vector>

#include "dynamics.hpp"
#include "series.hpp"

namespace pcsrod {

struct DifferentiateOptions {
  double cutoff_hz = 20.0;  // zero-phase low-pass before differencing
};

// Low-pass + central differences over strains (and the base pose when it
// moves); filter-transient frames at both ends are marked Excluded.
FrameSeries differentiate(const FrameSeries& series,
                          const DifferentiateOptions& opts = {});

struct PhaseOptions {
  double static_rate_threshold = 1e-3;  // on the strain-rate inf norm
  // acceleration guard so a load-release instant cannot pass as static;
  // negative = rate threshold times the sample rate
  double static_acc_threshold = -1.0;
  double min_hold_s = 0.5;
};

// Splits non-excluded frames into Static holds and Dynamic transients.
void label_phases(FrameSeries& series, const PhaseOptions& opts = {});

// Lower-partition residual of the equation of motion,
//   Gamma = (M qdd + b - J^T f) restricted to the strain rows,
// equal to K dq - D qdot on active strain coordinates for the true
// parameters. Masked rows carry constraint reactions instead.
VecX residual_gamma(const RodModel& model, const RodState& state,
                    const VecX& qdd, const Vec6& wrench_world, double wrench_s,
                    const Vec3& gravity);

enum class EstimationPhase { Stiffness, Damping };

struct EstimationOptions {
  EstimationPhase phase = EstimationPhase::Stiffness;
  Vec3 gravity = Vec3(0, 0, -9.81);
  std::vector<std::pair<int, int>> exclude;  // (segment, axis) pairs
  double excitation_threshold = 1e-6;
  std::vector<double> dataset_weights;  // scalar W_l per dataset; default 1
};

struct CoefficientEstimate {
  int segment = 0;
  int axis = 0;
  double value = 0.0;
  double residual_rms = 0.0;
  double excitation = 0.0;  // weighted norm of the regressor column
  bool identifiable = false;
  bool excluded = false;
};

struct EstimationResult {
  ViscoElasticity ve;
  std::vector<CoefficientEstimate> coefficients;
  int frames_used = 0;
};

// Two-phase identification. Stiffness uses Static frames with rates and
// accelerations zeroed; Damping requires the previously estimated stiffness
// and uses Dynamic frames. With diagonal matrices the problem decouples into
// per-coordinate nonnegative least squares (active-set). Unidentifiable
// coefficients are filled from the material prior (stiffness) or zero
// (damping) and flagged, never silently.
EstimationResult estimate(const RodModel& model,
                          const std::vector<const FrameSeries*>& datasets,
                          const EstimationOptions& opts,
                          const ViscoElasticity* known_stiffness = nullptr);

// Lawson-Hanson active-set nonnegative least squares.
VecX nnls(const MatX& a, const VecX& b, double tol = -1.0);

struct RmseResult {
  double rmse = 0.0;
  // percent of the measured data range, computed on the per-frame Euclidean
  // norm channel
  double percent_of_range = 0.0;
};

RmseResult rmse(const MatX& measured, const MatX& estimated);

// Both sides of the lower-partition balance
//   J_s^T f  vs  (M qdd + b)_s - (K dq - D qdot)
// over active strain coordinates, frame by frame, for plotting plus an RMSE.
struct ForceCheck {
  std::vector<int> coords;  // active strain coordinate indices
  MatX measured;            // J_s^T f rows
  MatX estimated;
  RmseResult error;
};

ForceCheck generalized_force_check(const RodModel& model,
                                   const ViscoElasticity& ve,
                                   const FrameSeries& series,
                                   const Vec3& gravity);

}  // namespace pcsrod
