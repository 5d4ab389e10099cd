#pragma once

#include <vector>

#include "rod_model.hpp"

namespace pcsrod {

struct MarkerTarget {
  MarkerAttachment attach;
  Vec3 position = Vec3::Zero();       // measured world position
  Mat3 weight = Mat3::Identity();     // PSD row weight
  bool valid = true;                  // false drops the rows for this frame
};

struct IkOptions {
  double energy_weight = 1e-4;  // alpha on the elastic-energy term
  double lambda_init = 1e-3;    // initial Marquardt damping
  int max_iters = 100;
  double step_tol = 1e-10;
  double residual_tol = 1e-12;
  bool base_locked = false;     // pin the base pose (clamped rigs)
  int min_visible_markers = 3;
};

struct IkProblem {
  const RodModel* model = nullptr;
  std::vector<MarkerTarget> targets;
  IkOptions options;
  RodState initial_state;
};

struct IkResult {
  RodState state;
  int iterations = 0;
  double final_objective = 0.0;
  double marker_rms = 0.0;  // m, unweighted
  bool converged = false;
  bool low_visibility = false;  // fewer visible markers than requested
};

// Segment-wise stiffness prior diag{E Jx, E Jy, E/(2(1+nu)) Jz} * l_i over
// angular strains; 3N x 3N diagonal matrix.
MatX prior_stiffness(const RodModel& model);
VecX prior_stiffness_diagonal(const RodModel& model);

// Objective g and its gradient with respect to the active coordinates
// (full-width layout, inactive entries zero). Exposed for verification.
double ik_objective(const IkProblem& problem, const RodState& state);
VecX ik_gradient(const IkProblem& problem, const RodState& state);

// Damped least squares on the stacked marker + energy residual with
// Marquardt's multiplicative lambda schedule; the base pose update is
// retracted through the exponential map.
IkResult solve_frame(const IkProblem& problem);

// Warm-started per-frame solve over a time-ordered batch of target sets.
std::vector<IkResult> solve_sequence(const RodModel& model,
                                     const std::vector<std::vector<MarkerTarget>>& frames,
                                     const IkOptions& options,
                                     const RodState& initial_state);

}  // namespace pcsrod
