#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "dataio.hpp"
#include "dynamics.hpp"
#include "estimator.hpp"
#include "ik.hpp"

namespace pcsrod {

struct NoiseSpec {
  double marker_sigma = 0.0;  // m, i.i.d. Gaussian per coordinate
  double force_sigma = 0.0;   // N and N*m
  std::uint64_t seed = 0;
};

struct IkPipelineOptions {
  double alpha = 1e-4;          // energy-term weight
  double marker_weight = 1e6;   // inverse-variance row weight (1/m^2)
  double cutoff_hz = 20.0;      // differentiation low-pass
};

// A complete synthetic experiment: rod, ground-truth viscoelasticity, load
// protocol, recording rates and noise.
struct Scenario {
  std::string rod_path;
  std::shared_ptr<const RodModel> rod;
  ViscoElasticity truth;
  LoadSchedule load;
  double duration = 2.0;
  double dt = 1e-4;
  double marker_rate = 200.0;
  double force_rate = 1000.0;
  NoiseSpec noise;
  Vec3 gravity = Vec3(0, 0, -9.81);
  bool base_locked = true;
  Integrator scheme = Integrator::Trapezoid;
  IkPipelineOptions ik;
  // estimation inputs: rates/accelerations re-derived from sampled data
  // (pipeline) or taken from the simulator record (recorded; the noiseless
  // oracle, free of finite-difference truncation)
  bool recorded_derivatives = false;
};

Scenario load_scenario(const std::string& path);

// Material-prior stiffness scaled down plus viscosity set for the requested
// per-axis modal damping ratios against the rest-state inertia.
ViscoElasticity default_truth(const RodModel& model, double stiffness_scale,
                              const Vec3& damping_ratio);

struct SynthOutput {
  MarkerFile markers;
  ForceFile forces;
  FrameSeries truth_series;  // noiseless strains/rates/accelerations + wrench
  ViscoElasticity truth;
};

// Simulates the scenario and renders virtual marker and force-plate files
// with the requested noise. Hold-type loads start from the corresponding
// static equilibrium. Deterministic for a fixed seed.
SynthOutput generate(const Scenario& scenario);

// Marker targets for one frame of a series' marker block.
std::vector<MarkerTarget> marker_targets(const RodModel& model,
                                         const FrameSeries& series, int frame,
                                         double weight);

// Strains for every frame via warm-started per-frame solves; fills the
// strain block (and base pose block when the base is free) of `series`.
struct IkPipelineResult {
  double mean_marker_rms = 0.0;
  double max_marker_rms = 0.0;
  double mean_iterations = 0.0;
  int unconverged = 0;
  // per-frame convergence log
  std::vector<int> iterations;
  std::vector<double> marker_rms;
  std::vector<char> converged;
};
IkPipelineResult run_ik_pipeline(const RodModel& model, FrameSeries& series,
                                 const IkPipelineOptions& opts, bool base_locked,
                                 double alpha_override = -1.0);

struct RoundtripReport {
  // parameter recovery over identifiable coordinates
  double stiffness_max_rel_err = 0.0;
  double damping_max_rel_err = 0.0;
  int unidentifiable_stiffness = 0;
  int unidentifiable_damping = 0;
  // re-simulation vs inverse-kinematics strains, worst excited coordinate
  double strain_rmse_percent = 0.0;
  double ik_marker_rms = 0.0;
  double force_check_percent = 0.0;  // generalized-force balance error
  EstimationResult stiffness_result;
  EstimationResult damping_result;
  FrameSeries ik_series;
  MatX resim_strain;  // resampled at the marker clock
};

// generate -> IK -> differentiate -> two-phase estimate -> re-simulate.
RoundtripReport roundtrip_report(const Scenario& scenario);

}  // namespace pcsrod
