#include "synth.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <random>

#include "errors.hpp"
#include "ik.hpp"

namespace pcsrod {

using nlohmann::json;

namespace {

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return j;
}

Vec3 json_vec3(const json& j, const Vec3& fallback) {
  if (j.is_null()) return fallback;
  if (!j.is_array() || j.size() != 3) throw ConfigError("expected 3 numbers");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

int steps_per_sample(double dt, double rate, const char* what) {
  const double steps = 1.0 / (rate * dt);
  const int n = static_cast<int>(std::lround(steps));
  if (n < 1 || std::abs(steps - n) > 1e-9 * steps) {
    throw ConfigError(std::string(what) +
                      " rate must divide the simulation step evenly");
  }
  return n;
}

std::string resolve_relative(const std::string& base_file, const std::string& ref) {
  if (ref.empty() || ref.front() == '/') return ref;
  const auto slash = base_file.find_last_of('/');
  if (slash == std::string::npos) return ref;
  return base_file.substr(0, slash + 1) + ref;
}

}  // namespace

ViscoElasticity default_truth(const RodModel& model, double stiffness_scale,
                              const Vec3& damping_ratio) {
  ViscoElasticity ve = ViscoElasticity::Zero(model.segment_count());
  const VecX prior = prior_stiffness_diagonal(model);
  const MassBias mb = mass_bias(model, rest_state(model), Vec3::Zero());
  for (int i = 0; i < model.segment_count(); ++i) {
    for (int ax = 0; ax < 3; ++ax) {
      const double k = stiffness_scale * prior(3 * i + ax);
      ve.stiffness(i, ax) = k;
      const double m_eff = mb.mass(model.strain_coord(i, ax), model.strain_coord(i, ax));
      ve.damping(i, ax) = 2.0 * damping_ratio(ax) * std::sqrt(k * std::max(m_eff, 0.0));
    }
  }
  return ve;
}

Scenario load_scenario(const std::string& path) {
  const json j = read_json_file(path);
  if (!j.contains("schema_version") || j["schema_version"].get<int>() != 1) {
    throw ConfigError(path + ": unsupported scenario schema_version");
  }
  Scenario sc;
  sc.rod_path = resolve_relative(path, j.at("rod").get<std::string>());
  sc.rod = std::make_shared<RodModel>(load_rod_model(sc.rod_path));

  if (j.contains("truth") && j["truth"].contains("visco")) {
    sc.truth = load_visco(resolve_relative(path, j["truth"]["visco"].get<std::string>()),
                          sc.rod->segment_count());
  } else {
    double scale = 0.8;
    // torsional and transverse damping sit above the main bending axis
    Vec3 ratio(0.08, 0.05, 0.08);
    if (j.contains("truth")) {
      scale = j["truth"].value("stiffness_scale", scale);
      if (j["truth"].contains("damping_ratio")) {
        ratio = json_vec3(j["truth"]["damping_ratio"], ratio);
      }
    }
    sc.truth = default_truth(*sc.rod, scale, ratio);
  }

  if (j.contains("load")) {
    const json& jl = j["load"];
    const std::string type = jl.value("type", "none");
    if (type == "none") {
      sc.load.type = LoadSchedule::Type::None;
    } else if (type == "constant") {
      sc.load.type = LoadSchedule::Type::Constant;
    } else if (type == "hold_release") {
      sc.load.type = LoadSchedule::Type::HoldRelease;
    } else if (type == "chirp") {
      sc.load.type = LoadSchedule::Type::Chirp;
    } else {
      throw ConfigError(path + ": unknown load type '" + type + "'");
    }
    if (jl.contains("wrench")) {
      const json& jw = jl["wrench"];
      if (!jw.is_array() || jw.size() != 6) {
        throw ConfigError(path + ": load wrench needs 6 numbers (moment, force)");
      }
      for (int i = 0; i < 6; ++i) sc.load.wrench(i) = jw[i].get<double>();
    }
    const std::string frame = jl.value("frame", "world");
    if (frame == "world") {
      sc.load.frame = WrenchFrame::World;
    } else if (frame == "local") {
      sc.load.frame = WrenchFrame::Local;
    } else {
      throw ConfigError(path + ": unknown wrench frame '" + frame + "'");
    }
    sc.load.s = jl.value("s", sc.rod->total_length());
    sc.load.t_on = jl.value("t_on", 0.0);
    sc.load.t_release = jl.value("t_release", 0.2);
    sc.load.ramp = jl.value("ramp", 0.0);
    sc.load.chirp_f0 = jl.value("chirp_f0", 0.5);
    sc.load.chirp_f1 = jl.value("chirp_f1", 5.0);
    if (sc.load.s < 0 || sc.load.s > sc.rod->total_length()) {
      throw ConfigError(path + ": load abscissa outside the rod");
    }
  }

  sc.duration = j.value("duration", 2.0);
  sc.dt = j.value("dt", 1e-4);
  sc.marker_rate = j.value("marker_rate", 200.0);
  sc.force_rate = j.value("force_rate", 1000.0);
  if (j.contains("noise")) {
    const json& jn = j["noise"];
    sc.noise.marker_sigma = jn.value("marker_sigma", 0.0);
    sc.noise.force_sigma = jn.value("force_sigma", 0.0);
    sc.noise.seed = jn.value("seed", std::uint64_t(0));
  }
  sc.gravity = j.contains("gravity") ? json_vec3(j["gravity"], sc.gravity) : sc.gravity;
  sc.base_locked = j.value("base_locked", true);
  const std::string scheme = j.value("scheme", "trapezoid");
  if (scheme == "trapezoid") {
    sc.scheme = Integrator::Trapezoid;
  } else if (scheme == "semi_implicit_euler") {
    sc.scheme = Integrator::SemiImplicitEuler;
  } else if (scheme == "rk4") {
    sc.scheme = Integrator::Rk4;
  } else {
    throw ConfigError(path + ": unknown scheme '" + scheme + "'");
  }
  sc.recorded_derivatives =
      j.value("derivative_source", std::string("pipeline")) == "recorded";
  if (j.contains("ik")) {
    const json& ji = j["ik"];
    sc.ik.alpha = ji.value("alpha", sc.ik.alpha);
    sc.ik.marker_weight = ji.value("marker_weight", sc.ik.marker_weight);
    sc.ik.cutoff_hz = ji.value("cutoff_hz", sc.ik.cutoff_hz);
  }
  if (!(sc.duration > 0) || !(sc.dt > 0)) {
    throw ConfigError(path + ": duration and dt must be positive");
  }
  return sc;
}

SynthOutput generate(const Scenario& sc) {
  if (!sc.rod) throw ConfigError("scenario has no rod model");
  const RodModel& model = *sc.rod;
  if (model.markers().empty()) {
    throw ConfigError("scenario rod has no marker attachments");
  }
  if (sc.load.type != LoadSchedule::Type::None &&
      sc.load.frame != WrenchFrame::World) {
    throw ConfigError("synthetic scenarios record world-frame wrenches only");
  }
  const int force_step = steps_per_sample(sc.dt, sc.force_rate, "force");
  const int marker_every = steps_per_sample(1.0 / sc.force_rate, sc.marker_rate, "marker");

  SimOptions opt;
  opt.dt = sc.dt;
  opt.scheme = sc.scheme;
  opt.gravity = sc.gravity;
  opt.base_locked = sc.base_locked;

  // hold protocols start settled under the initial load
  RodState initial = rest_state(model);
  const auto at_zero = sc.load.eval(0.0);
  if (!at_zero.empty()) {
    initial = solve_static_equilibrium(model, sc.truth, at_zero, sc.gravity);
  }

  const int nmark = static_cast<int>(model.markers().size());
  SynthOutput out;
  out.truth = sc.truth;
  out.markers.rate_hz = sc.marker_rate;
  for (const MarkerAttachment& m : model.markers()) out.markers.labels.push_back(m.label);
  out.forces.rate_hz = sc.force_rate;
  out.forces.wrench_s = sc.load.s;
  out.truth_series.rate_hz = sc.marker_rate;
  out.truth_series.wrench_s = sc.load.s;

  std::vector<VecX> marker_rows, truth_strain, truth_rate, truth_acc;
  std::vector<Vec6> force_rows, truth_twist, truth_bacc;
  std::vector<Pose> truth_pose;
  std::vector<double> marker_time, force_time;

  int force_count = 0;
  simulate(model, sc.truth, initial, sc.load, sc.duration, opt, force_step,
           [&](const SimRecord& rec) {
             force_time.push_back(rec.t);
             force_rows.push_back(rec.applied);
             if (force_count % marker_every == 0) {
               marker_time.push_back(rec.t);
               const Kinematics kin(model, rec.state);
               VecX row(3 * nmark);
               for (int m = 0; m < nmark; ++m) {
                 row.segment<3>(3 * m) = kin.marker_position(model.markers()[m]);
               }
               marker_rows.push_back(row);
               truth_strain.push_back(pack_strain(model, rec.state));
               const VecX qd = pack_velocity(model, rec.state);
               truth_rate.push_back(qd.tail(6 * model.segment_count()));
               truth_acc.push_back(rec.qdd.tail(6 * model.segment_count()));
               truth_twist.push_back(qd.head<6>());
               truth_bacc.push_back(rec.qdd.head<6>());
               truth_pose.push_back(rec.state.base_pose);
             }
             ++force_count;
           });

  const int nm = static_cast<int>(marker_time.size());
  const int nf = static_cast<int>(force_time.size());
  out.markers.time = marker_time;
  out.markers.positions.resize(nm, 3 * nmark);
  out.forces.time = force_time;
  out.forces.wrench.resize(nf, 6);
  FrameSeries& ts = out.truth_series;
  ts.time = marker_time;
  ts.strain.resize(nm, 6 * model.segment_count());
  ts.strain_rate.resize(nm, 6 * model.segment_count());
  ts.strain_acc.resize(nm, 6 * model.segment_count());
  ts.base_twist.resize(nm, 6);
  ts.base_acc.resize(nm, 6);
  ts.wrench.resize(nm, 6);
  ts.base_pose = truth_pose;
  for (int i = 0; i < nm; ++i) {
    out.markers.positions.row(i) = marker_rows[i];
    ts.strain.row(i) = truth_strain[i];
    ts.strain_rate.row(i) = truth_rate[i];
    ts.strain_acc.row(i) = truth_acc[i];
    ts.base_twist.row(i) = truth_twist[i];
    ts.base_acc.row(i) = truth_bacc[i];
    ts.wrench.row(i) = force_rows[static_cast<std::size_t>(i) * marker_every];
  }
  for (int i = 0; i < nf; ++i) out.forces.wrench.row(i) = force_rows[i];

  // noise pass, single-threaded in frame order for seed reproducibility
  std::mt19937_64 rng(sc.noise.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  if (sc.noise.marker_sigma > 0) {
    for (int i = 0; i < nm; ++i) {
      for (int c = 0; c < 3 * nmark; ++c) {
        out.markers.positions(i, c) += sc.noise.marker_sigma * gauss(rng);
      }
    }
  }
  if (sc.noise.force_sigma > 0) {
    for (int i = 0; i < nf; ++i) {
      for (int c = 0; c < 6; ++c) {
        out.forces.wrench(i, c) += sc.noise.force_sigma * gauss(rng);
      }
    }
  }
  return out;
}

std::vector<MarkerTarget> marker_targets(const RodModel& model,
                                         const FrameSeries& series, int frame,
                                         double weight) {
  if (!series.has_markers()) throw DataError("series has no marker block");
  const int nmark = static_cast<int>(series.markers.cols() / 3);
  if (nmark != static_cast<int>(model.markers().size())) {
    throw DataError("marker count does not match the rod description");
  }
  std::vector<MarkerTarget> targets(nmark);
  for (int m = 0; m < nmark; ++m) {
    MarkerTarget& t = targets[m];
    t.attach = model.markers()[m];
    t.position = series.markers.row(frame).segment<3>(3 * m);
    t.weight = weight * Mat3::Identity();
    t.valid = t.position.allFinite();
  }
  return targets;
}

IkPipelineResult run_ik_pipeline(const RodModel& model, FrameSeries& series,
                                 const IkPipelineOptions& opts, bool base_locked,
                                 double alpha_override) {
  const int n = series.frame_count();
  if (n == 0) throw DataError("ik pipeline: empty series");
  IkOptions ik;
  ik.energy_weight = alpha_override >= 0 ? alpha_override : opts.alpha;
  ik.base_locked = base_locked;

  series.strain.resize(n, 6 * model.segment_count());
  if (!base_locked) series.base_pose.resize(n);

  IkPipelineResult out;
  RodState warm = rest_state(model);
  for (int f = 0; f < n; ++f) {
    IkProblem problem;
    problem.model = &model;
    problem.targets = marker_targets(model, series, f, opts.marker_weight);
    problem.options = ik;
    problem.initial_state = warm;
    IkResult res;
    try {
      res = solve_frame(problem);
    } catch (const Error& e) {
      throw Error(e.code(), "frame " + std::to_string(f) + ": " + e.what());
    }
    series.strain.row(f) = pack_strain(model, res.state);
    if (!base_locked) series.base_pose[f] = res.state.base_pose;
    out.iterations.push_back(res.iterations);
    out.marker_rms.push_back(res.marker_rms);
    out.converged.push_back(res.converged ? 1 : 0);
    out.mean_marker_rms += res.marker_rms;
    out.max_marker_rms = std::max(out.max_marker_rms, res.marker_rms);
    out.mean_iterations += res.iterations;
    if (!res.converged) ++out.unconverged;
    warm = res.state;
    warm.base_twist.setZero();
  }
  out.mean_marker_rms /= n;
  out.mean_iterations /= n;
  return out;
}

RoundtripReport roundtrip_report(const Scenario& sc) {
  const RodModel& model = *sc.rod;
  const SynthOutput so = generate(sc);

  const MarkerFile filled = gap_fill(so.markers);
  FrameSeries series = synchronize(filled, so.forces, 0.0);

  RoundtripReport rep;
  const IkPipelineResult ik = run_ik_pipeline(model, series, sc.ik, sc.base_locked);
  rep.ik_marker_rms = ik.mean_marker_rms;

  DifferentiateOptions dopt;
  dopt.cutoff_hz = sc.ik.cutoff_hz;
  PhaseOptions popt;
  if (sc.load.type == LoadSchedule::Type::HoldRelease) {
    // the hold must be long enough to register as a static run
    popt.min_hold_s = std::min(popt.min_hold_s,
                               0.5 * (sc.load.t_release - sc.load.t_on));
  }
  FrameSeries diff;
  if (sc.recorded_derivatives) {
    diff = so.truth_series;
    diff.phase.assign(diff.frame_count(), PhaseLabel::Unlabeled);
    label_phases(diff, popt);
  } else {
    diff = differentiate(series, dopt);
    label_phases(diff, popt);
  }

  EstimationOptions eopt;
  eopt.gravity = sc.gravity;
  rep.stiffness_result = estimate(model, {&diff}, eopt, nullptr);
  eopt.phase = EstimationPhase::Damping;
  rep.damping_result = estimate(model, {&diff}, eopt, &rep.stiffness_result.ve);

  ViscoElasticity estimated = rep.stiffness_result.ve;
  estimated.damping = rep.damping_result.ve.damping;

  for (const CoefficientEstimate& ce : rep.stiffness_result.coefficients) {
    if (!ce.identifiable) {
      ++rep.unidentifiable_stiffness;
      continue;
    }
    const double truth = sc.truth.stiffness(ce.segment, ce.axis);
    rep.stiffness_max_rel_err = std::max(
        rep.stiffness_max_rel_err, std::abs(ce.value - truth) / std::max(truth, 1e-30));
  }
  for (const CoefficientEstimate& ce : rep.damping_result.coefficients) {
    if (!ce.identifiable) {
      ++rep.unidentifiable_damping;
      continue;
    }
    const double truth = sc.truth.damping(ce.segment, ce.axis);
    rep.damping_max_rel_err = std::max(
        rep.damping_max_rel_err, std::abs(ce.value - truth) / std::max(truth, 1e-30));
  }

  // re-simulate the same protocol with the estimated parameters
  SimOptions opt;
  opt.dt = sc.dt;
  opt.scheme = sc.scheme;
  opt.gravity = sc.gravity;
  opt.base_locked = sc.base_locked;
  RodState initial = rest_state(model);
  const auto at_zero = sc.load.eval(0.0);
  if (!at_zero.empty()) {
    initial = solve_static_equilibrium(model, estimated, at_zero, sc.gravity);
  }
  const int marker_step = steps_per_sample(sc.dt, sc.marker_rate, "marker");
  std::vector<VecX> resim_rows;
  simulate(model, estimated, initial, sc.load, sc.duration, opt, marker_step,
           [&](const SimRecord& rec) {
             resim_rows.push_back(pack_strain(model, rec.state));
           });

  const int n = std::min<int>(series.frame_count(), static_cast<int>(resim_rows.size()));
  rep.resim_strain.resize(n, 6 * model.segment_count());
  for (int i = 0; i < n; ++i) rep.resim_strain.row(i) = resim_rows[i];

  // worst per-coordinate RMSE as a percentage of that coordinate's range,
  // over coordinates carrying a meaningful share of the motion
  double max_range = 0.0;
  std::vector<double> ranges;
  for (const auto& [seg, axis] : model.active_angular_coords()) {
    const int col = model.strain_coord(seg, axis) - 6;
    const double range = series.strain.col(col).head(n).maxCoeff() -
                         series.strain.col(col).head(n).minCoeff();
    ranges.push_back(range);
    max_range = std::max(max_range, range);
  }
  std::size_t idx = 0;
  for (const auto& [seg, axis] : model.active_angular_coords()) {
    const int col = model.strain_coord(seg, axis) - 6;
    const double range = ranges[idx++];
    if (range < 0.1 * max_range) continue;  // unexcited coordinate
    const double err = std::sqrt(
        (rep.resim_strain.col(col).head(n) - series.strain.col(col).head(n))
            .squaredNorm() /
        n);
    rep.strain_rmse_percent = std::max(rep.strain_rmse_percent, 100.0 * err / range);
  }

  // balance check on the trustworthy frames only
  FrameSeries trimmed;
  trimmed.rate_hz = diff.rate_hz;
  trimmed.wrench_s = diff.wrench_s;
  std::vector<int> keep;
  for (int i = 0; i < diff.frame_count(); ++i) {
    if (diff.phase[i] != PhaseLabel::Excluded) keep.push_back(i);
  }
  const int nk = static_cast<int>(keep.size());
  trimmed.strain.resize(nk, diff.strain.cols());
  trimmed.strain_rate.resize(nk, diff.strain_rate.cols());
  trimmed.strain_acc.resize(nk, diff.strain_acc.cols());
  trimmed.wrench.resize(nk, 6);
  trimmed.base_twist.resize(nk, 6);
  trimmed.base_acc.resize(nk, 6);
  if (!diff.base_pose.empty()) trimmed.base_pose.resize(nk);
  for (int i = 0; i < nk; ++i) {
    trimmed.time.push_back(diff.time[keep[i]]);
    trimmed.strain.row(i) = diff.strain.row(keep[i]);
    trimmed.strain_rate.row(i) = diff.strain_rate.row(keep[i]);
    trimmed.strain_acc.row(i) = diff.strain_acc.row(keep[i]);
    trimmed.wrench.row(i) = diff.wrench.row(keep[i]);
    trimmed.base_twist.row(i) = diff.base_twist.row(keep[i]);
    trimmed.base_acc.row(i) = diff.base_acc.row(keep[i]);
    if (!diff.base_pose.empty()) trimmed.base_pose[i] = diff.base_pose[keep[i]];
  }
  const ForceCheck fc = generalized_force_check(model, estimated, trimmed, sc.gravity);
  rep.force_check_percent = fc.error.percent_of_range;
  rep.ik_series = std::move(diff);
  return rep;
}

}  // namespace pcsrod
