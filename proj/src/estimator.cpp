#include "estimator.hpp"

#include <Eigen/QR>
#include <cmath>
#include <numeric>

#include "errors.hpp"
#include "ik.hpp"
#include "parallel.hpp"
#include "signal.hpp"

namespace pcsrod {

namespace {

void check_uniform_rate(const FrameSeries& series) {
  if (series.frame_count() < 2) throw DataError("series too short");
  const double dt = series.time[1] - series.time[0];
  for (int i = 1; i < series.frame_count(); ++i) {
    const double step = series.time[i] - series.time[i - 1];
    if (!(step > 0) || std::abs(step - dt) > 1e-9) {
      throw DataError("series is not uniformly sampled");
    }
  }
}

}  // namespace

FrameSeries differentiate(const FrameSeries& series,
                          const DifferentiateOptions& opts) {
  if (!series.has_strain()) throw DataError("differentiate: no strain block");
  check_uniform_rate(series);
  const int n = series.frame_count();
  const double rate = series.rate_hz > 0
                          ? series.rate_hz
                          : 1.0 / (series.time[1] - series.time[0]);
  const double dt = 1.0 / rate;
  const int warmup = static_cast<int>(std::ceil(rate / opts.cutoff_hz));
  if (n < 2 * warmup + 4) {
    throw DataError("differentiate: series shorter than the filter warm-up");
  }
  const int edge = filter_edge_samples(opts.cutoff_hz, rate, n);
  const Biquad filt = butterworth_lowpass(opts.cutoff_hz, rate);

  FrameSeries out = series;
  out.rate_hz = rate;
  const int cols = static_cast<int>(series.strain.cols());
  out.strain.resize(n, cols);
  out.strain_rate.resize(n, cols);
  out.strain_acc.resize(n, cols);
  for (int c = 0; c < cols; ++c) {
    const VecX smooth = filtfilt(filt, series.strain.col(c));
    out.strain.col(c) = smooth;
    out.strain_rate.col(c) = central_derivative(smooth, dt);
    out.strain_acc.col(c) = central_second_derivative(smooth, dt);
  }

  // base motion from pose differences when the base actually moves
  bool base_moves = false;
  for (std::size_t i = 1; i < series.base_pose.size() && !base_moves; ++i) {
    const Pose rel = between(series.base_pose[i - 1], series.base_pose[i]);
    base_moves = (rel.rotation - Mat3::Identity()).norm() > 1e-12 ||
                 rel.position.norm() > 1e-12;
  }
  if (base_moves) {
    MatX twist_raw(n, 6);
    for (int i = 0; i < n; ++i) {
      const int lo = std::max(0, i - 1);
      const int hi = std::min(n - 1, i + 1);
      const Twist rel =
          log_se3(between(series.base_pose[lo], series.base_pose[hi]));
      twist_raw.row(i) = rel / ((hi - lo) * dt);
    }
    out.base_twist.resize(n, 6);
    out.base_acc.resize(n, 6);
    for (int c = 0; c < 6; ++c) {
      const VecX smooth = filtfilt(filt, twist_raw.col(c));
      out.base_twist.col(c) = smooth;
      out.base_acc.col(c) = central_derivative(smooth, dt);
    }
  } else {
    out.base_twist = MatX::Zero(n, 6);
    out.base_acc = MatX::Zero(n, 6);
  }

  out.phase.assign(n, PhaseLabel::Unlabeled);
  for (int i = 0; i < edge && i < n; ++i) {
    out.phase[i] = PhaseLabel::Excluded;
    out.phase[n - 1 - i] = PhaseLabel::Excluded;
  }
  if (!series.phase.empty()) {
    for (int i = 0; i < n; ++i) {
      if (series.phase[i] == PhaseLabel::Excluded) {
        out.phase[i] = PhaseLabel::Excluded;
      }
    }
  }
  return out;
}

void label_phases(FrameSeries& series, const PhaseOptions& opts) {
  if (!series.has_rates()) throw DataError("label_phases: no strain rates");
  const int n = series.frame_count();
  if (series.phase.empty()) series.phase.assign(n, PhaseLabel::Unlabeled);
  const double rate = series.rate_hz;
  const int hold = std::max(1, static_cast<int>(std::lround(opts.min_hold_s * rate)));

  const double acc_threshold = opts.static_acc_threshold >= 0
                                   ? opts.static_acc_threshold
                                   : opts.static_rate_threshold * rate;
  std::vector<bool> quiet(n, false);
  for (int i = 0; i < n; ++i) {
    quiet[i] = series.strain_rate.row(i).lpNorm<Eigen::Infinity>() <
               opts.static_rate_threshold;
    if (quiet[i] && series.has_acc()) {
      quiet[i] = series.strain_acc.row(i).lpNorm<Eigen::Infinity>() < acc_threshold;
    }
  }
  // a frame is static when it sits inside a quiet run of at least `hold`
  int run = 0;
  std::vector<int> run_len(n, 0);
  for (int i = 0; i < n; ++i) {
    run = quiet[i] ? run + 1 : 0;
    run_len[i] = run;
  }
  int tail = 0;
  for (int i = n - 1; i >= 0; --i) {
    tail = quiet[i] ? tail + 1 : 0;
    const bool is_static = quiet[i] && (run_len[i] + tail - 1) >= hold;
    if (series.phase[i] == PhaseLabel::Excluded) continue;
    series.phase[i] = is_static ? PhaseLabel::Static : PhaseLabel::Dynamic;
  }
}

VecX residual_gamma(const RodModel& model, const RodState& state,
                    const VecX& qdd, const Vec6& wrench_world, double wrench_s,
                    const Vec3& gravity) {
  AppliedWrench aw;
  aw.s = wrench_s;
  aw.wrench = Wrench::FromStacked(wrench_world, WrenchFrame::World);
  const VecX full = inverse_dynamics(model, state, qdd, gravity, {aw});
  return full.tail(6 * model.segment_count());
}

VecX nnls(const MatX& a, const VecX& b, double tol) {
  const int n = static_cast<int>(a.cols());
  if (tol < 0) {
    tol = 10.0 * std::numeric_limits<double>::epsilon() * a.cwiseAbs().sum();
  }
  VecX x = VecX::Zero(n);
  std::vector<bool> passive(n, false);
  VecX w = a.transpose() * b;

  const int max_outer = 3 * n + 30;
  for (int outer = 0; outer < max_outer; ++outer) {
    int t = -1;
    double best = tol;
    for (int j = 0; j < n; ++j) {
      if (!passive[j] && w(j) > best) {
        best = w(j);
        t = j;
      }
    }
    if (t < 0) break;
    passive[t] = true;

    for (int inner = 0; inner < max_outer; ++inner) {
      std::vector<int> idx;
      for (int j = 0; j < n; ++j) {
        if (passive[j]) idx.push_back(j);
      }
      MatX ap(a.rows(), idx.size());
      for (std::size_t c = 0; c < idx.size(); ++c) ap.col(c) = a.col(idx[c]);
      const VecX z = ap.colPivHouseholderQr().solve(b);
      if (z.minCoeff() > 0) {
        x.setZero();
        for (std::size_t c = 0; c < idx.size(); ++c) x(idx[c]) = z(c);
        break;
      }
      double alpha = 1.0;
      for (std::size_t c = 0; c < idx.size(); ++c) {
        if (z(c) <= 0) {
          alpha = std::min(alpha, x(idx[c]) / (x(idx[c]) - z(c)));
        }
      }
      for (std::size_t c = 0; c < idx.size(); ++c) {
        x(idx[c]) += alpha * (z(c) - x(idx[c]));
        if (x(idx[c]) <= 1e-12 * (1.0 + std::abs(z(c)))) {
          x(idx[c]) = 0.0;
          passive[idx[c]] = false;
        }
      }
    }
    w = a.transpose() * (b - a * x);
  }
  return x;
}

namespace {

struct FrameRef {
  const FrameSeries* series;
  int index;
  double weight;
  bool zero_rates;  // stiffness phase: treat qdot, qddot as zero
};

}  // namespace

EstimationResult estimate(const RodModel& model,
                          const std::vector<const FrameSeries*>& datasets,
                          const EstimationOptions& opts,
                          const ViscoElasticity* known_stiffness) {
  if (datasets.empty()) throw ConfigError("estimate: no datasets");
  const bool damping_phase = opts.phase == EstimationPhase::Damping;
  if (damping_phase && !known_stiffness) {
    throw ConfigError("estimate: damping phase requires the stiffness matrix");
  }

  std::vector<FrameRef> frames;
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    const FrameSeries& s = *datasets[d];
    if (!s.has_strain() || !s.has_wrench()) {
      throw DataError("estimate: dataset lacks strain or wrench data");
    }
    if (s.phase.empty()) {
      throw DataError("estimate: dataset has no phase labels");
    }
    if (damping_phase && (!s.has_rates() || !s.has_acc())) {
      throw DataError("estimate: damping phase needs rates and accelerations");
    }
    const double wl = d < opts.dataset_weights.size() ? opts.dataset_weights[d] : 1.0;
    for (int i = 0; i < s.frame_count(); ++i) {
      const PhaseLabel ph = s.phase[i];
      if (ph == PhaseLabel::Excluded || ph == PhaseLabel::Unlabeled) continue;
      if (!damping_phase && ph == PhaseLabel::Static) {
        frames.push_back({&s, i, wl, true});
      } else if (damping_phase && ph == PhaseLabel::Dynamic) {
        frames.push_back({&s, i, wl, false});
      }
    }
  }
  if (frames.empty()) {
    throw ConfigError("estimate: no frames in the requested phase");
  }

  const auto& coords = model.active_angular_coords();
  const int nc = static_cast<int>(coords.size());
  const int nf = static_cast<int>(frames.size());

  // per-frame lower-partition residual and regressor entries, assembled in
  // parallel into preallocated rows
  MatX gamma(nf, nc), reg(nf, nc);
  VecX wsqrt(nf);
  parallel_for(nf, [&](int fi) {
    const FrameRef& fr = frames[fi];
    const FrameSeries& s = *fr.series;
    RodState st = state_at(model, s, fr.index);
    VecX qdd = acceleration_at(model, s, fr.index);
    if (fr.zero_rates) {
      for (auto& r : st.strain_rate) r.setZero();
      st.base_twist.setZero();
      qdd.setZero();
    }
    const VecX g = residual_gamma(model, st, qdd, s.wrench.row(fr.index),
                                  s.wrench_s, opts.gravity);
    wsqrt(fi) = std::sqrt(fr.weight);
    for (int c = 0; c < nc; ++c) {
      const auto [seg, axis] = coords[c];
      const int col = 6 * seg + axis;
      gamma(fi, c) = g(col);
      const double dq = model.segment(seg).rest_strain(axis) - st.strain[seg](axis);
      reg(fi, c) = fr.zero_rates ? dq : st.strain_rate[seg](axis);
    }
  });

  EstimationResult result;
  result.frames_used = nf;
  result.ve = ViscoElasticity::Zero(model.segment_count());
  if (damping_phase) result.ve.stiffness = known_stiffness->stiffness;

  const VecX prior = prior_stiffness_diagonal(model);
  for (int c = 0; c < nc; ++c) {
    const auto [seg, axis] = coords[c];
    CoefficientEstimate ce;
    ce.segment = seg;
    ce.axis = axis;
    ce.excluded = std::find(opts.exclude.begin(), opts.exclude.end(),
                            std::make_pair(seg, axis)) != opts.exclude.end();

    // target: Gamma = K dq (stiffness) or K dq - Gamma = D qdot (damping)
    VecX y(nf), x(nf);
    for (int fi = 0; fi < nf; ++fi) {
      if (damping_phase) {
        const double dq = model.segment(seg).rest_strain(axis) -
                          frames[fi].series->strain(frames[fi].index, 6 * seg + axis);
        y(fi) = wsqrt(fi) *
                (known_stiffness->stiffness(seg, axis) * dq - gamma(fi, c));
        x(fi) = wsqrt(fi) * reg(fi, c);
      } else {
        y(fi) = wsqrt(fi) * gamma(fi, c);
        x(fi) = wsqrt(fi) * reg(fi, c);
      }
    }
    ce.excitation = x.norm();
    ce.identifiable = !ce.excluded && ce.excitation > opts.excitation_threshold;

    if (ce.identifiable) {
      const VecX sol = nnls(x, y);
      ce.value = sol(0);
      ce.residual_rms = (y - ce.value * x).norm() / std::sqrt(double(nf));
    } else {
      // reported fallback, never silent: material prior for stiffness,
      // zero for damping
      ce.value = damping_phase ? 0.0 : prior(3 * seg + axis);
      ce.residual_rms = y.norm() / std::sqrt(double(nf));
    }
    if (damping_phase) {
      result.ve.damping(seg, axis) = ce.value;
    } else {
      result.ve.stiffness(seg, axis) = ce.value;
    }
    result.coefficients.push_back(ce);
  }
  return result;
}

RmseResult rmse(const MatX& measured, const MatX& estimated) {
  if (measured.rows() != estimated.rows() || measured.cols() != estimated.cols()) {
    throw DataError("rmse: size mismatch");
  }
  if (measured.rows() == 0) throw DataError("rmse: empty input");
  RmseResult out;
  out.rmse = std::sqrt((measured - estimated).rowwise().squaredNorm().mean());
  const VecX norms = measured.rowwise().norm();
  const double range = norms.maxCoeff() - norms.minCoeff();
  out.percent_of_range =
      range > 0 ? 100.0 * out.rmse / range
                : (out.rmse > 0 ? std::numeric_limits<double>::infinity() : 0.0);
  return out;
}

ForceCheck generalized_force_check(const RodModel& model,
                                   const ViscoElasticity& ve,
                                   const FrameSeries& series,
                                   const Vec3& gravity) {
  if (!series.has_strain() || !series.has_wrench()) {
    throw DataError("force check: series lacks strain or wrench data");
  }
  const int n = series.frame_count();
  ForceCheck out;
  out.coords = model.active_strain_coords();
  const int nc = static_cast<int>(out.coords.size());
  out.measured.resize(n, nc);
  out.estimated.resize(n, nc);
  parallel_for(n, [&](int fi) {
    const RodState st = state_at(model, series, fi);
    const VecX qdd = acceleration_at(model, series, fi);
    const Kinematics kin(model, st);
    const MatX jac = kin.jacobian_geometric(series.wrench_s);
    const Mat3 rt = kin.pose_at(series.wrench_s).rotation.transpose();
    const Vec6 w = series.wrench.row(fi);
    const Vec6 f_local = make_twist(rt * angular_part(w), rt * linear_part(w));
    const VecX lhs = jac.transpose() * f_local;
    const VecX id = inverse_dynamics(model, st, qdd, gravity, {});
    const VecX tau = generalized_elastic_force(model, ve, st);
    for (int c = 0; c < nc; ++c) {
      out.measured(fi, c) = lhs(out.coords[c]);
      out.estimated(fi, c) = id(out.coords[c]) - tau(out.coords[c]);
    }
  });
  out.error = rmse(out.measured, out.estimated);
  return out;
}

}  // namespace pcsrod
