#include "ik.hpp"

#include <Eigen/Cholesky>
#include <cmath>

#include "errors.hpp"

namespace pcsrod {

VecX prior_stiffness_diagonal(const RodModel& model) {
  const RodMaterial& mat = model.material();
  if (!(mat.youngs_modulus > 0)) {
    throw ConfigError("prior stiffness: Young's modulus missing");
  }
  const double shear = mat.youngs_modulus / (2.0 * (1.0 + mat.poisson_ratio));
  VecX diag(3 * model.segment_count());
  for (int i = 0; i < model.segment_count(); ++i) {
    const SegmentSpec& seg = model.segment(i);
    diag(3 * i + 0) = mat.youngs_modulus * seg.second_moments.x() * seg.length;
    diag(3 * i + 1) = mat.youngs_modulus * seg.second_moments.y() * seg.length;
    diag(3 * i + 2) = shear * seg.second_moments.z() * seg.length;
  }
  return diag;
}

MatX prior_stiffness(const RodModel& model) {
  return prior_stiffness_diagonal(model).asDiagonal();
}

namespace {

struct Residuals {
  double objective = 0.0;
  double marker_sq_sum = 0.0;
  int visible = 0;
};

// Objective and, when requested, the Gauss-Newton normal equations over the
// active columns.
Residuals evaluate(const IkProblem& problem, const RodState& state,
                   const std::vector<int>& cols, const VecX& energy_weight_full,
                   MatX* normal, VecX* gradient) {
  const RodModel& model = *problem.model;
  const Kinematics kin(model, state);
  const int na = static_cast<int>(cols.size());
  Residuals res;
  if (normal) {
    normal->setZero(na, na);
    gradient->setZero(na);
  }
  for (const MarkerTarget& target : problem.targets) {
    if (!target.valid || !target.position.allFinite()) continue;
    ++res.visible;
    const Vec3 err = target.position - kin.marker_position(target.attach);
    res.objective += 0.5 * err.dot(target.weight * err);
    res.marker_sq_sum += err.squaredNorm();
    if (normal) {
      const MatX full = kin.marker_jacobian(target.attach);
      MatX jac(3, na);
      for (int c = 0; c < na; ++c) jac.col(c) = full.col(cols[c]);
      const MatX wj = target.weight * jac;
      normal->noalias() += jac.transpose() * wj;
      gradient->noalias() += wj.transpose() * err;
    }
  }
  // elastic-energy rows: residual (rest - strain) weighted by alpha * K_hat
  for (int c = 0; c < na; ++c) {
    const double w = energy_weight_full(cols[c]);
    if (w == 0.0) continue;
    const int seg = (cols[c] - 6) / 6;
    const int comp = (cols[c] - 6) % 6;
    const double delta =
        model.segment(seg).rest_strain(comp) - state.strain[seg](comp);
    res.objective += 0.5 * w * delta * delta;
    if (normal) {
      (*normal)(c, c) += w;
      (*gradient)(c) += w * delta;
    }
  }
  return res;
}

VecX energy_weights(const RodModel& model, double alpha) {
  VecX energy_w = VecX::Zero(model.coord_count());
  const VecX prior = prior_stiffness_diagonal(model);
  for (const auto& [seg, axis] : model.active_angular_coords()) {
    energy_w(model.strain_coord(seg, axis)) = alpha * prior(3 * seg + axis);
  }
  return energy_w;
}

}  // namespace

double ik_objective(const IkProblem& problem, const RodState& state) {
  const RodModel& model = *problem.model;
  const std::vector<int> cols = model.active_coords(problem.options.base_locked);
  return evaluate(problem, state, cols,
                  energy_weights(model, problem.options.energy_weight), nullptr,
                  nullptr)
      .objective;
}

VecX ik_gradient(const IkProblem& problem, const RodState& state) {
  const RodModel& model = *problem.model;
  const std::vector<int> cols = model.active_coords(problem.options.base_locked);
  const int na = static_cast<int>(cols.size());
  MatX normal(na, na);
  VecX g(na);
  evaluate(problem, state, cols,
           energy_weights(model, problem.options.energy_weight), &normal, &g);
  VecX full = VecX::Zero(model.coord_count());
  for (int c = 0; c < na; ++c) full(cols[c]) = -g(c);  // grad g = -J^T W e
  return full;
}

IkResult solve_frame(const IkProblem& problem) {
  if (!problem.model) throw ConfigError("ik: missing model");
  const RodModel& model = *problem.model;
  const IkOptions& opt = problem.options;
  if (!(opt.energy_weight >= 0)) throw ConfigError("ik: negative energy weight");

  const std::vector<int> cols = model.active_coords(opt.base_locked);
  if (cols.empty()) throw ConfigError("ik: no active coordinates");

  const VecX energy_w = energy_weights(model, opt.energy_weight);

  RodState state = problem.initial_state;
  clamp_to_mask(model, state);

  const int na = static_cast<int>(cols.size());
  MatX normal(na, na);
  VecX grad(na);
  Residuals cur = evaluate(problem, state, cols, energy_w, &normal, &grad);
  if (!std::isfinite(cur.objective)) throw NumericalError("ik: non-finite objective");

  IkResult out;
  out.low_visibility = cur.visible < opt.min_visible_markers;

  double lambda = opt.lambda_init;
  bool converged = false;
  int iters = 0;
  while (iters < opt.max_iters) {
    ++iters;
    MatX damped = normal;
    damped.diagonal() += lambda * normal.diagonal();
    Eigen::LLT<MatX> llt(damped);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("ik: damped normal matrix not positive definite");
    }
    const VecX step = llt.solve(grad);

    RodState cand = state;
    VecX delta = VecX::Zero(model.coord_count());
    for (int c = 0; c < na; ++c) delta(cols[c]) = step(c);
    apply_increment(model, cand, delta);
    const Residuals trial = evaluate(problem, cand, cols, energy_w, nullptr, nullptr);
    if (!std::isfinite(trial.objective)) {
      throw NumericalError("ik: diverged to non-finite residual");
    }

    if (trial.objective <= cur.objective) {
      const double decrease = cur.objective - trial.objective;
      state = std::move(cand);
      const bool small_step = step.norm() < opt.step_tol;
      const bool small_decrease = decrease < opt.residual_tol * cur.objective;
      cur = evaluate(problem, state, cols, energy_w, &normal, &grad);
      lambda = std::max(lambda / 10.0, 1e-14);
      if (small_step || small_decrease ||
          grad.lpNorm<Eigen::Infinity>() < opt.residual_tol) {
        converged = true;
        break;
      }
    } else {
      if (step.norm() < opt.step_tol) {  // at resolution limit, cannot improve
        converged = true;
        break;
      }
      lambda *= 10.0;
      if (lambda > 1e14) break;  // stuck; report unconverged
    }
  }

  out.state = state;
  out.iterations = iters;
  out.final_objective = cur.objective;
  out.marker_rms =
      cur.visible > 0 ? std::sqrt(cur.marker_sq_sum / cur.visible) : 0.0;
  out.converged = converged;
  return out;
}

std::vector<IkResult> solve_sequence(const RodModel& model,
                                     const std::vector<std::vector<MarkerTarget>>& frames,
                                     const IkOptions& options,
                                     const RodState& initial_state) {
  std::vector<IkResult> results;
  results.reserve(frames.size());
  RodState warm = initial_state;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    IkProblem problem;
    problem.model = &model;
    problem.targets = frames[f];
    problem.options = options;
    problem.initial_state = warm;
    try {
      results.push_back(solve_frame(problem));
    } catch (const Error& e) {
      throw Error(e.code(), "frame " + std::to_string(f) + ": " + e.what());
    }
    warm = results.back().state;
    warm.base_twist.setZero();
  }
  return results;
}

}  // namespace pcsrod
