#include "rod_model.hpp"

#include <cmath>

#include "errors.hpp"

namespace pcsrod {

RodModel::RodModel(std::vector<SegmentSpec> segments, RodMaterial material,
                   Mat6 base_inertia, std::vector<MarkerAttachment> markers,
                   double contact_s)
    : segments_(std::move(segments)),
      material_(material),
      base_inertia_(std::move(base_inertia)),
      markers_(std::move(markers)),
      contact_s_(contact_s) {
  if (segments_.empty()) throw ConfigError("rod model: no segments");
  boundaries_.push_back(0.0);
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const SegmentSpec& seg = segments_[i];
    if (!(seg.length > 0)) {
      throw ConfigError("rod model: segment " + std::to_string(i) +
                        " has non-positive length");
    }
    if (!(seg.second_moments.minCoeff() > 0) || !(seg.section_area > 0) ||
        !(seg.linear_density > 0)) {
      throw ConfigError("rod model: segment " + std::to_string(i) +
                        " needs positive section data");
    }
    if (!seg.rest_strain.allFinite()) {
      throw ConfigError("rod model: segment " + std::to_string(i) +
                        " rest strain not finite");
    }
    boundaries_.push_back(boundaries_.back() + seg.length);
    for (int c = 0; c < 6; ++c) {
      if (seg.dof_mask[c]) {
        active_strain_.push_back(strain_coord(static_cast<int>(i), c));
        if (c < 3) active_angular_.emplace_back(static_cast<int>(i), c);
      }
    }
  }
  for (const MarkerAttachment& m : markers_) {
    if (m.s < 0 || m.s > total_length()) {
      throw ConfigError("rod model: marker abscissa out of range");
    }
  }
  if (contact_s_ < 0 || contact_s_ > total_length()) {
    throw ConfigError("rod model: contact abscissa out of range");
  }
}

std::vector<int> RodModel::active_coords(bool base_locked) const {
  std::vector<int> out;
  if (!base_locked) {
    for (int i = 0; i < 6; ++i) out.push_back(i);
  }
  out.insert(out.end(), active_strain_.begin(), active_strain_.end());
  return out;
}

std::pair<int, double> RodModel::locate(double s) const {
  const double tol = 1e-12 * std::max(1.0, total_length());
  if (s < -tol || s > total_length() + tol) {
    throw DataError("abscissa " + std::to_string(s) + " outside [0, " +
                    std::to_string(total_length()) + "]");
  }
  s = std::clamp(s, 0.0, total_length());
  // boundaries_ is small; linear scan is fine
  int i = 0;
  while (i + 1 < segment_count() && s >= boundaries_[i + 1]) ++i;
  return {i, s - boundaries_[i]};
}

Vec6 RodModel::section_inertia(int i) const {
  const SegmentSpec& seg = segment(i);
  const double rho = seg.linear_density / seg.section_area;
  Vec6 m;
  m << rho * seg.second_moments.x(), rho * seg.second_moments.y(),
      rho * seg.second_moments.z(), seg.linear_density, seg.linear_density,
      seg.linear_density;
  return m;
}

RodState rest_state(const RodModel& model) {
  RodState st;
  st.base_pose = Pose::Identity();
  st.base_twist = Twist::Zero();
  st.strain.resize(model.segment_count());
  st.strain_rate.assign(model.segment_count(), Twist::Zero());
  for (int i = 0; i < model.segment_count(); ++i) {
    st.strain[i] = model.segment(i).rest_strain;
  }
  return st;
}

void clamp_to_mask(const RodModel& model, RodState& state) {
  for (int i = 0; i < model.segment_count(); ++i) {
    const SegmentSpec& seg = model.segment(i);
    for (int c = 0; c < 6; ++c) {
      if (!seg.dof_mask[c]) {
        state.strain[i](c) = seg.rest_strain(c);
        state.strain_rate[i](c) = 0.0;
      }
    }
  }
}

VecX pack_strain(const RodModel& model, const RodState& state) {
  VecX q(6 * model.segment_count());
  for (int i = 0; i < model.segment_count(); ++i) {
    q.segment<6>(6 * i) = state.strain[i];
  }
  return q;
}

VecX pack_velocity(const RodModel& model, const RodState& state) {
  VecX qd(model.coord_count());
  qd.head<6>() = state.base_twist;
  for (int i = 0; i < model.segment_count(); ++i) {
    qd.segment<6>(6 + 6 * i) = state.strain_rate[i];
  }
  return qd;
}

void unpack_strain(const RodModel& model, const VecX& q, RodState& state) {
  for (int i = 0; i < model.segment_count(); ++i) {
    state.strain[i] = q.segment<6>(6 * i);
  }
}

void unpack_velocity(const RodModel& model, const VecX& qd, RodState& state) {
  state.base_twist = qd.head<6>();
  for (int i = 0; i < model.segment_count(); ++i) {
    state.strain_rate[i] = qd.segment<6>(6 + 6 * i);
  }
}

void apply_increment(const RodModel& model, RodState& state, const VecX& delta) {
  state.base_pose = compose(state.base_pose, exp_se3(delta.head<6>(), 1.0));
  for (int i = 0; i < model.segment_count(); ++i) {
    state.strain[i] += delta.segment<6>(6 + 6 * i);
  }
  clamp_to_mask(model, state);
}

Kinematics::Kinematics(const RodModel& model, const RodState& state)
    : model_(&model), state_(&state) {
  const int n = model.segment_count();
  if (static_cast<int>(state.strain.size()) != n ||
      static_cast<int>(state.strain_rate.size()) != n) {
    throw DataError("rod state does not match model segment count");
  }
  boundary_pose_.resize(n + 1);
  boundary_twist_.resize(n + 1);
  segment_tangent_.resize(n);
  rate_.resize(n);
  boundary_pose_[0] = state.base_pose;
  boundary_twist_[0] = state.base_twist;
  for (int i = 0; i < n; ++i) {
    rate_[i] = state.strain_rate[i];
    for (int c = 0; c < 6; ++c) {
      if (!model.segment(i).dof_mask[c]) rate_[i](c) = 0.0;
    }
    const double l = model.segment(i).length;
    const Pose step = exp_se3(state.strain[i], l);
    segment_tangent_[i] = tangent_operator(state.strain[i], l);
    boundary_pose_[i + 1] = compose(boundary_pose_[i], step);
    boundary_twist_[i + 1] = adjoint_inverse(step) *
        (boundary_twist_[i] + segment_tangent_[i] * rate_[i]);
  }
}

Pose Kinematics::pose_at(double s) const {
  const auto [i, x] = model_->locate(s);
  return compose(boundary_pose_[i], exp_se3(state_->strain[i], x));
}

Twist Kinematics::velocity_at(double s) const {
  const auto [i, x] = model_->locate(s);
  const Pose step = exp_se3(state_->strain[i], x);
  return adjoint_inverse(step) *
         (boundary_twist_[i] + tangent_operator(state_->strain[i], x) * rate_[i]);
}

MatX Kinematics::jacobian_geometric(double s) const {
  const auto [i, x] = model_->locate(s);
  MatX jac = MatX::Zero(6, model_->coord_count());
  const Pose here = compose(boundary_pose_[i], exp_se3(state_->strain[i], x));
  jac.leftCols<6>() = adjoint_inverse(between(boundary_pose_[0], here));
  for (int j = 0; j < i; ++j) {
    jac.block<6, 6>(0, 6 + 6 * j) =
        adjoint_inverse(between(boundary_pose_[j], here)) * segment_tangent_[j];
  }
  jac.block<6, 6>(0, 6 + 6 * i) =
      adjoint_inverse(exp_se3(state_->strain[i], x)) *
      tangent_operator(state_->strain[i], x);
  return jac;
}

MatX Kinematics::jacobian_at(double s) const {
  MatX jac = jacobian_geometric(s);
  for (int i = 0; i < model_->segment_count(); ++i) {
    for (int c = 0; c < 6; ++c) {
      if (!model_->segment(i).dof_mask[c]) {
        jac.col(model_->strain_coord(i, c)).setZero();
      }
    }
  }
  return jac;
}

Vec3 Kinematics::marker_position(const MarkerAttachment& attach) const {
  const Pose h = pose_at(attach.s);
  return h.position + h.rotation * attach.offset;
}

MatX Kinematics::marker_jacobian(const MarkerAttachment& attach) const {
  const Pose h = pose_at(attach.s);
  const Vec3 p_rel = h.rotation * attach.offset;
  const MatX jac = jacobian_at(attach.s);
  MatX out(3, model_->coord_count());
  // world-frame point velocity: v = R*v_body - [R*offset x] * (R*omega_body)
  out = -hat3(p_rel) * (h.rotation * jac.topRows<3>()) +
        h.rotation * jac.bottomRows<3>();
  return out;
}

Pose pose_at(const RodModel& model, const RodState& state, double s) {
  return Kinematics(model, state).pose_at(s);
}
Twist velocity_at(const RodModel& model, const RodState& state, double s) {
  return Kinematics(model, state).velocity_at(s);
}
MatX jacobian_at(const RodModel& model, const RodState& state, double s) {
  return Kinematics(model, state).jacobian_at(s);
}
Vec3 marker_position(const RodModel& model, const RodState& state,
                     const MarkerAttachment& attach) {
  return Kinematics(model, state).marker_position(attach);
}
MatX marker_jacobian(const RodModel& model, const RodState& state,
                     const MarkerAttachment& attach) {
  return Kinematics(model, state).marker_jacobian(attach);
}

}  // namespace pcsrod
