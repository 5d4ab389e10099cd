#pragma once

#include <array>
#include <string>
#include <vector>

#include "lie.hpp"

namespace pcsrod {

// One constant-strain segment. A fully-false dof_mask denotes a rigid
// segment; masked strain components stay pinned to their rest values.
struct SegmentSpec {
  double length = 0.0;                 // m
  Vec3 second_moments = Vec3::Zero();  // (Jx, Jy, Jz), m^4
  double section_area = 0.0;           // m^2
  double linear_density = 0.0;         // kg/m
  std::array<bool, 6> dof_mask = {false, false, false, false, false, false};
  Twist rest_strain = make_twist(Vec3::Zero(), Vec3(0, 0, 1));
};

struct RodMaterial {
  double youngs_modulus = 0.0;  // Pa
  double poisson_ratio = 0.0;
};

struct MarkerAttachment {
  double s = 0.0;            // material abscissa, m
  Vec3 offset = Vec3::Zero();  // in the local frame at s
  std::string label;
};

// Immutable rod description. Generalized coordinates are laid out as
// [base(6) | segment 0 strains(6) | ... | segment N-1 strains(6)],
// width 6 + 6N; segment strain components are ordered (kx,ky,kz,ux,uy,uz).
class RodModel {
 public:
  RodModel(std::vector<SegmentSpec> segments, RodMaterial material,
           Mat6 base_inertia = Mat6::Zero(),
           std::vector<MarkerAttachment> markers = {}, double contact_s = 0.0);

  int segment_count() const { return static_cast<int>(segments_.size()); }
  const std::vector<SegmentSpec>& segments() const { return segments_; }
  const SegmentSpec& segment(int i) const { return segments_.at(i); }
  const RodMaterial& material() const { return material_; }
  const Mat6& base_inertia() const { return base_inertia_; }
  const std::vector<MarkerAttachment>& markers() const { return markers_; }
  double contact_s() const { return contact_s_; }

  double total_length() const { return boundaries_.back(); }
  // L_i for i in [0, N]; L_0 = 0.
  double boundary(int i) const { return boundaries_.at(i); }

  int coord_count() const { return 6 + 6 * segment_count(); }
  int strain_coord(int segment, int component) const {
    return 6 + 6 * segment + component;
  }

  // Indices into the full coordinate vector of unmasked strain components.
  const std::vector<int>& active_strain_coords() const { return active_strain_; }
  std::vector<int> active_coords(bool base_locked) const;
  // (segment, axis) pairs of unmasked angular strain components, the
  // coordinates carrying stiffness/viscosity coefficients.
  const std::vector<std::pair<int, int>>& active_angular_coords() const {
    return active_angular_;
  }

  // Finds the segment containing s and the local offset into it; s may equal
  // the total length. Out-of-range s raises a data error.
  std::pair<int, double> locate(double s) const;

  // Cross-section spatial inertia per unit length, diag entries
  // (rho Jx, rho Jy, rho Jz, rho A, rho A, rho A) with rho the volumetric
  // density recovered from linear_density / area.
  Vec6 section_inertia(int i) const;

 private:
  std::vector<SegmentSpec> segments_;
  RodMaterial material_;
  Mat6 base_inertia_;
  std::vector<MarkerAttachment> markers_;
  double contact_s_;
  std::vector<double> boundaries_;
  std::vector<int> active_strain_;
  std::vector<std::pair<int, int>> active_angular_;
};

// Floating-base configuration and its rate. Masked strain components must
// equal their rest values (and rates zero); clamp_to_mask enforces this.
struct RodState {
  Pose base_pose;
  Twist base_twist = Twist::Zero();
  std::vector<Twist> strain;
  std::vector<Twist> strain_rate;
};

RodState rest_state(const RodModel& model);
void clamp_to_mask(const RodModel& model, RodState& state);

VecX pack_strain(const RodModel& model, const RodState& state);       // 6N
VecX pack_velocity(const RodModel& model, const RodState& state);     // 6+6N
void unpack_strain(const RodModel& model, const VecX& q, RodState& state);
void unpack_velocity(const RodModel& model, const VecX& qd, RodState& state);

// Applies a full-width increment: base pose retracted on the right by
// exp of the base block, strains shifted additively, masks re-applied.
void apply_increment(const RodModel& model, RodState& state, const VecX& delta);

// Per-state kinematics with segment-boundary poses, cumulative tangent
// operators and boundary twists precomputed. States are value types, so one
// of these is built per (state, frame) and shared by all queries.
class Kinematics {
 public:
  Kinematics(const RodModel& model, const RodState& state);

  const RodModel& model() const { return *model_; }
  const RodState& state() const { return *state_; }

  // Pose of the material frame at boundary L_i (i in [0, N]).
  const Pose& boundary_pose(int i) const { return boundary_pose_.at(i); }
  const Twist& boundary_twist(int i) const { return boundary_twist_.at(i); }
  // Tangent operator of segment i over its full length.
  const Mat6& segment_tangent(int i) const { return segment_tangent_.at(i); }
  // Masked strain rate of segment i (masked components zeroed).
  const Twist& segment_rate(int i) const { return rate_.at(i); }

  Pose pose_at(double s) const;
  Twist velocity_at(double s) const;

  // Body-frame geometric Jacobian, 6 x (6+6N): eta(s) = J * [eta0; xi_dot].
  // Masked columns are zeroed; jacobian_geometric keeps them.
  MatX jacobian_at(double s) const;
  MatX jacobian_geometric(double s) const;

  Vec3 marker_position(const MarkerAttachment& attach) const;
  // World-frame positional Jacobian of the marker, 3 x (6+6N), masked
  // columns zeroed.
  MatX marker_jacobian(const MarkerAttachment& attach) const;

 private:
  const RodModel* model_;
  const RodState* state_;
  std::vector<Pose> boundary_pose_;
  std::vector<Twist> boundary_twist_;
  std::vector<Mat6> segment_tangent_;
  std::vector<Twist> rate_;
};

// Convenience wrappers matching the one-shot call style.
Pose pose_at(const RodModel& model, const RodState& state, double s);
Twist velocity_at(const RodModel& model, const RodState& state, double s);
MatX jacobian_at(const RodModel& model, const RodState& state, double s);
Vec3 marker_position(const RodModel& model, const RodState& state,
                     const MarkerAttachment& attach);
MatX marker_jacobian(const RodModel& model, const RodState& state,
                     const MarkerAttachment& attach);

}  // namespace pcsrod
