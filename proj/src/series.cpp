#include "series.hpp"

#include "errors.hpp"

namespace pcsrod {

RodState state_at(const RodModel& model, const FrameSeries& series, int k) {
  if (k < 0 || k >= series.frame_count()) {
    throw DataError("frame index out of range");
  }
  const int n = model.segment_count();
  if (!series.has_strain() || series.strain.cols() != 6 * n) {
    throw DataError("series has no strain block matching the model");
  }
  RodState st = rest_state(model);
  if (!series.base_pose.empty()) st.base_pose = series.base_pose[k];
  if (series.base_twist.size() > 0) st.base_twist = series.base_twist.row(k);
  for (int i = 0; i < n; ++i) {
    st.strain[i] = series.strain.row(k).segment<6>(6 * i);
    if (series.has_rates()) {
      st.strain_rate[i] = series.strain_rate.row(k).segment<6>(6 * i);
    }
  }
  clamp_to_mask(model, st);
  return st;
}

VecX acceleration_at(const RodModel& model, const FrameSeries& series, int k) {
  VecX qdd = VecX::Zero(model.coord_count());
  if (series.base_acc.size() > 0) qdd.head<6>() = series.base_acc.row(k);
  if (series.has_acc()) qdd.tail(6 * model.segment_count()) = series.strain_acc.row(k);
  // masked coordinates cannot accelerate
  for (int i = 0; i < model.segment_count(); ++i) {
    for (int c = 0; c < 6; ++c) {
      if (!model.segment(i).dof_mask[c]) qdd(model.strain_coord(i, c)) = 0.0;
    }
  }
  return qdd;
}

}  // namespace pcsrod
