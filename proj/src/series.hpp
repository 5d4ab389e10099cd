#pragma once

#include <string>
#include <vector>

#include "rod_model.hpp"

namespace pcsrod {

enum class PhaseLabel : int { Unlabeled = 0, Static = 1, Dynamic = 2, Excluded = 3 };

// Time-synchronized record of one measurement or simulation run. Blocks are
// optional: an empty matrix means the block is absent. Row k of every block
// belongs to time[k].
struct FrameSeries {
  double rate_hz = 0.0;
  std::vector<double> time;

  std::vector<std::string> marker_labels;
  MatX markers;  // T x 3M, world positions, NaN marks a gap

  MatX wrench;           // T x 6 (moment, force), world axes at wrench_s
  double wrench_s = 0.0;  // material abscissa the wrench acts on

  std::vector<Pose> base_pose;  // empty = base at identity / locked
  MatX base_twist;              // T x 6
  MatX base_acc;                // T x 6

  MatX strain;       // T x 6N
  MatX strain_rate;  // T x 6N
  MatX strain_acc;   // T x 6N

  std::vector<PhaseLabel> phase;

  int frame_count() const { return static_cast<int>(time.size()); }
  bool has_markers() const { return markers.size() > 0; }
  bool has_wrench() const { return wrench.size() > 0; }
  bool has_strain() const { return strain.size() > 0; }
  bool has_rates() const { return strain_rate.size() > 0; }
  bool has_acc() const { return strain_acc.size() > 0; }
};

// Rod state at frame k (strain + rates + base motion where present).
RodState state_at(const RodModel& model, const FrameSeries& series, int k);
// Generalized acceleration [base_acc; strain_acc] at frame k; zero blocks
// where the series carries none.
VecX acceleration_at(const RodModel& model, const FrameSeries& series, int k);

}  // namespace pcsrod
