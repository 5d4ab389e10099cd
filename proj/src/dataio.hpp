#pragma once

#include <string>
#include <vector>

#include "dynamics.hpp"
#include "series.hpp"

namespace pcsrod {

// Marker trajectories; NaN entries are gaps. Column layout is
// (label_x, label_y, label_z) per marker, in label order.
struct MarkerFile {
  double rate_hz = 0.0;
  std::vector<std::string> labels;
  std::vector<double> time;
  MatX positions;  // T x 3M, meters
};

// Wrench time series from a force plate, already rotated into world axes.
struct ForceFile {
  double rate_hz = 0.0;
  std::vector<double> time;
  MatX wrench;  // T x 6 (moment, force)
  double wrench_s = 0.0;
  Mat3 plate_rotation = Mat3::Identity();
  Vec3 plate_origin = Vec3::Zero();
};

MarkerFile load_markers(const std::string& path);
void save_markers(const MarkerFile& file, const std::string& path);
ForceFile load_forces(const std::string& path);
void save_forces(const ForceFile& file, const std::string& path);

// Cubic interpolation across gaps of at most max_gap frames with two valid
// samples on each side; longer gaps stay flagged.
MarkerFile gap_fill(const MarkerFile& file, int max_gap = 10);

// Force stream decimated to the marker rate by block averaging, shifted by
// lag (positive lag: forces started later), paired frame by frame.
FrameSeries synchronize(const MarkerFile& markers, const ForceFile& forces,
                        double lag_s);

RodModel load_rod_model(const std::string& path);
void save_rod_model(const RodModel& model, const std::string& path);

ViscoElasticity load_visco(const std::string& path, int expected_segments = -1);
void save_visco(const ViscoElasticity& ve, const std::string& path);

FrameSeries load_series(const std::string& path);
void save_series(const FrameSeries& series, const std::string& path);

// shortest round-trip-exact representation
std::string format_double(double v);

}  // namespace pcsrod
