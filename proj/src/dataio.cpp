#include "dataio.hpp"

#include <json.hpp>

#include <Eigen/Geometry>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "errors.hpp"

namespace pcsrod {

using nlohmann::json;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

struct CsvTable {
  std::string schema;
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::string> columns;
  MatX data;  // NaN where a field was empty or "nan"

  std::string meta_value(const std::string& key, const std::string& fallback = "") const {
    for (const auto& [k, v] : meta) {
      if (k == key) return v;
    }
    return fallback;
  }
};

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.push_back("");
  return out;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  CsvTable table;
  std::string line;
  int lineno = 0;
  std::vector<std::vector<double>> rows;
  bool have_columns = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::string body = line.substr(1);
      const auto colon = body.find(':');
      if (table.schema.empty() && colon == std::string::npos) {
        table.schema = body;
        while (!table.schema.empty() && table.schema.front() == ' ') {
          table.schema.erase(table.schema.begin());
        }
      } else if (colon != std::string::npos) {
        std::string key = body.substr(0, colon);
        std::string value = body.substr(colon + 1);
        auto trim = [](std::string& s) {
          while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.erase(s.begin());
          while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.pop_back();
        };
        trim(key);
        trim(value);
        table.meta.emplace_back(key, value);
      }
      continue;
    }
    if (!have_columns) {
      table.columns = split(line, ',');
      have_columns = true;
      continue;
    }
    const auto fields = split(line, ',');
    if (fields.size() != table.columns.size()) {
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": expected " + std::to_string(table.columns.size()) +
                      " fields, got " + std::to_string(fields.size()));
    }
    std::vector<double> row(fields.size());
    for (std::size_t i = 0; i < fields.size(); ++i) {
      const std::string& f = fields[i];
      if (f.empty() || f == "nan" || f == "NaN") {
        row[i] = kNan;
        continue;
      }
      char* end = nullptr;
      row[i] = std::strtod(f.c_str(), &end);
      if (end == f.c_str() || *end != '\0') {
        throw DataError(path + ":" + std::to_string(lineno) +
                        ": malformed number '" + f + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  if (!have_columns) throw DataError(path + ": no column header");
  table.data.resize(rows.size(), table.columns.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
      table.data(r, c) = rows[r][c];
    }
  }
  return table;
}

void write_csv(const std::string& path, const std::string& schema,
               const std::vector<std::pair<std::string, std::string>>& meta,
               const std::vector<std::string>& columns, const MatX& data) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "# " << schema << "\n";
  for (const auto& [k, v] : meta) out << "# " << k << ": " << v << "\n";
  for (std::size_t c = 0; c < columns.size(); ++c) {
    out << columns[c] << (c + 1 < columns.size() ? "," : "");
  }
  out << "\n";
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    for (Eigen::Index c = 0; c < data.cols(); ++c) {
      const double v = data(r, c);
      if (std::isnan(v)) {
        // empty field marks a gap
      } else {
        out << format_double(v);
      }
      out << (c + 1 < data.cols() ? "," : "");
    }
    out << "\n";
  }
  if (!out) throw DataError("write failed for '" + path + "'");
}

double require_rate(const CsvTable& t, const std::string& path) {
  const std::string rate = t.meta_value("rate_hz");
  if (rate.empty()) throw DataError(path + ": missing rate_hz header");
  const double r = std::strtod(rate.c_str(), nullptr);
  if (!(r > 0)) throw DataError(path + ": bad rate_hz");
  return r;
}

json load_json(const std::string& path) {
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

Vec3 to_vec3(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(what + ": expected 3 numbers");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

Vec6 to_vec6(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 6) throw ConfigError(what + ": expected 6 numbers");
  Vec6 v;
  for (int i = 0; i < 6; ++i) v(i) = j[i].get<double>();
  return v;
}

}  // namespace

MarkerFile load_markers(const std::string& path) {
  const CsvTable t = read_csv(path);
  if (t.schema != "pcsrod-markers v1") {
    throw DataError(path + ": not a marker file (schema '" + t.schema + "')");
  }
  MarkerFile out;
  out.rate_hz = require_rate(t, path);
  const std::string units = t.meta_value("units", "m");
  double scale = 1.0;
  if (units == "mm") {
    scale = 1e-3;  // converted on the header flag only, never by magnitude
  } else if (units != "m") {
    throw DataError(path + ": unknown units '" + units + "'");
  }
  if (t.columns.empty() || t.columns[0] != "time") {
    throw DataError(path + ": first column must be time");
  }
  if ((t.columns.size() - 1) % 3 != 0) {
    throw DataError(path + ": marker columns must come in x/y/z triples");
  }
  const int m = static_cast<int>((t.columns.size() - 1) / 3);
  for (int i = 0; i < m; ++i) {
    const std::string& cx = t.columns[1 + 3 * i];
    if (cx.size() < 2 || cx.substr(cx.size() - 2) != "_x") {
      throw DataError(path + ": marker column '" + cx + "' should end in _x");
    }
    out.labels.push_back(cx.substr(0, cx.size() - 2));
  }
  for (std::size_t i = 0; i < out.labels.size(); ++i) {
    for (std::size_t j = i + 1; j < out.labels.size(); ++j) {
      if (out.labels[i] == out.labels[j]) {
        throw DataError(path + ": duplicate marker label " + out.labels[i]);
      }
    }
  }
  out.time.assign(t.data.col(0).begin(), t.data.col(0).end());
  out.positions = scale * t.data.rightCols(3 * m);
  return out;
}

void save_markers(const MarkerFile& file, const std::string& path) {
  std::vector<std::string> cols{"time"};
  for (const std::string& l : file.labels) {
    cols.push_back(l + "_x");
    cols.push_back(l + "_y");
    cols.push_back(l + "_z");
  }
  MatX data(file.positions.rows(), 1 + file.positions.cols());
  for (std::size_t r = 0; r < file.time.size(); ++r) data(r, 0) = file.time[r];
  data.rightCols(file.positions.cols()) = file.positions;
  write_csv(path, "pcsrod-markers v1",
            {{"rate_hz", format_double(file.rate_hz)}, {"units", "m"}}, cols, data);
}

ForceFile load_forces(const std::string& path) {
  const CsvTable t = read_csv(path);
  if (t.schema != "pcsrod-forces v1") {
    throw DataError(path + ": not a force file (schema '" + t.schema + "')");
  }
  ForceFile out;
  out.rate_hz = require_rate(t, path);
  out.wrench_s = std::strtod(t.meta_value("wrench_s", "0").c_str(), nullptr);
  const std::string rot = t.meta_value("plate_rotation");
  if (!rot.empty()) {
    std::stringstream ss(rot);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        if (!(ss >> out.plate_rotation(r, c))) {
          throw DataError(path + ": plate_rotation needs 9 numbers");
        }
      }
    }
  }
  const std::string origin = t.meta_value("plate_origin");
  if (!origin.empty()) {
    std::stringstream ss(origin);
    ss >> out.plate_origin.x() >> out.plate_origin.y() >> out.plate_origin.z();
  }
  const std::vector<std::string> expect{"time", "nx", "ny", "nz", "fx", "fy", "fz"};
  if (t.columns != expect) {
    throw DataError(path + ": force columns must be time,nx,ny,nz,fx,fy,fz");
  }
  out.time.assign(t.data.col(0).begin(), t.data.col(0).end());
  out.wrench.resize(t.data.rows(), 6);
  for (Eigen::Index r = 0; r < t.data.rows(); ++r) {
    const Vec3 n_plate = t.data.row(r).segment<3>(1);
    const Vec3 f_plate = t.data.row(r).segment<3>(4);
    const Vec3 f_world = out.plate_rotation * f_plate;
    const Vec3 n_world = out.plate_rotation * n_plate + out.plate_origin.cross(f_world);
    out.wrench.row(r) << n_world.transpose(), f_world.transpose();
  }
  return out;
}

void save_forces(const ForceFile& file, const std::string& path) {
  // wrench is stored in world axes; an identity plate transform is written
  MatX data(file.wrench.rows(), 7);
  for (std::size_t r = 0; r < file.time.size(); ++r) data(r, 0) = file.time[r];
  data.rightCols(6) = file.wrench;
  write_csv(path, "pcsrod-forces v1",
            {{"rate_hz", format_double(file.rate_hz)},
             {"wrench_s", format_double(file.wrench_s)}},
            {"time", "nx", "ny", "nz", "fx", "fy", "fz"}, data);
}

MarkerFile gap_fill(const MarkerFile& file, int max_gap) {
  MarkerFile out = file;
  const Eigen::Index n = out.positions.rows();
  for (Eigen::Index c = 0; c < out.positions.cols(); ++c) {
    Eigen::Index i = 0;
    while (i < n) {
      if (!std::isnan(out.positions(i, c))) {
        ++i;
        continue;
      }
      Eigen::Index j = i;
      while (j < n && std::isnan(out.positions(j, c))) ++j;
      const Eigen::Index len = j - i;
      const bool support = i >= 2 && j + 1 < n &&
                           !std::isnan(out.positions(i - 2, c)) &&
                           !std::isnan(out.positions(i - 1, c)) &&
                           !std::isnan(out.positions(j, c)) &&
                           !std::isnan(out.positions(j + 1, c));
      if (len <= max_gap && support) {
        // cubic Lagrange through the two valid samples on each side
        const double t0 = static_cast<double>(i - 2), y0 = out.positions(i - 2, c);
        const double t1 = static_cast<double>(i - 1), y1 = out.positions(i - 1, c);
        const double t2 = static_cast<double>(j), y2 = out.positions(j, c);
        const double t3 = static_cast<double>(j + 1), y3 = out.positions(j + 1, c);
        for (Eigen::Index k = i; k < j; ++k) {
          const double t = static_cast<double>(k);
          const double l0 = (t - t1) * (t - t2) * (t - t3) /
                            ((t0 - t1) * (t0 - t2) * (t0 - t3));
          const double l1 = (t - t0) * (t - t2) * (t - t3) /
                            ((t1 - t0) * (t1 - t2) * (t1 - t3));
          const double l2 = (t - t0) * (t - t1) * (t - t3) /
                            ((t2 - t0) * (t2 - t1) * (t2 - t3));
          const double l3 = (t - t0) * (t - t1) * (t - t2) /
                            ((t3 - t0) * (t3 - t1) * (t3 - t2));
          out.positions(k, c) = l0 * y0 + l1 * y1 + l2 * y2 + l3 * y3;
        }
      }
      i = j;
    }
  }
  return out;
}

FrameSeries synchronize(const MarkerFile& markers, const ForceFile& forces,
                        double lag_s) {
  if (markers.time.empty() || forces.time.empty()) {
    throw DataError("synchronize: empty stream");
  }
  const double ratio = forces.rate_hz / markers.rate_hz;
  const int r = static_cast<int>(std::lround(ratio));
  if (r < 1 || std::abs(ratio - r) > 1e-9) {
    throw DataError("synchronize: force rate must be an integer multiple of the marker rate");
  }
  // anti-alias by block averaging, then place each block at the marker clock
  const int nf = static_cast<int>(forces.time.size()) / r;
  if (nf == 0) throw DataError("synchronize: force stream shorter than one marker frame");
  MatX decimated(nf, 6);
  std::vector<double> ftime(nf);
  for (int k = 0; k < nf; ++k) {
    decimated.row(k) = forces.wrench.middleRows(k * r, r).colwise().mean();
    ftime[k] = forces.time[k * r] + lag_s;
  }

  const double dt = 1.0 / markers.rate_hz;
  // integer frame offset of the decimated force stream relative to markers
  const double shift = (ftime[0] - markers.time[0]) / dt;
  const int offset = static_cast<int>(std::lround(shift));
  const int m_begin = std::max(0, offset);
  const int f_begin = std::max(0, -offset);
  const int count = std::min(static_cast<int>(markers.time.size()) - m_begin,
                             nf - f_begin);
  if (count <= 0) throw DataError("synchronize: streams do not overlap");

  FrameSeries out;
  out.rate_hz = markers.rate_hz;
  out.marker_labels = markers.labels;
  out.wrench_s = forces.wrench_s;
  out.markers.resize(count, markers.positions.cols());
  out.wrench.resize(count, 6);
  for (int i = 0; i < count; ++i) {
    out.time.push_back(markers.time[m_begin + i]);
    out.markers.row(i) = markers.positions.row(m_begin + i);
    out.wrench.row(i) = decimated.row(f_begin + i);
  }
  return out;
}

RodModel load_rod_model(const std::string& path) {
  const json j = load_json(path);
  if (!j.contains("schema_version") || j["schema_version"].get<int>() != 1) {
    throw ConfigError(path + ": unsupported rod schema_version");
  }
  RodMaterial mat;
  const json& jm = j.at("material");
  mat.youngs_modulus = jm.at("youngs_modulus").get<double>();
  mat.poisson_ratio = jm.at("poisson_ratio").get<double>();

  std::vector<SegmentSpec> segs;
  for (const json& js : j.at("segments")) {
    SegmentSpec s;
    s.length = js.at("length").get<double>();
    s.second_moments = to_vec3(js.at("second_moments"), "second_moments");
    s.section_area = js.at("section_area").get<double>();
    s.linear_density = js.at("linear_density").get<double>();
    if (js.contains("dof_mask")) {
      const json& jd = js["dof_mask"];
      if (!jd.is_array() || jd.size() != 6) {
        throw ConfigError(path + ": dof_mask needs 6 entries");
      }
      for (int i = 0; i < 6; ++i) s.dof_mask[i] = jd[i].get<int>() != 0;
    }
    if (js.contains("rest_strain")) {
      s.rest_strain = to_vec6(js["rest_strain"], "rest_strain");
    }
    segs.push_back(s);
  }

  Mat6 base_inertia = Mat6::Zero();
  if (j.contains("base_inertia")) {
    const json& jb = j["base_inertia"];
    const double mass = jb.at("mass").get<double>();
    const Vec3 com = jb.contains("com") ? to_vec3(jb["com"], "com") : Vec3::Zero();
    Mat3 inertia = Mat3::Zero();
    if (jb.contains("rotational_inertia")) {
      const json& ji = jb["rotational_inertia"];
      if (ji.size() == 3) {
        inertia.diagonal() = to_vec3(ji, "rotational_inertia");
      } else if (ji.size() == 9) {
        for (int r = 0; r < 3; ++r)
          for (int c = 0; c < 3; ++c) inertia(r, c) = ji[3 * r + c].get<double>();
      } else {
        throw ConfigError(path + ": rotational_inertia needs 3 or 9 entries");
      }
    }
    const Mat3 cx = hat3(com);
    base_inertia.topLeftCorner<3, 3>() = inertia - mass * cx * cx;
    base_inertia.topRightCorner<3, 3>() = mass * cx;
    base_inertia.bottomLeftCorner<3, 3>() = -mass * cx;
    base_inertia.bottomRightCorner<3, 3>() = mass * Mat3::Identity();
  }

  std::vector<MarkerAttachment> markers;
  if (j.contains("markers")) {
    int idx = 0;
    for (const json& jk : j["markers"]) {
      MarkerAttachment m;
      m.s = jk.at("s").get<double>();
      m.offset = to_vec3(jk.at("offset"), "marker offset");
      m.label = jk.contains("label") ? jk["label"].get<std::string>()
                                     : "m" + std::to_string(idx);
      markers.push_back(m);
      ++idx;
    }
  }
  const double contact_s = j.value("contact_s", 0.0);
  return RodModel(std::move(segs), mat, base_inertia, std::move(markers), contact_s);
}

void save_rod_model(const RodModel& model, const std::string& path) {
  json j;
  j["schema_version"] = 1;
  j["material"] = {{"youngs_modulus", model.material().youngs_modulus},
                   {"poisson_ratio", model.material().poisson_ratio}};
  j["contact_s"] = model.contact_s();
  json segs = json::array();
  for (const SegmentSpec& s : model.segments()) {
    json js;
    js["length"] = s.length;
    js["second_moments"] = {s.second_moments.x(), s.second_moments.y(),
                            s.second_moments.z()};
    js["section_area"] = s.section_area;
    js["linear_density"] = s.linear_density;
    js["dof_mask"] = {int(s.dof_mask[0]), int(s.dof_mask[1]), int(s.dof_mask[2]),
                      int(s.dof_mask[3]), int(s.dof_mask[4]), int(s.dof_mask[5])};
    js["rest_strain"] = {s.rest_strain(0), s.rest_strain(1), s.rest_strain(2),
                         s.rest_strain(3), s.rest_strain(4), s.rest_strain(5)};
    segs.push_back(js);
  }
  j["segments"] = segs;
  const Mat6& mb = model.base_inertia();
  const double mass = mb(3, 3);
  json jb;
  jb["mass"] = mass;
  Vec3 com = Vec3::Zero();
  if (mass > 0) com = vee3(Mat3(mb.topRightCorner<3, 3>())) / mass;
  jb["com"] = {com.x(), com.y(), com.z()};
  const Mat3 cx = hat3(com);
  const Mat3 inertia = mb.topLeftCorner<3, 3>() + mass * cx * cx;
  json ji = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) ji.push_back(inertia(r, c));
  jb["rotational_inertia"] = ji;
  j["base_inertia"] = jb;
  json markers = json::array();
  for (const MarkerAttachment& m : model.markers()) {
    markers.push_back({{"s", m.s},
                       {"offset", {m.offset.x(), m.offset.y(), m.offset.z()}},
                       {"label", m.label}});
  }
  j["markers"] = markers;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

ViscoElasticity load_visco(const std::string& path, int expected_segments) {
  const json j = load_json(path);
  if (!j.contains("schema_version") || j["schema_version"].get<int>() != 1) {
    throw ConfigError(path + ": unsupported viscoelasticity schema_version");
  }
  const json& segs = j.at("segments");
  const int n = static_cast<int>(segs.size());
  if (expected_segments >= 0 && n != expected_segments) {
    throw ConfigError(path + ": expected " + std::to_string(expected_segments) +
                      " segments, file has " + std::to_string(n));
  }
  ViscoElasticity ve = ViscoElasticity::Zero(n);
  for (int i = 0; i < n; ++i) {
    const Vec3 k = to_vec3(segs[i].at("stiffness"), "stiffness");
    const Vec3 d = to_vec3(segs[i].at("damping"), "damping");
    ve.stiffness.row(i) = k.transpose();
    ve.damping.row(i) = d.transpose();
  }
  if (ve.stiffness.minCoeff() < 0 || ve.damping.minCoeff() < 0) {
    throw ConfigError(path + ": coefficients must be nonnegative");
  }
  return ve;
}

void save_visco(const ViscoElasticity& ve, const std::string& path) {
  json j;
  j["schema_version"] = 1;
  json segs = json::array();
  for (Eigen::Index i = 0; i < ve.stiffness.rows(); ++i) {
    segs.push_back(
        {{"stiffness", {ve.stiffness(i, 0), ve.stiffness(i, 1), ve.stiffness(i, 2)}},
         {"damping", {ve.damping(i, 0), ve.damping(i, 1), ve.damping(i, 2)}}});
  }
  j["segments"] = segs;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

namespace {

const char* phase_name(PhaseLabel p) {
  switch (p) {
    case PhaseLabel::Static:
      return "1";
    case PhaseLabel::Dynamic:
      return "2";
    case PhaseLabel::Excluded:
      return "3";
    default:
      return "0";
  }
}

}  // namespace

void save_series(const FrameSeries& series, const std::string& path) {
  const int n = series.frame_count();
  std::vector<std::string> cols{"time"};
  const int nseg = series.has_strain() ? static_cast<int>(series.strain.cols()) / 6 : 0;

  const bool base = !series.base_pose.empty();
  if (base) {
    for (const char* c : {"base_qw", "base_qx", "base_qy", "base_qz",
                          "base_px", "base_py", "base_pz"}) {
      cols.push_back(c);
    }
  }
  auto push_block = [&](const char* prefix, int count) {
    for (int i = 0; i < count; ++i) {
      cols.push_back(std::string(prefix) + std::to_string(i));
    }
  };
  if (series.base_twist.size() > 0) push_block("eta0_", 6);
  if (series.base_acc.size() > 0) push_block("deta0_", 6);
  const char* comp[6] = {"kx", "ky", "kz", "ux", "uy", "uz"};
  auto push_strain = [&](const std::string& prefix) {
    for (int i = 0; i < nseg; ++i) {
      for (int c = 0; c < 6; ++c) {
        cols.push_back(prefix + std::to_string(i) + "_" + comp[c]);
      }
    }
  };
  if (series.has_strain()) push_strain("s");
  if (series.has_rates()) push_strain("d_s");
  if (series.has_acc()) push_strain("dd_s");
  if (series.has_markers()) {
    for (std::size_t m = 0; m < series.marker_labels.size(); ++m) {
      cols.push_back(series.marker_labels[m] + "_x");
      cols.push_back(series.marker_labels[m] + "_y");
      cols.push_back(series.marker_labels[m] + "_z");
    }
  }
  if (series.has_wrench()) {
    for (const char* c : {"w_nx", "w_ny", "w_nz", "w_fx", "w_fy", "w_fz"}) {
      cols.push_back(c);
    }
  }
  const bool phase = !series.phase.empty();
  if (phase) cols.push_back("phase");

  MatX data(n, cols.size());
  for (int r = 0; r < n; ++r) {
    int c = 0;
    data(r, c++) = series.time[r];
    if (base) {
      const Eigen::Quaterniond q(series.base_pose[r].rotation);
      data(r, c++) = q.w();
      data(r, c++) = q.x();
      data(r, c++) = q.y();
      data(r, c++) = q.z();
      data(r, c++) = series.base_pose[r].position.x();
      data(r, c++) = series.base_pose[r].position.y();
      data(r, c++) = series.base_pose[r].position.z();
    }
    auto copy_row = [&](const MatX& block) {
      for (Eigen::Index i = 0; i < block.cols(); ++i) data(r, c++) = block(r, i);
    };
    if (series.base_twist.size() > 0) copy_row(series.base_twist);
    if (series.base_acc.size() > 0) copy_row(series.base_acc);
    if (series.has_strain()) copy_row(series.strain);
    if (series.has_rates()) copy_row(series.strain_rate);
    if (series.has_acc()) copy_row(series.strain_acc);
    if (series.has_markers()) copy_row(series.markers);
    if (series.has_wrench()) copy_row(series.wrench);
    if (phase) data(r, c++) = std::atof(phase_name(series.phase[r]));
  }
  std::vector<std::pair<std::string, std::string>> meta{
      {"rate_hz", format_double(series.rate_hz)},
      {"segments", std::to_string(nseg)},
      {"wrench_s", format_double(series.wrench_s)}};
  write_csv(path, "pcsrod-series v1", meta, cols, data);
}

FrameSeries load_series(const std::string& path) {
  const CsvTable t = read_csv(path);
  if (t.schema != "pcsrod-series v1") {
    throw DataError(path + ": not a series file (schema '" + t.schema + "')");
  }
  FrameSeries out;
  out.rate_hz = std::strtod(t.meta_value("rate_hz", "0").c_str(), nullptr);
  out.wrench_s = std::strtod(t.meta_value("wrench_s", "0").c_str(), nullptr);
  const int n = static_cast<int>(t.data.rows());

  auto col_index = [&](const std::string& name) {
    for (std::size_t i = 0; i < t.columns.size(); ++i) {
      if (t.columns[i] == name) return static_cast<int>(i);
    }
    return -1;
  };
  if (col_index("time") != 0) throw DataError(path + ": first column must be time");
  out.time.assign(t.data.col(0).begin(), t.data.col(0).end());

  if (col_index("base_qw") >= 0) {
    const int c = col_index("base_qw");
    out.base_pose.resize(n);
    for (int r = 0; r < n; ++r) {
      Eigen::Quaterniond q(t.data(r, c), t.data(r, c + 1), t.data(r, c + 2),
                           t.data(r, c + 3));
      q.normalize();
      out.base_pose[r].rotation = q.toRotationMatrix();
      out.base_pose[r].position =
          Vec3(t.data(r, c + 4), t.data(r, c + 5), t.data(r, c + 6));
    }
  }
  auto read_block = [&](const std::string& first, int count, MatX& dst) {
    const int c = col_index(first);
    if (c < 0) return;
    dst.resize(n, count);
    dst = t.data.middleCols(c, count);
  };
  read_block("eta0_0", 6, out.base_twist);
  read_block("deta0_0", 6, out.base_acc);
  const int nseg = std::atoi(t.meta_value("segments", "0").c_str());
  if (nseg > 0) {
    read_block("s0_kx", 6 * nseg, out.strain);
    read_block("d_s0_kx", 6 * nseg, out.strain_rate);
    read_block("dd_s0_kx", 6 * nseg, out.strain_acc);
  }
  // markers: every column pair label_x/_y/_z between known blocks
  for (std::size_t i = 0; i < t.columns.size(); ++i) {
    const std::string& name = t.columns[i];
    if (name.size() > 2 && name.substr(name.size() - 2) == "_x" &&
        name.rfind("s", 0) != 0 && name.rfind("d_s", 0) != 0 &&
        name.rfind("dd_s", 0) != 0 && name.rfind("base", 0) != 0 &&
        name.rfind("w_", 0) != 0) {
      out.marker_labels.push_back(name.substr(0, name.size() - 2));
    }
  }
  if (!out.marker_labels.empty()) {
    read_block(out.marker_labels[0] + "_x",
               static_cast<int>(3 * out.marker_labels.size()), out.markers);
  }
  read_block("w_nx", 6, out.wrench);
  const int pc = col_index("phase");
  if (pc >= 0) {
    out.phase.resize(n);
    for (int r = 0; r < n; ++r) {
      out.phase[r] = static_cast<PhaseLabel>(static_cast<int>(t.data(r, pc)));
    }
  }
  return out;
}

}  // namespace pcsrod
