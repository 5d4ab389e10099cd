#include "pcsrod/pcsrod.h"

#include <json.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dataio.hpp"
#include "dynamics.hpp"
#include "errors.hpp"
#include "estimator.hpp"
#include "ik.hpp"
#include "parallel.hpp"
#include "synth.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

struct pcsrod_model {
  pcsrod::RodModel value;
};
struct pcsrod_series {
  pcsrod::FrameSeries value;
};
struct pcsrod_visco {
  pcsrod::ViscoElasticity value;
};

namespace {

thread_local std::string g_last_error;

pcsrod_status status_from(const pcsrod::Error& e) {
  g_last_error = e.what();
  switch (e.code()) {
    case pcsrod::ErrorCode::Config:
      return PCSROD_ERR_CONFIG;
    case pcsrod::ErrorCode::Data:
      return PCSROD_ERR_DATA;
    case pcsrod::ErrorCode::Instability:
      return PCSROD_ERR_INSTABILITY;
    default:
      return PCSROD_ERR_NUMERICAL;
  }
}

template <typename Fn>
pcsrod_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return PCSROD_OK;
  } catch (const pcsrod::Error& e) {
    return status_from(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return PCSROD_ERR_NUMERICAL;
  } catch (...) {
    g_last_error = "unknown error";
    return PCSROD_ERR_NUMERICAL;
  }
}

pcsrod_status invalid(const char* what) {
  g_last_error = what;
  return PCSROD_ERR_INVALID;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

pcsrod::Vec3 vec3_or(const double* v, const pcsrod::Vec3& fallback) {
  return v ? pcsrod::Vec3(v[0], v[1], v[2]) : fallback;
}

json coefficient_table(const pcsrod::EstimationResult& res, char phase) {
  json coeffs = json::array();
  for (const pcsrod::CoefficientEstimate& ce : res.coefficients) {
    coeffs.push_back({{"segment", ce.segment},
                      {"axis", ce.axis},
                      {"value", ce.value},
                      {"residual_rms", ce.residual_rms},
                      {"excitation", ce.excitation},
                      {"identifiable", ce.identifiable},
                      {"excluded", ce.excluded}});
  }
  return json{{"phase", std::string(1, phase)},
              {"frames_used", res.frames_used},
              {"units", phase == 'K' ? "N*m^2 per (rad/m)" : "N*m^2*s per (rad/m)"},
              {"coefficients", coeffs}};
}

pcsrod::Scenario load_scenario_with_seed(const char* path, long long seed_override) {
  pcsrod::Scenario sc = pcsrod::load_scenario(path);
  if (seed_override >= 0) {
    sc.noise.seed = static_cast<std::uint64_t>(seed_override);
  }
  return sc;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw pcsrod::DataError("cannot write '" + path.string() + "'");
  out << text;
}

}  // namespace

extern "C" {

const char* pcsrod_version(void) { return "0.1.0"; }

const char* pcsrod_last_error(void) { return g_last_error.c_str(); }

void pcsrod_set_threads(int n) { pcsrod::set_thread_count(n); }

void pcsrod_string_free(char* s) { std::free(s); }

pcsrod_status pcsrod_model_load(const char* path, pcsrod_model** out) {
  if (!path || !out) return invalid("model_load: null argument");
  return guarded([&] { *out = new pcsrod_model{pcsrod::load_rod_model(path)}; });
}

void pcsrod_model_free(pcsrod_model* model) { delete model; }

int pcsrod_model_segment_count(const pcsrod_model* model) {
  return model ? model->value.segment_count() : -1;
}

int pcsrod_model_marker_count(const pcsrod_model* model) {
  return model ? static_cast<int>(model->value.markers().size()) : -1;
}

double pcsrod_model_total_length(const pcsrod_model* model) {
  return model ? model->value.total_length() : -1.0;
}

double pcsrod_model_contact_s(const pcsrod_model* model) {
  return model ? model->value.contact_s() : -1.0;
}

pcsrod_status pcsrod_model_pose(const pcsrod_model* model, const double* strains,
                                double s, double rotation[9], double position[3]) {
  if (!model || !strains || !rotation || !position) {
    return invalid("model_pose: null argument");
  }
  return guarded([&] {
    pcsrod::RodState st = pcsrod::rest_state(model->value);
    for (int i = 0; i < model->value.segment_count(); ++i) {
      st.strain[i] = pcsrod::Vec6(Eigen::Map<const pcsrod::Vec6>(strains + 6 * i));
    }
    clamp_to_mask(model->value, st);
    const pcsrod::Pose pose = pcsrod::pose_at(model->value, st, s);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) rotation[3 * r + c] = pose.rotation(r, c);
      position[r] = pose.position(r);
    }
  });
}

pcsrod_status pcsrod_model_marker_positions(const pcsrod_model* model,
                                            const double* strains, double* xyz) {
  if (!model || !strains || !xyz) return invalid("marker_positions: null argument");
  return guarded([&] {
    pcsrod::RodState st = pcsrod::rest_state(model->value);
    for (int i = 0; i < model->value.segment_count(); ++i) {
      st.strain[i] = pcsrod::Vec6(Eigen::Map<const pcsrod::Vec6>(strains + 6 * i));
    }
    clamp_to_mask(model->value, st);
    const pcsrod::Kinematics kin(model->value, st);
    for (std::size_t m = 0; m < model->value.markers().size(); ++m) {
      Eigen::Map<pcsrod::Vec3>(xyz + 3 * m) =
          kin.marker_position(model->value.markers()[m]);
    }
  });
}

pcsrod_status pcsrod_series_load(const char* path, pcsrod_series** out) {
  if (!path || !out) return invalid("series_load: null argument");
  return guarded([&] { *out = new pcsrod_series{pcsrod::load_series(path)}; });
}

pcsrod_status pcsrod_series_save(const pcsrod_series* series, const char* path) {
  if (!series || !path) return invalid("series_save: null argument");
  return guarded([&] { pcsrod::save_series(series->value, path); });
}

void pcsrod_series_free(pcsrod_series* series) { delete series; }

int pcsrod_series_frame_count(const pcsrod_series* series) {
  return series ? series->value.frame_count() : -1;
}

double pcsrod_series_rate(const pcsrod_series* series) {
  return series ? series->value.rate_hz : -1.0;
}

int pcsrod_series_strains(const pcsrod_series* series, int frame, double* out,
                          int capacity) {
  if (!series || !out || frame < 0 || frame >= series->value.frame_count()) {
    return -1;
  }
  const pcsrod::MatX& strain = series->value.strain;
  if (strain.size() == 0 || capacity < strain.cols()) return -1;
  for (Eigen::Index c = 0; c < strain.cols(); ++c) out[c] = strain(frame, c);
  return static_cast<int>(strain.cols());
}

int pcsrod_series_wrench(const pcsrod_series* series, int frame, double out[6]) {
  if (!series || !out || frame < 0 || frame >= series->value.frame_count() ||
      !series->value.has_wrench()) {
    return -1;
  }
  for (int c = 0; c < 6; ++c) out[c] = series->value.wrench(frame, c);
  return 6;
}

pcsrod_status pcsrod_visco_load(const char* path, int expected_segments,
                                pcsrod_visco** out) {
  if (!path || !out) return invalid("visco_load: null argument");
  return guarded(
      [&] { *out = new pcsrod_visco{pcsrod::load_visco(path, expected_segments)}; });
}

pcsrod_status pcsrod_visco_save(const pcsrod_visco* visco, const char* path) {
  if (!visco || !path) return invalid("visco_save: null argument");
  return guarded([&] { pcsrod::save_visco(visco->value, path); });
}

void pcsrod_visco_free(pcsrod_visco* visco) { delete visco; }

pcsrod_status pcsrod_visco_get(const pcsrod_visco* visco, int segment,
                               double stiffness[3], double damping[3]) {
  if (!visco || !stiffness || !damping) return invalid("visco_get: null argument");
  if (segment < 0 || segment >= visco->value.stiffness.rows()) {
    return invalid("visco_get: segment out of range");
  }
  for (int ax = 0; ax < 3; ++ax) {
    stiffness[ax] = visco->value.stiffness(segment, ax);
    damping[ax] = visco->value.damping(segment, ax);
  }
  return PCSROD_OK;
}

void pcsrod_ik_options_init(pcsrod_ik_options* opts) {
  if (!opts) return;
  opts->alpha = 1e-4;
  opts->marker_weight = 1e6;
  opts->base_locked = 1;
  opts->lag_s = 0.0;
  opts->max_gap = 10;
}

pcsrod_status pcsrod_ik_run(const pcsrod_model* model, const char* markers_csv,
                            const char* forces_csv_or_null,
                            const pcsrod_ik_options* opts, pcsrod_series** out,
                            char** log_csv) {
  if (!model || !markers_csv || !opts || !out) {
    return invalid("ik_run: null argument");
  }
  return guarded([&] {
    const pcsrod::MarkerFile raw = pcsrod::load_markers(markers_csv);
    const pcsrod::MarkerFile filled = pcsrod::gap_fill(raw, opts->max_gap);
    pcsrod::FrameSeries series;
    if (forces_csv_or_null) {
      const pcsrod::ForceFile forces = pcsrod::load_forces(forces_csv_or_null);
      series = pcsrod::synchronize(filled, forces, opts->lag_s);
    } else {
      series.rate_hz = filled.rate_hz;
      series.time = filled.time;
      series.marker_labels = filled.labels;
      series.markers = filled.positions;
    }
    pcsrod::IkPipelineOptions pipe;
    pipe.alpha = opts->alpha;
    pipe.marker_weight = opts->marker_weight;
    const pcsrod::IkPipelineResult res = pcsrod::run_ik_pipeline(
        model->value, series, pipe, opts->base_locked != 0);
    if (log_csv) {
      std::ostringstream log;
      log << "frame,time,iterations,marker_rms,converged\n";
      for (std::size_t f = 0; f < res.iterations.size(); ++f) {
        log << f << ',' << pcsrod::format_double(series.time[f]) << ','
            << res.iterations[f] << ',' << pcsrod::format_double(res.marker_rms[f])
            << ',' << int(res.converged[f]) << "\n";
      }
      *log_csv = dup_string(log.str());
    }
    *out = new pcsrod_series{std::move(series)};
  });
}

pcsrod_status pcsrod_differentiate(const pcsrod_model* model,
                                   pcsrod_series* series, double cutoff_hz) {
  if (!model || !series) return invalid("differentiate: null argument");
  return guarded([&] {
    pcsrod::DifferentiateOptions opts;
    if (cutoff_hz > 0) opts.cutoff_hz = cutoff_hz;
    series->value = pcsrod::differentiate(series->value, opts);
    pcsrod::label_phases(series->value);
  });
}

pcsrod_status pcsrod_estimate_grf(const pcsrod_model* model,
                                  const pcsrod_series* series, double contact_s,
                                  const double gravity[3], pcsrod_series** out) {
  if (!model || !series || !out) return invalid("estimate_grf: null argument");
  return guarded([&] {
    const pcsrod::Vec3 g = vec3_or(gravity, pcsrod::Vec3(0, 0, -9.81));
    const auto wrenches =
        pcsrod::estimate_grf(model->value, series->value, contact_s, g);
    pcsrod::FrameSeries result;
    result.rate_hz = series->value.rate_hz;
    result.time = series->value.time;
    result.wrench_s = contact_s;
    result.wrench.resize(wrenches.size(), 6);
    for (std::size_t i = 0; i < wrenches.size(); ++i) {
      result.wrench.row(i) = wrenches[i];
    }
    *out = new pcsrod_series{std::move(result)};
  });
}

pcsrod_status pcsrod_estimate(const pcsrod_model* model,
                              const pcsrod_series* const* datasets, int count,
                              char phase, const pcsrod_visco* known_stiffness,
                              const double gravity[3], pcsrod_visco** out,
                              char** report_json) {
  if (!model || !datasets || count < 1 || !out) {
    return invalid("estimate: null argument");
  }
  if (phase != 'K' && phase != 'D') return invalid("estimate: phase must be K or D");
  if (phase == 'D' && !known_stiffness) {
    g_last_error = "estimate: the damping phase requires the stiffness estimate";
    return PCSROD_ERR_CONFIG;
  }
  return guarded([&] {
    std::vector<const pcsrod::FrameSeries*> sets;
    for (int i = 0; i < count; ++i) sets.push_back(&datasets[i]->value);
    pcsrod::EstimationOptions opts;
    opts.gravity = vec3_or(gravity, opts.gravity);
    opts.phase = phase == 'K' ? pcsrod::EstimationPhase::Stiffness
                              : pcsrod::EstimationPhase::Damping;
    const pcsrod::EstimationResult res =
        pcsrod::estimate(model->value, sets, opts,
                         known_stiffness ? &known_stiffness->value : nullptr);
    if (report_json) {
      *report_json = dup_string(coefficient_table(res, phase).dump(2));
    }
    *out = new pcsrod_visco{res.ve};
  });
}

pcsrod_status pcsrod_simulate(const pcsrod_model* model,
                              const pcsrod_visco* visco,
                              const char* scenario_json, const char* csv_path,
                              pcsrod_series** out) {
  if (!model || !visco || !scenario_json) return invalid("simulate: null argument");
  return guarded([&] {
    const pcsrod::Scenario sc = pcsrod::load_scenario(scenario_json);
    const pcsrod::RodModel& rod = model->value;
    if (sc.rod->segment_count() != rod.segment_count()) {
      throw pcsrod::ConfigError("simulate: scenario rod does not match the model");
    }
    pcsrod::SimOptions opt;
    opt.dt = sc.dt;
    opt.scheme = sc.scheme;
    opt.gravity = sc.gravity;
    opt.base_locked = sc.base_locked;

    pcsrod::RodState initial = pcsrod::rest_state(rod);
    const auto at_zero = sc.load.eval(0.0);
    if (!at_zero.empty()) {
      initial =
          pcsrod::solve_static_equilibrium(rod, visco->value, at_zero, sc.gravity);
    }
    const int step = std::max(1, static_cast<int>(std::lround(
                                     1.0 / (sc.marker_rate * sc.dt))));
    const int nseg = rod.segment_count();

    std::ofstream sim_csv;
    if (csv_path) {
      sim_csv.open(csv_path);
      if (!sim_csv) throw pcsrod::DataError("cannot write sim csv");
      sim_csv << "# pcsrod-sim v1\n# rate_hz: "
              << pcsrod::format_double(sc.marker_rate) << "\n";
      sim_csv << "time";
      const char* comp[6] = {"kx", "ky", "kz", "ux", "uy", "uz"};
      for (int i = 0; i < nseg; ++i)
        for (int c = 0; c < 6; ++c) sim_csv << ",s" << i << "_" << comp[c];
      for (int i = 0; i < nseg; ++i)
        for (int c = 0; c < 6; ++c) sim_csv << ",d_s" << i << "_" << comp[c];
      sim_csv << ",tip_qw,tip_qx,tip_qy,tip_qz,tip_px,tip_py,tip_pz"
              << ",e_kinetic,e_elastic,e_gravity"
              << ",w_nx,w_ny,w_nz,w_fx,w_fy,w_fz\n";
    }

    pcsrod::FrameSeries series;
    series.rate_hz = sc.marker_rate;
    series.wrench_s = sc.load.s;
    std::vector<pcsrod::VecX> strains, rates;
    std::vector<pcsrod::Vec6> wrenches;
    pcsrod::simulate(
        rod, visco->value, initial, sc.load, sc.duration, opt, step,
        [&](const pcsrod::SimRecord& rec) {
          series.time.push_back(rec.t);
          strains.push_back(pack_strain(rod, rec.state));
          rates.push_back(pcsrod::pack_velocity(rod, rec.state).tail(6 * nseg));
          wrenches.push_back(rec.applied);
          if (sim_csv.is_open()) {
            sim_csv << pcsrod::format_double(rec.t);
            for (double v : strains.back()) {
              sim_csv << ',' << pcsrod::format_double(v);
            }
            for (double v : rates.back()) {
              sim_csv << ',' << pcsrod::format_double(v);
            }
            const pcsrod::Pose tip =
                pcsrod::pose_at(rod, rec.state, rod.total_length());
            const Eigen::Quaterniond q(tip.rotation);
            for (double v : {q.w(), q.x(), q.y(), q.z(), tip.position.x(),
                             tip.position.y(), tip.position.z()}) {
              sim_csv << ',' << pcsrod::format_double(v);
            }
            for (double v : {rec.energy.kinetic, rec.energy.elastic,
                             rec.energy.gravitational}) {
              sim_csv << ',' << pcsrod::format_double(v);
            }
            for (int c = 0; c < 6; ++c) {
              sim_csv << ',' << pcsrod::format_double(rec.applied(c));
            }
            sim_csv << "\n";
          }
        });
    const int n = static_cast<int>(series.time.size());
    series.strain.resize(n, 6 * nseg);
    series.strain_rate.resize(n, 6 * nseg);
    series.wrench.resize(n, 6);
    for (int i = 0; i < n; ++i) {
      series.strain.row(i) = strains[i];
      series.strain_rate.row(i) = rates[i];
      series.wrench.row(i) = wrenches[i];
    }
    if (out) *out = new pcsrod_series{std::move(series)};
  });
}

pcsrod_status pcsrod_synth(const char* scenario_json, const char* out_dir,
                           long long seed_override, char** summary_json) {
  if (!scenario_json || !out_dir) return invalid("synth: null argument");
  return guarded([&] {
    const pcsrod::Scenario sc = load_scenario_with_seed(scenario_json, seed_override);
    const pcsrod::SynthOutput so = pcsrod::generate(sc);
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    pcsrod::save_markers(so.markers, (dir / "markers.csv").string());
    pcsrod::save_forces(so.forces, (dir / "forces.csv").string());
    pcsrod::save_visco(so.truth, (dir / "truth_visco.json").string());
    pcsrod::save_series(so.truth_series, (dir / "truth_series.csv").string());
    if (summary_json) {
      json j{{"marker_frames", so.markers.positions.rows()},
             {"force_frames", so.forces.wrench.rows()},
             {"seed", sc.noise.seed},
             {"marker_sigma", sc.noise.marker_sigma},
             {"files", {"markers.csv", "forces.csv", "truth_visco.json",
                        "truth_series.csv"}}};
      *summary_json = dup_string(j.dump(2));
    }
  });
}

pcsrod_status pcsrod_roundtrip(const char* scenario_json, const char* out_dir,
                               long long seed_override, char** report_json) {
  if (!scenario_json || !out_dir) return invalid("roundtrip: null argument");
  return guarded([&] {
    const pcsrod::Scenario sc = load_scenario_with_seed(scenario_json, seed_override);
    const pcsrod::RoundtripReport rep = pcsrod::roundtrip_report(sc);
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    pcsrod::save_series(rep.ik_series, (dir / "ik_series.csv").string());
    pcsrod::ViscoElasticity estimated = rep.stiffness_result.ve;
    estimated.damping = rep.damping_result.ve.damping;
    pcsrod::save_visco(estimated, (dir / "estimated_visco.json").string());

    json j;
    j["stiffness_max_rel_err"] = rep.stiffness_max_rel_err;
    j["damping_max_rel_err"] = rep.damping_max_rel_err;
    j["unidentifiable_stiffness"] = rep.unidentifiable_stiffness;
    j["unidentifiable_damping"] = rep.unidentifiable_damping;
    j["strain_rmse_percent"] = rep.strain_rmse_percent;
    j["ik_marker_rms"] = rep.ik_marker_rms;
    j["force_check_percent"] = rep.force_check_percent;
    j["stiffness"] = coefficient_table(rep.stiffness_result, 'K');
    j["damping"] = coefficient_table(rep.damping_result, 'D');
    write_text(dir / "roundtrip_report.json", j.dump(2) + "\n");
    if (report_json) *report_json = dup_string(j.dump(2));
  });
}

pcsrod_status pcsrod_series_wrench_rmse(const pcsrod_series* measured,
                                        const pcsrod_series* estimated,
                                        double* rmse_out,
                                        double* percent_of_range) {
  if (!measured || !estimated || !rmse_out) return invalid("wrench_rmse: null");
  return guarded([&] {
    const pcsrod::RmseResult r =
        pcsrod::rmse(measured->value.wrench, estimated->value.wrench);
    *rmse_out = r.rmse;
    if (percent_of_range) *percent_of_range = r.percent_of_range;
  });
}

}  // extern "C"
