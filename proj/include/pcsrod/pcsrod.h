/* pcsrod - piecewise-constant-strain rod toolkit.
 *
 * C interface over the rod kinematics/dynamics core: rod description files,
 * marker/force ingest, inverse kinematics, contact-wrench recovery,
 * stiffness/viscosity identification and forward simulation.
 *
 * Conventions: twists and wrenches are 6-vectors ordered (angular, linear) /
 * (moment, force); strains are 6 per segment (kx,ky,kz,ux,uy,uz); abscissae
 * are meters along the undeformed rod. All functions returning pcsrod_status
 * set a thread-local message readable via pcsrod_last_error().
 */
#ifndef PCSROD_H
#define PCSROD_H

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pcsrod_status {
  PCSROD_OK = 0,
  PCSROD_ERR_CONFIG = 10,
  PCSROD_ERR_DATA = 20,
  PCSROD_ERR_NUMERICAL = 30,
  PCSROD_ERR_INSTABILITY = 40,
  PCSROD_ERR_INVALID = 50
} pcsrod_status;

const char* pcsrod_version(void);
const char* pcsrod_last_error(void);
void pcsrod_set_threads(int n); /* 0 = hardware default */
void pcsrod_string_free(char* s);

typedef struct pcsrod_model pcsrod_model;
typedef struct pcsrod_series pcsrod_series;
typedef struct pcsrod_visco pcsrod_visco;

/* --- rod description ---------------------------------------------------- */

pcsrod_status pcsrod_model_load(const char* path, pcsrod_model** out);
void pcsrod_model_free(pcsrod_model* model);
int pcsrod_model_segment_count(const pcsrod_model* model);
int pcsrod_model_marker_count(const pcsrod_model* model);
double pcsrod_model_total_length(const pcsrod_model* model);
double pcsrod_model_contact_s(const pcsrod_model* model);

/* Pose of the material frame at abscissa s for the given strains (6 per
 * segment), base at the identity. rotation is row-major 3x3. */
pcsrod_status pcsrod_model_pose(const pcsrod_model* model, const double* strains,
                                double s, double rotation[9], double position[3]);
/* World positions of every configured marker, 3 doubles each. */
pcsrod_status pcsrod_model_marker_positions(const pcsrod_model* model,
                                            const double* strains, double* xyz);

/* --- time series ---------------------------------------------------------- */

pcsrod_status pcsrod_series_load(const char* path, pcsrod_series** out);
pcsrod_status pcsrod_series_save(const pcsrod_series* series, const char* path);
void pcsrod_series_free(pcsrod_series* series);
int pcsrod_series_frame_count(const pcsrod_series* series);
double pcsrod_series_rate(const pcsrod_series* series);
/* Copies one frame's strain row; returns the row width, or -1 when the
 * series carries no strains or the capacity is too small. */
int pcsrod_series_strains(const pcsrod_series* series, int frame, double* out,
                          int capacity);
/* Copies one frame's wrench (moment, force); returns 6 or -1. */
int pcsrod_series_wrench(const pcsrod_series* series, int frame, double out[6]);

/* --- viscoelasticity ------------------------------------------------------ */

pcsrod_status pcsrod_visco_load(const char* path, int expected_segments,
                                pcsrod_visco** out);
pcsrod_status pcsrod_visco_save(const pcsrod_visco* visco, const char* path);
void pcsrod_visco_free(pcsrod_visco* visco);
pcsrod_status pcsrod_visco_get(const pcsrod_visco* visco, int segment,
                               double stiffness[3], double damping[3]);

/* --- pipeline stages ------------------------------------------------------ */

typedef struct pcsrod_ik_options {
  double alpha;         /* elastic-energy weight */
  double marker_weight; /* marker row weight, 1/m^2 */
  int base_locked;      /* nonzero pins the base pose */
  double lag_s;         /* force-to-marker lag, seconds */
  int max_gap;          /* marker gap fill limit, frames */
} pcsrod_ik_options;
void pcsrod_ik_options_init(pcsrod_ik_options* opts);

/* Markers (+ optional force file) to a strain series. log_csv, when not
 * null, receives a per-frame convergence table to free with
 * pcsrod_string_free. */
pcsrod_status pcsrod_ik_run(const pcsrod_model* model, const char* markers_csv,
                            const char* forces_csv_or_null,
                            const pcsrod_ik_options* opts, pcsrod_series** out,
                            char** log_csv);

/* Zero-phase low-pass + finite differences + phase labels, in place. */
pcsrod_status pcsrod_differentiate(const pcsrod_model* model,
                                   pcsrod_series* series, double cutoff_hz);

/* Environment wrench at contact_s recovered from the base partition of the
 * equation of motion; the result series carries a wrench block only. */
pcsrod_status pcsrod_estimate_grf(const pcsrod_model* model,
                                  const pcsrod_series* series, double contact_s,
                                  const double gravity[3], pcsrod_series** out);

/* Two-phase identification; phase is 'K' (static) or 'D' (dynamic, needs the
 * previously estimated stiffness). report_json receives the per-coefficient
 * table. */
pcsrod_status pcsrod_estimate(const pcsrod_model* model,
                              const pcsrod_series* const* datasets, int count,
                              char phase, const pcsrod_visco* known_stiffness,
                              const double gravity[3], pcsrod_visco** out,
                              char** report_json);

/* Forward simulation of the scenario's load protocol with the given
 * parameters. csv_path (optional) receives the per-step record of time,
 * strains, rates, tip pose and energies; out (optional) the sampled series. */
pcsrod_status pcsrod_simulate(const pcsrod_model* model,
                              const pcsrod_visco* visco,
                              const char* scenario_json, const char* csv_path,
                              pcsrod_series** out);

/* Synthetic experiment: writes markers.csv, forces.csv, truth_visco.json and
 * truth_series.csv under out_dir. seed_override < 0 keeps the file's seed. */
pcsrod_status pcsrod_synth(const char* scenario_json, const char* out_dir,
                           long long seed_override, char** summary_json);

/* generate -> ik -> differentiate -> estimate -> resimulate; artifacts land
 * under out_dir, metrics in report_json. */
pcsrod_status pcsrod_roundtrip(const char* scenario_json, const char* out_dir,
                               long long seed_override, char** report_json);

/* Wrench-block RMSE (measured vs estimated) and percent of the measured
 * norm-channel range. */
pcsrod_status pcsrod_series_wrench_rmse(const pcsrod_series* measured,
                                        const pcsrod_series* estimated,
                                        double* rmse, double* percent_of_range);

#ifdef __cplusplus
}
#endif

#endif /* PCSROD_H */
