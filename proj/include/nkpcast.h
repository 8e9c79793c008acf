#ifndef NKPCAST_H
#define NKPCAST_H

/* C API of the vessel-trajectory toolkit: error codes, opaque handles for
 * the trained artifacts, fine-grained kinematics/metrics/inference entry
 * points, and the subcommand runner the CLI is built on. All functions
 * return NKPCAST_OK (0) on success; on failure the thread-local message
 * from nkpcast_last_error() describes the fault. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum nkpcast_status {
  NKPCAST_OK = 0,
  NKPCAST_INVALID_ARGUMENT = 1,
  NKPCAST_POLE_PROXIMITY = 2,
  NKPCAST_INVALID_DT = 3,
  NKPCAST_TOO_SHORT = 4,
  NKPCAST_LENGTH_MISMATCH = 5,
  NKPCAST_EMPTY_INPUT = 6,
  NKPCAST_DEGENERATE = 7,
  NKPCAST_MISSING_COLUMN = 8,
  NKPCAST_OUT_OF_BOUNDS = 9,
  NKPCAST_INSUFFICIENT_LABELS = 10,
  NKPCAST_EMPTY_DB = 11,
  NKPCAST_SHAPE_MISMATCH = 12,
  NKPCAST_INVALID_CONFIG = 13,
  NKPCAST_INVALID_DISTRIBUTION = 14,
  NKPCAST_VERSION_MISMATCH = 15,
  NKPCAST_CORRUPT_FILE = 16,
  NKPCAST_IO_ERROR = 17,
  NKPCAST_INTERNAL = 18,
} nkpcast_status;

/* Message of the most recent failure on this thread; empty string if none. */
const char* nkpcast_last_error(void);

/* ---- Kinematics ---------------------------------------------------- */

/* One rhumb-line step of dt_s seconds from (lat, lon) in degrees with
 * speed in m/s and course in radians clockwise from north. */
nkpcast_status nkpcast_step(double lat_deg, double lon_deg, double sog_mps,
                            double cog_rad, double dt_s, double* out_lat_deg,
                            double* out_lon_deg);

/* Inverse of nkpcast_step. */
nkpcast_status nkpcast_velocity_from_displacement(
    double lat0_deg, double lon0_deg, double lat1_deg, double lon1_deg,
    double dt_s, double* out_sog_mps, double* out_cog_rad);

/* ---- Metrics over flat [lat0, lon0, lat1, lon1, ...] arrays -------- */

nkpcast_status nkpcast_msep(const double* pred, const double* truth,
                            size_t n_points, double* out);
nkpcast_status nkpcast_msec(const double* pred, const double* truth,
                            size_t n_points, double* out);
nkpcast_status nkpcast_discrete_frechet(const double* a, size_t na,
                                        const double* b, size_t nb,
                                        double* out);

/* ---- Opaque artifact handles ---------------------------------------- */

typedef struct nkpcast_encoder nkpcast_encoder;
typedef struct nkpcast_refdb nkpcast_refdb;
typedef struct nkpcast_predictor nkpcast_predictor;

nkpcast_status nkpcast_encoder_load(const char* path, nkpcast_encoder** out);
void nkpcast_encoder_free(nkpcast_encoder* handle);
size_t nkpcast_encoder_dim(const nkpcast_encoder* handle);

/* Unit-norm embedding of a row-major [rows x 4] normalized feature block.
 * out_embedding must hold nkpcast_encoder_dim() doubles. */
nkpcast_status nkpcast_encoder_embed(const nkpcast_encoder* handle,
                                     const double* features, size_t rows,
                                     double* out_embedding);

nkpcast_status nkpcast_refdb_load(const char* path, nkpcast_refdb** out);
void nkpcast_refdb_free(nkpcast_refdb* handle);
size_t nkpcast_refdb_size(const nkpcast_refdb* handle);

/* Threshold-voting label prediction from a unit-norm query embedding.
 * Copies the winning label (NUL-terminated) into label_buf. */
nkpcast_status nkpcast_refdb_predict(const nkpcast_refdb* handle,
                                     const double* query, size_t dim,
                                     double tau, char* label_buf,
                                     size_t label_buf_size,
                                     int* out_low_confidence);

nkpcast_status nkpcast_predictor_load(const char* path,
                                      nkpcast_predictor** out);
void nkpcast_predictor_free(nkpcast_predictor* handle);
size_t nkpcast_predictor_channels(const nkpcast_predictor* handle);
size_t nkpcast_predictor_context(const nkpcast_predictor* handle);

/* ---- Subcommand runner (the CLI backend) ---------------------------- */

/* Runs one subcommand (synth, ingest, train-encoder, build-db,
 * train-predictor, predict, evaluate, ablate, info-check, verify) against
 * a JSON run config. Optional overrides: pass has_seed=0 / channels=0 /
 * NULL strings to keep the config values. The JSON report is written to
 * stdout; on failure the status converts the harness error code. */
nkpcast_status nkpcast_run(const char* subcommand, const char* config_path,
                           int has_seed, uint64_t seed, int channels,
                           const char* nkp_mode, const char* model,
                           int fixed_clock);

#ifdef __cplusplus
}
#endif

#endif /* NKPCAST_H */
