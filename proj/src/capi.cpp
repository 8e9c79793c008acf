#include "nkpcast.h"

#include <cstring>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "nkpcast/checkpoint.hpp"
#include "nkpcast/harness.hpp"
#include "nkpcast/metrics.hpp"
#include "nkpcast/refdb.hpp"

namespace {

thread_local std::string g_last_error;

nkpcast_status to_status(nkpcast::ErrorCode code) {
  return static_cast<nkpcast_status>(static_cast<int>(code));
}

template <typename Fn>
nkpcast_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return NKPCAST_OK;
  } catch (const nkpcast::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return NKPCAST_INTERNAL;
  }
}

nkpcast::metrics::Polyline to_polyline(const double* flat, size_t n_points) {
  nkpcast::metrics::Polyline line(n_points);
  for (size_t i = 0; i < n_points; ++i) {
    line[i] = {flat[2 * i], flat[2 * i + 1]};
  }
  return line;
}

}  // namespace

struct nkpcast_encoder {
  nkpcast::nkp::EncoderParams params;
};
struct nkpcast_refdb {
  nkpcast::nkp::ReferenceDb db;
};
struct nkpcast_predictor {
  nkpcast::motion::PredictorParams params;
};

extern "C" {

const char* nkpcast_last_error(void) { return g_last_error.c_str(); }

nkpcast_status nkpcast_step(double lat_deg, double lon_deg, double sog_mps,
                            double cog_rad, double dt_s, double* out_lat_deg,
                            double* out_lon_deg) {
  return guarded([&] {
    if (!out_lat_deg || !out_lon_deg) {
      nkpcast::fail(nkpcast::ErrorCode::InvalidArgument, "null output pointer");
    }
    const nkpcast::geo::EarthModel earth;
    const auto p = nkpcast::geo::step({lat_deg, lon_deg}, {sog_mps, cog_rad},
                                      dt_s, earth);
    *out_lat_deg = p.lat_deg;
    *out_lon_deg = p.lon_deg;
  });
}

nkpcast_status nkpcast_velocity_from_displacement(
    double lat0_deg, double lon0_deg, double lat1_deg, double lon1_deg,
    double dt_s, double* out_sog_mps, double* out_cog_rad) {
  return guarded([&] {
    if (!out_sog_mps || !out_cog_rad) {
      nkpcast::fail(nkpcast::ErrorCode::InvalidArgument, "null output pointer");
    }
    const nkpcast::geo::EarthModel earth;
    const auto v = nkpcast::geo::velocity_from_displacement(
        {lat0_deg, lon0_deg}, {lat1_deg, lon1_deg}, dt_s, earth);
    *out_sog_mps = v.sog_mps;
    *out_cog_rad = v.cog_rad;
  });
}

nkpcast_status nkpcast_msep(const double* pred, const double* truth,
                            size_t n_points, double* out) {
  return guarded([&] {
    if (!pred || !truth || !out) {
      nkpcast::fail(nkpcast::ErrorCode::InvalidArgument, "null pointer");
    }
    *out = nkpcast::metrics::msep(to_polyline(pred, n_points),
                                  to_polyline(truth, n_points));
  });
}

nkpcast_status nkpcast_msec(const double* pred, const double* truth,
                            size_t n_points, double* out) {
  return guarded([&] {
    if (!pred || !truth || !out) {
      nkpcast::fail(nkpcast::ErrorCode::InvalidArgument, "null pointer");
    }
    *out = nkpcast::metrics::msec(to_polyline(pred, n_points),
                                  to_polyline(truth, n_points));
  });
}

nkpcast_status nkpcast_discrete_frechet(const double* a, size_t na,
                                        const double* b, size_t nb,
                                        double* out) {
  return guarded([&] {
    if (!a || !b || !out) {
      nkpcast::fail(nkpcast::ErrorCode::InvalidArgument, "null pointer");
    }
    *out = nkpcast::metrics::discrete_frechet(to_polyline(a, na),
                                              to_polyline(b, nb));
  });
}

nkpcast_status nkpcast_encoder_load(const char* path, nkpcast_encoder** out) {
  return guarded([&] {
    if (!path || !out) {
      nkpcast::fail(nkpcast::ErrorCode::InvalidArgument, "null pointer");
    }
    *out = new nkpcast_encoder{nkpcast::ckpt::load_encoder(path)};
  });
}

void nkpcast_encoder_free(nkpcast_encoder* handle) { delete handle; }

size_t nkpcast_encoder_dim(const nkpcast_encoder* handle) {
  return handle ? handle->params.emb : 0;
}

nkpcast_status nkpcast_encoder_embed(const nkpcast_encoder* handle,
                                     const double* features, size_t rows,
                                     double* out_embedding) {
  return guarded([&] {
    if (!handle || !features || !out_embedding) {
      nkpcast::fail(nkpcast::ErrorCode::InvalidArgument, "null pointer");
    }
    nkpcast::pipeline::FeatureMatrix f(rows, 4);
    std::memcpy(f.data.data(), features, rows * 4 * sizeof(double));
    const auto emb = nkpcast::nkp::encode(f, handle->params);
    std::memcpy(out_embedding, emb.data(), emb.size() * sizeof(double));
  });
}

nkpcast_status nkpcast_refdb_load(const char* path, nkpcast_refdb** out) {
  return guarded([&] {
    if (!path || !out) {
      nkpcast::fail(nkpcast::ErrorCode::InvalidArgument, "null pointer");
    }
    *out = new nkpcast_refdb{nkpcast::ckpt::load_refdb(path)};
  });
}

void nkpcast_refdb_free(nkpcast_refdb* handle) { delete handle; }

size_t nkpcast_refdb_size(const nkpcast_refdb* handle) {
  return handle ? handle->db.entries.size() : 0;
}

nkpcast_status nkpcast_refdb_predict(const nkpcast_refdb* handle,
                                     const double* query, size_t dim,
                                     double tau, char* label_buf,
                                     size_t label_buf_size,
                                     int* out_low_confidence) {
  return guarded([&] {
    if (!handle || !query || !label_buf || label_buf_size == 0) {
      nkpcast::fail(nkpcast::ErrorCode::InvalidArgument, "null pointer");
    }
    if (dim != handle->db.dim) {
      nkpcast::fail(nkpcast::ErrorCode::ShapeMismatch,
                    "query dimension does not match the database");
    }
    const std::vector<double> q(query, query + dim);
    const auto pred = nkpcast::nkp::predict_nkp(q, handle->db, tau);
    if (pred.label.size() + 1 > label_buf_size) {
      nkpcast::fail(nkpcast::ErrorCode::InvalidArgument,
                    "label buffer too small");
    }
    std::memcpy(label_buf, pred.label.c_str(), pred.label.size() + 1);
    if (out_low_confidence) *out_low_confidence = pred.low_confidence ? 1 : 0;
  });
}

nkpcast_status nkpcast_predictor_load(const char* path,
                                      nkpcast_predictor** out) {
  return guarded([&] {
    if (!path || !out) {
      nkpcast::fail(nkpcast::ErrorCode::InvalidArgument, "null pointer");
    }
    *out = new nkpcast_predictor{nkpcast::ckpt::load_predictor(path)};
  });
}

void nkpcast_predictor_free(nkpcast_predictor* handle) { delete handle; }

size_t nkpcast_predictor_channels(const nkpcast_predictor* handle) {
  return handle ? handle->params.channels : 0;
}

size_t nkpcast_predictor_context(const nkpcast_predictor* handle) {
  return handle ? handle->params.context : 0;
}

nkpcast_status nkpcast_run(const char* subcommand, const char* config_path,
                           int has_seed, uint64_t seed, int channels,
                           const char* nkp_mode, const char* model,
                           int fixed_clock) {
  if (!subcommand) {
    g_last_error = "null subcommand";
    return NKPCAST_INVALID_ARGUMENT;
  }
  nkpcast::harness::CliOptions opts;
  opts.subcommand = subcommand;
  opts.config_path = config_path ? config_path : "";
  if (has_seed) opts.seed = seed;
  if (channels != 0) opts.channels = channels;
  if (nkp_mode) opts.nkp_mode = std::string(nkp_mode);
  if (model) opts.model = std::string(model);
  opts.fixed_clock = fixed_clock != 0;

  std::ostringstream err;
  const int code = nkpcast::harness::run(opts, std::cout, err);
  g_last_error = err.str();
  return static_cast<nkpcast_status>(code);
}

}  // extern "C"
