#include "nkpcast/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace nkpcast::motion {

namespace {

struct Offsets {
  std::size_t w1, b1, w2, b2, w3, b3;
};

Offsets offsets(const PredictorParams& p) {
  Offsets o;
  o.w1 = 0;
  o.b1 = o.w1 + p.hidden * p.input_dim();
  o.w2 = o.b1 + p.hidden;
  o.b2 = o.w2 + p.hidden * p.hidden;
  o.w3 = o.b2 + p.hidden;
  o.b3 = o.w3 + 2 * p.hidden;
  return o;
}

struct Forward {
  std::vector<double> x;   // flattened context, oldest row first
  std::vector<double> h1;  // tanh activations
  std::vector<double> h2;
  std::array<double, 2> out;
};

// Context is rows [t_begin, t_begin+context) of a feature matrix.
Forward run_forward(const pipeline::FeatureMatrix& f, std::size_t t_begin,
                    const PredictorParams& p) {
  if (f.cols != p.channels) {
    fail(ErrorCode::ShapeMismatch,
         "predictor: feature channels " + std::to_string(f.cols) +
             " != parameter channels " + std::to_string(p.channels));
  }
  if (t_begin + p.context > f.rows) {
    fail(ErrorCode::ShapeMismatch, "predictor: context exceeds matrix rows");
  }
  if (p.w.size() != p.size()) {
    fail(ErrorCode::ShapeMismatch, "predictor: parameter vector length mismatch");
  }
  const auto o = offsets(p);
  const std::size_t in = p.input_dim();
  const std::size_t H = p.hidden;
  Forward fw;
  fw.x.resize(in);
  for (std::size_t r = 0; r < p.context; ++r) {
    for (std::size_t c = 0; c < p.channels; ++c) {
      fw.x[r * p.channels + c] = f.at(t_begin + r, c);
    }
  }
  fw.h1.resize(H);
  for (std::size_t i = 0; i < H; ++i) {
    double acc = p.w[o.b1 + i];
    for (std::size_t j = 0; j < in; ++j) acc += p.w[o.w1 + i * in + j] * fw.x[j];
    fw.h1[i] = std::tanh(acc);
  }
  fw.h2.resize(H);
  for (std::size_t i = 0; i < H; ++i) {
    double acc = p.w[o.b2 + i];
    for (std::size_t j = 0; j < H; ++j) acc += p.w[o.w2 + i * H + j] * fw.h1[j];
    fw.h2[i] = std::tanh(acc);
  }
  for (std::size_t i = 0; i < 2; ++i) {
    double acc = p.w[o.b3 + i];
    for (std::size_t j = 0; j < H; ++j) acc += p.w[o.w3 + i * H + j] * fw.h2[j];
    fw.out[i] = acc;
  }
  return fw;
}

// Accumulates parameter gradients given d(loss)/d(out).
void run_backward(const PredictorParams& p, const Forward& fw,
                  const std::array<double, 2>& g_out,
                  std::vector<double>& grad) {
  const auto o = offsets(p);
  const std::size_t in = p.input_dim();
  const std::size_t H = p.hidden;

  std::vector<double> g_h2(H, 0.0);
  for (std::size_t i = 0; i < 2; ++i) {
    grad[o.b3 + i] += g_out[i];
    for (std::size_t j = 0; j < H; ++j) {
      grad[o.w3 + i * H + j] += g_out[i] * fw.h2[j];
      g_h2[j] += p.w[o.w3 + i * H + j] * g_out[i];
    }
  }
  std::vector<double> g_h1(H, 0.0);
  for (std::size_t i = 0; i < H; ++i) {
    const double gz = g_h2[i] * (1.0 - fw.h2[i] * fw.h2[i]);
    grad[o.b2 + i] += gz;
    for (std::size_t j = 0; j < H; ++j) {
      grad[o.w2 + i * H + j] += gz * fw.h1[j];
      g_h1[j] += p.w[o.w2 + i * H + j] * gz;
    }
  }
  for (std::size_t i = 0; i < H; ++i) {
    const double gz = g_h1[i] * (1.0 - fw.h1[i] * fw.h1[i]);
    grad[o.b1 + i] += gz;
    for (std::size_t j = 0; j < in; ++j) {
      grad[o.w1 + i * in + j] += gz * fw.x[j];
    }
  }
}

std::size_t valid_steps(const pipeline::FeatureMatrix& f,
                        const PredictorParams& p) {
  if (f.rows < p.context + 1) {
    fail(ErrorCode::TooShort, "predictor: window shorter than context + 1");
  }
  return f.rows - p.context;  // contexts ending at rows context-1 .. rows-2
}

}  // namespace

PredictorParams init_predictor(std::size_t context, std::size_t channels,
                               std::size_t hidden, std::uint64_t seed) {
  if (channels != 4 && channels != 6) {
    fail(ErrorCode::InvalidArgument, "predictor: channels must be 4 or 6");
  }
  PredictorParams p;
  p.context = context;
  p.channels = channels;
  p.hidden = hidden;
  p.w.resize(p.size());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  const auto o = offsets(p);
  auto fill = [&](std::size_t begin, std::size_t count, std::size_t fan_in) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < count; ++i) p.w[begin + i] = scale * dist(rng);
  };
  fill(o.w1, p.hidden * p.input_dim(), p.input_dim());
  fill(o.b1, p.hidden, p.input_dim());
  fill(o.w2, p.hidden * p.hidden, p.hidden);
  fill(o.b2, p.hidden, p.hidden);
  // Zero output head: predictions start at (0, 0), the right order of
  // magnitude for normalized velocities, instead of unit-scale noise.
  std::fill(p.w.begin() + o.w3, p.w.end(), 0.0);
  return p;
}

pipeline::FeatureMatrix assemble_channels(
    const pipeline::FeatureMatrix& features4,
    const std::optional<geo::GeoPoint>& nkp,
    const pipeline::NormalizationSpec& spec) {
  if (features4.cols != 4) {
    fail(ErrorCode::ShapeMismatch, "assemble_channels: expected 4 channels");
  }
  if (!nkp) return features4;
  if (nkp->lat_deg < spec.lat_min || nkp->lat_deg > spec.lat_max ||
      nkp->lon_deg < spec.lon_min || nkp->lon_deg > spec.lon_max) {
    fail(ErrorCode::OutOfBounds, "assemble_channels: NKP outside bounds");
  }
  const double nlat = pipeline::norm_lat(nkp->lat_deg, spec);
  const double nlon = pipeline::norm_lon(nkp->lon_deg, spec);
  pipeline::FeatureMatrix out(features4.rows, 6);
  for (std::size_t t = 0; t < features4.rows; ++t) {
    for (std::size_t c = 0; c < 4; ++c) out.at(t, c) = features4.at(t, c);
    out.at(t, 4) = nlat;
    out.at(t, 5) = nlon;
  }
  return out;
}

std::array<double, 2> forward_step(const pipeline::FeatureMatrix& context_rows,
                                   const PredictorParams& params) {
  if (context_rows.rows != params.context) {
    fail(ErrorCode::ShapeMismatch, "forward_step: need exactly context rows");
  }
  return run_forward(context_rows, 0, params).out;
}

double loss_vol(const std::vector<pipeline::FeatureMatrix>& batch,
                const PredictorParams& params) {
  if (batch.empty()) {
    fail(ErrorCode::EmptyInput, "loss_vol: empty batch");
  }
  double acc = 0.0;
  std::size_t count = 0;
  for (const auto& f : batch) {
    const std::size_t steps = valid_steps(f, params);
    for (std::size_t s = 0; s < steps; ++s) {
      const auto out = run_forward(f, s, params).out;
      const std::size_t target = s + params.context;
      const double d0 = out[0] - f.at(target, 2);
      const double d1 = out[1] - f.at(target, 3);
      acc += d0 * d0 + d1 * d1;
      ++count;
    }
  }
  return acc / static_cast<double>(count);
}

double grad_vol(const std::vector<pipeline::FeatureMatrix>& batch,
                const PredictorParams& params, std::vector<double>& grad) {
  if (batch.empty()) {
    fail(ErrorCode::EmptyInput, "grad_vol: empty batch");
  }
  grad.assign(params.size(), 0.0);
  std::size_t count = 0;
  for (const auto& f : batch) count += valid_steps(f, params);
  const double inv = 1.0 / static_cast<double>(count);

  double acc = 0.0;
  for (const auto& f : batch) {
    const std::size_t steps = valid_steps(f, params);
    for (std::size_t s = 0; s < steps; ++s) {
      const Forward fw = run_forward(f, s, params);
      const std::size_t target = s + params.context;
      const double d0 = fw.out[0] - f.at(target, 2);
      const double d1 = fw.out[1] - f.at(target, 3);
      acc += d0 * d0 + d1 * d1;
      run_backward(params, fw, {2.0 * d0 * inv, 2.0 * d1 * inv}, grad);
    }
  }
  return acc * inv;
}

namespace {

// Shared core of loss_coord / grad_coord. When `grad` is non-null the
// analytic gradient is accumulated through denormalization, the kinematic
// step, and the coordinate normalization.
double coord_loss_impl(const std::vector<pipeline::Window>& windows,
                       const std::vector<pipeline::FeatureMatrix>& batch,
                       const PredictorParams& params,
                       const pipeline::NormalizationSpec& spec,
                       const geo::EarthModel& earth,
                       std::vector<double>* grad) {
  if (batch.empty() || windows.size() != batch.size()) {
    fail(ErrorCode::EmptyInput, "loss_coord: empty or mismatched batch");
  }
  std::size_t count = 0;
  for (const auto& f : batch) count += valid_steps(f, params);
  const double inv = 1.0 / static_cast<double>(count);

  // d(normalized)/d(degrees) scale factors of the affine maps.
  const double slat = 2.0 / (spec.lat_max - spec.lat_min);
  const double slon = 2.0 / (spec.lon_max - spec.lon_min);

  double acc = 0.0;
  for (std::size_t wi = 0; wi < batch.size(); ++wi) {
    const auto& f = batch[wi];
    const auto& window = windows[wi];
    if (window.samples.size() != f.rows) {
      fail(ErrorCode::LengthMismatch, "loss_coord: window/features mismatch");
    }
    const std::size_t steps = valid_steps(f, params);
    for (std::size_t s = 0; s < steps; ++s) {
      const std::size_t t = s + params.context - 1;  // current step
      const Forward fw = run_forward(f, s, params);
      const geo::GeoPoint& p_t = window.samples[t].pos;

      double a, b;  // m/s velocity components from the predicted channels
      pipeline::denormalize_velocity(fw.out[0], fw.out[1], p_t.lat_deg, spec,
                                     earth, a, b);
      const auto j = geo::step_with_jacobian(p_t, a, b, window.dt_s, earth);

      const double nlat = pipeline::norm_lat(j.p1.lat_deg, spec);
      const double nlon = pipeline::norm_lon(j.p1.lon_deg, spec);
      const double d0 = nlat - f.at(t + 1, 0);
      const double d1 = nlon - f.at(t + 1, 1);
      acc += d0 * d0 + d1 * d1;

      if (grad) {
        // d(a,b)/d(u_lat,u_lon): the denormalization is linear.
        const double ca = geo::kDegToRad * earth.radius_m /
                          (spec.velocity_scale * spec.dt_s);
        const double cb = ca * std::cos(p_t.lat_deg * geo::kDegToRad);
        const double g_lat = 2.0 * d0 * inv * slat;
        const double g_lon = 2.0 * d1 * inv * slon;
        const std::array<double, 2> g_out = {
            (g_lat * j.dlat_da + g_lon * j.dlon_da) * ca,
            (g_lat * j.dlat_db + g_lon * j.dlon_db) * cb,
        };
        run_backward(params, fw, g_out, *grad);
      }
    }
  }
  return acc * inv;
}

}  // namespace

double loss_coord(const std::vector<pipeline::Window>& windows,
                  const std::vector<pipeline::FeatureMatrix>& batch,
                  const PredictorParams& params,
                  const pipeline::NormalizationSpec& spec,
                  const geo::EarthModel& earth) {
  return coord_loss_impl(windows, batch, params, spec, earth, nullptr);
}

double grad_coord(const std::vector<pipeline::Window>& windows,
                  const std::vector<pipeline::FeatureMatrix>& batch,
                  const PredictorParams& params,
                  const pipeline::NormalizationSpec& spec,
                  const geo::EarthModel& earth, std::vector<double>& grad) {
  grad.assign(params.size(), 0.0);
  return coord_loss_impl(windows, batch, params, spec, earth, &grad);
}

PredictorTrainResult train_alternating(
    const std::vector<pipeline::Window>& windows,
    const std::vector<pipeline::FeatureMatrix>& batch,
    const TrainSchedule& schedule, const PredictorParams& init,
    const pipeline::NormalizationSpec& spec, const geo::EarthModel& earth) {
  if (batch.empty()) {
    fail(ErrorCode::EmptyInput, "train_alternating: empty dataset");
  }
  PredictorTrainResult result;
  result.params = init;
  std::vector<double> grad;
  for (int cycle = 0; cycle < schedule.cycles; ++cycle) {
    for (int e = 0; e < schedule.vol_epochs; ++e) {
      result.vol_curve.push_back(grad_vol(batch, result.params, grad));
      for (std::size_t i = 0; i < grad.size(); ++i) {
        result.params.w[i] -= schedule.learning_rate * grad[i];
      }
    }
    const double bc_lr = schedule.bc_learning_rate >= 0.0
                             ? schedule.bc_learning_rate
                             : schedule.learning_rate;
    for (int e = 0; e < schedule.bc_epochs; ++e) {
      result.coord_curve.push_back(
          grad_coord(windows, batch, result.params, spec, earth, grad));
      for (std::size_t i = 0; i < grad.size(); ++i) {
        result.params.w[i] -= bc_lr * grad[i];
      }
    }
  }
  return result;
}

metrics::Polyline rollout_predict(const PredictionTask& task,
                                  const PredictorParams& params,
                                  const pipeline::NormalizationSpec& spec,
                                  const geo::EarthModel& earth) {
  if (task.horizon < 1) {
    fail(ErrorCode::InvalidArgument, "rollout_predict: horizon >= 1");
  }
  pipeline::Window history = task.history;
  history.nkp_coords = task.nkp;
  history.label.reset();
  const pipeline::FeatureMatrix features =
      pipeline::normalize(history, spec, earth);
  if (features.cols != params.channels) {
    fail(ErrorCode::ShapeMismatch,
         "rollout_predict: NKP presence does not match the channel flag");
  }
  if (features.rows < params.context) {
    fail(ErrorCode::TooShort, "rollout_predict: history shorter than context");
  }

  // Rolling context of the last `context` feature rows.
  pipeline::FeatureMatrix context(params.context, params.channels);
  for (std::size_t r = 0; r < params.context; ++r) {
    for (std::size_t c = 0; c < params.channels; ++c) {
      context.at(r, c) = features.at(features.rows - params.context + r, c);
    }
  }
  geo::GeoPoint pos = history.samples.back().pos;

  metrics::Polyline out;
  out.reserve(task.horizon);
  for (std::size_t k = 0; k < task.horizon; ++k) {
    const auto u = run_forward(context, 0, params).out;
    double a, b;
    pipeline::denormalize_velocity(u[0], u[1], pos.lat_deg, spec, earth, a, b);
    const geo::VelocityOverGround vel{std::hypot(a, b),
                                      geo::wrap_course_rad(std::atan2(b, a))};
    try {
      pos = geo::step(pos, vel, history.dt_s, earth);
      out.push_back(pos);

      // Shift the context and append the freshly produced step.
      for (std::size_t r = 0; r + 1 < params.context; ++r) {
        for (std::size_t c = 0; c < params.channels; ++c) {
          context.at(r, c) = context.at(r + 1, c);
        }
      }
      const std::size_t last = params.context - 1;
      double nlat = pipeline::norm_lat(pos.lat_deg, spec);
      double nlon = pipeline::norm_lon(pos.lon_deg, spec);
      if (nlat < -1.0 || nlat > 1.0 || nlon < -1.0 || nlon > 1.0) {
        fail(ErrorCode::OutOfBounds,
             "rollout left the normalization bounds");
      }
      context.at(last, 0) = nlat;
      context.at(last, 1) = nlon;
      context.at(last, 2) = u[0];
      context.at(last, 3) = u[1];
      // NKP channels (when present) stay constant.
    } catch (const Error& e) {
      fail(e.code(), std::string(e.what()) + " (at rollout step " +
                         std::to_string(k) + ")");
    }
  }
  return out;
}

metrics::Polyline cvm_baseline(const PredictionTask& task,
                               const geo::EarthModel& earth) {
  const auto& samples = task.history.samples;
  if (samples.size() < 2) {
    fail(ErrorCode::TooShort, "cvm_baseline: need at least 2 history points");
  }
  const geo::VelocityOverGround vel = geo::velocity_from_displacement(
      samples[samples.size() - 2].pos, samples.back().pos, task.history.dt_s,
      earth);
  metrics::Polyline out;
  out.reserve(task.horizon);
  geo::GeoPoint pos = samples.back().pos;
  for (std::size_t k = 0; k < task.horizon; ++k) {
    pos = geo::step(pos, vel, task.history.dt_s, earth);
    out.push_back(pos);
  }
  return out;
}

IntegratedPrediction integrated_predict(
    const pipeline::Window& history, std::size_t horizon,
    const nkp::ReferenceDb& db, const nkp::EncoderParams& encoder_params,
    const PredictorParams& predictor_params, double tau,
    const pipeline::NormalizationSpec& spec, const geo::EarthModel& earth) {
  if (predictor_params.channels != 6) {
    fail(ErrorCode::ShapeMismatch,
         "integrated_predict: predictor must be 6-channel");
  }
  pipeline::Window bare = history;
  bare.label.reset();
  bare.nkp_coords.reset();
  const auto features = pipeline::normalize(bare, spec, earth);

  IntegratedPrediction result;
  result.nkp = nkp::predict_nkp(features, db, encoder_params, tau);
  const auto it = db.label_coords.find(result.nkp.label);
  if (it == db.label_coords.end()) {
    fail(ErrorCode::Internal, "integrated_predict: label without coordinates");
  }
  PredictionTask task{history, horizon, it->second};
  result.trajectory = rollout_predict(task, predictor_params, spec, earth);
  return result;
}

}  // namespace nkpcast::motion
