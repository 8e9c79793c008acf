#pragma once

// NKP-conditioned autoregressive motion model: a context-window MLP that
// predicts the next normalized velocity pair, teacher-forced velocity and
// behavior-cloning coordinate losses with analytic gradients, the
// alternating training schedule, kinematic rollout inference, a constant
// velocity baseline, and the integrated NKP -> rollout pipeline.

#include <array>
#include <cstdint>
#include <optional>

#include "nkpcast/metrics.hpp"
#include "nkpcast/pipeline.hpp"
#include "nkpcast/refdb.hpp"

namespace nkpcast::motion {

// Flat parameter vector with declared shapes:
//   W1 [hidden x (context*channels)], b1 [hidden]
//   W2 [hidden x hidden], b2 [hidden]
//   W3 [2 x hidden], b3 [2]
// Output: normalized (v_lat, v_lon) for the next step.
struct PredictorParams {
  std::size_t context = 16;
  std::size_t channels = 6;  // 4 without NKP conditioning, 6 with
  std::size_t hidden = 128;
  std::vector<double> w;

  std::size_t input_dim() const { return context * channels; }
  std::size_t size() const {
    return hidden * input_dim() + hidden + hidden * hidden + hidden +
           2 * hidden + 2;
  }
};

PredictorParams init_predictor(std::size_t context, std::size_t channels,
                               std::size_t hidden, std::uint64_t seed);

// Broadcasts the NKP's normalized coordinates as constant channels 5-6;
// absent NKP returns the 4-channel input unchanged.
pipeline::FeatureMatrix assemble_channels(
    const pipeline::FeatureMatrix& features4,
    const std::optional<geo::GeoPoint>& nkp,
    const pipeline::NormalizationSpec& spec);

// Deterministic next-step velocity from the last `context` rows.
std::array<double, 2> forward_step(const pipeline::FeatureMatrix& context_rows,
                                   const PredictorParams& params);

// Teacher-forced velocity loss: mean squared error between predicted and
// ground-truth normalized velocity components over every valid step of
// every window.
double loss_vol(const std::vector<pipeline::FeatureMatrix>& batch,
                const PredictorParams& params);
double grad_vol(const std::vector<pipeline::FeatureMatrix>& batch,
                const PredictorParams& params, std::vector<double>& grad);

// Behavior-cloning coordinate loss: each predicted velocity is
// denormalized, stepped from the ground-truth current position, and the
// resulting coordinate compared to the ground-truth next coordinate in
// normalized space.
double loss_coord(const std::vector<pipeline::Window>& windows,
                  const std::vector<pipeline::FeatureMatrix>& batch,
                  const PredictorParams& params,
                  const pipeline::NormalizationSpec& spec,
                  const geo::EarthModel& earth);
double grad_coord(const std::vector<pipeline::Window>& windows,
                  const std::vector<pipeline::FeatureMatrix>& batch,
                  const PredictorParams& params,
                  const pipeline::NormalizationSpec& spec,
                  const geo::EarthModel& earth, std::vector<double>& grad);

struct TrainSchedule {
  int vol_epochs = 50;
  int bc_epochs = 10;
  int cycles = 1;
  double learning_rate = 7e-5;
  // The coordinate loss backpropagates through the kinematic step, whose
  // velocity denormalization steepens gradients by orders of magnitude; a
  // separate rate keeps the alternating schedule stable. Negative = reuse
  // learning_rate.
  double bc_learning_rate = -1.0;
  std::uint64_t seed = 0;
};

struct PredictorTrainResult {
  PredictorParams params;
  std::vector<double> vol_curve;
  std::vector<double> coord_curve;
};

// Alternating full-batch gradient descent: each cycle runs vol_epochs on
// the velocity loss, then bc_epochs on the coordinate loss.
PredictorTrainResult train_alternating(
    const std::vector<pipeline::Window>& windows,
    const std::vector<pipeline::FeatureMatrix>& batch,
    const TrainSchedule& schedule, const PredictorParams& init,
    const pipeline::NormalizationSpec& spec, const geo::EarthModel& earth);

struct PredictionTask {
  pipeline::Window history;             // >= context samples
  std::size_t horizon = 1;
  std::optional<geo::GeoPoint> nkp;     // conditioning anchor, when known
};

// Autoregressive rollout: predict a normalized velocity, denormalize at
// the current position, advance through the kinematic step, shift the
// context. Returns `horizon` positions in degrees.
metrics::Polyline rollout_predict(const PredictionTask& task,
                                  const PredictorParams& params,
                                  const pipeline::NormalizationSpec& spec,
                                  const geo::EarthModel& earth);

// Last observed velocity held constant over the horizon.
metrics::Polyline cvm_baseline(const PredictionTask& task,
                               const geo::EarthModel& earth);

struct IntegratedPrediction {
  metrics::Polyline trajectory;
  nkp::NkpPrediction nkp;
};

// Estimate the NKP from the history embedding, then condition the rollout
// on the voted key node's coordinates.
IntegratedPrediction integrated_predict(
    const pipeline::Window& history, std::size_t horizon,
    const nkp::ReferenceDb& db, const nkp::EncoderParams& encoder_params,
    const PredictorParams& predictor_params, double tau,
    const pipeline::NormalizationSpec& spec, const geo::EarthModel& earth);

}  // namespace nkpcast::motion
