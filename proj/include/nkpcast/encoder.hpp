#pragma once

// Trajectory embedding (position-wise MLP, mean pooling, L2 normalization),
// the margin-based contrastive verification loss with analytic gradients,
// and seeded contrastive training.

#include <cstdint>
#include <string>
#include <vector>

#include "nkpcast/pipeline.hpp"

namespace nkpcast::nkp {

// Flat parameter vector with declared shapes:
//   W1 [hidden x in_ch], b1 [hidden]   per-step affine lift
//   W2 [hidden x hidden], b2 [hidden]  hidden tanh layer
//   W3 [emb x hidden], b3 [emb]        post-pool projection
struct EncoderParams {
  std::size_t in_ch = 4;
  std::size_t hidden = 128;
  std::size_t emb = 64;
  std::vector<double> w;

  std::size_t size() const {
    return hidden * in_ch + hidden + hidden * hidden + hidden +
           emb * hidden + emb;
  }
};

EncoderParams init_encoder(std::size_t hidden, std::size_t emb,
                           std::uint64_t seed);

// Unit-norm embedding of a feature matrix; only the first in_ch channels
// are read (the encoder sees history, never NKP channels). Throws
// Degenerate when the pre-normalization norm vanishes.
std::vector<double> encode(const pipeline::FeatureMatrix& features,
                           const EncoderParams& params);

// Dot product of unit vectors, clamped to [-1, 1].
double cosine_similarity(const std::vector<double>& a,
                         const std::vector<double>& b);

// Margin contrastive loss over precomputed pair similarities:
// mean of (1-y)*D^2 + y*max(0, M-D)^2.
double tcl_loss(const std::vector<double>& similarities,
                const std::vector<int>& same_label, double margin);

// Analytic gradient of the mean contrastive loss over feature pairs with
// respect to every encoder parameter, including the normalization
// Jacobian. Returns the loss; `grad` is resized and overwritten.
double tcl_grad(const std::vector<const pipeline::FeatureMatrix*>& lhs,
                const std::vector<const pipeline::FeatureMatrix*>& rhs,
                const std::vector<int>& same_label, const EncoderParams& params,
                double margin, std::vector<double>& grad);

struct ContrastiveConfig {
  double margin = 0.5;
  double tau = 0.5;
  int top_k = 5;
  double learning_rate = 7e-5;
  int epochs = 30;
  int batch_size = 32;
  std::uint64_t seed = 0;
};

struct EncoderTrainResult {
  EncoderParams params;
  std::vector<double> loss_curve;  // one mean batch loss per epoch
};

// Seeded mini-batch gradient descent with 50/50 same/different pair
// sampling per batch. Requires at least two distinct labels.
EncoderTrainResult train_encoder(
    const std::vector<pipeline::FeatureMatrix>& features,
    const std::vector<std::string>& labels, const ContrastiveConfig& config,
    const EncoderParams& init);

}  // namespace nkpcast::nkp
