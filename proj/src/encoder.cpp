#include "nkpcast/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

namespace nkpcast::nkp {

namespace {

struct Offsets {
  std::size_t w1, b1, w2, b2, w3, b3;
};

Offsets offsets(const EncoderParams& p) {
  Offsets o;
  o.w1 = 0;
  o.b1 = o.w1 + p.hidden * p.in_ch;
  o.w2 = o.b1 + p.hidden;
  o.b2 = o.w2 + p.hidden * p.hidden;
  o.w3 = o.b2 + p.hidden;
  o.b3 = o.w3 + p.emb * p.hidden;
  return o;
}

// Forward pass cache for backpropagation.
struct Forward {
  std::vector<double> lift;    // L x hidden, affine lift outputs
  std::vector<double> hid;     // L x hidden, tanh activations
  std::vector<double> pooled;  // hidden
  std::vector<double> raw;     // emb, pre-normalization
  std::vector<double> emb;     // emb, unit norm
  double raw_norm = 0.0;
};

Forward run_forward(const pipeline::FeatureMatrix& x,
                    const EncoderParams& p) {
  if (x.cols < p.in_ch || x.rows == 0) {
    fail(ErrorCode::ShapeMismatch, "encode: feature matrix needs " +
                                       std::to_string(p.in_ch) + " channels");
  }
  if (p.w.size() != p.size()) {
    fail(ErrorCode::ShapeMismatch, "encode: parameter vector length mismatch");
  }
  const auto o = offsets(p);
  const std::size_t L = x.rows;
  const std::size_t H = p.hidden;
  Forward f;
  f.lift.assign(L * H, 0.0);
  f.hid.assign(L * H, 0.0);
  f.pooled.assign(H, 0.0);

  for (std::size_t t = 0; t < L; ++t) {
    for (std::size_t i = 0; i < H; ++i) {
      double acc = p.w[o.b1 + i];
      for (std::size_t c = 0; c < p.in_ch; ++c) {
        acc += p.w[o.w1 + i * p.in_ch + c] * x.at(t, c);
      }
      f.lift[t * H + i] = acc;
    }
    for (std::size_t i = 0; i < H; ++i) {
      double acc = p.w[o.b2 + i];
      for (std::size_t j = 0; j < H; ++j) {
        acc += p.w[o.w2 + i * H + j] * f.lift[t * H + j];
      }
      const double h = std::tanh(acc);
      f.hid[t * H + i] = h;
      f.pooled[i] += h;
    }
  }
  for (double& v : f.pooled) v /= static_cast<double>(L);

  f.raw.assign(p.emb, 0.0);
  for (std::size_t i = 0; i < p.emb; ++i) {
    double acc = p.w[o.b3 + i];
    for (std::size_t j = 0; j < H; ++j) {
      acc += p.w[o.w3 + i * H + j] * f.pooled[j];
    }
    f.raw[i] = acc;
  }
  double norm2 = 0.0;
  for (double v : f.raw) norm2 += v * v;
  f.raw_norm = std::sqrt(norm2);
  if (f.raw_norm < 1e-12) {
    fail(ErrorCode::Degenerate, "encode: embedding norm below 1e-12");
  }
  f.emb.resize(p.emb);
  for (std::size_t i = 0; i < p.emb; ++i) f.emb[i] = f.raw[i] / f.raw_norm;
  return f;
}

// Accumulates d(loss)/d(params) given d(loss)/d(embedding).
void run_backward(const pipeline::FeatureMatrix& x, const EncoderParams& p,
                  const Forward& f, const std::vector<double>& g_emb,
                  std::vector<double>& grad) {
  const auto o = offsets(p);
  const std::size_t L = x.rows;
  const std::size_t H = p.hidden;

  // Through L2 normalization: dy = (g - (g.e) e) / |raw|.
  double ge = 0.0;
  for (std::size_t i = 0; i < p.emb; ++i) ge += g_emb[i] * f.emb[i];
  std::vector<double> g_raw(p.emb);
  for (std::size_t i = 0; i < p.emb; ++i) {
    g_raw[i] = (g_emb[i] - ge * f.emb[i]) / f.raw_norm;
  }

  std::vector<double> g_pool(H, 0.0);
  for (std::size_t i = 0; i < p.emb; ++i) {
    grad[o.b3 + i] += g_raw[i];
    for (std::size_t j = 0; j < H; ++j) {
      grad[o.w3 + i * H + j] += g_raw[i] * f.pooled[j];
      g_pool[j] += p.w[o.w3 + i * H + j] * g_raw[i];
    }
  }
  for (double& v : g_pool) v /= static_cast<double>(L);

  std::vector<double> g_lift(H);
  for (std::size_t t = 0; t < L; ++t) {
    std::fill(g_lift.begin(), g_lift.end(), 0.0);
    for (std::size_t i = 0; i < H; ++i) {
      const double h = f.hid[t * H + i];
      const double gz = g_pool[i] * (1.0 - h * h);
      grad[o.b2 + i] += gz;
      for (std::size_t j = 0; j < H; ++j) {
        grad[o.w2 + i * H + j] += gz * f.lift[t * H + j];
        g_lift[j] += p.w[o.w2 + i * H + j] * gz;
      }
    }
    for (std::size_t i = 0; i < H; ++i) {
      grad[o.b1 + i] += g_lift[i];
      for (std::size_t c = 0; c < p.in_ch; ++c) {
        grad[o.w1 + i * p.in_ch + c] += g_lift[i] * x.at(t, c);
      }
    }
  }
}

}  // namespace

EncoderParams init_encoder(std::size_t hidden, std::size_t emb,
                           std::uint64_t seed) {
  EncoderParams p;
  p.hidden = hidden;
  p.emb = emb;
  p.w.resize(p.size());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  const auto o = offsets(p);
  auto fill = [&](std::size_t begin, std::size_t count, std::size_t fan_in) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < count; ++i) p.w[begin + i] = scale * dist(rng);
  };
  fill(o.w1, hidden * p.in_ch, p.in_ch);
  fill(o.b1, hidden, p.in_ch);
  fill(o.w2, hidden * hidden, hidden);
  fill(o.b2, hidden, hidden);
  fill(o.w3, emb * hidden, hidden);
  fill(o.b3, emb, hidden);
  return p;
}

std::vector<double> encode(const pipeline::FeatureMatrix& features,
                           const EncoderParams& params) {
  return run_forward(features, params).emb;
}

double cosine_similarity(const std::vector<double>& a,
                         const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) {
    fail(ErrorCode::ShapeMismatch, "cosine_similarity: dimension mismatch");
  }
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return std::clamp(dot, -1.0, 1.0);
}

double tcl_loss(const std::vector<double>& similarities,
                const std::vector<int>& same_label, double margin) {
  if (similarities.empty() || similarities.size() != same_label.size()) {
    fail(ErrorCode::EmptyInput, "tcl_loss: empty or mismatched batch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < similarities.size(); ++i) {
    const double d = similarities[i];
    if (same_label[i]) {
      const double hinge = std::max(0.0, margin - d);
      acc += hinge * hinge;
    } else {
      acc += d * d;
    }
  }
  return acc / static_cast<double>(similarities.size());
}

double tcl_grad(const std::vector<const pipeline::FeatureMatrix*>& lhs,
                const std::vector<const pipeline::FeatureMatrix*>& rhs,
                const std::vector<int>& same_label, const EncoderParams& params,
                double margin, std::vector<double>& grad) {
  if (lhs.empty() || lhs.size() != rhs.size() ||
      lhs.size() != same_label.size()) {
    fail(ErrorCode::EmptyInput, "tcl_grad: empty or mismatched batch");
  }
  grad.assign(params.size(), 0.0);
  const double inv_b = 1.0 / static_cast<double>(lhs.size());
  double loss = 0.0;
  std::vector<double> g_emb(params.emb);
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    const Forward fa = run_forward(*lhs[i], params);
    const Forward fb = run_forward(*rhs[i], params);
    double d = 0.0;
    for (std::size_t k = 0; k < params.emb; ++k) d += fa.emb[k] * fb.emb[k];

    double g_d;  // d(pair loss)/dD
    if (same_label[i]) {
      const double hinge = std::max(0.0, margin - d);
      loss += hinge * hinge;
      g_d = -2.0 * hinge;
    } else {
      loss += d * d;
      g_d = 2.0 * d;
    }
    g_d *= inv_b;
    if (g_d == 0.0) continue;

    for (std::size_t k = 0; k < params.emb; ++k) g_emb[k] = g_d * fb.emb[k];
    run_backward(*lhs[i], params, fa, g_emb, grad);
    for (std::size_t k = 0; k < params.emb; ++k) g_emb[k] = g_d * fa.emb[k];
    run_backward(*rhs[i], params, fb, g_emb, grad);
  }
  return loss * inv_b;
}

EncoderTrainResult train_encoder(
    const std::vector<pipeline::FeatureMatrix>& features,
    const std::vector<std::string>& labels, const ContrastiveConfig& config,
    const EncoderParams& init) {
  if (features.size() != labels.size() || features.empty()) {
    fail(ErrorCode::EmptyInput, "train_encoder: empty or mismatched inputs");
  }
  std::map<std::string, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    by_label[labels[i]].push_back(i);
  }
  if (by_label.size() < 2) {
    fail(ErrorCode::InsufficientLabels,
         "train_encoder: need at least 2 distinct labels");
  }
  std::vector<const std::vector<std::size_t>*> groups;
  std::vector<const std::vector<std::size_t>*> pair_groups;  // >= 2 members
  for (const auto& [label, idx] : by_label) {
    groups.push_back(&idx);
    if (idx.size() >= 2) pair_groups.push_back(&idx);
  }

  EncoderTrainResult result;
  result.params = init;
  std::mt19937_64 rng(config.seed);
  auto pick = [&](std::size_t n) {
    return static_cast<std::size_t>(rng() % n);
  };

  const int batches_per_epoch = std::max<int>(
      1, static_cast<int>(features.size()) / std::max(1, config.batch_size));
  std::vector<double> grad;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (int batch = 0; batch < batches_per_epoch; ++batch) {
      std::vector<const pipeline::FeatureMatrix*> lhs, rhs;
      std::vector<int> same;
      for (int k = 0; k < config.batch_size; ++k) {
        const bool positive = (k % 2 == 0) && !pair_groups.empty();
        if (positive) {
          const auto& g = *pair_groups[pick(pair_groups.size())];
          const std::size_t i = pick(g.size());
          std::size_t j = pick(g.size() - 1);
          if (j >= i) ++j;
          lhs.push_back(&features[g[i]]);
          rhs.push_back(&features[g[j]]);
          same.push_back(1);
        } else {
          const std::size_t ga = pick(groups.size());
          std::size_t gb = pick(groups.size() - 1);
          if (gb >= ga) ++gb;
          lhs.push_back(&features[(*groups[ga])[pick(groups[ga]->size())]]);
          rhs.push_back(&features[(*groups[gb])[pick(groups[gb]->size())]]);
          same.push_back(0);
        }
      }
      epoch_loss += tcl_grad(lhs, rhs, same, result.params, config.margin, grad);
      for (std::size_t i = 0; i < grad.size(); ++i) {
        result.params.w[i] -= config.learning_rate * grad[i];
      }
    }
    result.loss_curve.push_back(epoch_loss / batches_per_epoch);
  }
  return result;
}

}  // namespace nkpcast::nkp
