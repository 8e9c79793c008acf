#include "nkpcast/refdb.hpp"

#include <algorithm>

namespace nkpcast::nkp {

namespace {

void insert_windows(ReferenceDb& db,
                    const std::vector<pipeline::Window>& windows,
                    const std::vector<pipeline::FeatureMatrix>& features,
                    const EncoderParams& params,
                    const std::vector<pipeline::KeyNode>& nodes) {
  if (windows.size() != features.size()) {
    fail(ErrorCode::LengthMismatch, "reference db: windows/features mismatch");
  }
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (!windows[i].label) {
      fail(ErrorCode::InvalidArgument,
           "reference db: every window must carry a label");
    }
    DbEntry entry;
    entry.embedding = encode(features[i], params);
    entry.label = *windows[i].label;
    entry.mmsi = windows[i].mmsi;
    entry.start_index = windows[i].start_index;
    if (db.dim == 0) db.dim = entry.embedding.size();
    if (entry.embedding.size() != db.dim) {
      fail(ErrorCode::ShapeMismatch, "reference db: embedding dim mismatch");
    }
    if (!db.label_coords.count(entry.label)) {
      for (const auto& node : nodes) {
        if (node.id == entry.label) {
          db.label_coords[entry.label] = node.center;
          break;
        }
      }
      if (!db.label_coords.count(entry.label)) {
        fail(ErrorCode::InvalidArgument,
             "reference db: label " + entry.label + " has no key node");
      }
    }
    db.entries.push_back(std::move(entry));
  }
}

}  // namespace

ReferenceDb build_reference_db(const std::vector<pipeline::Window>& windows,
                               const std::vector<pipeline::FeatureMatrix>& features,
                               const EncoderParams& params,
                               const std::vector<pipeline::KeyNode>& nodes) {
  ReferenceDb db;
  db.dim = params.emb;
  insert_windows(db, windows, features, params, nodes);
  return db;
}

void append_entries(ReferenceDb& db,
                    const std::vector<pipeline::Window>& windows,
                    const std::vector<pipeline::FeatureMatrix>& features,
                    const EncoderParams& params,
                    const std::vector<pipeline::KeyNode>& nodes) {
  insert_windows(db, windows, features, params, nodes);
}

std::vector<std::pair<std::size_t, double>> retrieve_topk(
    const std::vector<double>& query, const ReferenceDb& db, std::size_t k) {
  if (db.entries.empty()) {
    fail(ErrorCode::EmptyDb, "retrieve_topk: empty reference database");
  }
  if (k < 1) {
    fail(ErrorCode::InvalidArgument, "retrieve_topk: k >= 1");
  }
  std::vector<std::pair<std::size_t, double>> scored;
  scored.reserve(db.entries.size());
  for (std::size_t i = 0; i < db.entries.size(); ++i) {
    scored.emplace_back(i, cosine_similarity(query, db.entries[i].embedding));
  }
  // stable_sort keeps insertion order among equal similarities.
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) {
                     return a.second > b.second;
                   });
  scored.resize(std::min(k, scored.size()));
  return scored;
}

NkpPrediction predict_nkp(const std::vector<double>& query,
                          const ReferenceDb& db, double tau) {
  if (db.entries.empty()) {
    fail(ErrorCode::EmptyDb, "predict_nkp: empty reference database");
  }
  NkpPrediction out;
  std::map<std::string, double> sim_sum;
  std::size_t nearest = 0;
  for (std::size_t i = 0; i < db.entries.size(); ++i) {
    const double sim = cosine_similarity(query, db.entries[i].embedding);
    if (sim > out.max_similarity) {
      out.max_similarity = sim;
      nearest = i;
    }
    if (sim >= tau) {
      ++out.votes[db.entries[i].label];
      sim_sum[db.entries[i].label] += sim;
    }
  }

  if (out.votes.empty()) {
    out.label = db.entries[nearest].label;
    out.low_confidence = true;
    return out;
  }

  // Argmax votes; ties by higher mean similarity, then label order (the map
  // iterates labels lexicographically).
  int best_votes = -1;
  double best_mean = -2.0;
  for (const auto& [label, count] : out.votes) {
    const double mean = sim_sum[label] / count;
    if (count > best_votes ||
        (count == best_votes && mean > best_mean + 1e-15)) {
      best_votes = count;
      best_mean = mean;
      out.label = label;
    }
  }
  return out;
}

NkpPrediction predict_nkp(const pipeline::FeatureMatrix& features,
                          const ReferenceDb& db, const EncoderParams& params,
                          double tau) {
  return predict_nkp(encode(features, params), db, tau);
}

}  // namespace nkpcast::nkp
