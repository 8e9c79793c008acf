#pragma once

// Labeled embedding store for retrieval-based NKP inference: flat-scan
// top-K retrieval and threshold voting with an open-set append contract
// (new labels become predictable by inserting entries, no retraining).

#include <map>
#include <string>
#include <vector>

#include "nkpcast/encoder.hpp"

namespace nkpcast::nkp {

struct DbEntry {
  std::vector<double> embedding;  // unit norm
  std::string label;
  long long mmsi = 0;
  std::size_t start_index = 0;
};

struct ReferenceDb {
  std::size_t dim = 0;
  std::vector<DbEntry> entries;
  std::map<std::string, geo::GeoPoint> label_coords;
};

// One entry per labeled window, in input order.
ReferenceDb build_reference_db(const std::vector<pipeline::Window>& windows,
                               const std::vector<pipeline::FeatureMatrix>& features,
                               const EncoderParams& params,
                               const std::vector<pipeline::KeyNode>& nodes);

// Open-set extension: appends entries for a new label without touching the
// encoder.
void append_entries(ReferenceDb& db,
                    const std::vector<pipeline::Window>& windows,
                    const std::vector<pipeline::FeatureMatrix>& features,
                    const EncoderParams& params,
                    const std::vector<pipeline::KeyNode>& nodes);

// (entry index, similarity) sorted by descending similarity, ties broken by
// insertion order; k clipped to the database size.
std::vector<std::pair<std::size_t, double>> retrieve_topk(
    const std::vector<double>& query, const ReferenceDb& db, std::size_t k);

struct NkpPrediction {
  std::string label;
  std::map<std::string, int> votes;
  double max_similarity = -1.0;
  bool low_confidence = false;  // no entry passed tau; nearest-neighbor fallback
};

// Threshold voting: every entry with similarity >= tau votes for its label;
// the most-voted label wins. Ties go to the higher mean similarity among
// voters, then lexicographic label order. When nothing passes tau the
// nearest neighbor's label is returned with low_confidence set.
NkpPrediction predict_nkp(const std::vector<double>& query,
                          const ReferenceDb& db, double tau);

// Convenience overload: encode the window features, then vote.
NkpPrediction predict_nkp(const pipeline::FeatureMatrix& features,
                          const ReferenceDb& db, const EncoderParams& params,
                          double tau);

}  // namespace nkpcast::nkp
