#pragma once

// Equal error rate over spoof-positive scores.
//
// FAR(t) = fraction of bonafide with score >= t
// FRR(t) = fraction of spoof with score <  t
// Scores equal to the threshold count as accepted-spoof. The EER is read at
// the crossing FAR == FRR, linearly interpolated between the two operating
// points that bracket the sign change of FAR - FRR.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dfcurate/embedding_store.hpp"

namespace dfcurate {

struct ScoreSet {
  std::vector<double> scores;
  std::vector<Label> labels;
};

struct EerResult {
  double eer = 0.0;  // fraction in [0, 1]
  double threshold = 0.0;
};

struct RocPoint {
  double threshold;  // +inf for the reject-everything point
  double far;
  double frr;
};

EerResult eer(const ScoreSet& s);

// Operating points at every distinct score plus +inf, thresholds ascending.
std::vector<RocPoint> roc_points(const ScoreSet& s);

// Unweighted arithmetic mean; throws on an empty list.
double mean_eer(std::span<const double> values);

// Score interchange: CSV with header "id,score,label".
void write_scores_csv(const std::filesystem::path& path, std::span<const std::string> ids,
                      const ScoreSet& s);
ScoreSet read_scores_csv(const std::filesystem::path& path, std::vector<std::string>* ids = nullptr);

}  // namespace dfcurate
