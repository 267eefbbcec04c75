#include "dfcurate/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "dfcurate/error.hpp"

namespace dfcurate {

namespace {

struct Counts {
  std::size_t bonafide = 0;
  std::size_t spoof = 0;
};

Counts check_scores(const ScoreSet& s) {
  if (s.scores.size() != s.labels.size()) {
    throw Error(ErrorCode::kCountMismatch, "score and label counts differ");
  }
  Counts c;
  for (std::size_t i = 0; i < s.scores.size(); ++i) {
    if (!std::isfinite(s.scores[i])) throw Error(ErrorCode::kNonFinite, "non-finite score at index " + std::to_string(i));
    (s.labels[i] == Label::kSpoof ? c.spoof : c.bonafide) += 1;
  }
  if (c.spoof == 0 || c.bonafide == 0) {
    throw Error(ErrorCode::kSingleClass, "EER needs both bonafide and spoof scores");
  }
  return c;
}

std::vector<std::size_t> sorted_order(const ScoreSet& s) {
  std::vector<std::size_t> order(s.scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return s.scores[a] < s.scores[b]; });
  return order;
}

}  // namespace

std::vector<RocPoint> roc_points(const ScoreSet& s) {
  const Counts c = check_scores(s);
  const auto order = sorted_order(s);
  const double nb = static_cast<double>(c.bonafide);
  const double ns = static_cast<double>(c.spoof);

  std::vector<RocPoint> points;
  // below_b / below_s: samples with score strictly below the current threshold
  std::size_t below_b = 0, below_s = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double t = s.scores[order[i]];
    points.push_back({t, (nb - below_b) / nb, below_s / ns});
    while (i < order.size() && s.scores[order[i]] == t) {
      (s.labels[order[i]] == Label::kSpoof ? below_s : below_b) += 1;
      ++i;
    }
  }
  points.push_back({std::numeric_limits<double>::infinity(), 0.0, 1.0});
  return points;
}

EerResult eer(const ScoreSet& s) {
  const auto points = roc_points(s);
  // FAR - FRR starts at +1 and ends at -1; find the first non-positive point.
  for (std::size_t k = 0; k < points.size(); ++k) {
    const double diff = points[k].far - points[k].frr;
    if (diff > 0.0) continue;
    if (diff == 0.0 || k == 0) return {points[k].far, points[k].threshold};
    const RocPoint& lo = points[k - 1];
    const RocPoint& hi = points[k];
    const double d_lo = lo.far - lo.frr;
    const double alpha = d_lo / (d_lo - diff);
    const double value = lo.far + alpha * (hi.far - lo.far);
    const double threshold =
        std::isfinite(hi.threshold) ? lo.threshold + alpha * (hi.threshold - lo.threshold) : lo.threshold;
    return {std::clamp(value, 0.0, 1.0), threshold};
  }
  // unreachable: the +inf point always has FAR - FRR = -1
  return {points.back().far, points.back().threshold};
}

double mean_eer(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::kInvalidArgument, "mean of an empty EER list");
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

void write_scores_csv(const std::filesystem::path& path, std::span<const std::string> ids, const ScoreSet& s) {
  if (ids.size() != s.scores.size() || s.labels.size() != s.scores.size()) {
    throw Error(ErrorCode::kCountMismatch, "ids, scores and labels must have equal length");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  out.precision(17);
  out << "id,score,label\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out << ids[i] << ',' << s.scores[i] << ',' << to_string(s.labels[i]) << '\n';
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

ScoreSet read_scores_csv(const std::filesystem::path& path, std::vector<std::string>* ids) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kFormat, path.string() + ": empty score file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "id,score,label") throw Error(ErrorCode::kFormat, path.string() + ": expected header id,score,label");
  ScoreSet s;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto c2 = line.rfind(',');
    const auto c1 = c2 == std::string::npos ? std::string::npos : line.rfind(',', c2 - 1);
    if (c1 == std::string::npos || c2 == 0) {
      throw Error(ErrorCode::kFormat, path.string() + ":" + std::to_string(line_no) + ": expected 3 fields");
    }
    double score = 0.0;
    try {
      std::size_t used = 0;
      const std::string field = line.substr(c1 + 1, c2 - c1 - 1);
      score = std::stod(field, &used);
      if (used != field.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error(ErrorCode::kFormat, path.string() + ":" + std::to_string(line_no) + ": bad score");
    }
    if (ids) ids->push_back(line.substr(0, c1));
    s.scores.push_back(score);
    s.labels.push_back(parse_label(line.substr(c2 + 1)));
  }
  return s;
}

}  // namespace dfcurate
