#pragma once

// Logistic-regression probe over pooled embeddings.
//
// Minimizes
//   L(w, b) = sum_i log(1 + exp(-s_i (w.x_i + b))) + ||w||^2 / (2C)
// with s_i = +1 for spoof and -1 for bonafide. The bias joins the penalty
// only when penalize_bias is set.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dfcurate/embedding_store.hpp"

namespace dfcurate {

struct TrainOptions {
  double C = 1e6;
  double tol = 1e-9;  // relative objective change between iterations
  int max_iter = 5000;
  bool penalize_bias = false;
  // Z-score features before fitting; the returned model is folded back to
  // raw feature space. Off by default since it changes margin geometry.
  bool standardize = false;
};

void validate_options(const TrainOptions& opts);
std::uint64_t options_hash(const TrainOptions& opts);

struct ProbeModel {
  std::vector<double> w;
  double b = 0.0;
  double C = 1e6;

  bool converged = false;
  int iterations = 0;
  double objective = 0.0;

  // provenance
  std::string pool_description;
  std::uint64_t pool_size = 0;
  std::string options_hash;

  std::size_t dim() const noexcept { return w.size(); }
  bool operator==(const ProbeModel&) const = default;
};

// Throws kSingleClass / kEmptyPool / kNonFinite. A model that hits max_iter is
// still returned with converged == false.
ProbeModel train(const LabeledDataset& pool, const TrainOptions& opts = {});

// w.x + b; positive means spoof-like.
double decision(const ProbeModel& model, std::span<const float> x);
std::vector<double> decisions(const ProbeModel& model, const LabeledDataset& pool);

double sigmoid(double z);

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;  // dim entries for w, then one for b
};

LossAndGrad loss_and_grad(const ProbeModel& model, const LabeledDataset& pool,
                          const TrainOptions& opts = {});

// JSON with w stored as base64 of little-endian float64.
std::string model_to_json(const ProbeModel& model);
ProbeModel model_from_json(const std::string& text);
void save_model(const ProbeModel& model, const std::filesystem::path& path);
ProbeModel load_model(const std::filesystem::path& path);

}  // namespace dfcurate
