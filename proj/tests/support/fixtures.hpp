#pragma once

// Shared builders for synthetic stores and pools used across test binaries.

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "dfcurate/embedding_store.hpp"

namespace dfcurate::testing {

inline SampleRecord record(std::string id, std::string dataset, Label label, Split split = Split::kTrain) {
  SampleRecord r;
  r.id = std::move(id);
  r.source_path = "audio/" + r.id + ".wav";
  r.dataset_name = std::move(dataset);
  r.label = label;
  r.split = split;
  return r;
}

// Rows given explicitly; ids are "<prefix><index>".
inline std::shared_ptr<const DatasetStore> store_from_rows(const std::string& dataset,
                                                           const std::vector<std::vector<float>>& rows,
                                                           const std::vector<Label>& labels,
                                                           const std::string& prefix = "") {
  std::vector<SampleRecord> manifest;
  std::vector<float> values;
  const auto dim = static_cast<std::uint32_t>(rows.empty() ? 1 : rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    manifest.push_back(record(prefix + std::to_string(i), dataset, labels[i]));
    values.insert(values.end(), rows[i].begin(), rows[i].end());
  }
  return make_store(std::move(manifest), EmbeddingMatrix(dim, std::move(values)));
}

inline LabeledDataset pool_of(std::shared_ptr<const DatasetStore> store) {
  std::vector<std::shared_ptr<const DatasetStore>> stores = {std::move(store)};
  return merge_pool(stores);
}

struct GaussianSpec {
  std::size_t n = 200;
  std::uint32_t dim = 4;
  double separation = 2.0;   // distance between class means along axis 0
  double flip_fraction = 0.0;
  double offset = 0.0;       // shift of both class means along axis 1
  std::uint64_t seed = 1;
};

// Two isotropic unit-variance Gaussian classes, balanced, optional label flips.
inline std::shared_ptr<const DatasetStore> gaussian_store(const std::string& dataset, const GaussianSpec& spec,
                                                          const std::string& prefix) {
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<SampleRecord> manifest;
  std::vector<float> values;
  for (std::size_t i = 0; i < spec.n; ++i) {
    const bool spoof = i % 2 == 0;
    for (std::uint32_t j = 0; j < spec.dim; ++j) {
      double v = gauss(rng);
      if (j == 0) v += (spoof ? 0.5 : -0.5) * spec.separation;
      if (j == 1) v += spec.offset;
      values.push_back(static_cast<float>(v));
    }
    bool label_spoof = spoof;
    if (unit(rng) < spec.flip_fraction) label_spoof = !label_spoof;
    manifest.push_back(record(prefix + std::to_string(i), dataset, label_spoof ? Label::kSpoof : Label::kBonafide));
  }
  return make_store(std::move(manifest), EmbeddingMatrix(spec.dim, std::move(values)));
}

}  // namespace dfcurate::testing
