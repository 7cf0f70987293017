#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace batchal {

using SampleId = std::uint32_t;
using ClassIndex = std::int32_t;
using Seed = std::uint64_t;

struct Sample {
  SampleId id = 0;
  std::vector<double> features;
  std::optional<std::string> payload_ref;
  std::optional<ClassIndex> true_label;

  bool operator==(const Sample&) const = default;
};

struct Dataset {
  std::vector<Sample> samples;  // samples[i].id == i
  std::size_t dimension = 0;
  int num_classes = 0;

  std::size_t size() const noexcept { return samples.size(); }
  bool fully_labeled() const noexcept;
  bool operator==(const Dataset&) const = default;
};

// Row-major feature matrix gathered from a dataset for a list of ids.
struct FeatureMatrix {
  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t cols = 0;

  const double* row(std::size_t r) const noexcept { return values.data() + r * cols; }
};

FeatureMatrix gather_features(const Dataset& dataset, const std::vector<SampleId>& ids);

}  // namespace batchal
