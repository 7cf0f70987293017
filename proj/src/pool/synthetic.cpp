#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "batchal/error.hpp"
#include "batchal/pool.hpp"
#include "batchal/random.hpp"

namespace batchal {

void SyntheticSpec::validate() const {
  if (num_classes < 1) fail(ErrorKind::Config, "synthetic spec: num_classes must be >= 1");
  const auto n = static_cast<std::size_t>(num_classes);
  if (samples_per_class.size() != n) fail(ErrorKind::Config, "synthetic spec: samples_per_class needs num_classes entries");
  if (class_centers.size() != n) fail(ErrorKind::Config, "synthetic spec: class_centers needs num_classes entries");
  if (class_scales.size() != n) fail(ErrorKind::Config, "synthetic spec: class_scales needs num_classes entries");
  if (dimension < 1) fail(ErrorKind::Config, "synthetic spec: dimension must be >= 1");
  for (std::size_t k = 0; k < n; ++k) {
    if (samples_per_class[k] < 1) fail(ErrorKind::Config, "synthetic spec: class " + std::to_string(k) + " has no samples");
    if (class_centers[k].size() != dimension) {
      fail(ErrorKind::Config, "synthetic spec: center of class " + std::to_string(k) + " has wrong length");
    }
    if (!(class_scales[k] > 0.0) || !std::isfinite(class_scales[k])) {
      fail(ErrorKind::Config, "synthetic spec: scale of class " + std::to_string(k) + " must be > 0");
    }
  }
}

SyntheticSpec read_synthetic_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  SyntheticSpec spec;
  try {
    const auto j = nlohmann::json::parse(in);
    spec.num_classes = j.at("num_classes").get<int>();
    spec.samples_per_class = j.at("samples_per_class").get<std::vector<std::size_t>>();
    spec.dimension = j.at("dimension").get<std::size_t>();
    spec.class_centers = j.at("class_centers").get<std::vector<std::vector<double>>>();
    spec.class_scales = j.at("class_scales").get<std::vector<double>>();
    spec.seed = j.at("seed").get<Seed>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, path.string() + ": " + e.what());
  }
  spec.validate();
  return spec;
}

void write_synthetic_spec(const SyntheticSpec& spec, const std::filesystem::path& path) {
  nlohmann::json j;
  j["num_classes"] = spec.num_classes;
  j["samples_per_class"] = spec.samples_per_class;
  j["dimension"] = spec.dimension;
  j["class_centers"] = spec.class_centers;
  j["class_scales"] = spec.class_scales;
  j["seed"] = spec.seed;
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::normal_distribution<double> standard_normal(0.0, 1.0);

  std::vector<Sample> samples;
  for (int k = 0; k < spec.num_classes; ++k) {
    const auto& center = spec.class_centers[static_cast<std::size_t>(k)];
    const double scale = spec.class_scales[static_cast<std::size_t>(k)];
    for (std::size_t i = 0; i < spec.samples_per_class[static_cast<std::size_t>(k)]; ++i) {
      Sample s;
      s.true_label = k;
      s.features.resize(spec.dimension);
      for (std::size_t j = 0; j < spec.dimension; ++j) s.features[j] = center[j] + scale * standard_normal(rng);
      samples.push_back(std::move(s));
    }
  }
  // Interleave classes so ids carry no class information.
  shuffle_in_place(samples, rng);

  Dataset dataset;
  dataset.dimension = spec.dimension;
  dataset.num_classes = spec.num_classes;
  dataset.samples = std::move(samples);
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) dataset.samples[i].id = static_cast<SampleId>(i);
  return dataset;
}

}  // namespace batchal
