#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "batchal/types.hpp"

namespace batchal {

struct ModelConfig {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_widths{64, 32};
  int num_classes = 0;
  double dropout_rate = 0.25;
  std::size_t epochs = 100;
  double learning_rate = 0.001;
  std::size_t batch_size = 32;
  Seed weight_init_seed = 0;
  std::size_t mc_passes = 20;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Fully connected layer, weights stored row-major as [out][in].
struct DenseLayer {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  const double* row(std::size_t j) const noexcept { return weights.data() + j * inputs; }
  bool operator==(const DenseLayer&) const = default;
};

struct EpochLog {
  std::size_t epoch = 0;  // 0 is the untrained initialization
  double loss = 0.0;
  double validation_accuracy = 0.0;
  bool operator==(const EpochLog&) const = default;
};

struct TrainedModel {
  ModelConfig config;
  std::vector<DenseLayer> layers;  // hidden layers followed by the output layer
  double best_validation_accuracy = 0.0;
  std::size_t best_epoch = 0;
  std::vector<EpochLog> training_log;

  std::size_t embedding_width() const noexcept { return config.hidden_widths.back(); }
  bool operator==(const TrainedModel&) const = default;
};

// values[(t * samples + u) * classes + k] = p(y = k | x_u) under pass t.
struct PredictionTensor {
  std::size_t passes = 0;
  std::size_t samples = 0;
  std::size_t classes = 0;
  std::vector<double> values;
  std::vector<SampleId> sample_ids;

  std::span<const double> row(std::size_t t, std::size_t u) const noexcept {
    return {values.data() + (t * samples + u) * classes, classes};
  }
  std::span<double> row(std::size_t t, std::size_t u) noexcept {
    return {values.data() + (t * samples + u) * classes, classes};
  }
  bool operator==(const PredictionTensor&) const = default;
};

struct EmbeddingMatrix {
  std::size_t rows = 0;
  std::size_t width = 0;
  std::vector<double> values;
  std::vector<SampleId> sample_ids;

  const double* row(std::size_t u) const noexcept { return values.data() + u * width; }
  bool operator==(const EmbeddingMatrix&) const = default;
};

// Glorot-uniform weights, zero biases, seeded.
std::vector<DenseLayer> initialize_layers(const ModelConfig& config, Seed seed);

// Fresh initialization from weight_init_seed ^ train_seed, Adam on mean
// cross-entropy with dropout after every hidden layer. Keeps the weights of
// the epoch with the highest validation accuracy (earliest on ties).
TrainedModel train_from_scratch(const ModelConfig& config, const FeatureMatrix& train_features,
                                std::span<const ClassIndex> train_labels, const FeatureMatrix& validation_features,
                                std::span<const ClassIndex> validation_labels, Seed train_seed);

PredictionTensor predict_deterministic(const TrainedModel& model, const FeatureMatrix& features,
                                       std::span<const SampleId> sample_ids);

// One fresh dropout mask per pass; deterministic in mc_seed.
PredictionTensor predict_stochastic(const TrainedModel& model, const FeatureMatrix& features,
                                    std::span<const SampleId> sample_ids, std::size_t passes, Seed mc_seed);

// Last hidden layer activations with dropout disabled.
EmbeddingMatrix embed(const TrainedModel& model, const FeatureMatrix& features, std::span<const SampleId> sample_ids);

// Averages the passes into a single-pass tensor.
PredictionTensor mean_over_passes(const PredictionTensor& tensor);

// Argmax with ties going to the smaller class index.
ClassIndex argmax_class(std::span<const double> probabilities) noexcept;

double accuracy(const TrainedModel& model, const FeatureMatrix& features, std::span<const ClassIndex> labels);

// Dropout-free mean cross-entropy and its gradient with respect to every
// weight and bias. `gradient` is resized to match `layers`.
double loss_and_gradient(const std::vector<DenseLayer>& layers, const FeatureMatrix& features,
                         std::span<const ClassIndex> labels, std::vector<DenseLayer>* gradient);

inline double mean_loss(const std::vector<DenseLayer>& layers, const FeatureMatrix& features,
                        std::span<const ClassIndex> labels) {
  return loss_and_gradient(layers, features, labels, nullptr);
}

std::string serialize_model(const TrainedModel& model);
TrainedModel deserialize_model(std::string_view json_text);

// ---------------------------------------------------------------------------
// Text tensor files (external model adapter)
//
//   PRED T U N            EMB U E
//   id_0 ... id_{U-1}     id_0 ... id_{U-1}
//   T*U rows of N         U rows of E
// ---------------------------------------------------------------------------

// Rows must be probability vectors within `tolerance`.
void validate_probability_rows(const PredictionTensor& tensor, double tolerance);

PredictionTensor read_prediction_tensor(const std::filesystem::path& path);
EmbeddingMatrix read_embedding_matrix(const std::filesystem::path& path);
void write_prediction_tensor(const PredictionTensor& tensor, const std::filesystem::path& path);
void write_embedding_matrix(const EmbeddingMatrix& matrix, const std::filesystem::path& path);

std::pair<PredictionTensor, EmbeddingMatrix> load_external(const std::filesystem::path& predictions_path,
                                                           const std::filesystem::path& embeddings_path);

}  // namespace batchal
