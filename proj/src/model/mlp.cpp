#include <algorithm>
#include <cmath>
#include <limits>

#include "batchal/error.hpp"
#include "batchal/kernels.hpp"
#include "batchal/model.hpp"
#include "batchal/random.hpp"

namespace batchal {

void ModelConfig::validate() const {
  if (input_dim < 1) fail(ErrorKind::Config, "model: input_dim must be >= 1");
  if (hidden_widths.empty()) fail(ErrorKind::Config, "model: at least one hidden layer is required");
  for (const std::size_t w : hidden_widths) {
    if (w < 1) fail(ErrorKind::Config, "model: hidden widths must be >= 1");
  }
  if (num_classes < 1) fail(ErrorKind::Config, "model: num_classes must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail(ErrorKind::Config, "model: dropout_rate must lie in [0, 1)");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail(ErrorKind::Config, "model: learning_rate must be > 0");
  if (batch_size < 1) fail(ErrorKind::Config, "model: batch_size must be >= 1");
  if (mc_passes < 1) fail(ErrorKind::Config, "model: mc_passes must be >= 1");
}

std::vector<DenseLayer> initialize_layers(const ModelConfig& config, Seed seed) {
  config.validate();
  Rng rng(seed);
  std::vector<DenseLayer> layers;
  std::size_t fan_in = config.input_dim;
  std::vector<std::size_t> widths = config.hidden_widths;
  widths.push_back(static_cast<std::size_t>(config.num_classes));
  for (const std::size_t fan_out : widths) {
    DenseLayer layer;
    layer.inputs = fan_in;
    layer.outputs = fan_out;
    layer.weights.resize(fan_in * fan_out);
    layer.bias.assign(fan_out, 0.0);
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& w : layer.weights) w = (2.0 * uniform_unit(rng) - 1.0) * limit;
    layers.push_back(std::move(layer));
    fan_in = fan_out;
  }
  return layers;
}

ClassIndex argmax_class(std::span<const double> probabilities) noexcept {
  ClassIndex best = 0;
  for (std::size_t k = 1; k < probabilities.size(); ++k) {
    if (probabilities[k] > probabilities[static_cast<std::size_t>(best)]) best = static_cast<ClassIndex>(k);
  }
  return best;
}

namespace {

void softmax_in_place(std::span<double> logits) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double& z : logits) {
    z = std::exp(z - peak);
    total += z;
  }
  for (double& z : logits) z /= total;
}

// Per-sample activations; outputs[0] is the input, outputs[l + 1] the output
// of layer l (post-ReLU and dropout for hidden layers, logits for the last).
class Workspace {
 public:
  explicit Workspace(const std::vector<DenseLayer>& layers) {
    outputs_.resize(layers.size() + 1);
    scales_.resize(layers.size());
    outputs_[0].resize(layers.front().inputs);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      outputs_[l + 1].resize(layers[l].outputs);
      scales_[l].assign(layers[l].outputs, 1.0);
    }
    deltas_.resize(layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) deltas_[l].resize(layers[l].outputs);
  }

  // With `rng` set, each hidden unit is kept with probability 1 - rate and
  // rescaled by 1 / (1 - rate).
  void forward(const std::vector<DenseLayer>& layers, const double* x, Rng* rng, double rate) {
    std::copy(x, x + layers.front().inputs, outputs_[0].begin());
    const std::size_t last = layers.size() - 1;
    const double keep_scale = 1.0 / (1.0 - rate);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const DenseLayer& layer = layers[l];
      const double* in = outputs_[l].data();
      auto& out = outputs_[l + 1];
      for (std::size_t j = 0; j < layer.outputs; ++j) {
        out[j] = layer.bias[j] + kernels::dot(layer.row(j), in, layer.inputs);
      }
      if (l == last) break;
      auto& scale = scales_[l];
      for (std::size_t j = 0; j < layer.outputs; ++j) {
        double s = 1.0;
        if (rng != nullptr) s = uniform_unit(*rng) < rate ? 0.0 : keep_scale;
        scale[j] = s;
        out[j] = out[j] > 0.0 ? out[j] * s : 0.0;
      }
    }
  }

  std::span<double> logits() noexcept { return outputs_.back(); }
  std::span<const double> hidden(std::size_t l) const noexcept { return outputs_[l + 1]; }

  // Accumulates gradients of the loss for one sample; `output_delta` is the
  // derivative with respect to the logits.
  void backward(const std::vector<DenseLayer>& layers, std::span<const double> output_delta,
                std::vector<DenseLayer>& gradient) {
    std::copy(output_delta.begin(), output_delta.end(), deltas_.back().begin());
    for (std::size_t l = layers.size(); l-- > 0;) {
      const DenseLayer& layer = layers[l];
      DenseLayer& grad = gradient[l];
      const double* in = outputs_[l].data();
      const auto& delta = deltas_[l];
      for (std::size_t j = 0; j < layer.outputs; ++j) {
        if (delta[j] == 0.0) continue;
        kernels::axpy(delta[j], in, grad.weights.data() + j * layer.inputs, layer.inputs);
        grad.bias[j] += delta[j];
      }
      if (l == 0) break;
      auto& below = deltas_[l - 1];
      std::fill(below.begin(), below.end(), 0.0);
      for (std::size_t j = 0; j < layer.outputs; ++j) {
        if (delta[j] == 0.0) continue;
        kernels::axpy(delta[j], layer.row(j), below.data(), layer.inputs);
      }
      const auto& activation = outputs_[l];
      const auto& scale = scales_[l - 1];
      for (std::size_t i = 0; i < below.size(); ++i) below[i] = activation[i] > 0.0 ? below[i] * scale[i] : 0.0;
    }
  }

 private:
  std::vector<std::vector<double>> outputs_;
  std::vector<std::vector<double>> scales_;
  std::vector<std::vector<double>> deltas_;
};

std::vector<DenseLayer> zeros_like(const std::vector<DenseLayer>& layers) {
  std::vector<DenseLayer> z = layers;
  for (DenseLayer& layer : z) {
    std::fill(layer.weights.begin(), layer.weights.end(), 0.0);
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
  }
  return z;
}

void check_labels(std::span<const ClassIndex> labels, int num_classes, const char* what) {
  for (const ClassIndex y : labels) {
    if (y < 0 || y >= num_classes) {
      fail(ErrorKind::Config, std::string(what) + " label " + std::to_string(y) + " outside [0, " +
                                  std::to_string(num_classes) + ")");
    }
  }
}

void check_shape(const FeatureMatrix& features, std::size_t dim, std::size_t ids) {
  if (features.rows > 0 && features.cols != dim) {
    fail(ErrorKind::Shape, "feature dimension " + std::to_string(features.cols) + " does not match model input " +
                               std::to_string(dim));
  }
  if (ids != features.rows) {
    fail(ErrorKind::Shape, std::to_string(ids) + " sample ids for " + std::to_string(features.rows) + " feature rows");
  }
}

class Adam {
 public:
  Adam(const std::vector<DenseLayer>& layers, double rate)
      : rate_(rate), first_(zeros_like(layers)), second_(zeros_like(layers)) {}

  void step(std::vector<DenseLayer>& layers, const std::vector<DenseLayer>& gradient) {
    ++steps_;
    const double correction1 = 1.0 - std::pow(kBeta1, static_cast<double>(steps_));
    const double correction2 = 1.0 - std::pow(kBeta2, static_cast<double>(steps_));
    for (std::size_t l = 0; l < layers.size(); ++l) {
      update(layers[l].weights, gradient[l].weights, first_[l].weights, second_[l].weights, correction1, correction2);
      update(layers[l].bias, gradient[l].bias, first_[l].bias, second_[l].bias, correction1, correction2);
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  void update(std::vector<double>& param, const std::vector<double>& grad, std::vector<double>& m,
              std::vector<double>& v, double correction1, double correction2) const {
    for (std::size_t i = 0; i < param.size(); ++i) {
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * grad[i];
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * grad[i] * grad[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      param[i] -= rate_ * m_hat / (std::sqrt(v_hat) + kEpsilon);
    }
  }

  double rate_;
  std::uint64_t steps_ = 0;
  std::vector<DenseLayer> first_;
  std::vector<DenseLayer> second_;
};

double accuracy_of(const std::vector<DenseLayer>& layers, const FeatureMatrix& features,
                   std::span<const ClassIndex> labels) {
  if (features.rows == 0) return 0.0;
  Workspace ws(layers);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < features.rows; ++r) {
    ws.forward(layers, features.row(r), nullptr, 0.0);
    if (argmax_class(ws.logits()) == labels[r]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(features.rows);
}

}  // namespace

double loss_and_gradient(const std::vector<DenseLayer>& layers, const FeatureMatrix& features,
                         std::span<const ClassIndex> labels, std::vector<DenseLayer>* gradient) {
  if (layers.empty()) fail(ErrorKind::Config, "network has no layers");
  if (features.rows != labels.size()) fail(ErrorKind::Shape, "feature rows and labels differ in length");
  if (gradient != nullptr) *gradient = zeros_like(layers);
  if (features.rows == 0) return 0.0;

  Workspace ws(layers);
  const double inv_n = 1.0 / static_cast<double>(features.rows);
  std::vector<double> delta(layers.back().outputs);
  double total = 0.0;
  for (std::size_t r = 0; r < features.rows; ++r) {
    ws.forward(layers, features.row(r), nullptr, 0.0);
    auto probs = ws.logits();
    softmax_in_place(probs);
    const auto y = static_cast<std::size_t>(labels[r]);
    total -= std::log(std::max(probs[y], std::numeric_limits<double>::min()));
    if (gradient != nullptr) {
      for (std::size_t k = 0; k < delta.size(); ++k) delta[k] = (probs[k] - (k == y ? 1.0 : 0.0)) * inv_n;
      ws.backward(layers, delta, *gradient);
    }
  }
  return total * inv_n;
}

TrainedModel train_from_scratch(const ModelConfig& config, const FeatureMatrix& train_features,
                                std::span<const ClassIndex> train_labels, const FeatureMatrix& validation_features,
                                std::span<const ClassIndex> validation_labels, Seed train_seed) {
  config.validate();
  if (train_features.rows == 0) fail(ErrorKind::Config, "training needs at least one labeled example");
  if (train_labels.size() != train_features.rows || validation_labels.size() != validation_features.rows) {
    fail(ErrorKind::Shape, "feature rows and labels differ in length");
  }
  check_shape(train_features, config.input_dim, train_features.rows);
  check_shape(validation_features, config.input_dim, validation_features.rows);
  check_labels(train_labels, config.num_classes, "training");
  check_labels(validation_labels, config.num_classes, "validation");

  const Seed init_seed = config.weight_init_seed ^ train_seed;
  TrainedModel model;
  model.config = config;
  model.layers = initialize_layers(config, init_seed);

  const bool has_validation = validation_features.rows > 0;
  if (config.epochs == 0) {
    const double acc = accuracy_of(model.layers, validation_features, validation_labels);
    model.training_log.push_back({0, mean_loss(model.layers, train_features, train_labels), acc});
    model.best_validation_accuracy = acc;
    model.best_epoch = 0;
    return model;
  }

  Rng rng(derive_seed(init_seed, "train-stream"));
  std::vector<DenseLayer> weights = model.layers;
  std::vector<DenseLayer> gradient = zeros_like(weights);
  Adam optimizer(weights, config.learning_rate);
  Workspace ws(weights);
  std::vector<std::size_t> order(train_features.rows);
  std::vector<double> delta(static_cast<std::size_t>(config.num_classes));
  double best = -1.0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_in_place(order, rng);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(stop - start);
      for (DenseLayer& g : gradient) {
        std::fill(g.weights.begin(), g.weights.end(), 0.0);
        std::fill(g.bias.begin(), g.bias.end(), 0.0);
      }
      for (std::size_t i = start; i < stop; ++i) {
        const std::size_t r = order[i];
        ws.forward(weights, train_features.row(r), &rng, config.dropout_rate);
        auto probs = ws.logits();
        softmax_in_place(probs);
        const auto y = static_cast<std::size_t>(train_labels[r]);
        epoch_loss -= std::log(std::max(probs[y], std::numeric_limits<double>::min()));
        for (std::size_t k = 0; k < delta.size(); ++k) delta[k] = (probs[k] - (k == y ? 1.0 : 0.0)) * inv_batch;
        ws.backward(weights, delta, gradient);
      }
      optimizer.step(weights, gradient);
    }
    epoch_loss /= static_cast<double>(order.size());
    if (!std::isfinite(epoch_loss)) {
      fail(ErrorKind::TrainingDiverged, "training loss became non-finite at epoch " + std::to_string(epoch));
    }

    const double acc = accuracy_of(weights, validation_features, validation_labels);
    model.training_log.push_back({epoch, epoch_loss, acc});
    // Without a validation set the final epoch is kept.
    if (!has_validation || acc > best) {
      best = acc;
      model.layers = weights;
      model.best_epoch = epoch;
    }
  }
  model.best_validation_accuracy = std::max(best, 0.0);
  return model;
}

PredictionTensor predict_deterministic(const TrainedModel& model, const FeatureMatrix& features,
                                       std::span<const SampleId> sample_ids) {
  check_shape(features, model.config.input_dim, sample_ids.size());
  PredictionTensor out;
  out.passes = 1;
  out.samples = features.rows;
  out.classes = static_cast<std::size_t>(model.config.num_classes);
  out.sample_ids.assign(sample_ids.begin(), sample_ids.end());
  out.values.resize(out.samples * out.classes);
  if (out.samples == 0) return out;
  Workspace ws(model.layers);
  for (std::size_t u = 0; u < out.samples; ++u) {
    ws.forward(model.layers, features.row(u), nullptr, 0.0);
    auto probs = ws.logits();
    softmax_in_place(probs);
    std::copy(probs.begin(), probs.end(), out.row(0, u).begin());
  }
  return out;
}

PredictionTensor predict_stochastic(const TrainedModel& model, const FeatureMatrix& features,
                                    std::span<const SampleId> sample_ids, std::size_t passes, Seed mc_seed) {
  if (passes < 1) fail(ErrorKind::Precondition, "stochastic prediction needs at least one pass");
  check_shape(features, model.config.input_dim, sample_ids.size());
  if (model.config.dropout_rate == 0.0 && passes > 1) {
    warn("dropout_rate is 0; all stochastic passes will be identical");
  }
  PredictionTensor out;
  out.passes = passes;
  out.samples = features.rows;
  out.classes = static_cast<std::size_t>(model.config.num_classes);
  out.sample_ids.assign(sample_ids.begin(), sample_ids.end());
  out.values.resize(passes * out.samples * out.classes);
  if (out.samples == 0) return out;
  Workspace ws(model.layers);
  Rng rng(mc_seed);
  for (std::size_t t = 0; t < passes; ++t) {
    for (std::size_t u = 0; u < out.samples; ++u) {
      ws.forward(model.layers, features.row(u), &rng, model.config.dropout_rate);
      auto probs = ws.logits();
      softmax_in_place(probs);
      std::copy(probs.begin(), probs.end(), out.row(t, u).begin());
    }
  }
  return out;
}

EmbeddingMatrix embed(const TrainedModel& model, const FeatureMatrix& features, std::span<const SampleId> sample_ids) {
  check_shape(features, model.config.input_dim, sample_ids.size());
  EmbeddingMatrix out;
  out.rows = features.rows;
  out.width = model.embedding_width();
  out.sample_ids.assign(sample_ids.begin(), sample_ids.end());
  out.values.reserve(out.rows * out.width);
  if (out.rows == 0) return out;
  Workspace ws(model.layers);
  const std::size_t penultimate = model.layers.size() - 2;
  for (std::size_t u = 0; u < out.rows; ++u) {
    ws.forward(model.layers, features.row(u), nullptr, 0.0);
    const auto h = ws.hidden(penultimate);
    out.values.insert(out.values.end(), h.begin(), h.end());
  }
  return out;
}

PredictionTensor mean_over_passes(const PredictionTensor& tensor) {
  PredictionTensor out;
  out.passes = 1;
  out.samples = tensor.samples;
  out.classes = tensor.classes;
  out.sample_ids = tensor.sample_ids;
  out.values.assign(out.samples * out.classes, 0.0);
  if (tensor.passes == 0) return out;
  const double inv = 1.0 / static_cast<double>(tensor.passes);
  for (std::size_t u = 0; u < tensor.samples; ++u) {
    auto dst = out.row(0, u);
    for (std::size_t t = 0; t < tensor.passes; ++t) {
      const auto src = tensor.row(t, u);
      for (std::size_t k = 0; k < tensor.classes; ++k) dst[k] += src[k];
    }
    for (double& p : dst) p *= inv;
  }
  return out;
}

double accuracy(const TrainedModel& model, const FeatureMatrix& features, std::span<const ClassIndex> labels) {
  if (labels.size() != features.rows) fail(ErrorKind::Shape, "feature rows and labels differ in length");
  check_shape(features, model.config.input_dim, features.rows);
  return accuracy_of(model.layers, features, labels);
}

}  // namespace batchal
