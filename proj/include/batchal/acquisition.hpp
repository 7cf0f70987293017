#pragma once

#include <array>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "batchal/model.hpp"
#include "batchal/types.hpp"

namespace batchal {

enum class Strategy { Random, LeastConfidence, Entropy, Dbal, Coreset };

inline constexpr std::array<Strategy, 5> kAllStrategies{Strategy::Random, Strategy::LeastConfidence, Strategy::Entropy,
                                                        Strategy::Dbal, Strategy::Coreset};

std::string_view to_string(Strategy strategy) noexcept;
std::optional<Strategy> parse_strategy(std::string_view name) noexcept;
// "random, least_confidence, entropy, dbal, coreset"
std::string strategy_names();

// Which model outputs a strategy consumes.
bool needs_deterministic_predictions(Strategy strategy) noexcept;
bool needs_stochastic_predictions(Strategy strategy) noexcept;
bool needs_embeddings(Strategy strategy) noexcept;

struct ScoredBatch {
  Strategy strategy = Strategy::Random;
  std::vector<SampleId> selected_ids;  // in selection order
  std::vector<double> scores;          // parallel to selected_ids

  bool operator==(const ScoredBatch&) const = default;
};

// Shannon entropy in nats, 0 * ln 0 taken as 0.
double score_entropy(std::span<const double> probabilities);

// Mutual information between label and weights: entropy of the mean pass
// minus the mean per-pass entropy, clamped at zero.
double score_bald(std::span<const std::vector<double>> passes);
double score_bald(const PredictionTensor& tensor, std::size_t sample);

double score_least_confidence(std::span<const double> probabilities);

// Uncertainty strategies rank the whole pool once and take the top b; ties
// go to the smaller sample id.
ScoredBatch select_least_confidence(const PredictionTensor& predictions, std::size_t batch_size);
ScoredBatch select_entropy(const PredictionTensor& predictions, std::size_t batch_size);
ScoredBatch select_dbal(const PredictionTensor& predictions, std::size_t batch_size);

// Greedy k-center over Euclidean distance in embedding space.
ScoredBatch select_coreset_greedy(const EmbeddingMatrix& unlabeled, const EmbeddingMatrix& labeled,
                                  std::size_t batch_size);

ScoredBatch select_random(std::span<const SampleId> unlabeled_ids, std::size_t batch_size, Seed seed);

struct AcquisitionInputs {
  std::span<const SampleId> unlabeled_ids;
  const PredictionTensor* predictions = nullptr;  // T = 1 for LC/entropy, T >= 2 for dbal
  const EmbeddingMatrix* unlabeled_embeddings = nullptr;
  const EmbeddingMatrix* labeled_embeddings = nullptr;
  Seed seed = 0;
};

ScoredBatch select_batch(Strategy strategy, const AcquisitionInputs& inputs, std::size_t batch_size);

}  // namespace batchal
