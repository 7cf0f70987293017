#include "batchal/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "batchal/error.hpp"
#include "batchal/kernels.hpp"
#include "batchal/random.hpp"
#include "common/text.hpp"

namespace batchal {

std::string_view to_string(Strategy strategy) noexcept {
  switch (strategy) {
    case Strategy::Random: return "random";
    case Strategy::LeastConfidence: return "least_confidence";
    case Strategy::Entropy: return "entropy";
    case Strategy::Dbal: return "dbal";
    case Strategy::Coreset: return "coreset";
  }
  return "unknown";
}

std::optional<Strategy> parse_strategy(std::string_view name) noexcept {
  for (const Strategy s : kAllStrategies) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

std::string strategy_names() {
  std::string out;
  for (const Strategy s : kAllStrategies) {
    if (!out.empty()) out += ", ";
    out += to_string(s);
  }
  return out;
}

bool needs_deterministic_predictions(Strategy s) noexcept {
  return s == Strategy::LeastConfidence || s == Strategy::Entropy;
}
bool needs_stochastic_predictions(Strategy s) noexcept { return s == Strategy::Dbal; }
bool needs_embeddings(Strategy s) noexcept { return s == Strategy::Coreset; }

namespace {

constexpr double kSumTolerance = 1e-6;

void check_probability_vector(std::span<const double> p) {
  double total = 0.0;
  for (const double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) fail(ErrorKind::Validation, "probability vector has a negative or non-finite entry");
    total += v;
  }
  if (std::abs(total - 1.0) > kSumTolerance) {
    fail(ErrorKind::Validation, "probability vector sums to " + text::format_double(total));
  }
}

double entropy_unchecked(std::span<const double> p) {
  double h = 0.0;
  for (const double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

void require_batch_size(std::size_t b) {
  if (b == 0) fail(ErrorKind::Config, "batch size must be >= 1");
}

void require_distinct(std::span<const SampleId> ids) {
  std::vector<SampleId> sorted(ids.begin(), ids.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    fail(ErrorKind::Integrity, "duplicate sample id in acquisition input");
  }
}

void require_shape(const PredictionTensor& t) {
  if (t.values.size() != t.passes * t.samples * t.classes || t.sample_ids.size() != t.samples) {
    fail(ErrorKind::Shape, "prediction tensor dimensions are inconsistent");
  }
}

enum class Order { Ascending, Descending };

ScoredBatch top_b(Strategy strategy, const std::vector<SampleId>& ids, const std::vector<double>& scores,
                  std::size_t b, Order order) {
  std::vector<std::size_t> idx(ids.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto better = [&](std::size_t a, std::size_t c) {
    if (scores[a] != scores[c]) return order == Order::Ascending ? scores[a] < scores[c] : scores[a] > scores[c];
    return ids[a] < ids[c];
  };
  const std::size_t take = std::min(b, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end(), better);
  ScoredBatch batch;
  batch.strategy = strategy;
  for (std::size_t i = 0; i < take; ++i) {
    batch.selected_ids.push_back(ids[idx[i]]);
    batch.scores.push_back(scores[idx[i]]);
  }
  return batch;
}

}  // namespace

double score_entropy(std::span<const double> probabilities) {
  check_probability_vector(probabilities);
  return entropy_unchecked(probabilities);
}

double score_least_confidence(std::span<const double> probabilities) {
  check_probability_vector(probabilities);
  return probabilities.empty() ? 0.0 : *std::max_element(probabilities.begin(), probabilities.end());
}

double score_bald(std::span<const std::vector<double>> passes) {
  if (passes.empty()) fail(ErrorKind::Precondition, "BALD needs at least one pass");
  const std::size_t n = passes.front().size();
  std::vector<double> mean(n, 0.0);
  double mean_entropy = 0.0;
  for (const auto& p : passes) {
    if (p.size() != n) fail(ErrorKind::Shape, "BALD passes differ in class count");
    check_probability_vector(p);
    mean_entropy += entropy_unchecked(p);
    for (std::size_t k = 0; k < n; ++k) mean[k] += p[k];
  }
  const double inv_t = 1.0 / static_cast<double>(passes.size());
  for (double& m : mean) m *= inv_t;
  return std::max(0.0, entropy_unchecked(mean) - mean_entropy * inv_t);
}

double score_bald(const PredictionTensor& tensor, std::size_t sample) {
  if (tensor.passes == 0) fail(ErrorKind::Precondition, "BALD needs at least one pass");
  std::vector<double> mean(tensor.classes, 0.0);
  double mean_entropy = 0.0;
  for (std::size_t t = 0; t < tensor.passes; ++t) {
    const auto p = tensor.row(t, sample);
    check_probability_vector(p);
    mean_entropy += entropy_unchecked(p);
    for (std::size_t k = 0; k < tensor.classes; ++k) mean[k] += p[k];
  }
  const double inv_t = 1.0 / static_cast<double>(tensor.passes);
  for (double& m : mean) m *= inv_t;
  return std::max(0.0, entropy_unchecked(mean) - mean_entropy * inv_t);
}

ScoredBatch select_least_confidence(const PredictionTensor& predictions, std::size_t batch_size) {
  require_batch_size(batch_size);
  require_shape(predictions);
  if (predictions.passes != 1) fail(ErrorKind::Precondition, "least confidence needs a single-pass prediction tensor");
  require_distinct(predictions.sample_ids);
  std::vector<double> scores(predictions.samples);
  for (std::size_t u = 0; u < predictions.samples; ++u) scores[u] = score_least_confidence(predictions.row(0, u));
  return top_b(Strategy::LeastConfidence, predictions.sample_ids, scores, batch_size, Order::Ascending);
}

ScoredBatch select_entropy(const PredictionTensor& predictions, std::size_t batch_size) {
  require_batch_size(batch_size);
  require_shape(predictions);
  if (predictions.passes != 1) fail(ErrorKind::Precondition, "entropy sampling needs a single-pass prediction tensor");
  require_distinct(predictions.sample_ids);
  std::vector<double> scores(predictions.samples);
  for (std::size_t u = 0; u < predictions.samples; ++u) scores[u] = score_entropy(predictions.row(0, u));
  return top_b(Strategy::Entropy, predictions.sample_ids, scores, batch_size, Order::Descending);
}

ScoredBatch select_dbal(const PredictionTensor& predictions, std::size_t batch_size) {
  require_batch_size(batch_size);
  require_shape(predictions);
  if (predictions.passes < 2) {
    fail(ErrorKind::Precondition, "DBAL needs at least 2 stochastic passes, got " + std::to_string(predictions.passes));
  }
  require_distinct(predictions.sample_ids);
  std::vector<double> scores(predictions.samples);
  bool any_disagreement = false;
  for (std::size_t u = 0; u < predictions.samples; ++u) {
    scores[u] = score_bald(predictions, u);
    any_disagreement = any_disagreement || scores[u] > 0.0;
  }
  if (!any_disagreement && predictions.samples > 0) {
    warn("every stochastic pass agrees; DBAL scores are all zero and selection falls back to id order");
  }
  return top_b(Strategy::Dbal, predictions.sample_ids, scores, batch_size, Order::Descending);
}

ScoredBatch select_coreset_greedy(const EmbeddingMatrix& unlabeled, const EmbeddingMatrix& labeled,
                                  std::size_t batch_size) {
  require_batch_size(batch_size);
  if (labeled.rows == 0) fail(ErrorKind::Precondition, "core-set selection needs a nonempty labeled set");
  if (unlabeled.rows > 0 && unlabeled.width != labeled.width) {
    fail(ErrorKind::Shape, "unlabeled and labeled embeddings differ in width");
  }
  if (unlabeled.sample_ids.size() != unlabeled.rows || labeled.sample_ids.size() != labeled.rows) {
    fail(ErrorKind::Shape, "embedding id lists do not match row counts");
  }
  require_distinct(unlabeled.sample_ids);

  const std::size_t u_count = unlabeled.rows;
  const std::size_t e = unlabeled.width;
  std::vector<double> nearest(u_count, std::numeric_limits<double>::infinity());
  for (std::size_t l = 0; l < labeled.rows; ++l) {
    const double* centre = labeled.row(l);
    for (std::size_t u = 0; u < u_count; ++u) {
      nearest[u] = std::min(nearest[u], kernels::squared_distance(unlabeled.row(u), centre, e));
    }
  }

  ScoredBatch batch;
  batch.strategy = Strategy::Coreset;
  std::vector<bool> taken(u_count, false);
  const std::size_t picks = std::min(batch_size, u_count);
  for (std::size_t pick = 0; pick < picks; ++pick) {
    std::size_t best = u_count;
    for (std::size_t u = 0; u < u_count; ++u) {
      if (taken[u]) continue;
      if (best == u_count || nearest[u] > nearest[best] ||
          (nearest[u] == nearest[best] && unlabeled.sample_ids[u] < unlabeled.sample_ids[best])) {
        best = u;
      }
    }
    taken[best] = true;
    batch.selected_ids.push_back(unlabeled.sample_ids[best]);
    batch.scores.push_back(std::sqrt(nearest[best]));
    const double* centre = unlabeled.row(best);
    for (std::size_t u = 0; u < u_count; ++u) {
      if (!taken[u]) nearest[u] = std::min(nearest[u], kernels::squared_distance(unlabeled.row(u), centre, e));
    }
  }
  return batch;
}

ScoredBatch select_random(std::span<const SampleId> unlabeled_ids, std::size_t batch_size, Seed seed) {
  require_batch_size(batch_size);
  require_distinct(unlabeled_ids);
  std::vector<SampleId> ids(unlabeled_ids.begin(), unlabeled_ids.end());
  std::sort(ids.begin(), ids.end());
  Rng rng(seed);
  const std::size_t take = std::min(batch_size, ids.size());
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + uniform_below(rng, ids.size() - i);
    std::swap(ids[i], ids[j]);
  }
  ids.resize(take);
  ScoredBatch batch;
  batch.strategy = Strategy::Random;
  batch.selected_ids = std::move(ids);
  batch.scores.assign(take, 0.0);
  return batch;
}

ScoredBatch select_batch(Strategy strategy, const AcquisitionInputs& inputs, std::size_t batch_size) {
  const auto require = [&](const void* p, const char* what) {
    if (p == nullptr) {
      fail(ErrorKind::Precondition, std::string(to_string(strategy)) + " selection needs " + what);
    }
  };
  switch (strategy) {
    case Strategy::Random:
      return select_random(inputs.unlabeled_ids, batch_size, inputs.seed);
    case Strategy::LeastConfidence:
      require(inputs.predictions, "predictions");
      return select_least_confidence(*inputs.predictions, batch_size);
    case Strategy::Entropy:
      require(inputs.predictions, "predictions");
      return select_entropy(*inputs.predictions, batch_size);
    case Strategy::Dbal:
      require(inputs.predictions, "stochastic predictions");
      return select_dbal(*inputs.predictions, batch_size);
    case Strategy::Coreset:
      require(inputs.unlabeled_embeddings, "unlabeled embeddings");
      require(inputs.labeled_embeddings, "labeled embeddings");
      return select_coreset_greedy(*inputs.unlabeled_embeddings, *inputs.labeled_embeddings, batch_size);
  }
  fail(ErrorKind::Config, "unknown strategy");
}

}  // namespace batchal
