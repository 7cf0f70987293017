#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>

#include "batchal/error.hpp"
#include "batchal/orchestrator.hpp"
#include "batchal/random.hpp"

namespace batchal {

std::string_view to_string(EvaluationSet set) noexcept {
  return set == EvaluationSet::Holdout ? "holdout" : "full-dataset";
}

std::string_view to_string(LabelSource source) noexcept {
  return source == LabelSource::HumanSession ? "human-session" : "oracle";
}

void RunConfig::validate() const {
  if (initial_labeled < 1) fail(ErrorKind::Config, "initial_labeled must be >= 1");
  if (initial_labeled > budget) fail(ErrorKind::Config, "initial_labeled exceeds budget");
  if (query_batch < 1) fail(ErrorKind::Config, "query_batch must be >= 1");
  if (repetitions < 1) fail(ErrorKind::Config, "repetitions must be >= 1");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    fail(ErrorKind::Config, "validation_fraction must lie in [0, 1)");
  }
  if (evaluation_set == EvaluationSet::Holdout && !(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    fail(ErrorKind::Config, "holdout_fraction must lie in (0, 1)");
  }
  if (strategy == Strategy::Dbal && model.mc_passes < 2) {
    fail(ErrorKind::Config, "dbal needs mc_passes >= 2");
  }
  model.validate();
}

RepetitionSeeds RepetitionSeeds::derive(Seed master_seed, std::size_t repetition) {
  RepetitionSeeds s;
  s.repetition = derive_seed(master_seed, "repetition", repetition);
  s.split = derive_seed(s.repetition, "split");
  s.holdout = derive_seed(s.repetition, "holdout");
  return s;
}

Seed RepetitionSeeds::train(std::size_t round) const noexcept { return derive_seed(repetition, "train", round); }
Seed RepetitionSeeds::selection(std::size_t round) const noexcept { return derive_seed(repetition, "select", round); }
Seed RepetitionSeeds::mc(std::size_t round) const noexcept { return derive_seed(repetition, "mc", round); }

namespace {

std::optional<ClassIndex> known_label(const Dataset& dataset, const Pool& pool, SampleId id) {
  if (const auto& truth = dataset.samples[id].true_label) return truth;
  if (const auto it = pool.assigned_labels.find(id); it != pool.assigned_labels.end()) return it->second;
  if (const auto it = pool.validation_labels.find(id); it != pool.validation_labels.end()) return it->second;
  return std::nullopt;
}

}  // namespace

Metrics compute_metrics(const TrainedModel& model, const Dataset& dataset, const Pool& pool,
                        std::span<const SampleId> evaluation_ids, std::span<const std::size_t> cumulative_selected,
                        std::span<const std::size_t> class_totals) {
  const auto n = static_cast<std::size_t>(pool.num_classes);
  if (cumulative_selected.size() != n || class_totals.size() != n) {
    fail(ErrorKind::Shape, "per-class vectors must have one entry per class");
  }
  std::vector<SampleId> ids;
  std::vector<ClassIndex> labels;
  for (const SampleId id : evaluation_ids) {
    if (const auto label = known_label(dataset, pool, id)) {
      ids.push_back(id);
      labels.push_back(*label);
    }
  }
  const FeatureMatrix features = gather_features(dataset, ids);
  const PredictionTensor predictions = predict_deterministic(model, features, ids);

  std::vector<std::size_t> correct(n, 0);
  std::vector<std::size_t> present(n, 0);
  std::size_t total_correct = 0;
  for (std::size_t u = 0; u < ids.size(); ++u) {
    const auto y = static_cast<std::size_t>(labels[u]);
    ++present[y];
    if (argmax_class(predictions.row(0, u)) == labels[u]) {
      ++correct[y];
      ++total_correct;
    }
  }

  Metrics m;
  m.overall_accuracy = ids.empty() ? std::numeric_limits<double>::quiet_NaN()
                                   : static_cast<double>(total_correct) / static_cast<double>(ids.size());
  m.per_class_accuracy.resize(n);
  m.per_class_selection_pct.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    m.per_class_accuracy[k] = present[k] == 0 ? std::numeric_limits<double>::quiet_NaN()
                                              : static_cast<double>(correct[k]) / static_cast<double>(present[k]);
    m.per_class_selection_pct[k] =
        class_totals[k] == 0 ? 0.0 : static_cast<double>(cumulative_selected[k]) / static_cast<double>(class_totals[k]);
  }
  return m;
}

ActiveLearningCycle::ActiveLearningCycle(const Dataset& dataset, RunConfig config, std::size_t repetition)
    : dataset_(&dataset), config_(std::move(config)) {
  config_.validate();
  if (config_.model.input_dim != dataset.dimension || config_.model.num_classes != dataset.num_classes) {
    fail(ErrorKind::Config, "model dimensions do not match the dataset");
  }
  seeds_ = RepetitionSeeds::derive(config_.master_seed, repetition);
  state_.repetition = repetition;

  if (config_.evaluation_set == EvaluationSet::Holdout) {
    std::vector<SampleId> ids(dataset.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<SampleId>(i);
    Rng rng(seeds_.holdout);
    shuffle_in_place(ids, rng);
    const auto count = static_cast<std::size_t>(
        std::ceil(config_.holdout_fraction * static_cast<double>(ids.size()) - 1e-9));
    state_.holdout_ids.insert(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(count));
  }

  PoolInit init;
  init.validation_fraction = config_.validation_fraction;
  init.initial_labeled = config_.initial_labeled;
  init.budget = config_.budget;
  init.seed = seeds_.split;
  init.label_source = config_.label_source;
  init.excluded = state_.holdout_ids;
  state_.pool = init_pool(dataset, init);
  state_.cumulative_selected.assign(static_cast<std::size_t>(dataset.num_classes), 0);
}

ActiveLearningCycle::ActiveLearningCycle(const Dataset& dataset, RunConfig config, CycleState state)
    : dataset_(&dataset), config_(std::move(config)), state_(std::move(state)) {
  config_.validate();
  seeds_ = RepetitionSeeds::derive(config_.master_seed, state_.repetition);
  if (state_.cumulative_selected.size() != static_cast<std::size_t>(dataset.num_classes)) {
    fail(ErrorKind::Integrity, "restored cycle state does not match the dataset's class count");
  }
}

bool ActiveLearningCycle::finished() const noexcept {
  return state_.pool.headroom() == 0 || state_.pool.unlabeled_ids.empty();
}

std::vector<SampleId> ActiveLearningCycle::evaluation_ids() const {
  if (config_.evaluation_set == EvaluationSet::Holdout) {
    return {state_.holdout_ids.begin(), state_.holdout_ids.end()};
  }
  std::vector<SampleId> ids;
  for (const Sample& s : dataset_->samples) {
    if (known_label(*dataset_, state_.pool, s.id)) ids.push_back(s.id);
  }
  return ids;
}

std::vector<std::size_t> ActiveLearningCycle::class_totals() const {
  std::vector<std::size_t> totals(static_cast<std::size_t>(dataset_->num_classes), 0);
  for (const Sample& s : dataset_->samples) {
    if (const auto label = known_label(*dataset_, state_.pool, s.id)) ++totals[static_cast<std::size_t>(*label)];
  }
  return totals;
}

TrainedModel ActiveLearningCycle::train() const {
  const Pool& pool = state_.pool;
  const auto labeled = pool.labeled_vector();
  const auto validation = pool.validation_vector();
  std::vector<ClassIndex> labeled_y;
  labeled_y.reserve(labeled.size());
  for (const SampleId id : labeled) labeled_y.push_back(pool.assigned_labels.at(id));
  std::vector<ClassIndex> validation_y;
  validation_y.reserve(validation.size());
  for (const SampleId id : validation) validation_y.push_back(pool.validation_labels.at(id));
  return train_from_scratch(config_.model, gather_features(*dataset_, labeled), labeled_y,
                            gather_features(*dataset_, validation), validation_y, seeds_.train(next_round()));
}

RoundRecord ActiveLearningCycle::train_and_evaluate(std::span<const SampleId> revealed_ids, double elapsed_before,
                                                    TrainedModel* model_out) {
  const auto start = std::chrono::steady_clock::now();
  TrainedModel model = train();
  const auto eval_ids = evaluation_ids();
  const auto totals = class_totals();
  const Metrics metrics =
      compute_metrics(model, *dataset_, state_.pool, eval_ids, state_.cumulative_selected, totals);

  RoundRecord record;
  record.round_index = next_round();
  record.labeled_count = state_.pool.labeled_ids.size();
  record.overall_accuracy = metrics.overall_accuracy;
  record.per_class_accuracy = metrics.per_class_accuracy;
  record.per_class_selection_pct = metrics.per_class_selection_pct;
  record.best_validation_accuracy = model.best_validation_accuracy;
  record.selected_ids.assign(revealed_ids.begin(), revealed_ids.end());
  record.wall_time =
      elapsed_before + std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  state_.records.push_back(record);
  if (model_out != nullptr) *model_out = std::move(model);
  return record;
}

ScoredBatch ActiveLearningCycle::propose(const TrainedModel& model) const {
  const Pool& pool = state_.pool;
  const std::size_t count = std::min({config_.query_batch, pool.headroom(), pool.unlabeled_ids.size()});
  ScoredBatch empty;
  empty.strategy = config_.strategy;
  if (count == 0) return empty;

  const std::size_t round = next_round();
  const auto unlabeled = pool.unlabeled_vector();
  AcquisitionInputs inputs;
  inputs.unlabeled_ids = unlabeled;
  inputs.seed = seeds_.selection(round);

  PredictionTensor predictions;
  EmbeddingMatrix unlabeled_embeddings;
  EmbeddingMatrix labeled_embeddings;
  if (config_.strategy != Strategy::Random) {
    const FeatureMatrix features = gather_features(*dataset_, unlabeled);
    if (needs_deterministic_predictions(config_.strategy)) {
      predictions = predict_deterministic(model, features, unlabeled);
      inputs.predictions = &predictions;
    } else if (needs_stochastic_predictions(config_.strategy)) {
      predictions = predict_stochastic(model, features, unlabeled, config_.model.mc_passes, seeds_.mc(round));
      inputs.predictions = &predictions;
    } else {
      const auto labeled = pool.labeled_vector();
      unlabeled_embeddings = embed(model, features, unlabeled);
      labeled_embeddings = embed(model, gather_features(*dataset_, labeled), labeled);
      inputs.unlabeled_embeddings = &unlabeled_embeddings;
      inputs.labeled_embeddings = &labeled_embeddings;
    }
  }
  return select_batch(config_.strategy, inputs, count);
}

void ActiveLearningCycle::commit(std::span<const std::pair<SampleId, ClassIndex>> labels) {
  reveal_labels(state_.pool, labels);
  for (const auto& [id, label] : labels) ++state_.cumulative_selected[static_cast<std::size_t>(label)];
}

std::vector<std::pair<SampleId, ClassIndex>> ActiveLearningCycle::oracle_labels(const ScoredBatch& batch) const {
  std::vector<std::pair<SampleId, ClassIndex>> labels;
  labels.reserve(batch.selected_ids.size());
  for (const SampleId id : batch.selected_ids) {
    const auto& truth = dataset_->samples.at(id).true_label;
    if (!truth) fail(ErrorKind::Capability, "sample " + std::to_string(id) + " has no oracle label");
    labels.emplace_back(id, *truth);
  }
  return labels;
}

RoundOutcome run_initial_round(ActiveLearningCycle& cycle) {
  RoundOutcome outcome;
  outcome.batch.strategy = cycle.config().strategy;
  outcome.record = cycle.train_and_evaluate({}, 0.0, &outcome.model);
  return outcome;
}

RoundOutcome run_round(ActiveLearningCycle& cycle, const TrainedModel& previous) {
  if (cycle.pool().labeled_ids.empty()) fail(ErrorKind::Precondition, "round needs a nonempty labeled set");
  if (cycle.pool().headroom() == 0) fail(ErrorKind::BudgetExhausted, "no labeling budget left for another round");
  const auto start = std::chrono::steady_clock::now();
  RoundOutcome outcome;
  outcome.batch = cycle.propose(previous);
  cycle.commit(cycle.oracle_labels(outcome.batch));
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  outcome.record = cycle.train_and_evaluate(outcome.batch.selected_ids, elapsed, &outcome.model);
  return outcome;
}

void aggregate(RunResult& result) {
  std::size_t rounds = 0;
  for (const auto& rep : result.repetitions) rounds = std::max(rounds, rep.size());
  result.mean_accuracy.assign(rounds, 0.0);
  result.std_accuracy.assign(rounds, 0.0);
  for (std::size_t r = 0; r < rounds; ++r) {
    std::vector<double> values;
    for (const auto& rep : result.repetitions) {
      if (r < rep.size()) values.push_back(rep[r].overall_accuracy);
    }
    double mean = 0.0;
    for (const double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (const double v : values) ss += (v - mean) * (v - mean);
    result.mean_accuracy[r] = mean;
    result.std_accuracy[r] = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
  }
}

RunResult run_experiment(const Dataset& dataset, const RunConfig& config, const ExperimentOptions& options) {
  config.validate();
  if (config.label_source != LabelSource::Oracle) {
    fail(ErrorKind::Config, "run_experiment drives the oracle loop; human sessions go through the service");
  }
  if (!dataset.fully_labeled()) fail(ErrorKind::Config, "oracle mode needs a fully labeled dataset");

  RunResult result;
  result.strategy = config.strategy;
  result.class_totals = dataset_class_totals(dataset);
  result.repetitions.resize(config.repetitions);
  result.final_models.resize(config.repetitions);
  std::vector<std::optional<std::string>> errors(config.repetitions);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};

  const auto worker = [&] {
    for (;;) {
      const std::size_t rep = next.fetch_add(1);
      if (rep >= config.repetitions || abort.load()) return;
      auto& records = result.repetitions[rep];
      try {
        ActiveLearningCycle cycle(dataset, config, rep);
        RoundOutcome outcome = run_initial_round(cycle);
        records.push_back(outcome.record);
        while (!cycle.finished()) {
          outcome = run_round(cycle, outcome.model);
          records.push_back(outcome.record);
        }
        if (options.keep_final_models) result.final_models[rep] = std::move(outcome.model);
      } catch (const Error& e) {
        errors[rep] = "repetition " + std::to_string(rep) + ": " + e.what();
        abort.store(true);
      }
    }
  };

  const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, config.repetitions));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> threads;
    for (std::size_t j = 0; j < jobs; ++j) threads.emplace_back(worker);
  }

  for (std::size_t rep = 0; rep < config.repetitions; ++rep) {
    if (errors[rep]) {
      result.error = errors[rep];
      break;
    }
  }
  if (result.error) {
    // Keep every repetition that produced records, in order.
    std::vector<std::vector<RoundRecord>> kept;
    std::vector<std::optional<TrainedModel>> models;
    for (std::size_t rep = 0; rep < config.repetitions; ++rep) {
      if (!result.repetitions[rep].empty()) {
        kept.push_back(std::move(result.repetitions[rep]));
        models.push_back(std::move(result.final_models[rep]));
      }
    }
    result.repetitions = std::move(kept);
    result.final_models = std::move(models);
  }
  aggregate(result);
  return result;
}

}  // namespace batchal
