#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "batchal/acquisition.hpp"
#include "batchal/model.hpp"
#include "batchal/pool.hpp"

namespace batchal {

enum class EvaluationSet { FullDataset, Holdout };

std::string_view to_string(EvaluationSet set) noexcept;
std::string_view to_string(LabelSource source) noexcept;

struct RunConfig {
  Strategy strategy = Strategy::Random;
  std::size_t initial_labeled = 100;
  std::size_t query_batch = 100;
  std::size_t budget = 1000;
  double validation_fraction = 0.05;
  std::size_t repetitions = 10;
  ModelConfig model;
  Seed master_seed = 0;
  LabelSource label_source = LabelSource::Oracle;
  EvaluationSet evaluation_set = EvaluationSet::FullDataset;
  // Share of the dataset set aside for evaluation when evaluation_set is Holdout.
  double holdout_fraction = 0.2;

  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

// Seeds never depend on the strategy, so every strategy in a repetition starts
// from the same split and initial batch and trains with the same seeds.
struct RepetitionSeeds {
  Seed repetition = 0;
  Seed split = 0;
  Seed holdout = 0;

  static RepetitionSeeds derive(Seed master_seed, std::size_t repetition);
  Seed train(std::size_t round) const noexcept;
  Seed selection(std::size_t round) const noexcept;
  Seed mc(std::size_t round) const noexcept;
};

struct RoundRecord {
  std::size_t round_index = 0;
  std::size_t labeled_count = 0;
  double overall_accuracy = 0.0;
  std::vector<double> per_class_accuracy;       // NaN marks a class absent from the evaluation set
  std::vector<double> per_class_selection_pct;  // cumulative queried / class total; initial batch excluded
  double best_validation_accuracy = 0.0;
  std::vector<SampleId> selected_ids;           // the batch revealed in this round (empty for round 0)
  double wall_time = 0.0;                       // seconds

  bool operator==(const RoundRecord&) const = default;
};

struct Metrics {
  double overall_accuracy = 0.0;
  std::vector<double> per_class_accuracy;
  std::vector<double> per_class_selection_pct;
};

// Accuracy over `evaluation_ids` (labels from the dataset, falling back to
// labels assigned in the pool) and selection percentages against
// `class_totals`.
Metrics compute_metrics(const TrainedModel& model, const Dataset& dataset, const Pool& pool,
                        std::span<const SampleId> evaluation_ids, std::span<const std::size_t> cumulative_selected,
                        std::span<const std::size_t> class_totals);

// Serializable state of one repetition of the loop.
struct CycleState {
  std::size_t repetition = 0;
  Pool pool;
  std::set<SampleId> holdout_ids;
  std::vector<std::size_t> cumulative_selected;  // per class, queried batches only
  std::vector<RoundRecord> records;

  bool operator==(const CycleState&) const = default;
};

struct RoundOutcome {
  TrainedModel model;
  ScoredBatch batch;
  RoundRecord record;
};

// One repetition of the pool-based loop. Rounds alternate
//   propose (score the unlabeled pool with the previous model) -> commit
//   (reveal labels) -> train_and_evaluate (fresh model on the grown labeled set)
// with round 0 consisting of train_and_evaluate only.
class ActiveLearningCycle {
 public:
  ActiveLearningCycle(const Dataset& dataset, RunConfig config, std::size_t repetition);
  ActiveLearningCycle(const Dataset& dataset, RunConfig config, CycleState state);

  const RunConfig& config() const noexcept { return config_; }
  const CycleState& state() const noexcept { return state_; }
  const Pool& pool() const noexcept { return state_.pool; }
  const RepetitionSeeds& seeds() const noexcept { return seeds_; }
  std::size_t next_round() const noexcept { return state_.records.size(); }

  // True once the budget is spent or nothing is left to query.
  bool finished() const noexcept;

  std::vector<SampleId> evaluation_ids() const;

  TrainedModel train() const;
  RoundRecord train_and_evaluate(std::span<const SampleId> revealed_ids, double elapsed_before, TrainedModel* model_out);

  // Selects min(query_batch, headroom, |U|) ids from the whole unlabeled pool.
  ScoredBatch propose(const TrainedModel& model) const;
  void commit(std::span<const std::pair<SampleId, ClassIndex>> labels);

  // Oracle labels for a proposed batch.
  std::vector<std::pair<SampleId, ClassIndex>> oracle_labels(const ScoredBatch& batch) const;

  std::vector<std::size_t> class_totals() const;

 private:
  const Dataset* dataset_;
  RunConfig config_;
  RepetitionSeeds seeds_;
  CycleState state_;
};

// Round 0: train on the initial batch and evaluate.
RoundOutcome run_initial_round(ActiveLearningCycle& cycle);
// Later rounds, oracle mode: query with the previous model, reveal, retrain, evaluate.
RoundOutcome run_round(ActiveLearningCycle& cycle, const TrainedModel& previous);

struct RunResult {
  Strategy strategy = Strategy::Random;
  std::vector<std::vector<RoundRecord>> repetitions;
  std::vector<double> mean_accuracy;  // per round across repetitions
  std::vector<double> std_accuracy;   // sample standard deviation (0 for one repetition)
  std::vector<std::size_t> class_totals;
  std::vector<std::optional<TrainedModel>> final_models;  // one per repetition
  std::optional<std::string> error;   // set when a repetition failed; results are partial

  bool operator==(const RunResult&) const = default;
};

struct ExperimentOptions {
  std::size_t jobs = 1;
  bool keep_final_models = true;
};

RunResult run_experiment(const Dataset& dataset, const RunConfig& config, const ExperimentOptions& options = {});

void aggregate(RunResult& result);

// Data provenance written into config.json so a run can be repeated.
struct DataSource {
  std::string kind;  // "csv" or "synthetic"
  std::string path;
};

// Writes config.json, rounds.csv, selection.csv, curves.csv, timings.csv and
// models/<strategy>_rep<r>.json into out_dir.
void persist_run(std::span<const RunResult> results, const RunConfig& base_config, const DataSource& source,
                 const std::filesystem::path& out_dir);

std::string run_config_json(std::span<const Strategy> strategies, const RunConfig& config, const DataSource& source);

struct PersistedConfig {
  std::vector<Strategy> strategies;
  RunConfig config;
  DataSource source;
};
PersistedConfig parse_run_config(std::string_view json_text);
PersistedConfig read_run_config(const std::filesystem::path& path);

struct RoundRow {
  Strategy strategy = Strategy::Random;
  std::size_t repetition = 0;
  RoundRecord record;  // selected_ids and wall_time are not part of rounds.csv
};
std::vector<RoundRow> read_rounds_csv(const std::filesystem::path& path);

}  // namespace batchal
