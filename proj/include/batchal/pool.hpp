#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "batchal/types.hpp"

namespace batchal {

// ---------------------------------------------------------------------------
// Dataset ingestion and synthetic generation
// ---------------------------------------------------------------------------

struct IngestOptions {
  // nullopt: detect from the header (a `payload` third column).
  std::optional<bool> has_payload_column;
  // Required when every label is `?`; otherwise checked against the labels.
  std::optional<int> num_classes;
};

// Reads `id,label[,payload],f0,...,f{d-1}`. Ids must be 0..M-1 in any order.
Dataset ingest_csv(const std::filesystem::path& path, const IngestOptions& options = {});

// Inverse of ingest_csv; floats use shortest round-trip formatting.
void write_csv(const Dataset& dataset, const std::filesystem::path& path);

struct SyntheticSpec {
  int num_classes = 0;
  std::vector<std::size_t> samples_per_class;
  std::size_t dimension = 0;
  std::vector<std::vector<double>> class_centers;
  std::vector<double> class_scales;
  Seed seed = 0;

  void validate() const;
};

SyntheticSpec read_synthetic_spec(const std::filesystem::path& path);
void write_synthetic_spec(const SyntheticSpec& spec, const std::filesystem::path& path);

Dataset generate_synthetic(const SyntheticSpec& spec);

// ---------------------------------------------------------------------------
// Pool state
// ---------------------------------------------------------------------------

enum class LabelSource { Oracle, HumanSession };

struct Pool {
  std::set<SampleId> labeled_ids;
  std::set<SampleId> unlabeled_ids;
  std::set<SampleId> validation_ids;
  std::map<SampleId, ClassIndex> assigned_labels;
  // Holds labels of validation ids; they do not count against the budget.
  std::map<SampleId, ClassIndex> validation_labels;
  int num_classes = 0;
  std::size_t budget = 0;
  std::size_t labels_spent = 0;
  LabelSource label_source = LabelSource::Oracle;

  std::size_t headroom() const noexcept { return budget - labels_spent; }
  std::vector<SampleId> labeled_vector() const { return {labeled_ids.begin(), labeled_ids.end()}; }
  std::vector<SampleId> unlabeled_vector() const { return {unlabeled_ids.begin(), unlabeled_ids.end()}; }
  std::vector<SampleId> validation_vector() const { return {validation_ids.begin(), validation_ids.end()}; }

  bool operator==(const Pool&) const = default;
};

struct PoolInit {
  double validation_fraction = 0.05;
  std::size_t initial_labeled = 0;
  std::size_t budget = 0;
  Seed seed = 0;
  LabelSource label_source = LabelSource::Oracle;
  // Ids kept out of all three partitions (a held-out evaluation split).
  std::set<SampleId> excluded;
};

// Validation ids are drawn uniformly; the initial batch is class-stratified.
// In human-session mode both are drawn only from rows that carry a label.
Pool init_pool(const Dataset& dataset, const PoolInit& init);

// Atomic: on any error the pool is left untouched.
void reveal_labels(Pool& pool, std::span<const std::pair<SampleId, ClassIndex>> batch);

enum class Partition { Labeled, UnlabeledTruth, Validation };

std::vector<std::size_t> class_counts(const Pool& pool, const Dataset& dataset, Partition which);

// Checks the structural invariants; returns a description of the first
// violation, or nullopt. `universe` is every id the pool was built over.
std::optional<std::string> check_invariants(const Pool& pool, const std::set<SampleId>& universe);

// Per-class totals over the whole dataset (rows without labels are skipped).
std::vector<std::size_t> dataset_class_totals(const Dataset& dataset);

}  // namespace batchal
