#include <algorithm>
#include <cmath>

#include "batchal/error.hpp"
#include "batchal/pool.hpp"
#include "batchal/random.hpp"

namespace batchal {

namespace {

// Largest-remainder apportionment of `total` across classes in proportion to `sizes`.
std::vector<std::size_t> proportional_quotas(const std::vector<std::size_t>& sizes, std::size_t total) {
  std::size_t population = 0;
  for (const std::size_t s : sizes) population += s;
  std::vector<std::size_t> quotas(sizes.size(), 0);
  if (population == 0) return quotas;

  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    const double exact = static_cast<double>(total) * static_cast<double>(sizes[k]) / static_cast<double>(population);
    quotas[k] = std::min(sizes[k], static_cast<std::size_t>(std::floor(exact)));
    assigned += quotas[k];
    remainders.emplace_back(exact - static_cast<double>(quotas[k]), k);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < total && i < remainders.size(); ++i) {
    const std::size_t k = remainders[i].second;
    if (quotas[k] < sizes[k]) {
      ++quotas[k];
      ++assigned;
    }
  }
  return quotas;
}

}  // namespace

Pool init_pool(const Dataset& dataset, const PoolInit& init) {
  if (!(init.validation_fraction >= 0.0 && init.validation_fraction < 1.0)) {
    fail(ErrorKind::Config, "validation_fraction must lie in [0, 1)");
  }
  if (init.initial_labeled == 0) fail(ErrorKind::Config, "initial_labeled must be >= 1 (nothing to train on)");
  if (init.initial_labeled > init.budget) fail(ErrorKind::Config, "initial_labeled exceeds the labeling budget");
  if (dataset.num_classes < 1) fail(ErrorKind::Config, "dataset has no classes");

  std::vector<SampleId> universe;
  for (const Sample& s : dataset.samples) {
    if (!init.excluded.contains(s.id)) universe.push_back(s.id);
  }
  const std::size_t m = universe.size();
  const auto validation_count =
      static_cast<std::size_t>(std::ceil(init.validation_fraction * static_cast<double>(m) - 1e-9));

  std::vector<SampleId> candidates;  // rows eligible for validation and the initial batch
  std::vector<SampleId> hidden;      // rows that can only ever be queried
  for (const SampleId id : universe) {
    const auto& label = dataset.samples[id].true_label;
    if (label) {
      if (*label < 0 || *label >= dataset.num_classes) {
        fail(ErrorKind::Integrity, "sample " + std::to_string(id) + " has out-of-range label");
      }
      candidates.push_back(id);
    } else if (init.label_source == LabelSource::Oracle) {
      fail(ErrorKind::Config, "oracle labeling needs a true label for every sample (sample " + std::to_string(id) +
                                  " has none)");
    } else {
      hidden.push_back(id);
    }
  }
  if (init.initial_labeled + validation_count > candidates.size()) {
    fail(ErrorKind::Config, "initial_labeled (" + std::to_string(init.initial_labeled) + ") + validation size (" +
                                std::to_string(validation_count) + ") exceeds the " +
                                std::to_string(candidates.size()) + " labeled samples available");
  }

  Rng rng(init.seed);
  Pool pool;
  pool.num_classes = dataset.num_classes;
  pool.budget = init.budget;
  pool.label_source = init.label_source;

  shuffle_in_place(candidates, rng);
  for (std::size_t i = 0; i < validation_count; ++i) {
    const SampleId id = candidates[i];
    pool.validation_ids.insert(id);
    pool.validation_labels.emplace(id, *dataset.samples[id].true_label);
  }

  std::vector<std::vector<SampleId>> by_class(static_cast<std::size_t>(dataset.num_classes));
  std::vector<SampleId> rest(candidates.begin() + static_cast<std::ptrdiff_t>(validation_count), candidates.end());
  std::sort(rest.begin(), rest.end());
  for (const SampleId id : rest) by_class[static_cast<std::size_t>(*dataset.samples[id].true_label)].push_back(id);

  std::vector<std::size_t> sizes;
  for (const auto& members : by_class) sizes.push_back(members.size());
  const auto quotas = proportional_quotas(sizes, init.initial_labeled);
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    auto& members = by_class[k];
    shuffle_in_place(members, rng);
    for (std::size_t i = 0; i < quotas[k]; ++i) {
      pool.labeled_ids.insert(members[i]);
      pool.assigned_labels.emplace(members[i], static_cast<ClassIndex>(k));
    }
  }
  for (const SampleId id : rest) {
    if (!pool.labeled_ids.contains(id)) pool.unlabeled_ids.insert(id);
  }
  pool.unlabeled_ids.insert(hidden.begin(), hidden.end());
  pool.labels_spent = pool.labeled_ids.size();
  return pool;
}

void reveal_labels(Pool& pool, std::span<const std::pair<SampleId, ClassIndex>> batch) {
  std::set<SampleId> seen;
  for (const auto& [id, label] : batch) {
    if (!pool.unlabeled_ids.contains(id)) {
      fail(ErrorKind::State, "sample " + std::to_string(id) + " is not in the unlabeled pool");
    }
    if (!seen.insert(id).second) fail(ErrorKind::State, "sample " + std::to_string(id) + " appears twice in the batch");
    if (label < 0 || label >= pool.num_classes) {
      fail(ErrorKind::Validation, "label " + std::to_string(label) + " for sample " + std::to_string(id) +
                                      " outside [0, " + std::to_string(pool.num_classes) + ")");
    }
  }
  if (batch.size() > pool.headroom()) {
    fail(ErrorKind::BudgetExhausted, "revealing " + std::to_string(batch.size()) + " labels exceeds remaining budget " +
                                         std::to_string(pool.headroom()));
  }
  for (const auto& [id, label] : batch) {
    pool.unlabeled_ids.erase(id);
    pool.labeled_ids.insert(id);
    pool.assigned_labels.emplace(id, label);
  }
  pool.labels_spent += batch.size();
}

std::vector<std::size_t> class_counts(const Pool& pool, const Dataset& dataset, Partition which) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(pool.num_classes), 0);
  switch (which) {
    case Partition::Labeled:
      for (const auto& [id, label] : pool.assigned_labels) ++counts[static_cast<std::size_t>(label)];
      break;
    case Partition::Validation:
      for (const auto& [id, label] : pool.validation_labels) ++counts[static_cast<std::size_t>(label)];
      break;
    case Partition::UnlabeledTruth:
      if (pool.label_source != LabelSource::Oracle) {
        fail(ErrorKind::Capability, "true labels of the unlabeled pool are unknown in human-session mode");
      }
      for (const SampleId id : pool.unlabeled_ids) {
        const auto& label = dataset.samples.at(id).true_label;
        if (!label) fail(ErrorKind::Capability, "sample " + std::to_string(id) + " has no true label");
        ++counts[static_cast<std::size_t>(*label)];
      }
      break;
  }
  return counts;
}

std::vector<std::size_t> dataset_class_totals(const Dataset& dataset) {
  std::vector<std::size_t> totals(static_cast<std::size_t>(std::max(dataset.num_classes, 0)), 0);
  for (const Sample& s : dataset.samples) {
    if (s.true_label) ++totals[static_cast<std::size_t>(*s.true_label)];
  }
  return totals;
}

std::optional<std::string> check_invariants(const Pool& pool, const std::set<SampleId>& universe) {
  const std::size_t total = pool.labeled_ids.size() + pool.unlabeled_ids.size() + pool.validation_ids.size();
  if (total != universe.size()) return "partition sizes do not add up to the id universe";
  for (const SampleId id : universe) {
    const int memberships = static_cast<int>(pool.labeled_ids.contains(id)) +
                            static_cast<int>(pool.unlabeled_ids.contains(id)) +
                            static_cast<int>(pool.validation_ids.contains(id));
    if (memberships != 1) return "sample " + std::to_string(id) + " belongs to " + std::to_string(memberships) + " partitions";
  }
  if (pool.assigned_labels.size() != pool.labeled_ids.size()) return "assigned_labels does not match labeled_ids";
  for (const SampleId id : pool.labeled_ids) {
    if (!pool.assigned_labels.contains(id)) return "labeled sample " + std::to_string(id) + " has no label";
  }
  if (pool.labels_spent != pool.labeled_ids.size()) return "labels_spent differs from |labeled_ids|";
  if (pool.labels_spent > pool.budget) return "labels_spent exceeds budget";
  return std::nullopt;
}

}  // namespace batchal
