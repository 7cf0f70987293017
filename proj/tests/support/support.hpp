#pragma once

// Shared helpers for the unit, property and acceptance tests. The oracle_*
// functions are deliberately naive re-derivations of the scoring rules; they
// must not call into the acquisition module.

#include <filesystem>
#include <string>
#include <vector>

#include "batchal/model.hpp"
#include "batchal/random.hpp"

namespace batchal::testing {

// Removes itself on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

// Rows are normalized exponentials of N(0, spread^2) logits. Roughly one row
// in eight duplicates an earlier row so ties get exercised.
PredictionTensor random_tensor(Rng& rng, std::size_t passes, std::size_t samples, std::size_t classes,
                               double spread = 2.0);
EmbeddingMatrix random_embeddings(Rng& rng, std::size_t rows, std::size_t width, SampleId first_id);
PredictionTensor tensor_from_rows(const std::vector<std::vector<double>>& rows, std::vector<SampleId> ids);

double oracle_entropy(const std::vector<double>& p);
double oracle_least_confidence(const std::vector<double>& p);
double oracle_bald(const std::vector<std::vector<double>>& passes);

struct OracleBatch {
  std::vector<SampleId> ids;
  std::vector<double> scores;
};

// "lc", "entropy" or "dbal" over every sample of the tensor, sorted with
// std::stable_sort on (score, id).
OracleBatch oracle_select(const PredictionTensor& tensor, const std::string& rule, std::size_t b);

// Quadratic greedy k-center: every step recomputes each candidate's distance
// to all current centers from scratch.
OracleBatch oracle_coreset(const EmbeddingMatrix& unlabeled, const EmbeddingMatrix& labeled, std::size_t b);

// Max over unlabeled points of the distance to the nearest center.
double covering_radius(const EmbeddingMatrix& unlabeled, const EmbeddingMatrix& labeled,
                       const std::vector<SampleId>& chosen);
// Exhaustive minimum covering radius over all b-subsets of the unlabeled rows.
double optimal_covering_radius(const EmbeddingMatrix& unlabeled, const EmbeddingMatrix& labeled, std::size_t b);

// Largest relative error between loss_and_gradient and central differences:
// |a - n| / max(|a|, |n|, 1e-6).
double gradient_check(const std::vector<DenseLayer>& layers, const FeatureMatrix& features,
                      const std::vector<ClassIndex>& labels, double step);

// Two well separated classes in d dimensions (centers 10 sigma apart).
Dataset two_blobs(std::size_t per_class, std::size_t dimension, Seed seed);


struct PropertyReport {
  std::size_t trials = 0;
  std::size_t violations = 0;
  std::vector<std::string> examples;  // first few violation messages
};

// Drives complete oracle cycles over random datasets and configs (untrained
// models, every strategy) and checks after each round: the three partitions
// are disjoint and cover the universe, labels_spent never exceeds the budget,
// |L_r| = min(initial + r * b, budget, initial + |U_0|), and every revealed id
// came from the unlabeled pool. Also throws invalid reveals at the pool and
// checks it is left untouched.
PropertyReport budget_partition_properties(std::size_t trials, Seed seed);

}  // namespace batchal::testing
