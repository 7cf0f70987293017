#include "support/support.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "batchal/error.hpp"
#include "batchal/orchestrator.hpp"
#include "batchal/pool.hpp"

namespace batchal::testing {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
  static std::mt19937_64 rng{std::random_device{}()};
  std::ostringstream name;
  name << "batchal-" << tag << '-' << std::hex << rng();
  path_ = fs::temp_directory_path() / name.str();
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

PredictionTensor random_tensor(Rng& rng, std::size_t passes, std::size_t samples, std::size_t classes,
                               double spread) {
  std::normal_distribution<double> logit(0.0, spread);
  PredictionTensor t;
  t.passes = passes;
  t.samples = samples;
  t.classes = classes;
  t.values.resize(passes * samples * classes);
  std::vector<SampleId> ids(samples);
  for (std::size_t u = 0; u < samples; ++u) ids[u] = static_cast<SampleId>(u * 3 + 1);
  shuffle_in_place(ids, rng);
  t.sample_ids = ids;
  for (std::size_t u = 0; u < samples; ++u) {
    const bool duplicate = u > 0 && uniform_below(rng, 8) == 0;
    const std::size_t source = duplicate ? uniform_below(rng, u) : u;
    for (std::size_t p = 0; p < passes; ++p) {
      auto row = t.row(p, u);
      if (duplicate) {
        const auto src = t.row(p, source);
        std::copy(src.begin(), src.end(), row.begin());
        continue;
      }
      double total = 0.0;
      for (double& v : row) {
        v = std::exp(logit(rng));
        total += v;
      }
      for (double& v : row) v /= total;
    }
  }
  return t;
}

EmbeddingMatrix random_embeddings(Rng& rng, std::size_t rows, std::size_t width, SampleId first_id) {
  std::uniform_real_distribution<double> coord(-1.0, 1.0);
  EmbeddingMatrix m;
  m.rows = rows;
  m.width = width;
  for (std::size_t r = 0; r < rows; ++r) {
    m.sample_ids.push_back(first_id + static_cast<SampleId>(r));
    for (std::size_t c = 0; c < width; ++c) m.values.push_back(coord(rng));
  }
  return m;
}

PredictionTensor tensor_from_rows(const std::vector<std::vector<double>>& rows, std::vector<SampleId> ids) {
  PredictionTensor t;
  t.passes = 1;
  t.samples = rows.size();
  t.classes = rows.empty() ? 0 : rows.front().size();
  for (const auto& r : rows) t.values.insert(t.values.end(), r.begin(), r.end());
  t.sample_ids = std::move(ids);
  return t;
}

double oracle_entropy(const std::vector<double>& p) {
  long double h = 0.0L;
  for (const double v : p) {
    if (v == 0.0) continue;
    h += static_cast<long double>(v) * std::log(static_cast<long double>(v));
  }
  return static_cast<double>(-h);
}

double oracle_least_confidence(const std::vector<double>& p) {
  double best = -1.0;
  for (const double v : p) best = v > best ? v : best;
  return best;
}

double oracle_bald(const std::vector<std::vector<double>>& passes) {
  const std::size_t n = passes.front().size();
  std::vector<double> mean(n, 0.0);
  double expected = 0.0;
  for (const auto& p : passes) {
    expected += oracle_entropy(p) / static_cast<double>(passes.size());
    for (std::size_t k = 0; k < n; ++k) mean[k] += p[k] / static_cast<double>(passes.size());
  }
  const double mi = oracle_entropy(mean) - expected;
  return mi < 0.0 ? 0.0 : mi;
}

namespace {

std::vector<double> row_of(const PredictionTensor& t, std::size_t pass, std::size_t u) {
  const auto r = t.row(pass, u);
  return {r.begin(), r.end()};
}

double euclidean(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

OracleBatch oracle_select(const PredictionTensor& tensor, const std::string& rule, std::size_t b) {
  struct Entry {
    SampleId id;
    double score;
  };
  std::vector<Entry> entries;
  for (std::size_t u = 0; u < tensor.samples; ++u) {
    double score = 0.0;
    if (rule == "lc") {
      score = oracle_least_confidence(row_of(tensor, 0, u));
    } else if (rule == "entropy") {
      score = oracle_entropy(row_of(tensor, 0, u));
    } else {
      std::vector<std::vector<double>> passes;
      for (std::size_t t = 0; t < tensor.passes; ++t) passes.push_back(row_of(tensor, t, u));
      score = oracle_bald(passes);
    }
    entries.push_back({tensor.sample_ids[u], score});
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& c) { return a.id < c.id; });
  const bool ascending = rule == "lc";
  std::stable_sort(entries.begin(), entries.end(), [&](const Entry& a, const Entry& c) {
    return ascending ? a.score < c.score : a.score > c.score;
  });
  OracleBatch out;
  for (std::size_t i = 0; i < std::min(b, entries.size()); ++i) {
    out.ids.push_back(entries[i].id);
    out.scores.push_back(entries[i].score);
  }
  return out;
}

OracleBatch oracle_coreset(const EmbeddingMatrix& unlabeled, const EmbeddingMatrix& labeled, std::size_t b) {
  std::vector<const double*> centers;
  for (std::size_t l = 0; l < labeled.rows; ++l) centers.push_back(labeled.row(l));
  std::vector<bool> chosen(unlabeled.rows, false);
  OracleBatch out;
  for (std::size_t step = 0; step < std::min(b, unlabeled.rows); ++step) {
    std::size_t best = unlabeled.rows;
    double best_distance = -1.0;
    for (std::size_t u = 0; u < unlabeled.rows; ++u) {
      if (chosen[u]) continue;
      double nearest = std::numeric_limits<double>::infinity();
      for (const double* c : centers) nearest = std::min(nearest, euclidean(unlabeled.row(u), c, unlabeled.width));
      const bool better = nearest > best_distance ||
                          (nearest == best_distance && unlabeled.sample_ids[u] < unlabeled.sample_ids[best]);
      if (better) {
        best = u;
        best_distance = nearest;
      }
    }
    chosen[best] = true;
    centers.push_back(unlabeled.row(best));
    out.ids.push_back(unlabeled.sample_ids[best]);
    out.scores.push_back(best_distance);
  }
  return out;
}

double covering_radius(const EmbeddingMatrix& unlabeled, const EmbeddingMatrix& labeled,
                       const std::vector<SampleId>& chosen) {
  std::vector<const double*> centers;
  for (std::size_t l = 0; l < labeled.rows; ++l) centers.push_back(labeled.row(l));
  for (const SampleId id : chosen) {
    const auto it = std::find(unlabeled.sample_ids.begin(), unlabeled.sample_ids.end(), id);
    centers.push_back(unlabeled.row(static_cast<std::size_t>(it - unlabeled.sample_ids.begin())));
  }
  double radius = 0.0;
  for (std::size_t u = 0; u < unlabeled.rows; ++u) {
    double nearest = std::numeric_limits<double>::infinity();
    for (const double* c : centers) nearest = std::min(nearest, euclidean(unlabeled.row(u), c, unlabeled.width));
    radius = std::max(radius, nearest);
  }
  return radius;
}

double optimal_covering_radius(const EmbeddingMatrix& unlabeled, const EmbeddingMatrix& labeled, std::size_t b) {
  const std::size_t n = unlabeled.rows;
  const std::size_t k = std::min(b, n);
  std::vector<bool> mask(n, false);
  std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(k), true);
  double best = std::numeric_limits<double>::infinity();
  do {
    std::vector<SampleId> subset;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask[i]) subset.push_back(unlabeled.sample_ids[i]);
    }
    best = std::min(best, covering_radius(unlabeled, labeled, subset));
  } while (std::prev_permutation(mask.begin(), mask.end()));
  return best;
}

double gradient_check(const std::vector<DenseLayer>& layers, const FeatureMatrix& features,
                      const std::vector<ClassIndex>& labels, double step) {
  std::vector<DenseLayer> analytic;
  loss_and_gradient(layers, features, labels, &analytic);
  double worst = 0.0;
  auto probe = [&](std::vector<DenseLayer>& copy, double& slot, double analytic_value) {
    const double saved = slot;
    slot = saved + step;
    const double up = mean_loss(copy, features, labels);
    slot = saved - step;
    const double down = mean_loss(copy, features, labels);
    slot = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double scale = std::max({std::abs(analytic_value), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(analytic_value - numeric) / scale);
  };
  std::vector<DenseLayer> copy = layers;
  for (std::size_t l = 0; l < copy.size(); ++l) {
    for (std::size_t i = 0; i < copy[l].weights.size(); ++i) probe(copy, copy[l].weights[i], analytic[l].weights[i]);
    for (std::size_t i = 0; i < copy[l].bias.size(); ++i) probe(copy, copy[l].bias[i], analytic[l].bias[i]);
  }
  return worst;
}

Dataset two_blobs(std::size_t per_class, std::size_t dimension, Seed seed) {
  SyntheticSpec spec;
  spec.num_classes = 2;
  spec.samples_per_class = {per_class, per_class};
  spec.dimension = dimension;
  spec.class_centers = {std::vector<double>(dimension, 0.0), std::vector<double>(dimension, 0.0)};
  spec.class_centers[1][0] = 10.0;
  spec.class_scales = {1.0, 1.0};
  spec.seed = seed;
  return generate_synthetic(spec);
}

namespace {

Dataset random_dataset(Rng& rng) {
  Dataset d;
  d.dimension = 2;
  d.num_classes = 2 + static_cast<int>(uniform_below(rng, 3));
  const std::size_t m = 20 + uniform_below(rng, 181);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t i = 0; i < m; ++i) {
    const auto label = static_cast<ClassIndex>(uniform_below(rng, static_cast<std::uint64_t>(d.num_classes)));
    d.samples.push_back({static_cast<SampleId>(i), {gauss(rng) + label, gauss(rng)}, std::nullopt, label});
  }
  return d;
}

}  // namespace

PropertyReport budget_partition_properties(std::size_t trials, Seed seed) {
  PropertyReport report;
  Rng rng(seed);
  const auto violation = [&](const std::string& message) {
    ++report.violations;
    if (report.examples.size() < 5) report.examples.push_back(message);
  };

  for (std::size_t trial = 0; trial < trials; ++trial) {
    ++report.trials;
    const Dataset d = random_dataset(rng);
    RunConfig c;
    c.strategy = kAllStrategies[uniform_below(rng, kAllStrategies.size())];
    c.validation_fraction = 0.3 * uniform_unit(rng);
    c.initial_labeled = 1 + uniform_below(rng, d.size() / 4);
    c.query_batch = 1 + uniform_below(rng, 30);
    c.budget = c.initial_labeled + uniform_below(rng, d.size());
    c.evaluation_set = uniform_below(rng, 2) == 0 ? EvaluationSet::FullDataset : EvaluationSet::Holdout;
    c.master_seed = rng();
    c.model.input_dim = 2;
    c.model.num_classes = d.num_classes;
    c.model.hidden_widths = {4};
    c.model.epochs = 0;
    c.model.mc_passes = 2;
    c.model.weight_init_seed = rng();

    std::optional<ActiveLearningCycle> cycle;
    try {
      cycle.emplace(d, c, trial);
    } catch (const Error& e) {
      // Only the "not enough labeled rows" configuration is allowed to fail.
      if (e.kind() != ErrorKind::Config) violation("trial " + std::to_string(trial) + ": " + e.what());
      continue;
    }

    std::set<SampleId> universe;
    for (const Sample& s : d.samples) {
      if (!cycle->state().holdout_ids.contains(s.id)) universe.insert(s.id);
    }
    const std::size_t initial = cycle->pool().labeled_ids.size();
    const std::size_t unlabeled0 = cycle->pool().unlabeled_ids.size();
    const auto where = [&](std::size_t round) {
      return "trial " + std::to_string(trial) + " round " + std::to_string(round) + ": ";
    };

    RoundOutcome outcome = run_initial_round(*cycle);
    for (std::size_t round = 1;; ++round) {
      const Pool& pool = cycle->pool();
      if (const auto problem = check_invariants(pool, universe)) violation(where(round) + *problem);
      if (pool.labels_spent > pool.budget) violation(where(round) + "budget exceeded");
      if (pool.labels_spent != pool.labeled_ids.size()) violation(where(round) + "labels_spent != |L|");
      const std::size_t expected = std::min({initial + (round - 1) * c.query_batch, c.budget, initial + unlabeled0});
      if (pool.labeled_ids.size() != expected) {
        violation(where(round) + "|L| = " + std::to_string(pool.labeled_ids.size()) + ", expected " +
                  std::to_string(expected));
      }
      if (cycle->finished()) break;

      // An invalid reveal must leave the pool untouched.
      const Pool before = pool;
      const SampleId labeled = *pool.labeled_ids.begin();
      const std::vector<std::pair<SampleId, ClassIndex>> bogus{{labeled, 0}};
      try {
        cycle->commit(bogus);
        violation(where(round) + "re-labeling a labeled id was accepted");
      } catch (const Error&) {
        if (!(cycle->pool() == before)) violation(where(round) + "failed reveal modified the pool");
      }

      const std::set<SampleId> unlabeled_before = cycle->pool().unlabeled_ids;
      outcome = run_round(*cycle, outcome.model);
      std::set<SampleId> seen;
      for (const SampleId id : outcome.batch.selected_ids) {
        if (!unlabeled_before.contains(id)) violation(where(round) + "selected an id outside U");
        if (!seen.insert(id).second) violation(where(round) + "selected an id twice");
      }
    }
  }
  return report;
}

}  // namespace batchal::testing
