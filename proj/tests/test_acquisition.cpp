#include <doctest.h>

#include <cmath>
#include <map>

#include "batchal/acquisition.hpp"
#include "batchal/error.hpp"
#include "support/support.hpp"

using namespace batchal;
using testing::tensor_from_rows;

namespace {

EmbeddingMatrix line_points(std::vector<double> xs, SampleId first_id) {
  EmbeddingMatrix m;
  m.rows = xs.size();
  m.width = 1;
  m.values = std::move(xs);
  for (std::size_t i = 0; i < m.rows; ++i) m.sample_ids.push_back(first_id + static_cast<SampleId>(i));
  return m;
}

}  // namespace

TEST_SUITE("acquisition") {

TEST_CASE("entropy values") {
  const std::vector<double> p{0.7, 0.2, 0.1};
  CHECK(score_entropy(p) == doctest::Approx(0.80182).epsilon(1e-5));
  const std::vector<double> uniform(9, 1.0 / 9.0);
  CHECK(std::abs(score_entropy(uniform) - std::log(9.0)) <= 1e-12);
  const std::vector<double> one_hot{0.0, 1.0, 0.0};
  CHECK(score_entropy(one_hot) == 0.0);
  const std::vector<double> bad{0.6, 0.6};
  CHECK_THROWS_AS(score_entropy(bad), Error);
}

TEST_CASE("BALD values") {
  const std::vector<std::vector<double>> same{{0.3, 0.7}, {0.3, 0.7}, {0.3, 0.7}};
  CHECK(score_bald(same) == 0.0);
  const std::vector<std::vector<double>> opposing{{1.0, 0.0}, {0.0, 1.0}};
  CHECK(std::abs(score_bald(opposing) - std::log(2.0)) <= 1e-12);
  const std::vector<std::vector<double>> mild{{0.8, 0.2}, {0.6, 0.4}};
  CHECK(score_bald(mild) == doctest::Approx(0.02415).epsilon(1e-3));
  CHECK(score_bald(mild) == doctest::Approx(testing::oracle_bald(mild)).epsilon(1e-12));
}

TEST_CASE("least confidence picks the least confident rows") {
  const auto t = tensor_from_rows({{0.9, 0.1}, {0.6, 0.4}, {0.5, 0.5}}, {10, 11, 12});
  const ScoredBatch b = select_least_confidence(t, 2);
  CHECK(b.selected_ids == std::vector<SampleId>{12, 11});
  CHECK(b.scores == std::vector<double>{0.5, 0.6});
  CHECK(b.strategy == Strategy::LeastConfidence);
}

TEST_CASE("ties go to the smaller id") {
  const auto t = tensor_from_rows({{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}}, {9, 3, 5});
  CHECK(select_entropy(t, 2).selected_ids == std::vector<SampleId>{3, 5});
  CHECK(select_least_confidence(t, 3).selected_ids == std::vector<SampleId>{3, 5, 9});
}

TEST_CASE("two-class entropy order is the least confidence order") {
  Rng rng(12);
  const PredictionTensor t = testing::random_tensor(rng, 1, 60, 2);
  CHECK(select_entropy(t, 60).selected_ids == select_least_confidence(t, 60).selected_ids);
}

TEST_CASE("selection edge cases") {
  const auto t = tensor_from_rows({{0.9, 0.1}, {0.6, 0.4}}, {0, 1});
  CHECK(select_entropy(t, 10).selected_ids.size() == 2);
  CHECK_THROWS_AS(select_entropy(t, 0), Error);
  const auto dup = tensor_from_rows({{0.9, 0.1}, {0.6, 0.4}}, {4, 4});
  CHECK_THROWS_AS(select_entropy(dup, 1), Error);
  try {
    select_dbal(t, 1);
    FAIL("expected precondition error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Precondition);
  }
  PredictionTensor two = t;
  two.passes = 2;
  two.values.insert(two.values.end(), t.values.begin(), t.values.end());
  CHECK_THROWS_AS(select_entropy(two, 1), Error);
  CHECK(select_dbal(two, 1).scores == std::vector<double>{0.0});
}

TEST_CASE("scorers agree with the oracle on random tensors") {
  Rng rng(77);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t u = 1 + uniform_below(rng, 80);
    const std::size_t n = 2 + uniform_below(rng, 6);
    const std::size_t b = 1 + uniform_below(rng, u + 3);
    const PredictionTensor single = testing::random_tensor(rng, 1, u, n);
    const PredictionTensor multi = testing::random_tensor(rng, 2 + uniform_below(rng, 6), u, n);
    CAPTURE(trial);
    CHECK(select_entropy(single, b).selected_ids == testing::oracle_select(single, "entropy", b).ids);
    CHECK(select_least_confidence(single, b).selected_ids == testing::oracle_select(single, "lc", b).ids);
    CHECK(select_dbal(multi, b).selected_ids == testing::oracle_select(multi, "dbal", b).ids);
  }
}

TEST_CASE("core-set greedy trace on a line") {
  const EmbeddingMatrix labeled = line_points({0.0}, 100);
  const EmbeddingMatrix unlabeled = line_points({1.0, 2.0, 5.0}, 0);
  const ScoredBatch b = select_coreset_greedy(unlabeled, labeled, 2);
  CHECK(b.selected_ids == std::vector<SampleId>{2, 1});
  CHECK(b.scores == std::vector<double>{5.0, 2.0});
  CHECK(select_coreset_greedy(unlabeled, labeled, 5).selected_ids.size() == 3);

  const EmbeddingMatrix empty = line_points({}, 0);
  try {
    select_coreset_greedy(unlabeled, empty, 1);
    FAIL("expected precondition error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Precondition);
  }
}

TEST_CASE("core-set agrees with the quadratic reference") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t e = 1 + uniform_below(rng, 8);
    const auto unlabeled = testing::random_embeddings(rng, 1 + uniform_below(rng, 60), e, 0);
    const auto labeled = testing::random_embeddings(rng, 1 + uniform_below(rng, 10), e, 1000);
    const std::size_t b = 1 + uniform_below(rng, 20);
    const ScoredBatch got = select_coreset_greedy(unlabeled, labeled, b);
    const auto want = testing::oracle_coreset(unlabeled, labeled, b);
    CHECK(got.selected_ids == want.ids);
    for (std::size_t i = 0; i < want.scores.size(); ++i) CHECK(std::abs(got.scores[i] - want.scores[i]) <= 1e-9);
  }
}

TEST_CASE("random selection is seeded and uniform") {
  const std::vector<SampleId> ids{7, 3, 9, 1};
  const ScoredBatch a = select_random(ids, 2, 42);
  CHECK(a == select_random(ids, 2, 42));
  CHECK(a.scores == std::vector<double>{0.0, 0.0});
  std::vector<SampleId> shuffled{1, 9, 3, 7};
  CHECK(select_random(shuffled, 2, 42) == a);

  std::map<SampleId, int> counts;
  for (Seed s = 0; s < 10000; ++s) ++counts[select_random(ids, 1, s).selected_ids.front()];
  for (const SampleId id : ids) CHECK(std::abs(counts[id] / 10000.0 - 0.25) <= 0.02);
}

TEST_CASE("select_batch dispatches and checks inputs") {
  const auto t = tensor_from_rows({{0.9, 0.1}, {0.6, 0.4}}, {0, 1});
  const std::vector<SampleId> ids{0, 1};
  AcquisitionInputs in;
  in.unlabeled_ids = ids;
  CHECK_THROWS_AS(select_batch(Strategy::Entropy, in, 1), Error);
  in.predictions = &t;
  CHECK(select_batch(Strategy::Entropy, in, 1).selected_ids == std::vector<SampleId>{1});
  CHECK(select_batch(Strategy::Random, in, 2).selected_ids.size() == 2);
  CHECK_THROWS_AS(select_batch(Strategy::Coreset, in, 1), Error);
}

TEST_CASE("strategy names") {
  for (const Strategy s : kAllStrategies) CHECK(parse_strategy(to_string(s)) == s);
  CHECK_FALSE(parse_strategy("margin").has_value());
  CHECK(strategy_names() == "random, least_confidence, entropy, dbal, coreset");
}

}
