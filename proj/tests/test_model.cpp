#include <doctest.h>

#include <cmath>
#include <numeric>

#include "batchal/error.hpp"
#include "batchal/model.hpp"
#include "batchal/pool.hpp"
#include "support/support.hpp"

using namespace batchal;
using batchal::testing::TempDir;
using batchal::testing::write_text;

namespace {

struct Split {
  FeatureMatrix train_x, val_x;
  std::vector<ClassIndex> train_y, val_y;
  std::vector<SampleId> train_ids, val_ids;
};

Split split_blobs(const Dataset& d, std::size_t train_count) {
  Split s;
  for (const Sample& sample : d.samples) {
    auto& ids = sample.id < train_count ? s.train_ids : s.val_ids;
    auto& ys = sample.id < train_count ? s.train_y : s.val_y;
    ids.push_back(sample.id);
    ys.push_back(*sample.true_label);
  }
  s.train_x = gather_features(d, s.train_ids);
  s.val_x = gather_features(d, s.val_ids);
  return s;
}

ModelConfig small_config(std::size_t d, int classes) {
  ModelConfig c;
  c.input_dim = d;
  c.num_classes = classes;
  c.hidden_widths = {16, 8};
  c.epochs = 30;
  c.learning_rate = 0.01;
  c.weight_init_seed = 5;
  return c;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("separable blobs train to high validation accuracy") {
  const Dataset d = testing::two_blobs(125, 4, 1);
  const Split s = split_blobs(d, 200);
  ModelConfig c = small_config(4, 2);
  c.hidden_widths = {64, 32};
  c.learning_rate = 0.001;
  c.epochs = 100;
  const TrainedModel m = train_from_scratch(c, s.train_x, s.train_y, s.val_x, s.val_y, 17);
  CHECK(m.best_validation_accuracy >= 0.98);
  CHECK(m.training_log.size() == 100);
  CHECK(m.training_log.back().loss < m.training_log.front().loss);
  CHECK(accuracy(m, s.val_x, s.val_y) == doctest::Approx(m.best_validation_accuracy));
}

TEST_CASE("training is deterministic in its seeds") {
  const Dataset d = testing::two_blobs(40, 3, 2);
  const Split s = split_blobs(d, 60);
  const ModelConfig c = small_config(3, 2);
  const TrainedModel a = train_from_scratch(c, s.train_x, s.train_y, s.val_x, s.val_y, 9);
  const TrainedModel b = train_from_scratch(c, s.train_x, s.train_y, s.val_x, s.val_y, 9);
  CHECK(a == b);
  const TrainedModel other = train_from_scratch(c, s.train_x, s.train_y, s.val_x, s.val_y, 10);
  CHECK_FALSE(a.layers == other.layers);
}

TEST_CASE("epochs = 0 returns the initialization") {
  const Dataset d = testing::two_blobs(20, 3, 3);
  const Split s = split_blobs(d, 30);
  ModelConfig c = small_config(3, 2);
  c.epochs = 0;
  const TrainedModel m = train_from_scratch(c, s.train_x, s.train_y, s.val_x, s.val_y, 4);
  CHECK(m.layers == initialize_layers(c, c.weight_init_seed ^ 4));
  REQUIRE(m.training_log.size() == 1);
  CHECK(m.training_log[0].epoch == 0);
  CHECK(m.best_epoch == 0);
  CHECK(m.best_validation_accuracy == m.training_log[0].validation_accuracy);
}

TEST_CASE("training errors") {
  const Dataset d = testing::two_blobs(10, 2, 3);
  const Split s = split_blobs(d, 15);
  ModelConfig c = small_config(2, 2);
  std::vector<ClassIndex> bad = s.train_y;
  bad[0] = 2;
  CHECK_THROWS_AS(train_from_scratch(c, s.train_x, bad, s.val_x, s.val_y, 1), Error);
  c.learning_rate = 1e300;
  try {
    train_from_scratch(c, s.train_x, s.train_y, s.val_x, s.val_y, 1);
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::TrainingDiverged);
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("predictions are probability rows and stochastic passes are seeded") {
  const Dataset d = testing::two_blobs(40, 3, 5);
  const Split s = split_blobs(d, 60);
  ModelConfig c = small_config(3, 2);
  c.dropout_rate = 0.5;
  const TrainedModel m = train_from_scratch(c, s.train_x, s.train_y, s.val_x, s.val_y, 2);

  const PredictionTensor det = predict_deterministic(m, s.val_x, s.val_ids);
  CHECK(det.passes == 1);
  CHECK(det.sample_ids == s.val_ids);
  CHECK_NOTHROW(validate_probability_rows(det, 1e-9));

  const PredictionTensor a = predict_stochastic(m, s.val_x, s.val_ids, 7, 99);
  CHECK(a == predict_stochastic(m, s.val_x, s.val_ids, 7, 99));
  CHECK_FALSE(a == predict_stochastic(m, s.val_x, s.val_ids, 7, 100));
  CHECK_NOTHROW(validate_probability_rows(a, 1e-9));
  CHECK(mean_over_passes(a).passes == 1);
}

TEST_CASE("dropout 0 makes every pass the deterministic prediction") {
  const Dataset d = testing::two_blobs(30, 3, 6);
  const Split s = split_blobs(d, 40);
  ModelConfig c = small_config(3, 2);
  c.dropout_rate = 0.0;
  const TrainedModel m = train_from_scratch(c, s.train_x, s.train_y, s.val_x, s.val_y, 2);
  const PredictionTensor det = predict_deterministic(m, s.val_x, s.val_ids);
  const PredictionTensor st = predict_stochastic(m, s.val_x, s.val_ids, 4, 1);
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t u = 0; u < st.samples; ++u) {
      const auto a = st.row(t, u);
      const auto b = det.row(0, u);
      CHECK(std::equal(a.begin(), a.end(), b.begin()));
    }
  }
}

TEST_CASE("Monte Carlo mean is stable at T = 50") {
  const Dataset d = testing::two_blobs(60, 4, 7);
  const Split s = split_blobs(d, 80);
  ModelConfig c = small_config(4, 2);
  c.dropout_rate = 0.25;
  const TrainedModel m = train_from_scratch(c, s.train_x, s.train_y, s.val_x, s.val_y, 3);
  const PredictionTensor t = predict_stochastic(m, s.val_x, s.val_ids, 50, 11);
  double worst = 0.0;
  for (std::size_t u = 0; u < t.samples; ++u) {
    for (std::size_t k = 0; k < t.classes; ++k) {
      double first = 0.0, all = 0.0;
      for (std::size_t p = 0; p < 50; ++p) {
        all += t.row(p, u)[k] / 50.0;
        if (p < 25) first += t.row(p, u)[k] / 25.0;
      }
      worst = std::max(worst, std::abs(first - all));
    }
  }
  CHECK(worst < 0.1);
}

TEST_CASE("embeddings separate well separated classes") {
  const Dataset d = testing::two_blobs(150, 4, 8);
  const Split s = split_blobs(d, 200);
  ModelConfig c = small_config(4, 2);
  c.hidden_widths = {64, 32};
  c.epochs = 40;
  const TrainedModel m = train_from_scratch(c, s.train_x, s.train_y, s.val_x, s.val_y, 5);
  const EmbeddingMatrix e = embed(m, s.val_x, s.val_ids);
  CHECK(e.width == 32);
  CHECK(e.rows == s.val_ids.size());

  std::vector<std::size_t> zeros, ones;
  for (std::size_t u = 0; u < e.rows; ++u) (s.val_y[u] == 0 ? zeros : ones).push_back(u);
  REQUIRE(zeros.size() >= 2);
  REQUIRE(ones.size() >= 2);
  const auto dist = [&](std::size_t a, std::size_t b) {
    double t = 0.0;
    for (std::size_t j = 0; j < e.width; ++j) t += std::pow(e.row(a)[j] - e.row(b)[j], 2);
    return std::sqrt(t);
  };
  Rng rng(1);
  double between = 0.0, within = 0.0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t a = zeros[uniform_below(rng, zeros.size())];
    const std::size_t b = ones[uniform_below(rng, ones.size())];
    const std::size_t a2 = zeros[uniform_below(rng, zeros.size())];
    between += dist(a, b);
    within += dist(a, a2);
  }
  CHECK(between > within);

  FeatureMatrix twice = gather_features(d, {s.val_ids[0], s.val_ids[0]});
  const std::vector<SampleId> ids{1000, 1001};
  const EmbeddingMatrix dup = embed(m, twice, ids);
  CHECK(std::equal(dup.row(0), dup.row(0) + dup.width, dup.row(1)));
}

TEST_CASE("analytic gradients match central differences") {
  Rng rng(2024);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    ModelConfig c;
    c.input_dim = 1 + uniform_below(rng, 5);
    c.hidden_widths = {1 + uniform_below(rng, 8)};
    c.num_classes = 2 + static_cast<int>(uniform_below(rng, 3));
    c.dropout_rate = 0.0;
    const auto layers = initialize_layers(c, rng());
    const std::size_t n = 1 + uniform_below(rng, 4);
    FeatureMatrix x;
    x.rows = n;
    x.cols = c.input_dim;
    for (std::size_t i = 0; i < n * c.input_dim; ++i) x.values.push_back(gauss(rng));
    std::vector<ClassIndex> y;
    for (std::size_t i = 0; i < n; ++i) y.push_back(static_cast<ClassIndex>(uniform_below(rng, c.num_classes)));
    CAPTURE(trial);
    CHECK(testing::gradient_check(layers, x, y, 1e-5) < 1e-4);
  }
}

TEST_CASE("model serialization round-trips") {
  const Dataset d = testing::two_blobs(20, 2, 9);
  const Split s = split_blobs(d, 30);
  const TrainedModel m = train_from_scratch(small_config(2, 2), s.train_x, s.train_y, s.val_x, s.val_y, 6);
  CHECK(deserialize_model(serialize_model(m)) == m);
  CHECK_THROWS_AS(deserialize_model("{\"layers\": 3}"), Error);
}

TEST_CASE("tensor files round-trip and report offending lines") {
  TempDir dir("tensors");
  PredictionTensor t = testing::tensor_from_rows({{0.25, 0.75}, {0.5, 0.5}}, {4, 2});
  write_prediction_tensor(t, dir / "p.txt");
  CHECK(read_prediction_tensor(dir / "p.txt") == t);

  EmbeddingMatrix e;
  e.rows = 2;
  e.width = 3;
  e.values = {1, 2, 3, -0.5, 1e-300, 7};
  e.sample_ids = {4, 2};
  write_embedding_matrix(e, dir / "e.txt");
  CHECK(read_embedding_matrix(dir / "e.txt") == e);
  const auto [p2, e2] = load_external(dir / "p.txt", dir / "e.txt");
  CHECK(p2 == t);
  CHECK(e2 == e);

  write_text(dir / "bad.txt", "PRED 1 2 2\n0 1\n0.6 0.6\n0.5 0.5\n");
  try {
    read_prediction_tensor(dir / "bad.txt");
    FAIL("expected validation error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Validation);
    CHECK(std::string(e.what()).find("(t=0, u=0)") != std::string::npos);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  write_text(dir / "short.txt", "PRED 1 2 2\n0 1\n0.5 0.5\n0.5\n");
  try {
    read_prediction_tensor(dir / "short.txt");
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Parse);
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }

  write_text(dir / "p012.txt", "PRED 1 3 2\n0 2 1\n0.5 0.5\n0.5 0.5\n0.5 0.5\n");
  write_text(dir / "e012.txt", "EMB 3 1\n0 1 2\n1\n2\n3\n");
  try {
    load_external(dir / "p012.txt", dir / "e012.txt");
    FAIL("expected integrity error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Integrity);
  }
}

}
