#include "batchal/cli.hpp"

#include <atomic>
#include <chrono>
#include <csignal>
#include <thread>

#include <CLI11.hpp>

#include "batchal/error.hpp"
#include "batchal/orchestrator.hpp"
#include "batchal/service.hpp"

namespace batchal {
namespace {

// Validation problems exit 1, everything else that goes wrong at runtime exits 2.
int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::TrainingDiverged:
    case ErrorKind::Io:
    case ErrorKind::State:
    case ErrorKind::BudgetExhausted:
      return 2;
    default:
      return 1;
  }
}

struct RunFlags {
  std::string data;
  std::string synthetic;
  std::string strategy = "random";
  std::size_t initial = 100;
  std::size_t batch = 100;
  std::size_t budget = 1000;
  double val_frac = 0.05;
  std::size_t reps = 10;
  Seed seed = 0;
  std::size_t epochs = 100;
  std::size_t mc_passes = 20;
  std::vector<std::size_t> hidden{64, 32};
  double dropout = 0.25;
  double learning_rate = 0.001;
  std::size_t batch_size = 32;
  std::string evaluation = "full";
  double holdout_frac = 0.2;
  std::size_t jobs = 1;
  std::string out;
};

struct ScoreFlags {
  std::string pred;
  std::string emb;
  std::string emb_labeled;
  std::string strategy;
  std::size_t batch = 0;
  Seed seed = 0;
};

struct GenerateFlags {
  std::string spec;
  std::string out;
};

struct ServeFlags {
  std::string addr = "127.0.0.1:8080";
  std::string payload_root = ".";
  std::string store = "sessions";
  std::string data;
};

int cmd_run(const RunFlags& f, std::ostream& out, std::ostream& err) {
  std::vector<Strategy> strategies;
  if (f.strategy == "all") {
    strategies.assign(kAllStrategies.begin(), kAllStrategies.end());
  } else if (const auto s = parse_strategy(f.strategy)) {
    strategies.push_back(*s);
  } else {
    err << "error: unknown strategy '" << f.strategy << "'; valid strategies: " << strategy_names() << ", all\n";
    return 1;
  }

  Dataset dataset;
  DataSource source;
  if (!f.synthetic.empty()) {
    dataset = generate_synthetic(read_synthetic_spec(f.synthetic));
    source = {"synthetic", f.synthetic};
  } else {
    dataset = ingest_csv(f.data);
    source = {"csv", f.data};
  }

  RunConfig config;
  config.strategy = strategies.front();
  config.initial_labeled = f.initial;
  config.query_batch = f.batch;
  config.budget = f.budget;
  config.validation_fraction = f.val_frac;
  config.repetitions = f.reps;
  config.master_seed = f.seed;
  config.evaluation_set = f.evaluation == "holdout" ? EvaluationSet::Holdout : EvaluationSet::FullDataset;
  config.holdout_fraction = f.holdout_frac;
  config.model.input_dim = dataset.dimension;
  config.model.num_classes = dataset.num_classes;
  config.model.hidden_widths = f.hidden;
  config.model.dropout_rate = f.dropout;
  config.model.learning_rate = f.learning_rate;
  config.model.batch_size = f.batch_size;
  config.model.epochs = f.epochs;
  config.model.mc_passes = f.mc_passes;
  config.model.weight_init_seed = f.seed;
  for (const Strategy s : strategies) {
    RunConfig c = config;
    c.strategy = s;
    c.validate();
  }

  err << "resolved config: " << run_config_json(strategies, config, source) << '\n';

  ExperimentOptions options;
  options.jobs = std::max<std::size_t>(1, f.jobs);
  std::vector<RunResult> results;
  std::optional<std::string> failure;
  for (const Strategy s : strategies) {
    RunConfig c = config;
    c.strategy = s;
    results.push_back(run_experiment(dataset, c, options));
    if (results.back().error) {
      failure = std::string(to_string(s)) + ": " + *results.back().error;
      break;
    }
  }
  persist_run(results, config, source, f.out);
  if (failure) {
    err << "error: " << *failure << " (partial results written to " << f.out << ")\n";
    return 2;
  }
  for (const RunResult& r : results) {
    if (r.mean_accuracy.empty()) continue;
    err << to_string(r.strategy) << ": final mean accuracy " << r.mean_accuracy.back() << '\n';
  }
  out << f.out << '\n';
  return 0;
}

int cmd_score(const ScoreFlags& f, std::ostream& out, std::ostream& err) {
  const auto strategy = parse_strategy(f.strategy);
  if (!strategy) {
    err << "error: unknown strategy '" << f.strategy << "'; valid strategies: " << strategy_names() << '\n';
    return 1;
  }
  std::optional<PredictionTensor> predictions;
  std::optional<EmbeddingMatrix> embeddings;
  std::optional<EmbeddingMatrix> labeled;
  if (!f.pred.empty() && !f.emb.empty()) {
    auto [p, e] = load_external(f.pred, f.emb);
    predictions = std::move(p);
    embeddings = std::move(e);
  } else if (!f.pred.empty()) {
    predictions = read_prediction_tensor(f.pred);
  } else if (!f.emb.empty()) {
    embeddings = read_embedding_matrix(f.emb);
  }
  if (!f.emb_labeled.empty()) labeled = read_embedding_matrix(f.emb_labeled);

  ScoredBatch batch;
  switch (*strategy) {
    case Strategy::Random: {
      if (!predictions && !embeddings) fail(ErrorKind::Config, "random needs --pred or --emb to know the unlabeled ids");
      const auto& ids = predictions ? predictions->sample_ids : embeddings->sample_ids;
      batch = select_random(ids, f.batch, f.seed);
      break;
    }
    case Strategy::LeastConfidence:
    case Strategy::Entropy: {
      if (!predictions) fail(ErrorKind::Config, std::string(to_string(*strategy)) + " needs --pred");
      // Several passes are averaged into one predictive distribution first.
      const PredictionTensor mean = predictions->passes > 1 ? mean_over_passes(*predictions) : *predictions;
      batch = *strategy == Strategy::Entropy ? select_entropy(mean, f.batch) : select_least_confidence(mean, f.batch);
      break;
    }
    case Strategy::Dbal:
      if (!predictions) fail(ErrorKind::Config, "dbal needs --pred");
      batch = select_dbal(*predictions, f.batch);
      break;
    case Strategy::Coreset:
      if (!embeddings || !labeled) fail(ErrorKind::Config, "coreset needs --emb and --emb-labeled");
      batch = select_coreset_greedy(*embeddings, *labeled, f.batch);
      break;
  }
  for (const SampleId id : batch.selected_ids) out << id << '\n';
  return 0;
}

int cmd_generate(const GenerateFlags& f, std::ostream& out) {
  const Dataset dataset = generate_synthetic(read_synthetic_spec(f.spec));
  write_csv(dataset, f.out);
  out << f.out << '\n';
  return 0;
}

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted.store(true); }

int cmd_serve(const ServeFlags& f, std::ostream& out, std::ostream& err) {
  const auto colon = f.addr.rfind(':');
  int port = -1;
  if (colon != std::string::npos) {
    try {
      port = std::stoi(f.addr.substr(colon + 1));
    } catch (const std::exception&) {
      port = -1;
    }
  }
  if (colon == std::string::npos || port < 0 || port > 65535) {
    err << "error: --addr must look like host:port, got '" << f.addr << "'\n";
    return 1;
  }
  const std::string host = f.addr.substr(0, colon);

  ServiceConfig config;
  config.payload_root = f.payload_root;
  config.store_dir = f.store;
  if (!f.data.empty()) config.default_dataset = f.data;
  AnnotationService service(config);
  int bound = 0;
  try {
    bound = service.start(host, port);
  } catch (const Error& e) {
    err << "error: cannot listen on " << f.addr << ": " << e.what() << '\n';
    return 2;
  }
  out << "listening on " << host << ':' << bound << '\n' << std::flush;

  g_interrupted.store(false);
  const auto previous_int = std::signal(SIGINT, on_signal);
  const auto previous_term = std::signal(SIGTERM, on_signal);
  while (!g_interrupted.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  std::signal(SIGINT, previous_int);
  std::signal(SIGTERM, previous_term);
  service.stop();
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Batch active learning experiments and annotation service", "batchal"};
  app.require_subcommand(1);

  RunFlags run;
  auto* run_cmd = app.add_subcommand("run", "Simulated active learning experiment");
  auto* data_opt = run_cmd->add_option("--data", run.data, "Dataset CSV");
  auto* synth_opt = run_cmd->add_option("--synthetic", run.synthetic, "Synthetic spec file (JSON)");
  data_opt->excludes(synth_opt);
  run_cmd->add_option("--strategy", run.strategy, "random|least_confidence|entropy|dbal|coreset|all")
      ->capture_default_str();
  run_cmd->add_option("--initial", run.initial)->capture_default_str();
  run_cmd->add_option("--batch", run.batch)->capture_default_str();
  run_cmd->add_option("--budget", run.budget)->capture_default_str();
  run_cmd->add_option("--val-frac", run.val_frac)->capture_default_str();
  run_cmd->add_option("--reps", run.reps)->capture_default_str();
  run_cmd->add_option("--seed", run.seed)->capture_default_str();
  run_cmd->add_option("--epochs", run.epochs)->capture_default_str();
  run_cmd->add_option("--mc-passes", run.mc_passes)->capture_default_str();
  run_cmd->add_option("--hidden", run.hidden, "Hidden layer widths")->delimiter(',')->capture_default_str();
  run_cmd->add_option("--dropout", run.dropout)->capture_default_str();
  run_cmd->add_option("--learning-rate", run.learning_rate)->capture_default_str();
  run_cmd->add_option("--batch-size", run.batch_size, "Minibatch size")->capture_default_str();
  run_cmd->add_option("--evaluation", run.evaluation, "Where accuracy is measured")
      ->check(CLI::IsMember({"full", "holdout"}))
      ->capture_default_str();
  run_cmd->add_option("--holdout-frac", run.holdout_frac)->capture_default_str();
  run_cmd->add_option("--jobs", run.jobs, "Parallel repetitions")->capture_default_str();
  run_cmd->add_option("--out", run.out, "Output directory")->required();

  ScoreFlags score;
  auto* score_cmd = app.add_subcommand("score", "Select a batch from external model outputs");
  score_cmd->add_option("--pred", score.pred, "Prediction tensor file");
  score_cmd->add_option("--emb", score.emb, "Embeddings of the unlabeled samples");
  score_cmd->add_option("--emb-labeled", score.emb_labeled, "Embeddings of the labeled samples");
  score_cmd->add_option("--strategy", score.strategy)->required();
  score_cmd->add_option("--batch", score.batch)->required();
  score_cmd->add_option("--seed", score.seed, "Seed for random selection")->capture_default_str();

  GenerateFlags generate;
  auto* generate_cmd = app.add_subcommand("generate", "Write a synthetic dataset CSV");
  generate_cmd->add_option("--spec", generate.spec)->required();
  generate_cmd->add_option("--out", generate.out)->required();

  ServeFlags serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run the annotation service");
  serve_cmd->add_option("--addr", serve.addr)->capture_default_str();
  serve_cmd->add_option("--payload-root", serve.payload_root)->capture_default_str();
  serve_cmd->add_option("--store", serve.store, "Session checkpoint directory")->capture_default_str();
  serve_cmd->add_option("--data", serve.data, "Dataset for /payloads requests without ?session=");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 1;
  }

  try {
    if (*run_cmd) {
      if (run.data.empty() == run.synthetic.empty()) {
        err << "error: run needs exactly one of --data or --synthetic\n";
        return 1;
      }
      return cmd_run(run, out, err);
    }
    if (*score_cmd) return cmd_score(score, out, err);
    if (*generate_cmd) return cmd_generate(generate, out);
    return cmd_serve(serve, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace batchal
