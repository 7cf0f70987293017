#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

#include "batchal/error.hpp"
#include "batchal/orchestrator.hpp"
#include "common/text.hpp"

namespace batchal {

namespace {

void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << content;
  if (!out) fail(ErrorKind::Io, "write failed for " + path.string());
}

std::string fmt(double v) { return text::format_double(v); }

}  // namespace

std::string run_config_json(std::span<const Strategy> strategies, const RunConfig& config, const DataSource& source) {
  nlohmann::ordered_json j;
  std::vector<std::string> names;
  for (const Strategy s : strategies) names.emplace_back(to_string(s));
  j["strategies"] = names;
  j["data_kind"] = source.kind;
  j["data_path"] = source.path;
  j["initial_labeled"] = config.initial_labeled;
  j["query_batch"] = config.query_batch;
  j["budget"] = config.budget;
  j["validation_fraction"] = config.validation_fraction;
  j["repetitions"] = config.repetitions;
  j["label_source"] = std::string(to_string(config.label_source));
  j["evaluation_set"] = std::string(to_string(config.evaluation_set));
  j["holdout_fraction"] = config.holdout_fraction;
  j["model_input_dim"] = config.model.input_dim;
  j["model_hidden_widths"] = config.model.hidden_widths;
  j["model_num_classes"] = config.model.num_classes;
  j["model_dropout_rate"] = config.model.dropout_rate;
  j["model_epochs"] = config.model.epochs;
  j["model_learning_rate"] = config.model.learning_rate;
  j["model_batch_size"] = config.model.batch_size;
  j["model_mc_passes"] = config.model.mc_passes;
  j["master_seed"] = config.master_seed;
  j["weight_init_seed"] = config.model.weight_init_seed;
  std::vector<Seed> repetition_seeds;
  std::vector<Seed> split_seeds;
  for (std::size_t r = 0; r < config.repetitions; ++r) {
    const auto seeds = RepetitionSeeds::derive(config.master_seed, r);
    repetition_seeds.push_back(seeds.repetition);
    split_seeds.push_back(seeds.split);
  }
  j["repetition_seeds"] = repetition_seeds;
  j["split_seeds"] = split_seeds;
  return j.dump(2) + "\n";
}

PersistedConfig read_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream content;
  content << in.rdbuf();
  try {
    return parse_run_config(content.str());
  } catch (const Error& e) {
    fail(e.kind(), path.string() + ": " + e.what());
  }
}

PersistedConfig parse_run_config(std::string_view json_text) {
  PersistedConfig out;
  try {
    const auto j = nlohmann::json::parse(json_text);
    for (const auto& name : j.at("strategies").get<std::vector<std::string>>()) {
      const auto s = parse_strategy(name);
      if (!s) fail(ErrorKind::Config, "unknown strategy '" + name + "'");
      out.strategies.push_back(*s);
    }
    out.source.kind = j.at("data_kind").get<std::string>();
    out.source.path = j.at("data_path").get<std::string>();
    RunConfig& c = out.config;
    c.strategy = out.strategies.empty() ? Strategy::Random : out.strategies.front();
    c.initial_labeled = j.at("initial_labeled").get<std::size_t>();
    c.query_batch = j.at("query_batch").get<std::size_t>();
    c.budget = j.at("budget").get<std::size_t>();
    c.validation_fraction = j.at("validation_fraction").get<double>();
    c.repetitions = j.at("repetitions").get<std::size_t>();
    c.label_source = j.at("label_source").get<std::string>() == "human-session" ? LabelSource::HumanSession
                                                                                 : LabelSource::Oracle;
    c.evaluation_set =
        j.at("evaluation_set").get<std::string>() == "holdout" ? EvaluationSet::Holdout : EvaluationSet::FullDataset;
    c.holdout_fraction = j.at("holdout_fraction").get<double>();
    c.model.input_dim = j.at("model_input_dim").get<std::size_t>();
    c.model.hidden_widths = j.at("model_hidden_widths").get<std::vector<std::size_t>>();
    c.model.num_classes = j.at("model_num_classes").get<int>();
    c.model.dropout_rate = j.at("model_dropout_rate").get<double>();
    c.model.epochs = j.at("model_epochs").get<std::size_t>();
    c.model.learning_rate = j.at("model_learning_rate").get<double>();
    c.model.batch_size = j.at("model_batch_size").get<std::size_t>();
    c.model.mc_passes = j.at("model_mc_passes").get<std::size_t>();
    c.master_seed = j.at("master_seed").get<Seed>();
    c.model.weight_init_seed = j.at("weight_init_seed").get<Seed>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("run config: ") + e.what());
  }
  return out;
}

void persist_run(std::span<const RunResult> results, const RunConfig& base_config, const DataSource& source,
                 const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "models", ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + (out_dir / "models").string() + ": " + ec.message());

  std::vector<Strategy> strategies;
  for (const RunResult& r : results) strategies.push_back(r.strategy);
  write_text(out_dir / "config.json", run_config_json(strategies, base_config, source));

  const auto classes = static_cast<std::size_t>(base_config.model.num_classes);
  std::ostringstream rounds;
  rounds << "strategy,repetition,round,labeled_count,overall_accuracy,best_validation_accuracy";
  for (std::size_t k = 0; k < classes; ++k) rounds << ",accuracy_class_" << k;
  for (std::size_t k = 0; k < classes; ++k) rounds << ",selection_pct_class_" << k;
  rounds << '\n';
  std::ostringstream selection;
  selection << "strategy,round,repetition,sample_id\n";
  std::ostringstream timings;
  timings << "strategy,repetition,round,wall_time_seconds\n";
  std::ostringstream curves;
  curves << "strategy,round,labeled_count,mean_accuracy,std_accuracy\n";

  for (const RunResult& result : results) {
    const std::string_view name = to_string(result.strategy);
    for (std::size_t rep = 0; rep < result.repetitions.size(); ++rep) {
      for (const RoundRecord& rec : result.repetitions[rep]) {
        rounds << name << ',' << rep << ',' << rec.round_index << ',' << rec.labeled_count << ','
               << fmt(rec.overall_accuracy) << ',' << fmt(rec.best_validation_accuracy);
        for (const double a : rec.per_class_accuracy) rounds << ',' << fmt(a);
        for (const double p : rec.per_class_selection_pct) rounds << ',' << fmt(p);
        rounds << '\n';
        for (const SampleId id : rec.selected_ids) {
          selection << name << ',' << rec.round_index << ',' << rep << ',' << id << '\n';
        }
        timings << name << ',' << rep << ',' << rec.round_index << ',' << fmt(rec.wall_time) << '\n';
      }
      if (rep < result.final_models.size() && result.final_models[rep]) {
        write_text(out_dir / "models" / (std::string(name) + "_rep" + std::to_string(rep) + ".json"),
                   serialize_model(*result.final_models[rep]));
      }
    }
    for (std::size_t r = 0; r < result.mean_accuracy.size(); ++r) {
      std::size_t labeled = 0;
      for (const auto& rep : result.repetitions) {
        if (r < rep.size()) {
          labeled = rep[r].labeled_count;
          break;
        }
      }
      curves << name << ',' << r << ',' << labeled << ',' << fmt(result.mean_accuracy[r]) << ','
             << fmt(result.std_accuracy[r]) << '\n';
    }
  }
  write_text(out_dir / "rounds.csv", rounds.str());
  write_text(out_dir / "selection.csv", selection.str());
  write_text(out_dir / "timings.csv", timings.str());
  write_text(out_dir / "curves.csv", curves.str());
}

std::vector<RoundRow> read_rounds_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::Integrity, path.string() + ": empty file");
  const auto header = text::split(text::trim(line), ',');
  std::size_t classes = 0;
  for (const auto h : header) {
    if (h.starts_with("accuracy_class_")) ++classes;
  }
  if (header.size() != 6 + 2 * classes) fail(ErrorKind::Parse, path.string() + ": unexpected header");

  std::vector<RoundRow> rows;
  std::size_t line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (text::trim(line).empty()) continue;
    const auto f = text::split(text::trim(line), ',');
    const auto where = path.string() + ": line " + std::to_string(line_number);
    if (f.size() != header.size()) fail(ErrorKind::Parse, where + ": wrong field count");
    const auto number = [&](std::string_view s) {
      if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
      const auto v = text::parse_double(s);
      if (!v) fail(ErrorKind::Parse, where + ": bad number '" + std::string(s) + "'");
      return *v;
    };
    const auto count = [&](std::string_view s) {
      const auto v = text::parse_int(s);
      if (!v || *v < 0) fail(ErrorKind::Parse, where + ": bad integer '" + std::string(s) + "'");
      return static_cast<std::size_t>(*v);
    };
    RoundRow row;
    const auto strategy = parse_strategy(f[0]);
    if (!strategy) fail(ErrorKind::Parse, where + ": unknown strategy");
    row.strategy = *strategy;
    row.repetition = count(f[1]);
    row.record.round_index = count(f[2]);
    row.record.labeled_count = count(f[3]);
    row.record.overall_accuracy = number(f[4]);
    row.record.best_validation_accuracy = number(f[5]);
    for (std::size_t k = 0; k < classes; ++k) row.record.per_class_accuracy.push_back(number(f[6 + k]));
    for (std::size_t k = 0; k < classes; ++k) row.record.per_class_selection_pct.push_back(number(f[6 + classes + k]));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace batchal
