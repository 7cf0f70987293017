#include "service/session_store.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "batchal/error.hpp"

namespace batchal::store {

namespace {

// NaN has no JSON spelling; it travels as null.
nlohmann::json nullable(const std::vector<double>& values) {
  nlohmann::json out = nlohmann::json::array();
  for (const double v : values) {
    if (std::isnan(v)) {
      out.push_back(nullptr);
    } else {
      out.push_back(v);
    }
  }
  return out;
}

std::vector<double> from_nullable(const nlohmann::json& j) {
  std::vector<double> out;
  for (const auto& v : j) out.push_back(v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>());
  return out;
}

nlohmann::json label_map(const std::map<SampleId, ClassIndex>& labels) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [id, label] : labels) out.push_back({id, label});
  return out;
}

std::map<SampleId, ClassIndex> label_map_from(const nlohmann::json& j) {
  std::map<SampleId, ClassIndex> out;
  for (const auto& pair : j) out.emplace(pair.at(0).get<SampleId>(), pair.at(1).get<ClassIndex>());
  return out;
}

}  // namespace

nlohmann::json record_to_json(const RoundRecord& r) {
  nlohmann::json j;
  j["round_index"] = r.round_index;
  j["labeled_count"] = r.labeled_count;
  j["overall_accuracy"] = std::isnan(r.overall_accuracy) ? nlohmann::json(nullptr) : nlohmann::json(r.overall_accuracy);
  j["per_class_accuracy"] = nullable(r.per_class_accuracy);
  j["per_class_selection_pct"] = r.per_class_selection_pct;
  j["best_validation_accuracy"] = r.best_validation_accuracy;
  j["selected_ids"] = r.selected_ids;
  j["wall_time"] = r.wall_time;
  return j;
}

RoundRecord record_from_json(const nlohmann::json& j) {
  RoundRecord r;
  r.round_index = j.at("round_index").get<std::size_t>();
  r.labeled_count = j.at("labeled_count").get<std::size_t>();
  const auto& overall = j.at("overall_accuracy");
  r.overall_accuracy = overall.is_null() ? std::numeric_limits<double>::quiet_NaN() : overall.get<double>();
  r.per_class_accuracy = from_nullable(j.at("per_class_accuracy"));
  r.per_class_selection_pct = j.at("per_class_selection_pct").get<std::vector<double>>();
  r.best_validation_accuracy = j.at("best_validation_accuracy").get<double>();
  r.selected_ids = j.at("selected_ids").get<std::vector<SampleId>>();
  r.wall_time = j.at("wall_time").get<double>();
  return r;
}

nlohmann::json cycle_to_json(const CycleState& s) {
  const Pool& p = s.pool;
  nlohmann::json pool;
  pool["labeled_ids"] = p.labeled_ids;
  pool["unlabeled_ids"] = p.unlabeled_ids;
  pool["validation_ids"] = p.validation_ids;
  pool["assigned_labels"] = label_map(p.assigned_labels);
  pool["validation_labels"] = label_map(p.validation_labels);
  pool["num_classes"] = p.num_classes;
  pool["budget"] = p.budget;
  pool["labels_spent"] = p.labels_spent;
  pool["label_source"] = std::string(to_string(p.label_source));

  nlohmann::json j;
  j["repetition"] = s.repetition;
  j["pool"] = std::move(pool);
  j["holdout_ids"] = s.holdout_ids;
  j["cumulative_selected"] = s.cumulative_selected;
  j["records"] = nlohmann::json::array();
  for (const RoundRecord& r : s.records) j["records"].push_back(record_to_json(r));
  return j;
}

CycleState cycle_from_json(const nlohmann::json& j) {
  CycleState s;
  s.repetition = j.at("repetition").get<std::size_t>();
  const auto& pool = j.at("pool");
  s.pool.labeled_ids = pool.at("labeled_ids").get<std::set<SampleId>>();
  s.pool.unlabeled_ids = pool.at("unlabeled_ids").get<std::set<SampleId>>();
  s.pool.validation_ids = pool.at("validation_ids").get<std::set<SampleId>>();
  s.pool.assigned_labels = label_map_from(pool.at("assigned_labels"));
  s.pool.validation_labels = label_map_from(pool.at("validation_labels"));
  s.pool.num_classes = pool.at("num_classes").get<int>();
  s.pool.budget = pool.at("budget").get<std::size_t>();
  s.pool.labels_spent = pool.at("labels_spent").get<std::size_t>();
  s.pool.label_source =
      pool.at("label_source").get<std::string>() == "oracle" ? LabelSource::Oracle : LabelSource::HumanSession;
  s.holdout_ids = j.at("holdout_ids").get<std::set<SampleId>>();
  s.cumulative_selected = j.at("cumulative_selected").get<std::vector<std::size_t>>();
  for (const auto& r : j.at("records")) s.records.push_back(record_from_json(r));
  return s;
}

void write_atomically(const std::filesystem::path& path, const std::string& content) {
  const auto temp = path.string() + ".tmp";
  {
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write " + temp);
    out << content;
    out.flush();
    if (!out) fail(ErrorKind::Io, "write failed for " + temp);
  }
  std::error_code ec;
  std::filesystem::rename(temp, path, ec);
  if (ec) fail(ErrorKind::Io, "cannot rename " + temp + " to " + path.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace batchal::store
