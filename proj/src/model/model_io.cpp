#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "batchal/error.hpp"
#include "batchal/model.hpp"
#include "common/text.hpp"

namespace batchal {

void validate_probability_rows(const PredictionTensor& tensor, double tolerance) {
  if (tensor.values.size() != tensor.passes * tensor.samples * tensor.classes) {
    fail(ErrorKind::Shape, "prediction tensor storage does not match its dimensions");
  }
  if (tensor.sample_ids.size() != tensor.samples) fail(ErrorKind::Shape, "prediction tensor id list has wrong length");
  for (std::size_t t = 0; t < tensor.passes; ++t) {
    for (std::size_t u = 0; u < tensor.samples; ++u) {
      double total = 0.0;
      for (const double p : tensor.row(t, u)) {
        if (!(p >= 0.0) || !std::isfinite(p)) {
          fail(ErrorKind::Validation, "probability row (t=" + std::to_string(t) + ", u=" + std::to_string(u) +
                                          ") has a negative or non-finite entry");
        }
        total += p;
      }
      if (std::abs(total - 1.0) > tolerance) {
        fail(ErrorKind::Validation, "probability row (t=" + std::to_string(t) + ", u=" + std::to_string(u) +
                                        ") sums to " + text::format_double(total));
      }
    }
  }
}

namespace {

class LineReader {
 public:
  explicit LineReader(const std::filesystem::path& path) : path_(path), in_(path) {
    if (!in_) fail(ErrorKind::Io, "cannot open " + path.string());
  }

  std::vector<std::string_view> next(const char* what) {
    while (std::getline(in_, line_)) {
      ++number_;
      if (!text::trim(line_).empty()) return text::split_whitespace(text::trim(line_));
    }
    fail(ErrorKind::Parse, path_.string() + ": unexpected end of file, expected " + what);
  }

  bool at_end() {
    while (std::getline(in_, line_)) {
      ++number_;
      if (!text::trim(line_).empty()) return false;
    }
    return true;
  }

  std::size_t line_number() const noexcept { return number_; }

  [[noreturn]] void error(const std::string& message) const {
    fail(ErrorKind::Parse, path_.string() + ": line " + std::to_string(number_) + ": " + message);
  }

  std::size_t count(std::string_view field) const {
    const auto v = text::parse_int(field);
    if (!v || *v < 0) error("expected a non-negative integer, found '" + std::string(field) + "'");
    return static_cast<std::size_t>(*v);
  }

  void numbers(const std::vector<std::string_view>& fields, std::size_t expected, std::vector<double>& out) const {
    if (fields.size() != expected) {
      error("expected " + std::to_string(expected) + " values, found " + std::to_string(fields.size()));
    }
    for (const auto f : fields) {
      const auto v = text::parse_double(f);
      if (!v) error("non-numeric value '" + std::string(f) + "'");
      out.push_back(*v);
    }
  }

  std::vector<SampleId> ids(std::size_t expected) {
    std::vector<SampleId> out;
    if (expected == 0) return out;
    const auto fields = next("the sample id line");
    if (fields.size() != expected) {
      error("expected " + std::to_string(expected) + " sample ids, found " + std::to_string(fields.size()));
    }
    for (const auto f : fields) {
      const std::size_t v = count(f);
      if (v > UINT32_MAX) error("sample id out of range");
      out.push_back(static_cast<SampleId>(v));
    }
    return out;
  }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::string line_;
  std::size_t number_ = 0;
};

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << content;
  if (!out) fail(ErrorKind::Io, "write failed for " + path.string());
}

void write_ids(std::ostringstream& out, const std::vector<SampleId>& ids) {
  for (std::size_t i = 0; i < ids.size(); ++i) out << (i ? " " : "") << ids[i];
  out << '\n';
}

void write_rows(std::ostringstream& out, const std::vector<double>& values, std::size_t width) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    out << text::format_double(values[i]) << ((i + 1) % width == 0 ? '\n' : ' ');
  }
}

}  // namespace

PredictionTensor read_prediction_tensor(const std::filesystem::path& path) {
  LineReader reader(path);
  const auto header = reader.next("a PRED header");
  if (header.size() != 4 || header[0] != "PRED") reader.error("header must be 'PRED T U N'");
  PredictionTensor tensor;
  tensor.passes = reader.count(header[1]);
  tensor.samples = reader.count(header[2]);
  tensor.classes = reader.count(header[3]);
  if (tensor.passes < 1) reader.error("T must be >= 1");
  if (tensor.classes < 1) reader.error("N must be >= 1");
  tensor.sample_ids = reader.ids(tensor.samples);
  tensor.values.reserve(tensor.passes * tensor.samples * tensor.classes);
  for (std::size_t r = 0; r < tensor.passes * tensor.samples; ++r) {
    reader.numbers(reader.next("a probability row"), tensor.classes, tensor.values);
    PredictionTensor row;
    row.passes = row.samples = 1;
    row.classes = tensor.classes;
    row.values.assign(tensor.values.end() - static_cast<std::ptrdiff_t>(tensor.classes), tensor.values.end());
    row.sample_ids = {0};
    try {
      validate_probability_rows(row, 1e-6);
    } catch (const Error& e) {
      const std::string where = "(t=" + std::to_string(r / tensor.samples) + ", u=" + std::to_string(r % tensor.samples) + ")";
      std::string message = e.what();
      message.replace(message.find("(t=0, u=0)"), 10, where);
      fail(ErrorKind::Validation, path.string() + ": line " + std::to_string(reader.line_number()) + ": " + message);
    }
  }
  if (!reader.at_end()) reader.error("unexpected trailing content");
  return tensor;
}

EmbeddingMatrix read_embedding_matrix(const std::filesystem::path& path) {
  LineReader reader(path);
  const auto header = reader.next("an EMB header");
  if (header.size() != 3 || header[0] != "EMB") reader.error("header must be 'EMB U E'");
  EmbeddingMatrix matrix;
  matrix.rows = reader.count(header[1]);
  matrix.width = reader.count(header[2]);
  if (matrix.width < 1) reader.error("E must be >= 1");
  matrix.sample_ids = reader.ids(matrix.rows);
  matrix.values.reserve(matrix.rows * matrix.width);
  for (std::size_t r = 0; r < matrix.rows; ++r) {
    reader.numbers(reader.next("an embedding row"), matrix.width, matrix.values);
  }
  if (!reader.at_end()) reader.error("unexpected trailing content");
  return matrix;
}

void write_prediction_tensor(const PredictionTensor& tensor, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "PRED " << tensor.passes << ' ' << tensor.samples << ' ' << tensor.classes << '\n';
  write_ids(out, tensor.sample_ids);
  write_rows(out, tensor.values, tensor.classes);
  write_file(path, out.str());
}

void write_embedding_matrix(const EmbeddingMatrix& matrix, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "EMB " << matrix.rows << ' ' << matrix.width << '\n';
  write_ids(out, matrix.sample_ids);
  write_rows(out, matrix.values, matrix.width);
  write_file(path, out.str());
}

std::pair<PredictionTensor, EmbeddingMatrix> load_external(const std::filesystem::path& predictions_path,
                                                           const std::filesystem::path& embeddings_path) {
  PredictionTensor predictions = read_prediction_tensor(predictions_path);
  EmbeddingMatrix embeddings = read_embedding_matrix(embeddings_path);
  if (predictions.sample_ids != embeddings.sample_ids) {
    fail(ErrorKind::Integrity, "sample ids of " + predictions_path.string() + " and " + embeddings_path.string() +
                                   " are not aligned");
  }
  return {std::move(predictions), std::move(embeddings)};
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::json layer_to_json(const DenseLayer& layer) {
  return {{"inputs", layer.inputs}, {"outputs", layer.outputs}, {"weights", layer.weights}, {"bias", layer.bias}};
}

}  // namespace

std::string serialize_model(const TrainedModel& model) {
  const ModelConfig& c = model.config;
  nlohmann::json j;
  j["config"] = {{"input_dim", c.input_dim},         {"hidden_widths", c.hidden_widths},
                 {"num_classes", c.num_classes},     {"dropout_rate", c.dropout_rate},
                 {"epochs", c.epochs},               {"learning_rate", c.learning_rate},
                 {"batch_size", c.batch_size},       {"weight_init_seed", c.weight_init_seed},
                 {"mc_passes", c.mc_passes}};
  j["layers"] = nlohmann::json::array();
  for (const DenseLayer& layer : model.layers) j["layers"].push_back(layer_to_json(layer));
  j["best_validation_accuracy"] = model.best_validation_accuracy;
  j["best_epoch"] = model.best_epoch;
  j["training_log"] = nlohmann::json::array();
  for (const EpochLog& e : model.training_log) {
    j["training_log"].push_back({{"epoch", e.epoch}, {"loss", e.loss}, {"validation_accuracy", e.validation_accuracy}});
  }
  return j.dump();
}

TrainedModel deserialize_model(std::string_view json_text) {
  TrainedModel model;
  try {
    const auto j = nlohmann::json::parse(json_text);
    const auto& c = j.at("config");
    model.config.input_dim = c.at("input_dim").get<std::size_t>();
    model.config.hidden_widths = c.at("hidden_widths").get<std::vector<std::size_t>>();
    model.config.num_classes = c.at("num_classes").get<int>();
    model.config.dropout_rate = c.at("dropout_rate").get<double>();
    model.config.epochs = c.at("epochs").get<std::size_t>();
    model.config.learning_rate = c.at("learning_rate").get<double>();
    model.config.batch_size = c.at("batch_size").get<std::size_t>();
    model.config.weight_init_seed = c.at("weight_init_seed").get<Seed>();
    model.config.mc_passes = c.at("mc_passes").get<std::size_t>();
    for (const auto& l : j.at("layers")) {
      DenseLayer layer;
      layer.inputs = l.at("inputs").get<std::size_t>();
      layer.outputs = l.at("outputs").get<std::size_t>();
      layer.weights = l.at("weights").get<std::vector<double>>();
      layer.bias = l.at("bias").get<std::vector<double>>();
      if (layer.weights.size() != layer.inputs * layer.outputs || layer.bias.size() != layer.outputs) {
        fail(ErrorKind::Integrity, "serialized layer has inconsistent shape");
      }
      model.layers.push_back(std::move(layer));
    }
    model.best_validation_accuracy = j.at("best_validation_accuracy").get<double>();
    model.best_epoch = j.at("best_epoch").get<std::size_t>();
    for (const auto& e : j.at("training_log")) {
      model.training_log.push_back({e.at("epoch").get<std::size_t>(), e.at("loss").get<double>(),
                                    e.at("validation_accuracy").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("model json: ") + e.what());
  }
  model.config.validate();
  if (model.layers.size() != model.config.hidden_widths.size() + 1) {
    fail(ErrorKind::Integrity, "serialized model layer count does not match its config");
  }
  return model;
}

}  // namespace batchal
