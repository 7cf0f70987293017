#include <fstream>
#include <sstream>

#include "batchal/error.hpp"
#include "batchal/pool.hpp"
#include "common/text.hpp"

namespace batchal {

bool Dataset::fully_labeled() const noexcept {
  for (const Sample& s : samples) {
    if (!s.true_label) return false;
  }
  return true;
}

FeatureMatrix gather_features(const Dataset& dataset, const std::vector<SampleId>& ids) {
  FeatureMatrix m;
  m.rows = ids.size();
  m.cols = dataset.dimension;
  m.values.reserve(m.rows * m.cols);
  for (const SampleId id : ids) {
    if (id >= dataset.size()) fail(ErrorKind::Integrity, "sample id " + std::to_string(id) + " out of range");
    const auto& f = dataset.samples[id].features;
    m.values.insert(m.values.end(), f.begin(), f.end());
  }
  return m;
}

namespace {

std::string at_line(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ": line " + std::to_string(line) + ": ";
}

}  // namespace

Dataset ingest_csv(const std::filesystem::path& path, const IngestOptions& options) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line) || text::trim(line).empty()) {
    fail(ErrorKind::Integrity, path.string() + ": empty file");
  }
  const auto header = text::split(text::trim(line), ',');
  if (header.size() < 2 || header[0] != "id" || header[1] != "label") {
    fail(ErrorKind::Parse, at_line(path, 1) + "header must start with id,label");
  }
  const bool header_has_payload = header.size() >= 3 && header[2] == "payload";
  const bool has_payload = options.has_payload_column.value_or(header_has_payload);
  if (has_payload != header_has_payload) {
    fail(ErrorKind::Parse, at_line(path, 1) + (has_payload ? "expected a payload column" : "unexpected payload column"));
  }
  const std::size_t first_feature = has_payload ? 3 : 2;
  const std::size_t dimension = header.size() - first_feature;
  if (dimension == 0) fail(ErrorKind::Parse, at_line(path, 1) + "no feature columns");
  for (std::size_t j = 0; j < dimension; ++j) {
    if (header[first_feature + j] != "f" + std::to_string(j)) {
      fail(ErrorKind::Parse, at_line(path, 1) + "feature column " + std::to_string(j) + " must be named f" +
                                 std::to_string(j));
    }
  }

  std::vector<Sample> rows;
  std::vector<std::size_t> row_lines;
  std::size_t line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    const std::string_view content = text::trim(line);
    if (content.empty()) continue;
    const auto fields = text::split(content, ',');
    if (fields.size() != header.size()) {
      fail(ErrorKind::Parse, at_line(path, line_number) + "expected " + std::to_string(header.size()) +
                                 " fields, found " + std::to_string(fields.size()));
    }
    Sample s;
    const auto id = text::parse_int(fields[0]);
    if (!id || *id < 0 || *id > std::int64_t{UINT32_MAX}) {
      fail(ErrorKind::Parse, at_line(path, line_number) + "invalid id '" + std::string(fields[0]) + "'");
    }
    s.id = static_cast<SampleId>(*id);
    if (fields[1] != "?") {
      const auto label = text::parse_int(fields[1]);
      if (!label || *label < 0 || *label > INT32_MAX) {
        fail(ErrorKind::Parse, at_line(path, line_number) + "invalid label '" + std::string(fields[1]) + "'");
      }
      s.true_label = static_cast<ClassIndex>(*label);
    }
    if (has_payload && !fields[2].empty()) s.payload_ref = std::string(fields[2]);
    s.features.reserve(dimension);
    for (std::size_t j = 0; j < dimension; ++j) {
      const auto value = text::parse_double(fields[first_feature + j]);
      if (!value) {
        fail(ErrorKind::Parse, at_line(path, line_number) + "non-numeric feature f" + std::to_string(j) + " '" +
                                   std::string(fields[first_feature + j]) + "'");
      }
      s.features.push_back(*value);
    }
    rows.push_back(std::move(s));
    row_lines.push_back(line_number);
  }
  if (rows.empty()) fail(ErrorKind::Integrity, path.string() + ": no data rows");

  Dataset dataset;
  dataset.dimension = dimension;
  dataset.samples.resize(rows.size());
  std::vector<bool> seen(rows.size(), false);
  ClassIndex max_label = -1;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const SampleId id = rows[r].id;
    if (id >= rows.size()) {
      fail(ErrorKind::Integrity, at_line(path, row_lines[r]) + "id " + std::to_string(id) +
                                     " outside dense range 0.." + std::to_string(rows.size() - 1));
    }
    if (seen[id]) fail(ErrorKind::Integrity, at_line(path, row_lines[r]) + "duplicate id " + std::to_string(id));
    seen[id] = true;
    if (rows[r].true_label) max_label = std::max(max_label, *rows[r].true_label);
    dataset.samples[id] = std::move(rows[r]);
  }

  if (options.num_classes) {
    if (*options.num_classes < 1) fail(ErrorKind::Config, "num_classes must be >= 1");
    if (max_label >= *options.num_classes) {
      fail(ErrorKind::Integrity, path.string() + ": label " + std::to_string(max_label) + " exceeds num_classes " +
                                     std::to_string(*options.num_classes));
    }
    dataset.num_classes = *options.num_classes;
  } else {
    if (max_label < 0) {
      fail(ErrorKind::Integrity, path.string() + ": all labels are '?'; the class count must be given explicitly");
    }
    dataset.num_classes = max_label + 1;
  }
  return dataset;
}

void write_csv(const Dataset& dataset, const std::filesystem::path& path) {
  bool any_payload = false;
  for (const Sample& s : dataset.samples) any_payload = any_payload || s.payload_ref.has_value();

  std::ostringstream out;
  out << "id,label";
  if (any_payload) out << ",payload";
  for (std::size_t j = 0; j < dataset.dimension; ++j) out << ",f" << j;
  out << '\n';
  for (const Sample& s : dataset.samples) {
    out << s.id << ',';
    if (s.true_label) {
      out << *s.true_label;
    } else {
      out << '?';
    }
    if (any_payload) out << ',' << s.payload_ref.value_or("");
    for (const double f : s.features) out << ',' << text::format_double(f);
    out << '\n';
  }

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) fail(ErrorKind::Io, "cannot write " + path.string());
  file << out.str();
  if (!file) fail(ErrorKind::Io, "write failed for " + path.string());
}

}  // namespace batchal
