#include "mdmt/manifest.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "mdmt/checkpoint.hpp"
#include "mdmt/errors.hpp"
#include "mdmt/image_io.hpp"

namespace mdmt {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

int parse_int(const std::string& field, const std::string& column) {
  int value = 0;
  const auto* begin = field.data();
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) throw ValidationError("column '" + column + "': '" + field + "' is not an integer");
  return value;
}

// Parses "# key=value key=value" comment lines.
void parse_comment(const std::string& line, std::map<std::string, std::string>& meta) {
  std::istringstream in(line.substr(1));
  std::string token;
  while (in >> token) {
    const auto eq = token.find('=');
    if (eq != std::string::npos) meta[token.substr(0, eq)] = token.substr(eq + 1);
  }
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string quoted = "\"";
  for (char c : s) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  return quoted + '"';
}

}  // namespace

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        current += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        current += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(current));
      current.clear();
    } else if (c != '\r') {
      current += c;
    }
  }
  fields.push_back(trim(current));
  return fields;
}

TaskDataset load_manifest(const std::filesystem::path& path, const ManifestOptions& options) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  const auto base = path.parent_path();

  std::map<std::string, std::string> meta;
  std::string line;
  std::size_t line_number = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    if (line.front() == '#') {
      parse_comment(line, meta);
      continue;
    }
    header = split_csv_line(line);
    break;
  }
  if (header.empty()) throw ValidationError(path.string() + ": missing header row");

  std::map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (!column.emplace(header[i], i).second) throw ValidationError(path.string() + ": duplicate column '" + header[i] + "'");
  }
  for (const char* required : {"sample_id", "image_path", "center_id"}) {
    if (!column.count(required)) throw ValidationError(path.string() + ": missing column '" + required + "'");
  }
  const bool has_label = column.count("label") > 0;
  std::size_t regional_columns = 0;
  for (int r = 1; r <= 6; ++r) regional_columns += column.count("r" + std::to_string(r));
  if (regional_columns != 0 && regional_columns != 6) {
    throw ValidationError(path.string() + ": regional scores need all of r1..r6");
  }
  const bool has_regional = regional_columns == 6;
  if (has_label && has_regional) {
    throw ValidationError(path.string() + ": label and regional score columns are mutually exclusive");
  }
  if (!has_label && !has_regional) throw ValidationError(path.string() + ": needs a label column or r1..r6");

  TaskDataset dataset;
  dataset.task = has_regional ? kTau2 : kTau1;
  dataset.num_classes = has_regional ? 4 : 2;
  if (meta.count("task")) dataset.task = TaskId{meta["task"]};
  if (meta.count("num_classes")) dataset.num_classes = std::stoi(meta["num_classes"]);
  if (options.task) {
    if (meta.count("task") && *options.task != dataset.task) {
      throw ValidationError(path.string() + ": manifest task '" + dataset.task.name + "' but expected '" +
                            options.task->name + "'");
    }
    dataset.task = *options.task;
  }
  if (options.num_classes) {
    if (meta.count("num_classes") && *options.num_classes != dataset.num_classes) {
      throw ValidationError(path.string() + ": manifest declares " + std::to_string(dataset.num_classes) +
                            " classes but " + std::to_string(*options.num_classes) + " expected");
    }
    dataset.num_classes = *options.num_classes;
  }
  if (has_regional && dataset.num_classes != 4) {
    throw ValidationError(path.string() + ": regional Brixia scores imply 4 classes");
  }

  std::vector<std::string> errors;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty() || line.front() == '#') continue;
    const std::string where = "row " + std::to_string(line_number);
    try {
      const auto fields = split_csv_line(line);
      if (fields.size() != header.size()) {
        throw ValidationError("expected " + std::to_string(header.size()) + " fields, got " +
                              std::to_string(fields.size()));
      }
      TaskSample sample;
      sample.task = dataset.task;
      sample.sample_id = fields[column["sample_id"]];
      sample.center_id = fields[column["center_id"]];
      if (sample.sample_id.empty()) throw ValidationError("empty sample_id");
      if (sample.center_id.empty()) throw ValidationError("empty center_id");
      if (!seen.insert(sample.sample_id).second) throw ValidationError("duplicate sample_id '" + sample.sample_id + "'");
      if (has_regional) {
        std::vector<int> regional;
        for (int r = 1; r <= 6; ++r) {
          const std::string name = "r" + std::to_string(r);
          regional.push_back(parse_int(fields[column[name]], name));
        }
        sample.label = brixia_categorize(brixia_global_score(regional));
      } else {
        sample.label = parse_int(fields[column["label"]], "label");
      }
      if (sample.label < 0 || sample.label >= dataset.num_classes) {
        throw ValidationError("label " + std::to_string(sample.label) + " outside [0, " +
                              std::to_string(dataset.num_classes) + ")");
      }
      std::filesystem::path image_path = fields[column["image_path"]];
      if (image_path.is_relative()) image_path = base / image_path;
      if (!std::filesystem::exists(image_path)) throw ValidationError("missing image file " + image_path.string());
      Tensor image = read_pgm(image_path);
      if (options.crop) image = options.crop(image);
      image = resize_bilinear(image, options.image_size);
      if (options.normalize) image = normalize_min_max(image);
      sample.image = std::move(image);
      dataset.samples.push_back(std::move(sample));
    } catch (const std::exception& e) {
      errors.push_back(where + ": " + e.what());
    }
  }
  if (!errors.empty()) {
    std::string message = path.string() + ": " + std::to_string(errors.size()) + " invalid row(s)";
    for (const auto& e : errors) message += "\n  " + e;
    throw ValidationError(message);
  }
  dataset.validate();
  return dataset;
}

void write_manifest(const std::filesystem::path& dir, const TaskDataset& dataset) {
  std::ostringstream out;
  out << "# task=" << dataset.task.name << " num_classes=" << dataset.num_classes << '\n';
  out << "sample_id,image_path,center_id,label\n";
  for (const auto& s : dataset.samples) {
    const std::string relative = "images/" + s.sample_id + ".pgm";
    write_pgm(dir / relative, s.image);
    out << csv_field(s.sample_id) << ',' << csv_field(relative) << ',' << csv_field(s.center_id) << ',' << s.label
        << '\n';
  }
  write_file_atomic(dir / "manifest.csv", out.str());
}

}  // namespace mdmt
