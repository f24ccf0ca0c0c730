#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mdmt/data.hpp"

namespace mdmt {

// Manifest CSV layout (UTF-8, header row, optional leading comment lines):
//   tau1: sample_id,image_path,center_id,label
//   tau2: sample_id,image_path,center_id,r1,r2,r3,r4,r5,r6   (regional Brixia scores)
//     or: sample_id,image_path,center_id,label
// A comment line "# task=<id> num_classes=<c>" pins the task and class
// count; otherwise they come from ManifestOptions or the column layout
// (regional scores imply tau2 with 4 classes, a label column tau1 with 2).
// image_path is resolved relative to the manifest's directory.

struct ManifestOptions {
  std::optional<TaskId> task;
  std::optional<int> num_classes;
  std::size_t image_size = 32;
  bool normalize = true;
  /// Applied after loading and before resizing; identity by default. A
  /// lung-field crop transform plugs in here.
  std::function<Tensor(const Tensor&)> crop;
};

TaskDataset load_manifest(const std::filesystem::path& path, const ManifestOptions& options = {});

/// Writes `dataset` as PGM files under `<dir>/images/` plus
/// `<dir>/manifest.csv` with a precomputed label column.
void write_manifest(const std::filesystem::path& dir, const TaskDataset& dataset);

/// Splits one CSV line; supports double-quoted fields.
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace mdmt
