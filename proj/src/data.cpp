#include "mdmt/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>

#include "mdmt/errors.hpp"

namespace mdmt {

void TaskDataset::validate() const {
  if (num_classes < 2) throw ValidationError("dataset " + task.name + ": num_classes must be at least 2");
  std::set<std::string> ids;
  for (const auto& s : samples) {
    if (s.task != task) {
      throw ValidationError("dataset " + task.name + ": sample '" + s.sample_id + "' belongs to task " + s.task.name);
    }
    if (s.label < 0 || s.label >= num_classes) {
      throw ValidationError("dataset " + task.name + ": sample '" + s.sample_id + "' label " +
                            std::to_string(s.label) + " outside [0, " + std::to_string(num_classes) + ")");
    }
    if (s.center_id.empty()) throw ValidationError("dataset " + task.name + ": sample '" + s.sample_id + "' has no center");
    if (!ids.insert(s.sample_id).second) {
      throw ValidationError("dataset " + task.name + ": duplicate sample_id '" + s.sample_id + "'");
    }
    for (double v : s.image.data()) {
      if (!std::isfinite(v)) throw ValidationError("dataset " + task.name + ": sample '" + s.sample_id + "' has non-finite pixels");
    }
  }
}

TaskDataset TaskDataset::subset(std::span<const std::string> sample_ids) const {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < samples.size(); ++i) index.emplace(samples[i].sample_id, i);
  TaskDataset out{task, num_classes, {}};
  out.samples.reserve(sample_ids.size());
  for (const auto& id : sample_ids) {
    auto it = index.find(id);
    if (it == index.end()) throw ContractError("dataset " + task.name + ": unknown sample_id '" + id + "'");
    out.samples.push_back(samples[it->second]);
  }
  return out;
}

std::vector<std::size_t> TaskDataset::class_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(std::max(num_classes, 0)), 0);
  for (const auto& s : samples) ++counts.at(static_cast<std::size_t>(s.label));
  return counts;
}

std::vector<double> MixedBatch::one_hot(std::size_t i) const {
  std::vector<double> v(static_cast<std::size_t>(num_classes.at(i)), 0.0);
  v.at(static_cast<std::size_t>(labels.at(i))) = 1.0;
  return v;
}

MixedBatch make_batch(std::span<const TaskSample* const> samples, std::span<const int> num_classes) {
  if (samples.empty()) throw ContractError("make_batch: a batch needs at least one sample");
  if (num_classes.size() != samples.size()) throw ContractError("make_batch: class counts do not match samples");
  const Shape& image_shape = samples.front()->image.shape();
  const std::size_t per_image = samples.front()->image.numel();
  Buffer pixels;
  pixels.reserve(per_image * samples.size());
  MixedBatch batch;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const TaskSample& s = *samples[i];
    if (s.image.shape() != image_shape) {
      throw DimensionError("make_batch: image " + shape_string(s.image.shape()) + " differs from " +
                           shape_string(image_shape));
    }
    const auto values = s.image.data();
    pixels.insert(pixels.end(), values.begin(), values.end());
    batch.tasks.push_back(s.task);
    batch.labels.push_back(s.label);
    batch.num_classes.push_back(num_classes[i]);
    batch.center_ids.push_back(s.center_id);
    batch.sample_ids.push_back(s.sample_id);
  }
  Shape shape{samples.size()};
  shape.insert(shape.end(), image_shape.begin(), image_shape.end());
  batch.images = Tensor(std::move(shape), std::move(pixels));
  return batch;
}

int brixia_global_score(std::span<const int> regional) {
  if (regional.size() != 6) {
    throw ValidationError("Brixia score needs exactly six regional values, got " + std::to_string(regional.size()));
  }
  int total = 0;
  for (std::size_t i = 0; i < regional.size(); ++i) {
    if (regional[i] < 0 || regional[i] > 3) {
      throw ValidationError("Brixia regional score r" + std::to_string(i + 1) + " = " + std::to_string(regional[i]) +
                            " outside [0, 3]");
    }
    total += regional[i];
  }
  return total;
}

int brixia_categorize(int global_score) {
  if (global_score < 0 || global_score > 18) {
    throw ValidationError("Brixia global score " + std::to_string(global_score) + " outside [0, 18]");
  }
  if (global_score < 5) return 0;
  if (global_score < 9) return 1;
  if (global_score < 14) return 2;
  return 3;
}

MixedBatchSampler::MixedBatchSampler(std::vector<const TaskDataset*> datasets, std::size_t batch_size,
                                     std::uint64_t seed, bool balanced)
    : datasets_(std::move(datasets)), batch_size_(batch_size), balanced_(balanced), rng_(seed) {
  if (batch_size_ == 0) throw ContractError("sampler: batch_size must be at least 1");
  if (datasets_.empty()) throw ContractError("sampler: no datasets");
  for (const auto* d : datasets_) {
    if (d == nullptr || d->empty()) throw ContractError("sampler: every dataset must be non-empty");
  }
}

std::size_t MixedBatchSampler::epoch_size() const {
  if (balanced_) {
    std::size_t largest = 0;
    for (const auto* d : datasets_) largest = std::max(largest, d->size());
    return largest * datasets_.size();
  }
  std::size_t total = 0;
  for (const auto* d : datasets_) total += d->size();
  return total;
}

void MixedBatchSampler::start_epoch() {
  order_.clear();
  cursor_ = 0;
  if (!balanced_) {
    for (std::size_t d = 0; d < datasets_.size(); ++d) {
      for (std::size_t i = 0; i < datasets_[d]->size(); ++i) order_.push_back({d, i});
    }
    std::shuffle(order_.begin(), order_.end(), rng_);
    return;
  }
  std::size_t largest = 0;
  for (const auto* d : datasets_) largest = std::max(largest, d->size());
  std::vector<std::vector<std::size_t>> streams(datasets_.size());
  for (std::size_t d = 0; d < datasets_.size(); ++d) {
    auto& stream = streams[d];
    std::vector<std::size_t> perm(datasets_[d]->size());
    while (stream.size() < largest) {
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      std::shuffle(perm.begin(), perm.end(), rng_);
      stream.insert(stream.end(), perm.begin(), perm.end());
    }
    stream.resize(largest);
  }
  for (std::size_t i = 0; i < largest; ++i) {
    for (std::size_t d = 0; d < datasets_.size(); ++d) order_.push_back({d, streams[d][i]});
  }
}

std::vector<SampleRef> MixedBatchSampler::next_refs() {
  if (cursor_ >= order_.size()) start_epoch();
  const std::size_t end = std::min(order_.size(), cursor_ + batch_size_);
  std::vector<SampleRef> refs(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                              order_.begin() + static_cast<std::ptrdiff_t>(end));
  cursor_ = end;
  return refs;
}

MixedBatch MixedBatchSampler::next_batch() { return materialize(next_refs()); }

std::vector<std::vector<SampleRef>> MixedBatchSampler::epoch() {
  if (cursor_ >= order_.size()) start_epoch();
  std::vector<std::vector<SampleRef>> batches;
  while (cursor_ < order_.size()) batches.push_back(next_refs());
  return batches;
}

MixedBatch MixedBatchSampler::materialize(std::span<const SampleRef> refs) const {
  std::vector<const TaskSample*> samples;
  std::vector<int> classes;
  samples.reserve(refs.size());
  for (const auto& ref : refs) {
    const TaskDataset& d = *datasets_.at(ref.dataset);
    samples.push_back(&d.samples.at(ref.index));
    classes.push_back(d.num_classes);
  }
  return make_batch(samples, classes);
}

std::vector<MixedBatch> sequential_batches(std::span<const TaskDataset* const> datasets, std::size_t batch_size) {
  if (batch_size == 0) throw ContractError("sequential_batches: batch_size must be at least 1");
  std::vector<const TaskSample*> samples;
  std::vector<int> classes;
  for (const auto* d : datasets) {
    for (const auto& s : d->samples) {
      samples.push_back(&s);
      classes.push_back(d->num_classes);
    }
  }
  std::vector<MixedBatch> batches;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, samples.size() - start);
    batches.push_back(make_batch(std::span(samples).subspan(start, count), std::span(classes).subspan(start, count)));
  }
  return batches;
}

}  // namespace mdmt
