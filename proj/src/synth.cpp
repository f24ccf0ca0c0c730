#include "mdmt/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "mdmt/errors.hpp"
#include "mdmt/image_io.hpp"
#include "mdmt/nn.hpp"

namespace mdmt {
namespace {

std::string padded(const char* prefix, std::size_t i) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%s%05zu", prefix, i);
  return buffer;
}

Tensor render(const SynthConfig& config, double severity, double offset, std::mt19937_64& rng) {
  const std::size_t size = config.image_size;
  const double extent = static_cast<double>(size);
  std::normal_distribution<double> noise(0.0, config.pixel_noise);
  std::uniform_real_distribution<double> position(0.25 * extent, 0.75 * extent);
  const double cy = position(rng);
  const double cx = position(rng);
  const double radius =
      extent * (config.blob_radius_min + (config.blob_radius_max - config.blob_radius_min) * severity);
  const double intensity =
      config.blob_intensity_min + (config.blob_intensity_max - config.blob_intensity_min) * severity;
  Buffer pixels(size * size);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double dy = static_cast<double>(y) + 0.5 - cy;
      const double dx = static_cast<double>(x) + 0.5 - cx;
      const double blob = intensity * std::exp(-(dx * dx + dy * dy) / (2.0 * radius * radius));
      const double value = config.background + offset + blob + noise(rng);
      pixels[y * size + x] = std::clamp(value, 0.0, 1.0);
    }
  }
  Tensor image({1, size, size}, std::move(pixels));
  return config.normalize ? normalize_min_max(image) : image;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_tau1 < 1 || n_tau2 < 1) throw ValidationError("synth: dataset sizes must be at least 1");
  if (n_centers < 2) throw ValidationError("synth: at least 2 centers are required");
  if (image_size < 4) throw ValidationError("synth: image_size must be at least 4");
  if (label_noise < 0.0 || pixel_noise < 0.0) throw ValidationError("synth: noise levels must be non-negative");
  if (!(blob_radius_min > 0.0) || blob_radius_max < blob_radius_min) {
    throw ValidationError("synth: blob radius range is invalid");
  }
  if (blob_intensity_max < blob_intensity_min) throw ValidationError("synth: blob intensity range is invalid");
}

int severity_quartile(double severity) {
  return static_cast<int>(severity > 0.25) + static_cast<int>(severity > 0.5) + static_cast<int>(severity > 0.75);
}

SynthOutput synth_generate_with_latents(const SynthConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(derive_seed(seed, 0x5f4e7));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> offset_dist(-config.center_offset, config.center_offset);
  std::normal_distribution<double> label_noise(0.0, 1.0);

  std::vector<double> offsets(config.n_centers);
  for (double& o : offsets) o = offset_dist(rng);

  SynthOutput out;
  out.tau1 = TaskDataset{kTau1, 2, {}};
  out.tau2 = TaskDataset{kTau2, 4, {}};

  auto make = [&](TaskDataset& dataset, std::vector<double>& latents, std::size_t count, const char* prefix) {
    dataset.samples.reserve(count);
    latents.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      const double s = unit(rng);
      const std::size_t center = i % config.n_centers;
      TaskSample sample;
      sample.task = dataset.task;
      sample.sample_id = padded(prefix, i);
      sample.center_id = "C" + std::to_string(center + 1);
      sample.image = render(config, s, offsets[center], rng);
      if (dataset.task == kTau2) {
        sample.label = severity_quartile(s);
      } else {
        const double eta = config.label_noise > 0.0 ? config.label_noise * label_noise(rng) : 0.0;
        sample.label = (s + eta > 0.5) ? 1 : 0;
      }
      latents.push_back(s);
      dataset.samples.push_back(std::move(sample));
    }
  };
  make(out.tau1, out.tau1_severity, config.n_tau1, "t1_");
  make(out.tau2, out.tau2_severity, config.n_tau2, "t2_");
  return out;
}

std::pair<TaskDataset, TaskDataset> synth_generate(const SynthConfig& config, std::uint64_t seed) {
  auto out = synth_generate_with_latents(config, seed);
  return {std::move(out.tau1), std::move(out.tau2)};
}

}  // namespace mdmt
