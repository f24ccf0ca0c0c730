#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>

#include "mdmt/data.hpp"

namespace mdmt {

/// Synthetic stand-in for a pair of correlated chest X-ray datasets.
///
/// Every sample has a latent severity s ~ U[0, 1]. Its image is a noisy
/// background plus a Gaussian blob whose radius and intensity grow with s.
/// tau2 labels are the quartile of s; tau1 labels are [s + eta > 0.5] with
/// eta ~ N(0, label_noise). Centers are assigned round-robin and each adds a
/// fixed brightness offset.
struct SynthConfig {
  std::size_t n_tau1 = 600;
  std::size_t n_tau2 = 1800;
  std::size_t image_size = 32;
  std::size_t n_centers = 6;
  double label_noise = 0.1;
  double pixel_noise = 0.2;
  double background = 0.35;
  double blob_radius_min = 0.04;  // fraction of image_size
  double blob_radius_max = 0.16;
  double blob_intensity_min = 0.1;
  double blob_intensity_max = 0.5;
  double center_offset = 0.1;  // offsets drawn from U[-center_offset, center_offset]
  bool normalize = true;       // min-max scale each image, as manifest loading does

  void validate() const;
};

/// tau2 category: number of quartile thresholds {0.25, 0.5, 0.75} that s exceeds.
int severity_quartile(double severity);

/// Generates (tau1, tau2) datasets. Identical seeds give bit-identical output.
std::pair<TaskDataset, TaskDataset> synth_generate(const SynthConfig& config, std::uint64_t seed);

/// Same as synth_generate but also returns the latent severities, in sample order.
struct SynthOutput {
  TaskDataset tau1;
  TaskDataset tau2;
  std::vector<double> tau1_severity;
  std::vector<double> tau2_severity;
};
SynthOutput synth_generate_with_latents(const SynthConfig& config, std::uint64_t seed);

}  // namespace mdmt
