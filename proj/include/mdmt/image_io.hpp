#pragma once

#include <cstddef>
#include <filesystem>

#include "mdmt/tensor.hpp"

namespace mdmt {

/// Reads an 8-bit binary PGM (P5) as [1 x H x W] with pixel p -> p / 255.
Tensor read_pgm(const std::filesystem::path& path);

/// Writes a [1 x H x W] (or [H x W]) tensor with values in [0, 1] as 8-bit
/// P5, rounding to the nearest level.
void write_pgm(const std::filesystem::path& path, const Tensor& image);

/// Bilinear resize of every channel of [C x H x W] to [C x size x size],
/// sampling at pixel centers (align_corners = false).
Tensor resize_bilinear(const Tensor& image, std::size_t size);

/// Per-image min-max scaling to [0, 1]; constant images map to zeros.
Tensor normalize_min_max(const Tensor& image);

}  // namespace mdmt
