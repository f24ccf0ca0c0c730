#include "mdmt/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mdmt/checkpoint.hpp"
#include "mdmt/errors.hpp"

namespace mdmt {
namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string token;
  while (true) {
    int c = in.get();
    if (c == EOF) break;
    if (c == '#' && token.empty()) {
      while (c != EOF && c != '\n') c = in.get();
      continue;
    }
    if (std::isspace(c)) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(static_cast<char>(c));
  }
  return token;
}

}  // namespace

Tensor read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  if (next_token(in) != "P5") throw IoError(path.string() + ": not a binary PGM (P5)");
  std::size_t width = 0, height = 0, maxval = 0;
  try {
    width = std::stoul(next_token(in));
    height = std::stoul(next_token(in));
    maxval = std::stoul(next_token(in));
  } catch (const std::exception&) {
    throw IoError(path.string() + ": malformed PGM header");
  }
  if (width == 0 || height == 0) throw IoError(path.string() + ": empty image");
  if (maxval != 255) throw IoError(path.string() + ": only 8-bit PGM (maxval 255) is supported");
  std::string raw(width * height, '\0');
  in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw IoError(path.string() + ": truncated pixel data");
  Buffer pixels(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) pixels[i] = static_cast<unsigned char>(raw[i]) / 255.0;
  return Tensor({1, height, width}, std::move(pixels));
}

void write_pgm(const std::filesystem::path& path, const Tensor& image) {
  std::size_t height = 0, width = 0;
  if (image.rank() == 3 && image.dim(0) == 1) {
    height = image.dim(1);
    width = image.dim(2);
  } else if (image.rank() == 2) {
    height = image.dim(0);
    width = image.dim(1);
  } else {
    throw DimensionError("write_pgm: expected a single-channel image, got " + shape_string(image.shape()));
  }
  std::ostringstream out;
  out << "P5\n" << width << ' ' << height << "\n255\n";
  std::string pixels(width * height, '\0');
  const auto values = image.data();
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const double level = std::round(std::clamp(values[i], 0.0, 1.0) * 255.0);
    pixels[i] = static_cast<char>(static_cast<unsigned char>(level));
  }
  out << pixels;
  write_file_atomic(path, out.str());
}

Tensor resize_bilinear(const Tensor& image, std::size_t size) {
  if (image.rank() != 3) throw DimensionError("resize_bilinear: expected [C x H x W], got " + shape_string(image.shape()));
  if (size == 0) throw ContractError("resize_bilinear: target size must be positive");
  const std::size_t channels = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (h == size && w == size) return image.detach();
  Buffer out(channels * size * size);
  const auto in = image.data();
  const double sy = static_cast<double>(h) / static_cast<double>(size);
  const double sx = static_cast<double>(w) / static_cast<double>(size);
  auto source = [](double dst, double scale, std::size_t extent, std::size_t& lo, std::size_t& hi, double& frac) {
    double pos = (dst + 0.5) * scale - 0.5;
    pos = std::clamp(pos, 0.0, static_cast<double>(extent - 1));
    lo = static_cast<std::size_t>(std::floor(pos));
    hi = std::min(lo + 1, extent - 1);
    frac = pos - static_cast<double>(lo);
  };
  for (std::size_t c = 0; c < channels; ++c) {
    const double* plane = in.data() + c * h * w;
    for (std::size_t y = 0; y < size; ++y) {
      std::size_t y0, y1;
      double fy;
      source(static_cast<double>(y), sy, h, y0, y1, fy);
      for (std::size_t x = 0; x < size; ++x) {
        std::size_t x0, x1;
        double fx;
        source(static_cast<double>(x), sx, w, x0, x1, fx);
        const double top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
        const double bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
        out[(c * size + y) * size + x] = top * (1.0 - fy) + bottom * fy;
      }
    }
  }
  return Tensor({channels, size, size}, std::move(out));
}

Tensor normalize_min_max(const Tensor& image) {
  const auto values = image.data();
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double low = *lo, range = *hi - *lo;
  Buffer out(values.size(), 0.0);
  if (range > 0.0) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp((values[i] - low) / range, 0.0, 1.0);
  }
  return Tensor(image.shape(), std::move(out));
}

}  // namespace mdmt
