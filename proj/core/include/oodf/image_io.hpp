#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "oodf/tensor.hpp"

namespace oodf {

/// Interleaved 8-bit RGB raster, row-major.
struct Raster {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;

  Raster() = default;
  Raster(std::size_t w, std::size_t h, std::uint8_t fill = 0)
      : width(w), height(h), rgb(w * h * 3, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t channel) {
    return rgb[(y * width + x) * 3 + channel];
  }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t channel) const {
    return rgb[(y * width + x) * 3 + channel];
  }
};

/// Raw fixture format: width (u32 LE), height (u32 LE), then width*height*3
/// RGB bytes.
Raster read_raw(const std::filesystem::path& path);
void write_raw(const std::filesystem::path& path, const Raster& raster);

Raster read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Raster& raster);

Raster read_jpeg(const std::filesystem::path& path);

/// Dispatches on extension (.png, .jpg/.jpeg, .raw). Greyscale or corrupt
/// files raise IoError.
Raster read_image(const std::filesystem::path& path);

/// Bilinear resize (half-pixel centres) to side x side, channel-first
/// [3, side, side], values mapped to [-1, 1] by (v/255 - 0.5)/0.5.
Tensor preprocess(const Raster& raster, std::size_t side = 32);

/// Inverse of the value mapping in preprocess, in [0, 255].
double to_intensity(double normalized) noexcept;

}  // namespace oodf
