#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace shiftbench {

using Rgb = std::array<std::uint8_t, 3>;

// 8-bit RGB raster, row-major, channel-interleaved.
class RgbImage {
 public:
  RgbImage() = default;
  RgbImage(int width, int height, Rgb fill = {0, 0, 0});

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return pixels_.empty(); }

  std::uint8_t* pixel(int x, int y) { return &pixels_[index(x, y)]; }
  const std::uint8_t* pixel(int x, int y) const { return &pixels_[index(x, y)]; }

  Rgb rgb(int x, int y) const {
    const auto* p = pixel(x, y);
    return {p[0], p[1], p[2]};
  }
  void set(int x, int y, Rgb c) {
    auto* p = pixel(x, y);
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
  }

  const std::vector<std::uint8_t>& bytes() const { return pixels_; }
  std::vector<std::uint8_t>& bytes() { return pixels_; }

  bool operator==(const RgbImage&) const = default;

 private:
  std::size_t index(int x, int y) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) * 3;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

std::vector<std::uint8_t> encode_png(const RgbImage& image);
RgbImage decode_png(const std::vector<std::uint8_t>& bytes);

// Throws DataError on I/O or decode failure.
void write_png(const std::filesystem::path& path, const RgbImage& image);
RgbImage read_png(const std::filesystem::path& path);

}  // namespace shiftbench
