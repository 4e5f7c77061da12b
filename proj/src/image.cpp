#include "shiftbench/image.hpp"

#include <png.h>

#include <fstream>
#include <iterator>
#include <string>

#include "shiftbench/csv.hpp"
#include "shiftbench/errors.hpp"

namespace shiftbench {

RgbImage::RgbImage(int width, int height, Rgb fill) : width_(width), height_(height) {
  pixels_.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3);
  for (std::size_t i = 0; i < pixels_.size(); i += 3) {
    pixels_[i] = fill[0];
    pixels_[i + 1] = fill[1];
    pixels_[i + 2] = fill[2];
  }
}

std::vector<std::uint8_t> encode_png(const RgbImage& image) {
  png_image info{};
  info.version = PNG_IMAGE_VERSION;
  info.width = static_cast<png_uint_32>(image.width());
  info.height = static_cast<png_uint_32>(image.height());
  info.format = PNG_FORMAT_RGB;

  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&info, nullptr, &size, 0, image.bytes().data(), 0, nullptr))
    throw DataError(std::string("png encode failed: ") + info.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&info, out.data(), &size, 0, image.bytes().data(), 0, nullptr))
    throw DataError(std::string("png encode failed: ") + info.message);
  out.resize(size);
  return out;
}

RgbImage decode_png(const std::vector<std::uint8_t>& bytes) {
  png_image info{};
  info.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&info, bytes.data(), bytes.size()))
    throw DataError(std::string("png decode failed: ") + info.message);
  info.format = PNG_FORMAT_RGB;
  RgbImage image(static_cast<int>(info.width), static_cast<int>(info.height));
  if (!png_image_finish_read(&info, nullptr, image.bytes().data(), 0, nullptr)) {
    png_image_free(&info);
    throw DataError(std::string("png decode failed: ") + info.message);
  }
  return image;
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  const auto bytes = encode_png(image);
  csv::write_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

RgbImage read_png(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_png(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace shiftbench
