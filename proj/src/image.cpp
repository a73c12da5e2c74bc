#include "dermq/image.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "dermq/error.hpp"

namespace dermq {

namespace {

std::uint8_t to_byte(float v) {
  const float c = std::min(1.0f, std::max(0.0f, v));
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

void write_raw(const std::string& path, int w, int h, png_uint_32 format, const std::uint8_t* data) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = format;
  if (!png_image_write_to_file(&img, path.c_str(), 0, data, 0, nullptr)) {
    std::string msg = "cannot write PNG (";
    msg += img.message;
    msg += ")";
    png_image_free(&img);
    throw IoError(msg, path);
  }
}

std::vector<std::uint8_t> read_raw(const std::string& path, png_uint_32 format, int& w, int& h) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) throw IoError("cannot read PNG", path);
  img.format = format;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw IoError("cannot decode PNG", path);
  }
  w = static_cast<int>(img.width);
  h = static_cast<int>(img.height);
  return buf;
}

}  // namespace

ImageBytes quantize(const ImageTensor& image) {
  ImageBytes out{image.height, image.width, std::vector<std::uint8_t>(static_cast<std::size_t>(image.pixels()) * 3)};
  for (Eigen::Index p = 0; p < image.pixels(); ++p)
    for (int ch = 0; ch < 3; ++ch) out.rgb[static_cast<std::size_t>(p * 3 + ch)] = to_byte(image.values(ch, p));
  return out;
}

ImageTensor dequantize(const ImageBytes& bytes) {
  ImageTensor out(bytes.height, bytes.width);
  for (Eigen::Index p = 0; p < out.pixels(); ++p)
    for (int ch = 0; ch < 3; ++ch)
      out.values(ch, p) = static_cast<float>(bytes.rgb[static_cast<std::size_t>(p * 3 + ch)]) / 255.0f;
  return out;
}

void write_png(const ImageTensor& image, const std::string& path) { write_png(quantize(image), path); }

void write_png(const ImageBytes& image, const std::string& path) {
  write_raw(path, image.width, image.height, PNG_FORMAT_RGB, image.rgb.data());
}

ImageBytes read_png_bytes(const std::string& path) {
  ImageBytes out;
  out.rgb = read_raw(path, PNG_FORMAT_RGB, out.width, out.height);
  return out;
}

ImageTensor read_png(const std::string& path) { return dequantize(read_png_bytes(path)); }

void write_gray_png(const GrayMap& map, const std::string& path) {
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(map.size()));
  for (Eigen::Index r = 0; r < map.rows(); ++r)
    for (Eigen::Index c = 0; c < map.cols(); ++c)
      buf[static_cast<std::size_t>(r * map.cols() + c)] = to_byte(map(r, c));
  write_raw(path, static_cast<int>(map.cols()), static_cast<int>(map.rows()), PNG_FORMAT_GRAY, buf.data());
}

GrayMap read_gray_png(const std::string& path) {
  int w = 0, h = 0;
  const auto buf = read_raw(path, PNG_FORMAT_GRAY, w, h);
  GrayMap out(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) out(r, c) = static_cast<float>(buf[static_cast<std::size_t>(r * w + c)]) / 255.0f;
  return out;
}

std::pair<int, int> png_dimensions(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image", path);
  unsigned char head[24];
  in.read(reinterpret_cast<char*>(head), sizeof head);
  static constexpr unsigned char kSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (in.gcount() != static_cast<std::streamsize>(sizeof head) || std::memcmp(head, kSig, 8) != 0 ||
      std::memcmp(head + 12, "IHDR", 4) != 0)
    throw IoError("not a PNG file", path);
  auto be32 = [&](int off) {
    return static_cast<int>((static_cast<unsigned>(head[off]) << 24) | (static_cast<unsigned>(head[off + 1]) << 16) |
                            (static_cast<unsigned>(head[off + 2]) << 8) | static_cast<unsigned>(head[off + 3]));
  };
  return {be32(16), be32(20)};
}

double mean_luminance(const ImageTensor& image) {
  const Eigen::RowVector3d luma(0.299, 0.587, 0.114);
  return (luma * image.values.cast<double>()).mean();
}

}  // namespace dermq
