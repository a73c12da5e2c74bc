#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

namespace dermq {

/// RGB image with values in [0,1]. Column r*width+c holds the three channel
/// values of pixel (r, c), so pixels are stored row-major.
struct ImageTensor {
  int height = 0;
  int width = 0;
  Eigen::Matrix<float, 3, Eigen::Dynamic> values;

  ImageTensor() = default;
  ImageTensor(int h, int w) : height(h), width(w), values(3, static_cast<Eigen::Index>(h) * w) { values.setZero(); }

  Eigen::Index pixels() const { return values.cols(); }
  float& at(int ch, int r, int c) { return values(ch, static_cast<Eigen::Index>(r) * width + c); }
  float at(int ch, int r, int c) const { return values(ch, static_cast<Eigen::Index>(r) * width + c); }

  void clamp01() { values = values.cwiseMax(0.0f).cwiseMin(1.0f); }
  bool operator==(const ImageTensor& o) const {
    return height == o.height && width == o.width && values == o.values;
  }
};

/// Single-channel map, rows x cols, indexed (r, c).
using GrayMap = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Interleaved 8-bit RGB as stored on disk.
struct ImageBytes {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> rgb;
};

ImageBytes quantize(const ImageTensor& image);
ImageTensor dequantize(const ImageBytes& bytes);

void write_png(const ImageTensor& image, const std::string& path);
void write_png(const ImageBytes& image, const std::string& path);
ImageBytes read_png_bytes(const std::string& path);
ImageTensor read_png(const std::string& path);

/// 8-bit grayscale; values clamped to [0,1] before quantization.
void write_gray_png(const GrayMap& map, const std::string& path);
GrayMap read_gray_png(const std::string& path);

/// Width and height from the PNG header without decoding pixel data.
std::pair<int, int> png_dimensions(const std::string& path);

/// Rec. 601 luma averaged over the image.
double mean_luminance(const ImageTensor& image);

}  // namespace dermq
