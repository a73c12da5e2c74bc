#pragma once

#include <cstdint>
#include <string>

#include "dermq/network.hpp"

namespace dermq {

// Model file layout (all integers little-endian):
//   "QXM1"
//   u32 n, then n bytes of UTF-8 JSON holding the BackboneConfig
//   every tensor of visit_tensors() order as f32, matrices row-major
//   u32 CRC-32 of all preceding bytes

inline constexpr char kModelMagic[4] = {'Q', 'X', 'M', '1'};

struct SizeReport {
  std::int64_t file_bytes = 0;
  std::int64_t parameter_count = 0;  // stored scalars, batch-norm statistics included
  std::int64_t learnable_count = 0;
  std::int64_t bytes_per_parameter = 4;
  std::int64_t framing_bytes = 0;  // magic + length + config JSON + CRC
  double megabytes() const { return static_cast<double>(file_bytes) / 1e6; }
};

/// Returns the number of bytes written.
std::int64_t save_model(const ModelParams<float>& params, const std::string& path);
ModelParams<float> load_model(const std::string& path);

std::string encode_model(const ModelParams<float>& params);
ModelParams<float> decode_model(const std::string& bytes);

SizeReport size_report(const ModelParams<float>& params);

}  // namespace dermq
