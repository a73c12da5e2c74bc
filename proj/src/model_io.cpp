#include "dermq/model_io.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dermq/config.hpp"
#include "dermq/error.hpp"

namespace dermq {

namespace {

static_assert(std::endian::native == std::endian::little, "model files assume a little-endian host");

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

std::uint32_t get_u32(const std::string& in, std::size_t off) {
  std::uint32_t v;
  std::memcpy(&v, in.data() + off, 4);
  return v;
}

std::uint32_t crc(const std::string& bytes, std::size_t len) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(len)));
}

std::string config_blob(const BackboneConfig& c) { return to_json(c).dump(); }

}  // namespace

std::string encode_model(const ModelParams<float>& params) {
  std::string out(kModelMagic, 4);
  const std::string blob = config_blob(params.config);
  put_u32(out, static_cast<std::uint32_t>(blob.size()));
  out += blob;
  visit_tensors(params, [&](const std::string&, const auto& t, bool) {
    for (Eigen::Index i = 0; i < t.rows(); ++i)
      for (Eigen::Index j = 0; j < t.cols(); ++j) {
        const float v = t(i, j);
        char b[4];
        std::memcpy(b, &v, 4);
        out.append(b, 4);
      }
  });
  put_u32(out, crc(out, out.size()));
  return out;
}

ModelParams<float> decode_model(const std::string& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kModelMagic, 4) != 0)
    throw ModelFileError("not a model file (bad magic)");
  const std::size_t blob_len = get_u32(bytes, 4);
  if (8 + blob_len + 4 > bytes.size()) throw ModelFileError("model file truncated in config header");
  if (get_u32(bytes, bytes.size() - 4) != crc(bytes, bytes.size() - 4))
    throw ModelFileError("model file checksum mismatch");

  BackboneConfig config;
  try {
    config = backbone_from_json(nlohmann::json::parse(bytes.substr(8, blob_len)));
    config.validate();
  } catch (const ConfigError& e) {
    throw ModelFileError(std::string("model file has an invalid config: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ModelFileError(std::string("model file has a malformed config: ") + e.what());
  }

  auto params = init_params<float>(0, config);
  const std::size_t expected = 8 + blob_len + 4 * static_cast<std::size_t>(parameter_count(params)) + 4;
  if (bytes.size() != expected)
    throw ModelFileError("model file size " + std::to_string(bytes.size()) + " does not match its config (" +
                         std::to_string(expected) + ")");
  std::size_t off = 8 + blob_len;
  visit_tensors(params, [&](const std::string&, auto& t, bool) {
    for (Eigen::Index i = 0; i < t.rows(); ++i)
      for (Eigen::Index j = 0; j < t.cols(); ++j) {
        float v;
        std::memcpy(&v, bytes.data() + off, 4);
        off += 4;
        t(i, j) = v;
      }
  });
  return params;
}

std::int64_t save_model(const ModelParams<float>& params, const std::string& path) {
  const std::string bytes = encode_model(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write model", path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("cannot write model", path);
  return static_cast<std::int64_t>(bytes.size());
}

ModelParams<float> load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelFileError("cannot open model file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_model(ss.str());
}

SizeReport size_report(const ModelParams<float>& params) {
  SizeReport r;
  r.parameter_count = parameter_count(params);
  r.learnable_count = learnable_count(params);
  r.framing_bytes = 4 + 4 + static_cast<std::int64_t>(config_blob(params.config).size()) + 4;
  r.file_bytes = r.framing_bytes + r.bytes_per_parameter * r.parameter_count;
  return r;
}

}  // namespace dermq
