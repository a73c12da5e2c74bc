#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>

#include "dermq/error.hpp"
#include "dermq/model_io.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

using namespace dermq;

namespace {

std::uint32_t crc32_bitwise(const std::string& bytes) {
  std::uint32_t crc = 0xFFFFFFFFu;
  for (unsigned char b : bytes) {
    crc ^= b;
    for (int k = 0; k < 8; ++k) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
  }
  return ~crc;
}

std::uint32_t read_u32(const std::string& s, std::size_t at) {
  std::uint32_t v = 0;
  for (int k = 3; k >= 0; --k) v = (v << 8) | static_cast<unsigned char>(s[at + k]);
  return v;
}

ModelParams<float> trained_like(std::uint64_t seed, const BackboneConfig& c) {
  std::mt19937_64 g(seed);
  return cast_params<float>(gc::perturbed_params(g, c));
}

}  // namespace

TEST_CASE("save/load round trip gives bit-identical eval outputs") {
  BackboneConfig c = BackboneConfig::preset("tiny");
  const auto params = trained_like(31, c);
  TempDir dir;
  const auto path = dir.path("m.qxm");
  const auto written = save_model(params, path);
  CHECK(written == static_cast<std::int64_t>(std::filesystem::file_size(path)));
  const auto loaded = load_model(path);
  CHECK(loaded.config == c);

  bool same = true;
  visit_tensor_pairs(params, loaded, [&](const std::string&, const auto& a, const auto& b, bool) {
    same = same && a.size() == b.size() && std::memcmp(a.data(), b.data(), sizeof(float) * a.size()) == 0;
  });
  CHECK(same);

  std::mt19937_64 g(32);
  std::vector<Matrix<float>> images;
  for (int i = 0; i < 10; ++i) images.push_back(to_input<float>(gc::random_image(g, 16)));
  const auto a = forward<float>(params, images, Mode::eval);
  const auto b = forward<float>(loaded, images, Mode::eval);
  CHECK(std::memcmp(a.quality_logits.data(), b.quality_logits.data(), sizeof(float) * a.quality_logits.size()) == 0);
  CHECK(std::memcmp(a.explanation_logits.data(), b.explanation_logits.data(),
                    sizeof(float) * a.explanation_logits.size()) == 0);

  CHECK(encode_model(loaded) == encode_model(params));
}

TEST_CASE("file size is the framing plus four bytes per stored scalar") {
  for (const char* preset : {"tiny", "desk"}) {
    const auto c = BackboneConfig::preset(preset);
    const auto p = init_params<float>(5, c);
    const std::string bytes = encode_model(p);
    REQUIRE(bytes.size() > 12);
    CHECK(bytes.substr(0, 4) == "QXM1");
    const std::uint32_t json_len = read_u32(bytes, 4);
    const std::int64_t framing = 4 + 4 + json_len + 4;
    CHECK(static_cast<std::int64_t>(bytes.size()) == framing + 4 * parameter_count(c));
    CHECK(read_u32(bytes, bytes.size() - 4) == crc32_bitwise(bytes.substr(0, bytes.size() - 4)));

    const auto r = size_report(p);
    CHECK(r.framing_bytes == framing);
    CHECK(r.file_bytes == static_cast<std::int64_t>(bytes.size()));
    CHECK(r.parameter_count == parameter_count(c));
    CHECK(r.learnable_count == learnable_count(p));
    CHECK(r.learnable_count < r.parameter_count);
  }
}

TEST_CASE("b0-equivalent preset reports a size between 14 and 17 MB") {
  const auto c = BackboneConfig::preset("b0-equivalent");
  const auto p = init_params<float>(1, c);
  const auto r = size_report(p);
  CHECK(r.megabytes() >= 14.0);
  CHECK(r.megabytes() <= 17.0);
  CHECK(r.file_bytes == static_cast<std::int64_t>(encode_model(p).size()));
}

TEST_CASE("corrupt model files are rejected") {
  const auto p = init_params<float>(2, BackboneConfig::preset("tiny"));
  const std::string good = encode_model(p);
  CHECK_NOTHROW(decode_model(good));

  std::string magic = good;
  magic[0] = 'X';
  CHECK_THROWS_AS(decode_model(magic), ModelFileError);

  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{10}, good.size() / 2, good.size() - 1})
    CHECK_THROWS_AS(decode_model(good.substr(0, cut)), ModelFileError);

  std::string flipped = good;
  flipped[good.size() / 2] ^= 0x01;
  try {
    decode_model(flipped);
    FAIL("expected a model file error");
  } catch (const ModelFileError& e) {
    CHECK(std::string(e.what()).find("checksum") != std::string::npos);
  }

  std::string longer = good + std::string(4, '\0');
  CHECK_THROWS_AS(decode_model(longer), ModelFileError);

  TempDir dir;
  CHECK_THROWS_AS(load_model(dir.path("missing.qxm")), ModelFileError);
}
