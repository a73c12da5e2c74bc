#include <doctest.h>

#include <fstream>
#include <iterator>
#include <random>

#include "dermq/error.hpp"
#include "dermq/explain.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

using namespace dermq;

namespace {

BackboneConfig small_config(std::vector<int> widths, int hidden) {
  BackboneConfig c;
  c.input_resolution = 16;
  c.stage_widths = std::move(widths);
  c.stage_strides = {2, 2};
  c.hidden_units = hidden;
  return c;
}

// Last stage has one channel and the blurry logit equals its global average:
// identity explanation block (eval mode) and a unit head weight.
ModelParams<double> mean_network(std::mt19937_64& g) {
  auto p = gc::perturbed_params(g, small_config({3, 1}, 1));
  auto& b = p.explanation_block;
  b.weight.setOnes();
  b.bias.setZero();
  b.running_mean.setZero();
  b.running_var.setConstant(1.0 - kBatchNormEps);
  b.gamma.setOnes();
  b.beta.setZero();
  p.explanation_head.weight.setZero();
  p.explanation_head.bias.setZero();
  p.explanation_head.weight(index_of(ExplanationKind::blurry), 0) = 1.0;
  return p;
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("grad_cam on a one-channel mean network returns the rectified feature map") {
  std::mt19937_64 g(21);
  auto p = mean_network(g);
  const auto target = CamTarget::of(ExplanationKind::blurry);
  for (int trial = 0; trial < 5; ++trial) {
    const auto image = gc::random_image(g, 16);
    const std::vector<Matrix<double>> batch{to_input<double>(image)};
    const auto trace = forward<double>(p, batch, Mode::eval);
    const Matrix<double>& a = trace.stages[1].output[0];
    CHECK(trace.explanation_logits(index_of(ExplanationKind::blurry), 0) == doctest::Approx(a.mean()).epsilon(1e-12));

    const auto [act, grad] = layer_activation_and_gradient(p, image, target, 1);
    const auto alpha = cam_channel_weights(grad);
    REQUIRE(alpha.size() == 1);
    CHECK(std::abs(alpha(0) - 1.0 / 16.0) < 1e-12);

    const auto m = grad_cam(p, image, target, 1);
    Eigen::ArrayXXd expected_raw(4, 4);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) expected_raw(r, c) = std::max(0.0, a(r * 4 + c, 0)) / 16.0;
    CHECK((m.raw - expected_raw).abs().maxCoeff() < 1e-6);
    const auto expected = max_normalize(upsample_bilinear(expected_raw * 16.0, 16, 16));
    CHECK((m.values - expected).abs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("layer gradients match central differences on a 2-channel 4x4 map") {
  std::mt19937_64 g(22);
  auto p = gc::perturbed_params(g, small_config({3, 2}, 8));
  const auto image = gc::random_image(g, 16);
  const double h = 1e-6;
  for (const auto& target : {CamTarget::of(ExplanationKind::blurry), CamTarget::of(QualityClass::poor_quality),
                             CamTarget::of(QualityClass::lesion)}) {
    const auto [act, grad] = layer_activation_and_gradient(p, image, target, 1);
    REQUIRE(act.rows() == 16);
    REQUIRE(act.cols() == 2);
    auto logit = [&](const Matrix<double>& a) {
      const std::vector<Matrix<double>> one{a};
      const auto t = forward_from_stage<double>(p, one, 1);
      return target.head == CamTarget::Head::quality ? t.quality_logits(target.index, 0)
                                                     : t.explanation_logits(target.index, 0);
    };
    double worst = 0;
    for (Eigen::Index k = 0; k < act.size(); ++k) {
      Matrix<double> up = act, dn = act;
      up.data()[k] += h;
      dn.data()[k] -= h;
      const double fd = (logit(up) - logit(dn)) / (2 * h);
      const double an = grad.data()[k];
      worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("attention maps are non-negative and max-normalized on random models") {
  std::mt19937_64 g(23);
  for (int trial = 0; trial < 6; ++trial) {
    auto p = gc::perturbed_params(g, small_config({4, 6}, 8));
    const auto image = gc::random_image(g, 16);
    for (const auto& name : cam_target_names()) {
      for (int layer : {0, 1}) {
        const auto m = grad_cam(p, image, parse_cam_target(name), layer);
        CHECK(m.values.rows() == 16);
        CHECK(m.values.cols() == 16);
        CHECK(m.values.minCoeff() >= 0.0);
        CHECK(m.raw.minCoeff() >= 0.0);
        const double mx = m.values.maxCoeff();
        CHECK((mx == 1.0 || (mx == 0.0 && m.raw.maxCoeff() == 0.0)));
      }
    }
  }
}

TEST_CASE("scaling the target head weights scales the raw map only") {
  std::mt19937_64 g(24);
  auto p = gc::perturbed_params(g, small_config({4, 6}, 8));
  const auto image = gc::random_image(g, 16);
  int nonzero = 0;
  for (auto kind : kExplanationKinds) {
    const auto target = CamTarget::of(kind);
    const auto base = grad_cam(p, image, target, 1);
    if (base.raw.maxCoeff() == 0.0) continue;
    ++nonzero;
    auto scaled = p;
    scaled.explanation_head.weight.row(target.index) *= 3.0;
    const auto m = grad_cam(scaled, image, target, 1);
    CHECK((m.raw - 3.0 * base.raw).abs().maxCoeff() < 1e-9 * base.raw.maxCoeff());
    CHECK((m.values - base.values).abs().maxCoeff() < 1e-9);
  }
  CHECK(nonzero > 0);
}

TEST_CASE("a raw map with no positive evidence stays all zero") {
  std::mt19937_64 g(25);
  auto p = mean_network(g);
  p.explanation_head.weight(index_of(ExplanationKind::blurry), 0) = -1.0;
  p.stages[1].gamma.setZero();
  p.stages[1].beta.setConstant(5.0);
  const auto m = grad_cam(p, gc::random_image(g, 16), CamTarget::of(ExplanationKind::blurry), 1);
  CHECK(m.raw.isZero(0.0));
  CHECK(m.values.isZero(0.0));

  CHECK(max_normalize(Eigen::ArrayXXd::Zero(3, 3)).isZero(0.0));
  Eigen::ArrayXXd two(1, 2);
  two << 0.5, 2.0;
  CHECK(max_normalize(two)(0, 0) == 0.25);
  CHECK(max_normalize(two)(0, 1) == 1.0);
}

TEST_CASE("bilinear upsampling preserves constants and interpolates between centres") {
  CHECK((upsample_bilinear(Eigen::ArrayXXd::Constant(4, 4, 0.3), 16, 16) - 0.3).abs().maxCoeff() < 1e-15);
  Eigen::ArrayXXd m(1, 2);
  m << 0.0, 1.0;
  const auto up = upsample_bilinear(m, 1, 4);
  CHECK(up(0, 0) == 0.0);
  CHECK(up(0, 1) == doctest::Approx(0.25));
  CHECK(up(0, 2) == doctest::Approx(0.75));
  CHECK(up(0, 3) == 1.0);
}

TEST_CASE("colormap is monotone from black to white") {
  CHECK(colormap(0.0) == std::array<double, 3>{0, 0, 0});
  CHECK(colormap(1.0) == std::array<double, 3>{1, 1, 1});
  auto prev = colormap(0.0);
  for (int k = 1; k <= 100; ++k) {
    const auto c = colormap(k / 100.0);
    for (int ch = 0; ch < 3; ++ch) CHECK(c[ch] >= prev[ch]);
    prev = c;
  }
}

TEST_CASE("export_map writes a grayscale map and a half-opacity overlay") {
  std::mt19937_64 g(26);
  auto p = gc::perturbed_params(g, small_config({4, 6}, 8));
  const auto image = gc::random_image(g, 16);
  auto m = grad_cam(p, image, CamTarget::of(QualityClass::poor_quality), 1);

  TempDir dir;
  const auto out = export_map(m, image, dir.path("a"), "img_00001");
  CHECK(out.cam_path == dir.path("a/img_00001.poor_quality.cam.png"));
  CHECK(out.overlay_path == dir.path("a/img_00001.poor_quality.overlay.png"));
  const auto gray = read_gray_png(out.cam_path);
  REQUIRE(gray.rows() == 16);
  REQUIRE(gray.cols() == 16);
  CHECK((gray.cast<double>() - m.values).abs().maxCoeff() <= 1.0 / 255.0);

  const auto blended = read_png(out.overlay_path);
  const auto expected = overlay(m, image);
  CHECK((blended.values - expected.values).cwiseAbs().maxCoeff() <= 1.0f / 255.0f);
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 16; ++c) {
      const auto color = colormap(m.values(r, c));
      for (int ch = 0; ch < 3; ++ch)
        CHECK(expected.at(ch, r, c) == doctest::Approx(0.5 * image.at(ch, r, c) + 0.5 * color[ch]).epsilon(1e-6));
    }

  const auto again = export_map(m, image, dir.path("b"), "img_00001");
  CHECK(file_bytes(out.cam_path) == file_bytes(again.cam_path));
  CHECK(file_bytes(out.overlay_path) == file_bytes(again.overlay_path));

  AttentionMap zero = m;
  zero.values.setZero();
  const auto flat = overlay(zero, image);
  CHECK((flat.values - 0.5f * image.values).cwiseAbs().maxCoeff() < 1e-7f);

  AttentionMap wrong = m;
  wrong.values = Eigen::ArrayXXd::Zero(8, 8);
  CHECK_THROWS_AS(overlay(wrong, image), ArgumentError);
}

TEST_CASE("target and layer names") {
  CHECK(parse_cam_target("blurry") == CamTarget::of(ExplanationKind::blurry));
  CHECK(parse_cam_target("no_skin") == CamTarget::of(QualityClass::no_skin));
  CHECK(cam_target_names().size() == 9);
  try {
    parse_cam_target("sharp");
    FAIL("expected an argument error");
  } catch (const ArgumentError& e) {
    CHECK(std::string(e.what()).find("too_far_away") != std::string::npos);
  }

  const auto c = small_config({4, 6}, 8);
  CHECK(parse_cam_layer(c, "last") == 1);
  CHECK(parse_cam_layer(c, "stage0") == 0);
  CHECK_THROWS_AS(parse_cam_layer(c, "stage2"), ArgumentError);
  CHECK_THROWS_AS(parse_cam_layer(c, "stage1x"), ArgumentError);
  CHECK_THROWS_AS(parse_cam_layer(c, "pooled"), ArgumentError);
  CHECK_THROWS_AS(parse_cam_layer(c, "quality_head"), ArgumentError);

  std::mt19937_64 g(27);
  auto p = gc::perturbed_params(g, c);
  CHECK_THROWS_AS(grad_cam(p, gc::random_image(g, 16), CamTarget::of(QualityClass::lesion), 2), ArgumentError);
}
