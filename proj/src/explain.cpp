#include "dermq/explain.hpp"

#include <algorithm>
#include <filesystem>

#include "dermq/error.hpp"

namespace dermq {

std::string CamTarget::name() const {
  return std::string(head == Head::quality ? to_string(quality_from_index(index))
                                           : to_string(explanation_from_index(index)));
}

std::vector<std::string> cam_target_names() {
  std::vector<std::string> names;
  for (auto q : kQualityClasses) names.emplace_back(to_string(q));
  for (auto e : kExplanationKinds) names.emplace_back(to_string(e));
  return names;
}

CamTarget parse_cam_target(std::string_view name) {
  if (auto q = parse_quality(name)) return CamTarget::of(*q);
  if (auto e = parse_explanation(name)) return CamTarget::of(*e);
  std::string valid;
  for (const auto& n : cam_target_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw ArgumentError("unknown target '" + std::string(name) + "'; valid targets: " + valid);
}

int parse_cam_layer(const BackboneConfig& config, std::string_view name) {
  const int n = static_cast<int>(config.stage_widths.size());
  int layer = -1;
  if (name == "last") {
    layer = n - 1;
  } else if (name.starts_with("stage")) {
    try {
      std::size_t used = 0;
      const std::string digits(name.substr(5));
      layer = std::stoi(digits, &used);
      if (used != digits.size()) layer = -1;
    } catch (const std::exception&) {
      layer = -1;
    }
    if (layer < 0 || layer >= n) throw ArgumentError("no backbone layer '" + std::string(name) + "'");
  } else {
    throw ArgumentError("layer '" + std::string(name) + "' is not a spatial convolutional layer");
  }
  if (config.stage_sides()[static_cast<std::size_t>(layer)] < 2)
    throw ArgumentError("layer '" + std::string(name) + "' has spatial extent below 2x2");
  return layer;
}

Eigen::VectorXd cam_channel_weights(const Eigen::MatrixXd& grad) { return grad.colwise().mean().transpose(); }

Eigen::ArrayXXd cam_raw_map(const Eigen::MatrixXd& activations, const Eigen::VectorXd& alpha, int side) {
  const Eigen::VectorXd weighted = activations * alpha;
  Eigen::ArrayXXd out(side, side);
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) out(r, c) = std::max(0.0, weighted[r * side + c]);
  return out;
}

Eigen::ArrayXXd upsample_bilinear(const Eigen::ArrayXXd& map, int out_rows, int out_cols) {
  const auto in_rows = map.rows(), in_cols = map.cols();
  Eigen::ArrayXXd out(out_rows, out_cols);
  const double sy = static_cast<double>(in_rows) / out_rows, sx = static_cast<double>(in_cols) / out_cols;
  for (int r = 0; r < out_rows; ++r) {
    const double y = std::clamp((r + 0.5) * sy - 0.5, 0.0, static_cast<double>(in_rows - 1));
    const auto y0 = static_cast<Eigen::Index>(y);
    const auto y1 = std::min<Eigen::Index>(y0 + 1, in_rows - 1);
    const double fy = y - static_cast<double>(y0);
    for (int c = 0; c < out_cols; ++c) {
      const double x = std::clamp((c + 0.5) * sx - 0.5, 0.0, static_cast<double>(in_cols - 1));
      const auto x0 = static_cast<Eigen::Index>(x);
      const auto x1 = std::min<Eigen::Index>(x0 + 1, in_cols - 1);
      const double fx = x - static_cast<double>(x0);
      out(r, c) = (1 - fy) * ((1 - fx) * map(y0, x0) + fx * map(y0, x1)) + fy * ((1 - fx) * map(y1, x0) + fx * map(y1, x1));
    }
  }
  return out;
}

Eigen::ArrayXXd max_normalize(const Eigen::ArrayXXd& map) {
  const double mx = map.maxCoeff();
  if (!(mx > 0.0)) return Eigen::ArrayXXd::Zero(map.rows(), map.cols());
  return (map / mx).min(1.0).max(0.0);
}

template <class S>
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> layer_activation_and_gradient(const ModelParams<S>& params,
                                                                          const ImageTensor& image, CamTarget target,
                                                                          int layer) {
  if (layer < 0 || layer >= static_cast<int>(params.stages.size()))
    throw ArgumentError("no backbone layer " + std::to_string(layer));
  const std::vector<Matrix<S>> batch{to_input<S>(image)};
  const auto trace = forward<S>(params, batch, Mode::eval);
  Matrix<S> dq = Matrix<S>::Zero(kNumQualityClasses, 1), de = Matrix<S>::Zero(kNumExplanations, 1);
  (target.head == CamTarget::Head::quality ? dq : de)(target.index, 0) = S(1);
  const auto g = backward(params, trace, dq, de, layer);
  return {trace.stages[static_cast<std::size_t>(layer)].output[0].template cast<double>(),
          g.stage_output[0].template cast<double>()};
}

template <class S>
AttentionMap grad_cam(const ModelParams<S>& params, const ImageTensor& image, CamTarget target, int layer) {
  const auto sides = params.config.stage_sides();
  if (layer < 0 || layer >= static_cast<int>(sides.size()))
    throw ArgumentError("no backbone layer " + std::to_string(layer));
  const int side = sides[static_cast<std::size_t>(layer)];
  if (side < 2) throw ArgumentError("Grad-CAM layer must have spatial extent of at least 2x2");
  const auto [act, grad] = layer_activation_and_gradient(params, image, target, layer);
  AttentionMap m;
  m.target = target;
  m.layer = layer;
  m.raw = cam_raw_map(act, cam_channel_weights(grad), side);
  m.values = max_normalize(upsample_bilinear(m.raw, image.height, image.width));
  return m;
}

std::array<double, 3> colormap(double v) {
  v = std::clamp(v, 0.0, 1.0);
  return {std::clamp(3.0 * v, 0.0, 1.0), std::clamp(3.0 * v - 1.0, 0.0, 1.0), std::clamp(3.0 * v - 2.0, 0.0, 1.0)};
}

ImageTensor overlay(const AttentionMap& map, const ImageTensor& base) {
  if (map.values.rows() != base.height || map.values.cols() != base.width)
    throw ArgumentError("overlay: map and image resolutions differ");
  ImageTensor out(base.height, base.width);
  for (int r = 0; r < base.height; ++r)
    for (int c = 0; c < base.width; ++c) {
      const auto color = colormap(map.values(r, c));
      for (int ch = 0; ch < 3; ++ch)
        out.at(ch, r, c) = static_cast<float>(0.5 * base.at(ch, r, c) + 0.5 * color[static_cast<std::size_t>(ch)]);
    }
  return out;
}

ExportedMap export_map(const AttentionMap& map, const ImageTensor& base, const std::string& out_dir,
                       const std::string& stem) {
  namespace fs = std::filesystem;
  const ImageTensor blended = overlay(map, base);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory", out_dir);
  const std::string prefix = (fs::path(out_dir) / (stem + "." + map.target.name())).string();
  ExportedMap out{prefix + ".cam.png", prefix + ".overlay.png"};
  write_gray_png(map.values.cast<float>(), out.cam_path);
  write_png(blended, out.overlay_path);
  return out;
}

template std::pair<Eigen::MatrixXd, Eigen::MatrixXd> layer_activation_and_gradient(const ModelParams<float>&,
                                                                                   const ImageTensor&, CamTarget, int);
template std::pair<Eigen::MatrixXd, Eigen::MatrixXd> layer_activation_and_gradient(const ModelParams<double>&,
                                                                                   const ImageTensor&, CamTarget, int);
template AttentionMap grad_cam(const ModelParams<float>&, const ImageTensor&, CamTarget, int);
template AttentionMap grad_cam(const ModelParams<double>&, const ImageTensor&, CamTarget, int);

}  // namespace dermq
