#pragma once

#include <Eigen/Core>
#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "dermq/image.hpp"
#include "dermq/network.hpp"

namespace dermq {

/// Output whose logit a Grad-CAM map explains.
struct CamTarget {
  enum class Head { quality, explanation } head = Head::quality;
  int index = 0;

  static CamTarget of(QualityClass q) { return {Head::quality, index_of(q)}; }
  static CamTarget of(ExplanationKind e) { return {Head::explanation, index_of(e)}; }
  std::string name() const;
  bool operator==(const CamTarget&) const = default;
};

/// Accepts any quality class or explanation name; ArgumentError lists the valid names.
CamTarget parse_cam_target(std::string_view name);
std::vector<std::string> cam_target_names();

/// Backbone stage index from "stage<k>" or "last". Non-spatial layer names
/// (pooled features, linear blocks, heads) are rejected with ArgumentError.
int parse_cam_layer(const BackboneConfig& config, std::string_view name);

struct AttentionMap {
  Eigen::ArrayXXd values;  // input resolution, in [0, 1]
  Eigen::ArrayXXd raw;     // ReLU(sum_k alpha_k A^k) at layer resolution
  CamTarget target;
  int layer = 0;
};

/// Channel weights alpha_k = mean over pixels of d(logit)/dA^k; A and dA are pixels x channels.
Eigen::VectorXd cam_channel_weights(const Eigen::MatrixXd& grad);
/// ReLU(A * alpha) reshaped to side x side.
Eigen::ArrayXXd cam_raw_map(const Eigen::MatrixXd& activations, const Eigen::VectorXd& alpha, int side);
/// Half-pixel-centred bilinear resize.
Eigen::ArrayXXd upsample_bilinear(const Eigen::ArrayXXd& map, int out_rows, int out_cols);
/// Divides by the maximum; an all-zero map stays all zero.
Eigen::ArrayXXd max_normalize(const Eigen::ArrayXXd& map);

/// Activation of `layer` and the gradient of the target logit with respect to it
/// (eval mode, single image), both pixels x channels.
template <class S>
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> layer_activation_and_gradient(const ModelParams<S>& params,
                                                                          const ImageTensor& image, CamTarget target,
                                                                          int layer);

template <class S>
AttentionMap grad_cam(const ModelParams<S>& params, const ImageTensor& image, CamTarget target, int layer);

/// Monotone colormap used for overlays: black -> red -> yellow -> white.
std::array<double, 3> colormap(double v);

/// Overlay pixel = 0.5 * base + 0.5 * colormap(map).
ImageTensor overlay(const AttentionMap& map, const ImageTensor& base);

struct ExportedMap {
  std::string cam_path, overlay_path;
};

/// Writes <stem>.<target>.cam.png and <stem>.<target>.overlay.png into out_dir.
ExportedMap export_map(const AttentionMap& map, const ImageTensor& base, const std::string& out_dir,
                       const std::string& stem);

}  // namespace dermq
