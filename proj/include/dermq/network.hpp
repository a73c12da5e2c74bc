#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dermq/image.hpp"
#include "dermq/labels.hpp"
#include "dermq/metrics.hpp"

namespace dermq {

template <class S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using Vector = Eigen::Matrix<S, Eigen::Dynamic, 1>;

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Plain conv3x3 -> batch norm -> SiLU stages followed by global average
/// pooling, plus the sizes of the two linear blocks.
struct BackboneConfig {
  int input_resolution = 128;
  std::vector<int> stage_widths{24, 48, 64, 96, 128};
  std::vector<int> stage_strides{2, 2, 2, 2, 1};
  int hidden_units = 64;
  double dropout = 0.2;

  /// Throws ConfigError.
  void validate() const;
  int feature_dim() const { return stage_widths.back(); }
  /// Spatial side length after each stage.
  std::vector<int> stage_sides() const;

  /// "desk" (default), "tiny" (2 stages, 16x16, H=8) or "b0-equivalent"
  /// (parameter count comparable to an EfficientNet-B0 classifier).
  static BackboneConfig preset(std::string_view name);
  bool operator==(const BackboneConfig&) const = default;
};

template <class S>
struct ConvStage {
  int stride = 1;
  Matrix<S> weight;  // out x (in*9), column index = in*9 + ky*3 + kx
  Vector<S> gamma, beta, running_mean, running_var;
};

/// Linear layer, batch normalization, dropout.
template <class S>
struct LinearBlock {
  Matrix<S> weight;  // hidden x in
  Vector<S> bias, gamma, beta, running_mean, running_var;
};

template <class S>
struct AffineHead {
  Matrix<S> weight;
  Vector<S> bias;
};

template <class S>
struct ModelParams {
  BackboneConfig config;
  std::vector<ConvStage<S>> stages;
  LinearBlock<S> explanation_block;
  AffineHead<S> explanation_head;  // H -> 5
  LinearBlock<S> quality_block;
  AffineHead<S> quality_head;  // (H + 5) -> 4

  /// Same shapes as `like`, every entry zero. Used as the gradient container.
  static ModelParams zeros_like(const ModelParams& like);
};

/// Visits the tensors of two structurally identical parameter sets in
/// lockstep, in canonical serialization order: f(name, a_tensor, b_tensor,
/// learnable). The scalar types of `a` and `b` may differ.
template <class P, class Q, class F>
void visit_tensor_pairs(P& a, Q& b, F&& f) {
  auto block = [&](const std::string& prefix, auto& x, auto& y) {
    f(prefix + ".linear.weight", x.weight, y.weight, true);
    f(prefix + ".linear.bias", x.bias, y.bias, true);
    f(prefix + ".bn.gamma", x.gamma, y.gamma, true);
    f(prefix + ".bn.beta", x.beta, y.beta, true);
    f(prefix + ".bn.running_mean", x.running_mean, y.running_mean, false);
    f(prefix + ".bn.running_var", x.running_var, y.running_var, false);
  };
  for (std::size_t k = 0; k < a.stages.size(); ++k) {
    auto& x = a.stages[k];
    auto& y = b.stages[k];
    const std::string p = "stage" + std::to_string(k);
    f(p + ".conv.weight", x.weight, y.weight, true);
    f(p + ".bn.gamma", x.gamma, y.gamma, true);
    f(p + ".bn.beta", x.beta, y.beta, true);
    f(p + ".bn.running_mean", x.running_mean, y.running_mean, false);
    f(p + ".bn.running_var", x.running_var, y.running_var, false);
  }
  block("explanation_block", a.explanation_block, b.explanation_block);
  f("explanation_head.weight", a.explanation_head.weight, b.explanation_head.weight, true);
  f("explanation_head.bias", a.explanation_head.bias, b.explanation_head.bias, true);
  block("quality_block", a.quality_block, b.quality_block);
  f("quality_head.weight", a.quality_head.weight, b.quality_head.weight, true);
  f("quality_head.bias", a.quality_head.bias, b.quality_head.bias, true);
}

/// Calls f(name, tensor, learnable) for every stored tensor in canonical
/// serialization order. Works for const and non-const params.
template <class P, class F>
void visit_tensors(P& params, F&& f) {
  visit_tensor_pairs(params, params, [&](const std::string& name, auto& t, auto&, bool learnable) {
    f(name, t, learnable);
  });
}

/// Number of stored scalars (learnable parameters plus batch-norm running statistics).
template <class S>
std::int64_t parameter_count(const ModelParams<S>& params);
template <class S>
std::int64_t learnable_count(const ModelParams<S>& params);

/// Architecture parameter count without allocating tensors.
std::int64_t parameter_count(const BackboneConfig& config);

/// Fan-in scaled uniform init (variance 1/fan_in), zero biases, identity batch norm.
template <class S>
ModelParams<S> init_params(std::uint64_t seed, const BackboneConfig& config);

template <class T, class S>
ModelParams<T> cast_params(const ModelParams<S>& params) {
  ModelParams<T> out;
  out.config = params.config;
  out.stages.resize(params.stages.size());
  for (std::size_t k = 0; k < params.stages.size(); ++k) out.stages[k].stride = params.stages[k].stride;
  visit_tensor_pairs(out, params, [](const std::string&, auto& dst, const auto& src, bool) {
    dst = src.template cast<T>();
  });
  return out;
}

enum class Mode { train, eval };

template <class S>
struct StageTrace {
  int side_in = 0, side_out = 0;
  // All per-sample matrices are pixels x channels.
  std::vector<Matrix<S>> columns;     // im2col of the stage input: pixels x (in*9)
  std::vector<Matrix<S>> normalized;  // batch-normalized conv output
  std::vector<Matrix<S>> pre_activation;
  std::vector<Matrix<S>> output;  // SiLU(pre_activation)
  Vector<S> mean, var, inv_std;   // statistics used for normalization
};

template <class S>
struct BlockTrace {
  Matrix<S> input;       // in x N
  Matrix<S> normalized;  // H x N
  Matrix<S> mask;        // dropout scale per unit (1 in eval mode)
  Matrix<S> output;      // H x N
  Vector<S> mean, var, inv_std;
};

/// Activations cached by forward() for backpropagation and Grad-CAM.
template <class S>
struct ForwardTrace {
  Mode mode = Mode::eval;
  std::vector<StageTrace<S>> stages;
  Matrix<S> pooled;  // F x N
  BlockTrace<S> explanation_block, quality_block;
  Matrix<S> explanation_logits;  // 5 x N
  Matrix<S> explanation_probs;   // 5 x N
  Matrix<S> quality_input;       // (H + 5) x N
  Matrix<S> quality_logits;      // 4 x N

  std::size_t batch_size() const { return static_cast<std::size_t>(quality_logits.cols()); }
};

/// Image in network layout: (side*side) x 3, row-major pixel order.
template <class S>
Matrix<S> to_input(const ImageTensor& image) {
  return image.values.transpose().template cast<S>();
}

/// Batched forward pass. In train mode batch norm uses batch statistics and
/// dropout draws its masks from `dropout_seed`; in eval mode the pass is a
/// pure function of (params, images).
template <class S>
ForwardTrace<S> forward(const ModelParams<S>& params, std::span<const Matrix<S>> images, Mode mode,
                        std::uint64_t dropout_seed = 0, unsigned threads = 1);

/// Eval-mode forward from the output of stage `stage` (pixels x channels per
/// sample) to the logits. Used to check gradients w.r.t. feature maps.
template <class S>
ForwardTrace<S> forward_from_stage(const ModelParams<S>& params, std::span<const Matrix<S>> stage_outputs,
                                   int stage);

/// The quality head sees the explanation branch through this transform
/// (sigmoid probabilities). Everything that depends on the choice goes through it.
template <class S>
Matrix<S> explanation_features(const Matrix<S>& explanation_logits);

/// Parameter gradients (same layout as the params) plus, optionally, the
/// gradient w.r.t. one stage's output for every sample.
template <class S>
struct Gradients {
  ModelParams<S> params;
  int stage = -1;
  std::vector<Matrix<S>> stage_output;
};

/// Backpropagates d(objective)/d(logits) (4 x N and 5 x N) through the trace.
/// `keep_stage` >= 0 records the gradient w.r.t. that stage's output.
template <class S>
Gradients<S> backward(const ModelParams<S>& params, const ForwardTrace<S>& trace, const Matrix<S>& d_quality_logits,
                      const Matrix<S>& d_explanation_logits, int keep_stage = -1, unsigned threads = 1);

/// Exponential moving average of the batch statistics recorded in a train-mode trace.
template <class S>
void update_running_stats(ModelParams<S>& params, const ForwardTrace<S>& trace, double momentum = kBatchNormMomentum);

struct Prediction {
  QualityClass quality = QualityClass::lesion;
  ExplanationSet explanations;
  Eigen::Vector4d quality_probs;
  Eigen::Matrix<double, 5, 1> explanation_probs;
};

/// Column-wise softmax.
template <class S>
Matrix<S> softmax(const Matrix<S>& logits);
template <class S>
Matrix<S> sigmoid(const Matrix<S>& logits);

template <class S>
Prediction predict(const ModelParams<S>& params, const ImageTensor& image, const Thresholds& thresholds = kDefaultThresholds);

/// Eval-mode probabilities for many images: N x 4 and N x 5.
template <class S>
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> predict_probs(const ModelParams<S>& params,
                                                          std::span<const ImageTensor> images, unsigned threads = 1);

}  // namespace dermq
