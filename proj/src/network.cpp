#include "dermq/network.hpp"

#include <cmath>

#include "dermq/error.hpp"
#include "dermq/parallel.hpp"
#include "dermq/rng.hpp"

namespace dermq {

void BackboneConfig::validate() const {
  if (input_resolution < 8) throw ConfigError("backbone.input_resolution must be >= 8");
  if (stage_widths.size() < 2) throw ConfigError("backbone.stage_widths needs at least two stages");
  if (stage_strides.size() != stage_widths.size())
    throw ConfigError("backbone.stage_strides must have one entry per stage");
  for (int w : stage_widths)
    if (w < 1) throw ConfigError("backbone.stage_widths entries must be >= 1");
  for (int s : stage_strides)
    if (s != 1 && s != 2) throw ConfigError("backbone.stage_strides entries must be 1 or 2");
  if (stage_sides().back() < 4) throw ConfigError("backbone: final feature map must be at least 4x4");
  if (hidden_units < 1) throw ConfigError("backbone.hidden_units must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("backbone.dropout must be in [0, 1)");
}

std::vector<int> BackboneConfig::stage_sides() const {
  std::vector<int> sides;
  int side = input_resolution;
  for (int s : stage_strides) {
    side = (side - 1) / s + 1;
    sides.push_back(side);
  }
  return sides;
}

BackboneConfig BackboneConfig::preset(std::string_view name) {
  BackboneConfig c;
  if (name == "desk") return c;
  if (name == "tiny") {
    c.input_resolution = 16;
    c.stage_widths = {4, 6};
    c.stage_strides = {2, 2};
    c.hidden_units = 8;
    return c;
  }
  if (name == "b0-equivalent") {
    c.stage_widths = {32, 64, 128, 256, 384, 736};
    c.stage_strides = {2, 2, 2, 2, 1, 1};
    return c;
  }
  throw ConfigError("unknown backbone preset '" + std::string(name) + "' (expected desk, tiny, b0-equivalent)");
}

std::int64_t parameter_count(const BackboneConfig& c) {
  std::int64_t n = 0;
  int in = 3;
  for (int w : c.stage_widths) {
    n += 9LL * in * w + 4LL * w;
    in = w;
  }
  const std::int64_t f = c.feature_dim(), h = c.hidden_units;
  n += 2 * (h * f + 5 * h);
  n += kNumExplanations * h + kNumExplanations;
  n += kNumQualityClasses * (h + kNumExplanations) + kNumQualityClasses;
  return n;
}

template <class S>
std::int64_t parameter_count(const ModelParams<S>& params) {
  std::int64_t n = 0;
  visit_tensors(params, [&](const std::string&, const auto& t, bool) { n += t.size(); });
  return n;
}

template <class S>
std::int64_t learnable_count(const ModelParams<S>& params) {
  std::int64_t n = 0;
  visit_tensors(params, [&](const std::string&, const auto& t, bool learnable) {
    if (learnable) n += t.size();
  });
  return n;
}

template <class S>
ModelParams<S> ModelParams<S>::zeros_like(const ModelParams& like) {
  ModelParams out = like;
  visit_tensors(out, [](const std::string&, auto& t, bool) { t.setZero(); });
  return out;
}

namespace {

template <class S>
void init_block(LinearBlock<S>& b, int in, int hidden) {
  b.weight.resize(hidden, in);
  b.bias = Vector<S>::Zero(hidden);
  b.gamma = Vector<S>::Ones(hidden);
  b.beta = Vector<S>::Zero(hidden);
  b.running_mean = Vector<S>::Zero(hidden);
  b.running_var = Vector<S>::Ones(hidden);
}

}  // namespace

template <class S>
ModelParams<S> init_params(std::uint64_t seed, const BackboneConfig& config) {
  config.validate();
  ModelParams<S> p;
  p.config = config;
  int in = 3;
  for (std::size_t k = 0; k < config.stage_widths.size(); ++k) {
    const int out = config.stage_widths[k];
    ConvStage<S> s;
    s.stride = config.stage_strides[k];
    s.weight.resize(out, in * 9);
    s.gamma = Vector<S>::Ones(out);
    s.beta = Vector<S>::Zero(out);
    s.running_mean = Vector<S>::Zero(out);
    s.running_var = Vector<S>::Ones(out);
    p.stages.push_back(std::move(s));
    in = out;
  }
  const int h = config.hidden_units;
  init_block(p.explanation_block, config.feature_dim(), h);
  init_block(p.quality_block, config.feature_dim(), h);
  p.explanation_head.weight.resize(kNumExplanations, h);
  p.explanation_head.bias = Vector<S>::Zero(kNumExplanations);
  p.quality_head.weight.resize(kNumQualityClasses, h + kNumExplanations);
  p.quality_head.bias = Vector<S>::Zero(kNumQualityClasses);

  visit_tensors(p, [&](const std::string& name, auto& t, bool) {
    if (!name.ends_with("weight")) return;
    Rng rng = make_rng(seed, name);
    const double bound = std::sqrt(3.0 / static_cast<double>(t.cols()));
    for (Eigen::Index j = 0; j < t.cols(); ++j)
      for (Eigen::Index i = 0; i < t.rows(); ++i) t(i, j) = static_cast<S>(uniform(rng, -bound, bound));
  });
  return p;
}

namespace {

template <class S>
S sigmoid_scalar(S x) {
  if (x >= S(0)) return S(1) / (S(1) + std::exp(-x));
  const S e = std::exp(x);
  return e / (S(1) + e);
}

// columns(op, ci*9 + ky*3 + kx) = x(ip, ci) with zero padding of one pixel.
template <class S>
void im2col(const Matrix<S>& x, int side, int stride, int side_out, Matrix<S>& cols) {
  const auto cin = x.cols();
  cols.setZero(static_cast<Eigen::Index>(side_out) * side_out, cin * 9);
  for (Eigen::Index ci = 0; ci < cin; ++ci)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const Eigen::Index col = ci * 9 + ky * 3 + kx;
        S* dst = cols.col(col).data();
        const S* src = x.col(ci).data();
        for (int orow = 0; orow < side_out; ++orow) {
          const int ir = orow * stride + ky - 1;
          if (ir < 0 || ir >= side) continue;
          for (int ocol = 0; ocol < side_out; ++ocol) {
            const int ic = ocol * stride + kx - 1;
            if (ic < 0 || ic >= side) continue;
            dst[orow * side_out + ocol] = src[ir * side + ic];
          }
        }
      }
}

template <class S>
void col2im(const Matrix<S>& dcols, int side, int stride, int side_out, Eigen::Index cin, Matrix<S>& dx) {
  dx.setZero(static_cast<Eigen::Index>(side) * side, cin);
  for (Eigen::Index ci = 0; ci < cin; ++ci)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const S* src = dcols.col(ci * 9 + ky * 3 + kx).data();
        S* dst = dx.col(ci).data();
        for (int orow = 0; orow < side_out; ++orow) {
          const int ir = orow * stride + ky - 1;
          if (ir < 0 || ir >= side) continue;
          for (int ocol = 0; ocol < side_out; ++ocol) {
            const int ic = ocol * stride + kx - 1;
            if (ic < 0 || ic >= side) continue;
            dst[ir * side + ic] += src[orow * side_out + ocol];
          }
        }
      }
}

// Vectorized logistic; exp overflow gives 1/inf = 0, the correct limit.
template <class S>
auto logistic(const Matrix<S>& y) {
  return (S(1) + (-y.array()).exp()).inverse();
}

template <class S>
void silu_inplace(const Matrix<S>& y, Matrix<S>& a) {
  a = (y.array() * logistic(y)).matrix();
}

template <class S>
void run_stage(const ConvStage<S>& stage, std::span<const Matrix<S>> inputs, int side, Mode mode, unsigned threads,
               StageTrace<S>& t) {
  const std::size_t n = inputs.size();
  t.side_in = side;
  t.side_out = (side - 1) / stage.stride + 1;
  const auto cout = stage.weight.rows();
  t.columns.resize(n);
  t.normalized.resize(n);
  t.pre_activation.resize(n);
  t.output.resize(n);

  std::vector<Matrix<S>> conv(n);
  parallel_for(n, threads, [&](std::size_t i) {
    im2col(inputs[i], side, stage.stride, t.side_out, t.columns[i]);
    conv[i].noalias() = t.columns[i] * stage.weight.transpose();
  });

  if (mode == Mode::train) {
    const double m = static_cast<double>(n) * t.side_out * t.side_out;
    std::vector<Vector<S>> sums(n);
    parallel_for(n, threads, [&](std::size_t i) { sums[i] = conv[i].colwise().sum().transpose(); });
    t.mean = Vector<S>::Zero(cout);
    for (const auto& s : sums) t.mean += s;
    t.mean /= static_cast<S>(m);
    parallel_for(n, threads, [&](std::size_t i) {
      sums[i] = (conv[i].rowwise() - t.mean.transpose()).array().square().colwise().sum().transpose();
    });
    t.var = Vector<S>::Zero(cout);
    for (const auto& s : sums) t.var += s;
    t.var /= static_cast<S>(m);
  } else {
    t.mean = stage.running_mean;
    t.var = stage.running_var;
  }
  t.inv_std = (t.var.array() + static_cast<S>(kBatchNormEps)).rsqrt().matrix();

  parallel_for(n, threads, [&](std::size_t i) {
    t.normalized[i] = ((conv[i].rowwise() - t.mean.transpose()).array().rowwise() * t.inv_std.transpose().array())
                          .matrix();
    t.pre_activation[i] =
        ((t.normalized[i].array().rowwise() * stage.gamma.transpose().array()).rowwise() + stage.beta.transpose().array())
            .matrix();
    silu_inplace(t.pre_activation[i], t.output[i]);
  });
}

template <class S>
void run_block(const LinearBlock<S>& b, const Matrix<S>& input, Mode mode, double dropout, Rng& rng, BlockTrace<S>& t) {
  const auto n = input.cols();
  t.input = input;
  Matrix<S> u = (b.weight * input).colwise() + b.bias;
  if (mode == Mode::train) {
    t.mean = u.rowwise().mean();
    t.var = (u.colwise() - t.mean).array().square().rowwise().mean().matrix();
  } else {
    t.mean = b.running_mean;
    t.var = b.running_var;
  }
  t.inv_std = (t.var.array() + static_cast<S>(kBatchNormEps)).rsqrt().matrix();
  t.normalized = ((u.colwise() - t.mean).array().colwise() * t.inv_std.array()).matrix();
  t.mask = Matrix<S>::Ones(u.rows(), n);
  if (mode == Mode::train && dropout > 0.0) {
    const S keep_scale = static_cast<S>(1.0 / (1.0 - dropout));
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < u.rows(); ++i) t.mask(i, j) = uniform01(rng) < dropout ? S(0) : keep_scale;
  }
  t.output = (((t.normalized.array().colwise() * b.gamma.array()).colwise() + b.beta.array()) * t.mask.array()).matrix();
}

template <class S>
void run_heads(const ModelParams<S>& p, Mode mode, std::uint64_t dropout_seed, ForwardTrace<S>& t) {
  Rng expl_rng = make_rng(dropout_seed, "dropout.explanation_block");
  Rng qual_rng = make_rng(dropout_seed, "dropout.quality_block");
  run_block(p.explanation_block, t.pooled, mode, p.config.dropout, expl_rng, t.explanation_block);
  t.explanation_logits = (p.explanation_head.weight * t.explanation_block.output).colwise() + p.explanation_head.bias;
  t.explanation_probs = explanation_features(t.explanation_logits);
  run_block(p.quality_block, t.pooled, mode, p.config.dropout, qual_rng, t.quality_block);
  const auto h = t.quality_block.output.rows();
  t.quality_input.resize(h + kNumExplanations, t.pooled.cols());
  t.quality_input.topRows(h) = t.quality_block.output;
  t.quality_input.bottomRows(kNumExplanations) = t.explanation_probs;
  t.quality_logits = (p.quality_head.weight * t.quality_input).colwise() + p.quality_head.bias;
}

template <class S>
void pool(const std::vector<Matrix<S>>& maps, Matrix<S>& pooled) {
  pooled.resize(maps.front().cols(), static_cast<Eigen::Index>(maps.size()));
  for (std::size_t i = 0; i < maps.size(); ++i)
    pooled.col(static_cast<Eigen::Index>(i)) = maps[i].colwise().mean().transpose();
}

template <class S>
void check_inputs(const ModelParams<S>& params, std::span<const Matrix<S>> images) {
  if (images.empty()) throw ArgumentError("forward: empty batch");
  const Eigen::Index pixels = static_cast<Eigen::Index>(params.config.input_resolution) * params.config.input_resolution;
  for (const auto& im : images)
    if (im.rows() != pixels || im.cols() != 3)
      throw ArgumentError("forward: image does not match the configured " +
                          std::to_string(params.config.input_resolution) + "x" +
                          std::to_string(params.config.input_resolution) + " RGB input");
}

}  // namespace

template <class S>
Matrix<S> explanation_features(const Matrix<S>& explanation_logits) {
  return sigmoid(explanation_logits);
}

template <class S>
Matrix<S> softmax(const Matrix<S>& logits) {
  Matrix<S> out(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const S mx = logits.col(j).maxCoeff();
    out.col(j) = (logits.col(j).array() - mx).exp().matrix();
    out.col(j) /= out.col(j).sum();
  }
  return out;
}

template <class S>
Matrix<S> sigmoid(const Matrix<S>& logits) {
  return logits.unaryExpr([](S v) { return sigmoid_scalar(v); });
}

template <class S>
ForwardTrace<S> forward(const ModelParams<S>& params, std::span<const Matrix<S>> images, Mode mode,
                        std::uint64_t dropout_seed, unsigned threads) {
  check_inputs(params, images);
  ForwardTrace<S> t;
  t.mode = mode;
  t.stages.resize(params.stages.size());
  int side = params.config.input_resolution;
  std::span<const Matrix<S>> in = images;
  for (std::size_t k = 0; k < params.stages.size(); ++k) {
    run_stage(params.stages[k], in, side, mode, threads, t.stages[k]);
    side = t.stages[k].side_out;
    in = t.stages[k].output;
  }
  pool(t.stages.back().output, t.pooled);
  run_heads(params, mode, dropout_seed, t);
  return t;
}

template <class S>
ForwardTrace<S> forward_from_stage(const ModelParams<S>& params, std::span<const Matrix<S>> stage_outputs,
                                   int stage) {
  const int n_stages = static_cast<int>(params.stages.size());
  if (stage < 0 || stage >= n_stages) throw ArgumentError("forward_from_stage: no stage " + std::to_string(stage));
  if (stage_outputs.empty()) throw ArgumentError("forward_from_stage: empty batch");
  const auto sides = params.config.stage_sides();
  ForwardTrace<S> t;
  t.mode = Mode::eval;
  t.stages.resize(params.stages.size());
  auto& given = t.stages[static_cast<std::size_t>(stage)];
  given.side_out = sides[static_cast<std::size_t>(stage)];
  given.output.assign(stage_outputs.begin(), stage_outputs.end());
  for (const auto& m : given.output)
    if (m.rows() != static_cast<Eigen::Index>(given.side_out) * given.side_out ||
        m.cols() != params.stages[static_cast<std::size_t>(stage)].weight.rows())
      throw ArgumentError("forward_from_stage: feature map has the wrong shape");
  for (int k = stage + 1; k < n_stages; ++k) {
    const auto& prev = t.stages[static_cast<std::size_t>(k - 1)];
    run_stage(params.stages[static_cast<std::size_t>(k)], std::span<const Matrix<S>>(prev.output), prev.side_out,
              Mode::eval, 1u, t.stages[static_cast<std::size_t>(k)]);
  }
  pool(t.stages.back().output, t.pooled);
  run_heads(params, Mode::eval, 0, t);
  return t;
}

namespace {

template <class S>
Matrix<S> block_backward(const LinearBlock<S>& b, const BlockTrace<S>& t, Mode mode, const Matrix<S>& d_out,
                         LinearBlock<S>& g) {
  const Matrix<S> dv = (d_out.array() * t.mask.array()).matrix();
  g.gamma += (dv.array() * t.normalized.array()).rowwise().sum().matrix();
  g.beta += dv.rowwise().sum();
  const Matrix<S> dhat = (dv.array().colwise() * b.gamma.array()).matrix();
  Matrix<S> du;
  if (mode == Mode::train) {
    const S n = static_cast<S>(d_out.cols());
    const Vector<S> s1 = dhat.rowwise().sum();
    const Vector<S> s2 = (dhat.array() * t.normalized.array()).rowwise().sum().matrix();
    du = (((dhat.array() * n).colwise() - s1.array() - (t.normalized.array().colwise() * s2.array())).colwise() *
          (t.inv_std.array() / n))
             .matrix();
  } else {
    du = (dhat.array().colwise() * t.inv_std.array()).matrix();
  }
  g.weight.noalias() += du * t.input.transpose();
  g.bias += du.rowwise().sum();
  return b.weight.transpose() * du;
}

template <class S>
Matrix<S> silu_grad(const Matrix<S>& y) {
  const Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic> s = logistic(y);
  return (s * (S(1) + y.array() * (S(1) - s))).matrix();
}

}  // namespace

template <class S>
Gradients<S> backward(const ModelParams<S>& params, const ForwardTrace<S>& trace, const Matrix<S>& d_quality_logits,
                      const Matrix<S>& d_explanation_logits, int keep_stage, unsigned threads) {
  const auto n = static_cast<Eigen::Index>(trace.batch_size());
  if (d_quality_logits.rows() != kNumQualityClasses || d_quality_logits.cols() != n ||
      d_explanation_logits.rows() != kNumExplanations || d_explanation_logits.cols() != n)
    throw ArgumentError("backward: logit gradients must be 4 x N and 5 x N");

  Gradients<S> g{ModelParams<S>::zeros_like(params), keep_stage, {}};
  auto& gp = g.params;

  // Quality head and the concatenated explanation probabilities.
  gp.quality_head.weight.noalias() += d_quality_logits * trace.quality_input.transpose();
  gp.quality_head.bias += d_quality_logits.rowwise().sum();
  const Matrix<S> d_input = params.quality_head.weight.transpose() * d_quality_logits;
  const auto h = trace.quality_block.output.rows();
  const Matrix<S>& probs = trace.explanation_probs;
  const Matrix<S> d_expl = d_explanation_logits +
                           (d_input.bottomRows(kNumExplanations).array() * probs.array() * (S(1) - probs.array())).matrix();

  Matrix<S> d_pooled = block_backward(params.quality_block, trace.quality_block, trace.mode,
                                      Matrix<S>(d_input.topRows(h)), gp.quality_block);

  gp.explanation_head.weight.noalias() += d_expl * trace.explanation_block.output.transpose();
  gp.explanation_head.bias += d_expl.rowwise().sum();
  const Matrix<S> d_block = params.explanation_head.weight.transpose() * d_expl;
  d_pooled += block_backward(params.explanation_block, trace.explanation_block, trace.mode, d_block,
                             gp.explanation_block);

  // Global average pooling.
  const auto& last = trace.stages.back();
  const Eigen::Index pixels = static_cast<Eigen::Index>(last.side_out) * last.side_out;
  std::vector<Matrix<S>> d_out(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    d_out[static_cast<std::size_t>(i)] =
        d_pooled.col(i).transpose().replicate(pixels, 1) / static_cast<S>(pixels);

  for (int k = static_cast<int>(params.stages.size()) - 1; k >= 0; --k) {
    if (k == keep_stage) g.stage_output = d_out;
    const auto& st = trace.stages[static_cast<std::size_t>(k)];
    if (st.columns.empty()) break;  // trace started at a later stage
    const auto& stage = params.stages[static_cast<std::size_t>(k)];
    auto& gs = gp.stages[static_cast<std::size_t>(k)];
    const std::size_t bn = d_out.size();

    std::vector<Matrix<S>> d_hat(bn);
    std::vector<Vector<S>> dg(bn), db(bn), s1(bn), s2(bn);
    parallel_for(bn, threads, [&](std::size_t i) {
      const Matrix<S> dy = (d_out[i].array() * silu_grad(st.pre_activation[i]).array()).matrix();
      dg[i] = (dy.array() * st.normalized[i].array()).colwise().sum().transpose().matrix();
      db[i] = dy.colwise().sum().transpose();
      d_hat[i] = (dy.array().rowwise() * stage.gamma.transpose().array()).matrix();
      if (trace.mode == Mode::train) {
        s1[i] = d_hat[i].colwise().sum().transpose();
        s2[i] = (d_hat[i].array() * st.normalized[i].array()).colwise().sum().transpose().matrix();
      }
    });
    Vector<S> sum1 = Vector<S>::Zero(stage.gamma.size()), sum2 = sum1;
    for (std::size_t i = 0; i < bn; ++i) {
      gs.gamma += dg[i];
      gs.beta += db[i];
      if (trace.mode == Mode::train) {
        sum1 += s1[i];
        sum2 += s2[i];
      }
    }

    const S m = static_cast<S>(static_cast<double>(bn) * st.side_out * st.side_out);
    std::vector<Matrix<S>> dw(bn), d_in(bn);
    parallel_for(bn, threads, [&](std::size_t i) {
      Matrix<S> dz;
      if (trace.mode == Mode::train) {
        dz = (((d_hat[i].array() * m).rowwise() - sum1.transpose().array() -
               (st.normalized[i].array().rowwise() * sum2.transpose().array()))
                  .rowwise() *
              (st.inv_std.transpose().array() / m))
                 .matrix();
      } else {
        dz = (d_hat[i].array().rowwise() * st.inv_std.transpose().array()).matrix();
      }
      dw[i].noalias() = dz.transpose() * st.columns[i];
      if (k > 0) {
        const Matrix<S> dcols = dz * stage.weight;
        col2im(dcols, st.side_in, stage.stride, st.side_out, stage.weight.cols() / 9, d_in[i]);
      }
    });
    for (const auto& w : dw) gs.weight += w;
    if (k == 0) break;
    d_out = std::move(d_in);
  }
  return g;
}

template <class S>
void update_running_stats(ModelParams<S>& params, const ForwardTrace<S>& trace, double momentum) {
  if (trace.mode != Mode::train) return;
  const S mom = static_cast<S>(momentum);
  const double n = static_cast<double>(trace.batch_size());
  auto update = [&](Vector<S>& rm, Vector<S>& rv, const Vector<S>& mean, const Vector<S>& var, double count) {
    const S unbias = static_cast<S>(count > 1.0 ? count / (count - 1.0) : 1.0);
    rm = (S(1) - mom) * rm + mom * mean;
    rv = (S(1) - mom) * rv + mom * unbias * var;
  };
  for (std::size_t k = 0; k < params.stages.size(); ++k) {
    const auto& st = trace.stages[k];
    update(params.stages[k].running_mean, params.stages[k].running_var, st.mean, st.var,
           n * st.side_out * st.side_out);
  }
  update(params.explanation_block.running_mean, params.explanation_block.running_var, trace.explanation_block.mean,
         trace.explanation_block.var, n);
  update(params.quality_block.running_mean, params.quality_block.running_var, trace.quality_block.mean,
         trace.quality_block.var, n);
}

template <class S>
Prediction predict(const ModelParams<S>& params, const ImageTensor& image, const Thresholds& thresholds) {
  const std::vector<Matrix<S>> batch{to_input<S>(image)};
  const auto t = forward<S>(params, batch, Mode::eval);
  Prediction p;
  p.quality_probs = softmax(t.quality_logits).col(0).template cast<double>();
  p.explanation_probs = t.explanation_probs.col(0).template cast<double>();
  p.quality = quality_from_index(argmax_lowest(p.quality_probs));
  for (int k = 0; k < kNumExplanations; ++k) p.explanations.set(k, p.explanation_probs[k] >= thresholds[k]);
  return p;
}

template <class S>
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> predict_probs(const ModelParams<S>& params,
                                                          std::span<const ImageTensor> images, unsigned threads) {
  Eigen::MatrixXd q(static_cast<Eigen::Index>(images.size()), kNumQualityClasses);
  Eigen::MatrixXd e(static_cast<Eigen::Index>(images.size()), kNumExplanations);
  parallel_for(images.size(), threads, [&](std::size_t i) {
    const auto p = predict(params, images[i]);
    q.row(static_cast<Eigen::Index>(i)) = p.quality_probs.transpose();
    e.row(static_cast<Eigen::Index>(i)) = p.explanation_probs.transpose();
  });
  return {std::move(q), std::move(e)};
}

#define DERMQ_INSTANTIATE(S)                                                                                        \
  template struct ModelParams<S>;                                                                                  \
  template std::int64_t parameter_count(const ModelParams<S>&);                                                    \
  template std::int64_t learnable_count(const ModelParams<S>&);                                                    \
  template ModelParams<S> init_params<S>(std::uint64_t, const BackboneConfig&);                                    \
  template Matrix<S> explanation_features(const Matrix<S>&);                                                       \
  template Matrix<S> softmax(const Matrix<S>&);                                                                    \
  template Matrix<S> sigmoid(const Matrix<S>&);                                                                    \
  template ForwardTrace<S> forward(const ModelParams<S>&, std::span<const Matrix<S>>, Mode, std::uint64_t,        \
                                   unsigned);                                                                      \
  template ForwardTrace<S> forward_from_stage(const ModelParams<S>&, std::span<const Matrix<S>>, int);            \
  template Gradients<S> backward(const ModelParams<S>&, const ForwardTrace<S>&, const Matrix<S>&,                 \
                                 const Matrix<S>&, int, unsigned);                                                 \
  template void update_running_stats(ModelParams<S>&, const ForwardTrace<S>&, double);                            \
  template Prediction predict(const ModelParams<S>&, const ImageTensor&, const Thresholds&);                      \
  template std::pair<Eigen::MatrixXd, Eigen::MatrixXd> predict_probs(const ModelParams<S>&,                       \
                                                                     std::span<const ImageTensor>, unsigned);

DERMQ_INSTANTIATE(float)
DERMQ_INSTANTIATE(double)

}  // namespace dermq
