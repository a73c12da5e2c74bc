#include "dermq/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>

#include "dermq/error.hpp"
#include "dermq/parallel.hpp"
#include "dermq/rng.hpp"

namespace dermq {

namespace {

using Tone = std::array<double, 3>;

double gauss(Rng& rng) {
  // Box-Muller on the portable uniform source.
  const double u1 = std::max(uniform01(rng), 1e-300);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Tone sample_skin_tone(Rng& rng) {
  constexpr Tone light{0.93, 0.77, 0.67};
  constexpr Tone deep{0.74, 0.55, 0.44};
  const double t = uniform01(rng);
  Tone out;
  for (int ch = 0; ch < 3; ++ch) out[ch] = light[ch] + t * (deep[ch] - light[ch]) + uniform(rng, -0.02, 0.02);
  return out;
}

double contrast(const Tone& a, const Tone& b) {
  return (std::abs(a[0] - b[0]) + std::abs(a[1] - b[1]) + std::abs(a[2] - b[2])) / 3.0;
}

struct Lesion {
  double cy, cx, a, b, theta;
};

// Skin-like texture: low-frequency shading, pores and per-pixel sensor noise,
// optionally with a soft-edged elliptical lesion blended in.
ImageTensor render_skin(Rng& rng, int res, const Tone& bg, const Tone* lesion_tone, const Lesion* lesion) {
  ImageTensor img(res, res);
  const double fy1 = uniform(rng, 0.5, 2.0), fx1 = uniform(rng, 0.5, 2.0), ph1 = uniform(rng, 0, 6.283);
  const double fy2 = uniform(rng, 0.5, 2.0), fx2 = uniform(rng, -2.0, -0.5), ph2 = uniform(rng, 0, 6.283);

  Eigen::ArrayXXd pores = Eigen::ArrayXXd::Zero(res, res);
  const int n_pores = res * res / 80;
  for (int i = 0; i < n_pores; ++i) {
    const double py = uniform(rng, 0, res), px = uniform(rng, 0, res), pr = uniform(rng, 0.7, 1.4);
    const double depth = uniform(rng, 0.06, 0.14);
    for (int r = std::max(0, int(py - pr - 1)); r <= std::min(res - 1, int(py + pr + 1)); ++r)
      for (int c = std::max(0, int(px - pr - 1)); c <= std::min(res - 1, int(px + pr + 1)); ++c) {
        const double d = std::hypot(r + 0.5 - py, c + 0.5 - px);
        if (d < pr) pores(r, c) = std::max(pores(r, c), depth * (1.0 - d / pr * 0.5));
      }
  }

  const double ct = lesion ? std::cos(lesion->theta) : 1.0, st = lesion ? std::sin(lesion->theta) : 0.0;
  for (int r = 0; r < res; ++r)
    for (int c = 0; c < res; ++c) {
      const double y = (r + 0.5) / res, x = (c + 0.5) / res;
      const double shade = 1.0 + 0.04 * std::cos(2 * std::numbers::pi * (fy1 * y + fx1 * x) + ph1) +
                           0.03 * std::cos(2 * std::numbers::pi * (fy2 * y + fx2 * x) + ph2);
      double alpha = 0.0;
      if (lesion) {
        const double dy = r + 0.5 - lesion->cy, dx = c + 0.5 - lesion->cx;
        const double u = (ct * dx + st * dy) / lesion->a, v = (-st * dx + ct * dy) / lesion->b;
        const double rho = std::sqrt(u * u + v * v);
        alpha = std::clamp((1.0 - rho) * std::min(lesion->a, lesion->b) / 1.5, 0.0, 1.0);
      }
      const double lum_noise = 0.02 * gauss(rng);
      for (int ch = 0; ch < 3; ++ch) {
        const double tone = lesion ? (1 - alpha) * bg[ch] + alpha * (*lesion_tone)[ch] : bg[ch];
        const double v = tone * shade * (1.0 - pores(r, c)) + lum_noise + 0.005 * gauss(rng);
        img.at(ch, r, c) = static_cast<float>(v);
      }
    }
  img.clamp01();
  return img;
}

void check_resolution(const CorpusConfig& config) {
  if (config.resolution < 32) throw ConfigError("corpus.resolution must be >= 32");
}

float bilinear(const ImageTensor& img, int ch, double y, double x) {
  const int y0 = static_cast<int>(std::floor(y)), x0 = static_cast<int>(std::floor(x));
  const double fy = y - y0, fx = x - x0;
  auto px = [&](int r, int c) {
    r = std::clamp(r, 0, img.height - 1);
    c = std::clamp(c, 0, img.width - 1);
    return static_cast<double>(img.at(ch, r, c));
  };
  return static_cast<float>((1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
                            fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1)));
}

int application_rank(ExplanationKind k) {
  switch (k) {
    case ExplanationKind::too_far_away: return 0;
    case ExplanationKind::bad_framing: return 1;
    case ExplanationKind::blurry: return 2;
    case ExplanationKind::low_resolution: return 3;
    case ExplanationKind::bad_light: return 4;
  }
  return 5;
}

std::size_t weighted_pick(Rng& rng, std::span<const double> weights) {
  double total = 0;
  for (double w : weights) total += w;
  double u = uniform01(rng) * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  for (std::size_t i = weights.size(); i-- > 0;)
    if (weights[i] > 0) return i;
  return 0;
}

}  // namespace

RaterPanelConfig CorpusConfig::default_rater_panel() {
  RaterPanelConfig panel;
  for (int i = 0; i < kMaxRatersPerImage; ++i) {
    RaterProfile p;
    char id[8];
    std::snprintf(id, sizeof id, "r%02d", i);
    p.id = id;
    const double acc = 0.80 + 0.01 * i;
    p.confusion.setConstant((1.0 - acc) / 3.0);
    p.confusion.diagonal().setConstant(acc);
    p.miss_rate = 0.15;
    p.false_alarm_rate = 0.03;
    panel.profiles.push_back(p);
  }
  return panel;
}

void CorpusConfig::validate() const {
  check_resolution(*this);
  for (int q = 0; q < kNumQualityClasses; ++q)
    if (counts[q] < 0)
      throw ConfigError("corpus.counts." + std::string(to_string(quality_from_index(q))) + " must be >= 0");
  if (!(magnitude_min > 0.0 && magnitude_min <= magnitude_max && magnitude_max <= 1.0))
    throw ConfigError("corpus.magnitude_min/magnitude_max must satisfy 0 < min <= max <= 1");
  if (!(blur_sigma_max > 0.0)) throw ConfigError("corpus.blur_sigma_max must be > 0");
  if (!(downsample_factor_max > 0.0)) throw ConfigError("corpus.downsample_factor_max must be > 0");
  if (!(min_contrast >= 0.0 && min_contrast < 0.5)) throw ConfigError("corpus.min_contrast must be in [0, 0.5)");
  for (double w : kind_weights)
    if (!(w >= 0.0)) throw ConfigError("corpus.kind_weights entries must be >= 0");
  for (double w : kinds_per_image_weights)
    if (!(w >= 0.0)) throw ConfigError("corpus.kinds_per_image_weights entries must be >= 0");
  if (counts[index_of(QualityClass::poor_quality)] > 0) {
    int usable = 0;
    for (double w : kind_weights) usable += w > 0.0;
    if (usable == 0) throw ConfigError("corpus.kind_weights must have a positive entry");
  }
  if (!raters.profiles.empty()) {
    if (raters.min_per_image < 1 || raters.max_per_image < raters.min_per_image ||
        raters.max_per_image > kMaxRatersPerImage)
      throw ConfigError("corpus.raters.min_per_image/max_per_image must satisfy 1 <= min <= max <= 12");
    if (static_cast<std::size_t>(raters.max_per_image) > raters.profiles.size())
      throw ConfigError("corpus.raters.max_per_image exceeds the number of profiles");
  }
}

int CorpusConfig::total() const {
  int n = 0;
  for (int c : counts) n += c;
  return n;
}

std::pair<ImageTensor, SceneMeta> generate_scene(std::uint64_t seed, const CorpusConfig& config) {
  check_resolution(config);
  const int res = config.resolution;
  Rng rng = make_rng(seed, "scene");
  SceneMeta meta;
  meta.background_tone = sample_skin_tone(rng);

  double factor = uniform(rng, 0.40, 0.65);
  for (;;) {
    meta.lesion_tone = {meta.background_tone[0] * factor * 1.05, meta.background_tone[1] * factor * 0.90,
                        meta.background_tone[2] * factor * 0.85};
    if (contrast(meta.background_tone, meta.lesion_tone) >= config.min_contrast || factor <= 0.05) break;
    factor -= 0.05;
  }

  meta.lesion_radius = std::max(4.0, uniform(rng, 0.10, 0.17) * res);
  meta.lesion_center = {res / 2.0 + uniform(rng, -res / 16.0, res / 16.0),
                        res / 2.0 + uniform(rng, -res / 16.0, res / 16.0)};
  Lesion lesion{meta.lesion_center[0], meta.lesion_center[1], meta.lesion_radius * uniform(rng, 0.85, 1.15),
                meta.lesion_radius * uniform(rng, 0.85, 1.15), uniform(rng, 0.0, std::numbers::pi)};
  ImageTensor img = render_skin(rng, res, meta.background_tone, &meta.lesion_tone, &lesion);
  return {std::move(img), meta};
}

ImageTensor generate_healthy_skin(std::uint64_t seed, const CorpusConfig& config) {
  check_resolution(config);
  Rng rng = make_rng(seed, "healthy");
  const Tone bg = sample_skin_tone(rng);
  return render_skin(rng, config.resolution, bg, nullptr, nullptr);
}

ImageTensor generate_non_skin(std::uint64_t seed, const CorpusConfig& config) {
  check_resolution(config);
  const int res = config.resolution;
  Rng rng = make_rng(seed, "non_skin");
  auto color = [&] { return Tone{uniform01(rng), uniform01(rng), uniform01(rng)}; };
  Tone c0 = color(), c1 = color();
  while (contrast(c0, c1) < 0.2) c1 = color();

  ImageTensor img(res, res);
  const auto kind = uniform_index(rng, 3);
  if (kind == 0) {
    const int period = 4 + static_cast<int>(uniform_index(rng, 29));
    for (int r = 0; r < res; ++r)
      for (int c = 0; c < res; ++c) {
        const Tone& t = ((r / period + c / period) % 2 == 0) ? c0 : c1;
        for (int ch = 0; ch < 3; ++ch) img.at(ch, r, c) = static_cast<float>(t[ch]);
      }
  } else if (kind == 1) {
    const double angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double dy = std::sin(angle), dx = std::cos(angle);
    for (int r = 0; r < res; ++r)
      for (int c = 0; c < res; ++c) {
        const double t = std::clamp(0.5 + ((r + 0.5) / res - 0.5) * dy + ((c + 0.5) / res - 0.5) * dx, 0.0, 1.0);
        for (int ch = 0; ch < 3; ++ch) img.at(ch, r, c) = static_cast<float>(c0[ch] + t * (c1[ch] - c0[ch]));
      }
  } else {
    const int block = 4 + static_cast<int>(uniform_index(rng, 21));
    const int nb = (res + block - 1) / block;
    std::vector<Tone> patches(static_cast<std::size_t>(nb * nb));
    for (auto& p : patches) p = color();
    for (int r = 0; r < res; ++r)
      for (int c = 0; c < res; ++c) {
        const Tone& t = patches[static_cast<std::size_t>((r / block) * nb + c / block)];
        for (int ch = 0; ch < 3; ++ch) img.at(ch, r, c) = static_cast<float>(t[ch]);
      }
  }
  for (Eigen::Index p = 0; p < img.pixels(); ++p)
    for (int ch = 0; ch < 3; ++ch) img.values(ch, p) += static_cast<float>(0.02 * gauss(rng));
  img.clamp01();
  return img;
}

ImageTensor gaussian_blur(const ImageTensor& image, double sigma) {
  const int radius = static_cast<int>(std::floor(3.0 * sigma));
  if (radius <= 0) return image;
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0;
  for (int k = -radius; k <= radius; ++k) sum += kernel[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
  for (double& k : kernel) k /= sum;

  const int h = image.height, w = image.width;
  ImageTensor tmp(h, w), out(h, w);
  for (int ch = 0; ch < 3; ++ch) {
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        double acc = 0;
        for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * image.at(ch, r, std::clamp(c + k, 0, w - 1));
        tmp.at(ch, r, c) = static_cast<float>(acc);
      }
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        double acc = 0;
        for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * tmp.at(ch, std::clamp(r + k, 0, h - 1), c);
        out.at(ch, r, c) = static_cast<float>(acc);
      }
  }
  out.clamp01();
  return out;
}

std::pair<ImageTensor, SceneMeta> apply_degradation(const ImageTensor& image, const SceneMeta& scene,
                                                    const DegradationSpec& spec, std::uint64_t seed,
                                                    const CorpusConfig& config) {
  const double m = spec.magnitude;
  if (!(m > 0.0 && m <= 1.0)) throw ArgumentError("degradation magnitude must be in (0, 1]");
  const int h = image.height, w = image.width;
  SceneMeta meta = scene;
  ImageTensor out(h, w);

  switch (spec.kind) {
    case ExplanationKind::blurry:
      out = gaussian_blur(image, m * config.blur_sigma_max);
      break;

    case ExplanationKind::bad_light:
      out.values = image.values * static_cast<float>(1.0 - 0.8 * m);
      break;

    case ExplanationKind::low_resolution: {
      const int f = static_cast<int>(std::ceil(1.0 + m * config.downsample_factor_max));
      for (int br = 0; br < h; br += f)
        for (int bc = 0; bc < w; bc += f) {
          const int r1 = std::min(h, br + f), c1 = std::min(w, bc + f);
          for (int ch = 0; ch < 3; ++ch) {
            double acc = 0;
            for (int r = br; r < r1; ++r)
              for (int c = bc; c < c1; ++c) acc += image.at(ch, r, c);
            const float mean = static_cast<float>(acc / ((r1 - br) * (c1 - bc)));
            for (int r = br; r < r1; ++r)
              for (int c = bc; c < c1; ++c) out.at(ch, r, c) = mean;
          }
        }
      break;
    }

    case ExplanationKind::bad_framing: {
      // Lesion centre is displaced from the frame centre by m * w/2 in a random direction.
      Rng rng = make_rng(seed, "bad_framing");
      const double angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      const double ty = std::clamp(h / 2.0 + m * (w / 2.0) * std::sin(angle), 0.0, h - 1.0);
      const double tx = std::clamp(w / 2.0 + m * (w / 2.0) * std::cos(angle), 0.0, w - 1.0);
      const int dr = static_cast<int>(std::lround(ty - scene.lesion_center[0]));
      const int dc = static_cast<int>(std::lround(tx - scene.lesion_center[1]));
      for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
          const int sr = r - dr, sc = c - dc;
          const bool inside = sr >= 0 && sr < h && sc >= 0 && sc < w;
          for (int ch = 0; ch < 3; ++ch)
            out.at(ch, r, c) = inside ? image.at(ch, sr, sc) : static_cast<float>(scene.background_tone[ch]);
        }
      meta.lesion_center = {scene.lesion_center[0] + dr, scene.lesion_center[1] + dc};
      break;
    }

    case ExplanationKind::too_far_away: {
      const double s = 1.0 - 0.75 * m;
      const double cy = h / 2.0, cx = w / 2.0;
      for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
          const double sy = (r + 0.5 - cy) / s + cy - 0.5, sx = (c + 0.5 - cx) / s + cx - 0.5;
          const bool inside = sy >= -0.5 && sy <= h - 0.5 && sx >= -0.5 && sx <= w - 0.5;
          for (int ch = 0; ch < 3; ++ch)
            out.at(ch, r, c) = inside ? bilinear(image, ch, sy, sx) : static_cast<float>(scene.background_tone[ch]);
        }
      meta.lesion_center = {cy + (scene.lesion_center[0] - cy) * s, cx + (scene.lesion_center[1] - cx) * s};
      meta.lesion_radius = scene.lesion_radius * s;
      break;
    }
  }
  out.clamp01();
  return {std::move(out), meta};
}

std::pair<ImageTensor, SceneMeta> apply_degradations(ImageTensor image, SceneMeta scene,
                                                     std::vector<DegradationSpec> specs, std::uint64_t seed,
                                                     const CorpusConfig& config) {
  std::stable_sort(specs.begin(), specs.end(), [](const auto& a, const auto& b) {
    return application_rank(a.kind) < application_rank(b.kind);
  });
  for (const auto& spec : specs)
    std::tie(image, scene) =
        apply_degradation(image, scene, spec, derive_seed(seed, "degrade", static_cast<std::uint64_t>(spec.kind)), config);
  return {std::move(image), scene};
}

std::vector<RaterAnnotation> simulate_raters(const FusedRecord& truth, std::span<const RaterProfile> profiles,
                                             std::uint64_t seed) {
  if (profiles.empty()) throw ArgumentError("at least one rater is required");
  if (profiles.size() > static_cast<std::size_t>(kMaxRatersPerImage))
    throw ArgumentError("at most 12 raters per image");
  for (const auto& p : profiles) {
    for (int r = 0; r < 4; ++r) {
      if ((p.confusion.row(r).array() < 0.0).any() || !p.confusion.row(r).allFinite() ||
          std::abs(p.confusion.row(r).sum() - 1.0) > 1e-9)
        throw ConfigError("rater " + p.id + ": confusion row " + std::to_string(r) + " must be a distribution");
    }
    if (!(p.miss_rate >= 0 && p.miss_rate <= 1) || !(p.false_alarm_rate >= 0 && p.false_alarm_rate <= 1))
      throw ConfigError("rater " + p.id + ": explanation noise rates must be in [0, 1]");
  }

  std::vector<RaterAnnotation> out;
  out.reserve(profiles.size());
  const int row = index_of(truth.quality);
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const auto& p = profiles[i];
    Rng rng = make_rng(seed, "rater", i);
    std::array<double, 4> w{};
    for (int c = 0; c < 4; ++c) w[c] = p.confusion(row, c);
    RaterAnnotation a{p.id, quality_from_index(static_cast<int>(weighted_pick(rng, w))), {}};
    if (a.quality == QualityClass::poor_quality) {
      for (int k = 0; k < kNumExplanations; ++k) {
        const double u = uniform01(rng);
        const bool present = truth.explanations.test(k) ? u >= p.miss_rate : u < p.false_alarm_rate;
        a.explanations.set(k, present);
      }
    }
    out.push_back(std::move(a));
  }
  return out;
}

Manifest generate_corpus(const CorpusConfig& config, std::uint64_t seed, const std::string& out_dir,
                         unsigned threads) {
  config.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "images", ec);
  if (ec) throw IoError("cannot create output directory", (fs::path(out_dir) / "images").string());

  std::vector<QualityClass> classes;
  for (int q = 0; q < kNumQualityClasses; ++q) classes.insert(classes.end(), config.counts[q], quality_from_index(q));
  Rng order = make_rng(seed, "order");
  for (std::size_t i = classes.size(); i > 1; --i) std::swap(classes[i - 1], classes[uniform_index(order, i)]);

  std::vector<CorpusRecord> records(classes.size());
  parallel_for(classes.size(), threads, [&](std::size_t i) {
    const std::uint64_t rs = derive_seed(seed, "record", i);
    CorpusRecord& rec = records[i];
    char name[32];
    std::snprintf(name, sizeof name, "images/img_%05zu.png", i);
    rec.image_path = name;
    rec.truth_quality = classes[i];

    ImageTensor img;
    switch (classes[i]) {
      case QualityClass::lesion: {
        auto [im, meta] = generate_scene(rs, config);
        img = std::move(im);
        rec.scene = meta;
        break;
      }
      case QualityClass::healthy_skin: img = generate_healthy_skin(rs, config); break;
      case QualityClass::no_skin: img = generate_non_skin(rs, config); break;
      case QualityClass::poor_quality: {
        auto [im, meta] = generate_scene(rs, config);
        Rng rng = make_rng(rs, "degradations");
        const std::size_t n_kinds = 1 + weighted_pick(rng, config.kinds_per_image_weights);
        std::array<double, kNumExplanations> w = config.kind_weights;
        std::vector<DegradationSpec> specs;
        for (std::size_t k = 0; k < n_kinds; ++k) {
          if (std::all_of(w.begin(), w.end(), [](double x) { return x <= 0.0; })) break;
          const std::size_t pick = weighted_pick(rng, w);
          w[pick] = 0.0;
          specs.push_back({explanation_from_index(static_cast<int>(pick)),
                           uniform(rng, config.magnitude_min, config.magnitude_max)});
          rec.truth_explanations.set(pick);
        }
        std::tie(img, meta) = apply_degradations(std::move(im), meta, specs, rs, config);
        rec.scene = meta;
        break;
      }
    }

    if (!config.raters.profiles.empty()) {
      Rng rng = make_rng(rs, "panel");
      const int span = config.raters.max_per_image - config.raters.min_per_image + 1;
      const int n = config.raters.min_per_image + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(span)));
      std::vector<std::size_t> idx(config.raters.profiles.size());
      for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
      for (int k = 0; k < n; ++k) std::swap(idx[k], idx[k + uniform_index(rng, idx.size() - k)]);
      std::sort(idx.begin(), idx.begin() + n);
      std::vector<RaterProfile> panel;
      for (int k = 0; k < n; ++k) panel.push_back(config.raters.profiles[idx[k]]);
      rec.annotations = simulate_raters(rec.truth(), panel, derive_seed(rs, "annotations"));
    }

    write_png(img, (fs::path(out_dir) / rec.image_path).string());
  });

  Manifest manifest{(fs::path(out_dir) / "manifest.jsonl").string(), std::move(records)};
  write_manifest(manifest.records, manifest.path);
  return manifest;
}

}  // namespace dermq
