#include "altfreeze/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace altfreeze {

namespace {

void check_indices(std::span<const std::size_t> indices, std::size_t frames, const char* op) {
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= frames) {
      throw std::out_of_range(std::string(op) + ": frame index " + std::to_string(indices[i]) +
                              " outside clip of length " + std::to_string(frames));
    }
    if (i > 0 && indices[i] <= indices[i - 1]) {
      throw std::invalid_argument(std::string(op) + ": frame indices must be strictly increasing");
    }
  }
}

// Builds a clip whose frame t is source frame order[t], or zeros when
// order[t] == npos.
Clip gather_frames(const Clip& clip, const std::vector<std::size_t>& order) {
  Clip out(clip.channels(), clip.frames(), clip.height(), clip.width());
  for (std::size_t c = 0; c < clip.channels(); ++c)
    for (std::size_t t = 0; t < order.size(); ++t) {
      if (order[t] == static_cast<std::size_t>(-1)) continue;
      const auto src = clip.plane(c, order[t]);
      std::copy(src.begin(), src.end(), out.plane(c, t).begin());
    }
  return out;
}

}  // namespace

Clip temporal_dropout(const Clip& clip, std::span<const std::size_t> drop_indices) {
  check_indices(drop_indices, clip.frames(), "temporal_dropout");
  if (drop_indices.size() == clip.frames()) {
    throw std::invalid_argument("temporal_dropout: cannot drop every frame");
  }
  std::vector<std::size_t> order;
  std::size_t next = 0;
  for (std::size_t t = 0; t < clip.frames(); ++t) {
    if (next < drop_indices.size() && drop_indices[next] == t) {
      ++next;
      continue;
    }
    order.push_back(t);
  }
  order.resize(clip.frames(), static_cast<std::size_t>(-1));
  return gather_frames(clip, order);
}

Clip temporal_repeat(const Clip& clip, std::span<const std::size_t> repeat_indices) {
  check_indices(repeat_indices, clip.frames(), "temporal_repeat");
  std::vector<std::size_t> order;
  std::size_t next = 0;
  for (std::size_t t = 0; t < clip.frames() && order.size() < clip.frames(); ++t) {
    order.push_back(t);
    if (next < repeat_indices.size() && repeat_indices[next] == t) {
      ++next;
      order.push_back(t);
    }
  }
  order.resize(clip.frames());
  return gather_frames(clip, order);
}

Clip clip_blend(const Clip& fg, const Clip& bg, const Mask& mask) {
  if (fg.tensor().shape() != bg.tensor().shape()) {
    throw std::invalid_argument("clip_blend: foreground " + to_string(fg.tensor().shape()) +
                                " and background " + to_string(bg.tensor().shape()) +
                                " differ");
  }
  if (mask.height() != fg.height() || mask.width() != fg.width()) {
    throw std::invalid_argument("clip_blend: mask " + to_string(mask.tensor().shape()) +
                                " does not match frame size");
  }
  Clip out(fg.channels(), fg.frames(), fg.height(), fg.width());
  const auto m = mask.tensor().values();
  for (std::size_t c = 0; c < fg.channels(); ++c)
    for (std::size_t t = 0; t < fg.frames(); ++t) {
      const auto f = fg.plane(c, t);
      const auto b = bg.plane(c, t);
      auto o = out.plane(c, t);
      for (std::size_t i = 0; i < o.size(); ++i) o[i] = f[i] * m[i] + b[i] * (1.0f - m[i]);
    }
  out.clamp_unit();
  return out;
}

void gaussian_blur_plane(std::span<float> plane, std::size_t height, std::size_t width,
                         double sigma) {
  if (sigma <= 0) return;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double norm = 0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    norm += kernel[i + radius];
  }
  for (double& k : kernel) k /= norm;

  const int h = static_cast<int>(height);
  const int w = static_cast<int>(width);
  std::vector<float> tmp(plane.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[i + radius] * plane[y * w + std::clamp(x + i, 0, w - 1)];
      tmp[y * w + x] = static_cast<float>(acc);
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[i + radius] * tmp[std::clamp(y + i, 0, h - 1) * w + x];
      plane[y * w + x] = static_cast<float>(acc);
    }
}

namespace {

void fill_ellipse(Mask& mask, Rng& rng) {
  const double h = static_cast<double>(mask.height());
  const double w = static_cast<double>(mask.width());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double cy = h * (0.3 + 0.4 * u(rng));
  const double cx = w * (0.3 + 0.4 * u(rng));
  const double ry = h * (0.18 + 0.25 * u(rng));
  const double rx = w * (0.18 + 0.25 * u(rng));
  const double angle = std::numbers::pi * u(rng);
  const double ca = std::cos(angle);
  const double sa = std::sin(angle);
  for (std::size_t y = 0; y < mask.height(); ++y)
    for (std::size_t x = 0; x < mask.width(); ++x) {
      const double dy = y + 0.5 - cy;
      const double dx = x + 0.5 - cx;
      const double u1 = (dx * ca + dy * sa) / rx;
      const double v1 = (-dx * sa + dy * ca) / ry;
      mask.at(y, x) = u1 * u1 + v1 * v1 <= 1.0 ? 1.0f : 0.0f;
    }
}

// Star-shaped polygon: vertices at sorted random angles with random radii.
void fill_polygon(Mask& mask, Rng& rng) {
  const double h = static_cast<double>(mask.height());
  const double w = static_cast<double>(mask.width());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int vertices = 5 + static_cast<int>(u(rng) * 4);
  const double cy = h * (0.35 + 0.3 * u(rng));
  const double cx = w * (0.35 + 0.3 * u(rng));
  std::vector<double> angles(vertices);
  for (double& a : angles) a = 2.0 * std::numbers::pi * u(rng);
  std::sort(angles.begin(), angles.end());
  std::vector<double> py(vertices), px(vertices);
  for (int i = 0; i < vertices; ++i) {
    const double r = 0.2 + 0.25 * u(rng);
    py[i] = cy + h * r * std::sin(angles[i]);
    px[i] = cx + w * r * std::cos(angles[i]);
  }
  for (std::size_t y = 0; y < mask.height(); ++y)
    for (std::size_t x = 0; x < mask.width(); ++x) {
      const double qy = y + 0.5;
      const double qx = x + 0.5;
      bool inside = false;
      for (int i = 0, j = vertices - 1; i < vertices; j = i++) {
        if ((py[i] > qy) != (py[j] > qy) &&
            qx < (px[j] - px[i]) * (qy - py[i]) / (py[j] - py[i]) + px[i]) {
          inside = !inside;
        }
      }
      mask.at(y, x) = inside ? 1.0f : 0.0f;
    }
}

}  // namespace

Mask random_mask(std::size_t height, std::size_t width, Rng& rng, const MaskOptions& options) {
  if (height < 8 || width < 8) {
    throw std::invalid_argument("random_mask: frames must be at least 8x8");
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Mask mask(height, width);
  // Rejection sampling on coverage; the shapes above land in range almost
  // always, the cap only bounds pathological option ranges.
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const bool ellipse = options.shape == MaskShape::ellipse ||
                         (options.shape == MaskShape::any && u(rng) < 0.5);
    if (ellipse) {
      fill_ellipse(mask, rng);
    } else {
      fill_polygon(mask, rng);
    }
    const double sigma = options.min_sigma + (options.max_sigma - options.min_sigma) * u(rng);
    gaussian_blur_plane(mask.tensor().values(), height, width, sigma);
    for (float& v : mask.tensor().values()) v = std::clamp(v, 0.0f, 1.0f);
    const double cov = mask.coverage();
    if (cov >= options.min_coverage && cov <= options.max_coverage) return mask;
  }
  throw std::runtime_error("random_mask: could not reach the requested coverage range");
}

Clip horizontal_flip(const Clip& clip) {
  Clip out = clip;
  const std::size_t w = clip.width();
  for (std::size_t c = 0; c < clip.channels(); ++c)
    for (std::size_t t = 0; t < clip.frames(); ++t)
      for (std::size_t y = 0; y < clip.height(); ++y)
        for (std::size_t x = 0; x < w; ++x) out.at(c, t, y, x) = clip.at(c, t, y, w - 1 - x);
  return out;
}

Clip cutout(const Clip& clip, std::size_t y, std::size_t x, std::size_t h, std::size_t w) {
  Clip out = clip;
  const std::size_t y1 = std::min(clip.height(), y + h);
  const std::size_t x1 = std::min(clip.width(), x + w);
  for (std::size_t c = 0; c < clip.channels(); ++c)
    for (std::size_t t = 0; t < clip.frames(); ++t)
      for (std::size_t yy = y; yy < y1; ++yy)
        for (std::size_t xx = x; xx < x1; ++xx) out.at(c, t, yy, xx) = 0.0f;
  return out;
}

Clip add_gaussian_noise(const Clip& clip, double sigma, Rng& rng) {
  Clip out = clip;
  if (sigma <= 0) return out;
  std::normal_distribution<double> n(0.0, sigma);
  for (float& v : out.tensor().values()) v = static_cast<float>(v + n(rng));
  out.clamp_unit();
  return out;
}

Clip standard_augs(const Clip& clip, Rng& rng, const AugmentToggles& toggles) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Clip out = clip;
  // Draw every variate regardless of toggles so one toggle does not shift
  // the random stream of the others.
  const bool flip = u(rng) < 0.5;
  const std::size_t ch = std::max<std::size_t>(1, clip.height() / 4 +
                                                       static_cast<std::size_t>(u(rng) * clip.height() / 4));
  const std::size_t cw = std::max<std::size_t>(1, clip.width() / 4 +
                                                       static_cast<std::size_t>(u(rng) * clip.width() / 4));
  const auto cy = static_cast<std::size_t>(u(rng) * static_cast<double>(clip.height() - ch + 1));
  const auto cx = static_cast<std::size_t>(u(rng) * static_cast<double>(clip.width() - cw + 1));
  const double sigma = 0.05 * u(rng);
  if (toggles.flip && flip) out = horizontal_flip(out);
  if (toggles.cutout) out = cutout(out, cy, cx, ch, cw);
  if (toggles.noise) out = add_gaussian_noise(out, sigma, rng);
  return out;
}

PerturbKind parse_perturb_kind(const std::string& name) {
  if (name == "blur") return PerturbKind::blur;
  if (name == "block") return PerturbKind::block;
  if (name == "contrast") return PerturbKind::contrast;
  throw std::invalid_argument("unknown perturbation kind '" + name + "'");
}

const char* to_string(PerturbKind kind) {
  switch (kind) {
    case PerturbKind::blur: return "blur";
    case PerturbKind::block: return "block";
    case PerturbKind::contrast: return "contrast";
  }
  return "unknown";
}

namespace {

void check_level(int level) {
  if (level < 0 || level > kMaxPerturbLevel) {
    throw std::out_of_range("perturbation level " + std::to_string(level) + " outside 0..5");
  }
}

}  // namespace

double blur_sigma_for_level(int level) {
  static constexpr double kSigma[] = {0.0, 0.5, 0.8, 1.2, 1.6, 2.2};
  check_level(level);
  return kSigma[level];
}

std::size_t block_count_for_level(int level) {
  static constexpr std::size_t kCount[] = {0, 1, 2, 3, 5, 8};
  check_level(level);
  return kCount[level];
}

std::size_t block_size_for_level(int level, std::size_t height, std::size_t width) {
  // Edge length in pixels at 32x32, scaled with the shorter frame side.
  static constexpr double kSize[] = {0.0, 2.0, 3.0, 4.0, 5.0, 6.0};
  check_level(level);
  const double scale = static_cast<double>(std::min(height, width)) / 32.0;
  if (level == 0) return 0;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(kSize[level] * scale)));
}

double contrast_factor_for_level(int level) {
  static constexpr double kFactor[] = {1.0, 0.85, 0.7, 0.55, 0.4, 0.25};
  check_level(level);
  return kFactor[level];
}

Clip change_contrast(const Clip& clip, double factor) {
  Clip out = clip;
  if (factor == 1.0) return out;
  for (float& v : out.tensor().values()) v = static_cast<float>(0.5 + factor * (v - 0.5));
  out.clamp_unit();
  return out;
}

Clip perturb(const Clip& clip, PerturbKind kind, int level, Rng& rng) {
  check_level(level);
  if (level == 0) return clip;
  switch (kind) {
    case PerturbKind::blur: {
      Clip out = clip;
      const double sigma = blur_sigma_for_level(level);
      for (std::size_t c = 0; c < clip.channels(); ++c)
        for (std::size_t t = 0; t < clip.frames(); ++t)
          gaussian_blur_plane(out.plane(c, t), clip.height(), clip.width(), sigma);
      out.clamp_unit();
      return out;
    }
    case PerturbKind::block: {
      Clip out = clip;
      const std::size_t count = block_count_for_level(level);
      const std::size_t size =
          std::min({block_size_for_level(level, clip.height(), clip.width()), clip.height(),
                    clip.width()});
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (std::size_t t = 0; t < clip.frames(); ++t)
        for (std::size_t b = 0; b < count; ++b) {
          const auto y0 = static_cast<std::size_t>(u(rng) * static_cast<double>(clip.height() - size + 1));
          const auto x0 = static_cast<std::size_t>(u(rng) * static_cast<double>(clip.width() - size + 1));
          const auto gray = static_cast<float>(u(rng));
          for (std::size_t c = 0; c < clip.channels(); ++c)
            for (std::size_t y = y0; y < y0 + size; ++y)
              for (std::size_t x = x0; x < x0 + size; ++x) out.at(c, t, y, x) = gray;
        }
      return out;
    }
    case PerturbKind::contrast:
      return change_contrast(clip, contrast_factor_for_level(level));
  }
  throw std::invalid_argument("unknown perturbation kind");
}

std::vector<std::size_t> random_frame_indices(std::size_t frames, const FakeOptions& options,
                                              Rng& rng) {
  const std::size_t cap = options.max_frames ? options.max_frames : (frames + 3) / 4;
  const std::size_t hi = std::clamp<std::size_t>(cap, 1, frames - (frames > 1 ? 1 : 0));
  const std::size_t lo = std::clamp<std::size_t>(options.min_frames, 1, hi);
  const std::size_t count = std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  // The final frame is never picked: repeating it only duplicates into the
  // truncated overflow, which would leave the clip unchanged.
  std::vector<std::size_t> all(frames > 1 ? frames - 1 : frames);
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  std::vector<std::size_t> picked;
  std::sample(all.begin(), all.end(), std::back_inserter(picked), count, rng);
  std::sort(picked.begin(), picked.end());
  return picked;
}

Clip shifted_copy(const Clip& clip, int dy, int dx, float gain) {
  Clip out(clip.channels(), clip.frames(), clip.height(), clip.width());
  const int h = static_cast<int>(clip.height());
  const int w = static_cast<int>(clip.width());
  for (std::size_t c = 0; c < clip.channels(); ++c)
    for (std::size_t t = 0; t < clip.frames(); ++t)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const auto sy = static_cast<std::size_t>(std::clamp(y - dy, 0, h - 1));
          const auto sx = static_cast<std::size_t>(std::clamp(x - dx, 0, w - 1));
          out.at(c, t, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
              gain * clip.at(c, t, sy, sx);
        }
  out.clamp_unit();
  return out;
}

Clip make_fake(const Clip& real, const Clip& partner, FakeKind kind, Rng& rng,
               const FakeOptions& options) {
  switch (kind) {
    case FakeKind::tdrop:
      return temporal_dropout(real, random_frame_indices(real.frames(), options, rng));
    case FakeKind::trepeat:
      return temporal_repeat(real, random_frame_indices(real.frames(), options, rng));
    case FakeKind::blend: {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      const bool same_video = u(rng) < options.same_video_prob;
      const Mask mask = random_mask(real.height(), real.width(), rng, options.mask);
      if (same_video) {
        const int span = static_cast<int>(std::max<std::size_t>(2, real.width() / 8));
        std::uniform_int_distribution<int> shift(2, span);
        const int dy = shift(rng) * (u(rng) < 0.5 ? -1 : 1);
        const int dx = shift(rng) * (u(rng) < 0.5 ? -1 : 1);
        const auto gain = static_cast<float>(0.85 + 0.3 * u(rng));
        return clip_blend(shifted_copy(real, dy, dx, gain), real, mask);
      }
      return clip_blend(partner, real, mask);
    }
  }
  throw std::invalid_argument("unknown fake kind");
}

}  // namespace altfreeze
