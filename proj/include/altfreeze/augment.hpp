#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "altfreeze/clip.hpp"

namespace altfreeze {

using Rng = std::mt19937_64;

/// Drops the listed frames (strictly increasing), shifts the survivors
/// forward and zero-fills the tail. Length is unchanged.
Clip temporal_dropout(const Clip& clip, std::span<const std::size_t> drop_indices);

/// Duplicates each listed frame (strictly increasing) in place, shifting
/// later frames back and truncating the overflow. Length is unchanged.
Clip temporal_repeat(const Clip& clip, std::span<const std::size_t> repeat_indices);

/// Per-frame convex blend V = fg * M + bg * (1 - M) under one mask for all
/// frames.
Clip clip_blend(const Clip& fg, const Clip& bg, const Mask& mask);

enum class MaskShape { ellipse, polygon, any };

struct MaskOptions {
  MaskShape shape = MaskShape::any;
  // Gaussian softening of the boundary, sigma drawn uniformly from this range.
  double min_sigma = 0.5;
  double max_sigma = 1.5;
  // Accepted fraction of pixels above 0.5.
  double min_coverage = 0.10;
  double max_coverage = 0.60;
};

/// Filled ellipse or polygon with a blurred boundary. Requires H, W >= 8.
Mask random_mask(std::size_t height, std::size_t width, Rng& rng, const MaskOptions& options = {});

/// Separable Gaussian blur of one H*W plane with edge clamping.
void gaussian_blur_plane(std::span<float> plane, std::size_t height, std::size_t width,
                         double sigma);

Clip horizontal_flip(const Clip& clip);
/// Zeroes rows [y, y+h) x cols [x, x+w) in every frame and channel.
Clip cutout(const Clip& clip, std::size_t y, std::size_t x, std::size_t h, std::size_t w);
Clip add_gaussian_noise(const Clip& clip, double sigma, Rng& rng);

struct AugmentToggles {
  bool flip = true;
  bool cutout = true;
  bool noise = true;
};

/// Label-preserving augmentations: flip with p=0.5, one cutout rectangle
/// shared by all frames, noise with sigma ~ U[0, 0.05].
Clip standard_augs(const Clip& clip, Rng& rng, const AugmentToggles& toggles = {});

enum class PerturbKind { blur, block, contrast };

PerturbKind parse_perturb_kind(const std::string& name);
const char* to_string(PerturbKind kind);

inline constexpr int kMaxPerturbLevel = 5;

/// Severity tables indexed by level 0..5; level 0 is the identity.
double blur_sigma_for_level(int level);
std::size_t block_count_for_level(int level);
std::size_t block_size_for_level(int level, std::size_t height, std::size_t width);
double contrast_factor_for_level(int level);

/// Scales every value about 0.5 by `factor`, then clamps.
Clip change_contrast(const Clip& clip, double factor);

Clip perturb(const Clip& clip, PerturbKind kind, int level, Rng& rng);

/// Kinds of synthetic fake produced from real clips.
enum class FakeKind : std::uint8_t { tdrop = 1, trepeat = 2, blend = 3 };

struct FakeOptions {
  // Dropped or repeated frame count is uniform in [min_frames, max_frames];
  // max_frames == 0 means ceil(L/4).
  std::size_t min_frames = 1;
  std::size_t max_frames = 0;
  MaskOptions mask;
  // Probability that the blend foreground comes from the same clip
  // (spatially shifted) instead of the partner clip.
  double same_video_prob = 0.5;
};

/// Random strictly increasing frame indices below frames - 1 for a temporal
/// fake.
std::vector<std::size_t> random_frame_indices(std::size_t frames, const FakeOptions& options,
                                              Rng& rng);

/// Same clip translated by (dy, dx) with edge clamping and scaled by `gain`.
Clip shifted_copy(const Clip& clip, int dy, int dx, float gain);

/// One fake generated from `real`. `partner` is the foreground candidate when
/// the blend draws from a second video.
Clip make_fake(const Clip& real, const Clip& partner, FakeKind kind, Rng& rng,
               const FakeOptions& options = {});

}  // namespace altfreeze
