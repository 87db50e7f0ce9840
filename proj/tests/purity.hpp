#pragma once

#include <cmath>
#include <map>
#include <optional>

#include "altfreeze/synth.hpp"

namespace testing {

struct PurityReport {
  std::size_t fakes = 0;
  std::size_t violations = 0;
  // Spatial set only: fakes whose mean frame difference exceeds the larger
  // of its two sources' means by more than 1e-6.
  std::size_t mean_bound_violations = 0;
};

inline const altfreeze::ClipRecord* real_with_seed(const altfreeze::ClipDataset& d, std::uint64_t seed) {
  for (const auto& r : d.records)
    if (r.label == 0 && r.seed == seed) return &r;
  return nullptr;
}

inline bool frames_equal(const altfreeze::Clip& a, std::size_t ta, const altfreeze::Clip& b, std::size_t tb) {
  for (std::size_t c = 0; c < a.channels(); ++c) {
    const auto pa = a.plane(c, ta), pb = b.plane(c, tb);
    if (!std::equal(pa.begin(), pa.end(), pb.begin())) return false;
  }
  return true;
}

/// Every frame of every fake is all-zero or bitwise equal to a frame of its
/// source real, and no fake equals its source.
inline PurityReport check_temporal_set(const altfreeze::ClipDataset& d) {
  PurityReport out;
  for (const auto& r : d.records) {
    if (r.label == 0) continue;
    ++out.fakes;
    const auto* src = real_with_seed(d, r.seed);
    bool ok = src != nullptr && !(src->clip == r.clip);
    for (std::size_t t = 0; ok && t < r.clip.frames(); ++t) {
      bool zero = true;
      for (std::size_t c = 0; c < r.clip.channels(); ++c)
        for (float v : r.clip.plane(c, t)) zero = zero && v == 0.0f;
      bool matched = zero;
      for (std::size_t s = 0; s < src->clip.frames() && !matched; ++s) matched = frames_equal(r.clip, t, src->clip, s);
      ok = matched;
    }
    out.violations += !ok;
  }
  return out;
}

/// Mean absolute change between consecutive frames over the whole clip.
inline double mean_delta(const altfreeze::Clip& c) {
  double s = 0;
  for (std::size_t ch = 0; ch < c.channels(); ++ch)
    for (std::size_t t = 0; t + 1 < c.frames(); ++t)
      for (std::size_t y = 0; y < c.height(); ++y)
        for (std::size_t x = 0; x < c.width(); ++x) s += std::abs(c.at(ch, t + 1, y, x) - c.at(ch, t, y, x));
  return s / double(c.channels() * (c.frames() - 1) * c.height() * c.width());
}

/// Finds for each fake the foreground real that, with its background real,
/// brackets every pixel; then checks per pixel and transition that
/// |fake change| <= max(|fg change|, |bg change|), which follows from a
/// frame-constant convex blend. The mean-statistic bound, which convexity
/// alone does not give, is counted separately.
inline PurityReport check_spatial_set(const altfreeze::ClipDataset& d) {
  using altfreeze::Clip;
  PurityReport out;
  constexpr float tol = 1e-6f;
  auto brackets = [&](const Clip& f, const Clip& a, const Clip& b) {
    const auto& fv = f.tensor(), &av = a.tensor(), &bv = b.tensor();
    for (std::size_t i = 0; i < fv.size(); ++i) {
      if (fv[i] < std::min(av[i], bv[i]) - tol || fv[i] > std::max(av[i], bv[i]) + tol) return false;
    }
    return true;
  };
  for (const auto& r : d.records) {
    if (r.label == 0) continue;
    ++out.fakes;
    const auto* bg = real_with_seed(d, r.seed);
    const altfreeze::ClipRecord* fg = nullptr;
    for (const auto& cand : d.records) {
      if (cand.label == 0 && &cand != bg && bg && brackets(r.clip, cand.clip, bg->clip)) {
        fg = &cand;
        break;
      }
    }
    if (!fg) {
      ++out.violations;
      continue;
    }
    const Clip& f = r.clip;
    const Clip& a = fg->clip;
    const Clip& b = bg->clip;
    bool ok = true;
    for (std::size_t c = 0; c < f.channels(); ++c)
      for (std::size_t t = 0; t + 1 < f.frames(); ++t)
        for (std::size_t y = 0; y < f.height(); ++y)
          for (std::size_t x = 0; x < f.width(); ++x) {
            const float df = std::abs(f.at(c, t + 1, y, x) - f.at(c, t, y, x));
            const float da = std::abs(a.at(c, t + 1, y, x) - a.at(c, t, y, x));
            const float db = std::abs(b.at(c, t + 1, y, x) - b.at(c, t, y, x));
            ok = ok && df <= std::max(da, db) + 2 * tol;
          }
    out.violations += !ok;
    out.mean_bound_violations += mean_delta(f) > std::max(mean_delta(a), mean_delta(b)) + 1e-6;
  }
  return out;
}

}  // namespace testing
