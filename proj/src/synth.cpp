#include "altfreeze/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace altfreeze {

const char* to_string(ClipKind kind) {
  switch (kind) {
    case ClipKind::real: return "real";
    case ClipKind::tdrop: return "tdrop";
    case ClipKind::trepeat: return "trepeat";
    case ClipKind::blend: return "blend";
    case ClipKind::mixed: return "mixed";
  }
  return "unknown";
}

ClipKind parse_clip_kind(const std::string& name) {
  for (ClipKind k : {ClipKind::real, ClipKind::tdrop, ClipKind::trepeat, ClipKind::blend,
                     ClipKind::mixed}) {
    if (name == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown clip kind '" + name + "'");
}

std::size_t ClipDataset::count_label(std::uint8_t label) const {
  return static_cast<std::size_t>(std::count_if(
      records.begin(), records.end(), [&](const ClipRecord& r) { return r.label == label; }));
}

std::size_t ClipDataset::count_kind(ClipKind kind) const {
  return static_cast<std::size_t>(std::count_if(
      records.begin(), records.end(), [&](const ClipRecord& r) { return r.kind == kind; }));
}

void validate(const DatasetSpec& spec) {
  if (spec.channels == 0 || spec.frames < 2 || spec.height < 8 || spec.width < 8) {
    throw std::invalid_argument("dataset clips need C>=1, T>=2 and frames of at least 8x8");
  }
  const KindMix& m = spec.train_mix;
  if (m.tdrop < 0 || m.trepeat < 0 || m.blend < 0 || m.mixed < 0 ||
      m.tdrop + m.trepeat + m.blend + m.mixed <= 0) {
    throw std::invalid_argument("fake kind mix needs non-negative weights with a positive sum");
  }
  if (spec.train.fake > 0 && spec.train.real < 2) {
    throw std::invalid_argument("training fakes need at least two real clips");
  }
  if (spec.probe.fake > 0 && spec.probe.real < 2) {
    throw std::invalid_argument("probe fakes need at least two real clips");
  }
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream for fake-generation step `index` of a named stage.
Rng stage_rng(std::uint64_t base_seed, std::uint64_t stage, std::uint64_t index) {
  return Rng(splitmix64(splitmix64(splitmix64(base_seed) ^ stage) ^ index));
}

enum Stage : std::uint64_t {
  kTrainFakes = 11,
  kValFakes = 12,
  kTemporalProbe = 13,
  kSpatialProbe = 14,
};

}  // namespace

std::uint64_t real_clip_seed(std::uint64_t base_seed, Split split, std::uint64_t index) {
  if (index >= (1ULL << 32)) throw std::out_of_range("real clip index exceeds 2^32");
  return ((base_seed & 0xffffffULL) << 36) | (static_cast<std::uint64_t>(split) << 32) | index;
}

Clip gen_real_clip(std::uint64_t seed, std::size_t channels, std::size_t frames,
                   std::size_t height, std::size_t width) {
  Rng rng(splitmix64(seed));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  const double scale = static_cast<double>(std::min(height, width)) / 32.0;
  const double pi = std::numbers::pi;

  struct Grating {
    double fy, fx, phase, amp;
  };
  const auto grating = [&](double fmin, double fmax, double amin, double amax) {
    const double f = uni(fmin, fmax) / scale;
    const double theta = uni(0.0, pi);
    return Grating{f * std::sin(theta), f * std::cos(theta), uni(0.0, 2 * pi), uni(amin, amax)};
  };

  std::vector<double> bg_color(channels), obj_color(channels), tint(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    bg_color[c] = uni(0.25, 0.75);
    obj_color[c] = uni(0.3, 0.8);
    tint[c] = uni(0.6, 1.0);
  }
  const Grating bg1 = grating(0.3, 0.7, 0.06, 0.12);
  const Grating bg2 = grating(0.3, 0.7, 0.06, 0.12);
  const Grating obj_tex = grating(0.4, 0.8, 0.05, 0.10);
  const double pan_y = uni(-1.2, 1.2) * scale;
  const double pan_x = uni(-1.2, 1.2) * scale;

  const double h = static_cast<double>(height);
  const double w = static_cast<double>(width);
  const double ry = h * uni(0.22, 0.32);
  const double rx = w * uni(0.22, 0.32);
  const double cy0 = h * uni(0.4, 0.6);
  const double cx0 = w * uni(0.4, 0.6);
  const double heading = uni(0.0, 2 * pi);
  const double speed = uni(1.2, 2.0) * scale;
  const double wobble_amp = uni(0.0, 0.5) * scale;
  const double wobble_freq = uni(0.3, 0.8);
  const double wobble_phase = uni(0.0, 2 * pi);
  const double light_period = uni(12.0, 30.0);
  const double light_phase = uni(0.0, 2 * pi);
  const double light_amp = uni(0.03, 0.08);
  const double edge = 1.0 * scale;

  Clip clip(channels, frames, height, width);
  for (std::size_t t = 0; t < frames; ++t) {
    const double tt = static_cast<double>(t);
    const double wob = wobble_amp * std::sin(wobble_freq * tt + wobble_phase);
    const double cy = cy0 + speed * std::sin(heading) * tt + wob * std::cos(heading);
    const double cx = cx0 + speed * std::cos(heading) * tt - wob * std::sin(heading);
    const double light = 1.0 + light_amp * std::sin(2 * pi * tt / light_period + light_phase);
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) {
        const double py = static_cast<double>(y) + 0.5;
        const double px = static_cast<double>(x) + 0.5;
        const double by = py + pan_y * tt;
        const double bx = px + pan_x * tt;
        const double bg_tex =
            bg1.amp * std::sin(bg1.fy * by + bg1.fx * bx + bg1.phase) +
            bg2.amp * std::sin(bg2.fy * by + bg2.fx * bx + bg2.phase);

        // Object-local coordinates, normalized by the radii.
        const double oy = (py - cy) / ry;
        const double ox = (px - cx) / rx;
        const double r = std::sqrt(oy * oy + ox * ox);
        const double alpha = std::clamp((1.0 - r) * std::min(rx, ry) / edge + 0.5, 0.0, 1.0);
        const double tex = obj_tex.amp * std::sin(obj_tex.fy * (py - cy) +
                                                  obj_tex.fx * (px - cx) + obj_tex.phase);
        double spots = 0.0;
        for (double side : {-1.0, 1.0}) {
          const double dy = oy + 0.2;
          const double dx = ox - side * 0.38;
          spots += 0.25 * std::exp(-(dy * dy + dx * dx) / (2 * 0.12 * 0.12));
        }
        for (std::size_t c = 0; c < channels; ++c) {
          const double background = bg_color[c] + bg_tex * tint[c];
          const double object = obj_color[c] * (1.0 - spots) + tex;
          const double v = light * (alpha * object + (1.0 - alpha) * background);
          clip.at(c, t, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }
  }
  return clip;
}

std::vector<double> frame_deltas(const Clip& clip) {
  std::vector<double> out;
  const std::size_t n = clip.channels() * clip.plane_size();
  for (std::size_t t = 0; t + 1 < clip.frames(); ++t) {
    double acc = 0;
    for (std::size_t c = 0; c < clip.channels(); ++c) {
      const auto a = clip.plane(c, t);
      const auto b = clip.plane(c, t + 1);
      for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(b[i] - a[i]);
    }
    out.push_back(acc / static_cast<double>(n));
  }
  return out;
}

namespace {

struct Reals {
  std::vector<Clip> clips;
  std::vector<std::uint64_t> seeds;
};

Reals make_reals(const DatasetSpec& spec, Split split, std::size_t count) {
  Reals r;
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t seed = real_clip_seed(spec.seed, split, i);
    r.seeds.push_back(seed);
    r.clips.push_back(gen_real_clip(seed, spec.channels, spec.frames, spec.height, spec.width));
  }
  return r;
}

void append_reals(ClipDataset& out, const Reals& reals) {
  for (std::size_t i = 0; i < reals.clips.size(); ++i) {
    out.records.push_back(ClipRecord{static_cast<std::uint32_t>(out.records.size()), 0,
                                     ClipKind::real, reals.clips[i], reals.seeds[i]});
  }
}

constexpr int kSpatialDraws = 64;

double mean_motion(const Clip& clip) {
  const std::vector<double> d = frame_deltas(clip);
  double s = 0;
  for (double v : d) s += v;
  return s / static_cast<double>(d.size());
}

std::size_t other_index(std::size_t i, std::size_t n, Rng& rng) {
  const std::size_t k = std::uniform_int_distribution<std::size_t>(1, n - 1)(rng);
  return (i + k) % n;
}

ClipKind draw_kind(const KindMix& mix, Rng& rng) {
  std::discrete_distribution<int> d({mix.tdrop, mix.trepeat, mix.blend, mix.mixed});
  static constexpr ClipKind kKinds[] = {ClipKind::tdrop, ClipKind::trepeat, ClipKind::blend,
                                        ClipKind::mixed};
  return kKinds[d(rng)];
}

Clip make_kind(ClipKind kind, const Clip& real, const Clip& partner, Rng& rng,
               const FakeOptions& options) {
  switch (kind) {
    case ClipKind::tdrop: return make_fake(real, partner, FakeKind::tdrop, rng, options);
    case ClipKind::trepeat: return make_fake(real, partner, FakeKind::trepeat, rng, options);
    case ClipKind::blend: return make_fake(real, partner, FakeKind::blend, rng, options);
    case ClipKind::mixed: {
      const Clip blended = make_fake(real, partner, FakeKind::blend, rng, options);
      const bool drop = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < 0.5;
      return make_fake(blended, partner, drop ? FakeKind::tdrop : FakeKind::trepeat, rng,
                       options);
    }
    case ClipKind::real: break;
  }
  throw std::invalid_argument("cannot synthesize a fake of kind real");
}

ClipDataset mixed_split(const DatasetSpec& spec, Split split, SplitCounts counts,
                        std::uint64_t stage) {
  validate(spec);
  const Reals reals = make_reals(spec, split, counts.real);
  ClipDataset out;
  append_reals(out, reals);
  for (std::size_t i = 0; i < counts.fake; ++i) {
    Rng rng = stage_rng(spec.seed, stage, i);
    const std::size_t src = i % counts.real;
    const std::size_t partner = other_index(src, counts.real, rng);
    const ClipKind kind = draw_kind(spec.train_mix, rng);
    out.records.push_back(ClipRecord{static_cast<std::uint32_t>(out.records.size()), 1, kind,
                                     make_kind(kind, reals.clips[src], reals.clips[partner], rng,
                                               spec.train_fake),
                                     reals.seeds[src]});
  }
  return out;
}

}  // namespace

ClipDataset build_training_set(const DatasetSpec& spec) {
  return mixed_split(spec, Split::train, spec.train, kTrainFakes);
}

ClipDataset build_validation_set(const DatasetSpec& spec) {
  return mixed_split(spec, Split::val, spec.val, kValFakes);
}

ClipDataset build_temporal_set(const DatasetSpec& spec) {
  validate(spec);
  const Reals reals = make_reals(spec, Split::test, spec.probe.real);
  ClipDataset out;
  append_reals(out, reals);
  for (std::size_t i = 0; i < spec.probe.fake; ++i) {
    Rng rng = stage_rng(spec.seed, kTemporalProbe, i);
    const std::size_t src = i % spec.probe.real;
    const bool drop = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < 0.5;
    const auto indices = random_frame_indices(spec.frames, spec.probe_fake, rng);
    Clip fake = drop ? temporal_dropout(reals.clips[src], indices)
                     : temporal_repeat(reals.clips[src], indices);
    out.records.push_back(ClipRecord{static_cast<std::uint32_t>(out.records.size()), 1,
                                     drop ? ClipKind::tdrop : ClipKind::trepeat, std::move(fake),
                                     reals.seeds[src]});
  }
  return out;
}

ClipDataset build_spatial_set(const DatasetSpec& spec) {
  validate(spec);
  const Reals reals = make_reals(spec, Split::test, spec.probe.real);
  ClipDataset out;
  append_reals(out, reals);
  std::vector<double> motion;
  for (const Clip& c : reals.clips) motion.push_back(mean_motion(c));
  for (std::size_t i = 0; i < spec.probe.fake; ++i) {
    Rng rng = stage_rng(spec.seed, kSpatialProbe, i);
    const std::size_t bg = i % spec.probe.real;
    // A blend can hold both sources' moving objects and so move more than
    // either. Such a fake carries a temporal cue, so the draw is repeated
    // until its motion stays within the sources'. The least offending draw
    // is kept if none does.
    Clip best;
    double best_excess = 0;
    for (int attempt = 0; attempt < kSpatialDraws; ++attempt) {
      const std::size_t fg = other_index(bg, spec.probe.real, rng);
      const Mask mask =
          spec.probe_mask_override >= 0
              ? Mask(spec.height, spec.width, static_cast<float>(spec.probe_mask_override))
              : random_mask(spec.height, spec.width, rng, spec.probe_fake.mask);
      Clip fake = clip_blend(reals.clips[fg], reals.clips[bg], mask);
      const double excess = mean_motion(fake) - std::max(motion[fg], motion[bg]);
      if (attempt == 0 || excess < best_excess) {
        best = std::move(fake);
        best_excess = excess;
      }
      if (best_excess <= 0) break;
    }
    out.records.push_back(ClipRecord{static_cast<std::uint32_t>(out.records.size()), 1,
                                     ClipKind::blend, std::move(best), reals.seeds[bg]});
  }
  return out;
}

std::string manifest_text(const ClipDataset& dataset) {
  std::ostringstream os;
  os << "# id label kind seed\n";
  for (const ClipRecord& r : dataset.records) {
    os << r.id << ' ' << static_cast<int>(r.label) << ' ' << to_string(r.kind) << ' ' << r.seed
       << '\n';
  }
  return os.str();
}

}  // namespace altfreeze
