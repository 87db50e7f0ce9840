#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "altfreeze/augment.hpp"
#include "altfreeze/clip.hpp"

namespace altfreeze {

/// Record kinds of the dataset file. `mixed` carries a blend and a temporal
/// edit at once, like a frame-by-frame face swap.
enum class ClipKind : std::uint8_t { real = 0, tdrop = 1, trepeat = 2, blend = 3, mixed = 4 };

const char* to_string(ClipKind kind);
ClipKind parse_clip_kind(const std::string& name);

struct ClipRecord {
  std::uint32_t id = 0;
  std::uint8_t label = 0;  // 0 real, 1 fake
  ClipKind kind = ClipKind::real;
  Clip clip;
  // Generator seed of the (first) source real clip. Manifest only; not part
  // of the binary record.
  std::uint64_t seed = 0;
};

struct ClipDataset {
  std::vector<ClipRecord> records;

  std::size_t size() const { return records.size(); }
  std::size_t count_label(std::uint8_t label) const;
  std::size_t count_kind(ClipKind kind) const;
};

struct SplitCounts {
  std::size_t real = 0;
  std::size_t fake = 0;
};

/// Relative weights of fake kinds in the training set.
struct KindMix {
  double tdrop = 0.0;
  double trepeat = 0.0;
  double blend = 0.0;
  double mixed = 1.0;
};

struct DatasetSpec {
  std::size_t channels = 3;
  std::size_t frames = 8;
  std::size_t height = 32;
  std::size_t width = 32;
  std::uint64_t seed = 0;

  SplitCounts train{192, 192};
  SplitCounts val{32, 32};
  // Each probe set (temporal, spatial) holds probe.real reals and
  // probe.fake fakes built from them.
  SplitCounts probe{64, 64};

  KindMix train_mix;
  // Training fakes and probes use disjoint artifact parameter ranges.
  FakeOptions train_fake{1, 0, MaskOptions{MaskShape::ellipse, 0.3, 0.9, 0.10, 0.60}, 0.0};
  FakeOptions probe_fake{1, 0, MaskOptions{MaskShape::polygon, 1.0, 1.8, 0.10, 0.60}, 0.0};
  // When >= 0, spatial-set blends use a constant mask of this value.
  double probe_mask_override = -1.0;
};

/// Throws std::invalid_argument for unusable specs.
void validate(const DatasetSpec& spec);

/// Dataset splits whose real-clip seeds live in disjoint integer ranges.
enum class Split : std::uint64_t { train = 1, val = 2, test = 3 };

/// Seed of real clip `index` in `split`: ranges never overlap across splits.
std::uint64_t real_clip_seed(std::uint64_t base_seed, Split split, std::uint64_t index);

/// Largest mean |frame[t+1] - frame[t]| produced by gen_real_clip at 32x32.
inline constexpr double kMaxRealFrameDelta = 0.1;

/// Procedural temporally coherent clip: a textured ellipse with two dark
/// spots drifting over a panning textured background under slowly varying
/// illumination.
Clip gen_real_clip(std::uint64_t seed, std::size_t channels, std::size_t frames,
                   std::size_t height, std::size_t width);

/// Mean absolute difference between consecutive frames, per transition.
std::vector<double> frame_deltas(const Clip& clip);

/// Reals from the test split plus fakes made only by dropping or repeating
/// frames of those reals.
ClipDataset build_temporal_set(const DatasetSpec& spec);

/// Reals from the test split plus fakes that blend two of those reals under a
/// mask that is constant across frames. Each fake moves no more, on average,
/// than the busier of its two sources.
ClipDataset build_spatial_set(const DatasetSpec& spec);

/// Training reals plus fakes drawn from spec.train_mix.
ClipDataset build_training_set(const DatasetSpec& spec);

/// Validation reals plus fakes drawn from spec.train_mix.
ClipDataset build_validation_set(const DatasetSpec& spec);

/// "id label kind seed" per line.
std::string manifest_text(const ClipDataset& dataset);

}  // namespace altfreeze
