#include <doctest.h>

#include <set>

#include "altfreeze/synth.hpp"
#include "purity.hpp"

using namespace altfreeze;

namespace {

DatasetSpec small_spec(std::uint64_t seed) {
  DatasetSpec s;
  s.seed = seed;
  s.train = {12, 12};
  s.val = {4, 4};
  s.probe = {10, 10};
  return s;
}

}  // namespace

TEST_CASE("probe sets are pure") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto t = testing::check_temporal_set(build_temporal_set(small_spec(seed)));
    CHECK(t.fakes == 10);
    CHECK(t.violations == 0);
    const auto s = testing::check_spatial_set(build_spatial_set(small_spec(seed)));
    CHECK(s.fakes == 10);
    CHECK(s.violations == 0);
    CHECK(s.mean_bound_violations == 0);
  }
}

TEST_CASE("label and kind counts follow the spec") {
  const DatasetSpec spec = small_spec(1);
  const ClipDataset train = build_training_set(spec);
  CHECK(train.count_label(0) == 12);
  CHECK(train.count_label(1) == 12);
  const ClipDataset temporal = build_temporal_set(spec);
  CHECK(temporal.count_label(0) == 10);
  CHECK(temporal.count_kind(ClipKind::tdrop) + temporal.count_kind(ClipKind::trepeat) == 10);
  const ClipDataset spatial = build_spatial_set(spec);
  CHECK(spatial.count_kind(ClipKind::blend) == 10);
  const ClipDataset val = build_validation_set(spec);
  CHECK(val.size() == 8);
  for (const auto& r : train.records) {
    CHECK(r.clip.tensor().shape() == Shape{3, 8, 32, 32});
    for (float v : r.clip.tensor().values()) CHECK((v >= 0.0f && v <= 1.0f));
  }
}

TEST_CASE("training mix selects kinds") {
  DatasetSpec spec = small_spec(2);
  spec.train_mix = {1, 0, 0, 0};
  CHECK(build_training_set(spec).count_kind(ClipKind::tdrop) == 12);
  spec.train_mix = {0, 0, 1, 0};
  CHECK(build_training_set(spec).count_kind(ClipKind::blend) == 12);
}

TEST_CASE("generation is deterministic and seed dependent") {
  CHECK(build_spatial_set(small_spec(4)).records[12].clip == build_spatial_set(small_spec(4)).records[12].clip);
  CHECK_FALSE(build_training_set(small_spec(4)).records[0].clip == build_training_set(small_spec(5)).records[0].clip);
}

TEST_CASE("real clip seeds never collide across splits") {
  std::set<std::uint64_t> seen;
  for (Split s : {Split::train, Split::val, Split::test})
    for (std::uint64_t i = 0; i < 1000; ++i) CHECK(seen.insert(real_clip_seed(7, s, i)).second);
}

TEST_CASE("real clips move smoothly but do move") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Clip c = gen_real_clip(seed, 3, 8, 32, 32);
    for (double d : frame_deltas(c)) {
      CHECK(d > 0.0);
      CHECK(d <= kMaxRealFrameDelta);
    }
  }
}

TEST_CASE("mask override of one reproduces the foreground") {
  DatasetSpec spec = small_spec(3);
  spec.probe_mask_override = 1.0;
  const ClipDataset d = build_spatial_set(spec);
  for (const auto& r : d.records) {
    if (r.label == 0) continue;
    bool found = false;
    for (const auto& real : d.records) found = found || (real.label == 0 && real.clip == r.clip && real.seed != r.seed);
    CHECK(found);
  }
}

TEST_CASE("manifest lines") {
  const ClipDataset d = build_temporal_set(small_spec(0));
  const std::string m = manifest_text(d);
  CHECK(std::count(m.begin(), m.end(), '\n') == std::ptrdiff_t(d.size()) + 1);
  CHECK(m.rfind("# id label kind seed\n0 0 real ", 0) == 0);
}

TEST_CASE("invalid specs") {
  DatasetSpec s = small_spec(0);
  s.height = 4;
  CHECK_THROWS(validate(s));
  s = small_spec(0);
  s.train_mix = {0, 0, 0, 0};
  CHECK_THROWS(validate(s));
  s = small_spec(0);
  s.probe = {1, 4};
  CHECK_THROWS(validate(s));
}
