#include <doctest.h>

#include <set>

#include "altfreeze/partition.hpp"
#include "support.hpp"

using namespace altfreeze;
using testing::Gen;

namespace {

std::size_t scalars(const std::vector<NamedParam>& ps) {
  std::size_t n = 0;
  for (const auto& p : ps) n += numel(p.shape);
  return n;
}

}  // namespace

TEST_CASE("reference partition is total, disjoint and matches hand counts") {
  const Model<float> model(ModelSpec::reference());
  const Partition part = partition(model);
  // Spatial: 8*3*9 + 8*8*9 + 16*16*9. Temporal: 8*8*3 + 8*8*3 + 16*16*3.
  CHECK(scalars(part.spatial) == 216 + 576 + 2304);
  CHECK(scalars(part.temporal) == 192 + 192 + 768);
  CHECK(scalars(part.shared) == 2001);
  CHECK(part.spatial.size() == 3);
  CHECK(part.temporal.size() == 3);
  CHECK(part.shared.size() == 32);

  std::set<std::string> all, seen;
  for (const auto& p : model.named_params()) all.insert(p.name);
  for (auto g : {ParamGroup::spatial, ParamGroup::temporal, ParamGroup::shared}) {
    for (const auto& p : part.group(g)) CHECK(seen.insert(p.name).second);
  }
  CHECK(seen == all);
}

TEST_CASE("kernel shape decides the group") {
  Gen g(9);
  for (int i = 0; i < 200; ++i) {
    const std::size_t o = g.index(1, 8), c = g.index(1, 8);
    const std::size_t k = 2 * g.index(1, 3) + 1;
    CHECK(classify_param({"w", ParamKind::conv_weight, {o, c, k, 1, 1}}) == ParamGroup::temporal);
    CHECK(classify_param({"w", ParamKind::conv_weight, {o, c, 1, k, k}}) == ParamGroup::spatial);
    CHECK(classify_param({"w", ParamKind::conv_weight, {o, c, 1, 1, k}}) == ParamGroup::spatial);
    CHECK(classify_param({"w", ParamKind::conv_weight, {o, c, 1, 1, 1}}) == ParamGroup::shared);
    CHECK(classify_param({"w", ParamKind::conv_bias, {o}}) == ParamGroup::shared);
    CHECK(classify_param({"w", ParamKind::linear_weight, {o, c}}) == ParamGroup::shared);
  }
  for (auto kind : {ParamKind::bn_gamma, ParamKind::bn_beta, ParamKind::linear_bias}) {
    CHECK(classify_param({"x", kind, {4}}) == ParamGroup::shared);
  }
}

TEST_CASE("names do not influence classification") {
  CHECK(classify_param({"spatial.conv", ParamKind::conv_weight, {4, 4, 3, 1, 1}}) == ParamGroup::temporal);
  CHECK(classify_param({"conv_t", ParamKind::conv_weight, {4, 4, 1, 3, 3}}) == ParamGroup::spatial);
}

TEST_CASE("full 3D kernels need an explicit policy") {
  const NamedParam full{"block.full", ParamKind::conv_weight, {4, 4, 3, 3, 3}};
  CHECK_THROWS_AS(classify_param(full), std::invalid_argument);
  CHECK(classify_param(full, {true}) == ParamGroup::shared);
  try {
    partition({full});
    FAIL("expected a throw");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("block.full") != std::string::npos);
  }
  CHECK_THROWS(classify_param({"w", ParamKind::conv_weight, {4, 4, 3}}));
}

TEST_CASE("group_of_params follows parameter order") {
  const Model<float> model(ModelSpec::reference());
  const auto groups = group_of_params(model);
  REQUIRE(groups.size() == model.parameters().size());
  CHECK(groups[model.param_index("stem.conv_s.weight")] == ParamGroup::spatial);
  CHECK(groups[model.param_index("stem.conv_t.weight")] == ParamGroup::temporal);
  CHECK(groups[model.param_index("head.weight")] == ParamGroup::shared);
}

TEST_CASE("report lists per-group totals") {
  const std::string report = partition_report(Model<float>(ModelSpec::reference()).named_params());
  CHECK(report.find("params=3096") != std::string::npos);
  CHECK(report.find("params=1152") != std::string::npos);
  CHECK(report.find("params=2001") != std::string::npos);
  CHECK(report.find("params=6249") != std::string::npos);
}
