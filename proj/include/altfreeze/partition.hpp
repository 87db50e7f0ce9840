#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "altfreeze/model.hpp"

namespace altfreeze {

enum class ParamGroup : std::uint8_t { spatial = 0, temporal = 1, shared = 2 };

const char* to_string(ParamGroup group);

struct ClassifyOptions {
  // Treat full 3D kernels (Kt>1 with Kh>1 or Kw>1) as shared instead of failing.
  bool full_kernel_as_shared = false;
};

/// Spatial for 1xKhxKw conv weights, temporal for Ktx1x1 conv weights, shared
/// for 1x1x1 conv weights and every bias, batch-norm and linear parameter.
/// Depends only on kind and shape.
ParamGroup classify_param(const NamedParam& param, const ClassifyOptions& options = {});

struct Partition {
  std::vector<NamedParam> spatial;
  std::vector<NamedParam> temporal;
  std::vector<NamedParam> shared;

  const std::vector<NamedParam>& group(ParamGroup g) const;
};

/// Splits parameters into the three groups, each sorted by name. A
/// classification failure is rethrown with the parameter's name.
Partition partition(const std::vector<NamedParam>& params, const ClassifyOptions& options = {});

template <typename T>
Partition partition(const Model<T>& model, const ClassifyOptions& options = {}) {
  return partition(model.named_params(), options);
}

/// Group of every model parameter, indexed like Model::parameters().
template <typename T>
std::vector<ParamGroup> group_of_params(const Model<T>& model, const ClassifyOptions& options = {}) {
  std::vector<ParamGroup> out;
  for (const auto& p : model.parameters()) out.push_back(classify_param(p.info, options));
  return out;
}

/// Plain-text table: name, shape, group, then per-group scalar totals.
std::string partition_report(const std::vector<NamedParam>& params,
                             const ClassifyOptions& options = {});

}  // namespace altfreeze
