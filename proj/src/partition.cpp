#include "altfreeze/partition.hpp"

#include <algorithm>
#include <array>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace altfreeze {

const char* to_string(ParamGroup group) {
  switch (group) {
    case ParamGroup::spatial: return "spatial";
    case ParamGroup::temporal: return "temporal";
    case ParamGroup::shared: return "shared";
  }
  return "unknown";
}

ParamGroup classify_param(const NamedParam& param, const ClassifyOptions& options) {
  if (param.kind != ParamKind::conv_weight) return ParamGroup::shared;
  if (param.shape.size() != 5) {
    throw std::invalid_argument("conv weight must have shape [C_out,C_in,Kt,Kh,Kw], got " +
                                to_string(param.shape));
  }
  const std::size_t kt = param.shape[2];
  const bool spatial_extent = param.shape[3] > 1 || param.shape[4] > 1;
  if (kt == 1 && spatial_extent) return ParamGroup::spatial;
  if (kt > 1 && !spatial_extent) return ParamGroup::temporal;
  if (kt == 1) return ParamGroup::shared;
  if (options.full_kernel_as_shared) return ParamGroup::shared;
  throw std::invalid_argument("kernel " + to_string(param.shape) +
                              " has both temporal and spatial extent");
}

const std::vector<NamedParam>& Partition::group(ParamGroup g) const {
  switch (g) {
    case ParamGroup::spatial: return spatial;
    case ParamGroup::temporal: return temporal;
    case ParamGroup::shared: break;
  }
  return shared;
}

Partition partition(const std::vector<NamedParam>& params, const ClassifyOptions& options) {
  Partition out;
  for (const NamedParam& p : params) {
    ParamGroup g;
    try {
      g = classify_param(p, options);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(p.name + ": " + e.what());
    }
    switch (g) {
      case ParamGroup::spatial: out.spatial.push_back(p); break;
      case ParamGroup::temporal: out.temporal.push_back(p); break;
      case ParamGroup::shared: out.shared.push_back(p); break;
    }
  }
  const auto by_name = [](const NamedParam& a, const NamedParam& b) { return a.name < b.name; };
  std::sort(out.spatial.begin(), out.spatial.end(), by_name);
  std::sort(out.temporal.begin(), out.temporal.end(), by_name);
  std::sort(out.shared.begin(), out.shared.end(), by_name);
  return out;
}

std::string partition_report(const std::vector<NamedParam>& params,
                             const ClassifyOptions& options) {
  std::size_t width = 4;
  for (const auto& p : params) width = std::max(width, p.name.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width) + 2) << "name" << std::setw(18)
     << "shape" << "group\n";
  std::array<std::size_t, 3> tensors{};
  std::array<std::size_t, 3> scalars{};
  for (const auto& p : params) {
    const ParamGroup g = classify_param(p, options);
    const auto i = static_cast<std::size_t>(g);
    ++tensors[i];
    scalars[i] += numel(p.shape);
    os << std::setw(static_cast<int>(width) + 2) << p.name << std::setw(18) << to_string(p.shape)
       << to_string(g) << '\n';
  }
  os << '\n';
  for (ParamGroup g : {ParamGroup::spatial, ParamGroup::temporal, ParamGroup::shared}) {
    const auto i = static_cast<std::size_t>(g);
    os << "total " << std::setw(9) << to_string(g) << " tensors=" << tensors[i]
       << " params=" << scalars[i] << '\n';
  }
  os << "total all       tensors=" << params.size()
     << " params=" << scalars[0] + scalars[1] + scalars[2] << '\n';
  return os.str();
}

}  // namespace altfreeze
