#include "altfreeze/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace altfreeze {

std::string to_string(const Kernel3& k) {
  return std::to_string(k.t) + "x" + std::to_string(k.h) + "x" + std::to_string(k.w);
}

const char* to_string(ParamKind kind) {
  switch (kind) {
    case ParamKind::conv_weight: return "conv_weight";
    case ParamKind::conv_bias: return "conv_bias";
    case ParamKind::bn_gamma: return "bn_gamma";
    case ParamKind::bn_beta: return "bn_beta";
    case ParamKind::linear_weight: return "linear_weight";
    case ParamKind::linear_bias: return "linear_bias";
  }
  return "unknown";
}

ModelSpec ModelSpec::reference() {
  ModelSpec spec;
  spec.stem = StemSpec{};
  spec.blocks = {BlockSpec{8, 8, 16, 1, true, {3, 1, 1}, {1, 3, 3}},
                 BlockSpec{16, 16, 32, 2, true, {3, 1, 1}, {1, 3, 3}}};
  return spec;
}

namespace {

void check_kernel(const Kernel3& k, const std::string& where) {
  if (k.t == 0 || k.h == 0 || k.w == 0) {
    throw std::invalid_argument(where + ": kernel extents must be positive");
  }
  if (!k.factorized()) {
    throw std::invalid_argument(where + ": kernel " + to_string(k) +
                                " mixes temporal and spatial extent; only 1x1x1, Kt x1x1 "
                                "and 1xKhxKw kernels are allowed");
  }
  if (k.t % 2 == 0 || k.h % 2 == 0 || k.w % 2 == 0) {
    throw std::invalid_argument(where + ": kernel " + to_string(k) + " must have odd extents");
  }
}

}  // namespace

void validate(const ModelSpec& spec) {
  if (spec.input_shape.size() != 4) {
    throw std::invalid_argument("model input shape must be (C,T,H,W)");
  }
  if (spec.input_shape[0] != spec.stem.in_channels) {
    throw std::invalid_argument("stem expects " + std::to_string(spec.stem.in_channels) +
                                " channels but input has " +
                                std::to_string(spec.input_shape[0]));
  }
  if (spec.stem.out_channels == 0 || spec.stem.spatial_stride == 0) {
    throw std::invalid_argument("stem channels and stride must be positive");
  }
  check_kernel(spec.stem.spatial_kernel, "stem spatial conv");
  check_kernel(spec.stem.temporal_kernel, "stem temporal conv");
  std::size_t channels = spec.stem.out_channels;
  for (std::size_t i = 0; i < spec.blocks.size(); ++i) {
    const BlockSpec& b = spec.blocks[i];
    const std::string where = "block" + std::to_string(i + 1);
    if (b.in_channels != channels) {
      throw std::invalid_argument(where + " expects " + std::to_string(b.in_channels) +
                                  " input channels, previous layer gives " +
                                  std::to_string(channels));
    }
    if (b.mid_channels == 0 || b.out_channels == 0) {
      throw std::invalid_argument(where + ": channel counts must be positive");
    }
    if (b.spatial_stride != 1 && b.spatial_stride != 2) {
      throw std::invalid_argument(where + ": spatial stride must be 1 or 2");
    }
    if (!b.has_projection && (b.in_channels != b.out_channels || b.spatial_stride != 1)) {
      throw std::invalid_argument(where + ": identity shortcut needs equal channels and stride 1");
    }
    check_kernel(b.temporal_kernel, where + " temporal conv");
    check_kernel(b.spatial_kernel, where + " spatial conv");
    channels = b.out_channels;
  }
}

template <typename T>
Model<T>::Model(ModelSpec spec) : spec_(std::move(spec)) {
  validate(spec_);
  const StemSpec& s = spec_.stem;
  stem_spatial_ = add_conv_bn("stem", "conv_s", "bn_s", s.in_channels, s.out_channels,
                              s.spatial_kernel, s.spatial_stride);
  stem_temporal_ = add_conv_bn("stem", "conv_t", "bn_t", s.out_channels, s.out_channels,
                               s.temporal_kernel, 1);
  std::size_t channels = s.out_channels;
  for (std::size_t i = 0; i < spec_.blocks.size(); ++i) {
    const BlockSpec& b = spec_.blocks[i];
    const std::string prefix = "block" + std::to_string(i + 1);
    Block block;
    block.reduce = add_conv_bn(prefix, "conv_in", "bn_in", b.in_channels, b.mid_channels,
                               {1, 1, 1}, 1);
    block.temporal = add_conv_bn(prefix, "conv_t", "bn_t", b.mid_channels, b.mid_channels,
                                 b.temporal_kernel, 1);
    block.spatial = add_conv_bn(prefix, "conv_s", "bn_s", b.mid_channels, b.mid_channels,
                                b.spatial_kernel, b.spatial_stride);
    block.expand = add_conv_bn(prefix, "conv_out", "bn_out", b.mid_channels, b.out_channels,
                               {1, 1, 1}, 1);
    block.has_projection = b.has_projection;
    if (b.has_projection) {
      block.projection = add_conv_bn(prefix, "proj", "bn_proj", b.in_channels, b.out_channels,
                                     {1, 1, 1}, b.spatial_stride);
    }
    blocks_.push_back(block);
    channels = b.out_channels;
  }
  std::size_t head_in = channels;
  if (spec_.head_hidden > 0) {
    head_hidden_weight_ =
        add_param("head.hidden.weight", ParamKind::linear_weight, {spec_.head_hidden, head_in});
    head_hidden_bias_ = add_param("head.hidden.bias", ParamKind::linear_bias, {spec_.head_hidden});
    head_in = spec_.head_hidden;
  }
  head_weight_ = add_param("head.weight", ParamKind::linear_weight, {1, head_in});
  head_bias_ = add_param("head.bias", ParamKind::linear_bias, {1});
}

template <typename T>
std::size_t Model<T>::add_param(std::string name, ParamKind kind, Shape shape, T fill) {
  Tensor<T> value(shape, fill);
  params_.push_back(Parameter<T>{NamedParam{std::move(name), kind, std::move(shape)},
                                 std::move(value)});
  return params_.size() - 1;
}

template <typename T>
typename Model<T>::ConvBn Model<T>::add_conv_bn(const std::string& prefix, const std::string& conv,
                                                const std::string& bn, std::size_t in,
                                                std::size_t out, const Kernel3& k,
                                                std::size_t spatial_stride) {
  ConvBn layer;
  layer.conv.weight =
      add_param(prefix + "." + conv + ".weight", ParamKind::conv_weight, {out, in, k.t, k.h, k.w});
  layer.conv.params.stride = {1, spatial_stride, spatial_stride};
  layer.conv.params.padding = {k.t / 2, k.h / 2, k.w / 2};
  layer.norm.gamma = add_param(prefix + "." + bn + ".gamma", ParamKind::bn_gamma, {out}, T{1});
  layer.norm.beta = add_param(prefix + "." + bn + ".beta", ParamKind::bn_beta, {out});
  stats_.push_back(NamedStats<T>{prefix + "." + bn, BatchNormStats<T>(out)});
  layer.norm.stats = stats_.size() - 1;
  return layer;
}

template <typename T>
std::vector<NamedParam> Model<T>::named_params() const {
  std::vector<NamedParam> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.info);
  return out;
}

template <typename T>
std::size_t Model<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
std::size_t Model<T>::param_index(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].info.name == name) return i;
  throw std::out_of_range("no parameter named " + name);
}

template <typename T>
Var Model<T>::conv_bn(Tape<T>& tape, std::vector<Var>& vars, const ConvBn& layer, Var x,
                      Mode mode, bool with_relu) {
  Var y = conv3d(tape, x, vars[layer.conv.weight], std::nullopt, layer.conv.params);
  y = batch_norm(tape, y, vars[layer.norm.gamma], vars[layer.norm.beta],
                 stats_[layer.norm.stats].stats, mode);
  return with_relu ? relu(tape, y) : y;
}

template <typename T>
typename Model<T>::Pass Model<T>::record(Tape<T>& tape, const Tensor<T>& batch, Mode mode) {
  const Shape& in = spec_.input_shape;
  if (batch.rank() != 5 ||
      !std::equal(in.begin(), in.end(), batch.shape().begin() + 1)) {
    throw std::invalid_argument("model expects a [B," + to_string(in).substr(1) +
                                " batch, got " + to_string(batch.shape()));
  }
  std::vector<Var> vars;
  vars.reserve(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) vars.push_back(tape.parameter(i, params_[i].value));

  Var x = tape.constant(batch);
  x = conv_bn(tape, vars, stem_spatial_, x, mode, true);
  x = conv_bn(tape, vars, stem_temporal_, x, mode, true);
  for (const Block& b : blocks_) {
    Var h = conv_bn(tape, vars, b.reduce, x, mode, true);
    h = conv_bn(tape, vars, b.temporal, h, mode, true);
    h = conv_bn(tape, vars, b.spatial, h, mode, true);
    h = conv_bn(tape, vars, b.expand, h, mode, false);
    Var shortcut = b.has_projection ? conv_bn(tape, vars, b.projection, x, mode, false) : x;
    x = relu(tape, add(tape, h, shortcut));
  }
  const Var features = x;
  Var pooled = global_avg_pool(tape, features);
  if (spec_.head_hidden > 0) {
    pooled = relu(tape, linear(tape, pooled, vars[head_hidden_weight_],
                               std::optional<Var>(vars[head_hidden_bias_])));
  }
  Var logits = linear(tape, pooled, vars[head_weight_], std::optional<Var>(vars[head_bias_]));
  logits = reshape(tape, logits, Shape{batch.extent(0)});
  return Pass{logits, features};
}

template <typename T>
Tensor<T> Model<T>::forward(const Tensor<T>& batch, Mode mode) {
  Tape<T> tape;
  const Pass pass = record(tape, batch, mode);
  Var p = sigmoid(tape, clamp(tape, pass.logits, T{-30}, T{30}));
  return tape.value(p);
}

template <typename T>
Model<T> build_model(const ModelSpec& spec, std::uint64_t seed) {
  Model<T> model(spec);
  std::mt19937_64 rng(seed);
  for (auto& p : model.parameters()) {
    const Shape& s = p.info.shape;
    if (p.info.kind == ParamKind::conv_weight) {
      const double fan_in = static_cast<double>(s[1] * s[2] * s[3] * s[4]);
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
      for (T& v : p.value.values()) v = static_cast<T>(dist(rng));
    } else if (p.info.kind == ParamKind::linear_weight) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(s[1]));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (T& v : p.value.values()) v = static_cast<T>(dist(rng));
    }
  }
  return model;
}

template <typename T>
Tensor<T> to_batch(const Clip& clip) {
  const Tensor<float>& t = clip.tensor();
  Shape shape{1};
  shape.insert(shape.end(), t.shape().begin(), t.shape().end());
  return Tensor<T>(std::move(shape), std::vector<T>(t.values().begin(), t.values().end()));
}

template <typename T>
Tensor<T> cam(Model<T>& model, const Clip& clip) {
  if (!model.has_pooled_linear_head()) {
    throw std::logic_error("cam: unsupported for models whose head is not a single linear "
                           "layer over pooled features");
  }
  Tape<T> tape;
  const auto pass = model.record(tape, to_batch<T>(clip), Mode::eval);
  const Tensor<T>& f = tape.value(pass.features);
  const Tensor<T>& w = model.parameters()[model.param_index("head.weight")].value;
  const std::size_t channels = f.extent(1);
  const Shape map_shape{f.extent(2), f.extent(3), f.extent(4)};
  const std::size_t n = numel(map_shape);
  Tensor<T> heat(map_shape);
  for (std::size_t c = 0; c < channels; ++c) {
    const T wc = w[c];
    const T* src = f.data() + c * n;
    for (std::size_t i = 0; i < n; ++i) heat[i] += wc * src[i];
  }
  const auto [lo, hi] = std::minmax_element(heat.values().begin(), heat.values().end());
  const T min = *lo;
  const T range = *hi - *lo;
  for (T& v : heat.values()) v = range > T{0} ? (v - min) / range : T{0};
  return heat;
}

template class Model<float>;
template class Model<double>;
template Model<float> build_model<float>(const ModelSpec&, std::uint64_t);
template Model<double> build_model<double>(const ModelSpec&, std::uint64_t);
template Tensor<float> cam(Model<float>&, const Clip&);
template Tensor<double> cam(Model<double>&, const Clip&);
template Tensor<float> to_batch<float>(const Clip&);
template Tensor<double> to_batch<double>(const Clip&);

}  // namespace altfreeze
