#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "altfreeze/autodiff.hpp"
#include "altfreeze/clip.hpp"
#include "altfreeze/tensor.hpp"

namespace altfreeze {

/// Convolution kernel extents (temporal, height, width).
struct Kernel3 {
  std::size_t t = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  bool factorized() const { return !(t > 1 && (h > 1 || w > 1)); }
  bool operator==(const Kernel3&) const = default;
};

std::string to_string(const Kernel3& k);

struct StemSpec {
  std::size_t in_channels = 3;
  std::size_t out_channels = 8;
  Kernel3 spatial_kernel{1, 3, 3};
  Kernel3 temporal_kernel{3, 1, 1};
  std::size_t spatial_stride = 2;
};

/// Bottleneck: 1x1x1 reduce, temporal conv, spatial conv (strided), 1x1x1
/// expand, plus an optional 1x1x1 projection on the shortcut. Every conv is
/// followed by batch norm; ReLU follows all but the expand conv, whose output
/// is summed with the shortcut before the final ReLU.
struct BlockSpec {
  std::size_t in_channels = 8;
  std::size_t mid_channels = 8;
  std::size_t out_channels = 16;
  std::size_t spatial_stride = 1;
  bool has_projection = true;
  Kernel3 temporal_kernel{3, 1, 1};
  Kernel3 spatial_kernel{1, 3, 3};
};

struct ModelSpec {
  StemSpec stem;
  std::vector<BlockSpec> blocks;
  // 0 means the pooled features feed the single-logit linear layer directly.
  std::size_t head_hidden = 0;
  Shape input_shape{3, 8, 32, 32};

  /// Stem 3->8 (1x3x3 then 3x1x1), blocks 8->8->16 and 16->16->32, head 32->1.
  static ModelSpec reference();
};

/// Throws std::invalid_argument naming the first violated constraint.
void validate(const ModelSpec& spec);

enum class ParamKind : std::uint8_t {
  conv_weight,
  conv_bias,
  bn_gamma,
  bn_beta,
  linear_weight,
  linear_bias,
};

const char* to_string(ParamKind kind);

struct NamedParam {
  std::string name;
  ParamKind kind = ParamKind::conv_weight;
  Shape shape;

  bool operator==(const NamedParam&) const = default;
};

template <typename T>
struct Parameter {
  NamedParam info;
  Tensor<T> value;
};

/// Non-trainable state, e.g. batch-norm running statistics.
template <typename T>
struct NamedStats {
  std::string name;
  BatchNormStats<T> stats;
};

template <typename T>
class Model {
 public:
  struct Pass {
    Var logits;    // [B]
    Var features;  // final feature map [B,C,T',H',W']
  };

  explicit Model(ModelSpec spec);

  const ModelSpec& spec() const { return spec_; }
  std::vector<Parameter<T>>& parameters() { return params_; }
  const std::vector<Parameter<T>>& parameters() const { return params_; }
  std::vector<NamedStats<T>>& norm_stats() { return stats_; }
  const std::vector<NamedStats<T>>& norm_stats() const { return stats_; }

  std::vector<NamedParam> named_params() const;
  /// Total number of trainable scalars.
  std::size_t scalar_count() const;
  /// Index of the parameter with this name; throws if absent.
  std::size_t param_index(const std::string& name) const;

  /// Records the network on `tape`. Parameter i is registered with ParamId i.
  Pass record(Tape<T>& tape, const Tensor<T>& batch, Mode mode);

  /// Probabilities sigmoid(clamp(logit, -30, 30)) for a [B,C,T,H,W] batch.
  Tensor<T> forward(const Tensor<T>& batch, Mode mode);

  bool has_pooled_linear_head() const { return spec_.head_hidden == 0; }

 private:
  struct ConvLayer {
    std::size_t weight;
    Conv3dParams params;
  };
  struct NormLayer {
    std::size_t gamma;
    std::size_t beta;
    std::size_t stats;
  };
  struct ConvBn {
    ConvLayer conv;
    NormLayer norm;
  };
  struct Block {
    ConvBn reduce, temporal, spatial, expand;
    bool has_projection = false;
    ConvBn projection{};
  };

  std::size_t add_param(std::string name, ParamKind kind, Shape shape, T fill = T{0});
  ConvBn add_conv_bn(const std::string& prefix, const std::string& conv, const std::string& bn,
                     std::size_t in, std::size_t out, const Kernel3& k,
                     std::size_t spatial_stride);
  Var conv_bn(Tape<T>& tape, std::vector<Var>& vars, const ConvBn& layer, Var x, Mode mode,
              bool with_relu);

  ModelSpec spec_;
  std::vector<Parameter<T>> params_;
  std::vector<NamedStats<T>> stats_;
  ConvBn stem_spatial_{}, stem_temporal_{};
  std::vector<Block> blocks_;
  std::size_t head_hidden_weight_ = 0, head_hidden_bias_ = 0;
  std::size_t head_weight_ = 0, head_bias_ = 0;
};

/// Deterministic initialization: fan-in scaled normal weights for
/// convolutions, uniform fan-in scaling for linear layers, gamma=1, beta=0,
/// biases 0.
template <typename T>
Model<T> build_model(const ModelSpec& spec, std::uint64_t seed);

/// Class activation map of one clip: head-weighted sum of the final feature
/// maps, min-max normalized to [0, 1] (a constant map becomes all zeros).
/// Shape [T',H',W'].
template <typename T>
Tensor<T> cam(Model<T>& model, const Clip& clip);

/// Copies a clip into a [1,C,T,H,W] batch of the model's precision.
template <typename T>
Tensor<T> to_batch(const Clip& clip);

}  // namespace altfreeze
