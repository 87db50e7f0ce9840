#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "altfreeze/tensor.hpp"

namespace altfreeze {

enum class Mode { train, eval };

/// Handle to a node on a Tape. Only meaningful for the tape that issued it.
struct Var {
  std::size_t index = 0;
};

using ParamId = std::size_t;

template <typename T>
struct BackwardArgs {
  std::span<const Tensor<T>* const> inputs;
  const Tensor<T>& output;
  const Tensor<T>& grad_output;
  // Null for inputs that do not require a gradient.
  std::span<Tensor<T>* const> grad_inputs;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so the node
/// list is topologically sorted and acyclic by construction.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(const BackwardArgs<T>&)>;

  Var constant(Tensor<T> value);
  Var parameter(ParamId id, Tensor<T> value);
  Var record(Tensor<T> value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor<T>& value(Var v) const { return nodes_.at(v.index).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.index).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradients of a scalar node with respect to every parameter that reaches
  /// it. Parameters with no path to `loss` are absent from the result.
  std::map<ParamId, Tensor<T>> backward(Var loss) const;

 private:
  struct Node {
    Tensor<T> value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    std::optional<ParamId> param;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

struct Conv3dParams {
  std::array<std::size_t, 3> stride{1, 1, 1};
  std::array<std::size_t, 3> padding{0, 0, 0};
};

/// Output extent of one convolution axis: floor((in + 2p - k) / s) + 1.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t pad);

/// 3D cross-correlation (no kernel flip) with zero padding.
/// input: [C_in,T,H,W] or [B,C_in,T,H,W]; kernel: [C_out,C_in,Kt,Kh,Kw];
/// bias: [C_out]. The output keeps the input's rank.
template <typename T>
Var conv3d(Tape<T>& tape, Var input, Var kernel, std::optional<Var> bias,
           const Conv3dParams& params);

template <typename T>
struct BatchNormStats {
  Tensor<T> running_mean;
  Tensor<T> running_var;

  explicit BatchNormStats(std::size_t channels = 1)
      : running_mean({channels}, T{0}), running_var({channels}, T{1}) {}
};

struct BatchNormOptions {
  double momentum = 0.1;
  double epsilon = 1e-5;
};

/// Per-channel normalization over every axis except axis 1. Train mode uses
/// batch statistics and folds them into `stats` (unbiased variance); eval
/// mode reads `stats`.
template <typename T>
Var batch_norm(Tape<T>& tape, Var input, Var gamma, Var beta, BatchNormStats<T>& stats,
               Mode mode, const BatchNormOptions& options = {});

template <typename T>
Var relu(Tape<T>& tape, Var x);

template <typename T>
Var sigmoid(Tape<T>& tape, Var x);

/// Elementwise clamp; the gradient is zero outside [lo, hi].
template <typename T>
Var clamp(Tape<T>& tape, Var x, T lo, T hi);

template <typename T>
Var add(Tape<T>& tape, Var a, Var b);

template <typename T>
Var multiply(Tape<T>& tape, Var a, Var b);

/// Sum of all elements as a [1] tensor.
template <typename T>
Var sum(Tape<T>& tape, Var x);

template <typename T>
Var reshape(Tape<T>& tape, Var x, Shape shape);

/// [B,C,...] -> [B,C], averaging over all trailing axes.
template <typename T>
Var global_avg_pool(Tape<T>& tape, Var x);

/// x: [B,F], weight: [O,F], bias: [O] -> [B,O].
template <typename T>
Var linear(Tape<T>& tape, Var x, Var weight, std::optional<Var> bias);

enum class Reduction { sum, mean };

/// Binary cross-entropy of sigmoid(logits) against 0/1 labels, evaluated in
/// the log-sum-exp form so saturated logits stay finite.
template <typename T>
Var bce_with_logits(Tape<T>& tape, Var logits, const Tensor<T>& labels,
                    Reduction reduction);

/// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) for every
/// element of `at`.
template <typename T>
Tensor<T> finite_difference_grad(const std::function<T(const Tensor<T>&)>& f,
                                 const Tensor<T>& at, T eps);

}  // namespace altfreeze
