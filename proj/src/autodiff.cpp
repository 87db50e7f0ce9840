#include "altfreeze/autodiff.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace altfreeze {

template <typename T>
Var Tape<T>::constant(Tensor<T> value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, std::nullopt, false});
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::parameter(ParamId id, Tensor<T> value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, id, true});
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::record(Tensor<T> value, std::vector<Var> inputs, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  for (Var v : inputs) {
    if (v.index >= nodes_.size()) throw std::out_of_range("tape input out of range");
    node.inputs.push_back(v.index);
    node.requires_grad = node.requires_grad || nodes_[v.index].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

template <typename T>
std::map<ParamId, Tensor<T>> Tape<T>::backward(Var loss) const {
  const Node& root = nodes_.at(loss.index);
  if (root.value.size() != 1) {
    throw std::invalid_argument("backward needs a scalar loss, got shape " +
                                to_string(root.value.shape()));
  }
  std::vector<Tensor<T>> grads(loss.index + 1);
  grads[loss.index] = Tensor<T>(root.value.shape(), T{1});

  std::map<ParamId, Tensor<T>> result;
  std::vector<const Tensor<T>*> inputs;
  std::vector<Tensor<T>*> grad_inputs;
  for (std::size_t i = loss.index + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (grads[i].empty() || !node.requires_grad) continue;
    if (node.param) {
      auto [it, inserted] = result.try_emplace(*node.param, std::move(grads[i]));
      if (!inserted) {
        for (std::size_t j = 0; j < it->second.size(); ++j) it->second[j] += grads[i][j];
      }
      continue;
    }
    inputs.clear();
    grad_inputs.clear();
    for (std::size_t in : node.inputs) {
      inputs.push_back(&nodes_[in].value);
      if (nodes_[in].requires_grad) {
        if (grads[in].empty()) grads[in] = Tensor<T>(nodes_[in].value.shape(), T{0});
        grad_inputs.push_back(&grads[in]);
      } else {
        grad_inputs.push_back(nullptr);
      }
    }
    node.backward(BackwardArgs<T>{inputs, node.value, grads[i], grad_inputs});
    grads[i] = Tensor<T>();
  }
  return result;
}

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t pad) {
  if (stride == 0) throw std::invalid_argument("convolution stride must be positive");
  const std::size_t padded = in + 2 * pad;
  if (kernel == 0 || kernel > padded) return 0;
  return (padded - kernel) / stride + 1;
}

namespace {

constexpr const char* kAxisNames[3] = {"temporal", "height", "width"};

struct ConvGeometry {
  std::size_t batch, c_in, c_out;
  std::array<std::size_t, 3> in, k, out, stride, pad;
};

// Range of output positions o whose source index o*s + k - p lies in [0, in).
inline void valid_range(std::size_t in, std::size_t kk, std::size_t s, std::size_t p,
                        std::size_t out, std::size_t& lo, std::size_t& hi) {
  const long long off = static_cast<long long>(kk) - static_cast<long long>(p);
  long long first = 0;
  if (off < 0) first = (-off + static_cast<long long>(s) - 1) / static_cast<long long>(s);
  long long last_excl = 0;
  const long long lim = static_cast<long long>(in) - off;  // need o*s < lim
  if (lim > 0) last_excl = (lim - 1) / static_cast<long long>(s) + 1;
  lo = static_cast<std::size_t>(std::min<long long>(first, static_cast<long long>(out)));
  hi = static_cast<std::size_t>(
      std::clamp<long long>(last_excl, static_cast<long long>(lo), static_cast<long long>(out)));
}

// Calls fn(in_offset, out_offset, count) for every contiguous output
// row that tap (kt,kh,kw) touches.
template <typename Fn>
inline void for_each_tap_row(const ConvGeometry& g, std::size_t kt, std::size_t kh,
                             std::size_t kw, Fn&& fn) {
  std::size_t t_lo, t_hi, h_lo, h_hi, w_lo, w_hi;
  valid_range(g.in[0], kt, g.stride[0], g.pad[0], g.out[0], t_lo, t_hi);
  valid_range(g.in[1], kh, g.stride[1], g.pad[1], g.out[1], h_lo, h_hi);
  valid_range(g.in[2], kw, g.stride[2], g.pad[2], g.out[2], w_lo, w_hi);
  if (t_lo >= t_hi || h_lo >= h_hi || w_lo >= w_hi) return;
  // Pointwise in the plane: each frame is one contiguous row.
  if (g.k[1] == 1 && g.k[2] == 1 && g.stride[1] == 1 && g.stride[2] == 1 && g.pad[1] == 0 &&
      g.pad[2] == 0) {
    const std::size_t plane = g.in[1] * g.in[2];
    for (std::size_t to = t_lo; to < t_hi; ++to) {
      fn((to * g.stride[0] + kt - g.pad[0]) * plane, to * plane, plane);
    }
    return;
  }
  const std::size_t count = w_hi - w_lo;
  for (std::size_t to = t_lo; to < t_hi; ++to) {
    const std::size_t ti = to * g.stride[0] + kt - g.pad[0];
    for (std::size_t ho = h_lo; ho < h_hi; ++ho) {
      const std::size_t hi = ho * g.stride[1] + kh - g.pad[1];
      const std::size_t wi = w_lo * g.stride[2] + kw - g.pad[2];
      fn((ti * g.in[1] + hi) * g.in[2] + wi, (to * g.out[1] + ho) * g.out[2] + w_lo, count);
    }
  }
}

// Eight independent partial sums so the loop vectorizes; the summation
// order is fixed, so results stay deterministic.
template <typename T>
inline T dot(const T* a, const T* b, std::size_t n) {
  T lanes[8] = {};
  std::size_t x = 0;
  for (; x + 8 <= n; x += 8)
    for (std::size_t j = 0; j < 8; ++j) lanes[j] += a[x + j] * b[x + j];
  T tail{0};
  for (; x < n; ++x) tail += a[x] * b[x];
  return ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
         ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7])) + tail;
}

// Unfolds one sample into a [C_in*taps, out_plane] matrix, zero where the
// tap falls in padding. Pointwise unit-stride convs skip this.
template <typename T>
void im2col(const ConvGeometry& g, const T* src, T* cols) {
  const std::size_t in_plane = g.in[0] * g.in[1] * g.in[2];
  const std::size_t out_plane = g.out[0] * g.out[1] * g.out[2];
  const std::size_t sw = g.stride[2];
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < g.c_in; ++ci)
    for (std::size_t kt = 0; kt < g.k[0]; ++kt)
      for (std::size_t kh = 0; kh < g.k[1]; ++kh)
        for (std::size_t kw = 0; kw < g.k[2]; ++kw, ++row) {
          const T* s = src + ci * in_plane;
          T* d = cols + row * out_plane;
          std::fill(d, d + out_plane, T{0});
          for_each_tap_row(g, kt, kh, kw, [&](std::size_t io, std::size_t oo, std::size_t n) {
            for (std::size_t x = 0; x < n; ++x) d[oo + x] = s[io + x * sw];
          });
        }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const T* cols, T* dst) {
  const std::size_t in_plane = g.in[0] * g.in[1] * g.in[2];
  const std::size_t out_plane = g.out[0] * g.out[1] * g.out[2];
  const std::size_t sw = g.stride[2];
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < g.c_in; ++ci)
    for (std::size_t kt = 0; kt < g.k[0]; ++kt)
      for (std::size_t kh = 0; kh < g.k[1]; ++kh)
        for (std::size_t kw = 0; kw < g.k[2]; ++kw, ++row) {
          T* d = dst + ci * in_plane;
          const T* s = cols + row * out_plane;
          for_each_tap_row(g, kt, kh, kw, [&](std::size_t io, std::size_t oo, std::size_t n) {
            for (std::size_t x = 0; x < n; ++x) d[io + x * sw] += s[oo + x];
          });
        }
}

bool is_identity_unfold(const ConvGeometry& g) {
  for (std::size_t a = 0; a < 3; ++a)
    if (g.k[a] != 1 || g.stride[a] != 1 || g.pad[a] != 0) return false;
  return true;
}

// Per sample: out[C_out, P] = K[C_out, R] * cols[R, P].
template <typename T>
void conv_forward(const ConvGeometry& g, const T* in, const T* k, const T* bias, T* out) {
  const std::size_t in_plane = g.in[0] * g.in[1] * g.in[2];
  const std::size_t out_plane = g.out[0] * g.out[1] * g.out[2];
  const std::size_t rows = g.c_in * g.k[0] * g.k[1] * g.k[2];
  const bool direct = is_identity_unfold(g);
  std::vector<T> buffer(direct ? 0 : rows * out_plane);
  for (std::size_t b = 0; b < g.batch; ++b) {
    const T* cols = in + b * g.c_in * in_plane;
    if (!direct) {
      im2col(g, cols, buffer.data());
      cols = buffer.data();
    }
    for (std::size_t co = 0; co < g.c_out; ++co) {
      T* dst = out + (b * g.c_out + co) * out_plane;
      std::fill(dst, dst + out_plane, bias ? bias[co] : T{0});
      const T* kern = k + co * rows;
      for (std::size_t r = 0; r < rows; ++r) {
        const T w = kern[r];
        const T* s = cols + r * out_plane;
        for (std::size_t x = 0; x < out_plane; ++x) dst[x] += w * s[x];
      }
    }
  }
}

// Per sample: gcols[R, P] = K^T * gout; scattered back onto the input grid.
template <typename T>
void conv_backward_input(const ConvGeometry& g, const T* gout, const T* k, T* gin) {
  const std::size_t in_plane = g.in[0] * g.in[1] * g.in[2];
  const std::size_t out_plane = g.out[0] * g.out[1] * g.out[2];
  const std::size_t rows = g.c_in * g.k[0] * g.k[1] * g.k[2];
  const bool direct = is_identity_unfold(g);
  std::vector<T> buffer(direct ? 0 : rows * out_plane);
  for (std::size_t b = 0; b < g.batch; ++b) {
    T* gcols = direct ? gin + b * g.c_in * in_plane : buffer.data();
    if (!direct) std::fill(buffer.begin(), buffer.end(), T{0});
    for (std::size_t co = 0; co < g.c_out; ++co) {
      const T* src = gout + (b * g.c_out + co) * out_plane;
      const T* kern = k + co * rows;
      for (std::size_t r = 0; r < rows; ++r) {
        const T w = kern[r];
        T* d = gcols + r * out_plane;
        for (std::size_t x = 0; x < out_plane; ++x) d[x] += w * src[x];
      }
    }
    if (!direct) col2im_add(g, buffer.data(), gin + b * g.c_in * in_plane);
  }
}

// gK[C_out, R] += gout[C_out, P] * cols[R, P]^T, summed over samples.
template <typename T>
void conv_backward_kernel(const ConvGeometry& g, const T* gout, const T* in, T* gk) {
  const std::size_t in_plane = g.in[0] * g.in[1] * g.in[2];
  const std::size_t out_plane = g.out[0] * g.out[1] * g.out[2];
  const std::size_t rows = g.c_in * g.k[0] * g.k[1] * g.k[2];
  const bool direct = is_identity_unfold(g);
  std::vector<T> buffer(direct ? 0 : rows * out_plane);
  for (std::size_t b = 0; b < g.batch; ++b) {
    const T* cols = in + b * g.c_in * in_plane;
    if (!direct) {
      im2col(g, cols, buffer.data());
      cols = buffer.data();
    }
    for (std::size_t co = 0; co < g.c_out; ++co) {
      const T* go = gout + (b * g.c_out + co) * out_plane;
      T* kern = gk + co * rows;
      for (std::size_t r = 0; r < rows; ++r) kern[r] += dot(go, cols + r * out_plane, out_plane);
    }
  }
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + to_string(a) +
                                " vs " + to_string(b));
  }
}

}  // namespace

template <typename T>
Var conv3d(Tape<T>& tape, Var input, Var kernel, std::optional<Var> bias,
           const Conv3dParams& params) {
  const Tensor<T>& x = tape.value(input);
  const Tensor<T>& k = tape.value(kernel);
  if (x.rank() != 4 && x.rank() != 5) {
    throw std::invalid_argument("conv3d: input must be [C,T,H,W] or [B,C,T,H,W], got " +
                                to_string(x.shape()));
  }
  if (k.rank() != 5) {
    throw std::invalid_argument("conv3d: kernel must be [C_out,C_in,Kt,Kh,Kw], got " +
                                to_string(k.shape()));
  }
  const bool batched = x.rank() == 5;
  const std::size_t off = batched ? 1 : 0;
  ConvGeometry g{};
  g.batch = batched ? x.extent(0) : 1;
  g.c_in = x.extent(off);
  g.c_out = k.extent(0);
  if (k.extent(1) != g.c_in) {
    throw std::invalid_argument("conv3d: channel axis mismatch, input has " +
                                std::to_string(g.c_in) + " channels but kernel expects " +
                                std::to_string(k.extent(1)));
  }
  for (std::size_t a = 0; a < 3; ++a) {
    g.in[a] = x.extent(off + 1 + a);
    g.k[a] = k.extent(2 + a);
    g.stride[a] = params.stride[a];
    g.pad[a] = params.padding[a];
    g.out[a] = conv_output_extent(g.in[a], g.k[a], g.stride[a], g.pad[a]);
    if (g.out[a] == 0) {
      throw std::invalid_argument(std::string("conv3d: ") + kAxisNames[a] +
                                  " axis kernel extent " + std::to_string(g.k[a]) +
                                  " exceeds padded input extent " +
                                  std::to_string(g.in[a] + 2 * g.pad[a]));
    }
  }
  if (bias) {
    const Tensor<T>& bv = tape.value(*bias);
    if (bv.rank() != 1 || bv.extent(0) != g.c_out) {
      throw std::invalid_argument("conv3d: bias shape " + to_string(bv.shape()) +
                                  " does not match " + std::to_string(g.c_out) +
                                  " output channels");
    }
  }

  Shape out_shape = batched ? Shape{g.batch, g.c_out, g.out[0], g.out[1], g.out[2]}
                            : Shape{g.c_out, g.out[0], g.out[1], g.out[2]};
  Tensor<T> out(out_shape);
  conv_forward(g, x.data(), k.data(), bias ? tape.value(*bias).data() : nullptr, out.data());

  std::vector<Var> inputs{input, kernel};
  if (bias) inputs.push_back(*bias);
  return tape.record(std::move(out), std::move(inputs), [g](const BackwardArgs<T>& a) {
    const T* gout = a.grad_output.data();
    if (a.grad_inputs[0]) conv_backward_input(g, gout, a.inputs[1]->data(), a.grad_inputs[0]->data());
    if (a.grad_inputs[1]) conv_backward_kernel(g, gout, a.inputs[0]->data(), a.grad_inputs[1]->data());
    if (a.grad_inputs.size() > 2 && a.grad_inputs[2]) {
      const std::size_t plane = g.out[0] * g.out[1] * g.out[2];
      T* gb = a.grad_inputs[2]->data();
      for (std::size_t b = 0; b < g.batch; ++b)
        for (std::size_t co = 0; co < g.c_out; ++co) {
          const T* src = gout + (b * g.c_out + co) * plane;
          T acc{0};
          for (std::size_t i = 0; i < plane; ++i) acc += src[i];
          gb[co] += acc;
        }
    }
  });
}

template <typename T>
Var batch_norm(Tape<T>& tape, Var input, Var gamma, Var beta, BatchNormStats<T>& stats,
               Mode mode, const BatchNormOptions& options) {
  const Tensor<T>& x = tape.value(input);
  if (x.empty()) throw std::invalid_argument("batch_norm: empty batch");
  if (x.rank() < 2) {
    throw std::invalid_argument("batch_norm: input needs a channel axis, got " +
                                to_string(x.shape()));
  }
  if (!(options.epsilon > 0)) throw std::invalid_argument("batch_norm: epsilon must be > 0");
  const std::size_t batch = x.extent(0);
  const std::size_t channels = x.extent(1);
  const std::size_t inner = x.size() / (batch * channels);
  const Tensor<T>& gm = tape.value(gamma);
  const Tensor<T>& bt = tape.value(beta);
  if (gm.shape() != Shape{channels} || bt.shape() != Shape{channels}) {
    throw std::invalid_argument("batch_norm: gamma/beta must have length " +
                                std::to_string(channels) + ", got " + to_string(gm.shape()) +
                                " and " + to_string(bt.shape()));
  }
  if (stats.running_mean.shape() != Shape{channels}) {
    throw std::invalid_argument("batch_norm: running statistics have wrong channel count");
  }

  const std::size_t n = batch * inner;
  Tensor<T> mean({channels});
  Tensor<T> inv_std({channels});
  const T eps = static_cast<T>(options.epsilon);
  for (std::size_t c = 0; c < channels; ++c) {
    if (mode == Mode::train) {
      double s = 0;
      for (std::size_t b = 0; b < batch; ++b) {
        const T* p = x.data() + (b * channels + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) s += p[i];
      }
      const double mu = s / static_cast<double>(n);
      double ss = 0;
      for (std::size_t b = 0; b < batch; ++b) {
        const T* p = x.data() + (b * channels + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) {
          const double d = p[i] - mu;
          ss += d * d;
        }
      }
      const double var = ss / static_cast<double>(n);
      const double unbiased = n > 1 ? ss / static_cast<double>(n - 1) : var;
      mean[c] = static_cast<T>(mu);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + options.epsilon));
      const T m = static_cast<T>(options.momentum);
      stats.running_mean[c] = (T{1} - m) * stats.running_mean[c] + m * static_cast<T>(mu);
      stats.running_var[c] = (T{1} - m) * stats.running_var[c] + m * static_cast<T>(unbiased);
    } else {
      mean[c] = stats.running_mean[c];
      inv_std[c] = T{1} / std::sqrt(stats.running_var[c] + eps);
    }
  }

  Tensor<T> xhat(x.shape());
  Tensor<T> out(x.shape());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (b * channels + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        const T h = (x[base + i] - mean[c]) * inv_std[c];
        xhat[base + i] = h;
        out[base + i] = gm[c] * h + bt[c];
      }
    }

  const bool training = mode == Mode::train;
  return tape.record(
      std::move(out), {input, gamma, beta},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), batch, channels, inner, n,
       training](const BackwardArgs<T>& a) {
        const Tensor<T>& gy = a.grad_output;
        const Tensor<T>& gm = *a.inputs[1];
        for (std::size_t c = 0; c < channels; ++c) {
          T sum_dy{0};
          T sum_dy_xhat{0};
          for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t base = (b * channels + c) * inner;
            for (std::size_t i = 0; i < inner; ++i) {
              sum_dy += gy[base + i];
              sum_dy_xhat += gy[base + i] * xhat[base + i];
            }
          }
          if (a.grad_inputs[1]) (*a.grad_inputs[1])[c] += sum_dy_xhat;
          if (a.grad_inputs[2]) (*a.grad_inputs[2])[c] += sum_dy;
          if (!a.grad_inputs[0]) continue;
          Tensor<T>& gx = *a.grad_inputs[0];
          const T scale = gm[c] * inv_std[c];
          const T inv_n = T{1} / static_cast<T>(n);
          for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t base = (b * channels + c) * inner;
            for (std::size_t i = 0; i < inner; ++i) {
              if (training) {
                gx[base + i] += scale * (gy[base + i] - inv_n * sum_dy -
                                         inv_n * xhat[base + i] * sum_dy_xhat);
              } else {
                gx[base + i] += scale * gy[base + i];
              }
            }
          }
        }
      });
}

template <typename T>
Var relu(Tape<T>& tape, Var x) {
  const Tensor<T>& v = tape.value(x);
  Tensor<T> out(v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] > T{0} ? v[i] : T{0};
  return tape.record(std::move(out), {x}, [](const BackwardArgs<T>& a) {
    const Tensor<T>& in = *a.inputs[0];
    Tensor<T>& g = *a.grad_inputs[0];
    for (std::size_t i = 0; i < in.size(); ++i)
      if (in[i] > T{0}) g[i] += a.grad_output[i];
  });
}

template <typename T>
Var sigmoid(Tape<T>& tape, Var x) {
  const Tensor<T>& v = tape.value(x);
  Tensor<T> out(v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = T{1} / (T{1} + std::exp(-v[i]));
  return tape.record(std::move(out), {x}, [](const BackwardArgs<T>& a) {
    Tensor<T>& g = *a.grad_inputs[0];
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T y = a.output[i];
      g[i] += a.grad_output[i] * y * (T{1} - y);
    }
  });
}

template <typename T>
Var clamp(Tape<T>& tape, Var x, T lo, T hi) {
  const Tensor<T>& v = tape.value(x);
  Tensor<T> out(v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::clamp(v[i], lo, hi);
  return tape.record(std::move(out), {x}, [lo, hi](const BackwardArgs<T>& a) {
    const Tensor<T>& in = *a.inputs[0];
    Tensor<T>& g = *a.grad_inputs[0];
    for (std::size_t i = 0; i < in.size(); ++i)
      if (in[i] >= lo && in[i] <= hi) g[i] += a.grad_output[i];
  });
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& x = tape.value(a);
  const Tensor<T>& y = tape.value(b);
  require_same_shape(x.shape(), y.shape(), "add");
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return tape.record(std::move(out), {a, b}, [](const BackwardArgs<T>& args) {
    for (Tensor<T>* g : args.grad_inputs) {
      if (!g) continue;
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += args.grad_output[i];
    }
  });
}

template <typename T>
Var multiply(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& x = tape.value(a);
  const Tensor<T>& y = tape.value(b);
  require_same_shape(x.shape(), y.shape(), "multiply");
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return tape.record(std::move(out), {a, b}, [](const BackwardArgs<T>& args) {
    const Tensor<T>& x = *args.inputs[0];
    const Tensor<T>& y = *args.inputs[1];
    if (Tensor<T>* g = args.grad_inputs[0])
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += args.grad_output[i] * y[i];
    if (Tensor<T>* g = args.grad_inputs[1])
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += args.grad_output[i] * x[i];
  });
}

template <typename T>
Var sum(Tape<T>& tape, Var x) {
  const Tensor<T>& v = tape.value(x);
  T acc{0};
  for (T e : v.values()) acc += e;
  return tape.record(Tensor<T>({1}, acc), {x}, [](const BackwardArgs<T>& a) {
    Tensor<T>& g = *a.grad_inputs[0];
    const T go = a.grad_output[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += go;
  });
}

template <typename T>
Var reshape(Tape<T>& tape, Var x, Shape shape) {
  Tensor<T> out = tape.value(x).reshaped(std::move(shape));
  return tape.record(std::move(out), {x}, [](const BackwardArgs<T>& a) {
    Tensor<T>& g = *a.grad_inputs[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += a.grad_output[i];
  });
}

template <typename T>
Var global_avg_pool(Tape<T>& tape, Var x) {
  const Tensor<T>& v = tape.value(x);
  if (v.rank() < 3) {
    throw std::invalid_argument("global_avg_pool: expected [B,C,...], got " +
                                to_string(v.shape()));
  }
  const std::size_t batch = v.extent(0);
  const std::size_t channels = v.extent(1);
  const std::size_t inner = v.size() / (batch * channels);
  Tensor<T> out({batch, channels});
  for (std::size_t bc = 0; bc < batch * channels; ++bc) {
    T acc{0};
    const T* p = v.data() + bc * inner;
    for (std::size_t i = 0; i < inner; ++i) acc += p[i];
    out[bc] = acc / static_cast<T>(inner);
  }
  return tape.record(std::move(out), {x}, [inner](const BackwardArgs<T>& a) {
    Tensor<T>& g = *a.grad_inputs[0];
    const T scale = T{1} / static_cast<T>(inner);
    for (std::size_t bc = 0; bc < a.grad_output.size(); ++bc) {
      const T go = a.grad_output[bc] * scale;
      T* p = g.data() + bc * inner;
      for (std::size_t i = 0; i < inner; ++i) p[i] += go;
    }
  });
}

template <typename T>
Var linear(Tape<T>& tape, Var x, Var weight, std::optional<Var> bias) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& wv = tape.value(weight);
  if (xv.rank() != 2 || wv.rank() != 2 || wv.extent(1) != xv.extent(1)) {
    throw std::invalid_argument("linear: incompatible shapes " + to_string(xv.shape()) +
                                " and " + to_string(wv.shape()));
  }
  const std::size_t batch = xv.extent(0);
  const std::size_t in = xv.extent(1);
  const std::size_t outn = wv.extent(0);
  if (bias && tape.value(*bias).shape() != Shape{outn}) {
    throw std::invalid_argument("linear: bias must have length " + std::to_string(outn));
  }
  Tensor<T> out({batch, outn});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t o = 0; o < outn; ++o) {
      T acc = bias ? tape.value(*bias)[o] : T{0};
      for (std::size_t i = 0; i < in; ++i) acc += wv[o * in + i] * xv[b * in + i];
      out[b * outn + o] = acc;
    }
  std::vector<Var> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return tape.record(std::move(out), std::move(inputs),
                     [batch, in, outn](const BackwardArgs<T>& a) {
                       const Tensor<T>& xv = *a.inputs[0];
                       const Tensor<T>& wv = *a.inputs[1];
                       const Tensor<T>& go = a.grad_output;
                       for (std::size_t b = 0; b < batch; ++b)
                         for (std::size_t o = 0; o < outn; ++o) {
                           const T g = go[b * outn + o];
                           if (a.grad_inputs[0])
                             for (std::size_t i = 0; i < in; ++i)
                               (*a.grad_inputs[0])[b * in + i] += g * wv[o * in + i];
                           if (a.grad_inputs[1])
                             for (std::size_t i = 0; i < in; ++i)
                               (*a.grad_inputs[1])[o * in + i] += g * xv[b * in + i];
                           if (a.grad_inputs.size() > 2 && a.grad_inputs[2])
                             (*a.grad_inputs[2])[o] += g;
                         }
                     });
}

template <typename T>
Var bce_with_logits(Tape<T>& tape, Var logits, const Tensor<T>& labels, Reduction reduction) {
  const Tensor<T>& z = tape.value(logits);
  if (z.size() != labels.size()) {
    throw std::invalid_argument("bce: " + std::to_string(z.size()) + " predictions vs " +
                                std::to_string(labels.size()) + " labels");
  }
  for (T y : labels.values()) {
    if (y != T{0} && y != T{1}) throw std::invalid_argument("bce: labels must be 0 or 1");
  }
  double total = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double zi = z[i];
    // -[y log s(z) + (1-y) log(1-s(z))] = max(z,0) - y z + log1p(exp(-|z|))
    total += std::max(zi, 0.0) - static_cast<double>(labels[i]) * zi +
             std::log1p(std::exp(-std::abs(zi)));
  }
  const T scale = reduction == Reduction::mean ? T{1} / static_cast<T>(z.size()) : T{1};
  if (reduction == Reduction::mean) total /= static_cast<double>(z.size());
  return tape.record(Tensor<T>({1}, static_cast<T>(total)), {logits},
                     [labels, scale](const BackwardArgs<T>& a) {
                       const Tensor<T>& z = *a.inputs[0];
                       Tensor<T>& g = *a.grad_inputs[0];
                       const T go = a.grad_output[0] * scale;
                       for (std::size_t i = 0; i < z.size(); ++i) {
                         const T s = T{1} / (T{1} + std::exp(-z[i]));
                         g[i] += go * (s - labels[i]);
                       }
                     });
}

template <typename T>
Tensor<T> finite_difference_grad(const std::function<T(const Tensor<T>&)>& f,
                                 const Tensor<T>& at, T eps) {
  if (!(eps > T{0})) throw std::invalid_argument("finite difference step must be > 0");
  Tensor<T> grad(at.shape());
  Tensor<T> probe = at;
  for (std::size_t i = 0; i < at.size(); ++i) {
    const T orig = probe[i];
    probe[i] = orig + eps;
    const T up = f(probe);
    probe[i] = orig - eps;
    const T down = f(probe);
    probe[i] = orig;
    grad[i] = (up - down) / (T{2} * eps);
  }
  return grad;
}

#define ALTFREEZE_INSTANTIATE(T)                                                          \
  template class Tape<T>;                                                                 \
  template Var conv3d(Tape<T>&, Var, Var, std::optional<Var>, const Conv3dParams&);       \
  template Var batch_norm(Tape<T>&, Var, Var, Var, BatchNormStats<T>&, Mode,              \
                          const BatchNormOptions&);                                       \
  template Var relu(Tape<T>&, Var);                                                       \
  template Var sigmoid(Tape<T>&, Var);                                                    \
  template Var clamp(Tape<T>&, Var, T, T);                                                \
  template Var add(Tape<T>&, Var, Var);                                                   \
  template Var multiply(Tape<T>&, Var, Var);                                              \
  template Var sum(Tape<T>&, Var);                                                        \
  template Var reshape(Tape<T>&, Var, Shape);                                             \
  template Var global_avg_pool(Tape<T>&, Var);                                            \
  template Var linear(Tape<T>&, Var, Var, std::optional<Var>);                            \
  template Var bce_with_logits(Tape<T>&, Var, const Tensor<T>&, Reduction);               \
  template Tensor<T> finite_difference_grad(const std::function<T(const Tensor<T>&)>&,    \
                                            const Tensor<T>&, T);

ALTFREEZE_INSTANTIATE(float)
ALTFREEZE_INSTANTIATE(double)

#undef ALTFREEZE_INSTANTIATE

}  // namespace altfreeze
