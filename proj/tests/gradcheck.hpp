#pragma once

#include <functional>
#include <string>
#include <vector>

#include "altfreeze/model.hpp"
#include "support.hpp"

namespace testing {

using altfreeze::Tape;
using altfreeze::Var;

using OpFn = std::function<Var(Tape<double>&, const std::vector<Var>&)>;

/// L = sum(op(inputs) * R) for a fixed random R, differentiated with respect
/// to every input.
inline GradCheck check_op(const OpFn& op, std::vector<Tensor<double>> inputs, Gen& gen) {
  Tensor<double> weights;
  auto build = [&](Tape<double>& tape) {
    std::vector<Var> vars;
    for (std::size_t i = 0; i < inputs.size(); ++i) vars.push_back(tape.parameter(i, inputs[i]));
    const Var out = op(tape, vars);
    if (weights.empty()) weights = gen.tensor<double>(tape.value(out).shape());
    return altfreeze::sum(tape, altfreeze::multiply(tape, out, tape.constant(weights)));
  };
  auto loss = [&] {
    Tape<double> tape;
    return tape.value(build(tape))[0];
  };
  Tape<double> tape;
  const auto grads = tape.backward(build(tape));
  GradCheck result;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    check_coordinates<double>(loss, inputs[i], grads.at(i), result);
  }
  return result;
}

struct NamedCheck {
  std::string name;
  GradCheck check;
};

/// Every layer primitive with shapes drawn from `seed`.
inline std::vector<NamedCheck> check_primitives(std::uint64_t seed) {
  using namespace altfreeze;
  Gen gen(seed);
  std::vector<NamedCheck> out;
  auto conv = [](Conv3dParams p, bool bias) {
    return OpFn([p, bias](Tape<double>& t, const std::vector<Var>& v) {
      return conv3d(t, v[0], v[1], bias ? std::optional<Var>(v[2]) : std::nullopt, p);
    });
  };
  const std::size_t b = gen.index(1, 2), ci = gen.index(1, 3), co = gen.index(1, 3);
  out.push_back({"conv3d strided padded",
                 check_op(conv({{1, 2, 1}, {1, 1, 0}}, true),
                          {gen.tensor<double>({b, ci, 4, 5, 5}), gen.tensor<double>({co, ci, 2, 3, 3}),
                           gen.tensor<double>({co})},
                          gen)});
  out.push_back({"conv3d temporal unbatched",
                 check_op(conv({{1, 1, 1}, {1, 0, 0}}, false),
                          {gen.tensor<double>({ci, 4, 3, 3}), gen.tensor<double>({co, ci, 3, 1, 1})}, gen)});
  out.push_back({"conv3d spatial stride 2",
                 check_op(conv({{1, 2, 2}, {0, 1, 1}}, false),
                          {gen.tensor<double>({b, ci, 2, 6, 6}), gen.tensor<double>({co, ci, 1, 3, 3})},
                          gen)});
  out.push_back({"conv3d pointwise",
                 check_op(conv({}, true),
                          {gen.tensor<double>({b, ci, 2, 3, 3}), gen.tensor<double>({co, ci, 1, 1, 1}),
                           gen.tensor<double>({co})},
                          gen)});
  const std::size_t c = gen.index(1, 3);
  out.push_back({"batch_norm train",
                 check_op(
                     [c](Tape<double>& t, const std::vector<Var>& v) {
                       BatchNormStats<double> stats(c);
                       return batch_norm(t, v[0], v[1], v[2], stats, Mode::train);
                     },
                     {gen.tensor<double>({3, c, 2, 2, 3}), gen.tensor<double>({c}, 0.5, 1.5),
                      gen.tensor<double>({c})},
                     gen)});
  out.push_back({"batch_norm eval",
                 check_op(
                     [c](Tape<double>& t, const std::vector<Var>& v) {
                       BatchNormStats<double> stats(c);
                       Gen fixed(7);
                       stats.running_mean = fixed.tensor<double>({c});
                       stats.running_var = fixed.tensor<double>({c}, 0.5, 2.0);
                       return batch_norm(t, v[0], v[1], v[2], stats, Mode::eval);
                     },
                     {gen.tensor<double>({2, c, 2, 3}), gen.tensor<double>({c}, 0.5, 1.5),
                      gen.tensor<double>({c})},
                     gen)});
  const Shape s{2, 3, 4};
  out.push_back({"relu", check_op([](Tape<double>& t, const std::vector<Var>& v) { return relu(t, v[0]); },
                                  {gen.tensor<double>(s)}, gen)});
  out.push_back({"sigmoid",
                 check_op([](Tape<double>& t, const std::vector<Var>& v) { return sigmoid(t, v[0]); },
                          {gen.tensor<double>(s, -4, 4)}, gen)});
  out.push_back({"clamp", check_op(
                              [](Tape<double>& t, const std::vector<Var>& v) {
                                return clamp(t, v[0], -0.5, 0.5);
                              },
                              {gen.tensor<double>(s)}, gen)});
  out.push_back({"add", check_op([](Tape<double>& t, const std::vector<Var>& v) { return add(t, v[0], v[1]); },
                                 {gen.tensor<double>(s), gen.tensor<double>(s)}, gen)});
  out.push_back({"multiply",
                 check_op([](Tape<double>& t, const std::vector<Var>& v) { return multiply(t, v[0], v[1]); },
                          {gen.tensor<double>(s), gen.tensor<double>(s)}, gen)});
  out.push_back({"sum", check_op([](Tape<double>& t, const std::vector<Var>& v) { return sum(t, v[0]); },
                                 {gen.tensor<double>(s)}, gen)});
  out.push_back({"reshape",
                 check_op([](Tape<double>& t, const std::vector<Var>& v) { return reshape(t, v[0], {6, 4}); },
                          {gen.tensor<double>(s)}, gen)});
  out.push_back({"global_avg_pool",
                 check_op([](Tape<double>& t, const std::vector<Var>& v) { return global_avg_pool(t, v[0]); },
                          {gen.tensor<double>({2, 3, 2, 2, 3})}, gen)});
  const std::size_t f = gen.index(1, 5), o = gen.index(1, 3);
  out.push_back({"linear",
                 check_op([](Tape<double>& t, const std::vector<Var>& v) { return linear(t, v[0], v[1], v[2]); },
                          {gen.tensor<double>({3, f}), gen.tensor<double>({o, f}), gen.tensor<double>({o})},
                          gen)});
  Tensor<double> labels({5});
  for (auto& y : labels.values()) y = gen.coin() ? 1.0 : 0.0;
  for (Reduction r : {Reduction::sum, Reduction::mean}) {
    out.push_back({r == Reduction::sum ? "bce_with_logits sum" : "bce_with_logits mean",
                   check_op(
                       [labels, r](Tape<double>& t, const std::vector<Var>& v) {
                         return bce_with_logits(t, v[0], labels, r);
                       },
                       {gen.tensor<double>({5}, -6, 6)}, gen)});
  }
  return out;
}

/// Full reference network in train mode: BCE of two random clips against
/// labels {0, 1}, checked on `per_tensor` random coordinates of every
/// parameter (all of them for smaller tensors).
inline GradCheck check_model(std::uint64_t seed, std::size_t per_tensor = 6) {
  using namespace altfreeze;
  Gen gen(seed);
  ModelSpec spec = ModelSpec::reference();
  spec.input_shape = {3, 8, 16, 16};
  Model<double> model = build_model<double>(spec, seed);
  // Nonzero biases and affine terms so their gradients are not degenerate.
  for (auto& p : model.parameters()) {
    if (p.info.kind == ParamKind::bn_beta || p.info.kind == ParamKind::linear_bias) {
      p.value = gen.tensor<double>(p.value.shape(), -0.2, 0.2);
    }
  }
  const Tensor<double> batch = gen.tensor<double>({2, 3, 8, 16, 16}, 0.0, 1.0);
  const Tensor<double> labels({2}, std::vector<double>{0.0, 1.0});
  auto build = [&](Tape<double>& tape) {
    const auto pass = model.record(tape, batch, Mode::train);
    return bce_with_logits(tape, pass.logits, labels, Reduction::mean);
  };
  auto loss = [&] {
    Tape<double> tape;
    return tape.value(build(tape))[0];
  };
  Tape<double> tape;
  const auto grads = tape.backward(build(tape));
  GradCheck result;
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    Tensor<double>& value = model.parameters()[i].value;
    std::vector<std::size_t> coords;
    if (value.size() > per_tensor) {
      for (std::size_t k = 0; k < per_tensor; ++k) coords.push_back(gen.index(0, value.size() - 1));
    }
    check_coordinates<double>(loss, value, grads.at(i), result, 1e-5, 1e-4, coords);
  }
  return result;
}

}  // namespace testing
