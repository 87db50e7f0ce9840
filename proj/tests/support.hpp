#pragma once

// Shared by the unit tests and the acceptance binary: random generators and
// a finite-difference gradient checker that does not use library helpers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <vector>

#include "altfreeze/autodiff.hpp"
#include "altfreeze/clip.hpp"
#include "altfreeze/tensor.hpp"

namespace testing {

using altfreeze::Shape;
using altfreeze::Tensor;

struct Gen {
  std::mt19937_64 rng;
  explicit Gen(std::uint64_t seed) : rng(seed * 0x9E3779B97F4A7C15ULL + 17) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  std::size_t index(std::size_t lo, std::size_t hi) {  // inclusive
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  }
  bool coin(double p = 0.5) { return uniform(0.0, 1.0) < p; }

  template <typename T>
  Tensor<T> tensor(Shape shape, double lo = -1.0, double hi = 1.0) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.values()) v = static_cast<T>(uniform(lo, hi));
    return t;
  }

  altfreeze::Clip clip(std::size_t c, std::size_t t, std::size_t h, std::size_t w) {
    return altfreeze::Clip(tensor<float>({c, t, h, w}, 0.0, 1.0));
  }
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps gradients that are zero
/// up to rounding from dividing noise by noise.
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheck {
  double max_rel = 0.0;
  std::size_t checked = 0;
  // Coordinates whose eps-stencil straddled a ReLU or clamp kink (central
  // differences at eps and eps/2 disagree). Each is re-verified with a
  // narrower stencil instead; `kink_failures` counts those that still miss.
  std::size_t kinks = 0;
  std::size_t kink_failures = 0;

  bool passed(double tolerance = 1e-4) const {
    return checked > 0 && max_rel < tolerance && kink_failures == 0;
  }
};

/// Compares `analytic` with central differences of `f` around `x` on the
/// listed coordinates (all when empty). `x` is restored afterwards.
template <typename T>
void check_coordinates(const std::function<double()>& f, Tensor<T>& x, const Tensor<T>& analytic,
                       GradCheck& out, double eps = 1e-5, double tolerance = 1e-4,
                       std::vector<std::size_t> coords = {}) {
  if (coords.empty()) {
    coords.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) coords[i] = i;
  }
  auto central = [&](std::size_t i, double h) {
    const T saved = x[i];
    x[i] = saved + static_cast<T>(h);
    const double up = f();
    x[i] = saved - static_cast<T>(h);
    const double down = f();
    x[i] = saved;
    return (up - down) / (2 * h);
  };
  for (std::size_t i : coords) {
    const double numeric = central(i, eps);
    double rel = rel_error(analytic[i], numeric);
    if (rel >= tolerance) {
      const double half = central(i, eps / 2);
      // Smooth functions give agreement to ~1e-10 here.
      if (rel_error(numeric, half) > 1e-6) {
        ++out.kinks;
        bool ok = false;
        // Narrow stencils carry ~1e-9 absolute rounding, hence the floor.
        for (double h : {eps / 10, eps / 100}) {
          ok = ok || rel_error(analytic[i], central(i, h), 1e-4) < tolerance;
        }
        if (!ok) ++out.kink_failures;
        continue;
      }
    }
    out.max_rel = std::max(out.max_rel, rel);
    ++out.checked;
  }
}

}  // namespace testing
