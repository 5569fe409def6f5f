#pragma once

// Central finite-difference oracle for analytic gradients. Independent of the
// backward implementations: it only calls forward passes.

#include <algorithm>
#include <cmath>
#include <functional>
#include <cstdio>
#include <random>
#include <string>

#include "egocharm/nn/params.hpp"
#include "egocharm/tensor.hpp"

namespace egocharm::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::string worst;
};

/// Gradients below the floor are compared on an absolute scale, where central
/// differences at step 1e-5 are limited by round-off (about 1e-11).
inline constexpr double kRelativeFloor = 1e-6;

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kRelativeFloor});
  return std::abs(analytic - numeric) / denom;
}

/// Compares ps.grad (already filled by the analytic path) against central
/// differences of loss() with respect to every parameter scalar.
inline GradCheckResult check_param_grads(nn::ParamSet& ps, const std::function<double()>& loss, double step = 1e-5) {
  GradCheckResult out;
  for (auto& p : ps) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + step;
      const double up = loss();
      p.value[i] = saved - step;
      const double down = loss();
      p.value[i] = saved;
      const double numeric = (up - down) / (2 * step);
      const double err = relative_error(p.grad[i], numeric);
      out.max_abs_error = std::max(out.max_abs_error, std::abs(p.grad[i] - numeric));
      if (err > out.max_rel_error) {
        out.max_rel_error = err;
        char buf[96];
        std::snprintf(buf, sizeof(buf), "] analytic=%.6e numeric=%.6e", p.grad[i], numeric);
        out.worst = p.name + "[" + std::to_string(i) + buf;
      }
    }
  }
  return out;
}

inline GradCheckResult check_input_grad(Tensor& x, const Tensor& analytic, const std::function<double()>& loss,
                                        double step = 1e-5) {
  GradCheckResult out;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double up = loss();
    x[i] = saved - step;
    const double down = loss();
    x[i] = saved;
    const double err = relative_error(analytic[i], (up - down) / (2 * step));
    if (err > out.max_rel_error) {
      out.max_rel_error = err;
      out.worst = "input[" + std::to_string(i) + "]";
    }
  }
  return out;
}

inline Tensor random_tensor(std::initializer_list<std::size_t> shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor t(shape);
  std::normal_distribution<double> dist(0.0, scale);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

inline double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace egocharm::testing
