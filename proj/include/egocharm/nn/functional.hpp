#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "egocharm/tensor.hpp"

namespace egocharm::nn {

inline double sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

inline double leaky_relu(double v, double slope) { return v >= 0 ? v : slope * v; }

/// Max-subtracted softmax; outputs are strictly positive for finite inputs.
inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double hi = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (auto& v : p) {
    v = std::exp(v - hi);
    sum += v;
  }
  for (auto& v : p) v /= sum;
  return p;
}

/// out[r - row_begin] += M[r, :] . x for rows [row_begin, row_end).
inline void matvec_add(const Tensor& m, std::size_t row_begin, std::size_t row_end, std::span<const double> x,
                       std::span<double> out) {
  const std::size_t cols = m.dim(1);
  for (std::size_t r = row_begin; r < row_end; ++r) {
    const double* w = m.data() + r * cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += w[c] * x[c];
    out[r - row_begin] += acc;
  }
}

/// out += M[rows, :]^T . v
inline void matvec_t_add(const Tensor& m, std::size_t row_begin, std::size_t row_end, std::span<const double> v,
                         std::span<double> out) {
  const std::size_t cols = m.dim(1);
  for (std::size_t r = row_begin; r < row_end; ++r) {
    const double* w = m.data() + r * cols;
    const double s = v[r - row_begin];
    if (s == 0.0) continue;
    for (std::size_t c = 0; c < cols; ++c) out[c] += w[c] * s;
  }
}

/// G[rows, :] += v x^T
inline void outer_add(Tensor& g, std::size_t row_begin, std::span<const double> v, std::span<const double> x) {
  const std::size_t cols = g.dim(1);
  for (std::size_t r = 0; r < v.size(); ++r) {
    const double s = v[r];
    if (s == 0.0) continue;
    double* row = g.data() + (row_begin + r) * cols;
    for (std::size_t c = 0; c < cols; ++c) row[c] += s * x[c];
  }
}

/// Gate activations of one recurrent step; also serves as reusable scratch.
struct GruGates {
  std::vector<double> z, r, n, rh;
};

/// One GRU step. W is [3h x in], U is [3h x h], b is [3h], gate rows ordered z, r, n.
///   z = s(Wz x + Uz h + bz), r = s(Wr x + Ur h + br), n = tanh(Wn x + Un (r*h) + bn)
///   h' = (1 - z) * h + z * n
inline void gru_cell(std::span<const double> x, std::span<const double> h_prev, const Tensor& w, const Tensor& u,
                     const Tensor& b, std::span<double> h_out, GruGates& g) {
  const std::size_t h = h_prev.size();
  g.z.assign(b.data(), b.data() + h);
  g.r.assign(b.data() + h, b.data() + 2 * h);
  g.n.assign(b.data() + 2 * h, b.data() + 3 * h);
  g.rh.resize(h);
  matvec_add(w, 0, h, x, g.z);
  matvec_add(u, 0, h, h_prev, g.z);
  matvec_add(w, h, 2 * h, x, g.r);
  matvec_add(u, h, 2 * h, h_prev, g.r);
  for (std::size_t k = 0; k < h; ++k) {
    g.z[k] = sigmoid(g.z[k]);
    g.r[k] = sigmoid(g.r[k]);
    g.rh[k] = g.r[k] * h_prev[k];
  }
  matvec_add(w, 2 * h, 3 * h, x, g.n);
  matvec_add(u, 2 * h, 3 * h, g.rh, g.n);
  for (std::size_t k = 0; k < h; ++k) {
    g.n[k] = std::tanh(g.n[k]);
    h_out[k] = (1.0 - g.z[k]) * h_prev[k] + g.z[k] * g.n[k];
  }
}

inline std::vector<double> gru_cell(std::span<const double> x, std::span<const double> h_prev, const Tensor& w,
                                    const Tensor& u, const Tensor& b) {
  std::vector<double> out(h_prev.size());
  GruGates g;
  gru_cell(x, h_prev, w, u, b, out, g);
  return out;
}

struct LstmGates {
  std::vector<double> i, f, g, o, pre;
};

/// One LSTM step with gate rows ordered i, f, g, o.
///   c' = f * c + i * g,  h' = o * tanh(c')
inline void lstm_cell(std::span<const double> x, std::span<const double> h_prev, std::span<const double> c_prev,
                      const Tensor& w, const Tensor& u, const Tensor& b, std::span<double> h_out,
                      std::span<double> c_out, LstmGates& gt) {
  const std::size_t h = h_prev.size();
  gt.pre.assign(b.data(), b.data() + 4 * h);
  matvec_add(w, 0, 4 * h, x, gt.pre);
  matvec_add(u, 0, 4 * h, h_prev, gt.pre);
  gt.i.resize(h);
  gt.f.resize(h);
  gt.g.resize(h);
  gt.o.resize(h);
  for (std::size_t k = 0; k < h; ++k) {
    gt.i[k] = sigmoid(gt.pre[k]);
    gt.f[k] = sigmoid(gt.pre[h + k]);
    gt.g[k] = std::tanh(gt.pre[2 * h + k]);
    gt.o[k] = sigmoid(gt.pre[3 * h + k]);
    c_out[k] = gt.f[k] * c_prev[k] + gt.i[k] * gt.g[k];
    h_out[k] = gt.o[k] * std::tanh(c_out[k]);
  }
}

/// Returns {h', c'}.
inline std::pair<std::vector<double>, std::vector<double>> lstm_cell(std::span<const double> x,
                                                                     std::span<const double> h_prev,
                                                                     std::span<const double> c_prev, const Tensor& w,
                                                                     const Tensor& u, const Tensor& b) {
  std::vector<double> h(h_prev.size()), c(c_prev.size());
  LstmGates g;
  lstm_cell(x, h_prev, c_prev, w, u, b, h, c, g);
  return {std::move(h), std::move(c)};
}

}  // namespace egocharm::nn
