#pragma once

// Layer set for the encoders and heads. Sequence tensors are channels x time;
// vector tensors are rank 1. Every layer exposes forward, analytic backward,
// and static parameter / multiply-accumulate accounting.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "egocharm/nn/functional.hpp"
#include "egocharm/nn/params.hpp"
#include "egocharm/tensor.hpp"

namespace egocharm::nn {

inline constexpr std::size_t kUnbound = std::numeric_limits<std::size_t>::max();

using Shape = std::vector<std::size_t>;

/// Intermediates saved by one layer's forward pass.
struct Record {
  bool recorded = false;
  std::vector<Tensor> saved;
};

namespace detail {

inline void expect(bool ok, const std::string& layer, const std::string& what) {
  require(ok, ErrorCode::ShapeMismatch, layer + ": " + what);
}

inline const Record& recorded(const Record& rec, const char* layer) {
  require(rec.recorded, ErrorCode::GraphNotRecorded, std::string(layer) + " backward without a recorded forward pass");
  return rec;
}

inline Tensor transpose(const Tensor& m) {
  Tensor t({m.dim(1), m.dim(0)});
  for (std::size_t r = 0; r < m.dim(0); ++r)
    for (std::size_t c = 0; c < m.dim(1); ++c) t(c, r) = m(r, c);
  return t;
}

}  // namespace detail

/// Parallel dilated 1-D convolutions sharing one kernel size; branch outputs are
/// stacked along channels in dilation order. Zero "same" padding keeps T.
struct Conv1dBank {
  std::size_t in_channels = 0;
  std::size_t out_per_kernel = 0;
  std::size_t kernel = 0;
  std::vector<std::size_t> dilations;
  std::vector<std::size_t> w_idx, b_idx;

  std::size_t out_channels() const { return out_per_kernel * dilations.size(); }

  void validate() const {
    detail::expect(in_channels > 0 && out_per_kernel > 0 && kernel > 0, "Conv1dBank", "dimensions must be positive");
    detail::expect(!dilations.empty(), "Conv1dBank", "dilation set must be non-empty");
    for (std::size_t i = 0; i < dilations.size(); ++i) {
      detail::expect(dilations[i] > 0, "Conv1dBank", "dilations must be positive");
      for (std::size_t j = 0; j < i; ++j)
        detail::expect(dilations[i] != dilations[j], "Conv1dBank", "dilations must be distinct");
    }
  }

  void declare(ParamSet& ps, const std::string& prefix) {
    validate();
    w_idx.clear();
    b_idx.clear();
    for (auto d : dilations) {
      w_idx.push_back(ps.add(prefix + ".w_d" + std::to_string(d), {out_per_kernel, in_channels, kernel},
                             ParamRole::Weight, in_channels * kernel));
      b_idx.push_back(ps.add(prefix + ".b_d" + std::to_string(d), {out_per_kernel}, ParamRole::Bias, 1));
    }
  }

  Shape output_shape(const Shape& in) const {
    detail::expect(in.size() == 2 && in[0] == in_channels, "Conv1dBank", "expects " + std::to_string(in_channels) + " x T input");
    return {out_channels(), in[1]};
  }
  std::size_t param_count() const { return dilations.size() * (out_per_kernel * in_channels * kernel + out_per_kernel); }
  std::size_t bias_count() const { return dilations.size() * out_per_kernel; }
  std::size_t macs(const Shape& in) const { return dilations.size() * in[1] * out_per_kernel * kernel * in_channels; }

  static std::ptrdiff_t offset(std::size_t tap, std::size_t dilation, std::size_t kernel) {
    const auto left = static_cast<std::ptrdiff_t>(dilation * (kernel - 1) / 2);
    return static_cast<std::ptrdiff_t>(tap * dilation) - left;
  }

  Tensor forward(const ParamSet& ps, const Tensor& x, Record* rec) const {
    output_shape(x.shape());
    const std::size_t len = x.dim(1);
    const auto slen = static_cast<std::ptrdiff_t>(len);
    Tensor y({out_channels(), len});
    for (std::size_t bi = 0; bi < dilations.size(); ++bi) {
      const Tensor& w = ps.value(w_idx[bi]);
      const Tensor& b = ps.value(b_idx[bi]);
      for (std::size_t co = 0; co < out_per_kernel; ++co) {
        double* out = y.data() + (bi * out_per_kernel + co) * len;
        for (std::size_t t = 0; t < len; ++t) out[t] = b[co];
        for (std::size_t ci = 0; ci < in_channels; ++ci) {
          const double* xin = x.data() + ci * len;
          for (std::size_t j = 0; j < kernel; ++j) {
            const double wv = w(co, ci, j);
            const auto off = offset(j, dilations[bi], kernel);
            const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -off);
            const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(slen, slen - off);
            for (std::ptrdiff_t t = t0; t < t1; ++t) out[t] += wv * xin[t + off];
          }
        }
      }
    }
    if (rec) *rec = {true, {x}};
    return y;
  }

  Tensor backward(ParamSet& ps, const Tensor& dy, const Record& rec) const {
    const Tensor& x = detail::recorded(rec, "Conv1dBank").saved[0];
    const std::size_t len = x.dim(1);
    const auto slen = static_cast<std::ptrdiff_t>(len);
    Tensor dx({in_channels, len});
    for (std::size_t bi = 0; bi < dilations.size(); ++bi) {
      const Tensor& w = ps.value(w_idx[bi]);
      Tensor& dw = ps.grad(w_idx[bi]);
      Tensor& db = ps.grad(b_idx[bi]);
      for (std::size_t co = 0; co < out_per_kernel; ++co) {
        const double* g = dy.data() + (bi * out_per_kernel + co) * len;
        for (std::size_t t = 0; t < len; ++t) db[co] += g[t];
        for (std::size_t ci = 0; ci < in_channels; ++ci) {
          const double* xin = x.data() + ci * len;
          double* dxin = dx.data() + ci * len;
          for (std::size_t j = 0; j < kernel; ++j) {
            const double wv = w(co, ci, j);
            const auto off = offset(j, dilations[bi], kernel);
            const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -off);
            const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(slen, slen - off);
            double acc = 0.0;
            for (std::ptrdiff_t t = t0; t < t1; ++t) {
              acc += g[t] * xin[t + off];
              dxin[t + off] += wv * g[t];
            }
            dw(co, ci, j) += acc;
          }
        }
      }
    }
    return dx;
  }
};

enum class ActivationKind { Relu, LeakyRelu, Tanh, Sigmoid };

struct Activation {
  ActivationKind kind = ActivationKind::Relu;
  double slope = 0.01;

  void declare(ParamSet&, const std::string&) {}
  Shape output_shape(const Shape& in) const { return in; }
  std::size_t param_count() const { return 0; }
  std::size_t bias_count() const { return 0; }
  std::size_t macs(const Shape&) const { return 0; }

  double apply(double v) const {
    switch (kind) {
      case ActivationKind::Relu: return v > 0 ? v : 0.0;
      case ActivationKind::LeakyRelu: return leaky_relu(v, slope);
      case ActivationKind::Tanh: return std::tanh(v);
      case ActivationKind::Sigmoid: return sigmoid(v);
    }
    return v;
  }

  Tensor forward(const ParamSet&, const Tensor& x, Record* rec) const {
    Tensor y = x;
    for (auto& v : y.values()) v = apply(v);
    if (rec) *rec = {true, {x, y}};
    return y;
  }

  Tensor backward(ParamSet&, const Tensor& dy, const Record& rec) const {
    const auto& saved = detail::recorded(rec, "Activation").saved;
    const Tensor& x = saved[0];
    const Tensor& y = saved[1];
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i) {
      switch (kind) {
        case ActivationKind::Relu: dx[i] *= x[i] > 0 ? 1.0 : 0.0; break;
        case ActivationKind::LeakyRelu: dx[i] *= x[i] >= 0 ? 1.0 : slope; break;
        case ActivationKind::Tanh: dx[i] *= 1.0 - y[i] * y[i]; break;
        case ActivationKind::Sigmoid: dx[i] *= y[i] * (1.0 - y[i]); break;
      }
    }
    return dx;
  }
};

/// Group normalization over (channels in group) x time with per-channel affine.
struct GroupNorm {
  std::size_t groups = 1;
  std::size_t channels = 0;
  double eps = 1e-5;
  std::size_t gamma_idx = kUnbound, beta_idx = kUnbound;

  void declare(ParamSet& ps, const std::string& prefix) {
    detail::expect(groups > 0 && channels > 0 && channels % groups == 0, "GroupNorm",
                   "channels must be a positive multiple of groups");
    gamma_idx = ps.add(prefix + ".gamma", {channels}, ParamRole::Scale, 1);
    beta_idx = ps.add(prefix + ".beta", {channels}, ParamRole::Bias, 1);
  }
  Shape output_shape(const Shape& in) const {
    detail::expect(in.size() == 2 && in[0] == channels, "GroupNorm", "expects " + std::to_string(channels) + " x T input");
    return in;
  }
  std::size_t param_count() const { return 2 * channels; }
  std::size_t bias_count() const { return channels; }
  std::size_t macs(const Shape&) const { return 0; }

  Tensor forward(const ParamSet& ps, const Tensor& x, Record* rec) const {
    output_shape(x.shape());
    const std::size_t len = x.dim(1);
    const std::size_t per = channels / groups;
    const Tensor& gamma = ps.value(gamma_idx);
    const Tensor& beta = ps.value(beta_idx);
    Tensor xhat({channels, len});
    Tensor inv_std({groups});
    Tensor y({channels, len});
    const double count = static_cast<double>(per * len);
    for (std::size_t g = 0; g < groups; ++g) {
      double mean = 0.0, var = 0.0;
      for (std::size_t c = g * per; c < (g + 1) * per; ++c)
        for (double v : x.row(c)) mean += v;
      mean /= count;
      for (std::size_t c = g * per; c < (g + 1) * per; ++c)
        for (double v : x.row(c)) var += (v - mean) * (v - mean);
      var /= count;
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[g] = is;
      for (std::size_t c = g * per; c < (g + 1) * per; ++c)
        for (std::size_t t = 0; t < len; ++t) {
          xhat(c, t) = (x(c, t) - mean) * is;
          y(c, t) = gamma[c] * xhat(c, t) + beta[c];
        }
    }
    if (rec) *rec = {true, {xhat, inv_std}};
    return y;
  }

  Tensor backward(ParamSet& ps, const Tensor& dy, const Record& rec) const {
    const auto& saved = detail::recorded(rec, "GroupNorm").saved;
    const Tensor& xhat = saved[0];
    const Tensor& inv_std = saved[1];
    const std::size_t len = xhat.dim(1);
    const std::size_t per = channels / groups;
    const Tensor& gamma = ps.value(gamma_idx);
    Tensor& dgamma = ps.grad(gamma_idx);
    Tensor& dbeta = ps.grad(beta_idx);
    Tensor dx({channels, len});
    const double count = static_cast<double>(per * len);
    for (std::size_t g = 0; g < groups; ++g) {
      double sum_d = 0.0, sum_dx = 0.0;
      for (std::size_t c = g * per; c < (g + 1) * per; ++c)
        for (std::size_t t = 0; t < len; ++t) {
          dgamma[c] += dy(c, t) * xhat(c, t);
          dbeta[c] += dy(c, t);
          const double dxh = dy(c, t) * gamma[c];
          sum_d += dxh;
          sum_dx += dxh * xhat(c, t);
        }
      const double mean_d = sum_d / count;
      const double mean_dx = sum_dx / count;
      for (std::size_t c = g * per; c < (g + 1) * per; ++c)
        for (std::size_t t = 0; t < len; ++t) {
          const double dxh = dy(c, t) * gamma[c];
          dx(c, t) = inv_std[g] * (dxh - mean_d - xhat(c, t) * mean_dx);
        }
    }
    return dx;
  }
};

enum class PoolKind { Average, Max };

/// Non-overlapping pooling along time; size 0 pools globally into a rank-1 vector.
struct TimePool {
  PoolKind kind = PoolKind::Average;
  std::size_t size = 0;

  void declare(ParamSet&, const std::string&) {}
  Shape output_shape(const Shape& in) const {
    detail::expect(in.size() == 2 && in[1] > 0, "TimePool", "expects C x T input");
    if (size == 0) return {in[0]};
    detail::expect(in[1] >= size, "TimePool", "window longer than sequence");
    return {in[0], in[1] / size};
  }
  std::size_t param_count() const { return 0; }
  std::size_t bias_count() const { return 0; }
  std::size_t macs(const Shape&) const { return 0; }

  Tensor forward(const ParamSet&, const Tensor& x, Record* rec) const {
    const Shape out_shape = output_shape(x.shape());
    const std::size_t len = x.dim(1);
    const std::size_t width = size == 0 ? len : size;
    const std::size_t steps = size == 0 ? 1 : len / size;
    Tensor y(out_shape);
    Tensor argmax(out_shape);
    for (std::size_t c = 0; c < x.dim(0); ++c)
      for (std::size_t s = 0; s < steps; ++s) {
        const double* src = x.data() + c * len + s * width;
        double acc = kind == PoolKind::Average ? 0.0 : src[0];
        std::size_t best = 0;
        for (std::size_t k = 0; k < width; ++k) {
          if (kind == PoolKind::Average) {
            acc += src[k];
          } else if (src[k] > acc) {
            acc = src[k];
            best = k;
          }
        }
        if (kind == PoolKind::Average) acc /= static_cast<double>(width);
        y[c * steps + s] = acc;
        argmax[c * steps + s] = static_cast<double>(best);
      }
    if (rec) *rec = {true, {Tensor({x.dim(0), len}), argmax}};
    return y;
  }

  Tensor backward(ParamSet&, const Tensor& dy, const Record& rec) const {
    const auto& saved = detail::recorded(rec, "TimePool").saved;
    Tensor dx(saved[0].shape());
    const Tensor& argmax = saved[1];
    const std::size_t len = dx.dim(1);
    const std::size_t width = size == 0 ? len : size;
    const std::size_t steps = size == 0 ? 1 : len / size;
    for (std::size_t c = 0; c < dx.dim(0); ++c)
      for (std::size_t s = 0; s < steps; ++s) {
        const double g = dy[c * steps + s];
        double* dst = dx.data() + c * len + s * width;
        if (kind == PoolKind::Average) {
          for (std::size_t k = 0; k < width; ++k) dst[k] += g / static_cast<double>(width);
        } else {
          dst[static_cast<std::size_t>(argmax[c * steps + s])] += g;
        }
      }
    return dx;
  }
};

/// y = W x + b on a flattened input of in_features scalars.
struct Dense {
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  bool bias = true;
  std::size_t w_idx = kUnbound, b_idx = kUnbound;

  void declare(ParamSet& ps, const std::string& prefix) {
    detail::expect(in_features > 0 && out_features > 0, "Dense", "dimensions must be positive");
    w_idx = ps.add(prefix + ".w", {out_features, in_features}, ParamRole::Weight, in_features);
    if (bias) b_idx = ps.add(prefix + ".b", {out_features}, ParamRole::Bias, 1);
  }
  Shape output_shape(const Shape& in) const {
    std::size_t n = 1;
    for (auto d : in) n *= d;
    detail::expect(n == in_features, "Dense", "expects " + std::to_string(in_features) + " inputs, got " + std::to_string(n));
    return {out_features};
  }
  std::size_t param_count() const { return in_features * out_features + (bias ? out_features : 0); }
  std::size_t bias_count() const { return bias ? out_features : 0; }
  std::size_t macs(const Shape&) const { return in_features * out_features; }

  Tensor forward(const ParamSet& ps, const Tensor& x, Record* rec) const {
    output_shape(x.shape());
    Tensor y({out_features});
    if (bias) std::copy(ps.value(b_idx).data(), ps.value(b_idx).data() + out_features, y.data());
    matvec_add(ps.value(w_idx), 0, out_features, x.values(), y.values());
    if (rec) *rec = {true, {x}};
    return y;
  }

  Tensor backward(ParamSet& ps, const Tensor& dy, const Record& rec) const {
    const Tensor& x = detail::recorded(rec, "Dense").saved[0];
    outer_add(ps.grad(w_idx), 0, dy.values(), x.values());
    if (bias) ps.grad(b_idx) += dy;
    Tensor dx(x.shape());
    matvec_t_add(ps.value(w_idx), 0, out_features, dy.values(), dx.values());
    return dx;
  }
};

/// GRU over an input x T sequence, emitting hidden x T. Initial state is zero.
struct Gru {
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  std::size_t w_idx = kUnbound, u_idx = kUnbound, b_idx = kUnbound;

  void declare(ParamSet& ps, const std::string& prefix) {
    detail::expect(input_size > 0 && hidden_size > 0, "Gru", "dimensions must be positive");
    w_idx = ps.add(prefix + ".w", {3 * hidden_size, input_size}, ParamRole::Weight, input_size);
    u_idx = ps.add(prefix + ".u", {3 * hidden_size, hidden_size}, ParamRole::Weight, hidden_size);
    b_idx = ps.add(prefix + ".b", {3 * hidden_size}, ParamRole::Bias, 1);
  }
  Shape output_shape(const Shape& in) const {
    detail::expect(in.size() == 2 && in[0] == input_size && in[1] > 0, "Gru",
                   "expects " + std::to_string(input_size) + " x T input");
    return {hidden_size, in[1]};
  }
  std::size_t param_count() const { return 3 * (input_size * hidden_size + hidden_size * hidden_size + hidden_size); }
  std::size_t bias_count() const { return 3 * hidden_size; }
  std::size_t macs(const Shape& in) const {
    return in[1] * 3 * (input_size * hidden_size + hidden_size * hidden_size);
  }

  Tensor forward(const ParamSet& ps, const Tensor& x, Record* rec) const {
    output_shape(x.shape());
    const std::size_t steps = x.dim(1);
    const std::size_t h = hidden_size;
    const Tensor xt = detail::transpose(x);  // T x in
    Tensor hs({steps + 1, h});               // row 0 is the zero initial state
    Tensor gates({steps, 3 * h});
    GruGates g;
    for (std::size_t t = 0; t < steps; ++t) {
      gru_cell(xt.row(t), hs.row(t), ps.value(w_idx), ps.value(u_idx), ps.value(b_idx), hs.row(t + 1), g);
      auto grow = gates.row(t);
      std::copy(g.z.begin(), g.z.end(), grow.begin());
      std::copy(g.r.begin(), g.r.end(), grow.begin() + h);
      std::copy(g.n.begin(), g.n.end(), grow.begin() + 2 * h);
    }
    Tensor y({h, steps});
    for (std::size_t t = 0; t < steps; ++t)
      for (std::size_t k = 0; k < h; ++k) y(k, t) = hs(t + 1, k);
    if (rec) *rec = {true, {xt, hs, gates}};
    return y;
  }

  Tensor backward(ParamSet& ps, const Tensor& dy, const Record& rec) const {
    const auto& saved = detail::recorded(rec, "Gru").saved;
    const Tensor& xt = saved[0];
    const Tensor& hs = saved[1];
    const Tensor& gates = saved[2];
    const std::size_t steps = xt.dim(0);
    const std::size_t h = hidden_size;
    const Tensor& u = ps.value(u_idx);
    const Tensor& w = ps.value(w_idx);
    Tensor& dw = ps.grad(w_idx);
    Tensor& du = ps.grad(u_idx);
    Tensor& db = ps.grad(b_idx);
    Tensor dxt({steps, input_size});
    std::vector<double> carry(h, 0.0), dh(h), da(3 * h), rh(h), drh(h);
    for (std::size_t ti = steps; ti-- > 0;) {
      auto hp = hs.row(ti);
      auto grow = gates.row(ti);
      const double* z = grow.data();
      const double* r = grow.data() + h;
      const double* n = grow.data() + 2 * h;
      for (std::size_t k = 0; k < h; ++k) dh[k] = dy(k, ti) + carry[k];
      // candidate gate
      for (std::size_t k = 0; k < h; ++k) {
        da[2 * h + k] = dh[k] * z[k] * (1.0 - n[k] * n[k]);
        rh[k] = r[k] * hp[k];
        carry[k] = dh[k] * (1.0 - z[k]);
        drh[k] = 0.0;
      }
      std::span<const double> dan(da.data() + 2 * h, h);
      outer_add(du, 2 * h, dan, rh);
      matvec_t_add(u, 2 * h, 3 * h, dan, drh);
      for (std::size_t k = 0; k < h; ++k) {
        carry[k] += drh[k] * r[k];
        const double dr = drh[k] * hp[k];
        const double dz = dh[k] * (n[k] - hp[k]);
        da[k] = dz * z[k] * (1.0 - z[k]);
        da[h + k] = dr * r[k] * (1.0 - r[k]);
      }
      std::span<const double> dazr(da.data(), 2 * h);
      outer_add(du, 0, dazr, hp);
      matvec_t_add(u, 0, 2 * h, dazr, carry);
      outer_add(dw, 0, da, xt.row(ti));
      for (std::size_t k = 0; k < 3 * h; ++k) db[k] += da[k];
      matvec_t_add(w, 0, 3 * h, da, dxt.row(ti));
    }
    return detail::transpose(dxt);
  }
};

/// LSTM over an input x T sequence, emitting hidden x T. Initial states are zero.
struct Lstm {
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  std::size_t w_idx = kUnbound, u_idx = kUnbound, b_idx = kUnbound;

  void declare(ParamSet& ps, const std::string& prefix) {
    detail::expect(input_size > 0 && hidden_size > 0, "Lstm", "dimensions must be positive");
    w_idx = ps.add(prefix + ".w", {4 * hidden_size, input_size}, ParamRole::Weight, input_size);
    u_idx = ps.add(prefix + ".u", {4 * hidden_size, hidden_size}, ParamRole::Weight, hidden_size);
    b_idx = ps.add(prefix + ".b", {4 * hidden_size}, ParamRole::Bias, 1);
  }
  Shape output_shape(const Shape& in) const {
    detail::expect(in.size() == 2 && in[0] == input_size && in[1] > 0, "Lstm",
                   "expects " + std::to_string(input_size) + " x T input");
    return {hidden_size, in[1]};
  }
  std::size_t param_count() const { return 4 * (input_size * hidden_size + hidden_size * hidden_size + hidden_size); }
  std::size_t bias_count() const { return 4 * hidden_size; }
  std::size_t macs(const Shape& in) const {
    return in[1] * 4 * (input_size * hidden_size + hidden_size * hidden_size);
  }

  Tensor forward(const ParamSet& ps, const Tensor& x, Record* rec) const {
    output_shape(x.shape());
    const std::size_t steps = x.dim(1);
    const std::size_t h = hidden_size;
    const Tensor xt = detail::transpose(x);
    Tensor hs({steps + 1, h});
    Tensor cs({steps + 1, h});
    Tensor gates({steps, 4 * h});
    LstmGates g;
    for (std::size_t t = 0; t < steps; ++t) {
      lstm_cell(xt.row(t), hs.row(t), cs.row(t), ps.value(w_idx), ps.value(u_idx), ps.value(b_idx), hs.row(t + 1),
                cs.row(t + 1), g);
      auto grow = gates.row(t);
      std::copy(g.i.begin(), g.i.end(), grow.begin());
      std::copy(g.f.begin(), g.f.end(), grow.begin() + h);
      std::copy(g.g.begin(), g.g.end(), grow.begin() + 2 * h);
      std::copy(g.o.begin(), g.o.end(), grow.begin() + 3 * h);
    }
    Tensor y({h, steps});
    for (std::size_t t = 0; t < steps; ++t)
      for (std::size_t k = 0; k < h; ++k) y(k, t) = hs(t + 1, k);
    if (rec) *rec = {true, {xt, hs, cs, gates}};
    return y;
  }

  Tensor backward(ParamSet& ps, const Tensor& dy, const Record& rec) const {
    const auto& saved = detail::recorded(rec, "Lstm").saved;
    const Tensor& xt = saved[0];
    const Tensor& hs = saved[1];
    const Tensor& cs = saved[2];
    const Tensor& gates = saved[3];
    const std::size_t steps = xt.dim(0);
    const std::size_t h = hidden_size;
    Tensor dxt({steps, input_size});
    std::vector<double> dh_carry(h, 0.0), dc_carry(h, 0.0), da(4 * h);
    for (std::size_t ti = steps; ti-- > 0;) {
      auto grow = gates.row(ti);
      const double* gi = grow.data();
      const double* gf = grow.data() + h;
      const double* gg = grow.data() + 2 * h;
      const double* go = grow.data() + 3 * h;
      auto c = cs.row(ti + 1);
      auto cp = cs.row(ti);
      for (std::size_t k = 0; k < h; ++k) {
        const double dh = dy(k, ti) + dh_carry[k];
        const double tc = std::tanh(c[k]);
        const double dc = dc_carry[k] + dh * go[k] * (1.0 - tc * tc);
        da[k] = dc * gg[k] * gi[k] * (1.0 - gi[k]);
        da[h + k] = dc * cp[k] * gf[k] * (1.0 - gf[k]);
        da[2 * h + k] = dc * gi[k] * (1.0 - gg[k] * gg[k]);
        da[3 * h + k] = dh * tc * go[k] * (1.0 - go[k]);
        dc_carry[k] = dc * gf[k];
        dh_carry[k] = 0.0;
      }
      outer_add(ps.grad(u_idx), 0, da, hs.row(ti));
      outer_add(ps.grad(w_idx), 0, da, xt.row(ti));
      Tensor& db = ps.grad(b_idx);
      for (std::size_t k = 0; k < 4 * h; ++k) db[k] += da[k];
      matvec_t_add(ps.value(u_idx), 0, 4 * h, da, dh_carry);
      matvec_t_add(ps.value(w_idx), 0, 4 * h, da, dxt.row(ti));
    }
    return detail::transpose(dxt);
  }
};

/// Selects the final time step of a hidden x T sequence as a rank-1 vector.
struct LastStep {
  void declare(ParamSet&, const std::string&) {}
  Shape output_shape(const Shape& in) const {
    detail::expect(in.size() == 2 && in[1] > 0, "LastStep", "expects C x T input");
    return {in[0]};
  }
  std::size_t param_count() const { return 0; }
  std::size_t bias_count() const { return 0; }
  std::size_t macs(const Shape&) const { return 0; }

  Tensor forward(const ParamSet&, const Tensor& x, Record* rec) const {
    output_shape(x.shape());
    Tensor y({x.dim(0)});
    for (std::size_t c = 0; c < x.dim(0); ++c) y[c] = x(c, x.dim(1) - 1);
    if (rec) *rec = {true, {Tensor({x.dim(0), x.dim(1)})}};
    return y;
  }

  Tensor backward(ParamSet&, const Tensor& dy, const Record& rec) const {
    Tensor dx = detail::recorded(rec, "LastStep").saved[0];
    for (std::size_t c = 0; c < dx.dim(0); ++c) dx(c, dx.dim(1) - 1) = dy[c];
    return dx;
  }
};

}  // namespace egocharm::nn
