#pragma once

// Model zoo: low-level encoders, high-level heads, their hierarchical
// composition, the probing head, and parameter / FLOP accounting.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "egocharm/config.hpp"
#include "egocharm/nn/functional.hpp"
#include "egocharm/nn/sequential.hpp"
#include "egocharm/signal.hpp"

namespace egocharm {

enum class EncoderVariant { MlpFeatures, Cnn, Imu2Clip, CnnLstm, CnnGru };
enum class HeadVariant { Mlp, Gru, Lstm };

inline std::string to_string(EncoderVariant v) {
  switch (v) {
    case EncoderVariant::MlpFeatures: return "mlp_features";
    case EncoderVariant::Cnn: return "cnn";
    case EncoderVariant::Imu2Clip: return "imu2clip";
    case EncoderVariant::CnnLstm: return "cnn_lstm";
    case EncoderVariant::CnnGru: return "cnn_gru";
  }
  return "?";
}

inline std::string to_string(HeadVariant v) {
  switch (v) {
    case HeadVariant::Mlp: return "mlp";
    case HeadVariant::Gru: return "gru";
    case HeadVariant::Lstm: return "lstm";
  }
  return "?";
}

inline EncoderVariant parse_encoder_variant(const std::string& s) {
  for (auto v : {EncoderVariant::MlpFeatures, EncoderVariant::Cnn, EncoderVariant::Imu2Clip, EncoderVariant::CnnLstm,
                 EncoderVariant::CnnGru})
    if (to_string(v) == s) return v;
  fail(ErrorCode::SpecParseError, "key 'encoder': unknown variant '" + s + "'");
}

inline HeadVariant parse_head_variant(const std::string& s) {
  for (auto v : {HeadVariant::Mlp, HeadVariant::Gru, HeadVariant::Lstm})
    if (to_string(v) == s) return v;
  fail(ErrorCode::SpecParseError, "key 'head': unknown variant '" + s + "'");
}

struct EncoderSpec {
  EncoderVariant variant = EncoderVariant::CnnGru;
  std::size_t embedding_dim = 32;
  // raw-input variants
  std::size_t kernel_size = 3;
  std::vector<std::size_t> dilations{1, 2, 4};
  std::size_t conv_layers = 2;
  std::size_t channels_per_kernel = 16;
  std::size_t recurrent_layers = 1;
  nn::PoolKind pool = nn::PoolKind::Average;
  /// Temporal pooling after the conv stack; 1 disables it. The cnn variant always pools globally.
  std::size_t pool_size = 1;
  std::size_t groups = 4;
  // mlp_features variant
  std::vector<std::size_t> mlp_hidden{48, 48};
  bool deploy_on_chip = true;
};

struct HeadSpec {
  HeadVariant variant = HeadVariant::Gru;
  std::vector<std::size_t> hidden{64};
  std::size_t num_classes = 9;
};

struct ModelSpec {
  EncoderSpec encoder;
  HeadSpec head;
  double rate_hz = 50.0;
  double ll_window_s = 1.0;
  double hl_window_s = 30.0;
  std::size_t probe_classes = 3;
  double probe_slope = 0.01;

  std::size_t ll_samples() const { return detail::exact_samples(ll_window_s, rate_hz, "low-level window"); }

  /// Low-level windows per high-level window.
  std::size_t windows_per_hl() const {
    const std::size_t hl = detail::exact_samples(hl_window_s, rate_hz, "high-level window");
    const std::size_t ll = ll_samples();
    require(hl % ll == 0, ErrorCode::NonDivisibleWindow, "high-level window is not a multiple of the low-level window");
    return hl / ll;
  }
};

inline const std::vector<std::string>& model_spec_keys() {
  static const std::vector<std::string> keys{
      "encoder",     "embedding_dim", "kernel_size",   "dilations",   "conv_layers",     "channels_per_kernel",
      "recurrent_layers", "pool",     "pool_size",     "groups",      "mlp_hidden",      "deploy_on_chip",
      "head",        "head_hidden",   "num_classes",   "rate_hz",     "ll_window_s",     "hl_window_s",
      "probe_classes", "probe_slope"};
  return keys;
}

namespace detail {

inline std::string join_counts(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

/// Shortest text that parses back to the same double.
inline std::string format_number(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

inline KeyValues to_key_values(const ModelSpec& s) {
  KeyValues kv;
  kv["encoder"] = to_string(s.encoder.variant);
  kv["embedding_dim"] = std::to_string(s.encoder.embedding_dim);
  kv["kernel_size"] = std::to_string(s.encoder.kernel_size);
  kv["dilations"] = detail::join_counts(s.encoder.dilations);
  kv["conv_layers"] = std::to_string(s.encoder.conv_layers);
  kv["channels_per_kernel"] = std::to_string(s.encoder.channels_per_kernel);
  kv["recurrent_layers"] = std::to_string(s.encoder.recurrent_layers);
  kv["pool"] = s.encoder.pool == nn::PoolKind::Average ? "average" : "max";
  kv["pool_size"] = std::to_string(s.encoder.pool_size);
  kv["groups"] = std::to_string(s.encoder.groups);
  kv["mlp_hidden"] = detail::join_counts(s.encoder.mlp_hidden);
  kv["deploy_on_chip"] = s.encoder.deploy_on_chip ? "true" : "false";
  kv["head"] = to_string(s.head.variant);
  kv["head_hidden"] = s.head.hidden.empty() ? "none" : detail::join_counts(s.head.hidden);
  kv["num_classes"] = std::to_string(s.head.num_classes);
  kv["rate_hz"] = detail::format_number(s.rate_hz);
  kv["ll_window_s"] = detail::format_number(s.ll_window_s);
  kv["hl_window_s"] = detail::format_number(s.hl_window_s);
  kv["probe_classes"] = std::to_string(s.probe_classes);
  kv["probe_slope"] = detail::format_number(s.probe_slope);
  return kv;
}

/// Missing keys keep their defaults; unknown keys and malformed values throw SpecParseError.
inline ModelSpec model_spec_from_key_values(const KeyValues& kv) {
  KeyReader r(kv);
  r.reject_unknown(model_spec_keys());
  ModelSpec s;
  auto& e = s.encoder;
  if (r.has("encoder")) e.variant = parse_encoder_variant(r.text("encoder"));
  if (r.has("embedding_dim")) e.embedding_dim = r.count("embedding_dim");
  if (r.has("kernel_size")) e.kernel_size = r.count("kernel_size");
  if (r.has("dilations")) e.dilations = r.counts("dilations");
  if (r.has("conv_layers")) e.conv_layers = r.count("conv_layers");
  if (r.has("channels_per_kernel")) e.channels_per_kernel = r.count("channels_per_kernel");
  if (r.has("recurrent_layers")) e.recurrent_layers = r.count("recurrent_layers");
  if (r.has("pool")) {
    const std::string p = r.text("pool");
    require(p == "average" || p == "max", ErrorCode::SpecParseError, "key 'pool': expected average or max");
    e.pool = p == "average" ? nn::PoolKind::Average : nn::PoolKind::Max;
  }
  if (r.has("pool_size")) e.pool_size = r.count("pool_size");
  if (r.has("groups")) e.groups = r.count("groups");
  if (r.has("mlp_hidden")) e.mlp_hidden = r.text("mlp_hidden") == "none" ? std::vector<std::size_t>{} : r.counts("mlp_hidden");
  if (r.has("deploy_on_chip")) {
    const std::string v = r.text("deploy_on_chip");
    require(v == "true" || v == "false", ErrorCode::SpecParseError, "key 'deploy_on_chip': expected true or false");
    e.deploy_on_chip = v == "true";
  }
  if (r.has("head")) s.head.variant = parse_head_variant(r.text("head"));
  if (r.has("head_hidden"))
    s.head.hidden = r.text("head_hidden") == "none" ? std::vector<std::size_t>{} : r.counts("head_hidden");
  if (r.has("num_classes")) s.head.num_classes = r.count("num_classes");
  if (r.has("rate_hz")) s.rate_hz = r.number("rate_hz");
  if (r.has("ll_window_s")) s.ll_window_s = r.number("ll_window_s");
  if (r.has("hl_window_s")) s.hl_window_s = r.number("hl_window_s");
  if (r.has("probe_classes")) s.probe_classes = r.count("probe_classes");
  if (r.has("probe_slope")) s.probe_slope = r.number("probe_slope");

  auto positive = [](bool ok, const char* key) {
    require(ok, ErrorCode::SpecParseError, std::string("key '") + key + "': must be positive");
  };
  positive(e.embedding_dim > 0, "embedding_dim");
  positive(e.kernel_size > 0, "kernel_size");
  positive(e.channels_per_kernel > 0, "channels_per_kernel");
  positive(e.pool_size > 0, "pool_size");
  positive(e.groups > 0, "groups");
  positive(s.head.num_classes > 1, "num_classes");
  positive(s.probe_classes > 1, "probe_classes");
  positive(s.rate_hz > 0, "rate_hz");
  positive(s.ll_window_s > 0, "ll_window_s");
  positive(s.hl_window_s > 0, "hl_window_s");
  for (auto d : e.dilations) positive(d > 0, "dilations");
  if (e.variant != EncoderVariant::MlpFeatures && e.variant != EncoderVariant::Cnn) positive(e.recurrent_layers > 0, "recurrent_layers");
  if (e.variant != EncoderVariant::MlpFeatures) positive(e.conv_layers > 0, "conv_layers");
  if (s.head.variant != HeadVariant::Mlp) positive(!s.head.hidden.empty(), "head_hidden");
  return s;
}

inline ModelSpec load_model_spec(const std::string& path) { return model_spec_from_key_values(parse_key_values(read_text_file(path))); }

inline nn::Sequential build_encoder(const EncoderSpec& s) {
  nn::Sequential net;
  const std::size_t o = s.embedding_dim;
  if (s.variant == EncoderVariant::MlpFeatures) {
    std::size_t in = kFeatureCount;
    for (auto h : s.mlp_hidden) {
      net.push(nn::Dense{in, h});
      net.push(nn::Activation{nn::ActivationKind::Relu});
      in = h;
    }
    net.push(nn::Dense{in, o});
    return net;
  }

  const bool fixed_dilation = s.variant == EncoderVariant::Imu2Clip;
  require(!fixed_dilation || s.dilations.size() == 1, ErrorCode::InvalidArgument,
          "imu2clip uses a single fixed dilation");
  std::size_t in = kImuChannels;
  for (std::size_t l = 0; l < s.conv_layers; ++l) {
    nn::Conv1dBank conv;
    conv.in_channels = in;
    conv.out_per_kernel = s.channels_per_kernel;
    conv.kernel = s.kernel_size;
    conv.dilations = s.dilations;
    net.push(conv);
    in = conv.out_channels();
    if (fixed_dilation) net.push(nn::GroupNorm{s.groups, in});
    net.push(nn::Activation{nn::ActivationKind::Relu});
  }

  if (s.variant == EncoderVariant::Cnn) {
    net.push(nn::TimePool{s.pool, 0});
    net.push(nn::Dense{in, o});
    return net;
  }
  if (s.pool_size > 1) net.push(nn::TimePool{s.pool, s.pool_size});
  for (std::size_t l = 0; l < s.recurrent_layers; ++l) {
    if (s.variant == EncoderVariant::CnnLstm)
      net.push(nn::Lstm{in, o});
    else
      net.push(nn::Gru{in, o});
    in = o;
  }
  net.push(nn::LastStep{});
  return net;
}

inline nn::Sequential build_head(const HeadSpec& s, std::size_t embedding_dim, std::size_t windows) {
  nn::Sequential net;
  if (s.variant == HeadVariant::Mlp) {
    std::size_t in = windows * embedding_dim;
    for (auto h : s.hidden) {
      net.push(nn::Dense{in, h});
      net.push(nn::Activation{nn::ActivationKind::Relu});
      in = h;
    }
    net.push(nn::Dense{in, s.num_classes});
    return net;
  }
  std::size_t in = embedding_dim;
  for (auto h : s.hidden) {
    if (s.variant == HeadVariant::Gru)
      net.push(nn::Gru{in, h});
    else
      net.push(nn::Lstm{in, h});
    in = h;
  }
  net.push(nn::LastStep{});
  net.push(nn::Dense{in, s.num_classes});
  return net;
}

inline nn::Shape encoder_input_shape(const ModelSpec& s) {
  if (s.encoder.variant == EncoderVariant::MlpFeatures) return {kFeatureCount};
  return {kImuChannels, s.ll_samples()};
}

inline nn::Shape head_input_shape(const ModelSpec& s) {
  const std::size_t n = s.windows_per_hl();
  if (s.head.variant == HeadVariant::Mlp) return {n * s.encoder.embedding_dim};
  return {s.encoder.embedding_dim, n};
}

/// Low-level encoder with its preprocessing (feature extraction and normalization).
class Encoder {
 public:
  explicit Encoder(const ModelSpec& spec) : spec_(spec.encoder), input_shape_(encoder_input_shape(spec)), net_(build_encoder(spec.encoder)) {
    const nn::Shape out = net_.output_shape(input_shape_);
    require(out == nn::Shape{spec_.embedding_dim}, ErrorCode::ShapeMismatch, "encoder does not emit an embedding vector");
    net_.declare(params_, "encoder");
  }

  const EncoderSpec& spec() const noexcept { return spec_; }
  const nn::Sequential& net() const noexcept { return net_; }
  nn::ParamSet& params() noexcept { return params_; }
  const nn::ParamSet& params() const noexcept { return params_; }
  const nn::Shape& input_shape() const noexcept { return input_shape_; }
  std::size_t embedding_dim() const noexcept { return spec_.embedding_dim; }

  bool uses_features() const noexcept { return spec_.variant == EncoderVariant::MlpFeatures; }
  /// The imu2clip variant consumes raw, unnormalized IMU data.
  bool normalizes() const noexcept { return spec_.variant != EncoderVariant::Imu2Clip; }

  const std::optional<NormStats>& norm() const noexcept { return norm_; }
  void set_norm(std::optional<NormStats> stats) { norm_ = std::move(stats); }

  /// Raw 6xT window -> network input.
  Tensor prepare(const Tensor& window) const {
    require(window.rank() == 2 && window.dim(0) == kImuChannels, ErrorCode::ShapeMismatch,
            "encoder expects a 6xT window, got " + window.shape_string());
    if (uses_features()) {
      FeatureVector f = extract_features(window);
      if (norm_) f = apply_norm(f, *norm_);
      return Tensor::vector({f.begin(), f.end()});
    }
    require(window.dim(1) == input_shape_[1], ErrorCode::ShapeMismatch,
            "encoder expects " + std::to_string(input_shape_[1]) + " samples per window, got " +
                std::to_string(window.dim(1)));
    if (normalizes() && norm_) return apply_norm(window, *norm_);
    return window;
  }

  Tensor embed(const Tensor& prepared, nn::Tape* tape = nullptr) const { return net_.forward(params_, prepared, tape); }

  Tensor backward(const Tensor& d_embedding, const nn::Tape& tape) { return net_.backward(params_, d_embedding, tape); }

 private:
  EncoderSpec spec_;
  nn::Shape input_shape_;
  nn::Sequential net_;
  nn::ParamSet params_;
  std::optional<NormStats> norm_;
};

/// Intermediates of one hierarchical forward pass.
struct HierarchicalPass {
  std::vector<nn::Tape> encoder_tapes;
  nn::Tape head_tape;
};

/// Encoder applied to each low-level window, embeddings assembled over the
/// high-level window, then the head and a softmax.
class HierarchicalModel {
 public:
  explicit HierarchicalModel(const ModelSpec& spec)
      : spec_(spec), windows_(spec.windows_per_hl()), encoder_(spec),
        head_net_(build_head(spec.head, spec.encoder.embedding_dim, windows_)) {
    require(head_net_.output_shape(head_input_shape(spec)) == nn::Shape{spec.head.num_classes}, ErrorCode::ShapeMismatch,
            "head does not emit class logits");
    head_net_.declare(head_params_, "head");
    if (spec.encoder.deploy_on_chip) {
      const std::size_t params = encoder_.net().param_count();
      require(params < 25000, ErrorCode::InvalidArgument,
              "encoder marked deploy_on_chip has " + std::to_string(params) + " parameters (limit < 25000)");
    }
  }

  const ModelSpec& spec() const noexcept { return spec_; }
  std::size_t windows() const noexcept { return windows_; }
  std::size_t num_classes() const noexcept { return spec_.head.num_classes; }
  Encoder& encoder() noexcept { return encoder_; }
  const Encoder& encoder() const noexcept { return encoder_; }
  const nn::Sequential& head_net() const noexcept { return head_net_; }
  nn::ParamSet& head_params() noexcept { return head_params_; }
  const nn::ParamSet& head_params() const noexcept { return head_params_; }

  std::vector<std::string>& class_names() noexcept { return class_names_; }
  const std::vector<std::string>& class_names() const noexcept { return class_names_; }

  void initialize(std::uint64_t seed) {
    encoder_.params().initialize(seed);
    head_params_.initialize(seed ^ 0x5DEECE66DULL);
  }

  void zero_grad() {
    encoder_.params().zero_grad();
    head_params_.zero_grad();
  }

  /// Splits a high-level window and prepares each low-level input.
  std::vector<Tensor> prepare(const WindowedSample& hl) const {
    const auto parts = split_low_level(hl, spec_.ll_window_s);
    require(parts.size() == windows_, ErrorCode::ShapeMismatch,
            "high-level window splits into " + std::to_string(parts.size()) + " windows, model expects " +
                std::to_string(windows_));
    std::vector<Tensor> out;
    out.reserve(parts.size());
    for (const auto& p : parts) out.push_back(encoder_.prepare(p.data));
    return out;
  }

  Tensor assemble(const std::vector<Tensor>& embeddings) const {
    const std::size_t o = spec_.encoder.embedding_dim;
    if (spec_.head.variant == HeadVariant::Mlp) {
      Tensor x({windows_ * o});
      for (std::size_t w = 0; w < windows_; ++w) std::copy(embeddings[w].data(), embeddings[w].data() + o, x.data() + w * o);
      return x;
    }
    Tensor x({o, windows_});
    for (std::size_t w = 0; w < windows_; ++w)
      for (std::size_t k = 0; k < o; ++k) x(k, w) = embeddings[w][k];
    return x;
  }

  Tensor embedding_grad(const Tensor& d_head_input, std::size_t w) const {
    const std::size_t o = spec_.encoder.embedding_dim;
    Tensor d({o});
    for (std::size_t k = 0; k < o; ++k)
      d[k] = spec_.head.variant == HeadVariant::Mlp ? d_head_input[w * o + k] : d_head_input(k, w);
    return d;
  }

  Tensor head_input(const std::vector<Tensor>& prepared, HierarchicalPass* pass = nullptr) const {
    require(prepared.size() == windows_, ErrorCode::ShapeMismatch, "wrong number of low-level windows");
    std::vector<Tensor> embeddings;
    embeddings.reserve(windows_);
    if (pass) pass->encoder_tapes.resize(windows_);
    for (std::size_t w = 0; w < windows_; ++w)
      embeddings.push_back(encoder_.embed(prepared[w], pass ? &pass->encoder_tapes[w] : nullptr));
    return assemble(embeddings);
  }

  Tensor logits(const std::vector<Tensor>& prepared, HierarchicalPass* pass = nullptr) const {
    return head_net_.forward(head_params_, head_input(prepared, pass), pass ? &pass->head_tape : nullptr);
  }

  /// Accumulates gradients of both head and encoder from dL/dlogits.
  void backward(const Tensor& d_logits, const HierarchicalPass& pass) {
    require(pass.encoder_tapes.size() == windows_, ErrorCode::GraphNotRecorded, "hierarchical pass not recorded");
    const Tensor d_in = head_net_.backward(head_params_, d_logits, pass.head_tape);
    for (std::size_t w = 0; w < windows_; ++w) encoder_.backward(embedding_grad(d_in, w), pass.encoder_tapes[w]);
  }

  std::vector<double> probabilities(const std::vector<Tensor>& prepared) const {
    const Tensor z = logits(prepared);
    return nn::softmax(z.values());
  }

 private:
  ModelSpec spec_;
  std::size_t windows_;
  Encoder encoder_;
  nn::Sequential head_net_;
  nn::ParamSet head_params_;
  std::vector<std::string> class_names_;
};

/// Embedding of one raw low-level window.
inline Tensor encode_low_level(const Encoder& encoder, const Tensor& window) { return encoder.embed(encoder.prepare(window)); }

/// Class probabilities for one high-level window.
inline std::vector<double> classify_high_level(const HierarchicalModel& model, const WindowedSample& hl) {
  return model.probabilities(model.prepare(hl));
}

/// Leaky ReLU, one dense layer and softmax on top of a frozen encoder's embedding.
class ProbeHead {
 public:
  ProbeHead(std::size_t embedding_dim, std::size_t classes, double slope = 0.01) : slope_(slope) {
    net_.push(nn::Activation{nn::ActivationKind::LeakyRelu, slope});
    net_.push(nn::Dense{embedding_dim, classes});
    net_.declare(params_, "probe");
    classes_ = classes;
  }

  double slope() const noexcept { return slope_; }
  std::size_t classes() const noexcept { return classes_; }
  const nn::Sequential& net() const noexcept { return net_; }
  nn::ParamSet& params() noexcept { return params_; }
  const nn::ParamSet& params() const noexcept { return params_; }

  Tensor logits(const Tensor& embedding, nn::Tape* tape = nullptr) const { return net_.forward(params_, embedding, tape); }
  void backward(const Tensor& d_logits, const nn::Tape& tape) { net_.backward(params_, d_logits, tape); }

  std::vector<double> probabilities(const Tensor& embedding) const { return nn::softmax(logits(embedding).values()); }

 private:
  double slope_;
  std::size_t classes_ = 0;
  nn::Sequential net_;
  nn::ParamSet params_;
};

inline std::vector<double> probe_forward(const Encoder& frozen, const ProbeHead& probe, const Tensor& window) {
  return probe.probabilities(encode_low_level(frozen, window));
}

// ---------------------------------------------------------------------------
// Accounting. FLOPs are multiply-accumulates of one forward pass; biases and
// activations are excluded. Recurrent layers count every time step.

struct ComponentCount {
  std::size_t params = 0;
  std::size_t biases = 0;
  std::size_t flops = 0;
};

inline ComponentCount count(const nn::Sequential& net, const nn::Shape& input) {
  return {net.param_count(), net.bias_count(), net.macs(input)};
}

inline std::size_t count_params(const nn::Sequential& net) { return net.param_count(); }
inline std::size_t count_flops(const nn::Sequential& net, const nn::Shape& input) { return net.macs(input); }

struct ModelCounts {
  ComponentCount encoder;  // per low-level window
  ComponentCount head;     // per high-level window
  ComponentCount probe;
};

inline ModelCounts count_model(const ModelSpec& spec) {
  ModelCounts c;
  c.encoder = count(build_encoder(spec.encoder), encoder_input_shape(spec));
  c.head = count(build_head(spec.head, spec.encoder.embedding_dim, spec.windows_per_hl()), head_input_shape(spec));
  ProbeHead probe(spec.encoder.embedding_dim, spec.probe_classes, spec.probe_slope);
  c.probe = count(probe.net(), {spec.encoder.embedding_dim});
  return c;
}

inline constexpr std::size_t kDeployParamLimit = 25000;

struct BudgetReport {
  bool pass = false;
  std::size_t params = 0;
  std::size_t flops = 0;
  /// kDeployParamLimit - params (negative when over budget).
  long long margin = 0;
};

/// Strict "fewer than 25,000 parameters" gate for on-chip encoders.
inline BudgetReport check_deploy_budget(std::size_t params, std::size_t flops) {
  return {params < kDeployParamLimit, params, flops,
          static_cast<long long>(kDeployParamLimit) - static_cast<long long>(params)};
}

inline BudgetReport check_deploy_budget(const ModelSpec& spec) {
  const auto c = count(build_encoder(spec.encoder), encoder_input_shape(spec));
  return check_deploy_budget(c.params, c.flops);
}

}  // namespace egocharm
