#pragma once

// End-to-end runs shared by the command-line tool and the test suites. Every
// run writes its artifacts plus a resolved-config snapshot into one directory.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <future>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "egocharm/checkpoint.hpp"
#include "egocharm/config.hpp"
#include "egocharm/data.hpp"
#include "egocharm/eval.hpp"
#include "egocharm/models.hpp"
#include "egocharm/train.hpp"

namespace egocharm {

inline constexpr const char* kOutputRootEnv = "EGOCHARM_OUT";

struct RunConfig {
  std::string manifest;
  std::string model;
  std::string checkpoint;
  std::string out;
  TrainConfig train;
  double test_fraction = 0.2;
  /// 0 keeps every training sample.
  std::size_t samples_per_class = 0;
  /// 0 uses the manifest stride.
  double stride_s = 0.0;
  std::size_t folds = 4;
  // Model-spec overrides, used by sweeps. 0 keeps the spec value.
  double rate_hz = 0.0;
  double hl_window_s = 0.0;
};

inline const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys{"manifest",     "model",       "checkpoint",     "out",         "seed",
                                             "learning_rate", "batch_size", "max_epochs",     "lr_gamma",    "lr_step_epochs",
                                             "class_weights", "test_fraction", "samples_per_class", "stride_s", "folds",
                                             "rate_hz",      "hl_window_s"};
  return keys;
}

inline KeyValues to_key_values(const RunConfig& c) {
  KeyValues kv;
  kv["manifest"] = c.manifest;
  kv["model"] = c.model;
  kv["checkpoint"] = c.checkpoint;
  kv["out"] = c.out;
  kv["seed"] = std::to_string(c.train.seed);
  kv["learning_rate"] = detail::format_number(c.train.learning_rate);
  kv["batch_size"] = std::to_string(c.train.batch_size);
  kv["max_epochs"] = std::to_string(c.train.max_epochs);
  kv["lr_gamma"] = detail::format_number(c.train.lr_gamma);
  kv["lr_step_epochs"] = std::to_string(c.train.lr_step_epochs);
  kv["class_weights"] = c.train.class_weights == ClassWeightsMode::Uniform ? "uniform" : "inverse_frequency";
  kv["test_fraction"] = detail::format_number(c.test_fraction);
  kv["samples_per_class"] = std::to_string(c.samples_per_class);
  kv["stride_s"] = detail::format_number(c.stride_s);
  kv["folds"] = std::to_string(c.folds);
  kv["rate_hz"] = detail::format_number(c.rate_hz);
  kv["hl_window_s"] = detail::format_number(c.hl_window_s);
  return kv;
}

/// Applies key-value settings on top of base. Unknown keys are rejected.
inline RunConfig apply_key_values(RunConfig base, const KeyValues& kv) {
  KeyReader r(kv);
  r.reject_unknown(run_config_keys());
  auto str = [&](const char* k, std::string& dst) {
    if (r.has(k)) dst = r.text(k);
  };
  str("manifest", base.manifest);
  str("model", base.model);
  str("checkpoint", base.checkpoint);
  str("out", base.out);
  if (r.has("seed")) base.train.seed = r.count("seed");
  if (r.has("learning_rate")) base.train.learning_rate = r.number("learning_rate");
  if (r.has("batch_size")) base.train.batch_size = r.count("batch_size");
  if (r.has("max_epochs")) base.train.max_epochs = r.count("max_epochs");
  if (r.has("lr_gamma")) base.train.lr_gamma = r.number("lr_gamma");
  if (r.has("lr_step_epochs")) base.train.lr_step_epochs = r.count("lr_step_epochs");
  if (r.has("class_weights")) {
    const auto v = r.text("class_weights");
    require(v == "uniform" || v == "inverse_frequency", ErrorCode::SpecParseError,
            "key 'class_weights': expected uniform or inverse_frequency, got '" + v + "'");
    base.train.class_weights = v == "uniform" ? ClassWeightsMode::Uniform : ClassWeightsMode::InverseFrequency;
  }
  if (r.has("test_fraction")) base.test_fraction = r.number("test_fraction");
  if (r.has("samples_per_class")) base.samples_per_class = r.count("samples_per_class");
  if (r.has("stride_s")) base.stride_s = r.number("stride_s");
  if (r.has("folds")) base.folds = r.count("folds");
  if (r.has("rate_hz")) base.rate_hz = r.number("rate_hz");
  if (r.has("hl_window_s")) base.hl_window_s = r.number("hl_window_s");
  try {
    base.train.validate();
  } catch (const Error& e) {
    fail(ErrorCode::SpecParseError, e.detail());
  }
  return base;
}

inline std::string fnv_hex(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

/// Explicit out wins; otherwise <root>/<command>-<config hash> with root from
/// EGOCHARM_OUT or "runs".
inline std::filesystem::path resolve_run_dir(const std::string& command, const RunConfig& cfg) {
  if (!cfg.out.empty()) return cfg.out;
  const char* env = std::getenv(kOutputRootEnv);
  const std::filesystem::path root = env && *env ? env : "runs";
  RunConfig keyed = cfg;
  keyed.out.clear();
  return root / (command + "-" + fnv_hex(format_key_values(to_key_values(keyed))).substr(0, 12));
}

inline void write_snapshot(const std::filesystem::path& dir, const std::string& command, const RunConfig& cfg) {
  KeyValues kv = to_key_values(cfg);
  kv["out"] = dir.string();
  write_text_file(dir / "config.resolved", "# " + command + "\n" + format_key_values(kv));
}

// ---------------------------------------------------------------------------
// Dataset assembly

/// Resamples every recording to rate_hz and cuts labelled windows.
inline std::vector<WindowedSample> build_windows(const std::vector<ImuRecording>& recordings, const DatasetManifest& m,
                                                 double rate_hz, double window_s, double stride_s) {
  std::vector<WindowedSample> out;
  for (const auto& rec : recordings) {
    const int label = m.class_index(rec.label.value_or(""));
    const auto resampled = resample_linear(rec, rate_hz);
    for (auto& w : window(resampled, window_s, stride_s, rate_hz, label)) out.push_back(std::move(w));
  }
  return out;
}

/// Fits the encoder's input normalization on training windows only.
inline void fit_normalization(Encoder& enc, const std::vector<WindowedSample>& train, double ll_window_s) {
  if (enc.uses_features()) {
    std::vector<FeatureVector> feats;
    for (const auto& s : train)
      for (const auto& part : split_low_level(s, ll_window_s)) feats.push_back(extract_features(part));
    enc.set_norm(fit_feature_stats(feats));
  } else if (enc.normalizes()) {
    enc.set_norm(fit_channel_stats(train));
  } else {
    enc.set_norm(std::nullopt);
  }
}

template <typename T>
std::vector<T> select(const std::vector<T>& v, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(v[i]);
  return out;
}

inline ModelSpec resolve_model_spec(const RunConfig& cfg, std::size_t num_classes) {
  ModelSpec spec = cfg.model.empty() ? ModelSpec{} : load_model_spec(cfg.model);
  if (cfg.rate_hz > 0) spec.rate_hz = cfg.rate_hz;
  if (cfg.hl_window_s > 0) spec.hl_window_s = cfg.hl_window_s;
  spec.head.num_classes = num_classes;
  spec.windows_per_hl();
  return spec;
}

inline nlohmann::json split_json(const SplitPlan& p) {
  return {{"train_participants", p.train_participants}, {"test_participants", p.test_participants},
          {"train_class_share", p.train_class_share},   {"test_class_share", p.test_class_share},
          {"max_share_deviation", p.max_share_deviation()}};
}

inline void write_report(const std::filesystem::path& dir, const EvalReport& r, const std::vector<std::string>& names) {
  write_text_file(dir / "eval.json", to_json(r, names).dump(2) + "\n");
  write_text_file(dir / "confusion.csv", render_confusion(r.confusion, ConfusionMode::Counts, names));
  write_text_file(dir / "confusion_percent.csv", render_confusion(r.confusion, ConfusionMode::RowPercent, names));
}

// ---------------------------------------------------------------------------
// Runs

struct TrainOutcome {
  std::filesystem::path dir;
  EvalReport report;
  History history;
  SplitPlan split;
};

/// Hierarchical training on a high-level manifest with a participant-disjoint split.
inline TrainOutcome run_train(const RunConfig& cfg) {
  require(!cfg.manifest.empty(), ErrorCode::InvalidArgument, "train needs a manifest");
  const DatasetManifest m = load_manifest(cfg.manifest);
  const ModelSpec spec = resolve_model_spec(cfg, m.classes.size());
  const double stride = cfg.stride_s > 0 ? cfg.stride_s : m.stride_s;
  const auto recordings = ingest(m);
  const auto windows = build_windows(recordings, m, spec.rate_hz, spec.hl_window_s, stride);
  const auto keys = keys_of(windows);
  const SplitPlan split = stratified_participant_split(keys, cfg.test_fraction, cfg.train.seed);

  auto train_set = select(windows, split.train_indices);
  if (cfg.samples_per_class > 0) train_set = subsample_per_class(train_set, cfg.samples_per_class, cfg.train.seed);
  const auto test_set = select(windows, split.test_indices);

  HierarchicalModel model(spec);
  model.class_names() = m.classes;
  fit_normalization(model.encoder(), train_set, spec.ll_window_s);
  model.initialize(cfg.train.seed);
  const auto train_prepared = prepare_all(model, train_set);
  const auto test_prepared = prepare_all(model, test_set);

  TrainOutcome out;
  out.dir = resolve_run_dir("train", cfg);
  out.split = split;
  out.history = train_hierarchical(model, train_prepared, test_prepared, cfg.train);
  out.report = evaluate_model(model, test_prepared);

  write_snapshot(out.dir, "train", cfg);
  save_model((out.dir / "model.egck").string(), model);
  write_text_file(out.dir / "history.csv", history_csv(out.history));
  write_text_file(out.dir / "split.json", split_json(split).dump(2) + "\n");
  write_report(out.dir, out.report, m.classes);
  return out;
}

/// Windows of a manifest restricted to the given participants (all when empty).
inline std::vector<WindowedSample> manifest_windows(const DatasetManifest& m, const ModelSpec& spec, double window_s,
                                                    double stride_s, const std::set<std::string>& participants = {}) {
  auto recordings = ingest(m);
  if (!participants.empty())
    std::erase_if(recordings, [&](const ImuRecording& r) { return !participants.contains(r.participant_id); });
  return build_windows(recordings, m, spec.rate_hz, window_s, stride_s);
}

struct EvalOptions {
  std::string checkpoint;
  std::string manifest;
  /// split.json from a training run; restricts evaluation to its test participants.
  std::string split;
  double stride_s = 0.0;
  std::string out;
};

inline EvalReport run_eval(const EvalOptions& opt, std::filesystem::path* dir_out = nullptr) {
  require(!opt.checkpoint.empty(), ErrorCode::InvalidArgument, "eval needs a checkpoint");
  require(!opt.manifest.empty(), ErrorCode::InvalidArgument, "eval needs a manifest");
  const Checkpoint ck = load_model(opt.checkpoint);
  const DatasetManifest m = load_manifest(opt.manifest);
  require(m.classes == ck.model.class_names(), ErrorCode::UnknownLabel, "manifest classes differ from the checkpoint's");
  std::set<std::string> participants;
  if (!opt.split.empty()) {
    const auto j = nlohmann::json::parse(read_text_file(opt.split));
    for (const auto& p : j.at("test_participants")) participants.insert(p.get<std::string>());
  }
  const auto& spec = ck.model.spec();
  const auto windows =
      manifest_windows(m, spec, spec.hl_window_s, opt.stride_s > 0 ? opt.stride_s : m.stride_s, participants);
  const EvalReport report = evaluate_model(ck.model, prepare_all(ck.model, windows));
  std::filesystem::path dir = opt.out;
  if (dir.empty()) {
    const char* env = std::getenv(kOutputRootEnv);
    dir = std::filesystem::path(env && *env ? env : "runs") /
          ("eval-" + fnv_hex(opt.checkpoint + "|" + opt.manifest + "|" + opt.split).substr(0, 12));
  }
  write_report(dir, report, m.classes);
  if (dir_out) *dir_out = dir;
  return report;
}

struct ProbeOutcome {
  std::filesystem::path dir;
  std::vector<EvalReport> folds;
  double mean_macro_f1 = 0.0;
  double mean_micro_accuracy = 0.0;
  ProbeHead probe;
};

/// k-fold participant-stratified probing of a frozen encoder, then a final
/// probe fitted on every window and saved alongside the model.
inline ProbeOutcome run_probe_on(const HierarchicalModel& frozen, const std::vector<WindowedSample>& windows,
                                 const std::vector<std::string>& class_names, const RunConfig& cfg,
                                 const std::filesystem::path& dir) {
  const auto& spec = frozen.spec();
  const FoldPlan folds = make_folds(keys_of(windows), cfg.folds, cfg.train.seed);
  ProbeOutcome out{dir, {}, 0.0, 0.0, ProbeHead(spec.encoder.embedding_dim, class_names.size(), spec.probe_slope)};
  std::ostringstream csv;
  csv.precision(10);
  csv << "fold,macro_f1,micro_acc\n";
  for (std::size_t f = 0; f < folds.indices.size(); ++f) {
    std::vector<std::size_t> train_idx;
    for (std::size_t g = 0; g < folds.indices.size(); ++g)
      if (g != f) train_idx.insert(train_idx.end(), folds.indices[g].begin(), folds.indices[g].end());
    std::sort(train_idx.begin(), train_idx.end());
    ProbeHead probe(spec.encoder.embedding_dim, class_names.size(), spec.probe_slope);
    probe.params().initialize(cfg.train.seed + f);
    const auto train = select(windows, train_idx);
    const auto test = select(windows, folds.indices[f]);
    train_probe(probe, frozen.encoder(), train, test, cfg.train);
    std::vector<int> labels;
    for (const auto& w : test) labels.push_back(w.label);
    out.folds.push_back(evaluate_probe(probe, embed_windows(frozen.encoder(), test), labels));
    out.mean_macro_f1 += out.folds.back().macro_f1 / static_cast<double>(folds.indices.size());
    out.mean_micro_accuracy += out.folds.back().micro_accuracy / static_cast<double>(folds.indices.size());
    csv << f << ',' << out.folds.back().macro_f1 << ',' << out.folds.back().micro_accuracy << '\n';
  }
  out.probe.params().initialize(cfg.train.seed);
  const History h = train_probe(out.probe, frozen.encoder(), windows, {}, cfg.train);

  write_snapshot(dir, "probe", cfg);
  write_text_file(dir / "probe_folds.csv", csv.str());
  write_text_file(dir / "probe_history.csv", history_csv(h));
  const auto counts = count(out.probe.net(), {spec.encoder.embedding_dim});
  nlohmann::json j = {{"classes", class_names},
                      {"folds", folds.indices.size()},
                      {"mean_macro_f1", out.mean_macro_f1},
                      {"mean_micro_accuracy", out.mean_micro_accuracy},
                      {"params", counts.params},
                      {"flops", counts.flops}};
  write_text_file(dir / "probe.json", j.dump(2) + "\n");
  save_model((dir / "model_with_probe.egck").string(), frozen, &out.probe, class_names);
  return out;
}

inline ProbeOutcome run_probe(const RunConfig& cfg) {
  require(!cfg.checkpoint.empty(), ErrorCode::InvalidArgument, "missing frozen encoder: pass --checkpoint");
  require(!cfg.manifest.empty(), ErrorCode::InvalidArgument, "probe needs a low-level manifest");
  const Checkpoint ck = load_model(cfg.checkpoint);
  const DatasetManifest m = load_manifest(cfg.manifest);
  const auto& spec = ck.model.spec();
  const auto windows = manifest_windows(m, spec, spec.ll_window_s, cfg.stride_s > 0 ? cfg.stride_s : m.stride_s);
  return run_probe_on(ck.model, windows, m.classes, cfg, resolve_run_dir("probe", cfg));
}

/// Low-level embeddings of a manifest, one CSV row per window.
inline std::filesystem::path run_embed(const RunConfig& cfg) {
  require(!cfg.checkpoint.empty(), ErrorCode::InvalidArgument, "missing frozen encoder: pass --checkpoint");
  const Checkpoint ck = load_model(cfg.checkpoint);
  const DatasetManifest m = load_manifest(cfg.manifest);
  const auto& spec = ck.model.spec();
  auto windows = manifest_windows(m, spec, spec.ll_window_s, cfg.stride_s > 0 ? cfg.stride_s : m.stride_s);
  if (cfg.samples_per_class > 0) windows = subsample_per_class(windows, cfg.samples_per_class, cfg.train.seed);
  const auto emb = embed_windows(ck.model.encoder(), windows);
  std::ostringstream os;
  os.precision(17);
  os << "participant,label,start_time";
  for (std::size_t d = 0; d < spec.encoder.embedding_dim; ++d) os << ",e" << d;
  os << '\n';
  for (std::size_t i = 0; i < windows.size(); ++i) {
    os << windows[i].participant_id << ',' << m.classes[static_cast<std::size_t>(windows[i].label)] << ','
       << windows[i].start_time;
    for (double v : emb[i].values()) os << ',' << v;
    os << '\n';
  }
  const auto dir = resolve_run_dir("embed", cfg);
  write_snapshot(dir, "embed", cfg);
  write_text_file(dir / "embeddings.csv", os.str());
  return dir;
}

struct PcaOutcome {
  std::filesystem::path dir;
  PcaResult pca;
  std::vector<int> labels;
  double silhouette = 0.0;
};

inline PcaOutcome pca_of_embeddings(const Encoder& enc, const std::vector<WindowedSample>& windows) {
  PcaOutcome out;
  std::vector<std::vector<double>> points;
  for (const auto& e : embed_windows(enc, windows)) points.emplace_back(e.values().begin(), e.values().end());
  for (const auto& w : windows) out.labels.push_back(w.label);
  out.pca = pca_2d(points);
  std::vector<std::vector<double>> projected;
  for (const auto& p : out.pca.projections) projected.push_back({p[0], p[1]});
  out.silhouette = silhouette_score(projected, out.labels);
  return out;
}

inline PcaOutcome run_pca(const RunConfig& cfg) {
  require(!cfg.checkpoint.empty(), ErrorCode::InvalidArgument, "missing frozen encoder: pass --checkpoint");
  const Checkpoint ck = load_model(cfg.checkpoint);
  const DatasetManifest m = load_manifest(cfg.manifest);
  const auto& spec = ck.model.spec();
  auto windows = manifest_windows(m, spec, spec.ll_window_s, cfg.stride_s > 0 ? cfg.stride_s : m.stride_s);
  if (cfg.samples_per_class > 0) windows = subsample_per_class(windows, cfg.samples_per_class, cfg.train.seed);
  PcaOutcome out = pca_of_embeddings(ck.model.encoder(), windows);
  out.dir = resolve_run_dir("pca", cfg);
  nlohmann::json j = to_json(out.pca, out.labels);
  j["silhouette"] = out.silhouette;
  j["classes"] = m.classes;
  std::ostringstream csv;
  csv.precision(17);
  csv << "label,pc1,pc2\n";
  for (std::size_t i = 0; i < out.labels.size(); ++i)
    csv << m.classes[static_cast<std::size_t>(out.labels[i])] << ',' << out.pca.projections[i][0] << ','
        << out.pca.projections[i][1] << '\n';
  write_snapshot(out.dir, "pca", cfg);
  write_text_file(out.dir / "pca.json", j.dump(2) + "\n");
  write_text_file(out.dir / "pca.csv", csv.str());
  return out;
}

inline std::string counts_table(const ModelCounts& c) {
  std::ostringstream os;
  os << "encoder: params " << c.encoder.params << ", flops " << c.encoder.flops << '\n'
     << "head: params " << c.head.params << ", flops " << c.head.flops << '\n'
     << "probe: params " << c.probe.params << ", flops " << c.probe.flops << '\n';
  return os.str();
}

inline std::string counts_csv(const ModelCounts& c) {
  std::ostringstream os;
  os << "component,params,biases,flops\n"
     << "encoder," << c.encoder.params << ',' << c.encoder.biases << ',' << c.encoder.flops << '\n'
     << "head," << c.head.params << ',' << c.head.biases << ',' << c.head.flops << '\n'
     << "probe," << c.probe.params << ',' << c.probe.biases << ',' << c.probe.flops << '\n';
  return os.str();
}

inline std::string budget_line(const BudgetReport& b) {
  if (b.pass) return "budget PASS (< " + std::to_string(kDeployParamLimit) + ")";
  return "budget FAIL (" + std::to_string(b.params) + " >= " + std::to_string(kDeployParamLimit) + ")";
}

enum class SweepAxis { SamplesPerClass, RateHz, HlWindowS };

inline SweepAxis parse_sweep_axis(const std::string& s) {
  if (s == "samples_per_class") return SweepAxis::SamplesPerClass;
  if (s == "rate_hz") return SweepAxis::RateHz;
  if (s == "hl_window_s") return SweepAxis::HlWindowS;
  fail(ErrorCode::InvalidArgument, "unknown sweep axis '" + s + "' (samples_per_class, rate_hz, hl_window_s)");
}

inline std::string to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::SamplesPerClass: return "samples_per_class";
    case SweepAxis::RateHz: return "rate_hz";
    case SweepAxis::HlWindowS: return "hl_window_s";
  }
  return {};
}

struct SweepRow {
  double value = 0.0;
  std::optional<EvalReport> report;
  std::string error;
};

/// Config used for the index-th sweep value: the axis field overridden and the
/// seed offset by the index.
inline RunConfig sweep_config(const RunConfig& base, SweepAxis axis, double value, std::size_t index,
                              const std::filesystem::path& sweep_dir) {
  RunConfig c = base;
  c.train.seed = base.train.seed + index;
  switch (axis) {
    case SweepAxis::SamplesPerClass: c.samples_per_class = static_cast<std::size_t>(value); break;
    case SweepAxis::RateHz: c.rate_hz = value; break;
    case SweepAxis::HlWindowS: c.hl_window_s = value; break;
  }
  c.out = (sweep_dir / (to_string(axis) + "=" + detail::format_number(value))).string();
  return c;
}

inline std::vector<SweepRow> run_sweep(const RunConfig& base, SweepAxis axis, const std::vector<double>& values,
                                       bool parallel = false, std::filesystem::path* dir_out = nullptr) {
  require(!values.empty(), ErrorCode::InvalidArgument, "sweep needs at least one value");
  const auto dir = resolve_run_dir("sweep-" + to_string(axis), base);
  auto one = [&](std::size_t i) {
    SweepRow row{values[i], std::nullopt, {}};
    try {
      row.report = run_train(sweep_config(base, axis, values[i], i, dir)).report;
    } catch (const Error& e) {
      row.error = std::string(to_string(e.code())) + ": " + e.detail();
    }
    return row;
  };
  std::vector<SweepRow> rows;
  if (parallel) {
    std::vector<std::future<SweepRow>> jobs;
    for (std::size_t i = 0; i < values.size(); ++i) jobs.push_back(std::async(std::launch::async, one, i));
    for (auto& j : jobs) rows.push_back(j.get());
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) rows.push_back(one(i));
  }
  std::ostringstream csv;
  csv.precision(10);
  csv << "axis_value,macro_f1,micro_acc,status\n";
  for (const auto& r : rows) {
    csv << detail::format_number(r.value) << ',';
    if (r.report)
      csv << r.report->macro_f1 << ',' << r.report->micro_accuracy << ",ok\n";
    else
      csv << ",,\"" << r.error << "\"\n";
  }
  write_snapshot(dir, "sweep " + to_string(axis), base);
  write_text_file(dir / "sweep.csv", csv.str());
  if (dir_out) *dir_out = dir;
  return rows;
}

/// Participant split of a manifest's windows, written as split.json.
inline SplitPlan run_split(const RunConfig& cfg, std::filesystem::path* dir_out = nullptr) {
  const DatasetManifest m = load_manifest(cfg.manifest);
  const ModelSpec spec = resolve_model_spec(cfg, m.classes.size());
  const double window_s = m.level == ActivityLevel::High ? spec.hl_window_s : spec.ll_window_s;
  const auto windows = build_windows(ingest(m), m, spec.rate_hz, window_s, cfg.stride_s > 0 ? cfg.stride_s : m.stride_s);
  const auto keys = keys_of(windows);
  const SplitPlan plan = stratified_participant_split(keys, cfg.test_fraction, cfg.train.seed);
  const FoldPlan folds = make_folds(keys, cfg.folds, cfg.train.seed);
  nlohmann::json j = split_json(plan);
  j["folds"] = folds.participants;
  const auto dir = resolve_run_dir("split", cfg);
  write_snapshot(dir, "split", cfg);
  write_text_file(dir / "split.json", j.dump(2) + "\n");
  if (dir_out) *dir_out = dir;
  return plan;
}

}  // namespace egocharm
