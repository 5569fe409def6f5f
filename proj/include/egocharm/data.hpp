#pragma once

// Dataset manifests, CSV ingestion, label vocabularies and the synthetic IMU generator.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "egocharm/config.hpp"
#include "egocharm/signal.hpp"

namespace egocharm {

enum class ActivityLevel { High, Low };

inline std::string to_string(ActivityLevel l) { return l == ActivityLevel::High ? "high" : "low"; }

inline ActivityLevel parse_activity_level(const std::string& s) {
  if (s == "high") return ActivityLevel::High;
  if (s == "low") return ActivityLevel::Low;
  fail(ErrorCode::ParseError, "level must be 'high' or 'low', got '" + s + "'");
}

inline const std::vector<std::string>& default_high_level_classes() {
  static const std::vector<std::string> names{"soccer",       "basketball",   "dance",      "rock_climbing", "body_stretch",
                                              "housekeeping", "cooking",      "bike_repair", "music"};
  return names;
}

inline const std::vector<std::string>& default_low_level_classes() {
  static const std::vector<std::string> names{"stationary", "walking", "running"};
  return names;
}

struct RecordingEntry {
  std::string participant;
  std::string file;
  std::string label_file;
};

struct DatasetManifest {
  ActivityLevel level = ActivityLevel::High;
  double rate_hz = 50.0;
  std::vector<std::string> classes = default_high_level_classes();
  double window_s = 30.0;
  double stride_s = 10.0;
  std::vector<RecordingEntry> recordings;
  /// Directory that relative recording paths resolve against.
  std::filesystem::path root;

  static DatasetManifest defaults(ActivityLevel level) {
    DatasetManifest m;
    m.level = level;
    if (level == ActivityLevel::Low) {
      m.classes = default_low_level_classes();
      m.window_s = 1.0;
      m.stride_s = 1.0;
    }
    return m;
  }

  int class_index(const std::string& name) const {
    auto it = std::find(classes.begin(), classes.end(), name);
    require(it != classes.end(), ErrorCode::UnknownLabel, "label '" + name + "' is not in the class vocabulary");
    return static_cast<int>(it - classes.begin());
  }

  void validate() const {
    require(rate_hz > 0 && window_s > 0 && stride_s > 0, ErrorCode::ParseError, "manifest rates and windows must be positive");
    require(!classes.empty(), ErrorCode::ParseError, "manifest has no classes");
    std::set<std::string> seen;
    for (const auto& c : classes) require(seen.insert(c).second, ErrorCode::ParseError, "duplicate class name '" + c + "'");
  }
};

inline nlohmann::json to_json(const DatasetManifest& m) {
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& r : m.recordings) recs.push_back({{"participant", r.participant}, {"file", r.file}, {"label_file", r.label_file}});
  return {{"level", to_string(m.level)}, {"rate_hz", m.rate_hz}, {"classes", m.classes},
          {"window_s", m.window_s},      {"stride_s", m.stride_s}, {"recordings", recs}};
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  try {
    DatasetManifest m = DatasetManifest::defaults(parse_activity_level(j.at("level").get<std::string>()));
    if (j.contains("rate_hz")) m.rate_hz = j.at("rate_hz").get<double>();
    if (j.contains("classes")) m.classes = j.at("classes").get<std::vector<std::string>>();
    if (j.contains("window_s")) m.window_s = j.at("window_s").get<double>();
    if (j.contains("stride_s")) m.stride_s = j.at("stride_s").get<double>();
    for (const auto& r : j.at("recordings"))
      m.recordings.push_back({r.at("participant").get<std::string>(), r.at("file").get<std::string>(),
                              r.at("label_file").get<std::string>()});
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, std::string("manifest: ") + e.what());
  }
}

inline DatasetManifest load_manifest(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, path + ": " + e.what());
  }
  DatasetManifest m = manifest_from_json(j);
  m.root = std::filesystem::path(path).parent_path();
  return m;
}

// ---------------------------------------------------------------------------
// CSV

inline constexpr const char* kCsvHeader = "t,ax,ay,az,gx,gy,gz";

/// Parses one recording. Errors name the 1-based line and the column.
inline ImuRecording parse_recording_csv(const std::string& text, const std::string& source = "<csv>") {
  ImuRecording rec;
  std::size_t pos = 0, line_no = 0;
  bool header_seen = false;
  static const std::array<const char*, 7> columns{"t", "ax", "ay", "az", "gx", "gy", "gz"};
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!header_seen) {
      require(line == kCsvHeader, ErrorCode::ParseError,
              source + " line " + std::to_string(line_no) + ": expected header '" + kCsvHeader + "'");
      header_seen = true;
      continue;
    }
    std::size_t col = 0, start = 0;
    std::array<double, 7> row{};
    while (true) {
      const std::size_t comma = line.find(',', start);
      const std::string_view cell = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
      const std::string where = source + " line " + std::to_string(line_no) + ", column " +
                                (col < columns.size() ? std::string(columns[col]) : std::to_string(col + 1));
      require(col < columns.size(), ErrorCode::ParseError, where + ": too many columns");
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      require(ec == std::errc() && ptr == cell.data() + cell.size() && !cell.empty(), ErrorCode::ParseError,
              where + ": '" + std::string(cell) + "' is not a number");
      require(std::isfinite(v), ErrorCode::ParseError, where + ": non-finite value '" + std::string(cell) + "'");
      row[col++] = v;
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    require(col == columns.size(), ErrorCode::ParseError,
            source + " line " + std::to_string(line_no) + ": expected 7 columns, found " + std::to_string(col));
    if (!rec.timestamps.empty())
      require(row[0] > rec.timestamps.back(), ErrorCode::NonMonotonicTimestamps,
              source + " line " + std::to_string(line_no) + ": timestamp does not increase");
    rec.timestamps.push_back(row[0]);
    for (std::size_t c = 0; c < kImuChannels; ++c) rec.channels[c].push_back(row[c + 1]);
  }
  require(header_seen, ErrorCode::ParseError, source + ": missing header");
  return rec;
}

/// Shortest round-trip representation of every value.
inline std::string format_recording_csv(const ImuRecording& rec) {
  std::string out = std::string(kCsvHeader) + "\n";
  char buf[64];
  auto put = [&](double v) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, ptr);
  };
  for (std::size_t i = 0; i < rec.length(); ++i) {
    put(rec.timestamps[i]);
    for (std::size_t c = 0; c < kImuChannels; ++c) {
      out.push_back(',');
      put(rec.channels[c][i]);
    }
    out.push_back('\n');
  }
  return out;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  require(static_cast<bool>(out), ErrorCode::IoError, "failed writing " + path.string());
}

/// Loads every recording in the manifest; labels are checked against its vocabulary.
inline std::vector<ImuRecording> ingest(const DatasetManifest& m) {
  m.validate();
  std::vector<ImuRecording> out;
  out.reserve(m.recordings.size());
  for (const auto& entry : m.recordings) {
    const auto file = (m.root / entry.file).string();
    ImuRecording rec = parse_recording_csv(read_text_file(file), file);
    rec.participant_id = entry.participant;
    const std::string label = detail::trim(read_text_file((m.root / entry.label_file).string()));
    m.class_index(label);
    rec.label = label;
    rec.validate();
    out.push_back(std::move(rec));
  }
  return out;
}

/// Writes recordings as CSV plus label sidecars and a manifest.json under dir.
inline DatasetManifest write_dataset(const std::filesystem::path& dir, DatasetManifest m,
                                     const std::vector<ImuRecording>& recordings) {
  std::filesystem::create_directories(dir);
  m.recordings.clear();
  std::map<std::string, std::size_t> per_participant;
  for (const auto& rec : recordings) {
    require(rec.label.has_value(), ErrorCode::InvalidArgument, "recording without a label");
    const std::string stem = rec.participant_id + "_r" + std::to_string(per_participant[rec.participant_id]++);
    write_text_file(dir / (stem + ".csv"), format_recording_csv(rec));
    write_text_file(dir / (stem + ".label"), *rec.label + "\n");
    m.recordings.push_back({rec.participant_id, stem + ".csv", stem + ".label"});
  }
  write_text_file(dir / "manifest.json", to_json(m).dump(2) + "\n");
  m.root = dir;
  return m;
}

// ---------------------------------------------------------------------------
// Synthetic data

/// One low-level motion pattern. Motion rides on az (acceleration) and gy (rotation).
struct MotifSpec {
  std::string name;
  double frequency_hz = 0.0;
  double amplitude = 0.0;
  double noise_std = 0.05;
  std::array<double, 3> gravity{0.0, 0.0, 9.81};
};

/// High-level class as a mixture of motif time fractions.
struct MixtureSpec {
  std::string name;
  std::vector<double> motif_weights;
};

struct SynthSpec {
  ActivityLevel level = ActivityLevel::High;
  std::vector<MotifSpec> motifs{{"stationary", 0.0, 0.0, 0.05, {0.0, 0.0, 9.81}},
                                {"walking", 2.0, 1.5, 0.05, {0.0, 0.0, 9.81}},
                                {"running", 3.0, 4.5, 0.05, {0.0, 0.0, 9.81}}};
  std::vector<MixtureSpec> mixtures{{"desk", {0.9, 0.1, 0.0}}, {"commute", {0.1, 0.9, 0.0}}, {"sport", {0.0, 0.3, 0.7}}};
  std::size_t participants = 10;
  std::size_t recordings_per_class = 2;
  double duration_s = 70.0;
  /// Generation rate; pipelines resample to their own rate.
  double native_rate_hz = 100.0;
  /// Bounds on the length of each single-motif segment inside a mixture.
  double segment_min_s = 2.0;
  double segment_max_s = 8.0;
  /// Per-participant variation: gravity tilt (radians), amplitude and frequency scale spread.
  double max_tilt_rad = 0.3;
  double amplitude_jitter = 0.2;
  double frequency_jitter = 0.1;
  std::uint64_t seed = 7;

  std::vector<std::string> class_names() const {
    std::vector<std::string> out;
    if (level == ActivityLevel::Low)
      for (const auto& m : motifs) out.push_back(m.name);
    else
      for (const auto& m : mixtures) out.push_back(m.name);
    return out;
  }

  void validate() const {
    require(!motifs.empty() && participants > 0 && recordings_per_class > 0 && duration_s > 0 && native_rate_hz > 0,
            ErrorCode::InvalidArgument, "synthetic spec sizes must be positive");
    for (const auto& m : motifs) {
      require(m.amplitude >= 0 && m.noise_std >= 0, ErrorCode::InvalidArgument, "motif '" + m.name + "' has a negative amplitude or noise");
      const double top = m.frequency_hz * (1.0 + frequency_jitter);
      require(top < native_rate_hz / 2, ErrorCode::InvalidArgument, "motif '" + m.name + "' frequency is above Nyquist");
    }
    if (level == ActivityLevel::High) {
      require(!mixtures.empty(), ErrorCode::InvalidArgument, "no mixtures for high-level generation");
      for (const auto& x : mixtures) {
        require(x.motif_weights.size() == motifs.size(), ErrorCode::InvalidArgument, "mixture '" + x.name + "' weight count differs from motif count");
        double s = 0.0;
        for (double w : x.motif_weights) {
          require(w >= 0, ErrorCode::InvalidArgument, "mixture '" + x.name + "' has a negative weight");
          s += w;
        }
        require(s > 0, ErrorCode::InvalidArgument, "mixture '" + x.name + "' has zero total weight");
      }
      require(segment_min_s > 0 && segment_max_s >= segment_min_s, ErrorCode::InvalidArgument, "invalid segment bounds");
    }
  }
};

namespace detail {

struct ParticipantStyle {
  std::array<double, 3> tilt_axis_angle{};  // theta, psi
  double amplitude_scale = 1.0;
  double frequency_scale = 1.0;
};

inline std::array<double, 3> tilt(const std::array<double, 3>& g, double theta, double psi) {
  // Rotate about the x axis by theta, then about z by psi.
  const double y1 = g[1] * std::cos(theta) - g[2] * std::sin(theta);
  const double z1 = g[1] * std::sin(theta) + g[2] * std::cos(theta);
  return {g[0] * std::cos(psi) - y1 * std::sin(psi), g[0] * std::sin(psi) + y1 * std::cos(psi), z1};
}

}  // namespace detail

/// Deterministic labelled recordings. High level: each recording is one mixture
/// class built from randomly ordered single-motif segments. Low level: each
/// recording is a single motif.
inline std::vector<ImuRecording> generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto names = spec.class_names();
  const auto n = static_cast<std::size_t>(std::floor(spec.duration_s * spec.native_rate_hz + 1e-9)) + 1;
  const double two_pi = 2.0 * std::numbers::pi;

  std::vector<ImuRecording> out;
  for (std::size_t p = 0; p < spec.participants; ++p) {
    detail::ParticipantStyle style;
    style.tilt_axis_angle = {spec.max_tilt_rad * unit(rng), two_pi * unit(rng), 0.0};
    style.amplitude_scale = 1.0 + spec.amplitude_jitter * (2.0 * unit(rng) - 1.0);
    style.frequency_scale = 1.0 + spec.frequency_jitter * (2.0 * unit(rng) - 1.0);
    char pid[16];
    std::snprintf(pid, sizeof(pid), "p%02zu", p + 1);

    for (std::size_t cls = 0; cls < names.size(); ++cls) {
      for (std::size_t r = 0; r < spec.recordings_per_class; ++r) {
        // Motif index per sample.
        std::vector<std::size_t> schedule(n, cls);
        if (spec.level == ActivityLevel::High) {
          const auto& w = spec.mixtures[cls].motif_weights;
          std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
          std::size_t i = 0;
          while (i < n) {
            const double len_s = spec.segment_min_s + (spec.segment_max_s - spec.segment_min_s) * unit(rng);
            const auto len = std::max<std::size_t>(1, static_cast<std::size_t>(len_s * spec.native_rate_hz));
            const std::size_t motif = pick(rng);
            for (std::size_t k = 0; k < len && i < n; ++k) schedule[i++] = motif;
          }
        }

        ImuRecording rec;
        rec.participant_id = pid;
        rec.label = names[cls];
        rec.timestamps.resize(n);
        for (auto& ch : rec.channels) ch.resize(n);
        double phase = two_pi * unit(rng);
        for (std::size_t i = 0; i < n; ++i) {
          const auto& m = spec.motifs[schedule[i]];
          const double t = static_cast<double>(i) / spec.native_rate_hz;
          rec.timestamps[i] = t;
          phase += two_pi * m.frequency_hz * style.frequency_scale / spec.native_rate_hz;
          const double a = m.amplitude * style.amplitude_scale;
          const auto g = detail::tilt(m.gravity, style.tilt_axis_angle[0], style.tilt_axis_angle[1]);
          const double s = std::sin(phase);
          const double c = std::cos(phase);
          rec.channels[0][i] = g[0] + 0.2 * a * c + m.noise_std * gauss(rng);
          rec.channels[1][i] = g[1] + 0.1 * a * std::sin(0.5 * phase) + m.noise_std * gauss(rng);
          rec.channels[2][i] = g[2] + a * s + m.noise_std * gauss(rng);
          rec.channels[3][i] = 0.05 * a * c + m.noise_std * gauss(rng);
          rec.channels[4][i] = 0.3 * a * s + m.noise_std * gauss(rng);
          rec.channels[5][i] = 0.05 * a * std::sin(0.5 * phase) + m.noise_std * gauss(rng);
        }
        out.push_back(std::move(rec));
      }
    }
  }
  return out;
}

/// Keeps at most n randomly chosen samples of each class, in original order.
template <typename Sample>
std::vector<Sample> subsample_per_class(const std::vector<Sample>& samples, std::size_t n_per_class, std::uint64_t seed) {
  require(n_per_class >= 1, ErrorCode::InvalidArgument, "n_per_class must be at least 1");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < samples.size(); ++i) by_class[samples[i].label].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> keep;
  for (auto& [label, idx] : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(idx.size(), n_per_class));
    keep.insert(keep.end(), idx.begin(), idx.end());
  }
  std::sort(keep.begin(), keep.end());
  std::vector<Sample> out;
  out.reserve(keep.size());
  for (std::size_t i : keep) out.push_back(samples[i]);
  return out;
}

}  // namespace egocharm
