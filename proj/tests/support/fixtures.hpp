#pragma once

#include <vector>

#include "egocharm/pipeline.hpp"

namespace egocharm::testing {

inline DatasetManifest manifest_for(const SynthSpec& spec) {
  DatasetManifest m = DatasetManifest::defaults(spec.level);
  m.classes = spec.class_names();
  m.rate_hz = spec.native_rate_hz;
  return m;
}

/// Generated recordings resampled to rate_hz and cut into labelled windows.
inline std::vector<WindowedSample> synthetic_windows(const SynthSpec& spec, double rate_hz, double window_s,
                                                     double stride_s) {
  return build_windows(generate_synthetic(spec), manifest_for(spec), rate_hz, window_s, stride_s);
}

/// Small high-level set for quick training tests: 3 mixtures, 3 s windows at 10 Hz.
inline SynthSpec small_hl_spec(std::uint64_t seed = 5) {
  SynthSpec s;
  s.participants = 4;
  s.recordings_per_class = 1;
  s.duration_s = 30;
  s.segment_min_s = 1;
  s.segment_max_s = 2;
  s.seed = seed;
  return s;
}

}  // namespace egocharm::testing
