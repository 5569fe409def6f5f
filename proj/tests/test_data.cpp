#include <gtest/gtest.h>

#include <filesystem>

#include "egocharm/data.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace egocharm;
using namespace egocharm::testing;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("egocharm_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(Csv, ParsesTwoRows) {
  const auto rec = parse_recording_csv("t,ax,ay,az,gx,gy,gz\n0,1,2,3,4,5,6\n0.02,1.5,2,3,4,5,6.25\n");
  ASSERT_EQ(rec.length(), 2u);
  EXPECT_EQ(rec.timestamps[1], 0.02);
  EXPECT_EQ(rec.channels[0][1], 1.5);
  EXPECT_EQ(rec.channels[5][1], 6.25);
}

TEST(Csv, NanCellNamesLineAndColumn) {
  try {
    parse_recording_csv("t,ax,ay,az,gx,gy,gz\n0,1,2,3,4,5,6\n0.02,1,2,nan,4,5,6\n", "r.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ParseError);
    EXPECT_NE(e.detail().find("line 3"), std::string::npos) << e.detail();
    EXPECT_NE(e.detail().find("column az"), std::string::npos) << e.detail();
  }
}

TEST(Csv, StructuralErrors) {
  EXPECT_EQ(code_of([] { parse_recording_csv("a,b\n"); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_recording_csv("t,ax,ay,az,gx,gy,gz\n0,1,2,3\n"); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_recording_csv("t,ax,ay,az,gx,gy,gz\n0,1,2,3,4,5,x\n"); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_recording_csv("t,ax,ay,az,gx,gy,gz\n1,0,0,0,0,0,0\n1,0,0,0,0,0,0\n"); }),
            ErrorCode::NonMonotonicTimestamps);
}

TEST(Csv, RoundTripIsExact) {
  SynthSpec s = small_hl_spec();
  s.participants = 1;
  s.duration_s = 5;
  for (const auto& rec : generate_synthetic(s)) {
    const auto back = parse_recording_csv(format_recording_csv(rec));
    EXPECT_EQ(back.timestamps, rec.timestamps);
    for (std::size_t c = 0; c < kImuChannels; ++c) EXPECT_EQ(back.channels[c], rec.channels[c]);
  }
}

TEST(Manifest, UnknownLabelIsRejected) {
  const auto dir = scratch("unknown_label");
  SynthSpec s = small_hl_spec();
  s.participants = 1;
  s.duration_s = 2;
  auto recs = generate_synthetic(s);
  recs.resize(1);
  recs[0].label = "juggling";
  auto m = manifest_for(s);
  m.classes.push_back("juggling");
  m = write_dataset(dir, m, recs);
  m.classes.pop_back();
  EXPECT_EQ(code_of([&] { ingest(m); }), ErrorCode::UnknownLabel);
  std::filesystem::remove_all(dir);
}

TEST(Manifest, WriteIngestRoundTrip) {
  const auto dir = scratch("roundtrip");
  SynthSpec s = small_hl_spec();
  s.participants = 2;
  s.duration_s = 4;
  const auto recs = generate_synthetic(s);
  write_dataset(dir, manifest_for(s), recs);
  const auto m = load_manifest((dir / "manifest.json").string());
  EXPECT_EQ(m.classes, s.class_names());
  const auto back = ingest(m);
  ASSERT_EQ(back.size(), recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(back[i].participant_id, recs[i].participant_id);
    EXPECT_EQ(back[i].label, recs[i].label);
    EXPECT_EQ(back[i].channels[2], recs[i].channels[2]);
  }
  std::filesystem::remove_all(dir);
}

TEST(Manifest, JsonErrors) {
  EXPECT_THROW(manifest_from_json(nlohmann::json::parse(R"({"level":"medium"})")), Error);
  EXPECT_EQ(code_of([] { DatasetManifest::defaults(ActivityLevel::High).class_index("juggling"); }),
            ErrorCode::UnknownLabel);
  EXPECT_EQ(code_of([] { load_manifest("/nonexistent/manifest.json"); }), ErrorCode::IoError);
}

TEST(Synthetic, DeterministicUnderSeed) {
  SynthSpec s = small_hl_spec(11);
  const auto a = generate_synthetic(s);
  const auto b = generate_synthetic(s);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t c = 0; c < kImuChannels; ++c) EXPECT_EQ(a[i].channels[c], b[i].channels[c]);
  s.seed = 12;
  EXPECT_NE(generate_synthetic(s)[0].channels[2], a[0].channels[2]);
  EXPECT_EQ(a.size(), 4u * 3u);
  EXPECT_EQ(a[0].participant_id, "p01");
}

TEST(Synthetic, NoiselessStationaryIsConstant) {
  SynthSpec s;
  s.level = ActivityLevel::Low;
  s.participants = 1;
  s.recordings_per_class = 1;
  s.duration_s = 5;
  for (auto& m : s.motifs) m.noise_std = 0;
  const auto recs = generate_synthetic(s);
  ASSERT_EQ(*recs[0].label, "stationary");
  for (std::size_t c = 0; c < kImuChannels; ++c)
    for (double v : recs[0].channels[c]) EXPECT_EQ(v, recs[0].channels[c][0]);
}

TEST(Synthetic, WalkingPeaksAtTwoHertz) {
  SynthSpec s;
  s.level = ActivityLevel::Low;
  s.participants = 3;
  s.recordings_per_class = 1;
  s.duration_s = 10;
  s.frequency_jitter = 0;
  const auto recs = generate_synthetic(s);
  for (const auto& r : recs)
    if (*r.label == "walking") {
      // exactly 10 s so 2 Hz falls on a bin
      const std::vector<double> az(r.channels[2].begin(), r.channels[2].begin() + 1000);
      EXPECT_DOUBLE_EQ(dominant_frequency(az, s.native_rate_hz), 2.0);
    }
}

TEST(Synthetic, SpectralOracleSeparatesLowLevelWindows) {
  SynthSpec s;
  s.level = ActivityLevel::Low;
  s.participants = 6;
  s.duration_s = 20;
  const auto windows = synthetic_windows(s, 50, 1, 1);
  std::size_t correct = 0;
  for (const auto& w : windows) correct += spectral_ll_class(w.data, 50, s) == w.label ? 1 : 0;
  EXPECT_GE(static_cast<double>(correct) / static_cast<double>(windows.size()), 0.99);
}

TEST(Synthetic, SpectralOracleSeparatesHighLevelWindows) {
  SynthSpec s;
  s.participants = 4;
  s.duration_s = 70;
  const auto windows = synthetic_windows(s, 50, 30, 10);
  std::vector<int> pred, truth;
  for (const auto& w : windows) {
    pred.push_back(spectral_hl_class(w, s));
    truth.push_back(w.label);
  }
  EXPECT_GE(evaluate(pred, truth, 3).macro_f1, 0.9);
}

TEST(Synthetic, InvalidSpecRejected) {
  SynthSpec s;
  s.mixtures[0].motif_weights = {0, 0, 0};
  EXPECT_THROW(generate_synthetic(s), Error);
  SynthSpec t;
  t.participants = 0;
  EXPECT_THROW(generate_synthetic(t), Error);
}

TEST(Subsample, KeepsAtMostNPerClassInOrder) {
  std::vector<WindowedSample> xs(10);
  for (std::size_t i = 0; i < 10; ++i) {
    xs[i].label = static_cast<int>(i % 3);
    xs[i].start_time = static_cast<double>(i);
  }
  const auto sub = subsample_per_class(xs, 2, 1);
  ASSERT_EQ(sub.size(), 6u);
  std::map<int, int> count;
  for (std::size_t i = 0; i < sub.size(); ++i) {
    ++count[sub[i].label];
    if (i > 0) EXPECT_LT(sub[i - 1].start_time, sub[i].start_time);
  }
  for (auto [c, n] : count) EXPECT_EQ(n, 2);
  EXPECT_EQ(subsample_per_class(xs, 100, 1).size(), 10u);
  EXPECT_THROW(subsample_per_class(xs, 0, 1), Error);
}
