#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "egocharm/checkpoint.hpp"
#include "egocharm/models.hpp"
#include "egocharm/train.hpp"
#include "support/zoo.hpp"

using namespace egocharm;
using egocharm::testing::all_encoders;
using egocharm::testing::all_heads;
using egocharm::testing::random_hl;
using egocharm::testing::toy_spec;

TEST(Zoo, CountParamsEqualsInitializedScalars) {
  for (auto e : all_encoders())
    for (auto h : all_heads()) {
      const auto spec = toy_spec(e, h);
      HierarchicalModel m(spec);
      m.initialize(1);
      const auto c = count_model(spec);
      EXPECT_EQ(c.encoder.params, m.encoder().params().scalar_count()) << to_string(e);
      EXPECT_EQ(c.head.params, m.head_params().scalar_count()) << to_string(h);
    }
  // Shipped-size default as well.
  ModelSpec d;
  HierarchicalModel m(d);
  EXPECT_EQ(count_model(d).encoder.params, m.encoder().params().scalar_count());
  EXPECT_EQ(count_model(d).head.params, m.head_params().scalar_count());
}

TEST(Zoo, JointGradientsMatchFiniteDifferences) {
  for (auto e : all_encoders())
    for (auto h : all_heads()) {
      const auto r = egocharm::testing::hierarchical_gradcheck(toy_spec(e, h), 17);
      EXPECT_LT(r.max_rel_error, 1e-4) << to_string(e) << '+' << to_string(h) << ": " << r.worst;
    }
}

TEST(Encoder, CnnGruEmbeddingIsBoundedAndDeterministic) {
  ModelSpec spec;
  HierarchicalModel m(spec);
  m.initialize(3);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0, 5);
  Tensor w({kImuChannels, 50});
  for (auto& v : w.values()) v = g(rng);
  const Tensor e = encode_low_level(m.encoder(), w);
  ASSERT_EQ(e.size(), 32u);
  for (double v : e.values()) {
    EXPECT_GT(v, -1.0);
    EXPECT_LT(v, 1.0);
  }
  EXPECT_EQ(e, encode_low_level(m.encoder(), w));
}

TEST(Encoder, ZeroWeightsGiveZeroEmbedding) {
  for (auto e : all_encoders()) {
    const auto spec = toy_spec(e, HeadVariant::Gru);
    HierarchicalModel m(spec);
    m.encoder().params().zero_values();
    std::mt19937_64 rng(2);
    const auto hl = random_hl(spec, rng);
    for (const auto& x : m.prepare(hl)) {
      const Tensor emb = m.encoder().embed(x);
      for (double v : emb.values()) EXPECT_EQ(v, 0.0) << to_string(e);
    }
  }
}

TEST(Encoder, WrongInputShapeIsRejected) {
  HierarchicalModel m(ModelSpec{});
  try {
    encode_low_level(m.encoder(), Tensor({kImuChannels, 49}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
}

TEST(Hierarchical, ZeroModelGivesUniform) {
  ModelSpec spec;
  HierarchicalModel m(spec);
  m.encoder().params().zero_values();
  m.head_params().zero_values();
  std::mt19937_64 rng(4);
  WindowedSample hl;
  hl.data = Tensor({kImuChannels, 1500});
  hl.rate_hz = 50;
  const auto p = classify_high_level(m, hl);
  ASSERT_EQ(p.size(), 9u);
  for (double v : p) EXPECT_NEAR(v, 1.0 / 9.0, 1e-15);
}

TEST(Hierarchical, MlpHeadInputIsConcatenation) {
  ModelSpec spec;
  spec.head.variant = HeadVariant::Mlp;
  spec.head.hidden = {16};
  HierarchicalModel m(spec);
  m.initialize(5);
  EXPECT_EQ(head_input_shape(spec), nn::Shape{960});
  std::mt19937_64 rng(6);
  WindowedSample hl;
  hl.data = Tensor({kImuChannels, 1500});
  std::normal_distribution<double> g;
  for (auto& v : hl.data.values()) v = g(rng);
  hl.rate_hz = 50;
  const auto inputs = m.prepare(hl);
  auto reversed = inputs;
  std::reverse(reversed.begin(), reversed.end());
  const Tensor a = m.head_input(inputs);
  const Tensor b = m.head_input(reversed);
  std::vector<double> va(a.values().begin(), a.values().end()), vb(b.values().begin(), b.values().end());
  EXPECT_NE(va, vb);
  std::sort(va.begin(), va.end());
  std::sort(vb.begin(), vb.end());
  EXPECT_EQ(va, vb);
}

TEST(Hierarchical, GruHeadIsOrderSensitive) {
  const auto spec = toy_spec(EncoderVariant::CnnGru, HeadVariant::Gru);
  HierarchicalModel m(spec);
  m.initialize(8);
  std::mt19937_64 rng(9);
  const auto inputs = m.prepare(random_hl(spec, rng));
  auto reversed = inputs;
  std::reverse(reversed.begin(), reversed.end());
  EXPECT_NE(m.logits(inputs), m.logits(reversed));
}

TEST(Hierarchical, ProbabilitiesFormSimplex) {
  std::mt19937_64 rng(10);
  for (auto e : all_encoders())
    for (auto h : all_heads()) {
      const auto spec = toy_spec(e, h);
      HierarchicalModel m(spec);
      m.initialize(rng());
      for (int i = 0; i < 5; ++i) {
        auto hl = random_hl(spec, rng);
        for (auto& v : hl.data.values()) v *= 50.0;
        const auto p = classify_high_level(m, hl);
        double s = 0;
        for (double v : p) {
          EXPECT_GE(v, 0.0);
          s += v;
        }
        EXPECT_NEAR(s, 1.0, 1e-9);
      }
    }
}

TEST(Hierarchical, NonDivisibleWindowRejected) {
  ModelSpec spec;
  spec.ll_window_s = 7;
  EXPECT_THROW(spec.windows_per_hl(), Error);
}

TEST(Probe, ZeroProbeIsUniformAndSlopeApplied) {
  ProbeHead probe(32, 3);
  probe.params().zero_values();
  const Tensor e = Tensor::vector(std::vector<double>(32, -2.0));
  for (double v : probe.probabilities(e)) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);

  probe.params().initialize(4);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  Tensor x({32});
  for (auto& v : x.values()) v = g(rng);
  const auto& w = probe.params()[probe.params().size() - 2].value;
  const auto& b = probe.params()[probe.params().size() - 1].value;
  const Tensor z = probe.logits(x);
  for (std::size_t k = 0; k < 3; ++k) {
    double s = b[k];
    for (std::size_t i = 0; i < 32; ++i) s += w(k, i) * (x[i] > 0 ? x[i] : 0.01 * x[i]);
    EXPECT_NEAR(z[k], s, 1e-12);
  }
}

TEST(Counting, ProbeMatchesReportedRow) {
  const auto c = count_model(ModelSpec{});
  EXPECT_EQ(c.probe.params, 99u);
  EXPECT_EQ(c.probe.flops, 96u);
}

TEST(Counting, DenseMacConvention) {
  nn::Sequential net;
  net.push(nn::Dense{10, 10, false});
  EXPECT_EQ(count_params(net), 100u);
  EXPECT_EQ(count_flops(net, {10}), 100u);

  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    nn::Sequential mlp;
    std::size_t in = 1 + rng() % 40;
    const std::size_t first = in;
    const std::size_t layers = 1 + rng() % 4;
    for (std::size_t l = 0; l < layers; ++l) {
      const std::size_t out = 1 + rng() % 40;
      mlp.push(nn::Dense{in, out});
      if (l + 1 < layers) mlp.push(nn::Activation{nn::ActivationKind::Relu});
      in = out;
    }
    const auto c = count(mlp, {first});
    EXPECT_EQ(c.flops, c.params - c.biases);
  }
}

TEST(Counting, MlpFeatureEncoderFortyEightByFortyEight) {
  ModelSpec spec;
  spec.encoder.variant = EncoderVariant::MlpFeatures;
  spec.encoder.mlp_hidden = {48, 48};
  const auto c = count_model(spec).encoder;
  EXPECT_EQ(c.params, 5408u);
  EXPECT_EQ(c.flops, 5280u);
  EXPECT_EQ(c.params - c.flops, 128u);
}

TEST(Counting, RecurrentFlopsCountEveryStep) {
  nn::Sequential gru;
  gru.push(nn::Gru{6, 8});
  EXPECT_EQ(count_flops(gru, {6, 50}), 50u * 3u * (6u * 8u + 8u * 8u));
  nn::Sequential lstm;
  lstm.push(nn::Lstm{6, 8});
  EXPECT_EQ(count_flops(lstm, {6, 50}), 50u * 4u * (6u * 8u + 8u * 8u));
}

TEST(Budget, Boundaries) {
  const auto ok = check_deploy_budget(21868, 0);
  EXPECT_TRUE(ok.pass);
  EXPECT_EQ(ok.margin, 3132);
  EXPECT_FALSE(check_deploy_budget(30252, 0).pass);
  EXPECT_FALSE(check_deploy_budget(25000, 0).pass);
  EXPECT_TRUE(check_deploy_budget(24999, 0).pass);
  EXPECT_TRUE(check_deploy_budget(ModelSpec{}).pass);
}

TEST(Budget, DeployFlagRejectsOversizedEncoder) {
  ModelSpec spec;
  spec.encoder.channels_per_kernel = 64;
  EXPECT_THROW(HierarchicalModel{spec}, Error);
  spec.encoder.deploy_on_chip = false;
  EXPECT_NO_THROW(HierarchicalModel{spec});
}

TEST(Spec, KeyValueRoundTrip) {
  for (auto e : all_encoders())
    for (auto h : all_heads()) {
      const auto spec = toy_spec(e, h);
      const auto back = model_spec_from_key_values(parse_key_values(format_key_values(to_key_values(spec))));
      EXPECT_EQ(to_key_values(back), to_key_values(spec));
    }
}

TEST(Spec, MalformedNamesTheKey) {
  auto expect_key = [](const std::string& text, const std::string& key) {
    try {
      model_spec_from_key_values(parse_key_values(text));
      FAIL() << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::SpecParseError);
      EXPECT_NE(e.detail().find(key), std::string::npos) << e.detail();
    }
  };
  expect_key("kernel_size = three\n", "kernel_size");
  expect_key("colour = red\n", "colour");
  expect_key("dilations = 1,,2\n", "dilations");
  expect_key("embedding_dim = 0\n", "embedding_dim");
  try {
    parse_key_values("a = 1\na = 2\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SpecParseError);
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

HierarchicalModel trained_like_model(std::uint64_t seed) {
  auto spec = toy_spec(EncoderVariant::CnnGru, HeadVariant::Gru);
  HierarchicalModel m(spec);
  m.initialize(seed);
  m.class_names() = {"a", "b", "c"};
  NormStats s;
  for (std::size_t c = 0; c < kImuChannels; ++c) {
    s.mean.push_back(0.1 * static_cast<double>(c));
    s.stddev.push_back(1.0 + 0.5 * static_cast<double>(c));
  }
  m.encoder().set_norm(s);
  return m;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto m = trained_like_model(21);
  ProbeHead probe(4, 3);
  probe.params().initialize(5);
  const std::string bytes = serialize_checkpoint(m, &probe, {"x", "y", "z"});
  const Checkpoint ck = deserialize_checkpoint(bytes);
  EXPECT_EQ(ck.model.encoder().params().hash(), m.encoder().params().hash());
  EXPECT_EQ(ck.model.head_params().hash(), m.head_params().hash());
  ASSERT_TRUE(ck.probe.has_value());
  EXPECT_EQ(ck.probe->params().hash(), probe.params().hash());
  EXPECT_EQ(ck.probe_class_names, (std::vector<std::string>{"x", "y", "z"}));
  EXPECT_EQ(ck.model.class_names(), m.class_names());
  EXPECT_EQ(ck.model.encoder().norm()->stddev, m.encoder().norm()->stddev);
  EXPECT_EQ(serialize_checkpoint(ck.model, &*ck.probe, ck.probe_class_names), bytes);

  std::mt19937_64 rng(2);
  for (int i = 0; i < 5; ++i) {
    const auto hl = random_hl(m.spec(), rng);
    EXPECT_EQ(classify_high_level(ck.model, hl), classify_high_level(m, hl));
  }
}

TEST(Checkpoint, TruncationAndCorruptionDetected) {
  const std::string bytes = serialize_checkpoint(trained_like_model(1));
  for (std::size_t cut : {bytes.size() - 1, bytes.size() / 2, std::size_t{12}, std::size_t{3}}) {
    try {
      deserialize_checkpoint(bytes.substr(0, cut));
      FAIL() << cut;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::CorruptCheckpoint);
    }
  }
  std::string flipped = bytes;
  flipped[bytes.size() - 20] ^= 0x40;
  try {
    deserialize_checkpoint(flipped);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CorruptCheckpoint);
  }
}

TEST(Checkpoint, VersionBumpDetected) {
  std::string bytes = serialize_checkpoint(trained_like_model(1));
  bytes[4] = static_cast<char>(kCheckpointVersion + 1);
  try {
    deserialize_checkpoint(bytes);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::FormatVersionMismatch);
  }
}

TEST(Checkpoint, FileRoundTrip) {
  const auto m = trained_like_model(9);
  const auto path = (std::filesystem::temp_directory_path() / "egocharm_ckpt_test.egck").string();
  save_model(path, m);
  const auto ck = load_model(path);
  EXPECT_FALSE(ck.probe.has_value());
  EXPECT_EQ(ck.model.encoder().params().hash(), m.encoder().params().hash());
  std::filesystem::remove(path);
  try {
    load_model(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IoError);
  }
}
