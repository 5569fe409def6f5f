#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "egocharm/train.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "support/zoo.hpp"

using namespace egocharm;
using namespace egocharm::testing;

TEST(CrossEntropy, Examples) {
  const std::vector<double> p{0.5, 0.25, 0.25}, w{1, 1, 1};
  EXPECT_NEAR(weighted_cross_entropy(p, 0, w).loss, std::log(2.0), 1e-15);
  EXPECT_NEAR(weighted_cross_entropy(std::vector<double>{1 - 1e-15, 5e-16, 5e-16}, 0, w).loss, 0.0, 1e-14);
  const auto r = weighted_cross_entropy(p, 1, std::vector<double>{1, 2, 1});
  EXPECT_NEAR(r.loss, -2 * std::log(0.25), 1e-15);
  EXPECT_DOUBLE_EQ(r.d_logits[1], 2 * (0.25 - 1));
  EXPECT_DOUBLE_EQ(r.d_logits[0], 2 * 0.5);
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0, 2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + rng() % 8;
    std::vector<double> z(k), w(k);
    for (auto& v : z) v = g(rng);
    for (auto& v : w) v = 0.1 + std::abs(g(rng));
    const int t = static_cast<int>(rng() % k);
    const auto r = weighted_cross_entropy(nn::softmax(z), t, w);
    for (std::size_t i = 0; i < k; ++i) {
      auto up = z, down = z;
      up[i] += 1e-5;
      down[i] -= 1e-5;
      const double num = (weighted_cross_entropy(nn::softmax(up), t, w).loss -
                          weighted_cross_entropy(nn::softmax(down), t, w).loss) /
                         2e-5;
      EXPECT_LT(std::abs(num - r.d_logits[i]) / std::max({std::abs(num), std::abs(r.d_logits[i]), 1e-3}), 1e-6);
    }
  }
}

TEST(CrossEntropy, UniformWeightsEqualUnweighted) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  const std::vector<int> labels{0, 1, 2, 2, 2};
  const auto w = class_weights(labels, 3, ClassWeightsMode::Uniform);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> z(3);
    for (auto& v : z) v = g(rng);
    const auto p = nn::softmax(z);
    const int t = trial % 3;
    EXPECT_EQ(weighted_cross_entropy(p, t, w).loss, -std::log(p[static_cast<std::size_t>(t)]));
  }
}

TEST(ClassWeights, InverseFrequency) {
  std::vector<int> labels;
  for (int i = 0; i < 10; ++i) labels.push_back(0);
  for (int i = 0; i < 30; ++i) labels.push_back(1);
  for (int i = 0; i < 60; ++i) labels.push_back(2);
  const auto w = class_weights(labels, 3, ClassWeightsMode::InverseFrequency);
  EXPECT_NEAR(w[0], 10.0 / 3.0, 1e-15);
  EXPECT_NEAR(w[1], 10.0 / 9.0, 1e-15);
  EXPECT_NEAR(w[2], 5.0 / 9.0, 1e-15);
  const auto absent = class_weights(std::vector<int>{0, 0, 1}, 3, ClassWeightsMode::InverseFrequency);
  EXPECT_EQ(absent[2], 1.0);
}

TEST(StepLr, Examples) {
  TrainConfig c;
  c.learning_rate = 0.1;
  c.lr_gamma = 0.5;
  c.lr_step_epochs = 10;
  EXPECT_NEAR(step_lr(25, c), 0.025, 1e-15);
  EXPECT_EQ(step_lr(0, c), 0.1);
  double prev = step_lr(0, c);
  for (std::size_t e = 1; e < 100; ++e) {
    EXPECT_LE(step_lr(e, c), prev);
    prev = step_lr(e, c);
  }
  c.lr_gamma = 1.0;
  EXPECT_EQ(step_lr(77, c), 0.1);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.lr_gamma = 1.5;
  EXPECT_THROW(c.validate(), Error);
  c.lr_gamma = 0.5;
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), Error);
}

// ---------------------------------------------------------------------------
// Splits

namespace {

std::vector<SampleKey> single_class_participants(std::size_t n, std::size_t per) {
  std::vector<SampleKey> keys;
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t i = 0; i < per; ++i) keys.push_back({"p" + std::to_string(p), static_cast<int>(p % 2)});
  return keys;
}

std::vector<SampleKey> random_instance(std::mt19937_64& rng) {
  const std::size_t participants = 1 + rng() % 12;
  const std::size_t classes = 2 + rng() % 4;
  std::vector<SampleKey> keys;
  for (std::size_t p = 0; p < participants; ++p) {
    const std::size_t own = 1 + rng() % classes;
    for (std::size_t j = 0; j < own; ++j) {
      const int label = static_cast<int>(rng() % classes);
      const std::size_t n = 1 + rng() % 30;
      for (std::size_t i = 0; i < n; ++i) keys.push_back({"q" + std::to_string(p), label});
    }
  }
  return keys;
}

}  // namespace

TEST(Split, SingleClassParticipants) {
  const auto keys = single_class_participants(10, 5);
  const auto plan = stratified_participant_split(keys, 0.2, 1);
  ASSERT_EQ(plan.test_participants.size(), 2u);
  std::set<int> test_classes;
  for (auto i : plan.test_indices) test_classes.insert(keys[i].label);
  EXPECT_EQ(test_classes, (std::set<int>{0, 1}));
  EXPECT_EQ(split_violation(keys, plan), "");
}

TEST(Split, OneParticipantIsInfeasible) {
  const std::vector<SampleKey> keys{{"a", 0}, {"a", 1}};
  try {
    stratified_participant_split(keys, 0.2, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InfeasibleSplit);
  }
}

TEST(Split, SingleOwnerClassIsInfeasible) {
  const std::vector<SampleKey> keys{{"a", 0}, {"b", 0}, {"c", 0}, {"c", 1}};
  EXPECT_THROW(stratified_participant_split(keys, 0.3, 1), Error);
}

TEST(Split, PairwiseClassesHaveNoValidColouring) {
  // Each class is shared by exactly two of three participants; no two-sided
  // assignment covers every class even though no class has a single owner.
  const std::vector<SampleKey> keys{{"a", 0}, {"b", 0}, {"b", 1}, {"c", 1}, {"a", 2}, {"c", 2}};
  EXPECT_FALSE(split_feasible_brute_force(keys));
  EXPECT_THROW(stratified_participant_split(keys, 0.3, 1), Error);
}

TEST(Split, RandomizedAgainstBruteForce) {
  std::mt19937_64 rng(2025);
  std::size_t feasible = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto keys = random_instance(rng);
    const bool expect = split_feasible_brute_force(keys);
    try {
      const auto plan = stratified_participant_split(keys, 0.25, rng());
      ASSERT_TRUE(expect) << "split produced for an infeasible instance, trial " << trial;
      ASSERT_EQ(split_violation(keys, plan), "") << "trial " << trial;
      if (best_share_deviation(keys) <= 0.10) ASSERT_LE(plan.max_share_deviation(), 0.10) << "trial " << trial;
      ++feasible;
    } catch (const Error& e) {
      ASSERT_EQ(e.code(), ErrorCode::InfeasibleSplit);
      ASSERT_FALSE(expect) << "feasible instance rejected, trial " << trial;
    }
  }
  EXPECT_GT(feasible, 100u);
}

TEST(Split, DeterministicUnderSeed) {
  std::mt19937_64 rng(6);
  const auto keys = random_instance(rng);
  if (!split_feasible_brute_force(keys)) GTEST_SKIP();
  const auto a = stratified_participant_split(keys, 0.3, 9);
  const auto b = stratified_participant_split(keys, 0.3, 9);
  EXPECT_EQ(a.test_participants, b.test_participants);
  EXPECT_EQ(a.test_indices, b.test_indices);
}

TEST(Folds, EightParticipantsFourFolds) {
  const auto keys = single_class_participants(8, 3);
  const auto plan = make_folds(keys, 4, 1);
  std::set<std::string> seen;
  std::size_t samples = 0;
  for (std::size_t f = 0; f < 4; ++f) {
    EXPECT_EQ(plan.participants[f].size(), 2u);
    for (const auto& p : plan.participants[f]) EXPECT_TRUE(seen.insert(p).second);
    samples += plan.indices[f].size();
  }
  EXPECT_EQ(seen.size(), 8u);
  EXPECT_EQ(samples, keys.size());
}

TEST(Folds, RandomizedPartitionProperty) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto keys = random_instance(rng);
    std::set<std::string> all;
    for (const auto& k : keys) all.insert(k.participant);
    const std::size_t k = 2 + rng() % 4;
    if (all.size() < k) {
      EXPECT_THROW(make_folds(keys, k, 1), Error);
      continue;
    }
    const auto plan = make_folds(keys, k, rng());
    std::vector<int> seen(keys.size(), 0);
    std::set<std::string> parts;
    for (std::size_t f = 0; f < k; ++f) {
      ASSERT_FALSE(plan.participants[f].empty());
      std::set<std::string> own(plan.participants[f].begin(), plan.participants[f].end());
      for (const auto& p : own) ASSERT_TRUE(parts.insert(p).second);
      for (auto i : plan.indices[f]) {
        ASSERT_TRUE(own.contains(keys[i].participant));
        ++seen[i];
      }
    }
    ASSERT_EQ(parts, all);
    for (int s : seen) ASSERT_EQ(s, 1);
  }
}

// ---------------------------------------------------------------------------
// Training loops

namespace {

struct SmallProblem {
  ModelSpec spec = toy_spec(EncoderVariant::CnnGru, HeadVariant::Gru);
  std::vector<WindowedSample> windows;

  explicit SmallProblem(std::uint64_t seed = 5) {
    windows = synthetic_windows(small_hl_spec(seed), spec.rate_hz, spec.hl_window_s, spec.hl_window_s);
  }

  HierarchicalModel model(std::uint64_t seed) const {
    HierarchicalModel m(spec);
    fit_normalization(m.encoder(), windows, spec.ll_window_s);
    m.initialize(seed);
    return m;
  }
};

}  // namespace

TEST(TrainHierarchical, FirstEpochReducesLossAcrossSeeds) {
  const SmallProblem prob;
  TrainConfig cfg;
  cfg.learning_rate = 0.2;
  cfg.max_epochs = 1;
  cfg.batch_size = 8;
  int decreased = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    cfg.seed = seed;
    auto m = prob.model(seed);
    const auto prepared = prepare_all(m, prob.windows);
    const auto h = train_hierarchical(m, prepared, {}, cfg);
    // Loss of the trained model on the same data.
    double after = 0;
    std::vector<int> labels;
    for (const auto& s : prepared) labels.push_back(s.label);
    const auto cw = class_weights(labels, 3, cfg.class_weights);
    for (const auto& s : prepared) after += weighted_cross_entropy(m.probabilities(s.inputs), s.label, cw).loss;
    after /= static_cast<double>(prepared.size());
    decreased += after < h.initial_loss ? 1 : 0;
  }
  EXPECT_EQ(decreased, 10);
}

TEST(TrainHierarchical, DeterministicAndUpdatesBothParts) {
  const SmallProblem prob;
  TrainConfig cfg;
  cfg.learning_rate = 0.3;
  cfg.max_epochs = 3;
  cfg.batch_size = 4;
  auto a = prob.model(2);
  auto b = prob.model(2);
  const auto enc0 = a.encoder().params().hash();
  const auto head0 = a.head_params().hash();
  const auto ha = train_hierarchical(a, prepare_all(a, prob.windows), prepare_all(a, prob.windows), cfg);
  const auto hb = train_hierarchical(b, prepare_all(b, prob.windows), prepare_all(b, prob.windows), cfg);
  ASSERT_EQ(ha.epochs.size(), 3u);
  for (std::size_t e = 0; e < 3; ++e) {
    EXPECT_EQ(ha.epochs[e].train_loss, hb.epochs[e].train_loss);
    EXPECT_EQ(ha.epochs[e].test_macro_f1, hb.epochs[e].test_macro_f1);
  }
  EXPECT_NE(a.encoder().params().hash(), enc0);
  EXPECT_NE(a.head_params().hash(), head0);
  EXPECT_EQ(a.encoder().params().hash(), b.encoder().params().hash());
  EXPECT_LT(ha.epochs.back().train_loss, ha.initial_loss);
  EXPECT_EQ(history_csv(ha).substr(0, 48), "epoch,lr,train_loss,test_macro_f1,test_micro_acc");
}

TEST(TrainHierarchical, DivergenceIsReported) {
  const SmallProblem prob;
  TrainConfig cfg;
  cfg.learning_rate = 1e12;
  cfg.max_epochs = 5;
  cfg.batch_size = 2;
  auto m = prob.model(1);
  try {
    train_hierarchical(m, prepare_all(m, prob.windows), {}, cfg);
    FAIL() << "expected divergence";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DivergenceDetected);
    EXPECT_NE(e.detail().find("epoch"), std::string::npos);
  }
}

TEST(TrainProbe, EncoderStaysFrozen) {
  const SmallProblem prob;
  auto m = prob.model(3);
  SynthSpec ll = small_hl_spec(8);
  ll.level = ActivityLevel::Low;
  const auto windows = synthetic_windows(ll, prob.spec.rate_hz, 1, 1);
  ProbeHead probe(m.spec().encoder.embedding_dim, 3);
  probe.params().initialize(1);
  const auto before = m.encoder().params().hash();
  const auto probe_before = probe.params().hash();
  TrainConfig cfg;
  cfg.learning_rate = 0.5;
  cfg.max_epochs = 2;
  cfg.batch_size = 4;
  const auto h = train_probe(probe, m.encoder(), windows, windows, cfg);
  EXPECT_EQ(m.encoder().params().hash(), before);
  EXPECT_NE(probe.params().hash(), probe_before);
  EXPECT_EQ(h.epochs.size(), 2u);
  EXPECT_GE(windows.size() * 2 / cfg.batch_size, 100u);
}

TEST(TrainProbe, UntrainedProbePredictsFromInitialization) {
  ProbeHead a(4, 3), b(4, 3);
  a.params().initialize(6);
  b.params().initialize(6);
  const Tensor e = Tensor::vector({0.1, -0.4, 0.3, 0.9});
  EXPECT_EQ(a.probabilities(e), b.probabilities(e));
}

TEST(Split, LargeInstanceUsesLocalSearch) {
  std::mt19937_64 rng(31);
  std::vector<SampleKey> keys;
  for (std::size_t p = 0; p < 60; ++p)
    for (int c = 0; c < 9; ++c) {
      if (rng() % 3 == 0) continue;
      const std::size_t n = 1 + rng() % 20;
      for (std::size_t i = 0; i < n; ++i) keys.push_back({"p" + std::to_string(p), c});
    }
  const auto plan = stratified_participant_split(keys, 0.2, 4);
  EXPECT_EQ(split_violation(keys, plan), "");
  EXPECT_LE(plan.max_share_deviation(), 0.10);
  EXPECT_NEAR(static_cast<double>(plan.test_indices.size()) / static_cast<double>(keys.size()), 0.2, 0.05);
}
