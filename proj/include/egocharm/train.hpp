#pragma once

// Loss, scheduler, participant-disjoint stratified splitting, and the two
// training loops: joint encoder+head training from high-level labels, and
// probe training on top of a frozen encoder.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "egocharm/eval.hpp"
#include "egocharm/models.hpp"

namespace egocharm {

enum class ClassWeightsMode { InverseFrequency, Uniform };

struct TrainConfig {
  double learning_rate = 0.05;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 30;
  double lr_gamma = 0.5;
  std::size_t lr_step_epochs = 10;
  std::uint64_t seed = 1;
  ClassWeightsMode class_weights = ClassWeightsMode::InverseFrequency;

  void validate() const {
    require(learning_rate > 0 && batch_size > 0 && max_epochs > 0 && lr_step_epochs > 0, ErrorCode::InvalidArgument,
            "training parameters must be positive");
    require(lr_gamma > 0 && lr_gamma <= 1, ErrorCode::InvalidArgument, "lr_gamma must lie in (0, 1]");
  }
};

/// lr0 * gamma^floor(epoch / step)
inline double step_lr(std::size_t epoch, const TrainConfig& cfg) {
  return cfg.learning_rate * std::pow(cfg.lr_gamma, static_cast<double>(epoch / cfg.lr_step_epochs));
}

/// Inverse-frequency weights N / (K * n_c); classes absent from the data get weight 1.
inline std::vector<double> class_weights(std::span<const int> labels, std::size_t classes, ClassWeightsMode mode) {
  std::vector<double> w(classes, 1.0);
  if (mode == ClassWeightsMode::Uniform || labels.empty()) return w;
  std::vector<std::size_t> counts(classes, 0);
  for (int l : labels) ++counts.at(static_cast<std::size_t>(l));
  const double n = static_cast<double>(labels.size());
  for (std::size_t c = 0; c < classes; ++c)
    if (counts[c] > 0) w[c] = n / (static_cast<double>(classes) * static_cast<double>(counts[c]));
  return w;
}

struct LossResult {
  double loss = 0.0;
  /// Gradient with respect to the logits that produced the probabilities.
  Tensor d_logits;
};

/// -w[t] * ln p[t] for softmax probabilities p, with gradient w[t] * (p - onehot(t)).
inline LossResult weighted_cross_entropy(std::span<const double> probs, int target, std::span<const double> weights) {
  const auto t = static_cast<std::size_t>(target);
  require(target >= 0 && t < probs.size() && weights.size() == probs.size(), ErrorCode::InvalidArgument,
          "target or weights do not match the class count");
  LossResult r;
  const double w = weights[t];
  r.loss = -w * std::log(probs[t]);
  r.d_logits = Tensor({probs.size()});
  for (std::size_t c = 0; c < probs.size(); ++c) r.d_logits[c] = w * (probs[c] - (c == t ? 1.0 : 0.0));
  return r;
}

// ---------------------------------------------------------------------------
// Participant-disjoint stratified splitting

struct SampleKey {
  std::string participant;
  int label = 0;
};

template <typename Sample>
std::vector<SampleKey> keys_of(const std::vector<Sample>& samples) {
  std::vector<SampleKey> keys;
  keys.reserve(samples.size());
  for (const auto& s : samples) keys.push_back({s.participant_id, s.label});
  return keys;
}

struct SplitPlan {
  std::vector<std::string> train_participants;
  std::vector<std::string> test_participants;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
  /// Class composition (fraction of each side's samples) per class.
  std::vector<double> train_class_share;
  std::vector<double> test_class_share;

  double max_share_deviation() const {
    double d = 0.0;
    for (std::size_t c = 0; c < train_class_share.size(); ++c)
      d = std::max(d, std::abs(train_class_share[c] - test_class_share[c]));
    return d;
  }
};

struct FoldPlan {
  std::vector<std::vector<std::string>> participants;
  std::vector<std::vector<std::size_t>> indices;
};

namespace detail {

struct ParticipantTable {
  std::vector<std::string> ids;
  std::vector<std::vector<double>> counts;  // participant x class
  std::vector<double> totals;               // per class
  std::size_t classes = 0;
};

inline ParticipantTable tabulate(std::span<const SampleKey> keys) {
  require(!keys.empty(), ErrorCode::InfeasibleSplit, "no samples to split");
  ParticipantTable t;
  int max_label = 0;
  for (const auto& k : keys) {
    require(k.label >= 0, ErrorCode::InvalidArgument, "sample without a label");
    max_label = std::max(max_label, k.label);
  }
  t.classes = static_cast<std::size_t>(max_label) + 1;
  std::map<std::string, std::size_t> index;
  for (const auto& k : keys) index.emplace(k.participant, 0);
  for (auto& [id, i] : index) {
    i = t.ids.size();
    t.ids.push_back(id);
  }
  t.counts.assign(t.ids.size(), std::vector<double>(t.classes, 0.0));
  t.totals.assign(t.classes, 0.0);
  for (const auto& k : keys) {
    t.counts[index[k.participant]][static_cast<std::size_t>(k.label)] += 1.0;
    t.totals[static_cast<std::size_t>(k.label)] += 1.0;
  }
  return t;
}

/// Participants sorted by sample count (descending); ties broken by a seeded shuffle.
inline std::vector<std::size_t> assignment_order(const ParticipantTable& t, std::uint64_t seed) {
  std::vector<std::size_t> order(t.ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::accumulate(t.counts[a].begin(), t.counts[a].end(), 0.0) >
           std::accumulate(t.counts[b].begin(), t.counts[b].end(), 0.0);
  });
  return order;
}

/// True when every present class has samples on both sides.
inline bool covers_both_sides(const ParticipantTable& t, const std::vector<bool>& in_test) {
  for (std::size_t c = 0; c < t.classes; ++c) {
    if (t.totals[c] == 0) continue;
    double test = 0.0;
    for (std::size_t p = 0; p < t.ids.size(); ++p)
      if (in_test[p]) test += t.counts[p][c];
    if (test == 0.0 || test == t.totals[c]) return false;
  }
  return true;
}

/// Shares within this distance of each other count as equally stratified;
/// among those the split closest to the requested test fraction wins.
inline constexpr double kShareTolerance = 0.05;
inline constexpr std::size_t kExhaustiveParticipants = 16;

struct SplitScore {
  bool covers = false;
  double deviation = std::numeric_limits<double>::infinity();
  double size_gap = std::numeric_limits<double>::infinity();

  bool better_than(const SplitScore& o) const {
    if (covers != o.covers) return covers;
    const double a = std::max(deviation, kShareTolerance), b = std::max(o.deviation, kShareTolerance);
    if (a != b) return a < b;
    if (size_gap != o.size_gap) return size_gap < o.size_gap;
    return deviation < o.deviation;
  }
};

inline SplitScore split_score(const ParticipantTable& t, const std::vector<bool>& in_test, double fraction) {
  std::vector<double> test(t.classes, 0.0);
  for (std::size_t p = 0; p < t.ids.size(); ++p)
    if (in_test[p])
      for (std::size_t c = 0; c < t.classes; ++c) test[c] += t.counts[p][c];
  const double total = std::accumulate(t.totals.begin(), t.totals.end(), 0.0);
  const double ntest = std::accumulate(test.begin(), test.end(), 0.0);
  SplitScore s;
  s.covers = true;
  for (std::size_t c = 0; c < t.classes; ++c)
    if (t.totals[c] > 0 && (test[c] == 0.0 || test[c] == t.totals[c])) s.covers = false;
  if (ntest == 0.0 || ntest == total) return s;
  s.deviation = 0.0;
  for (std::size_t c = 0; c < t.classes; ++c)
    s.deviation = std::max(s.deviation, std::abs(test[c] / ntest - (t.totals[c] - test[c]) / (total - ntest)));
  s.size_gap = std::abs(ntest / total - fraction);
  return s;
}

}  // namespace detail

/// Assigns whole participants to train or test so that every class keeps
/// roughly test_fraction of its samples in the test set.
inline SplitPlan stratified_participant_split(std::span<const SampleKey> keys, double test_fraction,
                                              std::uint64_t seed) {
  require(test_fraction > 0 && test_fraction < 1, ErrorCode::InvalidArgument, "test_fraction must lie in (0, 1)");
  const auto t = detail::tabulate(keys);
  const std::size_t np = t.ids.size();
  require(np >= 2, ErrorCode::InfeasibleSplit, "a split needs at least two participants");
  for (std::size_t c = 0; c < t.classes; ++c) {
    if (t.totals[c] == 0) continue;
    std::size_t owners = 0;
    for (std::size_t p = 0; p < np; ++p) owners += t.counts[p][c] > 0 ? 1 : 0;
    require(owners >= 2, ErrorCode::InfeasibleSplit,
            "class " + std::to_string(c) + " comes from a single participant and cannot appear on both sides");
  }

  std::vector<bool> in_test(np, false);
  detail::SplitScore best;
  if (np <= detail::kExhaustiveParticipants) {
    std::vector<bool> trial(np);
    for (std::uint64_t mask = 1; mask + 1 < (std::uint64_t{1} << np); ++mask) {
      for (std::size_t p = 0; p < np; ++p) trial[p] = (mask >> p) & 1U;
      const auto score = detail::split_score(t, trial, test_fraction);
      if (score.better_than(best)) {
        best = score;
        in_test = trial;
      }
    }
  } else {
    // Grow the test side in seeded order, then improve by single flips and pair swaps.
    best = detail::split_score(t, in_test, test_fraction);
    for (std::size_t p : detail::assignment_order(t, seed)) {
      in_test[p] = true;
      const auto score = detail::split_score(t, in_test, test_fraction);
      if (score.better_than(best) || score.size_gap < best.size_gap)
        best = score;
      else
        in_test[p] = false;
    }
    best = detail::split_score(t, in_test, test_fraction);
    for (bool improved = true; improved;) {
      improved = false;
      for (std::size_t p = 0; p < np; ++p) {
        in_test[p] = !in_test[p];
        const auto score = detail::split_score(t, in_test, test_fraction);
        if (score.better_than(best)) {
          best = score;
          improved = true;
        } else {
          in_test[p] = !in_test[p];
        }
      }
      for (std::size_t p = 0; p < np && !improved; ++p)
        for (std::size_t q = p + 1; q < np && !improved; ++q) {
          if (in_test[p] == in_test[q]) continue;
          in_test[p] = !in_test[p];
          in_test[q] = !in_test[q];
          const auto score = detail::split_score(t, in_test, test_fraction);
          if (score.better_than(best)) {
            best = score;
            improved = true;
          } else {
            in_test[p] = !in_test[p];
            in_test[q] = !in_test[q];
          }
        }
    }
  }
  require(best.covers, ErrorCode::InfeasibleSplit, "no participant assignment places every class on both sides");

  SplitPlan plan;
  std::vector<double> train_counts(t.classes, 0.0), test_counts(t.classes, 0.0);
  for (std::size_t p = 0; p < np; ++p) {
    (in_test[p] ? plan.test_participants : plan.train_participants).push_back(t.ids[p]);
    for (std::size_t c = 0; c < t.classes; ++c) (in_test[p] ? test_counts : train_counts)[c] += t.counts[p][c];
  }
  const std::set<std::string> test_set(plan.test_participants.begin(), plan.test_participants.end());
  for (std::size_t i = 0; i < keys.size(); ++i)
    (test_set.contains(keys[i].participant) ? plan.test_indices : plan.train_indices).push_back(i);
  const double ntrain = std::accumulate(train_counts.begin(), train_counts.end(), 0.0);
  const double ntest = std::accumulate(test_counts.begin(), test_counts.end(), 0.0);
  for (std::size_t c = 0; c < t.classes; ++c) {
    plan.train_class_share.push_back(train_counts[c] / ntrain);
    plan.test_class_share.push_back(test_counts[c] / ntest);
  }
  return plan;
}

/// k participant-disjoint folds balancing each class's samples across folds.
inline FoldPlan make_folds(std::span<const SampleKey> keys, std::size_t k, std::uint64_t seed) {
  require(k >= 2, ErrorCode::InvalidArgument, "need at least 2 folds");
  const auto t = detail::tabulate(keys);
  const std::size_t np = t.ids.size();
  require(np >= k, ErrorCode::InfeasibleSplit,
          std::to_string(np) + " participants cannot fill " + std::to_string(k) + " folds");

  std::vector<std::vector<double>> fold_counts(k, std::vector<double>(t.classes, 0.0));
  std::vector<std::size_t> fold_members(k, 0);
  std::vector<std::size_t> fold_of(np, 0);
  const auto order = detail::assignment_order(t, seed);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const std::size_t p = order[i];
    std::size_t best = 0;
    if (i < k) {
      best = i;
    } else {
      double best_delta = std::numeric_limits<double>::infinity();
      for (std::size_t f = 0; f < k; ++f) {
        double delta = 0.0;
        for (std::size_t c = 0; c < t.classes; ++c) {
          const double target = t.totals[c] / static_cast<double>(k);
          const double now = fold_counts[f][c] - target;
          const double next = now + t.counts[p][c];
          delta += next * next - now * now;
        }
        if (delta < best_delta - 1e-12 || (std::abs(delta - best_delta) <= 1e-12 && fold_members[f] < fold_members[best])) {
          best_delta = delta;
          best = f;
        }
      }
    }
    fold_of[p] = best;
    ++fold_members[best];
    for (std::size_t c = 0; c < t.classes; ++c) fold_counts[best][c] += t.counts[p][c];
  }

  FoldPlan plan;
  plan.participants.resize(k);
  plan.indices.resize(k);
  std::map<std::string, std::size_t> lookup;
  for (std::size_t p = 0; p < np; ++p) {
    plan.participants[fold_of[p]].push_back(t.ids[p]);
    lookup[t.ids[p]] = fold_of[p];
  }
  for (std::size_t i = 0; i < keys.size(); ++i) plan.indices[lookup[keys[i].participant]].push_back(i);
  return plan;
}

// ---------------------------------------------------------------------------
// Training loops

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double test_macro_f1 = 0.0;
  double test_micro_acc = 0.0;
};

struct History {
  double initial_loss = 0.0;
  std::vector<EpochRecord> epochs;
};

inline std::string history_csv(const History& h) {
  std::ostringstream os;
  os.precision(10);
  os << "epoch,lr,train_loss,test_macro_f1,test_micro_acc\n";
  for (const auto& e : h.epochs)
    os << e.epoch << ',' << e.lr << ',' << e.train_loss << ',' << e.test_macro_f1 << ',' << e.test_micro_acc << '\n';
  return os.str();
}

inline void apply_gradient_step(nn::ParamSet& ps, double lr) {
  for (auto& p : ps)
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] -= lr * p.grad[i];
}

inline int argmax(std::span<const double> v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

namespace detail {

/// Shared mini-batch loop. step(i, scale) runs forward/backward for sample i with
/// the loss gradient multiplied by scale and returns the unscaled loss.
inline History run_minibatch(std::size_t n_train, const TrainConfig& cfg, const std::function<void()>& zero_grad,
                             const std::function<double(std::size_t, double)>& step,
                             const std::function<double(std::size_t)>& loss_only,
                             const std::function<void(double)>& update,
                             const std::function<std::optional<EvalReport>()>& evaluate_test) {
  cfg.validate();
  require(n_train > 0, ErrorCode::InvalidArgument, "empty training set");
  History history;
  double init = 0.0;
  for (std::size_t i = 0; i < n_train; ++i) init += loss_only(i);
  history.initial_loss = init / static_cast<double>(n_train);
  require(std::isfinite(history.initial_loss), ErrorCode::DivergenceDetected, "initial loss is not finite");

  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed);
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const double lr = step_lr(epoch, cfg);
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < n_train; start += cfg.batch_size) {
      const std::size_t end = std::min(n_train, start + cfg.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      zero_grad();
      for (std::size_t b = start; b < end; ++b) {
        const double loss = step(order[b], scale);
        if (!std::isfinite(loss))
          fail(ErrorCode::DivergenceDetected, "non-finite loss at epoch " + std::to_string(epoch + 1) + ", sample " +
                                                  std::to_string(order[b]) + " (lr " + std::to_string(lr) + ")");
        total += loss;
      }
      update(lr);
    }
    EpochRecord rec{epoch + 1, lr, total / static_cast<double>(n_train), 0.0, 0.0};
    if (auto report = evaluate_test()) {
      rec.test_macro_f1 = report->macro_f1;
      rec.test_micro_acc = report->micro_accuracy;
    }
    history.epochs.push_back(rec);
  }
  return history;
}

}  // namespace detail

/// High-level sample with each low-level window already preprocessed for the encoder.
struct PreparedSample {
  std::vector<Tensor> inputs;
  int label = -1;
  std::string participant_id;
};

inline std::vector<PreparedSample> prepare_all(const HierarchicalModel& model, const std::vector<WindowedSample>& hl) {
  std::vector<PreparedSample> out;
  out.reserve(hl.size());
  for (const auto& s : hl) out.push_back({model.prepare(s), s.label, s.participant_id});
  return out;
}

inline std::vector<int> predict(const HierarchicalModel& model, const std::vector<PreparedSample>& samples) {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(argmax(model.logits(s.inputs).values()));
  return out;
}

inline EvalReport evaluate_model(const HierarchicalModel& model, const std::vector<PreparedSample>& samples) {
  std::vector<int> targets;
  for (const auto& s : samples) targets.push_back(s.label);
  const auto preds = predict(model, samples);
  return evaluate(preds, targets, model.num_classes());
}

/// Joint encoder + head training from high-level labels only.
inline History train_hierarchical(HierarchicalModel& model, const std::vector<PreparedSample>& train,
                                  const std::vector<PreparedSample>& test, const TrainConfig& cfg) {
  std::vector<int> labels;
  for (const auto& s : train) labels.push_back(s.label);
  const auto weights = class_weights(labels, model.num_classes(), cfg.class_weights);

  auto step = [&](std::size_t i, double scale) {
    HierarchicalPass pass;
    const Tensor z = model.logits(train[i].inputs, &pass);
    const auto p = nn::softmax(z.values());
    auto r = weighted_cross_entropy(p, train[i].label, weights);
    r.d_logits *= scale;
    model.backward(r.d_logits, pass);
    return r.loss;
  };
  auto loss_only = [&](std::size_t i) {
    const auto p = model.probabilities(train[i].inputs);
    return weighted_cross_entropy(p, train[i].label, weights).loss;
  };
  auto update = [&](double lr) {
    apply_gradient_step(model.encoder().params(), lr);
    apply_gradient_step(model.head_params(), lr);
  };
  auto eval = [&]() -> std::optional<EvalReport> {
    if (test.empty()) return std::nullopt;
    return evaluate_model(model, test);
  };
  return detail::run_minibatch(train.size(), cfg, [&] { model.zero_grad(); }, step, loss_only, update, eval);
}

/// Embeddings of raw low-level windows from a frozen encoder.
inline std::vector<Tensor> embed_windows(const Encoder& frozen, const std::vector<WindowedSample>& windows) {
  std::vector<Tensor> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back(encode_low_level(frozen, w.data));
  return out;
}

inline EvalReport evaluate_probe(const ProbeHead& probe, const std::vector<Tensor>& embeddings, std::span<const int> labels) {
  std::vector<int> preds;
  preds.reserve(embeddings.size());
  for (const auto& e : embeddings) preds.push_back(argmax(probe.logits(e).values()));
  return evaluate(preds, labels, probe.classes());
}

/// Trains only the probe's dense layer. The encoder is taken by const reference
/// and only its embeddings are consumed.
inline History train_probe(ProbeHead& probe, const Encoder& frozen, const std::vector<WindowedSample>& train,
                           const std::vector<WindowedSample>& test, const TrainConfig& cfg) {
  const auto train_emb = embed_windows(frozen, train);
  const auto test_emb = embed_windows(frozen, test);
  std::vector<int> train_labels, test_labels;
  for (const auto& w : train) train_labels.push_back(w.label);
  for (const auto& w : test) test_labels.push_back(w.label);
  const auto weights = class_weights(train_labels, probe.classes(), cfg.class_weights);

  auto step = [&](std::size_t i, double scale) {
    nn::Tape tape;
    const Tensor z = probe.logits(train_emb[i], &tape);
    auto r = weighted_cross_entropy(nn::softmax(z.values()), train_labels[i], weights);
    r.d_logits *= scale;
    probe.backward(r.d_logits, tape);
    return r.loss;
  };
  auto loss_only = [&](std::size_t i) {
    return weighted_cross_entropy(probe.probabilities(train_emb[i]), train_labels[i], weights).loss;
  };
  auto eval = [&]() -> std::optional<EvalReport> {
    if (test.empty()) return std::nullopt;
    return evaluate_probe(probe, test_emb, test_labels);
  };
  return detail::run_minibatch(
      train.size(), cfg, [&] { probe.params().zero_grad(); }, step, loss_only,
      [&](double lr) { apply_gradient_step(probe.params(), lr); }, eval);
}

}  // namespace egocharm
