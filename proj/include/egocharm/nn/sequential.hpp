#pragma once

#include <string>
#include <variant>
#include <vector>

#include "egocharm/nn/layers.hpp"

namespace egocharm::nn {

using Layer = std::variant<Conv1dBank, Activation, GroupNorm, TimePool, Dense, Gru, Lstm, LastStep>;

/// Forward intermediates for one pass through a Sequential.
struct Tape {
  std::vector<Record> records;
};

/// Ordered layer stack over one ParamSet.
class Sequential {
 public:
  Sequential() = default;

  void push(Layer layer) { layers_.push_back(std::move(layer)); }

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  bool empty() const noexcept { return layers_.empty(); }

  /// Registers every layer's parameters under "<prefix>.<index>".
  void declare(ParamSet& ps, const std::string& prefix) {
    for (std::size_t i = 0; i < layers_.size(); ++i)
      std::visit([&](auto& l) { l.declare(ps, prefix + "." + std::to_string(i)); }, layers_[i]);
  }

  Shape output_shape(Shape shape) const {
    for (const auto& layer : layers_) shape = std::visit([&](const auto& l) { return l.output_shape(shape); }, layer);
    return shape;
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers_) n += std::visit([](const auto& l) { return l.param_count(); }, layer);
    return n;
  }

  std::size_t bias_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers_) n += std::visit([](const auto& l) { return l.bias_count(); }, layer);
    return n;
  }

  /// Multiply-accumulate count of one forward pass on an input of the given shape.
  std::size_t macs(Shape shape) const {
    std::size_t n = 0;
    for (const auto& layer : layers_) {
      std::visit(
          [&](const auto& l) {
            n += l.macs(shape);
            shape = l.output_shape(shape);
          },
          layer);
    }
    return n;
  }

  Tensor forward(const ParamSet& ps, Tensor x, Tape* tape = nullptr) const {
    if (tape) tape->records.assign(layers_.size(), Record{});
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      Record* rec = tape ? &tape->records[i] : nullptr;
      x = std::visit([&](const auto& l) { return l.forward(ps, x, rec); }, layers_[i]);
    }
    return x;
  }

  /// Accumulates parameter gradients into ps and returns the gradient w.r.t. the input.
  Tensor backward(ParamSet& ps, Tensor dy, const Tape& tape) const {
    require(tape.records.size() == layers_.size(), ErrorCode::GraphNotRecorded,
            "tape does not belong to this layer stack");
    for (std::size_t i = layers_.size(); i-- > 0;)
      dy = std::visit([&](const auto& l) { return l.backward(ps, dy, tape.records[i]); }, layers_[i]);
    return dy;
  }

 private:
  std::vector<Layer> layers_;
};

}  // namespace egocharm::nn
