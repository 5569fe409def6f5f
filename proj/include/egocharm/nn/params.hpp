#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "egocharm/tensor.hpp"

namespace egocharm::nn {

enum class ParamRole { Weight, Bias, Scale };

struct Param {
  std::string name;
  ParamRole role = ParamRole::Weight;
  std::size_t fan_in = 1;
  Tensor value;
  Tensor grad;
};

/// Named parameter tensors with gradient buffers of matching shape.
class ParamSet {
 public:
  std::size_t add(const std::string& name, std::initializer_list<std::size_t> shape, ParamRole role,
                  std::size_t fan_in) {
    require(!index_.contains(name), ErrorCode::InvalidArgument, "duplicate parameter name " + name);
    Param p{name, role, fan_in, Tensor(shape), Tensor(shape)};
    index_.emplace(name, params_.size());
    params_.push_back(std::move(p));
    return params_.size() - 1;
  }

  std::size_t size() const noexcept { return params_.size(); }
  Param& operator[](std::size_t i) { return params_[i]; }
  const Param& operator[](std::size_t i) const { return params_[i]; }
  const Tensor& value(std::size_t i) const { return params_[i].value; }
  Tensor& value(std::size_t i) { return params_[i].value; }
  Tensor& grad(std::size_t i) { return params_[i].grad; }
  const Tensor& grad(std::size_t i) const { return params_[i].grad; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  const Param* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
  }
  Param* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.grad.fill(0.0);
  }

  /// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases 0; scales 1.
  void initialize(std::uint64_t seed) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      switch (p.role) {
        case ParamRole::Bias: p.value.fill(0.0); break;
        case ParamRole::Scale: p.value.fill(1.0); break;
        case ParamRole::Weight: {
          std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + i + 1);
          const double bound = 1.0 / std::sqrt(static_cast<double>(p.fan_in));
          std::uniform_real_distribution<double> dist(-bound, bound);
          for (auto& v : p.value.values()) v = dist(rng);
          break;
        }
      }
    }
    zero_grad();
  }

  /// Sets every parameter scalar to zero (used by tests and uniform baselines).
  void zero_values() {
    for (auto& p : params_) p.value.fill(0.0);
  }

  /// 64-bit FNV-1a over the raw bytes of all values, in declaration order.
  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : params_) {
      const auto* bytes = reinterpret_cast<const unsigned char*>(p.value.data());
      for (std::size_t i = 0; i < p.value.size() * sizeof(double); ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
      }
    }
    return h;
  }

 private:
  std::vector<Param> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace egocharm::nn
