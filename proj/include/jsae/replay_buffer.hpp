#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "jsae/envs/environment.hpp"
#include "jsae/errors.hpp"
#include "jsae/rng.hpp"

namespace jsae {

/// Fixed-capacity ring buffer of transitions with uniform sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 100000) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("replay buffer capacity must be positive");
    data_.reserve(std::min<std::size_t>(capacity, 1 << 16));
  }

  void push(Transition t) {
    if (data_.size() < capacity_) {
      data_.push_back(std::move(t));
    } else {
      data_[head_] = std::move(t);
      head_ = (head_ + 1) % capacity_;
    }
  }

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return data_.empty(); }

  // Storage order (not insertion order once the buffer has wrapped).
  const Transition& operator[](std::size_t i) const { return data_[i]; }
  const std::vector<Transition>& data() const { return data_; }

  std::vector<Transition> sample(std::size_t count, Rng& rng) const {
    if (data_.empty()) throw ConfigError("sample from empty replay buffer");
    std::vector<Transition> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(data_[rng.below(data_.size())]);
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Transition> data_;
};

}  // namespace jsae
