#pragma once

#include <cstdint>
#include <functional>
#include <utility>

namespace batchlab {

/// Monotone simulation step counter that lazy buffers stamp against.
class SimClock {
 public:
  std::uint64_t step() const { return step_; }
  void advance() { ++step_; }

 private:
  std::uint64_t step_ = 0;
};

/// A derived buffer recomputed at most once per simulation step, on first
/// read. Reads within the same step return the same object.
template <typename T>
class LazyBuffer {
 public:
  using Compute = std::function<void(T&)>;

  LazyBuffer() = default;
  LazyBuffer(const SimClock* clock, Compute compute)
      : clock_(clock), compute_(std::move(compute)) {}

  const T& get() const {
    if (!valid_ || stamp_ != clock_->step()) {
      compute_(value_);
      stamp_ = clock_->step();
      valid_ = true;
    }
    return value_;
  }

  /// Forces recomputation on the next read even within the same step (used
  /// after kinematic writes such as resets).
  void invalidate() { valid_ = false; }

 private:
  const SimClock* clock_ = nullptr;
  Compute compute_;
  mutable T value_{};
  mutable std::uint64_t stamp_ = 0;
  mutable bool valid_ = false;
};

}  // namespace batchlab
