#pragma once

#include <chrono>
#include <mutex>

#include "oumwoz/io.hpp"

namespace oumwoz {

class Clock {
 public:
  virtual ~Clock() = default;
  virtual Timestamp now() = 0;
};

class SystemClock final : public Clock {
 public:
  Timestamp now() override {
    return std::chrono::time_point_cast<std::chrono::milliseconds>(std::chrono::system_clock::now());
  }
};

/// Deterministic clock for replays and tests: every call returns the current
/// value and then advances it by `step`.
class SteppingClock final : public Clock {
 public:
  explicit SteppingClock(Timestamp start, std::chrono::milliseconds step = std::chrono::seconds(1))
      : current_(start), step_(step) {}

  Timestamp now() override {
    std::lock_guard lock(mu_);
    auto out = current_;
    current_ += step_;
    return out;
  }

  void advance(std::chrono::milliseconds by) {
    std::lock_guard lock(mu_);
    current_ += by;
  }

 private:
  std::mutex mu_;
  Timestamp current_;
  std::chrono::milliseconds step_;
};

/// Returns whatever was last set. Used when replaying logged events.
class ManualClock final : public Clock {
 public:
  explicit ManualClock(Timestamp t = {}) : current_(t) {}
  Timestamp now() override { return current_; }
  void set(Timestamp t) { current_ = t; }

 private:
  Timestamp current_;
};

}  // namespace oumwoz
