#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <deque>

namespace paybandit {

struct WindowEstimate {
  double rate = 0.0;
  std::size_t count = 0;
  bool operator==(const WindowEstimate&) const = default;
};

// Bounded history of binary rewards with a running success count, so the
// estimate is O(1) and the memory per arm is at most the window size.
class SlidingWindowStats {
 public:
  void push(int reward, std::size_t window) {
    rewards_.push_back(static_cast<std::uint8_t>(reward));
    successes_ += reward;
    while (rewards_.size() > window) {
      successes_ -= rewards_.front();
      rewards_.pop_front();
    }
  }

  // Empty history reports rate 0; callers treat count 0 as "never played".
  WindowEstimate estimate() const {
    if (rewards_.empty()) return {0.0, 0};
    return {static_cast<double>(successes_) / rewards_.size(), rewards_.size()};
  }

  const std::deque<std::uint8_t>& rewards() const { return rewards_; }

  bool operator==(const SlidingWindowStats&) const = default;

 private:
  std::deque<std::uint8_t> rewards_;
  std::uint64_t successes_ = 0;
};

// Exponentially discounted play count and reward mass.  decay() multiplies
// both by alpha; add() credits the newest observation at full weight.
class DiscountedStats {
 public:
  static constexpr double kFloor = 1e-12;

  DiscountedStats() = default;
  DiscountedStats(double weighted_count, double weighted_reward)
      : weighted_count_(weighted_count), weighted_reward_(weighted_reward) {}

  void decay(double alpha) {
    weighted_count_ *= alpha;
    weighted_reward_ *= alpha;
    if (weighted_count_ < kFloor) weighted_count_ = 0.0;
    if (weighted_reward_ < kFloor) weighted_reward_ = 0.0;
  }

  void add(double reward) {
    weighted_count_ += 1.0;
    weighted_reward_ += reward;
  }

  double weighted_count() const { return weighted_count_; }
  double weighted_reward() const { return weighted_reward_; }

  double mean() const {
    if (weighted_count_ <= 0.0) return 0.0;
    return weighted_reward_ / weighted_count_;
  }

  bool operator==(const DiscountedStats&) const = default;

 private:
  double weighted_count_ = 0.0;
  double weighted_reward_ = 0.0;
};

// Beta posterior with exponential forgetting.  Only the played arm moves;
// the floor keeps both shape parameters valid for sampling.
struct BetaParams {
  static constexpr double kFloor = 1e-9;

  double lambda = 1.0;
  double gamma = 1.0;

  void observe(int reward, double alpha) {
    lambda = std::max(lambda * alpha + reward, kFloor);
    gamma = std::max(gamma * alpha + (1 - reward), kFloor);
  }

  bool operator==(const BetaParams&) const = default;
};

}  // namespace paybandit
