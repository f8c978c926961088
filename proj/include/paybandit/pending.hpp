#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <mutex>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "paybandit/errors.hpp"
#include "paybandit/types.hpp"
#include "paybandit/util.hpp"

namespace paybandit {

struct PendingEntry {
  std::size_t arm_index = 0;
  GatewayId gateway;
  Timestamp decided_at = 0;
};

inline bool operator==(const PendingEntry& a, const PendingEntry& b) {
  return a.arm_index == b.arm_index && a.gateway == b.gateway &&
         a.decided_at == b.decided_at;
}

// Buffers each routing decision until its reward arrives.  Capacity-bound:
// when full, the oldest entry is evicted and counted as expired, so a reward
// that never comes cannot grow memory without bound.  Consumed ids move to a
// bounded completed set so duplicate rewards are distinguishable from
// unknown ones.
class PendingTable {
 public:
  enum class TakeResult { Applied, Late, Unknown, Duplicate };

  struct Taken {
    TakeResult result = TakeResult::Unknown;
    PendingEntry entry;
  };

  explicit PendingTable(Timestamp ttl_ns = 120 * kNanosPerSecond,
                        std::size_t capacity = 1000000)
      : ttl_ns_(ttl_ns), capacity_(capacity) {}

  bool known(const std::string& txn_id) const {
    std::lock_guard<std::mutex> lock(mu_);
    return pending_.count(txn_id) != 0 || completed_.count(txn_id) != 0;
  }

  void insert(const std::string& txn_id, PendingEntry entry) {
    std::lock_guard<std::mutex> lock(mu_);
    while (pending_.size() >= capacity_) evict_oldest();
    pending_.emplace(txn_id, std::move(entry));
    order_.push_back(txn_id);
    // Ids consumed by rewards leave stale slots in the queue; compact before
    // they dominate.
    if (order_.size() > 2 * pending_.size() + 64) {
      std::deque<std::string> live;
      for (auto& id : order_) {
        if (pending_.count(id)) live.push_back(std::move(id));
      }
      order_ = std::move(live);
    }
  }

  // Claims the entry for txn_id.  Applied if fresh, Late if past TTL (entry
  // consumed, no update should follow), Duplicate if a reward already
  // consumed it, Unknown otherwise.
  Taken take(const std::string& txn_id, Timestamp now) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = pending_.find(txn_id);
    if (it == pending_.end()) {
      if (completed_.count(txn_id) != 0) return {TakeResult::Duplicate, {}};
      return {TakeResult::Unknown, {}};
    }
    Taken out;
    out.entry = it->second;
    out.result = (now - it->second.decided_at) > ttl_ns_ ? TakeResult::Late
                                                         : TakeResult::Applied;
    pending_.erase(it);
    mark_completed(txn_id);
    return out;
  }

  std::size_t size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return pending_.size();
  }

  std::uint64_t expired() const {
    std::lock_guard<std::mutex> lock(mu_);
    return expired_;
  }

  nlohmann::json to_json() const {
    std::lock_guard<std::mutex> lock(mu_);
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& id : order_) {
      auto it = pending_.find(id);
      if (it == pending_.end()) continue;
      nlohmann::json e;
      e["txn_id"] = id;
      e["arm"] = it->second.arm_index;
      e["gateway"] = it->second.gateway;
      e["decided_at"] = it->second.decided_at;
      entries.push_back(std::move(e));
    }
    nlohmann::json done = nlohmann::json::array();
    for (const auto& id : completed_order_) done.push_back(id);
    nlohmann::json j;
    j["entries"] = std::move(entries);
    j["completed"] = std::move(done);
    j["expired"] = expired_;
    return j;
  }

  void restore(const nlohmann::json& j) {
    std::lock_guard<std::mutex> lock(mu_);
    pending_.clear();
    order_.clear();
    completed_.clear();
    completed_order_.clear();
    for (const auto& e : j.at("entries")) {
      PendingEntry entry;
      entry.arm_index = e.at("arm").get<std::size_t>();
      entry.gateway = e.at("gateway").get<std::string>();
      entry.decided_at = e.at("decided_at").get<Timestamp>();
      const auto id = e.at("txn_id").get<std::string>();
      pending_.emplace(id, std::move(entry));
      order_.push_back(id);
    }
    for (const auto& id : j.at("completed")) {
      mark_completed(id.get<std::string>());
    }
    expired_ = j.at("expired").get<std::uint64_t>();
  }

  bool equals(const PendingTable& other) const {
    std::scoped_lock lock(mu_, other.mu_);
    return pending_ == other.pending_ &&
           completed_order_ == other.completed_order_ &&
           expired_ == other.expired_;
  }

 private:
  void evict_oldest() {
    while (!order_.empty()) {
      const auto id = order_.front();
      order_.pop_front();
      auto it = pending_.find(id);
      if (it == pending_.end()) continue;  // already consumed by a reward
      pending_.erase(it);
      ++expired_;
      return;
    }
  }

  void mark_completed(const std::string& txn_id) {
    completed_.insert(txn_id);
    completed_order_.push_back(txn_id);
    while (completed_order_.size() > capacity_) {
      completed_.erase(completed_order_.front());
      completed_order_.pop_front();
    }
  }

  mutable std::mutex mu_;
  Timestamp ttl_ns_;
  std::size_t capacity_;
  std::unordered_map<std::string, PendingEntry> pending_;
  std::deque<std::string> order_;
  std::unordered_set<std::string> completed_;
  std::deque<std::string> completed_order_;
  std::uint64_t expired_ = 0;
};

}  // namespace paybandit
