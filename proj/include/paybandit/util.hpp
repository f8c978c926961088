#pragma once

#include <charconv>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>

#include "paybandit/errors.hpp"

namespace paybandit {

// Nanoseconds since the unix epoch. All service-side timing (TTLs, rate
// limiting, pacing) flows through an injectable Clock so tests can drive
// time explicitly.
using Timestamp = std::int64_t;
using Clock = std::function<Timestamp()>;

constexpr Timestamp kNanosPerSecond = 1'000'000'000;
constexpr Timestamp kNanosPerMilli = 1'000'000;

inline Timestamp system_now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

inline Clock system_clock_ns() {
  return [] { return system_now_ns(); };
}

// Monotonic clock for durations (TTL ages, rate windows); immune to wall
// clock adjustments.
inline Timestamp steady_now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

inline Clock steady_clock_ns() {
  return [] { return steady_now_ns(); };
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

inline std::uint64_t fnv1a64(std::string_view data,
                             std::uint64_t state = kFnvOffset) {
  for (unsigned char c : data) {
    state ^= c;
    state *= kFnvPrime;
  }
  return state;
}

// Keyed 64-bit hash that is stable across runs, platforms, and restarts.
// The extra byte separates (salt, key) pairs like ("ab","c") and ("a","bc");
// the finalizer fixes FNV's weak high-bit avalanche.
inline std::uint64_t stable_hash(std::string_view salt, std::string_view key) {
  std::uint64_t h = fnv1a64(salt);
  h ^= 0x1fu;
  h *= kFnvPrime;
  return splitmix64(fnv1a64(key, h));
}

// Shortest decimal form that parses back to the identical double.
inline std::string format_double(double value) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text) {
  double value = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw Error("not a number: " + std::string(text));
  }
  return value;
}

// Write-temp-then-rename so a reader never observes a partial file and a
// failed write never clobbers the previous content.
inline void write_file_atomic(const std::filesystem::path& path,
                              std::string_view content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(content.data(),
              static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("rename failed: " + path.string());
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace paybandit
