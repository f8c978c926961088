#pragma once

#include <algorithm>
#include <cctype>
#include <string>
#include <vector>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "paybandit/errors.hpp"
#include "paybandit/util.hpp"

namespace paybandit {

inline constexpr const char* kEnvPrefix = "PAYBANDIT_";

// PAYBANDIT_PORT=9090 sets /port; PAYBANDIT_SNAPSHOT__INTERVAL_SECONDS=5
// sets /snapshot/interval_seconds.  Double underscore descends one level;
// values parse as JSON when they can, otherwise land as strings.
inline void apply_env_overrides(nlohmann::json& config,
                                const std::string& prefix = kEnvPrefix) {
  if (environ == nullptr) return;
  for (char** e = environ; *e != nullptr; ++e) {
    const std::string entry(*e);
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    std::string key = entry.substr(0, eq);
    if (key.rfind(prefix, 0) != 0) continue;
    key = key.substr(prefix.size());
    if (key.empty()) continue;
    std::transform(key.begin(), key.end(), key.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    std::vector<std::string> path;
    std::size_t pos = 0;
    while (pos <= key.size()) {
      const auto sep = key.find("__", pos);
      if (sep == std::string::npos) {
        path.push_back(key.substr(pos));
        break;
      }
      path.push_back(key.substr(pos, sep - pos));
      pos = sep + 2;
    }
    const std::string value = entry.substr(eq + 1);
    nlohmann::json parsed;
    try {
      parsed = nlohmann::json::parse(value);
    } catch (const nlohmann::json::parse_error&) {
      parsed = value;
    }
    nlohmann::json* node = &config;
    bool reachable = true;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      nlohmann::json& child = (*node)[path[i]];
      if (child.is_null()) child = nlohmann::json::object();
      if (!child.is_object()) {
        reachable = false;  // refuse to clobber a scalar with a subtree
        break;
      }
      node = &child;
    }
    if (reachable) (*node)[path.back()] = parsed;
  }
}

inline nlohmann::json load_config_json(const std::string& path,
                                       bool with_env_overrides = true) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be an object");
  if (with_env_overrides) apply_env_overrides(j);
  return j;
}

}  // namespace paybandit
