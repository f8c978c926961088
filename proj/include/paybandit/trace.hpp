#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "paybandit/errors.hpp"
#include "paybandit/types.hpp"
#include "paybandit/util.hpp"

namespace paybandit {

struct TransactionRecord {
  std::string id;
  double amount = 0.0;
  std::string source;
  GatewayId terminal;
  int success = 0;

  bool operator==(const TransactionRecord&) const = default;
};

inline constexpr const char* kTraceHeader = "id,amount,source,terminal,success";

// Synthesized processor for records whose source has no explicit mapping; its
// eligible set is every gateway the table knows about.
inline constexpr const char* kDefaultProcessor = "_default";

// A time-ordered transaction log bound to the routing table it was recorded
// under.  Each record's processor is resolved once at load time.
class Trace {
 public:
  Trace(std::vector<TransactionRecord> records, RoutingTable table,
        std::map<std::string, ProcessorId> sources)
      : records_(std::move(records)), sources_(std::move(sources)) {
    if (records_.empty()) throw EmptyTraceError();
    for (const auto& [src, proc] : sources_) {
      if (!table.has_processor(proc)) {
        throw ConfigError("source '" + src + "' maps to unknown processor '" +
                          proc + "'");
      }
    }
    bool needs_default = false;
    for (const auto& r : records_) {
      if (sources_.find(r.source) == sources_.end()) {
        needs_default = true;
        break;
      }
    }
    if (needs_default && !table.has_processor(kDefaultProcessor)) {
      auto m = table.processors();
      m[kDefaultProcessor] = table.gateways();
      table = RoutingTable(std::move(m));
    }
    table_ = std::move(table);
    processors_.reserve(records_.size());
    for (const auto& r : records_) {
      auto it = sources_.find(r.source);
      processors_.push_back(it == sources_.end() ? ProcessorId(kDefaultProcessor)
                                                 : it->second);
    }
  }

  const std::vector<TransactionRecord>& records() const { return records_; }
  const RoutingTable& table() const { return table_; }
  const ProcessorId& processor_of(std::size_t i) const { return processors_[i]; }
  std::size_t size() const { return records_.size(); }

 private:
  std::vector<TransactionRecord> records_;
  std::map<std::string, ProcessorId> sources_;
  RoutingTable table_;
  std::vector<ProcessorId> processors_;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      out.push_back(field);
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  out.push_back(field);
  return out;
}

inline std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace detail

// Row numbers in errors are 1-based and count the header line.
inline std::vector<TransactionRecord> parse_trace_csv(
    const std::string& content, const RoutingTable& table) {
  std::istringstream in(content);
  std::string line;
  if (!std::getline(in, line)) throw EmptyTraceError();
  const auto header = detail::split_csv_line(detail::strip_cr(line));
  const std::vector<std::string> expected = {"id", "amount", "source",
                                             "terminal", "success"};
  for (const auto& name : expected) {
    bool found = false;
    for (const auto& h : header) found = found || h == name;
    if (!found) throw MissingColumnError(name);
  }
  if (header != expected) throw MalformedRowError(1, "unexpected header layout");

  std::vector<TransactionRecord> records;
  std::set<std::string> seen_ids;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != expected.size()) {
      throw MalformedRowError(row, "expected 5 fields, got " +
                                       std::to_string(fields.size()));
    }
    TransactionRecord rec;
    rec.id = fields[0];
    if (rec.id.empty()) throw MalformedRowError(row, "empty id");
    if (!seen_ids.insert(rec.id).second) {
      throw MalformedRowError(row, "duplicate id '" + rec.id + "'");
    }
    try {
      rec.amount = parse_double(fields[1]);
    } catch (const Error&) {
      throw MalformedRowError(row, "unparseable amount '" + fields[1] + "'");
    }
    if (rec.amount < 0.0) throw MalformedRowError(row, "negative amount");
    rec.source = fields[2];
    rec.terminal = fields[3];
    const auto& gws = table.gateways();
    if (std::find(gws.begin(), gws.end(), rec.terminal) == gws.end()) {
      throw MalformedRowError(row, "unknown terminal '" + rec.terminal + "'");
    }
    if (fields[4] == "0") {
      rec.success = 0;
    } else if (fields[4] == "1") {
      rec.success = 1;
    } else {
      throw MalformedRowError(row, "success must be 0 or 1, got '" + fields[4] +
                                       "'");
    }
    records.push_back(std::move(rec));
  }
  if (records.empty()) throw EmptyTraceError();
  return records;
}

inline Trace load_trace(const std::string& path, RoutingTable table,
                        std::map<std::string, ProcessorId> sources = {}) {
  auto records = parse_trace_csv(read_file(path), table);
  return Trace(std::move(records), std::move(table), std::move(sources));
}

inline std::string format_trace_csv(
    const std::vector<TransactionRecord>& records) {
  std::string out = kTraceHeader;
  out += "\n";
  for (const auto& r : records) {
    out += r.id;
    out += ",";
    out += format_double(r.amount);
    out += ",";
    out += r.source;
    out += ",";
    out += r.terminal;
    out += ",";
    out += r.success ? "1" : "0";
    out += "\n";
  }
  return out;
}

inline void write_trace(const std::vector<TransactionRecord>& records,
                        const std::string& path) {
  write_file_atomic(path, format_trace_csv(records));
}

}  // namespace paybandit
