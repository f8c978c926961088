#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace paybandit {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid configuration values or misuse of a policy contract.
struct ConfigError : Error {
  using Error::Error;
};

struct EmptyEligibleSetError : Error {
  EmptyEligibleSetError() : Error("eligible set is empty") {}
};

struct UnknownGatewayError : Error {
  explicit UnknownGatewayError(const std::string& gateway)
      : Error("unknown gateway: " + gateway) {}
};

struct UnknownProcessorError : Error {
  explicit UnknownProcessorError(const std::string& processor)
      : Error("unknown processor: " + processor) {}
};

struct EmptyTraceError : Error {
  EmptyTraceError() : Error("trace contains no records") {}
};

struct MissingColumnError : Error {
  explicit MissingColumnError(const std::string& column)
      : Error("missing column: " + column) {}
};

// Row numbers are 1-based including the header line, matching what an editor
// shows for the offending file.
struct MalformedRowError : Error {
  MalformedRowError(std::size_t row_number, const std::string& reason)
      : Error("row " + std::to_string(row_number) + ": " + reason),
        row(row_number) {}
  std::size_t row;
};

struct InvalidBreakpointsError : Error {
  using Error::Error;
};

struct UndefinedGroundTruthError : Error {
  UndefinedGroundTruthError(const std::string& gateway, std::size_t step)
      : Error("no success-rate estimate for gateway " + gateway + " at step " +
              std::to_string(step)) {}
};

struct DuplicateTxnIdError : Error {
  explicit DuplicateTxnIdError(const std::string& txn_id)
      : Error("transaction '" + txn_id + "' was already routed") {}
};

struct AllRateLimitedError : Error {
  AllRateLimitedError() : Error("every eligible gateway is rate limited") {}
};

struct UnknownTxnError : Error {
  explicit UnknownTxnError(const std::string& txn_id)
      : Error("no pending decision for transaction '" + txn_id + "'") {}
};

struct DuplicateRewardError : Error {
  explicit DuplicateRewardError(const std::string& txn_id)
      : Error("transaction '" + txn_id + "' already received its reward") {}
};

struct IoError : Error {
  using Error::Error;
};

struct CorruptSnapshotError : Error {
  using Error::Error;
};

struct VersionMismatchError : Error {
  using Error::Error;
};

}  // namespace paybandit
