#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace ifs {

enum class ErrorCode {
  Io,
  BadMagic,
  UnsupportedVersion,
  TruncatedFile,
  NonFiniteData,
  InvalidArgument,
  Schema,
  DanglingReference,
  DisjointBox,
  DimensionMismatch,
  DegenerateInput,
  MissingModel,
  MissingClassScores,
  MissingClassIndex,
  MissingGroundTruth,
  UnmatchedQuery,
};

const char* to_string(ErrorCode code);

// All library failures are reported through this type. Format errors carry
// the byte offset at which the problem was detected, when one applies.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::uint64_t> offset = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::uint64_t> offset() const noexcept { return offset_; }

 private:
  ErrorCode code_;
  std::optional<std::uint64_t> offset_;
};

}  // namespace ifs
