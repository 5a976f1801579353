#include "ifs/error.hpp"

namespace ifs {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Io: return "Io";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::NonFiniteData: return "NonFiniteData";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Schema: return "Schema";
    case ErrorCode::DanglingReference: return "DanglingReference";
    case ErrorCode::DisjointBox: return "DisjointBox";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::MissingModel: return "MissingModel";
    case ErrorCode::MissingClassScores: return "MissingClassScores";
    case ErrorCode::MissingClassIndex: return "MissingClassIndex";
    case ErrorCode::MissingGroundTruth: return "MissingGroundTruth";
    case ErrorCode::UnmatchedQuery: return "UnmatchedQuery";
  }
  return "Unknown";
}

namespace {

std::string decorate(ErrorCode code, const std::string& message,
                     std::optional<std::uint64_t> offset) {
  std::string out = std::string(to_string(code)) + ": " + message;
  if (offset) out += " (at byte " + std::to_string(*offset) + ")";
  return out;
}

}  // namespace

Error::Error(ErrorCode code, const std::string& message,
             std::optional<std::uint64_t> offset)
    : std::runtime_error(decorate(code, message, offset)), code_(code), offset_(offset) {}

}  // namespace ifs
