#include "rrcycle/common.hpp"

#include <array>
#include <charconv>
#include <cmath>

namespace rrcycle {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
    case ErrorCode::UnbalancedBraces: return "UnbalancedBraces";
    case ErrorCode::BibSyntax: return "BibSyntax";
    case ErrorCode::DuplicateKey: return "DuplicateKey";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::MalformedJson: return "MalformedJson";
    case ErrorCode::SourceUnavailable: return "SourceUnavailable";
    case ErrorCode::TokenOutOfRange: return "TokenOutOfRange";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::EmptyCompletion: return "EmptyCompletion";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::NoPairs: return "NoPairs";
    case ErrorCode::PanelTooSmall: return "PanelTooSmall";
    case ErrorCode::MissingModelScore: return "MissingModelScore";
    case ErrorCode::NoLabeledRows: return "NoLabeledRows";
    case ErrorCode::CsvSchema: return "CsvSchema";
    case ErrorCode::DegenerateDistribution: return "DegenerateDistribution";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::SingleClassInput: return "SingleClassInput";
    case ErrorCode::MissingArtifact: return "MissingArtifact";
  }
  return "Unknown";
}

ErrorCategory category(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
      return ErrorCategory::Usage;
    case ErrorCode::NonFiniteLoss:
    case ErrorCode::NoPairs:
    case ErrorCode::DegenerateDistribution:
      return ErrorCategory::Numeric;
    default:
      return ErrorCategory::Data;
  }
}

namespace {

std::string decorate(ErrorCode code, const std::string& what,
                     std::optional<std::size_t> line) {
  std::string msg(to_string(code));
  if (line) msg += " (line " + std::to_string(*line) + ")";
  msg += ": ";
  msg += what;
  return msg;
}

}  // namespace

Error::Error(ErrorCode code, const std::string& what, std::optional<std::size_t> line)
    : std::runtime_error(decorate(code, what, line)), code_(code), line_(line) {}

std::string_view to_string(Decision d) {
  return d == Decision::Accept ? "Accept" : "Reject";
}

std::optional<Decision> parse_decision(std::string_view s) {
  if (s == "Accept" || s == "accept" || s == "1") return Decision::Accept;
  if (s == "Reject" || s == "reject" || s == "0") return Decision::Reject;
  return std::nullopt;
}

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) return "nan";
  return std::string(buf.data(), ptr);
}

}  // namespace rrcycle
