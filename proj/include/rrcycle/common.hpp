#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rrcycle {

using TokenId = std::uint32_t;

enum class ErrorCode {
  InvalidArgument,
  Io,
  // corpus
  UnbalancedBraces,
  BibSyntax,
  DuplicateKey,
  SchemaViolation,
  MalformedJson,
  SourceUnavailable,
  // policy / simpo
  TokenOutOfRange,
  EmptyBatch,
  EmptyCompletion,
  NonFiniteLoss,
  NoPairs,
  // metrics
  PanelTooSmall,
  MissingModelScore,
  NoLabeledRows,
  CsvSchema,
  // detect
  DegenerateDistribution,
  TooShort,
  SingleClassInput,
  // harness
  MissingArtifact,
};

// Maps onto the CLI exit codes: Usage -> 1, Data -> 2, Numeric -> 3.
enum class ErrorCategory { Usage, Data, Numeric };

std::string_view to_string(ErrorCode code);
ErrorCategory category(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what,
        std::optional<std::size_t> line = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  // 1-based line (or CSV row) the error refers to, when it refers to one.
  std::optional<std::size_t> line() const noexcept { return line_; }

 private:
  ErrorCode code_;
  std::optional<std::size_t> line_;
};

enum class Decision { Accept, Reject };

std::string_view to_string(Decision d);
std::optional<Decision> parse_decision(std::string_view s);

// 64-bit FNV-1a; used for content-addressed ids and per-row seeding.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);

// Shortest round-trip decimal representation of a double.
std::string format_double(double v);

}  // namespace rrcycle
