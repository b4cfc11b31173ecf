#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rrcycle/common.hpp"

namespace rrcycle::corpus {

struct RawLatexDoc {
  std::string id;
  std::string source_path;
  std::string text;
  int year = 2000;
  std::string venue;
};

struct ReferenceEntry {
  std::string key;
  std::string title;
  std::optional<std::string> abstract;
  std::optional<int> year;

  friend bool operator==(const ReferenceEntry&, const ReferenceEntry&) = default;
};

struct Section {
  std::string heading;
  int level = 1;
  std::string body;

  friend bool operator==(const Section&, const Section&) = default;
};

struct PaperRecord {
  std::string id;
  std::string title;
  std::string venue;
  int year = 0;
  std::vector<std::string> outline;
  std::vector<Section> sections;
  std::vector<ReferenceEntry> references;
  // Top-level JSON keys this version does not know about; written back verbatim.
  nlohmann::json extra = nlohmann::json::object();

  friend bool operator==(const PaperRecord&, const PaperRecord&) = default;
};

struct Review {
  std::string summary;
  std::string strengths;
  std::string weaknesses;
  std::string questions;
  int soundness = 1;
  int presentation = 1;
  int contribution = 1;
  double overall = 1.0;

  friend bool operator==(const Review&, const Review&) = default;
};

struct ReviewRecord {
  std::string paper_id;
  std::vector<Review> reviews;
  std::string meta_review;
  Decision decision = Decision::Reject;
  nlohmann::json extra = nlohmann::json::object();

  friend bool operator==(const ReviewRecord&, const ReviewRecord&) = default;
};

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> test;
  int cutoff_year = 0;
};

// ---------------------------------------------------------------------------
// LaTeX normalization

/// Removes every unescaped `%` through end of line, keeping the newline.
/// `\%` stays literal; verbatim-like environments and `\verb` spans are
/// copied untouched.
std::string strip_latex_comments(std::string_view text);

/// Splits comment-free LaTeX into top-level sections. `\subsection` and
/// `\subsubsection` headings are inlined into the enclosing body; any text
/// before the first `\section` becomes a section headed "preamble".
/// Throws Error(UnbalancedBraces) if a heading brace never closes.
std::vector<Section> segment_sections(const RawLatexDoc& doc);

// Drops sections whose heading contains "acknowledg" (case-insensitive).
std::vector<Section> drop_acknowledgments(std::vector<Section> sections);

// Contents of the first `\title{...}`, if any.
std::optional<std::string> extract_title(std::string_view latex);

// ---------------------------------------------------------------------------
// References

struct BibEntry {
  std::string type;
  std::string key;
  std::map<std::string, std::string> fields;  // lowercase field names
  std::size_t line = 0;
};

/// Parses a .bib file into @-entries. @comment, @string and @preamble blocks
/// are skipped. Throws Error(BibSyntax) on malformed entries.
std::vector<BibEntry> parse_bib(std::string_view bib_text);

// Lowercase, whitespace-collapsed, trimmed.
std::string normalize_title(std::string_view title);

class AbstractSource {
 public:
  virtual ~AbstractSource() = default;
  virtual std::optional<std::string> lookup(std::string_view normalized_title) const = 0;
};

// Read-only map of normalized title -> abstract, loaded from a JSON object.
class FixtureAbstractSource final : public AbstractSource {
 public:
  FixtureAbstractSource() = default;
  explicit FixtureAbstractSource(std::map<std::string, std::string> entries);
  static FixtureAbstractSource from_json(const nlohmann::json& j);
  static FixtureAbstractSource load(const std::filesystem::path& path);

  std::optional<std::string> lookup(std::string_view normalized_title) const override;
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::string, std::string, std::less<>> entries_;
};

// Placeholder for an online metadata service. Disabled unless constructed
// with enabled = true, and even then no transport is wired in: every call
// raises SourceUnavailable so pipelines stay offline.
class NetworkAbstractSource final : public AbstractSource {
 public:
  explicit NetworkAbstractSource(std::string endpoint, bool enabled = false)
      : endpoint_(std::move(endpoint)), enabled_(enabled) {}
  std::optional<std::string> lookup(std::string_view normalized_title) const override;
  bool enabled() const { return enabled_; }

 private:
  std::string endpoint_;
  bool enabled_;
};

std::optional<std::string> fetch_abstract(const AbstractSource& source, std::string_view title);

struct MergeResult {
  std::vector<ReferenceEntry> references;
  std::size_t misses = 0;
};

MergeResult merge_reference_abstracts(std::string_view bib_text, const AbstractSource& source);

// ---------------------------------------------------------------------------
// Records, splits, persistence

// Stable content hash of (title, year, venue), hex encoded.
std::string record_id(std::string_view title, int year, std::string_view venue);

struct IngestOptions {
  std::optional<std::string> title;  // overrides \title{}
  std::vector<std::string> outline;  // pre-supplied; must match section count if nonempty
  std::optional<std::string> bib_text;
};

struct IngestResult {
  PaperRecord record;
  std::size_t abstract_misses = 0;
  std::size_t dropped_sections = 0;
};

IngestResult ingest_document(const RawLatexDoc& doc, const IngestOptions& options,
                             const AbstractSource& source);

DatasetSplit chronological_split(const std::vector<PaperRecord>& records, int cutoff_year);

nlohmann::json to_json(const PaperRecord& r);
nlohmann::json to_json(const ReviewRecord& r);
// Throw Error(SchemaViolation) on missing or ill-typed fields.
PaperRecord paper_from_json(const nlohmann::json& j);
ReviewRecord review_from_json(const nlohmann::json& j);

void validate(const PaperRecord& r);
void validate(const ReviewRecord& r);

template <class Record>
std::vector<Record> read_jsonl(std::istream& in);
template <class Record>
void write_jsonl(std::ostream& out, const std::vector<Record>& records);

template <class Record>
std::vector<Record> read_jsonl_file(const std::filesystem::path& path);
template <class Record>
void write_jsonl_file(const std::filesystem::path& path, const std::vector<Record>& records);

}  // namespace rrcycle::corpus
