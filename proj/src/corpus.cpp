#include "rrcycle/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace rrcycle::corpus {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 7> kVerbatimEnvs = {
    "verbatim", "verbatim*", "Verbatim", "lstlisting", "minted", "comment", "alltt"};

bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// If text[pos..] opens a verbatim-like environment, returns the environment name.
std::optional<std::string_view> verbatim_env_at(std::string_view text, std::size_t pos) {
  constexpr std::string_view begin = "\\begin{";
  if (text.compare(pos, begin.size(), begin) != 0) return std::nullopt;
  const std::size_t name_start = pos + begin.size();
  const std::size_t close = text.find('}', name_start);
  if (close == std::string_view::npos) return std::nullopt;
  const std::string_view name = text.substr(name_start, close - name_start);
  for (std::string_view env : kVerbatimEnvs)
    if (name == env) return name;
  return std::nullopt;
}

// Finds the index one past the brace matching text[open] == '{'.
std::optional<std::size_t> match_brace(std::string_view text, std::size_t open) {
  int depth = 0;
  for (std::size_t i = open; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\\') {
      ++i;
      continue;
    }
    if (c == '{') ++depth;
    if (c == '}' && --depth == 0) return i + 1;
  }
  return std::nullopt;
}

struct SectioningCommand {
  std::size_t start = 0;  // position of the backslash
  std::size_t end = 0;    // one past the closing brace
  bool top_level = false;
  std::string heading;
};

// Matches `\section`, `\subsection` or `\subsubsection` (optionally starred)
// followed by a braced heading at `pos`.
std::optional<SectioningCommand> sectioning_at(std::string_view text, std::size_t pos) {
  constexpr std::array<std::pair<std::string_view, bool>, 3> kCommands = {{
      {"\\section", true}, {"\\subsection", false}, {"\\subsubsection", false}}};
  for (auto [name, top] : kCommands) {
    if (text.compare(pos, name.size(), name) != 0) continue;
    std::size_t i = pos + name.size();
    if (i < text.size() && is_alpha(text[i])) continue;
    if (i < text.size() && text[i] == '*') ++i;
    while (i < text.size() && is_space(text[i])) ++i;
    if (i >= text.size() || text[i] != '{') return std::nullopt;
    auto close = match_brace(text, i);
    if (!close)
      throw Error(ErrorCode::UnbalancedBraces,
                  "heading brace opened at offset " + std::to_string(i) + " never closes");
    SectioningCommand cmd;
    cmd.start = pos;
    cmd.end = *close;
    cmd.top_level = top;
    cmd.heading = std::string(trim(text.substr(i + 1, *close - i - 2)));
    return cmd;
  }
  return std::nullopt;
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += c;
  }
  return out;
}

std::string strip_braces(std::string_view s) {
  std::string out;
  for (char c : s)
    if (c != '{' && c != '}') out += c;
  return out;
}

// --- JSON field helpers ----------------------------------------------------

[[noreturn]] void schema_error(const std::string& what) {
  throw Error(ErrorCode::SchemaViolation, what);
}

const json& require(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) schema_error(std::string("missing field '") + key + "'");
  return *it;
}

std::string get_string(const json& j, const char* key) {
  const json& v = require(j, key);
  if (!v.is_string()) schema_error(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

int get_int(const json& j, const char* key) {
  const json& v = require(j, key);
  if (!v.is_number_integer()) schema_error(std::string("field '") + key + "' must be an integer");
  return v.get<int>();
}

double get_number(const json& j, const char* key) {
  const json& v = require(j, key);
  if (!v.is_number()) schema_error(std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

const json& get_array(const json& j, const char* key) {
  const json& v = require(j, key);
  if (!v.is_array()) schema_error(std::string("field '") + key + "' must be an array");
  return v;
}

json collect_extra(const json& j, std::initializer_list<std::string_view> known) {
  json extra = json::object();
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) extra[it.key()] = it.value();
  }
  return extra;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string strip_latex_comments(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '\\') {
      if (auto env = verbatim_env_at(text, i)) {
        const std::string end_tag = "\\end{" + std::string(*env) + "}";
        std::size_t stop = text.find(end_tag, i);
        stop = stop == std::string_view::npos ? text.size() : stop + end_tag.size();
        out.append(text.substr(i, stop - i));
        i = stop;
        continue;
      }
      if (text.compare(i, 5, "\\verb") == 0) {
        std::size_t j = i + 5;
        if (j < text.size() && text[j] == '*') ++j;
        if (j < text.size() && !is_alpha(text[j]) && text[j] != '\n') {
          const char delim = text[j];
          std::size_t stop = text.find_first_of(std::string{delim, '\n'}, j + 1);
          stop = stop == std::string_view::npos ? text.size() : stop + (text[stop] == delim ? 1 : 0);
          out.append(text.substr(i, stop - i));
          i = stop;
          continue;
        }
      }
      // Control symbol: the backslash and the next byte travel together, which
      // keeps `\%` literal and makes `\\%` a comment.
      out += c;
      if (i + 1 < text.size()) out += text[i + 1];
      i += 2;
      continue;
    }
    if (c == '%') {
      const std::size_t nl = text.find('\n', i);
      i = nl == std::string_view::npos ? text.size() : nl;
      continue;
    }
    out += c;
    ++i;
  }
  return out;
}

std::vector<Section> segment_sections(const RawLatexDoc& doc) {
  const std::string_view text = doc.text;
  std::vector<Section> sections;
  std::string current_heading = "preamble";
  std::string body;
  bool have_section = false;

  auto flush = [&] {
    std::string trimmed(trim(body));
    if (have_section || !trimmed.empty()) sections.push_back({current_heading, 1, std::move(trimmed)});
    body.clear();
  };

  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '\\') {
      if (auto cmd = sectioning_at(text, i)) {
        if (cmd->top_level) {
          flush();
          current_heading = cmd->heading;
          have_section = true;
        } else {
          body += "\n\n";
          body += cmd->heading;
          body += "\n\n";
        }
        i = cmd->end;
        continue;
      }
      body += text[i];
      if (i + 1 < text.size()) body += text[i + 1];
      i += 2;
      continue;
    }
    body += text[i++];
  }
  flush();
  return sections;
}

std::vector<Section> drop_acknowledgments(std::vector<Section> sections) {
  std::erase_if(sections, [](const Section& s) {
    return to_lower(s.heading).find("acknowledg") != std::string::npos;
  });
  return sections;
}

std::optional<std::string> extract_title(std::string_view latex) {
  const std::size_t pos = latex.find("\\title{");
  if (pos == std::string_view::npos) return std::nullopt;
  const std::size_t open = pos + 6;
  auto close = match_brace(latex, open);
  if (!close) throw Error(ErrorCode::UnbalancedBraces, "\\title brace never closes");
  return collapse_whitespace(latex.substr(open + 1, *close - open - 2));
}

// ---------------------------------------------------------------------------

std::string normalize_title(std::string_view title) { return collapse_whitespace(to_lower(title)); }

FixtureAbstractSource::FixtureAbstractSource(std::map<std::string, std::string> entries) {
  for (auto& [title, abstract] : entries) entries_.emplace(normalize_title(title), std::move(abstract));
}

FixtureAbstractSource FixtureAbstractSource::from_json(const json& j) {
  if (!j.is_object()) schema_error("abstract fixture must be a JSON object of title -> abstract");
  std::map<std::string, std::string> entries;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it.value().is_string()) schema_error("abstract for '" + it.key() + "' must be a string");
    entries.emplace(it.key(), it.value().get<std::string>());
  }
  return FixtureAbstractSource(std::move(entries));
}

FixtureAbstractSource FixtureAbstractSource::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedJson, path.string() + ": " + e.what());
  }
  return from_json(j);
}

std::optional<std::string> FixtureAbstractSource::lookup(std::string_view normalized_title) const {
  auto it = entries_.find(normalized_title);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> NetworkAbstractSource::lookup(std::string_view) const {
  throw Error(ErrorCode::SourceUnavailable,
              enabled_ ? "no transport configured for " + endpoint_
                       : "network abstract source is disabled");
}

std::optional<std::string> fetch_abstract(const AbstractSource& source, std::string_view title) {
  if (trim(title).empty()) throw Error(ErrorCode::InvalidArgument, "title must be nonempty");
  return source.lookup(normalize_title(title));
}

MergeResult merge_reference_abstracts(std::string_view bib_text, const AbstractSource& source) {
  MergeResult result;
  std::set<std::string> seen;
  for (const BibEntry& entry : parse_bib(bib_text)) {
    if (!seen.insert(entry.key).second)
      throw Error(ErrorCode::DuplicateKey, "duplicate citation key '" + entry.key + "'", entry.line);
    ReferenceEntry ref;
    ref.key = entry.key;
    if (auto it = entry.fields.find("title"); it != entry.fields.end())
      ref.title = collapse_whitespace(strip_braces(it->second));
    if (auto it = entry.fields.find("year"); it != entry.fields.end()) {
      const std::string y(trim(strip_braces(it->second)));
      int value = 0;
      if (!y.empty() && std::all_of(y.begin(), y.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
        value = std::stoi(y);
        ref.year = value;
      }
    }
    if (!ref.title.empty()) ref.abstract = fetch_abstract(source, ref.title);
    if (!ref.abstract) ++result.misses;
    result.references.push_back(std::move(ref));
  }
  return result;
}

// ---------------------------------------------------------------------------

std::string record_id(std::string_view title, int year, std::string_view venue) {
  std::string key(title);
  key += '\x1f';
  key += std::to_string(year);
  key += '\x1f';
  key += venue;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(key)));
  return buf;
}

IngestResult ingest_document(const RawLatexDoc& doc, const IngestOptions& options,
                             const AbstractSource& source) {
  if (doc.year < 1990 || doc.year > 2100)
    throw Error(ErrorCode::SchemaViolation,
                doc.source_path + ": year " + std::to_string(doc.year) + " outside [1990, 2100]");

  RawLatexDoc clean = doc;
  clean.text = strip_latex_comments(doc.text);

  IngestResult result;
  PaperRecord& rec = result.record;
  rec.title = options.title ? *options.title : extract_title(clean.text).value_or(doc.id);
  rec.venue = doc.venue;
  rec.year = doc.year;
  rec.id = record_id(rec.title, rec.year, rec.venue);

  auto sections = segment_sections(clean);
  const std::size_t before = sections.size();
  rec.sections = drop_acknowledgments(std::move(sections));
  result.dropped_sections = before - rec.sections.size();

  if (!options.outline.empty()) {
    if (options.outline.size() != rec.sections.size())
      throw Error(ErrorCode::SchemaViolation,
                  doc.source_path + ": outline has " + std::to_string(options.outline.size()) +
                      " items for " + std::to_string(rec.sections.size()) + " sections");
    rec.outline = options.outline;
  }
  if (options.bib_text) {
    auto merged = merge_reference_abstracts(*options.bib_text, source);
    rec.references = std::move(merged.references);
    result.abstract_misses = merged.misses;
  }
  return result;
}

DatasetSplit chronological_split(const std::vector<PaperRecord>& records, int cutoff_year) {
  DatasetSplit split;
  split.cutoff_year = cutoff_year;
  for (const auto& r : records) (r.year < cutoff_year ? split.train : split.test).push_back(r.id);
  return split;
}

// ---------------------------------------------------------------------------

json to_json(const PaperRecord& r) {
  json j = r.extra.is_object() ? r.extra : json::object();
  j["id"] = r.id;
  j["title"] = r.title;
  j["venue"] = r.venue;
  j["year"] = r.year;
  j["outline"] = r.outline;
  json sections = json::array();
  for (const auto& s : r.sections) sections.push_back({{"heading", s.heading}, {"level", s.level}, {"body", s.body}});
  j["sections"] = std::move(sections);
  json refs = json::array();
  for (const auto& ref : r.references) {
    json e = {{"key", ref.key}, {"title", ref.title}};
    if (ref.abstract) e["abstract"] = *ref.abstract;
    if (ref.year) e["year"] = *ref.year;
    refs.push_back(std::move(e));
  }
  j["references"] = std::move(refs);
  return j;
}

json to_json(const ReviewRecord& r) {
  json j = r.extra.is_object() ? r.extra : json::object();
  j["paper_id"] = r.paper_id;
  json reviews = json::array();
  for (const auto& rv : r.reviews) {
    reviews.push_back({{"summary", rv.summary},
                       {"strengths", rv.strengths},
                       {"weaknesses", rv.weaknesses},
                       {"questions", rv.questions},
                       {"soundness", rv.soundness},
                       {"presentation", rv.presentation},
                       {"contribution", rv.contribution},
                       {"overall", rv.overall}});
  }
  j["reviews"] = std::move(reviews);
  j["meta_review"] = r.meta_review;
  j["decision"] = std::string(to_string(r.decision));
  return j;
}

PaperRecord paper_from_json(const json& j) {
  if (!j.is_object()) schema_error("record must be a JSON object");
  PaperRecord r;
  r.id = get_string(j, "id");
  r.title = get_string(j, "title");
  r.venue = get_string(j, "venue");
  r.year = get_int(j, "year");
  if (j.contains("outline")) {
    for (const auto& item : get_array(j, "outline")) {
      if (!item.is_string()) schema_error("outline items must be strings");
      r.outline.push_back(item.get<std::string>());
    }
  }
  for (const auto& s : get_array(j, "sections")) {
    if (!s.is_object()) schema_error("sections must be objects");
    r.sections.push_back({get_string(s, "heading"), get_int(s, "level"), get_string(s, "body")});
  }
  if (j.contains("references")) {
    for (const auto& e : get_array(j, "references")) {
      if (!e.is_object()) schema_error("references must be objects");
      ReferenceEntry ref;
      ref.key = get_string(e, "key");
      ref.title = get_string(e, "title");
      if (e.contains("abstract") && !e["abstract"].is_null()) ref.abstract = get_string(e, "abstract");
      if (e.contains("year") && !e["year"].is_null()) ref.year = get_int(e, "year");
      r.references.push_back(std::move(ref));
    }
  }
  r.extra = collect_extra(j, {"id", "title", "venue", "year", "outline", "sections", "references"});
  validate(r);
  return r;
}

ReviewRecord review_from_json(const json& j) {
  if (!j.is_object()) schema_error("record must be a JSON object");
  ReviewRecord r;
  r.paper_id = get_string(j, "paper_id");
  for (const auto& e : get_array(j, "reviews")) {
    if (!e.is_object()) schema_error("reviews must be objects");
    Review rv;
    rv.summary = get_string(e, "summary");
    rv.strengths = get_string(e, "strengths");
    rv.weaknesses = get_string(e, "weaknesses");
    rv.questions = get_string(e, "questions");
    rv.soundness = get_int(e, "soundness");
    rv.presentation = get_int(e, "presentation");
    rv.contribution = get_int(e, "contribution");
    rv.overall = get_number(e, "overall");
    r.reviews.push_back(std::move(rv));
  }
  r.meta_review = get_string(j, "meta_review");
  auto decision = parse_decision(get_string(j, "decision"));
  if (!decision) schema_error("decision must be Accept or Reject");
  r.decision = *decision;
  r.extra = collect_extra(j, {"paper_id", "reviews", "meta_review", "decision"});
  validate(r);
  return r;
}

void validate(const PaperRecord& r) {
  if (!r.outline.empty() && r.outline.size() != r.sections.size())
    schema_error("outline length " + std::to_string(r.outline.size()) + " != section count " +
                 std::to_string(r.sections.size()));
  for (const auto& s : r.sections)
    if (s.level < 1) schema_error("section level must be >= 1");
  std::set<std::string_view> keys;
  for (const auto& ref : r.references) {
    if (ref.key.empty()) schema_error("reference key must be nonempty");
    if (!keys.insert(ref.key).second) schema_error("duplicate reference key '" + ref.key + "'");
  }
}

void validate(const ReviewRecord& r) {
  if (r.reviews.empty()) schema_error("review record needs at least one review");
  for (const auto& rv : r.reviews) {
    for (int s : {rv.soundness, rv.presentation, rv.contribution})
      if (s < 1 || s > 4) schema_error("aspect score " + std::to_string(s) + " outside [1, 4]");
    if (!(rv.overall >= 1.0 && rv.overall <= 10.0))
      schema_error("overall score " + format_double(rv.overall) + " outside [1, 10]");
  }
}

// ---------------------------------------------------------------------------

namespace {

template <class Record>
Record record_from_json(const json& j);
template <>
PaperRecord record_from_json<PaperRecord>(const json& j) { return paper_from_json(j); }
template <>
ReviewRecord record_from_json<ReviewRecord>(const json& j) { return review_from_json(j); }

}  // namespace

template <class Record>
std::vector<Record> read_jsonl(std::istream& in) {
  std::vector<Record> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::MalformedJson, e.what(), line_no);
    }
    try {
      records.push_back(record_from_json<Record>(j));
    } catch (const Error& e) {
      throw Error(e.code(), e.what(), line_no);
    }
  }
  return records;
}

template <class Record>
void write_jsonl(std::ostream& out, const std::vector<Record>& records) {
  for (const auto& r : records) {
    validate(r);
    out << to_json(r).dump(-1, ' ', false, json::error_handler_t::strict) << '\n';
  }
}

template <class Record>
std::vector<Record> read_jsonl_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return read_jsonl<Record>(in);
}

template <class Record>
void write_jsonl_file(const std::filesystem::path& path, const std::vector<Record>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  write_jsonl(out, records);
}

template std::vector<PaperRecord> read_jsonl<PaperRecord>(std::istream&);
template std::vector<ReviewRecord> read_jsonl<ReviewRecord>(std::istream&);
template void write_jsonl<PaperRecord>(std::ostream&, const std::vector<PaperRecord>&);
template void write_jsonl<ReviewRecord>(std::ostream&, const std::vector<ReviewRecord>&);
template std::vector<PaperRecord> read_jsonl_file<PaperRecord>(const std::filesystem::path&);
template std::vector<ReviewRecord> read_jsonl_file<ReviewRecord>(const std::filesystem::path&);
template void write_jsonl_file<PaperRecord>(const std::filesystem::path&, const std::vector<PaperRecord>&);
template void write_jsonl_file<ReviewRecord>(const std::filesystem::path&, const std::vector<ReviewRecord>&);

}  // namespace rrcycle::corpus
