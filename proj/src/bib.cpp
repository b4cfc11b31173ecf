#include <cctype>

#include "rrcycle/corpus.hpp"

namespace rrcycle::corpus {

namespace {

class BibReader {
  std::map<std::string, std::string> macros_;

 public:
  explicit BibReader(std::string_view text) : text_(text) {}

  std::vector<BibEntry> entries() {
    std::vector<BibEntry> out;
    while (seek_at()) {
      const std::size_t entry_line = line_;
      advance();  // '@'
      std::string type = lower(read_identifier());
      if (type.empty()) fail("expected entry type after '@'");
      skip_ws();
      if (eof() || (peek() != '{' && peek() != '(')) fail("expected '{' after @" + type);
      const char close = peek() == '{' ? '}' : ')';
      if (type == "string") {
        read_macro(close);
        continue;
      }
      if (type == "comment" || type == "preamble") {
        skip_block();
        continue;
      }
      advance();
      BibEntry entry;
      entry.type = type;
      entry.line = entry_line;
      entry.key = read_key(close);
      if (entry.key.empty()) fail("entry missing key", entry_line);
      read_fields(entry, close);
      out.push_back(std::move(entry));
    }
    return out;
  }

 private:
  bool eof() const { return pos_ >= text_.size(); }
  char peek() const { return text_[pos_]; }
  void advance() {
    if (text_[pos_] == '\n') ++line_;
    ++pos_;
  }
  void skip_ws() {
    while (!eof() && std::isspace(static_cast<unsigned char>(peek()))) advance();
  }
  static std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
  }
  [[noreturn]] void fail(const std::string& what, std::size_t line = 0) const {
    throw Error(ErrorCode::BibSyntax, what, line ? line : line_);
  }

  bool seek_at() {
    while (!eof() && peek() != '@') advance();
    return !eof();
  }

  std::string read_identifier() {
    std::string id;
    while (!eof()) {
      const char c = peek();
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == ':' || c == '.')
        id += c;
      else
        break;
      advance();
    }
    return id;
  }

  void skip_block() {
    int depth = 0;
    while (!eof()) {
      const char c = peek();
      advance();
      if (c == '{' || c == '(') ++depth;
      if ((c == '}' || c == ')') && --depth == 0) return;
    }
    fail("unterminated block");
  }

  std::string read_key(char close) {
    skip_ws();
    std::string key;
    while (!eof() && peek() != ',' && peek() != close && peek() != '\n') {
      key += peek();
      advance();
    }
    while (!key.empty() && std::isspace(static_cast<unsigned char>(key.back()))) key.pop_back();
    skip_ws();
    if (eof()) fail("unterminated entry");
    if (peek() == close) return {};  // no comma: entry without key or fields
    if (peek() != ',') return {};
    if (key.find_first_of("={}\"") != std::string::npos) return {};
    advance();
    return key;
  }

  void read_fields(BibEntry& entry, char close) {
    for (;;) {
      skip_ws();
      if (eof()) fail("unterminated entry '" + entry.key + "'", entry.line);
      if (peek() == close) {
        advance();
        return;
      }
      if (peek() == ',') {
        advance();
        continue;
      }
      std::string name = lower(read_identifier());
      if (name.empty()) fail("expected field name in '" + entry.key + "'");
      skip_ws();
      if (eof() || peek() != '=') fail("expected '=' after field '" + name + "'");
      advance();
      entry.fields[name] = read_value();
    }
  }

  // @string{name = value}
  void read_macro(char close) {
    advance();
    skip_ws();
    std::string name = lower(read_identifier());
    if (name.empty()) fail("@string without a name");
    skip_ws();
    if (eof() || peek() != '=') fail("expected '=' in @string");
    advance();
    std::string value = read_value();
    skip_ws();
    if (eof() || peek() != close) fail("unterminated @string");
    advance();
    macros_[name] = std::move(value);
  }

  std::string read_value() {
    std::string value;
    for (;;) {
      skip_ws();
      if (eof()) fail("unterminated field value");
      const char c = peek();
      if (c == '{') {
        value += read_braced();
      } else if (c == '"') {
        value += read_quoted();
      } else {
        std::string bare = read_identifier();
        if (bare.empty()) fail(std::string("unexpected character '") + c + "' in field value");
        auto macro = macros_.find(lower(bare));
        value += macro != macros_.end() ? macro->second : bare;
      }
      skip_ws();
      if (!eof() && peek() == '#') {
        advance();
        continue;
      }
      return value;
    }
  }

  std::string read_braced() {
    std::string out;
    int depth = 0;
    while (!eof()) {
      const char c = peek();
      advance();
      if (c == '{') {
        if (depth++ > 0) out += c;
      } else if (c == '}') {
        if (--depth == 0) return out;
        out += c;
      } else {
        out += c;
      }
    }
    fail("unbalanced braces in field value");
  }

  std::string read_quoted() {
    std::string out;
    advance();
    int depth = 0;
    while (!eof()) {
      const char c = peek();
      advance();
      if (c == '{') ++depth;
      if (c == '}') --depth;
      if (c == '"' && depth == 0) return out;
      out += c;
    }
    fail("unterminated quoted field value");
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

}  // namespace

std::vector<BibEntry> parse_bib(std::string_view bib_text) { return BibReader(bib_text).entries(); }

}  // namespace rrcycle::corpus
