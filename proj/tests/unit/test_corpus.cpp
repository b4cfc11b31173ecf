#include "helpers.hpp"

#include <algorithm>
#include <regex>
#include <set>
#include <sstream>

#include "rrcycle/corpus.hpp"
#include "rrcycle/rng.hpp"

using namespace rrcycle;
using namespace rrcycle::corpus;
using nlohmann::json;

namespace {

std::vector<RawLatexDoc> latex_fixture() {
  const auto j = json::parse(testing::slurp(testing::fixture("latex_docs.json")));
  std::vector<RawLatexDoc> docs;
  for (const auto& d : j) {
    RawLatexDoc doc;
    doc.id = d["id"];
    doc.text = d["text"];
    docs.push_back(doc);
  }
  return docs;
}

// Straight-line comment stripper: a '%' preceded by an even run of
// backslashes starts a comment that runs to the newline.
std::string reference_strip(const std::string& s) {
  std::string out;
  std::size_t run = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%' && run % 2 == 0) {
      while (i < s.size() && s[i] != '\n') ++i;
      if (i < s.size()) out += '\n';
      run = 0;
      continue;
    }
    run = s[i] == '\\' ? run + 1 : 0;
    out += s[i];
  }
  return out;
}

std::string sorted_visible(std::string s) {
  s.erase(std::remove_if(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); }), s.end());
  std::sort(s.begin(), s.end());
  return s;
}

PaperRecord sample_record() {
  PaperRecord r;
  r.id = "abc";
  r.title = "A \"quoted\" title \u00e9";
  r.venue = "ICLR";
  r.year = 2024;
  r.outline = {"one", "two"};
  r.sections = {{"Intro", 1, "body\nwith newline"}, {"Method", 1, "x \\% y"}};
  r.references = {{"k1", "Some Title", std::string("abs"), 2019}, {"k2", "Other", std::nullopt, std::nullopt}};
  r.extra = {{"source", {{"kind", "fixture"}}}};
  return r;
}

}  // namespace

TEST_SUITE("corpus") {
  TEST_CASE("comment stripping examples") {
    CHECK(strip_latex_comments("a % note\nb") == "a \nb");
    CHECK(strip_latex_comments("rate is 5\\% high") == "rate is 5\\% high");
    CHECK(strip_latex_comments("x\\\\% gone\ny") == "x\\\\\ny");
    CHECK(strip_latex_comments("end % no newline") == "end ");
    CHECK(strip_latex_comments("\\begin{verbatim}\n50% kept\n\\end{verbatim}% cut") ==
          "\\begin{verbatim}\n50% kept\n\\end{verbatim}");
    CHECK(strip_latex_comments("see \\verb|a%b| ok % c") == "see \\verb|a%b| ok ");
  }

  TEST_CASE("comment stripping is idempotent on the 100-doc fixture") {
    const auto docs = latex_fixture();
    REQUIRE(docs.size() == 100);
    for (const auto& d : docs) {
      const auto once = strip_latex_comments(d.text);
      CHECK(strip_latex_comments(once) == once);
    }
  }

  TEST_CASE("comment stripping deletes only comment spans on random inputs") {
    Rng rng(11);
    const std::string alphabet = "ab %\\\n{}";
    for (int t = 0; t < 2000; ++t) {
      std::string s;
      const std::size_t len = rng.below(40);
      for (std::size_t i = 0; i < len; ++i) s += alphabet[rng.below(alphabet.size())];
      INFO("input: " << s);
      const auto got = strip_latex_comments(s);
      CHECK(got == reference_strip(s));
      // every escaped percent survives
      std::size_t escaped_in = 0, escaped_out = 0;
      for (std::size_t i = 0; i + 1 < s.size(); ++i)
        if (s[i] == '\\' && s[i + 1] == '%') ++escaped_in;
      for (std::size_t i = 0; i + 1 < got.size(); ++i)
        if (got[i] == '\\' && got[i + 1] == '%') ++escaped_out;
      CHECK(escaped_out <= escaped_in);
    }
  }

  TEST_CASE("section segmentation examples") {
    RawLatexDoc doc;
    doc.text = "\\section{A} x \\section{B} y";
    const auto s = segment_sections(doc);
    REQUIRE(s.size() == 2);
    CHECK(s[0] == Section{"A", 1, "x"});
    CHECK(s[1] == Section{"B", 1, "y"});

    doc.text = "plain text only";
    const auto p = segment_sections(doc);
    REQUIRE(p.size() == 1);
    CHECK(p[0] == Section{"preamble", 1, "plain text only"});

    doc.text = "\\section{Open";
    CHECK(testing::error_code_of([&] { segment_sections(doc); }) == ErrorCode::UnbalancedBraces);
  }

  TEST_CASE("section count matches top-level section tokens on the fixture") {
    const std::regex top(R"(\\section\*?\s*\{)");
    for (auto doc : latex_fixture()) {
      doc.text = strip_latex_comments(doc.text);
      const auto n = std::distance(std::sregex_iterator(doc.text.begin(), doc.text.end(), top), std::sregex_iterator());
      const auto sections = segment_sections(doc);
      const bool has_preamble = !sections.empty() && sections.front().heading == "preamble" &&
                                doc.text.find("\\section") != 0;
      const auto counted = static_cast<long>(sections.size()) - (has_preamble && n > 0 ? 1 : 0);
      if (n == 0) {
        CHECK(sections.size() <= 1);
      } else {
        CHECK(counted == n);
      }
    }
  }

  TEST_CASE("segmentation keeps every visible character exactly once") {
    const std::regex cmd(R"(\\(?:sub){0,2}section\*?\{([^{}]*)\})");
    for (auto doc : latex_fixture()) {
      doc.text = strip_latex_comments(doc.text);
      const std::string expected = std::regex_replace(doc.text, cmd, "$1");
      std::string got;
      const auto sections = segment_sections(doc);
      for (std::size_t i = 0; i < sections.size(); ++i) {
        const bool synthetic = i == 0 && sections[i].heading == "preamble" && doc.text.find("{preamble}") == std::string::npos;
        if (!synthetic) got += sections[i].heading;
        got += sections[i].body;
      }
      INFO(doc.id);
      CHECK(sorted_visible(got) == sorted_visible(expected));
    }
  }

  TEST_CASE("acknowledgments are dropped case-insensitively") {
    auto kept = drop_acknowledgments({{"Intro", 1, "a"}, {"ACKNOWLEDGEMENTS", 1, "b"}, {"Acknowledgments", 1, "c"}});
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].heading == "Intro");
  }

  TEST_CASE("fixture abstract source lookup") {
    const auto src = FixtureAbstractSource::load(testing::fixture("abstracts.json"));
    const auto hit = fetch_abstract(src, "attention is all you need");
    REQUIRE(hit.has_value());
    CHECK(hit->find("sequence transduction") != std::string::npos);
    CHECK_FALSE(fetch_abstract(src, "unknown title").has_value());
    CHECK(fetch_abstract(src, "  Attention   IS all\tyou NEED ") == hit);
    CHECK(normalize_title("  A\n B  ") == "a b");
    CHECK(testing::error_code_of([&] { fetch_abstract(src, "  "); }) == ErrorCode::InvalidArgument);
    NetworkAbstractSource net("https://example.invalid");
    CHECK_FALSE(net.enabled());
    CHECK(testing::error_code_of([&] { fetch_abstract(net, "x"); }) == ErrorCode::SourceUnavailable);
  }

  TEST_CASE("merge reference abstracts") {
    FixtureAbstractSource src(std::map<std::string, std::string>{{"Known Paper", "has abstract"}});
    const auto r = merge_reference_abstracts("@article{a, title={Known Paper}}\n@article{b, title={Unknown}}", src);
    REQUIRE(r.references.size() == 2);
    CHECK(r.references[0].key == "a");
    CHECK(r.references[0].abstract == std::optional<std::string>("has abstract"));
    CHECK(r.references[1].key == "b");
    CHECK_FALSE(r.references[1].abstract.has_value());
    CHECK(r.misses == 1);

    const auto empty = merge_reference_abstracts("", src);
    CHECK(empty.references.empty());
    CHECK(empty.misses == 0);

    CHECK(testing::error_code_of([&] { merge_reference_abstracts("@misc{a, title={x}}\n@misc{a, title={y}}", src); }) ==
          ErrorCode::DuplicateKey);
    CHECK(testing::error_code_of([&] { merge_reference_abstracts("@misc{a, title={x}", src); }) == ErrorCode::BibSyntax);
  }

  TEST_CASE("50-entry fixture bib yields the hand-listed key set") {
    std::istringstream keys(testing::slurp(testing::fixture("refs50.keys")));
    std::vector<std::string> expected;
    for (std::string k; std::getline(keys, k);)
      if (!k.empty()) expected.push_back(k);
    REQUIRE(expected.size() == 50);
    const auto src = FixtureAbstractSource::load(testing::fixture("abstracts.json"));
    const auto r = merge_reference_abstracts(testing::slurp(testing::fixture("refs50.bib")), src);
    std::vector<std::string> got;
    for (const auto& e : r.references) got.push_back(e.key);
    CHECK(got == expected);
    // two titles in the bib are known to the fixture source
    CHECK(r.misses == 48);
    CHECK(r.references[7].title == "Deep Residual Learning");
    CHECK(r.references[7].abstract.has_value());
  }

  TEST_CASE("bib value forms") {
    const auto entries = parse_bib(
        "@string{j = \"Jour\"}\n@Article{k1,\n title = {A {B} c},\n journal = j # \" Lett\",\n year = 2001,\n}\n");
    REQUIRE(entries.size() == 1);
    CHECK(entries[0].type == "article");
    CHECK(entries[0].fields.at("year") == "2001");
    CHECK(entries[0].fields.at("journal") == "Jour Lett");
    CHECK(entries[0].line == 2);
    try {
      parse_bib("@article{ok, title={x}}\n\n@article{, title={y}}");
      FAIL("expected BibSyntax");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::BibSyntax);
      CHECK(e.line() == 3u);
    }
  }

  TEST_CASE("chronological split") {
    std::vector<PaperRecord> recs(3);
    for (int i = 0; i < 3; ++i) {
      recs[i].id = "p" + std::to_string(i);
      recs[i].year = 2022 + i;
    }
    const auto s = chronological_split(recs, 2024);
    CHECK(s.train == std::vector<std::string>{"p0", "p1"});
    CHECK(s.test == std::vector<std::string>{"p2"});
    const auto e = chronological_split({}, 2024);
    CHECK(e.train.empty());
    CHECK(e.test.empty());
  }

  TEST_CASE("chronological split has no leakage on 1000 synthetic records") {
    Rng rng(5);
    std::vector<PaperRecord> recs(1000);
    std::map<std::string, int> year_of;
    for (std::size_t i = 0; i < recs.size(); ++i) {
      recs[i].id = "r" + std::to_string(i);
      recs[i].year = 2010 + static_cast<int>(rng.below(15));
      year_of[recs[i].id] = recs[i].year;
    }
    const int cutoff = 2019;
    const auto s = chronological_split(recs, cutoff);
    int max_train = 0, min_test = 10000;
    for (const auto& id : s.train) max_train = std::max(max_train, year_of[id]);
    for (const auto& id : s.test) min_test = std::min(min_test, year_of[id]);
    CHECK(max_train < cutoff);
    CHECK(cutoff <= min_test);
    std::set<std::string> all(s.train.begin(), s.train.end());
    for (const auto& id : s.test) CHECK(all.insert(id).second);
    CHECK(all.size() == recs.size());
  }

  TEST_CASE("record ids are stable content hashes") {
    CHECK(record_id("T", 2020, "V") == record_id("T", 2020, "V"));
    CHECK(record_id("T", 2020, "V") != record_id("T", 2021, "V"));
    CHECK(record_id("T", 2020, "V").size() == 16);
  }

  TEST_CASE("ingest a document") {
    RawLatexDoc doc;
    doc.source_path = "x.tex";
    doc.text = "\\title{My  Paper}\n% hidden\n\\section{Intro}\nHello 5\\%.\n\\section*{Acknowledgments}\nThanks.";
    doc.year = 2023;
    doc.venue = "ICLR";
    IngestOptions opt;
    opt.bib_text = "@misc{a, title={Known}}";
    FixtureAbstractSource src(std::map<std::string, std::string>{{"known", "abs"}});
    const auto r = ingest_document(doc, opt, src);
    CHECK(r.record.title == "My Paper");
    CHECK(r.record.id == record_id("My Paper", 2023, "ICLR"));
    CHECK(r.dropped_sections == 1);
    CHECK(r.abstract_misses == 0);
    REQUIRE(r.record.sections.size() == 2);
    CHECK(r.record.sections[1] == Section{"Intro", 1, "Hello 5\\%."});
    CHECK(ingest_document(doc, opt, src).record == r.record);

    doc.year = 1980;
    CHECK(testing::error_code_of([&] { ingest_document(doc, opt, src); }) == ErrorCode::SchemaViolation);
    doc.year = 2023;
    opt.outline = {"only one"};
    CHECK(testing::error_code_of([&] { ingest_document(doc, opt, src); }) == ErrorCode::SchemaViolation);
  }

  TEST_CASE("jsonl round trip of a single record") {
    const std::vector<PaperRecord> recs{sample_record()};
    std::stringstream buf;
    write_jsonl(buf, recs);
    const auto back = read_jsonl<PaperRecord>(buf);
    REQUIRE(back.size() == 1);
    CHECK(back[0] == recs[0]);
  }

  TEST_CASE("malformed jsonl reports the line") {
    std::istringstream in("not json\n");
    try {
      read_jsonl<PaperRecord>(in);
      FAIL("expected MalformedJson");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MalformedJson);
      CHECK(e.line() == 1u);
    }
    std::istringstream bad_schema("{\"id\":\"x\"}\n");
    CHECK(testing::error_code_of([&] { read_jsonl<PaperRecord>(bad_schema); }) == ErrorCode::SchemaViolation);
  }

  TEST_CASE("200-record fixture re-serializes byte-stably") {
    std::istringstream in(testing::slurp(testing::fixture("papers200.jsonl")));
    const auto recs = read_jsonl<PaperRecord>(in);
    REQUIRE(recs.size() == 200);
    std::stringstream first;
    write_jsonl(first, recs);
    const auto again = read_jsonl<PaperRecord>(first);
    CHECK(again == recs);
    std::ostringstream second;
    write_jsonl(second, again);
    CHECK(second.str() == first.str());
  }

  TEST_CASE("review records round trip and validate") {
    ReviewRecord r;
    r.paper_id = "p";
    r.reviews = {{"s", "st", "w", "q", 3, 2, 4, 6.5}};
    r.meta_review = "m";
    r.decision = Decision::Accept;
    testing::TempDir dir("reviews");
    write_jsonl_file(dir.path / "reviews.jsonl", std::vector<ReviewRecord>{r});
    const auto back = read_jsonl_file<ReviewRecord>(dir.path / "reviews.jsonl");
    REQUIRE(back.size() == 1);
    CHECK(back[0] == r);
    r.reviews[0].soundness = 9;
    CHECK(testing::error_code_of([&] { validate(r); }) == ErrorCode::SchemaViolation);
  }
}
