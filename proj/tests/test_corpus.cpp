#include "doctest.h"

#include <algorithm>

#include "test_support.hpp"
#include "vbmerge/corpus.hpp"
#include "vbmerge/errors.hpp"

using namespace vbmerge;
using vbmerge::testing::TempDir;
using vbmerge::testing::write_text;

namespace {

std::vector<std::vector<std::uint32_t>> encoded_rows(const Corpus& corpus) {
  std::vector<std::vector<std::uint32_t>> rows;
  for (std::size_t n = 0; n < corpus.total_records(); ++n) {
    const auto row = corpus.row(n);
    rows.emplace_back(row.begin(), row.end());
  }
  return rows;
}

}  // namespace

TEST_CASE("first-seen encoding across files") {
  TempDir dir;
  write_text(dir / "a.csv", "gender,county\nM,A\nF,B\n");
  write_text(dir / "b.csv", "gender,county\nF,A\n");
  const auto corpus = load_databases({dir / "a.csv", dir / "b.csv"});

  CHECK(corpus.database_count() == 2);
  CHECK(corpus.records_per_db() == std::vector<std::size_t>{2, 1});
  CHECK(corpus.total_records() == 3);
  CHECK(corpus.field_count() == 2);
  CHECK(corpus.schema().cardinalities() == std::vector<std::size_t>{2, 2});
  CHECK(corpus.schema().encode(0, "M") == 1);
  CHECK(corpus.schema().encode(0, "F") == 2);
  CHECK(corpus.schema().encode(1, "A") == 1);
  CHECK(corpus.schema().encode(1, "B") == 2);

  CHECK(corpus.value(0, 0, 0) == 1);
  CHECK(corpus.value(0, 1, 1) == 2);
  CHECK(corpus.value(1, 0, 0) == 2);

  CHECK(corpus.decode(0, 0) == std::vector<std::string>{"M", "A"});
  CHECK(corpus.decode(1, 0) == std::vector<std::string>{"F", "A"});
  CHECK_THROWS_AS(corpus.decode(1, 1), IndexError);
  CHECK_THROWS_AS(corpus.decode(2, 0), IndexError);
}

TEST_CASE("header-only file gives an empty database") {
  TempDir dir;
  write_text(dir / "empty.csv", "gender,county\n");
  const auto corpus = load_databases({dir / "empty.csv"});
  CHECK(corpus.database_count() == 1);
  CHECK(corpus.records_per_db() == std::vector<std::size_t>{0});
  CHECK(corpus.total_records() == 0);
}

TEST_CASE("schema errors") {
  TempDir dir;
  write_text(dir / "a.csv", "gender,county\nM,A\n");
  write_text(dir / "reordered.csv", "county,gender\nA,M\n");
  write_text(dir / "short.csv", "gender,county\nM\n");
  write_text(dir / "hole.csv", "gender,county\nM,A\nF,\n");

  SUBCASE("reordered header") {
    try {
      load_databases({dir / "a.csv", dir / "reordered.csv"});
      FAIL("expected a schema error");
    } catch (const SchemaError& e) {
      const std::string message = e.what();
      CHECK(message.find("reordered.csv") != std::string::npos);
      CHECK(message.find("county") != std::string::npos);
    }
  }
  SUBCASE("ragged row") {
    CHECK_THROWS_AS(load_databases({dir / "short.csv"}), SchemaError);
  }
  SUBCASE("empty cell names file, row and column") {
    try {
      load_databases({dir / "hole.csv"});
      FAIL("expected a missing value error");
    } catch (const MissingValueError& e) {
      CHECK(e.row() == 2);
      CHECK(e.column() == 2);
      CHECK(e.file().find("hole.csv") != std::string::npos);
    }
  }
  SUBCASE("unreadable file") {
    CHECK_THROWS_AS(load_databases({dir / "nope.csv"}), IoError);
  }
}

TEST_CASE("explicit schema fixes code order") {
  TempDir dir;
  write_text(dir / "schema.tsv", "gender\tF,M,X\ncounty\tB,A\n");
  write_text(dir / "a.csv", "gender,county\nM,A\nF,B\n");
  const auto schema = Schema::read(dir / "schema.tsv");
  const auto corpus = load_databases({dir / "a.csv"}, schema);
  CHECK(corpus.schema().cardinalities() == std::vector<std::size_t>{3, 2});
  CHECK(corpus.value(0, 0, 0) == 2);
  CHECK(corpus.value(0, 0, 1) == 2);
  CHECK(corpus.value(0, 1, 0) == 1);

  write_text(dir / "unknown.csv", "gender,county\nQ,A\n");
  CHECK_THROWS_AS(load_databases({dir / "unknown.csv"}, schema), UnknownAttributeError);

  corpus.schema().write(dir / "copy.tsv");
  CHECK(Schema::read(dir / "copy.tsv") == corpus.schema());
}

TEST_CASE("RFC-4180 quoting") {
  const auto rows = csv::parse("a,b\r\n\"x,y\",\"say \"\"hi\"\"\"\n\"multi\nline\",z");
  REQUIRE(rows.size() == 3);
  CHECK(rows[1] == std::vector<std::string>{"x,y", "say \"hi\""});
  CHECK(rows[2] == std::vector<std::string>{"multi\nline", "z"});
  CHECK(csv::escape("plain") == "plain");
  CHECK(csv::escape("a,b") == "\"a,b\"");
  CHECK(csv::escape("q\"") == "\"q\"\"\"");
  CHECK_THROWS_AS(csv::parse("\"open"), SchemaError);
}

TEST_CASE("round trip and determinism") {
  TempDir dir;
  const std::string a = "name,city\n\"Smith, J\",Oslo\nLee,\"Bergen\"\nLee,Oslo\n";
  const std::string b = "name,city\nKim,Oslo\n\"Smith, J\",Bergen\n";
  write_text(dir / "a.csv", a);
  write_text(dir / "b.csv", b);
  const auto corpus = load_databases({dir / "a.csv", dir / "b.csv"});

  // Decoding then re-encoding every record reproduces its codes.
  for (std::size_t d = 0; d < corpus.database_count(); ++d) {
    for (std::size_t r = 0; r < corpus.records_in(d); ++r) {
      const auto raw = corpus.decode(d, r);
      for (std::size_t f = 0; f < raw.size(); ++f) {
        CHECK(corpus.schema().encode(f, raw[f]) == corpus.value(d, r, f));
      }
    }
  }

  // Written files parse back to the same rows.
  corpus.write_database(0, dir / "a2.csv");
  CHECK(csv::parse(testing::read_text(dir / "a2.csv")) == csv::parse(a));

  const auto again = load_databases({dir / "a.csv", dir / "b.csv"});
  CHECK(again == corpus);
}

TEST_CASE("splitting the same records differently keeps the multiset") {
  TempDir dir;
  write_text(dir / "all.csv", "f,g\na,x\nb,y\na,y\nc,x\n");
  write_text(dir / "p1.csv", "f,g\na,x\nb,y\n");
  write_text(dir / "p2.csv", "f,g\na,y\n");
  write_text(dir / "p3.csv", "f,g\nc,x\n");
  const auto whole = load_databases({dir / "all.csv"});
  const auto split = load_databases({dir / "p1.csv", dir / "p2.csv", dir / "p3.csv"});
  auto lhs = encoded_rows(whole);
  auto rhs = encoded_rows(split);
  std::sort(lhs.begin(), lhs.end());
  std::sort(rhs.begin(), rhs.end());
  CHECK(lhs == rhs);
  CHECK(split.records_per_db() == std::vector<std::size_t>{2, 1, 1});
}

TEST_CASE("flat indices skip empty databases") {
  const auto corpus =
      testing::make_corpus({2}, {{1}, {2}, {2}}, std::vector<std::size_t>{1, 0, 2});
  CHECK(corpus.flat_index(2, 0) == 1);
  CHECK(corpus.locate(0) == std::pair<std::size_t, std::size_t>{0, 0});
  CHECK(corpus.locate(1) == std::pair<std::size_t, std::size_t>{2, 0});
  CHECK(corpus.locate(2) == std::pair<std::size_t, std::size_t>{2, 1});
  CHECK_THROWS_AS(corpus.flat_index(1, 0), IndexError);
}

TEST_CASE("corpus constructor validates codes") {
  CHECK_THROWS_AS(Corpus(testing::make_corpus({2}, {}).schema(), {1}, {5}), ArgumentError);
  CHECK_THROWS_AS(Corpus(testing::make_corpus({2}, {}).schema(), {2}, {0}), ArgumentError);
}
