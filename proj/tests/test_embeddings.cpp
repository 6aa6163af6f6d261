#include <catch2/catch_amalgamated.hpp>

#include <sstream>
#include <string>

#include "srcmix/embeddings.hpp"
#include "srcmix/rng.hpp"

using namespace srcmix;

TEST_CASE("load_text_embeddings parses rows", "[embeddings]") {
  const EmbeddingTable t = load_text_embeddings(std::string("the 1 2 3\ncat 4 5 6\n"));
  REQUIRE(t.size() == 2);
  REQUIRE(t.dim == 3);
  REQUIRE(t.lookup("the")[0] == 1.0);
  REQUIRE(t.lookup("cat")[2] == 6.0);
}

TEST_CASE("expected_dim accepts a matching file", "[embeddings]") {
  std::ostringstream file;
  file << "w";
  for (int i = 0; i < 100; ++i) file << ' ' << i;
  file << '\n';
  const EmbeddingTable t = load_text_embeddings(file.str(), 100);
  REQUIRE(t.dim == 100);
  REQUIRE(t.size() == 1);

  REQUIRE_THROWS_MATCHES(load_text_embeddings(std::string("w 1 2 3\n"), 100), ParseError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("line 1")));
}

TEST_CASE("dimension drift is an error with the line number", "[embeddings]") {
  REQUIRE_THROWS_MATCHES(load_text_embeddings(std::string("a 1 2 3\nb 4 5\n")), ParseError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("line 2")));
}

TEST_CASE("non-numeric fields are parse errors", "[embeddings]") {
  REQUIRE_THROWS_AS(load_text_embeddings(std::string("a 1 x 3\n")), ParseError);
  REQUIRE_THROWS_AS(load_text_embeddings(std::string("justtoken\n")), ParseError);
}

TEST_CASE("a count-dim header line is skipped", "[embeddings]") {
  const EmbeddingTable t = load_text_embeddings(std::string("2 3\na 1 2 3\nb 4 5 6\n"));
  REQUIRE(t.size() == 2);
  REQUIRE(t.dim == 3);
  REQUIRE_FALSE(t.vocab.count("2"));
}

TEST_CASE("duplicate tokens keep the first row", "[embeddings]") {
  const EmbeddingTable t = load_text_embeddings(std::string("a 1 1\na 2 2\n"));
  REQUIRE(t.size() == 1);
  REQUIRE(t.lookup("a")[0] == 1.0);
}

TEST_CASE("lookup falls back exact -> lowercase -> UNK", "[embeddings]") {
  const EmbeddingTable t = load_text_embeddings(std::string("paris 1 2\nLondon 3 4\n"));
  REQUIRE(t.lookup("paris")[0] == 1.0);
  REQUIRE(t.lookup("Paris")[0] == 1.0);   // case fallback
  REQUIRE(t.lookup("London")[0] == 3.0);  // exact beats fallback
  const double* unk = t.lookup("tokyo");
  REQUIRE(unk[0] == 0.0);
  REQUIRE(unk[1] == 0.0);
}

TEST_CASE("lookup always returns dim values even on empty tables", "[embeddings]") {
  const EmbeddingTable t = load_text_embeddings(std::string(""), 4);
  const double* unk = t.lookup("anything");
  for (int i = 0; i < 4; ++i) REQUIRE(unk[i] == 0.0);
}

TEST_CASE("loading is deterministic and write round-trips exactly", "[embeddings]") {
  Rng rng(6);
  std::vector<std::pair<std::string, Vector>> rows;
  for (int i = 0; i < 10; ++i) {
    Vector row(5);
    for (double& v : row) v = rng.next_range(-2.0, 2.0);
    rows.emplace_back("tok" + std::to_string(i), row);
  }
  const EmbeddingTable t = build_embedding_table(rows, 5);
  std::ostringstream text;
  write_text_embeddings(text, t);
  const EmbeddingTable back = load_text_embeddings(text.str());
  REQUIRE(back.matrix == t.matrix);
  REQUIRE(back.tokens == t.tokens);

  const EmbeddingTable again = load_text_embeddings(text.str());
  REQUIRE(again.matrix == back.matrix);
}

TEST_CASE("embed stacks one row per token", "[embeddings]") {
  const EmbeddingTable t = load_text_embeddings(std::string("a 1 2\nb 3 4\n"));
  const Matrix m = t.embed({"a", "b", "zzz", "a"});
  REQUIRE(m.rows() == 4);
  REQUIRE(m.cols() == 2);
  REQUIRE(m(0, 0) == 1.0);
  REQUIRE(m(1, 1) == 4.0);
  REQUIRE(m(2, 0) == 0.0);
  REQUIRE(m(3, 0) == 1.0);
}
