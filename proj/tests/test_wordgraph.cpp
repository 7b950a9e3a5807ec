#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "dop/wordgraph.hpp"

using namespace dop;

TEST_CASE("single-arc lattice") {
  const WordGraph g = load_wordgraph("LATTICE 2 0 1\nARC 0 1 hello\n");
  CHECK(g.node_count == 2);
  REQUIRE(g.arcs.size() == 1);
  CHECK(g.arcs[0].word == "hello");
  CHECK_FALSE(g.has_acoustics());
  const auto paths = enumerate_paths(g);
  REQUIRE(paths.size() == 1);
  CHECK(paths[0][0]->word == "hello");
}

TEST_CASE("diamond lattice has two paths") {
  const WordGraph g = load_wordgraph(
      "LATTICE 3 0 2\n"
      "ARC 0 1 a\n"
      "ARC 0 1 b\n"
      "ARC 1 2 c -0.5\n");
  CHECK(enumerate_paths(g).size() == 2);
  CHECK(g.has_acoustics());
}

TEST_CASE("cyclic lattices are rejected") {
  CHECK_THROWS_WITH(load_wordgraph("LATTICE 3 0 2\n"
                                   "ARC 0 1 a\nARC 1 0 b\nARC 1 2 c\n"),
                    Catch::Matchers::ContainsSubstring("cycle"));
}

TEST_CASE("end must be reachable") {
  CHECK_THROWS_WITH(load_wordgraph("LATTICE 3 0 2\nARC 0 1 a\n"),
                    Catch::Matchers::ContainsSubstring("unreachable"));
}

TEST_CASE("malformed lines are rejected") {
  CHECK_THROWS(load_wordgraph("LATTICE 2 0 1\nARC 0 hello\n"));
  CHECK_THROWS(load_wordgraph("ARC 0 1 x\n"));
  CHECK_THROWS(load_wordgraph("LATTICE 2 0 1\nARC 0 5 x\n"));
  CHECK_THROWS(load_wordgraph("LATTICE 2 0 1\nARC 0 1 x\nARC 0 1 x\n"));  // duplicate
}

TEST_CASE("lattice io round-trips") {
  const WordGraph g = load_wordgraph("LATTICE 4 0 3\nARC 0 1 ik\nARC 1 2 wil -0.25\nARC 2 3 weg\n");
  std::ostringstream out;
  write_wordgraph(out, g);
  const WordGraph again = load_wordgraph(out.str());
  CHECK(again.arcs.size() == g.arcs.size());
  CHECK(again.arcs[1].acoustic_logp == g.arcs[1].acoustic_logp);
}

TEST_CASE("linear lattice mirrors the sentence") {
  const WordGraph g = linear_lattice({"a", "b", "c"});
  CHECK(g.node_count == 4);
  CHECK(enumerate_paths(g).size() == 1);
}
