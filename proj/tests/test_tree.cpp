#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "dop/tree.hpp"
#include "dop/util.hpp"
#include "test_support.hpp"

using namespace dop;

TEST_CASE("parse_bracketed reads the classic example") {
  const ParseTree t = parse_bracketed("(S (NP John) (VP (V likes) (NP Mary)))");
  CHECK(nonterminal_nodes(t).size() == 5);
  CHECK(tree_yield(t) == std::vector<std::string>{"John", "likes", "Mary"});
  CHECK(t.label.token() == "S");
}

TEST_CASE("parse_bracketed reads semantic labels") {
  const ParseTree t = parse_bracketed("(NP@user ik)");
  CHECK(t.label.syn == "NP");
  REQUIRE(t.label.sem.has_value());
  CHECK(*t.label.sem == "user");
  REQUIRE(t.children.size() == 1);
  CHECK(t.children[0].word == "ik");
}

TEST_CASE("parse_bracketed rejects malformed input") {
  CHECK_THROWS(parse_bracketed("(S (NP John)"));          // unbalanced
  CHECK_THROWS(parse_bracketed("(S (NP John)))"));        // trailing
  CHECK_THROWS(parse_bracketed("()"));                    // empty label
  CHECK_THROWS(parse_bracketed("(NP)"));                  // childless nonterminal
  CHECK_THROWS(parse_bracketed("(NP jo@hn)"));            // '@' in a word
  CHECK_THROWS(parse_bracketed("(NP@ x)"));               // empty formula
  CHECK_THROWS(parse_bracketed(""));
}

TEST_CASE("serialize round-trips") {
  for (const char* text : {"(NP@user ik)", "(S (NP John) (VP (V likes) (NP Mary)))",
                           "(S@d1 (A@x y) (B@d1.d2#! z))"}) {
    const ParseTree t = parse_bracketed(text);
    CHECK(serialize_bracketed(t) == text);
    CHECK(parse_bracketed(serialize_bracketed(t)) == t);
  }
}

TEST_CASE("serialize puts the separator exactly once per annotated label") {
  const ParseTree t = parse_bracketed("(S@top (NP x) (VP y))");
  const std::string s = serialize_bracketed(t);
  CHECK(std::count(s.begin(), s.end(), '@') == 1);
}

TEST_CASE("round-trip holds on random trees") {
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const ParseTree t = testsupport::random_tree(rng);
    CHECK(parse_bracketed(serialize_bracketed(t)) == t);
  }
}

TEST_CASE("strip_semantics removes every formula and keeps the yield") {
  const ParseTree t = parse_bracketed("(NP@user ik)");
  CHECK(serialize_bracketed(strip_semantics(t)) == "(NP ik)");

  const ParseTree plain = parse_bracketed("(S (A a) (B b))");
  CHECK(strip_semantics(plain) == plain);

  const ParseTree nested = parse_bracketed("(S@d1.d2 (A@one x) (B@two (C@three y)))");
  const ParseTree stripped = strip_semantics(nested);
  CHECK(serialize_bracketed(stripped) == "(S (A x) (B (C y)))");
  CHECK(strip_semantics(stripped) == stripped);  // idempotent
  CHECK(tree_yield(stripped) == tree_yield(nested));
}

TEST_CASE("tree_yield walks the frontier left to right") {
  CHECK(tree_yield(parse_bracketed("(NP ik)")) == std::vector<std::string>{"ik"});
  const ParseTree wide = parse_bracketed("(S (A a b c) (B (C d e) (D f g h)))");
  CHECK(tree_yield(wide).size() == 8);
}

TEST_CASE("tree_depth counts the word edge") {
  CHECK(tree_depth(parse_bracketed("(V likes)")) == 1);
  CHECK(tree_depth(parse_bracketed("(S (NP John) (VP (V likes) (NP Mary)))")) == 3);
  CHECK(tree_depth(ParseTree::make_site(Label{"NP", std::nullopt})) == 0);
}

TEST_CASE("compose_semantics substitutes daughters into the scheme") {
  // single substitution
  const ParseTree t1 = parse_bracketed("(VP@wants.d1 (ADV@today vandaag))");
  CHECK(compose_semantics(t1) == "wants.today");
  // preterminal returns its formula verbatim
  CHECK(compose_semantics(parse_bracketed("(NP@user ik)")) == "user");
  // two substitutions
  const ParseTree t2 = parse_bracketed("(X@d1.d2 (A@a x) (B@b y))");
  CHECK(compose_semantics(t2) == "a.b");
  // depth-1 scheme "d1" forwards the daughter's formula verbatim
  const ParseTree fwd = parse_bracketed("(M@d1 (A@whole x))");
  CHECK(compose_semantics(fwd) == "whole");
  // markers ride along uninterpreted
  const ParseTree marked = parse_bracketed("(M@[d1d2;d3d4] (N@# niet) (A@today v) (C@! maar) (B@tomorrow m))");
  CHECK(compose_semantics(marked) == "[#today;!tomorrow]");
}

TEST_CASE("compose_semantics error cases") {
  // d2 with a single daughter
  CHECK_THROWS(compose_semantics(parse_bracketed("(X@d2 (A@a x))")));
  // missing formula below
  CHECK_THROWS(compose_semantics(parse_bracketed("(X@d1 (A y))")));
  // missing formula at the node itself
  CHECK_THROWS(compose_semantics(parse_bracketed("(X (A@a y))")));
}

TEST_CASE("treebank files: one tree per line, blanks ignored") {
  std::istringstream in("(S (A a))\n\n(S (B b))\n");
  const auto trees = read_treebank(in);
  REQUIRE(trees.size() == 2);
  CHECK(serialize_bracketed(trees[1]) == "(S (B b))");

  std::istringstream bad("(S (A a))\n(S (B)\n");
  CHECK_THROWS(read_treebank(bad));
}

TEST_CASE("fragment keys distinguish sites from words by the root alphabet") {
  const std::set<Label> sites{Label{"NP", std::nullopt}, Label{"VP", std::nullopt}};
  const ParseTree f = parse_fragment_key("(S NP (VP (V likes) NP))", sites);
  CHECK(f.children[0].is_site());
  CHECK(f.children[1].children[1].is_site());
  CHECK(f.children[1].children[0].children[0].is_word());
  CHECK(serialize_bracketed(f) == "(S NP (VP (V likes) NP))");
}
