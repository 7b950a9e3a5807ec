#pragma once

// Shared fixtures and independent oracles for the test suites. The oracles
// deliberately re-derive everything by brute force (subset enumeration,
// exhaustive path scoring, plain Levenshtein) so they share no logic with
// the implementation paths they check.

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "dop/fragments.hpp"
#include "dop/stsg.hpp"
#include "dop/tree.hpp"
#include "dop/util.hpp"

namespace testsupport {

// the classic two-tree treebank
inline std::vector<dop::ParseTree> corpus_john() {
  return {dop::parse_bracketed("(S (NP John) (VP (V likes) (NP Mary)))"),
          dop::parse_bracketed("(S (NP Peter) (VP (V hates) (NP Susan)))")};
}

// two-tree treebank containing "Mary likes Susan" itself, so that every
// substitution-point subset of that tree induces in-grammar fragments
inline std::vector<dop::ParseTree> corpus_mary() {
  return {dop::parse_bracketed("(S (NP Mary) (VP (V likes) (NP Susan)))"),
          dop::parse_bracketed("(S (NP John) (VP (V hates) (NP Peter)))")};
}

inline dop::Stsg rf_grammar(const std::vector<dop::ParseTree>& corpus,
                            int max_depth = dop::kUnboundedDepth) {
  return dop::rf_estimate(dop::count_fragments(corpus, max_depth));
}

// --- fragment oracle ---------------------------------------------------------

// Independent serializer used only by oracles.
inline std::string oracle_serialize(const dop::ParseTree& t) {
  if (t.is_word()) return t.word;
  if (t.is_site()) return t.label.token();
  std::string s = "(" + t.label.token();
  for (const auto& c : t.children) s += " " + oracle_serialize(c);
  return s + ")";
}

namespace detail {

inline void list_nonterminals(const dop::ParseTree& t, std::vector<const dop::ParseTree*>& out) {
  if (t.is_word()) return;
  out.push_back(&t);
  for (const auto& c : t.children) list_nonterminals(c, out);
}

inline dop::ParseTree cut_build(const dop::ParseTree& node,
                                const std::set<const dop::ParseTree*>& members) {
  dop::ParseTree out;
  out.label = node.label;
  for (const auto& c : node.children) {
    if (c.is_word())
      out.children.push_back(c);
    else if (members.count(&c))
      out.children.push_back(cut_build(c, members));
    else
      out.children.push_back(dop::ParseTree::make_site(c.label));
  }
  return out;
}

inline int depth_of(const dop::ParseTree& t) {
  if (t.is_word() || t.is_site()) return 0;
  int d = 0;
  for (const auto& c : t.children) d = std::max(d, depth_of(c));
  return d + 1;
}

}  // namespace detail

// Exhaustive cut-choice enumeration: for every nonterminal root, every
// parent-closed subset of its nonterminal descendants is a candidate
// fragment, kept when its depth fits the bound. Returns canonical keys as a
// sorted multiset.
inline std::vector<std::string> oracle_fragment_keys(const dop::ParseTree& tree, int max_depth) {
  std::vector<const dop::ParseTree*> all;
  detail::list_nonterminals(tree, all);
  std::map<const dop::ParseTree*, const dop::ParseTree*> parent;
  for (const auto* n : all)
    for (const auto& c : n->children)
      if (!c.is_word()) parent[&c] = n;

  std::vector<std::string> keys;
  for (const auto* root : all) {
    std::vector<const dop::ParseTree*> descend;
    detail::list_nonterminals(*root, descend);  // includes root at index 0
    const std::size_t extra = descend.size() - 1;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << extra); ++mask) {
      std::set<const dop::ParseTree*> members{root};
      for (std::size_t b = 0; b < extra; ++b)
        if (mask & (std::uint64_t{1} << b)) members.insert(descend[b + 1]);
      bool closed = true;
      for (const auto* m : members)
        if (m != root && !members.count(parent.at(m))) closed = false;
      if (!closed) continue;
      const dop::ParseTree frag = detail::cut_build(*root, members);
      if (max_depth != dop::kUnboundedDepth && detail::depth_of(frag) > max_depth) continue;
      keys.push_back(oracle_serialize(frag));
    }
  }
  std::sort(keys.begin(), keys.end());
  return keys;
}

// --- derivation oracle -------------------------------------------------------

struct OracleDerivation {
  std::vector<std::string> steps;  // canonical keys, leftmost order
  double prob = 0.0;
};

// Every leftmost derivation of `tree` under `g`, by trying all substitution
// point subsets; probabilities multiply out directly.
inline std::vector<OracleDerivation> oracle_derivations(const dop::ParseTree& tree,
                                                        const dop::Stsg& g) {
  std::vector<const dop::ParseTree*> all;
  detail::list_nonterminals(tree, all);
  std::map<const dop::ParseTree*, const dop::ParseTree*> parent;
  for (const auto* n : all)
    for (const auto& c : n->children)
      if (!c.is_word()) parent[&c] = n;

  const std::size_t inner = all.size() - 1;
  std::vector<OracleDerivation> out;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << inner); ++mask) {
    std::set<const dop::ParseTree*> cuts;
    for (std::size_t b = 0; b < inner; ++b)
      if (mask & (std::uint64_t{1} << b)) cuts.insert(all[b + 1]);
    std::vector<const dop::ParseTree*> anchors{all[0]};
    for (const auto* n : all)
      if (cuts.count(n)) anchors.push_back(n);
    OracleDerivation d;
    d.prob = 1.0;
    bool ok = true;
    for (const auto* anchor : anchors) {
      std::set<const dop::ParseTree*> members;
      std::vector<const dop::ParseTree*> descend;
      detail::list_nonterminals(*anchor, descend);
      for (const auto* n : descend) {
        // member iff the path up to the anchor crosses no cut point
        bool inside = true;
        for (const dop::ParseTree* p = n; p != anchor; p = parent.at(p)) {
          if (cuts.count(p)) {
            inside = false;
            break;
          }
        }
        if (inside) members.insert(n);
      }
      const std::string key = oracle_serialize(detail::cut_build(*anchor, members));
      const auto id = g.find(key);
      if (!id) {
        ok = false;
        break;
      }
      d.steps.push_back(key);
      d.prob *= std::exp(g.entry(*id).logp);
    }
    if (ok) out.push_back(std::move(d));
  }
  return out;
}

inline double oracle_tree_prob(const dop::ParseTree& tree, const dop::Stsg& g) {
  double p = 0.0;
  for (const auto& d : oracle_derivations(tree, g)) p += d.prob;
  return p;
}

// posterior expected fragment counts, brute force over derivations
inline std::map<std::string, double> oracle_posterior_counts(const dop::ParseTree& tree,
                                                             const dop::Stsg& g) {
  const auto derivs = oracle_derivations(tree, g);
  double total = 0.0;
  for (const auto& d : derivs) total += d.prob;
  std::map<std::string, double> counts;
  for (const auto& d : derivs)
    for (const auto& key : d.steps) counts[key] += d.prob / total;
  return counts;
}

// --- misc oracles ------------------------------------------------------------

// plain Levenshtein distance over words
inline std::size_t oracle_edit_distance(const std::vector<std::string>& a,
                                        const std::vector<std::string>& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1,
                                          std::vector<std::size_t>(b.size() + 1, 0));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      d[i][j] = std::min({d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0u : 1u), d[i - 1][j] + 1,
                          d[i][j - 1] + 1});
  return d[a.size()][b.size()];
}

// --- random corpus trees -----------------------------------------------------

// Random full trees with at most `max_nodes` nodes (words included). Labels
// are stratified by depth so depth-bounded grammars extracted from these
// trees never contain site-only unary cycles.
inline dop::ParseTree random_tree(dop::Rng& rng, std::size_t max_nodes = 15) {
  const std::vector<std::vector<std::string>> cats = {
      {"S"}, {"A", "B"}, {"C", "D"}, {"E", "F"}, {"G", "H"}};
  const std::vector<std::string> words = {"a", "b", "c", "d", "e", "f"};
  std::size_t budget = 2 + rng.next_below(max_nodes - 1);  // at least root + word

  std::function<dop::ParseTree(std::size_t)> build = [&](std::size_t depth) -> dop::ParseTree {
    dop::ParseTree node;
    const auto& level = cats[std::min(depth, cats.size() - 1)];
    node.label.syn = level[rng.next_below(level.size())];
    --budget;
    const std::size_t arity = 1 + rng.next_below(3);
    for (std::size_t i = 0; i < arity; ++i) {
      if (budget <= 1 || depth >= 4 || rng.next_below(100) < 45) {
        if (budget == 0) break;
        node.children.push_back(
            dop::ParseTree::make_word(words[rng.next_below(words.size())]));
        --budget;
      } else {
        node.children.push_back(build(depth + 1));
      }
      if (budget == 0) break;
    }
    if (node.children.empty())
      node.children.push_back(dop::ParseTree::make_word(words[rng.next_below(words.size())]));
    return node;
  };
  return build(0);
}

}  // namespace testsupport
