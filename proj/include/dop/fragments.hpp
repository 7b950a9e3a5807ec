#pragma once

// Subtree (fragment) extraction and counting.
//
// A fragment of a tree is rooted at one of its nonterminal nodes; below the
// root every included nonterminal either keeps all of its children or is cut
// into a frontier substitution site (all-or-none rule). Fragment depth is
// bounded by max_depth, counted in edges with the preterminal-word edge
// included, so a depth-1 fragment is exactly a context-free rule.

#include <cstdint>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "dop/tree.hpp"

namespace dop {

inline constexpr int kUnboundedDepth = std::numeric_limits<int>::max();

struct Fragment {
  ParseTree tree;
  std::string canonical_key;  // serialize_bracketed(tree), sites as bare labels

  const Label& root() const { return tree.label; }
};

inline Fragment make_fragment(ParseTree t) {
  Fragment f;
  f.canonical_key = serialize_bracketed(t);
  f.tree = std::move(t);
  return f;
}

namespace detail {

// All expansions of `node` with at most `budget` edges below it, each child
// independently kept whole or cut into a site.
inline void expansions(const ParseTree& node, int budget, std::vector<ParseTree>& out) {
  if (budget < 1) return;
  std::vector<std::vector<ParseTree>> child_options(node.children.size());
  for (std::size_t i = 0; i < node.children.size(); ++i) {
    const ParseTree& c = node.children[i];
    if (c.is_word()) {
      child_options[i].push_back(c);
    } else {
      child_options[i].push_back(ParseTree::make_site(c.label));
      if (budget > 1) expansions(c, budget == kUnboundedDepth ? budget : budget - 1, child_options[i]);
    }
  }
  std::vector<ParseTree> picked(node.children.size());
  std::function<void(std::size_t)> emit = [&](std::size_t i) {
    if (i == node.children.size()) {
      out.push_back(ParseTree::make_node(node.label, picked));
      return;
    }
    for (const ParseTree& option : child_options[i]) {
      picked[i] = option;
      emit(i + 1);
    }
  };
  emit(0);
}

inline void collect_nonterminals(const ParseTree& t, std::vector<const ParseTree*>& out) {
  if (t.is_word()) return;
  out.push_back(&t);
  for (const ParseTree& c : t.children) collect_nonterminals(c, out);
}

}  // namespace detail

// Preorder list of the tree's nonterminal nodes (root first).
inline std::vector<const ParseTree*> nonterminal_nodes(const ParseTree& t) {
  std::vector<const ParseTree*> out;
  detail::collect_nonterminals(t, out);
  return out;
}

// Every fragment of `tree`, as a multiset: one group of fragments per
// nonterminal node, each group enumerating the cut choices below that node.
inline std::vector<Fragment> extract_fragments(const ParseTree& tree, int max_depth) {
  if (max_depth < 1) throw std::invalid_argument("extract_fragments: max_depth must be >= 1");
  std::vector<Fragment> out;
  for (const ParseTree* node : nonterminal_nodes(tree)) {
    std::vector<ParseTree> grown;
    detail::expansions(*node, max_depth, grown);
    for (ParseTree& g : grown) out.push_back(make_fragment(std::move(g)));
  }
  return out;
}

struct FragmentTable {
  struct Entry {
    Fragment fragment;
    std::int64_t count = 0;
  };
  std::map<std::string, Entry> entries;       // canonical_key -> entry
  std::map<Label, std::int64_t> root_totals;  // per root label occurrence mass
  Label corpus_start;                         // root label of the first corpus tree

  void add(Fragment f, std::int64_t count) {
    root_totals[f.root()] += count;
    auto [it, fresh] = entries.try_emplace(f.canonical_key);
    if (fresh) it->second.fragment = std::move(f);
    it->second.count += count;
  }
};

inline FragmentTable count_fragments(const std::vector<ParseTree>& corpus, int max_depth) {
  if (corpus.empty()) throw std::invalid_argument("count_fragments: empty corpus");
  FragmentTable table;
  table.corpus_start = corpus.front().label;
  for (const ParseTree& tree : corpus)
    for (Fragment& f : extract_fragments(tree, max_depth)) table.add(std::move(f), 1);
  return table;
}

// TSV export of (canonical_key, count) in key order.
inline void write_fragment_table_tsv(std::ostream& out, const FragmentTable& table) {
  for (const auto& [key, entry] : table.entries) out << key << '\t' << entry.count << '\n';
}

// --- head percolation and the non-headword filter ---------------------------

// Head-child preferences per parent category. A rule scans the children in
// `direction` once per listed category, in priority order; with no rule (or
// no match) the head child is the leftmost one.
struct HeadRules {
  enum class Direction { kLeft, kRight };
  struct Rule {
    Direction direction = Direction::kLeft;
    std::vector<std::string> preferences;  // child categories, highest first
  };
  std::map<std::string, Rule> by_parent;  // keyed by parent category (syn only)

  const ParseTree* head_child(const ParseTree& node) const {
    if (node.children.empty()) return nullptr;
    const auto it = by_parent.find(node.label.syn);
    if (it != by_parent.end()) {
      const Rule& rule = it->second;
      for (const std::string& want : rule.preferences) {
        if (rule.direction == Direction::kLeft) {
          for (const ParseTree& c : node.children)
            if (!c.is_word() && c.label.syn == want) return &c;
        } else {
          for (auto rit = node.children.rbegin(); rit != node.children.rend(); ++rit)
            if (!rit->is_word() && rit->label.syn == want) return &*rit;
        }
      }
      if (rule.direction == Direction::kRight) return &node.children.back();
    }
    return &node.children.front();
  }
};

// Rule file: one line per parent, `<parent> <left|right> <child>...`.
inline HeadRules parse_head_rules(std::istream& in) {
  HeadRules rules;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto toks = split_ws(line);
    if (toks.empty() || toks[0][0] == '#') continue;
    if (toks.size() < 2 || (toks[1] != "left" && toks[1] != "right"))
      throw std::runtime_error("head rules line " + std::to_string(lineno) +
                               ": expected '<parent> <left|right> <child>...'");
    HeadRules::Rule rule;
    rule.direction = toks[1] == "left" ? HeadRules::Direction::kLeft : HeadRules::Direction::kRight;
    rule.preferences.assign(toks.begin() + 2, toks.end());
    rules.by_parent[toks[0]] = std::move(rule);
  }
  return rules;
}

inline HeadRules load_head_rules_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open head rules '" + path + "'");
  return parse_head_rules(in);
}

// Frontier words that are not the fragment's lexical head. The head is found
// by percolating head children from the root; percolation that ends at a
// substitution site leaves the fragment headless, making every frontier word
// a non-headword.
inline std::size_t count_nonheadwords(const Fragment& fragment, const HeadRules& rules) {
  std::size_t words = 0;
  std::function<void(const ParseTree&)> count_words = [&](const ParseTree& t) {
    if (t.is_word()) {
      ++words;
      return;
    }
    for (const ParseTree& c : t.children) count_words(c);
  };
  count_words(fragment.tree);
  if (words == 0) return 0;

  const ParseTree* at = &fragment.tree;
  while (!at->is_word() && !at->is_site()) at = rules.head_child(*at);
  return at->is_word() ? words - 1 : words;
}

inline constexpr std::size_t kNoNonheadLimit = std::numeric_limits<std::size_t>::max();

// Drop entries with more than `max_nonhead` non-headwords; the paper's
// ablation uses max_nonhead = 1. Root totals are recomputed over survivors.
inline FragmentTable headword_filter(const FragmentTable& table, const HeadRules& rules,
                                     std::size_t max_nonhead) {
  FragmentTable out;
  out.corpus_start = table.corpus_start;
  for (const auto& [key, entry] : table.entries) {
    if (count_nonheadwords(entry.fragment, rules) > max_nonhead) continue;
    out.add(entry.fragment, entry.count);
  }
  // a root label the filter emptied must not linger as a substitution site
  std::set<Label> sites;
  std::function<void(const ParseTree&)> collect = [&](const ParseTree& t) {
    if (t.is_site()) {
      sites.insert(t.label);
      return;
    }
    for (const ParseTree& c : t.children) collect(c);
  };
  for (const auto& [key, entry] : out.entries) collect(entry.fragment.tree);
  for (const Label& l : sites)
    if (table.root_totals.count(l) && !out.root_totals.count(l))
      throw std::runtime_error("headword filter removed every fragment rooted '" + l.token() +
                               "' while the label is still a substitution site");
  return out;
}

}  // namespace dop
