#pragma once

// Stochastic tree-substitution grammars and their derivation semantics.
//
// A grammar is a set of fragments with root-conditioned probabilities: the
// probabilities of all fragments sharing a root label sum to one. Fragments
// combine by node substitution at the leftmost nonterminal frontier site,
// so a derivation is a fragment sequence and its probability the product of
// the fragment probabilities. A parse tree's probability sums over all of
// its derivations; that sum is computed by an inside-style dynamic program
// over substitution-point choices, with brute-force enumeration kept as the
// oracle for small trees.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "dop/fragments.hpp"
#include "dop/tree.hpp"
#include "dop/util.hpp"

namespace dop {

// Frontier of a fragment read left to right: words and substitution sites.
struct FrontierSym {
  bool is_word = false;
  std::string word;
  Label site;
};

inline void frontier_into(const ParseTree& t, std::vector<FrontierSym>& out) {
  if (t.is_word()) {
    out.push_back({true, t.word, {}});
    return;
  }
  if (t.is_site()) {
    out.push_back({false, {}, t.label});
    return;
  }
  for (const ParseTree& c : t.children) frontier_into(c, out);
}

inline std::vector<FrontierSym> fragment_frontier(const ParseTree& t) {
  std::vector<FrontierSym> out;
  frontier_into(t, out);
  return out;
}

class Stsg {
 public:
  struct Entry {
    Fragment fragment;
    double logp = kLogZero;
    std::vector<FrontierSym> frontier;
  };

  Stsg(std::vector<std::pair<Fragment, double>> items, Label start)
      : start_(std::move(start)) {
    std::map<std::string, std::pair<Fragment, double>> sorted;
    for (auto& [fragment, p] : items) {
      if (!(p > 0.0) || p > 1.0 + 1e-12)
        throw std::runtime_error("fragment probability out of (0,1]: " + fragment.canonical_key);
      if (fragment.tree.children.empty())
        throw std::runtime_error("fragment root must be expanded: " + fragment.canonical_key);
      auto [it, fresh] = sorted.try_emplace(fragment.canonical_key, std::move(fragment), p);
      if (!fresh) throw std::runtime_error("duplicate fragment " + it->first);
    }
    entries_.reserve(sorted.size());
    for (auto& [key, item] : sorted) {
      Entry e;
      e.frontier = fragment_frontier(item.first.tree);
      e.fragment = std::move(item.first);
      e.logp = std::log(item.second);
      by_key_.emplace(key, entries_.size());
      by_root_[e.fragment.root()].push_back(entries_.size());
      entries_.push_back(std::move(e));
    }
    validate();
  }

  const std::vector<Entry>& entries() const { return entries_; }
  const Entry& entry(std::size_t id) const { return entries_[id]; }
  std::size_t size() const { return entries_.size(); }
  const Label& start_label() const { return start_; }

  std::optional<std::size_t> find(const std::string& canonical_key) const {
    const auto it = by_key_.find(canonical_key);
    if (it == by_key_.end()) return std::nullopt;
    return it->second;
  }

  const std::vector<std::size_t>& roots(const Label& l) const {
    static const std::vector<std::size_t> kEmpty;
    const auto it = by_root_.find(l);
    return it == by_root_.end() ? kEmpty : it->second;
  }

  // Same fragment inventory with new probabilities; zero-probability entries
  // are dropped. Fragment ids are not stable across this call.
  Stsg reweighted(const std::vector<double>& probs) const {
    if (probs.size() != entries_.size())
      throw std::invalid_argument("reweighted: probability vector size mismatch");
    std::vector<std::pair<Fragment, double>> items;
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (probs[i] > 0.0) items.emplace_back(entries_[i].fragment, probs[i]);
    return Stsg(std::move(items), start_);
  }

  double root_mass(const Label& l) const {
    double mass = 0.0;
    for (std::size_t id : roots(l)) mass += std::exp(entries_[id].logp);
    return mass;
  }

 private:
  void validate() const {
    if (entries_.empty()) throw std::runtime_error("empty grammar");
    for (const auto& [root, ids] : by_root_) {
      double mass = 0.0;
      for (std::size_t id : ids) mass += std::exp(entries_[id].logp);
      if (std::abs(mass - 1.0) > 1e-9)
        throw std::runtime_error("fragment probabilities for root '" + root.token() +
                                 "' sum to " + format_g17(mass));
    }
    if (by_root_.find(start_) == by_root_.end())
      throw std::runtime_error("no fragment rooted at start label '" + start_.token() + "'");
    // every substitution site must be derivable, and site-only unary chains
    // must not loop (those grammars have infinite derivation sets)
    std::map<Label, std::set<Label>> unary;
    for (const Entry& e : entries_) {
      std::size_t words = 0, sites = 0;
      const Label* sole_site = nullptr;
      for (const FrontierSym& s : e.frontier) {
        if (s.is_word) {
          ++words;
        } else {
          ++sites;
          sole_site = &s.site;
          if (by_root_.find(s.site) == by_root_.end())
            throw std::runtime_error("no fragment rooted at site label '" + s.site.token() +
                                     "' used by " + e.fragment.canonical_key);
        }
      }
      if (words == 0 && sites == 1) unary[e.fragment.root()].insert(*sole_site);
    }
    std::map<Label, int> state;  // 0 new, 1 on stack, 2 done
    std::function<void(const Label&)> visit = [&](const Label& l) {
      int& st = state[l];
      if (st == 1) throw std::runtime_error("unary site-only cycle through '" + l.token() + "'");
      if (st == 2) return;
      st = 1;
      const auto it = unary.find(l);
      if (it != unary.end())
        for (const Label& next : it->second) visit(next);
      state[l] = 2;
    };
    for (const auto& [l, _] : unary) visit(l);
  }

  std::vector<Entry> entries_;  // sorted by canonical key; index is the fragment id
  std::map<std::string, std::size_t> by_key_;
  std::map<Label, std::vector<std::size_t>> by_root_;
  Label start_;
};

// Relative-frequency estimate: P(t) = count(t) / total count of fragments
// with the same root label.
inline Stsg rf_estimate(const FragmentTable& table,
                        std::optional<Label> start = std::nullopt) {
  std::vector<std::pair<Fragment, double>> items;
  for (const auto& [key, entry] : table.entries) {
    const double denom = static_cast<double>(table.root_totals.at(entry.fragment.root()));
    items.emplace_back(entry.fragment, static_cast<double>(entry.count) / denom);
  }
  return Stsg(std::move(items), start.value_or(table.corpus_start));
}

// --- node substitution -------------------------------------------------------

namespace detail {

inline ParseTree* leftmost_site(ParseTree& t) {
  if (t.is_word()) return nullptr;
  if (t.is_site()) return &t;
  for (ParseTree& c : t.children)
    if (ParseTree* s = leftmost_site(c)) return s;
  return nullptr;
}

}  // namespace detail

// Replace the leftmost nonterminal frontier node of `partial` with the
// fragment; the site and fragment root labels must agree, semantics included.
inline ParseTree substitute(const ParseTree& partial, const ParseTree& fragment_tree) {
  ParseTree out = partial;
  ParseTree* site = detail::leftmost_site(out);
  if (!site) throw std::runtime_error("substitute: tree is already complete");
  if (site->label != fragment_tree.label)
    throw std::runtime_error("substitute: site '" + site->label.token() +
                             "' does not match fragment root '" + fragment_tree.label.token() + "'");
  *site = fragment_tree;
  return out;
}

inline ParseTree substitute(const ParseTree& partial, const Fragment& fragment) {
  return substitute(partial, fragment.tree);
}

struct Derivation {
  std::vector<Fragment> steps;

  std::string canonical() const {
    std::string out;
    for (std::size_t i = 0; i < steps.size(); ++i) {
      if (i) out += " o ";
      out += steps[i].canonical_key;
    }
    return out;
  }
};

// Left fold of substitute starting from a bare start site.
inline ParseTree derive(const std::vector<Fragment>& steps, const Label& start) {
  if (steps.empty()) throw std::runtime_error("derive: no steps");
  ParseTree tree = ParseTree::make_site(start);
  for (const Fragment& f : steps) tree = substitute(tree, f);
  if (!tree_complete(tree)) throw std::runtime_error("derive: nonterminal frontier nodes remain");
  return tree;
}

inline double derivation_logprob(const Derivation& d, const Stsg& g) {
  double lp = 0.0;
  for (const Fragment& f : d.steps) {
    const auto id = g.find(f.canonical_key);
    if (!id) throw std::runtime_error("unknown fragment " + f.canonical_key);
    lp += g.entry(*id).logp;
  }
  return lp;
}

inline double derivation_prob(const Derivation& d, const Stsg& g) {
  return std::exp(derivation_logprob(d, g));
}

// --- matching fragments against a tree --------------------------------------

// One way a grammar fragment occurs at a tree node: the frontier sites line
// up with `sites` and the fragment's internal nonterminals with `expanded`
// (both in preorder, `expanded` starting at the anchor node itself).
struct FragmentMatch {
  std::size_t fragment_id = 0;
  std::vector<const ParseTree*> sites;
  std::vector<const ParseTree*> expanded;
};

namespace detail {

inline bool match_walk(const ParseTree& frag, const ParseTree& node, FragmentMatch& m) {
  if (frag.is_word()) return node.is_word() && frag.word == node.word;
  if (node.is_word()) return false;
  if (frag.label != node.label) return false;
  if (frag.is_site()) {
    m.sites.push_back(&node);
    return true;
  }
  if (node.children.size() != frag.children.size()) return false;
  m.expanded.push_back(&node);
  for (std::size_t i = 0; i < frag.children.size(); ++i)
    if (!match_walk(frag.children[i], node.children[i], m)) return false;
  return true;
}

}  // namespace detail

// All grammar fragments matching the (complete) subtree rooted at `node`.
inline std::vector<FragmentMatch> match_fragments_at(const ParseTree& node, const Stsg& g) {
  std::vector<FragmentMatch> out;
  if (node.is_word()) return out;
  for (std::size_t id : g.roots(node.label)) {
    FragmentMatch m;
    m.fragment_id = id;
    if (detail::match_walk(g.entry(id).fragment.tree, node, m)) out.push_back(std::move(m));
  }
  return out;
}

// --- tree probability --------------------------------------------------------

// inside(v) = sum over fragments anchored at v of P(f) * prod inside(sites)
inline double tree_logprob(const ParseTree& tree, const Stsg& g) {
  if (!tree_complete(tree)) throw std::runtime_error("tree_logprob: tree has frontier sites");
  std::unordered_map<const ParseTree*, double> memo;
  std::function<double(const ParseTree&)> inside = [&](const ParseTree& node) -> double {
    const auto it = memo.find(&node);
    if (it != memo.end()) return it->second;
    memo.emplace(&node, kLogZero);  // matches never recurse into their anchor
    double total = kLogZero;
    for (const FragmentMatch& m : match_fragments_at(node, g)) {
      double lp = g.entry(m.fragment_id).logp;
      for (const ParseTree* site : m.sites) lp += inside(*site);
      total = log_add(total, lp);
    }
    memo[&node] = total;
    return total;
  };
  return inside(tree);
}

inline double tree_prob(const ParseTree& tree, const Stsg& g) {
  return std::exp(tree_logprob(tree, g));
}

// --- exhaustive derivation enumeration (small trees) -------------------------

namespace detail {

inline ParseTree fragment_upto(const ParseTree& node, const std::set<const ParseTree*>& cuts) {
  std::vector<ParseTree> kids;
  for (const ParseTree& c : node.children) {
    if (c.is_word())
      kids.push_back(c);
    else if (cuts.count(&c))
      kids.push_back(ParseTree::make_site(c.label));
    else
      kids.push_back(fragment_upto(c, cuts));
  }
  return ParseTree::make_node(node.label, std::move(kids));
}

}  // namespace detail

// All leftmost derivations of a complete tree: one candidate per subset of
// non-root nonterminal nodes chosen as substitution points, kept when every
// induced fragment is in the grammar. Exponential by nature; trees are
// capped at 25 non-root nonterminals.
inline std::vector<Derivation> enumerate_derivations(const ParseTree& tree, const Stsg& g) {
  const auto nodes = nonterminal_nodes(tree);
  const std::size_t inner = nodes.size() - 1;
  if (inner > 25) throw std::runtime_error("enumerate_derivations: tree too large");
  std::vector<Derivation> out;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << inner); ++mask) {
    std::set<const ParseTree*> cuts;
    for (std::size_t b = 0; b < inner; ++b)
      if (mask & (std::uint64_t{1} << b)) cuts.insert(nodes[b + 1]);
    // derivation steps in preorder of their anchors: root first, then cuts
    std::vector<const ParseTree*> anchors;
    anchors.push_back(nodes[0]);
    for (const ParseTree* n : nodes)
      if (cuts.count(n)) anchors.push_back(n);
    Derivation d;
    bool ok = true;
    for (const ParseTree* anchor : anchors) {
      Fragment f = make_fragment(detail::fragment_upto(*anchor, cuts));
      if (!g.find(f.canonical_key)) {
        ok = false;
        break;
      }
      d.steps.push_back(std::move(f));
    }
    if (ok) out.push_back(std::move(d));
  }
  std::sort(out.begin(), out.end(),
            [](const Derivation& a, const Derivation& b) { return a.canonical() < b.canonical(); });
  return out;
}

// --- grammar files -----------------------------------------------------------

// TSV with a `start` header line, then (canonical_key, probability) rows in
// key order, probabilities printed with 17 significant digits.
inline void write_grammar_tsv(std::ostream& out, const Stsg& g) {
  out << "start\t" << g.start_label().token() << '\n';
  for (const auto& e : g.entries())
    out << e.fragment.canonical_key << '\t' << format_g17(std::exp(e.logp)) << '\n';
}

inline Stsg read_grammar_tsv(std::istream& in) {
  std::vector<std::pair<std::string, double>> rows;
  std::optional<Label> start;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error("grammar line " + std::to_string(lineno) + ": expected two fields");
    const std::string key = line.substr(0, tab);
    const std::string value = line.substr(tab + 1);
    if (key == "start") {
      start = parse_label_token(value);
      continue;
    }
    rows.emplace_back(key, std::stod(value));
  }
  if (!start) throw std::runtime_error("grammar file has no start line");
  // first pass: root labels double as the substitution-site alphabet
  std::set<Label> site_labels;
  for (const auto& [key, p] : rows) {
    if (key.size() < 2 || key[0] != '(')
      throw std::runtime_error("malformed fragment key " + key);
    const auto sp = key.find(' ');
    if (sp == std::string::npos) throw std::runtime_error("malformed fragment key " + key);
    site_labels.insert(parse_label_token(std::string_view(key).substr(1, sp - 1)));
  }
  std::vector<std::pair<Fragment, double>> items;
  for (const auto& [key, p] : rows)
    items.emplace_back(make_fragment(parse_fragment_key(key, site_labels)), p);
  return Stsg(std::move(items), *start);
}

inline Stsg read_grammar_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open grammar '" + path + "'");
  return read_grammar_tsv(in);
}

}  // namespace dop
