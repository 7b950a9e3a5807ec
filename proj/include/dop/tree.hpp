#pragma once

// Annotated parse trees and the single-line bracketed treebank format.
//
// A Label is a syntactic category with an optional semantic formula glued on
// with '@' ("NP@place.d1"). '@' is reserved: it may not occur in category
// names or in words. Formulas are opaque strings apart from the daughter
// variables d1..d9 used by compose_semantics; the '#' and '!' markers are
// carried verbatim.
//
// A ParseTree node is one of
//   - a word leaf        (terminal == true, children empty)
//   - a nonterminal node (label set, one or more children)
//   - a substitution site (label set, no children) -- only in fragments and
//     partial trees, never in a full corpus tree.

#include <algorithm>
#include <fstream>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dop/util.hpp"

namespace dop {

struct Label {
  std::string syn;
  std::optional<std::string> sem;

  bool operator==(const Label& o) const { return syn == o.syn && sem == o.sem; }
  bool operator!=(const Label& o) const { return !(*this == o); }
  bool operator<(const Label& o) const {
    if (syn != o.syn) return syn < o.syn;
    if (sem.has_value() != o.sem.has_value()) return !sem.has_value();
    return sem.has_value() && *sem < *o.sem;
  }

  std::string token() const { return sem ? syn + "@" + *sem : syn; }
};

inline bool valid_label_chars(std::string_view s) {
  for (char c : s) {
    if (c == '(' || c == ')' || std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return !s.empty();
}

inline Label parse_label_token(std::string_view token) {
  const auto at = token.find('@');
  Label label;
  if (at == std::string_view::npos) {
    label.syn = std::string(token);
  } else {
    label.syn = std::string(token.substr(0, at));
    label.sem = std::string(token.substr(at + 1));
    if (label.sem->empty()) throw std::runtime_error("empty semantic formula in label '" + std::string(token) + "'");
    if (label.sem->find('@') != std::string::npos)
      throw std::runtime_error("stray '@' in label '" + std::string(token) + "'");
    if (!valid_label_chars(*label.sem))
      throw std::runtime_error("brackets or whitespace in semantic formula '" + *label.sem + "'");
  }
  if (!valid_label_chars(label.syn))
    throw std::runtime_error("empty or malformed category in label token '" + std::string(token) + "'");
  return label;
}

struct ParseTree {
  Label label;
  std::string word;
  bool terminal = false;
  std::vector<ParseTree> children;

  bool is_word() const { return terminal; }
  bool is_site() const { return !terminal && children.empty(); }

  bool operator==(const ParseTree& o) const {
    if (terminal != o.terminal) return false;
    if (terminal) return word == o.word;
    return label == o.label && children == o.children;
  }
  bool operator!=(const ParseTree& o) const { return !(*this == o); }

  static ParseTree make_word(std::string w) {
    ParseTree t;
    t.terminal = true;
    t.word = std::move(w);
    return t;
  }
  static ParseTree make_site(Label l) {
    ParseTree t;
    t.label = std::move(l);
    return t;
  }
  static ParseTree make_node(Label l, std::vector<ParseTree> kids) {
    ParseTree t;
    t.label = std::move(l);
    t.children = std::move(kids);
    return t;
  }
};

// --- serialization ---------------------------------------------------------

inline void serialize_into(const ParseTree& t, std::string& out) {
  if (t.is_word()) {
    out += t.word;
    return;
  }
  if (t.is_site()) {
    out += t.label.token();
    return;
  }
  out += '(';
  out += t.label.token();
  for (const ParseTree& c : t.children) {
    out += ' ';
    serialize_into(c, out);
  }
  out += ')';
}

// Canonical single-line form; inverse of parse_bracketed on full trees.
inline std::string serialize_bracketed(const ParseTree& t) {
  std::string out;
  serialize_into(t, out);
  return out;
}

// --- parsing ---------------------------------------------------------------

namespace detail {

struct TreeToken {
  enum Kind { kOpen, kClose, kAtom } kind;
  std::string text;
};

inline std::vector<TreeToken> lex_bracketed(std::string_view text) {
  std::vector<TreeToken> toks;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '(') {
      toks.push_back({TreeToken::kOpen, "("});
      ++i;
    } else if (c == ')') {
      toks.push_back({TreeToken::kClose, ")"});
      ++i;
    } else {
      std::size_t j = i;
      while (j < text.size() && text[j] != '(' && text[j] != ')' &&
             !std::isspace(static_cast<unsigned char>(text[j])))
        ++j;
      toks.push_back({TreeToken::kAtom, std::string(text.substr(i, j - i))});
      i = j;
    }
  }
  return toks;
}

// Recursive descent over the token stream. `atom` decides what a bare token
// in child position means: a word for corpus trees, possibly a substitution
// site for fragment keys.
inline ParseTree parse_node(const std::vector<TreeToken>& toks, std::size_t& pos,
                            const std::function<ParseTree(const std::string&)>& atom) {
  if (pos >= toks.size() || toks[pos].kind != TreeToken::kOpen)
    throw std::runtime_error("expected '(' in bracketed tree");
  ++pos;
  if (pos >= toks.size() || toks[pos].kind != TreeToken::kAtom)
    throw std::runtime_error("expected label after '('");
  ParseTree node;
  node.label = parse_label_token(toks[pos].text);
  ++pos;
  while (pos < toks.size() && toks[pos].kind != TreeToken::kClose) {
    if (toks[pos].kind == TreeToken::kOpen) {
      node.children.push_back(parse_node(toks, pos, atom));
    } else {
      node.children.push_back(atom(toks[pos].text));
      ++pos;
    }
  }
  if (pos >= toks.size()) throw std::runtime_error("unbalanced brackets: missing ')'");
  ++pos;  // consume ')'
  if (node.children.empty())
    throw std::runtime_error("nonterminal '" + node.label.token() + "' has zero children");
  return node;
}

inline ParseTree parse_with_atom(std::string_view text,
                                 const std::function<ParseTree(const std::string&)>& atom) {
  const auto toks = lex_bracketed(text);
  if (toks.empty()) throw std::runtime_error("empty bracketed expression");
  std::size_t pos = 0;
  ParseTree t = parse_node(toks, pos, atom);
  if (pos != toks.size()) throw std::runtime_error("trailing input after tree");
  return t;
}

}  // namespace detail

// Corpus trees: every bare token is a word.
inline ParseTree parse_bracketed(std::string_view text) {
  return detail::parse_with_atom(text, [](const std::string& tok) {
    if (tok.find('@') != std::string::npos)
      throw std::runtime_error("'@' is reserved and may not occur in word '" + tok + "'");
    return ParseTree::make_word(tok);
  });
}

// Fragment keys: a bare token is a substitution site when its label is in
// `site_labels`, otherwise a word. Site labels are collected from fragment
// roots, which covers every legal site of a well-formed grammar.
inline ParseTree parse_fragment_key(std::string_view text, const std::set<Label>& site_labels) {
  return detail::parse_with_atom(text, [&site_labels](const std::string& tok) {
    if (tok.find('@') != std::string::npos || site_labels.count(Label{tok, std::nullopt})) {
      Label l = parse_label_token(tok);
      if (site_labels.count(l)) return ParseTree::make_site(std::move(l));
    }
    if (tok.find('@') != std::string::npos)
      throw std::runtime_error("token '" + tok + "' is neither a known site label nor a valid word");
    return ParseTree::make_word(tok);
  });
}

// --- basic tree operations -------------------------------------------------

inline ParseTree strip_semantics(const ParseTree& t) {
  ParseTree out = t;
  if (!out.terminal) out.label.sem.reset();
  for (std::size_t i = 0; i < out.children.size(); ++i)
    out.children[i] = strip_semantics(t.children[i]);
  return out;
}

inline void yield_into(const ParseTree& t, std::vector<std::string>& out) {
  if (t.is_word()) {
    out.push_back(t.word);
    return;
  }
  for (const ParseTree& c : t.children) yield_into(c, out);
}

// Left-to-right frontier words. Substitution sites contribute nothing.
inline std::vector<std::string> tree_yield(const ParseTree& t) {
  std::vector<std::string> out;
  yield_into(t, out);
  return out;
}

// Edges on the longest root-to-frontier path; the preterminal-to-word edge
// counts, so "(V likes)" has depth 1 and a bare site has depth 0.
inline int tree_depth(const ParseTree& t) {
  if (t.is_word() || t.is_site()) return 0;
  int deepest = 0;
  for (const ParseTree& c : t.children) deepest = std::max(deepest, tree_depth(c));
  return deepest + 1;
}

inline bool tree_complete(const ParseTree& t) {
  if (t.is_word()) return true;
  if (t.is_site()) return false;
  for (const ParseTree& c : t.children)
    if (!tree_complete(c)) return false;
  return true;
}

// Full corpus trees: nonterminals have children, leaves are words.
inline void validate_corpus_tree(const ParseTree& t) {
  if (t.is_word()) throw std::runtime_error("corpus tree root cannot be a word");
  if (t.is_site()) throw std::runtime_error("nonterminal '" + t.label.token() + "' has zero children");
  for (const ParseTree& c : t.children)
    if (!c.is_word()) validate_corpus_tree(c);
}

// --- semantic composition ----------------------------------------------------

// Bottom-up substitution of daughter meanings into the node's formula scheme.
// A preterminal (all children are words) contributes its formula verbatim;
// elsewhere each dk refers to the k-th daughter, which must be a constituent.
inline std::string compose_semantics(const ParseTree& t) {
  if (t.is_word()) throw std::runtime_error("compose_semantics: reached a bare word");
  if (!t.label.sem)
    throw std::runtime_error("node '" + t.label.syn + "' has no semantic formula");
  const std::string& scheme = *t.label.sem;

  const bool preterminal =
      !t.children.empty() &&
      std::all_of(t.children.begin(), t.children.end(), [](const ParseTree& c) { return c.is_word(); });
  if (preterminal) return scheme;

  std::vector<std::optional<std::string>> parts(t.children.size());
  std::string out;
  for (std::size_t i = 0; i < scheme.size(); ++i) {
    if (scheme[i] == 'd' && i + 1 < scheme.size() && scheme[i + 1] >= '1' && scheme[i + 1] <= '9') {
      const std::size_t k = static_cast<std::size_t>(scheme[i + 1] - '1');
      if (k >= t.children.size())
        throw std::runtime_error("variable d" + std::string(1, scheme[i + 1]) +
                                 " has no matching daughter under '" + t.label.token() + "'");
      if (t.children[k].is_word())
        throw std::runtime_error("variable d" + std::string(1, scheme[i + 1]) +
                                 " refers to a bare word under '" + t.label.token() + "'");
      if (!parts[k]) parts[k] = compose_semantics(t.children[k]);
      out += *parts[k];
      ++i;
    } else {
      out += scheme[i];
    }
  }
  return out;
}

// --- treebank files ----------------------------------------------------------

// One bracketed tree per line; blank lines ignored.
inline std::vector<ParseTree> read_treebank(std::istream& in) {
  std::vector<ParseTree> trees;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (split_ws(line).empty()) continue;
    try {
      ParseTree t = parse_bracketed(line);
      validate_corpus_tree(t);
      trees.push_back(std::move(t));
    } catch (const std::exception& e) {
      throw std::runtime_error("treebank line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return trees;
}

inline std::vector<ParseTree> read_treebank_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open treebank '" + path + "'");
  return read_treebank(in);
}

inline void write_treebank(std::ostream& out, const std::vector<ParseTree>& trees) {
  for (const ParseTree& t : trees) out << serialize_bracketed(t) << '\n';
}

}  // namespace dop
