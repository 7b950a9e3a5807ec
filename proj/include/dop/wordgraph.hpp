#pragma once

// Word-graphs (recognizer lattices): a DAG of word arcs between integer
// nodes, each arc optionally carrying a natural-log acoustic score.
//
// File format, line oriented:
//   LATTICE <node_count> <start> <end>
//   ARC <from> <to> <word> [<acoustic_logp>]

#include <algorithm>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dop/util.hpp"

namespace dop {

struct WordArc {
  int from = 0;
  int to = 0;
  std::string word;
  std::optional<double> acoustic_logp;

  bool operator<(const WordArc& o) const {
    if (from != o.from) return from < o.from;
    if (to != o.to) return to < o.to;
    return word < o.word;
  }
};

struct WordGraph {
  int node_count = 0;
  int start = 0;
  int end = 0;
  std::vector<WordArc> arcs;  // sorted by (from, to, word)

  // node ids in an order where every arc goes forward
  std::vector<int> topo_order;

  bool has_acoustics() const {
    return std::any_of(arcs.begin(), arcs.end(),
                       [](const WordArc& a) { return a.acoustic_logp.has_value(); });
  }
};

namespace detail {

// Kahn topological sort over all arcs; empty result signals a cycle.
inline std::vector<int> topo_sort(int n, const std::vector<WordArc>& arcs) {
  std::vector<int> indeg(n, 0);
  std::vector<std::vector<int>> out(n);
  for (const WordArc& a : arcs) {
    out[a.from].push_back(a.to);
    ++indeg[a.to];
  }
  std::vector<int> order;
  std::vector<int> ready;
  for (int v = 0; v < n; ++v)
    if (indeg[v] == 0) ready.push_back(v);
  // pop smallest id first so the order is canonical
  while (!ready.empty()) {
    std::sort(ready.begin(), ready.end(), std::greater<int>());
    int v = ready.back();
    ready.pop_back();
    order.push_back(v);
    for (int w : out[v])
      if (--indeg[w] == 0) ready.push_back(w);
  }
  if (static_cast<int>(order.size()) != n) order.clear();
  return order;
}

}  // namespace detail

inline void validate_wordgraph(WordGraph& g) {
  if (g.node_count <= 0) throw std::runtime_error("lattice must have at least one node");
  auto check_node = [&](int v, const char* what) {
    if (v < 0 || v >= g.node_count)
      throw std::runtime_error(std::string(what) + " node id out of range: " + std::to_string(v));
  };
  check_node(g.start, "start");
  check_node(g.end, "end");
  for (const WordArc& a : g.arcs) {
    check_node(a.from, "arc");
    check_node(a.to, "arc");
    if (a.word.empty()) throw std::runtime_error("arc with empty word");
  }
  std::sort(g.arcs.begin(), g.arcs.end());
  for (std::size_t i = 1; i < g.arcs.size(); ++i) {
    if (!(g.arcs[i - 1] < g.arcs[i]))
      throw std::runtime_error("duplicate arc " + std::to_string(g.arcs[i].from) + "->" +
                               std::to_string(g.arcs[i].to) + " '" + g.arcs[i].word + "'");
  }
  g.topo_order = detail::topo_sort(g.node_count, g.arcs);
  if (g.topo_order.empty() && g.node_count > 0)
    throw std::runtime_error("lattice contains a cycle");
  // end must be reachable from start
  std::vector<char> seen(g.node_count, 0);
  seen[g.start] = 1;
  for (int v : g.topo_order) {
    if (!seen[v]) continue;
    for (const WordArc& a : g.arcs)
      if (a.from == v) seen[a.to] = 1;
  }
  if (!seen[g.end]) throw std::runtime_error("end node unreachable from start");
}

inline WordGraph load_wordgraph(std::istream& in) {
  WordGraph g;
  std::string line;
  bool have_header = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto toks = split_ws(line);
    if (toks.empty() || toks[0][0] == '#') continue;
    try {
      if (toks[0] == "LATTICE") {
        if (have_header) throw std::runtime_error("duplicate LATTICE header");
        if (toks.size() != 4) throw std::runtime_error("LATTICE header needs 3 fields");
        g.node_count = std::stoi(toks[1]);
        g.start = std::stoi(toks[2]);
        g.end = std::stoi(toks[3]);
        have_header = true;
      } else if (toks[0] == "ARC") {
        if (!have_header) throw std::runtime_error("ARC before LATTICE header");
        if (toks.size() != 4 && toks.size() != 5) throw std::runtime_error("malformed ARC line");
        WordArc a;
        a.from = std::stoi(toks[1]);
        a.to = std::stoi(toks[2]);
        a.word = toks[3];
        if (toks.size() == 5) a.acoustic_logp = std::stod(toks[4]);
        g.arcs.push_back(std::move(a));
      } else {
        throw std::runtime_error("unknown record '" + toks[0] + "'");
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("lattice line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!have_header) throw std::runtime_error("missing LATTICE header");
  validate_wordgraph(g);
  return g;
}

inline WordGraph load_wordgraph(const std::string& text) {
  std::istringstream in(text);
  return load_wordgraph(in);
}

inline WordGraph load_wordgraph_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open lattice '" + path + "'");
  return load_wordgraph(in);
}

inline void write_wordgraph(std::ostream& out, const WordGraph& g) {
  out << "LATTICE " << g.node_count << ' ' << g.start << ' ' << g.end << '\n';
  for (const WordArc& a : g.arcs) {
    out << "ARC " << a.from << ' ' << a.to << ' ' << a.word;
    if (a.acoustic_logp) out << ' ' << format_g17(*a.acoustic_logp);
    out << '\n';
  }
}

// A sentence as the obvious linear lattice over positions 0..len.
inline WordGraph linear_lattice(const std::vector<std::string>& words) {
  WordGraph g;
  g.node_count = static_cast<int>(words.size()) + 1;
  g.start = 0;
  g.end = static_cast<int>(words.size());
  for (std::size_t i = 0; i < words.size(); ++i)
    g.arcs.push_back({static_cast<int>(i), static_cast<int>(i) + 1, words[i], std::nullopt});
  validate_wordgraph(g);
  return g;
}

// All start-to-end word sequences; throws past `limit` expansions. Intended
// for small lattices (oracles, tests, exhaustive scoring).
inline std::vector<std::vector<const WordArc*>> enumerate_paths(const WordGraph& g,
                                                                std::size_t limit = 100000) {
  std::vector<std::vector<const WordArc*>> done;
  std::vector<std::pair<int, std::vector<const WordArc*>>> agenda;
  agenda.push_back({g.start, {}});
  std::size_t steps = 0;
  while (!agenda.empty()) {
    auto [node, path] = std::move(agenda.back());
    agenda.pop_back();
    if (node == g.end) {
      done.push_back(path);
      if (done.size() > limit) throw std::runtime_error("enumerate_paths: too many paths");
    }
    for (const WordArc& a : g.arcs) {
      if (a.from != node) continue;
      if (++steps > limit * 64) throw std::runtime_error("enumerate_paths: lattice too large");
      auto next = path;
      next.push_back(&a);
      agenda.push_back({a.to, std::move(next)});
    }
  }
  std::sort(done.begin(), done.end());
  return done;
}

}  // namespace dop
