#pragma once

// Maximum-likelihood reestimation of fragment probabilities.
//
// The derivations of a training tree T form a state trellis: each state is a
// root-anchored all-or-none prefix of T (s_0 is the bare root, s_T is T),
// and an edge attaches a grammar fragment at the leftmost pending
// substitution site. Forward/backward passes over that trellis give the
// posterior expected number of times each fragment is used in a derivation
// of T; normalizing expected counts per root label is one EM iteration.
//
// Following Magerman's convention the backward pass starts from
// beta(s_T) = alpha(s_T), so alpha(s)*beta(s) carries alpha(s_T)^2 times the
// posterior mass through s; the count accumulator divides accordingly.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dop/stsg.hpp"
#include "dop/tree.hpp"
#include "dop/util.hpp"

namespace dop {

struct TrellisState {
  ParseTree partial;
  double log_alpha = kLogZero;
  double log_beta = kLogZero;
  std::vector<std::uint64_t> expanded;  // bitset over preorder nonterminal ids

  double alpha() const { return std::exp(log_alpha); }
  double beta() const { return std::exp(log_beta); }
};

struct TrellisEdge {
  std::size_t from = 0;
  std::size_t to = 0;
  std::size_t fragment_id = 0;
};

struct Trellis {
  std::vector<TrellisState> states;  // topologically ordered; [0] is s_0
  std::vector<TrellisEdge> edges;    // sorted by (from, to, fragment_id)
  std::size_t goal = 0;              // index of s_T
};

namespace detail {

struct TreeIndex {
  std::vector<const ParseTree*> nodes;  // preorder nonterminals
  std::map<const ParseTree*, std::size_t> id_of;
  std::vector<std::size_t> parent;  // parent nonterminal id; root maps to itself

  explicit TreeIndex(const ParseTree& t) {
    nodes = nonterminal_nodes(t);
    parent.assign(nodes.size(), 0);
    for (std::size_t i = 0; i < nodes.size(); ++i) id_of.emplace(nodes[i], i);
    for (std::size_t i = 0; i < nodes.size(); ++i)
      for (const ParseTree& c : nodes[i]->children)
        if (!c.is_word()) parent[id_of.at(&c)] = i;
  }

  std::size_t words() const { return (nodes.size() + 63) / 64; }
};

inline bool bit_get(const std::vector<std::uint64_t>& bits, std::size_t i) {
  return (bits[i / 64] >> (i % 64)) & 1;
}
inline void bit_set(std::vector<std::uint64_t>& bits, std::size_t i) {
  bits[i / 64] |= std::uint64_t{1} << (i % 64);
}

// materialize the partial tree for one expansion bitset
inline ParseTree partial_tree(const TreeIndex& index, const std::vector<std::uint64_t>& bits,
                              std::size_t node_id) {
  const ParseTree& node = *index.nodes[node_id];
  if (!bit_get(bits, node_id)) return ParseTree::make_site(node.label);
  std::vector<ParseTree> kids;
  for (const ParseTree& c : node.children) {
    if (c.is_word())
      kids.push_back(c);
    else
      kids.push_back(partial_tree(index, bits, index.id_of.at(&c)));
  }
  return ParseTree::make_node(node.label, std::move(kids));
}

// leftmost pending substitution site: the smallest-preorder nonterminal that
// is unexpanded while its parent is expanded (the root when unexpanded)
inline std::optional<std::size_t> leftmost_pending(const TreeIndex& index,
                                                   const std::vector<std::uint64_t>& bits) {
  if (!bit_get(bits, 0)) return 0;
  for (std::size_t i = 1; i < index.nodes.size(); ++i)
    if (!bit_get(bits, i) && bit_get(bits, index.parent[i])) return i;
  return std::nullopt;
}

struct NodeMatch {
  std::size_t fragment_id = 0;
  std::vector<std::size_t> expanded_ids;
};

}  // namespace detail

// Forward closure from the bare-root state over fragments anchored at the
// leftmost pending site. States are memoized by their expansion bitsets.
inline Trellis build_trellis(const ParseTree& tree, const Stsg& g) {
  if (!tree_complete(tree)) throw std::runtime_error("build_trellis: tree has frontier sites");
  const detail::TreeIndex index(tree);

  // fragment anchorings per node, computed once
  std::vector<std::optional<std::vector<detail::NodeMatch>>> matches(index.nodes.size());
  auto matches_at = [&](std::size_t node_id) -> const std::vector<detail::NodeMatch>& {
    if (!matches[node_id]) {
      std::vector<detail::NodeMatch> ms;
      for (const FragmentMatch& m : match_fragments_at(*index.nodes[node_id], g)) {
        detail::NodeMatch nm;
        nm.fragment_id = m.fragment_id;
        for (const ParseTree* p : m.expanded) nm.expanded_ids.push_back(index.id_of.at(p));
        ms.push_back(std::move(nm));
      }
      matches[node_id] = std::move(ms);
    }
    return *matches[node_id];
  };

  std::map<std::vector<std::uint64_t>, std::size_t> state_of;
  std::vector<std::vector<std::uint64_t>> bitsets;
  std::vector<TrellisEdge> edges;
  const std::vector<std::uint64_t> zero(index.words(), 0);
  state_of.emplace(zero, 0);
  bitsets.push_back(zero);
  for (std::size_t s = 0; s < bitsets.size(); ++s) {
    const auto pending = detail::leftmost_pending(index, bitsets[s]);
    if (!pending) continue;  // complete: s_T
    for (const detail::NodeMatch& m : matches_at(*pending)) {
      std::vector<std::uint64_t> next = bitsets[s];
      for (std::size_t id : m.expanded_ids) detail::bit_set(next, id);
      auto [it, fresh] = state_of.try_emplace(next, bitsets.size());
      if (fresh) bitsets.push_back(std::move(next));
      edges.push_back({s, it->second, m.fragment_id});
    }
  }

  // topological order: expansion size strictly grows along edges
  auto popcount = [](const std::vector<std::uint64_t>& bits) {
    std::size_t n = 0;
    for (std::uint64_t w : bits) n += static_cast<std::size_t>(__builtin_popcountll(w));
    return n;
  };
  std::vector<std::size_t> order(bitsets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const std::size_t pa = popcount(bitsets[a]), pb = popcount(bitsets[b]);
    if (pa != pb) return pa < pb;
    return bitsets[a] < bitsets[b];
  });
  std::vector<std::size_t> rank(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) rank[order[i]] = i;

  Trellis trellis;
  trellis.states.resize(bitsets.size());
  for (std::size_t i = 0; i < bitsets.size(); ++i) {
    TrellisState& st = trellis.states[rank[i]];
    st.partial = detail::partial_tree(index, bitsets[i], 0);
    st.expanded = std::move(bitsets[i]);
  }
  for (TrellisEdge& e : edges) {
    e.from = rank[e.from];
    e.to = rank[e.to];
  }
  std::sort(edges.begin(), edges.end(), [](const TrellisEdge& a, const TrellisEdge& b) {
    if (a.from != b.from) return a.from < b.from;
    if (a.to != b.to) return a.to < b.to;
    return a.fragment_id < b.fragment_id;
  });
  trellis.edges = std::move(edges);

  std::vector<std::uint64_t> full(index.words(), 0);
  for (std::size_t i = 0; i < index.nodes.size(); ++i) detail::bit_set(full, i);
  bool found = false;
  for (std::size_t i = 0; i < trellis.states.size(); ++i)
    if (trellis.states[i].expanded == full) {
      trellis.goal = i;
      found = true;
    }
  if (!found) throw std::runtime_error("build_trellis: tree not derivable under the grammar");
  return trellis;
}

// alpha(s_0) = 1; alpha(s') accumulates alpha(s) * P(fragment) over incoming
// edges, in topological order. alpha(s_T) equals the tree probability.
inline void forward(Trellis& trellis, const Stsg& g) {
  for (TrellisState& s : trellis.states) s.log_alpha = kLogZero;
  trellis.states[0].log_alpha = 0.0;
  for (const TrellisEdge& e : trellis.edges) {
    TrellisState& to = trellis.states[e.to];
    to.log_alpha = log_add(to.log_alpha,
                           trellis.states[e.from].log_alpha + g.entry(e.fragment_id).logp);
  }
}

// beta(s_T) = alpha(s_T); beta(s) accumulates beta(s') * P(fragment) over
// outgoing edges, in reverse topological order.
inline void backward(Trellis& trellis, const Stsg& g) {
  for (TrellisState& s : trellis.states) s.log_beta = kLogZero;
  trellis.states[trellis.goal].log_beta = trellis.states[trellis.goal].log_alpha;
  for (auto it = trellis.edges.rbegin(); it != trellis.edges.rend(); ++it) {
    TrellisState& from = trellis.states[it->from];
    from.log_beta = log_add(from.log_beta,
                            trellis.states[it->to].log_beta + g.entry(it->fragment_id).logp);
  }
}

namespace detail {

// Posterior fragment usage for one tree: every edge contributes
// beta(s_f) * alpha(s_b) * P(t) / alpha(goal)^2, which with the beta
// convention above is P(D uses this edge | T). Returns log alpha(goal).
inline double accumulate_expected_counts(Trellis& trellis, const Stsg& g,
                                         std::vector<double>& counts) {
  forward(trellis, g);
  backward(trellis, g);
  const double log_goal = trellis.states[trellis.goal].log_alpha;
  if (log_goal == kLogZero) throw std::runtime_error("tree not derivable under the grammar");
  for (const TrellisEdge& e : trellis.edges) {
    const double lp = trellis.states[e.from].log_alpha + g.entry(e.fragment_id).logp +
                      trellis.states[e.to].log_beta - 2.0 * log_goal;
    counts[e.fragment_id] += std::exp(lp);
  }
  return log_goal;
}

}  // namespace detail

// Expected fragment counts over a corpus, id-aligned with g's entries.
inline std::vector<double> expected_count_vector(const std::vector<ParseTree>& corpus,
                                                 const Stsg& g) {
  std::vector<double> counts(g.size(), 0.0);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    try {
      Trellis trellis = build_trellis(corpus[i], g);
      detail::accumulate_expected_counts(trellis, g, counts);
    } catch (const std::exception& e) {
      throw std::runtime_error("tree " + std::to_string(i) + ": " + e.what());
    }
  }
  return counts;
}

inline std::map<std::string, double> expected_counts(const std::vector<ParseTree>& corpus,
                                                     const Stsg& g) {
  const auto counts = expected_count_vector(corpus, g);
  std::map<std::string, double> out;
  for (std::size_t id = 0; id < g.size(); ++id)
    out.emplace(g.entry(id).fragment.canonical_key, counts[id]);
  return out;
}

// P'(t | r(t)) = ct(t) / ct(r(t)); zero-count fragments are dropped.
inline Stsg reestimate(const Stsg& g, const std::vector<double>& counts) {
  if (counts.size() != g.size()) throw std::invalid_argument("reestimate: count vector mismatch");
  std::map<Label, double> root_totals;
  for (std::size_t id = 0; id < g.size(); ++id) {
    if (counts[id] < 0.0)
      throw std::runtime_error("negative count for " + g.entry(id).fragment.canonical_key);
    root_totals[g.entry(id).fragment.root()] += counts[id];
  }
  // roots still required by surviving sites (or as the start) need mass
  std::vector<double> probs(g.size(), 0.0);
  for (std::size_t id = 0; id < g.size(); ++id) {
    if (counts[id] == 0.0) continue;
    const double total = root_totals.at(g.entry(id).fragment.root());
    probs[id] = counts[id] / total;
    for (const FrontierSym& s : g.entry(id).frontier)
      if (!s.is_word && root_totals.at(s.site) == 0.0)
        throw std::runtime_error("zero total count for required root '" + s.site.token() + "'");
  }
  if (root_totals.at(g.start_label()) == 0.0)
    throw std::runtime_error("zero total count for start label '" + g.start_label().token() + "'");
  return g.reweighted(probs);
}

inline Stsg reestimate(const Stsg& g, const std::map<std::string, double>& counts) {
  std::vector<double> v(g.size(), 0.0);
  for (const auto& [key, c] : counts) {
    const auto id = g.find(key);
    if (!id) throw std::runtime_error("unknown fragment " + key);
    v[*id] = c;
  }
  return reestimate(g, v);
}

// mean negative log2 tree probability
inline double cross_entropy(const std::vector<ParseTree>& corpus, const Stsg& g) {
  if (corpus.empty()) throw std::invalid_argument("cross_entropy: empty corpus");
  double bits = 0.0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const double lp = tree_logprob(corpus[i], g);
    if (lp == kLogZero)
      throw std::runtime_error("tree " + std::to_string(i) + " not derivable under the grammar");
    bits += -lp / std::log(2.0);
  }
  return bits / static_cast<double>(corpus.size());
}

struct TrainState {
  Stsg grammar;
  std::size_t iterations = 0;
  double cross_entropy_bits = std::numeric_limits<double>::quiet_NaN();
  // cross-entropy of g_0, g_1, ..., g_k in bits per tree
  std::vector<double> history;
};

// EM loop: alternate expected counts and per-root renormalization until the
// drop in cross-entropy falls below tol_bits or max_iter iterations ran.
// Trellis structures are built once per tree; only probabilities change
// between iterations while the fragment inventory is stable.
inline TrainState train(const std::vector<ParseTree>& corpus, Stsg g0, double tol_bits,
                        std::size_t max_iter, std::ostream* log = nullptr,
                        const std::function<void(std::size_t, const Stsg&)>& checkpoint = nullptr) {
  if (tol_bits <= 0.0) throw std::invalid_argument("train: tol must be positive");
  if (corpus.empty()) throw std::invalid_argument("train: empty corpus");
  TrainState state{std::move(g0), 0, std::numeric_limits<double>::quiet_NaN(), {}};
  if (max_iter == 0) return state;

  const double ln2 = std::log(2.0);
  std::vector<Trellis> trellises;
  trellises.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    try {
      trellises.push_back(build_trellis(corpus[i], state.grammar));
    } catch (const std::exception& e) {
      throw std::runtime_error("tree " + std::to_string(i) + ": " + e.what());
    }
  }

  auto e_step = [&](const Stsg& g, std::vector<double>& counts) {
    counts.assign(g.size(), 0.0);
    double bits = 0.0;
    for (Trellis& trellis : trellises)
      bits += -detail::accumulate_expected_counts(trellis, g, counts) / ln2;
    return bits / static_cast<double>(corpus.size());
  };

  std::vector<double> counts;
  double prev_ce = e_step(state.grammar, counts);
  state.history.push_back(prev_ce);
  if (log) *log << "iter 0 cross_entropy_bits " << format_g17(prev_ce) << '\n';

  for (std::size_t iter = 1; iter <= max_iter; ++iter) {
    Stsg next = reestimate(state.grammar, counts);
    const bool support_changed = next.size() != state.grammar.size();
    state.grammar = std::move(next);
    if (support_changed) {
      trellises.clear();
      for (const ParseTree& t : corpus) trellises.push_back(build_trellis(t, state.grammar));
    }
    const double ce = e_step(state.grammar, counts);
    if (ce > prev_ce + 1e-9)
      throw std::logic_error("EM cross-entropy increased from " + format_g17(prev_ce) + " to " +
                             format_g17(ce));
    state.history.push_back(ce);
    state.iterations = iter;
    state.cross_entropy_bits = ce;
    if (log) *log << "iter " << iter << " cross_entropy_bits " << format_g17(ce) << '\n';
    if (checkpoint) checkpoint(iter, state.grammar);
    const double drop = prev_ce - ce;
    prev_ce = ce;
    if (drop < tol_bits) break;
  }
  return state;
}

}  // namespace dop
