#pragma once

// Chart parsing of strings and word-graphs with an STSG, and the n-best
// derivation machinery built on top of it.
//
// Each fragment is matched through its frontier sequence, one symbol at a
// time: an active item records a fragment, how many frontier symbols it has
// consumed and the lattice span covered so far; finishing the frontier adds
// the fragment's whole probability once and yields a complete item

// (span, root label). Complete items feed both the site symbols of other
// fragments and the k-best extraction, which walks the packed item forest
// lazily and exactly. A string is parsed as its linear lattice.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "dop/stsg.hpp"
#include "dop/util.hpp"
#include "dop/wordgraph.hpp"

namespace dop {

inline constexpr std::size_t kAllDerivations = std::numeric_limits<std::size_t>::max();

struct ScoredDerivation {
  Derivation derivation;
  double logprob = kLogZero;       // grammar log probability
  std::vector<std::size_t> arcs;   // lattice arcs consumed, left to right
  double acoustic_logp = 0.0;      // sum of the consumed arcs' scores
  std::vector<std::string> yield;
};

struct DecodeResult {
  std::vector<std::string> best_string;
  double string_logprob = kLogZero;
  std::size_t derivations_used = 0;
  bool fallback_used = false;
};

class Chart {
 public:
  struct ActiveEdge {
    enum Kind { kSeed, kWord, kSite } kind = kSeed;
    std::size_t prev = 0;      // previous active item
    std::size_t arc = 0;       // kWord
    std::size_t complete = 0;  // kSite
  };
  struct ActiveItem {
    std::size_t fragment_id = 0;
    std::size_t dot = 0;  // frontier symbols consumed
    int from = 0;
    int at = 0;
    std::vector<ActiveEdge> edges;
  };
  struct CompleteEdge {
    std::size_t fragment_id = 0;
    std::size_t active = 0;  // fully-consumed active item
  };
  struct CompleteItem {
    int from = 0;
    int to = 0;
    Label label;
    std::vector<CompleteEdge> edges;
  };

  Chart(WordGraph graph, const Stsg& grammar) : graph_(std::move(graph)), grammar_(&grammar) {
    build();
  }

  const WordGraph& graph() const { return graph_; }
  const Stsg& grammar() const { return *grammar_; }
  const std::vector<ActiveItem>& active_items() const { return active_; }
  const std::vector<CompleteItem>& complete_items() const { return complete_; }

  std::optional<std::size_t> find_complete(int from, int to, const Label& l) const {
    const auto it = complete_index_.find(std::make_tuple(from, to, l));
    if (it == complete_index_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<std::size_t> goal() const {
    return find_complete(graph_.start, graph_.end, grammar_->start_label());
  }

 private:
  void build();

  WordGraph graph_;
  const Stsg* grammar_;
  std::vector<ActiveItem> active_;
  std::vector<CompleteItem> complete_;
  std::map<std::tuple<std::size_t, std::size_t, int, int>, std::size_t> active_index_;
  std::map<std::tuple<int, int, Label>, std::size_t> complete_index_;

  friend class KBestExtractor;
  friend class ForestSums;
};

inline void Chart::build() {
  const Stsg& g = *grammar_;
  std::vector<std::vector<std::size_t>> arcs_from(graph_.node_count);
  for (std::size_t a = 0; a < graph_.arcs.size(); ++a)
    arcs_from[graph_.arcs[a].from].push_back(a);

  std::map<std::string, std::vector<std::size_t>> first_word;
  std::map<Label, std::vector<std::size_t>> first_site;
  for (std::size_t id = 0; id < g.size(); ++id) {
    const FrontierSym& s = g.entry(id).frontier.front();
    if (s.is_word)
      first_word[s.word].push_back(id);
    else
      first_site[s.site].push_back(id);
  }

  std::map<std::pair<int, Label>, std::vector<std::size_t>> awaiting;  // active, by (at, site)
  std::map<std::pair<int, Label>, std::vector<std::size_t>> complete_by_start;
  std::set<std::pair<std::size_t, int>> seeded;  // (fragment, node)

  enum class Task : std::uint8_t { kActive, kComplete };
  std::vector<std::pair<Task, std::size_t>> worklist;

  auto make_active = [&](std::size_t fid, std::size_t dot, int from, int at,
                         const ActiveEdge& edge) {
    const auto key = std::make_tuple(fid, dot, from, at);
    auto [it, fresh] = active_index_.try_emplace(key, active_.size());
    if (fresh) {
      active_.push_back({fid, dot, from, at, {}});
      worklist.push_back({Task::kActive, it->second});
    }
    active_[it->second].edges.push_back(edge);
  };
  auto seed = [&](std::size_t fid, int node) {
    if (!seeded.insert({fid, node}).second) return;
    make_active(fid, 0, node, node, ActiveEdge{ActiveEdge::kSeed, 0, 0, 0});
  };

  for (std::size_t a = 0; a < graph_.arcs.size(); ++a) {
    const auto it = first_word.find(graph_.arcs[a].word);
    if (it == first_word.end()) continue;
    for (std::size_t fid : it->second) seed(fid, graph_.arcs[a].from);
  }

  auto extend_over_site = [&](std::size_t active_id, std::size_t complete_id) {
    const ActiveItem& a = active_[active_id];
    make_active(a.fragment_id, a.dot + 1, a.from, complete_[complete_id].to,
                ActiveEdge{ActiveEdge::kSite, active_id, 0, complete_id});
  };

  while (!worklist.empty()) {
    const auto [task, id] = worklist.back();
    worklist.pop_back();
    if (task == Task::kActive) {
      const std::size_t fid = active_[id].fragment_id;
      const std::size_t dot = active_[id].dot;
      const int from = active_[id].from;
      const int at = active_[id].at;
      const auto& frontier = g.entry(fid).frontier;
      if (dot == frontier.size()) {
        const Label& root = g.entry(fid).fragment.root();
        const auto key = std::make_tuple(from, at, root);
        auto [it, fresh] = complete_index_.try_emplace(key, complete_.size());
        if (fresh) {
          complete_.push_back({from, at, root, {}});
          complete_by_start[{from, root}].push_back(it->second);
          worklist.push_back({Task::kComplete, it->second});
        }
        complete_[it->second].edges.push_back({fid, id});
        continue;
      }
      const FrontierSym& need = frontier[dot];
      if (need.is_word) {
        for (std::size_t a : arcs_from[at])
          if (graph_.arcs[a].word == need.word)
            make_active(fid, dot + 1, from, graph_.arcs[a].to,
                        ActiveEdge{ActiveEdge::kWord, id, a, 0});
      } else {
        awaiting[{at, need.site}].push_back(id);
        const auto it = complete_by_start.find({at, need.site});
        if (it != complete_by_start.end()) {
          const auto snapshot = it->second;  // growth happens via the worklist only
          for (std::size_t cid : snapshot) extend_over_site(id, cid);
        }
      }
    } else {
      const std::size_t cid = id;
      const int from = complete_[cid].from;
      const Label label = complete_[cid].label;
      const auto sit = first_site.find(label);
      if (sit != first_site.end())
        for (std::size_t fid : sit->second) seed(fid, from);
      const auto ait = awaiting.find({from, label});
      if (ait != awaiting.end()) {
        const auto snapshot = ait->second;
        for (std::size_t aid : snapshot) extend_over_site(aid, cid);
      }
    }
  }
}

// --- exact k-best over the packed chart -------------------------------------

class KBestExtractor {
 public:
  explicit KBestExtractor(const Chart& chart) : chart_(chart) {
    active_.resize(chart.active_items().size());
    complete_.resize(chart.complete_items().size());
  }

  struct Entry {
    double score = 0.0;
    std::vector<std::uint32_t> frags;  // fragment ids, derivation preorder
    std::vector<std::uint32_t> arcs;   // consumed arcs, left to right
  };

  // k-th best derivation entry of a complete item, nullptr when exhausted
  const Entry* complete_entry(std::size_t item, std::size_t k) {
    return get(complete_[item], k, true, item);
  }

 private:
  struct Candidate {
    Entry entry;
    std::size_t edge = 0;
    std::vector<std::uint32_t> ranks;
  };
  struct CandOrder {
    // priority queue: best = highest score, ties by canonical sequence
    bool operator()(const Candidate& a, const Candidate& b) const {
      if (a.entry.score != b.entry.score) return a.entry.score < b.entry.score;
      if (a.entry.frags != b.entry.frags) return a.entry.frags > b.entry.frags;
      return a.entry.arcs > b.entry.arcs;
    }
  };
  struct NodeState {
    bool inited = false;
    std::vector<Entry> sorted;
    std::priority_queue<Candidate, std::vector<Candidate>, CandOrder> cands;
    std::set<std::pair<std::size_t, std::vector<std::uint32_t>>> seen;
  };

  // tails of an edge, in the order their sub-derivations are concatenated
  template <typename PushTail>
  void edge_tails(bool is_complete, std::size_t item, std::size_t edge, PushTail push) const {
    if (is_complete) {
      push(false, chart_.complete_items()[item].edges[edge].active);
      return;
    }
    const Chart::ActiveEdge& e = chart_.active_items()[item].edges[edge];
    if (e.kind == Chart::ActiveEdge::kSeed) return;
    push(false, e.prev);
    if (e.kind == Chart::ActiveEdge::kSite) push(true, e.complete);
  }

  std::optional<Candidate> build_candidate(bool is_complete, std::size_t item, std::size_t edge,
                                           std::vector<std::uint32_t> ranks) {
    Candidate cand;
    cand.edge = edge;
    Entry& out = cand.entry;
    if (is_complete) {
      const auto fid = chart_.complete_items()[item].edges[edge].fragment_id;
      out.score = chart_.grammar().entry(fid).logp;
      out.frags.push_back(static_cast<std::uint32_t>(fid));
    }
    std::size_t i = 0;
    bool ok = true;
    edge_tails(is_complete, item, edge, [&](bool tail_complete, std::size_t tail) {
      if (!ok) return;
      const Entry* sub = tail_complete ? get(complete_[tail], ranks[i], true, tail)
                                       : get(active_[tail], ranks[i], false, tail);
      ++i;
      if (!sub) {
        ok = false;
        return;
      }
      out.score += sub->score;
      out.frags.insert(out.frags.end(), sub->frags.begin(), sub->frags.end());
      out.arcs.insert(out.arcs.end(), sub->arcs.begin(), sub->arcs.end());
    });
    if (!ok) return std::nullopt;
    if (!is_complete) {
      const Chart::ActiveEdge& e = chart_.active_items()[item].edges[edge];
      if (e.kind == Chart::ActiveEdge::kWord) out.arcs.push_back(static_cast<std::uint32_t>(e.arc));
    }
    cand.ranks = std::move(ranks);
    return cand;
  }

  const Entry* get(NodeState& st, std::size_t k, bool is_complete, std::size_t item) {
    while (st.sorted.size() <= k) {
      if (!st.inited) {
        st.inited = true;
        const std::size_t n_edges = is_complete ? chart_.complete_items()[item].edges.size()
                                                : chart_.active_items()[item].edges.size();
        for (std::size_t e = 0; e < n_edges; ++e) {
          std::size_t tails = 0;
          edge_tails(is_complete, item, e, [&](bool, std::size_t) { ++tails; });
          std::vector<std::uint32_t> ranks(tails, 0);
          if (st.seen.insert({e, ranks}).second)
            if (auto cand = build_candidate(is_complete, item, e, ranks)) st.cands.push(std::move(*cand));
        }
      }
      if (st.cands.empty()) return nullptr;
      Candidate best = st.cands.top();
      st.cands.pop();
      for (std::size_t i = 0; i < best.ranks.size(); ++i) {
        std::vector<std::uint32_t> next = best.ranks;
        ++next[i];
        if (st.seen.insert({best.edge, next}).second)
          if (auto cand = build_candidate(is_complete, item, best.edge, next))
            st.cands.push(std::move(*cand));
      }
      st.sorted.push_back(std::move(best.entry));
    }
    return &st.sorted[k];
  }

  const Chart& chart_;
  std::vector<NodeState> active_;
  std::vector<NodeState> complete_;
};

// --- forest sums: inside probability and derivation counts ------------------

class ForestSums {
 public:
  explicit ForestSums(const Chart& chart) : chart_(chart) {
    active_inside_.assign(chart.active_items().size(), kUnset);
    complete_inside_.assign(chart.complete_items().size(), kUnset);
    active_count_.assign(chart.active_items().size(), -1.0);
    complete_count_.assign(chart.complete_items().size(), -1.0);
  }

  double complete_inside(std::size_t item) {
    if (complete_inside_[item] == kUnset) {
      double total = kLogZero;
      for (const auto& e : chart_.complete_items()[item].edges)
        total = log_add(total, chart_.grammar().entry(e.fragment_id).logp + active_inside(e.active));
      complete_inside_[item] = total;
    }
    return complete_inside_[item];
  }

  double complete_count(std::size_t item) {
    if (complete_count_[item] < 0.0) {
      double total = 0.0;
      for (const auto& e : chart_.complete_items()[item].edges) total += active_count(e.active);
      complete_count_[item] = total;
    }
    return complete_count_[item];
  }

 private:
  static constexpr double kUnset = 1.0;  // valid log probs are <= 0

  double active_inside(std::size_t item) {
    if (active_inside_[item] == kUnset) {
      double total = kLogZero;
      for (const auto& e : chart_.active_items()[item].edges) {
        switch (e.kind) {
          case Chart::ActiveEdge::kSeed:
            total = log_add(total, 0.0);
            break;
          case Chart::ActiveEdge::kWord:
            total = log_add(total, active_inside(e.prev));
            break;
          case Chart::ActiveEdge::kSite:
            total = log_add(total, active_inside(e.prev) + complete_inside(e.complete));
            break;
        }
      }
      active_inside_[item] = total;
    }
    return active_inside_[item];
  }

  double active_count(std::size_t item) {
    if (active_count_[item] < 0.0) {
      double total = 0.0;
      for (const auto& e : chart_.active_items()[item].edges) {
        switch (e.kind) {
          case Chart::ActiveEdge::kSeed:
            total += 1.0;
            break;
          case Chart::ActiveEdge::kWord:
            total += active_count(e.prev);
            break;
          case Chart::ActiveEdge::kSite:
            total += active_count(e.prev) * complete_count(e.complete);
            break;
        }
      }
      active_count_[item] = total;
    }
    return active_count_[item];
  }

  const Chart& chart_;
  std::vector<double> active_inside_, complete_inside_;
  std::vector<double> active_count_, complete_count_;
};

// --- public parsing entry points ---------------------------------------------

inline Chart parse_lattice(const WordGraph& graph, const Stsg& g) { return Chart(graph, g); }

inline Chart parse_string(const std::vector<std::string>& words, const Stsg& g) {
  if (words.empty()) throw std::invalid_argument("parse_string: empty word sequence");
  return Chart(linear_lattice(words), g);
}

namespace detail {

inline ScoredDerivation to_scored(const Chart& chart, const KBestExtractor::Entry& e) {
  ScoredDerivation out;
  out.logprob = e.score;
  for (std::uint32_t fid : e.frags)
    out.derivation.steps.push_back(chart.grammar().entry(fid).fragment);
  for (std::uint32_t a : e.arcs) {
    out.arcs.push_back(a);
    const WordArc& arc = chart.graph().arcs[a];
    out.yield.push_back(arc.word);
    if (arc.acoustic_logp) out.acoustic_logp += *arc.acoustic_logp;
  }
  return out;
}

}  // namespace detail

// The n most probable goal derivations, exact, best first; ties broken by the
// canonical fragment sequence. n = kAllDerivations extracts every derivation.
inline std::vector<ScoredDerivation> nbest_derivations(const Chart& chart, std::size_t n) {
  const auto goal = chart.goal();
  if (!goal) throw std::runtime_error("nbest_derivations: no goal item in chart");
  KBestExtractor kbest(chart);
  std::vector<ScoredDerivation> out;
  for (std::size_t k = 0; k < n; ++k) {
    const KBestExtractor::Entry* e = kbest.complete_entry(*goal, k);
    if (!e) break;
    out.push_back(detail::to_scored(chart, *e));
  }
  return out;
}

// Sum of all goal derivation probabilities: P(W) for the string/lattice.
inline double string_logprob(const std::vector<std::string>& words, const Stsg& g) {
  const Chart chart = parse_string(words, g);
  const auto goal = chart.goal();
  if (!goal) return kLogZero;
  return ForestSums(chart).complete_inside(*goal);
}

inline double string_prob(const std::vector<std::string>& words, const Stsg& g) {
  return std::exp(string_logprob(words, g));
}

namespace detail {

inline bool word_known(const Stsg& g, const std::string& w) {
  for (const auto& e : g.entries())
    for (const FrontierSym& s : e.frontier)
      if (s.is_word && s.word == w) return true;
  return false;
}

// Cover the lattice with complete items, preferring fewer items and then a
// higher probability; each item contributes its best derivation.
inline DecodeResult fallback_core(const Chart& chart, std::size_t) {
  const WordGraph& graph = chart.graph();
  KBestExtractor kbest(chart);

  struct ItemBest {
    std::size_t item;
    double score;
    std::vector<std::string> yield;
  };
  std::vector<std::vector<ItemBest>> from_node(graph.node_count);
  for (std::size_t c = 0; c < chart.complete_items().size(); ++c) {
    const KBestExtractor::Entry* e = kbest.complete_entry(c, 0);
    if (!e) continue;
    ItemBest b{c, e->score, {}};
    for (std::uint32_t a : e->arcs) b.yield.push_back(graph.arcs[a].word);
    from_node[chart.complete_items()[c].from].push_back(std::move(b));
  }

  struct NodeBest {
    std::size_t items = 0;
    double score = 0.0;
    std::vector<std::string> yield;
    bool reached = false;
  };
  std::vector<NodeBest> best(graph.node_count);
  best[graph.start].reached = true;
  auto better = [](const NodeBest& a, const NodeBest& b) {
    if (a.items != b.items) return a.items < b.items;
    if (a.score != b.score) return a.score > b.score;
    return a.yield < b.yield;
  };
  for (int v : graph.topo_order) {
    if (!best[v].reached) continue;
    for (const ItemBest& ib : from_node[v]) {
      NodeBest cand;
      cand.items = best[v].items + 1;
      cand.score = best[v].score + ib.score;
      cand.yield = best[v].yield;
      cand.yield.insert(cand.yield.end(), ib.yield.begin(), ib.yield.end());
      cand.reached = true;
      NodeBest& target = best[chart.complete_items()[ib.item].to];
      if (!target.reached || better(cand, target)) target = std::move(cand);
    }
  }
  if (!best[graph.end].reached) {
    for (const WordArc& a : graph.arcs)
      if (!word_known(chart.grammar(), a.word))
        throw std::runtime_error("no partial-path cover: word '" + a.word + "' on arc " +
                                 std::to_string(a.from) + "->" + std::to_string(a.to) +
                                 " occurs in no grammar fragment");
    throw std::runtime_error("no partial-path cover: no item sequence spans the lattice");
  }
  DecodeResult out;
  out.best_string = best[graph.end].yield;
  out.string_logprob = best[graph.end].score;
  out.derivations_used = best[graph.end].items;
  out.fallback_used = true;
  return out;
}

}  // namespace detail

// Most probable word string by the n best derivations: group goal derivations
// by their yield, score each string by log(sum of derivation probabilities)
// plus the weighted acoustic score of the consumed arcs, and return the
// argmax. Without a full-path derivation, fall back to partial-path covers.
// acoustic_weight defaults to 1 when the lattice carries scores, else 0.
inline DecodeResult best_string(const WordGraph& graph, const Stsg& g, std::size_t n = 1000,
                                std::optional<double> acoustic_weight = std::nullopt) {
  if (graph.arcs.empty()) throw std::runtime_error("best_string: lattice has no words");
  if (n < 1) throw std::invalid_argument("best_string: n must be >= 1");
  const double w = acoustic_weight.value_or(graph.has_acoustics() ? 1.0 : 0.0);
  const Chart chart(graph, g);
  if (!chart.goal()) return detail::fallback_core(chart, n);

  const auto derivs = nbest_derivations(chart, n);
  std::map<std::string, std::pair<double, std::size_t>> by_string;  // joined yield -> (log mass, count)
  for (const ScoredDerivation& d : derivs) {
    auto [it, fresh] = by_string.try_emplace(join(d.yield), kLogZero, 0);
    it->second.first = log_add(it->second.first, d.logprob + w * d.acoustic_logp);
    ++it->second.second;
  }
  const auto winner = std::max_element(
      by_string.begin(), by_string.end(), [](const auto& a, const auto& b) {
        if (a.second.first != b.second.first) return a.second.first < b.second.first;
        return a.first > b.first;  // tie: lexicographically smaller string wins
      });
  DecodeResult out;
  out.best_string = split_ws(winner->first);
  out.string_logprob = winner->second.first;
  out.derivations_used = winner->second.second;
  out.fallback_used = false;
  return out;
}

inline DecodeResult fallback_partial(const WordGraph& graph, const Stsg& g, std::size_t n = 1000) {
  const Chart chart(graph, g);
  if (chart.goal())
    throw std::runtime_error("fallback_partial: lattice has a full-path derivation");
  return detail::fallback_core(chart, n);
}

}  // namespace dop
