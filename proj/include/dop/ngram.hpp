#pragma once

// Katz back-off n-gram language model with Good-Turing discounting, ARPA
// import/export and exact Viterbi decoding over word lattices.
//
// Counts are taken over sentences padded with n-1 start symbols and one end
// symbol; windows ending in the start symbol are never events. Good-Turing
// discount ratios are estimated per order for counts up to the k_GT
// threshold; where the Turing estimate is unusable on sparse count tables
// (a zero count-of-counts or a ratio outside (0,1]) the discount falls back
// to r/(r+1), which always frees back-off mass. Probabilities and back-off
// weights are stored as log10 values, matching the ARPA text format.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "dop/decoder.hpp"
#include "dop/util.hpp"
#include "dop/wordgraph.hpp"

namespace dop {

inline constexpr const char* kSentStart = "<s>";
inline constexpr const char* kSentEnd = "</s>";
inline constexpr const char* kUnknown = "<unk>";

// floor applied to any conditional probability at query time
inline constexpr double kLog10Floor = -30.0;

class NgramModel {
 public:
  NgramModel() = default;
  explicit NgramModel(int order) : order_(order), logp_(order), bow_(order) {
    if (order < 1) throw std::invalid_argument("ngram order must be >= 1");
  }

  int order() const { return order_; }

  // event vocabulary: every unigram except <s>, plus <unk>
  std::vector<std::string> vocabulary() const {
    std::vector<std::string> v;
    for (const auto& [w, lp] : logp_[0])
      if (w != kSentStart) v.push_back(w);
    if (!logp_[0].count(kUnknown)) v.push_back(kUnknown);
    return v;
  }

  bool known_word(const std::string& w) const { return logp_[0].count(w) != 0; }

  void set_logp(const std::vector<std::string>& gram, double lp10) {
    logp_.at(gram.size() - 1)[key(gram)] = lp10;
  }
  void set_bow(const std::vector<std::string>& context, double bow10) {
    bow_.at(context.size() - 1)[key(context)] = bow10;
  }

  // log10 P(word | context); unknown words map to <unk>, and the result is
  // floored so sentences always score finite
  double logp10_word(const std::vector<std::string>& context, const std::string& word) const {
    std::vector<std::string> ctx;
    const std::size_t keep =
        std::min(context.size(), static_cast<std::size_t>(order_ - 1));
    for (std::size_t i = context.size() - keep; i < context.size(); ++i)
      ctx.push_back(map_word(context[i]));
    const double lp = katz(ctx, map_word(word));
    return std::max(lp, kLog10Floor);
  }

  double logprob_word(const std::vector<std::string>& context, const std::string& word) const {
    return logp10_word(context, word) * std::log(10.0);
  }

  // natural-log probability of the padded sentence, end symbol included
  double logprob_sentence(const std::vector<std::string>& words) const {
    std::vector<std::string> stream(static_cast<std::size_t>(order_ - 1), kSentStart);
    stream.insert(stream.end(), words.begin(), words.end());
    stream.push_back(kSentEnd);
    double lp10 = 0.0;
    for (std::size_t i = static_cast<std::size_t>(order_ - 1); i < stream.size(); ++i) {
      const std::vector<std::string> ctx(stream.begin() + (i - (order_ - 1)), stream.begin() + i);
      lp10 += logp10_word(ctx, stream[i]);
    }
    return lp10 * std::log(10.0);
  }

  const std::map<std::string, double>& logp_table(int k) const { return logp_.at(k - 1); }
  const std::map<std::string, double>& bow_table(int k) const { return bow_.at(k - 1); }

  static std::string key(const std::vector<std::string>& gram) {
    std::string out;
    for (std::size_t i = 0; i < gram.size(); ++i) {
      if (i) out += '\x1f';
      out += gram[i];
    }
    return out;
  }
  static std::vector<std::string> unkey(const std::string& k) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
      const auto sep = k.find('\x1f', start);
      out.push_back(k.substr(start, sep - start));
      if (sep == std::string::npos) break;
      start = sep + 1;
    }
    return out;
  }

 private:
  std::string map_word(const std::string& w) const {
    return known_word(w) ? w : std::string(kUnknown);
  }

  double katz(const std::vector<std::string>& ctx, const std::string& word) const {
    if (ctx.empty()) {
      const auto it = logp_[0].find(word);
      return it != logp_[0].end() ? it->second : kLogZero;
    }
    std::vector<std::string> gram = ctx;
    gram.push_back(word);
    const auto& table = logp_[ctx.size()];
    const auto it = table.find(key(gram));
    if (it != table.end()) return it->second;
    const std::vector<std::string> shorter(ctx.begin() + 1, ctx.end());
    const auto& bows = bow_[ctx.size() - 1];
    const auto bit = bows.find(key(ctx));
    const double bow = bit != bows.end() ? bit->second : 0.0;  // unseen context: weight 1
    return bow + katz(shorter, word);
  }

  int order_ = 0;
  std::vector<std::map<std::string, double>> logp_;  // [k-1]: k-gram -> log10 prob
  std::vector<std::map<std::string, double>> bow_;   // [k-1]: k-gram context -> log10 bow
};

namespace detail {

// Katz/Good-Turing discount ratios d_r for r = 1..k_gt; d_r = 1 past k_gt.
inline std::vector<double> discount_ratios(const std::map<std::int64_t, std::int64_t>& n_r,
                                           int k_gt) {
  std::vector<double> d(static_cast<std::size_t>(k_gt) + 1, 1.0);
  const auto count_of = [&](std::int64_t r) -> double {
    const auto it = n_r.find(r);
    return it == n_r.end() ? 0.0 : static_cast<double>(it->second);
  };
  const double n1 = count_of(1);
  const double a = n1 > 0.0 ? (k_gt + 1) * count_of(k_gt + 1) / n1 : 0.0;
  for (int r = 1; r <= k_gt; ++r) {
    double dr = 0.0;
    bool valid = false;
    if (count_of(r) > 0.0 && count_of(r + 1) > 0.0 && a < 1.0) {
      const double turing = (r + 1) * count_of(r + 1) / count_of(r) / r;
      dr = (turing - a) / (1.0 - a);
      valid = dr > 0.0 && dr <= 1.0;
    }
    d[static_cast<std::size_t>(r)] = valid ? dr : static_cast<double>(r) / (r + 1);
  }
  return d;
}

}  // namespace detail

// Train a Katz back-off model of the given order. Counts of at most k_gt are
// Good-Turing discounted; the freed unigram mass becomes P(<unk>). With
// map_singletons, words seen once in training are replaced by <unk> first.
inline NgramModel train_katz(const std::vector<std::vector<std::string>>& corpus, int order = 3,
                             int k_gt = 5, bool map_singletons = false) {
  if (corpus.empty()) throw std::invalid_argument("train_katz: empty corpus");
  if (order < 1 || k_gt < 0) throw std::invalid_argument("train_katz: bad parameters");

  std::map<std::string, std::int64_t> word_freq;
  for (const auto& sent : corpus)
    for (const auto& w : sent) {
      if (w == kSentStart || w == kSentEnd || w == kUnknown)
        throw std::invalid_argument("train_katz: reserved token '" + w + "' in corpus");
      ++word_freq[w];
    }
  auto map_token = [&](const std::string& w) -> std::string {
    if (map_singletons) {
      const auto it = word_freq.find(w);
      if (it != word_freq.end() && it->second == 1) return kUnknown;
    }
    return w;
  };

  // event k-gram counts (windows not ending in <s>) and context totals
  std::vector<std::map<std::string, std::int64_t>> counts(order);
  std::vector<std::map<std::string, std::int64_t>> context_totals(order);  // [k-1] for order-k events
  for (const auto& sent : corpus) {
    std::vector<std::string> stream(static_cast<std::size_t>(order - 1), kSentStart);
    for (const auto& w : sent) stream.push_back(map_token(w));
    stream.push_back(kSentEnd);
    for (int k = 1; k <= order; ++k) {
      for (std::size_t i = 0; i + k <= stream.size(); ++i) {
        if (stream[i + k - 1] == kSentStart) continue;
        const std::vector<std::string> gram(stream.begin() + i, stream.begin() + i + k);
        ++counts[k - 1][NgramModel::key(gram)];
        if (k > 1) {
          const std::vector<std::string> ctx(gram.begin(), gram.end() - 1);
          ++context_totals[k - 1][NgramModel::key(ctx)];
        }
      }
    }
  }
  std::int64_t total_events = 0;
  for (const auto& [w, c] : counts[0]) total_events += c;

  std::vector<std::vector<double>> discounts(order);
  for (int k = 1; k <= order; ++k) {
    std::map<std::int64_t, std::int64_t> n_r;
    for (const auto& [gram, c] : counts[k - 1]) ++n_r[c];
    discounts[k - 1] = detail::discount_ratios(n_r, k_gt);
  }
  auto discounted = [&](int k, std::int64_t c) -> double {
    const auto& d = discounts[k - 1];
    const double ratio = c <= k_gt ? d[static_cast<std::size_t>(c)] : 1.0;
    return ratio * static_cast<double>(c);
  };

  NgramModel model(order);
  // unigrams: freed mass becomes <unk>
  double uni_mass = 0.0;
  for (const auto& [w, c] : counts[0]) {
    const double p = discounted(1, c) / static_cast<double>(total_events);
    uni_mass += p;
    model.set_logp({w}, std::log10(p));
  }
  const double unk_mass = 1.0 - uni_mass;
  model.set_logp({kUnknown}, unk_mass > 0.0 ? std::log10(unk_mass) : kLog10Floor * 2);
  model.set_logp({kSentStart}, -99.0);  // never predicted; ARPA placeholder

  for (int k = 2; k <= order; ++k) {
    for (const auto& [key, c] : counts[k - 1]) {
      const auto gram = NgramModel::unkey(key);
      const std::vector<std::string> ctx(gram.begin(), gram.end() - 1);
      const double denom = static_cast<double>(context_totals[k - 1].at(NgramModel::key(ctx)));
      model.set_logp(gram, std::log10(discounted(k, c) / denom));
    }
    // back-off weights: for each context, the observed mass at this order and
    // the mass those continuations already hold one order down
    std::map<std::string, std::pair<double, double>> masses;  // ctx -> (seen, lower)
    for (const auto& [key, c] : counts[k - 1]) {
      const auto gram = NgramModel::unkey(key);
      const std::vector<std::string> ctx(gram.begin(), gram.end() - 1);
      const std::vector<std::string> shorter_ctx(ctx.begin() + 1, ctx.end());
      auto& m = masses[NgramModel::key(ctx)];
      m.first += std::pow(10.0, model.logp_table(k).at(key));
      m.second += std::pow(10.0, model.logp10_word(shorter_ctx, gram.back()));
    }
    // A context whose continuations already own all the lower-order mass has
    // nowhere to back off to; its freed mass is rescaled back onto the seen
    // continuations so the distribution still sums to one.
    std::set<std::string> rescale;
    for (const auto& [ctx_key, m] : masses) {
      const double num = 1.0 - m.first;
      const double den = 1.0 - m.second;
      double bow10 = -99.0;
      if (num > 0.0 && den > 0.0)
        bow10 = std::log10(num / den);
      else if (num > 0.0)
        rescale.insert(ctx_key);
      model.set_bow(NgramModel::unkey(ctx_key), bow10);
    }
    if (!rescale.empty()) {
      for (const auto& [key, c] : counts[k - 1]) {
        const auto gram = NgramModel::unkey(key);
        const std::vector<std::string> ctx(gram.begin(), gram.end() - 1);
        const std::string ctx_key = NgramModel::key(ctx);
        if (rescale.count(ctx_key))
          model.set_logp(gram, model.logp_table(k).at(key) -
                                   std::log10(masses.at(ctx_key).first));
      }
    }
  }
  return model;
}

// --- ARPA text format --------------------------------------------------------

inline void write_arpa(std::ostream& out, const NgramModel& model) {
  out << "\\data\\\n";
  for (int k = 1; k <= model.order(); ++k)
    out << "ngram " << k << "=" << model.logp_table(k).size() << '\n';
  for (int k = 1; k <= model.order(); ++k) {
    out << "\n\\" << k << "-grams:\n";
    for (const auto& [key, lp] : model.logp_table(k)) {
      out << format_g17(lp);
      for (const auto& w : NgramModel::unkey(key)) out << ' ' << w;
      if (k < model.order()) {
        const auto& bows = model.bow_table(k);
        const auto it = bows.find(key);
        if (it != bows.end()) out << '\t' << format_g17(it->second);
      }
      out << '\n';
    }
  }
  out << "\n\\end\\\n";
}

inline NgramModel read_arpa(std::istream& in) {
  std::string line;
  int order = 0;
  // header: count the ngram k=... lines
  while (std::getline(in, line)) {
    const auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks[0] == "\\data\\") continue;
    if (toks[0] == "ngram") {
      ++order;
      continue;
    }
    break;  // first \k-grams: marker
  }
  if (order < 1) throw std::runtime_error("ARPA: missing \\data\\ header");
  NgramModel model(order);
  int section = 0;
  auto parse_marker = [&](const std::string& tok) -> std::optional<int> {
    if (tok.size() < 8 || tok.front() != '\\' || tok.substr(tok.size() - 7) != "-grams:")
      return std::nullopt;
    return std::stoi(tok.substr(1, tok.size() - 8));
  };
  if (auto k = parse_marker(split_ws(line)[0])) section = *k;
  while (std::getline(in, line)) {
    const auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks[0] == "\\end\\") break;
    if (auto k = parse_marker(toks[0])) {
      section = *k;
      continue;
    }
    if (section < 1 || section > order) throw std::runtime_error("ARPA: entry outside a section");
    // log10p w1..wk [bow]
    const bool has_bow = toks.size() == static_cast<std::size_t>(section) + 2;
    if (!has_bow && toks.size() != static_cast<std::size_t>(section) + 1)
      throw std::runtime_error("ARPA: malformed entry '" + line + "'");
    const std::vector<std::string> gram(toks.begin() + 1, toks.begin() + 1 + section);
    model.set_logp(gram, std::stod(toks[0]));
    if (has_bow) model.set_bow(gram, std::stod(toks.back()));
  }
  return model;
}

inline NgramModel read_arpa_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open ARPA file '" + path + "'");
  return read_arpa(in);
}

// --- lattice decoding --------------------------------------------------------

// Exact Viterbi over the lattice expanded with (order-1)-word context states;
// path score is the LM log probability plus the weighted acoustic scores.
inline DecodeResult ngram_best_string(const WordGraph& graph, const NgramModel& model,
                                      std::optional<double> acoustic_weight = std::nullopt) {
  const double w_ac = acoustic_weight.value_or(graph.has_acoustics() ? 1.0 : 0.0);
  const double ln10 = std::log(10.0);

  struct State {
    double score = kLogZero;
    std::vector<std::string> yield;
  };
  // (node, context key) -> best prefix
  std::vector<std::map<std::string, std::pair<std::vector<std::string>, State>>> at(
      graph.node_count);
  {
    const std::vector<std::string> ctx0(static_cast<std::size_t>(model.order() - 1), kSentStart);
    at[graph.start][NgramModel::key(ctx0)] = {ctx0, State{0.0, {}}};
  }
  auto relax = [](State& slot, State cand) {
    if (cand.score > slot.score || (cand.score == slot.score && cand.yield < slot.yield))
      slot = std::move(cand);
  };
  for (int v : graph.topo_order) {
    for (const auto& [ctx_key, entry] : at[v]) {
      const auto& [ctx, state] = entry;
      if (state.score == kLogZero) continue;
      for (const WordArc& arc : graph.arcs) {
        if (arc.from != v) continue;
        State next;
        next.score = state.score + model.logp10_word(ctx, arc.word) * ln10 +
                     w_ac * arc.acoustic_logp.value_or(0.0);
        next.yield = state.yield;
        next.yield.push_back(arc.word);
        std::vector<std::string> nctx = ctx;
        nctx.push_back(model.known_word(arc.word) ? arc.word : kUnknown);
        nctx.erase(nctx.begin());
        auto [it, fresh] =
            at[arc.to].try_emplace(NgramModel::key(nctx), std::make_pair(nctx, State{}));
        relax(it->second.second, std::move(next));
      }
    }
  }
  State best;
  for (const auto& [ctx_key, entry] : at[graph.end]) {
    const auto& [ctx, state] = entry;
    if (state.score == kLogZero) continue;
    State final = state;
    final.score += model.logp10_word(ctx, kSentEnd) * ln10;
    relax(best, std::move(final));
  }
  if (best.score == kLogZero) throw std::runtime_error("ngram_best_string: end node unreachable");
  DecodeResult out;
  out.best_string = best.yield;
  out.string_logprob = best.score;
  out.derivations_used = 1;
  out.fallback_used = false;
  return out;
}

}  // namespace dop
