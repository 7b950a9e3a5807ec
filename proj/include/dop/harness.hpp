#pragma once

// Experimental protocol: seeded 90/10 splits, per-split training of the
// 3-gram, relative-frequency DOP and EM-trained DOP models (plus the two
// ablations), lattice decoding, word-weighted WER and paired t-tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "dop/decoder.hpp"
#include "dop/em.hpp"
#include "dop/fragments.hpp"
#include "dop/ngram.hpp"
#include "dop/stsg.hpp"
#include "dop/tree.hpp"
#include "dop/util.hpp"
#include "dop/wordgraph.hpp"

namespace dop {

// --- word error rate ---------------------------------------------------------

struct EditCounts {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;

  std::size_t total() const { return substitutions + insertions + deletions; }
};

// Minimum-edit alignment with unit costs; ties prefer substitutions, then
// deletions, so the S/I/D split is deterministic.
inline EditCounts edit_counts(const std::vector<std::string>& ref,
                              const std::vector<std::string>& hyp) {
  const std::size_t m = ref.size(), n = hyp.size();
  std::vector<std::vector<std::size_t>> d(m + 1, std::vector<std::size_t>(n + 1, 0));
  for (std::size_t i = 0; i <= m; ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= n; ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= m; ++i)
    for (std::size_t j = 1; j <= n; ++j)
      d[i][j] = std::min({d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1),
                          d[i - 1][j] + 1, d[i][j - 1] + 1});
  EditCounts out;
  std::size_t i = m, j = n;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++out.substitutions;
      --i;
      --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      ++out.deletions;
      --i;
    } else {
      ++out.insertions;
      --j;
    }
  }
  return out;
}

inline double wer(const std::vector<std::string>& reference,
                  const std::vector<std::string>& hypothesis) {
  if (reference.empty()) throw std::invalid_argument("wer: empty reference");
  return static_cast<double>(edit_counts(reference, hypothesis).total()) /
         static_cast<double>(reference.size());
}

// --- paired t-test -----------------------------------------------------------

struct PairedT {
  double t = 0.0;
  bool significant = false;
};

namespace detail {

// two-tailed 0.05 critical values of Student's t for df = 1..30
inline double t_critical(std::size_t df) {
  static const double kTable[30] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306,
                                    2.262,  2.228, 2.201, 2.179, 2.160, 2.145, 2.131, 2.120,
                                    2.110,  2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064,
                                    2.060,  2.056, 2.052, 2.048, 2.045, 2.042};
  if (df == 0) return std::numeric_limits<double>::infinity();
  return df <= 30 ? kTable[df - 1] : 1.96;
}

}  // namespace detail

// t on the per-split differences. With zero variance the statistic is
// undefined: all-equal nonzero differences count as significant, all-zero
// differences do not.
inline PairedT paired_t(const std::vector<double>& wer_a, const std::vector<double>& wer_b) {
  if (wer_a.size() != wer_b.size()) throw std::invalid_argument("paired_t: length mismatch");
  const std::size_t n = wer_a.size();
  if (n < 2) throw std::invalid_argument("paired_t: need at least two pairs");
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = wer_a[i] - wer_b[i];
  double mean = 0.0;
  for (double x : d) mean += x;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double x : d) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  PairedT out;
  if (sd == 0.0) {
    out.t = mean == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    out.significant = mean != 0.0;
    return out;
  }
  out.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  out.significant = std::abs(out.t) > detail::t_critical(n - 1);
  return out;
}

// --- confusion lattices ------------------------------------------------------

// One lattice per reference: at each position the true word plus `distractors`
// distinct other words drawn from the pool. No acoustic scores, so decoding
// is a pure language-model decision.
inline WordGraph make_confusion_lattice(const std::vector<std::string>& words,
                                        const std::vector<std::string>& pool,
                                        std::size_t distractors, Rng& rng) {
  if (words.empty()) throw std::invalid_argument("make_confusion_lattice: empty reference");
  WordGraph g;
  g.node_count = static_cast<int>(words.size()) + 1;
  g.start = 0;
  g.end = static_cast<int>(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) {
    std::set<std::string> at_position{words[i]};
    std::size_t guard = 0;
    while (at_position.size() < distractors + 1 && guard++ < pool.size() * 4 + 64) {
      const std::string& cand = pool[rng.next_below(pool.size())];
      at_position.insert(cand);
    }
    for (const std::string& w : at_position)
      g.arcs.push_back({static_cast<int>(i), static_cast<int>(i) + 1, w, std::nullopt});
  }
  validate_wordgraph(g);
  return g;
}

inline std::vector<std::string> corpus_vocabulary(const std::vector<ParseTree>& trees) {
  std::set<std::string> vocab;
  for (const ParseTree& t : trees)
    for (const std::string& w : tree_yield(t)) vocab.insert(w);
  return {vocab.begin(), vocab.end()};
}

// --- experiment configuration and results ------------------------------------

struct ExperimentConfig {
  std::size_t splits = 10;
  double train_fraction = 0.9;
  int max_depth = 4;
  std::size_t nbest = 1000;
  double em_tol_bits = 1e-4;
  std::size_t em_max_iter = 30;
  std::uint64_t seed = 1;
  bool ablation_drop_multi_nonheadword = false;
  bool ablation_strip_semantics = false;
  std::size_t max_nonhead = 1;
  std::string head_rules_path;
  std::optional<double> acoustic_weight;  // default: 1 with scores, else 0

  void validate() const {
    if (splits == 0 || max_depth < 1 || nbest == 0 || em_tol_bits <= 0.0)
      throw std::invalid_argument("experiment config: counts must be positive");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
      throw std::invalid_argument("experiment config: train_fraction must be in (0,1)");
  }
};

struct ResultTable {
  std::vector<std::string> models;
  std::vector<std::vector<double>> split_wer;  // [model][split]
  std::vector<double> mean_wer;                // [model]
  struct Significance {
    std::string model_a, model_b;
    double t = 0.0;
    bool significant = false;
  };
  std::vector<Significance> pairs;
  ExperimentConfig config;
  std::vector<std::uint64_t> split_seeds;
};

namespace detail {

struct SplitIndices {
  std::vector<std::size_t> train, test;
};

inline SplitIndices draw_split(std::size_t n, double train_fraction, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  const std::size_t test_n = static_cast<std::size_t>(
      std::llround((1.0 - train_fraction) * static_cast<double>(n)));
  SplitIndices s;
  s.test.assign(idx.begin(), idx.begin() + test_n);
  s.train.assign(idx.begin() + test_n, idx.end());
  return s;
}

}  // namespace detail

// Run the full protocol: per split, train the 3-gram on training-set yields
// and both DOP models on the training trees, decode every test lattice with
// every model, and aggregate word-weighted WER plus pairwise t-tests.
inline ResultTable run_experiment(const std::vector<ParseTree>& trees,
                                  const std::vector<WordGraph>& lattices,
                                  const std::vector<std::vector<std::string>>& references,
                                  const ExperimentConfig& config) {
  config.validate();
  if (trees.size() != lattices.size() || trees.size() != references.size())
    throw std::invalid_argument("run_experiment: trees, lattices and references must align");
  if (trees.empty()) throw std::invalid_argument("run_experiment: empty corpus");

  HeadRules head_rules;
  if (!config.head_rules_path.empty()) head_rules = load_head_rules_file(config.head_rules_path);

  ResultTable table;
  table.config = config;
  table.models = {"3gram", "simpledop", "mldop"};
  if (config.ablation_drop_multi_nonheadword) table.models.push_back("mldop-nonhead");
  if (config.ablation_strip_semantics) table.models.push_back("mldop-nosem");
  table.split_wer.assign(table.models.size(), {});

  for (std::size_t split = 0; split < config.splits; ++split) {
    const std::uint64_t split_seed = config.seed * 1000003ull + split;
    table.split_seeds.push_back(split_seed);
    const auto idx = detail::draw_split(trees.size(), config.train_fraction, split_seed);
    if (idx.train.empty() || idx.test.empty())
      throw std::runtime_error("split " + std::to_string(split) + " has an empty side");

    std::vector<ParseTree> train_trees;
    train_trees.reserve(idx.train.size());
    for (std::size_t i : idx.train) train_trees.push_back(trees[i]);

    std::vector<std::vector<std::string>> train_yields;
    train_yields.reserve(train_trees.size());
    for (const ParseTree& t : train_trees) train_yields.push_back(tree_yield(t));

    const NgramModel ngram = train_katz(train_yields, 3, 5);
    const FragmentTable fragment_table = count_fragments(train_trees, config.max_depth);
    const Stsg simple = rf_estimate(fragment_table);
    const Stsg mldop =
        train(train_trees, simple, config.em_tol_bits, config.em_max_iter).grammar;

    std::vector<std::optional<Stsg>> dop_models(table.models.size());
    dop_models[1] = simple;
    dop_models[2] = mldop;
    std::size_t next = 3;
    if (config.ablation_drop_multi_nonheadword) {
      const FragmentTable filtered =
          headword_filter(fragment_table, head_rules, config.max_nonhead);
      dop_models[next++] = train(train_trees, rf_estimate(filtered), config.em_tol_bits,
                                 config.em_max_iter)
                               .grammar;
    }
    if (config.ablation_strip_semantics) {
      std::vector<ParseTree> stripped;
      stripped.reserve(train_trees.size());
      for (const ParseTree& t : train_trees) stripped.push_back(strip_semantics(t));
      const FragmentTable plain = count_fragments(stripped, config.max_depth);
      dop_models[next++] =
          train(stripped, rf_estimate(plain), config.em_tol_bits, config.em_max_iter).grammar;
    }

    std::vector<std::size_t> errors(table.models.size(), 0);
    std::size_t ref_words = 0;
    for (std::size_t i : idx.test) {
      ref_words += references[i].size();
      for (std::size_t m = 0; m < table.models.size(); ++m) {
        std::vector<std::string> hyp;
        try {
          const DecodeResult r =
              m == 0 ? ngram_best_string(lattices[i], ngram, config.acoustic_weight)
                     : best_string(lattices[i], *dop_models[m], config.nbest,
                                   config.acoustic_weight);
          hyp = r.best_string;
        } catch (const std::exception&) {
          // undecodable lattice: score an empty hypothesis
        }
        errors[m] += edit_counts(references[i], hyp).total();
      }
    }
    for (std::size_t m = 0; m < table.models.size(); ++m)
      table.split_wer[m].push_back(static_cast<double>(errors[m]) /
                                   static_cast<double>(ref_words));
  }

  for (const auto& wers : table.split_wer) {
    double mean = 0.0;
    for (double w : wers) mean += w;
    table.mean_wer.push_back(mean / static_cast<double>(wers.size()));
  }
  if (config.splits >= 2) {
    for (std::size_t a = 0; a < table.models.size(); ++a)
      for (std::size_t b = a + 1; b < table.models.size(); ++b) {
        const PairedT t = paired_t(table.split_wer[a], table.split_wer[b]);
        table.pairs.push_back({table.models[a], table.models[b], t.t, t.significant});
      }
  }
  return table;
}

inline void write_result_table(std::ostream& out, const ResultTable& table) {
  out << "# dopgram experiment: seed " << table.config.seed << " splits " << table.config.splits
      << " train_fraction " << format_g17(table.config.train_fraction) << " max_depth "
      << table.config.max_depth << " nbest " << table.config.nbest << '\n';
  out << "# split seeds:";
  for (std::uint64_t s : table.split_seeds) out << ' ' << s;
  out << '\n';
  out << "model";
  for (std::size_t s = 0; s < table.config.splits; ++s) out << "\tsplit" << s;
  out << "\tmean\n";
  for (std::size_t m = 0; m < table.models.size(); ++m) {
    out << table.models[m];
    for (double w : table.split_wer[m]) out << '\t' << format_g17(w);
    out << '\t' << format_g17(table.mean_wer[m]) << '\n';
  }
  out << "# paired t, two-tailed, alpha 0.05\n";
  out << "pair\tt\tsignificant\n";
  for (const auto& p : table.pairs)
    out << p.model_a << '/' << p.model_b << '\t' << format_g17(p.t) << '\t'
        << (p.significant ? "yes" : "no") << '\n';
}

}  // namespace dop
