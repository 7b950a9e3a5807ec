#pragma once

// Synthetic treebank generation by sampling derivations from an STSG, so the
// ground-truth string distribution of every generated corpus is known. The
// generator spec is an ordinary grammar file; weights must be normalized per
// root label (the Stsg loader enforces this).

#include <stdexcept>
#include <string>
#include <vector>

#include "dop/stsg.hpp"
#include "dop/tree.hpp"
#include "dop/util.hpp"

namespace dop {

inline constexpr std::size_t kMaxDerivationSteps = 10000;

// Sample one complete tree by repeated leftmost substitution.
inline ParseTree sample_tree(const Stsg& g, Rng& rng,
                             std::size_t max_steps = kMaxDerivationSteps) {
  ParseTree tree = ParseTree::make_site(g.start_label());
  std::size_t steps = 0;
  while (!tree_complete(tree)) {
    if (++steps > max_steps)
      throw std::runtime_error("sample_tree: derivation exceeded the safety cap");
    ParseTree* site = detail::leftmost_site(tree);
    const auto& ids = g.roots(site->label);
    std::vector<double> weights;
    weights.reserve(ids.size());
    for (std::size_t id : ids) weights.push_back(std::exp(g.entry(id).logp));
    const std::size_t pick = rng.next_weighted(weights);
    *site = g.entry(ids[pick]).fragment.tree;
  }
  return tree;
}

// n_trees samples, reproducible for a fixed seed.
inline std::vector<ParseTree> generate_synthetic_corpus(const Stsg& generator,
                                                        std::size_t n_trees,
                                                        std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ParseTree> corpus;
  corpus.reserve(n_trees);
  for (std::size_t i = 0; i < n_trees; ++i) corpus.push_back(sample_tree(generator, rng));
  return corpus;
}

// A small transport-domain generator with semantic annotations, used by the
// bundled tests and as a runnable example. Sentences are of the shape
// "ik wil|ga [vandaag|morgen|niet vandaag maar morgen] naar <place>". The
// lexicalized fragments carry verb-conditioned destination preferences
// ("ga" strongly prefers "leiden") that no product of local rule weights
// reproduces, so relative-frequency and maximum-likelihood estimates of the
// string distribution genuinely differ.
inline Stsg demo_generator() {
  const std::vector<std::pair<std::string, double>> rows = {
      {"(S@d1.d2 (PRON@user ik) VP@d1.d2)", 0.65},
      {"(S@d1.d2 (PRON@user ik) VP@d1.[d2;d3])", 0.35},
      {"(PRON@user ik)", 1.0},
      {"(VP@d1.d2 (V@wants wil) PP@destination.d2)", 0.3},
      {"(VP@d1.d2 (V@wants wil) (PP@destination.d2 (P@to naar) NP@place.d1))", 0.1},
      {"(VP@d1.d2 (V@goes ga) (PP@destination.d2 (P@to naar) (NP@place.d1 "
       "(NAME@leiden leiden))))",
       0.5},
      {"(VP@d1.d2 (V@goes ga) PP@destination.d2)", 0.1},
      {"(VP@d1.[d2;d3] (V@wants wil) MP@d1 PP@destination.d2)", 0.7},
      {"(VP@d1.[d2;d3] (V@wants wil) (MP@[d1d2;d3d4] (NEG@# niet) ADV@today (CONJ@! maar) "
       "ADV@tomorrow) PP@destination.d2)",
       0.3},
      {"(V@wants wil)", 1.0},
      {"(V@goes ga)", 1.0},
      {"(MP@d1 ADV@today)", 0.8},
      {"(MP@d1 ADV@tomorrow)", 0.2},
      {"(MP@[d1d2;d3d4] (NEG@# niet) ADV@today (CONJ@! maar) ADV@tomorrow)", 1.0},
      {"(ADV@today vandaag)", 1.0},
      {"(ADV@tomorrow morgen)", 1.0},
      {"(NEG@# niet)", 1.0},
      {"(CONJ@! maar)", 1.0},
      {"(PP@destination.d2 (P@to naar) NP@place.d1)", 1.0},
      {"(P@to naar)", 1.0},
      {"(NP@place.d1 NAME@almere)", 0.45},
      {"(NP@place.d1 (NAME@amsterdam amsterdam))", 0.28},
      {"(NP@place.d1 NAME@utrecht)", 0.22},
      {"(NP@place.d1 NAME@leiden)", 0.05},
      {"(NAME@almere almere)", 1.0},
      {"(NAME@amsterdam amsterdam)", 1.0},
      {"(NAME@utrecht utrecht)", 1.0},
      {"(NAME@leiden leiden)", 1.0},
  };
  std::string text = "start\tS@d1.d2\n";
  for (const auto& [key, p] : rows) text += key + "\t" + format_g17(p) + "\n";
  std::istringstream in(text);
  return read_grammar_tsv(in);
}

}  // namespace dop
