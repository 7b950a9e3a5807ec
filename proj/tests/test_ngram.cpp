#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "dop/generator.hpp"
#include "dop/ngram.hpp"
#include "test_support.hpp"

using namespace dop;

namespace {

double p_cond(const NgramModel& m, const std::vector<std::string>& ctx, const std::string& w) {
  return std::pow(10.0, m.logp10_word(ctx, w));
}

double context_sum(const NgramModel& m, const std::vector<std::string>& ctx) {
  double total = 0.0;
  for (const auto& w : m.vocabulary()) total += p_cond(m, ctx, w);
  return total;
}

std::vector<std::vector<std::string>> demo_yields(std::size_t n, std::uint64_t seed) {
  const Stsg gen = demo_generator();
  std::vector<std::vector<std::string>> out;
  for (const ParseTree& t : generate_synthetic_corpus(gen, n, seed))
    out.push_back(tree_yield(t));
  return out;
}

}  // namespace

TEST_CASE("toy bigram model: hand-computed Katz numbers") {
  const NgramModel m = train_katz({{"a", "b"}}, 2, 5);
  // every bigram and unigram is a singleton; the r/(r+1) fallback discount
  // halves each observed count
  CHECK_THAT(p_cond(m, {"a"}, "b"), Catch::Matchers::WithinAbs(0.5, 1e-12));
  CHECK_THAT(p_cond(m, {}, "a"), Catch::Matchers::WithinAbs(1.0 / 6.0, 1e-12));
  CHECK_THAT(p_cond(m, {}, kUnknown), Catch::Matchers::WithinAbs(0.5, 1e-12));
  // back-off weight of context "a" is 0.5 / (1 - 1/6)
  CHECK_THAT(p_cond(m, {"a"}, "a"), Catch::Matchers::WithinAbs(0.6 / 6.0, 1e-12));
  CHECK_THAT(context_sum(m, {"a"}), Catch::Matchers::WithinAbs(1.0, 1e-6));
  CHECK_THAT(context_sum(m, {"<s>"}), Catch::Matchers::WithinAbs(1.0, 1e-6));
}

TEST_CASE("counts above the threshold stay undiscounted") {
  std::vector<std::vector<std::string>> corpus(10, {"x", "y"});
  corpus.push_back({"x", "z"});
  corpus.push_back({"x", "z"});
  const NgramModel m = train_katz(corpus, 2, 5);
  // c(x,y) = 10 > 5: the raw relative frequency 10/12 survives
  CHECK_THAT(p_cond(m, {"x"}, "y"), Catch::Matchers::WithinAbs(10.0 / 12.0, 1e-12));
  CHECK(p_cond(m, {"x"}, "z") < 2.0 / 12.0);  // discounted
  CHECK_THAT(context_sum(m, {"x"}), Catch::Matchers::WithinAbs(1.0, 1e-6));
}

TEST_CASE("high-count probabilities are scale invariant") {
  // above the Good-Turing threshold the estimates are raw relative
  // frequencies, so duplicating the corpus changes nothing there
  std::vector<std::vector<std::string>> corpus(6, {"x", "y"});
  for (int i = 0; i < 6; ++i) corpus.push_back({"x", "z"});
  std::vector<std::vector<std::string>> doubled = corpus;
  doubled.insert(doubled.end(), corpus.begin(), corpus.end());
  const NgramModel a = train_katz(corpus, 2, 5);
  const NgramModel b = train_katz(doubled, 2, 5);
  CHECK_THAT(p_cond(a, {"x"}, "y"), Catch::Matchers::WithinAbs(p_cond(b, {"x"}, "y"), 1e-12));
  CHECK_THAT(p_cond(a, {"x"}, "z"), Catch::Matchers::WithinAbs(p_cond(b, {"x"}, "z"), 1e-12));
}

TEST_CASE("every observed context normalizes") {
  const NgramModel m = train_katz(demo_yields(60, 42), 3, 5);
  // unigram context
  CHECK_THAT(context_sum(m, {}), Catch::Matchers::WithinAbs(1.0, 1e-6));
  // every bigram/trigram context that carries a back-off weight
  for (int k = 1; k < m.order(); ++k) {
    for (const auto& [ctx_key, bow] : m.bow_table(k)) {
      const auto ctx = NgramModel::unkey(ctx_key);
      if (ctx.back() == kSentEnd) continue;  // never a query context
      CAPTURE(ctx_key);
      CHECK_THAT(context_sum(m, ctx), Catch::Matchers::WithinAbs(1.0, 1e-6));
    }
  }
}

TEST_CASE("discounted never exceeds the raw relative frequency") {
  const auto yields = demo_yields(40, 9);
  const NgramModel m = train_katz(yields, 3, 5);
  // spot-check: the observed bigram (naar, almere)
  std::map<std::string, int> uni;
  std::map<std::pair<std::string, std::string>, int> bi;
  for (const auto& s : yields)
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      ++uni[s[i]];
      ++bi[{s[i], s[i + 1]}];
    }
  for (const auto& [pair, c] : bi) {
    const double raw = static_cast<double>(c) / uni[pair.first];
    CHECK(p_cond(m, {pair.first}, pair.second) <= raw + 1e-12);
  }
}

TEST_CASE("logprob_sentence basics") {
  const NgramModel m = train_katz({{"a", "b"}}, 2, 5);
  // the training sentence is the best two-word sentence under its own model
  const double trained = m.logprob_sentence({"a", "b"});
  for (const std::string& u : {"a", "b", "q"})
    for (const std::string& v : {"a", "b", "q"})
      CHECK(m.logprob_sentence({u, v}) <= trained + 1e-12);
  // empty sentence scores exactly P(</s> | <s>)
  CHECK_THAT(m.logprob_sentence({}), Catch::Matchers::WithinAbs(std::log(0.1), 1e-12));
  // unknown words keep the score finite
  CHECK(std::isfinite(m.logprob_sentence({"zzz", "qqq", "zzz"})));
}

TEST_CASE("vocabulary positivity: every word scores above zero in any context") {
  const NgramModel m = train_katz(demo_yields(30, 3), 3, 5);
  for (const auto& w : m.vocabulary()) {
    CHECK(p_cond(m, {}, w) > 0.0);
    CHECK(p_cond(m, {"ik", "wil"}, w) > 0.0);
    CHECK(p_cond(m, {"naar"}, w) > 0.0);
  }
}

TEST_CASE("ARPA export and import round-trip") {
  const NgramModel m = train_katz(demo_yields(80, 17), 3, 5);
  std::ostringstream out;
  write_arpa(out, m);
  std::istringstream in(out.str());
  const NgramModel again = read_arpa(in);
  CHECK(again.order() == m.order());

  Rng rng(5);
  const auto vocab = m.vocabulary();
  for (int i = 0; i < 100; ++i) {
    std::vector<std::string> sentence;
    const std::size_t len = 1 + rng.next_below(8);
    for (std::size_t j = 0; j < len; ++j) {
      if (rng.next_below(10) == 0)
        sentence.push_back("oov" + std::to_string(j));
      else
        sentence.push_back(vocab[rng.next_below(vocab.size())]);
    }
    CHECK_THAT(again.logprob_sentence(sentence),
               Catch::Matchers::WithinAbs(m.logprob_sentence(sentence), 1e-9));
  }
}

TEST_CASE("ngram lattice decoding") {
  const NgramModel m = train_katz(demo_yields(60, 21), 3, 5);
  // single path
  const DecodeResult single = ngram_best_string(linear_lattice({"ik", "wil", "naar", "almere"}), m);
  CHECK(join(single.best_string) == "ik wil naar almere");
  CHECK(single.derivations_used == 1);

  // a path of trained words beats an all-unknown path
  const WordGraph two = load_wordgraph(
      "LATTICE 5 0 4\n"
      "ARC 0 1 ik\nARC 0 1 qq\n"
      "ARC 1 2 wil\nARC 1 2 ww\n"
      "ARC 2 3 naar\nARC 2 3 nn\n"
      "ARC 3 4 almere\nARC 3 4 aa\n");
  CHECK(join(ngram_best_string(two, m).best_string) == "ik wil naar almere");
}

TEST_CASE("ngram lattice decoding equals exhaustive path scoring") {
  const NgramModel m = train_katz(demo_yields(60, 21), 3, 5);
  Rng rng(31);
  const auto vocab = m.vocabulary();
  for (int round = 0; round < 10; ++round) {
    // random confusion lattice over 3-5 positions, 2 words per slot
    const std::size_t len = 3 + rng.next_below(3);
    WordGraph g;
    g.node_count = static_cast<int>(len) + 1;
    g.start = 0;
    g.end = static_cast<int>(len);
    for (std::size_t i = 0; i < len; ++i) {
      std::set<std::string> slot;
      while (slot.size() < 2) {
        std::string w = vocab[rng.next_below(vocab.size())];
        if (w == kUnknown) w = "zzz";
        slot.insert(w);
      }
      for (const std::string& w : slot) {
        const double ac = -0.1 * static_cast<double>(rng.next_below(20));
        g.arcs.push_back({static_cast<int>(i), static_cast<int>(i) + 1, w, ac});
      }
    }
    validate_wordgraph(g);

    double best = kLogZero;
    std::vector<std::string> best_words;
    for (const auto& path : enumerate_paths(g)) {
      std::vector<std::string> words;
      double acoustic = 0.0;
      for (const WordArc* a : path) {
        words.push_back(a->word);
        acoustic += a->acoustic_logp.value_or(0.0);
      }
      const double score = m.logprob_sentence(words) + acoustic;
      if (score > best || (score == best && words < best_words)) {
        best = score;
        best_words = words;
      }
    }
    const DecodeResult r = ngram_best_string(g, m, 1.0);
    CHECK(r.best_string == best_words);
    CHECK_THAT(r.string_logprob, Catch::Matchers::WithinAbs(best, 1e-9));
  }
}

TEST_CASE("train_katz input validation") {
  CHECK_THROWS(train_katz({}, 3, 5));
  CHECK_THROWS(train_katz({{"a", "<s>"}}, 2, 5));
  // singleton mapping replaces hapaxes with the unknown token
  const NgramModel m = train_katz({{"a", "b"}, {"a", "c"}}, 2, 5, true);
  CHECK_FALSE(m.known_word("b"));
  CHECK(m.known_word("a"));
}
