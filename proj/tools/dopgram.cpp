// dopgram: treebank fragment grammars, EM training, lattice decoding and the
// evaluation harness behind one command.
//
//   dopgram synth       sample a synthetic treebank + confusion lattices
//   dopgram extract     extract fragments and write an RF-estimated grammar
//   dopgram train-em    reestimate fragment probabilities by EM
//   dopgram decode      decode a list of lattices with a grammar or ARPA model
//   dopgram ngram-train train a Katz 3-gram and export it as ARPA text
//   dopgram eval        run the full split/train/decode/WER experiment

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dop/decoder.hpp"
#include "dop/em.hpp"
#include "dop/fragments.hpp"
#include "dop/generator.hpp"
#include "dop/harness.hpp"
#include "dop/ngram.hpp"
#include "dop/stsg.hpp"
#include "dop/tree.hpp"
#include "dop/wordgraph.hpp"

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

// lattice list file: one lattice path per line, blanks ignored
std::vector<std::string> lattice_list(const std::string& path) {
  std::vector<std::string> paths;
  for (const std::string& line : read_lines(path)) {
    const auto toks = dop::split_ws(line);
    if (toks.empty() || toks[0][0] == '#') continue;
    paths.push_back(toks[0]);
  }
  return paths;
}

int cmd_synth(const std::string& grammar_path, std::size_t count, std::uint64_t seed,
              std::size_t distractors, const std::string& out_treebank,
              const std::string& out_refs, const std::string& lattice_dir,
              const std::string& out_list) {
  const dop::Stsg generator =
      grammar_path.empty() ? dop::demo_generator() : dop::read_grammar_file(grammar_path);
  const auto corpus = dop::generate_synthetic_corpus(generator, count, seed);
  {
    auto out = open_out(out_treebank);
    dop::write_treebank(out, corpus);
  }
  const auto pool = dop::corpus_vocabulary(corpus);
  dop::Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::filesystem::create_directories(lattice_dir);
  auto refs = open_out(out_refs);
  auto list = open_out(out_list);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto yield = dop::tree_yield(corpus[i]);
    refs << dop::join(yield) << '\n';
    const dop::WordGraph g = dop::make_confusion_lattice(yield, pool, distractors, rng);
    const std::string path = lattice_dir + "/lat" + std::to_string(i) + ".txt";
    auto lat = open_out(path);
    dop::write_wordgraph(lat, g);
    list << path << '\n';
  }
  std::cerr << "wrote " << corpus.size() << " trees, references and lattices\n";
  return 0;
}

int cmd_extract(const std::string& treebank, int max_depth, const std::string& out,
                const std::string& counts_out, bool strip, const std::string& head_rules_path,
                std::size_t max_nonhead, const std::string& start_override) {
  auto trees = dop::read_treebank_file(treebank);
  if (strip)
    for (auto& t : trees) t = dop::strip_semantics(t);
  dop::FragmentTable table = dop::count_fragments(trees, max_depth);
  if (!head_rules_path.empty())
    table = dop::headword_filter(table, dop::load_head_rules_file(head_rules_path), max_nonhead);
  if (!counts_out.empty()) {
    auto cout_file = open_out(counts_out);
    dop::write_fragment_table_tsv(cout_file, table);
  }
  std::optional<dop::Label> start;
  if (!start_override.empty()) start = dop::parse_label_token(start_override);
  const dop::Stsg grammar = dop::rf_estimate(table, start);
  auto gout = open_out(out);
  dop::write_grammar_tsv(gout, grammar);
  std::cerr << "extracted " << grammar.size() << " fragments from " << trees.size()
            << " trees\n";
  return 0;
}

int cmd_train_em(const std::string& grammar_path, const std::string& treebank, double tol,
                 std::size_t max_iter, const std::string& out,
                 const std::string& checkpoint_prefix) {
  const dop::Stsg g0 = dop::read_grammar_file(grammar_path);
  const auto trees = dop::read_treebank_file(treebank);
  std::function<void(std::size_t, const dop::Stsg&)> checkpoint;
  if (!checkpoint_prefix.empty()) {
    checkpoint = [&checkpoint_prefix](std::size_t iter, const dop::Stsg& g) {
      auto out_file = open_out(checkpoint_prefix + ".iter" + std::to_string(iter) + ".tsv");
      dop::write_grammar_tsv(out_file, g);
    };
  }
  const dop::TrainState state = dop::train(trees, g0, tol, max_iter, &std::cout, checkpoint);
  auto gout = open_out(out);
  dop::write_grammar_tsv(gout, state.grammar);
  std::cerr << "EM finished after " << state.iterations << " iterations\n";
  return 0;
}

int cmd_decode(const std::string& grammar_path, const std::string& arpa_path,
               const std::string& lattices, std::size_t nbest, double acoustic_weight,
               bool auto_weight, bool semantics) {
  std::optional<dop::Stsg> grammar;
  std::optional<dop::NgramModel> lm;
  if (!grammar_path.empty())
    grammar = dop::read_grammar_file(grammar_path);
  else if (!arpa_path.empty())
    lm = dop::read_arpa_file(arpa_path);
  else
    throw std::runtime_error("decode needs --grammar or --arpa");

  for (const std::string& path : lattice_list(lattices)) {
    const dop::WordGraph graph = dop::load_wordgraph_file(path);
    const std::optional<double> weight =
        auto_weight ? std::nullopt : std::optional<double>(acoustic_weight);
    std::string extra;
    dop::DecodeResult result;
    try {
      if (grammar) {
        result = dop::best_string(graph, *grammar, nbest, weight);
        if (semantics && !result.fallback_used) {
          const auto derivs =
              dop::nbest_derivations(dop::parse_lattice(graph, *grammar), nbest);
          for (const auto& d : derivs) {
            if (d.yield != result.best_string) continue;
            try {
              extra = dop::compose_semantics(dop::derive(d.derivation.steps, grammar->start_label()));
            } catch (const std::exception&) {
              extra = "-";
            }
            break;
          }
        }
      } else {
        result = dop::ngram_best_string(graph, *lm, weight);
      }
    } catch (const std::exception& e) {
      std::cerr << path << ": decode failed: " << e.what() << '\n';
      std::cout << path << "  -inf 1\n";
      continue;
    }
    std::cout << path << ' ' << dop::join(result.best_string) << ' '
              << dop::format_g17(result.string_logprob) << ' ' << (result.fallback_used ? 1 : 0);
    if (semantics) std::cout << ' ' << (extra.empty() ? "-" : extra);
    std::cout << '\n';
  }
  return 0;
}

int cmd_ngram_train(const std::string& treebank, const std::string& text, int order, int k_gt,
                    bool map_singletons, const std::string& out) {
  std::vector<std::vector<std::string>> sentences;
  if (!treebank.empty()) {
    for (const auto& t : dop::read_treebank_file(treebank)) sentences.push_back(dop::tree_yield(t));
  } else if (!text.empty()) {
    for (const std::string& line : read_lines(text)) {
      const auto toks = dop::split_ws(line);
      if (!toks.empty()) sentences.push_back(toks);
    }
  } else {
    throw std::runtime_error("ngram-train needs --treebank or --text");
  }
  const dop::NgramModel model = dop::train_katz(sentences, order, k_gt, map_singletons);
  auto out_file = open_out(out);
  dop::write_arpa(out_file, model);
  std::cerr << "trained order-" << order << " model on " << sentences.size() << " sentences\n";
  return 0;
}

// eval config: one `key value` or `key = value` pair per line, '#' comments
std::map<std::string, std::string> read_config(const std::string& path) {
  std::map<std::string, std::string> kv;
  for (std::string line : read_lines(path)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::replace(line.begin(), line.end(), '=', ' ');
    const auto toks = dop::split_ws(line);
    if (toks.empty()) continue;
    if (toks.size() != 2)
      throw std::runtime_error("config line needs exactly one key and one value: " + line);
    kv[toks[0]] = toks[1];
  }
  return kv;
}

int cmd_eval(const std::string& config_path, const std::string& out_path) {
  const auto kv = read_config(config_path);
  auto need = [&](const char* key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw std::runtime_error(std::string("config misses '") + key + "'");
    return it->second;
  };
  auto maybe = [&](const char* key, const std::string& fallback) {
    const auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
  };

  dop::ExperimentConfig config;
  config.splits = std::stoul(maybe("splits", "10"));
  config.train_fraction = std::stod(maybe("train_fraction", "0.9"));
  config.max_depth = std::stoi(maybe("max_depth", "4"));
  config.nbest = std::stoul(maybe("nbest", "1000"));
  config.em_tol_bits = std::stod(maybe("em_tol", "1e-4"));
  config.em_max_iter = std::stoul(maybe("em_max_iter", "30"));
  config.seed = std::stoull(maybe("seed", "1"));
  config.max_nonhead = std::stoul(maybe("max_nonhead", "1"));
  config.head_rules_path = maybe("head_rules", "");
  config.ablation_drop_multi_nonheadword = maybe("ablation_nonheadword", "false") == "true";
  config.ablation_strip_semantics = maybe("ablation_strip_semantics", "false") == "true";
  if (kv.count("acoustic_weight")) config.acoustic_weight = std::stod(kv.at("acoustic_weight"));

  const auto trees = dop::read_treebank_file(need("treebank"));
  std::vector<dop::WordGraph> lattices;
  for (const std::string& p : lattice_list(need("lattices")))
    lattices.push_back(dop::load_wordgraph_file(p));
  std::vector<std::vector<std::string>> references;
  for (const std::string& line : read_lines(need("references")))
    references.push_back(dop::split_ws(line));
  while (!references.empty() && references.back().empty()) references.pop_back();

  const dop::ResultTable table = dop::run_experiment(trees, lattices, references, config);
  if (out_path.empty()) {
    dop::write_result_table(std::cout, table);
  } else {
    auto out = open_out(out_path);
    dop::write_result_table(out, table);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"data-oriented parsing language-model toolkit"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "sample a synthetic treebank with lattices");
  std::string synth_grammar, synth_treebank = "treebank.txt", synth_refs = "refs.txt";
  std::string synth_latdir = "lattices", synth_list = "lattices.list";
  std::size_t synth_count = 500, synth_distractors = 2;
  std::uint64_t synth_seed = 1;
  synth->add_option("--grammar", synth_grammar, "generator grammar TSV (default: built-in demo)");
  synth->add_option("--count", synth_count, "number of trees");
  synth->add_option("--seed", synth_seed, "RNG seed");
  synth->add_option("--distractors", synth_distractors, "confusion words per position");
  synth->add_option("--out-treebank", synth_treebank, "treebank output");
  synth->add_option("--out-refs", synth_refs, "reference transcript output");
  synth->add_option("--out-lattice-dir", synth_latdir, "directory for lattice files");
  synth->add_option("--out-lattice-list", synth_list, "lattice list output");

  // extract
  auto* extract = app.add_subcommand("extract", "extract fragments, write an RF grammar");
  std::string ex_treebank, ex_out, ex_counts, ex_rules, ex_start;
  int ex_depth = 4;
  std::size_t ex_max_nonhead = 1;
  bool ex_strip = false;
  extract->add_option("--treebank", ex_treebank)->required();
  extract->add_option("--max-depth", ex_depth, "fragment depth bound (default 4)");
  extract->add_option("--out", ex_out, "grammar TSV output")->required();
  extract->add_option("--counts-out", ex_counts, "fragment count TSV output");
  extract->add_flag("--strip-semantics", ex_strip, "drop semantic annotations first");
  extract->add_option("--head-rules", ex_rules, "apply the non-headword filter with these rules");
  extract->add_option("--max-nonhead", ex_max_nonhead, "non-headword limit (default 1)");
  extract->add_option("--start-label", ex_start, "override the start label");

  // train-em
  auto* train = app.add_subcommand("train-em", "maximum-likelihood reestimation");
  std::string em_grammar, em_treebank, em_out, em_checkpoint;
  double em_tol = 1e-4;
  std::size_t em_iters = 30;
  train->add_option("--grammar", em_grammar)->required();
  train->add_option("--treebank", em_treebank)->required();
  train->add_option("--tol", em_tol, "stop when the cross-entropy drop is below this (bits)");
  train->add_option("--max-iter", em_iters);
  train->add_option("--out", em_out, "trained grammar output")->required();
  train->add_option("--checkpoint-prefix", em_checkpoint, "write a grammar per iteration");

  // decode
  auto* decode = app.add_subcommand("decode", "decode word-graphs");
  std::string de_grammar, de_arpa, de_lattices;
  std::size_t de_nbest = 1000;
  double de_weight = 1.0;
  bool de_semantics = false;
  decode->add_option("--grammar", de_grammar, "fragment grammar TSV");
  decode->add_option("--arpa", de_arpa, "ARPA n-gram model instead of a grammar");
  decode->add_option("--lattices", de_lattices, "lattice list file")->required();
  decode->add_option("--nbest", de_nbest, "derivations per lattice (default 1000)");
  auto* weight_opt =
      decode->add_option("--acoustic-weight", de_weight,
                         "acoustic log-linear weight (default: 1 when scores present)");
  decode->add_flag("--semantics", de_semantics, "append the composed formula of the best tree");

  // ngram-train
  auto* ngram = app.add_subcommand("ngram-train", "train a Katz model, export ARPA");
  std::string ng_treebank, ng_text, ng_out;
  int ng_order = 3, ng_kgt = 5;
  bool ng_singletons = false;
  ngram->add_option("--treebank", ng_treebank, "train on tree yields");
  ngram->add_option("--text", ng_text, "train on plain sentences");
  ngram->add_option("--order", ng_order);
  ngram->add_option("--k-gt", ng_kgt, "Good-Turing discount threshold (default 5)");
  ngram->add_flag("--map-singletons", ng_singletons, "map hapaxes to the unknown token");
  ngram->add_option("--out", ng_out)->required();

  // eval
  auto* eval = app.add_subcommand("eval", "run the experiment described by a config file");
  std::string ev_config, ev_out;
  eval->add_option("--config", ev_config)->required();
  eval->add_option("--out", ev_out, "result table TSV (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth)
      return cmd_synth(synth_grammar, synth_count, synth_seed, synth_distractors, synth_treebank,
                       synth_refs, synth_latdir, synth_list);
    if (*extract)
      return cmd_extract(ex_treebank, ex_depth, ex_out, ex_counts, ex_strip, ex_rules,
                         ex_max_nonhead, ex_start);
    if (*train) return cmd_train_em(em_grammar, em_treebank, em_tol, em_iters, em_out, em_checkpoint);
    if (*decode)
      return cmd_decode(de_grammar, de_arpa, de_lattices, de_nbest, de_weight,
                        weight_opt->count() == 0, de_semantics);
    if (*ngram) return cmd_ngram_train(ng_treebank, ng_text, ng_order, ng_kgt, ng_singletons, ng_out);
    if (*eval) return cmd_eval(ev_config, ev_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
