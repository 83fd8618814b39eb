// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "seqgen/checkpoint.hpp"
#include "seqgen/cli.hpp"
#include "seqgen/corpus.hpp"
#include "seqgen/error.hpp"
#include "seqgen/evalkit.hpp"
#include "seqgen/glimpse.hpp"
#include "seqgen/oracle.hpp"

namespace seqgen::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInput("cannot write " + path);
  return out;
}

std::string out_dir(const RunConfig& cfg) {
  const std::string dir = cfg.str("out");
  fs::create_directories(dir);
  return dir;
}

std::vector<std::string> read_lines(const std::string& path) {
  auto in = open_in(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    lines.push_back(line);
  }
  return lines;
}

struct LoadedModel {
  std::unique_ptr<Vocabulary> vocab;
  std::unique_ptr<ConditionalSequenceModel> model;
  const OracleModel* oracle = nullptr;
};

LoadedModel load_model(const RunConfig& cfg) {
  LoadedModel m;
  const std::string& kind = cfg.str("model");
  if (kind == "oracle") {
    if (cfg.str("oracle").empty()) throw InvalidInput("model=oracle needs oracle=PATH");
    auto o = std::make_unique<OracleModel>(OracleModel::load(cfg.str("oracle")));
    m.vocab = std::make_unique<Vocabulary>(o->vocab());
    if (!cfg.str("vocab").empty() && !(Vocabulary::load(cfg.str("vocab")) == *m.vocab))
      throw DimensionMismatch("vocabulary file differs from the oracle vocabulary");
    m.oracle = o.get();
    m.model = std::move(o);
    return m;
  }
  m.vocab = std::make_unique<Vocabulary>(Vocabulary::load(cfg.path_or("vocab", "vocab.txt")));
  if (kind == "uniform") {
    m.model = std::make_unique<UniformModel>(m.vocab->size(), m.vocab->sos_id(), m.vocab->eos_id());
    return m;
  }
  Checkpoint ckpt = load_checkpoint(cfg.path_or("checkpoint", "checkpoint.glmp"));
  if (ckpt.config.vocab_size != m.vocab->size())
    throw DimensionMismatch("checkpoint vocabulary size " + std::to_string(ckpt.config.vocab_size) +
                            " differs from vocabulary file size " +
                            std::to_string(m.vocab->size()));
  m.model = std::make_unique<NeuralSeq2Seq>(ckpt.config, std::move(ckpt.params),
                                            m.vocab->sos_id(), m.vocab->eos_id(), ckpt.glimpse_k);
  return m;
}

std::vector<TokenPair> load_token_pairs(const RunConfig& cfg, const Vocabulary& vocab) {
  auto in = open_in(cfg.path_or("pairs", "pairs.jsonl"));
  std::vector<TokenPair> out;
  for (const auto& p : read_pairs(in)) out.push_back(to_token_pair(p, vocab));
  return out;
}

/// Prompt pool: pool=, else prompts=, else the oracle's prompt support,
/// else out/prompts.txt when it exists.
std::vector<TokenSequence> load_pool(const RunConfig& cfg, const LoadedModel& m) {
  std::string path = cfg.str("pool").empty() ? cfg.str("prompts") : cfg.str("pool");
  std::vector<TokenSequence> pool;
  if (path.empty() && m.oracle) {
    for (const auto& p : m.oracle->prompts()) pool.push_back(p.tokens);
    return pool;
  }
  if (path.empty()) {
    path = cfg.path_or("prompts", "prompts.txt");
    if (!fs::exists(path)) return pool;
  }
  for (const auto& line : read_lines(path)) pool.push_back(tokenize(line, *m.vocab));
  return pool;
}

struct Reply {
  TokenSequence tokens;
  std::string text;
  std::string provenance;
  std::optional<std::string> baseline;
  std::vector<TraceRound> trace;
};

Reply respond(const LoadedModel& m, const TokenSequence& source, const std::string& strategy,
              const DecodeParams& p, std::size_t nbest, std::span<const TokenSequence> pool,
              Rng& rng) {
  const auto& model = *m.model;
  Reply r;
  if (strategy == "beam" || strategy == "beam_lennorm") {
    std::optional<double> alpha;
    if (strategy == "beam_lennorm") alpha = p.alpha;
    r.tokens = beam_search(model, source, p.B, p.max_len, alpha).front().tokens;
    r.provenance = to_string(Provenance::kBaseline);
  } else if (strategy == "segment") {
    auto res = segment_decode(model, source, pool, p, rng);
    r.tokens = std::move(res.tokens);
    r.trace = std::move(res.trace);
    r.provenance = to_string(Provenance::kSegmentModel);
  } else if (strategy == "backoff") {
    const auto base = beam_search(model, source, p.B, p.max_len).front().tokens;
    auto seg = segment_decode(model, source, pool, p, rng);
    const std::string base_text = detokenize(base, *m.vocab);
    const auto choice =
        backoff_respond(base_text, detokenize(seg.tokens, *m.vocab), p.backoff_threshold_chars);
    r.tokens = choice.provenance == Provenance::kBaseline ? base : seg.tokens;
    r.provenance = to_string(choice.provenance);
    r.baseline = base_text;
    r.trace = std::move(seg.trace);
  } else if (strategy == "marginal") {
    std::vector<TokenSequence> cands;
    for (auto& h : beam_search(model, source, nbest, p.max_len)) cands.push_back(h.tokens);
    std::vector<RankedCandidate> ranked;
    if (m.oracle) {
      ranked = rerank_by_marginal(model, cands, source, [&](std::span<const TokenId> y) {
        return m.oracle->log_marginal(y);
      });
    } else {
      ranked = rerank_by_marginal(model, cands, source, pool);
    }
    r.tokens = ranked.front().tokens;
    r.provenance = "marginal_rerank";
  } else {
    throw InvalidInput("unknown strategy " + strategy);
  }
  r.text = detokenize(r.tokens, *m.vocab);
  return r;
}

json trace_json(const TraceRound& tr, const Vocabulary& vocab) {
  json j;
  j["round"] = tr.round;
  json cands = json::array();
  for (const auto& c : tr.candidates) {
    json cj;
    cj["tokens"] = c.tokens;
    cj["text"] = detokenize(c.tokens, vocab);
    cj["logp"] = c.logp;
    cj["S"] = c.score;
    if (c.flagged) cj["flagged"] = true;
    cands.push_back(std::move(cj));
  }
  j["candidates"] = std::move(cands);
  j["chosen_index"] = tr.chosen_index;
  j["phi_indices"] = tr.phi_indices;
  return j;
}

std::size_t response_tokens(const TokenSequence& t) { return t.size() >= 2 ? t.size() - 2 : 0; }

// ---------------------------------------------------------------- commands

int cmd_prep(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const bool from_threads = !cfg.str("threads").empty();
  const bool from_oracle = !cfg.str("oracle").empty();
  if (from_threads == from_oracle) throw InvalidInput("prep needs exactly one of threads= or oracle=");
  const std::string dir = out_dir(cfg);

  std::vector<Pair> pairs;
  if (from_threads) {
    auto in = open_in(cfg.str("threads"));
    ExtractStats st;
    const auto messages = read_threads(in, st);
    pairs = extract_pairs(messages, &st);
    if (st.malformed_rows + st.duplicate_ids + st.dangling_parents + st.unreachable > 0)
      err << "warning: malformed=" << st.malformed_rows << " duplicate_ids=" << st.duplicate_ids
          << " dangling_parents=" << st.dangling_parents << " cyclic=" << st.unreachable << '\n';
    if (pairs.empty()) throw InsufficientData("no prompt-response pairs extracted");
    build_vocab(pairs, cfg.size("vocab_size")).save(dir + "/vocab.txt");
    out << "messages=" << messages.size() << " pairs=" << pairs.size() << '\n';
  } else {
    const OracleModel oracle = OracleModel::load(cfg.str("oracle"));
    Rng rng(derive_seed(cfg.u64("seed"), "prep.synth"));
    const auto synth = synth_corpus(oracle, cfg.size("synth_pairs"), rng, cfg.size("synth_max_len"));
    for (const auto& sp : synth) {
      if (!(to_token_pair(sp.text, oracle.vocab()) == sp.tokens))
        throw InvalidInput("oracle tokens do not survive tokenization: '" + sp.text.prompt + "'");
      pairs.push_back(sp.text);
    }
    oracle.vocab().save(dir + "/vocab.txt");
    auto pf = open_out(dir + "/prompts.txt");
    for (const auto& p : oracle.prompts()) pf << detokenize(p.tokens, oracle.vocab()) << '\n';
    out << "synthetic pairs=" << pairs.size() << '\n';
  }
  auto pf = open_out(dir + "/pairs.jsonl");
  write_pairs(pf, pairs);
  return kOk;
}

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  const std::string dir = out_dir(cfg);
  const Vocabulary vocab = Vocabulary::load(cfg.path_or("vocab", "vocab.txt"));
  auto pairs = load_token_pairs(cfg, vocab);
  if (pairs.empty()) throw InsufficientData("training corpus is empty");
  const ModelConfig mcfg = cfg.model_config(vocab.size());
  const TrainOptions opts = cfg.train_options();
  const std::uint64_t seed = cfg.u64("seed");
  const std::string ckpt_path = dir + "/checkpoint.glmp";
  const std::string optim_path = dir + "/optim.glmp";
  const std::string log_path = dir + "/train_log.csv";

  std::optional<std::pair<ParamSet, AdamState>> resumed;
  std::vector<TrainLogRow> rows;
  if (cfg.flag("resume")) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    if (!(ckpt.config == mcfg) || ckpt.glimpse_k != opts.glimpse_k)
      throw InvalidInput("checkpoint configuration differs from the run configuration");
    AdamState st = load_adam_state(optim_path, ckpt.params);
    for (const auto& row : read_train_log(log_path))
      if (row.step <= st.step) rows.push_back(row);
    resumed.emplace(std::move(ckpt.params), std::move(st));
  }

  const Sentinels sentinels{vocab.sos_id(), vocab.eos_id()};
  BatchSchedule schedule(pairs, opts.glimpse_k, sentinels, opts.batch_size,
                         derive_seed(seed, "train.batches"));
  Trainer trainer(mcfg, resumed ? resumed->first : init_params(mcfg, derive_seed(seed, "train.init")),
                  std::move(schedule), opts);
  if (resumed) trainer.restore(resumed->first, resumed->second);

  auto save = [&] {
    save_checkpoint(ckpt_path, Checkpoint{mcfg, opts.glimpse_k, trainer.params()});
    save_adam_state(optim_path, trainer.optimizer_state());
    write_train_log(log_path, rows);
  };
  const std::uint64_t steps = cfg.u64("steps");
  const std::uint64_t log_every = cfg.u64("log_every");
  const std::uint64_t ckpt_every = cfg.u64("checkpoint_every");
  while (trainer.steps_done() < steps) {
    const double loss = trainer.step();
    const std::uint64_t s = trainer.steps_done();
    if (log_every > 0 && s % log_every == 0) rows.push_back({s, loss, std::exp(loss)});
    if (ckpt_every > 0 && s % ckpt_every == 0) save();
  }
  save();

  const std::size_t n = std::min(pairs.size(), cfg.size("ppl_pairs"));
  if (n > 0) {
    NeuralSeq2Seq model(mcfg, trainer.params(), vocab.sos_id(), vocab.eos_id(), opts.glimpse_k);
    const double ppl = perplexity(model, std::span<const TokenPair>(pairs).first(n));
    out << "steps=" << trainer.steps_done() << " ppl(" << n << " pairs)=" << std::setprecision(6)
        << ppl << '\n';
  }
  return kOk;
}

int cmd_decode(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  const std::string dir = out_dir(cfg);
  const LoadedModel m = load_model(cfg);
  const DecodeParams params = cfg.decode_params();
  const std::string& strategy = cfg.str("strategy");
  const auto prompts = read_lines(cfg.path_or("prompts", "prompts.txt"));
  const auto pool = load_pool(cfg, m);
  const std::uint64_t seed = cfg.u64("seed");

  auto resp = open_out(dir + "/responses.jsonl");
  auto trace = open_out(dir + "/trace.jsonl");
  std::size_t by_baseline = 0;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const TokenSequence source = tokenize(prompts[i], *m.vocab);
    Rng rng(derive_seed(seed, "decode.prompt", i));
    const Reply r = respond(m, source, strategy, params, cfg.size("nbest"), pool, rng);
    json j;
    j["prompt"] = prompts[i];
    j["response"] = r.text;
    j["strategy"] = strategy;
    j["provenance"] = r.provenance;
    j["chars"] = char_length(r.text);
    j["tokens"] = response_tokens(r.tokens);
    if (r.baseline) {
      j["baseline"] = *r.baseline;
      j["baseline_chars"] = char_length(*r.baseline);
    }
    resp << j.dump() << '\n';
    for (const auto& tr : r.trace) {
      json t;
      t["prompt_index"] = i;
      t.update(trace_json(tr, *m.vocab));
      trace << t.dump() << '\n';
    }
    if (r.provenance == "baseline") ++by_baseline;
  }
  out << "prompts=" << prompts.size() << " strategy=" << strategy
      << " baseline_provenance=" << by_baseline << '\n';
  return kOk;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  const std::string dir = out_dir(cfg);
  const std::string& mode = cfg.str("mode");
  const std::uint64_t seed = cfg.u64("seed");

  if (mode == "lengths") {
    auto in = open_in(cfg.path_or("responses", "responses.jsonl"));
    std::vector<std::string> texts;
    std::vector<std::vector<std::string>> tokens;
    std::string line;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        texts.push_back(nlohmann::json::parse(line).at("response").get<std::string>());
      } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("responses file: ") + e.what());
      }
      tokens.push_back(split_tokens(texts.back()));
    }
    const auto thresholds = cfg.size_list("thresholds");
    const auto rows = length_stats(texts, thresholds);
    auto csv = open_out(dir + "/lengths.csv");
    write_length_csv(csv, rows);
    out << "threshold  count  fraction\n";
    for (const auto& r : rows)
      out << std::setw(9) << r.threshold << "  " << std::setw(5) << r.count << "  "
          << std::fixed << std::setprecision(4) << r.fraction << '\n';
    out << "distinct-1=" << distinct_ngram_ratio(tokens, 1)
        << " distinct-2=" << distinct_ngram_ratio(tokens, 2) << '\n';
    return kOk;
  }

  const LoadedModel m = load_model(cfg);
  const auto pairs = load_token_pairs(cfg, *m.vocab);

  if (mode == "ppl") {
    if (pairs.empty()) throw InsufficientData("no pairs to evaluate");
    const double ppl = perplexity(*m.model, pairs);
    json j;
    j["mode"] = "ppl";
    j["pairs"] = pairs.size();
    j["perplexity"] = std::isfinite(ppl) ? json(ppl) : json("inf");
    auto f = open_out(dir + "/ppl_report.json");
    f << j.dump(2) << '\n';
    out << "pairs=" << pairs.size() << " perplexity=" << std::setprecision(6) << ppl << '\n';
    return kOk;
  }

  const std::size_t N = cfg.size("N");
  const std::size_t K = cfg.size("K");
  if (K < 1 || K >= N) throw InvalidInput("need 1 <= K < N");
  const auto trials = make_trials(pairs, N, cfg.size("trials"), derive_seed(seed, "eval.trials"));
  const std::string& scheme = cfg.str("scheme");
  TrialScorer scorer;
  if (scheme == "random") {
    scorer = random_scorer();
  } else {
    SchemeSpec spec;
    spec.scheme = scoring_scheme_from_string(scheme);
    spec.pool = load_pool(cfg, m);
    if (spec.pool.empty()) {
      std::set<TokenSequence> distinct;
      for (const auto& p : pairs) distinct.insert(p.source);
      spec.pool.assign(distinct.begin(), distinct.end());
    }
    if (spec.scheme == ScoringScheme::kPromptNorm) spec.Q = cfg.size("Q");
    if (spec.scheme == ScoringScheme::kMarginalNorm && m.oracle) {
      const OracleModel* o = m.oracle;
      spec.log_marginal = [o](std::span<const TokenId> y) { return o->log_marginal(y); };
    }
    scorer = scheme_scorer(*m.model, std::move(spec));
  }
  const auto result = evaluate_trials(trials, K, scorer, derive_seed(seed, "eval.scores"));
  auto f = open_out(dir + "/eval_report.json");
  f << retrieval_report_json(scheme, result) << '\n';
  out << "scheme=" << scheme << " N=" << N << " K=" << K << " trials=" << result.trials
      << " accuracy=" << std::fixed << std::setprecision(4) << result.accuracy << " ci95=+-"
      << result.ci95 << '\n';
  return kOk;
}

int cmd_chat(const RunConfig& cfg, std::istream& in, std::ostream& out, std::ostream& err) {
  const LoadedModel m = load_model(cfg);
  const DecodeParams params = cfg.decode_params();
  const auto pool = load_pool(cfg, m);
  const std::string& strategy = cfg.str("strategy");
  bool show_trace = cfg.flag("trace");
  std::string line;
  for (;;) {
    out << "> " << std::flush;
    if (!std::getline(in, line)) break;
    const std::string text = normalize_text(line);
    if (text.empty()) continue;
    if (line.rfind("/trace", 0) == 0) {
      show_trace = line.find("on") != std::string::npos;
      out << "trace " << (show_trace ? "on" : "off") << '\n';
      continue;
    }
    if (line.rfind("/quit", 0) == 0) break;
    try {
      Rng rng(derive_seed(cfg.u64("seed"), "chat:" + text));
      const Reply r = respond(m, tokenize(line, *m.vocab), strategy, params, cfg.size("nbest"),
                              pool, rng);
      if (show_trace) {
        for (const auto& tr : r.trace) {
          for (std::size_t c = 0; c < tr.candidates.size(); ++c) {
            const auto& cand = tr.candidates[c];
            out << "  [" << tr.round << "] " << (c == tr.chosen_index ? '*' : ' ') << " S="
                << cand.score << " logp=" << cand.logp << " | "
                << detokenize(cand.tokens, *m.vocab) << '\n';
          }
        }
      }
      out << r.text << '\n';
    } catch (const Error& e) {
      err << "error: " << e.what() << '\n';
    }
  }
  return kOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"seqgen: glimpse seq2seq training, decoding and evaluation"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string strategy;
  std::string out_path;
  std::vector<std::string> overrides;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"prep", "build a pair corpus and vocabulary from threads or an oracle"},
      {"train", "train a network and write checkpoints"},
      {"decode", "generate a response per prompt"},
      {"eval", "retrieval accuracy, perplexity or length statistics"},
      {"chat", "interactive single-turn loop"},
  };
  for (const auto& [name, desc] : commands) {
    auto* sub = app.add_subcommand(name, desc);
    sub->add_option("--config", config_path, "key=value config file");
    sub->add_option("--seed", seed, "root seed");
    sub->add_option("--strategy", strategy, "beam|beam_lennorm|segment|backoff|marginal");
    sub->add_option("--out", out_path, "output directory");
    sub->add_option("settings", overrides, "key=value overrides");
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kMalformedInput;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg.load_file(config_path);
    for (const auto& o : overrides) cfg.apply(o);
    if (seed) cfg.set("seed", std::to_string(*seed));
    if (!strategy.empty()) cfg.set("strategy", strategy);
    if (!out_path.empty()) cfg.set("out", out_path);

    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "prep") return cmd_prep(cfg, out, err);
    if (name == "train") return cmd_train(cfg, out, err);
    if (name == "decode") return cmd_decode(cfg, out, err);
    if (name == "eval") return cmd_eval(cfg, out, err);
    return cmd_chat(cfg, in, out, err);
  } catch (const NonFinite& e) {
    err << "error: " << e.what() << '\n';
    return kNonFiniteLoss;
  } catch (const DimensionMismatch& e) {
    err << "error: " << e.what() << '\n';
    return kVocabMismatch;
  } catch (const InsufficientData& e) {
    err << "error: " << e.what() << '\n';
    return kInsufficientData;
  } catch (const EmptyPool& e) {
    err << "error: " << e.what() << '\n';
    return kInsufficientData;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kMalformedInput;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kMalformedInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace seqgen::cli
