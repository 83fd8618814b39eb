// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "seqgen/checkpoint.hpp"
#include "seqgen/cli.hpp"
#include "seqgen/corpus.hpp"
#include "seqgen/error.hpp"
#include "seqgen/neural_net.hpp"
#include "seqgen/oracle.hpp"

namespace fs = std::filesystem;
using namespace seqgen;
using cli::run_cli;

namespace {

const std::string kData = SEQGEN_DATA_DIR;

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args, const std::string& input = "") {
  std::istringstream in(input);
  std::ostringstream out, err;
  const int code = run_cli(args, in, out, err);
  return {code, out.str(), err.str()};
}

std::string scratch(const std::string& name) {
  const fs::path p = fs::path(SEQGEN_SCRATCH_DIR) / "cli" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<nlohmann::json> jsonl(const std::string& path) {
  std::vector<nlohmann::json> rows;
  std::istringstream in(slurp(path));
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(nlohmann::json::parse(line));
  return rows;
}

void write(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

// Deterministic oracle over prompts q and r: every prompt answers "yes ." then stops.
std::string deterministic_oracle(const std::string& dir) {
  std::vector<std::string> vocab{"<s>", "</s>", "<unk>", "yes", ".", "q", "r"};
  const std::vector<double> stop{0, 1, 0, 0, 0, 0, 0};
  TransitionTable t(1, std::vector<std::vector<double>>(7, stop));
  t[0][0] = {0, 0, 0, 1, 0, 0, 0};
  t[0][1].clear();
  t[0][3] = {0, 0, 0, 0, 1, 0, 0};
  OracleModel o(Vocabulary(vocab), 1, t, {{{5}, 0.5}, {{6}, 0.5}});
  const std::string path = dir + "/det_oracle.json";
  write(path, o.to_json_text());
  return path;
}

const std::string kSmallNet[] = {"embed_dim=4", "hidden_dim=6", "batch_size=2", "ppl_pairs=5"};

}  // namespace

TEST(CliPrep, ThreeMessageThreadGivesTwoPairs) {
  const auto dir = scratch("prep3");
  write(dir + "/t.jsonl",
        "{\"id\":\"1\",\"parent_id\":null,\"text\":\"Hi there\"}\n"
        "{\"id\":\"2\",\"parent_id\":\"1\",\"text\":\"Hello!\"}\n"
        "{\"id\":\"3\",\"parent_id\":\"2\",\"text\":\"How are you?\"}\n");
  auto r = run({"prep", "--out", dir, "threads=" + dir + "/t.jsonl"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(dir + "/pairs.jsonl");
  auto pairs = read_pairs(in);
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0], (Pair{"hi there", "hello!"}));
  EXPECT_EQ(pairs[1], (Pair{"hello!", "how are you?"}));
  EXPECT_TRUE(fs::exists(dir + "/vocab.txt"));
}

TEST(CliPrep, WarnsOnDefectsAndIsByteStable) {
  const auto a = scratch("prep_a"), b = scratch("prep_b");
  auto r1 = run({"prep", "--out", a, "threads=" + kData + "/threads_small.jsonl"});
  auto r2 = run({"prep", "--out", b, "threads=" + kData + "/threads_small.jsonl"});
  ASSERT_EQ(r1.code, 0) << r1.err;
  EXPECT_NE(r1.err.find("malformed=1"), std::string::npos);
  EXPECT_NE(r1.err.find("dangling_parents=1"), std::string::npos);
  EXPECT_NE(r1.out.find("pairs=5"), std::string::npos);
  EXPECT_EQ(slurp(a + "/pairs.jsonl"), slurp(b + "/pairs.jsonl"));
  EXPECT_EQ(slurp(a + "/vocab.txt"), slurp(b + "/vocab.txt"));
}

TEST(CliPrep, OracleSynthesisIsSeeded) {
  const auto a = scratch("synth_a"), b = scratch("synth_b"), c = scratch("synth_c");
  const std::string o = "oracle=" + kData + "/oracle_small.json";
  ASSERT_EQ(run({"prep", "--out", a, "--seed", "3", o, "synth_pairs=50"}).code, 0);
  ASSERT_EQ(run({"prep", "--out", b, "--seed", "3", o, "synth_pairs=50"}).code, 0);
  ASSERT_EQ(run({"prep", "--out", c, "--seed", "4", o, "synth_pairs=50"}).code, 0);
  EXPECT_EQ(slurp(a + "/pairs.jsonl"), slurp(b + "/pairs.jsonl"));
  EXPECT_NE(slurp(a + "/pairs.jsonl"), slurp(c + "/pairs.jsonl"));
  EXPECT_EQ(jsonl(a + "/pairs.jsonl").size(), 50u);
  EXPECT_EQ(slurp(a + "/prompts.txt"), slurp(kData + "/prompts_small.txt"));
}

TEST(CliPrep, ExitCodes) {
  const auto dir = scratch("prep_err");
  EXPECT_EQ(run({"prep", "--out", dir}).code, cli::kMalformedInput);
  write(dir + "/roots.jsonl", "{\"id\":\"1\",\"parent_id\":null,\"text\":\"alone\"}\n");
  EXPECT_EQ(run({"prep", "--out", dir, "threads=" + dir + "/roots.jsonl"}).code,
            cli::kInsufficientData);
  EXPECT_EQ(run({"prep", "--out", dir, "bogus_key=1"}).code, cli::kMalformedInput);
  EXPECT_EQ(run({"prep", "--out", dir, "steps=abc"}).code, cli::kMalformedInput);
  EXPECT_EQ(run({"nosuch"}).code, cli::kMalformedInput);
  write(dir + "/bad.json", "{not json");
  EXPECT_EQ(run({"prep", "--out", dir, "oracle=" + dir + "/bad.json"}).code, cli::kMalformedInput);
}

TEST(CliTrain, ZeroStepsSavesInitialisationAndResumeMatches) {
  const auto dir = scratch("train");
  ASSERT_EQ(run({"prep", "--out", dir, "oracle=" + kData + "/oracle_small.json", "synth_pairs=40"}).code, 0);
  std::vector<std::string> base{"train", "--out", dir, "--seed", "5"};
  base.insert(base.end(), std::begin(kSmallNet), std::end(kSmallNet));

  auto zero = base;
  zero.push_back("steps=0");
  ASSERT_EQ(run(zero).code, 0);
  const auto ckpt = load_checkpoint(dir + "/checkpoint.glmp");
  ModelConfig cfg = ckpt.config;
  EXPECT_EQ(cfg.embed_dim, 4u);
  EXPECT_TRUE(ckpt.params == init_params(cfg, derive_seed(5, "train.init")));

  const auto full = scratch("train_full");
  fs::copy(dir + "/pairs.jsonl", full + "/pairs.jsonl");
  fs::copy(dir + "/vocab.txt", full + "/vocab.txt");
  auto straight = base;
  straight[2] = full;
  straight.push_back("steps=8");
  ASSERT_EQ(run(straight).code, 0);

  auto first = base;
  first.push_back("steps=3");
  ASSERT_EQ(run(first).code, 0);
  auto second = base;
  second.push_back("steps=8");
  second.push_back("resume=true");
  ASSERT_EQ(run(second).code, 0);
  EXPECT_EQ(slurp(dir + "/checkpoint.glmp"), slurp(full + "/checkpoint.glmp"));
  EXPECT_EQ(slurp(dir + "/optim.glmp"), slurp(full + "/optim.glmp"));
  EXPECT_EQ(slurp(dir + "/train_log.csv"), slurp(full + "/train_log.csv"));
}

TEST(CliTrain, DivergenceExitsWithNonFiniteCode) {
  const auto dir = scratch("train_nan");
  ASSERT_EQ(run({"prep", "--out", dir, "oracle=" + kData + "/oracle_small.json", "synth_pairs=20"}).code, 0);
  std::vector<std::string> args{"train", "--out", dir, "steps=50", "optimizer=sgd", "lr=1e30",
                                "clip_norm=0"};
  args.insert(args.end(), std::begin(kSmallNet), std::end(kSmallNet));
  EXPECT_EQ(run(args).code, cli::kNonFiniteLoss);
}

TEST(CliDecode, BeamOnDeterministicOracle) {
  const auto dir = scratch("decode_det");
  const auto o = deterministic_oracle(dir);
  write(dir + "/prompts.txt", "q\nsomething unknown\n");
  auto r = run({"decode", "--out", dir, "model=oracle", "oracle=" + o});
  ASSERT_EQ(r.code, 0) << r.err;
  auto rows = jsonl(dir + "/responses.jsonl");
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& j : rows) {
    EXPECT_EQ(j["response"], "yes.");
    EXPECT_EQ(j["provenance"], "baseline");
    EXPECT_EQ(j["chars"], 4);
    EXPECT_EQ(j["tokens"], 2);
  }
}

TEST(CliDecode, BackoffRecordsProvenanceAndTrace) {
  const auto dir = scratch("decode_backoff");
  const std::string o = "oracle=" + kData + "/oracle_small.json";
  const std::string p = "prompts=" + kData + "/prompts_small.txt";
  auto r = run({"decode", "--out", dir, "--strategy", "backoff", "model=oracle", o, p,
                "backoff_threshold=15"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto rows = jsonl(dir + "/responses.jsonl");
  ASSERT_EQ(rows.size(), 8u);
  for (const auto& j : rows) {
    const std::size_t base_chars = j["baseline_chars"];
    EXPECT_EQ(j["provenance"] == "baseline", base_chars < 15) << j.dump();
    if (j["provenance"] == "baseline") EXPECT_EQ(j["response"], j["baseline"]);
  }
  auto trace = jsonl(dir + "/trace.jsonl");
  ASSERT_FALSE(trace.empty());
  for (const auto& t : trace) {
    EXPECT_TRUE(t.contains("phi_indices"));
    EXPECT_LT(t["chosen_index"].get<std::size_t>(), t["candidates"].size());
  }
}

TEST(CliDecode, VocabMismatchExitCode) {
  const auto dir = scratch("decode_mismatch");
  write(dir + "/vocab.txt", "<s>\n</s>\n<unk>\nother\n");
  auto r = run({"decode", "--out", dir, "model=oracle", "oracle=" + kData + "/oracle_small.json",
                "vocab=" + dir + "/vocab.txt", "prompts=" + kData + "/prompts_small.txt"});
  EXPECT_EQ(r.code, cli::kVocabMismatch);

  const auto t = scratch("decode_mismatch_net");
  ASSERT_EQ(run({"prep", "--out", t, "oracle=" + kData + "/oracle_small.json", "synth_pairs=10"}).code, 0);
  std::vector<std::string> train{"train", "--out", t, "steps=0"};
  train.insert(train.end(), std::begin(kSmallNet), std::end(kSmallNet));
  ASSERT_EQ(run(train).code, 0);
  auto d = run({"decode", "--out", t, "vocab=" + dir + "/vocab.txt"});
  EXPECT_EQ(d.code, cli::kVocabMismatch);
}

TEST(CliEval, UniformPerplexityAndRandomControl) {
  const auto dir = scratch("eval");
  ASSERT_EQ(run({"prep", "--out", dir, "oracle=" + kData + "/oracle_small.json", "synth_pairs=300"}).code, 0);
  auto r = run({"eval", "--out", dir, "mode=ppl", "model=uniform"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(dir + "/ppl_report.json");
  const auto j = nlohmann::json::parse(in);
  EXPECT_NEAR(j["perplexity"].get<double>(), 16.0, 1e-9);

  auto e = run({"eval", "--out", dir, "scheme=random", "model=uniform", "trials=2000"});
  ASSERT_EQ(e.code, 0) << e.err;
  std::ifstream rin(dir + "/eval_report.json");
  const auto rep = nlohmann::json::parse(rin);
  EXPECT_EQ(rep["scheme"], "random");
  EXPECT_NEAR(rep["accuracy"].get<double>(), 0.1, 3 * std::sqrt(0.09 / 2000));

  auto big = run({"eval", "--out", dir, "model=uniform", "N=100000"});
  EXPECT_EQ(big.code, cli::kInsufficientData);
}

TEST(CliEval, LengthsCsv) {
  const auto dir = scratch("lengths");
  write(dir + "/responses.jsonl",
        "{\"response\":\"" + std::string(10, 'a') + "\"}\n{\"response\":\"" + std::string(50, 'b') +
            "\"}\n{\"response\":\"" + std::string(120, 'c') + "\"}\n");
  auto r = run({"eval", "--out", dir, "mode=lengths"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(dir + "/lengths.csv"),
            "threshold,count,fraction\n40,2,0.6666666666666666\n100,1,0.3333333333333333\n");
  EXPECT_NE(r.out.find("distinct-1="), std::string::npos);
}

TEST(CliConfig, FilePrecedenceAndDefaults) {
  const auto dir = scratch("config");
  write(dir + "/run.cfg", "# comment\n\nsteps = 7\nstrategy=segment\nseed=1\n");
  cli::RunConfig cfg;
  cfg.load_file(dir + "/run.cfg");
  EXPECT_EQ(cfg.u64("steps"), 7u);
  EXPECT_EQ(cfg.str("strategy"), "segment");
  EXPECT_EQ(cfg.size("B"), 2u);
  EXPECT_DOUBLE_EQ(cfg.real("alpha"), 0.8);
  EXPECT_EQ(cfg.size_list("thresholds"), (std::vector<std::size_t>{40, 100}));
  EXPECT_THROW(cfg.set("strategy", "nope"), InvalidInput);
  EXPECT_THROW(cfg.apply("noequals"), InvalidInput);
  EXPECT_EQ(cfg.path_or("vocab", "vocab.txt"), "out/vocab.txt");

  // Flags beat positional overrides, which beat the file.
  write(dir + "/prompts.txt", "q\n");
  const auto o = deterministic_oracle(dir);
  write(dir + "/run.cfg", "strategy=segment\nout=/nonexistent/should/not/be/used\n");
  auto r = run({"decode", "--config", dir + "/run.cfg", "--out", dir, "--strategy", "beam",
                "strategy=backoff", "model=oracle", "oracle=" + o});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(jsonl(dir + "/responses.jsonl")[0]["strategy"], "beam");
}

TEST(CliChat, LoopCommandsAndErrors) {
  const auto dir = scratch("chat");
  const auto o = deterministic_oracle(dir);
  auto r = run({"chat", "--out", dir, "model=oracle", "oracle=" + o, "--strategy", "segment"},
               "q\n\n/trace on\nq\n/trace off\n/quit\nq\n");
  ASSERT_EQ(r.code, 0) << r.err;
  std::size_t answers = 0;
  std::istringstream lines(r.out);
  for (std::string line; std::getline(lines, line);)
    answers += line == "yes." || line == "> yes.";
  EXPECT_EQ(answers, 2u);
  EXPECT_NE(r.out.find("trace on"), std::string::npos);
  EXPECT_NE(r.out.find("S="), std::string::npos);

  // A single-prompt pool leaves nothing to contrast against; the loop reports and continues.
  write(dir + "/pool.txt", "q\n");
  auto e = run({"chat", "--out", dir, "model=oracle", "oracle=" + o, "--strategy", "segment",
                "pool=" + dir + "/pool.txt"},
               "q\nq\n");
  EXPECT_EQ(e.code, 0);
  EXPECT_NE(e.err.find("error:"), std::string::npos);
}
