#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "support.hpp"

namespace {

using revdict::testing::TempDir;

struct RunResult {
  int exit_code = -1;
  std::string out;
};

// Runs the CLI with `args` (already shell-quoted), capturing stdout.
RunResult run_cli(const std::string& args, const std::string& model_dir_env = "") {
  const std::string cmd = "REVDICT_MODEL_DIR='" + model_dir_env + "' " + std::string(REVDICT_CLI) + " " + args +
                          " 2>/dev/null";
  RunResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli("").exit_code, 2);
  EXPECT_EQ(run_cli("frobnicate").exit_code, 2);
  EXPECT_EQ(run_cli("query --no-such-flag").exit_code, 2);
  EXPECT_EQ(run_cli("--help").exit_code, 0);
  EXPECT_EQ(run_cli("train --help").exit_code, 0);
}

TEST(Cli, GradCheckTinyPasses) {
  const auto r = run_cli("grad-check --config tiny --samples 4 --json");
  ASSERT_EQ(r.exit_code, 0) << r.out;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_TRUE(j.at("all_pass").get<bool>());
  EXPECT_GT(j.at("tensors").size(), 30u);
}

TEST(Cli, FailuresExitNonzeroWithoutUsage) {
  TempDir dir("cli_fail");
  EXPECT_EQ(run_cli("eval --checkpoint " + dir.file("nope") + " --corpus " + dir.file("nope.jsonl")).exit_code, 1);
  EXPECT_EQ(run_cli("query --config " + dir.file("missing.json") + " --target-lang l1").exit_code, 2);
}

TEST(Cli, EndToEndPipeline) {
  TempDir dir("cli");
  const std::string d = dir.path().string();
  dir.write("spec.json", R"({"word_count": 40, "description_count": 4})");
  ASSERT_EQ(run_cli("synth --spec " + d + "/spec.json --out " + d + "/data --seed 3 --seen-count 20").exit_code, 0);
  ASSERT_EQ(run_cli("build-index --vocab " + d + "/data/vocab.txt --words l1=" + d + "/data/words_l1.txt --words l2=" +
                    d + "/data/words_l2.txt --out " + d + "/index.json")
                .exit_code,
            0);
  // Config file supplies the options; the explicit --epochs overrides it.
  dir.write("train.json", nlohmann::json{{"corpus", d + "/data/corpus.jsonl"},
                                         {"vocab", d + "/data/vocab.txt"},
                                         {"index", d + "/index.json"},
                                         {"mode", "unaligned_multilingual"},
                                         {"epochs", 50},
                                         {"d_model", 16},
                                         {"ffn_dim", 32},
                                         {"quiet", true}}
                              .dump());
  ASSERT_EQ(run_cli("train --config " + d + "/train.json --epochs 1 --out " + d + "/model").exit_code, 0);
  std::ifstream log(d + "/model/train_log.jsonl");
  std::string line;
  int epochs = 0;
  while (std::getline(log, line)) ++epochs;
  EXPECT_EQ(epochs, 1);

  const auto eval = run_cli("eval --checkpoint " + d + "/model/model.ckpt --corpus " + d +
                            "/data/corpus.jsonl --split unseen --group-by-subwords");
  ASSERT_EQ(eval.exit_code, 0);
  const auto j = nlohmann::json::parse(eval.out);
  EXPECT_EQ(j.at("split"), "unseen");
  EXPECT_GT(j.at("metrics").at("n_samples").get<int>(), 0);
  EXPECT_TRUE(j.contains("groups"));

  const auto q = run_cli("query --checkpoint " + d + "/model --def 'some words' --def-lang l1 --target-lang l2 --top-n 4");
  ASSERT_EQ(q.exit_code, 0);
  EXPECT_EQ(std::count(q.out.begin(), q.out.end(), '\n'), 4);

  ASSERT_EQ(run_cli("export-scores --checkpoint " + d + "/model --def 'some words' --target-lang l2 --out " + d +
                    "/s.bin")
                .exit_code,
            0);
  const auto from_file = run_cli("query --scores-file " + d + "/s.bin --vocab " + d + "/model/vocab.txt --index " + d +
                                 "/model/index.json --target-lang l2 --top-n 4");
  ASSERT_EQ(from_file.exit_code, 0);
  // Same matrix, same ranking; only the float formatting path differs.
  auto first_col = [](const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string line;
    while (std::getline(in, line)) out.push_back(line.substr(0, line.rfind('\t')));
    return out;
  };
  EXPECT_EQ(first_col(from_file.out), first_col(q.out));

  const auto pivot = run_cli("eval --checkpoint " + d + "/model --corpus " + d + "/data/corpus.jsonl --split test --pair l1-\\>l2 --pivot-lexicon " +
                             d + "/data/lexicon_l1_l2.tsv");
  ASSERT_EQ(pivot.exit_code, 0);
  EXPECT_EQ(nlohmann::json::parse(pivot.out).at("language_pair"), "l1->l2");

  const auto env = run_cli("query --def 'x' --def-lang l1 --target-lang l1 --top-n 1");
  EXPECT_EQ(env.exit_code, 1);
  const auto with_env = run_cli("query --def 'x' --def-lang l1 --target-lang l1 --top-n 1", d + "/model");
  EXPECT_EQ(with_env.exit_code, 0);
}

}  // namespace
