#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include <algorithm>

#include <gtest/gtest.h>

#include "dupdist/cli.hpp"

namespace dupdist {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "dupdist");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// One synthetic corpus and one trained checkpoint shared by the whole suite.
class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    log::set_level(log::Level::warn);
    root_ = fs::temp_directory_path() / ("dupdist_cli_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    std::ofstream(root_ / "tiny.json") << R"({"d": 8, "g": 6, "k": 2, "a": 12, "mlp_hidden": 8,
      "batch": 16, "epochs": 2, "lr": 0.01, "dropout": 0.0, "target_dup_fraction": 0.15})";
    synth_ = cli({"synth", "--topics", "3", "--reports-per-topic", "40", "--dup-rate", "0.2", "--out",
                  (root_ / "data").string()});
    train_ = cli({"train", "--dataset", reports(), "--format", "jsonl", "--config", config(), "--seed", "1", "--out",
                  (root_ / "run").string()});
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static std::string reports() { return (root_ / "data" / "reports.jsonl").string(); }
  static std::string config() { return (root_ / "tiny.json").string(); }
  static std::string ckpt() { return (root_ / "run" / "model_seed1.ckpt").string(); }
  static std::string test_pairs() { return (root_ / "run" / "test_seed1.tsv").string(); }
  static std::string manifest_hash() {
    return nlohmann::json::parse(slurp(root_ / "run" / "manifest.json"))["manifest_hash"].get<std::string>();
  }

  static inline fs::path root_;
  static inline CliRun synth_, train_;
};

TEST_F(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(cli({"--help"}).code, 0);
  const auto bogus = cli({"train", "--out", (root_ / "x").string(), "--bogus"});
  EXPECT_EQ(bogus.code, 2);
  EXPECT_NE(bogus.err.find("--bogus"), std::string::npos);
  EXPECT_NE(bogus.err.find("--dataset"), std::string::npos);  // subcommand usage follows
  EXPECT_EQ(cli({"frobnicate"}).code, 2);
  EXPECT_EQ(cli({"eval", "--pairs", "p.tsv"}).code, 2);  // --checkpoint missing
  EXPECT_EQ(cli({"train", "--dataset", "nope.csv", "--out", (root_ / "y").string()}).code, 1);
}

TEST_F(Cli, SynthAndTrainWriteArtifacts) {
  ASSERT_EQ(synth_.code, 0) << synth_.err;
  ASSERT_EQ(train_.code, 0) << train_.err;
  EXPECT_NE(train_.out.find("seed 1: best epoch"), std::string::npos) << train_.out;
  for (const char* f : {"model_seed1.ckpt", "train_seed1.tsv", "val_seed1.tsv", "test_seed1.tsv",
                        "train_report.json", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(root_ / "run" / f)) << f;
  }
  const auto report = nlohmann::json::parse(slurp(root_ / "run" / "train_report.json"));
  EXPECT_EQ(report["runs"].size(), 1u);
  EXPECT_EQ(report["runs"][0]["epochs"].size(), 2u);
  const auto manifest = nlohmann::json::parse(slurp(root_ / "run" / "manifest.json"));
  EXPECT_EQ(manifest["config"]["d"], 8);
  EXPECT_EQ(manifest["seeds"], nlohmann::json::array({1}));
  EXPECT_FALSE(manifest["dataset_fingerprint"].get<std::string>().empty());
}

TEST_F(Cli, ManifestHashInEveryArtifact) {
  const std::string hash = manifest_hash();
  EXPECT_NE(slurp(root_ / "run" / "train_report.json").find(hash), std::string::npos);
  for (const char* split : {"train", "val", "test"}) {
    EXPECT_EQ(slurp(root_ / "run" / (std::string(split) + "_seed1.tsv")).rfind("# manifest " + hash, 0), 0u);
  }
  EXPECT_EQ(load_checkpoint(ckpt()).manifest_hash, hash);

  const auto synth_hash = nlohmann::json::parse(slurp(root_ / "data" / "manifest.json"))["manifest_hash"];
  std::istringstream lines(slurp(reports()));
  std::string line;
  while (std::getline(lines, line)) ASSERT_EQ(nlohmann::json::parse(line)["manifest_hash"], synth_hash);
  EXPECT_EQ(nlohmann::json::parse(slurp(root_ / "data" / "topics.json"))["manifest_hash"], synth_hash);
}

TEST_F(Cli, EvalMatchesLibraryAndWritesMetrics) {
  const auto r = cli({"eval", "--dataset", reports(), "--format", "jsonl", "--checkpoint", ckpt(), "--pairs",
                      test_pairs(), "--out", (root_ / "eval").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(root_ / "eval" / "metrics.json"));
  auto ck = load_checkpoint(ckpt());
  Corpus corpus = load_reports(reports(), ReportFormat::jsonl);
  encode_corpus(corpus, ck.vocab);
  const auto m = evaluate(ck.params, corpus, read_pairs(test_pairs()));
  EXPECT_EQ(j["f1"].get<double>(), m.f1);
  EXPECT_EQ(j["tp"].get<std::size_t>(), m.tp);
  EXPECT_EQ(j["checkpoint_manifest_hash"], manifest_hash());
  EXPECT_FALSE(j["manifest_hash"].get<std::string>().empty());
}

TEST_F(Cli, EvalRefusesConflictingSettings) {
  const std::vector<std::string> base = {"eval", "--dataset", reports(), "--format", "jsonl", "--checkpoint", ckpt(),
                                         "--pairs", test_pairs()};
  auto with = [&](std::vector<std::string> extra) {
    auto args = base;
    args.insert(args.end(), extra.begin(), extra.end());
    return cli(args);
  };
  const auto lambda = with({"--lambda", "0.3"});
  EXPECT_EQ(lambda.code, 1);
  EXPECT_NE(lambda.err.find("conflict"), std::string::npos) << lambda.err;
  EXPECT_EQ(with({"--cond-attn", "scalar_dot"}).code, 1);
  EXPECT_EQ(with({"--sim-sign", "literal"}).code, 1);
  std::ofstream(root_ / "wide.json") << R"({"d": 8, "g": 10, "k": 2, "a": 12, "mlp_hidden": 8})";
  EXPECT_EQ(with({"--config", (root_ / "wide.json").string()}).code, 1);
  EXPECT_EQ(with({"--lambda", "0.5"}).code, 0);  // agrees with the checkpoint
  EXPECT_EQ(with({"--config", config()}).code, 0);
}

TEST_F(Cli, ClusterWritesReportAndGraph) {
  const auto r = cli({"cluster", "--dataset", reports(), "--format", "jsonl", "--checkpoint", ckpt(), "--k", "3",
                      "--all", "--out", (root_ / "clusters").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("purity"), std::string::npos);
  const auto hash = nlohmann::json::parse(slurp(root_ / "clusters" / "manifest.json"))["manifest_hash"];
  std::istringstream lines(slurp(root_ / "clusters" / "clusters.jsonl"));
  std::string line;
  std::size_t n = 0, total = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["manifest_hash"], hash);
    total += j["size"].get<std::size_t>();
    ++n;
  }
  EXPECT_EQ(n, 3u);
  EXPECT_EQ(total, 120u);
  const std::string dot = slurp(root_ / "clusters" / "clusters.dot");
  EXPECT_EQ(dot.rfind("graph clusters {", 0), 0u);
  EXPECT_NE(dot.find("// manifest " + hash.get<std::string>()), std::string::npos);
  EXPECT_EQ(cli({"cluster", "--dataset", reports(), "--format", "jsonl", "--checkpoint", ckpt(), "--k", "500"}).code, 1);
}

TEST_F(Cli, AttentionSingleWordReport) {
  std::ofstream(root_ / "pair.jsonl") << R"({"id":"P","title":"Crash"})" "\n"
                                      << R"({"id":"Q","title":"Photo upload never finishes"})" "\n";
  const auto r = cli({"attention", "--dataset", (root_ / "pair.jsonl").string(), "--format", "jsonl",
                      "--checkpoint", ckpt(), "--p", "P", "--q", "Q"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out.substr(r.out.find("{\"")));
  ASSERT_EQ(j["p"]["words"].size(), 1u);
  EXPECT_EQ(j["p"]["words"][0]["token"], "crash");
  EXPECT_DOUBLE_EQ(j["p"]["words"][0]["alpha"].get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(j["p"]["words"][0]["beta"].get<double>(), 1.0);
  double alpha = 0.0, beta = 0.0;
  for (const auto& w : j["q"]["words"]) {
    alpha += w["alpha"].get<double>();
    beta += w["beta"].get<double>();
  }
  EXPECT_NEAR(alpha, 1.0, 1e-12);
  EXPECT_NEAR(beta, 1.0, 1e-12);
  EXPECT_NE(r.out.find("token"), std::string::npos);  // table header
}

TEST_F(Cli, AttentionDumpIsReproducible) {
  const std::vector<std::string> args = {"attention", "--dataset", reports(), "--format", "jsonl",
                                         "--checkpoint", ckpt(), "--p", "syn-00000", "--q", "syn-00001"};
  const auto a = cli(args), b = cli(args);
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(cli({"attention", "--dataset", reports(), "--format", "jsonl", "--checkpoint", ckpt(), "--p", "nope",
                 "--q", "syn-00001"})
                .code,
            1);
}

TEST_F(Cli, BaselineAndPairsGen) {
  const auto pg = cli({"pairs-gen", "--dataset", reports(), "--format", "jsonl", "--dup-fraction", "0.2", "--seed",
                       "3", "--out", (root_ / "pairs").string()});
  ASSERT_EQ(pg.code, 0) << pg.err;
  const auto pairs = read_pairs((root_ / "pairs" / "pairs.tsv").string());
  const double pos = std::count_if(pairs.begin(), pairs.end(), [](const auto& p) { return p.label == 1; });
  EXPECT_NEAR(pos / pairs.size(), 0.2, 0.005);

  const auto bl = cli({"baseline", "--dataset", reports(), "--format", "jsonl", "--pairs",
                       (root_ / "pairs" / "pairs.tsv").string(), "--seed", "1", "--out", (root_ / "bl").string()});
  ASSERT_EQ(bl.code, 0) << bl.err;
  const auto j = nlohmann::json::parse(slurp(root_ / "bl" / "baseline_report.json"));
  EXPECT_EQ(j["runs"].size(), 1u);
  EXPECT_FALSE(j["manifest_hash"].get<std::string>().empty());
}

TEST_F(Cli, IngestCsv) {
  std::ofstream(root_ / "mini.csv") << "Issue_id,Title,Duplicated_issue\n1,App crashes,\n2,App crash on start,1\n"
                                       "3,,\n4,Login broken,\n";
  const auto r = cli({"ingest", "--dataset", (root_ / "mini.csv").string(), "--out", (root_ / "ingest").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto stats = nlohmann::json::parse(slurp(root_ / "ingest" / "ingest_stats.json"));
  EXPECT_EQ(stats["reports"], 3);
  const auto back = load_reports((root_ / "ingest" / "reports.jsonl").string(), ReportFormat::jsonl);
  EXPECT_EQ(back.reports.size(), 3u);
  EXPECT_EQ(back.groups.group_of[back.require("2")], back.groups.group_of[back.require("1")]);
}

}  // namespace
}  // namespace dupdist
