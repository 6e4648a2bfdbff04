#include <fstream>
#include <sstream>

#include <json.hpp>

#include "test_util.hpp"
#include "uom/cli.hpp"

namespace uom {
namespace {

struct CliRun {
  int code;
  std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

nlohmann::json read_json(const std::filesystem::path& p) { return nlohmann::json::parse(slurp(p)); }

class Cli : public ::testing::Test {
 protected:
  test::TempDir dir;
  std::string at(const std::string& name) const { return (dir / name).string(); }

  void synth(const std::string& out = "synth") {
    const CliRun r = cli({"synth", "--dims", "2,4", "--n", "300", "--ambient-dim", "8", "--gap", "5", "--seed", "3",
                       "--out", at(out)});
    ASSERT_EQ(r.code, 0) << r.err;
  }
};

TEST_F(Cli, PipelineClosure) {
  synth();
  EXPECT_TRUE(std::filesystem::exists(dir / "synth/data.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "synth/truth.json"));

  CliRun r = cli({"estimate-id", "--input", at("synth/data.csv"), "--labels", at("synth/labels.csv"), "--k", "3,5,10,20",
               "--out", at("id")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = read_json(dir / "id/id_report.json");
  EXPECT_EQ(report.at("k_list"), (std::vector<int>{3, 5, 10, 20}));
  EXPECT_TRUE(std::filesystem::exists(dir / "id/id_report.csv"));

  r = cli({"cluster", "--input", at("synth/data.csv"), "--L", "2", "--out", at("clusters")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(dir / "clusters/dendrogram.csv"));

  r = cli({"train", "--input", at("synth/data.csv"), "--clusters", "groups", "--groups", at("clusters/groups.csv"),
           "--dims", "auto", "--k", "10", "--seed", "1", "--out", at("model")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto manifest = read_json(dir / "model/manifest.json");
  EXPECT_EQ(manifest.at("L"), 2);

  r = cli({"sample", "--model", at("model"), "--m", "500", "--seed", "2", "--out", at("samples")});
  ASSERT_EQ(r.code, 0) << r.err;

  r = cli({"eval", "--samples", at("samples/samples.csv"), "--reference", at("synth/data.csv"), "--train",
           at("synth/data.csv"), "--mmd", "--bridge", "--out", at("eval")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ev = read_json(dir / "eval/eval.json");
  EXPECT_TRUE(ev.contains("mmd"));
  EXPECT_LT(ev["bridge"]["off_support_fraction"].get<double>(), 0.05);
  for (const char* sub : {"synth", "id", "clusters", "model", "samples", "eval"})
    EXPECT_TRUE(std::filesystem::exists(dir / sub / "run.json")) << sub;
}

TEST_F(Cli, TrainFromLabelsThenSample) {
  synth();
  CliRun r = cli({"train", "--input", at("synth/data.csv"), "--clusters", "labels", "--labels", at("synth/labels.csv"),
               "--dims", "auto", "--out", at("model")});
  ASSERT_EQ(r.code, 0) << r.err;
  r = cli({"sample", "--model", at("model"), "--m", "10000", "--out", at("s")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(dir / "s/sample_clusters.csv");
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  EXPECT_EQ(lines, 10001u);
}

TEST_F(Cli, UsageErrorsExitTwo) {
  synth();
  CliRun r = cli({"cluster", "--input", at("synth/data.csv"), "--L", "0", "--out", at("c")});
  EXPECT_EQ(r.code, 2);
  r = cli({"estimate-id", "--input", at("synth/data.csv"), "--bogus", "1", "--out", at("c")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--labels"), std::string::npos) << "usage should list the subcommand's flags";
  EXPECT_NE(r.err.find("--k"), std::string::npos);
  EXPECT_EQ(cli({"frobnicate"}).code, 2);
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"eval", "--out", at("e")}).code, 2);
}

TEST_F(Cli, RuntimeErrorsExitOne) {
  std::ofstream(dir / "bad.csv") << "1,2\n3\n";
  const CliRun r = cli({"estimate-id", "--input", at("bad.csv"), "--out", at("o")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("row 2"), std::string::npos) << r.err;
}

TEST_F(Cli, ConfigFileWithFlagOverride) {
  std::ofstream(dir / "cfg.json") << R"({"dims": [1, 2], "n": 50, "ambient-dim": 4, "gap": 2})";
  CliRun r = cli({"synth", "--config", at("cfg.json"), "--out", at("a")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto run = read_json(dir / "a/run.json");
  EXPECT_EQ(run["n"], 50);
  EXPECT_EQ(run["dims"], (std::vector<int>{1, 2}));

  r = cli({"synth", "--config", at("cfg.json"), "--n", "70", "--out", at("b")});
  ASSERT_EQ(r.code, 0) << r.err;
  run = read_json(dir / "b/run.json");
  EXPECT_EQ(run["n"], 70);
  EXPECT_EQ(run["ambient-dim"], 4);

  std::ofstream(dir / "nested.json") << R"({"synth": {"dims": [3], "n": 40}})";
  r = cli({"synth", "--config", at("nested.json"), "--out", at("c")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_json(dir / "c/run.json")["n"], 40);

  std::ofstream(dir / "unknown.json") << R"({"dims": [3], "nonsense": 1})";
  EXPECT_EQ(cli({"synth", "--config", at("unknown.json"), "--out", at("d")}).code, 2);
}

TEST_F(Cli, RunJsonEchoesDefaultsWithoutAbsolutePaths) {
  synth();
  const auto run = read_json(dir / "synth/run.json");
  EXPECT_EQ(run["subcommand"], "synth");
  EXPECT_EQ(run["kind"], "affine");
  EXPECT_EQ(run["noise"], 0);
  EXPECT_EQ(run["seed"], 3);
  EXPECT_FALSE(std::filesystem::path(run["out"].get<std::string>()).is_absolute());
  for (const auto& [key, value] : run.items())
    if (value.is_string()) EXPECT_NE(value.get<std::string>().front(), '/') << key;
  EXPECT_EQ(slurp(dir / "synth/truth.json").find(dir.path().string()), std::string::npos);
}

TEST_F(Cli, SameCommandSameBytes) {
  synth("a");
  synth("b");
  EXPECT_EQ(slurp(dir / "a/data.csv"), slurp(dir / "b/data.csv"));
  for (const char* out : {"ia", "ib"})
    ASSERT_EQ(cli({"estimate-id", "--input", at("a/data.csv"), "--labels", at("a/labels.csv"), "--out", at(out)}).code,
              0);
  EXPECT_EQ(slurp(dir / "ia/id_report.json"), slurp(dir / "ib/id_report.json"));
}

TEST_F(Cli, WeightsCommand) {
  synth();
  const CliRun r = cli({"weights", "--input", at("synth/data.csv"), "--labels", at("synth/labels.csv"), "--k", "10",
                     "--epochs", "5", "--out", at("w")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(dir / "w/weights.csv").rfind("class,d_hat,omega\n", 0), 0u);
  EXPECT_TRUE(std::filesystem::exists(dir / "w/classifier.params"));
  const auto j = read_json(dir / "w/weights.json");
  EXPECT_EQ(j["omega"].size(), 2u);
}

TEST_F(Cli, EvalIdAccuracy) {
  std::ofstream(dir / "pairs.csv") << "d_hat,accuracy\n1,0.9\n2,0.8\n3,0.75\n4,0.6\n";
  const CliRun r = cli({"eval", "--id-accuracy", at("pairs.csv"), "--out", at("e")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_LT(read_json(dir / "e/eval.json")["id_accuracy"]["r"].get<double>(), -0.9);
  EXPECT_TRUE(std::filesystem::exists(dir / "e/id_accuracy.tsv"));
}

TEST_F(Cli, ReproWritesReport) {
  const CliRun r = cli({"repro", "weighted-ce", "--out", at("r")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("PASS weighted-ce"), std::string::npos);
  const auto j = read_json(dir / "r/weighted-ce/report.json");
  EXPECT_TRUE(j["passed"].get<bool>());
  EXPECT_TRUE(std::filesystem::exists(dir / "r/weighted-ce/loss_trace.tsv"));
}

}  // namespace
}  // namespace uom
