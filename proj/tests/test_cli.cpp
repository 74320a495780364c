#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("cpc_cli_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // Runs the binary; stdout goes to `last_out_`.
  int run(const std::string& args) {
    const std::string out = path("stdout.txt");
    const std::string cmd = std::string(CPC_CLI_PATH) + " " + args + " >" + out + " 2>" + path("stderr.txt");
    const int status = std::system(cmd.c_str());
    last_out_ = slurp(out);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  static std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  fs::path dir_;
  std::string last_out_;
};

}  // namespace

TEST_F(Cli, GenDataIsDeterministic) {
  ASSERT_EQ(run("gen-data --count 20 --seed 3 --out " + path("a.jsonl")), 0);
  ASSERT_EQ(run("gen-data --count 20 --seed 3 --out " + path("b.jsonl")), 0);
  EXPECT_EQ(slurp(path("a.jsonl")), slurp(path("b.jsonl")));
  EXPECT_TRUE(fs::exists(path("a.jsonl.manifest.json")));
  ASSERT_EQ(run("gen-data --count 20 --seed 4 --out " + path("c.jsonl")), 0);
  EXPECT_NE(slurp(path("a.jsonl")), slurp(path("c.jsonl")));
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("gen-data --count 5 --len-min 3 --out " + path("x.jsonl")), 2);
  EXPECT_EQ(run("no-such-command"), 2);
  EXPECT_EQ(run("decompose --strategy head-to-tail"), 2);
  EXPECT_EQ(run("decompose --strategy pretzel --length 10"), 2);
  EXPECT_NE(slurp(path("stderr.txt")).find("hint"), std::string::npos);
}

TEST_F(Cli, CheckExitCodes) {
  {
    std::ofstream f(path("s.jsonl"));
    // 0-3 at 3.8 A apart; head-to-tail on 4 residues needs d(0,3) = 3.8
    f << R"({"types":[0,0,0,0],"coords":[[0,0,0],[3.8,0,0],[3.8,3.8,0],[0,3.8,0]]})" << "\n";
  }
  EXPECT_EQ(run("check --structures " + path("s.jsonl") + " --strategy head-to-tail"), 0);
  EXPECT_NE(last_out_.find("structure 0: PASS"), std::string::npos);
  EXPECT_EQ(run("check --structures " + path("s.jsonl") + " --strategy disulfide --anchors 0,3"), 1);
  EXPECT_NE(last_out_.find("FAIL"), std::string::npos);
  {
    std::ofstream f(path("bad.jsonl"));
    f << "{not json\n";
  }
  EXPECT_EQ(run("check --structures " + path("bad.jsonl") + " --strategy head-to-tail"), 2);
  EXPECT_EQ(run("check --structures " + path("missing.jsonl") + " --strategy head-to-tail"), 2);
}

TEST_F(Cli, DecomposePrintsCanonicalText) {
  ASSERT_EQ(run("decompose --strategy head-to-tail --length 10"), 0);
  EXPECT_NE(last_out_.find("distance 0 9 3.800"), std::string::npos) << last_out_;
  ASSERT_EQ(run("decompose --strategy disulfide --anchors 1,5 --length 10 --out " + path("d.txt")), 0);
  const std::string text = slurp(path("d.txt"));
  EXPECT_NE(text.find("type 1 C"), std::string::npos) << text;
  EXPECT_NE(text.find("type 5 C"), std::string::npos) << text;
}

TEST_F(Cli, ReplayReproducesOutputsByteForByte) {
  ASSERT_EQ(run("gen-data --count 6 --len-min 8 --len-max 9 --seed 1 --out " + path("d.jsonl")), 0);
  ASSERT_EQ(run("train --data " + path("d.jsonl") + " --out " + path("m.ckpt") +
                " --set hidden=4 --set layers=1 --set steps=10 --set latent_width=4 --set time_width=4"
                " --set geom_channels=2 --set rbf_channels=8 --epochs 2 --batch-size 3 --quiet"),
            0);
  ASSERT_EQ(run("sample --checkpoint " + path("m.ckpt") + " --strategy head-to-tail --length 8 --num 3 --seed 2"
                " --guidance-weight 1 --out " + path("s.jsonl")),
            0);
  ASSERT_EQ(run("eval --samples " + path("s.jsonl") + " --reference " + path("d.jsonl") +
                " --strategy head-to-tail --samples-per-target 3 --out " + path("r.json")),
            0);
  const std::string files[] = {"d.jsonl", "m.ckpt", "m.ckpt.loss.tsv", "s.jsonl", "r.json"};
  std::map<std::string, std::string> before;
  for (const auto& f : files) before[f] = slurp(path(f));
  for (const auto& f : files) fs::remove(path(f));
  for (const auto& m : {"d.jsonl", "m.ckpt", "s.jsonl", "r.json"}) {
    ASSERT_EQ(run("replay-from-manifest " + path(std::string(m) + ".manifest.json")), 0) << m;
  }
  for (const auto& f : files) EXPECT_EQ(slurp(path(f)), before[f]) << f;
}

TEST_F(Cli, ExampleConfigAndConstraintFile) {
  const std::string ex = CPC_EXAMPLES_DIR;
  ASSERT_EQ(run("gen-data --count 8 --len-min 14 --len-max 14 --out " + path("d.jsonl")), 0);
  ASSERT_EQ(run("train --data " + path("d.jsonl") + " --config " + ex + "/smoke.cfg --out " + path("m.ckpt") + " --quiet"), 0);
  ASSERT_EQ(run("sample --checkpoint " + path("m.ckpt") + " --constraints " + ex +
                "/stapled_disulfide.txt --length 14 --num 2 --out " + path("s.jsonl")),
            0);
  EXPECT_NE(slurp(path("s.jsonl.manifest.json")).find("type 2 K"), std::string::npos);
  // the desk-scale config parses and passes validation; one step keeps it fast
  EXPECT_EQ(run("train --data " + path("d.jsonl") + " --config " + ex + "/desk_scale.cfg --max-steps 1 --out " +
                path("big.ckpt") + " --quiet"),
            0);
  EXPECT_EQ(run("train --data " + path("d.jsonl") + " --set no_such_key=1 --out " + path("x.ckpt")), 2);
}

TEST_F(Cli, ReplayRejectsBadManifests) {
  {
    std::ofstream f(path("m.json"));
    f << R"({"schema_version":1,"argv":["x","replay-from-manifest","m.json"]})";
  }
  EXPECT_EQ(run("replay-from-manifest " + path("m.json")), 2);
  {
    std::ofstream f(path("m.json"));
    f << "[";
  }
  EXPECT_EQ(run("replay-from-manifest " + path("m.json")), 2);
}
