#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <gtest/gtest.h>
#include <json.hpp>

#include "p2pmatch/cli.hpp"
#include "p2pmatch/io.hpp"

namespace p2pmatch {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome cli(std::vector<std::string> args) {
  args.insert(args.begin(), "p2pmatch");
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("p2pmatch_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(cli({"frobnicate"}).code, 1);
  EXPECT_EQ(cli({}).code, 1);
  EXPECT_EQ(cli({"run"}).code, 1);
  EXPECT_EQ(cli({"oracle-check", "--solver", "magic"}).code, 1);
  EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST(Cli, RuntimeErrorsExitTwo) {
  const Outcome r = cli({"run", "--config", "/nonexistent/x.cfg"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("error"), std::string::npos);
}

TEST(Cli, OracleCheckSeven) {
  const Outcome r = cli({"oracle-check", "--k", "2", "--n", "4", "--trials", "100", "--seed", "7"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "100/100 matched oracle\n");
  const Outcome lp = cli({"oracle-check", "--trials", "30", "--seed", "7", "--solver", "exact-lp"});
  EXPECT_EQ(lp.out, "30/30 matched oracle\n");
}

TEST(Cli, GenerateRunSummarize) {
  const fs::path dir = scratch_dir("flow");
  std::ofstream(dir / "small.cfg") << "k=2 n=5 c_min=1 c_max=6 horizon=30 runs=3 seed=9\n"
                                   << "out_dir=" << (dir / "out").string() << '\n';
  const std::string cfg = (dir / "small.cfg").string();

  Outcome g = cli({"generate", "--config", cfg, "--out", (dir / "inst.txt").string()});
  ASSERT_EQ(g.code, 0) << g.err;
  const MarketInstance inst = read_instance((dir / "inst.txt").string());
  EXPECT_EQ(inst.num_borrowers, 2u);
  EXPECT_EQ(inst.num_lenders, 5u);

  Outcome r = cli({"run", "--config", cfg});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "out" / "trace.csv"));
  EXPECT_TRUE(fs::exists(dir / "out" / "summary.json"));
  // Without --instance the run generates the same instance as `generate`.
  EXPECT_EQ(read_instance((dir / "out" / "instance.txt").string()), inst);

  Outcome again = cli({"run", "--config", cfg, "--instance", (dir / "inst.txt").string(),
                       "--out-dir", (dir / "again").string(), "--jobs", "2"});
  ASSERT_EQ(again.code, 0) << again.err;
  EXPECT_EQ(slurp(dir / "out" / "trace.csv"), slurp(dir / "again" / "trace.csv"));

  Outcome s = cli({"summarize", "--csv", (dir / "out" / "trace.csv").string(), "--out",
                   (dir / "sum.json").string()});
  ASSERT_EQ(s.code, 0) << s.err;
  const nlohmann::json ran = nlohmann::json::parse(slurp(dir / "out" / "summary.json"));
  const nlohmann::json summed = nlohmann::json::parse(slurp(dir / "sum.json"));
  EXPECT_EQ(summed["runs"], 3);
  ASSERT_EQ(summed["lenders"].size(), 5u);
  for (std::size_t l = 0; l < 5; ++l) {
    EXPECT_NEAR(summed["lenders"][l]["terminal_regret_mean"].get<double>(),
                ran["lenders"][l]["terminal_regret_mean"].get<double>(), 1e-9);
  }
}

TEST(Cli, BinaryExitCodes) {
  const std::string bin = P2PMATCH_CLI_PATH;
  ASSERT_TRUE(fs::exists(bin));
  const auto status = [&](const std::string& args) {
    const int raw = std::system((bin + " " + args + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(raw);
  };
  EXPECT_EQ(status("bogus"), 1);
  EXPECT_EQ(status("oracle-check --trials 5"), 0);
  EXPECT_EQ(status("summarize --csv /nonexistent.csv --out /tmp/x.json"), 2);
}

}  // namespace
}  // namespace p2pmatch
