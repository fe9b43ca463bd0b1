#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cli_app.hpp"

namespace fs = std::filesystem;
using motbounds::cli::json;

namespace {

const fs::path kSamples = MOTBOUNDS_SAMPLES;

struct Run {
  int code;
  std::string out, err;
};

Run cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = motbounds::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("motbounds_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string sample(const char* name) { return (kSamples / name).string(); }

}  // namespace

TEST(Cli, ForcedChainCollapsesEveryBound) {
  const auto r = cli({"bounds", "--config", sample("forced_chain.json"), "--json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  const double p = j["exact"]["P_lower"].get<double>();
  EXPECT_NEAR(p, 42.0, 1e-9);
  EXPECT_NEAR(j["exact"]["P_upper"].get<double>(), p, 1e-9);
  EXPECT_NEAR(j["first_order"]["Q_lower"].get<double>(), p, 1e-9);
  EXPECT_NEAR(j["first_order"]["Q_upper"].get<double>(), p, 1e-9);
  for (const auto& t : j["tree"]) EXPECT_NEAR(t["price"].get<double>(), p, 1e-9);
  EXPECT_TRUE(j["ok"].get<bool>());
}

TEST(Cli, AtZeroEpsilonFirstOrderEqualsExact) {
  const auto r = cli({"bounds", "--config", sample("straddle.json"), "--eps", "0", "--json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  for (const auto& [p, q] : {std::pair{"P_lower", "Q_lower"}, std::pair{"P_upper", "Q_upper"}}) {
    const double pv = j["exact"][p].get<double>();
    EXPECT_NEAR(j["first_order"][q].get<double>(), pv, 1e-12 * (1 + std::abs(pv)));
  }
}

TEST(Cli, TableOrdersColumnsLowToHigh) {
  const auto r = cli({"bounds", "--config", sample("straddle.json"), "--tree-p", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream lines(r.out);
  std::string header, values;
  std::getline(lines, header);
  std::getline(lines, values);
  EXPECT_LT(header.find("P_lower"), header.find("Q_lower"));
  EXPECT_LT(header.find("Q_lower"), header.find("tree p=2"));
  EXPECT_LT(header.find("tree p=2"), header.find("Q_upper"));
  EXPECT_LT(header.find("Q_upper"), header.find("P_upper"));
  std::istringstream vs(values);
  std::vector<double> v;
  double d;
  while (vs >> d) v.push_back(d);
  ASSERT_EQ(v.size(), 6u);
  for (std::size_t i = 1; i + 1 < v.size(); ++i) EXPECT_LE(v[i], v[i + 1] + 1e-9) << i;
  EXPECT_TRUE(r.err.empty()) << r.err;
}

TEST(Cli, OutputsAreByteIdenticalAcrossRunsAndThreadCounts) {
  const auto a = scratch("det_a"), b = scratch("det_b");
  ASSERT_EQ(cli({"bounds", "--config", sample("straddle.json"), "--out", a.string()}).code, 0);
  setenv("MOT_THREADS", "1", 1);
  ASSERT_EQ(cli({"bounds", "--config", sample("straddle.json"), "--out", b.string()}).code, 0);
  const auto c1 = cli({"curve", "--config", sample("straddle.json"), "--tree-p", "1,3"});
  unsetenv("MOT_THREADS");
  const auto c2 = cli({"curve", "--config", sample("straddle.json"), "--tree-p", "1,3"});
  for (const char* f : {"bounds.json", "lower_coupling.csv", "upper_coupling.csv", "lower_certificate.json",
                        "upper_certificate.json"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    EXPECT_FALSE(slurp(a / f).empty()) << f;
  }
  EXPECT_EQ(c1.code, 0);
  EXPECT_EQ(c1.out, c2.out);
}

TEST(Cli, CurveCsvHasOneRowPerGridPoint) {
  const auto r = cli({"curve", "--config", sample("custom_cost.json"), "--eps-grid", "0,0.5,1", "--tree-p", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "epsilon,P_lower,Q_lower,P_upper,Q_upper,model_price_p2");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 3);
  EXPECT_EQ(cli({"curve", "--config", sample("custom_cost.json"), "--eps-grid", "0.5,0.1"}).code, 2);
}

TEST(Cli, IngestRecoversSampleMeasures) {
  const auto dir = scratch("ingest");
  std::vector<std::string> args{"ingest"};
  for (const char* t : {"T1", "T2", "T3"}) args.push_back((kSamples / "chains" / (std::string(t) + ".csv")).string());
  args.insert(args.end(), {"--out", dir.string()});
  const auto r = cli(args);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(dir / "T1.csv"), slurp(kSamples / "measures" / "x.csv"));
  EXPECT_EQ(slurp(dir / "T3.csv"), slurp(kSamples / "measures" / "z.csv"));
  const auto report = json::parse(slurp(dir / "ingest_report.json"));
  EXPECT_TRUE(report["valid"].get<bool>());
  EXPECT_EQ(report["convex_order"].size(), 2u);
}

TEST(Cli, IngestRejectsReversedMaturities) {
  const auto dir = scratch("ingest_rev");
  const auto r = cli({"ingest", (kSamples / "chains" / "T3.csv").string(), (kSamples / "chains" / "T1.csv").string(),
                      "--out", dir.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(json::parse(slurp(dir / "ingest_report.json"))["valid"].get<bool>());
}

TEST(Cli, MalformedChainReportsLineAndExitsTwo) {
  const auto dir = scratch("malformed");
  write(dir / "bad.csv", "strike,call_price\n90,11\n100,oops\n110,1\n");
  const auto r = cli({"ingest", (dir / "bad.csv").string(), "--out", (dir / "out").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("line 3"), std::string::npos) << r.err;
}

TEST(Cli, ConvexityViolationIsWarnedNotFatal) {
  const auto dir = scratch("convexity");
  write(dir / "c.csv", "strike,call_price\n0,1\n1,0.5\n2,0.3\n3,0\n");
  const auto r = cli({"ingest", (dir / "c.csv").string(), "--out", (dir / "out").string()});
  EXPECT_EQ(r.code, 0) << r.err;
  const auto report = json::parse(slurp(dir / "out" / "ingest_report.json"));
  EXPECT_FALSE(report["chains"][0]["warnings"].empty());
  EXPECT_TRUE(fs::exists(dir / "out" / "c.csv"));
}

TEST(Cli, VerifyFlagsCrossedPlanWithWitness) {
  const auto dir = scratch("crossed");
  write(dir / "x.csv", "position,weight\n1,0.5\n2,0.5\n");
  write(dir / "z.csv", "position,weight\n0,0.3333333333333333\n1,0.25\n3,0.41666666666666667\n");
  write(dir / "plan.csv", "x,y,mass\n1,0,0.3333333333333333\n1,3,0.16666666666666666\n2,1,0.25\n2,3,0.25\n");
  const auto r = cli({"verify", "--coupling", (dir / "plan.csv").string(), "--x", (dir / "x.csv").string(), "--y",
                      (dir / "z.csv").string(), "--left-monotone"});
  EXPECT_EQ(r.code, 1);
  const auto j = json::parse(r.out);
  EXPECT_TRUE(j["checks"][0]["ok"].get<bool>());
  EXPECT_FALSE(j["checks"][1]["ok"].get<bool>());
  EXPECT_EQ(j["checks"][1]["witness"].size(), 3u);
}

TEST(Cli, VerifyReportsBrokenRowSum) {
  const auto dir = scratch("rowsum");
  write(dir / "x.csv", "position,weight\n1,1\n");
  write(dir / "y.csv", "position,weight\n0,0.5\n2,0.5\n");
  write(dir / "plan.csv", "x,y,mass\n1,0,0.25\n1,2,0.5\n");
  const auto r = cli({"verify", "--coupling", (dir / "plan.csv").string(), "--x", (dir / "x.csv").string(), "--y",
                      (dir / "y.csv").string()});
  EXPECT_EQ(r.code, 1);
  const auto j = json::parse(r.out);
  EXPECT_FALSE(j["checks"][0]["ok"].get<bool>());
  EXPECT_FALSE(j["checks"][0]["failures"].empty());
}

TEST(Cli, VerifyAcceptsEmittedCertificateAndRejectsTampering) {
  const auto dir = scratch("cert");
  ASSERT_EQ(cli({"bounds", "--config", sample("straddle.json"), "--method", "exact", "--out", dir.string()}).code, 0);
  const std::vector<std::string> base{"verify",         "--coupling", (dir / "upper_coupling.csv").string(),
                                      "--config",       sample("straddle.json"),
                                      "--eps",          "0.5"};
  auto args = base;
  args.insert(args.end(), {"--certificate", (dir / "upper_certificate.json").string(), "--sense", "max"});
  const auto ok = cli(args);
  EXPECT_EQ(ok.code, 0) << ok.out << ok.err;

  auto cert = json::parse(slurp(dir / "upper_certificate.json"));
  cert["u"][0] = cert["u"][0].get<double>() - 1.0;
  write(dir / "tampered.json", cert.dump());
  args = base;
  args.insert(args.end(), {"--certificate", (dir / "tampered.json").string()});
  EXPECT_EQ(cli(args).code, 1);
}

TEST(Cli, ConfigErrorsAreListedTogether) {
  const auto dir = scratch("config");
  write(dir / "c.json", R"({"measures": {"x": "nope.csv", "y": {"atoms": [0]}}, "cost": "bogus", "colour": 1})");
  const auto r = cli({"bounds", "--config", (dir / "c.json").string()});
  EXPECT_EQ(r.code, 2);
  for (const char* s : {"measures.x", "measures.y", "measures.z", "bogus", "colour"}) {
    EXPECT_NE(r.err.find(s), std::string::npos) << s << "\n" << r.err;
  }
}

TEST(Cli, UsageErrorsAndHelp) {
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"frobnicate"}).code, 2);
  EXPECT_EQ(cli({"bounds", "--config", sample("straddle.json"), "--method", "magic"}).code, 2);
  EXPECT_EQ(cli({"bounds", "--config", sample("straddle.json"), "--eps", "-1"}).code, 2);
  const auto help = cli({"--help"});
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.out.find("bounds"), std::string::npos);
}

TEST(Cli, DumpLpWritesProgram) {
  const auto dir = scratch("dump");
  ASSERT_EQ(cli({"bounds", "--config", sample("forced_chain.json"), "--dump-lp", (dir / "lp.txt").string()}).code, 0);
  EXPECT_FALSE(slurp(dir / "lp.txt").empty());
}
