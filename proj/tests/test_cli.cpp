#include <gtest/gtest.h>
#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

#include "gmf/io.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string output;  // stdout and stderr
};

Result run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + "\"" GMF_CLI_PATH "\" " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return {-1, "popen failed"};
  std::string out;
  char buf[4096];
  while (std::size_t got = fread(buf, 1, sizeof buf, pipe)) out.append(buf, got);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("gmf_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    std::string m = "gene";
    std::string labels = "sample_id,class\n";
    for (int j = 0; j < 10; ++j) {
      m += "\ts" + std::to_string(j);
      labels += "s" + std::to_string(j) + (j < 5 ? ",normal\n" : ",tumor\n");
    }
    m += '\n';
    for (int i = 0; i < 20; ++i) {
      m += "g" + std::to_string(i);
      for (int j = 0; j < 10; ++j) m += '\t' + gmf::format_double(nd(rng) + (i < 4 && j >= 5 ? 3.0 : 0.0));
      m += '\n';
    }
    gmf::io::write_file(path("x.tsv"), m);
    gmf::io::write_file(path("labels.csv"), labels);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  std::string read(const std::string& name) const { return gmf::io::read_file(path(name)); }

  fs::path dir_;
};

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_F(Cli, MissingFileNamesPathAndExitsIo) {
  const auto r = run("factorize " + path("nope.tsv") + " -o " + path("m.txt"));
  EXPECT_EQ(r.code, 5);
  EXPECT_NE(r.output.find("nope.tsv"), std::string::npos);
}

TEST_F(Cli, DistinctExitCodes) {
  gmf::io::write_file(path("bad.tsv"), "1\t2\n3\tx\n");
  const auto parse = run("factorize " + path("bad.tsv") + " -o " + path("m.txt"));
  EXPECT_EQ(parse.code, 2);
  EXPECT_NE(parse.output.find("line 2, column 2"), std::string::npos);
  EXPECT_EQ(run("factorize " + path("x.tsv") + " -o " + path("m.txt") + " --xi 1.5").code, 3);
  const auto div = run("factorize " + path("x.tsv") + " -o " + path("m.txt") + " --q 3 --lambda0 5");
  EXPECT_EQ(div.code, 4);
  EXPECT_NE(div.output.find("global iteration"), std::string::npos);
  EXPECT_EQ(run("frobnicate").code, 1);
}

TEST_F(Cli, FactorizeIsDeterministicAndWritesTrace) {
  ASSERT_EQ(run("factorize " + path("x.tsv") + " -o " + path("a.txt") + " --q 3 --iters 40 --seed 5").code, 0);
  ASSERT_EQ(run("factorize " + path("x.tsv") + " -o " + path("b.txt") + " --q 3 --iters 40 --seed 5").code, 0);
  EXPECT_EQ(read("a.txt"), read("b.txt"));
  EXPECT_EQ(count_lines(read("a.txt.trace.csv")), 41u);
  EXPECT_TRUE(fs::exists(path("a.txt.manifest.json")));
  const auto model = gmf::io::load_model(path("a.txt"));
  EXPECT_EQ(gmf::io::format_model(model), read("a.txt"));
}

TEST_F(Cli, ReplayIsByteIdentical) {
  ASSERT_EQ(run("factorize " + path("x.tsv") + " -o " + path("m.txt") + " --q 2 --iters 30").code, 0);
  const auto r = run("replay " + path("m.txt.manifest.json") + " --out-dir " + path("again"));
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("replay identical"), std::string::npos);
  EXPECT_EQ(read("m.txt"), read("again/m.txt"));

  gmf::io::write_file(path("x.tsv"), read("x.tsv") + "g99\t1\t1\t1\t1\t1\t1\t1\t1\t1\t1\n");
  EXPECT_EQ(run("replay " + path("m.txt.manifest.json") + " --out-dir " + path("again2")).code, 3);
}

TEST_F(Cli, EvaluateReportsAndReplays) {
  const auto r = run("evaluate " + path("x.tsv") + " --labels " + path("labels.csv") + " --out " + path("ev") +
                     " --estimator e1,e2 --q 2 --iters 40 --model svm");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("e1="), std::string::npos);
  const std::string report = read("ev/report.csv");
  EXPECT_EQ(report.rfind("estimator,model,q,rate,misclassified,n\n", 0), 0u);
  EXPECT_NE(report.find("\ne1,svm,2,"), std::string::npos);
  EXPECT_NE(report.find("\ne2,svm,2,"), std::string::npos);
  EXPECT_EQ(count_lines(read("ev/samples.csv")), 21u);
  const auto re = run("replay " + path("ev/manifest.json") + " --out-dir " + path("ev2"), "GMF_JOBS=2");
  EXPECT_EQ(re.code, 0) << re.output;
}

TEST_F(Cli, E3WritesCurveAndInnerSelection) {
  const auto r = run("evaluate " + path("x.tsv") + " --labels " + path("labels.csv") + " --out " + path("e3") +
                     " --estimator e3 --grid 1:2 --iters 20 --model nsc --quiet");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(count_lines(read("e3/curve.csv")), 3u);
  EXPECT_EQ(count_lines(read("e3/inner.csv")), 11u);
  EXPECT_NE(read("e3/report.csv").find("\ne3,nsc,"), std::string::npos);
}

TEST_F(Cli, SelectQWritesCurve) {
  const auto r = run("select-q " + path("x.tsv") + " --labels " + path("labels.csv") + " --out " + path("sq") +
                     " --grid 1,2,3 --iters 20 --model nsc");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("q_opt="), std::string::npos);
  EXPECT_EQ(count_lines(read("sq/curve.csv")), 4u);
}

TEST_F(Cli, LabelMismatchListsIds) {
  gmf::io::write_file(path("bad_labels.csv"), read("labels.csv") + "ghost,tumor\n");
  const auto r = run("evaluate " + path("x.tsv") + " --labels " + path("bad_labels.csv") + " --out " + path("ev"));
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.output.find("ghost"), std::string::npos);
}

TEST_F(Cli, BenchSkipsNmfOnMixedSign) {
  const auto r = run("bench --synthetic 30,12 --q 2 --iters 50 --nmf-iters 50 --out " + path("b"));
  ASSERT_EQ(r.code, 0) << r.output;
  const std::string csv = read("b/bench.csv");
  EXPECT_EQ(csv.find("\nnmf,"), std::string::npos);
  EXPECT_NE(r.output.find("NMF skipped"), std::string::npos);
  EXPECT_NE(csv.find("\ngmf,2,50,"), std::string::npos);
  EXPECT_NE(csv.find("\nsvd,2,"), std::string::npos);
}

TEST_F(Cli, BenchOnNonnegativeFileHasAllMethods) {
  std::string m;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int i = 0; i < 15; ++i) {
    for (int j = 0; j < 8; ++j) m += (j ? "," : "") + gmf::format_double(u(rng));
    m += '\n';
  }
  gmf::io::write_file(path("pos.csv"), m);
  ASSERT_EQ(run("bench " + path("pos.csv") + " --q 2 --iters 200 --nmf-iters 200 --out " + path("b")).code, 0);
  const auto table = gmf::io::parse_matrix(read("b/bench.csv"));
  ASSERT_EQ(table.rows(), 3);
  EXPECT_EQ(table.row_ids, (std::vector<std::string>{"gmf", "nmf", "svd"}));
  const double svd = table.values(2, 3);
  EXPECT_LE(svd, table.values(0, 3) + 1e-9);
  EXPECT_LE(svd, table.values(1, 3) + 1e-9);
}

TEST_F(Cli, PreprocessEncodeAndTranspose) {
  std::string raw = "id,s1,s2,s3\n";
  raw += "keep,10,500,40\nflat,100,120,110\n";
  gmf::io::write_file(path("raw.csv"), raw);
  ASSERT_EQ(run("preprocess " + path("raw.csv") + " -o " + path("pre.tsv") + " --normalize none").code, 0);
  const auto pre = gmf::io::read_matrix(path("pre.tsv"));
  EXPECT_EQ(pre.row_ids, std::vector<std::string>{"keep"});
  EXPECT_NEAR(pre.values(0, 1), std::log(500.0), 1e-15);

  ASSERT_EQ(run("factorize " + path("x.tsv") + " -o " + path("m.txt") + " --q 3 --iters 30").code, 0);
  ASSERT_EQ(run("encode " + path("x.tsv") + " --model " + path("m.txt") + " -o " + path("codes.tsv")).code, 0);
  const auto codes = gmf::io::read_matrix(path("codes.tsv"));
  EXPECT_EQ(codes.rows(), 3);
  EXPECT_EQ(codes.cols(), 10);
  EXPECT_EQ(codes.col_ids.front(), "s0");

  const auto t = gmf::io::read_matrix(path("x.tsv"));
  gmf::DataMatrix flipped(gmf::Matrix(t.values.transpose()), t.col_ids, t.row_ids);
  gmf::io::write_matrix(path("xt.tsv"), flipped);
  ASSERT_EQ(run("factorize " + path("xt.tsv") + " --transpose -o " + path("mt.txt") + " --q 3 --iters 30").code, 0);
  EXPECT_EQ(read("m.txt"), read("mt.txt"));
}

TEST_F(Cli, JobsEnvironmentValidated) {
  EXPECT_EQ(run("factorize " + path("x.tsv") + " -o " + path("m.txt"), "GMF_JOBS=zero").code, 3);
}
