#include <gtest/gtest.h>

#include <sstream>
#include <unistd.h>

#include "lowres_mt/cli.hpp"

using namespace lowres_mt;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result call(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, {out, err});
  return {code, out.str(), err.str()};
}

Path work_dir() {
  const Path p = std::filesystem::temp_directory_path() / ("lowres_mt_cli_" + std::to_string(::getpid()));
  std::filesystem::create_directories(p);
  return p;
}

std::string s(const Path& p) { return p.string(); }

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(call({"--help"}).code, 0);
  EXPECT_EQ(call({}).code, 2);
  EXPECT_EQ(call({"no-such-command"}).code, 2);
  EXPECT_EQ(call({"bleu", "--hyp", "a"}).code, 2);
  EXPECT_EQ(call({"bleu", "--hyp", "a", "--ref", "b", "--bogus"}).code, 2);
  EXPECT_EQ(call({"--threads", "0", "bleu", "--hyp", "a", "--ref", "b"}).code, 2);
}

TEST(Cli, BleuReportsScoreAndDomainErrors) {
  const Path d = work_dir();
  write_file(d / "hyp.txt", "the cat sat on the mat\nhello world\n");
  write_file(d / "ref.txt", "the cat sat on the mat\nhello world\n");
  write_file(d / "short.txt", "only one line\n");
  const auto r = call({"bleu", "--hyp", s(d / "hyp.txt"), "--ref", s(d / "ref.txt")});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("BLEU = 100.00", 0), 0u) << r.out;
  const auto mismatch = call({"bleu", "--hyp", s(d / "hyp.txt"), "--ref", s(d / "short.txt")});
  EXPECT_EQ(mismatch.code, 1);
  EXPECT_NE(mismatch.err.find("error:"), std::string::npos);
  EXPECT_EQ(call({"bleu", "--hyp", s(d / "missing.txt"), "--ref", s(d / "ref.txt")}).code, 1);
}

TEST(Cli, CorpusPrepLmAndSelection) {
  const Path d = work_dir();
  write_file(d / "c.la", "a b\na b\nc d e\nx\n");
  write_file(d / "c.lb", "A B\nA B\nC D E\nX Y Z W V U T S R Q P O N M L K J I H G F E D C B A\n");
  auto r = call({"corpus-prep", "--src", s(d / "c.la"), "--tgt", s(d / "c.lb"), "--langs", "la-lb", "--out-src",
                 s(d / "o.la"), "--out-tgt", s(d / "o.lb"), "--max-tokens", "20"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_file(d / "o.la"), "a b\nc d e\n");
  EXPECT_EQ(call({"corpus-prep", "--src", s(d / "c.la"), "--tgt", s(d / "c.lb"), "--langs", "la", "--out-src",
                  s(d / "o.la"), "--out-tgt", s(d / "o.lb")})
                .code,
            1);

  write_file(d / "in.txt", "a b c\na b\nb c\n");
  write_file(d / "gen.txt", "x y z\nx y\na z\n");
  write_file(d / "pool.txt", "a b c\nx y z\na b\nq q\n");
  ASSERT_EQ(call({"lm-train", "--input", s(d / "in.txt"), "--order", "2", "--out", s(d / "in.lm")}).code, 0);
  ASSERT_EQ(call({"lm-train", "--input", s(d / "gen.txt"), "--order", "2", "--out", s(d / "gen.lm")}).code, 0);
  EXPECT_EQ(call({"lm-train", "--input", s(d / "in.txt"), "--order", "9", "--out", s(d / "x.lm")}).code, 2);
  r = call({"select", "--pool", s(d / "pool.txt"), "--in-domain-lm", s(d / "in.lm"), "--general-lm", s(d / "gen.lm"),
            "-t", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::vector<std::string> lines;
  std::istringstream is(r.out);
  for (std::string l; std::getline(is, l);) lines.push_back(l);
  ASSERT_EQ(lines.size(), 2u);
  for (const auto& l : lines) EXPECT_NE(l.find('a'), std::string::npos) << l;
}

TEST(Cli, ToyDataWritesExperiment) {
  const Path d = work_dir() / "toy";
  const auto r = call({"--seed", "3", "toy-data", "--out", s(d)});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(read_file(d / "experiment.json"));
  EXPECT_EQ(j.at("seed"), 3);
  EXPECT_TRUE(std::filesystem::exists(d / "ab_in.la"));
}

TEST(Cli, PipelineRejectsBadConfig) {
  const Path d = work_dir();
  write_file(d / "bad.json", "{\"languages\": [\"la\"]}");
  const auto r = call({"pipeline", "run", s(d / "bad.json"), "--store", s(d / "store")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("experiment config"), std::string::npos) << r.err;
  EXPECT_EQ(call({"pipeline", "lineage", "deadbeef", "--store", s(d / "store")}).code, 1);
}

TEST(Cli, BinaryExitCodes) {
  const std::string bin = LOWRES_MT_CLI_PATH;
  auto status = [&](const std::string& args) {
    const int rc = std::system((bin + " " + args + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(rc);
  };
  EXPECT_EQ(status("--help"), 0);
  EXPECT_EQ(status("--no-such-flag"), 2);
  EXPECT_EQ(status("bleu --hyp /nonexistent --ref /nonexistent"), 1);
}
