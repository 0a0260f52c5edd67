#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sqlicl/cli.hpp"
#include "support/fixtures.hpp"

namespace sqlicl {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = testing::spider_mini();
    tmp_ = fs::path(SQLICL_BINARY_DIR) / "cli_tmp" / ::testing::UnitTest::GetInstance()->current_test_info()->name();
    fs::remove_all(tmp_);
    fs::create_directories(tmp_);
  }

  std::vector<std::string> with_db(std::vector<std::string> args) const {
    args.insert(args.end(), {"--db-root", (root_ / "database").string(), "--tables", (root_ / "tables.json").string()});
    return args;
  }

  std::string build_index() const {
    const std::string idx = (tmp_ / "idx.bin").string();
    const CliRun r = cli({"index", "--dataset", (root_ / "train.json").string(), "--index", idx});
    EXPECT_EQ(r.code, 0) << r.err;
    return idx;
  }

  std::string script() const {
    return "scripted:" + (testing::source_fixture_dir() / "scripts/spider_mini_replies.json").string();
  }

  fs::path root_;
  fs::path tmp_;
};

TEST_F(CliTest, IndexIsDeterministic) {
  const std::string a = build_index();
  const std::string b = (tmp_ / "idx2.bin").string();
  ASSERT_EQ(cli({"index", "--dataset", (root_ / "train.json").string(), "--index", b}).code, 0);
  EXPECT_EQ(slurp(a), slurp(b));
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(cli({}).code, kExitUsage);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(cli({"index", "--dataset", (tmp_ / "missing.json").string(), "--index", "x"}).code, kExitUsage);
  const CliRun tau = cli({"train", "--dataset", (root_ / "train.json").string(), "--out", (tmp_ / "c").string(),
                       "--temperature-tau", "0"});
  EXPECT_EQ(tau.code, kExitUsage);
  EXPECT_NE(tau.err.find("NonPositiveTemperature"), std::string::npos);
  EXPECT_EQ(cli(with_db({"ask", "--question", "q", "--db-id", "concert_singer", "--strategy", "struct-tree"})).code,
            kExitUsage);
  EXPECT_EQ(cli(with_db({"ask", "--k", "0", "--offline", "--question", "q", "--db-id", "concert_singer"})).code,
            kExitUsage);
  EXPECT_EQ(cli(with_db({"ask", "--k", "11", "--index", build_index(), "--provider", script(), "--question", "q",
                         "--db-id", "concert_singer"}))
                .code,
            kExitUsage);
}

TEST_F(CliTest, ConfigFileSuppliesOptionsAndFlagsWin) {
  const std::string idx = build_index();
  std::ofstream(tmp_ / "run.toml") << "k = 11\nindex = \"" << idx << "\"\nprovider = \"" << script() << "\"\n";
  const auto base = with_db({"--config", (tmp_ / "run.toml").string(), "ask", "--question",
                             "How many singers do we have?", "--db-id", "concert_singer"});
  EXPECT_EQ(cli(base).code, kExitUsage);
  auto fixed = base;
  fixed.insert(fixed.end(), {"--k", "3"});
  const CliRun r = cli(fixed);
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "SELECT count(*) FROM singer\n");
}

TEST_F(CliTest, AskRecordsThenReplaysOffline) {
  const std::string idx = build_index();
  const std::string replay = (tmp_ / "replay").string();
  const auto ask = [&](std::vector<std::string> extra, const std::string& question) {
    std::vector<std::string> args{"ask", "--question", question, "--db-id", "concert_singer", "--index", idx,
                                  "--replay", replay};
    args.insert(args.end(), extra.begin(), extra.end());
    return cli(with_db(args));
  };
  const CliRun live = ask({"--provider", script()}, "How many singers do we have?");
  ASSERT_EQ(live.code, 0) << live.err;
  const CliRun offline = ask({"--offline"}, "How many singers do we have?");
  ASSERT_EQ(offline.code, 0) << offline.err;
  EXPECT_EQ(offline.out, live.out);

  const CliRun miss = ask({"--offline"}, "A question nobody recorded?");
  EXPECT_EQ(miss.code, kExitProvider);
  EXPECT_NE(miss.err.find("ReplayMiss"), std::string::npos);
}

TEST_F(CliTest, ZeroShotNeedsNoIndex) {
  const CliRun r = cli(with_db({"ask", "--k", "0", "--json", "--provider", script(), "--question",
                             "How many singers do we have?", "--db-id", "concert_singer"}));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["strategy"], "zero-shot");
  EXPECT_TRUE(j["demo_ids"].empty());
  EXPECT_EQ(j["prompt"].get<std::string>().find("### Example"), std::string::npos);
}

TEST_F(CliTest, EvalGoldPassthroughIsPerfect) {
  const fs::path out = tmp_ / "eval";
  const CliRun r = cli(with_db({"eval", "--gold", "--dataset", (root_ / "dev.json").string(), "--out", out.string()}));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = nlohmann::json::parse(slurp(out / "report.json"));
  EXPECT_EQ(rep["em_accuracy"], 1.0);
  EXPECT_EQ(rep["ex_accuracy"], 1.0);
  EXPECT_TRUE(fs::exists(out / "summary.txt"));
  EXPECT_TRUE(fs::exists(out / "records.jsonl"));
}

TEST_F(CliTest, EvalWithScriptedProviderReplaysIdentically) {
  const std::string idx = build_index();
  const auto eval = [&](const std::string& dir, std::vector<std::string> extra) {
    std::vector<std::string> args{"eval", "--dataset", (root_ / "dev.json").string(), "--index", idx, "--replay",
                                  (tmp_ / "replay").string(), "--out", (tmp_ / dir).string(), "--workers", "3"};
    args.insert(args.end(), extra.begin(), extra.end());
    return cli(with_db(args));
  };
  ASSERT_EQ(eval("live", {"--provider", script()}).code, 0);
  const CliRun a = eval("off1", {"--offline"});
  const CliRun b = eval("off2", {"--offline"});
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(slurp(tmp_ / "off1/report.json"), slurp(tmp_ / "off2/report.json"));
  EXPECT_EQ(slurp(tmp_ / "live/report.json"), slurp(tmp_ / "off1/report.json"));
}

TEST_F(CliTest, CorrectSubcommand) {
  const auto correct = [&](const std::string& sql, std::vector<std::string> extra) {
    std::vector<std::string> args{"correct", "--sql", sql, "--db-id", "concert_singer"};
    args.insert(args.end(), extra.begin(), extra.end());
    return cli(with_db(args));
  };
  const CliRun fixed = correct("SELECT Name FROM singer WHERE Country = 'france'", {"--provider", "none"});
  ASSERT_EQ(fixed.code, 0) << fixed.err;
  EXPECT_EQ(fixed.out, "SELECT Name FROM singer WHERE Country = 'France'\n");
  EXPECT_NE(fixed.err.find("string_format"), std::string::npos);

  const CliRun valid = correct("SELECT Name FROM singer WHERE Country = 'France'", {"--provider", "none"});
  ASSERT_EQ(valid.code, 0);
  EXPECT_EQ(valid.out, "SELECT Name FROM singer WHERE Country = 'France'\n");

  const CliRun broken = correct("SELEC Name singer", {"--offline", "--replay", (tmp_ / "empty").string()});
  ASSERT_EQ(broken.code, 0);
  EXPECT_EQ(broken.out, "SELEC Name singer\n");
  EXPECT_NE(broken.err.find("FLAG"), std::string::npos);
  EXPECT_NE(broken.err.find("ReplayMiss"), std::string::npos);
}

TEST_F(CliTest, StructGraphNeedsMatchingCheckpoint) {
  const std::string ckpt = (tmp_ / "ck.bin").string();
  const CliRun train = cli({"train", "--dataset", (root_ / "train.json").string(), "--tables",
                         (root_ / "tables.json").string(), "--out", ckpt, "--epochs", "2", "--seed", "3"});
  ASSERT_EQ(train.code, 0) << train.err;
  EXPECT_EQ(slurp(ckpt + ".loss.tsv").rfind("epoch\tloss\n1\t", 0), 0u);

  const std::string plain = build_index();
  const auto ask = [&](const std::string& idx) {
    return cli(with_db({"ask", "--strategy", "struct-graph", "--checkpoint", ckpt, "--index", idx, "--provider",
                        script(), "--question", "How many singers do we have?", "--db-id", "concert_singer"}));
  };
  const CliRun no_emb = ask(plain);
  EXPECT_EQ(no_emb.code, kExitUsage);
  EXPECT_NE(no_emb.err.find("MissingEmbeddings"), std::string::npos);

  const std::string embedded = (tmp_ / "emb.bin").string();
  ASSERT_EQ(cli({"index", "--dataset", (root_ / "train.json").string(), "--checkpoint", ckpt, "--index", embedded}).code,
            0);
  const CliRun ok = ask(embedded);
  EXPECT_EQ(ok.code, 0) << ok.err;
  EXPECT_EQ(ok.out, "SELECT count(*) FROM singer\n");
}

TEST(ExitCodes, Mapping) {
  EXPECT_EQ(exit_code_for(ErrorCode::kReplayMiss), 3);
  EXPECT_EQ(exit_code_for(ErrorCode::kRateLimited), 3);
  EXPECT_EQ(exit_code_for(ErrorCode::kProviderUnavailable), 3);
  EXPECT_EQ(exit_code_for(ErrorCode::kCheckpointMismatch), 2);
  EXPECT_EQ(exit_code_for(ErrorCode::kFormat), 2);
}

}  // namespace
}  // namespace sqlicl
