#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <functional>

#include "json.hpp"
#include "sqlicl/error_correct.hpp"
#include "sqlicl/sql_ast.hpp"
#include "sqlicl/sqlite_db.hpp"
#include "support/fixtures.hpp"

namespace sqlicl {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const DbContext& context(const std::string& db_id) {
  static std::map<std::string, DbContext> cache;
  auto it = cache.find(db_id);
  if (it == cache.end()) {
    const DatabaseSchema* schema = testing::fixture_catalog().find(db_id);
    EXPECT_NE(schema, nullptr) << db_id;
    it = cache.emplace(db_id, DbContext::load(testing::spider_mini() / "database" / db_id / (db_id + ".sqlite"), *schema))
             .first;
  }
  return it->second;
}

using FixerFn = FixResult (*)(const std::string&, const DbContext&);

FixerFn fixer_for(const std::string& rule) {
  if (rule == "string_format") return fix_string_format;
  if (rule == "schema_mismatch") return fix_schema_mismatch;
  if (rule == "invalid_aggregation") return fix_invalid_aggregation;
  if (rule == "join_condition") return fix_join_condition;
  ADD_FAILURE() << "unknown rule " << rule;
  return fix_string_format;
}

const json& cases() {
  static const json doc = json::parse(std::ifstream(testing::source_fixture_dir() / "correction_cases.json"));
  return doc;
}

const CorrectionResources& resources() {
  static const CorrectionResources res = CorrectionResources::load(default_template_dir());
  return res;
}

std::vector<Row> run(const std::string& db_id, const std::string& sql) {
  SqliteDb db = SqliteDb::open_readonly(testing::spider_mini() / "database" / db_id / (db_id + ".sqlite"));
  return db.query(sql);
}

ProviderConfig test_config() {
  ProviderConfig cfg;
  cfg.model = "test-model";
  cfg.api_key_env = "SQLICL_TEST_KEY_UNSET";
  return cfg;
}

TEST(CorrectionSuite, EveryCaseMatchesExpected) {
  ASSERT_EQ(cases().size(), 40u);
  std::map<std::string, int> per_rule;
  for (const json& c : cases()) {
    const std::string id = c["id"];
    const DbContext& ctx = context(c["db_id"]);
    const FixResult r = fixer_for(c["rule"])(c["sql"], ctx);
    EXPECT_TRUE(r.applied) << id;
    EXPECT_EQ(r.sql, c["expected"].get<std::string>()) << id;
    EXPECT_NO_THROW(parse_sql(r.sql)) << id;
    EXPECT_NO_THROW(run(c["db_id"], r.sql)) << id;
    ++per_rule[c["rule"]];
  }
  for (const auto& [rule, n] : per_rule) EXPECT_EQ(n, 10) << rule;
}

TEST(CorrectionSuite, FixersAreIdempotent) {
  for (const json& c : cases()) {
    const DbContext& ctx = context(c["db_id"]);
    const FixerFn fix = fixer_for(c["rule"]);
    const FixResult once = fix(c["sql"], ctx);
    const FixResult twice = fix(once.sql, ctx);
    EXPECT_FALSE(twice.applied) << c["id"];
    EXPECT_EQ(twice.sql, once.sql) << c["id"];
  }
}

TEST(CorrectionSuite, OtherFixersLeaveCasesAlone) {
  for (const json& c : cases()) {
    const DbContext& ctx = context(c["db_id"]);
    for (const char* rule : {"string_format", "schema_mismatch", "invalid_aggregation", "join_condition"}) {
      if (c["rule"] == rule) continue;
      const FixResult r = fixer_for(rule)(c["expected"], ctx);
      EXPECT_FALSE(r.applied) << c["id"] << " " << rule;
      EXPECT_EQ(r.sql, c["expected"].get<std::string>()) << c["id"] << " " << rule;
    }
  }
}

TEST(SchemaMismatch, OutputOnlyNamesSchemaObjects) {
  const DbContext& ctx = context("concert_singer");
  const FixResult r = fix_schema_mismatch("SELECT T1.singer_name, T2.years FROM singers AS T1 JOIN concerts AS T2", ctx);
  ASSERT_TRUE(r.applied);
  EXPECT_EQ(r.sql, "SELECT T1.Name, T2.Year FROM singer AS T1 JOIN concert AS T2");
}

TEST(SchemaMismatch, HallucinatedTableIsFlaggedNotGuessed) {
  const DbContext& ctx = context("concert_singer");
  const std::string sql = "SELECT name FROM spaceships";
  const FixResult r = fix_schema_mismatch(sql, ctx);
  EXPECT_FALSE(r.applied);
  EXPECT_EQ(r.sql, sql);
  ASSERT_FALSE(r.notes.empty());
  EXPECT_NE(r.notes.front().find("spaceships"), std::string::npos);
}

TEST(SchemaMismatch, AmbiguousRenameIsQualified) {
  const DbContext& ctx = context("concert_singer");
  const FixResult r =
      fix_schema_mismatch("SELECT nam FROM singer AS T1 JOIN singer_in_concert AS T2 ON T1.Singer_ID = T2.Singer_ID", ctx);
  EXPECT_EQ(r.sql, "SELECT Name FROM singer AS T1 JOIN singer_in_concert AS T2 ON T1.Singer_ID = T2.Singer_ID");
  const FixResult s = fix_schema_mismatch("SELECT nam FROM singer AS T1 JOIN stadium AS T2", ctx);
  EXPECT_EQ(s.sql, "SELECT T1.Name FROM singer AS T1 JOIN stadium AS T2");
}

TEST(StringFormat, UnknownValueKept) {
  const DbContext& ctx = context("concert_singer");
  const std::string sql = "SELECT name FROM singer WHERE country = 'Atlantis'";
  EXPECT_FALSE(fix_string_format(sql, ctx).applied);
  EXPECT_FALSE(fix_string_format("SELECT name FROM singer WHERE country = 'France'", ctx).applied);
}

TEST(StringFormat, ValuesLoadedFromDatabase) {
  const DbContext& ctx = context("pets_1");
  const auto* v = ctx.values("PETS", "pettype");
  ASSERT_NE(v, nullptr);
  EXPECT_EQ(*v, (std::vector<std::string>{"cat", "dog"}));
  EXPECT_EQ(ctx.values("Pets", "nope"), nullptr);
}

TEST(Fixers, UnparseableInputUnchanged) {
  const DbContext& ctx = context("concert_singer");
  for (FixerFn fix : {fix_string_format, fix_schema_mismatch, fix_invalid_aggregation, fix_join_condition}) {
    const FixResult r = fix("SELEC name FROM", ctx);
    EXPECT_FALSE(r.applied);
    EXPECT_EQ(r.sql, "SELEC name FROM");
  }
}

TEST(JoinCondition, NoForeignKeysMeansNoChange) {
  DatabaseSchema schema = *testing::fixture_catalog().find("concert_singer");
  schema.foreign_keys.clear();
  const DbContext ctx(schema);
  EXPECT_FALSE(fix_join_condition("SELECT T1.name FROM singer AS T1 JOIN stadium AS T2 ON T1.name = T2.name", ctx).applied);
}

TEST(JoinCondition, SubqueryJoinsFixed) {
  const DbContext& ctx = context("concert_singer");
  const FixResult r = fix_join_condition(
      "SELECT name FROM stadium WHERE stadium_id IN (SELECT T1.stadium_id FROM concert AS T1 JOIN stadium AS T2 ON "
      "T1.theme = T2.name)",
      ctx);
  EXPECT_EQ(r.sql,
            "SELECT name FROM stadium WHERE stadium_id IN (SELECT T1.stadium_id FROM concert AS T1 JOIN stadium AS T2 "
            "ON T1.Stadium_ID = T2.Stadium_ID)");
}

TEST(NameSimilarity, Basics) {
  EXPECT_DOUBLE_EQ(name_similarity("Name", "name"), 1.0);
  EXPECT_DOUBLE_EQ(name_similarity("", ""), 1.0);
  EXPECT_GT(name_similarity("surface_area", "SurfaceArea"), 0.9);
  EXPECT_LT(name_similarity("spaceships", "stadium"), kSchemaMatchThreshold);
  EXPECT_DOUBLE_EQ(name_similarity("a_b", "b_a"), name_similarity("b_a", "a_b"));
}

TEST(Guidelines, CatalogShipsAllIds) {
  const auto& g = resources().guidelines;
  for (auto id : {kGuidelineJoin, kGuidelineOrder, kGuidelineConjunction}) EXPECT_TRUE(g.contains(id));
  EXPECT_THROW(GuidelineCatalog::parse("join\tx\n"), Error);
  EXPECT_THROW(GuidelineCatalog::parse("join x\norder\ty\nconjunction\tz\n"), Error);
}

TEST(Guidelines, Selection) {
  const DatabaseSchema& schema = *testing::fixture_catalog().find("concert_singer");
  const SqlAst join = parse_sql(
      "SELECT T1.name FROM singer AS T1 JOIN singer_in_concert AS T2 ON T1.singer_id = T2.singer_id WHERE T1.age > 30");
  EXPECT_EQ(select_guidelines(&join, schema, {"List singer names.", {}}), std::vector<std::string>{"join"});

  const SqlAst ordered = parse_sql("SELECT name FROM singer ORDER BY age DESC LIMIT 1");
  EXPECT_EQ(select_guidelines(&ordered, schema, {"Who is it?", {}}), std::vector<std::string>{"order"});
  const SqlAst plain = parse_sql("SELECT name FROM singer");
  EXPECT_EQ(select_guidelines(&plain, schema, {"Who is the oldest singer?", {}}), std::vector<std::string>{"order"});
  EXPECT_EQ(select_guidelines(&plain, schema, {"Name every singer.", {"SELECT a FROM t EXCEPT SELECT a FROM u"}}),
            std::vector<std::string>{"conjunction"});
  EXPECT_TRUE(select_guidelines(&plain, schema, {"Name every singer.", {"SELECT a FROM t"}}).empty());

  const SqlAst both = parse_sql(
      "SELECT T1.name FROM singer AS T1 JOIN singer_in_concert AS T2 ON T1.singer_id = T2.singer_id ORDER BY T1.age");
  EXPECT_EQ(select_guidelines(&both, schema, {"q", {"SELECT a FROM t UNION SELECT a FROM u"}}),
            (std::vector<std::string>{"join", "order", "conjunction"}));
  const SqlAst needed = parse_sql(
      "SELECT T1.name, T2.concert_id FROM singer AS T1 JOIN singer_in_concert AS T2 ON T1.singer_id = T2.singer_id");
  EXPECT_TRUE(select_guidelines(&needed, schema, {"q", {}}).empty());
}

TEST(Guidelines, DemosLookComplex) {
  EXPECT_FALSE(demos_look_complex({"SELECT a FROM t JOIN u ON t.x = u.x"}));
  EXPECT_TRUE(demos_look_complex({"SELECT a FROM t JOIN u ON t.x = u.x JOIN v ON u.y = v.y"}));
  EXPECT_TRUE(demos_look_complex({"SELECT a FROM t INTERSECT SELECT a FROM u"}));
  EXPECT_FALSE(demos_look_complex({"not sql"}));
}

struct Scheduler : ::testing::Test {
  std::shared_ptr<ScriptedBackend> backend =
      std::make_shared<ScriptedBackend>(std::vector<ScriptedBackend::Rule>{}, "SELECT count(*) FROM singer");
  LlmClient llm{test_config(), backend, nullptr, ReplayMode::kOff};
};

TEST_F(Scheduler, RulesFiredSkipsPrompt) {
  CorrectionRequest req{"How many French singers?", std::nullopt, Hardness::kExtra, {}};
  const auto out = correct("SELECT count(*) FROM singer WHERE country = 'france'", context("concert_singer"), req,
                           resources(), &llm);
  EXPECT_EQ(out.applied_rules, std::vector<std::string>{"string_format"});
  EXPECT_FALSE(out.prompt_correction_used);
  EXPECT_EQ(backend->calls(), 0u);
  EXPECT_EQ(out.corrected, "SELECT COUNT(*) FROM singer WHERE country = 'France'");
}

TEST_F(Scheduler, EveryCaseFiresWithoutPrompt) {
  for (const json& c : cases()) {
    CorrectionRequest req{"q", std::nullopt, Hardness::kExtra, {}};
    const auto out = correct(c["sql"], context(c["db_id"]), req, resources(), &llm);
    EXPECT_FALSE(out.applied_rules.empty()) << c["id"];
    EXPECT_EQ(out.corrected, c["expected"].get<std::string>()) << c["id"];
    EXPECT_FALSE(out.prompt_correction_used) << c["id"];
  }
  EXPECT_EQ(backend->calls(), 0u);
}

TEST_F(Scheduler, RulesChainInOrder) {
  CorrectionRequest req{"q", std::nullopt, std::nullopt, {}};
  const auto out = correct("SELECT max(singer_name) FROM singers WHERE country = 'FRANCE'", context("concert_singer"),
                           req, resources(), &llm);
  EXPECT_EQ(out.applied_rules, (std::vector<std::string>{"schema_mismatch", "invalid_aggregation", "string_format"}));
  EXPECT_EQ(out.corrected, "SELECT Name FROM singer WHERE country = 'France'");
}

TEST_F(Scheduler, GateByHardness) {
  const std::string sql = "SELECT name FROM singer WHERE age > 30";
  for (Hardness h : {Hardness::kEasy, Hardness::kMedium}) {
    const auto out = correct(sql, context("concert_singer"), {"q", std::nullopt, h, {}}, resources(), &llm);
    EXPECT_FALSE(out.prompt_correction_used);
    EXPECT_EQ(out.corrected, sql);
  }
  EXPECT_EQ(backend->calls(), 0u);
  for (Hardness h : {Hardness::kHard, Hardness::kExtra}) {
    const auto out = correct(sql, context("concert_singer"), {"q", std::nullopt, h, {}}, resources(), &llm);
    EXPECT_TRUE(out.prompt_correction_used);
    EXPECT_EQ(out.corrected, "SELECT count(*) FROM singer");
  }
  EXPECT_EQ(backend->calls(), 2u);
}

TEST_F(Scheduler, GateByDemosWithoutHardness) {
  const std::string sql = "SELECT name FROM singer";
  auto out = correct(sql, context("concert_singer"), {"q", std::nullopt, std::nullopt, {"SELECT a FROM t"}}, resources(),
                     &llm);
  EXPECT_FALSE(out.prompt_correction_used);
  out = correct(sql, context("concert_singer"),
                {"q", std::nullopt, std::nullopt, {"SELECT a FROM t EXCEPT SELECT a FROM u"}}, resources(), &llm);
  EXPECT_TRUE(out.prompt_correction_used);
}

TEST_F(Scheduler, UnparseableInputGoesToPrompt) {
  const auto out = correct("SELEC name FRM singer", context("concert_singer"),
                           {"q", std::nullopt, Hardness::kEasy, {}}, resources(), &llm);
  EXPECT_FALSE(out.original_parses);
  EXPECT_TRUE(out.prompt_correction_used);
  EXPECT_EQ(out.corrected, "SELECT count(*) FROM singer");
}

TEST_F(Scheduler, NoProviderRecordsSkip) {
  const auto out = correct("SELECT name FROM singer", context("concert_singer"),
                           {"q", std::nullopt, Hardness::kExtra, {}}, resources(), nullptr);
  EXPECT_FALSE(out.prompt_correction_used);
  EXPECT_EQ(out.trail.back(), "prompt pass skipped: no provider");
}

TEST(PromptPass, UnusableReplyKeepsOriginal) {
  auto backend = std::make_shared<ScriptedBackend>(std::vector<ScriptedBackend::Rule>{}, "I am not sure.");
  LlmClient llm(test_config(), backend, nullptr, ReplayMode::kOff);
  const std::string sql = "SELECT name FROM singer";
  const auto out = correct(sql, context("concert_singer"), {"q", std::nullopt, Hardness::kHard, {}}, resources(), &llm);
  EXPECT_TRUE(out.prompt_correction_used);
  ASSERT_TRUE(out.prompt.has_value());
  EXPECT_FALSE(out.prompt->reply_usable);
  EXPECT_EQ(out.corrected, sql);
}

TEST(PromptPass, ProviderFailureKeepsOriginal) {
  auto backend = std::make_shared<ScriptedBackend>(std::vector<ScriptedBackend::Rule>{});
  LlmClient llm(test_config(), backend, nullptr, ReplayMode::kOff);
  const std::string sql = "SELECT name FROM singer";
  const auto out = correct(sql, context("concert_singer"), {"q", std::nullopt, Hardness::kHard, {}}, resources(), &llm);
  EXPECT_FALSE(out.prompt_correction_used);
  ASSERT_TRUE(out.prompt_error.has_value());
  EXPECT_EQ(out.corrected, sql);
}

TEST(PromptPass, PromptCarriesSchemaQuestionAndGuidelines) {
  auto backend = std::make_shared<ScriptedBackend>(std::vector<ScriptedBackend::Rule>{}, "SELECT 1");
  LlmClient llm(test_config(), backend, nullptr, ReplayMode::kOff);
  const auto out = correct("SELECT name FROM singer ORDER BY age DESC LIMIT 1", context("concert_singer"),
                           {"Who is the oldest singer?", std::nullopt, Hardness::kHard, {}}, resources(), &llm);
  ASSERT_TRUE(out.prompt.has_value());
  const std::string& p = out.prompt->prompt;
  EXPECT_NE(p.find("CREATE TABLE singer"), std::string::npos);
  EXPECT_NE(p.find("Who is the oldest singer?"), std::string::npos);
  EXPECT_NE(p.find("SELECT name FROM singer ORDER BY age DESC LIMIT 1"), std::string::npos);
  EXPECT_NE(p.find(resources().guidelines.text(kGuidelineOrder)), std::string::npos);
  EXPECT_EQ(p.find(resources().guidelines.text(kGuidelineJoin)), std::string::npos);
}

// Both-a-cat-and-a-dog query written with AND on one row: no rule fires, the
// conjunction guideline steers the rewrite to INTERSECT, and the recorded
// reply replays offline with the same result.
TEST(PromptPass, ConjunctionRewriteReplaysOffline) {
  const std::string question = "Find the first name of students who have both a cat and a dog.";
  const std::string initial =
      "SELECT T1.fname FROM student AS T1 JOIN has_pet AS T2 ON T1.stuid = T2.stuid JOIN pets AS T3 ON T3.petid = "
      "T2.petid WHERE T3.pettype = 'cat' AND T3.pettype = 'dog'";
  const CorrectionRequest req{question, std::nullopt, Hardness::kExtra,
                              {"SELECT name FROM people EXCEPT SELECT T1.name FROM people AS T1 JOIN owns AS T2 ON "
                               "T1.id = T2.person_id"}};
  const DbContext& ctx = context("pets_1");
  EXPECT_TRUE(run("pets_1", initial).empty());

  const fs::path dir = fs::temp_directory_path() / ("sqlicl_conj_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  auto store = std::make_shared<ReplayStore>(dir);
  auto backend = ScriptedBackend::from_json_file(testing::source_fixture_dir() / "scripts/conjunction_rewrite.json");
  LlmClient recorder(test_config(), backend, store, ReplayMode::kRecord);
  const auto live = correct(initial, ctx, req, resources(), &recorder);
  EXPECT_TRUE(live.applied_rules.empty());
  EXPECT_EQ(live.guidelines_used, std::vector<std::string>{resources().guidelines.text(kGuidelineConjunction)});
  ASSERT_TRUE(live.prompt_correction_used);
  EXPECT_NE(live.corrected.find("INTERSECT"), std::string::npos);
  const auto rows = run("pets_1", live.corrected);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(std::get<std::string>(rows[0][0]), "Linda");

  LlmClient offline(test_config(), nullptr, store, ReplayMode::kOffline);
  const auto replayed = correct(initial, ctx, req, resources(), &offline);
  EXPECT_EQ(replayed.corrected, live.corrected);
  ASSERT_TRUE(replayed.prompt.has_value());
  EXPECT_EQ(replayed.prompt->prompt, live.prompt->prompt);
  EXPECT_EQ(backend->calls(), 1u);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace sqlicl
