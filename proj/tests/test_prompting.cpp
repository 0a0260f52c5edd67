#include <gtest/gtest.h>

#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <tuple>

#include "sqlicl/error.hpp"
#include "sqlicl/prompting.hpp"
#include "sqlicl/sqlite_db.hpp"
#include "support/fixtures.hpp"

namespace sqlicl {
namespace {

namespace fs = std::filesystem;

const fs::path kTemplates = fs::path(SQLICL_SOURCE_DIR) / "data/templates";

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kInvalidArgument;
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// Executes the DDL and reads the schema back through SQLite itself.
DatabaseSchema reparse(const std::string& ddl, const std::string& db_id) {
  SqliteDb db = SqliteDb::open_memory();
  db.exec(ddl);
  return read_schema(db, db_id);
}

using FkKey = std::tuple<std::string, std::string, std::string, std::string>;

std::set<FkKey> fk_set(const DatabaseSchema& s) {
  std::set<FkKey> out;
  for (const auto& fk : s.foreign_keys) {
    out.emplace(lower(fk.table), lower(fk.column), lower(fk.ref_table), lower(fk.ref_column));
  }
  return out;
}

void expect_same_schema(const DatabaseSchema& want, const DatabaseSchema& got) {
  ASSERT_EQ(want.tables.size(), got.tables.size()) << want.db_id;
  for (std::size_t i = 0; i < want.tables.size(); ++i) {
    const Table& a = want.tables[i];
    const Table& b = got.tables[i];
    EXPECT_EQ(a.name, b.name);
    ASSERT_EQ(a.columns.size(), b.columns.size()) << a.name;
    for (std::size_t j = 0; j < a.columns.size(); ++j) {
      EXPECT_EQ(a.columns[j].name, b.columns[j].name);
      EXPECT_EQ(lower(a.columns[j].type), lower(b.columns[j].type));
    }
    EXPECT_EQ(a.primary_keys, b.primary_keys) << a.name;
  }
  EXPECT_EQ(fk_set(want), fk_set(got)) << want.db_id;
}

PromptBundle sample_bundle(std::size_t shots) {
  PromptBundle b;
  b.instruction = load_instruction(kTemplates);
  const std::vector<Demonstration> pool = {
      {"How many pets are there?", "SELECT count(*) FROM pets"},
      {"List all student first names.", "SELECT fname FROM student"},
      {"What is the oldest pet age?", "SELECT max(pet_age) FROM pets"},
      {"Which students own a dog?", "SELECT T1.fname FROM student AS T1 JOIN has_pet AS T2 ON T1.stuid = T2.stuid"},
      {"Count students by sex.", "SELECT sex, count(*) FROM student GROUP BY sex"},
  };
  b.demonstrations.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(shots));
  b.schema_ddl = render_schema_ddl(*testing::fixture_catalog().find("concert_singer"));
  b.question = "How many singers do we have?";
  return b;
}

TEST(SchemaDdl, EveryFixtureSchemaParsesBack) {
  for (const DatabaseSchema& s : testing::fixture_catalog().all()) {
    const std::string ddl = render_schema_ddl(s);
    expect_same_schema(s, reparse(ddl, s.db_id));
    EXPECT_EQ(ddl, render_schema_ddl(s));
  }
}

TEST(SchemaDdl, SingerTableListsEveryColumn) {
  const DatabaseSchema& s = *testing::fixture_catalog().find("concert_singer");
  const std::string ddl = render_schema_ddl(s);
  const auto start = ddl.find("CREATE TABLE singer (");
  ASSERT_NE(start, std::string::npos);
  const std::string block = ddl.substr(start, ddl.find(");", start) - start);
  for (const Column& c : s.find_table("singer")->columns) EXPECT_NE(block.find(c.name), std::string::npos) << c.name;
}

TEST(SchemaDdl, EmptySchemaIsEmpty) { EXPECT_EQ(render_schema_ddl(DatabaseSchema{}), ""); }

TEST(SchemaDdl, DuplicateForeignKeyEmittedOnce) {
  DatabaseSchema s;
  s.db_id = "d";
  s.tables = {{"a", {{"id", "int"}}, {"id"}}, {"b", {{"id", "int"}, {"a_id", "int"}}, {"id"}}};
  s.foreign_keys = {{"b", "a_id", "a", "id"}, {"b", "a_id", "a", "id"}};
  const std::string ddl = render_schema_ddl(s);
  const std::string clause = "FOREIGN KEY (a_id) REFERENCES a(id)";
  const auto first = ddl.find(clause);
  ASSERT_NE(first, std::string::npos);
  EXPECT_EQ(ddl.find(clause, first + 1), std::string::npos);
}

TEST(SchemaDdl, AwkwardNamesAreQuoted) {
  DatabaseSchema s;
  s.db_id = "d";
  s.tables = {{"order", {{"first name", "text"}, {"default", "int"}, {"group", ""}}, {"default"}},
              {"x`y", {{"id", "number"}, {"ref", "number"}}, {}}};
  s.foreign_keys = {{"x`y", "ref", "order", "default"}};
  expect_same_schema(s, reparse(render_schema_ddl(s), "d"));
}

TEST(PromptTemplateTest, ShippedTemplatesLoad) {
  const PromptTemplate spider = load_prompt_template(kTemplates, PromptLayout::kSpider);
  const PromptTemplate bird = load_prompt_template(kTemplates, PromptLayout::kBird);
  EXPECT_FALSE(spider.has("evidence"));
  EXPECT_TRUE(bird.has("evidence"));
  EXPECT_FALSE(load_instruction(kTemplates).empty());
}

TEST(PromptTemplateTest, BlocksAndLiterals) {
  const PromptTemplate t("a {x} {not a tag} {Y}\n{#b}\nB={b}\n{/b}\nend");
  EXPECT_EQ(t.render({{"x", "1"}}), "a 1 {not a tag} {Y}\nend");
  EXPECT_EQ(t.render({{"x", "1"}, {"b", "2"}}), "a 1 {not a tag} {Y}\nB=2\nend");
  const PromptTemplate nested("{#a}[{#b}<{b}>{/b}{a}]{/a}");
  EXPECT_EQ(nested.render({{"a", "A"}}), "[A]");
  EXPECT_EQ(nested.render({{"b", "B"}}), "");
  EXPECT_EQ(nested.render({{"a", "A"}, {"b", "B"}}), "[<B>A]");
}

TEST(PromptTemplateTest, MalformedTemplatesRejected) {
  EXPECT_EQ(code_of([] { PromptTemplate("{#a}x"); }), ErrorCode::kFormat);
  EXPECT_EQ(code_of([] { PromptTemplate("x{/a}"); }), ErrorCode::kFormat);
  EXPECT_EQ(code_of([] { PromptTemplate("{#a}{#b}{/a}{/b}"); }), ErrorCode::kFormat);

  const fs::path dir = fs::temp_directory_path() / ("sqlicl_tmpl_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  auto write = [&](const std::string& body) {
    std::ofstream(dir / "t.tmpl") << body;
    return dir / "t.tmpl";
  };
  EXPECT_EQ(code_of([&] { load_prompt_template(write("{schema}\n{question}\n{oops}")); }), ErrorCode::kFormat);
  EXPECT_EQ(code_of([&] { load_prompt_template(write("{question}\n{schema}")); }), ErrorCode::kFormat);
  EXPECT_EQ(code_of([&] { load_prompt_template(write("{schema}")); }), ErrorCode::kFormat);
  EXPECT_NO_THROW(load_prompt_template(write("{schema}\n{question}")));
  EXPECT_EQ(code_of([&] { load_prompt_template(dir / "missing.tmpl"); }), ErrorCode::kIo);
  fs::remove_all(dir);
}

TEST(BuildPrompt, ZeroShotOmitsDemonstrationSection) {
  const std::string p = build_prompt(sample_bundle(0), load_prompt_template(kTemplates, PromptLayout::kSpider));
  EXPECT_EQ(p.find("Demonstration"), std::string::npos);
  EXPECT_EQ(p.find("Question:"), std::string::npos);
  EXPECT_NE(p.find("CREATE TABLE singer"), std::string::npos);
  EXPECT_EQ(p.find("\n\n\n"), std::string::npos);
}

TEST(BuildPrompt, SectionsInOrder) {
  PromptBundle b = sample_bundle(2);
  b.evidence = "singers refers to table singer";
  const std::string p = build_prompt(b, load_prompt_template(kTemplates, PromptLayout::kBird));
  const std::vector<std::string> headers = {"### Instruction", "### Demonstration", "### Schema", "### Evidence",
                                            "### Question"};
  std::vector<std::size_t> positions;
  for (const auto& h : headers) {
    positions.push_back(p.find(h));
    ASSERT_NE(positions.back(), std::string::npos) << h;
  }
  EXPECT_TRUE(std::is_sorted(positions.begin(), positions.end()));
  const auto evidence = p.find(*b.evidence);
  EXPECT_GT(evidence, p.find("CREATE TABLE"));
  EXPECT_LT(evidence, p.find(b.question));
}

TEST(BuildPrompt, BirdTemplateWithoutEvidenceHasNoEvidenceHeader) {
  const std::string p = build_prompt(sample_bundle(1), load_prompt_template(kTemplates, PromptLayout::kBird));
  EXPECT_EQ(p.find("Evidence"), std::string::npos);
  EXPECT_EQ(p, build_prompt(sample_bundle(1), load_prompt_template(kTemplates, PromptLayout::kSpider)));
}

TEST(BuildPrompt, FiveDemonstrationsInOrder) {
  const PromptBundle b = sample_bundle(5);
  const std::string p = build_prompt(b, load_prompt_template(kTemplates, PromptLayout::kSpider));
  std::size_t last = 0;
  for (const auto& d : b.demonstrations) {
    const auto q = p.find("Question: " + d.question + "\nSQL: " + d.sql + "\n");
    ASSERT_NE(q, std::string::npos) << d.question;
    EXPECT_GE(q, last);
    last = q;
  }
  EXPECT_LT(last, p.find("### Schema"));
}

TEST(BuildPrompt, PureFunctionOfBundle) {
  const PromptTemplate t = load_prompt_template(kTemplates, PromptLayout::kSpider);
  EXPECT_EQ(build_prompt(sample_bundle(3), t), build_prompt(sample_bundle(3), t));
  EXPECT_NE(build_prompt(sample_bundle(3), t), build_prompt(sample_bundle(2), t));
}

TEST(BuildPrompt, InvalidBundlesRejected) {
  const PromptTemplate spider = load_prompt_template(kTemplates, PromptLayout::kSpider);
  PromptBundle empty_q = sample_bundle(1);
  empty_q.question = "  ";
  EXPECT_EQ(code_of([&] { build_prompt(empty_q, spider); }), ErrorCode::kInvalidArgument);

  PromptBundle bad_demo = sample_bundle(1);
  bad_demo.demonstrations[0].sql = "SELEC name FROM singer";
  EXPECT_EQ(code_of([&] { build_prompt(bad_demo, spider); }), ErrorCode::kInvalidArgument);

  PromptBundle too_many = sample_bundle(1);
  too_many.demonstrations.assign(11, too_many.demonstrations[0]);
  EXPECT_EQ(code_of([&] { build_prompt(too_many, spider); }), ErrorCode::kInvalidArgument);

  PromptBundle evidence = sample_bundle(1);
  evidence.evidence = "x refers to y";
  EXPECT_EQ(code_of([&] { build_prompt(evidence, spider); }), ErrorCode::kInvalidArgument);
}

TEST(CountTokens, EmptyAndGolden) {
  EXPECT_EQ(count_tokens(""), 0u);
  EXPECT_EQ(count_tokens(" \n\t "), 0u);
  EXPECT_EQ(count_tokens("How many singers do we have?"), 7u);
  EXPECT_EQ(count_tokens("SELECT count(*) FROM singer WHERE age > 30;"), 12u);
  EXPECT_EQ(count_tokens("T1.stuid = T2.stuid"), 7u);
  EXPECT_EQ(count_tokens("café ’quoted’"), 2u);
}

TEST(CountTokens, ConcatenationIsMonotone) {
  const std::string alphabet = "ab _(),.'\n9";
  std::mt19937_64 rng(3);
  auto random_text = [&] {
    std::string s(rng() % 12, ' ');
    for (char& c : s) c = alphabet[rng() % alphabet.size()];
    return s;
  };
  for (int i = 0; i < 2000; ++i) {
    const std::string a = random_text(), b = random_text();
    EXPECT_GE(count_tokens(a + b), std::max(count_tokens(a), count_tokens(b))) << '"' << a << "\" + \"" << b << '"';
  }
}

}  // namespace
}  // namespace sqlicl
