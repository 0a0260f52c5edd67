#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "sqlicl/demo_select.hpp"
#include "sqlicl/error.hpp"
#include "sqlicl/synthetic.hpp"
#include "support/fixtures.hpp"
#include "support/sql_corpus.hpp"

namespace sqlicl {
namespace {

namespace fs = std::filesystem;

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kInvalidArgument;
}

Hardness hardness_of(const char* sql) { return classify_hardness(parse_sql(sql)); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("sqlicl_" + std::to_string(::getpid()) + "_" + name);
}

std::vector<Example> synthetic_examples(std::size_t n, std::uint64_t seed) {
  std::vector<Example> out;
  for (const auto& s : synthetic_corpus(testing::fixture_catalog(), n, seed)) out.push_back({s.question, s.sql, s.db_id, "", {}});
  return out;
}

// Expected labels follow the Spider evaluation script rules for these dev queries.
TEST(Hardness, SpiderScriptLabels) {
  EXPECT_EQ(hardness_of("SELECT count(*) FROM singer"), Hardness::kEasy);
  EXPECT_EQ(hardness_of("SELECT name, country, age FROM singer ORDER BY age DESC"), Hardness::kMedium);
  EXPECT_EQ(hardness_of("SELECT T2.name, count(*) FROM concert AS T1 JOIN stadium AS T2 ON T1.stadium_id = "
                        "T2.stadium_id GROUP BY T1.stadium_id"),
            Hardness::kMedium);
  EXPECT_EQ(hardness_of("SELECT song_name FROM singer WHERE age > (SELECT avg(age) FROM singer)"), Hardness::kHard);
  EXPECT_EQ(hardness_of("SELECT name FROM stadium WHERE stadium_id NOT IN (SELECT stadium_id FROM concert)"),
            Hardness::kHard);
  EXPECT_EQ(hardness_of("SELECT country FROM singer WHERE age > 40 INTERSECT SELECT country FROM singer WHERE age < 30"),
            Hardness::kHard);
  EXPECT_EQ(hardness_of("SELECT T2.name, T2.capacity FROM concert AS T1 JOIN stadium AS T2 ON T1.stadium_id = "
                        "T2.stadium_id WHERE T1.year > 2013 GROUP BY T2.stadium_id ORDER BY count(*) DESC LIMIT 1"),
            Hardness::kExtra);
}

// The script gives "hard" for the running EXCEPT example: one set operator,
// no other components on the outer SELECT.
TEST(Hardness, PetOwnerExceptQuery) {
  const auto c = hardness_components(parse_sql(testing::kPetOwnerExceptSql));
  EXPECT_EQ(c.component1, 0);
  EXPECT_EQ(c.component2, 1);
  EXPECT_EQ(c.others, 0);
  EXPECT_EQ(hardness_of(testing::kPetOwnerExceptSql), Hardness::kHard);
}

TEST(Hardness, ComponentCounting) {
  auto c = hardness_components(parse_sql("SELECT a FROM t WHERE a = 1 OR b LIKE 'x%' OR c = 2"));
  EXPECT_EQ(c.component1, 1 + 2 + 1);
  EXPECT_EQ(c.others, 1);
  c = hardness_components(parse_sql("SELECT a FROM t GROUP BY a, b HAVING count(*) > 1 AND sum(b) < 3"));
  EXPECT_EQ(c.component1, 1);
  EXPECT_EQ(c.others, 1);  // two GROUP BY keys; one HAVING connector is a single aggregation
  c = hardness_components(parse_sql("SELECT count(*), max(a) FROM t"));
  EXPECT_EQ(c.others, 2);
  EXPECT_EQ(parse_hardness("extra"), Hardness::kExtra);
  EXPECT_EQ(parse_hardness("nightmare"), std::nullopt);
}

TEST(Tokens, LowercaseAlnumSplit) {
  EXPECT_EQ(question_tokens("How many Singers are there? singers!"),
            (std::vector<std::string>{"are", "how", "many", "singers", "there"}));
  EXPECT_EQ(question_tokens("  "), std::vector<std::string>{});
  EXPECT_DOUBLE_EQ(jaccard({"a", "b"}, {"b", "c"}), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(jaccard({}, {}), 0.0);
}

class SelectTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    examples_ = new std::vector<Example>(synthetic_examples(500, 21));
    index_ = new CandidateIndex(CandidateIndex::build(*examples_, 2, 3));
  }
  static void TearDownTestSuite() {
    delete index_;
    delete examples_;
  }
  static std::vector<Example>* examples_;
  static CandidateIndex* index_;
};
std::vector<Example>* SelectTest::examples_ = nullptr;
CandidateIndex* SelectTest::index_ = nullptr;

TEST_F(SelectTest, PoolIsLarge) { EXPECT_EQ(index_->size(), 500u); }

TEST_F(SelectTest, RandomIsDistinctAndSeeded) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto ids = select_random(*index_, 5, seed);
    EXPECT_EQ(std::set<std::uint32_t>(ids.begin(), ids.end()).size(), 5u);
    EXPECT_EQ(ids, select_random(*index_, 5, seed));
  }
  EXPECT_NE(select_random(*index_, 5, 1), select_random(*index_, 5, 2));
  EXPECT_EQ(code_of([&] { select_random(*index_, 11, 1); }), ErrorCode::kInvalidArgument);
}

TEST(Select, RandomWholePoolAndUniformity) {
  const auto index = CandidateIndex::build(synthetic_examples(20, 4), 2, 3);
  ASSERT_EQ(index.size(), 20u);
  const auto small = CandidateIndex::build(synthetic_examples(6, 4), 2, 3);
  const auto all = select_random(small, 6, 3);
  EXPECT_EQ(std::set<std::uint32_t>(all.begin(), all.end()).size(), 6u);
  EXPECT_EQ(code_of([&] { select_random(small, 7, 3); }), ErrorCode::kPoolTooSmall);

  // Chi-square over 10k single draws; 19 degrees of freedom, p = 0.001 cutoff 43.82.
  std::vector<int> counts(20, 0);
  for (std::uint64_t seed = 0; seed < 10000; ++seed) ++counts[select_random(index, 1, seed)[0]];
  double chi = 0.0;
  for (int c : counts) chi += (c - 500.0) * (c - 500.0) / 500.0;
  EXPECT_LT(chi, 43.82);
}

TEST_F(SelectTest, HardnessBuckets) {
  std::array<std::size_t, 4> sizes{};
  for (const auto& c : index_->candidates()) ++sizes[static_cast<std::size_t>(c.hardness)];
  EXPECT_EQ(sizes[0] + sizes[1] + sizes[2] + sizes[3], index_->size());
  for (Hardness h : {Hardness::kEasy, Hardness::kMedium, Hardness::kHard, Hardness::kExtra}) {
    if (sizes[static_cast<std::size_t>(h)] < 5) continue;
    const auto sel = select_hardness(*index_, h, 5, 7);
    EXPECT_FALSE(sel.fell_back);
    EXPECT_EQ(sel.ids, select_hardness(*index_, h, 5, 7).ids);
    for (auto id : sel.ids) EXPECT_EQ(index_->candidates()[id].hardness, h);
  }
}

TEST(Select, HardnessFallsBackToAdjacentLevel) {
  std::vector<Example> rows = {
      {"q1", "SELECT count(*) FROM singer", "concert_singer", "", {}},
      {"q2", "SELECT name FROM singer", "concert_singer", "", {}},
      {"q3", "SELECT name, age FROM singer ORDER BY age", "concert_singer", "", {}},
      {"q4", "SELECT name, age FROM singer ORDER BY age DESC", "concert_singer", "", {}},
      {"q5", "SELECT name FROM singer EXCEPT SELECT name FROM singer WHERE age > 3", "concert_singer", "", {}},
  };
  const auto index = CandidateIndex::build(rows, 2, 3);
  const auto sel = select_hardness(index, Hardness::kEasy, 3, 1);
  EXPECT_TRUE(sel.fell_back);
  ASSERT_EQ(sel.ids.size(), 3u);
  EXPECT_EQ(std::set<std::uint32_t>(sel.ids.begin(), sel.ids.begin() + 2), (std::set<std::uint32_t>{0, 1}));
  EXPECT_EQ(index.candidates()[sel.ids[2]].hardness, Hardness::kMedium);
}

TEST_F(SelectTest, JaccardMatchesFullScan) {
  for (const char* q : {"How many singers are there?", "List the names of all farms", "cities in the USA",
                        "what pets are older than 3"}) {
    const auto toks = question_tokens(q);
    std::vector<std::pair<double, std::uint32_t>> all;
    for (std::uint32_t i = 0; i < index_->size(); ++i) {
      all.emplace_back(jaccard(toks, question_tokens(index_->candidates()[i].question)), i);
    }
    std::sort(all.begin(), all.end(), [](auto& a, auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
    std::vector<std::uint32_t> expect;
    for (int i = 0; i < 10; ++i) expect.push_back(all[i].second);
    EXPECT_EQ(select_jaccard(*index_, q, 10), expect) << q;
    EXPECT_EQ(select_jaccard(*index_, q, 10), select_jaccard(*index_, q, 10));
  }
  EXPECT_EQ(select_jaccard(*index_, index_->candidates()[77].question, 1)[0],
            select_jaccard(*index_, index_->candidates()[77].question, 1)[0]);
  EXPECT_DOUBLE_EQ(jaccard(question_tokens(index_->candidates()[77].question),
                           index_->tokens(select_jaccard(*index_, index_->candidates()[77].question, 1)[0])),
                   1.0);
  EXPECT_EQ(select_jaccard(*index_, "zzqx qqqv", 3), (std::vector<std::uint32_t>{0, 1, 2}));
}

TEST_F(SelectTest, StructTreeMatchesFullScan) {
  for (const char* sql : {testing::kPetOwnerExceptSql, "SELECT count(*) FROM singer", "SELECT a FROM b WHERE c > 1 ORDER BY d"}) {
    const auto probe = pq_gram_profile(normalize_ast(parse_sql(sql)), 2, 3);
    std::vector<std::pair<std::size_t, std::uint32_t>> all;
    for (const auto& c : index_->candidates()) all.emplace_back(pq_gram_distance(probe, c.profile), c.id);
    std::sort(all.begin(), all.end());
    std::vector<std::uint32_t> expect;
    for (int i = 0; i < 10; ++i) expect.push_back(all[i].second);
    EXPECT_EQ(select_struct_tree(*index_, sql, 10), expect) << sql;
  }
  // Same shape, different names: distance 0 and ranked first.
  const auto& c = index_->candidates()[42];
  const auto first = select_struct_tree(*index_, c.sql, 1)[0];
  EXPECT_EQ(pq_gram_distance(index_->candidates()[first].profile, c.profile), 0u);
  EXPECT_LE(first, 42u);
  EXPECT_THROW(select_struct_tree(*index_, "SELEC nothing", 3), SyntaxError);
}

TEST(Select, StructTreeErasesNames) {
  std::vector<Example> rows = {
      {"a", "SELECT name FROM singer WHERE age > 3", "x", "", {}},
      {"b", "SELECT count(*) FROM pets", "x", "", {}},
      {"c", "SELECT Theme FROM farm_competition ORDER BY YEAR ASC", "x", "", {}},
  };
  const auto index = CandidateIndex::build(rows, 2, 3);
  EXPECT_EQ(select_struct_tree(index, "SELECT petid FROM pets WHERE weight > 10", 1)[0], 0u);
}

TEST(Select, StructGraphSelfRetrievalAndOracle) {
  const auto rows = synthetic_examples(120, 8);
  auto embedder = std::make_shared<TrigramHashProvider>(16);
  Embedder emb(embedder);
  EncoderShape shape;
  shape.d_text = 16;
  shape.d_h = 8;
  shape.heads = 2;
  shape.d_z = 16;
  Checkpoint ck{EncoderParams::init(shape, 0.5, 3), emb.provider_id(), 2, 3};
  const auto index = CandidateIndex::build(rows, 2, 3, &ck, &emb, &testing::fixture_catalog());
  ASSERT_TRUE(index.has_embeddings());
  EXPECT_EQ(index.checkpoint_id(), checkpoint_fingerprint(ck));
  for (std::uint32_t probe : {0u, 17u, 63u}) {
    const auto& c = index.candidates()[probe];
    const auto q = embed_sql(c.sql, ck.params, emb, testing::fixture_catalog().find(c.db_id));
    const auto top = select_struct_graph(index, q, 5);
    EXPECT_DOUBLE_EQ(cosine_similarity(q, Eigen::Map<const Eigen::VectorXf>(index.candidates()[top[0]].embedding.data(),
                                                                            16).cast<double>().transpose()),
                     cosine_similarity(q, q));
    std::vector<std::pair<double, std::uint32_t>> all;
    const Eigen::RowVectorXd u = q / q.norm();
    for (const auto& cand : index.candidates()) {
      double dot = 0;
      for (std::size_t i = 0; i < 16; ++i) dot += u(static_cast<Eigen::Index>(i)) * cand.embedding[i];
      all.emplace_back(dot, cand.id);
    }
    std::sort(all.begin(), all.end(), [](auto& a, auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
    for (int i = 0; i < 5; ++i) EXPECT_EQ(top[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(i)].second);
    EXPECT_EQ(top, select_struct_graph(index, q, 5));
  }
  const auto plain = CandidateIndex::build(rows, 2, 3);
  EXPECT_EQ(code_of([&] { select_struct_graph(plain, Eigen::RowVectorXd::Ones(16), 3); }),
            ErrorCode::kMissingEmbeddings);

  Checkpoint wrong = ck;
  wrong.provider_id = "trigram-v1-d128";
  EXPECT_EQ(code_of([&] { CandidateIndex::build(rows, 2, 3, &wrong, &emb); }), ErrorCode::kCheckpointMismatch);
  EXPECT_EQ(code_of([&] { CandidateIndex::build(rows, 3, 3, &ck, &emb); }), ErrorCode::kCheckpointMismatch);
}

TEST(Index, FileRoundTripIsBitExact) {
  auto rows = synthetic_examples(60, 2);
  rows.push_back({"broken", "SELEC oops", "x", "", {}});
  Embedder emb(std::make_shared<TrigramHashProvider>(16));
  EncoderShape shape;
  shape.d_text = 16;
  shape.d_h = 4;
  shape.heads = 2;
  shape.d_z = 8;
  Checkpoint ck{EncoderParams::init(shape, 0.5, 3), emb.provider_id(), 2, 3};
  IndexBuildStats stats;
  const auto index = CandidateIndex::build(rows, 2, 3, &ck, &emb, &testing::fixture_catalog(), &stats);
  EXPECT_EQ(stats.rows, 61u);
  EXPECT_EQ(stats.skipped, 1u);
  const fs::path a = temp_path("index_a"), b = temp_path("index_b"), c = temp_path("index_c");
  index.save(a);
  const auto loaded = CandidateIndex::load(a);
  EXPECT_EQ(loaded.candidates(), index.candidates());
  EXPECT_EQ(loaded.checkpoint_id(), index.checkpoint_id());
  loaded.save(b);
  EXPECT_EQ(slurp(a), slurp(b));
  CandidateIndex::build(rows, 2, 3, &ck, &emb, &testing::fixture_catalog()).save(c);
  EXPECT_EQ(slurp(a), slurp(c));
  fs::resize_file(b, fs::file_size(b) - 2);
  EXPECT_EQ(code_of([&] { CandidateIndex::load(b); }), ErrorCode::kFormat);
  for (const auto& f : {a, b, c}) fs::remove(f);
}

TEST(Select, PromptOrder) {
  EXPECT_EQ(order_for_prompt({3, 1, 2}), (std::vector<std::uint32_t>{2, 1, 3}));
  EXPECT_EQ(order_for_prompt({3, 1, 2}, false), (std::vector<std::uint32_t>{3, 1, 2}));
  EXPECT_EQ(parse_strategy("struct-graph"), Strategy::kStructGraph);
  EXPECT_THROW(parse_strategy("knn"), Error);
}

}  // namespace
}  // namespace sqlicl
