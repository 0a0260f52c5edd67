#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "sqlicl/schema.hpp"
#include "sqlicl/sqlite_db.hpp"

namespace sqlicl::testing {

inline std::filesystem::path source_fixture_dir() { return std::filesystem::path(SQLICL_SOURCE_DIR) / "tests/fixtures"; }

// Builds <dst>/database/<db>/<db>.sqlite from every schema.sql under
// <src>/database and copies the JSON files next to them. Existing database
// files are rebuilt so a stale copy never survives a fixture edit.
inline void materialize_spider_fixture(const std::filesystem::path& src, const std::filesystem::path& dst) {
  namespace fs = std::filesystem;
  fs::create_directories(dst / "database");
  for (const auto& entry : fs::directory_iterator(src)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      fs::copy_file(entry.path(), dst / entry.path().filename(), fs::copy_options::overwrite_existing);
    }
  }
  for (const auto& entry : fs::directory_iterator(src / "database")) {
    const fs::path script = entry.path() / "schema.sql";
    if (!fs::exists(script)) continue;
    const std::string db_id = entry.path().filename().string();
    const fs::path out_dir = dst / "database" / db_id;
    fs::create_directories(out_dir);
    const fs::path db_file = out_dir / (db_id + ".sqlite");
    // Unique temp name: several test processes may materialize at once.
    const fs::path tmp = out_dir / (db_id + ".sqlite." + std::to_string(std::random_device{}()) + ".tmp");
    std::ifstream in(script);
    std::stringstream sql;
    sql << in.rdbuf();
    {
      SqliteDb db = SqliteDb::open_readwrite(tmp);
      db.exec(sql.str());
    }
    fs::rename(tmp, db_file);
  }
}

// Materialized copy of tests/fixtures/spider_mini under the build tree,
// created once per process.
inline const std::filesystem::path& spider_mini() {
  static const std::filesystem::path dir = [] {
    const auto d = std::filesystem::path(SQLICL_BINARY_DIR) / "fixtures" / "spider_mini";
    materialize_spider_fixture(source_fixture_dir() / "spider_mini", d);
    return d;
  }();
  return dir;
}

inline const SchemaCatalog& fixture_catalog() {
  static const SchemaCatalog catalog = load_tables_json(spider_mini() / "tables.json");
  return catalog;
}

}  // namespace sqlicl::testing
