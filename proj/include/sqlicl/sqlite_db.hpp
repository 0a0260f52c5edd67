#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

struct sqlite3;

namespace sqlicl {

using Cell = std::variant<std::monostate, std::int64_t, double, std::string>;
using Row = std::vector<Cell>;

// Thin owning handle over an sqlite3 connection. Not copyable; a handle must
// only be used from one thread at a time.
class SqliteDb {
 public:
  static SqliteDb open_readonly(const std::filesystem::path& file);
  static SqliteDb open_readwrite(const std::filesystem::path& file);
  static SqliteDb open_memory();

  SqliteDb(SqliteDb&& other) noexcept;
  SqliteDb& operator=(SqliteDb&& other) noexcept;
  SqliteDb(const SqliteDb&) = delete;
  SqliteDb& operator=(const SqliteDb&) = delete;
  ~SqliteDb();

  // Runs one or more statements, discarding results. Throws Error(kExecution).
  void exec(const std::string& sql);

  // Runs a single statement and returns every row. Execution is aborted once
  // step_budget virtual-machine steps have been spent (0 means unlimited).
  // Throws Error(kExecution) on any failure, including the budget running out.
  std::vector<Row> query(const std::string& sql, std::uint64_t step_budget = 0);

  sqlite3* handle() const { return db_; }

 private:
  explicit SqliteDb(sqlite3* db) : db_(db) {}
  sqlite3* db_ = nullptr;
};

}  // namespace sqlicl
