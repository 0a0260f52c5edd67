#include "sqlicl/sqlite_db.hpp"

#include <sqlite3.h>

#include <utility>

#include "sqlicl/error.hpp"

namespace sqlicl {

namespace {

sqlite3* open_with(const std::filesystem::path& file, int flags) {
  sqlite3* db = nullptr;
  const int rc = sqlite3_open_v2(file.string().c_str(), &db, flags, nullptr);
  if (rc != SQLITE_OK) {
    std::string msg = db ? sqlite3_errmsg(db) : "out of memory";
    sqlite3_close(db);
    throw Error(ErrorCode::kIo, "cannot open database " + file.string() + ": " + msg);
  }
  return db;
}

struct Budget {
  std::uint64_t remaining;
};

// Called every 1000 VM instructions; a non-zero return interrupts the query.
int progress_callback(void* data) {
  auto* budget = static_cast<Budget*>(data);
  if (budget->remaining <= 1000) return 1;
  budget->remaining -= 1000;
  return 0;
}

}  // namespace

SqliteDb SqliteDb::open_readonly(const std::filesystem::path& file) {
  if (!std::filesystem::exists(file)) throw Error(ErrorCode::kIo, "database file not found: " + file.string());
  return SqliteDb(open_with(file, SQLITE_OPEN_READONLY));
}

SqliteDb SqliteDb::open_readwrite(const std::filesystem::path& file) {
  return SqliteDb(open_with(file, SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE));
}

SqliteDb SqliteDb::open_memory() { return SqliteDb(open_with(":memory:", SQLITE_OPEN_READWRITE)); }

SqliteDb::SqliteDb(SqliteDb&& other) noexcept : db_(std::exchange(other.db_, nullptr)) {}

SqliteDb& SqliteDb::operator=(SqliteDb&& other) noexcept {
  if (this != &other) {
    sqlite3_close(db_);
    db_ = std::exchange(other.db_, nullptr);
  }
  return *this;
}

SqliteDb::~SqliteDb() { sqlite3_close(db_); }

void SqliteDb::exec(const std::string& sql) {
  char* err = nullptr;
  if (sqlite3_exec(db_, sql.c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown error";
    sqlite3_free(err);
    throw Error(ErrorCode::kExecution, msg);
  }
}

std::vector<Row> SqliteDb::query(const std::string& sql, std::uint64_t step_budget) {
  sqlite3_stmt* stmt = nullptr;
  if (sqlite3_prepare_v2(db_, sql.c_str(), -1, &stmt, nullptr) != SQLITE_OK) {
    throw Error(ErrorCode::kExecution, sqlite3_errmsg(db_));
  }
  Budget budget{step_budget};
  if (step_budget > 0) sqlite3_progress_handler(db_, 1000, progress_callback, &budget);
  std::vector<Row> rows;
  int rc;
  while ((rc = sqlite3_step(stmt)) == SQLITE_ROW) {
    const int n = sqlite3_column_count(stmt);
    Row row;
    row.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      switch (sqlite3_column_type(stmt, i)) {
        case SQLITE_INTEGER: row.emplace_back(static_cast<std::int64_t>(sqlite3_column_int64(stmt, i))); break;
        case SQLITE_FLOAT: row.emplace_back(sqlite3_column_double(stmt, i)); break;
        case SQLITE_NULL: row.emplace_back(std::monostate{}); break;
        default: {
          const auto* text = reinterpret_cast<const char*>(sqlite3_column_text(stmt, i));
          row.emplace_back(std::string(text ? text : "", static_cast<std::size_t>(sqlite3_column_bytes(stmt, i))));
        }
      }
    }
    rows.push_back(std::move(row));
  }
  if (step_budget > 0) sqlite3_progress_handler(db_, 0, nullptr, nullptr);
  std::string msg = rc == SQLITE_DONE ? "" : sqlite3_errmsg(db_);
  sqlite3_finalize(stmt);
  if (rc != SQLITE_DONE) throw Error(ErrorCode::kExecution, msg);
  return rows;
}

}  // namespace sqlicl
