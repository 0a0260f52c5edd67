#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace sqlicl {

class SqliteDb;

enum class ValueType { kText, kNumber, kTime, kBoolean, kOther };

// Maps a declared column type ("varchar(20)", "INT", Spider's "number") to a
// coarse class.
ValueType classify_type(std::string_view declared);
std::string_view value_type_name(ValueType type);

struct Column {
  std::string name;
  std::string type;  // declared type as written in the metadata

  ValueType value_type() const { return classify_type(type); }
};

struct Table {
  std::string name;
  std::vector<Column> columns;
  std::vector<std::string> primary_keys;

  const Column* find_column(std::string_view column) const;
};

struct ForeignKey {
  std::string table;
  std::string column;
  std::string ref_table;
  std::string ref_column;

  bool operator==(const ForeignKey&) const = default;
};

struct DatabaseSchema {
  std::string db_id;
  std::vector<Table> tables;
  std::vector<ForeignKey> foreign_keys;

  // Lookups are case-insensitive, as in SQLite.
  const Table* find_table(std::string_view name) const;
  const Column* find_column(std::string_view table, std::string_view column) const;
  // Tables owning a column of this name, in schema order.
  std::vector<const Table*> tables_with_column(std::string_view column) const;
};

class SchemaCatalog {
 public:
  void add(DatabaseSchema schema);
  const DatabaseSchema* find(std::string_view db_id) const;
  const std::vector<DatabaseSchema>& all() const { return schemas_; }
  std::size_t size() const { return schemas_.size(); }
  bool empty() const { return schemas_.empty(); }

 private:
  std::vector<DatabaseSchema> schemas_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

// Spider-format tables.json: an array of objects with db_id,
// table_names_original, column_names_original, column_types, primary_keys and
// foreign_keys. Throws Error(kFormat) naming the offending entry.
SchemaCatalog load_tables_json(const std::filesystem::path& path);
SchemaCatalog parse_tables_json(std::string_view text);

// Reads the schema of an SQLite file through PRAGMA table_info and
// foreign_key_list. Throws Error(kIo) if the file cannot be opened.
DatabaseSchema schema_from_sqlite(const std::filesystem::path& db_file, const std::string& db_id);
DatabaseSchema read_schema(SqliteDb& db, const std::string& db_id);

}  // namespace sqlicl
