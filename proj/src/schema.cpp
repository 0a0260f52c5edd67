#include "sqlicl/schema.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "sqlicl/error.hpp"
#include "sqlicl/sqlite_db.hpp"
#include "sql_text_util.hpp"

namespace sqlicl {

ValueType classify_type(std::string_view declared) {
  const std::string t = detail::to_lower(declared);
  const auto has = [&](std::string_view s) { return t.find(s) != std::string::npos; };
  if (t == "number" || has("int") || has("real") || has("float") || has("double") || has("numeric") ||
      has("decimal") || has("num")) {
    return ValueType::kNumber;
  }
  if (t == "time" || has("date") || has("time") || has("year")) return ValueType::kTime;
  if (has("bool")) return ValueType::kBoolean;
  if (t == "text" || has("char") || has("text") || has("clob") || has("string")) return ValueType::kText;
  // SQLite's affinity rules treat an empty declaration as BLOB/ANY.
  return ValueType::kOther;
}

std::string_view value_type_name(ValueType type) {
  switch (type) {
    case ValueType::kText: return "text";
    case ValueType::kNumber: return "number";
    case ValueType::kTime: return "time";
    case ValueType::kBoolean: return "boolean";
    case ValueType::kOther: return "others";
  }
  return "others";
}

const Column* Table::find_column(std::string_view column) const {
  for (const Column& c : columns) {
    if (detail::iequals(c.name, column)) return &c;
  }
  return nullptr;
}

const Table* DatabaseSchema::find_table(std::string_view name) const {
  for (const Table& t : tables) {
    if (detail::iequals(t.name, name)) return &t;
  }
  return nullptr;
}

const Column* DatabaseSchema::find_column(std::string_view table, std::string_view column) const {
  const Table* t = find_table(table);
  return t ? t->find_column(column) : nullptr;
}

std::vector<const Table*> DatabaseSchema::tables_with_column(std::string_view column) const {
  std::vector<const Table*> out;
  for (const Table& t : tables) {
    if (t.find_column(column)) out.push_back(&t);
  }
  return out;
}

void SchemaCatalog::add(DatabaseSchema schema) {
  const std::string key = schema.db_id;
  if (auto it = index_.find(key); it != index_.end()) {
    schemas_[it->second] = std::move(schema);
    return;
  }
  index_.emplace(key, schemas_.size());
  schemas_.push_back(std::move(schema));
}

const DatabaseSchema* SchemaCatalog::find(std::string_view db_id) const {
  auto it = index_.find(db_id);
  return it == index_.end() ? nullptr : &schemas_[it->second];
}

SchemaCatalog parse_tables_json(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("tables metadata is not valid JSON: ") + e.what());
  }
  if (!doc.is_array()) throw Error(ErrorCode::kFormat, "tables metadata must be a JSON array");
  SchemaCatalog catalog;
  for (std::size_t row = 0; row < doc.size(); ++row) {
    const auto& entry = doc[row];
    try {
      DatabaseSchema schema;
      schema.db_id = entry.at("db_id").get<std::string>();
      const auto& table_names = entry.contains("table_names_original") ? entry.at("table_names_original")
                                                                         : entry.at("table_names");
      const auto& column_names = entry.contains("column_names_original") ? entry.at("column_names_original")
                                                                           : entry.at("column_names");
      const auto& column_types = entry.at("column_types");
      for (const auto& name : table_names) schema.tables.push_back(Table{name.get<std::string>(), {}, {}});
      // Column 0 is Spider's synthetic "*" entry with table index -1.
      std::vector<std::pair<int, std::string>> columns;
      for (std::size_t c = 0; c < column_names.size(); ++c) {
        const int table_idx = column_names[c].at(0).get<int>();
        const std::string name = column_names[c].at(1).get<std::string>();
        columns.emplace_back(table_idx, name);
        if (table_idx < 0) continue;
        if (static_cast<std::size_t>(table_idx) >= schema.tables.size()) {
          throw Error(ErrorCode::kFormat, "column " + name + " references a missing table");
        }
        const std::string type = c < column_types.size() ? column_types[c].get<std::string>() : "text";
        schema.tables[static_cast<std::size_t>(table_idx)].columns.push_back(Column{name, type});
      }
      const auto column_at = [&](int idx) -> const std::pair<int, std::string>& {
        if (idx < 0 || static_cast<std::size_t>(idx) >= columns.size() || columns[idx].first < 0) {
          throw Error(ErrorCode::kFormat, "key references column index " + std::to_string(idx));
        }
        return columns[static_cast<std::size_t>(idx)];
      };
      if (entry.contains("primary_keys")) {
        for (const auto& pk : entry.at("primary_keys")) {
          // Composite keys appear as nested arrays in some releases.
          std::vector<int> ids;
          if (pk.is_array()) {
            for (const auto& x : pk) ids.push_back(x.get<int>());
          } else {
            ids.push_back(pk.get<int>());
          }
          for (int id : ids) {
            const auto& [t, name] = column_at(id);
            schema.tables[static_cast<std::size_t>(t)].primary_keys.push_back(name);
          }
        }
      }
      if (entry.contains("foreign_keys")) {
        for (const auto& fk : entry.at("foreign_keys")) {
          const auto& [t1, c1] = column_at(fk.at(0).get<int>());
          const auto& [t2, c2] = column_at(fk.at(1).get<int>());
          schema.foreign_keys.push_back(ForeignKey{schema.tables[static_cast<std::size_t>(t1)].name, c1,
                                                   schema.tables[static_cast<std::size_t>(t2)].name, c2});
        }
      }
      catalog.add(std::move(schema));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kFormat, "tables metadata entry " + std::to_string(row) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorCode::kFormat, "tables metadata entry " + std::to_string(row) + ": " + e.what());
    }
  }
  return catalog;
}

SchemaCatalog load_tables_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_tables_json(buf.str());
}

namespace {

std::string quote_sql_string(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += '\'';
    out += c;
  }
  return out + "'";
}

std::string cell_text(const Cell& c) {
  if (const auto* s = std::get_if<std::string>(&c)) return *s;
  if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
  return {};
}

}  // namespace

DatabaseSchema schema_from_sqlite(const std::filesystem::path& db_file, const std::string& db_id) {
  SqliteDb db = SqliteDb::open_readonly(db_file);
  return read_schema(db, db_id);
}

DatabaseSchema read_schema(SqliteDb& db, const std::string& db_id) {
  DatabaseSchema schema;
  schema.db_id = db_id;
  const auto tables = db.query(
      "SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%' ORDER BY rowid");
  for (const Row& t : tables) {
    Table table;
    table.name = cell_text(t[0]);
    // cid, name, type, notnull, dflt_value, pk
    std::vector<std::pair<std::int64_t, std::string>> pk_order;
    for (const Row& c : db.query("PRAGMA table_info(" + quote_sql_string(table.name) + ")")) {
      table.columns.push_back(Column{cell_text(c[1]), cell_text(c[2])});
      if (const auto* pk = std::get_if<std::int64_t>(&c[5]); pk && *pk > 0) pk_order.emplace_back(*pk, cell_text(c[1]));
    }
    std::sort(pk_order.begin(), pk_order.end());
    for (auto& [pos, name] : pk_order) table.primary_keys.push_back(name);
    schema.tables.push_back(std::move(table));
  }
  for (const Table& table : schema.tables) {
    // id, seq, table, from, to, on_update, on_delete, match
    for (const Row& fk : db.query("PRAGMA foreign_key_list(" + quote_sql_string(table.name) + ")")) {
      std::string ref_table = cell_text(fk[2]);
      std::string ref_column = cell_text(fk[4]);
      if (ref_column.empty()) {
        // REFERENCES t without a column list points at t's primary key.
        if (const Table* rt = schema.find_table(ref_table); rt && !rt->primary_keys.empty()) {
          ref_column = rt->primary_keys.front();
        }
      }
      schema.foreign_keys.push_back(ForeignKey{table.name, cell_text(fk[3]), ref_table, ref_column});
    }
  }
  return schema;
}

}  // namespace sqlicl
