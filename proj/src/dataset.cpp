#include "sqlicl/dataset.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sqlicl/error.hpp"

namespace sqlicl {

namespace {

std::string field(const nlohmann::json& row, std::size_t index, const char* name) {
  auto it = row.find(name);
  if (it == row.end() || !it->is_string()) {
    throw Error(ErrorCode::kFormat, "row " + std::to_string(index) + ": missing or non-string field '" + name + "'");
  }
  return it->get<std::string>();
}

}  // namespace

std::vector<Example> parse_dataset(std::string_view json_text, DatasetFormat format) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kFormat, std::string("dataset is not valid JSON: ") + e.what());
  }
  if (!doc.is_array()) throw Error(ErrorCode::kFormat, "dataset must be a JSON array");
  std::vector<Example> out;
  out.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& row = doc[i];
    if (!row.is_object()) throw Error(ErrorCode::kFormat, "row " + std::to_string(i) + ": not an object");
    Example ex;
    ex.question = field(row, i, "question");
    ex.db_id = field(row, i, "db_id");
    if (format == DatasetFormat::kSpider) {
      ex.sql = field(row, i, "query");
      if (auto it = row.find("hardness"); it != row.end() && it->is_string()) ex.difficulty = it->get<std::string>();
    } else {
      ex.sql = field(row, i, "SQL");
      ex.evidence = field(row, i, "evidence");
      ex.difficulty = field(row, i, "difficulty");
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<Example> load_dataset(const std::filesystem::path& file, DatasetFormat format) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + file.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_dataset(buf.str(), format);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kFormat) throw;
    throw Error(ErrorCode::kFormat, file.string() + ": " + e.what());
  }
}

DatasetFormat parse_dataset_format(std::string_view name) {
  if (name == "spider") return DatasetFormat::kSpider;
  if (name == "bird") return DatasetFormat::kBird;
  throw Error(ErrorCode::kInvalidArgument, "unknown dataset format '" + std::string(name) + "'");
}

std::filesystem::path database_file(const std::filesystem::path& db_root, const std::string& db_id) {
  return db_root / db_id / (db_id + ".sqlite");
}

}  // namespace sqlicl
