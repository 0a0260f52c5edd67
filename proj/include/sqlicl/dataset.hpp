#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sqlicl {

struct Example {
  std::string question;
  std::string sql;
  std::string db_id;
  std::string evidence;                   // BIRD only
  // BIRD's simple/moderate/challenging tag, or an optional Spider "hardness"
  // field (easy/medium/hard/extra).
  std::optional<std::string> difficulty;
};

enum class DatasetFormat { kSpider, kBird };

// Spider rows need question, query and db_id; BIRD rows need question,
// evidence, SQL, db_id and difficulty. Throws Error(kFormat) naming the row
// index and field of the first bad row.
std::vector<Example> parse_dataset(std::string_view json_text, DatasetFormat format);
std::vector<Example> load_dataset(const std::filesystem::path& file, DatasetFormat format);
DatasetFormat parse_dataset_format(std::string_view name);

// <db_root>/<db_id>/<db_id>.sqlite
std::filesystem::path database_file(const std::filesystem::path& db_root, const std::string& db_id);

}  // namespace sqlicl
