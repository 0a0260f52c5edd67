#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sqlicl/schema.hpp"

namespace sqlicl {

struct Demonstration {
  std::string question;
  std::string sql;

  bool operator==(const Demonstration&) const = default;
};

struct PromptBundle {
  std::string instruction;
  std::vector<Demonstration> demonstrations;  // in prompt order
  std::string schema_ddl;
  std::optional<std::string> evidence;
  std::string question;

  // Throws Error(kInvalidArgument) for an empty question, more than
  // kMaxShots demonstrations, or a demonstration whose SQL does not parse.
  void validate() const;
};

// Plain text with {name} placeholders and {#name}...{/name} blocks that are
// kept only when name has a non-empty value. A tag alone on its line takes
// the line break with it.
class PromptTemplate {
 public:
  explicit PromptTemplate(std::string text);

  const std::string& text() const { return text_; }
  // Placeholder and block names in order of first appearance.
  const std::vector<std::string>& names() const { return names_; }
  bool has(std::string_view name) const;

  // Missing values render as empty.
  std::string render(const std::map<std::string, std::string, std::less<>>& values) const;

 private:
  struct Segment {
    enum Kind { kText, kValue, kOpen, kClose } kind;
    std::string text;
  };

  std::string text_;
  std::vector<Segment> segments_;
  std::vector<std::string> names_;
};

enum class PromptLayout { kSpider, kBird };

// $SQLICL_DATA_DIR/templates when set, else the templates shipped with the
// source tree.
std::filesystem::path default_template_dir();

// Generation template: only instruction, demonstrations, schema, evidence and
// question are allowed, schema and question are required, and they must
// appear in that order. Throws Error(kFormat) otherwise, Error(kIo) when
// unreadable.
PromptTemplate load_prompt_template(const std::filesystem::path& file);
PromptTemplate load_prompt_template(const std::filesystem::path& dir, PromptLayout layout);
std::string load_instruction(const std::filesystem::path& dir);

// One CREATE TABLE per table in schema order with column types, the primary
// key and every distinct foreign key owned by the table. Empty for a schema
// without tables.
std::string render_schema_ddl(const DatabaseSchema& schema);

std::string render_demonstrations(const std::vector<Demonstration>& demos);

// Validates the bundle, then fills the template. Throws
// Error(kInvalidArgument) when evidence is set but the template has no
// evidence slot.
std::string build_prompt(const PromptBundle& bundle, const PromptTemplate& tmpl);

// Words (runs of letters, digits, '_' and non-ASCII bytes) plus one token per
// punctuation character; whitespace separates.
std::size_t count_tokens(std::string_view text);

using Tokenizer = std::function<std::size_t(std::string_view)>;

}  // namespace sqlicl
