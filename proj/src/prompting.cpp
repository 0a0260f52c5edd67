#include "sqlicl/prompting.hpp"

#include <sqlite3.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdlib>
#include <set>

#include "sql_text_util.hpp"
#include "sqlicl/demo_select.hpp"
#include "sqlicl/error.hpp"
#include "sqlicl/sql_ast.hpp"
#include "text_file.hpp"

#ifndef SQLICL_DEFAULT_DATA_DIR
#define SQLICL_DEFAULT_DATA_DIR "data"
#endif

namespace sqlicl {

namespace {

constexpr std::array<std::string_view, 5> kSectionOrder = {"instruction", "demonstrations", "schema", "evidence",
                                                           "question"};

bool is_name_char(char c) { return std::islower(static_cast<unsigned char>(c)) || c == '_'; }

std::string ddl_identifier(const std::string& name) {
  // SQLite keywords such as "Default" are legal bare column names in queries
  // but not always in DDL, so quote them there too.
  if (sqlite3_keyword_check(name.data(), static_cast<int>(name.size())) != 0) {
    std::string out = "`";
    for (char c : name) {
      if (c == '`') out += '`';
      out += c;
    }
    return out + '`';
  }
  return detail::quote_identifier(name);
}

std::string join_identifiers(const std::vector<std::string>& names) {
  std::string out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i) out += ", ";
    out += ddl_identifier(names[i]);
  }
  return out;
}

}  // namespace

void PromptBundle::validate() const {
  if (detail::trim(question).empty()) throw Error(ErrorCode::kInvalidArgument, "prompt question is empty");
  if (demonstrations.size() > kMaxShots) {
    throw Error(ErrorCode::kInvalidArgument, std::to_string(demonstrations.size()) + " demonstrations exceed the cap of " +
                                                 std::to_string(kMaxShots));
  }
  for (std::size_t i = 0; i < demonstrations.size(); ++i) {
    try {
      parse_sql(demonstrations[i].sql);
    } catch (const SyntaxError& e) {
      throw Error(ErrorCode::kInvalidArgument, "demonstration " + std::to_string(i) + " does not parse: " + e.what());
    }
  }
}

PromptTemplate::PromptTemplate(std::string text) : text_(std::move(text)) {
  std::vector<std::string> open;
  std::string literal;
  auto note = [&](const std::string& name) {
    if (std::find(names_.begin(), names_.end(), name) == names_.end()) names_.push_back(name);
  };
  std::size_t i = 0;
  while (i < text_.size()) {
    const char c = text_[i];
    if (c != '{') {
      literal += c;
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    Segment::Kind kind = Segment::kValue;
    if (j < text_.size() && (text_[j] == '#' || text_[j] == '/')) {
      kind = text_[j] == '#' ? Segment::kOpen : Segment::kClose;
      ++j;
    }
    std::size_t k = j;
    while (k < text_.size() && is_name_char(text_[k])) ++k;
    if (k == j || k >= text_.size() || text_[k] != '}') {
      literal += c;
      ++i;
      continue;
    }
    std::string name = text_.substr(j, k - j);
    std::size_t end = k + 1;
    if (kind != Segment::kValue) {
      const bool line_start = i == 0 || text_[i - 1] == '\n';
      if (line_start && end < text_.size() && text_[end] == '\n') ++end;
      if (kind == Segment::kOpen) {
        open.push_back(name);
      } else {
        if (open.empty() || open.back() != name) {
          throw Error(ErrorCode::kFormat, "template block {/" + name + "} does not close an open block");
        }
        open.pop_back();
      }
    }
    if (!literal.empty()) segments_.push_back({Segment::kText, std::move(literal)});
    literal.clear();
    note(name);
    segments_.push_back({kind, std::move(name)});
    i = end;
  }
  if (!open.empty()) throw Error(ErrorCode::kFormat, "template block {#" + open.back() + "} is never closed");
  if (!literal.empty()) segments_.push_back({Segment::kText, std::move(literal)});
}

bool PromptTemplate::has(std::string_view name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

std::string PromptTemplate::render(const std::map<std::string, std::string, std::less<>>& values) const {
  auto value = [&](const std::string& name) -> const std::string* {
    auto it = values.find(name);
    return it == values.end() ? nullptr : &it->second;
  };
  std::string out;
  int skipping = 0;  // depth of suppressed blocks
  for (const Segment& s : segments_) {
    switch (s.kind) {
      case Segment::kOpen: {
        const std::string* v = value(s.text);
        if (skipping || !v || v->empty()) ++skipping;
        break;
      }
      case Segment::kClose:
        if (skipping) --skipping;
        break;
      case Segment::kText:
        if (!skipping) out += s.text;
        break;
      case Segment::kValue:
        if (!skipping) {
          if (const std::string* v = value(s.text)) out += *v;
        }
        break;
    }
  }
  return out;
}

std::filesystem::path default_template_dir() {
  if (const char* env = std::getenv("SQLICL_DATA_DIR"); env && *env) return std::filesystem::path(env) / "templates";
  return std::filesystem::path(SQLICL_DEFAULT_DATA_DIR) / "templates";
}

PromptTemplate load_prompt_template(const std::filesystem::path& file) {
  PromptTemplate tmpl(detail::read_text_file(file));
  std::size_t last = 0;
  for (const std::string& name : tmpl.names()) {
    auto it = std::find(kSectionOrder.begin(), kSectionOrder.end(), name);
    if (it == kSectionOrder.end()) {
      throw Error(ErrorCode::kFormat, file.string() + ": unknown placeholder {" + name + "}");
    }
    const auto pos = static_cast<std::size_t>(it - kSectionOrder.begin());
    if (pos < last) throw Error(ErrorCode::kFormat, file.string() + ": placeholder {" + name + "} is out of order");
    last = pos;
  }
  for (std::string_view required : {"schema", "question"}) {
    if (!tmpl.has(required)) {
      throw Error(ErrorCode::kFormat, file.string() + ": missing placeholder {" + std::string(required) + "}");
    }
  }
  return tmpl;
}

PromptTemplate load_prompt_template(const std::filesystem::path& dir, PromptLayout layout) {
  return load_prompt_template(dir / (layout == PromptLayout::kBird ? "bird.tmpl" : "spider.tmpl"));
}

std::string load_instruction(const std::filesystem::path& dir) {
  return std::string(detail::trim(detail::read_text_file(dir / "instruction.txt")));
}

std::string render_schema_ddl(const DatabaseSchema& schema) {
  std::string out;
  for (const Table& t : schema.tables) {
    std::vector<std::string> lines;
    for (const Column& c : t.columns) {
      lines.push_back(ddl_identifier(c.name) + (c.type.empty() ? "" : " " + c.type));
    }
    if (!t.primary_keys.empty()) lines.push_back("PRIMARY KEY (" + join_identifiers(t.primary_keys) + ")");
    std::vector<const ForeignKey*> seen;
    for (const ForeignKey& fk : schema.foreign_keys) {
      if (!detail::iequals(fk.table, t.name)) continue;
      if (std::any_of(seen.begin(), seen.end(), [&](const ForeignKey* s) { return *s == fk; })) continue;
      seen.push_back(&fk);
      lines.push_back("FOREIGN KEY (" + ddl_identifier(fk.column) + ") REFERENCES " + ddl_identifier(fk.ref_table) +
                      "(" + ddl_identifier(fk.ref_column) + ")");
    }
    out += "CREATE TABLE " + ddl_identifier(t.name) + " (\n";
    for (std::size_t i = 0; i < lines.size(); ++i) {
      out += "  " + lines[i] + (i + 1 < lines.size() ? ",\n" : "\n");
    }
    out += ");\n";
  }
  return out;
}

std::string render_demonstrations(const std::vector<Demonstration>& demos) {
  std::string out;
  for (std::size_t i = 0; i < demos.size(); ++i) {
    if (i) out += "\n";
    out += "Question: " + std::string(detail::trim(demos[i].question)) + "\n";
    out += "SQL: " + std::string(detail::trim(demos[i].sql)) + "\n";
  }
  // The template supplies the line break after the placeholder.
  if (!out.empty()) out.pop_back();
  return out;
}

std::string build_prompt(const PromptBundle& bundle, const PromptTemplate& tmpl) {
  bundle.validate();
  const bool has_evidence = bundle.evidence && !detail::trim(*bundle.evidence).empty();
  if (has_evidence && !tmpl.has("evidence")) {
    throw Error(ErrorCode::kInvalidArgument, "evidence given but the template has no {evidence} slot");
  }
  std::string schema = bundle.schema_ddl;
  while (!schema.empty() && schema.back() == '\n') schema.pop_back();
  return tmpl.render({
      {"instruction", bundle.instruction},
      {"demonstrations", render_demonstrations(bundle.demonstrations)},
      {"schema", schema},
      {"evidence", has_evidence ? std::string(detail::trim(*bundle.evidence)) : std::string()},
      {"question", std::string(detail::trim(bundle.question))},
  });
}

std::size_t count_tokens(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      in_word = false;
    } else if (std::isalnum(c) || c == '_' || c >= 0x80) {
      if (!in_word) ++n;
      in_word = true;
    } else {
      ++n;
      in_word = false;
    }
  }
  return n;
}

}  // namespace sqlicl
