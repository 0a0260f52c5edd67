#include <array>
#include <cctype>
#include <string>

#include "sqlicl/sql_ast.hpp"
#include "sql_text_util.hpp"

namespace sqlicl {

namespace detail {

bool is_reserved_word(std::string_view word) {
  static constexpr std::array<std::string_view, 47> kReserved = {
      "SELECT", "FROM",  "WHERE",   "GROUP",  "BY",      "HAVING", "ORDER",   "LIMIT",   "OFFSET", "UNION",
      "INTERSECT", "EXCEPT", "ALL", "DISTINCT", "AS",    "ON",     "JOIN",    "INNER",   "LEFT",   "RIGHT",
      "FULL",   "OUTER", "CROSS",   "NATURAL", "AND",    "OR",     "NOT",     "IN",      "LIKE",   "GLOB",
      "BETWEEN", "IS",   "NULL",    "CASE",   "WHEN",    "THEN",   "ELSE",    "END",     "EXISTS", "ASC",
      "DESC",   "CAST",  "USING",   "TRUE",   "FALSE",   "WITH",   "VALUES",
  };
  const std::string upper = to_upper(word);
  for (auto r : kReserved) {
    if (r == upper) return true;
  }
  return false;
}

std::string quote_identifier(const std::string& name) {
  bool plain = !name.empty() && (std::isalpha(static_cast<unsigned char>(name[0])) || name[0] == '_');
  for (char c : name) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') plain = false;
  }
  if (plain && !is_reserved_word(name)) return name;
  std::string out = "`";
  for (char c : name) {
    if (c == '`') out += '`';
    out += c;
  }
  out += '`';
  return out;
}

}  // namespace detail

namespace {

using detail::quote_identifier;

std::string quote_string(const std::string& body, bool double_quoted) {
  const char q = double_quoted ? '"' : '\'';
  std::string out(1, q);
  for (char c : body) {
    if (c == q) out += q;
    out += c;
  }
  out += q;
  return out;
}

int precedence(const AstNode& n) {
  switch (n.kind) {
    case NodeKind::kLogical: return n.text == "OR" ? 1 : 2;
    case NodeKind::kNot: return 3;
    case NodeKind::kComparison:
    case NodeKind::kLike:
    case NodeKind::kIn:
    case NodeKind::kBetween:
    case NodeKind::kIsNull: return 4;
    case NodeKind::kArithmetic:
      if (n.text == "+" || n.text == "-") return 5;
      if (n.text == "||") return 7;
      return 6;
    case NodeKind::kNegate: return 8;
    default: return 9;
  }
}

std::string render_query(const AstNode& n);
std::string expr(const AstNode& n, int min_prec = 0);

std::string raw_expr(const AstNode& n) {
  const std::string neg = n.flag ? " NOT" : "";
  switch (n.kind) {
    case NodeKind::kLiteral:
      return n.literal_type == LiteralType::kString ? quote_string(n.text, n.double_quoted) : n.text;
    case NodeKind::kColumn:
      return (n.qualifier.empty() ? "" : quote_identifier(n.qualifier) + ".") + quote_identifier(n.text);
    case NodeKind::kStar:
      return n.qualifier.empty() ? "*" : quote_identifier(n.qualifier) + ".*";
    case NodeKind::kLogical: {
      std::string out;
      const int p = precedence(n);
      for (std::size_t i = 0; i < n.children.size(); ++i) {
        if (i) out += " " + n.text + " ";
        out += expr(n.children[i], p + 1);
      }
      return out;
    }
    case NodeKind::kNot:
      return "NOT " + expr(n.children[0], 3);
    case NodeKind::kComparison:
      return expr(n.children[0], 5) + " " + n.text + " " + expr(n.children[1], 5);
    case NodeKind::kLike:
      return expr(n.children[0], 5) + neg + " " + n.text + " " + expr(n.children[1], 5);
    case NodeKind::kIn: {
      std::string out = expr(n.children[0], 5) + neg + " IN (";
      if (n.children.size() == 2 && n.children[1].kind == NodeKind::kSubquery) {
        out += render_query(n.children[1].children[0]);
      } else {
        for (std::size_t i = 1; i < n.children.size(); ++i) {
          if (i > 1) out += ", ";
          out += expr(n.children[i]);
        }
      }
      return out + ")";
    }
    case NodeKind::kBetween:
      return expr(n.children[0], 5) + neg + " BETWEEN " + expr(n.children[1], 5) + " AND " +
             expr(n.children[2], 5);
    case NodeKind::kIsNull:
      return expr(n.children[0], 5) + " IS" + neg + " NULL";
    case NodeKind::kArithmetic: {
      const int p = precedence(n);
      return expr(n.children[0], p) + " " + n.text + " " + expr(n.children[1], p + 1);
    }
    case NodeKind::kNegate: {
      const std::string inner = expr(n.children[0], 8);
      return inner.starts_with("-") ? "- " + inner : "-" + inner;
    }
    case NodeKind::kFunction: {
      std::string out = n.text + "(";
      if (n.flag) out += "DISTINCT ";
      for (std::size_t i = 0; i < n.children.size(); ++i) {
        if (i) out += ", ";
        out += expr(n.children[i]);
      }
      return out + ")";
    }
    case NodeKind::kCast:
      return "CAST(" + expr(n.children[0]) + " AS " + n.text + ")";
    case NodeKind::kCase: {
      std::string out = "CASE";
      std::size_t i = 0;
      if (n.flag) out += " " + expr(n.children[i++]);
      for (; i < n.children.size(); ++i) {
        const AstNode& c = n.children[i];
        if (c.kind == NodeKind::kWhen) {
          out += " WHEN " + expr(c.children[0]) + " THEN " + expr(c.children[1]);
        } else {
          out += " ELSE " + expr(c.children[0]);
        }
      }
      return out + " END";
    }
    case NodeKind::kExists:
      return std::string(n.flag ? "NOT " : "") + "EXISTS (" + render_query(n.children[0].children[0]) + ")";
    case NodeKind::kSubquery:
      return "(" + render_query(n.children[0]) + ")";
    default:
      return render_query(n);
  }
}

std::string expr(const AstNode& n, int min_prec) {
  std::string s = raw_expr(n);
  if (precedence(n) < min_prec) return "(" + s + ")";
  return s;
}

std::string alias_suffix(const AstNode& n) { return n.alias.empty() ? "" : " AS " + quote_identifier(n.alias); }

std::string render_source(const AstNode& n) {
  if (n.kind == NodeKind::kDerivedTable) return "(" + render_query(n.children[0]) + ")" + alias_suffix(n);
  return quote_identifier(n.text) + alias_suffix(n);
}

std::string render_select(const AstNode& n) {
  std::string out;
  for (const AstNode& clause : n.children) {
    switch (clause.kind) {
      case NodeKind::kProjection: {
        out += "SELECT ";
        if (clause.flag) out += "DISTINCT ";
        for (std::size_t i = 0; i < clause.children.size(); ++i) {
          if (i) out += ", ";
          out += expr(clause.children[i]) + alias_suffix(clause.children[i]);
        }
        break;
      }
      case NodeKind::kFrom: {
        out += " FROM " + render_source(clause.children[0]);
        for (std::size_t i = 1; i < clause.children.size(); ++i) {
          const AstNode& join = clause.children[i];
          if (join.text == ",") {
            out += ", " + render_source(join.children[0]);
          } else {
            out += " " + join.text + " " + render_source(join.children[0]);
            if (join.children.size() > 1) out += " ON " + expr(join.children[1].children[0]);
          }
        }
        break;
      }
      case NodeKind::kWhere:
        out += " WHERE " + expr(clause.children[0]);
        break;
      case NodeKind::kGroupBy:
        out += " GROUP BY ";
        for (std::size_t i = 0; i < clause.children.size(); ++i) {
          if (i) out += ", ";
          out += expr(clause.children[i]);
        }
        break;
      case NodeKind::kHaving:
        out += " HAVING " + expr(clause.children[0]);
        break;
      case NodeKind::kOrderBy:
        out += " ORDER BY ";
        for (std::size_t i = 0; i < clause.children.size(); ++i) {
          const AstNode& item = clause.children[i];
          if (i) out += ", ";
          out += expr(item.children[0]);
          if (!item.text.empty()) out += " " + item.text;
        }
        break;
      case NodeKind::kLimit:
        out += " LIMIT " + expr(clause.children[0]);
        if (clause.children.size() > 1) out += " OFFSET " + expr(clause.children[1]);
        break;
      default:
        break;
    }
  }
  return out;
}

std::string render_query(const AstNode& n) {
  if (n.kind == NodeKind::kSetOp) {
    std::string right = render_query(n.children[1]);
    // Set operators are left-associative; a nested right operand cannot be
    // parenthesized in SQLite, so it is only emitted flat.
    return render_query(n.children[0]) + " " + n.text + " " + right;
  }
  return render_select(n);
}

}  // namespace

std::string render_sql(const SqlAst& ast) { return render_query(ast.root); }

std::string render_expression(const AstNode& node) { return expr(node); }

}  // namespace sqlicl
