#include "sqlicl/sql_ast.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <string>
#include <utility>

#include "sqlicl/error.hpp"
#include "sql_text_util.hpp"

namespace sqlicl {
namespace {

enum class TokenType { kWord, kQuotedIdent, kString, kNumber, kSymbol, kEnd };

struct Token {
  TokenType type = TokenType::kEnd;
  std::string text;  // unquoted content for strings and quoted identifiers
  std::size_t pos = 0;
  bool double_quoted = false;
};

bool is_word_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || static_cast<unsigned char>(c) >= 0x80;
}

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$' ||
         static_cast<unsigned char>(c) >= 0x80;
}

std::vector<Token> tokenize(std::string_view in) {
  std::vector<Token> out;
  std::size_t i = 0;
  const std::size_t n = in.size();
  while (i < n) {
    const char c = in[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '-' && i + 1 < n && in[i + 1] == '-') {
      while (i < n && in[i] != '\n') ++i;
      continue;
    }
    if (c == '/' && i + 1 < n && in[i + 1] == '*') {
      const auto end = in.find("*/", i + 2);
      if (end == std::string_view::npos) throw SyntaxError(i, "unterminated comment");
      i = end + 2;
      continue;
    }
    Token tok;
    tok.pos = i;
    if (is_word_start(c)) {
      std::size_t j = i + 1;
      while (j < n && is_word_char(in[j])) ++j;
      tok.type = TokenType::kWord;
      tok.text = std::string(in.substr(i, j - i));
      i = j;
    } else if (std::isdigit(static_cast<unsigned char>(c)) ||
               (c == '.' && i + 1 < n && std::isdigit(static_cast<unsigned char>(in[i + 1])))) {
      std::size_t j = i;
      while (j < n && std::isdigit(static_cast<unsigned char>(in[j]))) ++j;
      if (j < n && in[j] == '.') {
        ++j;
        while (j < n && std::isdigit(static_cast<unsigned char>(in[j]))) ++j;
      }
      if (j < n && (in[j] == 'e' || in[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < n && (in[k] == '+' || in[k] == '-')) ++k;
        if (k < n && std::isdigit(static_cast<unsigned char>(in[k]))) {
          while (k < n && std::isdigit(static_cast<unsigned char>(in[k]))) ++k;
          j = k;
        }
      }
      if (j < n && is_word_start(in[j])) throw SyntaxError(j, "malformed number");
      tok.type = TokenType::kNumber;
      tok.text = std::string(in.substr(i, j - i));
      i = j;
    } else if (c == '\'' || c == '"' || c == '`' || c == '[') {
      const char close = c == '[' ? ']' : c;
      std::string body;
      std::size_t j = i + 1;
      bool closed = false;
      while (j < n) {
        if (in[j] == close) {
          if (close != ']' && j + 1 < n && in[j + 1] == close) {
            body.push_back(close);
            j += 2;
            continue;
          }
          closed = true;
          ++j;
          break;
        }
        body.push_back(in[j]);
        ++j;
      }
      if (!closed) throw SyntaxError(i, "unterminated quoted token");
      tok.text = std::move(body);
      if (c == '\'' || c == '"') {
        tok.type = TokenType::kString;
        tok.double_quoted = c == '"';
      } else {
        tok.type = TokenType::kQuotedIdent;
      }
      i = j;
    } else {
      static constexpr std::array<std::string_view, 6> kTwoChar = {"<=", ">=", "<>", "!=", "==", "||"};
      tok.type = TokenType::kSymbol;
      if (i + 1 < n) {
        const std::string_view two = in.substr(i, 2);
        if (std::find(kTwoChar.begin(), kTwoChar.end(), two) != kTwoChar.end()) {
          tok.text = std::string(two);
          i += 2;
          out.push_back(std::move(tok));
          continue;
        }
      }
      static constexpr std::string_view kSingle = "=<>+-*/%(),.;";
      if (kSingle.find(c) == std::string_view::npos) {
        throw SyntaxError(i, std::string("unexpected character '") + c + "'");
      }
      tok.text = std::string(1, c);
      ++i;
    }
    out.push_back(std::move(tok));
  }
  Token end;
  end.type = TokenType::kEnd;
  end.pos = n;
  out.push_back(end);
  return out;
}

AstNode make(NodeKind kind, std::string text = {}) {
  AstNode node;
  node.kind = kind;
  node.text = std::move(text);
  return node;
}

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

  SqlAst parse_statement() {
    if (peek().type == TokenType::kEnd) throw SyntaxError(0, "empty statement");
    SqlAst ast;
    ast.root = parse_query();
    accept_symbol(";");
    if (peek().type != TokenType::kEnd) fail("unexpected trailing token '" + peek().text + "'");
    return ast;
  }

 private:
  const Token& peek(std::size_t ahead = 0) const {
    return toks_[std::min(idx_ + ahead, toks_.size() - 1)];
  }
  const Token& advance() { return toks_[idx_ < toks_.size() - 1 ? idx_++ : idx_]; }

  [[noreturn]] void fail(const std::string& message) const { throw SyntaxError(peek().pos, message); }

  bool is_kw(const Token& t, std::string_view kw) const {
    return t.type == TokenType::kWord && detail::iequals(t.text, kw);
  }
  bool peek_kw(std::string_view kw, std::size_t ahead = 0) const { return is_kw(peek(ahead), kw); }
  bool accept_kw(std::string_view kw) {
    if (!peek_kw(kw)) return false;
    ++idx_;
    return true;
  }
  void expect_kw(std::string_view kw) {
    if (!accept_kw(kw)) fail("expected " + std::string(kw));
  }
  bool peek_symbol(std::string_view s, std::size_t ahead = 0) const {
    return peek(ahead).type == TokenType::kSymbol && peek(ahead).text == s;
  }
  bool accept_symbol(std::string_view s) {
    if (!peek_symbol(s)) return false;
    ++idx_;
    return true;
  }
  void expect_symbol(std::string_view s) {
    if (!accept_symbol(s)) fail("expected '" + std::string(s) + "'");
  }

  bool peek_identifier(std::size_t ahead = 0) const {
    const Token& t = peek(ahead);
    if (t.type == TokenType::kQuotedIdent) return true;
    return t.type == TokenType::kWord && !detail::is_reserved_word(t.text);
  }

  // Identifier positions also accept double-quoted strings, which SQLite
  // resolves as identifiers there.
  std::string expect_identifier(std::string_view what) {
    const Token& t = peek();
    if (peek_identifier() || (t.type == TokenType::kString && t.double_quoted)) {
      return advance().text;
    }
    fail("expected " + std::string(what));
  }

  std::string parse_optional_alias() {
    if (accept_kw("AS")) return expect_identifier("alias");
    if (peek_identifier()) return advance().text;
    return {};
  }

  AstNode parse_query() {
    AstNode left = parse_select_core();
    while (true) {
      std::string op;
      if (accept_kw("UNION")) {
        op = accept_kw("ALL") ? "UNION ALL" : "UNION";
      } else if (accept_kw("INTERSECT")) {
        op = "INTERSECT";
      } else if (accept_kw("EXCEPT")) {
        op = "EXCEPT";
      } else {
        break;
      }
      AstNode right = parse_select_core();
      AstNode set_op = make(NodeKind::kSetOp, op);
      set_op.children.push_back(std::move(left));
      set_op.children.push_back(std::move(right));
      left = std::move(set_op);
    }
    return left;
  }

  AstNode parse_select_core() {
    expect_kw("SELECT");
    AstNode select = make(NodeKind::kSelect);
    AstNode projection = make(NodeKind::kProjection);
    if (accept_kw("DISTINCT")) {
      projection.flag = true;
    } else {
      accept_kw("ALL");
    }
    do {
      projection.children.push_back(parse_select_item());
    } while (accept_symbol(","));
    select.children.push_back(std::move(projection));

    if (accept_kw("FROM")) select.children.push_back(parse_from());
    if (accept_kw("WHERE")) {
      AstNode where = make(NodeKind::kWhere);
      where.children.push_back(parse_expr());
      select.children.push_back(std::move(where));
    }
    if (peek_kw("GROUP")) {
      ++idx_;
      expect_kw("BY");
      AstNode group = make(NodeKind::kGroupBy);
      do {
        group.children.push_back(parse_expr());
      } while (accept_symbol(","));
      select.children.push_back(std::move(group));
    }
    if (accept_kw("HAVING")) {
      AstNode having = make(NodeKind::kHaving);
      having.children.push_back(parse_expr());
      select.children.push_back(std::move(having));
    }
    if (peek_kw("ORDER")) {
      ++idx_;
      expect_kw("BY");
      AstNode order = make(NodeKind::kOrderBy);
      do {
        AstNode item = make(NodeKind::kOrderItem);
        item.children.push_back(parse_expr());
        if (accept_kw("ASC")) {
          item.text = "ASC";
        } else if (accept_kw("DESC")) {
          item.text = "DESC";
        }
        order.children.push_back(std::move(item));
      } while (accept_symbol(","));
      select.children.push_back(std::move(order));
    }
    if (accept_kw("LIMIT")) {
      AstNode limit = make(NodeKind::kLimit);
      AstNode first = parse_expr();
      if (accept_kw("OFFSET")) {
        limit.children.push_back(std::move(first));
        limit.children.push_back(parse_expr());
      } else if (accept_symbol(",")) {
        // LIMIT offset, count
        AstNode count = parse_expr();
        limit.children.push_back(std::move(count));
        limit.children.push_back(std::move(first));
      } else {
        limit.children.push_back(std::move(first));
      }
      select.children.push_back(std::move(limit));
    }
    return select;
  }

  AstNode parse_select_item() {
    if (accept_symbol("*")) return make(NodeKind::kStar);
    if (peek_identifier() && peek_symbol(".", 1) && peek_symbol("*", 2)) {
      AstNode star = make(NodeKind::kStar);
      star.qualifier = advance().text;
      idx_ += 2;
      return star;
    }
    AstNode expr = parse_expr();
    expr.alias = parse_optional_alias();
    return expr;
  }

  AstNode parse_from() {
    AstNode from = make(NodeKind::kFrom);
    from.children.push_back(parse_table_source());
    while (true) {
      std::string join_text;
      if (accept_symbol(",")) {
        join_text = ",";
      } else if (accept_kw("JOIN")) {
        join_text = "JOIN";
      } else if (peek_kw("INNER") && peek_kw("JOIN", 1)) {
        idx_ += 2;
        join_text = "INNER JOIN";
      } else if (peek_kw("CROSS") && peek_kw("JOIN", 1)) {
        idx_ += 2;
        join_text = "CROSS JOIN";
      } else if (peek_kw("LEFT")) {
        ++idx_;
        accept_kw("OUTER");
        expect_kw("JOIN");
        join_text = "LEFT JOIN";
      } else if (peek_kw("NATURAL") || peek_kw("RIGHT") || peek_kw("FULL")) {
        fail("unsupported join type " + peek().text);
      } else {
        break;
      }
      AstNode join = make(NodeKind::kJoin, join_text);
      join.children.push_back(parse_table_source());
      if (join_text != "," && accept_kw("ON")) {
        AstNode on = make(NodeKind::kOn);
        on.children.push_back(parse_expr());
        join.children.push_back(std::move(on));
      } else if (peek_kw("USING")) {
        fail("USING joins are not supported");
      }
      from.children.push_back(std::move(join));
    }
    return from;
  }

  AstNode parse_table_source() {
    if (accept_symbol("(")) {
      if (!peek_kw("SELECT")) fail("expected subquery");
      AstNode derived = make(NodeKind::kDerivedTable);
      derived.children.push_back(parse_query());
      expect_symbol(")");
      derived.alias = parse_optional_alias();
      return derived;
    }
    AstNode table = make(NodeKind::kTableRef, expect_identifier("table name"));
    table.alias = parse_optional_alias();
    return table;
  }

  AstNode parse_expr() { return parse_or(); }

  AstNode parse_logical(std::string_view op, AstNode (Parser::*next)()) {
    AstNode first = (this->*next)();
    if (!peek_kw(op)) return first;
    AstNode logical = make(NodeKind::kLogical, std::string(op));
    auto absorb = [&](AstNode node) {
      if (node.kind == NodeKind::kLogical && node.text == op && node.alias.empty()) {
        for (auto& child : node.children) logical.children.push_back(std::move(child));
      } else {
        logical.children.push_back(std::move(node));
      }
    };
    absorb(std::move(first));
    while (accept_kw(op)) absorb((this->*next)());
    return logical;
  }

  AstNode parse_or() { return parse_logical("OR", &Parser::parse_and); }
  AstNode parse_and() { return parse_logical("AND", &Parser::parse_not); }

  AstNode parse_not() {
    if (peek_kw("NOT")) {
      ++idx_;
      AstNode node = make(NodeKind::kNot);
      node.children.push_back(parse_not());
      return node;
    }
    return parse_comparison();
  }

  AstNode parse_comparison() {
    AstNode lhs = parse_additive();
    const Token& t = peek();
    if (t.type == TokenType::kSymbol) {
      static constexpr std::array<std::pair<std::string_view, std::string_view>, 8> kOps = {{
          {"=", "="}, {"==", "="}, {"!=", "!="}, {"<>", "!="},
          {"<", "<"}, {"<=", "<="}, {">", ">"}, {">=", ">="},
      }};
      for (const auto& [spelling, canonical] : kOps) {
        if (t.text == spelling) {
          ++idx_;
          AstNode cmp = make(NodeKind::kComparison, std::string(canonical));
          cmp.children.push_back(std::move(lhs));
          cmp.children.push_back(parse_additive());
          return cmp;
        }
      }
      return lhs;
    }
    if (accept_kw("IS")) {
      const bool negated = accept_kw("NOT");
      if (accept_kw("NULL")) {
        AstNode node = make(NodeKind::kIsNull);
        node.flag = negated;
        node.children.push_back(std::move(lhs));
        return node;
      }
      AstNode cmp = make(NodeKind::kComparison, negated ? "IS NOT" : "IS");
      cmp.children.push_back(std::move(lhs));
      cmp.children.push_back(parse_additive());
      return cmp;
    }
    bool negated = false;
    if (peek_kw("NOT") && (peek_kw("IN", 1) || peek_kw("LIKE", 1) || peek_kw("GLOB", 1) || peek_kw("BETWEEN", 1))) {
      ++idx_;
      negated = true;
    }
    if (accept_kw("IN")) {
      AstNode in = make(NodeKind::kIn);
      in.flag = negated;
      in.children.push_back(std::move(lhs));
      expect_symbol("(");
      if (peek_kw("SELECT")) {
        AstNode sub = make(NodeKind::kSubquery);
        sub.children.push_back(parse_query());
        in.children.push_back(std::move(sub));
      } else {
        do {
          in.children.push_back(parse_expr());
        } while (accept_symbol(","));
      }
      expect_symbol(")");
      return in;
    }
    if (peek_kw("LIKE") || peek_kw("GLOB")) {
      AstNode like = make(NodeKind::kLike, detail::to_upper(advance().text));
      like.flag = negated;
      like.children.push_back(std::move(lhs));
      like.children.push_back(parse_additive());
      return like;
    }
    if (accept_kw("BETWEEN")) {
      AstNode between = make(NodeKind::kBetween);
      between.flag = negated;
      between.children.push_back(std::move(lhs));
      between.children.push_back(parse_additive());
      expect_kw("AND");
      between.children.push_back(parse_additive());
      return between;
    }
    if (negated) fail("dangling NOT");
    return lhs;
  }

  AstNode parse_binary_chain(std::initializer_list<std::string_view> ops, AstNode (Parser::*next)()) {
    AstNode lhs = (this->*next)();
    while (true) {
      const Token& t = peek();
      if (t.type != TokenType::kSymbol) break;
      const auto it = std::find(ops.begin(), ops.end(), std::string_view(t.text));
      if (it == ops.end()) break;
      ++idx_;
      AstNode bin = make(NodeKind::kArithmetic, std::string(*it));
      bin.children.push_back(std::move(lhs));
      bin.children.push_back((this->*next)());
      lhs = std::move(bin);
    }
    return lhs;
  }

  AstNode parse_additive() { return parse_binary_chain({"+", "-"}, &Parser::parse_multiplicative); }
  AstNode parse_multiplicative() { return parse_binary_chain({"*", "/", "%"}, &Parser::parse_concat); }
  AstNode parse_concat() { return parse_binary_chain({"||"}, &Parser::parse_unary); }

  AstNode parse_unary() {
    if (accept_symbol("-")) {
      if (peek().type == TokenType::kNumber) {
        AstNode lit = parse_primary();
        lit.text = "-" + lit.text;
        return lit;
      }
      AstNode neg = make(NodeKind::kNegate);
      neg.children.push_back(parse_unary());
      return neg;
    }
    if (accept_symbol("+")) return parse_unary();
    return parse_primary();
  }

  AstNode parse_primary() {
    const Token& t = peek();
    switch (t.type) {
      case TokenType::kNumber: {
        AstNode lit = make(NodeKind::kLiteral, advance().text);
        const bool is_float = lit.text.find_first_of(".eE") != std::string::npos;
        lit.literal_type = is_float ? LiteralType::kFloat : LiteralType::kInteger;
        return lit;
      }
      case TokenType::kString: {
        AstNode lit = make(NodeKind::kLiteral);
        lit.literal_type = LiteralType::kString;
        lit.double_quoted = t.double_quoted;
        lit.text = advance().text;
        return lit;
      }
      case TokenType::kSymbol: {
        if (accept_symbol("(")) {
          if (peek_kw("SELECT")) {
            AstNode sub = make(NodeKind::kSubquery);
            sub.children.push_back(parse_query());
            expect_symbol(")");
            return sub;
          }
          AstNode inner = parse_expr();
          expect_symbol(")");
          return inner;
        }
        fail("expected expression, found '" + t.text + "'");
      }
      case TokenType::kEnd:
        fail("unexpected end of statement");
      case TokenType::kQuotedIdent:
      case TokenType::kWord:
        break;
    }

    if (t.type == TokenType::kWord) {
      if (accept_kw("NULL")) {
        AstNode lit = make(NodeKind::kLiteral, "NULL");
        lit.literal_type = LiteralType::kNull;
        return lit;
      }
      if (peek_kw("TRUE") || peek_kw("FALSE")) {
        AstNode lit = make(NodeKind::kLiteral, detail::to_upper(advance().text));
        lit.literal_type = LiteralType::kBoolean;
        return lit;
      }
      if (accept_kw("CASE")) return parse_case();
      if (accept_kw("CAST")) return parse_cast();
      if (accept_kw("EXISTS")) {
        expect_symbol("(");
        AstNode exists = make(NodeKind::kExists);
        AstNode sub = make(NodeKind::kSubquery);
        sub.children.push_back(parse_query());
        exists.children.push_back(std::move(sub));
        expect_symbol(")");
        return exists;
      }
      if (detail::is_reserved_word(t.text)) fail("unexpected keyword " + detail::to_upper(t.text));
    }

    // Identifier: function call, qualified column, or bare column.
    std::string name = advance().text;
    if (t.type == TokenType::kWord && peek_symbol("(")) {
      ++idx_;
      AstNode fn = make(NodeKind::kFunction, detail::to_upper(name));
      if (accept_symbol(")")) return fn;
      if (accept_kw("DISTINCT")) fn.flag = true;
      do {
        if (accept_symbol("*")) {
          fn.children.push_back(make(NodeKind::kStar));
        } else {
          fn.children.push_back(parse_expr());
        }
      } while (accept_symbol(","));
      expect_symbol(")");
      return fn;
    }
    if (accept_symbol(".")) {
      if (accept_symbol("*")) {
        AstNode star = make(NodeKind::kStar);
        star.qualifier = std::move(name);
        return star;
      }
      AstNode col = make(NodeKind::kColumn, expect_identifier("column name"));
      col.qualifier = std::move(name);
      return col;
    }
    return make(NodeKind::kColumn, std::move(name));
  }

  AstNode parse_case() {
    AstNode node = make(NodeKind::kCase);
    if (!peek_kw("WHEN")) {
      node.flag = true;
      node.children.push_back(parse_expr());
    }
    if (!peek_kw("WHEN")) fail("expected WHEN");
    while (accept_kw("WHEN")) {
      AstNode when = make(NodeKind::kWhen);
      when.children.push_back(parse_expr());
      expect_kw("THEN");
      when.children.push_back(parse_expr());
      node.children.push_back(std::move(when));
    }
    if (accept_kw("ELSE")) {
      AstNode other = make(NodeKind::kElse);
      other.children.push_back(parse_expr());
      node.children.push_back(std::move(other));
    }
    expect_kw("END");
    return node;
  }

  AstNode parse_cast() {
    expect_symbol("(");
    AstNode node = make(NodeKind::kCast);
    node.children.push_back(parse_expr());
    expect_kw("AS");
    std::string type;
    while (peek().type == TokenType::kWord) {
      if (!type.empty()) type += ' ';
      type += detail::to_upper(advance().text);
    }
    if (type.empty()) fail("expected type name");
    if (accept_symbol("(")) {
      type += '(';
      while (!peek_symbol(")")) {
        if (peek().type == TokenType::kEnd) fail("unterminated type");
        const Token& part = advance();
        type += part.text;
      }
      ++idx_;
      type += ')';
    }
    node.text = std::move(type);
    expect_symbol(")");
    return node;
  }

  std::vector<Token> toks_;
  std::size_t idx_ = 0;
};

}  // namespace

SqlAst parse_sql(std::string_view text) { return Parser(tokenize(text)).parse_statement(); }

}  // namespace sqlicl
