#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sqlicl/schema.hpp"

namespace sqlicl {

struct SyntheticExample {
  std::string question;
  std::string sql;
  std::string db_id;
};

// Templated question/SQL pairs over the given schemas: single-table filters,
// aggregates, GROUP BY/HAVING, ORDER BY/LIMIT, nested predicates, set
// operators and one- or two-hop joins along declared foreign keys. Every SQL
// is valid against its schema. Seed-deterministic.
std::vector<SyntheticExample> synthetic_corpus(const SchemaCatalog& schemas, std::size_t n, std::uint64_t seed);

}  // namespace sqlicl
