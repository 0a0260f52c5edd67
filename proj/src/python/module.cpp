#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "sqlicl/cli.hpp"
#include "sqlicl/demo_select.hpp"
#include "sqlicl/error_correct.hpp"
#include "sqlicl/eval_harness.hpp"
#include "sqlicl/schema.hpp"
#include "sqlicl/sql_ast.hpp"
#include "sqlicl/sql_graph.hpp"
#include "sqlicl/sqlite_db.hpp"
#include "sqlicl/tree_metric.hpp"

namespace py = pybind11;
using namespace sqlicl;

namespace {

LabeledTree tree_of(const std::string& sql) { return normalize_ast(parse_sql(sql)); }

py::dict graph_dict(const std::string& sql) {
  const SqlGraph g = build_graph(parse_sql(sql));
  py::list nodes, edges;
  for (const auto& n : g.nodes) nodes.append(py::make_tuple(std::string(graph_node_class_name(n.cls)), n.text));
  for (const auto& [a, b] : g.edges) edges.append(py::make_tuple(a, b));
  py::dict d;
  d["nodes"] = nodes;
  d["edges"] = edges;
  return d;
}

py::dict correct_sql(const std::string& sql, const std::string& db_file, const std::string& tables_json,
                     const std::string& db_id, const std::string& question, const std::optional<std::string>& hardness) {
  const SchemaCatalog catalog = load_tables_json(tables_json);
  const DatabaseSchema* schema = catalog.find(db_id);
  if (!schema) throw Error(ErrorCode::kInvalidArgument, "unknown database '" + db_id + "'");
  const DbContext ctx = DbContext::load(db_file, *schema);
  CorrectionRequest req{question, std::nullopt, std::nullopt, {}};
  if (hardness) {
    req.hardness = parse_hardness(*hardness);
    if (!req.hardness) throw Error(ErrorCode::kInvalidArgument, "unknown hardness '" + *hardness + "'");
  }
  const CorrectionOutcome out = correct(sql, ctx, req, CorrectionResources::load(default_template_dir()), nullptr);
  py::dict d;
  d["sql"] = out.corrected;
  d["applied_rules"] = out.applied_rules;
  d["original_parses"] = out.original_parses;
  d["trail"] = out.trail;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core: SQL parsing, structural distances, correction, scoring and the command line";

  // Instances carry the error code name in .code.
  static py::handle error_type = PyErr_NewException("sqlicl._core.Error", PyExc_RuntimeError, nullptr);
  m.attr("Error") = error_type;
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error_type)(e.what());
      exc.attr("code") = std::string(error_code_name(e.code()));
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  m.def("render", [](const std::string& sql) { return render_sql(parse_sql(sql)); },
        "Canonical rendering of a statement", py::arg("sql"));
  m.def("normalized_tree", [](const std::string& sql) { return tree_of(sql).to_string(); },
        "Type-label tree used by the structural distances", py::arg("sql"));
  m.def("tree_edit_distance", [](const std::string& a, const std::string& b) { return tree_edit_distance(tree_of(a), tree_of(b)); },
        py::arg("sql_a"), py::arg("sql_b"));
  m.def("pq_gram_distance",
        [](const std::string& a, const std::string& b, int p, int q) {
          return pq_gram_distance(pq_gram_profile(tree_of(a), p, q), pq_gram_profile(tree_of(b), p, q));
        },
        py::arg("sql_a"), py::arg("sql_b"), py::arg("p") = kDefaultP, py::arg("q") = kDefaultQ);
  m.def("classify_hardness", [](const std::string& sql) { return std::string(hardness_name(classify_hardness(parse_sql(sql)))); },
        py::arg("sql"));
  m.def("sql_graph", &graph_dict, "Nodes as (class, text) and edges as (parent, child)", py::arg("sql"));
  m.def("exact_set_match", [](const std::string& pred, const std::string& gold) { return exact_set_match(pred, gold).match; },
        py::arg("pred"), py::arg("gold"));
  m.def("execution_match",
        [](const std::string& pred, const std::string& gold, const std::string& db_file) {
          SqliteDb db = SqliteDb::open_readonly(db_file);
          return execution_match(pred, gold, db);
        },
        py::arg("pred"), py::arg("gold"), py::arg("db_file"));
  m.def("correct", &correct_sql, "Rule-based correction (no LLM pass)", py::arg("sql"), py::arg("db_file"),
        py::arg("tables_json"), py::arg("db_id"), py::arg("question") = "", py::arg("hardness") = py::none());
  m.def("run_cli",
        [](const std::vector<std::string>& args) {
          std::ostringstream out, err;
          int code;
          {
            py::gil_scoped_release release;
            code = run_cli(args, out, err);
          }
          return py::make_tuple(code, out.str(), err.str());
        },
        "Runs a command-line invocation in process; returns (exit code, stdout, stderr)", py::arg("args"));
}
