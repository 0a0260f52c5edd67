#!/usr/bin/env python3
"""Regenerate tables.json (Spider format) from the fixture schema.sql files."""
import json
import pathlib
import re
import sqlite3
import sys


def spider_type(declared: str) -> str:
    t = declared.lower()
    if re.search(r"int|real|float|double|numeric|decimal|number", t):
        return "number"
    if re.search(r"date|time|year", t):
        return "time"
    if "bool" in t:
        return "boolean"
    if re.search(r"char|text|clob|string", t):
        return "text"
    return "others"


def describe(db_id: str, script: str) -> dict:
    con = sqlite3.connect(":memory:")
    con.executescript(script)
    tables = [r[0] for r in con.execute("SELECT name FROM sqlite_master WHERE type='table' ORDER BY rowid")]
    names, types, pks, fks = [[-1, "*"]], ["text"], [], []
    index = {}
    for ti, table in enumerate(tables):
        info = con.execute(f"PRAGMA table_info('{table}')").fetchall()
        table_pk = []
        for cid, name, decl, _notnull, _default, pk in info:
            index[(table.lower(), name.lower())] = len(names)
            if pk:
                table_pk.append((pk, len(names)))
            names.append([ti, name])
            types.append(spider_type(decl or ""))
        table_pk.sort()
        if len(table_pk) == 1:
            pks.append(table_pk[0][1])
        elif table_pk:
            pks.append([c for _, c in table_pk])
    for table in tables:
        for row in con.execute(f"PRAGMA foreign_key_list('{table}')").fetchall():
            ref_table, src, dst = row[2], row[3], row[4]
            fks.append([index[(table.lower(), src.lower())], index[(ref_table.lower(), dst.lower())]])
    readable = [[t, n.replace("_", " ").lower()] for t, n in names]
    return {
        "db_id": db_id,
        "table_names_original": tables,
        "table_names": [t.replace("_", " ").lower() for t in tables],
        "column_names_original": names,
        "column_names": readable,
        "column_types": types,
        "primary_keys": pks,
        "foreign_keys": fks,
    }


def main() -> None:
    root = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "tests/fixtures/spider_mini")
    out = []
    for schema in sorted((root / "database").glob("*/schema.sql")):
        out.append(describe(schema.parent.name, schema.read_text()))
    (root / "tables.json").write_text(json.dumps(out, indent=1) + "\n")


if __name__ == "__main__":
    main()
