import sqlite3
from pathlib import Path

import pytest

import sqlicl

FIXTURE = Path(__file__).resolve().parents[1] / "fixtures" / "spider_mini"


@pytest.fixture(scope="module")
def concert_db(tmp_path_factory):
    db = tmp_path_factory.mktemp("db") / "concert_singer.sqlite"
    with sqlite3.connect(db) as conn:
        conn.executescript((FIXTURE / "database" / "concert_singer" / "schema.sql").read_text())
    return db


def test_render_is_canonical():
    assert sqlicl.render("select count(*) from singer;") == "SELECT COUNT(*) FROM singer"


def test_syntax_error_carries_code():
    with pytest.raises(sqlicl.Error) as info:
        sqlicl.render("SELEC nothing")
    assert info.value.code == "SyntaxError"


def test_structural_distances():
    a = "SELECT name FROM singer WHERE age > 3"
    b = "SELECT petid FROM pets WHERE weight > 10"
    assert sqlicl.tree_edit_distance(a, b) == 0
    assert sqlicl.pq_gram_distance(a, b) == 0
    assert sqlicl.tree_edit_distance(a, "SELECT count(*) FROM singer") > 0
    assert sqlicl.classify_hardness("SELECT count(*) FROM singer") == "easy"


def test_graph_of_pet_query():
    g = sqlicl.sql_graph(
        "SELECT T1.fname FROM student AS T1 JOIN has_pet AS T2 ON T1.stuid = T2.stuid "
        "WHERE T1.age > 20"
    )
    classes = [c for c, _ in g["nodes"]]
    assert classes.count("Root") == 1
    assert classes.count("Table") == 2
    assert all(0 <= a < len(classes) and 0 <= b < len(classes) for a, b in g["edges"])


def test_scoring(concert_db):
    gold = "SELECT count(*) FROM singer"
    assert sqlicl.exact_set_match("select count(*) from singer", gold)
    assert sqlicl.execution_match("SELECT count(Singer_ID) FROM singer", gold, str(concert_db))
    assert not sqlicl.execution_match("SELECT count(*) FROM singer WHERE Age > 1000", gold, str(concert_db))


def test_rule_correction(concert_db):
    out = sqlicl.correct(
        "SELECT Name FROM singer WHERE Country = 'france'",
        str(concert_db),
        str(FIXTURE / "tables.json"),
        "concert_singer",
    )
    assert out["sql"] == "SELECT Name FROM singer WHERE Country = 'France'"
    assert out["applied_rules"] == ["string_format"]


def test_cli_in_process(tmp_path):
    code, out, err = sqlicl.run_cli(
        ["index", "--dataset", str(FIXTURE / "train.json"), "--index", str(tmp_path / "idx.bin")]
    )
    assert code == 0, err
    assert "indexed" in out
    code, _, err = sqlicl.run_cli(["train", "--dataset", "x.json", "--out", "y", "--temperature-tau", "-1"])
    assert code == 2
    assert "NonPositiveTemperature" in err
