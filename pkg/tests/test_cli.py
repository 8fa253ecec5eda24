import csv
import json
import math
import random

import pytest

from conftest import DATA, SKEWED_TUPLES
from lpbound import cli


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv)
    return code, json.loads(out) if out.strip() else None, err


def write_db(tmp_path, relations):
    for name, (cols, rows) in relations.items():
        with open(tmp_path / f"{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            w.writerows(rows)
    return tmp_path


TRI = DATA / "triangle"
SKEWED = DATA / "skewed"
TRI_Q = TRI / "triangle.cq"
SELF_Q = SKEWED / "selfjoin.cq"


# --- stats -----------------------------------------------------------------


def test_stats_triangle_counts(capsys):
    code, data, _ = run_json(capsys, "stats", "-q", TRI_Q, "--db", TRI, "--p", "1,2,inf")
    assert code == 0
    assert sum(1 for s in data if s["p"] == 1 and not s["u"]) == 3
    assert sum(1 for s in data if s["u"]) == 12
    assert len(data) == 15


def test_stats_skewed_cardinality(capsys):
    code, data, _ = run_json(capsys, "stats", "-q", SKEWED / "single.cq", "--db", SKEWED, "--p", "1")
    assert code == 0 and len(data) == 1 and data[0]["log2_b"] == 3.0


def test_missing_csv_names_relation(capsys, tmp_path):
    code, out, err = run(capsys, "stats", "-q", "Q(X,Y) = Missing(X,Y)", "--db", tmp_path)
    assert code == 2 and out == "" and "Missing" in err


def test_stats_table(capsys):
    code, out, _ = run(capsys, "stats", "-q", SKEWED / "single.cq", "--db", SKEWED, "--p", "2", "--format", "table")
    assert code == 0 and out.splitlines()[0].split() == ["statistic", "log2_b", "b"]
    assert "4.24264" in out


# --- bound -----------------------------------------------------------------


def test_bound_triangle_agm(capsys, tmp_path):
    stats = [{"relation": r, "atom": i, "u": [], "v": list(v), "p": 1, "log2_b": 3.0} for i, (r, v) in enumerate([("R", "XY"), ("S", "YZ"), ("T", "ZX")])]
    path = tmp_path / "stats.json"
    path.write_text(json.dumps(stats))
    code, data, _ = run_json(capsys, "bound", "-q", TRI_Q, "--stats", path, "--explain")
    assert code == 0
    assert data["bound"] == pytest.approx(22.627417, abs=1e-5)
    assert data["certificate"]["weights"] == pytest.approx([0.5] * 3, abs=1e-6)
    assert [e["weight"] for e in data["explain"]] == pytest.approx([0.5] * 3, abs=1e-6)
    assert data["certificate"]["formula"].count("^0.5") == 3


def test_bound_self_join(capsys):
    code, data, _ = run_json(capsys, "bound", "-q", SELF_Q, "--db", SKEWED, "--p", "2")
    assert code == 0 and data["bound"] == pytest.approx(18) and data["method"] == "polymatroid"


def test_bound_explain_table(capsys):
    code, out, _ = run(capsys, "bound", "-q", SELF_Q, "--db", SKEWED, "--p", "2", "--explain", "--format", "table")
    assert code == 0
    assert "||deg_R(X|Y)||_2^1 * ||deg_R(Z|Y)||_2^1" in out
    assert out.count("w = 1") == 2


def test_panda_without_l1_or_linf_is_unbounded(capsys):
    code, data, err = run_json(capsys, "bound", "-q", SELF_Q, "--db", SKEWED, "--p", "2", "--method", "panda")
    assert code == 3 and data["log2_bound"] == "inf" and data["certificate"] is None
    assert "not constrained" in data["diagnostic"] and "unbounded" in err


def test_bound_needs_stats_source(capsys):
    code, _, err = run(capsys, "bound", "-q", SELF_Q)
    assert code == 2 and "--stats" in err


def test_bad_query_and_bad_args(capsys):
    assert run(capsys, "bound", "-q", "Q(X) = R(X", "--db", SKEWED)[0] == 2
    assert run(capsys, "bound", "-q", SELF_Q, "--db", SKEWED, "--p", "")[0] == 2
    assert run(capsys, "bound", "-q", SELF_Q, "--method", "nope")[0] == 2
    assert run(capsys, "frobnicate")[0] == 2


def test_bad_stats_file(capsys, tmp_path):
    path = tmp_path / "stats.json"
    path.write_text("[{\"relation\": \"R\"}]")
    assert run(capsys, "bound", "-q", SELF_Q, "--stats", path)[0] == 2


def test_solver_failure_exit_code(capsys, monkeypatch):
    from lpbound import bounds
    from lpbound.simplex import SolverError

    def boom(*a, **k):
        raise SolverError("iteration limit reached")

    monkeypatch.setattr(bounds, "solve", boom)
    code, _, err = run(capsys, "bound", "-q", SELF_Q, "--db", SKEWED, "--p", "2")
    assert code == 4 and "solver" in err


def test_json_is_byte_deterministic(capsys):
    outs = {run(capsys, "compare", "-q", TRI_Q, "--db", TRI, "--p", "1,2,inf")[1] for _ in range(3)}
    assert len(outs) == 1
    outs = {run(capsys, "bound", "-q", TRI_Q, "--db", TRI, "--explain")[1] for _ in range(3)}
    assert len(outs) == 1


# --- compare ---------------------------------------------------------------


def test_compare_self_join(capsys):
    code, rows, _ = run_json(capsys, "compare", "-q", SELF_Q, "--db", SKEWED, "--p", "2")
    assert code == 0
    by = {r["method"]: r for r in rows}
    assert by["polymatroid"]["error"] == pytest.approx(1.0, abs=1e-6)
    assert rows[0]["method"] == "traditional" and rows[0]["kind"] == "estimate"
    assert [r["method"] for r in rows[1:4]] == ["agm", "panda", "polymatroid"]
    assert all(r["true_size"] == 18 for r in rows)


def test_compare_random_triangle(capsys, tmp_path):
    rng = random.Random(100)
    edges = set()
    while len(edges) < 100:
        edges.add((rng.randrange(30), rng.randrange(30)))
    edges = sorted(edges)
    db = write_db(tmp_path, {n: (("src", "dst"), edges) for n in "RST"})
    code, rows, _ = run_json(capsys, "compare", "-q", TRI_Q, "--db", db, "--p", "1,2,3,inf")
    assert code == 0
    by = {r["method"]: r for r in rows}
    assert by["polymatroid"]["error"] <= by["agm"]["error"] + 1e-9
    assert by["polymatroid"]["error"] >= 1.0 - 1e-9


def test_compare_empty_output_reports_raw_estimates(capsys, tmp_path):
    # R and S share no Y value, so the output is empty.
    db = write_db(
        tmp_path,
        {
            "R": (("a", "b"), [(0, 1), (0, 2), (1, 1)]),
            "S": (("a", "b"), [(5, 0), (6, 0)]),
            "T": (("a", "b"), [(0, 0), (1, 0)]),
        },
    )
    code, rows, _ = run_json(capsys, "compare", "-q", TRI_Q, "--db", db, "--p", "1,inf")
    assert code == 0
    for r in rows:
        assert r["true_size"] == 0
        assert r["error"] == r["bound"]


def test_compare_oracle_cap(capsys):
    code, out, err = run(capsys, "compare", "-q", SELF_Q, "--db", SKEWED, "--p", "2", "--oracle-cap", "5", "--format", "table")
    assert code == 0 and "oracle cap" in err
    body = [line.split() for line in out.splitlines()[2:]]
    # method, kind, log2, value; the true-size and error columns are blank
    assert all(len(cols) == 4 for cols in body)
    code, rows, _ = run_json(capsys, "compare", "-q", SELF_Q, "--db", SKEWED, "--p", "2", "--oracle-cap", "5")
    assert all(r["true_size"] is None and r["error"] is None for r in rows)


# --- verify ----------------------------------------------------------------


@pytest.mark.parametrize(
    "query,db,p",
    [
        (SELF_Q, SKEWED, "2"),
        (SELF_Q, SKEWED, "1,2,3,inf"),
        (SKEWED / "single.cq", SKEWED, "1,2,inf"),
        (TRI_Q, TRI, "1"),
        (TRI_Q, TRI, "1,2,3,inf"),
    ],
)
def test_verify_shipped_examples(capsys, query, db, p):
    code, data, _ = run_json(capsys, "verify", "-q", query, "--db", db, "--p", p)
    assert code == 0 and data["pass"]
    assert [c["check"] for c in data["checks"]] == [
        "database satisfies statistics",
        "soundness",
        "certificate",
        "duality gap",
        "entropy inequality",
    ]


def test_verify_refuses_lowered_statistics(capsys, tmp_path):
    _, stats, _ = run_json(capsys, "stats", "-q", SELF_Q, "--db", SKEWED, "--p", "2")
    stats[0]["log2_b"] -= 0.1
    path = tmp_path / "stats.json"
    path.write_text(json.dumps(stats))
    code, data, _ = run_json(capsys, "verify", "-q", SELF_Q, "--db", SKEWED, "--stats", path)
    assert code == 1 and not data["pass"]
    assert len(data["checks"]) == 1 and "measured" in data["checks"][0]["detail"]


def test_verify_tampered_certificate(capsys, tmp_path):
    _, report, _ = run_json(capsys, "bound", "-q", SELF_Q, "--db", SKEWED, "--p", "2")
    report["certificate"]["weights"] = [w * 0.5 for w in report["certificate"]["weights"]]
    path = tmp_path / "cert.json"
    path.write_text(json.dumps(report))
    code, data, _ = run_json(capsys, "verify", "-q", SELF_Q, "--db", SKEWED, "--p", "2", "--certificate", path)
    assert code == 1
    cert = next(c for c in data["checks"] if c["check"] == "certificate")
    assert not cert["pass"] and "h(" in cert["detail"]


def test_verify_certificate_from_file_roundtrip(capsys, tmp_path):
    _, report, _ = run_json(capsys, "bound", "-q", TRI_Q, "--db", TRI, "--p", "1,2")
    path = tmp_path / "cert.json"
    path.write_text(json.dumps(report))
    code, data, _ = run_json(capsys, "verify", "-q", TRI_Q, "--db", TRI, "--p", "1,2", "--certificate", path)
    assert code == 0 and data["pass"]
    wrong = tmp_path / "short.json"
    report["certificate"]["weights"] = report["certificate"]["weights"][:1]
    wrong.write_text(json.dumps(report))
    assert run(capsys, "verify", "-q", TRI_Q, "--db", TRI, "--p", "1,2", "--certificate", wrong)[0] == 2


def test_inline_query_and_logs_on_stderr(capsys):
    code, out, err = run(capsys, "bound", "-q", "Q(X,Y) = R(X,Y)", "--db", SKEWED, "--p", "1", "-vv")
    assert code == 0 and json.loads(out)["bound"] == pytest.approx(len(set(SKEWED_TUPLES)))
