"""``lpbound`` command line: stats, bound, compare, verify."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import bounds as B
from .eval_oracle import (
    DEFAULT_OUTPUT_CAP,
    OracleCapExceeded,
    empirical_entropy,
    entropy_statistic_value,
    evaluate_join,
    join_size,
)
from .query_model import Query, QueryError, parse_query
from .simplex import GAP_TOL, SolverError
from .stats_engine import (
    Relation,
    StatisticsError,
    StatisticsSet,
    atom_columns,
    compute_statistics,
    default_statistics,
    format_norm,
    load_relation_csv,
    parse_norm,
    satisfaction_report,
    statistic_value,
)

log = logging.getLogger("lpbound")

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_INPUT = 2
EXIT_UNBOUNDED = 3
EXIT_NUMERICAL = 4

DEFAULT_P = "1,2,3,4,5,6,7,8,9,10,inf"


class InputError(Exception):
    pass


# --- config loading --------------------------------------------------------


def load_query(source: str) -> Query:
    path = Path(source)
    try:
        is_file = path.is_file()
    except OSError:
        is_file = False
    text = path.read_text() if is_file else source
    return parse_query(text)


def parse_p_list(text: str) -> list[float]:
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise InputError("--p needs at least one norm order")
    try:
        return list(dict.fromkeys(parse_norm(t) for t in items))
    except (ValueError, StatisticsError) as exc:
        raise InputError(f"bad --p list {text!r}: {exc}") from None


def load_db(q: Query, directory: str) -> dict[str, Relation]:
    root = Path(directory)
    if not root.is_dir():
        raise InputError(f"database directory {directory} does not exist")
    db = {}
    for rel in dict.fromkeys(a.relation for a in q.atoms):
        path = root / f"{rel}.csv"
        if not path.is_file():
            raise InputError(f"relation {rel}: missing file {path}")
        db[rel] = load_relation_csv(path, rel)
        log.info("loaded %s: %d tuples", rel, len(db[rel]))
    return db


def load_stats(q: Query, path: str) -> StatisticsSet:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read statistics file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"statistics file {path} is not JSON: {exc}") from None
    return StatisticsSet.from_json(q, data)


def resolve_stats(args, q: Query, db: Optional[dict]) -> StatisticsSet:
    if args.stats:
        return load_stats(q, args.stats)
    if db is None:
        raise InputError("need --stats FILE or --db DIR")
    return compute_statistics(db, q, default_statistics(q, parse_p_list(args.p)))


def emit(obj, fmt: str, table: Optional[str] = None) -> None:
    if fmt == "json" or table is None:
        sys.stdout.write(json.dumps(obj, indent=2, ensure_ascii=False) + "\n")
    else:
        sys.stdout.write(table if table.endswith("\n") else table + "\n")


def render_table(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    cells = [[str(h) for h in header]] + [["" if c is None else str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.6g}"


# --- commands --------------------------------------------------------------


def cmd_stats(args) -> int:
    q = load_query(args.query)
    if not args.db:
        raise InputError("stats needs --db DIR")
    db = load_db(q, args.db)
    ss = compute_statistics(db, q, default_statistics(q, parse_p_list(args.p)))
    rows = [(s.label(q), _fmt(s.log_b), _fmt(2.0**s.log_b if s.log_b > -math.inf else 0.0)) for s in ss]
    emit(ss.to_json(q), args.format, render_table(["statistic", "log2_b", "b"], rows))
    return EXIT_OK


def _explain(report: B.BoundReport, q: Query, stats: StatisticsSet) -> list[dict]:
    if report.certificate is None:
        return []
    return [
        {"statistic": s.label(q), "weight": B._clean(w), "log2_b": s.log_b}
        for w, s in zip(report.certificate.weights, stats)
        if w > 1e-9
    ]


def cmd_bound(args) -> int:
    q = load_query(args.query)
    db = load_db(q, args.db) if args.db else None
    stats = resolve_stats(args, q, db)
    report = B.bound(q, stats, args.method)
    out = report.to_json(q, stats)
    if args.explain:
        out["explain"] = _explain(report, q, stats)
    lines = [
        f"method     {report.method}",
        f"log2 bound {_fmt(report.log_bound)}",
        f"bound      {_fmt(report.linear_bound)}",
    ]
    if report.diagnostic:
        lines.append(f"note       {report.diagnostic}")
    if args.explain and report.certificate is not None:
        lines.append(f"formula    {report.certificate.formula(q, stats)}")
        for e in out["explain"]:
            lines.append(f"  w = {_fmt(e['weight']):<8} {e['statistic']}  (log2_b = {_fmt(e['log2_b'])})")
    emit(out, args.format, "\n".join(lines))
    if report.unbounded:
        log.error("unbounded: %s", report.diagnostic)
        return EXIT_UNBOUNDED
    return EXIT_OK


def _true_size(q: Query, db: dict, cap: int) -> Optional[int]:
    try:
        return join_size(q, db, cap)
    except OracleCapExceeded:
        log.warning("output exceeds the oracle cap of %d tuples; true size omitted", cap)
        return None


def estimation_error(estimate: float, true_size: Optional[int]) -> Optional[float]:
    """Estimate divided by the true size; the raw estimate when the true size is 0."""
    if true_size is None:
        return None
    return estimate if true_size == 0 else estimate / true_size


def compare_reports(q: Query, db: dict, stats: StatisticsSet, p_set) -> list[B.BoundReport]:
    reports = []
    closed = B.applicable_closed_forms(q, db, p_set)
    reports.extend(r for r in closed if r.estimate)
    for m in ("agm", "panda", "lp"):
        reports.append(B.bound(q, stats, m))
    reports.extend(r for r in closed if not r.estimate)
    return reports


def cmd_compare(args) -> int:
    q = load_query(args.query)
    if not args.db:
        raise InputError("compare needs --db DIR")
    db = load_db(q, args.db)
    stats = resolve_stats(args, q, db)
    true_size = _true_size(q, db, args.oracle_cap)
    rows, out = [], []
    for r in compare_reports(q, db, stats, parse_p_list(args.p)):
        err = estimation_error(r.linear_bound, true_size)
        out.append(
            {
                "method": r.method,
                "kind": "estimate" if r.estimate else "bound",
                "log2_bound": B._json_float(r.log_bound),
                "bound": B._json_float(r.linear_bound),
                "true_size": true_size,
                "error": None if err is None else B._json_float(err),
            }
        )
        rows.append((r.method, out[-1]["kind"], _fmt(r.log_bound), _fmt(r.linear_bound), true_size, _fmt(err)))
    emit(out, args.format, render_table(["method", "kind", "log2", "value", "true", "error"], rows))
    return EXIT_OK


def _load_certificate(path: str, n_stats: int) -> B.BoundCertificate:
    try:
        data = json.loads(Path(path).read_text())
        cert = data["certificate"]
        weights = tuple(float(w) for w in cert["weights"])
        duals = cert.get("shannon_duals")
        duals = None if duals is None else tuple(float(x) for x in duals)
        log_bound = float(data["log2_bound"])
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"cannot read certificate {path}: {exc}") from None
    if len(weights) != n_stats:
        raise InputError(f"certificate has {len(weights)} weights but there are {n_stats} statistics")
    return B.BoundCertificate(weights, log_bound, duals)


def entropy_checks(q: Query, db: dict, stats: StatisticsSet, output: Optional[Relation]) -> list[str]:
    """Failures of (1/p)h(U) + h(V|U) <= log2 b on uniform distributions.

    Each guard relation is checked on its own tuples, and the query output
    (when available and nonempty) on the head variables.
    """
    bad = []
    for i, s in enumerate(stats):
        rel = db[q.atoms[s.guard].relation]
        if not rel.tuples:
            continue
        u = atom_columns(q, rel, s.guard, s.cond.u)
        v = atom_columns(q, rel, s.guard, s.cond.v)
        e = empirical_entropy(rel)
        lhs = entropy_statistic_value(e, u, v, s.p)
        if lhs > s.log_b + 1e-9:
            bad.append(f"statistic {i} on {rel.name}: {lhs:.9g} > {s.log_b:.9g}")
        if output is not None and output.tuples:
            eo = empirical_entropy(output)
            lo = entropy_statistic_value(eo, q.names(s.cond.u), q.names(s.cond.v), s.p)
            if lo > s.log_b + 1e-9:
                bad.append(f"statistic {i} on the output: {lo:.9g} > {s.log_b:.9g}")
    return bad


def cmd_verify(args) -> int:
    q = load_query(args.query)
    if not args.db:
        raise InputError("verify needs --db DIR")
    db = load_db(q, args.db)
    stats = resolve_stats(args, q, db)
    checks: list[dict] = []

    def record(name: str, ok: bool, detail: str = "") -> None:
        checks.append({"check": name, "pass": bool(ok), "detail": detail})

    violated = satisfaction_report(db, q, stats)
    record(
        "database satisfies statistics",
        not violated,
        "; ".join(f"statistic {i} ({stats[i].label(q)}): measured {m:.9g} > {b:.9g}" for i, m, b in violated),
    )
    if not violated:
        report = B.polymatroid_bound(q, stats)
        try:
            output = evaluate_join(q, db, args.oracle_cap)
            true_size: Optional[int] = len(output)
        except OracleCapExceeded:
            output, true_size = None, None
        if true_size is None:
            record("soundness", False, f"output exceeds the oracle cap of {args.oracle_cap}")
        else:
            ok = true_size <= report.linear_bound + 0.5
            record("soundness", ok, f"|Q| = {true_size}, bound = {_fmt(report.linear_bound)}")
        if report.certificate is not None:
            cert = _load_certificate(args.certificate, len(stats)) if args.certificate else report.certificate
            chk = B.verify_certificate(q, stats, cert)
            record("certificate", chk.valid, chk.message)
            gap = report.residuals.gap if report.residuals is not None else math.nan
            record("duality gap", gap <= GAP_TOL, f"gap = {gap:.3g}")
        else:
            record("certificate", True, report.diagnostic or "no certificate for an infinite bound")
        bad = entropy_checks(q, db, stats, output)
        record("entropy inequality", not bad, "; ".join(bad))

    all_ok = all(c["pass"] for c in checks)
    table = "\n".join(f"{'PASS' if c['pass'] else 'FAIL'}  {c['check']}" + (f": {c['detail']}" if c["detail"] else "") for c in checks)
    emit({"pass": all_ok, "checks": checks}, args.format, table)
    return EXIT_OK if all_ok else EXIT_VERIFY_FAILED


# --- entry point -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--query", "-q", required=True, help="query file, or the query text itself")
    common.add_argument("--db", help="directory with one CSV per relation (file stem = relation name)")
    common.add_argument("--stats", help="statistics JSON file; overrides computed statistics")
    common.add_argument("--p", default=DEFAULT_P, help=f"norm orders for computed statistics (default {DEFAULT_P})")
    common.add_argument("--format", choices=("json", "table"), default="json")
    common.add_argument("--oracle-cap", type=int, default=DEFAULT_OUTPUT_CAP, help="max output size the oracle will count")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="lpbound", description="Degree-sequence bounds for full conjunctive queries.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("stats", parents=[common], help="compute statistics from a database")
    pb = sub.add_parser("bound", parents=[common], help="compute an upper bound on the output size")
    pb.add_argument("--method", choices=("lp", "agm", "panda"), default="lp")
    pb.add_argument("--explain", action="store_true", help="show the certificate as a product of statistics")
    sub.add_parser("compare", parents=[common], help="compare bounds and estimates with the true size")
    pv = sub.add_parser("verify", parents=[common], help="check soundness and certificates on a database")
    pv.add_argument("--certificate", help="bound JSON whose certificate should be checked instead")
    return parser


COMMANDS = {"stats": cmd_stats, "bound": cmd_bound, "compare": cmd_compare, "verify": cmd_verify}


def _configure_logging(verbosity: int) -> None:
    # One handler bound to the current stderr, replaced on every call so
    # repeated in-process invocations do not stack handlers.
    for h in list(log.handlers):
        log.removeHandler(h)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    log.addHandler(handler)
    log.setLevel(max(logging.DEBUG, logging.WARNING - 10 * verbosity))
    log.propagate = False


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    _configure_logging(args.verbose)
    try:
        return COMMANDS[args.command](args)
    except (InputError, QueryError, StatisticsError, B.BoundError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except SolverError as exc:
        log.error("solver failure: %s", exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
