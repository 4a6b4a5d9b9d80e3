"""Scenario reports: assertions with both sides and tolerance, tables, plot data."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1


def _num(v):
    """Deterministic text for a table cell."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".12g")
    return str(v)


def _plain(o):
    if isinstance(o, dict):
        return {str(k): _plain(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_plain(v) for v in o]
    if isinstance(o, np.ndarray):
        return _plain(o.tolist())
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, (float, np.floating)):
        o = float(o)
        return o if math.isfinite(o) else str(o)
    return o


@dataclass
class Assertion:
    invariant: str
    passed: bool
    lhs: float
    relation: str
    rhs: float
    tolerance: float
    detail: str = ""

    def line(self, scenario: str = "") -> str:
        tag = "PASS" if self.passed else "FAIL"
        where = f"[{scenario}] " if scenario else ""
        extra = f"  {self.detail}" if self.detail else ""
        return (f"{tag} {where}{self.invariant}: {_num(self.lhs)} {self.relation} {_num(self.rhs)}"
                f" (tol {_num(self.tolerance)}){extra}")


@dataclass
class Table:
    columns: list
    rows: list

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(self.columns)
            for r in self.rows:
                wr.writerow([_num(r.get(c, "")) for c in self.columns])


@dataclass
class Figure:
    table: str
    x: str
    ys: list
    title: str = ""
    logx: bool = False
    logy: bool = False


@dataclass
class ScenarioReport:
    """Append-only record of one scenario run."""

    scenario: str
    config: dict
    config_hash: str
    records: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    figures: dict = field(default_factory=dict)
    assertions: list = field(default_factory=list)
    constants: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)
    runtime: float = 0.0

    @property
    def passed(self) -> bool:
        return not self.errors and all(a.passed for a in self.assertions)

    def add_record(self, rec: dict) -> None:
        self.records.append(_plain(rec))

    def add_table(self, name: str, rows: list, columns: list | None = None) -> None:
        if name in self.tables:
            raise ValueError(f"table {name!r} already present (reports are append-only)")
        if columns is None:
            columns = []
            for r in rows:
                columns += [k for k in r if k not in columns]
        self.tables[name] = Table(list(columns), list(rows))

    def add_figure(self, name: str, fig: Figure) -> None:
        self.figures[name] = fig

    def check(self, invariant: str, lhs: float, relation: str, rhs: float, tol: float = 0.0,
              detail: str = "") -> Assertion:
        """Record ``lhs <relation> rhs`` up to ``tol``.

        Relations: ``<=`` (lhs <= rhs + tol), ``>=`` (lhs >= rhs - tol),
        ``~=`` (|lhs - rhs| <= tol).
        """
        lhs, rhs, tol = float(lhs), float(rhs), float(tol)
        if relation == "<=":
            ok = lhs <= rhs + tol
        elif relation == ">=":
            ok = lhs >= rhs - tol
        elif relation == "~=":
            ok = abs(lhs - rhs) <= tol
        else:
            raise ValueError(f"unknown relation {relation!r}")
        a = Assertion(invariant, bool(ok), lhs, relation, rhs, tol, detail)
        self.assertions.append(a)
        return a

    def lines(self) -> list:
        out = [a.line(self.scenario) for a in self.assertions]
        out += [f"FAIL [{self.scenario}] error: {e}" for e in self.errors]
        return out

    def summary(self) -> dict:
        return _plain({
            "schema": SCHEMA_VERSION,
            "scenario": self.scenario,
            "config_hash": self.config_hash,
            "config": self.config,
            "passed": self.passed,
            "n_assertions": len(self.assertions),
            "n_failed": sum(not a.passed for a in self.assertions),
            "assertions": [a.__dict__ for a in self.assertions],
            "constants": self.constants,
            "records": self.records,
            "tables": sorted(self.tables),
            "errors": self.errors,
        })


_GP = """set terminal pngcairo size 800,560
set output '{name}.png'
set title '{title}'
set xlabel '{x}'
set key left top
set datafile missing 'nan'
{logs}plot {plots}
"""


def emit_tables(report: ScenarioReport, out_dir) -> list:
    """Write ``<table>.csv`` per table, ``summary.json``, and ``<fig>.dat`` +
    ``<fig>.gp`` per figure into ``out_dir``.  Returns written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, tab in report.tables.items():
        p = out / f"{name}.csv"
        tab.write_csv(p)
        paths.append(p)
    for name, fig in report.figures.items():
        tab = report.tables[fig.table]
        cols = [fig.x] + list(fig.ys)
        dat = out / f"{name}.dat"
        with open(dat, "w") as fh:
            fh.write("# " + " ".join(cols) + "\n")
            for r in tab.rows:
                fh.write(" ".join(_num(r.get(c, float("nan"))) for c in cols) + "\n")
        logs = ("set logscale x\n" if fig.logx else "") + ("set logscale y\n" if fig.logy else "")
        plots = ", ".join(f"'{name}.dat' using 1:{i + 2} with linespoints title '{y}'"
                          for i, y in enumerate(fig.ys))
        gp = out / f"{name}.gp"
        gp.write_text(_GP.format(name=name, title=fig.title or name, x=fig.x, logs=logs, plots=plots))
        paths += [dat, gp]
    js = out / "summary.json"
    js.write_text(json.dumps(report.summary(), indent=2, sort_keys=True) + "\n")
    paths.append(js)
    return paths
