"""Result records and their CSV / JSON serialization."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Sequence

from .experiments import PointResult


class OutputError(OSError):
    pass


@dataclass(frozen=True)
class ResultRecord:
    protocol: str
    p_prep: float
    p_meas: float
    p_wait: float
    p_cnot: float
    filter: str
    basis: str
    trials: int
    failures: int
    reruns: int
    verification_failures: int
    rate: float
    ci_low: float
    ci_high: float
    master_seed: int


FIELDS = [f.name for f in fields(ResultRecord)]


def records_from_point(point: PointResult, master_seed: int) -> list[ResultRecord]:
    """Three per-basis records followed by the combined P_L record."""
    r = point.rates
    common = dict(
        protocol=point.protocol.value,
        p_prep=r.prep,
        p_meas=r.meas,
        p_wait=r.wait,
        p_cnot=r.cnot,
        filter=point.error_class.value,
        master_seed=master_seed,
    )
    out = []
    for basis, agg in point.per_basis.items():
        lo, hi = agg.ci
        out.append(
            ResultRecord(
                basis=basis,
                trials=agg.trials,
                failures=agg.logical_failures,
                reruns=agg.reruns,
                verification_failures=agg.verification_failures,
                rate=agg.rate,
                ci_low=lo,
                ci_high=hi,
                **common,
            )
        )
    est = point.estimate
    out.append(
        ResultRecord(
            basis="combined",
            trials=sum(a.trials for a in point.per_basis.values()),
            failures=sum(a.logical_failures for a in point.per_basis.values()),
            reruns=sum(a.reruns for a in point.per_basis.values()),
            verification_failures=sum(a.verification_failures for a in point.per_basis.values()),
            rate=est.P_L,
            ci_low=est.ci[0],
            ci_high=est.ci[1],
            **common,
        )
    )
    return out


def write_table(rows: Sequence[dict], columns: Sequence[str], path: str, fmt: str = "csv") -> None:
    """Write dict rows with a fixed column order as CSV or a JSON array."""
    try:
        d = os.path.dirname(os.path.abspath(path))
        os.makedirs(d, exist_ok=True)
        with open(path, "w", newline="") as fh:
            if fmt == "csv":
                w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\r\n")
                w.writeheader()
                for row in rows:
                    w.writerow({c: row[c] for c in columns})
            elif fmt == "json":
                json.dump([{c: row[c] for c in columns} for row in rows], fh, indent=1)
                fh.write("\n")
            else:
                raise ValueError(f"unknown format {fmt!r}")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def write_records(records: Iterable[ResultRecord], path: str, fmt: str = "csv") -> None:
    write_table([asdict(r) for r in records], FIELDS, path, fmt)


def read_records(path: str, fmt: str = "csv") -> list[ResultRecord]:
    types = {f.name: f.type for f in fields(ResultRecord)}
    conv = {"int": int, "float": float, "str": str}
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh)) if fmt == "csv" else json.load(fh)
    return [ResultRecord(**{k: conv[types[k]](v) for k, v in row.items()}) for row in rows]
