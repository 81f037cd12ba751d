"""Command-line front end: ``steanesim sweep | fault-enum | validate | figure NAME``.

Exit status: 0 ok, 2 usage or config error, 3 contract violation (rerun cap
hit, decoding-table collision, engine/oracle mismatch), 1 I/O failure.
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .experiments import DEFAULT_RERUN_CAP, ancilla_failure_rate, available_cpus, linear_fit, run_sweep
from .frame import CircuitError
from .noise import ErrorClass, GateErrorRates
from .oracle import enumerate_logical_failures, first_order_rejection_weight, validate_engine
from .protocols import FT_PROTOCOLS, Protocol, ProtocolError, Timing
from .reporting import OutputError, records_from_point, write_records, write_table

OUT_ENV = "STEANESIM_OUT"
RATE_NAMES = ("prep", "meas", "wait", "cnot")

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_CONTRACT = 0, 1, 2, 3


class UsageError(ValueError):
    pass


class ContractViolation(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# config


def parse_protocol(name: str) -> Protocol:
    key = name.strip().lower().replace("-", "_")
    for p in Protocol:
        if key in (p.value, p.name.lower(), p.name.lower().replace("_", "")):
            return p
    raise UsageError(f"unknown protocol {name!r}; choose from {[p.value for p in Protocol]}")


def parse_filter(name: str) -> ErrorClass:
    key = name.strip().lower().replace("-", "").replace("_", "")
    for ec in ErrorClass:
        if key == ec.value:
            return ec
    raise UsageError(f"unknown filter {name!r}; choose from {[e.value for e in ErrorClass]}")


def expand_axis(spec) -> list[float]:
    """A number, a list, or ``{"logspace": [lo, hi, n]}`` -> sorted explicit list."""
    if isinstance(spec, (int, float)):
        vals = [float(spec)]
    elif isinstance(spec, list):
        vals = [float(v) for v in spec]
    elif isinstance(spec, dict) and set(spec) == {"logspace"}:
        lo, hi, n = spec["logspace"]
        if not (0 < lo <= hi) or int(n) < 1:
            raise UsageError(f"bad logspace {spec['logspace']}")
        vals = [float(v) for v in np.geomspace(lo, hi, int(n))]
    elif isinstance(spec, dict) and set(spec) == {"linspace"}:
        lo, hi, n = spec["linspace"]
        vals = [float(v) for v in np.linspace(lo, hi, int(n))]
    else:
        raise UsageError(f"cannot read grid axis {spec!r}")
    if not vals:
        raise UsageError("empty grid axis")
    return sorted(set(vals))


def expand_grid(grid: dict) -> list[GateErrorRates]:
    """``{"p": axis}`` for equal rates, or one axis per rate name (product)."""
    if not isinstance(grid, dict) or not grid:
        raise UsageError("grid must be a non-empty object")
    unknown = set(grid) - {"p", *RATE_NAMES}
    if unknown:
        raise UsageError(f"unknown grid keys {sorted(unknown)}")
    if "p" in grid:
        if len(grid) > 1:
            raise UsageError("grid key 'p' cannot be combined with per-rate axes")
        return [GateErrorRates.uniform(p) for p in expand_axis(grid["p"])]
    axes = [expand_axis(grid.get(name, 0.0)) for name in RATE_NAMES]
    try:
        return [GateErrorRates(*combo) for combo in itertools.product(*axes)]
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


@dataclass
class RunConfig:
    protocols: list[Protocol] = field(default_factory=lambda: list(Protocol))
    grid: list[GateErrorRates] = field(default_factory=lambda: [GateErrorRates.uniform(1e-4)])
    filters: list[ErrorClass] = field(default_factory=lambda: [ErrorClass.ALL])
    trials: int = 100_000
    seed: int = 0
    out: str | None = None
    format: str = "csv"
    jobs: int | None = None
    rerun_cap: int = DEFAULT_RERUN_CAP
    min_failures: int | None = None
    timing: Timing = Timing()


_CONFIG_KEYS = {
    "protocols", "grid", "filters", "filter", "trials", "seed", "out", "format",
    "jobs", "rerun_cap", "min_failures", "timing",
}


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise UsageError("config must be a JSON object")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise UsageError(f"unknown config keys {sorted(unknown)}")
    return raw


def _split(value) -> list[str]:
    if isinstance(value, str):
        return [v for v in value.split(",") if v.strip()]
    return list(value)


def build_config(args: argparse.Namespace, defaults: RunConfig | None = None) -> RunConfig:
    """File values over ``defaults``, then command-line flags over both."""
    cfg = replace(defaults) if defaults else RunConfig()
    raw = load_config(getattr(args, "config", None))
    try:
        if "protocols" in raw:
            cfg.protocols = [parse_protocol(p) for p in _split(raw["protocols"])]
        if "grid" in raw:
            cfg.grid = expand_grid(raw["grid"])
        for key in ("filters", "filter"):
            if key in raw:
                cfg.filters = [parse_filter(f) for f in _split(raw[key])]
        for key in ("trials", "seed", "jobs", "rerun_cap", "min_failures"):
            if key in raw:
                setattr(cfg, key, None if raw[key] is None else int(raw[key]))
        for key in ("out", "format"):
            if key in raw:
                setattr(cfg, key, raw[key])
        if "timing" in raw:
            cfg.timing = Timing(**raw["timing"])
    except (TypeError, ValueError) as exc:
        if isinstance(exc, UsageError):
            raise
        raise UsageError(f"bad config value: {exc}") from exc

    if args.protocols is not None:
        cfg.protocols = [parse_protocol(p) for p in _split(args.protocols)]
    if args.filter is not None:
        cfg.filters = [parse_filter(f) for f in _split(args.filter)]
    for key in ("trials", "seed", "jobs", "rerun_cap", "min_failures", "out", "format"):
        v = getattr(args, key, None)
        if v is not None:
            setattr(cfg, key, v)

    if not cfg.protocols:
        raise UsageError("no protocols selected")
    if cfg.trials is None or cfg.trials < 0:
        raise UsageError("--trials must be >= 0")
    if cfg.jobs is None:
        cfg.jobs = available_cpus()
    if cfg.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    if cfg.rerun_cap < 0:
        raise UsageError("--rerun-cap must be >= 0")
    if cfg.format not in ("csv", "json"):
        raise UsageError(f"unknown format {cfg.format!r}")
    return cfg


def output_path(cfg_out: str | None, default_name: str, fmt: str) -> str:
    if cfg_out:
        return cfg_out
    base = os.environ.get(OUT_ENV) or "."
    return os.path.join(base, f"{default_name}.{fmt}")


# ---------------------------------------------------------------------------
# subcommands


def cmd_sweep(args) -> int:
    cfg = build_config(args)
    points = run_sweep(
        cfg.grid, cfg.protocols, cfg.filters, cfg.trials, cfg.seed, cfg.timing,
        cfg.jobs, cfg.min_failures, cfg.rerun_cap,
    )
    records = [r for pt in points for r in records_from_point(pt, cfg.seed)]
    path = output_path(cfg.out, "sweep", cfg.format)
    write_records(records, path, cfg.format)
    print(f"wrote {len(records)} records to {path}")
    return EXIT_OK


def cmd_fault_enum(args) -> int:
    timing = Timing()
    if args.config:
        raw = load_config(args.config)
        try:
            timing = Timing(**raw.get("timing", {}))
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad timing: {exc}") from exc
    protos = list(Protocol)
    if args.protocols is not None:
        protos = [parse_protocol(p) for p in _split(args.protocols)]
    report = {"order": args.order, "protocols": {}}
    ok = True
    for proto in protos:
        exp = enumerate_logical_failures(proto, args.order, timing)
        entry = exp.to_json()
        if args.order == 1:
            # single faults must never fail an FT gadget
            entry["ft_certified"] = proto in FT_PROTOCOLS and not exp.failing
            if proto in FT_PROTOCOLS and exp.failing:
                ok = False
        report["protocols"][proto.value] = entry
        print(f"{proto.value}: terms={exp.n_terms} failing={len(exp.failing)} "
              f"coefficient={float(exp.total()):.6g}")
    if args.order == 1:
        report["first_order_rejection_weight"] = {
            kind: {k: str(v) for k, v in first_order_rejection_weight(kind, timing).items()}
            for kind in ("zero", "plus")
        }
    path = output_path(args.out, f"fault_enum_order{args.order}", "json")
    _write_json(report, path)
    print(f"wrote {path}")
    if not ok:
        raise ContractViolation("a fault-tolerant protocol fails at first order")
    return EXIT_OK


def cmd_validate(args) -> int:
    seed = args.seed if args.seed is not None else 0
    res = validate_engine(args.circuits, seed)
    path = output_path(args.out, "validate", "json")
    _write_json(res, path)
    print(json.dumps(res))
    if res["random_mismatches"] or res["gadget_mismatches"]:
        raise ContractViolation("frame engine disagrees with the tableau oracle")
    return EXIT_OK


FIGURES = ("compare", "ancilla", "classes", "series")

# (trials cap per basis, stop after this many failures)
FIGURE_BUDGET = {"compare": (10**9, 50), "classes": (10**9, 50), "series": (10**9, 50), "ancilla": (10**8, None)}


def figure_defaults(name: str) -> RunConfig:
    trials, min_fail = FIGURE_BUDGET[name]
    if name == "compare":
        return RunConfig(
            protocols=[Protocol.DECODING, Protocol.SIMPLE_SERIES, Protocol.NAIVE_NO_WAIT],
            grid=expand_grid({"p": [1e-5, 2e-5, 5e-5, 1e-4]}),
            trials=trials, min_failures=min_fail,
        )
    if name == "classes":
        return RunConfig(
            protocols=[Protocol.NAIVE_NO_WAIT, Protocol.SIMPLE_SERIES, Protocol.DECODING],
            grid=expand_grid({"p": [1e-5, 2e-5, 5e-5, 1e-4]}),
            filters=[ErrorClass.CLASS0, ErrorClass.CLASS1, ErrorClass.CLASS2],
            trials=trials, min_failures=min_fail,
        )
    if name == "series":
        axis = {"logspace": [1e-5, 3e-4, 4]}
        return RunConfig(
            protocols=[Protocol.DECODING, Protocol.TWO_ANCILLA_SERIES],
            grid=expand_grid({"prep": 1e-5, "meas": 1e-5, "wait": axis, "cnot": axis}),
            trials=trials, min_failures=min_fail,
        )
    return RunConfig(
        protocols=[Protocol.SIMPLE_SERIES],
        grid=expand_grid({"p": [1e-5, 2e-5, 4e-5, 8e-5]}),
        trials=trials, min_failures=min_fail,
    )


def _wide_rows(points, key_fn, key_cols, col_fn) -> tuple[list[dict], list[str]]:
    rows: dict[tuple, dict] = {}
    cols: list[str] = list(key_cols)
    for pt in points:
        k = key_fn(pt)
        row = rows.setdefault(k, dict(zip(key_cols, k)))
        base = col_fn(pt)
        for suffix, v in (("", pt.estimate.P_L), ("_ci_low", pt.estimate.ci[0]), ("_ci_high", pt.estimate.ci[1])):
            c = f"P_L_{base}{suffix}"
            row[c] = v
            if c not in cols:
                cols.append(c)
    return [rows[k] for k in sorted(rows)], cols


def cmd_figure(args) -> int:
    name = args.name
    cfg = build_config(args, figure_defaults(name))
    path = output_path(cfg.out, f"figure_{name}", cfg.format)

    if name == "ancilla":
        rows = []
        for rates in cfg.grid:
            for kind in ("zero", "plus"):
                rate, (lo, hi), rej = ancilla_failure_rate(rates, cfg.trials, cfg.seed, kind, cfg.timing, cfg.jobs)
                rows.append(dict(p=rates.cnot, kind=kind, attempts=cfg.trials, rejections=rej,
                                 rate=rate, ci_low=lo, ci_high=hi))
        write_table(rows, ["p", "kind", "attempts", "rejections", "rate", "ci_low", "ci_high"], path, cfg.format)
        for kind in ("zero", "plus"):
            pts = [(r["p"], r["rate"]) for r in rows if r["kind"] == kind]
            if len(pts) >= 2:
                slope, _, r2 = linear_fit(*zip(*pts))
                w = first_order_rejection_weight(kind, cfg.timing)
                print(f"{kind}: slope={slope:.6g} R2={r2:.6f} first-order weight={float(sum(w.values())):.6g}")
        print(f"wrote {path}")
        return EXIT_OK

    points = run_sweep(
        cfg.grid, cfg.protocols, cfg.filters, cfg.trials, cfg.seed, cfg.timing,
        cfg.jobs, cfg.min_failures, cfg.rerun_cap,
    )
    if name == "series":
        rows, cols = _wide_rows(points, lambda pt: (pt.rates.cnot, pt.rates.wait), ("p_cnot", "p_wait"),
                                lambda pt: pt.protocol.value)
    elif name == "classes":
        rows, cols = _wide_rows(points, lambda pt: (pt.rates.cnot, pt.protocol.value), ("p", "protocol"),
                                lambda pt: pt.error_class.value)
    else:
        rows, cols = _wide_rows(points, lambda pt: (pt.rates.cnot,), ("p",),
                                lambda pt: pt.protocol.value if len(cfg.filters) == 1
                                else f"{pt.protocol.value}_{pt.error_class.value}")
    write_table(rows, cols, path, cfg.format)
    if args.records:
        write_records([r for pt in points for r in records_from_point(pt, cfg.seed)], args.records, cfg.format)
    print(f"wrote {path}")
    return EXIT_OK


def _write_json(obj, path: str) -> None:
    try:
        d = os.path.dirname(os.path.abspath(path))
        os.makedirs(d, exist_ok=True)
        with open(path, "w") as fh:
            json.dump(obj, fh, indent=1, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# parser


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--trials", type=int, help="trials per basis per point")
    p.add_argument("--protocols", help="comma-separated protocol names")
    p.add_argument("--filter", help="comma-separated error classes: all, class0, class1, class2")
    p.add_argument("--out", help=f"output file (default: ${OUT_ENV} or the current directory)")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--jobs", type=int, help="worker processes (default: all cores)")
    p.add_argument("--rerun-cap", dest="rerun_cap", type=int, help="max reruns of a skipped trial")
    p.add_argument("--min-failures", dest="min_failures", type=int,
                   help="stop a basis early once this many failures accrued")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="steanesim", description="Steane-code QEC Monte Carlo")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="Monte Carlo over a grid of gate error rates")
    _add_run_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fault-enum", help="exact first/second order fault enumeration")
    p.add_argument("--order", type=int, choices=(1, 2), default=1)
    p.add_argument("--protocol", "--protocols", dest="protocols", help="comma-separated protocol names")
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fault_enum)

    p = sub.add_parser("validate", help="frame engine vs stabilizer tableau")
    p.add_argument("--circuits", type=int, default=1000)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("figure", help="preset grids producing plot-ready tables")
    p.add_argument("name", choices=FIGURES)
    _add_run_flags(p)
    p.add_argument("--records", help="also write the per-basis records here")
    p.set_defaults(func=cmd_figure)
    return parser


def cli_main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"steanesim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ContractViolation, ProtocolError, CircuitError, AssertionError) as exc:
        print(f"steanesim: contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except OutputError as exc:
        print(f"steanesim: {exc}", file=sys.stderr)
        return EXIT_IO


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
