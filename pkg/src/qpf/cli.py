"""Command-line entry point (``qpf``)."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

import numpy as np

from . import harness, qpe
from .dcpf import build_b_matrix, classical_reference, ieee5_system, load_grid, load_matrix_system, scale_system
from .errors import QpfError, ResourceCapError, ValidationError
from .hhl import HhlConfig, solve_hhl
from .hybrid import HybridConfig, solve_hybrid

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VALIDATION = 2
EXIT_ACCEPTANCE = 3
EXIT_CAP = 4


def int_list(text: str) -> list[int]:
    """Parse ``"5-9"``, ``"7,9,11"`` or a mix such as ``"1-3,8"``."""
    out: list[int] = []
    try:
        for part in filter(None, (p.strip() for p in text.split(","))):
            if "-" in part[1:]:
                lo, hi = part.split("-", 1)
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer list: {text!r}") from None
    return out


def _load_system(args):
    if args.grid:
        return build_b_matrix(load_grid(args.grid))
    if args.matrix:
        return load_matrix_system(args.matrix)
    return ieee5_system()


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return [float(v) for v in value]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def _emit(rows: list[dict], fmt: str, out) -> None:
    if fmt == "json":
        payload = [{k: _jsonable(v) for k, v in r.items()} for r in rows]
        out.write(json.dumps(payload if len(payload) != 1 else payload[0], indent=2) + "\n")
        return
    if not rows:
        return
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(rows[0].keys())
    for r in rows:
        cells = []
        for v in r.values():
            v = _jsonable(v)
            cells.append(" ".join(repr(x) for x in v) if isinstance(v, list) else ("" if v is None else v))
        writer.writerow(cells)


# -- subcommands ---------------------------------------------------------------


def cmd_solve_classical(args, out) -> int:
    d = _load_system(args)
    theta, normalized = classical_reference(d)
    _emit([{"bus_order": " ".join(map(str, d.bus_order)), "theta": theta, "normalized": normalized}], args.format, out)
    return EXIT_OK


def cmd_solve_hhl(args, out) -> int:
    system = scale_system(_load_system(args))
    cfg = HhlConfig(
        args.n_accur, args.n_redund, mode=args.mode, shots=args.shots, seed=args.seed, engine=args.engine,
        rotation_constant=args.rotation_constant,
    )
    res = solve_hhl(system, cfg)
    row = {
        "algorithm": "hhl",
        "n_accur": cfg.n_accur,
        "n_redund": cfg.n_redund,
        "engine": res.engine,
        "qubit_total": res.qubit_total,
        "qubit_medium": res.qubit_medium,
        "normalized_solution": res.normalized_solution,
        "n_e_exp": res.n_e_exp,
        "n_e_theory": res.n_e_theory,
        "postselect_top": res.postselect_prob_top,
        "postselect_medium": res.postselect_prob_medium,
        "zero_bin_hits": res.zero_bin_hits,
        "simulator_assisted_signs": res.simulator_assisted_signs,
        "shots": res.shots,
        "seed": cfg.seed,
    }
    _emit([row], args.format, out)
    return EXIT_OK


def _hybrid(args, out, algorithm: str, n_accur: int) -> int:
    system = scale_system(_load_system(args))
    cfg = HybridConfig(
        args.m_prec, n_accur, args.n_redund, mode=args.mode, shots=args.shots, seed=args.seed, engine=args.engine,
        tau_sign=args.tau_sign,
    )
    res = solve_hybrid(system, cfg)
    st = res.stats
    row = {
        "algorithm": algorithm,
        "m_prec": cfg.m_prec,
        "n_accur": cfg.n_accur,
        "n_redund": cfg.n_redund,
        "n_module": cfg.n_module,
        "qubit_total": res.qubit_total,
        "qubit_medium": res.qubit_medium,
        "theta": res.theta,
        "n_e_exp": res.n_e_exp,
        "n_e_theory": res.n_e_theory,
        "bit_strings": " ".join(st.bit_strings),
        "joint_probabilities": st.joint_probabilities,
        "leakage": st.leakage,
        "ambiguous_rows": " ".join(map(str, st.ambiguous_rows)),
        "shots": cfg.shots if cfg.mode == "sampled" else 0,
        "seed": cfg.seed,
    }
    _emit([row], args.format, out)
    return EXIT_OK


def cmd_solve_hmpea(args, out) -> int:
    return _hybrid(args, out, "hmpea", args.n_accur)


def cmd_solve_hspea(args, out) -> int:
    return _hybrid(args, out, "hspea", args.m_prec)


def cmd_sweep(args, out) -> int:
    spec = harness.SweepSpec(
        algorithm=args.algorithm,
        precisions=tuple(args.precisions),
        n_redund=tuple(args.n_redund),
        n_accur=args.n_accur,
        mode=args.mode,
        shots=args.shots,
        seed=args.seed,
        workers=args.workers,
        ceiling=args.ceiling,
    )
    system = scale_system(_load_system(args))
    records = harness.run_sweep(spec, system)
    text = harness.records_json(records) if args.format == "json" else harness.records_csv(records, not args.no_wall_time)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        out.write(text)
    if args.strict and any(r.status == "skipped" for r in records):
        return EXIT_CAP
    return EXIT_OK


def cmd_budget(args, out) -> int:
    b = harness.qubit_budget(args.algorithm, args.precision, args.n_redund, args.n_accur, args.n_bottom, args.ceiling)
    row = {
        "algorithm": b.algorithm,
        "precision_bits": b.precision_bits,
        "n_accur": b.n_accur,
        "n_redund": b.n_redund,
        "n_bottom": b.n_bottom,
        "qubit_total": b.total,
        "qubit_medium": b.medium,
        "ceiling": b.ceiling,
        "over_ceiling": b.over_ceiling,
    }
    if b.note:
        print(f"note: {b.note}", file=sys.stderr)
    _emit([row], args.format, out)
    return EXIT_CAP if args.strict and b.over_ceiling else EXIT_OK


def cmd_success_surface(args, out) -> int:
    rows = qpe.success_surface(args.m_prec, args.accur, args.redund)
    if args.format == "json":
        _emit(rows, "json", out)
    else:
        out.write(qpe.surface_csv(rows))
    return EXIT_OK


def cmd_reproduce(args, out) -> int:
    report = harness.reproduce_paper(args.matrix)
    if args.format == "json":
        out.write(json.dumps(report.as_dict(), indent=2) + "\n")
    else:
        out.write(report.render())
    return EXIT_OK if report.passed else EXIT_ACCEPTANCE


# -- parser ---------------------------------------------------------------------


def _add_system(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--grid", help="grid YAML file (default: bundled 5-bus system)")
    g.add_argument("--matrix", help="matrix fixture file")


def _add_run(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=("exact", "sampled"), default="exact")
    p.add_argument("--shots", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qpf", description="DC power flow with HHL, HSPEA and HMPEA.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver warnings")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, fmt=("csv", "json"), default="csv"):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--format", choices=fmt, default=default)
        p.set_defaults(func=func)
        return p

    p = add("solve-classical", cmd_solve_classical, "LU reference solution")
    _add_system(p)

    p = add("solve-hhl", cmd_solve_hhl, "HHL with imperfect phase estimation")
    _add_system(p)
    _add_run(p)
    p.add_argument("--n-accur", type=int, default=9)
    p.add_argument("--n-redund", type=int, default=7)
    p.add_argument("--engine", choices=("auto", "circuit", "fast"), default="auto")
    p.add_argument("--rotation-constant", type=float, default=None)

    for name, func, text in (
        ("solve-hmpea", cmd_solve_hmpea, "hybrid multiple phase estimation"),
        ("solve-hspea", cmd_solve_hspea, "hybrid single phase estimation"),
    ):
        p = add(name, func, text)
        _add_system(p)
        _add_run(p)
        p.add_argument("--m-prec", type=int, default=9)
        if name == "solve-hmpea":
            p.add_argument("--n-accur", type=int, default=1)
        p.add_argument("--n-redund", type=int, default=7)
        p.add_argument("--engine", choices=("fast", "circuit"), default="fast")
        p.add_argument("--tau-sign", type=float, default=0.05)

    p = add("sweep", cmd_sweep, "parameter sweep, one record per grid point")
    _add_system(p)
    _add_run(p)
    p.add_argument("--algorithm", choices=harness.ALGORITHMS, required=True)
    p.add_argument("--precisions", type=int_list, required=True, help="n_accur (hhl, hspea) or m_prec (hmpea), e.g. 5-16")
    p.add_argument("--n-redund", type=int_list, required=True, help="e.g. 7,9,11")
    p.add_argument("--n-accur", type=int, default=1, help="module width for hmpea")
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--ceiling", type=int, default=harness.QUBIT_CEILING)
    p.add_argument("--output")
    p.add_argument("--no-wall-time", action="store_true", help="omit the wall_time column from CSV")
    p.add_argument("--strict", action="store_true", help="exit 4 if any point was skipped")

    p = add("budget", cmd_budget, "qubit counts for a configuration")
    p.add_argument("--algorithm", choices=harness.ALGORITHMS, required=True)
    p.add_argument("--precision", type=int, required=True)
    p.add_argument("--n-redund", type=int, required=True)
    p.add_argument("--n-accur", type=int, default=1)
    p.add_argument("--n-bottom", type=int, default=2)
    p.add_argument("--ceiling", type=int, default=harness.QUBIT_CEILING)
    p.add_argument("--strict", action="store_true")

    p = add("success-surface", cmd_success_surface, "multi-module success lower bound grid")
    p.add_argument("--m-prec", type=int, default=9)
    p.add_argument("--accur", type=int_list, default=list(range(1, 10)))
    p.add_argument("--redund", type=int_list, default=list(range(2, 12)))

    p = add("reproduce-paper", cmd_reproduce, "headline 5-bus experiments with pass/fail", ("text", "json"), "text")
    p.add_argument("--matrix", help="matrix fixture replacing the bundled one")
    return parser


def main(argv: list[str] | None = None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, out)
    except ResourceCapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except QpfError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
