"""Command-line interface.

Subcommands: put (tradeoff at one budget), sweep (budget sweep to CSV),
simulate (Monte Carlo runs to CSV), encode (categorical dataset to symbols),
validate (privacy audit of a mechanism JSON).  The master seed defaults to
the ULDP_LAB_SEED environment variable.  CSV output is UTF-8 with a header
row, '.' decimals and comma separators, and is byte-deterministic given the
flags and seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import datasets, put
from .core import Partition, p_alpha
from .estimation import EstimatorTable
from .mechanisms import mechanism_from_json, ubd_mechanism, validate_uldp
from .sim import SimConfig, _trial_star, exact_scaled_mse

SWEEP_SCHEMA = "uldp-lab sweep csv v1"
SIM_SCHEMA = "uldp-lab simulate csv v1"


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _sparse_mixture(t) -> dict:
    return {str(k + 1): float(t[k]) for k in range(len(t)) if t[k] > 0.0}


def _solution_dict(sol: put.SaddleSolution) -> dict:
    return {
        "w": sol.w,
        "v": sol.v,
        "epsilon": sol.epsilon,
        "alpha_star": sol.alpha_star,
        "t_star": _sparse_mixture(sol.t_star),
        "value": sol.value,
        "method": sol.method,
        "certificate": sol.certificate,
    }


def _solve(w: int, v: int, epsilon: float) -> put.SaddleSolution:
    sol = put.closed_form(w, v, epsilon)
    if sol is None:
        sol = put.saddle_solve(w, v, epsilon)
    return sol


def cmd_put(args) -> int:
    sol = _solve(args.w, args.v, args.eps)
    text = json.dumps(_solution_dict(sol), indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def _sweep_point(job):
    w, v, eps = job
    sol = _solve(w, v, eps)
    r_ubd = put.ubd_asymptotic_error(w, v, eps, sol.alpha_star, sol.t_star)
    if v >= 2:
        r_uss = min(put.uss_worst_case(w, v, eps, k) for k in range(1, v))
        m_ldp = put.ldp_optimum(v, eps)[1]
    else:
        r_uss = float("nan")
        m_ldp = 0.0
    t_text = ";".join(f"{k}:{_fmt(wt)}" for k, wt in sorted(
        ((int(k), wt) for k, wt in _sparse_mixture(sol.t_star).items())
    ))
    return {
        "epsilon": eps,
        "alpha_star": sol.alpha_star,
        "t_star": t_text,
        "m_star": sol.value,
        "r_ubd": r_ubd,
        "r_uss_min": r_uss,
        "m_ldp_lower": m_ldp,
        "method": sol.method,
    }


def sweep_grid(w: int, v: int, eps_min: float, eps_max: float, points: int):
    """Log-spaced budgets plus the regime boundaries when they fall inside."""
    if not 0 < eps_min < eps_max:
        raise ValueError("need 0 < eps_min < eps_max")
    grid = list(np.geomspace(eps_min, eps_max, points))
    th = put.thresholds(w, v)
    if th is not None:
        for bound in (th.eps_low, th.eps_high):
            if eps_min < bound < eps_max:
                grid.append(float(bound))
    return sorted(set(grid))


def cmd_sweep(args) -> int:
    grid = sweep_grid(args.w, args.v, args.eps_min, args.eps_max, args.points)
    jobs = [(args.w, args.v, eps) for eps in grid]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    cols = ["epsilon", "alpha_star", "t_star", "m_star", "r_ubd", "r_uss_min", "m_ldp_lower", "method"]
    lines = [
        f"# {SWEEP_SCHEMA}",
        f"# w={args.w} v={args.v} eps_min={_fmt(args.eps_min)} eps_max={_fmt(args.eps_max)} points={args.points}",
        ",".join(cols),
    ]
    for row in rows:
        lines.append(
            ",".join(
                _fmt(row[c]) if isinstance(row[c], float) else str(row[c]) for c in cols
            )
        )
    text = "\n".join(lines) + "\n"
    with open(args.out, "w") as fh:
        fh.write(text)
    for prev, cur in zip(rows, rows[1:]):
        if cur["m_star"] > prev["m_star"] * (1.0 + 1e-9):
            print(
                f"warning: m_star increased at eps={cur['epsilon']} "
                f"({prev['m_star']} -> {cur['m_star']}); flagged for investigation",
                file=sys.stderr,
            )
    return 0


def cmd_simulate(args) -> int:
    if args.dataset:
        if not args.schema:
            raise ValueError("--dataset requires --schema")
        with open(args.schema) as fh:
            schema = datasets.load_schema(fh.read())
        with open(args.dataset) as fh:
            enc = datasets.encode_dataset(fh.read(), schema)
        w, v = enc.w, enc.v
        dist = enc.distribution()
    else:
        if args.w is None or args.v is None:
            raise ValueError("need --w and --v (or --dataset/--schema)")
        w, v = args.w, args.v
        dist = None
    part = Partition(w, v)
    if args.params:
        params = json.loads(args.params)
        alpha = float(params["alpha"])
        t = np.zeros(v)
        for k, wt in params["t"].items():
            t[int(k) - 1] = float(wt)
    else:
        sol = _solve(w, v, args.eps)
        alpha, t = sol.alpha_star, sol.t_star
    if dist is None:
        dist = p_alpha(part, alpha)
    mech = ubd_mechanism(part, args.eps, t)
    table = EstimatorTable(part, args.eps, alpha, t)
    cfg = SimConfig(n=args.n, trials=args.trials, seed=args.seed, workers=args.workers)
    jobs = [(mech, table, dist.p, cfg.n, cfg.seed, j) for j in range(cfg.trials)]
    if cfg.workers == 1:
        values = [_trial_star(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            values = list(pool.map(_trial_star, jobs))
    arr = np.asarray(values)
    mean = float(arr.mean())
    stderr = float(arr.std(ddof=1) / np.sqrt(cfg.trials)) if cfg.trials > 1 else 0.0
    theory = exact_scaled_mse(mech, table, dist.p) if mech.backend == "dense" else float("nan")
    lines = [
        f"# {SIM_SCHEMA}",
        f"# w={w} v={v} eps={_fmt(args.eps)} n={args.n} trials={args.trials} seed={args.seed}",
        "trial,scaled_mse,mean_scaled_mse,stderr,theory",
    ]
    for j, val in enumerate(values):
        lines.append(f"{j},{_fmt(val)},,,")
    lines.append(f"summary,,{_fmt(mean)},{_fmt(stderr)},{_fmt(theory)}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        print(text, end="")
    return 0


def cmd_encode(args) -> int:
    with open(args.schema) as fh:
        schema = datasets.load_schema(fh.read())
    with open(args.dataset) as fh:
        text = fh.read()
    try:
        enc = datasets.encode_dataset(text, schema)
    except datasets.EncodingError as err:
        for rownum, col, val in err.errors:
            print(f"row {rownum}: column {col!r} has unknown value {val!r}", file=sys.stderr)
        return 1
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(enc.mapping_json() + "\n")
    print(json.dumps({"w": enc.w, "v": enc.v, "n": enc.n}))
    return 0


def cmd_validate(args) -> int:
    try:
        with open(args.mechanism) as fh:
            mech = mechanism_from_json(fh.read())
    except (OSError, ValueError, KeyError) as err:
        print(f"cannot load mechanism: {err}", file=sys.stderr)
        return 2
    report = validate_uldp(mech)
    print(json.dumps({"ok": report.ok, "message": report.message}))
    return 0 if report.ok else 1


def _build_parser() -> argparse.ArgumentParser:
    seed_default = int(os.environ.get("ULDP_LAB_SEED", "0"))
    top = argparse.ArgumentParser(prog="uldp-lab", description=__doc__)
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("put", help="optimal privacy-utility tradeoff at one budget")
    p.add_argument("--w", type=int, required=True)
    p.add_argument("--v", type=int, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_put)

    p = sub.add_parser("sweep", help="tradeoff sweep over a budget interval")
    p.add_argument("--w", type=int, required=True)
    p.add_argument("--v", type=int, required=True)
    p.add_argument("--eps-min", type=float, required=True)
    p.add_argument("--eps-max", type=float, required=True)
    p.add_argument("--points", type=int, default=30)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="Monte Carlo validation runs")
    p.add_argument("--w", type=int)
    p.add_argument("--v", type=int)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed", type=int, default=seed_default)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--params", help='JSON {"alpha": a, "t": {"k": weight, ...}}')
    p.add_argument("--dataset", help="CSV of categorical records")
    p.add_argument("--schema", help="dataset schema JSON")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("encode", help="cross-product-encode a categorical dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", help="write the symbol mapping JSON here")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("validate", help="audit a mechanism JSON file")
    p.add_argument("mechanism")
    p.set_defaults(func=cmd_validate)
    return top


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
