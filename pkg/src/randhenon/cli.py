"""Command-line driver: `randhenon <subcommand> --config exp.yaml`.

Exit codes: 0 success, 2 configuration error, 3 certification failure (with a
witness dump), 4 budget exhausted (partial results are written and flagged).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .blowup import base_point_chain, chain_divergence_experiment, indeterminacy_point
from .config import ExperimentConfig, load_config
from .errors import (BudgetExceeded, CertificationFailure, ConeObstruction, ConfigError, DepthExceeded,
                     NotStabilized, RandHenonError)
from .ergodic import escape_dichotomy_experiment, jacobian_drift
from .filtration import certification_report, compute_constants
from .green import RandomGreen, SliceWindow, escape_direction, render_slice, write_raster
from .polyalg import automorphism_to_json, equals
from .randwalk import LeftProducts, sample_path, stabilization_times, walk_statistics
from .wordgroup import compose_word, cyclic_reduce_classify, is_affine, jung_decompose, reduce_word

log = logging.getLogger("randhenon")

EXIT_CONFIG = 2
EXIT_CERTIFICATION = 3
EXIT_BUDGET = 4


class Partial(RandHenonError):
    """Raised after partial artifacts were written because a budget ran out."""


class _Run:
    def __init__(self, cfg: ExperimentConfig, command: str):
        self.cfg = cfg
        self.command = command
        self.out = Path(cfg.out_dir)
        self.out.mkdir(parents=True, exist_ok=True)

    def header(self) -> dict:
        return {"command": self.command, "config_hash": self.cfg.config_hash, "seeds": self.cfg.seeds,
                "version": __version__}

    def write_json(self, name: str, payload: dict) -> Path:
        path = self.out / name
        body = dict(self.header())
        body.update(payload)
        with open(path, "w") as fh:
            json.dump(body, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")
        return path

    def write_csv(self, name: str, fields: list[str], rows) -> Path:
        path = self.out / name
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["config_hash"] + fields, lineterminator="\r\n")
            writer.writeheader()
            for row in rows:
                writer.writerow(dict(row, config_hash=self.cfg.config_hash))
        return path

    def pmap(self, fn, items):
        items = list(items)
        if self.cfg.threads > 1 and len(items) > 1:
            with ThreadPoolExecutor(self.cfg.threads) as pool:
                return list(pool.map(fn, items))
        return [fn(x) for x in items]


def _json_default(value):
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _need(value, what: str):
    if value is None:
        raise ConfigError(f"this subcommand needs '{what}' in the config")
    return value


def _sample_points(cfg: ExperimentConfig) -> list[tuple[complex, complex]]:
    spec = cfg.points
    if spec is None:
        spec = {}
    if isinstance(spec, list):
        return spec
    count = int(spec.get("count", 100))
    radius = float(spec.get("radius", 3.0))
    rng = np.random.default_rng(int(spec.get("seed", 0)))
    pts = rng.uniform(-radius, radius, size=(count, 4))
    return [(complex(a, b), complex(c, d)) for a, b, c, d in pts]


# --- subcommands --------------------------------------------------------------

def cmd_decompose(run: _Run, args) -> None:
    f = _need(run.cfg.input_map, "input")
    word = jung_decompose(f)
    ok = equals(compose_word(word), f)
    run.write_json("decompose.json", {"map": automorphism_to_json(f), "word": word.to_json(),
                                      "round_trip": "OK" if ok else "FAILED"})
    print("round-trip OK" if ok else "round-trip FAILED")
    if not ok:
        raise CertificationFailure("Jung round trip did not reproduce the input")


def cmd_classify(run: _Run, args) -> None:
    cfg = run.cfg
    word = cfg.input_word if cfg.input_word is not None else jung_decompose(_need(cfg.input_map, "input"))
    cls = cyclic_reduce_classify(reduce_word(word))
    run.write_json("classify.json", {"kind": cls.kind, "dynamical_degree": cls.dynamical_degree,
                                     "translation_length": cls.translation_length,
                                     "conjugator": cls.conjugator.to_json()})
    print(f"{cls.kind} lambda={cls.dynamical_degree} translation_length={cls.translation_length}")


def _walk_rows(path, N: int, stride: int):
    """(n, reduced length, log deg f^n) at every stride-th step."""
    walker = LeftProducts(path)
    out = []
    for n in range(1, N + 1):
        walker.advance()
        if n % stride == 0:
            deg_log = sum(math.log(s.degree) for s in walker.stack.items if not is_affine(s))
            out.append((n, len(walker.stack), deg_log))
    return out


def cmd_walk(run: _Run, args) -> None:
    cfg = run.cfg
    mu = _need(cfg.measure, "measure")
    b = cfg.budgets
    K, N = b["K"], b["N_max"]
    stride = b["stride"] or max(1, N // 100)

    def one(seed):
        path = sample_path(mu, seed)
        return stabilization_times(path, K, N, strict=False), _walk_rows(path, N, stride)

    results = run.pmap(one, cfg.seeds)
    fields = ["seed", "n", "reduced_length", "l_n", "deg_log"] + [f"t_{k}" for k in range(1, K + 1)]
    rows = []
    for table, samples in results:
        ts = {f"t_{k + 1}": (table.t[k] if k < table.depth else "") for k in range(K)}
        for n, length, deg_log in samples:
            rows.append(dict(ts, seed=table.seed, n=n, reduced_length=length, l_n=repr(table.l[n - 1]),
                             deg_log=repr(deg_log)))
    run.write_csv("walk.csv", fields, rows)
    tables = [t for t, _ in results]
    stats = walk_statistics(mu, cfg.seeds, N, n_conv=b["n_conv"])
    partial = [t.seed for t in tables if t.depth < K]
    run.write_json("walk_summary.json", {
        "N_max": N, "K": K, "drift": stats.drift, "drift_stderr": stats.drift_stderr,
        "entropy_estimate": stats.entropy_estimate, "entropy_n": stats.entropy_n,
        "tracking": stats.tracking, "t_k_at_horizon": {str(t.seed): t.t for t in tables},
        "observed_depth": {str(t.seed): t.depth for t in tables}, "partial": bool(partial),
    })
    print(f"drift={stats.drift:.6f} entropy(n={stats.entropy_n})={stats.entropy_estimate}")
    if partial:
        raise Partial(f"depth {K} not observed by horizon {N} for seeds {partial}")


def cmd_filtration(run: _Run, args) -> None:
    cfg = run.cfg
    H = cfg.family()
    params = compute_constants(H)
    run.write_json("filtration_params.json", {"params": params.to_json(), "members": len(H)})
    report = certification_report(H, params, cfg.budgets["samples"], cfg.seeds[0])
    run.write_json("certification.json", report)
    print(f"epsilon={params.epsilon} R={params.R} failures={report['failures']}+{report['inverse_failures']}")
    if report["failures"] or report["inverse_failures"]:
        raise CertificationFailure("Monte Carlo certification found violations", witness=report.get("witness"))


def cmd_green(run: _Run, args) -> None:
    cfg = run.cfg
    mu = _need(cfg.measure, "measure")
    H = cfg.family()
    params = compute_constants(H)
    b = cfg.budgets
    if args.render:
        spec = _need(cfg.render, "render")
        window = SliceWindow(
            tuple(complex(*c) if isinstance(c, list) else complex(c) for c in spec.get("base", [0, 0])),
            tuple(complex(*c) if isinstance(c, list) else complex(c) for c in spec.get("direction", [1, 0])),
            tuple(spec.get("re_range", [-2, 2])), tuple(spec.get("im_range", [-2, 2])),
            tuple(spec.get("resolution", [64, 64])))
        for seed in cfg.seeds:
            green = RandomGreen(sample_path(mu, seed), H, params, tol=b["tol"], budget=b["budget"])
            grid = render_slice(green, window, threads=cfg.threads)
            sidecar = dict(run.header(), seed=seed, window=window.to_json(), params=params.to_json(),
                           budget=b["budget"], tol=b["tol"],
                           escape_direction=escape_direction(green.table).to_json())
            write_raster(grid, run.out / f"green_seed{seed}.f32", run.out / f"green_seed{seed}.json", sidecar)
        print(f"rendered {len(cfg.seeds)} slice(s)")
        return
    points = _sample_points(cfg)

    def one(seed):
        green = RandomGreen(sample_path(mu, seed), H, params, tol=b["tol"], budget=b["budget"])
        return seed, [green.evaluate(p) for p in points], escape_direction(green.table)

    results = run.pmap(one, cfg.seeds)
    fields = ["seed", "x", "y", "status", "value", "error_bound", "hit_time", "k_used"]
    rows = [dict(gv.to_row(), seed=seed) for seed, values, _ in results for gv in values]
    run.write_csv("green.csv", fields, rows)
    run.write_json("green_summary.json", {
        "params": params.to_json(), "tol": b["tol"], "budget": b["budget"],
        "escape_directions": {str(seed): d.to_json() for seed, _, d in results},
        "escaped": sum(gv.escaped for _, values, _ in results for gv in values), "evaluated": len(rows)})
    print(f"evaluated {len(rows)} points")


def cmd_basepoints(run: _Run, args) -> None:
    cfg = run.cfg
    b = cfg.budgets
    payload = {}
    if cfg.input_map is not None:
        chain = base_point_chain(cfg.input_map, max(b["L"], 64), strict=False)
        payload["input"] = {"indeterminacy_point": indeterminacy_point(cfg.input_map).to_json(),
                            "chain": chain.to_json(), "count": chain.count,
                            "weighted_count": chain.weighted_count, "noether_ok": chain.noether_ok()}
    if cfg.measure is not None:
        report = chain_divergence_experiment(cfg.measure, cfg.seeds, b["L"], min(b["N_max"], 2000))
        payload["divergence"] = report.to_json()
        print(f"fraction diverged by depth {b['L']}: {report.fraction_diverged:.3f}")
    if not payload:
        raise ConfigError("basepoints needs 'input' or 'measure'")
    run.write_json("basepoints.json", payload)
    if "input" in payload and not payload["input"]["chain"]["complete"]:
        raise Partial("base-point chain of the input map is longer than the depth limit")


def cmd_ergodic(run: _Run, args) -> None:
    cfg = run.cfg
    mu = _need(cfg.measure, "measure")
    H = cfg.family()
    params = compute_constants(H)
    points = _sample_points(cfg)
    N = cfg.budgets["N_max"]

    def one(seed):
        return escape_dichotomy_experiment(mu, [seed], points, N, H, params, with_lyapunov=True).records

    records = [r for recs in run.pmap(one, cfg.seeds) for r in recs]
    fields = ["seed", "point", "status", "hit_time", "bound_radius", "lambda_plus", "lambda_minus"]
    run.write_csv("ergodic.csv", fields, [r.to_row() for r in records])
    drift, kind = jacobian_drift(mu)
    escaped = sum(r.escaped for r in records)
    radii = [r.bound_radius for r in records if not r.escaped]
    run.write_json("ergodic_summary.json", {"jacobian_drift": drift, "classification": kind, "N": N,
                                            "escaped": escaped, "total": len(records),
                                            "bound_radius": max(radii, default=0.0)})
    print(f"escaped {escaped}/{len(records)}; jacobian drift {drift} ({kind})")


COMMANDS = {
    "decompose": cmd_decompose,
    "classify": cmd_classify,
    "walk": cmd_walk,
    "filtration": cmd_filtration,
    "green": cmd_green,
    "basepoints": cmd_basepoints,
    "ergodic": cmd_ergodic,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="randhenon", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", metavar="PATH")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", metavar="DIR")
        p.add_argument("--threads", type=int)
        p.add_argument("--tol", type=float)
        p.add_argument("--budget", type=int)
        if name == "green":
            p.add_argument("--render", action="store_true", help="write a float32 raster of the configured slice")
    return parser


def _dump_witness(out_dir: str, exc: Exception) -> None:
    try:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        with open(Path(out_dir) / "witness.json", "w") as fh:
            json.dump({"error": type(exc).__name__, "message": str(exc),
                       "witness": getattr(exc, "witness", None)}, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")
    except OSError:
        pass


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"seed": args.seed, "out": args.out, "threads": args.threads, "tol": args.tol, "budget": args.budget}
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
    # timestamps live only in the log, never in artifacts
    handler = logging.FileHandler(Path(cfg.out_dir) / "run.log")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO)
    log.info("%s config_hash=%s seeds=%s", args.command, cfg.config_hash, cfg.seeds)
    start = time.perf_counter()
    try:
        COMMANDS[args.command](_Run(cfg, args.command), args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CertificationFailure, ConeObstruction) as exc:
        _dump_witness(cfg.out_dir, exc)
        print(f"certification failure: {exc}", file=sys.stderr)
        return EXIT_CERTIFICATION
    except (Partial, BudgetExceeded, NotStabilized, DepthExceeded) as exc:
        print(f"budget exhausted (partial results flagged): {exc}", file=sys.stderr)
        return EXIT_BUDGET
    finally:
        log.info("finished in %.3fs", time.perf_counter() - start)
        log.removeHandler(handler)
        handler.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
