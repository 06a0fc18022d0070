"""Config-driven command line: run / expand / verify / price-bounds.

Exit codes: 0 success, 2 config error, 3 solver failure, 4 failed checks.
Any config scalar can be overridden with a dotted flag, e.g.
``--problem.p 2`` or ``--solver.epochs 200``.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import finance
from .asymptotics import first_order_coefficient, ray_optimize, steepest_ascent_field
from .config import ExperimentConfig, load_config, parse_field
from .errors import ConfigError, WassriskError
from .fields import MLPField, TabularField
from .measure import DiscreteMeasure
from .objective import Regime, evaluate
from .penalty import PowerPenalty, TablePenalty, phi_h, phi_star
from .solvers import (
    MLPArchitecture,
    TrainOptions,
    TransferOptions,
    solve_discrete,
    train_mlp,
    transfer_retrain,
)
from .transport import wasserstein_p

_CURVE_SCHEMA = "wassrisk-value-curve-v1"
_FIELD_SCHEMA = "wassrisk-field-snapshot-v1"
_LOG_SCHEMA = "wassrisk-training-log-v1"


def _parse_overrides(tokens):
    """Turn ['--a.b', '1', '--c.d', 'x'] into {'a.b': 1, 'c.d': 'x'}."""
    out = {}
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            i += 1
            if i >= len(tokens):
                raise ConfigError(f"flag --{key} needs a value")
            value = tokens[i]
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
        i += 1
    return out


def _arch_from_solver(solver: dict) -> MLPArchitecture:
    return MLPArchitecture(
        depth=int(solver.get("depth", 4)),
        width=int(solver.get("width", 20)),
        activation=solver.get("activation", "relu"),
        scale_layer=bool(solver.get("scale_layer", False)),
    )


def _train_opts(solver: dict, seed: int) -> TrainOptions:
    return TrainOptions(
        lr=float(solver.get("lr", 1e-3)),
        batch=int(solver.get("batch", 32768)),
        epochs=int(solver.get("epochs", 600)),
        seed=int(solver.get("seed", seed)),
        window=int(solver.get("window", 100)),
    )


def _solve_one(cfg: ExperimentConfig, h: float, row_seed: int):
    prob = cfg.problem
    kind = cfg.solver["kind"]
    if kind == "discrete":
        return solve_discrete(prob.loss, prob.measure, h, prob.penalty, prob.regime, p=prob.p)
    if kind == "mlp":
        arch = _arch_from_solver(cfg.solver)
        opts = _train_opts(cfg.solver, row_seed)
        return train_mlp(prob.loss, prob.measure, h, prob.penalty, prob.regime, arch, opts, p=prob.p)
    if kind == "ray":
        theta0 = parse_field(cfg.solver.get("field"), prob)
        return ray_optimize(
            prob.loss, prob.measure, theta0, h, prob.penalty, prob.regime,
            p=prob.p, mc_batch=int(cfg.solver.get("batch", 32768)), seed=row_seed,
        )
    if kind == "transfer":
        pre_path = cfg.solver.get("pretrained_path")
        if pre_path:
            pretrained = MLPField.load(pre_path)
        else:
            arch = _arch_from_solver(cfg.solver)
            arch.scale_layer = True
            opts = _train_opts(cfg.solver, row_seed)
            pretrained = train_mlp(
                prob.loss, prob.measure, h, prob.penalty, prob.regime, arch, opts, p=prob.p
            ).field
        from .config import parse_measure

        target = cfg.solver.get("target_measure")
        measure_new = parse_measure(target, row_seed, "solver.target_measure") if target else prob.measure
        topts = TransferOptions(
            batch=int(cfg.solver.get("partial_batch", 4096)), seed=row_seed,
            method=cfg.solver.get("method", "golden"),
        )
        return transfer_retrain(
            pretrained, prob.loss, measure_new, h, prob.penalty, prob.regime, p=prob.p, opts=topts
        )
    raise ConfigError(f"solver.kind: unknown solver {kind!r}")


def _write_field_snapshot(path, est, cfg: ExperimentConfig):
    prob = cfg.problem
    if prob.measure.dim != 2 or est.field is None:
        return
    if isinstance(prob.measure, DiscreteMeasure):
        lo = prob.measure.atoms.min(axis=0) - 2.0
        hi = prob.measure.atoms.max(axis=0) + 2.0
    else:
        center = getattr(prob.measure, "mean_vec", np.zeros(2))
        lo, hi = center - 3.0, center + 3.0
    grid = np.stack(
        np.meshgrid(np.linspace(lo[0], hi[0], 21), np.linspace(lo[1], hi[1], 21), indexing="ij"),
        axis=-1,
    ).reshape(-1, 2)
    theta = np.asarray(est.field(grid), dtype=float)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# schema: {_FIELD_SCHEMA}\n")
        writer = csv.writer(fh)
        writer.writerow(["x1", "x2", "theta1", "theta2"])
        for pt, th in zip(grid, theta):
            writer.writerow([pt[0], pt[1], th[0], th[1]])


def _write_training_log(path, est):
    log = est.diagnostics.get("log")
    if not log:
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# schema: {_LOG_SCHEMA}\n")
        writer = csv.writer(fh)
        writer.writerow(["epoch", "value", "moving_avg", "norm", "penalty"])
        for row in log:
            writer.writerow(list(row))


def _h_tag(h: float) -> str:
    return f"{h:g}".replace(".", "p")


def _pool_worker(args):
    cfg_raw, h, row_seed = args
    from .config import parse_config

    cfg = parse_config(cfg_raw)
    est = _solve_one(cfg, h, row_seed)
    return h, est


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config, _parse_overrides(args.overrides))
        if args.h:
            cfg.h_values = [float(h) for h in args.h]
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out:
            cfg.output_dir = args.out
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    os.makedirs(cfg.output_dir, exist_ok=True)
    rows = []
    try:
        if args.jobs and args.jobs > 1:
            payload = [(cfg.raw, h, cfg.seed + i) for i, h in enumerate(cfg.h_values)]
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                results = list(pool.map(_pool_worker, payload))
        else:
            results = [
                (h, _solve_one(cfg, h, cfg.seed + i)) for i, h in enumerate(cfg.h_values)
            ]
        for h, est in results:
            tag = _h_tag(h)
            est.save(os.path.join(cfg.output_dir, f"risk_estimate_h{tag}.json"))
            _write_field_snapshot(os.path.join(cfg.output_dir, f"field_h{tag}.csv"), est, cfg)
            _write_training_log(os.path.join(cfg.output_dir, f"training_log_h{tag}.csv"), est)
            rows.append((h, est.value, est.mc_stderr if est.mc_stderr is not None else 0.0))
            print(f"h={h:g}  value={est.value:.10g}  stderr={rows[-1][2]:.3g}")
    except WassriskError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    curve = os.path.join(cfg.output_dir, "value_curve.csv")
    with open(curve, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# schema: {_CURVE_SCHEMA}\n")
        writer = csv.writer(fh)
        writer.writerow(["h", "value", "stderr"])
        for row in rows:
            writer.writerow(list(row))
    print(f"wrote {curve}")
    return 0


def cmd_expand(args) -> int:
    try:
        cfg = load_config(args.config, _parse_overrides(args.overrides))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    prob = cfg.problem
    try:
        report = first_order_coefficient(
            prob.loss, prob.measure, prob.p, prob.penalty, prob.regime, seed=cfg.seed
        )
    except WassriskError as exc:
        print(f"expansion failure: {exc}", file=sys.stderr)
        return 3
    out = json.dumps(report.to_json_dict(), indent=2)
    print(out)
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = os.path.join(cfg.output_dir, "expansion.json")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(out + "\n")
    return 0


def _reparse_csv(path) -> bool:
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("# schema: wassrisk-"):
            return False
        reader = csv.reader(fh)
        header = next(reader)
        for row in reader:
            if len(row) != len(header):
                return False
            [float(x) for x in row]
    return True


def cmd_verify(args) -> int:
    try:
        cfg = load_config(args.config, _parse_overrides(args.overrides))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    prob = cfg.problem
    checks = []

    def check(name, fn):
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashed check is a failed check
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        checks.append((name, ok, detail))

    def penalty_checks():
        grid = np.linspace(0.0, 5.0, 21)
        for h1, h2 in [(0.1, 0.5), (0.5, 1.0), (1.0, 2.0)]:
            lo = np.asarray(phi_h(prob.penalty, h2, grid))
            hi = np.asarray(phi_h(prob.penalty, h1, grid))
            if not np.all(hi >= lo - 1e-12):
                return False, f"phi_h not monotone between h={h1} and h={h2}"
        if phi_star(prob.penalty, 0.0) != 0.0:
            return False, "phi*(0) != 0"
        us = np.linspace(0.0, 3.0, 7)
        stars = [phi_star(prob.penalty, u) for u in us]
        if np.any(np.diff(stars) < -1e-10):
            return False, "phi* not nondecreasing"
        for u in (0.1, 1.0):
            star = phi_star(prob.penalty, u)
            vals = u * grid - np.asarray(prob.penalty.value(grid), dtype=float)
            if np.any(vals > star + 1e-8):
                return False, "Fenchel-Young violated on the grid"
        if isinstance(prob.penalty, PowerPenalty):
            for u in (0.1, 1.0, 10.0):
                cf = prob.penalty.conjugate(u)
                nm = prob.penalty.conjugate_numeric(u)
                if abs(cf - nm) > 1e-8 * (1.0 + cf):
                    return False, f"closed-form vs numeric conjugate differ at u={u}"
        return True, "rescaling monotone, conjugate consistent"

    def gradient_check():
        if prob.loss.gradient is None:
            return True, "no analytic gradient declared (skipped)"
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(7)))
        if isinstance(prob.measure, DiscreteMeasure):
            base = prob.measure.atoms
        else:
            base = prob.measure.sample(32, 0)
        pts = base + 0.1 * rng.standard_normal(base.shape)
        step = 1e-6
        analytic = np.asarray(prob.loss.gradient(pts), dtype=float)
        from .loss import fd_gradient

        numeric = fd_gradient(prob.loss, pts, step)
        err = np.linalg.norm(analytic - numeric, axis=-1)
        scale = 1e-6 + np.linalg.norm(analytic, axis=-1)
        bad = np.mean(err / scale > 1e-4)
        if bad > 0.1:
            return False, f"{bad:.0%} of sampled points disagree with finite differences"
        return True, f"max relative disagreement {np.max(err / scale):.2e} (10% kink allowance)"

    def feasibility_check():
        if isinstance(prob.measure, DiscreteMeasure) and len(prob.measure) <= 16:
            mu = prob.measure
        else:
            mu = DiscreteMeasure(prob.measure.sample(8, 123))
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(99)))
        from .fields import lp_norm

        for _ in range(25):
            shifts = rng.standard_normal(mu.atoms.shape)
            field = TabularField(shifts, mu.atoms)
            dist, _ = wasserstein_p(mu, mu.pushforward(shifts), prob.p)
            if dist > lp_norm(field, mu, prob.p) + 1e-10:
                return False, "W_p(mu, mu_theta) exceeded the field norm"
        return True, "25 random pushforwards satisfy the coupling bound"

    def monotone_check():
        hs = sorted(cfg.h_values)[:5]
        if len(hs) < 2:
            hs = [0.05, 0.1, 0.2]
        if cfg.solver["kind"] == "discrete":
            vals = [
                solve_discrete(prob.loss, prob.measure, h, prob.penalty, prob.regime, p=prob.p).value
                for h in hs
            ]
            tol = 1e-8
        else:
            theta0 = steepest_ascent_field(prob.loss, prob.p / (prob.p - 1.0))
            vals = [
                ray_optimize(
                    prob.loss, prob.measure, theta0, h, prob.penalty, prob.regime,
                    p=prob.p, mc_batch=8192, seed=cfg.seed,
                ).value
                for h in hs
            ]
            tol = 1e-6
        if np.any(np.diff(vals) < -tol):
            return False, f"values not nondecreasing over h grid {hs}: {vals}"
        return True, f"values nondecreasing over h grid {hs}"

    def baseline_check():
        h = cfg.h_values[0]
        value, info = evaluate(
            prob.loss, prob.measure, None, h, prob.penalty, prob.regime,
            p=prob.p, mc_batch=8192, seed=cfg.seed,
        )
        if isinstance(prob.measure, DiscreteMeasure):
            mu_f = float(prob.measure.weights @ np.asarray(prob.loss.value(prob.measure.atoms)))
            ok = abs(value - mu_f) <= 1e-12
        else:
            ok = info["penalty"] == 0.0 and math.isfinite(value)
        return ok, f"J(0) = {value:.6g} with zero penalty"

    def outputs_check():
        out = cfg.output_dir
        if not os.path.isdir(out):
            return True, "no outputs yet (skipped)"
        files = [fn for fn in os.listdir(out) if fn.endswith(".csv")]
        for fn in files:
            if not _reparse_csv(os.path.join(out, fn)):
                return False, f"{fn} failed to re-parse"
        return True, f"re-parsed {len(files)} CSV file(s)"

    check("penalty-invariants", penalty_checks)
    check("loss-gradient-vs-fd", gradient_check)
    check("pushforward-feasibility", feasibility_check)
    check("value-monotone-in-h", monotone_check)
    check("zero-field-baseline", baseline_check)
    check("output-csv-schema", outputs_check)

    failed = 0
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        failed += 0 if ok else 1
    return 4 if failed else 0


def cmd_price_bounds(args) -> int:
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        for key, value in _parse_overrides(args.overrides).items():
            from .config import apply_overrides

            apply_overrides(raw, {key: value})
        market = finance.MarketSpec(
            sigma=float(raw.get("sigma", 0.2)),
            T=float(raw.get("T", 1.0)),
            K1=float(raw.get("K1", 1.0)),
            K2=float(raw.get("K2", 1.2)),
        )
        h_grid = [float(h) for h in raw.get("h", [0.0, 1.0 / 48, 1.0 / 24, 1.0 / 12])]
        p = float(raw.get("p", 3.0))
        solver = raw.get("solver", {})
        seed = int(raw.get("seed", os.environ.get(ENV_SEED_DEFAULT, "0")))
        out_dir = raw.get("output_dir", "out")
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        rows = finance.bull_spread_bounds(
            market,
            h_grid,
            p=p,
            penalty=None if raw.get("penalty") is None else _parse_penalty_cli(raw["penalty"]),
            arch=_arch_from_solver(solver),
            opts=_train_opts(solver, seed),
            smoothing=raw.get("smoothing"),
            seed=seed,
        )
    except WassriskError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "bull_spread_bounds.csv")
    finance.write_bounds_csv(rows, path)
    print(f"{'h':>10} {'lower':>12} {'upper':>12} {'bs_price':>12}")
    for r in rows:
        print(f"{r.h:>10.5f} {r.lower:>12.6f} {r.upper:>12.6f} {r.bs_price:>12.6f}")
    print(f"wrote {path}")
    return 0


ENV_SEED_DEFAULT = "WASSRISK_SEED"


def _parse_penalty_cli(d):
    from .config import parse_penalty

    return parse_penalty(d, "penalty")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="wassrisk",
        description="Parametric lower-bound estimates of Wasserstein-penalized worst-case risk.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    runp = sub.add_parser("run", help="run an experiment config")
    runp.add_argument("config")
    runp.add_argument("--h", action="append", type=float, help="override the h grid (repeatable)")
    runp.add_argument("--seed", type=int)
    runp.add_argument("--out", help="override output_dir")
    runp.add_argument("--jobs", type=int, default=1, help="parallel workers over the h grid")

    expp = sub.add_parser("expand", help="first-order expansion report")
    expp.add_argument("config", nargs="?")
    expp.add_argument("--config", dest="config_flag")

    verp = sub.add_parser("verify", help="run the invariant checks for a config")
    verp.add_argument("config")

    prip = sub.add_parser("price-bounds", help="bull-spread price bounds table")
    prip.add_argument("config")

    args, overrides = parser.parse_known_args(argv)
    args.overrides = overrides
    if args.command == "expand":
        args.config = args.config or args.config_flag
        if not args.config:
            print("config error: expand needs a config path", file=sys.stderr)
            return 2
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "expand":
            return cmd_expand(args)
        if args.command == "verify":
            return cmd_verify(args)
        if args.command == "price-bounds":
            return cmd_price_bounds(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
