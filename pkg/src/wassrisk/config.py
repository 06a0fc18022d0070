"""JSON experiment configurations: parsing, validation, descriptors."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, RegimePenaltyMismatch, WassriskError
from .fields import CallPortfolioField, MLPField
from .loss import (
    LossFunction,
    bull_spread_on_returns,
    bump_loss,
    call_loss,
    constant_loss,
    linear_loss,
    quadratic_loss,
    sum_loss,
)
from .measure import (
    DiscreteMeasure,
    GaussianMeasure,
    LognormalReturnsMeasure,
    Measure,
    empirical_measure,
)
from .objective import Regime, check_regime_penalty
from .penalty import Penalty, penalty_from_json

ENV_SEED = "WASSRISK_SEED"


def _need(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"missing key {where}.{key}")
    return d[key]


def parse_penalty(d, where="problem.penalty") -> Penalty:
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    try:
        return penalty_from_json(d)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def parse_measure(d, seed: int, where="problem.measure") -> Measure:
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    kind = _need(d, "kind", where)
    try:
        if kind == "discrete":
            return DiscreteMeasure(
                _need(d, "atoms", where), d.get("weights"), seed=d.get("seed", seed)
            )
        if kind == "gaussian":
            return GaussianMeasure(
                _need(d, "mean", where), _need(d, "cov", where), seed=d.get("seed", seed)
            )
        if kind == "lognormal_returns":
            if "sigma" in d:
                return LognormalReturnsMeasure.from_black_scholes(
                    d["sigma"], d.get("T", 1.0), seed=d.get("seed", seed)
                )
            return LognormalReturnsMeasure(
                _need(d, "drift", where), _need(d, "variance", where), seed=d.get("seed", seed)
            )
        if kind == "empirical":
            return empirical_measure(_need(d, "path", where), seed=d.get("seed", seed))
    except ConfigError:
        raise
    except (ValueError, OSError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where}.kind: unknown measure kind {kind!r}")


def parse_loss(d, where="problem.loss") -> LossFunction:
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    kind = _need(d, "kind", where)
    try:
        if kind == "bump":
            return bump_loss(_need(d, "c", where), _need(d, "r", where), _need(d, "center", where))
        if kind == "sum":
            parts = [parse_loss(p, f"{where}.parts[{i}]") for i, p in enumerate(_need(d, "parts", where))]
            return sum_loss(parts, dim=d.get("dim"))
        if kind == "call":
            return call_loss(_need(d, "K", where))
        if kind == "bull_spread_returns":
            return bull_spread_on_returns(
                _need(d, "K1", where), _need(d, "K2", where), d.get("smoothing", 0.0)
            )
        if kind == "linear":
            return linear_loss(_need(d, "c", where))
        if kind == "quadratic":
            return quadratic_loss(dim=d.get("dim", 2))
        if kind == "constant":
            return constant_loss(_need(d, "level", where), dim=d.get("dim", 1))
    except ConfigError:
        raise
    except (ValueError, WassriskError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where}.kind: unknown loss kind {kind!r}")


def parse_field(d, problem: "Problem", where="solver.field"):
    """Direction fields for the ray solver: steepest ascent or a portfolio."""
    if d is None or d == {"kind": "steepest_ascent"} or (isinstance(d, dict) and d.get("kind") == "steepest_ascent"):
        from .asymptotics import steepest_ascent_field

        q = problem.p / (problem.p - 1.0)
        return steepest_ascent_field(problem.loss, q)
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    kind = _need(d, "kind", where)
    try:
        if kind == "call_portfolio":
            return CallPortfolioField(
                _need(d, "strikes", where), _need(d, "weights", where), d.get("style", "call")
            )
        if kind == "mlp_file":
            return MLPField.load(_need(d, "path", where))
    except ConfigError:
        raise
    except (ValueError, OSError, WassriskError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where}.kind: unknown field kind {kind!r}")


@dataclass
class Problem:
    loss: LossFunction
    measure: Measure
    p: float
    penalty: Penalty
    regime: Regime


@dataclass
class ExperimentConfig:
    problem: Problem
    solver: dict
    h_values: list
    seed: int
    output_dir: str
    raw: dict = field(default_factory=dict)


def apply_overrides(raw: dict, overrides: dict) -> dict:
    """Set dotted-path scalars, e.g. {"problem.h": 0.05}."""
    for path, value in overrides.items():
        node = raw
        parts = path.split(".")
        for part in parts[:-1]:
            if not isinstance(node.get(part), dict):
                node[part] = {}
            node = node[part]
        node[parts[-1]] = value
    return raw


def parse_config(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("top-level config must be an object")
    prob = _need(raw, "problem", "config")
    seed = raw.get("seed")
    if seed is None:
        seed = int(os.environ.get(ENV_SEED, "0"))
    seed = int(seed)

    p = float(_need(prob, "p", "problem"))
    if not p > 1:
        raise ConfigError("problem.p must exceed 1")
    try:
        regime = Regime.parse(prob.get("regime", "unconstrained"))
    except ValueError as exc:
        raise ConfigError(f"problem.regime: {exc}") from exc
    loss = parse_loss(_need(prob, "loss", "problem"))
    measure = parse_measure(_need(prob, "measure", "problem"), seed)
    penalty = parse_penalty(_need(prob, "penalty", "problem"))
    if loss.dim != measure.dim:
        raise ConfigError(
            f"problem.loss dimension {loss.dim} != problem.measure dimension {measure.dim}"
        )
    if regime is Regime.MEAN and p != 2.0:
        raise ConfigError(
            f"problem.p: RegimeRequiresP2 — the mean regime is only available for p = 2, got p = {p}"
        )
    if regime is Regime.MARTINGALE and p <= 2.0:
        raise ConfigError(
            f"problem.p: ExponentUndefined — the martingale regime needs p > 2, got p = {p}"
        )
    try:
        check_regime_penalty(penalty, p, regime)
    except RegimePenaltyMismatch as exc:
        raise ConfigError(f"problem.penalty: RegimePenaltyMismatch — {exc}") from exc

    solver = raw.get("solver", {"kind": "discrete"})
    if not isinstance(solver, dict) or "kind" not in solver:
        raise ConfigError("solver.kind is required")
    if solver["kind"] not in ("discrete", "mlp", "ray", "transfer"):
        raise ConfigError(f"solver.kind: unknown solver {solver['kind']!r}")
    if solver["kind"] == "discrete" and not isinstance(measure, DiscreteMeasure):
        raise ConfigError("solver.kind: the discrete solver needs problem.measure.kind == 'discrete'")

    h_raw = raw.get("h", prob.get("h"))
    if h_raw is None:
        raise ConfigError("missing key config.h")
    h_values = [float(h) for h in (h_raw if isinstance(h_raw, list) else [h_raw])]
    if any(h <= 0 for h in h_values):
        raise ConfigError("config.h: uncertainty levels must be positive")

    return ExperimentConfig(
        problem=Problem(loss, measure, p, penalty, regime),
        solver=solver,
        h_values=h_values,
        seed=seed,
        output_dir=raw.get("output_dir", "out"),
        raw=raw,
    )


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if overrides:
        apply_overrides(raw, overrides)
    return parse_config(raw)
