"""Result containers shared by solvers and the asymptotic expansion."""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np


def _describe(obj):
    if obj is None:
        return None
    if hasattr(obj, "describe"):
        return obj.describe()
    return {"kind": "callable"}


@dataclass
class RiskEstimate:
    """A certified lower-bound estimate of the worst-case functional.

    ``value`` is the optimized objective (>= mu f up to Monte Carlo noise),
    ``field`` the optimizing perturbation, ``penalty_paid`` the rescaled
    penalty at the optimum.
    """

    value: float
    h: float
    regime: str
    penalty_paid: float = 0.0
    iterations: int = 0
    seed: int = 0
    mc_batch: Optional[int] = None
    mc_stderr: Optional[float] = None
    field: Optional[object] = None
    lambda_star: Optional[float] = None
    flags: tuple = ()
    diagnostics: dict = dc_field(default_factory=dict)

    def to_json_dict(self) -> dict:
        diag = {k: v for k, v in self.diagnostics.items() if k != "log"}
        return {
            "value": self.value,
            "h": self.h,
            "regime": self.regime,
            "penalty_paid": self.penalty_paid,
            "iterations": self.iterations,
            "seed": self.seed,
            "mc_batch": self.mc_batch,
            "mc_stderr": self.mc_stderr,
            "lambda_star": self.lambda_star,
            "flags": list(self.flags),
            "field": _describe(self.field),
            "diagnostics": diag,
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)


@dataclass
class ExpansionReport:
    """First-order expansion: coefficient = phi*(inner_norm) by construction."""

    coefficient: float
    inner_norm: float
    regime: str
    p: float
    direction: Optional[object] = None
    inner_stderr: Optional[float] = None
    approximate: bool = False

    @property
    def q(self) -> float:
        return self.p / (self.p - 1.0)

    def to_json_dict(self) -> dict:
        return {
            "coefficient": self.coefficient,
            "inner_norm": self.inner_norm,
            "regime": self.regime,
            "p": self.p,
            "q": self.q,
            "inner_stderr": self.inner_stderr,
            "approximate": self.approximate,
            "field": _describe(self.direction),
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)


def combined_stderr(*estimates) -> float:
    """Root-sum-square of the available standard errors."""
    total = 0.0
    for e in estimates:
        se = e.mc_stderr if isinstance(e, RiskEstimate) else e
        if se:
            total += float(se) ** 2
    return float(np.sqrt(total))
