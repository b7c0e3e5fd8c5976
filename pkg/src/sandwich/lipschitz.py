"""Lipschitz sandwich of a concept from dilation and erosion.

With ``rho = (eps/2)**s / sigma`` the pair

    f_up   = clip((dist(x, S_far_out) - dist(x, S_in))  / rho, -1, 1)
    f_down = clip((dist(x, S_out)     - dist(x, S_far_in)) / rho, -1, 1)

is ``2/rho``-Lipschitz, satisfies ``f_down <= f <= f_up`` and
``f^{-rho} <= f_down``, ``f_up <= f^{+rho}``.  Where an exact distance to a
far set is unavailable the certified bound ``max(0, rho - dist)`` is used,
which keeps all three properties.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .concepts import Concept, _points

VARIANTS = ("two_distance", "one_distance")


@dataclass(frozen=True)
class LipschitzSandwich:
    concept: Concept
    sigma: float
    eps: float
    s: float
    rho: float
    L: float
    variant: str = "two_distance"

    def up(self, X: np.ndarray) -> np.ndarray:
        X = _points(X, self.concept.dim)
        out = np.ones(X.shape[0])
        off = self.concept.evaluate(X) < 0
        if off.any():
            Xo = X[off]
            d_in = self.concept.dist_to_positive(Xo, cap=self.rho + 1e-12)
            far = self.concept.far_out_distance(Xo, self.rho) if self.variant == "two_distance" else None
            if far is None:
                far = np.maximum(0.0, self.rho - d_in.hi)
            out[off] = np.clip((far - d_in.lo) / self.rho, -1.0, 1.0)
        return out

    def down(self, X: np.ndarray) -> np.ndarray:
        X = _points(X, self.concept.dim)
        out = -np.ones(X.shape[0])
        on = self.concept.evaluate(X) > 0
        if on.any():
            Xo = X[on]
            d_out = self.concept.dist_to_negative(Xo, cap=self.rho + 1e-12)
            far = self.concept.far_in_distance(Xo, self.rho) if self.variant == "two_distance" else None
            if far is None:
                far = np.maximum(0.0, self.rho - d_out.lo)
            out[on] = np.clip((d_out.lo - far) / self.rho, -1.0, 1.0)
        return out


def sandwich_rho(eps: float, s: float, sigma: float) -> float:
    return (eps / 2.0) ** s / sigma


def build_lipschitz_sandwich(concept: Concept, sigma: float, eps: float, s: float,
                             variant: str = "two_distance") -> LipschitzSandwich:
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if not s >= 1.0:
        raise ValueError(f"s must be at least 1, got {s}")
    if not (sigma >= 1.0 and math.isfinite(sigma)):
        raise ValueError(f"sigma must be a finite bound of at least 1, got {sigma}")
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    rho = sandwich_rho(eps, s, sigma)
    return LipschitzSandwich(concept, float(sigma), float(eps), float(s), rho, 2.0 / rho, variant)


def eval_up(ls: LipschitzSandwich, X: np.ndarray) -> np.ndarray:
    return ls.up(X)


def eval_down(ls: LipschitzSandwich, X: np.ndarray) -> np.ndarray:
    return ls.down(X)
