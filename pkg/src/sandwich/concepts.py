"""Boolean concepts on R^d with dilation, erosion and distance oracles.

Convention: the positive region of every concept is closed (``sign(0) = +1``)
and the negative region is open.  Hence the dilation is positive iff the
distance to the positive region is ``<= rho`` and the erosion is negative iff
the distance to the negative region is ``< rho``.

Distances are returned as certified intervals.  Halfspaces, intersections and
Boolean combinations of halfspaces are exact; polynomial threshold functions in
two or more variables use ray probing for the upper end and a Taylor gradient
bound for the lower end.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .polycore import Polynomial

_FEAS_TOL = 1e-9


@dataclass(frozen=True)
class DistanceInterval:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self) -> None:
        if np.any(self.lo > self.hi + 1e-12):
            raise ValueError("distance interval with lo > hi")

    @property
    def exact(self) -> np.ndarray:
        return self.lo == self.hi


@dataclass(frozen=True)
class Halfspace:
    """The set ``{x : w . x <= tau}`` with ``w`` rescaled to unit length."""

    w: np.ndarray
    tau: float

    def __post_init__(self) -> None:
        w = np.atleast_1d(np.asarray(self.w, dtype=float))
        n = float(np.linalg.norm(w))
        if not n > 0 or not np.all(np.isfinite(w)):
            raise ValueError("halfspace normal must be a finite nonzero vector")
        object.__setattr__(self, "w", w / n)
        object.__setattr__(self, "tau", float(self.tau) / n)

    @property
    def dim(self) -> int:
        return self.w.size

    def shifted(self, delta: float) -> "Halfspace":
        return Halfspace(self.w, self.tau + delta)

    def to_record(self) -> dict:
        return {"w": self.w.tolist(), "tau": self.tau}


def _points(X: np.ndarray, dim: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :] if dim > 1 or X.size == 1 else X[:, None]
    if X.shape[1] != dim:
        raise ValueError(f"points must have {dim} columns")
    return X


class Concept:
    """Abstract concept ``f : R^d -> {-1, +1}``."""

    dim: int
    convex: bool = False

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def dist_to_positive(self, X: np.ndarray, cap: float = math.inf) -> DistanceInterval:
        raise NotImplementedError

    def dist_to_negative(self, X: np.ndarray, cap: float = math.inf) -> DistanceInterval:
        raise NotImplementedError

    def boundary_lower_bound(self, X: np.ndarray) -> np.ndarray | None:
        """Cheap lower bound on the distance to the decision boundary."""
        return None

    # exact distances to the far sets, when available (see lipschitz)
    def far_out_distance(self, X: np.ndarray, rho: float) -> np.ndarray | None:
        return None

    def far_in_distance(self, X: np.ndarray, rho: float) -> np.ndarray | None:
        return None

    def dilate(self, X: np.ndarray, rho: float) -> np.ndarray:
        X = _points(X, self.dim)
        out = self.evaluate(X).copy()
        neg = out < 0
        if neg.any():
            d = self.dist_to_positive(X[neg], cap=2 * rho + 1e-12)
            # ambiguous points resolve to +1
            out[neg] = np.where(d.lo > rho, -1.0, 1.0)
        return out

    def erode(self, X: np.ndarray, rho: float) -> np.ndarray:
        X = _points(X, self.dim)
        out = self.evaluate(X).copy()
        pos = out > 0
        if pos.any():
            d = self.dist_to_negative(X[pos], cap=2 * rho + 1e-12)
            # ambiguous points resolve to -1
            out[pos] = np.where(d.lo >= rho, 1.0, -1.0)
        return out

    def negate(self) -> "Concept":
        return Negation(self)

    def lift(self, W: np.ndarray) -> "LiftedConcept":
        return LiftedConcept(self, np.asarray(W, dtype=float))

    def to_record(self) -> dict:
        raise NotImplementedError


def _signs(mask: np.ndarray) -> np.ndarray:
    return np.where(mask, 1.0, -1.0)


def _polytope_distance(X: np.ndarray, W: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance from rows of X to ``{y : W y <= tau}``.

    Enumerates active sets of at most ``d`` linearly independent constraints;
    the projection is the closest feasible candidate."""
    n, d = X.shape
    k = W.shape[0]
    WX = X @ W.T
    viol = WX - tau
    out = np.where(np.all(viol <= 0, axis=1), 0.0, np.inf)
    todo = np.flatnonzero(out > 0)
    if todo.size == 0:
        return out
    WXt = WX[todo]
    tol = _FEAS_TOL * (1.0 + np.abs(tau))
    for size in range(1, min(k, d) + 1):
        for S in itertools.combinations(range(k), size):
            S = list(S)
            G = W[S] @ W[S].T
            if np.linalg.cond(G) > 1e12:
                continue
            Ginv = np.linalg.inv(G)
            r = WXt[:, S] - tau[S]
            lam = r @ Ginv
            # KKT multipliers must be nonnegative at the projection
            ok = np.all(lam >= -1e-12, axis=1)
            if not ok.any():
                continue
            Wy = WXt - lam @ (W[S] @ W.T)
            ok &= np.all(Wy <= tau + tol, axis=1)
            dist2 = np.einsum("ij,ij->i", lam, r)
            cand = np.where(ok, np.sqrt(np.maximum(dist2, 0.0)), np.inf)
            out[todo] = np.minimum(out[todo], cand)
    return out


class SingleHalfspace(Concept):
    convex = True

    def __init__(self, h: Halfspace) -> None:
        self.h = h
        self.dim = h.dim

    def slack(self, X: np.ndarray) -> np.ndarray:
        return _points(X, self.dim) @ self.h.w - self.h.tau

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        return _signs(self.slack(X) <= 0)

    def dist_to_positive(self, X, cap=math.inf):
        d = np.maximum(0.0, self.slack(X))
        return DistanceInterval(d, d)

    def dist_to_negative(self, X, cap=math.inf):
        d = np.maximum(0.0, -self.slack(X))
        return DistanceInterval(d, d)

    def boundary_lower_bound(self, X):
        return np.abs(self.slack(X))

    def far_out_distance(self, X, rho):
        return np.maximum(0.0, rho - np.maximum(0.0, self.slack(X)))

    def far_in_distance(self, X, rho):
        return np.maximum(0.0, self.slack(X) + rho)

    def bias_shift_dilate(self, rho: float) -> "SingleHalfspace":
        return SingleHalfspace(self.h.shifted(rho))

    def bias_shift_erode(self, rho: float) -> "SingleHalfspace":
        return SingleHalfspace(self.h.shifted(-rho))

    def dilate(self, X, rho):
        return _signs(self.slack(X) <= rho)

    def erode(self, X, rho):
        return _signs(self.slack(X) <= -rho)

    def to_record(self):
        return {"type": "halfspace", **self.h.to_record()}


class Intersection(Concept):
    """AND of halfspaces, i.e. a polyhedron."""

    convex = True

    def __init__(self, halfspaces: Sequence[Halfspace]) -> None:
        if not halfspaces:
            raise ValueError("need at least one halfspace")
        dims = {h.dim for h in halfspaces}
        if len(dims) != 1:
            raise ValueError("halfspaces disagree on dimension")
        self.halfspaces = tuple(halfspaces)
        self.dim = dims.pop()
        self.Wm = np.stack([h.w for h in halfspaces])
        self.tau = np.array([h.tau for h in halfspaces])

    @property
    def k(self) -> int:
        return len(self.halfspaces)

    def slack(self, X: np.ndarray) -> np.ndarray:
        """max_i (w_i . x - tau_i); 1-Lipschitz, nonpositive exactly on the set."""
        return np.max(_points(X, self.dim) @ self.Wm.T - self.tau, axis=1)

    def evaluate(self, X):
        return _signs(self.slack(X) <= 0)

    def dist_to_negative(self, X, cap=math.inf):
        d = np.maximum(0.0, -self.slack(X))
        return DistanceInterval(d, d)

    def dist_to_positive(self, X, cap=math.inf):
        X = _points(X, self.dim)
        psi = self.slack(X)
        lo = np.maximum(0.0, psi)
        hi = np.where(psi <= 0, 0.0, np.inf)
        todo = (psi > 0) & (psi < cap)
        if todo.any():
            hi[todo] = _polytope_distance(X[todo], self.Wm, self.tau)
            lo[todo] = hi[todo]
        return DistanceInterval(lo, hi)

    def boundary_lower_bound(self, X):
        return np.abs(self.slack(X))

    def far_out_distance(self, X, rho):
        d = self.dist_to_positive(X, cap=rho + 1e-12)
        return np.maximum(0.0, rho - d.lo)

    def far_in_distance(self, X, rho):
        X = _points(X, self.dim)
        return _polytope_distance(X, self.Wm, self.tau - rho)

    def bias_shift_dilate(self, rho: float) -> "Intersection":
        return Intersection([h.shifted(rho) for h in self.halfspaces])

    def bias_shift_erode(self, rho: float) -> "Intersection":
        return Intersection([h.shifted(-rho) for h in self.halfspaces])

    def to_record(self):
        return {"type": "intersection", "halfspaces": [h.to_record() for h in self.halfspaces]}


Polytope = Intersection


class BoolCombo(Concept):
    """``G(g_1(x), ..., g_m(x))`` for halfspace indicators ``g_i``.

    ``table[j]`` is the value of ``G`` on the input pattern whose bit ``i`` is
    set iff ``g_i = +1``.  Distances are exact: the closure of each level set
    is a union of closed arrangement cells, each a polyhedron.
    """

    def __init__(self, halfspaces: Sequence[Halfspace], table: Sequence[int]) -> None:
        m = len(halfspaces)
        if m == 0:
            raise ValueError("need at least one halfspace")
        if len(table) != 2 ** m or any(v not in (-1, 1) for v in table):
            raise ValueError(f"truth table must list 2**{m} values in {{-1, +1}}")
        self.halfspaces = tuple(halfspaces)
        self.table = np.array(table, dtype=float)
        self.dim = halfspaces[0].dim
        self.Wm = np.stack([h.w for h in halfspaces])
        self.tau = np.array([h.tau for h in halfspaces])
        self.m = m

    def pattern(self, X: np.ndarray) -> np.ndarray:
        inside = (_points(X, self.dim) @ self.Wm.T - self.tau) <= 0
        return inside.astype(int) @ (1 << np.arange(self.m))

    def evaluate(self, X):
        return self.table[self.pattern(X)]

    def boundary_lower_bound(self, X):
        return np.min(np.abs(_points(X, self.dim) @ self.Wm.T - self.tau), axis=1)

    def _cell(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        sgn = np.array([1.0 if (j >> i) & 1 else -1.0 for i in range(self.m)])
        return self.Wm * sgn[:, None], self.tau * sgn

    def _dist_to_level(self, X, target: float, cap: float) -> DistanceInterval:
        X = _points(X, self.dim)
        val = self.evaluate(X)
        lb = self.boundary_lower_bound(X)
        lo = np.where(val == target, 0.0, lb)
        hi = np.where(val == target, 0.0, np.inf)
        todo = (val != target) & (lb < cap)
        if todo.any():
            Xt = X[todo]
            best = np.full(Xt.shape[0], np.inf)
            for j in np.flatnonzero(self.table == target):
                Wc, tc = self._cell(j)
                best = np.minimum(best, _polytope_distance(Xt, Wc, tc))
            lo[todo] = best
            hi[todo] = best
        return DistanceInterval(lo, hi)

    def dist_to_positive(self, X, cap=math.inf):
        return self._dist_to_level(X, 1.0, cap)

    def dist_to_negative(self, X, cap=math.inf):
        return self._dist_to_level(X, -1.0, cap)

    @property
    def monotone(self) -> bool:
        for j in range(2 ** self.m):
            for i in range(self.m):
                if not (j >> i) & 1 and self.table[j] > self.table[j | (1 << i)]:
                    return False
        return True

    def to_record(self):
        return {"type": "boolcombo", "halfspaces": [h.to_record() for h in self.halfspaces],
                "table": [int(v) for v in self.table]}


class PTF(Concept):
    """Polynomial threshold function ``sign(q(x))`` with ``sign(0) = +1``."""

    def __init__(self, q: Polynomial, n_rays: int | None = None, seed: int = 0) -> None:
        self.q = q.to_monomial()
        self.dim = q.dim
        if self.q.degree < 1:
            raise ValueError("threshold polynomial must be nonconstant")
        self.n_rays = n_rays or (64 if self.dim == 2 else 32 * self.dim)
        self._seed = seed
        # derivative tensors of every order, flattened over ordered index tuples
        self._derivs: list[list[Polynomial]] = []
        layer = [self.q]
        for _ in range(self.q.degree):
            layer = [p.derivative(a) for p in layer for a in range(self.dim)]
            self._derivs.append(layer)
        if self.dim == 1:
            self._roots = self._real_roots()

    def _real_roots(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.zeros(self.q.degree + 1)
        for (e,), v in self.q.coeffs.items():
            c[e] = v
        r = np.roots(c[::-1])
        real = np.sort(r[np.abs(r.imag) <= 1e-8 * (1 + np.abs(r))].real)
        h = 1e-7 * (1 + np.abs(real))
        left = self.q.evaluate(real[:, None] - h[:, None])
        right = self.q.evaluate(real[:, None] + h[:, None])
        change = (left < 0) | (right < 0)
        return real, real[change]

    def evaluate(self, X):
        return _signs(self.q.evaluate(_points(X, self.dim)) >= 0)

    def gradient_bound(self, X: np.ndarray, r: np.ndarray) -> np.ndarray:
        """Upper bound on |grad q| over the ball B(x, r) via Taylor expansion."""
        G = np.zeros(X.shape[0])
        for j, layer in enumerate(self._derivs):
            fro = np.sqrt(sum(p.evaluate(X) ** 2 for p in layer))
            G += fro * r ** j / math.factorial(j)
        return G

    def boundary_lower_bound(self, X):
        X = _points(X, self.dim)
        r = np.full(X.shape[0], 1.0)
        G = self.gradient_bound(X, r)
        with np.errstate(divide="ignore"):
            return np.minimum(r, np.abs(self.q.evaluate(X)) / G)

    def _dist_1d(self, X, target):
        x = X[:, 0]
        roots = self._roots[0] if target > 0 else self._roots[1]
        val = self.evaluate(X)
        d = np.zeros(x.size)
        off = val != target
        if roots.size == 0:
            d[off] = np.inf
        elif off.any():
            d[off] = np.min(np.abs(x[off, None] - roots[None, :]), axis=1)
        tol = np.where(off & np.isfinite(d), 1e-9 * (1 + np.abs(x)), 0.0)
        return DistanceInterval(np.maximum(0.0, d - tol), d + tol)

    def _directions(self) -> np.ndarray:
        if self.dim == 2:
            a = 2 * np.pi * (np.arange(self.n_rays) + 0.5) / self.n_rays
            return np.stack([np.cos(a), np.sin(a)], axis=1)
        U = np.random.default_rng(self._seed).standard_normal((self.n_rays, self.dim))
        return U / np.linalg.norm(U, axis=1, keepdims=True)

    def _in_target(self, vals: np.ndarray, target: float) -> np.ndarray:
        return vals >= 0 if target > 0 else vals < 0

    def _ray_probe(self, X: np.ndarray, target: float, rmax: float) -> np.ndarray:
        U = self._directions()
        n_steps = 64
        ts = rmax * np.arange(1, n_steps + 1) / n_steps
        best = np.full(X.shape[0], np.inf)
        for u in U:
            prev = np.zeros(X.shape[0])
            found = np.full(X.shape[0], np.nan)
            active = np.ones(X.shape[0], dtype=bool)
            for t in ts:
                idx = np.flatnonzero(active)
                if idx.size == 0:
                    break
                hit = self._in_target(self.q.evaluate(X[idx] + t * u), target)
                hi_idx = idx[hit]
                if hi_idx.size:
                    a, b = prev[hi_idx].copy(), np.full(hi_idx.size, t)
                    for _ in range(48):
                        mid = 0.5 * (a + b)
                        ok = self._in_target(self.q.evaluate(X[hi_idx] + mid[:, None] * u), target)
                        b = np.where(ok, mid, b)
                        a = np.where(ok, a, mid)
                    found[hi_idx] = b
                    active[hi_idx] = False
                prev[idx] = t
            best = np.fmin(best, found)
        return best

    def _dist_nd(self, X, target, cap):
        val = self.evaluate(X)
        off = val != target
        lo = np.zeros(X.shape[0])
        hi = np.zeros(X.shape[0])
        if not off.any():
            return DistanceInterval(lo, hi)
        rmax = cap if math.isfinite(cap) else 8.0
        Xo = X[off]
        qa = np.abs(self.q.evaluate(Xo))
        r0 = np.full(Xo.shape[0], rmax)
        with np.errstate(divide="ignore"):
            lo_o = np.minimum(r0, qa / self.gradient_bound(Xo, r0))
        hi_o = np.full(Xo.shape[0], np.inf)
        near = lo_o < rmax
        if near.any():
            h = self._ray_probe(Xo[near], target, rmax)
            hi_o[near] = h
            fin = np.isfinite(h)
            if fin.any():
                idx = np.flatnonzero(near)[fin]
                with np.errstate(divide="ignore"):
                    lo_o[idx] = np.minimum(h[fin], qa[idx] / self.gradient_bound(Xo[idx], h[fin]))
        lo[off] = lo_o
        hi[off] = hi_o
        return DistanceInterval(lo, hi)

    def dist_to_positive(self, X, cap=math.inf):
        X = _points(X, self.dim)
        return self._dist_1d(X, 1.0) if self.dim == 1 else self._dist_nd(X, 1.0, cap)

    def dist_to_negative(self, X, cap=math.inf):
        X = _points(X, self.dim)
        return self._dist_1d(X, -1.0) if self.dim == 1 else self._dist_nd(X, -1.0, cap)

    def to_record(self):
        return {"type": "ptf", "poly": self.q.to_record()}


class Negation(Concept):
    def __init__(self, base: Concept) -> None:
        self.base = base
        self.dim = base.dim

    def evaluate(self, X):
        return -self.base.evaluate(X)

    def dist_to_positive(self, X, cap=math.inf):
        return self.base.dist_to_negative(X, cap)

    def dist_to_negative(self, X, cap=math.inf):
        return self.base.dist_to_positive(X, cap)

    def boundary_lower_bound(self, X):
        return self.base.boundary_lower_bound(X)

    def negate(self):
        return self.base

    def to_record(self):
        return {"type": "negation", "base": self.base.to_record()}


class Constant(Concept):
    convex = True

    def __init__(self, dim: int, value: int) -> None:
        if value not in (-1, 1):
            raise ValueError("constant concept takes value -1 or +1")
        self.dim = dim
        self.value = float(value)

    def evaluate(self, X):
        return np.full(_points(X, self.dim).shape[0], self.value)

    def _dist(self, X, target):
        n = _points(X, self.dim).shape[0]
        d = np.full(n, 0.0 if self.value == target else np.inf)
        return DistanceInterval(d, d)

    def dist_to_positive(self, X, cap=math.inf):
        return self._dist(X, 1.0)

    def dist_to_negative(self, X, cap=math.inf):
        return self._dist(X, -1.0)

    def boundary_lower_bound(self, X):
        return np.full(_points(X, self.dim).shape[0], np.inf)

    def far_out_distance(self, X, rho):
        n = _points(X, self.dim).shape[0]
        return np.full(n, np.inf if self.value > 0 else 0.0)

    def far_in_distance(self, X, rho):
        n = _points(X, self.dim).shape[0]
        return np.full(n, 0.0 if self.value > 0 else np.inf)

    def to_record(self):
        return {"type": "constant", "dim": self.dim, "value": int(self.value)}


class LiftedConcept(Concept):
    """``x -> F(W x)`` for ``W`` with orthonormal rows; distances pull back exactly."""

    def __init__(self, base: Concept, W: np.ndarray) -> None:
        W = np.asarray(W, dtype=float)
        if W.ndim != 2 or W.shape[0] != base.dim:
            raise ValueError(f"W must have {base.dim} rows")
        if W.shape[1] < W.shape[0]:
            raise ValueError("W must not have more rows than columns")
        if np.max(np.abs(W @ W.T - np.eye(W.shape[0]))) > 1e-9:
            raise ValueError("W must have orthonormal rows")
        self.base = base
        self.W = W
        self.dim = W.shape[1]
        self.convex = base.convex

    def project(self, X):
        return _points(X, self.dim) @ self.W.T

    def evaluate(self, X):
        return self.base.evaluate(self.project(X))

    def dist_to_positive(self, X, cap=math.inf):
        return self.base.dist_to_positive(self.project(X), cap)

    def dist_to_negative(self, X, cap=math.inf):
        return self.base.dist_to_negative(self.project(X), cap)

    def boundary_lower_bound(self, X):
        return self.base.boundary_lower_bound(self.project(X))

    def far_out_distance(self, X, rho):
        return self.base.far_out_distance(self.project(X), rho)

    def far_in_distance(self, X, rho):
        return self.base.far_in_distance(self.project(X), rho)

    def dilate(self, X, rho):
        return self.base.dilate(self.project(X), rho)

    def erode(self, X, rho):
        return self.base.erode(self.project(X), rho)

    def slack(self, X):
        return self.base.slack(self.project(X))

    def to_record(self):
        return {"type": "lifted", "base": self.base.to_record(), "W": self.W.tolist()}


def lift(c: Concept, W: np.ndarray) -> LiftedConcept:
    return LiftedConcept(c, W)


def random_orthonormal_rows(k: int, d: int, rng: np.random.Generator) -> np.ndarray:
    Q, _ = np.linalg.qr(rng.standard_normal((d, k)))
    return Q.T.copy()


def _halfspaces(recs) -> list[Halfspace]:
    return [Halfspace(np.asarray(r["w"], dtype=float), float(r["tau"])) for r in recs]


def parse_table(table) -> list[int]:
    """Truth table from a list of +-1 values or a bit string ("0110"; '1' means +1)."""
    if isinstance(table, str):
        if set(table) - {"0", "1"}:
            raise ValueError(f"truth table bit string may only contain 0 and 1, got {table!r}")
        return [1 if ch == "1" else -1 for ch in table]
    return [int(v) for v in table]


def concept_from_record(rec: Mapping) -> Concept:
    """Build a concept from its JSON-style record."""
    kind = rec.get("type")
    if kind == "halfspace":
        return SingleHalfspace(Halfspace(np.asarray(rec["w"], dtype=float), float(rec["tau"])))
    if kind in ("intersection", "polytope"):
        return Intersection(_halfspaces(rec["halfspaces"]))
    if kind == "boolcombo":
        return BoolCombo(_halfspaces(rec["halfspaces"]), parse_table(rec["table"]))
    if kind == "ptf":
        return PTF(Polynomial.from_record(rec["poly"]))
    if kind == "constant":
        return Constant(int(rec["dim"]), int(rec["value"]))
    if kind == "negation":
        return Negation(concept_from_record(rec["base"]))
    if kind == "lifted":
        return LiftedConcept(concept_from_record(rec["base"]), np.asarray(rec["W"], dtype=float))
    raise ValueError(f"unknown concept type {kind!r}")


@dataclass(frozen=True)
class ConceptSummary:
    kind: str
    dim: int
    convex: bool
    extra: dict = field(default_factory=dict)


def describe(c: Concept) -> ConceptSummary:
    rec = c.to_record()
    return ConceptSummary(rec["type"], c.dim, bool(c.convex))
