"""Distributions, seeded Monte Carlo and the smoothness estimators.

Every Monte Carlo estimate draws its samples in fixed-size chunks, each
chunk from its own child of ``SeedSequence(seed)``.  Results are reduced in
chunk order, so they are identical for any number of worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np
from numpy.polynomial import hermite_e
from scipy import special, stats

from .concepts import BoolCombo, Concept, Halfspace, SingleHalfspace

CHUNK = 1 << 16
Z99 = 2.5758293035489004


@dataclass(frozen=True)
class Estimate:
    value: float
    std_error: float
    n: int
    seed: int | None = None
    exact: float | None = None

    def upper(self, z: float = Z99) -> float:
        return self.value + z * self.std_error

    def lower(self, z: float = Z99) -> float:
        return self.value - z * self.std_error

    @property
    def ci99(self) -> tuple[float, float]:
        return self.lower(), self.upper()


@dataclass(frozen=True)
class DistributionSpec:
    """Standard Gaussian or product generalized Gaussian on R^dim.

    The generalized Gaussian has per-coordinate density proportional to
    ``exp(-|t|**(1 + gamma))`` with ``0 < gamma <= 1``; ``gamma = 1`` with the
    ``gaussian`` family is N(0, I).  ``radial_dim`` > ``dim`` marks a
    projection whose radial tail and moments are bounded by those of the
    ``radial_dim``-dimensional parent.
    """

    dim: int
    family: str = "gaussian"
    gamma: float = 1.0
    radial_dim: int | None = None

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.family not in ("gaussian", "gengauss"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == "gaussian" and self.gamma != 1.0:
            raise ValueError("the gaussian family has gamma = 1")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.radial_dim is not None and self.radial_dim < self.dim:
            raise ValueError("radial_dim must be at least dim")

    @property
    def power(self) -> float:
        return 1.0 + self.gamma

    @property
    def rdim(self) -> int:
        return self.radial_dim or self.dim

    @property
    def alpha(self) -> float:
        return 2.0

    @property
    def beta(self) -> float:
        """Coordinate-direction tail rate: P(|x_1| >= t) <= alpha exp(-beta t^(1+gamma))."""
        if self.family == "gaussian":
            return 0.5
        t = np.linspace(0.05, 8.0, 400)
        logp = stats.gennorm.logsf(t, self.power) + math.log(2.0)
        return float(np.min((math.log(self.alpha) - logp) / t ** self.power))

    def projection(self, k: int) -> "DistributionSpec":
        """Law of ``W x`` for ``W`` with ``k`` orthonormal rows."""
        if k == self.dim:
            return self
        if self.family == "gaussian":
            return DistributionSpec(k)
        return DistributionSpec(k, self.family, self.gamma, radial_dim=self.rdim)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.radial_dim not in (None, self.dim):
            raise ValueError("cannot sample a bounded projection directly")
        if self.family == "gaussian":
            return rng.standard_normal((n, self.dim))
        u = rng.random((n, self.dim))
        return stats.gennorm.ppf(u, self.power)

    def coordinate_abs_moment(self, q: float) -> float:
        if self.family == "gaussian":
            return 2 ** (q / 2) * math.gamma((q + 1) / 2) / math.sqrt(math.pi)
        p = self.power
        return math.gamma((q + 1) / p) / math.gamma(1 / p)

    def radial_log_moment(self, q: float) -> float:
        """log E ||x||^q (exact for Gaussian, an upper bound otherwise)."""
        d = self.rdim
        if q == 0:
            return 0.0
        if self.family == "gaussian":
            return q / 2 * math.log(2.0) + special.gammaln((d + q) / 2) - special.gammaln(d / 2)
        p = self.power
        if q >= 2:
            # power mean: ||x||^q <= d^(q/2 - 1) sum |x_i|^q
            return q / 2 * math.log(d) + special.gammaln((q + 1) / p) - special.gammaln(1 / p)
        m2 = d * math.gamma(3 / p) / math.gamma(1 / p)
        return q / 2 * math.log(m2)

    def radial_log_sf(self, r: float) -> float:
        """log P(||x|| > r) (exact for Gaussian, a union bound otherwise)."""
        d = self.rdim
        if r <= 0:
            return 0.0
        if self.family == "gaussian":
            return float(stats.chi2.logsf(r * r, d))
        val = math.log(2 * d) + float(stats.gennorm.logsf(r / math.sqrt(d), self.power))
        return min(0.0, val)

    def to_record(self) -> dict:
        return {"family": self.family, "dim": self.dim, "gamma": self.gamma}


def gaussian(dim: int) -> DistributionSpec:
    return DistributionSpec(dim)


def sample_chunks(dist: DistributionSpec, n: int, seed: int, chunk: int = CHUNK) -> list[tuple[int, np.random.SeedSequence]]:
    """Deterministic chunk plan: (size, seed sequence) pairs."""
    count = max(1, -(-n // chunk))
    children = np.random.SeedSequence(seed).spawn(count)
    sizes = [chunk] * (count - 1) + [n - chunk * (count - 1)]
    return list(zip(sizes, children))


def map_chunks(fn: Callable[[np.ndarray], np.ndarray], dist: DistributionSpec, n: int, seed: int,
               threads: int = 1, chunk: int = CHUNK) -> Iterator[np.ndarray]:
    """Yield ``fn(samples)`` chunk by chunk in a fixed order."""
    plan = sample_chunks(dist, n, seed, chunk)

    def run(item):
        size, ss = item
        return fn(dist.sample(size, np.random.default_rng(ss)))

    if threads <= 1:
        for item in plan:
            yield run(item)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            yield from pool.map(run, plan)


def mc_moments(fn: Callable[[np.ndarray], np.ndarray], dist: DistributionSpec, n: int, seed: int,
               threads: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Means and standard errors of the columns of ``fn(x)``.

    Chunks are merged with the pairwise (Chan) update, so constant columns
    get exactly zero variance.
    """
    count, mean, m2 = 0, None, None
    for vals in map_chunks(fn, dist, n, seed, threads):
        v = np.asarray(vals, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        nb = v.shape[0]
        mb = v.mean(axis=0)
        m2b = ((v - mb) ** 2).sum(axis=0)
        if mean is None:
            count, mean, m2 = nb, mb, m2b
            continue
        tot = count + nb
        delta = mb - mean
        mean = mean + delta * (nb / tot)
        m2 = m2 + m2b + delta * delta * (count * nb / tot)
        count = tot
    var = m2 / max(count - 1, 1)
    return mean, np.sqrt(var / count)


def gaussian_quadrature(dim: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor probabilists' Gauss-Hermite rule with ``order`` nodes per axis."""
    x, w = hermite_e.hermegauss(order)
    w = w / math.sqrt(2 * math.pi)
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    wgrid = np.ones([order] * dim)
    for j in range(dim):
        shape = [1] * dim
        shape[j] = order
        wgrid = wgrid * w.reshape(shape)
    return np.stack([g.ravel() for g in grids], axis=1), wgrid.ravel()


def ls_norm(g: Callable[[np.ndarray], np.ndarray], dist: DistributionSpec, s: float, *,
            method: str = "mc", n: int = 10 ** 6, seed: int = 0, order: int | None = None,
            threads: int = 1) -> Estimate:
    """``(E|g|^s)^(1/s)`` by Monte Carlo or tensor Gauss-Hermite quadrature."""
    if s < 1:
        raise ValueError("s must be at least 1")
    if method == "quadrature":
        if dist.family != "gaussian" or dist.dim > 3:
            raise ValueError("quadrature is available for Gaussian measures with dim <= 3")
        if order is None:
            raise ValueError("quadrature needs an order")
        X, w = gaussian_quadrature(dist.dim, order)
        m = float(np.dot(w, np.abs(g(X)) ** s))
        return Estimate(m ** (1 / s), 0.0, X.shape[0], None, exact=m ** (1 / s))
    if method != "mc":
        raise ValueError(f"unknown method {method!r}")
    mean, se = mc_moments(lambda X: np.abs(g(X)) ** s, dist, n, seed, threads)
    m, e = float(mean[0]), float(se[0])
    if m <= 0:
        return Estimate(0.0, 0.0, n, seed)
    # delta method for the s-th root
    return Estimate(m ** (1 / s), e * m ** (1 / s - 1) / s, n, seed)


def boundary_smoothness_profile(c: Concept, dist: DistributionSpec, rhos: Sequence[float], *,
                                n: int = 10 ** 6, seed: int = 0, threads: int = 1) -> list[tuple[float, Estimate]]:
    """sigmaHat(rho) = P[dilate != erode] / rho, one shared sample for all rho."""
    rhos = [float(r) for r in rhos]
    if any(r <= 0 for r in rhos):
        raise ValueError("rho must be positive")

    def fn(X):
        return np.stack([(c.dilate(X, r) != c.erode(X, r)).astype(float) for r in rhos], axis=1)

    mean, se = mc_moments(fn, dist, n, seed, threads)
    return [(r, Estimate(float(mean[i] / r), float(se[i] / r), n, seed)) for i, r in enumerate(rhos)]


def estimate_sigma(c: Concept, dist: DistributionSpec, rhos: Sequence[float] = (0.01, 0.05, 0.1), *,
                   n: int = 200_000, seed: int = 0, threads: int = 1) -> float:
    """Statistical smoothness bound ``max(1, max_rho sigmaHat + 3 se)``."""
    prof = boundary_smoothness_profile(c, dist, rhos, n=n, seed=seed, threads=threads)
    return max(1.0, max(e.value + 3 * e.std_error for _, e in prof))


def gsa_estimate_intersection(c, rhos: Sequence[float], *, n: int = 10 ** 6, seed: int = 0,
                              threads: int = 1) -> list[tuple[float, Estimate]]:
    """P[|slack(x)| <= rho] / (2 rho) under N(0, I)."""
    rhos = [float(r) for r in rhos]
    if any(r <= 0 for r in rhos):
        raise ValueError("rho must be positive")
    dist = gaussian(c.dim)

    def fn(X):
        psi = np.abs(c.slack(X))
        return np.stack([(psi <= r).astype(float) for r in rhos], axis=1)

    mean, se = mc_moments(fn, dist, n, seed, threads)
    return [(r, Estimate(float(mean[i] / (2 * r)), float(se[i] / (2 * r)), n, seed)) for i, r in enumerate(rhos)]


def nazarov_bound(k: int) -> float:
    return math.sqrt(2 * math.log(k)) + 2 if k > 1 else 2.0


@dataclass(frozen=True)
class CompositionReport:
    rho: float
    composed: Estimate
    parts: tuple[Estimate, ...]
    rhs: float
    rhs_se: float
    holds: bool
    pointwise_exceptions: int


def _as_halfspace(g) -> Halfspace:
    if isinstance(g, Halfspace):
        return g
    if isinstance(g, SingleHalfspace):
        return g.h
    raise TypeError("composition check takes halfspaces")


def composition_smoothness_check(gs: Sequence, table: Sequence[int], dist: DistributionSpec, rho: float, *,
                                 n: int = 10 ** 6, seed: int = 0, threads: int = 1) -> CompositionReport:
    """Compare P[F near boundary] with the sum of the parts' boundary masses.

    Also counts samples where F's dilation and erosion differ while no part's
    do; that event is impossible, so the count must be zero.
    """
    hs = [_as_halfspace(g) for g in gs]
    F = BoolCombo(hs, table)
    parts = [SingleHalfspace(h) for h in hs]

    def fn(X):
        cols = [(F.dilate(X, rho) != F.erode(X, rho))]
        cols += [(g.dilate(X, rho) != g.erode(X, rho)) for g in parts]
        any_part = np.any(np.stack(cols[1:]), axis=0)
        cols.append(cols[0] & ~any_part)
        return np.stack(cols, axis=1).astype(float)

    mean, se = mc_moments(fn, dist, n, seed, threads)
    m = len(parts)
    comp = Estimate(float(mean[0] / rho), float(se[0] / rho), n, seed)
    pe = [Estimate(float(mean[i + 1] / rho), float(se[i + 1] / rho), n, seed) for i in range(m)]
    rhs = sum(p.value for p in pe)
    rhs_se = math.sqrt(sum(p.std_error ** 2 for p in pe) + comp.std_error ** 2)
    exceptions = int(round(mean[m + 1] * n))
    holds = comp.value <= rhs + 3 * rhs_se and exceptions == 0
    return CompositionReport(rho, comp, tuple(pe), rhs, rhs_se, holds, exceptions)


@dataclass(frozen=True)
class AnticoncentrationReport:
    rows: tuple[tuple[int, float, float, Estimate], ...]
    max_ratio: float
    max_ratio_upper: float
    density_bound: float | None = None


def anticoncentration_check(dist: DistributionSpec, *, n_directions: int = 8,
                            radii: Sequence[float] = (0.01, 0.05, 0.1), thresholds: Sequence[float] = (0.0, 0.5, 1.5),
                            n: int = 200_000, seed: int = 0, threads: int = 1) -> AnticoncentrationReport:
    """Empirical ``P[|w.x - t| <= r] / r`` over random unit directions."""
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    U = rng.standard_normal((n_directions, dist.dim))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    combos = [(i, t, r) for i in range(n_directions) for t in thresholds for r in radii]

    def fn(X):
        proj = X @ U.T
        return np.stack([(np.abs(proj[:, i] - t) <= r).astype(float) for i, t, r in combos], axis=1)

    mean, se = mc_moments(fn, dist, n, seed, threads)
    rows = tuple((i, t, r, Estimate(float(mean[j] / r), float(se[j] / r), n, seed))
                 for j, (i, t, r) in enumerate(combos))
    ratios = [e.value for *_, e in rows]
    uppers = [e.value + 3 * e.std_error for *_, e in rows]
    bound = 2 / math.sqrt(2 * math.pi) if dist.family == "gaussian" else None
    return AnticoncentrationReport(rows, max(ratios), max(uppers), bound)


def tail_mass(dist: DistributionSpec, radius: float, *, n: int = 10 ** 6, seed: int = 0,
              threads: int = 1) -> Estimate:
    """P[||x|| > radius]; carries the closed form for Gaussian measures."""
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    if radius == 0:
        return Estimate(1.0, 0.0, 0, seed, exact=1.0)
    exact = float(stats.chi2.sf(radius ** 2, dist.dim)) if dist.family == "gaussian" else None
    mean, se = mc_moments(lambda X: (np.linalg.norm(X, axis=1) > radius).astype(float), dist, n, seed, threads)
    return Estimate(float(mean[0]), float(se[0]), n, seed, exact=exact)


@dataclass
class RunningMoments:
    """Streaming mean and variance for externally generated values."""

    n: int = 0
    s1: float = 0.0
    s2: float = 0.0
    extra: dict = field(default_factory=dict)

    def add(self, v: np.ndarray) -> None:
        v = np.asarray(v, dtype=float)
        self.n += v.size
        self.s1 += float(v.sum())
        self.s2 += float((v * v).sum())

    def estimate(self, seed: int | None = None) -> Estimate:
        if self.n == 0:
            return Estimate(math.nan, math.nan, 0, seed)
        mean = self.s1 / self.n
        var = max(self.s2 / self.n - mean * mean, 0.0) * self.n / max(self.n - 1, 1)
        return Estimate(mean, math.sqrt(var / self.n), self.n, seed)
