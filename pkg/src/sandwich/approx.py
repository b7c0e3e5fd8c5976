"""Polynomial sandwiches: uniform fit, tail dominator, assembly, certification.

``p_up = p1_up + p2 + eps`` and ``p_down = p1_down - p2 - eps`` where the
``p1`` parts are tensor-Chebyshev fits of the Lipschitz sandwich on the box
``[-R, R]^k`` and ``p2 = eps (2||x||/R)^(2 l2)`` dominates them outside the
radius-``R`` ball.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import fft, special

from .concepts import (BoolCombo, Concept, Constant, Intersection, LiftedConcept, Negation, PTF,
                       SingleHalfspace)
from .lipschitz import LipschitzSandwich, build_lipschitz_sandwich
from .measures import (DistributionSpec, Estimate, gaussian_quadrature, map_chunks,
                       sample_chunks, Z99)
from .polycore import Polynomial, PolySum, RadialPower

log = logging.getLogger(__name__)

DECLARED_GAP_FACTOR = 7.0
TAIL_RULES = ("monomial", "chebyshev")


class FitFailure(RuntimeError):
    """Raised when no fit passes below the degree cap or grid budget."""

    def __init__(self, message: str, best: "UniformApprox | None" = None, attempts: list | None = None,
                 partial: "SandwichPair | None" = None):
        super().__init__(message)
        self.best = best
        self.attempts = attempts or []
        # last assembled pair whose tail condition failed; pointwise valid, gap uncertified
        self.partial = partial


@dataclass(frozen=True)
class UniformApprox:
    p1: Polynomial
    R: float
    ell1: int
    sup_err_grid: float
    grid_spacing: float
    grid_points: int
    node_residual: float
    lip_poly: float
    slack: float

    @property
    def certified_err(self) -> float:
        """Ball-wide sup error: grid error plus Lipschitz interpolation slack."""
        return self.sup_err_grid + self.slack

    def summary(self) -> dict:
        return {"R": self.R, "ell1": self.ell1, "sup_err_grid": self.sup_err_grid,
                "grid_spacing": self.grid_spacing, "grid_points": self.grid_points,
                "node_residual": self.node_residual, "lip_poly": self.lip_poly,
                "slack": self.slack, "certified_err": self.certified_err}


# ---------------------------------------------------------------------------
# tensor Chebyshev machinery

def cheb_points(m: int) -> np.ndarray:
    """First-kind Chebyshev points cos(pi (j + 1/2) / m), descending."""
    return np.cos(np.pi * (np.arange(m) + 0.5) / m)


def _synthesize(a: np.ndarray, M: int, axes: Sequence[int]) -> np.ndarray:
    """Values of a Chebyshev tensor on the M-point first-kind grid along ``axes``."""
    for ax in axes:
        n1 = a.shape[ax]
        scale = np.full(n1, 0.5)
        scale[0] = 1.0
        shape = [1] * a.ndim
        shape[ax] = n1
        b = a * scale.reshape(shape)
        if M > n1:
            pad = [(0, 0)] * a.ndim
            pad[ax] = (0, M - n1)
            b = np.pad(b, pad)
        elif M < n1:
            raise ValueError("grid smaller than coefficient count")
        a = fft.dct(b, type=3, axis=ax)
    return a


def _grid_values(g: Callable, x: np.ndarray, k: int, block: int = 1 << 20) -> np.ndarray:
    """g on the tensor grid x^k, evaluated slab by slab."""
    m = x.size
    if k == 1:
        out = np.empty(m)
        for lo in range(0, m, block):
            out[lo:lo + block] = g(x[lo:lo + block, None])
        return out
    out = np.empty((m,) * k)
    rest = np.stack([c.ravel() for c in np.meshgrid(*([x] * (k - 1)), indexing="ij")], axis=1)
    rows = max(1, block // rest.shape[0])
    for lo in range(0, m, rows):
        xs = x[lo:lo + rows]
        pts = np.concatenate([np.repeat(xs, rest.shape[0])[:, None], np.tile(rest, (xs.size, 1))], axis=1)
        out[lo:lo + xs.size] = g(pts).reshape((xs.size,) + (m,) * (k - 1))
    return out


def _total_degree_mask(n: int, k: int) -> np.ndarray:
    grids = np.meshgrid(*([np.arange(n + 1)] * k), indexing="ij")
    return sum(grids) <= n


def chebyshev_ls_fit(G: np.ndarray, n: int) -> np.ndarray:
    """Discrete least-squares Chebyshev coefficients of total degree <= n.

    ``G`` holds samples on the tensor grid of ``m > n`` first-kind points; by
    discrete orthogonality truncating the interpolant is the LS solution."""
    k = G.ndim
    m = G.shape[0]
    a = fft.dctn(G, type=2, axes=list(range(k))) / m ** k
    a = a[(slice(0, n + 1),) * k].copy()
    for ax in range(k):
        idx = [slice(None)] * k
        idx[ax] = 0
        a[tuple(idx)] *= 0.5
    if k > 1:
        a[~_total_degree_mask(n, k)] = 0.0
    return a


def _ball_mask(x: np.ndarray, k: int, R: float) -> np.ndarray:
    if k == 1:
        return np.abs(x) <= R
    grids = np.meshgrid(*([x] * k), indexing="ij")
    return sum(g * g for g in grids) <= R * R


def _prune(a: np.ndarray) -> np.ndarray:
    tot = np.abs(a).sum()
    if tot == 0:
        return a[(slice(0, 1),) * a.ndim]
    a = np.where(np.abs(a) < 1e-15 * tot, 0.0, a)
    nz = np.argwhere(a != 0)
    top = nz.max(axis=0) + 1
    return a[tuple(slice(0, t) for t in top)]


@dataclass(frozen=True)
class _GridCert:
    err: float
    spacing: float
    points: int
    lip_poly: float


def _certify_on_grid(a: np.ndarray, g: Callable, R: float, h: float, budget: float) -> _GridCert:
    """Max |p - g| on a Chebyshev grid of spacing <= h inside the ball."""
    k = a.ndim
    n1 = max(a.shape)
    M = max(int(math.ceil(math.pi * R / h)) + 1, n1)
    ball_frac = {1: 1.0, 2: math.pi / 4, 3: math.pi / 6}.get(k, 1.0)
    if ball_frac * float(M) ** k > budget:
        raise FitFailure(f"certification grid of {M}^{k} points exceeds budget {budget:.3g}")
    x = R * cheb_points(M)
    dx = np.abs(np.diff(x))
    spacing = float(dx.max())
    A0 = _synthesize(a, M, [0])
    if k == 1:
        gv = _grid_values(g, x, 1)
        err = float(np.max(np.abs(A0 - gv)))
        lip = float(np.max(np.abs(np.diff(A0)) / dx))
        return _GridCert(err, spacing, M, lip)
    rest = np.stack([c.ravel() for c in np.meshgrid(*([x] * (k - 1)), indexing="ij")], axis=1)
    rest_r2 = np.sum(rest ** 2, axis=1)
    rows = max(1, int(4e6 // M ** (k - 1)))
    err = 0.0
    lip = 0.0
    count = 0
    prev = None
    for lo in range(0, M, rows):
        blk = _synthesize(A0[lo:lo + rows], M, list(range(1, k)))
        b = blk.shape[0]
        flat = blk.reshape(b, -1)
        xs = x[lo:lo + b]
        inball = xs[:, None] ** 2 + rest_r2[None, :] <= R * R
        if inball.any():
            ii, jj = np.nonzero(inball)
            pts = np.concatenate([xs[ii][:, None], rest[jj]], axis=1)
            err = max(err, float(np.max(np.abs(flat[ii, jj] - g(pts)))))
            count += ii.size
        # slopes along the trailing axes inside the slab
        for ax in range(1, k):
            d = np.abs(np.diff(blk, axis=ax))
            shape = [1] * k
            shape[ax] = M - 1
            lip = max(lip, float(np.max(d / dx.reshape(shape))))
        if prev is not None:
            lip = max(lip, float(np.max(np.abs(blk[0] - prev) / dx[lo - 1])))
        if b > 1:
            shape = [b - 1] + [1] * (k - 1)
            lip = max(lip, float(np.max(np.abs(np.diff(blk, axis=0)) / dx[lo:lo + b - 1].reshape(shape))))
        prev = blk[-1]
    return _GridCert(err, spacing, count, lip)


def fit_uniform_approx(g: Callable[[np.ndarray], np.ndarray], L: float, k: int, R: float,
                       eps_target: float, degree_cap: int, *, n_start: int | None = None,
                       guess_factor: float = 0.1, growth: float = 1.15, grid_budget: float = 2e8,
                       lip_safety: float = 1.1, certify: bool = True) -> UniformApprox:
    """Smallest degree on a geometric ladder whose certified error is <= eps_target.

    A fit passes when grid error plus the Lipschitz slack
    ``(L + Lp) * spacing * sqrt(k) / 2`` is at most ``eps_target``, which
    bounds the error everywhere in the ball.

    With ``certify=False`` the fine grid is skipped and a fit is accepted on
    the necessary condition alone; its ``certified_err`` is then nan.  This
    exists for comparisons that only need a plausible pair, never for
    certified output.
    """
    if not 1 <= k <= 3:
        raise ValueError("fitting supports k <= 3")
    if R < 1 or L <= 0 or eps_target <= 0:
        raise ValueError("need R >= 1, L > 0 and eps_target > 0")
    h = eps_target / (4.0 * L)
    n = n_start if n_start is not None else int(math.ceil(guess_factor * L * R * k / eps_target))
    n = max(0, min(n, degree_cap))
    best: UniformApprox | None = None
    attempts = []
    while True:
        t0 = time.perf_counter()
        m = 2 * (n + 1)
        if float(m) ** k > grid_budget:
            raise FitFailure(f"fitting grid of {m}^{k} points exceeds budget {grid_budget:.3g}", best, attempts)
        x = R * cheb_points(m)
        G = _grid_values(g, x, k)
        a = chebyshev_ls_fit(G, n)
        recon = _synthesize(a, m, list(range(k)))
        mask = _ball_mask(x, k, R)
        resid = float(np.max(np.abs(recon - G)[mask]))
        del recon, G
        # necessary condition before paying for the fine grid, assuming Lp ~ L
        pre_slack = L * h * math.sqrt(k)
        if resid + pre_slack <= eps_target and not certify:
            a = _prune(a)
            deg = int(np.argwhere(a != 0).sum(axis=1).max()) if np.any(a != 0) else 0
            p1 = Polynomial(k, dense=a, degree=deg, basis="chebyshev", box=R)
            return UniformApprox(p1, R, deg, resid, float(np.max(np.abs(np.diff(x)))), m ** k, resid,
                                 math.nan, math.nan)
        if resid + pre_slack <= eps_target:
            a = _prune(a)
            cert = _certify_on_grid(a, g, R, h, grid_budget)
            lp = lip_safety * math.sqrt(k) * cert.lip_poly
            slack = (L + lp) * cert.spacing * math.sqrt(k) / 2.0
            deg = int(np.argwhere(a != 0).sum(axis=1).max()) if np.any(a != 0) else 0
            p1 = Polynomial(k, dense=a, degree=deg, basis="chebyshev", box=R)
            fit = UniformApprox(p1, R, deg, cert.err, cert.spacing, cert.points, resid, lp, slack)
            attempts.append((n, resid, fit.certified_err))
            log.debug("R=%g n=%d resid=%.3g cert=%.3g (%.1fs)", R, n, resid, fit.certified_err,
                      time.perf_counter() - t0)
            if best is None or fit.certified_err < best.certified_err:
                best = fit
            if fit.certified_err <= eps_target:
                return fit
        else:
            attempts.append((n, resid, math.nan))
            log.debug("R=%g n=%d resid=%.3g (%.1fs)", R, n, resid, time.perf_counter() - t0)
        if n >= degree_cap:
            err = best.certified_err if best else resid
            raise FitFailure(f"degree cap {degree_cap} reached at R={R:g} (best error {err:.4g} > {eps_target:.4g})",
                             best, attempts)
        n = min(degree_cap, max(n + 1, int(math.ceil(n * growth))))


# ---------------------------------------------------------------------------
# tail dominator

@dataclass(frozen=True)
class TailDominator:
    p2: RadialPower
    ell2: int
    rule: str
    log_C: float
    ell1: int

    @property
    def margin_log(self) -> float:
        """log of (lhs / rhs) of the defining growth condition; >= 0 when it holds."""
        return _tail_lhs(self.p2.scale, self.ell2, self.ell1, self.rule, self.p2.R) - \
            _tail_rhs(self.log_C, self.ell1, self.rule, self.p2.R)


def _tail_lhs(eps, ell2, ell1, rule, R):
    if rule == "monomial":
        return math.log(eps) + 2 * ell2 * math.log(2.0)
    return math.log(eps) + (2 * ell2 - ell1) * math.log(2.0)


def _tail_rhs(log_C, ell1, rule, R):
    rhs = float(np.logaddexp(0.0, log_C))
    if rule == "monomial":
        rhs += ell1 * math.log(R)
    return rhs


def tail_dominator(eps: float, R: float, p1: Polynomial, rule: str = "monomial") -> TailDominator:
    """Smallest ``l2`` with ``2 l2 >= l1`` and the rule's growth condition.

    ``monomial``: ``eps 2^(2 l2) >= (1 + coefNorm(p1)) R^l1``, using
    ``|p1(x)| <= coefNorm ||x||^l1``.

    ``chebyshev``: ``eps 2^(2 l2 - l1) >= 1 + sum |c_I|`` for a Chebyshev
    ``p1`` on the box ``[-R, R]^k``, using ``|T_a(t)| <= (2|t|)^a`` for
    ``|t| >= 1``.  Both give ``p2 >= 1 + |p1|`` whenever ``||x|| >= R``.
    """
    if eps <= 0 or R < 1:
        raise ValueError("need eps > 0 and R >= 1")
    if rule not in TAIL_RULES:
        raise ValueError(f"unknown rule {rule!r}")
    ell1 = p1.degree
    if rule == "chebyshev":
        if p1.basis != "chebyshev" or abs(p1.box - R) > 1e-12 * R:
            raise ValueError("chebyshev rule needs a Chebyshev p1 on the box [-R, R]")
        C = p1.abs_coef_sum()
        log_C = math.log(C) if C > 0 else -math.inf
    else:
        log_C = _log_coef_norm(p1)
    rhs = _tail_rhs(log_C, ell1, rule, R)
    ell2 = (ell1 + 1) // 2
    base = _tail_lhs(eps, ell2, ell1, rule, R)
    if base < rhs:
        ell2 += int(math.ceil((rhs - base) / (2 * math.log(2.0)) - 1e-12))
    while _tail_lhs(eps, ell2, ell1, rule, R) < rhs:
        ell2 += 1
    while ell2 > 0 and 2 * (ell2 - 1) >= ell1 and _tail_lhs(eps, ell2 - 1, ell1, rule, R) >= rhs:
        ell2 -= 1
    return TailDominator(RadialPower(p1.dim, eps, R, ell2), ell2, rule, log_C, ell1)


def _log_coef_norm(p: Polynomial) -> float:
    """log coefNorm(toMonomial(p)): exact conversion when it is numerically
    meaningful, otherwise the certified bound."""
    if p.basis == "monomial":
        c = p.coef_norm()
        return math.log(c) if c > 0 else -math.inf
    bound = p.log_coef_norm_bound()
    if p.degree <= 40:
        exact = p.coef_norm()
        if exact > 0 and math.log(exact) <= bound + 1e-9:
            return math.log(exact)
    return bound


# ---------------------------------------------------------------------------
# sandwich pair

@dataclass(frozen=True)
class AssemblyConfig:
    R: float | None = None
    R_max: float = 4096.0
    degree_cap: int = 200_000
    guess_factor: float = 0.1
    growth: float = 1.15
    tail_rule: str = "chebyshev"
    variant: str = "two_distance"
    grid_budget: float = 2e8
    certify_fit: bool = True


@dataclass(frozen=True)
class SandwichPair:
    p1_up: Polynomial
    p1_down: Polynomial
    p2: RadialPower
    eps: float
    s: float
    sigma: float
    rho: float
    L: float
    R: float
    ell1: int
    ell2: int
    log_B: float
    B_kind: str
    tail_rule: str
    W: np.ndarray | None = None
    fit_up: dict = field(default_factory=dict)
    fit_down: dict = field(default_factory=dict)
    tail: dict = field(default_factory=dict)
    attempts: tuple = ()
    report: "CertificationReport | None" = None
    variant: str = "two_distance"

    @property
    def p_up(self) -> PolySum:
        return PolySum((self.p1_up, self.p2), self.eps, self.W)

    @property
    def p_down(self) -> PolySum:
        neg = RadialPower(self.p2.dim, -self.p2.scale, self.p2.R, self.p2.half_degree)
        return PolySum((self.p1_down, neg), -self.eps, self.W)

    @property
    def degree(self) -> int:
        return max(self.ell1, 2 * self.ell2)

    @property
    def base_dim(self) -> int:
        return self.p1_up.dim

    @property
    def dim(self) -> int:
        return self.base_dim if self.W is None else self.W.shape[1]

    @property
    def B(self) -> float:
        with np.errstate(over="ignore"):
            return float(np.exp(self.log_B))

    @property
    def declared_gap(self) -> float:
        return DECLARED_GAP_FACTOR * self.eps

    def project(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return X if self.W is None else X @ self.W.T

    def to_record(self) -> dict:
        return {
            "p1_up": self.p1_up.to_record(),
            "p1_down": self.p1_down.to_record(),
            "p2": self.p2.to_record(),
            "eps": self.eps, "s": self.s, "sigma": self.sigma, "rho": self.rho, "L": self.L,
            "R": self.R, "ell1": self.ell1, "ell2": self.ell2, "degree": self.degree,
            "log_B": self.log_B, "B_kind": self.B_kind, "tail_rule": self.tail_rule,
            "W": None if self.W is None else self.W.tolist(),
            "fit_up": self.fit_up, "fit_down": self.fit_down, "tail": self.tail,
            "report": None if self.report is None else self.report.to_record(),
            "variant": self.variant,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "SandwichPair":
        p2 = rec["p2"]
        return cls(
            Polynomial.from_record(rec["p1_up"]), Polynomial.from_record(rec["p1_down"]),
            RadialPower(int(p2["dim"]), float(p2["scale"]), float(p2["R"]), int(p2["half_degree"])),
            float(rec["eps"]), float(rec["s"]), float(rec["sigma"]), float(rec["rho"]), float(rec["L"]),
            float(rec["R"]), int(rec["ell1"]), int(rec["ell2"]), float(rec["log_B"]), rec["B_kind"],
            rec["tail_rule"], None if rec.get("W") is None else np.asarray(rec["W"], dtype=float),
            rec.get("fit_up", {}), rec.get("fit_down", {}), rec.get("tail", {}),
            variant=rec.get("variant", "two_distance"),
        )


def _pair_log_B(p_up: PolySum, p_down: PolySum) -> tuple[float, str]:
    """log(coefNorm(pUp) + coefNorm(pDown)); exact expansion when small."""
    d = p_up.dim
    deg = p_up.degree
    if math.comb(deg + d, d) <= 20_000 and deg <= 40:
        try:
            cu = p_up.to_monomial().coef_norm()
            cd = p_down.to_monomial().coef_norm()
            bound = float(np.logaddexp(p_up.log_coef_norm_bound(), p_down.log_coef_norm_bound()))
            tot = cu + cd
            if tot > 0 and math.isfinite(tot) and math.log(tot) <= bound + 1e-9:
                return math.log(tot), "exact"
        except (OverflowError, ValueError):
            pass
    return float(np.logaddexp(p_up.log_coef_norm_bound(), p_down.log_coef_norm_bound())), "bound"


def tail_condition(dist: DistributionSpec, R: float, eps: float, s: float, p2: RadialPower) -> dict:
    """P(||x|| > R/2)^(1/2s) * (2 + 2 eps + 2 ||p2||_{2s}) <= eps, in logs.

    Everywhere ``|p1| <= 1 + eps + p2`` (fit inside the ball, dominator
    outside), so ``|p_up - f_up| <= 2 + 2 eps + 2 p2``."""
    q = 2 * s * p2.degree
    log_p2_norm = math.log(p2.scale) + p2.degree * math.log(2.0 / R) + dist.radial_log_moment(q) / (2 * s)
    log_gap = float(np.logaddexp(math.log(2 + 2 * eps), math.log(2.0) + log_p2_norm))
    log_tail = dist.radial_log_sf(R / 2.0)
    lhs = log_tail / (2 * s) + log_gap
    return {"R": R, "log_tail": log_tail, "log_p2_norm_2s": log_p2_norm, "log_gap_bound": log_gap,
            "lhs_log": lhs, "rhs_log": math.log(eps), "ok": bool(lhs <= math.log(eps))}


def closed_form_radius(L: float, s: float, eps: float, dist: DistributionSpec) -> float:
    """The asymptotic radius scale without polylog factors, for logging only."""
    g = dist.gamma
    return (L * s / eps) ** (1 / g) * dist.rdim ** (0.5 + 1.5 / g)


def _unwrap(concept: Concept) -> tuple[Concept, np.ndarray | None]:
    if isinstance(concept, LiftedConcept):
        return concept.base, concept.W
    return concept, None


def assemble_sandwich(concept: Concept, sigma: float, eps: float, s: float, dist: DistributionSpec,
                      config: AssemblyConfig = AssemblyConfig()) -> SandwichPair:
    """Fit both sides on a doubling radius ladder until the tail condition holds."""
    base, W = _unwrap(concept)
    if dist.dim != concept.dim:
        raise ValueError("distribution and concept dimensions differ")
    bdist = dist.projection(base.dim)
    ls = build_lipschitz_sandwich(base, sigma, eps, s, config.variant)
    k = base.dim
    if config.R is not None:
        ladder = [float(config.R)]
    else:
        ladder = []
        R = 1.0
        while R <= config.R_max:
            ladder.append(R)
            R *= 2
    attempts = []
    n_hint = None
    last_err: FitFailure | None = None
    last_pair = None
    for R in ladder:
        # necessary condition: the gap bound is at least 2 + 2 eps
        pre = bdist.radial_log_sf(R / 2) / (2 * s) + math.log(2 + 2 * eps)
        if config.R is None and pre > math.log(eps):
            attempts.append({"R": R, "status": "skipped: tail mass too large"})
            continue
        kw = dict(guess_factor=config.guess_factor, growth=config.growth, grid_budget=config.grid_budget,
                  certify=config.certify_fit)
        t0 = time.perf_counter()
        try:
            fu = fit_uniform_approx(ls.up, ls.L, k, R, eps, config.degree_cap, n_start=n_hint, **kw)
            start = None if n_hint is None else max(0, int(0.8 * fu.ell1))
            fd = fit_uniform_approx(ls.down, ls.L, k, R, eps, config.degree_cap, n_start=start, **kw)
        except FitFailure as err:
            attempts.append({"R": R, "status": f"fit failure: {err}"})
            last_err = err
            break
        ell1 = max(fu.ell1, fd.ell1)
        tu = tail_dominator(eps, R, fu.p1, config.tail_rule)
        td = tail_dominator(eps, R, fd.p1, config.tail_rule)
        ell2 = max(tu.ell2, td.ell2, (ell1 + 1) // 2)
        p2 = RadialPower(k, eps, R, ell2)
        tc = tail_condition(bdist, R, eps, s, p2)
        attempts.append({"R": R, "status": "ok" if tc["ok"] else "tail condition fails",
                         "ell1_up": fu.ell1, "ell1_down": fd.ell1, "ell2": ell2,
                         "err_up": fu.certified_err, "err_down": fd.certified_err,
                         "lhs_log": tc["lhs_log"], "seconds": time.perf_counter() - t0})
        log.info("R=%g ell1=%d/%d ell2=%d tail lhs=%.3g rhs=%.3g", R, fu.ell1, fd.ell1, ell2,
                 tc["lhs_log"], tc["rhs_log"])
        tail = dict(tc)
        tail.update({"rule": config.tail_rule, "margin_up": tu.margin_log, "margin_down": td.margin_log,
                     "log_C_up": tu.log_C, "log_C_down": td.log_C,
                     "closed_form_R": closed_form_radius(ls.L, s, eps, bdist)})
        last_pair = (fu.p1, fd.p1, p2, R, ell1, ell2, fu.summary(), fd.summary(), tail)
        if tc["ok"] or config.R is not None:
            return _finish_pair(last_pair, ls, eps, s, config, attempts, W)
        n_hint = int(0.9 * 2 * ell1)
    partial = _finish_pair(last_pair, ls, eps, s, config, attempts, W) if last_pair else None
    raise FitFailure(f"no radius up to {ladder[-1]:g} produced a certified pair",
                     last_err.best if last_err else None, attempts, partial)


def _finish_pair(parts, ls, eps, s, config, attempts, W) -> SandwichPair:
    pu, pd, p2, R, ell1, ell2, su, sd, tail = parts
    pair = SandwichPair(pu, pd, p2, eps, s, ls.sigma, ls.rho, ls.L, R, ell1, ell2, 0.0, "", config.tail_rule,
                        None, su, sd, tail, tuple(attempts), variant=config.variant)
    pair = _with_B(pair)
    return lift_sandwich(pair, W) if W is not None else pair


def _with_B(pair: SandwichPair) -> SandwichPair:
    log_B, kind = _pair_log_B(pair.p_up, pair.p_down)
    return replace(pair, log_B=log_B, B_kind=kind)


def lift_sandwich(pair: SandwichPair, W: np.ndarray) -> SandwichPair:
    """Compose both polynomials with ``W`` (orthonormal rows); degrees are unchanged."""
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != pair.dim:
        raise ValueError(f"W must have {pair.dim} rows")
    if np.max(np.abs(W @ W.T - np.eye(W.shape[0]))) > 1e-9:
        raise ValueError("W must have orthonormal rows")
    full = W if pair.W is None else pair.W @ W
    if full.shape[0] == full.shape[1] and np.max(np.abs(full - np.eye(full.shape[0]))) <= 1e-15:
        full = None
    return _with_B(replace(pair, W=full, report=None))


# ---------------------------------------------------------------------------
# certification

@dataclass(frozen=True)
class CertBudgets:
    n_gauss: int = 10 ** 6
    n_boundary: int = 10 ** 4
    n_shell: int = 10 ** 4
    grid_in_ball: int = 10 ** 4
    n_region: int = 20_000
    seed: int = 0
    slack: float = 1e-9


@dataclass(frozen=True)
class ProbeResult:
    name: str
    n: int
    violations: int
    min_margin: float


@dataclass(frozen=True)
class CertificationReport:
    pointwise_violations: int
    probes: tuple[ProbeResult, ...]
    gap: Estimate
    gap_l1: Estimate
    gap_l2: Estimate
    gap_quadrature: float | None
    gap_quadrature_exact: bool
    declared_gap: float
    tail_certificate: str
    shell_routes: dict
    regions: dict
    seed: int
    verdict: str

    @property
    def passed(self) -> bool:
        return self.verdict == "PASS"

    def to_record(self) -> dict:
        def est(e: Estimate) -> dict:
            return {"value": e.value, "std_error": e.std_error, "n": e.n, "upper99": e.upper()}
        return {
            "verdict": self.verdict, "pointwise_violations": self.pointwise_violations,
            "probes": [p.__dict__ for p in self.probes],
            "gap": est(self.gap), "gap_l1": est(self.gap_l1), "gap_l2": est(self.gap_l2),
            "gap_quadrature": self.gap_quadrature, "gap_quadrature_exact": self.gap_quadrature_exact,
            "declared_gap": self.declared_gap, "tail_certificate": self.tail_certificate,
            "shell_routes": self.shell_routes, "regions": self.regions, "seed": self.seed,
        }


def _violations(f: np.ndarray, pu: np.ndarray, pd: np.ndarray, slack: float) -> tuple[int, float]:
    with np.errstate(invalid="ignore"):
        mu = pu - f
        md = f - pd
    margin = np.fmin(mu, md)
    bad = ~(margin >= -slack)
    return int(bad.sum()), float(np.nanmin(margin)) if margin.size else math.inf


def _lift_points(Y: np.ndarray, W: np.ndarray | None, rng: np.random.Generator) -> np.ndarray:
    if W is None:
        return Y
    Z = rng.standard_normal((Y.shape[0], W.shape[1]))
    Z -= (Z @ W.T) @ W
    return Y @ W + Z


def _hyperplanes(c: Concept) -> list[tuple[np.ndarray, float]]:
    if isinstance(c, SingleHalfspace):
        return [(c.h.w, c.h.tau)]
    if isinstance(c, (Intersection, BoolCombo)):
        return [(h.w, h.tau) for h in c.halfspaces]
    return []


def boundary_probes(c: Concept, rho: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Points at signed distances {0, +-rho/4, +-rho/2, +-rho, +-2rho} from the boundary
    along the local normal, in the concept's own coordinates."""
    while isinstance(c, Negation):
        c = c.base
    offsets = rho * np.array([0.0, 0.25, -0.25, 0.5, -0.5, 1.0, -1.0, 2.0, -2.0])
    t = offsets[np.arange(n) % offsets.size]
    k = c.dim
    planes = _hyperplanes(c)
    if planes:
        which = rng.integers(len(planes), size=n)
        Wn = np.stack([planes[i][0] for i in which])
        tau = np.array([planes[i][1] for i in which])
        Y0 = rng.standard_normal((n, k))
        base = Y0 - (np.einsum("ij,ij->i", Y0, Wn) - tau)[:, None] * Wn
        return base + t[:, None] * Wn
    if isinstance(c, PTF):
        pts, normals = _ptf_boundary(c, n, rng)
        return pts + t[:, None] * normals
    return rng.standard_normal((n, k))


def _ptf_boundary(c: PTF, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    k = c.dim
    out, nrm = [], []
    have = 0
    grads = [c.q.derivative(a) for a in range(k)]
    for _ in range(200):
        m = 4 * n
        Y0 = rng.standard_normal((m, k))
        U = rng.standard_normal((m, k))
        U /= np.linalg.norm(U, axis=1, keepdims=True)
        s0 = c.evaluate(Y0)
        ts = np.linspace(0, 6, 121)[1:]
        found = np.full(m, np.nan)
        prev = np.zeros(m)
        for tt in ts:
            todo = np.isnan(found)
            if not todo.any():
                break
            sv = c.evaluate(Y0[todo] + tt * U[todo])
            idx = np.flatnonzero(todo)[sv != s0[todo]]
            found[idx] = tt
            prev[np.flatnonzero(todo)[sv == s0[todo]]] = tt
        ok = np.flatnonzero(~np.isnan(found))
        if ok.size:
            a, b = prev[ok], found[ok]
            for _ in range(60):
                mid = 0.5 * (a + b)
                same = c.evaluate(Y0[ok] + mid[:, None] * U[ok]) == s0[ok]
                a = np.where(same, mid, a)
                b = np.where(same, b, mid)
            P = Y0[ok] + b[:, None] * U[ok]
            G = np.stack([g.evaluate(P) for g in grads], axis=1)
            gn = np.linalg.norm(G, axis=1)
            good = gn > 1e-12
            out.append(P[good])
            nrm.append(-G[good] / gn[good, None])
            have += int(good.sum())
        if have >= n:
            break
    if have == 0:
        return rng.standard_normal((n, k)), np.zeros((n, k))
    P = np.concatenate(out)[:n]
    N = np.concatenate(nrm)[:n]
    reps = -(-n // P.shape[0])
    return np.tile(P, (reps, 1))[:n], np.tile(N, (reps, 1))[:n]


def _shell_points(k: int, R: float, n: int, rng: np.random.Generator) -> np.ndarray:
    U = rng.standard_normal((n, k))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    return U * rng.uniform(R, 3 * R, size=n)[:, None]


def _ball_grid(k: int, R: float, n: int) -> np.ndarray:
    if k == 1:
        return np.linspace(-R, R, n)[:, None]
    vol = {2: math.pi / 4, 3: math.pi / 6}.get(k, 0.5 ** k)
    side = max(2, int(math.ceil((n / vol) ** (1.0 / k))))
    x = np.linspace(-R, R, side)
    pts = np.stack([g.ravel() for g in np.meshgrid(*([x] * k), indexing="ij")], axis=1)
    return pts[np.sum(pts ** 2, axis=1) <= R * R]


def log_abs_p1_bound(p1: Polynomial, Y: np.ndarray) -> np.ndarray:
    """Certified bound on log |p1(y)| for a Chebyshev p1, valid everywhere.

    Uses ``|T_a(t)| <= zeta(|t|)^a`` with ``zeta(t) = max(1, t + sqrt(t^2 - 1))``."""
    C = p1.abs_coef_sum()
    if C == 0:
        return np.full(Y.shape[0], -np.inf)
    T = np.abs(Y) / p1.box
    zeta = np.where(T > 1, T + np.sqrt(np.maximum(T * T - 1, 0.0)), 1.0)
    return math.log(C) + p1.degree * np.log(np.max(zeta, axis=1))


def check_tail_certificate(pair: SandwichPair, Y: np.ndarray, direct_degree_limit: int = 20_000) -> dict:
    """``p2 >= 1 + |p1|`` for both sides at base-space points ``Y`` with ``||Y|| >= R``.

    Direct evaluation is used where it is finite; elsewhere the certified
    log-domain bound on ``|p1|``."""
    lp2 = pair.p2.log_evaluate(Y)
    fails = 0
    direct = bound = 0
    for p1 in (pair.p1_up, pair.p1_down):
        vals = None
        if p1.degree <= direct_degree_limit:
            with np.errstate(over="ignore", invalid="ignore"):
                vals = np.abs(np.asarray(p1.evaluate(Y)))
        lb = log_abs_p1_bound(p1, Y)
        use_direct = np.isfinite(vals) & (lp2 < 700) if vals is not None else np.zeros(Y.shape[0], bool)
        if use_direct.any():
            p2v = np.exp(lp2[use_direct])
            fails += int(np.sum(p2v < (1 + vals[use_direct]) * (1 - 1e-12)))
            direct += int(use_direct.sum())
        rest = ~use_direct
        if rest.any():
            need = np.logaddexp(0.0, lb[rest])
            fails += int(np.sum(lp2[rest] < need))
            bound += int(rest.sum())
    return {"failures": fails, "direct": direct, "bound": bound}


def _gap_quadrature(pair: SandwichPair, max_nodes: int = 2_000_000) -> tuple[float | None, bool]:
    k = pair.base_dim
    if k > 3:
        return None, False
    s = pair.s
    integer = float(s).is_integer()
    deg = int(math.ceil(s * pair.degree))
    per_axis = deg // 2 + 1
    if per_axis ** k > max_nodes:
        return None, False
    if per_axis <= 150:
        X, w = gaussian_quadrature(k, per_axis)
    else:
        x1, w1 = special.roots_hermitenorm(per_axis)
        w1 = w1 / math.sqrt(2 * math.pi)
        grids = np.meshgrid(*([x1] * k), indexing="ij")
        X = np.stack([g.ravel() for g in grids], axis=1)
        w = np.ones(1)
        for _ in range(k):
            w = np.outer(w, w1).ravel()
    keep = w > 0
    X, w = X[keep], w[keep]
    base = replace(pair, W=None)
    with np.errstate(over="ignore", invalid="ignore"):
        gap = np.abs(base.p_up.evaluate(X) - base.p_down.evaluate(X))
        val = float(np.sum(w * gap ** s))
    if not math.isfinite(val):
        return None, False
    return val ** (1 / s), integer


def certify_sandwich(pair: SandwichPair, c: Concept, dist: DistributionSpec,
                     budgets: CertBudgets = CertBudgets(), threads: int = 1,
                     sandwich: LipschitzSandwich | None = None) -> CertificationReport:
    """Probe-based pointwise check plus gap estimate for a sandwich pair."""
    if c.dim != pair.dim or dist.dim != pair.dim:
        raise ValueError("pair, concept and distribution dimensions differ")
    base, W = _unwrap(c)
    if pair.W is not None and W is None:
        raise ValueError("lifted pair needs a lifted concept")
    slack = budgets.slack
    seeds = np.random.SeedSequence(budgets.seed).spawn(5)
    pu, pd = pair.p_up, pair.p_down
    s = pair.s
    probes = []

    def chunk_stats(X):
        f = c.evaluate(X)
        u, d = pu.evaluate(X), pd.evaluate(X)
        with np.errstate(invalid="ignore"):
            margin = np.fmin(u - f, f - d)
        bad = ~(margin >= -slack)
        gap = np.abs(u - d)
        return np.stack([bad, gap, gap ** s, gap ** 2, np.where(np.isnan(margin), -np.inf, margin)], axis=1)

    seed_g = int(seeds[0].generate_state(1)[0])
    tot = np.zeros(4)
    tot2 = np.zeros(4)
    min_margin = math.inf
    for block in map_chunks(chunk_stats, dist, budgets.n_gauss, seed_g, threads):
        tot += block[:, :4].sum(axis=0)
        tot2 += (block[:, :4] ** 2).sum(axis=0)
        min_margin = min(min_margin, float(block[:, 4].min()))
    n = budgets.n_gauss
    probes.append(ProbeResult("gauss", n, int(round(tot[0])), min_margin))
    mean = tot / n
    var = np.maximum(tot2 / n - mean ** 2, 0) * n / max(n - 1, 1)
    se = np.sqrt(var / n)

    def root(m, e, q):
        if m <= 0:
            return Estimate(0.0, 0.0, n, seed_g)
        return Estimate(m ** (1 / q), e * m ** (1 / q - 1) / q, n, seed_g)

    gap_l1 = root(mean[1], se[1], 1.0)
    gap_s = root(mean[2], se[2], s)
    gap_l2 = root(mean[3], se[3], 2.0)

    k = base.dim
    rng = np.random.default_rng(seeds[1])
    Yb = boundary_probes(base, pair.rho, budgets.n_boundary, rng)
    Xb = _lift_points(Yb, W, rng)
    nv, mm = _violations(c.evaluate(Xb), pu.evaluate(Xb), pd.evaluate(Xb), slack)
    probes.append(ProbeResult("boundary", Xb.shape[0], nv, mm))

    rng = np.random.default_rng(seeds[2])
    Ys = _shell_points(k, pair.R, budgets.n_shell, rng)
    routes = check_tail_certificate(pair, Ys)
    probes.append(ProbeResult("shell", Ys.shape[0], routes["failures"], math.nan))

    Yg = _ball_grid(k, pair.R, budgets.grid_in_ball)
    Xg = Yg @ W if W is not None else Yg
    nv, mm = _violations(c.evaluate(Xg), pu.evaluate(Xg), pd.evaluate(Xg), slack)
    probes.append(ProbeResult("grid", Xg.shape[0], nv, mm))

    regions = _region_checks(pair, base, budgets, seeds[3], sandwich)
    gq, exact = _gap_quadrature(pair) if dist.family == "gaussian" else (None, False)
    total = sum(p.violations for p in probes)
    tail_cert = "analytic" if routes["failures"] == 0 and pair.tail.get("margin_up", 0) >= -1e-9 \
        and pair.tail.get("margin_down", 0) >= -1e-9 else "empirical-only"
    region_bad = regions.get("inner_violations", 0) + regions.get("annulus_violations", 0)
    verdict = "PASS" if total == 0 and region_bad == 0 and gap_s.upper() <= pair.declared_gap else "FAIL"
    return CertificationReport(total, tuple(probes), gap_s, gap_l1, gap_l2, gq, exact, pair.declared_gap,
                               tail_cert, routes, regions, budgets.seed, verdict)


def _region_checks(pair: SandwichPair, base: Concept, budgets: CertBudgets, ss, sandwich) -> dict:
    """Three-region behaviour on points spread over the ball of radius R."""
    if budgets.n_region <= 0:
        return {}
    ls = sandwich or build_lipschitz_sandwich(base, pair.sigma, pair.eps, pair.s, pair.variant)
    rng = np.random.default_rng(ss)
    k = base.dim
    n = budgets.n_region
    U = rng.standard_normal((n, k))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    r = pair.R * rng.random(n) ** (1.0 / k)
    Y = U * r[:, None]
    bp = replace(pair, W=None)
    fu, fd = ls.up(Y), ls.down(Y)
    uu, dd = bp.p_up.evaluate(Y), bp.p_down.evaluate(Y)
    inner = r <= pair.R / 2
    mid = ~inner
    tol = 1e-9
    e = pair.eps
    return {
        "n": n,
        "inner_violations": int(np.sum(inner & ((uu < fu - tol) | (uu > fu + 3 * e + tol)
                                                | (dd > fd + tol) | (dd < fd - 3 * e - tol)))),
        "annulus_violations": int(np.sum(mid & ((uu < fu - tol) | (dd > fd + tol)))),
    }
