"""LP oracles on discretized Gaussian measures and moment-matching checks.

The grid measure is a finite weighted point set standing in for N(0, I_k).
Tensor Gauss-Hermite grids make the grid moments equal to the Gaussian
moments up to the rule's exactness order, so the polynomial LP and the
moment-constrained distribution LP are exact duals of each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special
from scipy.linalg import solve_triangular
from scipy.optimize import linprog

from .concepts import Concept, Constant, Intersection, LiftedConcept, Negation, SingleHalfspace
from .measures import DistributionSpec, Estimate, ls_norm, mc_moments
from .polycore import Polynomial, PolySum, basis_matrix, chebyshev_basis_indices

LP_TOL = 1e-9
BASES = ("chebyshev", "monomial")


class OracleFailure(RuntimeError):
    """The LP solver did not report an optimal solution."""


# ---------------------------------------------------------------------------
# measures on grids


@dataclass(frozen=True)
class GridMeasure:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        P = np.asarray(self.points, dtype=float)
        if P.ndim == 1:
            P = P[:, None]
        w = np.asarray(self.weights, dtype=float).ravel()
        if P.shape[0] == 0:
            raise ValueError("grid must be nonempty")
        if w.shape[0] != P.shape[0]:
            raise ValueError("one weight per point required")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and non-negative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum():.15g}, not 1")
        if np.unique(P, axis=0).shape[0] != P.shape[0]:
            raise ValueError("grid points must be distinct")
        object.__setattr__(self, "points", P)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def box(self) -> float:
        return float(max(np.max(np.abs(self.points)), 1e-12))

    def expect(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))

    def moments(self, indices: np.ndarray, basis: str = "monomial", box: float = 1.0) -> np.ndarray:
        return basis_matrix(self.points, indices, basis, box).T @ self.weights


def hermite_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Probabilists' Gauss-Hermite nodes and weights normalized to a probability."""
    if n < 1:
        raise ValueError("need at least one node")
    if n <= 150:
        x, w = np.polynomial.hermite_e.hermegauss(n)
    else:
        x, w = special.roots_hermitenorm(n)
    w = w / w.sum()
    x = np.where(np.abs(x) < 1e-15, 0.0, x)
    return x, w


def gauss_hermite_grid(dim: int, n: int, min_weight: float = 0.0) -> GridMeasure:
    """Tensor rule; ``min_weight`` drops 1-D nodes of smaller normalized weight.

    Truncation keeps high-degree LPs well posed: far nodes with weights near
    machine epsilon carry no objective mass but dominate the conditioning.
    """
    x, w = hermite_rule(n)
    if min_weight > 0:
        keep = w >= min_weight
        x, w = x[keep], w[keep]
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    P = np.stack([g.ravel() for g in grids], axis=1)
    W = np.ones(1)
    for _ in range(dim):
        W = np.outer(W, w).ravel()
    return GridMeasure(P, W / W.sum())


def double_factorial_odd(m: int) -> float:
    """(m-1)!! for even m, the m-th standard normal moment."""
    if m % 2:
        return 0.0
    return float(math.exp(special.gammaln(m + 1) - special.gammaln(m // 2 + 1) - (m // 2) * math.log(2)))


def gaussian_moment(alpha) -> float:
    """E[x^alpha] under N(0, I): zero unless every exponent is even."""
    out = 1.0
    for a in np.atleast_1d(alpha):
        a = int(a)
        if a % 2:
            return 0.0
        out *= 1.0 if a == 0 else double_factorial_odd(a)
    return out


def _gaussian_cheb_moments_1d(order: int, box: float) -> np.ndarray:
    """E[T_a(x / box)] for a = 0..order, exact via a large Hermite rule."""
    x, w = hermite_rule(order // 2 + 16)
    T = np.polynomial.chebyshev.chebvander(x / box, order)
    return T.T @ w


def gaussian_basis_moments(indices: np.ndarray, basis: str = "monomial", box: float = 1.0) -> np.ndarray:
    """Gaussian moments of the basis functions listed by ``indices``."""
    indices = np.asarray(indices, dtype=int)
    if basis == "monomial":
        return np.array([gaussian_moment(a) for a in indices])
    if basis != "chebyshev":
        raise ValueError(f"unknown basis {basis!r}")
    m1 = _gaussian_cheb_moments_1d(int(indices.max()) if indices.size else 0, box)
    return np.prod(m1[indices], axis=1)


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finite distribution declared to match Gaussian moments up to ``order``.

    Moments are those of the basis functions (monomials, or Chebyshev
    polynomials scaled to ``box``) of total degree at most ``order``.  The
    declaration is checked on construction for all degrees up to
    ``verified_order``; the check allows ``delta`` plus ``tol`` relative to
    the size of the summands.
    """

    points: np.ndarray
    probs: np.ndarray
    order: int
    delta: float
    basis: str = "monomial"
    box: float = 1.0
    tol: float = 1e-10
    verify_cap: int = 64
    verified_order: int = field(default=-1)
    residual: float = field(default=math.nan)

    def __post_init__(self) -> None:
        P = np.asarray(self.points, dtype=float)
        if P.ndim == 1:
            P = P[:, None]
        q = np.asarray(self.probs, dtype=float).ravel()
        if q.shape[0] != P.shape[0]:
            raise ValueError("one probability per point required")
        if np.any(q < 0) or abs(q.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must be non-negative and sum to 1")
        if self.basis not in BASES:
            raise ValueError(f"unknown basis {self.basis!r}")
        if self.order < 0 or self.delta < 0:
            raise ValueError("order and delta must be non-negative")
        object.__setattr__(self, "points", P)
        object.__setattr__(self, "probs", q)
        top = min(self.order, self.verify_cap if P.shape[1] == 1 else self.verify_cap // P.shape[1])
        idx = chebyshev_basis_indices(P.shape[1], top)
        B = basis_matrix(P, idx, self.basis, self.box).T
        got = B @ q
        want = gaussian_basis_moments(idx, self.basis, self.box)
        res = np.abs(got - want)
        # floating point scale of the sum, not of its (possibly zero) value
        allowed = self.delta + self.tol * np.maximum(1.0, np.abs(B) @ q)
        if not np.all(res <= allowed):
            j = int(np.argmax(res - allowed))
            raise ValueError(f"moment {tuple(idx[j])} misses the Gaussian value by {res[j]:.3e} "
                             f"(allowed {allowed[j]:.3e})")
        object.__setattr__(self, "verified_order", top)
        object.__setattr__(self, "residual", float(res.max()))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def expect(self, values: np.ndarray) -> float:
        return float(np.dot(self.probs, values))

    def moment_residuals(self, ell: int) -> np.ndarray:
        """|E[x^alpha] - Gaussian| for all monomials of total degree <= ell."""
        idx = chebyshev_basis_indices(self.dim, ell)
        got = basis_matrix(self.points, idx, "monomial").T @ self.probs
        return np.abs(got - gaussian_basis_moments(idx, "monomial"))

    def to_rows(self) -> list[list[float]]:
        return [list(map(float, p)) + [float(w)] for p, w in zip(self.points, self.probs)]


def moment_matched_quadrature(dim: int, ell: int) -> DiscreteDistribution:
    """Tensor Gauss-Hermite rule with ceil((ell+1)/2) nodes per axis."""
    if dim > 3:
        raise ValueError("tensor rules are limited to dim <= 3")
    n = max(1, math.ceil((ell + 1) / 2))
    g = gauss_hermite_grid(dim, n)
    return DiscreteDistribution(g.points, g.weights, int(ell), 0.0)


# ---------------------------------------------------------------------------
# LP helpers


def _solve(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=(None, None)):
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs",
                  options={"primal_feasibility_tolerance": LP_TOL, "dual_feasibility_tolerance": LP_TOL})
    if res.status != 0:
        raise OracleFailure(f"LP solver stopped with status {res.status}: {res.message}")
    return res


def _design(grid: GridMeasure, degree: int, basis: str) -> tuple[np.ndarray, np.ndarray, float]:
    if basis not in BASES:
        raise ValueError(f"unknown basis {basis!r}")
    idx = chebyshev_basis_indices(grid.dim, degree)
    box = grid.box if basis == "chebyshev" else 1.0
    Phi = basis_matrix(grid.points, idx, basis, box)
    if Phi.shape[1] > Phi.shape[0] or np.linalg.matrix_rank(Phi) < Phi.shape[1]:
        raise ValueError(f"degree {degree} design on {grid.size} points is rank deficient")
    return Phi, idx, box


def _f_values(f_values, grid: GridMeasure) -> np.ndarray:
    f = np.asarray(f_values, dtype=float).ravel()
    if f.shape[0] != grid.size:
        raise ValueError("need one f value per grid point")
    return f


def _to_poly(a: np.ndarray, idx: np.ndarray, dim: int, basis: str, box: float) -> Polynomial:
    return Polynomial(dim, {tuple(int(v) for v in i): float(x) for i, x in zip(idx, a) if x != 0.0},
                      degree=int(idx.sum(axis=1).max()), basis=basis, box=box)


def _cheb_to_mono(idx: np.ndarray, dim: int, box: float) -> np.ndarray:
    """Matrix taking Chebyshev coefficients to monomial ones on the same index set."""
    pos = {tuple(i): r for r, i in enumerate(idx)}
    C = np.zeros((len(idx), len(idx)))
    for j, i in enumerate(idx):
        mono = Polynomial(dim, {tuple(int(v) for v in i): 1.0}, basis="chebyshev", box=box).to_monomial()
        for key, v in mono.coeffs.items():
            C[pos[key], j] = v
    return C


CERT_TOL = 1e-7


@dataclass(frozen=True)
class LPCertificate:
    """Primal grid values, dual measure, and the residuals tying them together."""

    coeffs: np.ndarray
    values: np.ndarray
    dual: np.ndarray
    primal_value: float
    dual_value: float
    primal_residual: float
    dual_residual: float
    route: str

    @property
    def duality_gap(self) -> float:
        return self.primal_value - self.dual_value


def _orthonormal(Phi: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Psi = Phi R^-1 with Psi orthonormal under the grid weights."""
    _, R = np.linalg.qr(np.sqrt(w)[:, None] * Phi)
    R = R * np.sign(np.diag(R))[:, None]
    Psi = solve_triangular(R, Phi.T, trans="T", lower=False).T
    return Psi, R


_ROUTES = (("poly", "highs", LP_TOL), ("poly", "highs-ipm", LP_TOL), ("poly", "highs", 0.1 * LP_TOL),
           ("poly", "highs-ds", LP_TOL), ("measure", "highs-ds", LP_TOL), ("measure", "highs-ipm", LP_TOL))


def _upper_lp(Phi: np.ndarray, w: np.ndarray, f: np.ndarray) -> LPCertificate:
    """min E_w[p] over p >= f, accepted only with a verified dual certificate.

    The LP runs first in a basis orthonormal for the grid measure, then in
    the raw basis, each with rows scaled to unit max-norm and several solver
    settings.  Every attempt yields a primal candidate (polished by
    complementary slackness, then made exactly feasible by a constant shift)
    and a dual measure y.  The best primal and the best dual across attempts
    must agree within CERT_TOL; dual feasibility is measured in orthonormal
    coordinates, where it is scale free.
    """
    Psi, R = _orthonormal(Phi, w)
    ones_psi = np.linalg.lstsq(Psi, np.ones_like(w), rcond=None)[0]
    ones_phi = np.zeros(Phi.shape[1])
    ones_phi[0] = 1.0  # column 0 is the constant function
    bases = ((Psi, lambda b: solve_triangular(R, b, lower=False), ones_psi), (Phi, lambda b: b, ones_phi))
    best_p = best_d = None
    status = ""
    for B, to_coeffs, one in bases:
        scale = np.abs(B).max(axis=1)
        c = w @ B
        for form, method, tol in _ROUTES:
            opts = {"primal_feasibility_tolerance": tol, "dual_feasibility_tolerance": tol}
            if form == "poly":
                res = linprog(c, A_ub=-B / scale[:, None], b_ub=-f / scale, bounds=(None, None),
                              method=method, options=opts)
            else:
                # measure form: max E_y[f] subject to y matching the basis moments of w
                res = linprog(-f, A_eq=B.T, b_eq=c, bounds=(0, None), method=method, options=opts)
            status = f"{form}/{method}: status {res.status}"
            if res.status != 0:
                continue
            if form == "poly":
                b = res.x
                y = -res.ineqlin.marginals / scale
            else:
                b = -res.eqlin.marginals
                y = res.x
            dres = float(np.max(np.abs(Psi.T @ (y - w))))
            if dres <= CERT_TOL and float(y.min()) >= -1e-9:
                dv = float(f @ y)
                if best_d is None or dv > best_d[0]:
                    best_d = (dv, y, dres)
            cands = [b]
            # complementary slackness: p = f wherever the dual measure has mass
            S = y > 1e-12 * max(1.0, float(y.max()))
            if S.any():
                cands.append(b + np.linalg.lstsq(B[S], f[S] - B[S] @ b, rcond=None)[0])
            for cb in cands:
                v = B @ cb
                short = max(0.0, float(np.max(f - v)))
                pv = float(w @ v) + short
                if best_p is None or pv < best_p[0]:
                    best_p = (pv, v + short, to_coeffs(cb + short * one), short)
            if best_d is not None and best_p[0] - best_d[0] <= CERT_TOL:
                pv, values, a, short = best_p
                dv, y, dres = best_d
                return LPCertificate(a, values, y, pv, dv, short, dres, "orthonormal" if B is Psi else "raw")
    gap = math.nan if best_p is None or best_d is None else best_p[0] - best_d[0]
    raise OracleFailure(f"no certified LP solution (duality gap {gap:.2e}, last {status})")


def _one_sided(Phi: np.ndarray, w: np.ndarray, f: np.ndarray, upper: bool, penalty: float,
               C: np.ndarray | None) -> LPCertificate:
    """Optimal upper (p >= f) or lower (p <= f) polynomial on the grid."""
    if penalty <= 0:
        if upper:
            return _upper_lp(Phi, w, f)
        cert = _upper_lp(Phi, w, -f)
        return replace(cert, coeffs=-cert.coeffs, values=-cert.values, primal_value=-cert.primal_value, dual_value=-cert.dual_value)
    sgn = 1.0 if upper else -1.0
    n = Phi.shape[1]
    # minimize sgn E_w[p] + penalty * sum(t), -t <= C a <= t
    m = C.shape[0]
    Z = np.zeros((Phi.shape[0], m))
    I = np.eye(m)
    A_full = np.vstack([np.hstack([-sgn * Phi, Z]), np.hstack([C, -I]), np.hstack([-C, -I])])
    b_full = np.concatenate([-sgn * f, np.zeros(2 * m)])
    c_full = np.concatenate([sgn * (w @ Phi), penalty * np.ones(m)])
    bounds = [(None, None)] * n + [(0, None)] * m
    a = _solve(c_full, A_full, b_full, bounds=bounds).x[:n].copy()
    a[0] += sgn * max(0.0, float(np.max(sgn * (f - Phi @ a))))
    values = Phi @ a
    return LPCertificate(a, values, np.zeros(0), float(w @ values), math.nan, 0.0, math.nan, "penalized")


@dataclass(frozen=True)
class LPSandwich:
    """Optimal pair on a grid.

    ``up_values``/``down_values`` are the certified values on the grid
    points; the polynomial objects are a coefficient conversion of the same
    solution, which at high degree can lose digits to cancellation.
    """

    p_up: Polynomial
    p_down: Polynomial
    gap: float
    upper_value: float
    lower_value: float
    degree: int
    basis: str
    penalty: float = 0.0
    duality_gap: float = 0.0
    routes: tuple[str, str] = ("", "")
    up_values: np.ndarray | None = None
    down_values: np.ndarray | None = None

    def coef_norms(self) -> tuple[float, float]:
        return self.p_up.coef_norm(), self.p_down.coef_norm()


def lp_optimal_sandwich(f_values, grid: GridMeasure, degree: int, basis: str = "chebyshev",
                        penalty: float = 0.0) -> LPSandwich:
    """Minimize E_w[p_up - p_down] with p_down <= f <= p_up on every grid point.

    The two sides decouple into independent LPs.  Returned grid values are
    exactly feasible (a constant shift absorbs solver slack) and
    each side carries a dual certificate within 1e-7.  ``penalty > 0`` adds
    ``penalty * coefNorm`` (monomial coefficients) to each side's objective.
    """
    f = _f_values(f_values, grid)
    if degree < 0:
        raise ValueError("degree must be non-negative")
    if np.all(f == f[0]):
        c = float(f[0])
        box = grid.box if basis == "chebyshev" else 1.0
        p = Polynomial.constant(grid.dim, c, basis=basis, box=box)
        v = np.full(grid.size, c)
        return LPSandwich(p, p, 0.0, c, c, degree, basis, penalty, 0.0, ("constant", "constant"), v, v)
    Phi, idx, box = _design(grid, degree, basis)
    C = None
    if penalty > 0:
        C = _cheb_to_mono(idx, grid.dim, box) if basis == "chebyshev" else np.eye(len(idx))
    up = _one_sided(Phi, grid.weights, f, True, penalty, C)
    lo = _one_sided(Phi, grid.weights, f, False, penalty, C)
    dg = max(abs(up.duality_gap), abs(lo.duality_gap)) if penalty <= 0 else math.nan
    return LPSandwich(_to_poly(up.coeffs, idx, grid.dim, basis, box), _to_poly(lo.coeffs, idx, grid.dim, basis, box),
                      up.primal_value - lo.primal_value, up.primal_value, lo.primal_value, degree, basis, penalty,
                      dg, (up.route, lo.route), up.values, lo.values)


def one_sided_upper_excess(f_values, grid: GridMeasure, degree: int, basis: str = "chebyshev") -> float:
    """min E_w[p - f] over degree-``degree`` p with p >= f on the grid."""
    f = _f_values(f_values, grid)
    Phi, _, _ = _design(grid, degree, basis)
    return _upper_lp(Phi, grid.weights, f).primal_value - grid.expect(f)


def brute_force_dual_gap(f_values, grid: GridMeasure) -> float:
    """Degree-1 sandwich gap of a 1-D grid by enumerating dual vertices.

    The dual of the upper LP maximizes E_y[f] over probability vectors y on
    the grid with the same mean as the grid measure.  Vertices are supported
    on at most two points, one on each side of the mean.
    """
    if grid.dim != 1:
        raise ValueError("brute force dual is one-dimensional")
    f = _f_values(f_values, grid)
    x = grid.points[:, 0]
    mu = grid.expect(x)
    best_hi, best_lo = -math.inf, math.inf
    for i in np.flatnonzero(x <= mu):
        for j in np.flatnonzero(x >= mu):
            if x[j] == x[i]:
                yi = 1.0
            else:
                yi = (x[j] - mu) / (x[j] - x[i])
            v = yi * f[i] + (1.0 - yi) * f[j]
            best_hi, best_lo = max(best_hi, v), min(best_lo, v)
    return best_hi - best_lo


def lp_gap_curve(f_values, grid: GridMeasure, degrees, basis: str = "chebyshev") -> list[tuple[int, float]]:
    return [(int(l), lp_optimal_sandwich(f_values, grid, int(l), basis).gap) for l in degrees]


def lp_min_degree(f_values, grid: GridMeasure, target: float, max_degree: int,
                  basis: str = "chebyshev") -> tuple[int | None, float]:
    """Smallest degree whose LP gap is at most ``target`` (None if above ``max_degree``).

    Degrees whose LP cannot be certified are skipped rather than guessed.
    """
    last = math.inf
    for l in range(max_degree + 1):
        try:
            last = lp_optimal_sandwich(f_values, grid, l, basis).gap
        except OracleFailure:
            continue
        except ValueError:
            break
        if last <= target:
            return l, last
    return None, last


def lp_certified_at_most(f_values, grid: GridMeasure, degree: int,
                         basis: str = "chebyshev") -> LPSandwich | None:
    """Certified LP pair at the largest degree <= ``degree`` that certifies."""
    for l in range(degree, -1, -1):
        try:
            return lp_optimal_sandwich(f_values, grid, l, basis)
        except (OracleFailure, ValueError):
            continue
    return None


# ---------------------------------------------------------------------------
# fooling


@dataclass(frozen=True)
class FoolingLP:
    adversary: DiscreteDistribution
    deviation_up: float
    deviation_down: float
    q_down: np.ndarray


def worst_case_fooling_lp(f_values, grid: GridMeasure, degree: int, delta: float, *,
                          moments: np.ndarray | None = None, basis: str = "monomial",
                          box: float | None = None) -> FoolingLP:
    """Extremes of E_q[f] - E_w[f] over grid distributions q within ``delta`` of the moments.

    ``moments`` are the base moments of the basis functions of total degree
    in ``1..degree`` (graded order); by default the grid's own.  The
    returned adversary is declared against the Gaussian with the slack that
    was actually verified: ``delta`` plus any mismatch between the base
    moments and the Gaussian ones plus solver residual.
    """
    f = _f_values(f_values, grid)
    if delta < 0:
        raise ValueError("delta must be non-negative")
    if basis not in BASES:
        raise ValueError(f"unknown basis {basis!r}")
    box = (grid.box if box is None else float(box)) if basis == "chebyshev" else 1.0
    idx = chebyshev_basis_indices(grid.dim, degree)[1:]
    N = grid.size
    ones = np.ones((1, N))
    # with delta = 0 only the span of the constraints matters, and the
    # Chebyshev basis of the grid box spans it with bounded rows
    row_basis, row_box = (basis, box) if delta > 0 or moments is not None else ("chebyshev", grid.box)
    if idx.shape[0]:
        A = basis_matrix(grid.points, idx, row_basis, row_box).T
        m = A @ grid.weights if moments is None else np.asarray(moments, dtype=float)
        scale = 1.0 / np.maximum(1.0, np.max(np.abs(A), axis=1))
        A_s, m_s = A * scale[:, None], m * scale
    else:
        A_s = np.zeros((0, N))
        m_s = np.zeros(0)
        scale = np.zeros(0)
    if not math.isfinite(delta):
        A_eq, b_eq, A_ub, b_ub = ones, np.ones(1), None, None
    elif delta == 0:
        A_eq, b_eq = np.vstack([ones, A_s]), np.concatenate([[1.0], m_s])
        A_ub = b_ub = None
    else:
        A_eq, b_eq = ones, np.ones(1)
        A_ub = np.vstack([A_s, -A_s])
        b_ub = np.concatenate([m_s + delta * scale, -(m_s - delta * scale)])
    base = grid.expect(f)
    hi = _solve(-f, A_ub, b_ub, A_eq, b_eq, bounds=(0, None))
    lo = _solve(f, A_ub, b_ub, A_eq, b_eq, bounds=(0, None))
    q = np.maximum(hi.x, 0.0)
    q /= q.sum()
    qd = np.maximum(lo.x, 0.0)
    qd /= qd.sum()
    dev_up = float(q @ f) - base
    dev_down = float(qd @ f) - base
    # declared slack against the Gaussian, measured rather than assumed
    all_idx = chebyshev_basis_indices(grid.dim, degree)
    got = basis_matrix(grid.points, all_idx, basis, box).T @ q
    declared = float(np.max(np.abs(got - gaussian_basis_moments(all_idx, basis, box))))
    adv = DiscreteDistribution(grid.points, q, int(degree), declared, basis=basis, box=box, tol=1e-9)
    return FoolingLP(adv, dev_up, dev_down, qd)


def exact_expectation(c: Concept) -> float | None:
    """E[f] under N(0, I) when a closed form is available."""
    if isinstance(c, Constant):
        return float(c.value)
    if isinstance(c, Negation):
        e = exact_expectation(c.base)
        return None if e is None else -e
    if isinstance(c, LiftedConcept):
        return exact_expectation(c.base)
    if isinstance(c, SingleHalfspace):
        return 2.0 * float(special.ndtr(c.h.tau)) - 1.0
    if isinstance(c, Intersection):
        G = c.Wm @ c.Wm.T
        if np.max(np.abs(G - np.diag(np.diag(G)))) <= 1e-12:
            return 2.0 * float(np.prod(special.ndtr(c.tau))) - 1.0
    return None


def _pair_moment_error(p: PolySum, dprime: DiscreteDistribution) -> float:
    """|E_D'[p] - E_N[p]| with the Gaussian side from an exact Hermite rule."""
    ref = gauss_hermite_grid(p.dim, p.degree // 2 + 8)
    with np.errstate(over="ignore", invalid="ignore"):
        e_ref = ref.expect(p.evaluate(ref.points))
        e_dp = dprime.expect(p.evaluate(dprime.points))
    err = abs(e_dp - e_ref)
    return err if math.isfinite(err) else math.inf


def chebyshev_log_norm(pair, box: float) -> float:
    """log of Chebyshev-coefficient l1 norms of p_up plus p_down on ``[-box, box]^k``.

    Only defined when the ``p1`` parts are Chebyshev series on the same box;
    the radial part uses l1(T-expansion of (sum t_i^2)^l) <= k^l.
    """
    if pair.W is not None or pair.p1_up.basis != "chebyshev" or abs(pair.p1_up.box - box) > 1e-12:
        return math.inf
    k = pair.base_dim
    p2 = pair.p2
    log_p2 = math.log(abs(p2.scale)) + p2.half_degree * math.log(4 * k * box ** 2 / p2.R ** 2)
    terms = [math.log(pair.p1_up.abs_coef_sum() + pair.eps), math.log(pair.p1_down.abs_coef_sum() + pair.eps),
             math.log(2.0) + log_p2]
    return float(np.logaddexp.reduce(terms))


@dataclass(frozen=True)
class FoolingReport:
    e_base: Estimate
    e_prime: float
    deviation: float
    gap_l1: Estimate
    delta: float
    basis: str
    log_B: float
    slack_delta_B: float
    slack_direct: float
    slack: float
    std_error: float
    bound: float
    holds: bool
    order: int
    degree: int

    def to_record(self) -> dict:
        return {
            "e_base": self.e_base.value, "e_base_se": self.e_base.std_error, "e_prime": self.e_prime,
            "deviation": self.deviation, "gap_l1": self.gap_l1.value, "gap_l1_se": self.gap_l1.std_error,
            "delta": self.delta, "basis": self.basis, "log_B": self.log_B,
            "slack_delta_B": self.slack_delta_B, "slack_direct": self.slack_direct, "slack": self.slack,
            "std_error": self.std_error, "bound": self.bound, "holds": self.holds,
            "order": self.order, "degree": self.degree,
        }


def fooling_check(c: Concept, pair, dprime: DiscreteDistribution, dist: DistributionSpec, *,
                  n: int = 10 ** 6, seed: int = 0, threads: int = 1,
                  gap_l1: Estimate | None = None) -> FoolingReport:
    """Check |E_D f - E_D' f| <= gap + moment slack + 3 standard errors.

    The moment slack is ``delta * B`` in the basis ``dprime`` is declared
    in, or the directly computed |E_D' p - E_D p| of the pair polynomials
    when that is smaller.  Both bound the same quantity used by the
    sandwich argument, E_D' p_up - E_D p_up (and the p_down analogue).
    """
    if dprime.order < pair.degree:
        raise ValueError(f"distribution matches moments up to order {dprime.order}, "
                         f"below the pair degree {pair.degree}")
    if dprime.dim != pair.dim or c.dim != pair.dim:
        raise ValueError("distribution, concept and pair dimensions differ")
    if dist.family != "gaussian":
        raise ValueError("moment targets are Gaussian")
    exact = exact_expectation(c)
    if exact is not None:
        e_base = Estimate(exact, 0.0, 0, None, exact=exact)
    else:
        mean, se = mc_moments(lambda X: c.evaluate(X), dist, n, seed, threads)
        e_base = Estimate(float(mean[0]), float(se[0]), n, seed)
    e_prime = dprime.expect(c.evaluate(dprime.points))
    if gap_l1 is None:
        if pair.report is not None:
            gap_l1 = pair.report.gap_l1
        else:
            gap_l1 = ls_norm(lambda X: pair.p_up.evaluate(X) - pair.p_down.evaluate(X), dist, 1.0,
                             n=n, seed=seed + 1, threads=threads)
    if dprime.basis == "monomial":
        log_B = pair.log_B
    else:
        log_B = chebyshev_log_norm(pair, dprime.box)
    if dprime.delta == 0:
        slack_dB = 0.0
    else:
        log_slack = math.log(dprime.delta) + log_B
        slack_dB = math.exp(log_slack) if log_slack < 700 else math.inf
    direct = max(_pair_moment_error(pair.p_up, dprime), _pair_moment_error(pair.p_down, dprime))
    # with delta = 0 the only moment error left is floating point, which direct measures
    slack = direct if dprime.delta == 0 else min(slack_dB, direct)
    se = math.hypot(e_base.std_error, gap_l1.std_error)
    dev = abs(e_base.value - e_prime)
    bound = gap_l1.value + slack + 3 * se
    return FoolingReport(e_base, e_prime, dev, gap_l1, dprime.delta, dprime.basis, log_B, slack_dB, direct,
                         slack, se, bound, bool(dev <= bound), dprime.order, pair.degree)


def pair_adversary(c: Concept, pair, delta: float, support_radius: float | None = None) -> FoolingLP:
    """Worst-case adversary of order ``pair.degree`` for a one-dimensional pair.

    Moments are Chebyshev moments on the pair's fitting box, which stay
    bounded at high order where monomial moments overflow.  The support is
    the Hermite grid restricted to ``|x| <= support_radius`` (default R/2).
    """
    if pair.dim != 1:
        raise ValueError("pair adversary is one-dimensional")
    r = pair.R / 2 if support_radius is None else float(support_radius)
    x, w = hermite_rule(pair.degree // 2 + 1)
    keep = np.abs(x) <= r
    g = GridMeasure(x[keep], w[keep] / w[keep].sum())
    m = gaussian_basis_moments(chebyshev_basis_indices(1, pair.degree)[1:], "chebyshev", pair.R)
    return worst_case_fooling_lp(c.evaluate(g.points), g, pair.degree, delta, moments=m,
                                 basis="chebyshev", box=pair.R)
