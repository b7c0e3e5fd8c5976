"""Sparse multivariate polynomials in monomial or tensor-Chebyshev form.

A :class:`Polynomial` stores coefficients either as a sparse map from
multi-index to float or, for Chebyshev fits in one or two variables, as a
dense coefficient array.  Both views are available lazily.

Chebyshev polynomials live on a centred box ``[-box, box]^dim`` and use
``T_a(x_1/box) * T_b(x_2/box) * ...`` as basis functions.

Evaluation of high-degree Chebyshev series inside the box goes through a
non-uniform FFT (``finufft``); a Clenshaw recurrence is used everywhere else
and serves as the reference route in the tests.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping

import finufft
import numpy as np
from numpy.polynomial import chebyshev as npcheb

MultiIndex = tuple[int, ...]

PRUNE_REL = 1e-14
BASES = ("monomial", "chebyshev")

# NUFFT pays off once degree and point count are both moderate.
_NUFFT_MIN_DEGREE = 48
_NUFFT_MIN_POINTS = 512
_NUFFT_TOL = 1e-14
_CHUNK = 1 << 15


def _as_points(x: np.ndarray, dim: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {np.shape(x)}")
    return arr, single


def _cheb_log_abs_imag(n: np.ndarray, y: float) -> np.ndarray:
    """log |T_n(i y)| for integer arrays n >= 0 and y >= 0.

    |T_n(iy)| is the monomial coefficient norm of T_n(t*y)."""
    n = np.asarray(n, dtype=float)
    if y == 0.0:
        # T_n(0) coefficient norm of T_n(0 * x) is |T_n(0)|.
        vals = np.where(n % 2 == 0, 1.0, 0.0)
        with np.errstate(divide="ignore"):
            return np.log(vals)
    a = math.asinh(y)
    sign = np.where(n % 2 == 0, 1.0, -1.0)
    return n * a + np.log1p(sign * np.exp(-2.0 * n * a)) - math.log(2.0)


def cheb_to_monomial_matrix(n: int) -> np.ndarray:
    """Row j holds the power-basis coefficients of T_j(t)."""
    A = np.zeros((n + 1, n + 1))
    A[0, 0] = 1.0
    if n >= 1:
        A[1, 1] = 1.0
    for j in range(2, n + 1):
        A[j, 1:] = 2.0 * A[j - 1, :-1]
        A[j] -= A[j - 2]
    return A


def _clenshaw_1d(c: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = np.empty_like(t)
    for lo in range(0, t.size, _CHUNK):
        out[lo:lo + _CHUNK] = npcheb.chebval(t[lo:lo + _CHUNK], c)
    return out


def _nufft_1d(c: np.ndarray, t: np.ndarray) -> np.ndarray:
    n = c.size - 1
    m = 2 * n + 2
    f = np.zeros(m, dtype=complex)
    f[m // 2:m // 2 + n + 1] = c
    theta = np.arccos(np.clip(t, -1.0, 1.0))
    return finufft.nufft1d2(theta, f, isign=1, eps=_NUFFT_TOL, modeord=0, nthreads=1).real


def _nufft_2d(c: np.ndarray, t1: np.ndarray, t2: np.ndarray) -> np.ndarray:
    n1, n2 = c.shape[0] - 1, c.shape[1] - 1
    m1, m2 = 2 * n1 + 2, 2 * n2 + 2
    f = np.zeros((m1, m2), dtype=complex)
    h1, h2 = m1 // 2, m2 // 2
    # cos(a u) cos(b v) = Re[e^{i(au+bv)} + e^{i(au-bv)}] / 2
    f[h1:h1 + n1 + 1, h2:h2 + n2 + 1] += 0.5 * c
    f[h1:h1 + n1 + 1, h2 - n2:h2 + 1] += 0.5 * c[:, ::-1]
    th1 = np.arccos(np.clip(t1, -1.0, 1.0))
    th2 = np.arccos(np.clip(t2, -1.0, 1.0))
    return finufft.nufft2d2(th1, th2, f, isign=1, eps=_NUFFT_TOL, modeord=0, nthreads=1).real


def _cheb_table(t: np.ndarray, n: int) -> np.ndarray:
    T = np.empty((t.size, n + 1))
    T[:, 0] = 1.0
    if n >= 1:
        T[:, 1] = t
    for j in range(2, n + 1):
        T[:, j] = 2.0 * t * T[:, j - 1] - T[:, j - 2]
    return T


def _power_table(t: np.ndarray, n: int) -> np.ndarray:
    T = np.empty((t.size, n + 1))
    T[:, 0] = 1.0
    for j in range(1, n + 1):
        T[:, j] = T[:, j - 1] * t
    return T


class Polynomial:
    """Real polynomial in ``dim`` variables.

    Parameters
    ----------
    dim:
        Number of variables.
    coeffs:
        Sparse map multi-index -> coefficient.  Mutually exclusive with
        ``dense``.
    degree:
        Declared degree; must be at least the largest stored total degree.
        Defaults to that largest total degree.
    basis:
        ``"monomial"`` or ``"chebyshev"``.
    box:
        Half-width of the centred box of the Chebyshev basis.
    dense:
        Dense coefficient array of shape ``(n1+1, ..., ndim+1)``.
    """

    def __init__(
        self,
        dim: int,
        coeffs: Mapping[MultiIndex, float] | None = None,
        *,
        degree: int | None = None,
        basis: str = "monomial",
        box: float = 1.0,
        dense: np.ndarray | None = None,
    ) -> None:
        if dim < 1:
            raise ValueError("dim must be positive")
        if basis not in BASES:
            raise ValueError(f"unknown basis {basis!r}")
        if not box > 0:
            raise ValueError("box must be positive")
        if (coeffs is None) == (dense is None):
            raise ValueError("give exactly one of coeffs or dense")
        self.dim = int(dim)
        self.basis = basis
        self.box = float(box)
        self._coeffs: dict[MultiIndex, float] | None = None
        self._dense: np.ndarray | None = None
        if dense is not None:
            arr = np.asarray(dense, dtype=float)
            if arr.ndim != dim:
                raise ValueError("dense array rank must equal dim")
            if not np.all(np.isfinite(arr)):
                raise ValueError("non-finite coefficient")
            self._dense = arr
            nz = np.argwhere(arr != 0.0)
            top = int(nz.sum(axis=1).max()) if nz.size else 0
        else:
            clean: dict[MultiIndex, float] = {}
            for idx, c in coeffs.items():
                idx = tuple(int(i) for i in idx)
                if len(idx) != dim or min(idx, default=0) < 0:
                    raise ValueError(f"bad multi-index {idx}")
                c = float(c)
                if not math.isfinite(c):
                    raise ValueError("non-finite coefficient")
                if c != 0.0:
                    clean[idx] = clean.get(idx, 0.0) + c
            self._coeffs = {k: v for k, v in clean.items() if v != 0.0}
            top = max((sum(i) for i in self._coeffs), default=0)
        if degree is None:
            degree = top
        if degree < top:
            raise ValueError(f"declared degree {degree} below stored degree {top}")
        self.degree = int(degree)

    # construction helpers -------------------------------------------------
    @classmethod
    def constant(cls, dim: int, c: float, basis: str = "monomial", box: float = 1.0) -> "Polynomial":
        return cls(dim, {(0,) * dim: c}, degree=0, basis=basis, box=box)

    @classmethod
    def from_terms(cls, dim: int, terms: Iterable[tuple[Iterable[int], float]], **kw) -> "Polynomial":
        acc: dict[MultiIndex, float] = defaultdict(float)
        for idx, c in terms:
            acc[tuple(idx)] += c
        return cls(dim, dict(acc), **kw)

    # views -----------------------------------------------------------------
    @property
    def coeffs(self) -> dict[MultiIndex, float]:
        if self._coeffs is None:
            arr = self._dense
            nz = np.argwhere(arr != 0.0)
            self._coeffs = {tuple(int(v) for v in idx): float(arr[tuple(idx)]) for idx in nz}
        return self._coeffs

    def max_exponents(self) -> tuple[int, ...]:
        if self._dense is not None:
            return tuple(s - 1 for s in self._dense.shape)
        if not self._coeffs:
            return (0,) * self.dim
        return tuple(int(v) for v in np.max(np.array(list(self._coeffs)), axis=0))

    def dense(self) -> np.ndarray:
        """Dense coefficient array indexed by exponents."""
        if self._dense is None:
            shape = tuple(m + 1 for m in self.max_exponents())
            arr = np.zeros(shape)
            for idx, c in self.coeffs.items():
                arr[idx] = c
            self._dense = arr
        return self._dense

    @property
    def n_terms(self) -> int:
        if self._coeffs is None:
            return int(np.count_nonzero(self._dense))
        return len(self._coeffs)

    def __repr__(self) -> str:
        return (f"Polynomial(dim={self.dim}, degree={self.degree}, basis={self.basis!r}, "
                f"box={self.box:g}, terms={self.n_terms})")

    # evaluation ------------------------------------------------------------
    def evaluate(self, x: np.ndarray) -> np.ndarray | float:
        """Value at a point of shape ``(dim,)`` or at rows of ``(N, dim)``."""
        X, single = _as_points(x, self.dim)
        out = self._evaluate_rows(X)
        return float(out[0]) if single else out

    __call__ = evaluate

    def _dense_ok(self) -> bool:
        if self.dim > 2:
            return False
        if self._dense is not None:
            return True
        size = math.prod(m + 1 for m in self.max_exponents())
        return size <= 4 * max(1, self.n_terms) + 64

    def _evaluate_rows(self, X: np.ndarray) -> np.ndarray:
        if X.shape[0] == 0:
            return np.zeros(0)
        if self.n_terms == 0:
            return np.zeros(X.shape[0])
        if self.basis == "chebyshev" and self._dense_ok():
            return self._eval_cheb_dense(X / self.box)
        if self.basis == "monomial" and self.dim == 1 and self._dense_ok():
            c = self.dense()
            t = X[:, 0]
            out = np.full(t.shape, c[-1])
            for a in c[-2::-1]:
                out = out * t + a
            return out
        return self._eval_sparse(X)

    def _eval_cheb_dense(self, T: np.ndarray) -> np.ndarray:
        c = self.dense()
        n = X_n = T.shape[0]
        inside = np.all(np.abs(T) <= 1.0, axis=1)
        big = max(c.shape) - 1 >= _NUFFT_MIN_DEGREE and X_n >= _NUFFT_MIN_POINTS
        out = np.empty(n)
        if self.dim == 1:
            if big and inside.any():
                out[inside] = _nufft_1d(c, T[inside, 0])
                rest = ~inside
            else:
                rest = np.ones(n, dtype=bool)
            if rest.any():
                out[rest] = _clenshaw_1d(c, T[rest, 0])
            return out
        if big and inside.any():
            out[inside] = _nufft_2d(c, T[inside, 0], T[inside, 1])
            rest = ~inside
        else:
            rest = np.ones(n, dtype=bool)
        idx = np.flatnonzero(rest)
        if idx.size:
            n1, n2 = c.shape[0] - 1, c.shape[1] - 1
            step = max(1, 4_000_000 // (n1 + n2 + 2))
            with np.errstate(over="ignore", invalid="ignore"):
                for lo in range(0, idx.size, step):
                    sl = idx[lo:lo + step]
                    A = _cheb_table(T[sl, 0], n1)
                    B = _cheb_table(T[sl, 1], n2)
                    out[sl] = np.einsum("na,nb,ab->n", A, B, c, optimize=True) if n1 * n2 < 64 \
                        else np.sum((A @ c) * B, axis=1)
        return out

    def _eval_sparse(self, X: np.ndarray) -> np.ndarray:
        idx = np.array(list(self.coeffs), dtype=int)
        cvec = np.array(list(self.coeffs.values()))
        tops = idx.max(axis=0)
        scale = self.box if self.basis == "chebyshev" else 1.0
        table = _cheb_table if self.basis == "chebyshev" else _power_table
        out = np.empty(X.shape[0])
        step = max(1, 2_000_000 // max(1, len(cvec)))
        with np.errstate(over="ignore", invalid="ignore"):
            for lo in range(0, X.shape[0], step):
                Y = X[lo:lo + step] / scale
                prod = np.ones((Y.shape[0], len(cvec)))
                for j in range(self.dim):
                    if tops[j] == 0:
                        continue
                    tab = table(Y[:, j], int(tops[j]))
                    prod *= tab[:, idx[:, j]]
                out[lo:lo + step] = prod @ cvec
        return out

    # norms -----------------------------------------------------------------
    def coef_norm(self) -> float:
        """Sum of absolute monomial coefficients (converts Chebyshev first)."""
        p = self if self.basis == "monomial" else self.to_monomial()
        return float(sum(abs(c) for c in p.coeffs.values()))

    def log_coef_norm_bound(self, row_l1: np.ndarray | None = None) -> float:
        """Certified upper bound on ``log coef_norm`` without conversion.

        For the Chebyshev basis this uses coefNorm(T_n(x/box)) = |T_n(i/box)|
        and submultiplicativity.  ``row_l1[j]`` (default 1) is the l1 norm of
        the linear form substituted for variable ``j``.
        """
        r = np.ones(self.dim) if row_l1 is None else np.asarray(row_l1, dtype=float)
        if self.n_terms == 0:
            return -math.inf
        idx = np.array(list(self.coeffs), dtype=int)
        with np.errstate(divide="ignore"):
            logc = np.log(np.abs(np.array(list(self.coeffs.values()))))
            for j in range(self.dim):
                if self.basis == "chebyshev":
                    logc = logc + _cheb_log_abs_imag(idx[:, j], r[j] / self.box)
                else:
                    logc = logc + idx[:, j] * math.log(r[j]) if r[j] > 0 else \
                        np.where(idx[:, j] > 0, -np.inf, logc)
        return float(np.logaddexp.reduce(logc))

    def coef_norm_bound(self) -> float:
        with np.errstate(over="ignore"):
            return float(np.exp(self.log_coef_norm_bound()))

    def abs_coef_sum(self) -> float:
        """Sum of absolute coefficients in the stored basis."""
        if self._dense is not None:
            return float(np.abs(self._dense).sum())
        return float(sum(abs(c) for c in self.coeffs.values()))

    # arithmetic ------------------------------------------------------------
    def _compatible(self, other: "Polynomial") -> tuple["Polynomial", "Polynomial"]:
        if self.dim != other.dim:
            raise ValueError("dimension mismatch")
        if self.basis == other.basis and (self.basis == "monomial" or self.box == other.box):
            return self, other
        return self.to_monomial(), other.to_monomial()

    def add(self, other: "Polynomial") -> "Polynomial":
        a, b = self._compatible(other)
        acc = dict(a.coeffs)
        for idx, c in b.coeffs.items():
            prev = acc.get(idx, 0.0)
            s = prev + c
            # cancellation noise is dropped
            acc[idx] = 0.0 if abs(s) < PRUNE_REL * max(abs(prev), abs(c)) else s
        return Polynomial(self.dim, acc, degree=max(a.degree, b.degree), basis=a.basis, box=a.box)

    __add__ = add

    def scale(self, c: float) -> "Polynomial":
        if self._dense is not None:
            return Polynomial(self.dim, dense=self._dense * c, degree=self.degree,
                              basis=self.basis, box=self.box)
        return Polynomial(self.dim, {k: v * c for k, v in self.coeffs.items()},
                          degree=self.degree, basis=self.basis, box=self.box)

    def __neg__(self) -> "Polynomial":
        return self.scale(-1.0)

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self.add(other.scale(-1.0))

    def to_monomial(self) -> "Polynomial":
        """Exact change of basis (up to rounding); intended for moderate degree."""
        if self.basis == "monomial":
            return self
        tops = self.max_exponents()
        mats = []
        for j in range(self.dim):
            A = cheb_to_monomial_matrix(tops[j])
            mats.append((A, np.abs(A), self.box ** -np.arange(tops[j] + 1.0)))
        acc: dict[MultiIndex, float] = defaultdict(float)
        noise: dict[MultiIndex, float] = defaultdict(float)
        for idx, c in self.coeffs.items():
            rows = [mats[j][0][idx[j]] for j in range(self.dim)]
            supports = [np.flatnonzero(r) for r in rows]
            for combo in itertools.product(*supports):
                v = c
                for j, e in enumerate(combo):
                    v *= rows[j][e]
                acc[combo] += v
                noise[combo] += abs(v)
        out: dict[MultiIndex, float] = {}
        for idx, v in acc.items():
            if abs(v) <= PRUNE_REL * noise[idx]:
                continue
            for j, e in enumerate(idx):
                v *= mats[j][2][e]
            if v != 0.0:
                out[idx] = v
        return Polynomial(self.dim, out, degree=self.degree, basis="monomial")

    def compose_linear(self, W: np.ndarray) -> "Polynomial":
        """Return x -> P(W x) for W of shape ``(dim, d)``, in monomial form."""
        W = np.asarray(W, dtype=float)
        if W.ndim != 2 or W.shape[0] != self.dim:
            raise ValueError(f"W must have {self.dim} rows")
        d = W.shape[1]
        P = self.to_monomial()
        forms = [{tuple(int(i == j) for i in range(d)): W[r, j] for j in range(d) if W[r, j] != 0.0}
                 for r in range(self.dim)]
        powers: dict[tuple[int, int], dict[MultiIndex, float]] = {}

        def power(r: int, e: int) -> dict[MultiIndex, float]:
            if e == 0:
                return {(0,) * d: 1.0}
            key = (r, e)
            if key not in powers:
                powers[key] = _mul_sparse(power(r, e - 1), forms[r])
            return powers[key]

        acc: dict[MultiIndex, float] = defaultdict(float)
        for idx, c in P.coeffs.items():
            term = {(0,) * d: c}
            for r, e in enumerate(idx):
                if e:
                    term = _mul_sparse(term, power(r, e))
            for k, v in term.items():
                acc[k] += v
        return Polynomial(d, dict(acc), degree=self.degree, basis="monomial")

    def derivative(self, axis: int) -> "Polynomial":
        """Partial derivative of a monomial-basis polynomial."""
        if self.basis != "monomial":
            return self.to_monomial().derivative(axis)
        out: dict[MultiIndex, float] = {}
        for idx, c in self.coeffs.items():
            e = idx[axis]
            if e:
                new = list(idx)
                new[axis] = e - 1
                out[tuple(new)] = out.get(tuple(new), 0.0) + c * e
        return Polynomial(self.dim, out, degree=max(0, self.degree - 1))

    # records ---------------------------------------------------------------
    def to_record(self) -> dict:
        return {
            "kind": "polynomial",
            "dim": self.dim,
            "degree": self.degree,
            "basis": self.basis,
            "box": self.box,
            "terms": [[list(k), v] for k, v in sorted(self.coeffs.items())],
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "Polynomial":
        terms = {tuple(k): float(v) for k, v in rec["terms"]}
        return cls(int(rec["dim"]), terms, degree=int(rec["degree"]) if "degree" in rec else None,
                   basis=rec.get("basis", "monomial"), box=float(rec.get("box", 1.0)))


def _mul_sparse(a: Mapping[MultiIndex, float], b: Mapping[MultiIndex, float]) -> dict[MultiIndex, float]:
    out: dict[MultiIndex, float] = defaultdict(float)
    for ka, va in a.items():
        for kb, vb in b.items():
            out[tuple(x + y for x, y in zip(ka, kb))] += va * vb
    return dict(out)


@dataclass(frozen=True)
class RadialPower:
    """``scale * (2 ||x|| / R) ** (2 * half_degree)`` on R^dim."""

    dim: int
    scale: float
    R: float
    half_degree: int

    @property
    def degree(self) -> int:
        return 2 * self.half_degree

    def log_evaluate(self, x: np.ndarray) -> np.ndarray:
        X, _ = _as_points(x, self.dim)
        r = np.linalg.norm(X, axis=1)
        with np.errstate(divide="ignore"):
            return math.log(abs(self.scale)) + self.degree * np.log(2.0 * r / self.R)

    def evaluate(self, x: np.ndarray) -> np.ndarray | float:
        X, single = _as_points(x, self.dim)
        if self.half_degree == 0:
            out = np.full(X.shape[0], self.scale)
        else:
            r2 = np.einsum("ij,ij->i", X, X) * (4.0 / self.R ** 2)
            with np.errstate(over="ignore"):
                out = self.scale * r2 ** self.half_degree
        return float(out[0]) if single else out

    __call__ = evaluate

    def log_coef_norm(self, gram_l1: float | None = None) -> float:
        """log of the monomial coefficient norm.

        Expanding (sum_i x_i^2)^l gives multinomial weights summing to dim^l.
        ``gram_l1`` replaces ``dim`` by sum |G_ab| when composed with a map whose
        Gram matrix is G."""
        base = float(self.dim) if gram_l1 is None else gram_l1
        if self.half_degree == 0:
            return math.log(abs(self.scale))
        return math.log(abs(self.scale)) + self.half_degree * (math.log(4.0 / self.R ** 2) + math.log(base))

    def to_polynomial(self) -> Polynomial:
        """Monomial expansion; coefficients may underflow for large degree."""
        l2 = self.half_degree
        c0 = self.scale * (4.0 / self.R ** 2) ** l2
        acc: dict[MultiIndex, float] = {}
        for parts in _compositions(l2, self.dim):
            coef = math.factorial(l2)
            for p in parts:
                coef //= math.factorial(p)
            acc[tuple(2 * p for p in parts)] = c0 * coef
        return Polynomial(self.dim, acc, degree=self.degree)

    def to_record(self) -> dict:
        return {"kind": "radial", "dim": self.dim, "scale": self.scale, "R": self.R,
                "half_degree": self.half_degree}


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


@dataclass(frozen=True)
class PolySum:
    """Structured polynomial ``x -> sum(term(W x)) + const``.

    Keeps a high-degree Chebyshev part and a radial dominator apart so that
    neither is ever forced through a monomial expansion.  ``W`` of shape
    ``(k, d)`` pulls the sum back from R^k to R^d; ``None`` means identity.
    """

    terms: tuple
    const: float = 0.0
    W: np.ndarray | None = None

    @property
    def base_dim(self) -> int:
        return self.terms[0].dim

    @property
    def dim(self) -> int:
        return self.base_dim if self.W is None else self.W.shape[1]

    @property
    def degree(self) -> int:
        return max(t.degree for t in self.terms)

    def project(self, x: np.ndarray) -> tuple[np.ndarray, bool]:
        X, single = _as_points(x, self.dim)
        return (X if self.W is None else X @ self.W.T), single

    def evaluate(self, x: np.ndarray) -> np.ndarray | float:
        Y, single = self.project(x)
        out = np.full(Y.shape[0], self.const)
        with np.errstate(over="ignore", invalid="ignore"):
            for t in self.terms:
                out = out + t.evaluate(Y)
        return float(out[0]) if single else out

    __call__ = evaluate

    def pullback(self, W: np.ndarray) -> "PolySum":
        W = np.asarray(W, dtype=float)
        if W.shape[0] != self.dim:
            raise ValueError("W rows must match polynomial dimension")
        full = W if self.W is None else self.W @ W
        return PolySum(self.terms, self.const, full)

    def log_coef_norm_bound(self) -> float:
        logs = [math.log(abs(self.const))] if self.const else []
        if self.W is None:
            row_l1 = None
            gram = None
        else:
            row_l1 = np.abs(self.W).sum(axis=1)
            gram = float(np.abs(self.W.T @ self.W).sum())
        for t in self.terms:
            if isinstance(t, RadialPower):
                logs.append(t.log_coef_norm(gram))
            else:
                logs.append(t.log_coef_norm_bound(row_l1))
        return float(np.logaddexp.reduce(np.array(logs))) if logs else -math.inf

    def to_monomial(self) -> Polynomial:
        acc = Polynomial.constant(self.base_dim, self.const)
        for t in self.terms:
            p = t.to_polynomial() if isinstance(t, RadialPower) else t.to_monomial()
            acc = acc.add(p)
        return acc if self.W is None else acc.compose_linear(self.W)

    def to_record(self) -> dict:
        return {
            "kind": "sum",
            "const": self.const,
            "W": None if self.W is None else self.W.tolist(),
            "terms": [t.to_record() for t in self.terms],
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "PolySum":
        terms = []
        for t in rec["terms"]:
            if t["kind"] == "radial":
                terms.append(RadialPower(int(t["dim"]), float(t["scale"]), float(t["R"]),
                                         int(t["half_degree"])))
            else:
                terms.append(Polynomial.from_record(t))
        W = None if rec.get("W") is None else np.asarray(rec["W"], dtype=float)
        return cls(tuple(terms), float(rec.get("const", 0.0)), W)


def chebyshev_basis_indices(dim: int, degree: int) -> np.ndarray:
    """All multi-indices of total degree <= degree, graded order."""
    out = [idx for idx in itertools.product(range(degree + 1), repeat=dim) if sum(idx) <= degree]
    out.sort(key=lambda i: (sum(i), i))
    return np.array(out, dtype=int).reshape(-1, dim)


def basis_matrix(points: np.ndarray, indices: np.ndarray, basis: str = "chebyshev",
                 box: float = 1.0) -> np.ndarray:
    """Matrix of basis functions (columns) at points (rows)."""
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    tops = indices.max(axis=0) if indices.size else np.zeros(X.shape[1], dtype=int)
    out = np.ones((X.shape[0], indices.shape[0]))
    table = _cheb_table if basis == "chebyshev" else _power_table
    scale = box if basis == "chebyshev" else 1.0
    for j in range(X.shape[1]):
        tab = table(X[:, j] / scale, int(tops[j]))
        out *= tab[:, indices[:, j]]
    return out
