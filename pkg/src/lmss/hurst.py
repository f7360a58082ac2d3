"""Hurst functional index, the metric rho and exponent bookkeeping.

A :class:`HurstSpec` is one of a closed set of built-in evaluators
(``constant``, ``power_law``, ``affine``, ``table``) so that every run can be
reproduced from a JSON document. Downstream modules only ever call
``spec(u)`` or :func:`eval_hurst`.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

KINDS = ("constant", "power_law", "affine", "table")

_BOUND_TOL = 1e-12


class HurstBoundError(ValueError):
    """An evaluated exponent left the declared band [m_l, M_l]."""


class ConditionC1Error(ValueError):
    """``d < sum_l 1/h_l`` fails, so gamma/beta/kappa are undefined."""


@dataclass(frozen=True)
class Rect:
    """Closed rectangle ``prod_l [lower_l, upper_l]`` in R_+^N."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(x) for x in np.atleast_1d(self.lower))
        hi = tuple(float(x) for x in np.atleast_1d(self.upper))
        if len(lo) != len(hi):
            raise ValueError("lower and upper have different dimensions")
        if any(a < 0 for a in lo):
            raise ValueError("rectangle must lie in R_+^N")
        if any(not a < b for a, b in zip(lo, hi)):
            raise ValueError(f"empty rectangle {lo} x {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def cube(cls, eps: float, T: float, N: int) -> "Rect":
        return cls((eps,) * N, (T,) * N)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))

    def lattice(self, density: int) -> np.ndarray:
        """Inclusive tensor grid with ``density`` points per axis, shape (P, N)."""
        axes = [np.linspace(a, b, density) for a, b in zip(self.lower, self.upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)

    def contains(self, points, tol: float = 1e-12) -> np.ndarray:
        p = np.atleast_2d(points)
        return np.all((p >= np.array(self.lower) - tol) & (p <= np.array(self.upper) + tol), axis=-1)


@dataclass(frozen=True)
class HurstSpec:
    """Hurst functional index ``H(u) = (h_1(u), ..., h_N(u))``.

    Parameters
    ----------
    kind : str
        One of ``constant``, ``power_law``, ``affine``, ``table``.
    params : dict
        Evaluator parameters, see the ``from_*`` constructors.
    m, M : sequence of float
        Declared lower/upper bounds of each component (condition H1).
    c : float
        Declared rho-Lipschitz constant (condition H2).
    """

    kind: str
    params: dict
    m: tuple
    M: tuple
    c: float = 1.0
    _interp: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown Hurst kind {self.kind!r}; expected one of {KINDS}")
        m = tuple(float(x) for x in np.atleast_1d(self.m))
        M = tuple(float(x) for x in np.atleast_1d(self.M))
        if len(m) != len(M):
            raise ValueError("m and M have different lengths")
        for lo, hi in zip(m, M):
            # constant specs legitimately have m_l == M_l == h_l
            if not (0 < lo <= hi < 1):
                raise ValueError(f"need 0 < m_l <= M_l < 1, got m={m}, M={M}")
            if lo == hi and self.kind != "constant":
                raise ValueError("m_l < M_l required for a functional index")
        if self.c < 0:
            raise ValueError("Lipschitz constant c must be nonnegative")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "M", M)
        if self.kind == "table":
            axes = [np.asarray(a, float) for a in self.params["axes"]]
            values = np.asarray(self.params["values"], float)
            if values.shape != tuple(len(a) for a in axes) + (len(axes),):
                raise ValueError("table values must have shape (n_1, ..., n_N, N)")
            object.__setattr__(self, "_interp", RegularGridInterpolator(axes, values))
        if self.kind == "power_law" and len(m) != 1:
            raise ValueError("power_law index is one-dimensional")

    # -- constructors -----------------------------------------------------
    @classmethod
    def constant(cls, h: Sequence[float], c: float = 0.0) -> "HurstSpec":
        h = [float(x) for x in np.atleast_1d(h)]
        return cls("constant", {"h": h}, tuple(h), tuple(h), c)

    @classmethod
    def power_law(cls, inv_m: int, q: float, k: float, upper: float | None = None,
                  c: float = 1.0) -> "HurstSpec":
        """``h(v) = 1/inv_m - (v - q)^k`` on ``[q, upper]``, clamped outside.

        Clamping extends the index to all of R_+ so that H1 holds globally
        and ``H(1)`` is defined for the normalizing constant.
        """
        if upper is None:
            upper = 1.0 / inv_m
        top = 1.0 / inv_m
        bottom = top - (upper - q) ** k
        return cls("power_law", {"inv_m": int(inv_m), "q": float(q), "k": float(k),
                                 "upper": float(upper)}, (bottom,), (top,), c)

    @classmethod
    def affine(cls, intercept, slope, m, M, c: float = 1.0) -> "HurstSpec":
        intercept = [float(x) for x in np.atleast_1d(intercept)]
        slope = np.atleast_2d(np.asarray(slope, float)).tolist()
        return cls("affine", {"intercept": intercept, "slope": slope}, m, M, c)

    @classmethod
    def table(cls, axes, values, m, M, c: float = 1.0) -> "HurstSpec":
        return cls("table", {"axes": [list(map(float, a)) for a in axes],
                             "values": np.asarray(values, float).tolist()}, m, M, c)

    # -- evaluation -------------------------------------------------------
    @property
    def dim(self) -> int:
        return len(self.m)

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    def __call__(self, u) -> np.ndarray:
        """Evaluate H without bound checks; ``u`` has shape (..., N)."""
        u = np.asarray(u, float)
        N = self.dim
        if u.ndim == 0 or u.shape[-1] != N:
            if N == 1:
                u = u[..., None]
            else:
                raise ValueError(f"points must have trailing dimension {N}")
        p = self.params
        if self.kind == "constant":
            return np.broadcast_to(np.asarray(p["h"]), u.shape).copy()
        if self.kind == "power_law":
            v = np.clip(u, p["q"], p["upper"])
            return 1.0 / p["inv_m"] - (v - p["q"]) ** p["k"]
        if self.kind == "affine":
            A = np.asarray(p["slope"])
            return np.asarray(p["intercept"]) + u @ A.T
        axes = self.params["axes"]
        clipped = np.stack([np.clip(u[..., i], axes[i][0], axes[i][-1]) for i in range(N)], -1)
        return self._interp(clipped.reshape(-1, N)).reshape(u.shape)

    # -- serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.params, "m": list(self.m),
                "M": list(self.M), "c": self.c}

    @classmethod
    def from_dict(cls, doc: dict) -> "HurstSpec":
        extra = set(doc) - {"kind", "params", "m", "M", "c"}
        if extra:
            raise ValueError(f"unknown HurstSpec fields: {sorted(extra)}")
        if doc["kind"] == "constant" and "m" not in doc:
            return cls.constant(doc["params"]["h"], doc.get("c", 0.0))
        return cls(doc["kind"], dict(doc["params"]), doc["m"], doc["M"], doc.get("c", 1.0))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "HurstSpec":
        return cls.from_dict(json.loads(text))


def eval_hurst(spec: HurstSpec, u) -> np.ndarray:
    """Evaluate ``H(u)`` and enforce ``u`` in R_+^N and the H1 band."""
    u = np.asarray(u, float)
    if np.any(u < 0):
        raise ValueError("u must lie in R_+^N")
    h = spec(u)
    lo, hi = np.asarray(spec.m), np.asarray(spec.M)
    if np.any(h < lo - _BOUND_TOL) or np.any(h > hi + _BOUND_TOL):
        raise HurstBoundError(f"H(u) outside [m, M]; misconfigured spec ({spec.kind})")
    return h


def rho_metric(u, v, m, M) -> np.ndarray:
    """``rho(u, v) = sum_l min(|u_l - v_l|^m_l, |u_l - v_l|^M_l)``.

    Broadcasts over leading dimensions of ``u`` and ``v``.
    """
    u, v = np.asarray(u, float), np.asarray(v, float)
    m, M = np.asarray(m, float), np.asarray(M, float)
    if u.shape[-1:] != v.shape[-1:] or u.shape[-1:] != m.shape:
        raise ValueError("dimension mismatch in rho_metric")
    delta = np.abs(u - v)
    return np.sum(np.minimum(delta ** m, delta ** M), axis=-1)


@dataclass
class H1H2Report:
    max_ratio: float
    lipschitz_c: float
    lipschitz_ok: bool
    h1_violations: int
    h_min: np.ndarray
    h_max: np.ndarray

    @property
    def passed(self) -> bool:
        return self.lipschitz_ok and self.h1_violations == 0


def check_H1_H2(spec: HurstSpec, rect: Rect, grid_density: int = 21) -> H1H2Report:
    """Dense-grid diagnostic of conditions H1 and H2 on ``rect``.

    The H2 ratio ``max_l |h_l(u) - h_l(v)| / rho(u, v)`` is taken over all
    distinct pairs of grid points; nothing is raised.
    """
    if grid_density < 2:
        raise ValueError("grid_density must be >= 2")
    pts = rect.lattice(grid_density)
    h = spec(pts)
    lo, hi = np.asarray(spec.m), np.asarray(spec.M)
    violations = int(np.sum(np.any((h < lo - _BOUND_TOL) | (h > hi + _BOUND_TOL), axis=-1)))
    best = 0.0
    if not spec.is_constant:
        # chunk the pair scan to keep memory bounded
        for start in range(0, len(pts), 256):
            sl = slice(start, start + 256)
            r = rho_metric(pts[sl, None, :], pts[None, :, :], lo, hi)
            dh = np.max(np.abs(h[sl, None, :] - h[None, :, :]), axis=-1)
            mask = r > 0
            if np.any(mask):
                best = max(best, float(np.max(dh[mask] / r[mask])))
    return H1H2Report(best, spec.c, best <= spec.c, violations, h.min(axis=0), h.max(axis=0))


def gamma_index(h, d: int) -> int:
    """Smallest ``m`` with ``d < sum_{l<=m} 1/h_l`` (coordinates taken in order)."""
    csum = np.cumsum(1.0 / np.asarray(h, float))
    hits = np.nonzero(d < csum)[0]
    if hits.size == 0:
        raise ConditionC1Error(f"condition C1 violated: d={d} >= sum 1/h_l = {csum[-1]:.12g}")
    return int(hits[0]) + 1


def beta_exponent(h, d: int, perm: Sequence[int] | None = None) -> float:
    """Local-time scaling exponent of the reordered vector ``sigma(H)``.

    ``beta = N - gamma + h'_gamma * (sum_{l<=gamma} 1/h'_l - d)`` with
    ``h' = h[perm]``; ``perm`` is 0-based and defaults to the identity.
    """
    h = np.asarray(h, float)
    if perm is not None:
        h = h[list(perm)]
    g = gamma_index(h, d)
    return float(len(h) - g + h[g - 1] * (np.sum(1.0 / h[:g]) - d))


def beta_bar(spec: HurstSpec, rect: Rect, d: int, grid_density: int = 11) -> float:
    """Supremum of :func:`beta_exponent` over grid points of ``rect`` and all permutations."""
    N = spec.dim
    if N > 4:
        raise ValueError("exhaustive permutation search limited to N <= 4")
    perms = list(itertools.permutations(range(N)))
    best = -np.inf
    for hv in spec(rect.lattice(grid_density)):
        for p in perms:
            best = max(best, beta_exponent(hv, d, p))
    return float(best)


def holder_p_weights(h) -> np.ndarray:
    """Hoelder weights ``p_l = sum_l' h_l / h_l'``; their reciprocals sum to one."""
    h = np.asarray(h, float)
    return h * np.sum(1.0 / h)


def kappa_range(h, d: int, n: int) -> tuple[float, float]:
    """Open interval admissible for ``kappa_n``: ``(0, (1 ∧ a/(2 gamma)) / n)``,
    where ``a = sum_{l<=gamma} 1/h_l - d``."""
    if n < 1:
        raise ValueError("moment order n must be >= 1")
    h = np.asarray(h, float)
    g = gamma_index(h, d)
    a = float(np.sum(1.0 / h[:g]) - d)
    return 0.0, min(1.0, a / (2 * g)) / n


@dataclass
class ExponentReport:
    gamma: int
    beta: float
    p_weights: np.ndarray
    kappa_interval: tuple

    @property
    def kappa_midpoint(self) -> float:
        return 0.5 * (self.kappa_interval[0] + self.kappa_interval[1])


def exponent_report(h, d: int, n: int = 1) -> ExponentReport:
    return ExponentReport(gamma_index(h, d), beta_exponent(h, d), holder_p_weights(h),
                          kappa_range(h, d, n))
