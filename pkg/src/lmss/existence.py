"""Numerical decision of the local-time existence condition.

The condition holds when ``d < inf_I sum_l 1/h_l`` (C1), or when equality
holds and ``int_I (sum_l 1/h_l(v) - d)^{-1} dv`` is finite (C2).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .hurst import HurstSpec, Rect
from .quadrature import QuadratureSpec, axis_rule

DEFAULT_FLOOR = 0.05


def sum_inv_h(spec: HurstSpec, v) -> np.ndarray:
    return np.sum(1.0 / spec(v), axis=-1)


@dataclass
class InfimumResult:
    value: float
    argmin: np.ndarray


def infimum_sum_inv_h(spec: HurstSpec, rect: Rect, grid_density: int = 101,
                      refine_steps: int = 3) -> InfimumResult:
    """Grid scan of ``sum_l 1/h_l`` on ``rect`` followed by zoomed rescans and a bounded polish."""
    lo, hi = np.array(rect.lower), np.array(rect.upper)
    box_lo, box_hi = lo.copy(), hi.copy()
    best_v, best = None, math.inf
    for _ in range(refine_steps + 1):
        pts = Rect(tuple(box_lo), tuple(box_hi)).lattice(grid_density)
        vals = sum_inv_h(spec, pts)
        i = int(np.argmin(vals))
        if vals[i] < best:
            best, best_v = float(vals[i]), pts[i].copy()
        width = (box_hi - box_lo) / (grid_density - 1)
        box_lo = np.maximum(lo, best_v - 2 * width)
        box_hi = np.minimum(hi, best_v + 2 * width)
        if np.any(box_hi <= box_lo):
            break
    res = optimize.minimize(lambda v: float(sum_inv_h(spec, v)), best_v, method="L-BFGS-B",
                            bounds=list(zip(box_lo, box_hi)))
    if res.success and res.fun < best:
        best, best_v = float(res.fun), np.asarray(res.x, float)
    return InfimumResult(best, best_v)


@dataclass
class ExistenceReport:
    inf_sum_inv_h: float
    verdict: str
    c2_integral: float | None
    diagnostics: dict = field(default_factory=dict)

    @property
    def exists(self) -> bool:
        return self.verdict in ("C1", "C2")


def _c2_integrand(spec: HurstSpec, d: int, cap: float):
    def f(v):
        gap = sum_inv_h(spec, v) - d
        with np.errstate(divide="ignore"):
            out = np.where(gap > 0, 1.0 / np.where(gap > 0, gap, 1.0), np.inf)
        return np.minimum(out, cap)
    return f


def _capped_integral_1d(spec, rect, d, cap, split, power=4.0):
    """``int min(f, cap)`` with ``v = split +- t^power`` clustering at the minimizer."""
    f = _c2_integrand(spec, d, cap)
    a, b = rect.lower[0], rect.upper[0]
    total, err = 0.0, 0.0
    for p, q in ((split, a), (split, b)):
        length = q - p
        if abs(length) <= 0:
            continue

        def g(t, p=p, length=length):
            v = np.array([[p + length * t ** power]])
            return float(np.ravel(f(v))[0]) * abs(length) * power * t ** (power - 1)

        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", integrate.IntegrationWarning)
            val, e = integrate.quad(g, 0.0, 1.0, epsabs=1e-12, epsrel=1e-10, limit=2000)
        if caught:
            # roundoff near the cap kink; keep the estimate and its error bound
            e = max(e, abs(val) * 1e-8)
        total += val
        err += e
    return total, err


def _capped_integral_nd(spec, rect, d, cap, split, quad: QuadratureSpec):
    f = _c2_integrand(spec, d, cap)
    rules = []
    for l in range(rect.dim):
        r = axis_rule([rect.lower[l], split[l], rect.upper[l]], quad, 4.0, with_tail=False)
        rules.append((r.nodes, r.weights))
    mesh = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    W = np.ones(())
    for _, w in rules:
        W = np.multiply.outer(W, w)
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    return float(np.sum(W.ravel() * f(pts))), float("nan")


def condition_C_check(spec: HurstSpec, rect: Rect, d: int, equality_tol: float = 1e-9,
                      quad: QuadratureSpec | None = None, grid_density: int = 101,
                      caps=tuple(10.0 ** j for j in range(1, 13))) -> ExistenceReport:
    """Classify the existence condition as ``C1``, ``C2``, ``fail`` or ``indeterminate``.

    At a tie ``|d - inf| <= equality_tol * inf`` the C2 integral is evaluated
    through the capped integrals ``I_j = int min(f, cap_j)``. Finite when the
    increments shrink geometrically (ratio <= 0.5 twice) or are negligible;
    divergent when three successive increment ratios are >= 0.9 or ``I_j``
    exceeds ``1 / equality_tol``. The raw sequence is always reported.
    """
    if int(d) != d or d < 1:
        raise ValueError("d must be a positive integer")
    quad = quad or QuadratureSpec(order=8, panels_per_axis=8)
    inf = infimum_sum_inv_h(spec, rect, grid_density)
    diag = {"argmin": inf.argmin.tolist(), "equality_tol": equality_tol}
    band = equality_tol * max(1.0, abs(inf.value))
    if d < inf.value - band:
        return ExistenceReport(inf.value, "C1", None, diag)
    if d > inf.value + band:
        diag["reason"] = "d exceeds the infimum"
        return ExistenceReport(inf.value, "fail", None, diag)
    if spec.is_constant:
        # the integrand is +inf on the whole rectangle
        diag["reason"] = "integrand identically infinite"
        return ExistenceReport(inf.value, "fail", math.inf, diag)
    seq, errs = [], []
    for cap in caps:
        if rect.dim == 1:
            val, err = _capped_integral_1d(spec, rect, d, cap, float(inf.argmin[0]))
        else:
            val, err = _capped_integral_nd(spec, rect, d, cap, inf.argmin, quad)
        seq.append(val)
        errs.append(err)
    diag["capped_sequence"] = seq
    diag["caps"] = list(caps)
    diag["quad_errors"] = errs
    verdict, value = _classify(seq, 1.0 / equality_tol)
    diag["status"] = {"C2": "converged", "fail": "divergent"}.get(verdict, "indeterminate")
    return ExistenceReport(inf.value, verdict, value, diag)


def _classify(seq, blowup):
    seq = np.asarray(seq, float)
    inc = np.diff(seq)
    if seq[-1] > blowup:
        return "fail", math.inf
    if inc.size >= 3:
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = inc[1:] / inc[:-1]
        tiny = 1e-9 * (1.0 + abs(seq[-1]))
        if np.all(np.abs(inc[-2:]) <= tiny) or np.all(ratios[-2:] <= 0.5):
            return "C2", float(seq[-1])
        if ratios.size >= 3 and np.all(ratios[-3:] >= 0.9):
            return "fail", math.inf
    return "indeterminate", float(seq[-1])


def example_hurst(m: int, q: float, k: float, upper: float | None = None,
                  floor: float = DEFAULT_FLOOR) -> tuple[HurstSpec, Rect]:
    """Index ``h(v) = 1/m - (v - q)^k`` and its domain ``[q, upper]``.

    ``upper`` defaults to ``1/m`` when ``h(1/m) > 0``; otherwise the domain
    is cut where ``h`` reaches ``floor`` so that the lower bound stays
    positive. Outside the domain the index is held constant.
    """
    if int(m) != m or m < 2:
        raise ValueError("m must be an integer >= 2")
    if not k > 0 or q < 0:
        raise ValueError("need k > 0 and q >= 0")
    top = 1.0 / m
    if q >= top:
        raise ValueError("q must be below 1/m")
    if upper is None:
        if top - (top - q) ** k > 0:
            upper = top
        else:
            upper = q + (top - floor) ** (1.0 / k)
    if not q < upper <= top:
        raise ValueError("upper must lie in (q, 1/m]")
    if top - (upper - q) ** k <= 0:
        raise ValueError("h must stay positive on the domain")
    return HurstSpec.power_law(int(m), q, k, upper), Rect((q,), (upper,))
