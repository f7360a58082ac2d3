"""Moving-average kernel, its normalizing constant and L^alpha (quasi)norms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .hurst import HurstSpec, Rect
from .quadrature import QuadratureSpec, axis_rule
from .stable import RngStream


def positive_power(x, e):
    """``x_+^e`` with the convention ``0`` wherever ``x <= 0``."""
    x = np.asarray(x, float)
    e = np.asarray(e, float)
    pos = x > 0
    out = np.zeros(np.broadcast(x, e).shape)
    xb, eb = np.broadcast_arrays(x, e)
    out[pos] = xb[pos] ** eb[pos]
    return out


def _factor(du, d0, u, e):
    """``(du)_+^e - (d0)_+^e`` where ``du - d0 = u``; stable when both are positive."""
    du, d0, u, e = np.broadcast_arrays(*(np.asarray(x, float) for x in (du, d0, u, e)))
    out = positive_power(du, e) - positive_power(d0, e)
    both = (du > 0) & (d0 > 0)
    if np.any(both):
        db, ub, eb = d0[both], u[both], e[both]
        out[both] = db ** eb * np.expm1(eb * np.log1p(ub / db))
    return out


def kernel_factor(h, alpha: float, u, v):
    """One-axis factor ``(u - v)_+^{h - 1/alpha} - (-v)_+^{h - 1/alpha}``."""
    e = np.asarray(h, float) - 1.0 / alpha
    return _factor(np.subtract(u, v), np.negative(v), u, e)


def rule_factor(h, alpha: float, u, rule) -> np.ndarray:
    """``kernel_factor`` at the nodes of an :class:`AxisRule`, rows indexed by ``u``.

    Distances are formed from the node anchors so that nodes clustered
    against a break keep their full relative precision.
    """
    e = np.atleast_1d(np.asarray(h, float))[:, None] - 1.0 / alpha
    u = np.atleast_1d(np.asarray(u, float))
    return _factor(rule.distance_from(u), rule.distance_from([0.0]), u[:, None], e)


def kernel_g(h, u, v, c_norm: float, alpha: float = 2.0) -> float:
    """Kernel ``g^H(u, v) = c_H prod_l [(u_l - v_l)_+^{e_l} - (-v_l)_+^{e_l}]``.

    Returns ``+inf`` at an exact singular point (``v_l = u_l`` or ``v_l = 0``
    with a negative exponent).
    """
    h = np.atleast_1d(np.asarray(h, float))
    u = np.atleast_1d(np.asarray(u, float))
    v = np.atleast_1d(np.asarray(v, float))
    e = h - 1.0 / alpha
    if np.any((e < 0) & ((v == u) | ((v == 0) & (u > 0)))):
        return math.inf
    return float(c_norm * np.prod(kernel_factor(h, alpha, u, v)))


def _axis_integral(h: float, alpha: float, epsrel: float = 1e-11):
    """``int_R |(1 - v)_+^e - (-v)_+^e|^alpha dv`` and an error estimate.

    The part ``v in (0, 1)`` equals ``1/(h alpha)``. For ``v = -w < 0`` the
    integrand behaves like ``w^{e alpha}`` at 0 and ``w^{(e-1) alpha}`` at
    infinity; both ends are handled with algebraic quadrature weights and
    the difference is formed with ``expm1`` to avoid cancellation.
    """
    e = h - 1.0 / alpha
    inner = 1.0 / (h * alpha)
    if e == 0:
        return inner, 0.0
    opts = dict(epsabs=0.0, epsrel=epsrel, limit=500)

    # w in (0, 1]: divide out w^{e alpha} when it is singular
    if e < 0:
        near, err1 = integrate.quad(
            lambda w: abs(np.expm1(e * np.log1p(w) - e * np.log(w))) ** alpha
            if w > 0 else 1.0,
            0.0, 1.0, weight="alg", wvar=(e * alpha, 0.0), **opts)
    else:
        near, err1 = integrate.quad(lambda w: abs((1.0 + w) ** e - w ** e) ** alpha,
                                    0.0, 1.0, **opts)
    # w = 1/s in (0, 1]: integrand = s^{alpha(1-h)-1} |expm1(e log1p s)/s|^alpha
    far, err2 = integrate.quad(
        lambda s: abs(np.expm1(e * np.log1p(s)) / s) ** alpha if s > 0 else abs(e) ** alpha,
        0.0, 1.0, weight="alg", wvar=(alpha * (1.0 - h) - 1.0, 0.0), **opts)
    return inner + near + far, err1 + err2


def normalizing_constant(h, alpha: float, quad: QuadratureSpec | None = None,
                         return_err: bool = False):
    """Constant ``c_H`` such that the field has unit L^alpha norm at ``u = (1, ..., 1)``.

    The norm factorizes over axes, so ``c_H = (prod_l I_l)^{-1/alpha}`` with
    one-dimensional integrals ``I_l`` evaluated by adaptive quadrature.
    """
    h = np.atleast_1d(np.asarray(h, float))
    if np.any((h <= 0) | (h >= 1)):
        raise ValueError("h must lie in (0, 1)^N")
    epsrel = 1e-11 if quad is None else min(1e-8, quad.target_rel_err * 1e-3)
    total, rel = 1.0, 0.0
    for hl in h:
        val, err = _axis_integral(float(hl), alpha, epsrel)
        if not np.isfinite(val):
            raise ArithmeticError("normalizing integral did not converge")
        total *= val
        rel += err / val
    c = total ** (-1.0 / alpha)
    if return_err:
        return c, rel / alpha
    return c


def c_norm_for(spec: HurstSpec, alpha: float) -> float:
    """Normalizing constant fixed at ``H(1, ..., 1)`` for both LFSS and LMSS."""
    return normalizing_constant(spec(np.ones(spec.dim)), alpha)


@dataclass
class LinearCombination:
    coefficients: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        self.coefficients = np.atleast_1d(np.asarray(self.coefficients, float))
        self.points = np.atleast_2d(np.asarray(self.points, float))
        if self.points.shape[0] != self.coefficients.shape[0] or self.coefficients.size < 1:
            raise ValueError("need one point per coefficient and at least one term")

    @property
    def count(self) -> int:
        return self.coefficients.size

    def merged(self) -> "LinearCombination":
        """Sum the coefficients of repeated points and drop zero terms."""
        pts, inv = np.unique(self.points, axis=0, return_inverse=True)
        coef = np.zeros(pts.shape[0])
        np.add.at(coef, np.ravel(inv), self.coefficients)
        keep = coef != 0
        if not np.any(keep):
            return LinearCombination(np.zeros(1), pts[:1])
        return LinearCombination(coef[keep], pts[keep])


@dataclass
class NormResult:
    value: float
    alpha_power: float
    tail_share: float
    nodes: int


def _axis_power(h_min: float, alpha: float, quad: QuadratureSpec) -> float:
    return float(np.clip(2.0 / (h_min * alpha), 2.0, quad.max_power))


def _tail_power(h_max: float, alpha: float, quad: QuadratureSpec) -> float:
    return float(np.clip(2.0 / (alpha * (1.0 - h_max)), 2.0, quad.max_power))


def combination_nodes(comb: LinearCombination, H: np.ndarray, alpha: float,
                      quad: QuadratureSpec, extra_breaks=()):
    """Per-axis rules and factor matrices ``F_l[j, node]`` for a combination."""
    N = comb.points.shape[1]
    rules, factors = [], []
    for l in range(N):
        breaks = np.concatenate([[0.0], comb.points[:, l], np.atleast_1d(extra_breaks)])
        rule = axis_rule(breaks, quad, _axis_power(H[:, l].min(), alpha, quad),
                         _tail_power(H[:, l].max(), alpha, quad))
        F = rule_factor(H[:, l], alpha, comb.points[:, l], rule)
        rules.append(rule)
        factors.append(F)
    return rules, factors


def _masked(rule, domain_l):
    if domain_l is None:
        return np.ones_like(rule.nodes, bool)
    lo, hi = domain_l
    return (rule.nodes > lo) & (rule.nodes <= hi)


def tensor_alpha_power(coeffs, rules, factors, alpha: float, c_norm: float,
                       domain=None, drop_tail: bool = False) -> float:
    """``int_D |c sum_j a_j prod_l F_l[j, v_l]|^alpha dv`` on the tensor grid."""
    N = len(rules)
    ws = []
    Fs = []
    for l in range(N):
        keep = _masked(rules[l], None if domain is None else domain[l])
        if drop_tail:
            keep &= ~rules[l].tail_mask
        ws.append(rules[l].weights[keep])
        Fs.append(factors[l][:, keep])
    a = np.asarray(coeffs, float) * c_norm
    if N == 1:
        s = a @ Fs[0]
        return float(ws[0] @ np.abs(s) ** alpha)
    if N == 2:
        s = (a[:, None] * Fs[0]).T @ Fs[1]
        return float(ws[0] @ (np.abs(s) ** alpha) @ ws[1])
    total = 0.0
    # N >= 3: loop over the first axis to bound memory
    rest = np.einsum  # local alias
    for i in range(Fs[0].shape[1]):
        coef = a * Fs[0][:, i]
        letters = "bcdefgh"[: N - 1]
        expr = "j," + ",".join(f"j{x}" for x in letters) + "->" + letters
        s = rest(expr, coef, *Fs[1:])
        w = ws[1]
        for wl in ws[2:]:
            w = np.multiply.outer(w, wl)
        total += ws[0][i] * float(np.sum(w * np.abs(s) ** alpha))
    return total


def lalpha_norm(comb: LinearCombination, spec: HurstSpec, alpha: float,
                quad: QuadratureSpec | None = None, c_norm: float | None = None,
                domain=None, extra_breaks=()) -> NormResult:
    """L^alpha (quasi)norm ``(int |sum_j a_j g^{H(u^j)}(u^j, v)|^alpha dv)^{1/alpha}``.

    ``domain`` optionally restricts the integral to a product of half-open
    intervals ``(lo_l, hi_l]``, one per axis (``None`` entries = full axis).

    Panels follow the kernel breaks only. Where a combination with mixed
    exponents changes sign, ``|.|^alpha`` has a cusp inside a panel; for
    ``alpha < 1`` this limits the accuracy to roughly 1e-4 relative.
    """
    quad = quad or QuadratureSpec()
    if c_norm is None:
        c_norm = c_norm_for(spec, alpha)
    comb = comb.merged()
    if not np.any(comb.coefficients):
        return NormResult(0.0, 0.0, 0.0, 0)
    H = spec(comb.points)
    rules, factors = combination_nodes(comb, H, alpha, quad, extra_breaks)
    total = tensor_alpha_power(comb.coefficients, rules, factors, alpha, c_norm, domain)
    if total == 0:
        return NormResult(0.0, 0.0, 0.0, int(np.prod([r.nodes.size for r in rules])))
    inner = tensor_alpha_power(comb.coefficients, rules, factors, alpha, c_norm, domain,
                               drop_tail=True)
    return NormResult(total ** (1.0 / alpha), total, (total - inner) / total,
                      int(np.prod([r.nodes.size for r in rules])))


@dataclass
class IncrementScan:
    min_ratio: float
    max_ratio: float
    table: list = field(default_factory=list)

    @property
    def envelope(self) -> float:
        return self.max_ratio / self.min_ratio


def increment_ratio_scan(spec: HurstSpec, rect: Rect, alpha: float, pairs: int,
                         quad: QuadratureSpec | None = None,
                         rng: RngStream | None = None, c_norm: float | None = None,
                         points=None) -> IncrementScan:
    """Ratio ``||X(u) - X(v)||_alpha / sum_l |u_l - v_l|^{h_l(u_hat)}`` over random pairs.

    ``u_hat`` is the componentwise midpoint of ``u`` and ``v``. Pairs with
    ``u == v`` are skipped. ``points`` may supply explicit ``(u, v)`` pairs.
    """
    quad = quad or QuadratureSpec()
    rng = rng or RngStream(0)
    if c_norm is None:
        c_norm = c_norm_for(spec, alpha)
    if points is None:
        gen = rng.generator()
        lo, hi = np.array(rect.lower), np.array(rect.upper)
        us = lo + (hi - lo) * gen.random((pairs, rect.dim))
        vs = lo + (hi - lo) * gen.random((pairs, rect.dim))
        points = list(zip(us, vs))
    table = []
    for u, v in points:
        u, v = np.atleast_1d(np.asarray(u, float)), np.atleast_1d(np.asarray(v, float))
        if np.array_equal(u, v):
            continue
        res = lalpha_norm(LinearCombination([1.0, -1.0], [u, v]), spec, alpha, quad, c_norm)
        h_hat = spec(0.5 * (u + v))
        denom = float(np.sum(np.abs(u - v) ** h_hat))
        table.append({"u": u.tolist(), "v": v.tolist(), "norm": res.value,
                      "denominator": denom, "ratio": res.value / denom})
    if not table:
        raise ValueError("no non-degenerate pairs")
    ratios = [row["ratio"] for row in table]
    return IncrementScan(min(ratios), max(ratios), table)
