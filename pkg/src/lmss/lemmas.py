"""Numerical checks of the standalone analytic inequalities and asymptotics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn

from .hurst import HurstSpec, Rect, kappa_range
from .kernel import LinearCombination, c_norm_for, combination_nodes, tensor_alpha_power
from .quadrature import QuadratureSpec
from .stable import RngStream

# -- integral asymptotics ----------------------------------------------------------


@dataclass
class AsymptoticCheck:
    regime: str
    A_values: np.ndarray
    integral_values: np.ndarray
    fitted_slope: float
    theory_slope: float | None
    ratio_envelope: tuple
    passed: bool
    meta: dict = field(default_factory=dict)


def regime_of(alpha: float, beta: float, tol: float = 1e-12) -> str:
    ab = alpha * beta
    if abs(ab - 1.0) <= tol:
        return "critical"
    return "supercritical" if ab > 1 else "subcritical"


def power_integral(alpha: float, beta: float, a: float, b: float, t0: float, A: float) -> float:
    """``int_a^b (A + |t - t0|^alpha)^{-beta} dt`` by adaptive quadrature.

    Each side of ``t0`` is split at ``t0 +- A^{1/alpha} 10^i`` so the peak
    of width ``A^{1/alpha}`` is always resolved.
    """
    w = A ** (1.0 / alpha)

    def f(s):
        # integrate in the offset s = |t - t0| to avoid cancellation near t0
        return (A + s ** alpha) ** (-beta)

    total = 0.0
    for end in (b, a):
        length = abs(end - t0)
        if length == 0:
            continue
        cuts = [0.0] + [w * 10.0 ** i for i in range(0, 40) if w * 10.0 ** i < length] + [length]
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            val, _ = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=1e-10, limit=200)
            total += val
    return total


def critical_expression(alpha: float, a: float, b: float, t0: float, A: float) -> float:
    w = A ** (-1.0 / alpha)
    return math.log((1.0 + (b - t0) * w) * (1.0 + (t0 - a) * w))


def verify_int_equiv(alpha: float, beta: float, a: float, b: float, t0: float,
                     A_list=tuple(10.0 ** -k for k in range(5, 9)),
                     quad: QuadratureSpec | None = None,
                     slope_rtol: float = 0.02, envelope=(0.5, 2.0),
                     max_variation: float = 2.0) -> AsymptoticCheck:
    """Check the three asymptotic branches of ``int_a^b (A + |t - t0|^alpha)^{-beta} dt``.

    Supercritical: log-log slope within ``slope_rtol`` of ``-(beta - 1/alpha)``.
    Critical: ratio to the logarithmic expression inside ``envelope``.
    Subcritical: values vary by less than a factor ``max_variation``.
    """
    if not alpha > 0 or beta < 0 or not 0 <= a < b or not a <= t0 <= b:
        raise ValueError("need alpha > 0, beta >= 0, 0 <= a < b and t0 in [a, b]")
    A = np.sort(np.asarray(A_list, float))[::-1]
    if A.size < 2 or math.log10(A[0] / A[-1]) < 3 - 1e-9:
        raise ValueError("A values must span at least 3 decades")
    vals = np.array([power_integral(alpha, beta, a, b, t0, x) for x in A])
    slope = float(np.polyfit(np.log(A), np.log(vals), 1)[0])
    regime = regime_of(alpha, beta)
    if regime == "supercritical":
        theory = -(beta - 1.0 / alpha)
        ratios = vals / A ** theory
        passed = abs(slope - theory) <= slope_rtol * abs(theory)
    elif regime == "critical":
        theory = None
        ratios = vals / np.array([critical_expression(alpha, a, b, t0, x) for x in A])
        passed = envelope[0] <= ratios.min() and ratios.max() <= envelope[1]
    else:
        theory = 0.0
        ratios = vals
        passed = vals.max() / vals.min() < max_variation
    return AsymptoticCheck(regime, A, vals, slope, theory,
                           (float(ratios.min()), float(ratios.max())), bool(passed))


# -- elementary inequalities -------------------------------------------------------


@dataclass
class InequalityCheck:
    lhs: float
    rhs: float
    satisfied: bool


def verify_triangle(alpha: float, x, rtol: float = 1e-12) -> InequalityCheck:
    """``|sum x_l|^alpha <= (N^{alpha-1} v 1) sum |x_l|^alpha``."""
    x = np.atleast_1d(np.asarray(x, float))
    N = x.size
    lhs = abs(float(np.sum(x))) ** alpha
    rhs = max(N ** (alpha - 1.0), 1.0) * float(np.sum(np.abs(x) ** alpha))
    return InequalityCheck(lhs, rhs, lhs <= rhs * (1.0 + rtol))


def verify_power_sum_equivalence(alpha: float, y, rtol: float = 1e-12) -> dict:
    """Two-sided comparison of ``(sum y_l^alpha)^{1/alpha}`` with ``sum y_l`` for ``y >= 0``.

    ``(N^{alpha-1} v 1)^{-1/alpha} S <= (sum y^alpha)^{1/alpha} <= (N^{1/alpha-1} v 1) S``.
    """
    y = np.abs(np.atleast_1d(np.asarray(y, float)))
    N = y.size
    s = float(y.sum())
    # both sides are 1-homogeneous; scaling by the max avoids underflow in y**alpha
    top = float(y.max())
    mid = top * float(np.sum((y / top) ** alpha)) ** (1.0 / alpha) if top > 0 else 0.0
    lo = max(N ** (alpha - 1.0), 1.0) ** (-1.0 / alpha) * s
    hi = max(N ** (1.0 / alpha - 1.0), 1.0) * s
    return {"lower": lo, "value": mid, "upper": hi,
            "satisfied": lo <= mid * (1 + rtol) and mid <= hi * (1 + rtol)}


# -- Hoelder weights ---------------------------------------------------------------


def tau_index(h, q: float) -> int:
    """Unique ``tau`` with ``sum_{l<tau} 1/h_l <= q < sum_{l<=tau} 1/h_l``."""
    csum = np.concatenate([[0.0], np.cumsum(1.0 / np.asarray(h, float))])
    if not 0 <= q < csum[-1]:
        raise ValueError("need 0 <= q < sum 1/h_l")
    return int(np.nonzero(q < csum[1:])[0][0]) + 1


@dataclass
class PWeightsReport:
    tau: int
    p: np.ndarray
    p_full: np.ndarray
    sum_inv_p: float
    conditions: dict
    full_conditions: dict
    kappa_witness: int | None

    @property
    def passed(self) -> bool:
        return all(self.conditions.values())


def _p_conditions(h, p, q, delta):
    """The three requirements on ``p`` for the leading ``len(p)`` coordinates."""
    t = len(p)
    ht = h[:t]
    lhs = (1.0 - delta) * float(np.sum(ht * q / p))
    rhs = float(ht[-1] * q + t - np.sum(ht[-1] / ht))
    return {
        "sum_inv_p_is_one": abs(float(np.sum(1.0 / p)) - 1.0) <= 1e-12,
        "h_q_over_p_below_one": bool(np.all(ht * q / p < 1.0)),
        "delta_inequality": lhs <= rhs + 1e-12,
        "p_at_least_one": bool(np.all(p >= 1.0 - 1e-12)),
    }


def verify_p_weights(h, d: int, n: int) -> PWeightsReport:
    """Construct ``p_l = sum_{l' <= tau} h_l / h_l'`` and check its three properties.

    ``Delta = 1/n``. ``p_full`` is the same construction over all ``N``
    coordinates; its conditions are reported alongside. Failures are
    reported, not raised. ``kappa_witness`` is an index ``l0`` with
    ``h_l0 (d/p_l0 + 2 kappa) < 1`` for ``kappa`` at the midpoint of its range.
    """
    h = np.asarray(h, float)
    if n < 1:
        raise ValueError("n must be >= 1")
    tau = tau_index(h, d)
    ht = h[:tau]
    p = ht * np.sum(1.0 / ht)
    p_full = h * np.sum(1.0 / h)
    delta = 1.0 / n
    cond = _p_conditions(h, p, d, delta)
    full = _p_conditions(h, p_full, d, delta)
    kappa = 0.5 * kappa_range(h, d, 1)[1]
    ok = np.nonzero(ht * (d / p + 2 * kappa) < 1.0)[0]
    witness = int(ok[0]) + 1 if ok.size else None
    return PWeightsReport(tau, p, p_full, float(np.sum(1.0 / p)), cond, full, witness)


# -- bound on sums of Z_l ------------------------------------------------------------


def _sphere_area(n: int) -> float:
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


@dataclass
class SumZEstimate:
    lhs: float
    stderr: float
    form: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.form


def sumZ_integral(spec: HurstSpec, l: int, points, b, alpha: float, epsilon: float,
                  quad: QuadratureSpec | None = None, rng: RngStream | None = None,
                  directions: int = 2000, c_norm: float | None = None) -> tuple[float, float]:
    """``int prod|x_i|^{b_i} exp(-||sum_j x_j Z_l(u^j)||_alpha^alpha) dx`` and its MC stderr.

    In polar coordinates the radial integral is exact,
    ``(1/alpha) Gamma((B + n)/alpha) Phi(theta)^{-(B + n)/alpha}``, so only
    the direction average is sampled (exact for ``n = 1``). ``Phi`` is the
    quadrature of the kernel combination over ``D_l``.
    """
    quad = quad or QuadratureSpec(order=12, panels_per_axis=8)
    pts = np.atleast_2d(np.asarray(points, float))
    n, N = pts.shape
    b = np.broadcast_to(np.asarray(b, float), (n,))
    B = float(b.sum())
    if c_norm is None:
        c_norm = c_norm_for(spec, alpha)
    comb = LinearCombination(np.ones(n), pts)
    rules, factors = combination_nodes(comb, spec(pts), alpha, quad, extra_breaks=[epsilon])
    domain = [(epsilon, np.inf) if m == l else (0.0, epsilon) for m in range(N)]

    def phi(theta):
        return tensor_alpha_power(theta, rules, factors, alpha, c_norm, domain)

    radial = gamma_fn((B + n) / alpha) / alpha
    if n == 1:
        val = 2.0 * radial * phi(np.ones(1)) ** (-(B + 1) / alpha)
        return float(val), 0.0
    gen = (rng or RngStream(0)).generator()
    theta = gen.standard_normal((directions, n))
    theta /= np.linalg.norm(theta, axis=1, keepdims=True)
    vals = np.array([np.prod(np.abs(t) ** b) * phi(t) ** (-(B + n) / alpha) for t in theta])
    scale = _sphere_area(n) * radial
    return float(scale * vals.mean()), float(scale * vals.std(ddof=1) / math.sqrt(directions))


def sumZ_form(spec: HurstSpec, l: int, points, b, epsilon: float) -> float:
    """``prod_j (u_l^j - u_l^{j-1})^{-h_l(u^j)(1 + sum b)}`` with ``u_l^0 = epsilon``."""
    pts = np.atleast_2d(np.asarray(points, float))
    B = float(np.sum(b))
    coords = np.concatenate([[epsilon], pts[:, l]])
    gaps = np.diff(coords)
    if np.any(gaps < 0):
        raise ValueError("l-coordinates must be nondecreasing")
    H = spec(pts)[:, l]
    with np.errstate(divide="ignore"):
        return float(np.prod(gaps ** (-H * (1.0 + B))))


def random_sumZ_instance(spec: HurstSpec, rect: Rect, n: int, l: int,
                         gen: np.random.Generator) -> np.ndarray:
    lo, hi = np.array(rect.lower), np.array(rect.upper)
    pts = lo + (hi - lo) * gen.random((n, rect.dim))
    pts = pts[np.argsort(pts[:, l])]
    return pts


@dataclass
class SumZReport:
    c_fit: float
    calibration: list
    held_out: list
    held_fraction: float
    passed: bool
    meta: dict = field(default_factory=dict)


def verify_bound_sumZ(n: int, spec: HurstSpec, l: int, b, alpha: float,
                      rect: Rect, quad: QuadratureSpec | None = None,
                      rng: RngStream | None = None, calibration: int = 20,
                      held_out: int = 30, margin: float = 2.0, directions: int = 2000,
                      required_fraction: float = 0.95) -> SumZReport:
    """Fit the constant of the gap-product bound and test it on fresh instances.

    ``epsilon`` is the lower corner of ``rect`` (all points lie above it).
    ``c_fit = margin * max`` calibration ratio. A held-out instance passes
    when ``lhs - 3 stderr <= c_fit * form``.
    """
    if not 1 <= n <= 3:
        raise ValueError("desk-scale check limited to n <= 3")
    rng = rng or RngStream(0)
    gen = rng.generator()
    eps = min(rect.lower)
    if eps <= 0:
        raise ValueError("rect must sit inside [eps, T]^N with eps > 0")
    c_norm = c_norm_for(spec, alpha)

    def one(i):
        pts = random_sumZ_instance(spec, rect, n, l, gen)
        lhs, se = sumZ_integral(spec, l, pts, b, alpha, eps, quad, rng.child(i),
                                directions, c_norm)
        return {"points": pts.tolist(), "lhs": lhs, "stderr": se,
                "form": sumZ_form(spec, l, pts, b, eps)}

    cal = [one(i) for i in range(calibration)]
    c_fit = margin * max(r["lhs"] / r["form"] for r in cal)
    test = [one(calibration + i) for i in range(held_out)]
    ok = [r["lhs"] - 3 * r["stderr"] <= c_fit * r["form"] for r in test]
    frac = float(np.mean(ok))
    return SumZReport(c_fit, cal, test, frac, frac >= required_fraction,
                      {"epsilon": eps, "margin": margin, "directions": directions,
                       "max_held_ratio": max(r["lhs"] / r["form"] for r in test)})
