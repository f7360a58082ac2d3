"""Occupation-measure estimates of local times and scaling probes."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .field import FieldSample, simulate
from .hurst import HurstSpec, Rect, beta_bar, beta_exponent

OVERFLOW_FLAG = 0.01


def time_weights(points: np.ndarray, rect: Rect, tol: float = 1e-12) -> np.ndarray:
    """Trapezoid Lebesgue weights of lattice points restricted to ``rect``.

    Each axis gets the composite trapezoid rule on the distinct coordinates
    inside ``[a_l, b_l]``; the weights sum to ``lambda_N(rect)`` when the
    rectangle corners are lattice coordinates. Points outside get weight 0.
    """
    points = np.atleast_2d(points)
    w = np.ones(points.shape[0])
    for l in range(points.shape[1]):
        x = points[:, l]
        inside = (x >= rect.lower[l] - tol) & (x <= rect.upper[l] + tol)
        coords = np.unique(x[inside])
        if coords.size < 2:
            raise ValueError("rect must contain at least two lattice coordinates per axis")
        gaps = np.diff(coords)
        axis_w = np.zeros(coords.size)
        axis_w[:-1] += 0.5 * gaps
        axis_w[1:] += 0.5 * gaps
        pos = np.searchsorted(coords, x)
        pos = np.clip(pos, 0, coords.size - 1)
        wl = np.where(inside, axis_w[pos], 0.0)
        w *= wl
    return w


@dataclass
class LocalTimeHistogram:
    rect: Rect
    edges: list
    bandwidth: float
    density: np.ndarray
    cell_volume: float
    overflow_mass: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def bin_centers(self) -> list:
        return [0.5 * (e[:-1] + e[1:]) for e in self.edges]

    @property
    def total_mass(self) -> float:
        return float(self.density.sum() * self.bandwidth ** self.density.ndim)

    @property
    def overflow_flagged(self) -> bool:
        return self.overflow_mass > OVERFLOW_FLAG * self.rect.volume


def _edges(bins, bandwidth: float, d: int, center):
    if np.ndim(bins) == 0:
        nb = int(bins)
        if nb < 1:
            raise ValueError("need at least one bin")
        center = np.broadcast_to(np.asarray(0.0 if center is None else center, float), (d,))
        return [c + bandwidth * (np.arange(nb + 1) - nb / 2.0) for c in center]
    return [np.asarray(b, float) for b in bins]


def occupation_histogram(field_sample: FieldSample, rect: Rect, bins, bandwidth: float,
                         center=None) -> LocalTimeHistogram:
    """Box-kernel occupation density ``lambda_N{u : X(u) in bin} / bandwidth^d``.

    ``bins`` is either a per-axis bin count (bins of width ``bandwidth``
    centred on ``center``, default the origin) or a list of edge arrays.
    Mass falling outside the bins is kept in ``overflow_mass``.
    """
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    d = field_sample.d
    w = time_weights(field_sample.points, rect)
    edges = _edges(bins, bandwidth, d, center)
    keep = w > 0
    hist, _ = np.histogramdd(field_sample.values[keep], bins=edges, weights=w[keep])
    # histogramdd closes the last bin on the right; harmless for continuous data
    overflow = float(w.sum() - hist.sum())
    cell = float(np.prod([(b - a) for a, b in zip(rect.lower, rect.upper)]) / max(1, keep.sum()))
    return LocalTimeHistogram(rect, edges, float(bandwidth), hist / bandwidth ** d, cell,
                              max(overflow, 0.0), {"points": int(keep.sum())})


def local_time_estimate(hist: LocalTimeHistogram, x) -> float:
    """Density of the bin containing ``x``."""
    x = np.atleast_1d(np.asarray(x, float))
    idx = []
    for l, e in enumerate(hist.edges):
        if not e[0] <= x[l] <= e[-1]:
            raise ValueError(f"x[{l}]={x[l]} outside the binned range")
        idx.append(min(int(np.searchsorted(e, x[l], side="right")) - 1, e.size - 2))
    return float(hist.density[tuple(idx)])


def box_local_time(values: np.ndarray, weights: np.ndarray, x, bandwidth: float) -> float:
    """Single-bin estimate ``sum w 1{|X - x|_inf <= bw/2} / bw^d``."""
    values = np.atleast_2d(np.asarray(values, float).reshape(len(weights), -1))
    x = np.atleast_1d(np.asarray(x, float))
    hit = np.all(np.abs(values - x) <= 0.5 * bandwidth, axis=1)
    return float(np.sum(weights[hit]) / bandwidth ** values.shape[1])


def scott_bandwidth(values: np.ndarray, count: int | None = None) -> float:
    """``sigma_hat * R^{-1/(d+4)}`` with ``sigma_hat`` the mean componentwise std."""
    values = np.atleast_2d(np.asarray(values, float).reshape(len(values), -1))
    R = values.shape[0] if count is None else count
    sigma = float(np.mean(values.std(axis=0)))
    return sigma * R ** (-1.0 / (values.shape[1] + 4))


def smoothed_local_time(field_sample: FieldSample, rect: Rect, x, k: float) -> float:
    """Gaussian-smoothed occupation ``(k/2pi)^{d/2} int exp(-k|X(t) - x|^2 / 2) dt``."""
    if not k > 0:
        raise ValueError("k must be positive")
    d = field_sample.d
    w = time_weights(field_sample.points, rect)
    x = np.atleast_1d(np.asarray(x, float))
    r2 = np.sum((field_sample.values - x) ** 2, axis=1)
    return float((k / (2.0 * math.pi)) ** (d / 2.0) * np.sum(w * np.exp(-0.5 * k * r2)))


def phi_t(r, beta: float, N: int):
    """Gauge ``r^beta (log log 1/r)^{N - beta}``; needs ``r < 1/e``."""
    r = np.asarray(r, float)
    if np.any(r <= 0) or np.any(r >= math.exp(-1.0)):
        raise ValueError("phi_t needs 0 < r < 1/e")
    return r ** beta * np.log(np.log(1.0 / r)) ** (N - beta)


@dataclass
class ScalingReport:
    scales: np.ndarray
    statistics: np.ndarray
    fitted_slope: float
    slope_stderr: float
    theory_exponent: float
    consistent: bool
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.scales) < 4:
            raise ValueError("a scaling fit needs at least 4 scales")


def _weighted_slope(x, y, se):
    """Weighted least-squares slope of ``y`` on ``x`` and its standard error."""
    x, y, se = (np.asarray(v, float) for v in (x, y, se))
    if np.all(se == 0):
        A = np.column_stack([np.ones_like(x), x])
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        return float(coef[1]), 0.0
    w = 1.0 / np.maximum(se, 1e-300) ** 2
    xm = np.sum(w * x) / np.sum(w)
    sxx = np.sum(w * (x - xm) ** 2)
    slope = np.sum(w * (x - xm) * (y - np.sum(w * y) / np.sum(w))) / sxx
    return float(slope), float(math.sqrt(1.0 / sxx))


def _run(fn, items, threads: int):
    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


@dataclass
class ProbeConfig:
    """Inputs of the moment and Hoelder probes.

    ``a`` is the lower corner of ``I_{a,delta} = [a, a + delta]^N``.
    ``eval_density`` is the number of time points per axis inside every box.
    """

    spec: HurstSpec
    alpha: float = 2.0
    d: int = 1
    n: int = 1
    deltas: tuple = (0.5, 0.25, 0.125, 0.0625)
    replicates: int = 500
    x: tuple | None = None
    a: tuple | None = None
    eval_density: int = 65
    seed: int = 0
    tolerance: float = 0.15
    truncation_L: float = 10.0
    t: tuple | None = None
    radii: tuple = (2.0 ** -4, 2.0 ** -5, 2.0 ** -6, 2.0 ** -7, 2.0 ** -8)
    threads: int = 1
    max_cells: int = 10_000_000


def _box_moment_sample(cfg: ProbeConfig, delta: float, rep: int, stream_offset: int) -> float:
    N = cfg.spec.dim
    a = np.zeros(N) if cfg.a is None else np.asarray(cfg.a, float)
    rect = Rect(tuple(a), tuple(a + delta))
    fs = simulate(cfg.spec, rect, cfg.eval_density, cfg.alpha, cfg.d,
                  cfg.seed + stream_offset, truncation_L=cfg.truncation_L,
                  replicate=rep, max_cells=cfg.max_cells)
    w = time_weights(fs.points, rect)
    x = np.zeros(cfg.d) if cfg.x is None else np.asarray(cfg.x, float)
    bw = scott_bandwidth(fs.values)
    if bw <= 0:
        return 0.0
    return box_local_time(fs.values, w, x, bw)


def moment_scaling_probe(cfg: ProbeConfig) -> ScalingReport:
    """Monte Carlo ``E[L(x, I_{a,delta})^n]`` per ``delta`` and its log-log slope.

    Every ``delta`` is synthesized independently with ``eval_density``
    points per axis and a per-replicate Scott bandwidth. ``consistent``
    means ``slope >= n * beta_bar - tolerance``; the bound is one-sided.
    """
    if not 0 <= cfg.n <= 3:
        raise ValueError("moment order must be in 0..3")
    if cfg.spec.dim > 2:
        raise ValueError("moment probes are limited to N <= 2")
    deltas = np.asarray(cfg.deltas, float)
    N = cfg.spec.dim
    a = np.zeros(N) if cfg.a is None else np.asarray(cfg.a, float)
    big = Rect(tuple(a), tuple(a + deltas.max()))
    theory = cfg.n * beta_bar(cfg.spec, big, cfg.d, grid_density=5)
    if cfg.n == 0:
        stats = np.ones_like(deltas)
        return ScalingReport(deltas, stats, 0.0, 0.0, theory, True, {"replicates": 0})
    means, ses = [], []
    for i, delta in enumerate(deltas):
        samples = np.array(_run(lambda r: _box_moment_sample(cfg, float(delta), r, 7919 * i),
                                range(cfg.replicates), cfg.threads))
        vals = samples ** cfg.n
        means.append(vals.mean())
        ses.append(vals.std(ddof=1) / math.sqrt(len(vals)))
    means, ses = np.array(means), np.array(ses)
    if np.any(means <= 0):
        raise ArithmeticError("zero moment estimate; increase replicates or bandwidth")
    slope, se = _weighted_slope(np.log(deltas), np.log(means), ses / means)
    if se > 0.2:
        raise ArithmeticError(f"slope stderr {se:.3f} > 0.2; increase replicates")
    return ScalingReport(deltas, means, slope, se, theory, slope >= theory - cfg.tolerance,
                         {"stderr_per_scale": ses.tolist(), "replicates": cfg.replicates,
                          "a": a.tolist(), "bandwidth_rule": "scott"})


def _holder_sample(cfg: ProbeConfig, rep: int) -> np.ndarray:
    N = cfg.spec.dim
    t = np.full(N, 0.5) if cfg.t is None else np.asarray(cfg.t, float)
    radii = np.asarray(cfg.radii, float)
    rmax = radii.max()
    if np.any(t - rmax < 0):
        raise ValueError("t - max(radius) must stay in R_+^N")
    window = Rect(tuple(t - rmax), tuple(t + rmax))
    fs = simulate(cfg.spec, window, cfg.eval_density, cfg.alpha, cfg.d, cfg.seed,
                  truncation_L=cfg.truncation_L, replicate=rep, max_cells=cfg.max_cells)
    centre = np.argmin(np.sum((fs.points - t) ** 2, axis=1))
    x = fs.values[centre] if cfg.x is None else np.asarray(cfg.x, float)
    beta = beta_exponent(cfg.spec(t), cfg.d)
    out = []
    for r in radii:
        box = Rect(tuple(t - r), tuple(t + r))
        w = time_weights(fs.points, box)
        inside = w > 0
        bw = scott_bandwidth(fs.values[inside])
        lt = box_local_time(fs.values, w, x, bw) if bw > 0 else 0.0
        out.append(lt / float(phi_t(r, beta, N)))
    return np.array(out)


def holder_scaling_probe(cfg: ProbeConfig) -> ScalingReport:
    """Ratios ``L(x, U(t, r)) / phi_t(r)`` for shrinking cubes ``U(t, r)``.

    ``x`` defaults to ``X(t)`` of each replicate. The statistic per radius
    is the median ratio; ``consistent`` means the fitted log-log slope of
    the medians against ``r`` is not negative beyond ``tolerance``, i.e.
    the ratio does not grow as ``r`` shrinks. The 95th percentile of the
    per-replicate maximum is reported as the empirical constant.
    """
    radii = np.asarray(cfg.radii, float)
    phi_t(radii, 0.5, 1)  # precondition r < 1/e
    finest = radii.min()
    span = 2.0 * radii.max()
    if (cfg.eval_density - 1) * finest / span < 8:
        raise ValueError("eval_density too small to resolve the finest radius")
    ratios = np.array(_run(lambda r: _holder_sample(cfg, r), range(cfg.replicates), cfg.threads))
    med = np.median(ratios, axis=0)
    if np.any(med <= 0):
        raise ArithmeticError("zero local-time estimate at some radius")
    boot = []
    gen = np.random.default_rng(cfg.seed)
    for _ in range(200):
        idx = gen.integers(0, len(ratios), len(ratios))
        boot.append(np.median(ratios[idx], axis=0))
    se_log = np.std(np.log(np.maximum(np.array(boot), 1e-300)), axis=0)
    slope, se = _weighted_slope(np.log(radii), np.log(med), np.maximum(se_log, 1e-6))
    per_rep_max = ratios.max(axis=1)
    t = np.full(cfg.spec.dim, 0.5) if cfg.t is None else np.asarray(cfg.t, float)
    beta = beta_exponent(cfg.spec(t), cfg.d)
    return ScalingReport(radii, med, slope, se, beta, slope >= -cfg.tolerance,
                         {"p95_max_ratio": float(np.percentile(per_rep_max, 95)),
                          "replicates": cfg.replicates})
