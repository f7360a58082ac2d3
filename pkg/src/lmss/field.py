"""Lattice discretization of the stable random measure and field synthesis.

The random measure is approximated by independent SaS increments on cubic
cells of width ``s`` covering ``[lower, T_max]^N``. A field value is the
contraction of cell-averaged kernel weights against those increments.
Evaluation points must sit on cell edges so that the singular cell of every
kernel factor is a whole cell.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .hurst import HurstSpec, Rect
from .kernel import LinearCombination, c_norm_for, combination_nodes, tensor_alpha_power
from .quadrature import QuadratureSpec
from .stable import RngStream, StableParams, sample_sas

DEFAULT_MAX_CELLS = 10_000_000


class BudgetExceeded(RuntimeError):
    """Raised when a lattice would exceed the configured cell budget."""


@dataclass(frozen=True)
class Geometry:
    """Cell lattice ``lower_l + s * [0, K_l]`` on each axis."""

    spacing: float
    lower: tuple
    upper: float
    truncation_L: float = 10.0

    def __post_init__(self):
        if not self.spacing > 0 or not self.truncation_L > 0:
            raise ValueError("spacing and truncation_L must be positive")
        object.__setattr__(self, "lower", tuple(float(x) for x in self.lower))
        for lo in self.lower:
            if lo > 0 or not _is_multiple(lo, self.spacing):
                raise ValueError("lower bounds must be nonpositive multiples of spacing")
        if self.upper <= 0 or not _is_multiple(self.upper, self.spacing):
            raise ValueError("upper must be a positive multiple of spacing")

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def shape(self) -> tuple:
        return tuple(int(round((self.upper - lo) / self.spacing)) for lo in self.lower)

    @property
    def cells(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))

    def zero_index(self, axis: int) -> int:
        return int(round(-self.lower[axis] / self.spacing))

    def edge_index(self, x, axis: int) -> np.ndarray:
        """Index of the lattice edge at ``x``; raises if ``x`` is off-lattice."""
        pos = (np.asarray(x, float) - self.lower[axis]) / self.spacing
        idx = np.rint(pos)
        if np.any(np.abs(pos - idx) > 1e-6) or np.any(idx < 0) or np.any(idx > self.shape[axis]):
            raise ValueError("evaluation point does not lie on a lattice edge")
        return idx.astype(np.int64)

    def key(self) -> str:
        doc = json.dumps([self.spacing, self.lower, self.upper, self.truncation_L])
        return hashlib.sha256(doc.encode()).hexdigest()[:16]

    def coarsened(self, factor: int) -> "Geometry":
        return Geometry(self.spacing * factor, self.lower, self.upper, self.truncation_L)


def _is_multiple(x: float, s: float) -> bool:
    r = x / s
    return abs(r - round(r)) <= 1e-9 * max(1.0, abs(r))


def geometry_for(spec: HurstSpec, alpha: float, upper: float, spacing: float,
                 truncation_L: float = 10.0) -> Geometry:
    """Default lattice for ``spec``.

    Axes whose exponent ``h_l - 1/alpha`` is identically zero have a kernel
    supported on ``[0, u_l]``, so their lower bound is trimmed to 0.
    """
    lower = []
    for l in range(spec.dim):
        trim = spec.is_constant and abs(spec(np.ones(spec.dim))[l] - 1.0 / alpha) < 1e-14
        lower.append(0.0 if trim else -spacing * round(truncation_L / spacing))
    return Geometry(spacing, tuple(lower), spacing * round(upper / spacing), truncation_L)


@dataclass
class MeasureGrid:
    geometry: Geometry
    alpha: float
    increments: np.ndarray
    rng: RngStream

    @property
    def spacing(self) -> float:
        return self.geometry.spacing

    @property
    def truncation_L(self) -> float:
        return self.geometry.truncation_L


def build_measure_grid(geometry: Geometry, alpha: float, rng: RngStream,
                       max_cells: int = DEFAULT_MAX_CELLS) -> MeasureGrid:
    """Independent SaS(cell_volume^{1/alpha}) increments on every lattice cell."""
    if geometry.cells > max_cells:
        raise BudgetExceeded(f"lattice has {geometry.cells} cells, budget is {max_cells}")
    vol = geometry.spacing ** geometry.dim
    params = StableParams(alpha, vol ** (1.0 / alpha))
    inc = sample_sas(params, geometry.shape, rng)
    return MeasureGrid(geometry, alpha, inc, rng)


def coarsen(measure: MeasureGrid, factor: int) -> MeasureGrid:
    """Seed-coupled coarsening: each coarse increment is the sum of its fine cells."""
    factor = int(factor)
    if factor < 1 or any(k % factor for k in measure.geometry.shape):
        raise ValueError("factor must divide the lattice shape")
    if any(not _is_multiple(lo, measure.spacing * factor) for lo in measure.geometry.lower):
        raise ValueError("factor must divide the lower offsets")
    inc = measure.increments
    for axis in range(inc.ndim):
        shape = inc.shape
        inc = inc.reshape(shape[:axis] + (shape[axis] // factor, factor) + shape[axis + 1:])
        inc = inc.sum(axis=axis + 1)
    return MeasureGrid(measure.geometry.coarsened(factor), measure.alpha, inc, measure.rng)


def _cell_profile(j: np.ndarray, e: np.ndarray, s: float, alpha: float) -> np.ndarray:
    """Cell value of ``x_+^e`` on cells ``x in [(j-1)s, js]``.

    Exact cell averages when ``e > -1``. When the average diverges
    (``e <= -1``, possible only for ``alpha < 1``) the midpoint is used and
    the singular cell ``j = 1`` takes its L^alpha mean ``s^e (1 + e alpha)^{-1/alpha}``.
    """
    j = np.asarray(j, float)
    e = np.broadcast_to(np.asarray(e, float), j.shape)
    out = np.zeros(j.shape)
    pos = j >= 1
    jp, ep = j[pos], e[pos]
    val = np.empty(jp.shape)
    reg = ep > -1
    if np.any(reg):
        a = ep[reg] + 1.0
        # j^a - (j-1)^a without cancellation
        jj = jp[reg]
        with np.errstate(divide="ignore"):
            val[reg] = jj ** a * -np.expm1(a * np.log1p(-1.0 / jj)) / a
    if np.any(~reg):
        jj, ee = jp[~reg], ep[~reg]
        val[~reg] = np.where(jj == 1, (1.0 + ee * alpha) ** (-1.0 / alpha), (jj - 0.5) ** ee)
    out[pos] = s ** ep * val
    return out


def factor_matrix(geometry: Geometry, axis: int, k_idx, e, alpha: float) -> np.ndarray:
    """Cell weights ``[(u - v)_+^e - (-v)_+^e]`` for edge indices ``k_idx``; shape ``(P, K)``."""
    k_idx = np.atleast_1d(np.asarray(k_idx, np.int64))
    e = np.broadcast_to(np.asarray(e, float), k_idx.shape)[:, None]
    c = np.arange(geometry.shape[axis])[None, :]
    z0 = geometry.zero_index(axis)
    s = geometry.spacing
    return (_cell_profile(k_idx[:, None] - c, e, s, alpha)
            - _cell_profile(np.broadcast_to(z0 - c, (k_idx.size, c.size)), e, s, alpha))


@dataclass
class FieldSample:
    points: np.ndarray
    values: np.ndarray
    grid_shape: tuple
    meta: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def N(self) -> int:
        return self.points.shape[1]

    def component_grid(self, k: int = 0) -> np.ndarray:
        return self.values[:, k].reshape(self.grid_shape)


def synthesize_values(spec: HurstSpec, points: np.ndarray, measure: MeasureGrid,
                      c_norm: float) -> np.ndarray:
    """``X(u) = c_H sum_cells g(u, cell) M(cell)`` at arbitrary on-lattice points."""
    geom = measure.geometry
    alpha = measure.alpha
    points = np.atleast_2d(np.asarray(points, float))
    N = geom.dim
    H = spec(points)
    E = H - 1.0 / alpha
    idx = [geom.edge_index(points[:, l], l) for l in range(N)]
    M = measure.increments
    if N == 1:
        return c_norm * (factor_matrix(geom, 0, idx[0], E[:, 0], alpha) @ M)
    if N == 2:
        F1 = factor_matrix(geom, 0, idx[0], E[:, 0], alpha)
        F2 = factor_matrix(geom, 1, idx[1], E[:, 1], alpha)
        return c_norm * np.einsum("pc,pc->p", F1 @ M, F2)
    out = np.empty(points.shape[0])
    for p in range(points.shape[0]):
        acc = M
        for l in range(N):
            f = factor_matrix(geom, l, idx[l][p:p + 1], E[p, l], alpha)[0]
            acc = np.tensordot(f, acc, axes=(0, 0))
        out[p] = acc
    return c_norm * out


def _separable_grid(spec: HurstSpec, rect: Rect, density: int, measure: MeasureGrid,
                    c_norm: float) -> np.ndarray:
    """Constant-H field on a tensor grid.

    Along each axis the cell weights form a Toeplitz operator, so
    ``sum_c [T(k - c) - T(z0 - c)] M[c] = y[k] - y[z0]`` with ``y = T * M``
    computed by FFT convolution.
    """
    geom = measure.geometry
    alpha = measure.alpha
    h = spec(np.ones(geom.dim))
    acc = measure.increments
    for l in range(geom.dim):
        axis_pts = np.linspace(rect.lower[l], rect.upper[l], density)
        k_idx = geom.edge_index(axis_pts, l)
        K = geom.shape[l]
        profile = _cell_profile(np.arange(K + 1), h[l] - 1.0 / alpha, geom.spacing, alpha)
        shape = [1] * acc.ndim
        shape[0] = K + 1
        y = signal.fftconvolve(acc, profile.reshape(shape), axes=0)
        y = y[k_idx] - y[geom.zero_index(l)]
        # move the finished point axis to the back
        acc = np.moveaxis(y, 0, -1)
    return c_norm * acc.reshape(-1)


def synthesize_field(spec: HurstSpec, rect: Rect, eval_density: int,
                     measures: list[MeasureGrid], c_norm: float | None = None) -> FieldSample:
    """Sample an ``(N, d)`` field on the inclusive ``eval_density^N`` lattice of ``rect``.

    One independent measure per component. ``c_norm`` defaults to the
    constant that gives unit scale at ``u = (1, ..., 1)``.
    """
    if not measures:
        raise ValueError("need at least one measure grid")
    alpha = measures[0].alpha
    if any(m.alpha != alpha or m.geometry != measures[0].geometry for m in measures):
        raise ValueError("all components must share alpha and geometry")
    if np.any(np.asarray(rect.upper) > measures[0].geometry.upper + 1e-12):
        raise ValueError("rect exceeds the lattice")
    if c_norm is None:
        c_norm = c_norm_for(spec, alpha)
    points = rect.lattice(eval_density)
    cols = []
    for m in measures:
        if spec.is_constant:
            cols.append(_separable_grid(spec, rect, eval_density, m, c_norm))
        else:
            cols.append(synthesize_values(spec, points, m, c_norm))
    meta = {
        "alpha": alpha,
        "spec": spec.to_dict(),
        "seed": measures[0].rng.seed,
        "stream_ids": [m.rng.stream_id for m in measures],
        "spacing": measures[0].spacing,
        "truncation_L": measures[0].truncation_L,
        "c_norm": c_norm,
    }
    return FieldSample(points, np.column_stack(cols), (eval_density,) * rect.dim, meta)


def component_streams(seed: int, d: int, replicate: int | None = None) -> list[RngStream]:
    """Stream ids ``0..d-1`` for the components; replicates use child streams."""
    streams = [RngStream(seed, k) for k in range(d)]
    if replicate is not None:
        streams = [s.child(replicate) for s in streams]
    return streams


def simulate(spec: HurstSpec, rect: Rect, eval_density: int, alpha: float, d: int,
             seed: int, spacing: float | None = None, truncation_L: float = 10.0,
             replicate: int | None = None, max_cells: int = DEFAULT_MAX_CELLS,
             c_norm: float | None = None, cache_dir: str | None = None) -> FieldSample:
    """Convenience wrapper: lattice, ``d`` measures and field in one call.

    The default spacing puts every evaluation point on a lattice edge.
    """
    if spacing is None:
        spacing = min((b - a) for a, b in zip(rect.lower, rect.upper)) / (eval_density - 1)
    geom = geometry_for(spec, alpha, max(rect.upper), spacing, truncation_L)
    measures = []
    for stream in component_streams(seed, d, replicate):
        grid = load_cached(cache_dir, geom, alpha, stream) if cache_dir else None
        if grid is None:
            grid = build_measure_grid(geom, alpha, stream, max_cells)
            if cache_dir:
                save_cached(cache_dir, grid)
        measures.append(grid)
    return synthesize_field(spec, rect, eval_density, measures, c_norm)


# -- decomposition of the [0, u] part --------------------------------------------


@dataclass
class Decomposition:
    y: np.ndarray
    y1: np.ndarray
    z: np.ndarray
    y2: np.ndarray
    cell_counts: dict

    def reconstruction_error(self) -> np.ndarray:
        total = self.y1 + self.z.sum(axis=0) + self.y2
        return np.abs(self.y - total) / np.maximum(np.abs(self.y), 1e-300)


def decompose_components(spec: HurstSpec, u, measure: MeasureGrid, epsilon: float,
                         c_norm: float | None = None) -> Decomposition:
    """Split the ``[0, u]`` part of the field by cell index sets.

    ``y1`` sums cells in ``[0, eps]^N``, ``z[l]`` cells with axis ``l`` in
    ``(eps, u_l]`` and every other axis in ``[0, eps]``, ``y2`` the rest of
    ``[0, u]``. ``y`` is the direct sum over all of ``[0, u]``.
    """
    geom = measure.geometry
    alpha = measure.alpha
    if c_norm is None:
        c_norm = c_norm_for(spec, alpha)
    pts = np.atleast_2d(np.asarray(u, float))
    N = geom.dim
    if np.any(pts <= epsilon):
        raise ValueError("epsilon must be below every coordinate of u")
    eps_idx = [int(geom.edge_index(epsilon, l)) for l in range(N)]
    zero = [geom.zero_index(l) for l in range(N)]
    H = spec(pts)
    out = {"y": [], "y1": [], "z": [], "y2": []}
    counts = {}
    for p in range(pts.shape[0]):
        k = [int(geom.edge_index(pts[p, l], l)) for l in range(N)]
        # cells of [0, u]: indices zero..k-1 on each axis
        sl = tuple(slice(zero[l], k[l]) for l in range(N))
        weights = np.ones(())
        for l in range(N):
            f = factor_matrix(geom, l, [k[l]], H[p, l] - 1.0 / alpha, alpha)[0, sl[l]]
            weights = np.multiply.outer(weights, f)
        contrib = c_norm * weights * measure.increments[sl]
        low = [np.arange(zero[l], k[l]) < eps_idx[l] for l in range(N)]
        mask1 = _outer_and([low[l] for l in range(N)])
        zmasks = [_outer_and([~low[m] if m == l else low[m] for m in range(N)])
                  for l in range(N)]
        mask2 = ~(mask1 | np.any(zmasks, axis=0))
        out["y"].append(contrib.sum())
        out["y1"].append(contrib[mask1].sum())
        out["z"].append([contrib[zm].sum() for zm in zmasks])
        out["y2"].append(contrib[mask2].sum())
        counts = {"total": int(contrib.size), "y1": int(mask1.sum()),
                  "z": [int(zm.sum()) for zm in zmasks], "y2": int(mask2.sum())}
    return Decomposition(np.array(out["y"]), np.array(out["y1"]),
                         np.array(out["z"]).T, np.array(out["y2"]), counts)


def _outer_and(masks):
    acc = np.ones((), bool)
    for m in masks:
        acc = np.logical_and.outer(acc, m)
    return acc


@dataclass
class ChainReport:
    x_power: float
    y_power: float
    z_powers: list
    satisfied: bool

    @property
    def z_total(self) -> float:
        return float(sum(self.z_powers))


def component_norm_inequality_check(spec: HurstSpec, points, coeffs, alpha: float,
                                    quad: QuadratureSpec | None = None,
                                    epsilon: float | None = None,
                                    c_norm: float | None = None,
                                    rtol: float = 1e-12) -> ChainReport:
    """``||sum a_j X(u^j)||^alpha >= ||sum a_j Y(u^j)||^alpha >= sum_l ||sum a_j Z_l(u^j)||^alpha``.

    All three integrals use one tensor quadrature restricted to ``R^N``,
    ``R_+^N`` and the sets ``D_l`` (axis ``l`` above ``epsilon``, the others
    in ``(0, epsilon]``). ``epsilon`` defaults to the smallest coordinate.
    """
    quad = quad or QuadratureSpec()
    comb = LinearCombination(coeffs, points)
    if comb.count > 6:
        raise ValueError("at most 6 points")
    if c_norm is None:
        c_norm = c_norm_for(spec, alpha)
    if epsilon is None:
        epsilon = float(comb.points.min())
    N = comb.points.shape[1]
    H = spec(comb.points)
    rules, factors = combination_nodes(comb, H, alpha, quad, extra_breaks=[epsilon])

    def power(domain):
        return tensor_alpha_power(comb.coefficients, rules, factors, alpha, c_norm, domain)

    x = power(None)
    y = power([(0.0, np.inf)] * N)
    z = [power([(epsilon, np.inf) if m == l else (0.0, epsilon) for m in range(N)])
         for l in range(N)]
    tol = rtol * max(x, 1e-300)
    ok = x + tol >= y and y + tol >= sum(z)
    return ChainReport(x, y, z, bool(ok))


# -- export and cache ------------------------------------------------------------


def atomic_write(path: str, write):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            write(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_field_csv(sample: FieldSample, path: str) -> None:
    """CSV with columns ``u_1..u_N, x_1..x_d`` and a ``.json`` sidecar of meta."""
    header = [f"u_{l + 1}" for l in range(sample.N)] + [f"x_{k + 1}" for k in range(sample.d)]

    def write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for u, x in zip(sample.points, sample.values):
            w.writerow([repr(float(v)) for v in np.concatenate([u, x])])

    atomic_write(path, write)
    atomic_write(os.path.splitext(path)[0] + ".json",
                  lambda fh: json.dump(sample.meta, fh, indent=2, sort_keys=True))


def read_field_csv(path: str) -> FieldSample:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], np.array(rows[1:], float)
    N = sum(1 for c in header if c.startswith("u_"))
    with open(os.path.splitext(path)[0] + ".json") as fh:
        meta = json.load(fh)
    side = int(round(len(data) ** (1.0 / N)))
    return FieldSample(data[:, :N], data[:, N:], (side,) * N, meta)


def _cache_path(cache_dir: str, geometry: Geometry, alpha: float, rng: RngStream) -> str:
    name = f"measure-{rng.seed}-{rng.stream_id}-{alpha!r}-{geometry.key()}.npz"
    return os.path.join(cache_dir, name)


def save_cached(cache_dir: str, measure: MeasureGrid) -> str:
    path = _cache_path(cache_dir, measure.geometry, measure.alpha, measure.rng)
    os.makedirs(cache_dir, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=cache_dir, suffix=".npz")
    os.close(fd)
    np.savez(tmp, increments=measure.increments)
    os.replace(tmp, path)
    return path


def load_cached(cache_dir: str, geometry: Geometry, alpha: float,
                rng: RngStream) -> MeasureGrid | None:
    path = _cache_path(cache_dir, geometry, alpha, rng)
    if not os.path.exists(path):
        return None
    with np.load(path) as data:
        inc = data["increments"]
    if inc.shape != geometry.shape:
        return None
    return MeasureGrid(geometry, alpha, inc, rng)
