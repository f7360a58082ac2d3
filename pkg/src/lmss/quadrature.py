"""Graded Gauss-Legendre rules for kernels with algebraic endpoint singularities.

Every segment between consecutive break points is split at its midpoint;
each half is mapped by ``x = endpoint + half * t**power`` and integrated with
composite Gauss-Legendre on geometrically graded panels in ``t``. The
semi-infinite tail ``(-inf, -L]`` is mapped by ``v = -L / t``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class QuadratureSpec:
    """Settings shared by every L^alpha quadrature.

    ``truncation_L`` is where the mapped tail panel starts; the tail is
    integrated, not dropped, and its share is reported separately.
    """

    truncation_L: float = 10.0
    panels_per_axis: int = 10
    order: int = 16
    singularity_split: bool = True
    target_rel_err: float = 1e-6
    max_power: float = 64.0

    def __post_init__(self):
        if self.truncation_L <= 0 or self.panels_per_axis < 1 or self.order < 2:
            raise ValueError("invalid quadrature settings")
        if self.target_rel_err <= 0:
            raise ValueError("target_rel_err must be positive")


@lru_cache(maxsize=64)
def _unit_rule(order: int, levels: int, power: float):
    """Rule on [0, 1] for ``int f(t^power) d(t^power)``, graded toward 0."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.concatenate([[0.0], 0.5 ** np.arange(levels, -1, -1)])
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        t = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
        nodes.append(t)
        weights.append(0.5 * (hi - lo) * w)
    t = np.concatenate(nodes)
    wt = np.concatenate(weights)
    s = t ** power
    ws = wt * power * t ** (power - 1.0)
    # nodes this close to a break only produce overflow
    keep = s > _MIN_OFFSET
    return s[keep], ws[keep]


_MIN_OFFSET = 1e-150


def half_segment(p: float, q: float, power: float, spec: QuadratureSpec):
    """Offsets from ``p`` and weights for nodes clustered toward ``p``."""
    if not spec.singularity_split:
        power = 1.0
    s, ws = _unit_rule(spec.order, spec.panels_per_axis, float(power))
    return (q - p) * s, abs(q - p) * ws


def tail_rule(L: float, power: float, spec: QuadratureSpec):
    """Rule for ``(-inf, -L]`` via ``v = -L / t``, clustered toward ``t = 0``."""
    s, ws = _unit_rule(spec.order, spec.panels_per_axis, float(power))
    return -L / s, ws * L / s ** 2


@dataclass
class AxisRule:
    """Nodes stored as ``anchor + offset`` so distances to breaks stay exact."""

    anchors: np.ndarray
    offsets: np.ndarray
    weights: np.ndarray
    tail_mask: np.ndarray

    @property
    def nodes(self) -> np.ndarray:
        return self.anchors + self.offsets

    def distance_from(self, u) -> np.ndarray:
        """``u - v`` for every node, shape ``(len(u), nodes)``."""
        u = np.atleast_1d(np.asarray(u, float))
        return (u[:, None] - self.anchors[None, :]) - self.offsets[None, :]


def axis_rule(breaks, spec: QuadratureSpec, power: float, tail_power: float = 4.0,
              with_tail: bool = True) -> AxisRule:
    """One-dimensional rule on ``(-inf, max(breaks)]`` respecting ``breaks``."""
    b = np.unique(np.asarray(breaks, float))
    L = max(spec.truncation_L, -b[0] + 1.0) if b[0] < 0 else spec.truncation_L
    pts = np.concatenate([[-L], b]) if with_tail else b
    anchors, offsets, ws, tail = [], [], [], []

    def add(anchor, off, w, is_tail):
        anchors.append(np.full(off.shape, anchor))
        offsets.append(off)
        ws.append(w)
        tail.append(np.full(off.shape, is_tail))

    if with_tail:
        xt, wt = tail_rule(L, tail_power, spec)
        add(0.0, xt, wt, True)
    for p, q in zip(pts[:-1], pts[1:]):
        if q - p <= 0:
            continue
        mid = 0.5 * (p + q)
        o1, w1 = half_segment(p, mid, power, spec)
        o2, w2 = half_segment(q, mid, power, spec)
        add(p, o1, w1, False)
        add(q, o2, w2, False)
    return AxisRule(np.concatenate(anchors), np.concatenate(offsets),
                    np.concatenate(ws), np.concatenate(tail))
