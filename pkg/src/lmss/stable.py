"""Symmetric alpha-stable variates and the exponential-integral oracles.

Scale convention: ``E exp(i t X) = exp(-scale^alpha |t|^alpha)``. At
``alpha = 2`` this is a centred Gaussian with variance ``2 scale^2``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as gamma_fn


@dataclass(frozen=True)
class StableParams:
    alpha: float
    scale: float = 1.0

    def __post_init__(self):
        if not 0 < self.alpha <= 2:
            raise ValueError(f"alpha must lie in (0, 2], got {self.alpha}")
        if not self.scale > 0:
            raise ValueError("scale must be positive")


@dataclass(frozen=True)
class RngStream:
    """Named random stream; equal ``(seed, stream_id)`` give equal sequences."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, index: int) -> "RngStream":
        """Derived stream, used for replicate ``index`` of this stream."""
        return RngStream(self.seed, self.stream_id * 1_000_003 + index + 1)


def _standard_sas(alpha: float, size, gen: np.random.Generator) -> np.ndarray:
    if alpha == 2:
        return gen.standard_normal(size) * math.sqrt(2.0)
    phi = gen.uniform(-0.5 * np.pi, 0.5 * np.pi, size)
    if alpha == 1:
        return np.tan(phi)
    w = gen.standard_exponential(size)
    # Chambers-Mallows-Stuck, symmetric case
    return (np.sin(alpha * phi) / np.cos(phi) ** (1.0 / alpha)
            * (np.cos((1.0 - alpha) * phi) / w) ** ((1.0 - alpha) / alpha))


def sample_sas(params: StableParams, count, rng: RngStream | np.random.Generator) -> np.ndarray:
    """Draw i.i.d. SaS(scale) variates.

    ``count`` may be an int or a shape tuple. ``rng`` is either an
    :class:`RngStream` or an already-constructed generator.
    """
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    if np.prod(count) < 1:
        raise ValueError("count must be >= 1")
    return params.scale * _standard_sas(params.alpha, count, gen)


def empirical_cf(samples, t: float) -> complex:
    x = np.asarray(samples, float).ravel()
    if x.size == 0:
        raise ValueError("no samples")
    if t == 0:
        return 1.0 + 0.0j
    return complex(np.mean(np.exp(1j * t * x)))


def gamma_integral_closed_form(a: float, b: float, A: float) -> float:
    """``int_R |x|^b exp(-A |x|^a) dx = (2/a) Gamma((1+b)/a) A^{-(1+b)/a}``."""
    if a <= 0 or A <= 0:
        raise ValueError("a and A must be positive")
    if b < 0:
        raise ValueError("b must be nonnegative")
    return 2.0 / a * float(gamma_fn((1.0 + b) / a)) * A ** (-(1.0 + b) / a)


def exp_integral_constant(b, alpha: float, rule: str = "tuples") -> float:
    """Constant ``c_{3,1}(n)`` in the triangular exponential-integral bound.

    ``rule="tuples"`` takes the Gamma supremum over tuple sums
    ``sum_i b_{j_i}``. ``rule="subsums"`` also
    includes every partial sum of ``b`` (the exponents that actually occur
    after expanding the product), which is what the bound needs when all
    ``b_i > 0``.
    """
    b = np.asarray(b, float)
    n = b.size
    lead = float(np.prod([max(n ** (bi - 1.0), 1.0) for bi in b]))
    sums = {float(sum(b[list(j)])) for j in itertools.product(range(n), repeat=n)}
    if rule == "subsums":
        for r in range(n + 1):
            sums |= {float(sum(c)) for c in itertools.combinations(b, r)}
    elif rule != "tuples":
        raise ValueError(f"unknown rule {rule!r}")
    sup_gamma = max(float(gamma_fn((1.0 + s) / alpha)) for s in sums)
    return lead * (2.0 / alpha) ** n * sup_gamma ** n


@dataclass
class BoundCheck:
    lhs_estimate: float
    lhs_stderr: float
    rhs_bound: float
    satisfied: bool

    @property
    def slack(self) -> float:
        return self.rhs_bound / self.lhs_estimate


def mc_exp_integral_bound_check(matrix, b, alpha: float, trials: int,
                                rng: RngStream | np.random.Generator,
                                rule: str = "tuples") -> BoundCheck:
    """Monte Carlo check of the upper-triangular exponential-integral bound.

    The left side ``int prod|x_i|^{b_i} exp(-sum_i |(A x)_i|^alpha) dx`` is
    estimated after the substitution ``y = A x``: the ``y_i`` are drawn
    from the density proportional to ``exp(-|y|^alpha)``, which makes the
    remaining weight ``prod |(A^{-1} y)_i|^{b_i}`` polynomial.
    """
    A = np.atleast_2d(np.asarray(matrix, float))
    b = np.asarray(b, float)
    n = A.shape[0]
    if A.shape != (n, n) or b.shape != (n,):
        raise ValueError("matrix must be n x n and b of length n")
    if n > 4:
        raise ValueError("desk-scale check limited to n <= 4")
    if np.any(np.tril(A, -1) != 0):
        raise ValueError("matrix must be upper triangular")
    diag = np.diag(A)
    if np.any(diag == 0):
        raise ValueError("singular diagonal")
    if np.any(b < 0):
        raise ValueError("b must be nonnegative")
    StableParams(alpha)
    gen = rng.generator() if isinstance(rng, RngStream) else rng

    U = np.linalg.inv(A)
    z1 = 2.0 / alpha * float(gamma_fn(1.0 / alpha))
    prefactor = z1 ** n / abs(float(np.prod(diag)))
    if np.all(b == 0):
        lhs, se = prefactor, 0.0
    elif n == 1:
        # one dimension: the bound is an identity, so avoid Monte Carlo noise
        lhs = gamma_integral_closed_form(alpha, float(b[0]), 1.0) / abs(float(diag[0])) ** (1.0 + b[0])
        se = 0.0
    else:
        radius = gen.gamma(1.0 / alpha, 1.0, size=(trials, n)) ** (1.0 / alpha)
        y = radius * gen.choice([-1.0, 1.0], size=(trials, n))
        x = y @ U.T
        w = np.prod(np.abs(x) ** b, axis=1)
        lhs = prefactor * float(w.mean())
        se = prefactor * float(w.std(ddof=1)) / math.sqrt(trials)

    active = b != 0
    tail = float(np.prod([np.sum(np.abs(U[i]) ** b[i]) for i in np.nonzero(active)[0]]))
    rhs = exp_integral_constant(b, alpha, rule) / abs(float(np.prod(diag))) * tail
    rel = se / lhs if lhs > 0 else 0.0
    return BoundCheck(lhs, se, rhs, lhs <= rhs * (1.0 + 3.0 * rel + 1e-12))
