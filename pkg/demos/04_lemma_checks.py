"""Numerical checks of the auxiliary inequalities and asymptotics."""

import numpy as np

from lmss.hurst import HurstSpec, Rect
from lmss.lemmas import verify_bound_sumZ, verify_int_equiv, verify_p_weights, verify_triangle
from lmss.stable import RngStream, mc_exp_integral_bound_check

for alpha, beta in ((2.0, 1.0), (1.5, 1.0), (1.0, 1.0), (2.0, 0.25)):
    r = verify_int_equiv(alpha, beta, 0.0, 1.0, 0.3)
    print(f"int (A + |t - t0|^{alpha})^-{beta}: {r.regime}, slope {r.fitted_slope:.4f}, "
          f"envelope ({r.ratio_envelope[0]:.3g}, {r.ratio_envelope[1]:.3g}), passed {r.passed}")

gen = np.random.default_rng(0)
fails = sum(not verify_triangle(gen.uniform(0.1, 3), gen.standard_normal(5)).satisfied
            for _ in range(10_000))
print(f"triangle inequality failures in 10000 draws: {fails}")

r = verify_p_weights([0.9, 0.9], 2, 10)
print(f"weights for h=(0.9, 0.9), d=2: tau {r.tau}, p {r.p}, conditions {r.conditions}")

# tuple-sum constant versus the subsum rule for small exponents
for rule in ("tuples", "subsums"):
    rep = mc_exp_integral_bound_check(np.eye(2), [0.1, 0.1], 2.0, 100_000, RngStream(1),
                                      rule=rule)
    print(f"exponential-integral bound, rule {rule!r}: lhs {rep.lhs_estimate:.4f} "
          f"rhs {rep.rhs_bound:.4f} satisfied {rep.satisfied}")

rep = verify_bound_sumZ(2, HurstSpec.constant([0.6, 0.7]), 0, [0.0, 0.0], 2.0,
                        Rect((0.2, 0.2), (1.0, 1.0)), rng=RngStream(3), calibration=10,
                        held_out=20, directions=400)
print(f"gap-product bound: fitted constant {rep.c_fit:.3f}, held-out pass rate "
      f"{rep.held_fraction:.2f}")
