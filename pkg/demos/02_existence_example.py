"""Local-time existence for the one-dimensional power-law index h(v) = 1/m - (v - q)^k.

For m = 2 the infimum of 1/h is 2, reached at v = q. When d = 2 sits exactly on
the infimum the verdict hinges on whether 1/(1/h - 2) is integrable near q:
it is for k = 0.5 and is not for k = 1.
"""

from lmss.existence import condition_C_check, example_hurst

for k in (0.5, 1.0):
    spec, rect = example_hurst(2, 0.0, k)
    for d in (1, 2):
        rep = condition_C_check(spec, rect, d)
        extra = ""
        if rep.verdict in ("C2", "fail") and rep.c2_integral is not None:
            seq = rep.diagnostics["capped_sequence"]
            extra = f", capped integrals {seq[0]:.4f} ... {seq[-1]:.4g}"
        print(f"k={k}, d={d}, domain {rect.lower[0]}..{rect.upper[0]:.4f}: "
              f"inf sum 1/h = {rep.inf_sum_inv_h:.6f}, verdict {rep.verdict}{extra}")
