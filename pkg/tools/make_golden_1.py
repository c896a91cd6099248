"""Reference runs for the stored golden values: periodic-cell quantities,
the cell eigenvalue, and the truncation-window ladder at production
resolution.

The cell maximum is Richardson-extrapolated from n=256/512 (second-order
scheme); the eigenvalue ladder stops at n=512 to keep the shift-invert
factorization within the memory budget.
"""

import time

import numpy as np

from perfhom import corrector as C
from perfhom import poincare as P
from perfhom.geometry import DefectFamily, HoleShape, PerforationField, signed_distance
from perfhom.grid import CartesianGrid, ScalarField, classify_nodes, norms


def main():
    pat = HoleShape("disk", (0.5, 0.5), (0.25, 0.25))
    enlarged = HoleShape("disk", (0.5, 0.5), (0.32, 0.32))
    field = PerforationField(pat, DefectFamily(overrides={(0, 0): enlarged}))

    # --- periodic corrector max, Richardson from n=256 and n=512 ---
    maxes = {}
    for n in (128, 256, 512):
        t0 = time.time()
        per_n = C.solve_periodic_corrector(pat, n)
        maxes[n] = per_n.max_value()
        print(f"w_per max n={n}: {maxes[n]:.12g}  t={time.time()-t0:.0f}s",
              flush=True)
        del per_n
    print(f"w_per_max_richardson {(4*maxes[512] - maxes[256])/3:.12g}",
          flush=True)

    # --- cell eigenvalue, hole-only constraint, periodic closure ---
    lams = {}
    for n in (128, 256, 512):
        t0 = time.time()
        g = CartesianGrid((0.0, 0.0), 1.0 / n, n, n, "periodic")
        cls = classify_nodes(g, lambda p: signed_distance(pat, p))
        r = P.rayleigh_min(cls, zero_on_outer=False)
        lams[n] = r.lambda_min
        print(f"cell_lambda n={n}: {r.lambda_min:.12g} "
              f"C={r.poincare_constant:.12g} iters={r.iterations} "
              f"t={time.time()-t0:.0f}s", flush=True)
        del g, cls, r
    print(f"cell_lambda_richardson {(4*lams[512] - lams[256])/3:.12g}",
          flush=True)

    # --- window ladder at n=128 ---
    per = C.solve_periodic_corrector(pat, 128)
    for rtr in (2, 4, 6, 8):
        t0 = time.time()
        d = C.solve_defect_corrector(field, per, rtr, 128)
        nm = norms(ScalarField(d.grid, d.w_tilde, d.cls))
        J = C.energy(d)
        rep = C.sup_norm_report(C.CompositeCorrector(per, d))
        print(f"R_tr={rtr}: wt_l2={nm['l2']:.10g} wt_linf={nm['linf']:.10g} "
              f"J={J:.10g} w_inf={rep['w_inf']:.10g} "
              f"grad_inf={rep['grad_inf']:.10g} t={time.time()-t0:.0f}s",
              flush=True)
        del d
    print("done", flush=True)


if __name__ == "__main__":
    main()
