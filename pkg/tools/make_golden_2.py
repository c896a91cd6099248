"""Second reference pass for the golden manifest.

Produces:
- the production defect-corrector quantities at cell resolution n=256,
  window R_tr=4 (resolution check against the n=128 production run);
- the eps=1/8 error triple at doubled macro resolution (cells_per_h=256)
  against the production 128 (discretization-error check);
- the constant-source ladder slopes at production resolution.

Run after make_golden_1.py (single CPU box).
"""

import time

import numpy as np

from perfhom import corrector as C
from perfhom import homogenize as H
from perfhom.grid import ScalarField, norms


def main():
    tpl = H.golden_template()

    # --- n=256 window at R_tr=4 ---
    t0 = time.time()
    per256 = C.solve_periodic_corrector(tpl.pattern, 256)
    print(f"w_per max n=256: {per256.max_value():.12g} t={time.time()-t0:.0f}s",
          flush=True)
    t0 = time.time()
    d256 = C.solve_defect_corrector(H.corrector_field_for(tpl), per256, 4, 256)
    nm = norms(ScalarField(d256.grid, d256.w_tilde, d256.cls))
    J = C.energy(d256)
    rep = C.sup_norm_report(C.CompositeCorrector(per256, d256))
    print(f"R_tr=4 n=256: wt_l2={nm['l2']:.10g} wt_linf={nm['linf']:.10g} "
          f"J={J:.10g} w_inf={rep['w_inf']:.10g} grad_inf={rep['grad_inf']:.10g} "
          f"t={time.time()-t0:.0f}s", flush=True)
    del d256, per256

    # --- production corrector pair (reused below) ---
    per = C.solve_periodic_corrector(tpl.pattern, tpl.cell_n)
    defect = C.solve_defect_corrector(H.corrector_field_for(tpl), per,
                                      tpl.r_tr, tpl.cell_n)

    # --- eps=1/8 error triple: production vs doubled macro resolution ---
    for cph in (128, 256):
        t0 = time.time()
        r = H.run_single_eps(tpl, 0.125, per, defect, cells_per_h=cph)
        print(f"eps=1/8 cph={cph}: l2={r['l2_err']:.10g} h1={r['h1_err']:.10g} "
              f"linf={r['linf_err']:.10g} t={time.time()-t0:.0f}s", flush=True)

    # --- constant-source ladder at production resolution ---
    tpl_c = H.StudyTemplate(tpl.pattern, tpl.defect_shape, H.Source("const"),
                            tpl.cell_n, tpl.r_tr)
    rows = []
    for eps in (0.125, 0.0625, 0.03125):
        t0 = time.time()
        r = H.run_single_eps(tpl_c, eps, per, defect, cells_per_h=64)
        rows.append(r)
        print(f"const eps={eps}: h1={r['h1_err']:.10g} l2={r['l2_err']:.10g} "
              f"t={time.time()-t0:.0f}s", flush=True)
    s_h1, *_ = H.fit_rate([(r["epsilon"], r["h1_err"]) for r in rows])
    print(f"const_h1_slope {s_h1:.10g}", flush=True)
    print("done", flush=True)


if __name__ == "__main__":
    main()
