"""Macroscale problem on the perforated square and its two-scale analysis.

The pipeline: classify the unit square against the eps-scaled perforation,
solve -Laplace u = f with zero Dirichlet data on holes and outer boundary,
build the approximant eps^2 w(x/eps) f(x) from a composite corrector, and
measure the error norms across an eps ladder to fit convergence rates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import solver
from .corrector import (
    CompositeCorrector,
    DefectCorrector,
    PeriodicCorrector,
    _bilinear,
    solve_defect_corrector,
    solve_periodic_corrector,
)
from .geometry import DefectFamily, HoleShape, PerforationField
from .grid import (
    AssembledSystem,
    CartesianGrid,
    GridError,
    NodeClassification,
    ScalarField,
    assemble_laplacian,
    classify_nodes,
    norms,
    quadrature_weights,
)

__all__ = [
    "Source",
    "MacroProblem",
    "ConvergenceReport",
    "StudyTemplate",
    "build_domain",
    "solve_eps_problem",
    "two_scale_approx",
    "error_report",
    "convergence_study",
    "fit_rate",
    "residual_diagnostic",
    "golden_template",
    "write_study_csv",
]


@dataclass(frozen=True)
class Source:
    """Right-hand side: smooth compactly supported radial bump or constant 1.

    The bump is amp * exp(1 - 1/(1 - |x-c|^2/rho^2)) inside the support disk,
    zero outside; its gradient and Laplacian are closed-form so the residual
    diagnostic needs no numerical differentiation of f.
    """

    kind: str = "bump"  # "bump" | "const"
    center: tuple[float, float] = (0.5, 0.5)
    rho: float = 0.35
    amplitude: float = 1.0

    def __post_init__(self):
        if self.kind not in ("bump", "const"):
            raise ValueError(f"unknown source kind {self.kind!r}")
        if self.rho <= 0:
            raise ValueError("support radius must be positive")

    def _s(self, p):
        p = np.asarray(p, dtype=float)
        d = p - np.asarray(self.center)
        return (d[..., 0] ** 2 + d[..., 1] ** 2) / self.rho**2

    def __call__(self, p):
        if self.kind == "const":
            return np.full(np.asarray(p).shape[:-1], self.amplitude)
        s = self._s(p)
        out = np.zeros_like(s)
        inside = s < 1.0
        si = s[inside]
        out[inside] = self.amplitude * np.exp(1.0 - 1.0 / (1.0 - si))
        return out

    def grad(self, p):
        p = np.asarray(p, dtype=float)
        if self.kind == "const":
            return np.zeros(p.shape)
        s = self._s(p)
        d = p - np.asarray(self.center)
        out = np.zeros(p.shape)
        inside = s < 1.0
        si = s[inside]
        f = self.amplitude * np.exp(1.0 - 1.0 / (1.0 - si))
        gp = -1.0 / (1.0 - si) ** 2  # d/ds of the exponent
        out[inside] = (f * gp)[..., None] * (2.0 * d[inside] / self.rho**2)
        return out

    def laplacian(self, p):
        if self.kind == "const":
            return np.zeros(np.asarray(p).shape[:-1])
        s = self._s(p)
        out = np.zeros_like(s)
        inside = s < 1.0
        si = s[inside]
        f = self.amplitude * np.exp(1.0 - 1.0 / (1.0 - si))
        gp = -1.0 / (1.0 - si) ** 2
        gpp = -2.0 / (1.0 - si) ** 3
        grad_s_sq = 4.0 * si / self.rho**2
        lap_s = 4.0 / self.rho**2
        out[inside] = f * ((gp**2 + gpp) * grad_s_sq + gp * lap_s)
        return out

    def n_of_f(self, n_quad: int = 512) -> float:
        """Diagnostic size ||f||_inf + ||grad f||_L2 + ||lap f||_L2 on the
        unit square (midpoint quadrature)."""
        hq = 1.0 / n_quad
        ax = np.linspace(hq / 2, 1 - hq / 2, n_quad)
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        p = np.stack([X, Y], axis=-1)
        fv = self(p)
        gv = self.grad(p)
        lv = self.laplacian(p)
        area = hq * hq
        return (float(np.max(np.abs(fv)))
                + math.sqrt(float(np.sum(gv**2)) * area)
                + math.sqrt(float(np.sum(lv**2)) * area))


@dataclass(frozen=True)
class MacroProblem:
    """Unit-square problem at cell size eps (1/eps integer)."""

    eps: float
    source: Source = dc_field(default_factory=Source)

    def __post_init__(self):
        inv = 1.0 / self.eps
        if abs(inv - round(inv)) > 1e-12:
            raise ValueError("1/eps must be an integer")
        if self.source.kind == "bump":
            c, r = self.source.center, self.source.rho
            if not (r < c[0] < 1 - r and r < c[1] < 1 - r):
                raise ValueError("bump support must lie strictly inside the square")

    @property
    def cells(self) -> int:
        return int(round(1.0 / self.eps))


@dataclass
class MacroDomain:
    """Classified and assembled eps-problem on the unit square."""

    problem: MacroProblem
    field: PerforationField | None
    grid: CartesianGrid
    cls: NodeClassification
    system: AssembledSystem

    def fluid_area(self) -> float:
        return float(np.sum(quadrature_weights(self.cls)))


def build_domain(problem: MacroProblem, field: PerforationField | None,
                 cells_per_h: int = 64) -> MacroDomain:
    """Classify the unit square against the eps-scaled perforation and
    assemble the Dirichlet system (zero on holes and on the outer boundary).

    ``cells_per_h`` is eps/h; fewer than 16 grid points per cell is refused.
    """
    if cells_per_h < 16:
        raise GridError("resolution guard: need h <= eps/16")
    eps = problem.eps
    h = eps / cells_per_h
    nside = problem.cells * cells_per_h + 1
    grid = CartesianGrid((0.0, 0.0), h, nside, nside, "dirichlet")
    if field is None:
        sdf = lambda p: np.full(np.asarray(p).shape[:-1], 1.0)  # noqa: E731
    else:
        sdf = lambda p: field.signed_distance(np.asarray(p) / eps)  # noqa: E731
    cls = classify_nodes(grid, sdf)
    sys_ = assemble_laplacian(grid, cls)
    return MacroDomain(problem, field, grid, cls, sys_)


def solve_eps_problem(domain: MacroDomain, tol: float = 1e-10) -> ScalarField:
    f = domain.problem.source(domain.grid.points())
    b = domain.system.rhs(f)
    if not np.any(b):
        return ScalarField(domain.grid, np.zeros(domain.grid.n_nodes), domain.cls)
    x = solver.solve(domain.system.op, b, tol)
    return ScalarField(domain.grid, domain.system.expand(x), domain.cls)


def two_scale_approx(domain: MacroDomain, w: CompositeCorrector,
                     shift=(0, 0)) -> ScalarField:
    """eps^2 w(x/eps - shift) f(x) nodewise; ``shift`` relocates the
    corrector's defect cell (solved at the origin) to the target cell."""
    eps = domain.problem.eps
    pts = domain.grid.points()
    y = pts / eps - np.asarray(shift, dtype=float)
    vals = eps**2 * w.sample(y) * domain.problem.source(pts)
    return ScalarField(domain.grid, vals, domain.cls)


def error_report(u_eps: ScalarField, approx: ScalarField) -> dict:
    diff = ScalarField(u_eps.grid, u_eps.values - approx.values, u_eps.cls)
    return norms(diff)


def fit_rate(pairs) -> tuple[float, float, float]:
    """Least-squares slope of log(e) against log(eps); returns (slope,
    intercept, max log-residual)."""
    pairs = list(pairs)
    if len(pairs) < 2:
        raise ValueError("need at least 2 pairs")
    eps = np.array([p[0] for p in pairs], dtype=float)
    err = np.array([p[1] for p in pairs], dtype=float)
    if np.any(eps <= 0) or np.any(err <= 0):
        raise ValueError("pairs must be positive")
    A = np.stack([np.log(eps), np.ones_like(eps)], axis=-1)
    coef, *_ = np.linalg.lstsq(A, np.log(err), rcond=None)
    resid = np.log(err) - A @ coef
    return float(coef[0]), float(coef[1]), float(np.max(np.abs(resid)))


def residual_diagnostic(domain: MacroDomain, w: CompositeCorrector,
                        shift=(0, 0)) -> float:
    """L2 norm over the fluid region of
    2 grad_w(x/eps) . grad_f(x) + eps w(x/eps) lap_f(x),
    the eps-uniform source driving the two-scale error equation."""
    eps = domain.problem.eps
    pts = domain.grid.points()
    y = pts / eps - np.asarray(shift, dtype=float)
    gw = w.sample_grad(y)
    gf = domain.problem.source.grad(pts)
    wv = w.sample(y)
    lf = domain.problem.source.laplacian(pts)
    g = 2.0 * np.sum(gw * gf, axis=-1) + eps * wv * lf
    wq = quadrature_weights(domain.cls)
    return float(np.sqrt(np.sum(wq * g * g)))


@dataclass(frozen=True)
class StudyTemplate:
    """Everything a convergence study needs except eps."""

    pattern: HoleShape
    defect_shape: HoleShape | None  # placed at the cell containing the anchor
    source: Source = dc_field(default_factory=Source)
    cell_n: int = 128
    r_tr: int = 4
    anchor: tuple[float, float] = (0.5, 0.5)


def golden_template() -> StudyTemplate:
    """Periodic disks r=0.25, one enlarged to r=0.32 at the cell containing
    the bump center."""
    return StudyTemplate(
        pattern=HoleShape("disk", (0.5, 0.5), (0.25, 0.25)),
        defect_shape=HoleShape("disk", (0.5, 0.5), (0.32, 0.32)),
    )


def _ladder(eps: float) -> int:
    """Grid points per cell: 128 down to eps=1/16, 64 below (largest solve
    stays near 4096^2)."""
    return 128 if eps >= 1.0 / 16 - 1e-12 else 64


def defect_cell_of(template: StudyTemplate, eps: float) -> tuple[int, int]:
    return (int(math.floor(template.anchor[0] / eps)),
            int(math.floor(template.anchor[1] / eps)))


def macro_field_for(template: StudyTemplate, eps: float) -> PerforationField:
    """Perforation with the defect relocated to the cell containing the
    anchor point (the corrector itself is solved with the defect at the
    origin and sampled with the matching shift)."""
    if template.defect_shape is None:
        return PerforationField(template.pattern)
    k0 = defect_cell_of(template, eps)
    moved = HoleShape(
        template.defect_shape.kind,
        (template.defect_shape.center[0] + k0[0],
         template.defect_shape.center[1] + k0[1]),
        template.defect_shape.radii,
        template.defect_shape.rotation,
    )
    return PerforationField(template.pattern, DefectFamily(overrides={k0: moved}))


def corrector_field_for(template: StudyTemplate) -> PerforationField:
    if template.defect_shape is None:
        return PerforationField(template.pattern)
    return PerforationField(
        template.pattern, DefectFamily(overrides={(0, 0): template.defect_shape})
    )


@dataclass
class ConvergenceReport:
    rows: list
    slopes: dict

    def row(self, eps: float) -> dict:
        for r in self.rows:
            if abs(r["epsilon"] - eps) < 1e-12:
                return r
        raise KeyError(eps)


def _w_tilde_sampler(defect: DefectCorrector | None):
    def sampler(y):
        y = np.asarray(y, dtype=float)
        if defect is None:
            return np.zeros(y.shape[:-1])
        lo, hi = defect.window_bounds()
        inside = np.all((y >= lo) & (y <= hi), axis=-1)
        out = np.zeros(y.shape[:-1])
        if np.any(inside):
            out = np.where(inside, _bilinear(defect.grid, defect.w_tilde, y), 0.0)
        return out
    return sampler


def run_single_eps(template: StudyTemplate, eps: float,
                   per: PeriodicCorrector, defect: DefectCorrector | None,
                   cells_per_h: int | None = None) -> dict:
    """One rung of the study: solve, approximate with both corrector
    choices, and collect every reported metric."""
    if cells_per_h is None:
        cells_per_h = _ladder(eps)
    problem = MacroProblem(eps, template.source)
    field = macro_field_for(template, eps)
    k0 = defect_cell_of(template, eps) if template.defect_shape else (0, 0)
    domain = build_domain(problem, field, cells_per_h)
    u = solve_eps_problem(domain)

    full = CompositeCorrector(per, defect)
    per_only = CompositeCorrector(per, None)
    approx_full = two_scale_approx(domain, full, shift=k0)
    approx_per = two_scale_approx(domain, per_only)
    err_full = error_report(u, approx_full)
    err_per = error_report(u, approx_per)

    # Localized error over the scaled defect cell.
    pts = domain.grid.points()
    cell_mask = (domain.cls.fluid
                 & (pts[:, 0] >= k0[0] * eps) & (pts[:, 0] <= (k0[0] + 1) * eps)
                 & (pts[:, 1] >= k0[1] * eps) & (pts[:, 1] <= (k0[1] + 1) * eps))
    diff_per = np.abs(u.values - approx_per.values)
    linf_cell = float(np.max(diff_per[cell_mask])) if np.any(cell_mask) else 0.0

    # H1 size of the defect part of the approximant, hole trace included.
    wt = _w_tilde_sampler(defect)
    f_src = template.source

    def tilde_vals(p):
        p = np.asarray(p, dtype=float)
        return eps**2 * wt(p / eps - np.asarray(k0, dtype=float)) * f_src(p)

    tilde_field = ScalarField(domain.grid, tilde_vals(pts), domain.cls)
    tilde_h1 = norms(tilde_field, hole_values=tilde_vals)["h1"]

    g_l2 = residual_diagnostic(domain, full, shift=k0)
    return {
        "epsilon": eps,
        "h": domain.grid.h,
        "l2_err": err_full["l2"],
        "h1_err": err_full["h1"],
        "linf_err": err_full["linf"],
        "l2_err_per": err_per["l2"],
        "h1_err_per": err_per["h1"],
        "linf_err_per": err_per["linf"],
        "linf_defect_cell": linf_cell,
        "tilde_h1": tilde_h1,
        "g_eps_l2": g_l2,
        "u_l2": norms(u)["l2"],
    }


def convergence_study(template: StudyTemplate, eps_list,
                      corrector_choice: str = "full",
                      rows: list | None = None) -> ConvergenceReport:
    """Run the pipeline per eps and fit log-log slopes.

    Precomputed ``rows`` (from run_single_eps) may be supplied to fit without
    re-solving.  Slopes use only rungs meeting the h <= eps/64 guard.
    """
    if corrector_choice not in ("full", "periodic-only"):
        raise ValueError("corrector choice must be 'full' or 'periodic-only'")
    if rows is None:
        eps_list = sorted(eps_list, reverse=True)
        if len(eps_list) < 3:
            raise ValueError("need at least 3 eps values")
        per = solve_periodic_corrector(template.pattern, template.cell_n)
        defect = None
        if template.defect_shape is not None:
            defect = solve_defect_corrector(
                corrector_field_for(template), per, template.r_tr, template.cell_n
            )
        rows = [run_single_eps(template, eps, per, defect) for eps in eps_list]
    rows = sorted(rows, key=lambda r: -r["epsilon"])
    fit_rows = [r for r in rows if r["h"] <= r["epsilon"] / 64 + 1e-15]
    if len(fit_rows) < 2:
        raise GridError("resolution guard leaves fewer than 2 rungs to fit")
    suffix = "" if corrector_choice == "full" else "_per"
    slopes = {}
    for name, key in (
        ("l2", f"l2_err{suffix}"),
        ("h1", f"h1_err{suffix}"),
        ("linf", f"linf_err{suffix}"),
        ("linf_defect_cell", "linf_defect_cell"),
        ("tilde_h1", "tilde_h1"),
    ):
        vals = [(r["epsilon"], r[key]) for r in fit_rows if r[key] > 0]
        if len(vals) >= 2:
            slope, intercept, resid = fit_rate(vals)
            slopes[name] = {"slope": slope, "intercept": intercept,
                            "max_residual": resid}
    return ConvergenceReport(rows, slopes)


def write_study_csv(report: ConvergenceReport, path) -> None:
    cols = ["epsilon", "h", "l2_err", "h1_err", "linf_err", "l2_err_per",
            "h1_err_per", "linf_err_per", "linf_defect_cell", "tilde_h1",
            "g_eps_l2"]
    lines = [",".join(cols)]
    for r in report.rows:
        lines.append(",".join(f"{r[c]:.17g}" for c in cols))
    for name, s in sorted(report.slopes.items()):
        lines.append(f"# slope {name} {s['slope']:.6g} "
                     f"intercept {s['intercept']:.6g} "
                     f"max_residual {s['max_residual']:.3g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
