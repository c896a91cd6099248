"""Batch front-end: config-driven studies with CSV artifacts and verdicts.

Config files are flat key=value sections (INI syntax, no interpolation).
Every command writes its artifacts atomically (temp file then rename) into
the output directory and appends PASS/FAIL verdict lines to a summary file.

Exit codes: 0 all verdicts pass, 1 verdict failure, 2 config error,
3 solver failure.
"""

from __future__ import annotations

import argparse
import configparser
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import corrector as C
from . import geometry as G
from . import homogenize as H
from . import poincare as P
from .grid import GridError, ScalarField, write_field
from .solver import SolverError

__all__ = ["ExperimentConfig", "ConfigError", "main", "run"]


class ConfigError(ValueError):
    pass


_SCHEMA = {
    "geometry": {
        "pattern_kind", "pattern_center", "pattern_radii", "pattern_rotation",
        "defect_cell", "defect_kind", "defect_center", "defect_radii",
        "defect_rotation", "decay_amplitude", "decay_ratio", "window",
    },
    "corrector": {"cell_n", "r_tr"},
    "macro": {"f_kind", "f_center", "f_rho", "f_amplitude", "eps_list",
              "corrector_choice", "cells_per_h"},
    "poincare": {"eps_list", "cells_per_eps", "box_hole_radius"},
    "output": {"dir", "seed"},
}


@dataclass
class ExperimentConfig:
    pattern_kind: str = "disk"
    pattern_center: tuple = (0.5, 0.5)
    pattern_radii: tuple = (0.25, 0.25)
    pattern_rotation: float = 0.0
    defect_cell: tuple | None = (0, 0)
    defect_kind: str = "disk"
    defect_center: tuple = (0.5, 0.5)
    defect_radii: tuple | None = (0.32, 0.32)
    defect_rotation: float = 0.0
    decay_amplitude: float = 0.0
    decay_ratio: float = 0.5
    window: int = 30
    cell_n: int = 128
    r_tr: int = 4
    f_kind: str = "bump"
    f_center: tuple = (0.5, 0.5)
    f_rho: float = 0.35
    f_amplitude: float = 1.0
    eps_list: tuple = (0.125, 0.0625, 0.03125)
    corrector_choice: str = "full"
    cells_per_h: int = 0  # 0: resolution ladder default
    poincare_eps_list: tuple = (0.25, 0.125, 0.0625)
    cells_per_eps: int = 32
    box_hole_radius: float = 0.3
    out_dir: str = "out"
    seed: int = 0

    # ---- parsing ----

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None)
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(str(exc)) from exc
        return cls.from_parser(cp)

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
        return cls.from_parser(cp)

    @classmethod
    def from_parser(cls, cp) -> "ExperimentConfig":
        cfg = cls()
        for section in cp.sections():
            if section not in _SCHEMA:
                raise ConfigError(f"unknown section [{section}]")
            for key in cp[section]:
                if key not in _SCHEMA[section]:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
        g = cp["geometry"] if cp.has_section("geometry") else {}

        def pair(v):
            parts = v.split()
            if len(parts) != 2:
                raise ConfigError(f"expected two numbers, got {v!r}")
            return (float(parts[0]), float(parts[1]))

        try:
            if "pattern_kind" in g:
                cfg.pattern_kind = g["pattern_kind"]
            if "pattern_center" in g:
                cfg.pattern_center = pair(g["pattern_center"])
            if "pattern_radii" in g:
                cfg.pattern_radii = pair(g["pattern_radii"])
            if "pattern_rotation" in g:
                cfg.pattern_rotation = float(g["pattern_rotation"])
            if "defect_cell" in g:
                v = g["defect_cell"].strip()
                cfg.defect_cell = None if v == "none" else tuple(
                    int(x) for x in v.split())
            if "defect_kind" in g:
                cfg.defect_kind = g["defect_kind"]
            if "defect_center" in g:
                cfg.defect_center = pair(g["defect_center"])
            if "defect_radii" in g:
                v = g["defect_radii"].strip()
                cfg.defect_radii = None if v == "none" else pair(v)
            if "defect_rotation" in g:
                cfg.defect_rotation = float(g["defect_rotation"])
            if "decay_amplitude" in g:
                cfg.decay_amplitude = float(g["decay_amplitude"])
            if "decay_ratio" in g:
                cfg.decay_ratio = float(g["decay_ratio"])
            if "window" in g:
                cfg.window = int(g["window"])
            if cp.has_section("corrector"):
                c = cp["corrector"]
                if "cell_n" in c:
                    cfg.cell_n = int(c["cell_n"])
                if "r_tr" in c:
                    cfg.r_tr = int(c["r_tr"])
            if cp.has_section("macro"):
                m = cp["macro"]
                if "f_kind" in m:
                    cfg.f_kind = m["f_kind"]
                if "f_center" in m:
                    cfg.f_center = pair(m["f_center"])
                if "f_rho" in m:
                    cfg.f_rho = float(m["f_rho"])
                if "f_amplitude" in m:
                    cfg.f_amplitude = float(m["f_amplitude"])
                if "eps_list" in m:
                    cfg.eps_list = tuple(float(x) for x in m["eps_list"].split())
                if "corrector_choice" in m:
                    cfg.corrector_choice = m["corrector_choice"]
                if "cells_per_h" in m:
                    cfg.cells_per_h = int(m["cells_per_h"])
            if cp.has_section("poincare"):
                p = cp["poincare"]
                if "eps_list" in p:
                    cfg.poincare_eps_list = tuple(
                        float(x) for x in p["eps_list"].split())
                if "cells_per_eps" in p:
                    cfg.cells_per_eps = int(p["cells_per_eps"])
                if "box_hole_radius" in p:
                    cfg.box_hole_radius = float(p["box_hole_radius"])
            if cp.has_section("output"):
                o = cp["output"]
                if "dir" in o:
                    cfg.out_dir = o["dir"]
                if "seed" in o:
                    cfg.seed = int(o["seed"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        cfg.validate()
        return cfg

    def validate(self):
        if self.pattern_kind not in ("disk", "ellipse"):
            raise ConfigError("pattern_kind must be disk or ellipse")
        if self.cell_n < 64:
            raise ConfigError("cell_n must be >= 64")
        if self.r_tr < 1:
            raise ConfigError("r_tr must be >= 1")
        if self.f_kind not in ("bump", "const"):
            raise ConfigError("f_kind must be bump or const")
        if self.corrector_choice not in ("full", "periodic-only"):
            raise ConfigError("corrector_choice must be full or periodic-only")
        if not (0 < self.decay_ratio < 1):
            raise ConfigError("decay_ratio must lie in (0,1)")
        if self.decay_amplitude < 0:
            raise ConfigError("decay_amplitude must be >= 0")
        for e in tuple(self.eps_list) + tuple(self.poincare_eps_list):
            if e <= 0 or abs(1.0 / e - round(1.0 / e)) > 1e-12:
                raise ConfigError(f"1/eps must be a positive integer, got {e}")
        if self.cells_per_h and self.cells_per_h < 16:
            raise ConfigError("cells_per_h must be >= 16 (or 0 for the ladder)")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")

    def to_text(self) -> str:
        dc = "none" if self.defect_cell is None else (
            f"{self.defect_cell[0]} {self.defect_cell[1]}")
        dr = "none" if self.defect_radii is None else (
            f"{self.defect_radii[0]:.17g} {self.defect_radii[1]:.17g}")
        return "\n".join([
            "[geometry]",
            f"pattern_kind = {self.pattern_kind}",
            f"pattern_center = {self.pattern_center[0]:.17g} {self.pattern_center[1]:.17g}",
            f"pattern_radii = {self.pattern_radii[0]:.17g} {self.pattern_radii[1]:.17g}",
            f"pattern_rotation = {self.pattern_rotation:.17g}",
            f"defect_cell = {dc}",
            f"defect_kind = {self.defect_kind}",
            f"defect_center = {self.defect_center[0]:.17g} {self.defect_center[1]:.17g}",
            f"defect_radii = {dr}",
            f"defect_rotation = {self.defect_rotation:.17g}",
            f"decay_amplitude = {self.decay_amplitude:.17g}",
            f"decay_ratio = {self.decay_ratio:.17g}",
            f"window = {self.window}",
            "",
            "[corrector]",
            f"cell_n = {self.cell_n}",
            f"r_tr = {self.r_tr}",
            "",
            "[macro]",
            f"f_kind = {self.f_kind}",
            f"f_center = {self.f_center[0]:.17g} {self.f_center[1]:.17g}",
            f"f_rho = {self.f_rho:.17g}",
            f"f_amplitude = {self.f_amplitude:.17g}",
            "eps_list = " + " ".join(f"{e:.17g}" for e in self.eps_list),
            f"corrector_choice = {self.corrector_choice}",
            f"cells_per_h = {self.cells_per_h}",
            "",
            "[poincare]",
            "eps_list = " + " ".join(f"{e:.17g}" for e in self.poincare_eps_list),
            f"cells_per_eps = {self.cells_per_eps}",
            f"box_hole_radius = {self.box_hole_radius:.17g}",
            "",
            "[output]",
            f"dir = {self.out_dir}",
            f"seed = {self.seed}",
        ]) + "\n"

    # ---- derived objects ----

    def pattern(self) -> G.HoleShape:
        return G.HoleShape(self.pattern_kind, self.pattern_center,
                           self.pattern_radii, self.pattern_rotation)

    def defect_shape(self) -> G.HoleShape | None:
        if self.defect_cell is None or self.defect_radii is None:
            return None
        return G.HoleShape(self.defect_kind, self.defect_center,
                           self.defect_radii, self.defect_rotation)

    def perforation(self) -> G.PerforationField:
        overrides = {}
        shape = self.defect_shape()
        if shape is not None:
            k = self.defect_cell
            overrides[k] = shape.translated(k)
        fam = G.DefectFamily(overrides, self.decay_amplitude, self.decay_ratio)
        return G.PerforationField(self.pattern(), fam)

    def source(self) -> H.Source:
        return H.Source(self.f_kind, self.f_center, self.f_rho,
                        self.f_amplitude)

    def template(self) -> H.StudyTemplate:
        return H.StudyTemplate(self.pattern(), self.defect_shape(),
                               self.source(), self.cell_n, self.r_tr,
                               self.f_center)


def atomic_write(path, text: str) -> None:
    """Write-then-rename so readers never observe a partial file."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class Verdicts:
    def __init__(self):
        self.lines = []
        self.ok = True

    def add(self, ok: bool, name: str, measured, expected):
        self.ok &= bool(ok)
        tag = "PASS" if ok else "FAIL"
        self.lines.append(f"{tag} {name} {measured} {expected}")

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"


def cmd_geometry_check(cfg: ExperimentConfig, out: str, v: Verdicts) -> None:
    field = cfg.perforation()
    report = G.verify_A2(field, cfg.window, samples_per_cell=64, rng=cfg.seed)
    v.add(report["inclusion_ok"], "hole_sandwich_inclusion",
          report["violation_cell"], "none")
    v.add(report["l1_tail_bound"] < 1e-6, "alpha_tail",
          f"{report['l1_tail_bound']:.3g}", "<1e-06")
    lines = ["# geometry report",
             f"l1_partial_sum {report['l1_partial_sum']:.17g}",
             f"l1_tail_bound {report['l1_tail_bound']:.17g}"]
    if cfg.defect_cell is not None:
        k = cfg.defect_cell
        alpha = G.minimal_alpha(field, k)
        delta0 = G.dist_to_cell_boundary(field, k)
        ball = G.inscribed_ball(field, (k[0] + 1, k[1]))
        lines += [f"alpha_defect {alpha:.17g}",
                  f"delta0 {delta0:.17g}",
                  f"inscribed_ball_radius {0.0 if ball is None else ball[1]:.17g}"]
        v.add(delta0 > 0, "hole_clearance", f"{delta0:.6g}", ">0")
        v.add(ball is not None and ball[1] >= 0.2 - 1e-12,
              "inscribed_ball", "none" if ball is None else f"{ball[1]:.6g}",
              ">=0.2")
        sym = G.symmetric_difference_area(field, k)
        lines.append(f"symmetric_difference_area {sym:.17g}")
    atomic_write(os.path.join(out, "geometry_report.txt"),
                 "\n".join(lines) + "\n")


def cmd_corrector(cfg: ExperimentConfig, out: str, v: Verdicts) -> None:
    per = C.solve_periodic_corrector(cfg.pattern(), cfg.cell_n)
    write_field(ScalarField(per.grid, per.values, per.cls),
                os.path.join(out, "w_per.txt"))
    field = cfg.perforation()
    tpl = cfg.template()
    cfield = (H.corrector_field_for(tpl) if tpl.defect_shape is not None
              else G.PerforationField(cfg.pattern()))
    defect = C.solve_defect_corrector(cfield, per, cfg.r_tr, cfg.cell_n)
    write_field(ScalarField(defect.grid, defect.w, defect.cls),
                os.path.join(out, "w_window.txt"))
    write_field(ScalarField(defect.grid, defect.w_tilde, defect.cls),
                os.path.join(out, "w_tilde.txt"))
    has_defect = tpl.defect_shape is not None or cfg.decay_amplitude > 0
    if not has_defect:
        m = float(np.max(np.abs(defect.w_tilde)))
        v.add(m <= 1e-10, "no_defect_w_tilde_sup", f"{m:.3g}", "<=1e-10")
    else:
        j_min = C.energy(defect)
        phi, _rep = C.build_initializer(defect)
        j_init = C.energy(defect, phi)
        v.add(j_min <= j_init + 1e-12, "energy_ordering",
              f"{j_min:.6g}", f"<=J(init)={j_init:.6g}")
        wr = C.weak_residual(defect)
        v.add(wr <= 1e-6, "weak_residual", f"{wr:.3g}", "<=1e-06")
    rep = C.sup_norm_report(C.CompositeCorrector(per, defect))
    atomic_write(os.path.join(out, "corrector_report.txt"),
                 f"w_inf {rep['w_inf']:.17g}\n"
                 f"grad_inf {rep['grad_inf']:.17g}\n")


def cmd_study(cfg: ExperimentConfig, out: str, v: Verdicts,
              jobs: int = 1) -> None:
    tpl = cfg.template()
    per = C.solve_periodic_corrector(tpl.pattern, tpl.cell_n)
    defect = None
    if tpl.defect_shape is not None:
        defect = C.solve_defect_corrector(H.corrector_field_for(tpl), per,
                                          tpl.r_tr, tpl.cell_n)
    eps_list = sorted(cfg.eps_list, reverse=True)

    def rung(eps):
        cph = cfg.cells_per_h if cfg.cells_per_h else None
        return H.run_single_eps(tpl, eps, per, defect, cells_per_h=cph)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(rung, eps_list))
    else:
        rows = [rung(e) for e in eps_list]
    report = H.convergence_study(tpl, eps_list, cfg.corrector_choice,
                                 rows=rows)
    path = os.path.join(out, "study.csv")
    tmp = path + ".part"
    H.write_study_csv(report, tmp)
    os.replace(tmp, path)
    if cfg.corrector_choice == "full":
        checks = (("l2", 2.6, 3.4), ("h1", 1.7, 2.3), ("linf", 2.6, 3.4))
    else:
        checks = (("linf_defect_cell", 1.7, 2.3), ("h1", 1.7, 2.3))
    for name, lo, hi in checks:
        if name in report.slopes:
            s = report.slopes[name]["slope"]
            v.add(lo <= s <= hi, f"rate_{name}", f"{s:.4g}", f"[{lo},{hi}]")


def cmd_poincare(cfg: ExperimentConfig, out: str, v: Verdicts) -> None:
    r = cfg.box_hole_radius
    box = P.check_box_constant(
        G.HoleShape("disk", (0.5, 0.5), (r, r)), (0.5, 0.5),
        r * math.sqrt(2.0), n=256)
    v.add(box["ok"], "box_bound", f"{box['constant']:.6g}",
          f"<={box['bound'] * 1.02:.6g}")
    study = P.eps_scaling_study(cfg.perforation(), cfg.poincare_eps_list,
                                cfg.cells_per_eps)
    path = os.path.join(out, "poincare.csv")
    tmp = path + ".part"
    P.write_scaling_csv(study, tmp)
    os.replace(tmp, path)
    if study["ok"] is not None:
        v.add(study["ok"], "c_eps_ratio", f"{study['ratio']:.4g}", "<=2")


def self_test() -> int:
    """Closed-form checks of the study plumbing: exact power-law data must
    fit exactly, and the rate fit must reject bad input."""
    s, _, r = H.fit_rate([(0.5, 0.25), (0.25, 0.0625), (0.125, 0.015625)])
    assert abs(s - 2.0) < 1e-12 and r < 1e-12, "synthetic slope 2 failed"
    s, _, _ = H.fit_rate([(0.5, 0.125), (0.25, 0.015625)])
    assert abs(s - 3.0) < 1e-12, "synthetic slope 3 failed"
    print("PASS self_test rate_fit exact")
    return 0


def run(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="perfhom",
        description="Perforated-domain homogenization laboratory")
    parser.add_argument("command", choices=["geometry-check", "corrector",
                                            "study", "poincare", "all"])
    parser.add_argument("--config", default=None)
    parser.add_argument("--out", default=None)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--self-test", action="store_true")
    args = parser.parse_args(argv)

    if args.self_test:
        return self_test()

    try:
        cfg = (ExperimentConfig.from_file(args.config) if args.config
               else ExperimentConfig())
        cfg.validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    out = args.out or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    v = Verdicts()
    try:
        if args.command in ("geometry-check", "all"):
            cmd_geometry_check(cfg, out, v)
        if args.command in ("corrector", "all"):
            cmd_corrector(cfg, out, v)
        if args.command in ("study", "all"):
            cmd_study(cfg, out, v, jobs=args.jobs)
        if args.command in ("poincare", "all"):
            cmd_poincare(cfg, out, v)
    except (G.GeometryError, GridError, ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    atomic_write(os.path.join(out, "summary.txt"), v.text())
    print(v.text(), end="")
    return 0 if v.ok else 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
