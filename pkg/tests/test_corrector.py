"""Cell correctors: periodic problem, truncated defect window, composite
sampler, energy functional and admissible initializer."""

import numpy as np
import pytest

from perfhom import corrector as C
from perfhom import geometry as G
from perfhom.grid import GridError


def disk(cx, cy, r):
    return G.HoleShape("disk", (cx, cy), (r, r))


class TestPeriodicCorrector:
    def test_residual_contract(self, per64):
        sys_ = per64.system
        b = sys_.rhs(np.ones(per64.grid.n_nodes))
        res = np.max(np.abs(sys_.op.matvec(per64.values[sys_.free]) - b))
        assert res <= C.RESIDUAL_MAX

    def test_positive_on_fluid_zero_on_hole(self, per64):
        free_vals = per64.values[per64.system.free]
        assert np.all(free_vals > 0)
        assert np.all(per64.values[per64.cls.solid] == 0.0)

    def test_four_fold_symmetry(self, per64):
        v = per64.values.reshape(per64.n, per64.n)
        assert np.allclose(v, v.T, atol=1e-9)
        assert np.allclose(v, np.roll(v[::-1, :], 1, axis=0), atol=1e-9)

    def test_grid_refinement_consistency(self, pattern, per64):
        per128 = C.solve_periodic_corrector(pattern, 128)
        # Second-order scheme: max values at n=64 and n=128 agree to O(h^2).
        assert per128.max_value() == pytest.approx(per64.max_value(), abs=5e-5)

    def test_sample_periodicity_and_hole_zero(self, per64):
        rng = np.random.default_rng(4)
        y = rng.random((200, 2)) * 6 - 3
        assert np.allclose(per64.sample(y), per64.sample(y + [2.0, -5.0]),
                           atol=1e-14)
        center_pts = np.array([[0.5, 0.5], [3.5, -1.5], [0.6, 0.55]])
        assert np.all(per64.sample(center_pts) == 0.0)

    def test_extension_exact_on_aligned_grid(self, per64):
        from perfhom.grid import CartesianGrid
        g = CartesianGrid((-1.0, -1.0), per64.grid.h, 3 * per64.n + 1,
                          3 * per64.n + 1)
        ext = per64.extension_on(g)
        pts = g.points()
        # Spot-check against direct periodic lookup.
        rng = np.random.default_rng(6)
        for idx in rng.integers(0, g.n_nodes, size=50):
            frac = pts[idx] - np.floor(pts[idx] + 1e-13)
            i = int(round(frac[0] * per64.n)) % per64.n
            j = int(round(frac[1] * per64.n)) % per64.n
            assert ext[idx] == per64.values[j * per64.n + i]

    def test_misaligned_grid_rejected(self, per64):
        from perfhom.grid import CartesianGrid
        g = CartesianGrid((0.0, 0.0), 1.0 / 48, 49, 49)
        with pytest.raises(GridError):
            per64.extension_on(g)

    def test_resolution_floor(self, pattern):
        with pytest.raises(GridError):
            C.solve_periodic_corrector(pattern, 32)

    def test_green_identity(self, per64):
        out = C.green_identity(per64)
        assert out["rel_gap"] < 1e-10
        assert out["lhs"] > 0


class TestDefectCorrector:
    def test_resolution_must_match(self, enlarged_field, per64, pattern):
        per128 = C.solve_periodic_corrector(pattern, 128)
        with pytest.raises(GridError):
            C.solve_defect_corrector(enlarged_field, per128, r_tr=1, n=64)

    def test_no_defect_perturbation_vanishes(self, pattern, per64):
        field = G.PerforationField(pattern)
        d = C.solve_defect_corrector(field, per64, r_tr=1, n=64)
        assert np.max(np.abs(d.w_tilde[d.cls.fluid])) < 1e-10

    def test_w_zero_on_holes_positive_on_fluid(self, defect64):
        assert np.all(defect64.w[defect64.cls.solid] == 0.0)
        assert np.all(defect64.w[defect64.system.free] > 0)

    def test_matches_periodic_on_window_edge(self, defect64):
        outer = defect64.grid.outer_boundary_mask() & defect64.cls.fluid
        assert np.allclose(defect64.w[outer], defect64.per_ext[outer])

    def test_w_tilde_negative_near_enlarged_hole(self, defect64):
        # The enlarged hole removes fluid, so the solution drops below the
        # periodic profile around the defect cell.
        pts = defect64.grid.points()
        near = (defect64.cls.fluid & (defect64.cls.sd < 0.1)
                & (np.max(np.abs(pts - 0.5), axis=1) < 0.5))
        assert np.all(defect64.w_tilde[near] <= 1e-12)
        assert defect64.w_tilde[near].min() < -1e-4

    def test_perturbation_decays_toward_window_edge(self, defect64):
        v = np.abs(defect64.w_tilde)
        pts = defect64.grid.points()
        r = np.max(np.abs(pts - 0.5), axis=1)
        near_amp = v[defect64.cls.fluid & (r < 0.6)].max()
        far_amp = v[defect64.cls.fluid & (r > 2.0)].max()
        assert far_amp < 0.05 * near_amp

    def test_green_identity(self, defect64):
        out = C.green_identity(defect64)
        assert out["rel_gap"] < 1e-10


class TestCompositeCorrector:
    def test_agrees_with_window_inside_and_periodic_outside(self, defect64):
        w = C.CompositeCorrector(defect64.per, defect64)
        rng = np.random.default_rng(8)
        inside = rng.random((100, 2)) * 4.4 - 1.9
        vals = w.sample(inside)
        sd = defect64.field.signed_distance(inside)
        direct = C._bilinear(defect64.grid, defect64.w, inside)
        assert np.allclose(vals[sd > 0], direct[sd > 0])
        assert np.all(vals[sd < 0] == 0.0)
        outside = rng.random((100, 2)) * 10 + 8
        assert np.allclose(w.sample(outside), defect64.per.sample(outside))

    def test_seam_continuity(self, defect64):
        # Values just inside and outside the window edge differ only by the
        # decayed perturbation plus interpolation error.
        w = C.CompositeCorrector(defect64.per, defect64)
        lo, hi = defect64.window_bounds()
        t = np.linspace(lo + 0.1, hi - 0.1, 97)
        h = defect64.grid.h
        inner = np.stack([t, np.full_like(t, hi - 1e-9)], axis=-1)
        outer = np.stack([t, np.full_like(t, hi + 1e-9)], axis=-1)
        jump = np.max(np.abs(w.sample(inner) - w.sample(outer)))
        assert jump < 5 * h  # loose at r_tr=2; tightens with the window

    def test_gradient_matches_analytic_quadratic_region(self, per64):
        # Away from holes the corrector is smooth; centered differences of the
        # sampler must agree with difference quotients of the nodal field.
        w = C.CompositeCorrector(per64)
        y = np.array([[0.5, 0.06], [0.06, 0.5], [0.94, 0.5]])
        delta = 0.75 / per64.n
        g = w.sample_grad(y, delta=delta)
        for i, p in enumerate(y):
            gx = (w.sample(p + [delta, 0]) - w.sample(p - [delta, 0])) / (2 * delta)
            gy = (w.sample(p + [0, delta]) - w.sample(p - [0, delta])) / (2 * delta)
            assert g[i, 0] == pytest.approx(gx, abs=1e-12)
            assert g[i, 1] == pytest.approx(gy, abs=1e-12)


class TestEnergyFunctional:
    def test_minimizer_beats_initializer(self, defect64):
        j_min = C.energy(defect64)
        phi, rep = C.build_initializer(defect64)
        j_init = C.energy(defect64, phi)
        assert j_min <= j_init + 1e-12

    def test_initializer_energy_below_apriori_bound(self, defect64):
        phi, rep = C.build_initializer(defect64)
        assert rep["grad_energy"] <= rep["apriori_bound"]
        assert rep["apriori_bound"] < np.inf

    def test_initializer_admissible_trace(self, defect64):
        # On the enlarged-hole rim the initializer equals -w_per (so that
        # w_per + phi vanishes there, matching the hole condition).
        phi, _ = C.build_initializer(defect64)
        cur = G.hole_at(defect64.field, (0, 0))
        rim = cur.boundary_points(360)
        vals = C._bilinear(defect64.grid, phi + defect64.per.extension_on(defect64.grid), rim)
        assert np.max(np.abs(vals)) < 5e-3  # interpolation-limited

    def test_weak_residual_small_at_minimizer(self, defect64):
        assert C.weak_residual(defect64) < 1e-6

    def test_weak_residual_large_for_perturbed_field(self, defect64):
        bad = defect64.w_tilde.copy()
        pts = defect64.grid.points()
        bump = np.exp(-20 * np.sum((pts - np.array([1.7, 1.7])) ** 2, axis=1))
        bad += 0.05 * bump
        assert C.weak_residual(defect64, bad) > 1e-4


class TestSupNormReport:
    def test_report_keys_and_bounds(self, defect64):
        w = C.CompositeCorrector(defect64.per, defect64)
        rep = C.sup_norm_report(w)
        assert rep["w_inf"] >= defect64.per.max_value()
        assert rep["grad_inf"] > 0
        # Interior max principle: w is bounded by the no-hole square profile.
        assert rep["w_inf"] < 0.1
