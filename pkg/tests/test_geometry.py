"""Geometry layer: shapes, signed distances, defect families, interface tags."""

import math

import numpy as np
import pytest

from perfhom import geometry as G


def disk(cx, cy, r):
    return G.HoleShape("disk", (cx, cy), (r, r))


class TestHoleShape:
    def test_disk_needs_equal_radii(self):
        with pytest.raises(G.GeometryError):
            G.HoleShape("disk", (0.5, 0.5), (0.2, 0.3))

    def test_unknown_kind_rejected(self):
        with pytest.raises(G.GeometryError):
            G.HoleShape("square", (0.5, 0.5), (0.2, 0.2))

    def test_signed_distance_disk_exact(self):
        s = disk(0.5, 0.5, 0.25)
        assert G.signed_distance(s, (0.5, 0.5)) == pytest.approx(-0.25)
        assert G.signed_distance(s, (0.75, 0.5)) == pytest.approx(0.0, abs=1e-15)
        assert G.signed_distance(s, (1.0, 0.5)) == pytest.approx(0.25)

    def test_signed_distance_broadcasts(self):
        s = disk(0.5, 0.5, 0.25)
        p = np.zeros((3, 4, 2)) + 0.5
        assert G.signed_distance(s, p).shape == (3, 4)

    def test_ellipse_sign_exact(self):
        e = G.HoleShape("ellipse", (0.5, 0.5), (0.3, 0.1), rotation=0.4)
        rng = np.random.default_rng(7)
        p = rng.random((500, 2))
        sd = G.signed_distance(e, p)
        # Sign must agree with the algebraic level set.
        c, s = math.cos(0.4), math.sin(0.4)
        d = p - np.array([0.5, 0.5])
        qx = c * d[:, 0] + s * d[:, 1]
        qy = -s * d[:, 0] + c * d[:, 1]
        level = (qx / 0.3) ** 2 + (qy / 0.1) ** 2 - 1.0
        assert np.all(np.sign(sd) == np.sign(level))

    def test_ellipse_distance_first_order_near_boundary(self):
        e = G.HoleShape("ellipse", (0.0, 0.0), (0.3, 0.2))
        t = np.linspace(0, 2 * np.pi, 64, endpoint=False)
        on = np.stack([0.3 * np.cos(t), 0.2 * np.sin(t)], axis=-1)
        assert np.max(np.abs(G.signed_distance(e, on))) < 1e-12
        nrm = e.boundary_normals(64)
        off = on + 1e-4 * nrm
        sd = G.signed_distance(e, off)
        assert np.all(np.abs(sd - 1e-4) < 1e-5)

    def test_boundary_arc_weights_sum_to_perimeter(self):
        s = disk(0.5, 0.5, 0.25)
        assert np.sum(s.boundary_arc_weights()) == pytest.approx(2 * np.pi * 0.25)

    def test_translation_covariance(self):
        rng = np.random.default_rng(3)
        s = disk(0.5, 0.5, 0.25)
        for _ in range(20):
            k = tuple(rng.integers(-5, 6, size=2))
            p = rng.random(2)
            moved = s.translated(k)
            assert G.signed_distance(moved, p + np.array(k, float)) == (
                pytest.approx(float(G.signed_distance(s, p)), abs=1e-12))


class TestEnlargeReduce:
    def test_enlarge_contains_shape(self):
        s = disk(0.5, 0.5, 0.25)
        rng = np.random.default_rng(11)
        p = rng.random((2000, 2))
        inside = G.signed_distance(s, p) < 0
        assert np.all(G.enlarge(s, 0.05)(p)[inside])

    def test_reduce_inside_shape(self):
        s = disk(0.5, 0.5, 0.25)
        rng = np.random.default_rng(12)
        p = rng.random((2000, 2))
        reduced = G.reduce(s, 0.05)(p)
        assert np.all(G.signed_distance(s, p)[reduced] < 0)

    def test_monotone_in_alpha(self):
        s = disk(0.5, 0.5, 0.25)
        rng = np.random.default_rng(13)
        p = rng.random((2000, 2))
        assert np.all(G.enlarge(s, 0.08)(p) | ~G.enlarge(s, 0.03)(p))
        assert np.all(G.reduce(s, 0.03)(p) | ~G.reduce(s, 0.08)(p))

    def test_negative_alpha_rejected(self):
        with pytest.raises(G.GeometryError):
            G.enlarge(disk(0.5, 0.5, 0.25), -0.1)


class TestDefectFamily:
    def test_decay_sum_matches_direct_summation(self):
        fam = G.DefectFamily(decay_amplitude=0.05, decay_ratio=0.5)
        direct = sum(
            fam.alpha((i, j))
            for i in range(-60, 61)
            for j in range(-60, 61)
        )
        assert abs(fam.l1_partial_sum(60) - direct) < 1e-9

    def test_tail_bounds_remainder(self):
        fam = G.DefectFamily(decay_amplitude=0.05, decay_ratio=0.5)
        for window in (5, 10, 20):
            remainder = fam.l1_partial_sum(60) - fam.l1_partial_sum(window)
            assert remainder <= fam.l1_tail(window) + 1e-12

    def test_bad_ratio_rejected(self):
        with pytest.raises(G.GeometryError):
            G.DefectFamily(decay_ratio=1.0)


class TestPerforationField:
    def test_pattern_must_fit_cell(self):
        with pytest.raises(G.GeometryError):
            G.PerforationField(disk(0.5, 0.5, 0.5))

    def test_override_and_decay_cells_detected(self):
        fam = G.DefectFamily(overrides={(2, 3): disk(2.5, 3.5, 0.3)})
        f = G.PerforationField(disk(0.5, 0.5, 0.25), fam)
        assert f.is_perturbed((2, 3))
        assert not f.is_perturbed((0, 0))
        assert f.defect_cells(4) == [(2, 3)]

    def test_signed_distance_matches_per_cell_hole(self):
        fam = G.DefectFamily(overrides={(1, 0): disk(1.6, 0.5, 0.3)})
        f = G.PerforationField(disk(0.5, 0.5, 0.25), fam)
        rng = np.random.default_rng(5)
        p = rng.random((400, 2)) * 3 - 1
        sd = f.signed_distance(p)
        for q, v in zip(p, sd):
            k = (int(np.floor(q[0])), int(np.floor(q[1])))
            expect = float(G.signed_distance(G.hole_at(f, k), q))
            assert v == pytest.approx(expect, abs=1e-12)


class TestMinimalAlphaAndA2:
    def test_concentric_disks(self):
        fam = G.DefectFamily(overrides={(0, 0): disk(0.5, 0.5, 0.32)})
        f = G.PerforationField(disk(0.5, 0.5, 0.25), fam)
        assert G.minimal_alpha(f, (0, 0)) == pytest.approx(0.07)

    def test_shifted_same_radius(self):
        fam = G.DefectFamily(overrides={(0, 0): disk(0.58, 0.5, 0.25)})
        f = G.PerforationField(disk(0.5, 0.5, 0.25), fam)
        assert G.minimal_alpha(f, (0, 0)) == pytest.approx(0.08)

    def test_sampled_path_matches_closed_form(self):
        fam = G.DefectFamily(overrides={
            (0, 0): G.HoleShape("ellipse", (0.5, 0.5), (0.32, 0.32))})
        f = G.PerforationField(disk(0.5, 0.5, 0.25), fam)
        assert G.minimal_alpha(f, (0, 0)) == pytest.approx(0.07, abs=1e-6)

    def test_verify_A2_decay_field(self):
        fam = G.DefectFamily(decay_amplitude=0.05, decay_ratio=0.5)
        f = G.PerforationField(disk(0.5, 0.5, 0.25), fam)
        rep = G.verify_A2(f, window=3, samples_per_cell=32, rng=0)
        assert rep["inclusion_ok"]
        assert rep["summable"]
        assert rep["alphas"][(0, 0)] == pytest.approx(0.05)
        assert rep["alphas"][(1, 1)] == pytest.approx(0.025)
        assert rep["l1_tail_bound"] > 0

    def test_verify_A2_flags_oversize_hole(self):
        fam = G.DefectFamily(overrides={(0, 0): disk(0.5, 0.5, 0.55)})
        f = G.PerforationField(disk(0.5, 0.5, 0.25), fam)
        rep = G.verify_A2(f, window=1)
        assert not rep["inclusion_ok"]
        assert rep["violation_cell"] == (0, 0)


class TestAreasAndBalls:
    def test_symmetric_difference_concentric(self):
        fam = G.DefectFamily(overrides={(0, 0): disk(0.5, 0.5, 0.3)})
        f = G.PerforationField(disk(0.5, 0.5, 0.25), fam)
        expect = math.pi * (0.3**2 - 0.25**2)
        assert G.symmetric_difference_area(f, (0, 0)) == pytest.approx(expect)

    def test_symmetric_difference_disjoint(self):
        # Pattern r=0.2 at (0.3,0.5); defect r=0.2 at (0.7,0.5): disjoint.
        fam = G.DefectFamily(overrides={(0, 0): disk(0.7, 0.5, 0.2)})
        f = G.PerforationField(disk(0.3, 0.5, 0.2), fam)
        expect = 2 * math.pi * 0.04
        assert G.symmetric_difference_area(f, (0, 0)) == pytest.approx(expect)

    def test_quadrature_path_matches_closed_form(self):
        # Same concentric pair but through the sampling fallback (ellipse kind).
        fam = G.DefectFamily(overrides={
            (0, 0): G.HoleShape("ellipse", (0.5, 0.5), (0.3, 0.3))})
        f = G.PerforationField(disk(0.5, 0.5, 0.25), fam)
        expect = math.pi * (0.3**2 - 0.25**2)
        got = G.symmetric_difference_area(f, (0, 0), n=512)
        assert abs(got - expect) <= 1e-4

    def test_inscribed_ball_shifted_pair(self):
        fam = G.DefectFamily(overrides={(0, 0): disk(0.6, 0.5, 0.25)})
        f = G.PerforationField(disk(0.5, 0.5, 0.25), fam)
        center, radius = G.inscribed_ball(f, (0, 0))
        assert radius == pytest.approx(0.2)
        assert center[0] == pytest.approx(0.55)
        assert center[1] == pytest.approx(0.5)

    def test_inscribed_ball_no_defect(self):
        f = G.PerforationField(disk(0.5, 0.5, 0.25))
        center, radius = G.inscribed_ball(f, (3, -2))
        assert radius == pytest.approx(0.25)
        assert center == (pytest.approx(3.5), pytest.approx(-1.5))


class TestCellBoundaryDistance:
    def test_closed_form(self):
        f = G.PerforationField(disk(0.5, 0.5, 0.3))
        assert G.dist_to_cell_boundary(f, (0, 0)) == pytest.approx(0.2)
        assert G.dist_to_cell_boundary(f, (4, -7)) == pytest.approx(0.2)

    def test_touching_hole_errors(self):
        f = G.PerforationField(disk(0.5, 0.5, 0.25))
        fam = G.DefectFamily(overrides={(0, 0): disk(0.5, 0.5, 0.5)})
        f2 = G.PerforationField(disk(0.5, 0.5, 0.25), fam)
        assert G.dist_to_cell_boundary(f2, (1, 1)) > 0
        with pytest.raises(G.GeometryError):
            G.dist_to_cell_boundary(f2, (0, 0))


class TestInterfaceClassification:
    def setup_method(self):
        fam = G.DefectFamily(overrides={(0, 0): disk(0.5, 0.5, 0.32)})
        self.enlarged = G.PerforationField(disk(0.5, 0.5, 0.25), fam)
        fam2 = G.DefectFamily(overrides={(0, 0): disk(0.5, 0.5, 0.2)})
        self.reduced = G.PerforationField(disk(0.5, 0.5, 0.25), fam2)

    def test_enlarged_hole_boundary_is_gamma3(self):
        # Current boundary outside the periodic hole.
        tag = G.classify_interface(self.enlarged, (0, 0), (0.82, 0.5))
        assert tag is G.InterfaceTag.GAMMA3

    def test_enlarged_periodic_boundary_is_covered(self):
        # Periodic boundary swallowed by the enlarged hole: no interface role.
        tag = G.classify_interface(self.enlarged, (0, 0), (0.75, 0.5))
        assert tag is G.InterfaceTag.NONE

    def test_reduced_current_boundary_is_gamma2(self):
        tag = G.classify_interface(self.reduced, (0, 0), (0.7, 0.5))
        assert tag is G.InterfaceTag.GAMMA2

    def test_reduced_periodic_boundary_is_gamma1(self):
        tag = G.classify_interface(self.reduced, (0, 0), (0.75, 0.5))
        assert tag is G.InterfaceTag.GAMMA1

    def test_off_interface_point_rejected(self):
        with pytest.raises(G.GeometryError):
            G.classify_interface(self.enlarged, (0, 0), (0.9, 0.9))

    def test_partition_covers_both_boundaries(self):
        # Every boundary sample of either hole gets a tag (or NONE when the
        # periodic boundary is swallowed); the three tags partition the rest.
        for field in (self.enlarged, self.reduced):
            per = field.periodic_hole_at((0, 0))
            cur = G.hole_at(field, (0, 0))
            for p in per.boundary_points(90):
                tag = G.classify_interface(field, (0, 0), p)
                assert tag in (G.InterfaceTag.GAMMA1, G.InterfaceTag.GAMMA2,
                               G.InterfaceTag.GAMMA3, G.InterfaceTag.NONE)
            for p in cur.boundary_points(90):
                tag = G.classify_interface(field, (0, 0), p)
                assert tag in (G.InterfaceTag.GAMMA2, G.InterfaceTag.GAMMA3)
