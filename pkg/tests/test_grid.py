import numpy as np
import pytest

from mgpdas.grid import (
    CellField,
    InactiveMask,
    build_hierarchy,
    coarsen_inactive_set,
    domain_measure,
    inject,
    l2_inner,
    l2_norm,
    mask_project,
    numerical_boundary_measure,
    restrict_avg,
)
from mgpdas.targets import disk_inactive_mask


def random_field(n, rng):
    return CellField(n, rng.standard_normal(n * n))


def random_mask(n, rng, p=0.4):
    flags = rng.random(n * n) < p
    return InactiveMask(n, flags)


class TestHierarchy:
    def test_paper_scale_levels(self):
        hier = build_hierarchy(64, 3)
        assert hier.ns == (64, 128, 256)

    def test_minimal(self):
        hier = build_hierarchy(2, 1)
        assert hier.ns == (2,)
        assert hier.ncells(0) == 4

    def test_mesh_sizes(self):
        hier = build_hierarchy(4, 2)
        assert hier.h_at(0) == 0.25
        assert hier.h_at(1) == 0.125

    def test_refinement_ratio_is_half(self):
        hier = build_hierarchy(3, 5)
        for j in range(hier.levels - 1):
            assert hier.h_at(j + 1) / hier.h_at(j) == 0.5

    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            build_hierarchy(1, 3)
        with pytest.raises(ValueError):
            build_hierarchy(8, 0)

    def test_level_of(self):
        hier = build_hierarchy(64, 3)
        assert hier.level_of(128) == 1
        with pytest.raises(ValueError):
            hier.level_of(96)
        with pytest.raises(ValueError):
            hier.level_of(512)


class TestInnerProduct:
    def test_unit_constant_has_unit_norm(self):
        u = CellField.constant(2, 1.0)
        assert l2_inner(u, u) == pytest.approx(1.0)

    def test_zero(self):
        u = CellField.zeros(4)
        v = CellField.constant(4, 3.0)
        assert l2_inner(u, v) == 0.0

    def test_single_cell_indicator(self):
        vals = np.zeros(16)
        vals[5] = 1.0
        u = CellField(4, vals)
        assert l2_inner(u, u) == pytest.approx(1.0 / 16.0)

    def test_level_mismatch_rejected(self):
        with pytest.raises(ValueError):
            l2_inner(CellField.zeros(2), CellField.zeros(4))


class TestTransfers:
    def test_restrict_four_cells(self):
        u = CellField(2, np.array([1.0, 2.0, 3.0, 4.0]))
        c = restrict_avg(u)
        assert c.n == 1
        assert c.values[0] == pytest.approx(2.5)

    def test_restrict_preserves_constants(self):
        u = CellField.constant(8, 3.7)
        assert np.allclose(restrict_avg(u).values, 3.7)

    def test_restrict_single_child(self):
        vals = np.zeros(16)
        vals[1] = 1.0  # cell (ix=1, iy=0) -> parent (0, 0)
        c = restrict_avg(CellField(4, vals))
        expected = np.zeros(4)
        expected[0] = 0.25
        assert np.array_equal(c.values, expected)

    def test_restrict_rejects_coarsest(self):
        with pytest.raises(ValueError):
            restrict_avg(CellField(1, np.array([1.0])))

    def test_inject_constant(self):
        u = CellField(1, np.array([5.0]))
        f = inject(u)
        assert f.n == 2
        assert np.array_equal(f.values, np.full(4, 5.0))

    def test_inject_zero(self):
        assert np.array_equal(inject(CellField.zeros(4)).values, np.zeros(64))

    def test_restrict_after_inject_is_identity(self):
        rng = np.random.default_rng(0)
        for n in (1, 2, 4, 8):
            u = random_field(n, rng)
            back = restrict_avg(inject(u))
            np.testing.assert_allclose(back.values, u.values, rtol=0, atol=1e-15)

    def test_inject_preserves_norm(self):
        rng = np.random.default_rng(1)
        u = random_field(8, rng)
        assert l2_norm(inject(u)) == pytest.approx(l2_norm(u), rel=1e-14)

    def test_inject_restrict_adjoint(self):
        # <inject(u), v>_fine == <u, restrict(v)>_coarse
        rng = np.random.default_rng(2)
        for _ in range(10):
            u = random_field(4, rng)
            v = random_field(8, rng)
            lhs = l2_inner(inject(u), v)
            rhs = l2_inner(u, restrict_avg(v))
            assert lhs == pytest.approx(rhs, rel=1e-13, abs=1e-15)


class TestMaskProject:
    def test_full_mask_is_identity(self):
        rng = np.random.default_rng(3)
        u = random_field(4, rng)
        assert np.array_equal(mask_project(u, InactiveMask.full(4)).values, u.values)

    def test_empty_mask_is_zero(self):
        rng = np.random.default_rng(4)
        u = random_field(4, rng)
        assert np.array_equal(mask_project(u, InactiveMask.empty(4)).values, np.zeros(16))

    def test_partial(self):
        u = CellField(2, np.array([1.0, 2.0, 3.0, 4.0]))
        m = InactiveMask(2, np.array([True, False, False, True]))
        assert np.array_equal(mask_project(u, m).values, np.array([1.0, 0.0, 0.0, 4.0]))

    def test_idempotent(self):
        rng = np.random.default_rng(5)
        u = random_field(8, rng)
        m = random_mask(8, rng)
        once = mask_project(u, m)
        twice = mask_project(once, m)
        assert np.array_equal(once.values, twice.values)

    def test_level_mismatch(self):
        with pytest.raises(ValueError):
            mask_project(CellField.zeros(2), InactiveMask.full(4))


class TestCoarsening:
    def test_full_stays_full(self):
        c = coarsen_inactive_set(InactiveMask.full(8))
        assert c.count == 16

    def test_empty_stays_empty(self):
        assert coarsen_inactive_set(InactiveMask.empty(8)).count == 0

    def test_single_flag_parent(self):
        flags = np.zeros(16, dtype=bool)
        flags[3 * 4 + 2] = True  # (ix=2, iy=3)
        c = coarsen_inactive_set(InactiveMask(4, flags))
        expected = np.zeros(4, dtype=bool)
        expected[1 * 2 + 1] = True  # (1, 1)
        assert np.array_equal(c.flags, expected)

    def test_monotone(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            m1 = random_mask(8, rng, p=0.2)
            extra = rng.random(64) < 0.2
            m2 = InactiveMask(8, m1.flags | extra)
            c1 = coarsen_inactive_set(m1)
            c2 = coarsen_inactive_set(m2)
            assert np.all(c2.flags[c1.flags])

    def test_fine_region_inside_coarse_region(self):
        rng = np.random.default_rng(7)
        m = random_mask(16, rng, p=0.3)
        c = coarsen_inactive_set(m)
        covered = c.as_grid().repeat(2, axis=0).repeat(2, axis=1).reshape(-1)
        assert np.all(covered[m.flags])

    def test_rejects_coarsest(self):
        with pytest.raises(ValueError):
            coarsen_inactive_set(InactiveMask.full(1))


class TestMeasures:
    def test_full_domain(self):
        assert domain_measure(InactiveMask.full(8)) == pytest.approx(1.0)

    def test_single_cell(self):
        flags = np.zeros(16, dtype=bool)
        flags[7] = True
        assert domain_measure(InactiveMask(4, flags)) == pytest.approx(0.0625)

    def test_empty(self):
        assert domain_measure(InactiveMask.empty(4)) == 0.0

    def test_boundary_full_mask_is_zero(self):
        fine = InactiveMask.full(4)
        coarse = coarsen_inactive_set(fine)
        assert numerical_boundary_measure(fine, coarse) == 0.0

    def test_boundary_single_fine_flag(self):
        flags = np.zeros(16, dtype=bool)
        flags[0] = True  # (0, 0): coarse parent covers 4 fine cells, 3 unflagged
        fine = InactiveMask(4, flags)
        coarse = coarsen_inactive_set(fine)
        assert numerical_boundary_measure(fine, coarse) == pytest.approx(3.0 / 16.0)

    def test_boundary_disk_ratio(self):
        # Same disk pair resolved at n=16 and n=32: the band area roughly halves.
        ratios = []
        for n in (16, 32):
            fine = disk_inactive_mask(n)
            coarse = coarsen_inactive_set(fine)
            ratios.append(numerical_boundary_measure(fine, coarse))
        assert 0.5 <= ratios[1] / ratios[0] <= 0.8

    def test_boundary_band_is_first_order(self):
        # Halving h roughly halves the band area for the fixed disk geometry.
        measures = {}
        for n in (32, 64, 128):
            fine = disk_inactive_mask(n)
            measures[n] = numerical_boundary_measure(fine, coarsen_inactive_set(fine))
        assert 0.4 <= measures[64] / measures[32] <= 0.8
        assert 0.4 <= measures[128] / measures[64] <= 0.8

    def test_inconsistent_levels(self):
        with pytest.raises(ValueError):
            numerical_boundary_measure(InactiveMask.full(4), InactiveMask.full(4))


class TestFieldValidation:
    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            CellField(2, np.array([1.0, np.nan, 0.0, 0.0]))

    def test_rejects_wrong_length(self):
        with pytest.raises(ValueError):
            CellField(2, np.zeros(5))

    def test_grid_roundtrip(self):
        rng = np.random.default_rng(8)
        u = random_field(4, rng)
        assert np.array_equal(CellField.from_grid(u.as_grid()).values, u.values)
