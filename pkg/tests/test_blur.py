import math

import numpy as np
import pytest
from scipy.special import erf

from mgpdas.blur import (
    GaussianBlurBackend,
    aggregate_order,
    build_blur,
    consistency_rate,
    observed_orders,
)
from mgpdas.grid import CellField, l2_inner


def direct_blur_oracle(op, u_vals):
    """Reference 2D double-sum application: weights from the closed-form
    Gaussian coefficients, normalized so full interior rows sum to one."""
    n, r, h, sig = op.n, op.radius, op.h, op.sigma
    alpha = erf(op.w_h / (sig * math.sqrt(2.0))) ** 2
    d = np.arange(-r, r + 1) * h
    one_d = h / (2 * alpha * math.pi) ** 0.5 / sig * np.exp(-(d**2) / (2 * sig**2))
    gamma2 = np.outer(one_d, one_d)
    scale = 1.0 / gamma2.sum()  # (1 + eta) from the interior row-sum condition
    grid = u_vals.reshape(n, n)
    out = np.zeros((n, n))
    for iy in range(n):
        for ix in range(n):
            acc = 0.0
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    jx, jy = ix + dx, iy + dy
                    if 0 <= jx < n and 0 <= jy < n:
                        acc += gamma2[dy + r, dx + r] * grid[jy, jx]
            out[iy, ix] = scale * acc
    return out.reshape(-1)


class TestBuild:
    def test_paper_parameters(self):
        op = build_blur(0.1 / 3, 0.1, 128)
        assert op.sigma == pytest.approx(0.1 / 3)
        assert op.radius == 13
        assert op.w_h == pytest.approx(13.5 / 128)

    def test_radius_at_coarse_grid(self):
        op = build_blur(0.1 / 3, 0.1, 16)
        assert op.radius == 2
        assert op.w_h == pytest.approx(2.5 / 16)
        assert len(op.weights) == 5

    def test_window_bracketing(self):
        for n in (16, 37, 64, 100, 256):
            op = build_blur(0.05, 0.13, n)
            assert 0.13 <= op.w_h < 0.13 + op.h

    def test_weights_symmetric_and_normalized(self):
        op = build_blur(0.03, 0.1, 64)
        assert np.allclose(op.weights, op.weights[::-1], rtol=0, atol=0)
        assert op.weights.sum() == pytest.approx(1.0, abs=1e-15)

    def test_rejections(self):
        with pytest.raises(ValueError):
            build_blur(0.03, 0.6, 64)  # w >= 1/2
        with pytest.raises(ValueError):
            build_blur(-1.0, 0.1, 64)
        with pytest.raises(ValueError):
            build_blur(0.03, 0.1, 4)  # h = 0.25 >= 2w: empty stencil
        with pytest.raises(ValueError):
            build_blur(0.03, 0.1, 64, boundary_mode="mirror")


class TestApply:
    def test_interior_rows_sum_to_one(self):
        for n in (32, 64):
            op = build_blur(0.1 / 3, 0.1, n)
            out = op.apply(CellField.constant(n, 1.0))
            interior = op.interior_cells()
            assert np.max(np.abs(out.values[interior] - 1.0)) <= 1e-14

    def test_zero(self):
        op = build_blur(0.1 / 3, 0.1, 32)
        assert np.all(op.apply(CellField.zeros(32)).values == 0.0)

    def test_impulse_matches_double_sum(self):
        n = 16
        op = build_blur(0.1 / 3, 0.1, n)
        vals = np.zeros(n * n)
        vals[9 * n + 7] = 1.0
        got = op.apply(CellField(n, vals)).values
        want = direct_blur_oracle(op, vals)
        assert np.max(np.abs(got - want)) <= 1e-14

    def test_random_field_matches_double_sum(self):
        n = 12
        op = build_blur(0.04, 0.12, n)
        rng = np.random.default_rng(0)
        vals = rng.standard_normal(n * n)
        got = op.apply(CellField(n, vals)).values
        want = direct_blur_oracle(op, vals)
        assert np.max(np.abs(got - want)) <= 1e-13

    def test_pass_order_irrelevant(self):
        n = 32
        op = build_blur(0.1 / 3, 0.1, n)
        rng = np.random.default_rng(1)
        u = CellField(n, rng.standard_normal(n * n))
        a = op.apply(u, x_first=True)
        b = op.apply(u, x_first=False)
        assert np.max(np.abs(a.values - b.values)) <= 1e-14

    def test_max_norm_bound(self):
        n = 64
        op = build_blur(0.1 / 3, 0.1, n)
        rng = np.random.default_rng(2)
        for _ in range(5):
            u = rng.standard_normal(n * n)
            out = op.apply(CellField(n, u)).values
            assert np.max(np.abs(out)) <= (1.0 + abs(op.eta)) * np.max(np.abs(u)) + 1e-12

    def test_restricted_mode_zeroes_boundary_band(self):
        n = 32
        op = build_blur(0.1 / 3, 0.1, n, boundary_mode="restricted")
        out = op.apply(CellField.constant(n, 1.0))
        grid = out.values.reshape(n, n)
        r = op.radius
        assert np.all(grid[:r, :] == 0.0)
        assert np.all(grid[:, -r:] == 0.0)
        assert np.all(grid[r : n - r, r : n - r] == pytest.approx(1.0, abs=1e-14))


class TestAdjoint:
    def test_zero_extension_self_adjoint(self):
        n = 24
        op = build_blur(0.05, 0.15, n)
        rng = np.random.default_rng(3)
        u = CellField(n, rng.standard_normal(n * n))
        fwd = op.apply(u)
        adj = op.apply_adjoint(u)
        assert np.max(np.abs(fwd.values - adj.values)) <= 1e-14

    def test_restricted_adjoint_identity(self):
        n = 24
        op = build_blur(0.05, 0.15, n, boundary_mode="restricted")
        rng = np.random.default_rng(4)
        for _ in range(5):
            u = CellField(n, rng.standard_normal(n * n))
            v = CellField(n, rng.standard_normal(n * n))
            assert l2_inner(op.apply(u), v) == pytest.approx(
                l2_inner(u, op.apply_adjoint(v)), rel=1e-13, abs=1e-16
            )

    def test_adjoint_impulse_is_reversed_forward_impulse(self):
        n = 16
        op = build_blur(0.1 / 3, 0.1, n, boundary_mode="restricted")
        e1 = np.zeros(n * n)
        e2 = np.zeros(n * n)
        e1[5 * n + 6] = 1.0
        e2[9 * n + 3] = 1.0
        # <K e1, e2> must equal <e1, K^T e2> entrywise for unit vectors.
        k_e1 = op.apply(CellField(n, e1)).values
        kt_e2 = op.apply_adjoint(CellField(n, e2)).values
        assert k_e1[9 * n + 3] == pytest.approx(kt_e2[5 * n + 6], rel=0, abs=1e-16)


class TestEta:
    def test_eta_bounded_by_h_squared(self):
        # |eta| <= C h^2 with one constant across the whole range; the
        # per-level values wobble with the window rounding.
        for n in (16, 32, 64, 128, 256, 512):
            op = build_blur(0.1 / 3, 0.1, n)
            assert abs(op.eta) <= 5.0 / n**2

    def test_eta_vanishes_under_refinement(self):
        coarse = abs(build_blur(0.1 / 3, 0.1, 16).eta)
        fine = abs(build_blur(0.1 / 3, 0.1, 512).eta)
        assert fine < 1e-2 * coarse


class TestConsistency:
    def test_first_order_in_range(self):
        errs = consistency_rate(0.1 / 3, 0.1, [32, 64, 128, 256])
        assert aggregate_order(errs) >= 0.8

    def test_monotone_on_dyadic_run(self):
        errs = consistency_rate(0.1 / 3, 0.1, [32, 64, 128, 256])
        assert np.all(np.diff(errs) < 0.0)

    def test_constant_field_consistent_to_rounding(self):
        errs = consistency_rate(
            0.1 / 3, 0.1, [32, 64, 128], field_fn=lambda n: CellField.constant(n, 1.0)
        )
        assert np.all(errs <= 1e-13)

    def test_too_few_levels(self):
        with pytest.raises(ValueError):
            consistency_rate(0.1 / 3, 0.1, [64, 128])

    def test_orders_helper(self):
        orders = observed_orders([8.0, 4.0, 1.0])
        np.testing.assert_allclose(orders, [1.0, 2.0])
        assert aggregate_order([8.0, 4.0, 1.0]) == pytest.approx(1.5)


class TestBackendFamily:
    def test_normal_operator_self_adjoint_and_psd(self):
        be = GaussianBlurBackend(0.1 / 3, 0.1, "restricted")
        n = 32
        rng = np.random.default_rng(5)
        for _ in range(5):
            u = CellField(n, rng.standard_normal(n * n))
            v = CellField(n, rng.standard_normal(n * n))
            a = l2_inner(be.apply_KtK(u), v)
            b = l2_inner(u, be.apply_KtK(v))
            assert a == pytest.approx(b, rel=1e-12, abs=1e-16)
            assert l2_inner(be.apply_KtK(u), u) >= 0.0

    def test_levels_cached(self):
        be = GaussianBlurBackend(0.1 / 3, 0.1)
        assert be.level(64) is be.level(64)
