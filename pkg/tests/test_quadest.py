import math

import numpy as np
import pytest

from opcalc import hodge, quadest, torus

from conftest import diagonal_coefficients


def scalar_bandpass(t, x):
    return t * x / (1.0 + t * t * x * x)


def scalar_smoothing(t, x):
    return 1.0 / (1.0 + t * t * x * x)


class TestRademacherNorm:
    def test_single_index_exact(self, dirac_pair, grid64):
        u = torus.random_band_limited(grid64, 2, seed=1)
        est = quadest.rademacher_norm(None, [u], p=2.0, samples=16, seed=0)
        assert est.std_error == 0.0
        assert abs(est.mean - torus.lp_norm(u, 2.0)) < 1e-12

    def test_zero_second_summand(self, grid64):
        u = torus.random_band_limited(grid64, 2, seed=2)
        z = torus.zero_field(grid64, 2)
        est = quadest.rademacher_norm(None, [u, z], p=2.0, samples=16, seed=0)
        assert abs(est.mean - torus.lp_norm(u, 2.0)) < 1e-12

    def test_orthogonal_summands_deterministic(self, grid64):
        # disjoint frequencies: the norm of the signed sum never varies
        u1 = torus.plane_wave(grid64, [1], [1.0, 0.0])
        u2 = torus.plane_wave(grid64, [3], [0.0, 2.0])
        est = quadest.rademacher_norm(None, [u1, u2], p=2.0, samples=32, seed=3)
        exact_sq = quadest.exact_l2_square_expectation([u1, u2])
        assert est.std_error <= 1e-12
        assert abs(est.mean**2 - exact_sq) <= 1e-10 * exact_sq

    def test_closed_form_within_three_se(self, dirac_pair, grid64):
        u = torus.random_band_limited(grid64, 2, seed=4, kill_zero_mode=True)
        fields = quadest.bandpass_fields_constant(
            dirac_pair, u, quadest.DyadicScales(-5, 5)
        )
        est = quadest.rademacher_norm(None, fields, p=2.0, samples=128, seed=5)
        exact_sq = quadest.exact_l2_square_expectation(fields)
        assert abs(est.mean_square - exact_sq) <= 3.0 * est.std_error_square

    def test_applies_operators(self, dirac_pair, grid64):
        u = torus.random_band_limited(grid64, 2, seed=6)
        _, _, q = torus.resolvent_multipliers(dirac_pair, grid64, 1.0)
        est1 = quadest.rademacher_norm(
            [lambda v: torus.apply_multiplier(q, v)], [u], p=2.0, samples=16, seed=7
        )
        est2 = quadest.rademacher_norm(
            None, [torus.apply_multiplier(q, u)], p=2.0, samples=16, seed=7
        )
        assert abs(est1.mean - est2.mean) < 1e-12

    def test_minimum_samples_enforced(self, grid64):
        u = torus.random_band_limited(grid64, 2, seed=8)
        with pytest.raises(ValueError):
            quadest.rademacher_norm(None, [u], samples=8)


class TestEta:
    def test_at_one(self):
        assert quadest.eta(1.0) == 1.0

    def test_at_two(self):
        assert abs(quadest.eta(2.0) - 0.5 * (1 + math.log(2))) < 1e-15

    def test_symmetry(self):
        rng = np.random.default_rng(9)
        for x in rng.uniform(0.01, 100.0, 100):
            assert abs(quadest.eta(x) - quadest.eta(1.0 / x)) < 1e-12

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            quadest.eta(0.0)


class TestReproducingSum:
    def test_kernel_field_maps_to_zero(self, dirac_pair, grid64):
        c = torus.GridField(
            grid64, np.broadcast_to([1.0, 2.0], grid64.shape + (2,)).astype(complex)
        )
        out = quadest.reproducing_sum(dirac_pair, c, quadest.DyadicScales(-8, 8))
        assert torus.lp_norm(out, 2.0) <= 1e-12 * torus.lp_norm(c, 2.0)

    def test_single_wave_telescoping_oracle(self, dirac_pair, grid64):
        u = torus.plane_wave(grid64, [1], [1.0, 0.5])
        scales = quadest.DyadicScales(-20, 20)
        out = quadest.reproducing_sum(dirac_pair, u, scales)
        resid = torus.lp_norm(out - u, 2.0) / torus.lp_norm(u, 2.0)
        # telescoping oracle at xi = 1: sum collapses to p(2^-20) - p(2^21)
        oracle = abs(scalar_smoothing(2.0**-20, 1.0) - scalar_smoothing(2.0**21, 1.0) - 0.0)
        gap = abs((1.0 - oracle) - 1.0)  # = |p_small - p_large| distance from 1
        assert resid <= 1e-6
        assert abs(resid - abs(1.0 - oracle)) <= 1e-8 + 0.1 * max(resid, gap)

    def test_window_doubling_improves(self, dirac_pair, grid64):
        u = torus.random_band_limited(grid64, 2, seed=43, kill_zero_mode=True, band=8)
        r1 = quadest.reproducing_residual(dirac_pair, u, quadest.DyadicScales(-6, 6))
        r2 = quadest.reproducing_residual(dirac_pair, u, quadest.DyadicScales(-12, 12))
        assert r2 <= 0.5 * r1

    def test_scalar_identity_on_lattice(self, dirac_pair, grid64):
        # per-frequency eigenvalue form of the telescoping identity
        for x in (1.0, 3.0, 16.0, 32.0):
            acc = 0.0
            for k in range(-20, 21):
                acc += scalar_bandpass(2.0**k, x) * scalar_bandpass(2.0 ** (k + 1), x)
            assert abs(1.5 * acc - 1.0) <= 1e-6

    def test_band_limited_invariant(self, dirac_pair):
        grid = torus.TorusGrid(1, 64)
        u = torus.random_band_limited(grid, 2, seed=44, band=grid.g // 4,
                                      kill_zero_mode=True)
        resid = quadest.reproducing_residual(dirac_pair, u, quadest.DyadicScales(-20, 20))
        assert resid <= 1e-5


class TestSchurProbe:
    def test_zero_function(self, dirac_pair, grid64):
        res = quadest.schur_bound_probe(
            dirac_pair, lambda z: 0.0 * z, [1.0], [1.0], grid64, trials=2, seed=0
        )
        assert res.max_ratio == 0.0

    def test_equal_scales_scalar_oracle(self, dirac_pair, grid64):
        # f = 1: the probe estimates ||Q_t^2|| <= max over lattice of
        # |q(t xi)|^2 <= 1/4
        t = 1.0
        res = quadest.schur_bound_probe(
            dirac_pair, lambda z: 1.0 + 0.0 * z, [t], [t], grid64, trials=6, seed=1
        )
        xs = np.abs(grid64.lattice[..., 0])
        oracle = (scalar_bandpass(t, xs) ** 2).max()
        assert res.max_ratio <= oracle + 1e-12
        assert oracle <= 0.25 + 1e-12

    def test_refinement_stability(self, dirac_pair):
        vals = []
        ts = [0.25, 1.0, 4.0]
        for g in (64, 128):
            grid = torus.TorusGrid(1, g)
            res = quadest.schur_bound_probe(
                dirac_pair, lambda z: z / (1 + z * z), ts, ts, grid, trials=4, seed=47
            )
            vals.append(res.max_ratio)
        assert max(vals) <= 2.0 * min(vals)


class TestQuadraticEstimate:
    def test_kernel_input_vanishes(self, dirac_pair, grid64):
        c = torus.GridField(
            grid64, np.broadcast_to([1.0, 0.0], grid64.shape + (2,)).astype(complex)
        )
        rep = quadest.quadratic_estimate(
            dirac_pair, c, quadest.DyadicScales(-5, 5), samples=16, seed=0
        )
        assert rep.estimate.mean <= 1e-12 * torus.lp_norm(c, 2.0)

    def test_plane_wave_frequency_oracle(self, dirac_pair, grid64):
        u = torus.plane_wave(grid64, [2], [1.0, 1.0])
        scales = quadest.DyadicScales(-6, 6)
        rep = quadest.quadratic_estimate(dirac_pair, u, scales, samples=256, seed=53)
        # frequency-wise exact second moment: per-scale norms of q(t S) on
        # the single excited frequency
        fields = quadest.bandpass_fields_constant(dirac_pair, u, scales)
        exact = quadest.exact_l2_square_expectation(fields)
        assert abs(rep.estimate.mean_square - exact) <= 3.0 * rep.estimate.std_error_square

    def test_sample_count_stability(self, dirac_pair, grid64):
        u = torus.random_band_limited(grid64, 2, seed=53, kill_zero_mode=True)
        scales = quadest.DyadicScales(-5, 5)
        r1 = quadest.quadratic_estimate(dirac_pair, u, scales, samples=64, seed=1)
        r2 = quadest.quadratic_estimate(dirac_pair, u, scales, samples=256, seed=2)
        assert max(r1.ratio, r2.ratio) <= 2.0 * min(r1.ratio, r2.ratio)

    def test_variable_upper_probe(self, dirac_pair, grid16):
        coeffs = diagonal_coefficients(grid16, 2, 0.05, 3)
        op = hodge.VariableOp(dirac_pair, coeffs, grid16)
        u = torus.random_band_limited(grid16, 2, seed=4, kill_zero_mode=True)
        rep = quadest.quadratic_estimate(
            op, u, quadest.DyadicScales(-4, 4), samples=32, seed=5
        )
        assert 0.0 < rep.ratio < 10.0

    def test_calculus_constant_couples_to_square_function(self, dirac_pair, grid64):
        # sanity coupling: the measured bounded-calculus constant stays
        # within an order of magnitude of the square of the measured
        # quadratic-estimate constant (no equality claimed)
        f = lambda z: z / (1 + z * z)
        f_op = torus.matrix_function_multiplier(dirac_pair.total(), f, grid64)
        from opcalc import dacorr

        f_sup = dacorr.sup_norm_on_bisector(f, np.pi / 8)
        _, p_ran = torus.kernel_range_multipliers(dirac_pair.total(), grid64)
        scales = quadest.DyadicScales(-6, 6)
        c_f = 0.0
        c_q = 1.0
        for seed in (1, 2, 3):
            u = torus.apply_multiplier(
                p_ran, torus.random_band_limited(grid64, 2, seed=seed)
            )
            un = torus.lp_norm(u, 2.0)
            c_f = max(
                c_f,
                torus.lp_norm(torus.apply_multiplier(f_op, u), 2.0) / (f_sup * un),
            )
            rep = quadest.quadratic_estimate(dirac_pair, u, scales, samples=64,
                                             seed=seed)
            c_q = max(c_q, rep.constant)
        assert np.isfinite(c_f) and c_f > 0
        assert c_f <= 10.0 * c_q * c_q


class TestTranslatedEstimate:
    def test_zero_shift_reduces(self, dirac_pair, grid64):
        u = torus.random_band_limited(grid64, 2, seed=59, kill_zero_mode=True)
        scales = quadest.DyadicScales(-4, 4)
        plain = quadest.quadratic_estimate(dirac_pair, u, scales, samples=32, seed=6)
        shifted = quadest.translated_quadratic_estimate(
            dirac_pair, u, [0.0], scales, samples=32, seed=6
        )
        assert abs(plain.estimate.mean - shifted.estimate.mean) < 1e-12

    def test_log_plus_inside_unit_ball(self, dirac_pair, grid64):
        u = torus.random_band_limited(grid64, 2, seed=60, kill_zero_mode=True)
        scales = quadest.DyadicScales(-4, 4)
        r = quadest.translated_quadratic_estimate(
            dirac_pair, u, [0.5], scales, samples=32, seed=7
        )
        # |z| <= 1: normalization is exactly ||u||_p
        assert abs(r.ratio - r.estimate.mean / torus.lp_norm(u, 2.0)) < 1e-12

    def test_growth_at_most_logarithmic(self, dirac_pair, grid64):
        u = torus.random_band_limited(grid64, 2, seed=59, kill_zero_mode=True)
        scales = quadest.DyadicScales(-4, 4)
        means = []
        zs = [1.0, 4.0, 16.0]
        for zm in zs:
            rep = quadest.translated_quadratic_estimate(
                dirac_pair, u, [zm], scales, samples=64, seed=8
            )
            means.append(rep.estimate.mean)
        base = quadest.quadratic_estimate(dirac_pair, u, scales, samples=64, seed=8)
        slope = np.polyfit(np.log(zs), means, 1)[0]
        assert slope <= base.estimate.mean


class TestPrincipalPart:
    def test_zero_vector(self, dirac_pair, grid16):
        op = hodge.VariableOp.constant(dirac_pair, grid16)
        out = quadest.principal_part(op, 4 * grid16.cell_width, [0.0, 0.0])
        assert torus.lp_norm(out, 2.0) == 0.0

    def test_identity_coefficients_vanish(self, dirac_pair, grid16):
        op = hodge.VariableOp.constant(dirac_pair, grid16)
        out = quadest.principal_part(op, 4 * grid16.cell_width, [1.0, 0.5])
        assert torus.lp_norm(out, 2.0) <= 1e-10

    def test_matches_direct_constant_extension(self, dirac_pair, grid16):
        coeffs = diagonal_coefficients(grid16, 2, 0.2, 61)
        op = hodge.VariableOp(dirac_pair, coeffs, grid16)
        t = 4 * grid16.cell_width
        w = np.array([0.7, -0.2])
        summed = quadest.principal_part(op, t, w)
        const = torus.GridField(
            grid16, np.broadcast_to(w, grid16.shape + (2,)).astype(complex)
        )
        direct = hodge.bandpass_apply(op, t, const)
        assert torus.lp_norm(summed - direct, 2.0) <= 1e-9

    def test_linear_in_vector(self, dirac_pair, grid16):
        # the principal part acts as a pointwise matrix: assemble it from
        # basis vectors and compare on a random combination
        coeffs = diagonal_coefficients(grid16, 2, 0.2, 62)
        op = hodge.VariableOp(dirac_pair, coeffs, grid16)
        t = 4 * grid16.cell_width
        cols = [quadest.principal_part(op, t, e) for e in np.eye(2)]
        w = np.array([0.3 + 0.1j, -1.2])
        combo = quadest.principal_part(op, t, w)
        ref = w[0] * cols[0].values + w[1] * cols[1].values
        assert np.abs(combo.values - ref).max() <= 1e-9

    def test_incompatible_scale(self, dirac_pair, grid16):
        op = hodge.VariableOp.constant(dirac_pair, grid16)
        with pytest.raises(ValueError):
            quadest.principal_part(op, 3 * grid16.cell_width, [1.0, 0.0])


class TestOffDiagonal:
    def test_ratio_decreases_with_separation(self, dirac_pair):
        grid = torus.TorusGrid(1, 64)
        op = hodge.VariableOp.constant(dirac_pair, grid)
        res = quadest.offdiagonal_probe(
            op, 2 * grid.cell_width, rho_list=(1.0, 4.0), trials=3, seed=63
        )
        assert res.ratios[0] < 1.0
        assert res.ratios[1] < res.ratios[0]
        assert res.decay_exponent >= 1.0

    def test_masked_norm_of_annihilated_input_zero(self, dirac_pair, grid64):
        # an input the operator kills contributes zero to the masked ratio
        op = hodge.VariableOp.constant(dirac_pair, grid64)
        c = torus.GridField(
            grid64, np.broadcast_to([2.0, 1.0], grid64.shape + (2,)).astype(complex)
        )
        out = hodge.bandpass_apply(op, 0.5, c)
        assert torus.lp_norm(out, 2.0) <= 1e-12 * torus.lp_norm(c, 2.0)

    def test_scales_metadata(self):
        s = quadest.DyadicScales(-3, 3)
        assert list(s.ks) == list(range(-3, 4))
        assert s.scales()[0] == 0.125
        with pytest.raises(ValueError):
            quadest.DyadicScales(5, 1)
        with pytest.raises(ValueError):
            quadest.DyadicScales(0, 100)
