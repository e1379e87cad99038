import math

import numpy as np
import pytest

from phaseformer.data import SyntheticLowRank, gen_drifting_cycles
from phaseformer.diagnostics import (build_token_sets, effective_dim,
                                     explained_variance_ratios,
                                     median_heuristic_gamma, rbf_mmd2,
                                     subspace_distance, verify_stability,
                                     weekly_drift)
from phaseformer.errors import ContractError, DataError, ShapeError, SpecError


def mmd2_double_loop(p, q, gamma):
    def k(x, y):
        return math.exp(-gamma * float(np.sum((x - y) ** 2)))

    def mean_kernel(a, b):
        total = 0.0
        for x in a:
            for y in b:
                total += k(x, y)
        return total / (len(a) * len(b))

    return mean_kernel(p, p) + mean_kernel(q, q) - 2.0 * mean_kernel(p, q)


class TestRbfMmd2:
    def test_identical_samples_zero(self, rng):
        p = rng.normal(size=(20, 3))
        assert rbf_mmd2(p, p.copy()) == 0.0

    def test_singleton_closed_form(self):
        x = np.array([[0.0, 0.0]])
        y = np.array([[1.0, 1.0]])
        gamma = 0.7
        expected = 2.0 - 2.0 * math.exp(-gamma * 2.0)
        assert abs(rbf_mmd2(x, y, gamma=gamma) - expected) < 1e-14
        assert rbf_mmd2(x, x.copy(), gamma=gamma) == 0.0

    def test_separated_clouds_vs_double_loop(self):
        r = np.random.default_rng(0)
        p = r.standard_normal((500, 2))
        q = r.standard_normal((500, 2)) + 3.0
        gamma = median_heuristic_gamma(np.vstack([p, q]))
        val = rbf_mmd2(p, q)
        assert abs(val - mmd2_double_loop(p, q, gamma)) < 1e-12
        assert val > 0.3

    def test_symmetry_and_nonnegativity(self, rng):
        for _ in range(5):
            p = rng.normal(size=(12, 4))
            q = rng.normal(size=(9, 4), loc=rng.normal())
            a = rbf_mmd2(p, q)
            b = rbf_mmd2(q, p)
            assert a >= 0.0
            assert abs(a - b) < 1e-12

    def test_dim_mismatch(self, rng):
        with pytest.raises(ShapeError):
            rbf_mmd2(rng.normal(size=(3, 2)), rng.normal(size=(3, 3)))

    def test_explicit_gamma(self, rng):
        p = rng.normal(size=(8, 2))
        q = rng.normal(size=(8, 2))
        assert abs(rbf_mmd2(p, q, gamma=0.5)
                   - mmd2_double_loop(p, q, 0.5)) < 1e-12


class TestBuildTokenSets:
    def test_patch_tokens_by_definition(self):
        series = np.arange(1.0, 25.0)  # two windows of 4 periods x l_phase 3
        phase, patch = build_token_sets(series, 3, periods_per_window=4)
        assert np.array_equal(patch.tokens[:4],
                              [[1, 2, 3], [4, 5, 6], [7, 8, 9], [10, 11, 12]])
        assert np.array_equal(patch.week[:4], [0, 0, 0, 0])

    def test_phase_tokens_by_definition(self):
        series = np.arange(1.0, 25.0)
        phase, _ = build_token_sets(series, 3, periods_per_window=4)
        # phase-0 token of window 0: offsets 0, 3, 6, 9 -> values 1,4,7,10
        assert np.array_equal(phase.tokens[0], [1.0, 4.0, 7.0, 10.0])
        assert np.array_equal(phase.tokens[1], [2.0, 5.0, 8.0, 11.0])
        assert phase.tokens.shape == (6, 4)

    def test_periodic_series_constant_phase_tokens(self):
        series = np.tile(np.array([5.0, -1.0, 2.0]), 8)
        phase, _ = build_token_sets(series, 3, periods_per_window=4)
        for token in phase.tokens:
            assert np.all(token == token[0])

    def test_too_short(self):
        with pytest.raises(DataError):
            build_token_sets(np.arange(10.0), 3, periods_per_window=4)


class TestWeeklyDrift:
    def test_periodic_phase_mmd_zero(self):
        series = np.tile(np.sin(2 * np.pi * np.arange(24) / 24), 7 * 6)
        curves = weekly_drift(series, 24)
        assert curves.phase_mmd.size == 5
        assert curves.phase_mmd.max() <= 1e-10

    def test_curve_lengths(self):
        series = gen_drifting_cycles(9, 12, 0.1, seed=0)
        curves = weekly_drift(series, 12)
        assert curves.phase_mmd.size == 8
        assert curves.patch_mmd.size == 8

    def test_drifting_cycles_phase_below_patch(self):
        series = gen_drifting_cycles(20, 24, 0.1, seed=0)
        curves = weekly_drift(series, 24)
        assert curves.phase_mean < curves.patch_mean

    def test_patch_divergence_monotone(self):
        series = gen_drifting_cycles(20, 24, 0.1, seed=3)
        curves = weekly_drift(series, 24)
        assert np.all(np.diff(curves.patch_mmd) >= -1e-9)


class TestEffectiveDim:
    def test_line_cloud(self, rng):
        direction = rng.normal(size=6)
        tokens = np.outer(rng.normal(size=40), direction) + 2.0
        assert effective_dim(tokens) == 1

    def test_isotropic_gaussian(self):
        r = np.random.default_rng(1)
        tokens = r.standard_normal((20000, 5))
        assert effective_dim(tokens, threshold=0.9) == 5

    def test_rank_two_low_rank_phase_tokens(self):
        from phaseformer.data import gen_low_rank

        spec = SyntheticLowRank.generate(40, 28, r=2, delta_scale=0.0,
                                         noise_scale=1e-3, seed=0)
        x, _, _ = gen_low_rank(spec)
        assert effective_dim(x.T) == 2

    def test_rotation_invariance(self, rng):
        tokens = rng.normal(size=(60, 7)) @ np.diag([5, 3, 2, 1, 0.5, 0.2, 0.1])
        q, _ = np.linalg.qr(rng.normal(size=(7, 7)))
        assert effective_dim(tokens) == effective_dim(tokens @ q)

    def test_zero_variance(self):
        assert effective_dim(np.ones((10, 4))) == 0

    def test_ratios_sum_to_one(self, rng):
        ratios = explained_variance_ratios(rng.normal(size=(30, 5)))
        assert abs(ratios.sum() - 1.0) < 1e-12
        assert np.all(np.diff(ratios) <= 1e-15)


class TestSubspaceDistance:
    def test_same_subspace(self):
        e1 = np.eye(3)[:, :1]
        assert subspace_distance(e1, e1) == 0.0

    def test_orthogonal_subspaces(self):
        e = np.eye(3)
        assert abs(subspace_distance(e[:, :1], e[:, 1:2]) - 1.0) < 1e-12

    def test_45_degrees(self):
        e1 = np.eye(2)[:, :1]
        mid = np.array([[1.0], [1.0]]) / np.sqrt(2.0)
        assert abs(subspace_distance(e1, mid) - np.sqrt(2.0) / 2.0) < 1e-10

    def test_symmetry_and_triangle(self, rng):
        def random_basis():
            q, _ = np.linalg.qr(rng.normal(size=(8, 3)))
            return q

        for _ in range(10):
            u, v, w = random_basis(), random_basis(), random_basis()
            duv = subspace_distance(u, v)
            assert abs(duv - subspace_distance(v, u)) < 1e-10
            assert duv <= subspace_distance(u, w) + subspace_distance(w, v) + 1e-9
            assert subspace_distance(u, u) < 1e-12

    def test_rejects_nonorthonormal(self, rng):
        with pytest.raises(ContractError):
            subspace_distance(rng.normal(size=(5, 2)), np.eye(5)[:, :2])

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ShapeError):
            subspace_distance(np.eye(4)[:, :2], np.eye(4)[:, :3])


class TestVerifyStability:
    def test_noiseless_exact_invariance(self):
        spec = SyntheticLowRank.generate(40, 28, 3, delta_scale=0.0,
                                         noise_scale=0.0, seed=0)
        report = verify_stability(spec)
        assert report.d_phase <= 1e-8
        assert report.d0 > 0.1
        assert abs(report.d_patch - report.d0) < 1e-6

    def test_transform_fixing_signal_space_gives_zero_d0(self, rng):
        g = rng.standard_normal((12, 2))
        q, _ = np.linalg.qr(g)
        # identity on the signal's column space, random rotation elsewhere
        w, _ = np.linalg.qr(rng.standard_normal((12, 12)))
        proj = q @ q.T
        s = proj + (np.eye(12) - proj) @ w @ (np.eye(12) - proj)
        spec = SyntheticLowRank(a=rng.standard_normal((16, 2)), g=g, s=s,
                                delta_scale=0.0, noise_scale=0.0, r=2, seed=0)
        report = verify_stability(spec)
        assert report.d0 < 1e-8
        assert report.d_patch < 1e-8

    def test_monte_carlo_bounds(self):
        for seed in range(10):
            spec = SyntheticLowRank.generate(40, 28, 3, delta_scale=1e-3,
                                             noise_scale=1e-3, seed=seed)
            report = verify_stability(spec)
            assert report.phase_within_bound
            assert report.patch_above_bound
            assert 0.0 <= report.d_phase <= 1.0
            assert 0.0 <= report.d_patch <= 1.0

    def test_ill_posed_separation_rejected(self, rng):
        a = rng.standard_normal((20, 3))
        a[:, 2] = 1e-13 * a[:, 2]
        g = rng.standard_normal((15, 3))
        with pytest.raises(SpecError):
            spec = SyntheticLowRank(a=a, g=g, s=np.eye(15), delta_scale=0.0,
                                    noise_scale=0.0, r=3, seed=0)
            verify_stability(spec)

    def test_report_serializes(self):
        spec = SyntheticLowRank.generate(20, 14, 2, 1e-3, 1e-3, seed=1)
        payload = verify_stability(spec).to_json_dict()
        assert payload["phase_within_bound"] is True
        assert {"d_phase", "d_patch", "d0", "delta_min", "phase_bound",
                "patch_lower_bound"} <= set(payload)
