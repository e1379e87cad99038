import numpy as np
import pytest

from phaseformer.data import (RawDataset, SplitSpec, SyntheticLowRank,
                              gen_drifting_cycles, gen_low_rank, load_csv,
                              standardize, windows)
from phaseformer.errors import ContractError, DataError, SpecError


class TestLoadCsv:
    def test_small_fixture(self, tmp_path, csv_writer):
        path = csv_writer(tmp_path / "f.csv", [[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
        ds = load_csv(path)
        assert ds.values.shape == (3, 2)
        assert np.array_equal(ds.values, [[1, 2], [3, 4], [5, 6]])
        assert len(ds.timestamps) == 3
        assert ds.name == "f"

    def test_header_only(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("date,a,b\n")
        with pytest.raises(DataError):
            load_csv(path)

    def test_seven_channels(self, tmp_path, csv_writer, rng):
        path = csv_writer(tmp_path / "ETTh1.csv", rng.normal(size=(20, 7)))
        ds = load_csv(path)
        assert ds.values.shape[1] == 7
        assert len(ds.channels) == 7

    def test_bad_cell_location(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("date,a,b\nt0,1.0,2.0\nt1,oops,4.0\n")
        with pytest.raises(DataError, match="row 3.*'a'"):
            load_csv(path)

    def test_missing_date_header(self, tmp_path):
        path = tmp_path / "nodate.csv"
        path.write_text("time,a\nt0,1.0\n")
        with pytest.raises(DataError, match="date"):
            load_csv(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_csv(tmp_path / "absent.csv")


class TestSplits:
    def test_ett_ratio(self):
        s = SplitSpec.for_dataset("ETTh1", 1000)
        assert s.train == (0, 600)
        assert s.val == (600, 800)
        assert s.test == (800, 1000)

    def test_default_ratio(self):
        s = SplitSpec.for_dataset("traffic", 1000)
        assert s.train == (0, 700)
        assert s.val == (700, 800)
        assert s.test == (800, 1000)

    def test_remainder_goes_to_test(self):
        s = SplitSpec.for_dataset("other", 1003)
        assert s.train == (0, 702)
        assert s.val == (702, 802)
        assert s.test == (802, 1003)

    def test_disjoint_ordered_cover(self):
        for n in (999, 1000, 1001, 14400):
            s = SplitSpec.for_dataset("ETTm1", n)
            assert s.train[0] == 0
            assert s.train[1] == s.val[0]
            assert s.val[1] == s.test[0]
            assert s.test[1] == n


class TestStandardize:
    def test_train_stats_become_standard(self, rng):
        values = rng.normal(loc=5.0, scale=3.0, size=(500, 3))
        ds = RawDataset("x", [], values)
        splits = SplitSpec.from_ratios(500, (0.7, 0.1, 0.2))
        out = standardize(ds, splits)
        lo, hi = splits.train
        assert np.abs(out.values[lo:hi].mean(axis=0)).max() < 1e-9
        assert np.abs(out.values[lo:hi].std(axis=0) - 1.0).max() < 1e-9

    def test_near_identity_when_already_standard(self, rng):
        values = rng.standard_normal((2000, 1))
        ds = RawDataset("x", [], values)
        splits = SplitSpec.from_ratios(2000, (0.7, 0.1, 0.2))
        out = standardize(ds, splits)
        assert np.abs(out.values - values).max() < 0.2

    def test_constant_channel_warns(self):
        values = np.ones((100, 2))
        values[:, 1] = np.arange(100.0)
        ds = RawDataset("x", [], values)
        splits = SplitSpec.from_ratios(100, (0.7, 0.1, 0.2))
        with pytest.warns(UserWarning, match="constant"):
            out = standardize(ds, splits)
        assert np.abs(out.values[:, 0]).max() < 1e-6

    def test_does_not_mutate_input(self, rng):
        values = rng.normal(size=(100, 1))
        before = values.copy()
        ds = RawDataset("x", [], values)
        standardize(ds, SplitSpec.from_ratios(100, (0.7, 0.1, 0.2)))
        assert np.array_equal(ds.values, before)


class TestWindows:
    def _dataset(self, n, channels=2):
        vals = np.arange(n * channels, dtype=float).reshape(n, channels)
        return RawDataset("x", [], vals)

    def test_exactly_one_window(self):
        ds = self._dataset(30)
        out = windows(ds, (0, 30), 20, 10)
        assert len(out) == 2  # one per channel
        x, y, ch = out[0]
        assert x.size == 20 and y.size == 10 and ch == 0

    def test_k_plus_one_windows(self):
        ds = self._dataset(35)
        out = windows(ds, (0, 35), 20, 10)
        assert len(out) == 2 * 6

    def test_counting_oracle(self, rng):
        ds = RawDataset("x", [], rng.normal(size=(200, 7)))
        out = windows(ds, (40, 170), 48, 24)
        count = 0
        for _ch in range(7):
            for start in range(130 - 48 - 24 + 1):
                count += 1
        assert len(out) == count

    def test_windows_stay_inside_split(self):
        ds = self._dataset(50, channels=1)
        out = windows(ds, (10, 40), 15, 5)
        firsts = [x[0] for x, _, _ in out]
        lasts = [y[-1] for _, y, _ in out]
        assert min(firsts) == ds.values[10, 0]
        assert max(lasts) == ds.values[39, 0]

    def test_too_short(self):
        ds = self._dataset(25)
        with pytest.raises(DataError):
            windows(ds, (0, 25), 20, 10)

    def test_x_y_contiguous(self):
        ds = self._dataset(40, channels=1)
        for x, y, _ in windows(ds, (0, 40), 25, 10):
            assert y[0] == x[-1] + 1  # values are arange, so adjacency shows


class TestGenLowRank:
    def test_noiseless_no_drift_is_exact_transform(self):
        spec = SyntheticLowRank.generate(12, 9, 2, delta_scale=0.0,
                                         noise_scale=0.0, seed=1)
        x, x_t, residual = gen_low_rank(spec)
        assert np.array_equal(residual, np.zeros_like(x))
        assert np.abs(x_t - x @ spec.s.T).max() < 1e-14
        assert np.abs(x - spec.a @ spec.g.T).max() < 1e-14

    def test_zero_eps_zero_residual(self):
        spec = SyntheticLowRank.generate(10, 8, 2, delta_scale=0.0,
                                         noise_scale=0.5, seed=2)
        _, _, residual = gen_low_rank(spec)
        assert np.all(residual == 0.0)

    def test_residual_frobenius_bound(self):
        for seed in range(5):
            spec = SyntheticLowRank.generate(20, 15, 3, delta_scale=0.05,
                                             noise_scale=0.1, seed=seed)
            x, _, residual = gen_low_rank(spec)
            signal = spec.a @ spec.g.T
            noise = x - signal
            bound = spec.delta_scale * (np.linalg.norm(signal)
                                        + np.linalg.norm(noise))
            assert np.linalg.norm(residual) <= bound + 1e-12

    def test_bit_reproducible(self):
        spec = SyntheticLowRank.generate(10, 8, 2, 1e-2, 1e-2, seed=3)
        a = gen_low_rank(spec)
        b = gen_low_rank(spec)
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    def test_rank_deficient_transform_rejected(self, rng):
        g = rng.standard_normal((8, 2))
        q, _ = np.linalg.qr(g)
        # transform that annihilates the column space of g
        s = np.eye(8) - q @ q.T
        with pytest.raises(SpecError):
            SyntheticLowRank(a=rng.standard_normal((10, 2)), g=g, s=s,
                             delta_scale=0.0, noise_scale=0.0, r=2, seed=0)


class TestGenDriftingCycles:
    def test_zero_drift_exactly_periodic(self):
        series = gen_drifting_cycles(4, 24, 0.0, seed=7)
        assert series.size == 4 * 7 * 24
        period = series[:24]
        assert np.array_equal(series, np.tile(period, 4 * 7))

    def test_reproducible(self):
        a = gen_drifting_cycles(5, 12, 0.2, seed=1)
        b = gen_drifting_cycles(5, 12, 0.2, seed=1)
        assert np.array_equal(a, b)

    def test_weeks_validation(self):
        with pytest.raises(ContractError):
            gen_drifting_cycles(1, 24, 0.1, seed=0)

    def test_shapes_change_smoothly(self):
        series = gen_drifting_cycles(10, 24, 0.1, seed=0)
        weeks = series.reshape(10, 7 * 24)
        # per-phase trajectory across weeks moves in small steps
        step = np.abs(np.diff(weeks[:, :24], axis=0)).max()
        total = np.abs(weeks[-1, :24] - weeks[0, :24]).max()
        assert step < 0.25 * total + 1e-9
