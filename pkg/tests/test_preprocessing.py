import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phaseformer.errors import ContractError, ShapeError
from phaseformer.preprocessing import (InstanceStats, estimate_period,
                                       phase_detokenize, phase_tokenize,
                                       revin_denormalize, revin_normalize)


class TestRevin:
    def test_constant_series(self):
        out, stats = revin_normalize([5.0, 5.0, 5.0, 5.0])
        assert np.array_equal(out, np.zeros(4))
        assert stats.mean == 5.0
        assert stats.std == 1e-8

    def test_already_standard(self):
        out, stats = revin_normalize([-1.0, 1.0])
        assert np.allclose(out, [-1.0, 1.0])
        assert stats == InstanceStats(0.0, 1.0)

    def test_round_trip(self, rng):
        x = rng.normal(loc=3.0, scale=2.5, size=100)
        normalized, stats = revin_normalize(x)
        assert abs(normalized.mean()) < 1e-12
        assert abs(normalized.std() - 1.0) < 1e-12
        assert np.abs(revin_denormalize(normalized, stats) - x).max() < 1e-10

    def test_too_short(self):
        with pytest.raises(ContractError):
            revin_normalize([1.0])

    def test_denormalize_closed_form(self):
        assert np.array_equal(
            revin_denormalize(np.zeros(3), InstanceStats(5.0, 2.0)),
            np.full(3, 5.0))
        x = np.arange(4.0)
        assert np.array_equal(revin_denormalize(x, InstanceStats(0.0, 1.0)), x)


class TestEstimatePeriod:
    @staticmethod
    def _acf_oracle(x, max_lag):
        xc = x - x.mean()
        denom = xc @ xc
        best, best_val = None, -np.inf
        for lag in range(2, max_lag + 1):
            val = (xc[:-lag] @ xc[lag:]) / denom
            if val > best_val:
                best, best_val = lag, val
        return best

    def test_sine_24(self):
        x = np.sin(2 * np.pi * np.arange(720) / 24)
        assert estimate_period(x, 100) == 24
        assert estimate_period(x, 100, method="acf") == 24
        assert self._acf_oracle(x, 100) == 24

    def test_sine_7(self):
        x = np.sin(2 * np.pi * np.arange(700) / 7)
        assert estimate_period(x, 50) == 7
        assert estimate_period(x, 50, method="acf") == self._acf_oracle(x, 50) == 7

    def test_constant_errors(self):
        with pytest.raises(ContractError):
            estimate_period(np.ones(200), 20)

    @pytest.mark.parametrize("period", [7, 12, 24, 96])
    def test_noisy_periods(self, period):
        r = np.random.default_rng(period)
        t = np.arange(30 * period)
        x = np.sin(2 * np.pi * t / period) + 0.05 * r.standard_normal(t.size)
        max_lag = 2 * period
        assert estimate_period(x, max_lag) == period
        if period <= 24:
            # the plain max-autocorrelation rule only resolves periods whose
            # small-lag autocorrelation does not dominate the peak
            assert estimate_period(x, max_lag, method="acf") == period

    def test_too_short_for_lag(self):
        with pytest.raises(ContractError):
            estimate_period(np.sin(np.arange(30.0)), 20)


class TestPhaseTokenize:
    def test_exact_multiple(self):
        out = phase_tokenize([1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 3)
        assert np.array_equal(out, [[1.0, 4.0], [2.0, 5.0], [3.0, 6.0]])

    def test_lookback_720(self):
        x = np.arange(720.0)
        out = phase_tokenize(x, 24)
        assert out.shape == (24, 30)
        # no padding: cell (l, p) is exactly observation p*24+l
        assert np.array_equal(out, x.reshape(30, 24).T)

    def test_padded_round_trip(self):
        x = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
        tok = phase_tokenize(x, 3)
        assert tok.shape == (3, 2)
        back = phase_detokenize(tok, 5)
        assert np.array_equal(back, x)

    def test_padding_is_phase_consistent(self):
        # an exactly periodic window stays exactly periodic after padding
        x = np.tile(np.array([10.0, 20.0, 30.0]), 4)[:10]  # length 10, period 3
        tok = phase_tokenize(x, 3)
        for row in tok:
            assert np.all(row == row[0])


class TestPhaseDetokenize:
    def test_exact_inverse(self):
        out = phase_detokenize(np.array([[1.0, 4.0], [2.0, 5.0], [3.0, 6.0]]), 6)
        assert np.array_equal(out, [1.0, 2.0, 3.0, 4.0, 5.0, 6.0])

    def test_full_size_bijection(self, rng):
        x = rng.normal(size=48)
        assert np.array_equal(phase_detokenize(phase_tokenize(x, 12), 48), x)

    def test_suffix_preserved(self, rng):
        x = rng.normal(size=100)
        tok = phase_tokenize(x, 24)
        back = phase_detokenize(tok, 96)
        assert np.array_equal(back, x[-96:])

    def test_out_len_too_large(self):
        with pytest.raises(ShapeError):
            phase_detokenize(np.zeros((3, 2)), 7)


@given(length=st.integers(2, 400), l_phase=st.integers(1, 60),
       seed=st.integers(0, 2**32 - 1))
@settings(max_examples=200, deadline=None)
def test_round_trip_property(length, l_phase, seed):
    x = np.random.default_rng(seed).normal(size=length)
    tok = phase_tokenize(x, l_phase)
    periods = -(-length // l_phase)
    assert tok.shape == (l_phase, periods)
    assert tok[-1, -1] == x[-1]
    # the trailing `length` values always survive the round trip exactly
    assert np.array_equal(phase_detokenize(tok, length), x)
    if length % l_phase == 0:
        assert np.array_equal(phase_detokenize(tok, length), x)
