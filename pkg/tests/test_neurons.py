"""Single-step neuron dynamics: exact values and structural properties."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spikelocal.errors import ConfigError
from spikelocal.neurons import (
    LayerState,
    NeuronParams,
    PsiKind,
    leaky_readout_step,
    lif_step,
    psi_eval,
    rlif_step,
    surrogate_deriv,
)


class TestLifStep:
    def test_charge_and_fire(self):
        """gamma=0.5, v_th=0.8, zero state, input 1.0 -> u'=1.0, spike."""
        params = NeuronParams(gamma=0.5, v_th=0.8)
        state = LayerState.zeros(1, 1)
        state, spikes = lif_step(state, np.array([1.0]), params)
        assert state.u[0, 0] == 1.0
        assert spikes[0, 0] == 1.0

    def test_soft_reset_next_step(self):
        """After a spike at u=1.0, zero input gives 0.5*(1.0-0.8)=0.1."""
        params = NeuronParams(gamma=0.5, v_th=0.8)
        state = LayerState.zeros(1, 1)
        state, _ = lif_step(state, np.array([1.0]), params)
        state, spikes = lif_step(state, np.array([0.0]), params)
        assert state.u[0, 0] == pytest.approx(0.1)
        assert spikes[0, 0] == 0.0

    def test_zero_case(self):
        params = NeuronParams(gamma=0.5, v_th=0.8)
        state = LayerState.zeros(1, 3)
        state, spikes = lif_step(state, np.zeros(3), params)
        assert np.all(state.u == 0.0)
        assert np.all(spikes == 0.0)

    def test_threshold_tie_spikes(self):
        """u' exactly at v_th produces a spike."""
        params = NeuronParams(gamma=0.5, v_th=0.8)
        state = LayerState.zeros(1, 1)
        _, spikes = lif_step(state, np.array([0.8]), params)
        assert spikes[0, 0] == 1.0

    def test_dimension_mismatch(self):
        params = NeuronParams(gamma=0.5, v_th=0.8)
        state = LayerState.zeros(1, 3)
        with pytest.raises(ConfigError):
            lif_step(state, np.zeros(4), params)

    def test_param_validation(self):
        with pytest.raises(ConfigError):
            NeuronParams(gamma=1.2, v_th=0.8)
        with pytest.raises(ConfigError):
            NeuronParams(gamma=0.5, v_th=0.0)

    @given(
        gamma=st.floats(0.0, 1.0),
        v_th=st.floats(0.1, 2.0),
        steps=st.integers(1, 10),
        seed=st.integers(0, 10_000),
    )
    @settings(max_examples=60, deadline=None)
    def test_spikes_always_binary_and_u_finite(self, gamma, v_th, steps, seed):
        rng = np.random.default_rng(seed)
        params = NeuronParams(gamma=gamma, v_th=v_th)
        state = LayerState.zeros(2, 5)
        for _ in range(steps):
            state, spikes = lif_step(state, rng.normal(0, 2, (2, 5)), params)
            assert set(np.unique(spikes)) <= {0.0, 1.0}
            assert np.all(np.isfinite(state.u))

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_soft_reset_identity(self, seed):
        """If neuron i spiked at t and gets zero input, u[t+1] = g*(u[t]-v_th)."""
        rng = np.random.default_rng(seed)
        params = NeuronParams(gamma=0.7, v_th=0.8)
        state = LayerState.zeros(1, 8)
        state, spikes = lif_step(state, rng.normal(0.8, 0.5, (1, 8)), params)
        u_before = state.u.copy()
        state, _ = lif_step(state, np.zeros((1, 8)), params)
        fired = spikes[0] == 1.0
        np.testing.assert_allclose(
            state.u[0, fired], 0.7 * (u_before[0, fired] - 0.8), atol=1e-12
        )


class TestRlifStep:
    def test_zero_recurrence_matches_lif(self):
        rng = np.random.default_rng(3)
        params = NeuronParams(gamma=0.9, v_th=0.8)
        s1 = LayerState.zeros(1, 6)
        s2 = LayerState.zeros(1, 6)
        for _ in range(5):
            drive = rng.normal(0, 1, (1, 6))
            s1, y1 = lif_step(s1, drive, params)
            s2, y2 = rlif_step(s2, drive, np.zeros((6, 6)), params)
        np.testing.assert_array_equal(s1.u, s2.u)
        np.testing.assert_array_equal(y1, y2)

    def test_single_path_propagation(self):
        """One previous spike drives every neuron on its outgoing column."""
        params = NeuronParams(gamma=0.99, v_th=0.8)
        width, k = 4, 2
        state = LayerState.zeros(1, width)
        state.y_prev[0, k] = 1.0
        rec = np.zeros((width, width))
        rec[:, k] = 0.9
        state, spikes = rlif_step(state, np.zeros(width), rec, params)
        np.testing.assert_allclose(state.u[0], 0.9)
        assert np.all(spikes == 1.0)

    def test_all_zero(self):
        params = NeuronParams(gamma=0.99, v_th=0.8)
        state = LayerState.zeros(1, 4)
        state, spikes = rlif_step(state, np.zeros(4), np.zeros((4, 4)), params)
        assert np.all(state.u == 0.0) and np.all(spikes == 0.0)

    def test_nonsquare_rejected(self):
        params = NeuronParams(gamma=0.99, v_th=0.8)
        state = LayerState.zeros(1, 4)
        with pytest.raises(ConfigError):
            rlif_step(state, np.zeros(4), np.zeros((4, 3)), params)


class TestLeakyReadout:
    def test_geometric_accumulation(self):
        u = np.zeros(1)
        for expected in (1.0, 1.99, 2.9701):
            u = leaky_readout_step(u, np.ones(1), 0.99)[0]
            assert u[0] == pytest.approx(expected)

    def test_memoryless_at_gamma_zero(self):
        u = leaky_readout_step(np.array([5.0]), np.array([1.25]), 0.0)
        assert u[0, 0] == 1.25

    def test_pure_decay(self):
        u = np.array([2.0])
        for step in range(1, 4):
            u = leaky_readout_step(u, np.zeros(1), 0.5)[0]
            assert u[0] == pytest.approx(2.0 * 0.5**step)

    def test_linear_in_input(self):
        rng = np.random.default_rng(0)
        u = rng.normal(size=4)
        a, b = rng.normal(size=4), rng.normal(size=4)
        lhs = leaky_readout_step(u, 2.0 * a + 3.0 * b, 0.9)
        rhs = (
            2.0 * leaky_readout_step(u, a, 0.9)
            + 3.0 * leaky_readout_step(u, b, 0.9)
            - 4.0 * leaky_readout_step(u, np.zeros(4), 0.9)
        )
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ConfigError):
            leaky_readout_step(np.zeros(3), np.zeros(2), 0.9)


class TestPsi:
    def test_peak_values(self):
        v_th = 0.8
        at_peak = np.array([v_th])
        assert psi_eval(PsiKind.INVERSE_SQUARE, at_peak, v_th)[0] == 1.0
        assert psi_eval(PsiKind.TRIANGULAR, at_peak, v_th)[0] == pytest.approx(0.3)
        assert psi_eval(PsiKind.SIGMOID_BELL, at_peak, v_th)[0] == pytest.approx(1.0)
        assert psi_eval(PsiKind.RATIONAL_BELL, np.array([v_th + 0.1]), v_th)[
            0
        ] == pytest.approx(0.5)

    def test_triangular_clamps_to_zero(self):
        v_th = 0.8
        vals = psi_eval(PsiKind.TRIANGULAR, np.array([v_th + 1.0, v_th - 1.5]), v_th)
        np.testing.assert_array_equal(vals, 0.0)

    @given(
        kind=st.sampled_from(list(PsiKind)),
        v_th=st.floats(0.1, 2.0),
        seed=st.integers(0, 10_000),
    )
    @settings(max_examples=80, deadline=None)
    def test_nonnegative_and_peaked_at_threshold(self, kind, v_th, seed):
        rng = np.random.default_rng(seed)
        u = rng.normal(v_th, 2.0, 64)
        vals = psi_eval(kind, u, v_th)
        assert np.all(vals >= 0.0)
        peak = psi_eval(kind, np.array([v_th]), v_th)[0]
        assert np.all(vals <= peak + 1e-12)

    def test_surrogate_shares_formulas(self):
        rng = np.random.default_rng(1)
        u = rng.normal(0.8, 1.0, 32)
        for kind in PsiKind:
            np.testing.assert_array_equal(
                surrogate_deriv(kind, u, 0.8), psi_eval(kind, u, 0.8)
            )

    def test_parse_accepts_underscores(self):
        assert PsiKind.parse("sigmoid_bell") is PsiKind.SIGMOID_BELL
        assert PsiKind.parse("inverse-square") is PsiKind.INVERSE_SQUARE
