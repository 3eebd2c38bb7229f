import itertools

import numpy as np
import pytest

from sdmlab.analog import (
    ClockConfigError,
    JitterSpec,
    analog_mux,
    comb_filter,
    dt_model_check,
    make_clock,
    mux_clocks,
    read_waveform,
    render_nrz,
    write_waveform,
)
from sdmlab.polyphase import LowRateBank, ti_multiplex_digital


def random_bank(rng, M, Q=64):
    return LowRateBank(rng.choice([-1.0, 1.0], size=(M, Q)))


def test_ideal_clock_edges():
    c = make_clock(1.0, 0.0, None, 4)
    assert c.edge_times.tolist() == [0.0, 1.0, 2.0, 3.0]


def test_phase_shifted_clocks_interleave():
    clocks = mux_clocks(4, 5)
    edges = np.sort(np.concatenate([c.edge_times for c in clocks]))
    np.testing.assert_array_equal(np.diff(edges), np.ones(len(edges) - 1))
    assert [c.phase_offset for c in clocks] == [0.0, 1.0, 2.0, 3.0]


def test_jitter_std_matches_request():
    c = make_clock(1.0, 0.0, JitterSpec(0.015, seed=3), 10**5)
    dev = c.edge_times - np.arange(10**5)
    assert abs(np.std(dev) / 0.015 - 1) <= 0.02


def test_large_jitter_is_rejected():
    with pytest.raises(ClockConfigError):
        make_clock(1.0, 0.0, JitterSpec(0.3), 10)
    with pytest.raises(ClockConfigError):
        JitterSpec(-0.1)


def test_paths_draw_independent_jitter_unless_correlated():
    ind = mux_clocks(4, 100, JitterSpec(0.01, seed=1))
    cor = mux_clocks(4, 100, JitterSpec(0.01, seed=1, correlated=True))
    assert not np.array_equal(ind[0].deviations, ind[1].deviations)
    assert np.array_equal(cor[0].deviations, cor[3].deviations)


def test_render_two_symbols():
    w = render_nrz([1, -1], make_clock(1.0, 0.0, None, 3), K=4)
    assert w.samples.tolist() == [1, 1, 1, 1, -1, -1, -1, -1]


def test_render_splits_area_in_edge_cell():
    K = 8
    c = make_clock(1.0, 0.0, None, 2)
    c.deviations[1] = 0.5 / K
    w = render_nrz([1.0], c, K=K, periods=2)
    assert w.samples[:K].tolist() == [1.0] * K
    assert w.samples[K] == pytest.approx(0.5, abs=1e-15)
    assert np.all(w.samples[K + 1 :] == 0)


def test_late_edge_widens_pulse_area():
    c = make_clock(1.0, 0.0, None, 2)
    c.deviations[1] = 0.1
    w = render_nrz([1.0], c, K=32, periods=3)
    assert abs(w.integral() - 1.1) <= 1e-12


@pytest.mark.parametrize("sigma", [0.0, 0.02])
def test_area_conservation(rng, sigma):
    y = rng.choice([-1.0, 1.0], 5000)
    # start one period in so no pulse crosses the window edges
    c = make_clock(1.0, 1.0, JitterSpec(sigma, seed=9), len(y) + 1)
    w = render_nrz(y, c, K=16, periods=len(y) + 2)
    widths = np.diff(c.edge_times)
    assert abs(w.integral() - np.sum(y * widths)) <= 1e-12 * len(y)
    assert abs(w.integral() - w.exact_integral()) <= 1e-9


@pytest.mark.parametrize("sigma", [0.0, 0.02])
def test_mux_area_conservation(rng, sigma):
    M, Q = 4, 300
    bank = random_bank(rng, M, Q)
    clocks = mux_clocks(M, Q, JitterSpec(sigma, seed=2))
    for c in clocks:
        c.ideal_times += 1.0
    g = analog_mux(bank, clocks, K=8)
    ref = sum(np.sum(bank.streams[p] * np.diff(clocks[p].edge_times)) for p in range(M)) / M
    assert abs(g.exact_integral() - g.integral()) <= 1e-9
    # a wider window keeps the tails of the late phases
    full = sum(
        render_nrz(bank.streams[p], clocks[p], K=8, periods=M * Q + M).integral() for p in range(M)
    ) / M
    assert abs(full - ref) <= 1e-12 * M * Q


def test_determinism(rng):
    y = rng.choice([-1.0, 1.0], 2000)
    a = render_nrz(y, make_clock(1.0, 0.0, None, 2001), K=8).samples
    b = render_nrz(y, make_clock(1.0, 0.0, None, 2001), K=8).samples
    assert np.array_equal(a, b)
    j = JitterSpec(0.01, seed=42)
    a = render_nrz(y, make_clock(1.0, 0.0, j, 2001), K=8).samples
    b = render_nrz(y, make_clock(1.0, 0.0, j, 2001), K=8).samples
    assert np.array_equal(a, b)


def test_single_path_mux_equals_nrz(rng):
    bank = random_bank(rng, 1, 200)
    j = JitterSpec(0.01, seed=5)
    g = analog_mux(bank, mux_clocks(1, 200, j), K=8)
    v = render_nrz(bank.streams[0], make_clock(1.0, 0.0, j, 201), K=8)
    assert np.array_equal(g.samples, v.samples)


def test_all_high_paths_give_unity():
    g = analog_mux(LowRateBank(np.ones((4, 20))), mux_clocks(4, 20), K=8)
    np.testing.assert_array_equal(g.samples[4 * 8 :], 1.0)


def test_mux_matches_comb_at_cell_centres(rng):
    bank = random_bank(rng, 4, 100)
    g = analog_mux(bank, mux_clocks(4, 100), K=16).period_samples()
    y = ti_multiplex_digital(bank)
    ref = np.array([np.mean(y[max(0, n - 3) : n + 1]) * min(4, n + 1) / 4 for n in range(len(y))])
    np.testing.assert_array_equal(g[4:], ref[4:])


def test_path_waveforms_are_shifted_copies(rng):
    M, Q, K = 4, 50, 8
    bank = random_bank(rng, M, Q)
    clocks = mux_clocks(M, Q)
    for p in range(M):
        shifted = render_nrz(bank.streams[p], clocks[p], K=K, periods=M * Q + M).samples[p * K :]
        base = render_nrz(bank.streams[p], make_clock(M, 0.0, None, Q + 1), K=K, periods=M * Q).samples
        np.testing.assert_array_equal(shifted[: len(base)], base)
        # pulses last M periods
        assert np.all(base.reshape(Q, M * K) == bank.streams[p][:, None])


def test_comb_identity_for_one_path(rng):
    y = rng.choice([-1.0, 1.0], 100)
    np.testing.assert_array_equal(comb_filter(y, 1), y)


def test_comb_nulls_half_rate():
    y = np.tile([1.0, -1.0], 100)
    np.testing.assert_array_equal(comb_filter(y, 4)[4:], 0.0)
    np.testing.assert_array_equal(comb_filter(np.tile([1.0, 1.0, -1.0, -1.0], 50), 4)[4:], 0.0)


def test_comb_levels_exhaustive():
    levels = {float(np.mean(w)) for w in itertools.product([-1.0, 1.0], repeat=4)}
    assert levels == {-1.0, -0.5, 0.0, 0.5, 1.0}


@pytest.mark.parametrize("M", [1, 2, 4, 8])
def test_comb_level_count(rng, M):
    out = comb_filter(rng.choice([-1.0, 1.0], 20000), M)[M:]
    assert len(np.unique(out)) == M + 1


@pytest.mark.parametrize("M", [1, 2, 4, 8])
def test_dt_model_matches_for_many_banks(rng, M):
    for _ in range(50):
        rep = dt_model_check(random_bank(rng, M, 40))
        assert rep.max_abs_diff == 0.0 and rep.passed


def test_dt_model_two_paths_coarse_grid(rng):
    assert dt_model_check(random_bank(rng, 2, 200), K=8).max_abs_diff == 0.0


def test_dt_model_rejects_mismatched_M(rng):
    with pytest.raises(ValueError):
        dt_model_check(random_bank(rng, 4), M=2)


@pytest.mark.parametrize("suffix", [".csv", ".npz"])
def test_waveform_dump_round_trip(tmp_path, rng, suffix):
    w = render_nrz(rng.choice([-1.0, 1.0], 30), make_clock(1.0, 0.0, JitterSpec(0.01, 1), 31), K=8)
    path = write_waveform(tmp_path / f"w{suffix}", w, {"sigma_tau": 0.01, "seed": 1})
    values, header = read_waveform(path)
    np.testing.assert_allclose(values, w.samples, rtol=1e-8, atol=1e-12)
    assert header["K"] == "8" and header["seed"] == "1"
