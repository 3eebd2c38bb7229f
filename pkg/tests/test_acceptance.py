"""Acceptance criteria, each at its stated tolerance and time budget.

Every criterion prints one ``PASS``/``FAIL`` line. Run standalone with
``python3 tests/test_acceptance.py`` for just the summary.
"""
import math
import time

import numpy as np
import pytest

from sdmlab.analog import (
    JitterSpec,
    analog_mux,
    comb_filter,
    dt_model_check,
    make_clock,
    mux_clocks,
    render_nrz,
)
from sdmlab.chains import ChainSpec, dbfs_to_amplitude, derive_seed, run_chain
from sdmlab.polyphase import (
    LowRateBank,
    build_block_filter,
    equivalence_check,
    polyphase_decompose,
    ti_modulate,
)
from sdmlab.sdm_core import FirFilter, make_loop_filter
from sdmlab.spectral import (
    MetricConfig,
    comb_cutoff,
    comb_response,
    compute_sndr,
    estimate_psd,
    measure_sigma_dy,
    min_osr_for_distortion,
    predict_snr_jtt1,
    snr_improvement,
)

CFG = MetricConfig(osr=64, fx_fraction=0.2)
A_OP = dbfs_to_amplitude(-3.0)
SIGMA_OP = 0.015
N = 2**18


def ti_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst, cases, bad = 0.0, 0, []
    for M in (1, 2, 4):
        for L in (1, 2):
            for _ in range(20):
                rep = equivalence_check(rng.uniform(-0.9, 0.9, 4096), M, L)
                cases += 1
                worst = max(worst, rep.max_abs_diff)
                if not rep.passed:
                    bad.append((M, L, rep.aligned_delay))
    dt = time.perf_counter() - t0
    ok = not bad and worst == 0.0 and dt < 5.0
    return ok, f"{cases} cases, max |diff| {worst:g}, delay = M in all, failures {bad}, {dt:.2f} s"


def dt_comb_model():
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    worst = 0.0
    for M in (1, 2, 4, 8):
        for _ in range(10):
            worst = max(worst, dt_model_check(LowRateBank(rng.choice([-1.0, 1.0], (M, 256))), K=16).max_abs_diff)
    # a real modulator bank as well
    x = 0.7 * np.sin(2 * np.pi * 0.0017 * np.arange(4096))
    bank = ti_modulate(x, 4, make_loop_filter(2)).drop_latency()
    worst = max(worst, dt_model_check(bank, K=16).max_abs_diff)
    dt = time.perf_counter() - t0
    return worst <= 1e-12 and dt < 5.0, f"max |g - comb(y)| = {worst:g} (tol 1e-12), {dt:.2f} s"


def ideal_sndr():
    out = {}
    for arch in ("fig1", "fig3a"):
        t0 = time.perf_counter()
        r = run_chain(ChainSpec(arch, order=2, M=4, n_samples=N), A_OP, CFG)
        out[arch] = (compute_sndr(r.waveform, CFG), time.perf_counter() - t0)
    ok = all(abs(s - 69.7) <= 1.0 and t < 60 for s, t in out.values())
    txt = ", ".join(f"{a} {s:.3f} dB ({t:.1f} s)" for a, (s, t) in out.items())
    return ok, f"{txt}; target 69.7 +/- 1.0 dB"


def comb_response_checks():
    t0 = time.perf_counter()
    z1 = comb_response(4, 0.25).magnitude
    z2 = comb_response(4, 0.5).magnitude
    fc = comb_cutoff(4)
    osr = min_osr_for_distortion(4, 3.0)
    dt = time.perf_counter() - t0
    ok = z1 < 1e-12 and z2 < 1e-12 and abs(fc - 0.114) <= 0.001 and abs(osr - 4.4) <= 0.1 and dt < 1.0
    return ok, f"|H|(0.25)={z1:g} |H|(0.5)={z2:g} f_c={fc:.6f} min OSR={osr:.4f}, {dt:.3f} s"


def jitter_baseline():
    t0 = time.perf_counter()
    sims, preds = [], []
    for seed in range(3):
        r = run_chain(ChainSpec("fig1", n_samples=N, sigma_tau=SIGMA_OP), A_OP, CFG, derive_seed(500, seed))
        sims.append(compute_sndr(r.waveform, CFG))
        preds.append(predict_snr_jtt1(A_OP, 1.0, SIGMA_OP, measure_sigma_dy(r.y), CFG.osr))
    dt = time.perf_counter() - t0
    sim, pred = float(np.mean(sims)), float(np.mean(preds))
    level_ok = abs(sim - 47.0) <= 2.0
    track_ok = abs(pred - sim) <= 1.5
    ok = level_ok and track_ok and dt < 120
    return ok, (
        f"simulated {sim:.2f} dB (47 +/- 2: {'ok' if level_ok else 'no'}); "
        f"formula {pred:.2f} dB, diff {pred - sim:+.2f} (<= 1.5: {'ok' if track_ok else 'no'}); {dt:.1f} s"
    )


def jitter_improvement():
    t0 = time.perf_counter()
    res = {}
    for M in (4, 2):
        gaps = []
        for seed in range(3):
            s = derive_seed(600, M, seed)
            v = run_chain(ChainSpec("fig1", M=M, n_samples=N, sigma_tau=SIGMA_OP), A_OP, CFG, s)
            g = run_chain(ChainSpec("fig3a", M=M, n_samples=N, sigma_tau=SIGMA_OP), A_OP, CFG, s)
            gaps.append(compute_sndr(g.waveform, CFG) - compute_sndr(v.waveform, CFG))
        res[M] = float(np.mean(gaps))
    dt = time.perf_counter() - t0
    ok = all(abs(res[M] - snr_improvement(M)) <= 2.0 for M in res) and dt < 240
    txt = ", ".join(f"M={M} gap {g:.2f} dB (target {snr_improvement(M):.2f})" for M, g in res.items())
    return ok, f"{txt}; {dt:.1f} s"


def property_suites():
    t0 = time.perf_counter()
    rng = np.random.default_rng(707)
    fails = []

    # Parseval
    y = rng.choice([-1.0, 1.0], 2**16)
    w = render_nrz(y, make_clock(1.0, 0.0, JitterSpec(0.02, 3), len(y) + 1), K=8)
    est = estimate_psd(w, MetricConfig(psd_segment=1024))
    if abs(est.total_power() / np.mean(w.samples**2) - 1) > 1e-3:
        fails.append("parseval")

    # recomposition and pseudo-circulance
    for _ in range(200):
        h = FirFilter(tuple(rng.integers(-9, 10, rng.integers(1, 17)).astype(float)))
        for M in (1, 2, 3, 4, 8):
            if polyphase_decompose(h, M).recompose().coeffs != h.canonical().coeffs:
                fails.append("recomposition")
    for M in (1, 2, 3, 4, 8):
        b = build_block_filter(make_loop_filter(2), M)
        for i in range(M):
            for j in range(M):
                cur, nxt = b.entry(i, j).coeffs, b.entry((i + 1) % M, (j + 1) % M)
                if i + 1 == M and j + 1 < M:
                    nxt = nxt.delayed(1)
                elif j + 1 == M and i + 1 < M:
                    cur = FirFilter(cur).delayed(1).canonical().coeffs
                if nxt.canonical().coeffs != FirFilter(cur).canonical().coeffs:
                    fails.append("pseudo-circulance")

    # area conservation, single DAC and mux, with jitter
    y = rng.choice([-1.0, 1.0], 4000)
    c = make_clock(1.0, 1.0, JitterSpec(0.02, 4), len(y) + 1)
    w = render_nrz(y, c, K=16, periods=len(y) + 2)
    if abs(w.integral() - np.sum(y * np.diff(c.edge_times))) > 1e-12 * len(y):
        fails.append("area")
    bank = LowRateBank(rng.choice([-1.0, 1.0], (4, 500)))
    clocks = mux_clocks(4, 500, JitterSpec(0.02, 5))
    for ck in clocks:
        ck.ideal_times += 1.0  # keep every pulse inside the window
    g = sum(render_nrz(bank.streams[p], clocks[p], K=8, periods=2005).integral() for p in range(4)) / 4
    ref = sum(np.sum(bank.streams[p] * np.diff(clocks[p].edge_times)) for p in range(4)) / 4
    if abs(g - ref) > 1e-12 * 2000:
        fails.append("mux area")

    # comb level count
    for M in (2, 4, 8):
        if len(np.unique(comb_filter(rng.choice([-1.0, 1.0], 20000), M)[M:])) != M + 1:
            fails.append(f"levels M={M}")

    # seed reproducibility
    spec = ChainSpec("fig3a", n_samples=2**14, K=8, sigma_tau=0.01)
    a = run_chain(spec, A_OP, CFG, 42).waveform.samples
    b = run_chain(spec, A_OP, CFG, 42).waveform.samples
    if a.tobytes() != b.tobytes():
        fails.append("reproducibility")
    bank = ti_modulate(np.zeros(64), 4, make_loop_filter(2))
    if analog_mux(bank, mux_clocks(4, bank.length), 8).samples.tobytes() != analog_mux(bank, mux_clocks(4, bank.length), 8).samples.tobytes():
        fails.append("reproducibility")

    dt = time.perf_counter() - t0
    return not fails and dt < 60, f"failures {sorted(set(fails))}, {dt:.1f} s"


CRITERIA = [
    (1, "TI digital equivalence", ti_equivalence),
    (2, "DT comb-model equivalence", dt_comb_model),
    (3, "Ideal SNDR", ideal_sndr),
    (4, "Comb response", comb_response_checks),
    (5, "Jitter baseline", jitter_baseline),
    (6, "Jitter improvement", jitter_improvement),
    (7, "Property suites", property_suites),
]


def _line(num, name, ok, detail):
    return f"[{'PASS' if ok else 'FAIL'}] criterion {num} {name}: {detail}"


@pytest.mark.parametrize("num,name,fn", CRITERIA, ids=[f"criterion_{c[0]}" for c in CRITERIA])
def test_criterion(num, name, fn, capsys):
    ok, detail = fn()
    with capsys.disabled():
        print("\n" + _line(num, name, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    results = []
    for num, name, fn in CRITERIA:
        ok, detail = fn()
        results.append(ok)
        print(_line(num, name, ok, detail), flush=True)
    raise SystemExit(0 if all(results) else 1)
