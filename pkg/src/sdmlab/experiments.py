"""Scenario runners behind the ``sdmlab`` command.

Every runner takes a :class:`ScenarioConfig`, writes its CSVs into
``cfg.out`` and returns a :class:`RunOutcome`. ``run_scenario`` wraps a
runner with the manifest and warning capture.
"""
from __future__ import annotations

import configparser
import datetime as _dt
import math
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .analog import DEFAULT_K, LowRateBank, dt_model_check
from .chains import ChainSpec, derive_seed, dbfs_to_amplitude, run_chain
from .io import sha256, write_csv, write_metrics, write_psd
from .polyphase import build_block_filter, equivalence_check
from .sdm_core import SUPPORTED_ORDERS, FirFilter, make_loop_filter
from .spectral import (
    MetricConfig,
    compute_sndr,
    sndr_details,
    dr_sweep,
    estimate_psd,
    inband_floor_db,
    notch_depth_db,
    predict_snr_jtt1,
    snr_improvement,
)

SCENARIOS = ("fig4", "fig6", "fig7", "equivalence", "sweep")
JITTER_DEFAULTS = {"fig4": 0.0, "fig6": 0.015, "fig7": 0.015, "sweep": 0.0, "equivalence": 0.0}

EXIT_OK, EXIT_ERROR, EXIT_ASSERT = 0, 1, 2


class ConfigError(ValueError):
    pass


# INI section for each field; the CLI flag is the field name with dashes.
SECTIONS = {
    "scenario": "run",
    "seed": "run",
    "out": "run",
    "n_samples": "run",
    "order": "modulator",
    "M": "interleave",
    "osr": "input",
    "amp_dbfs": "input",
    "fx_fraction": "input",
    "sigma_tau": "jitter",
    "correlated": "jitter",
    "K": "render",
    "psd_segment": "psd",
    "psd_overlap": "psd",
    "psd_fmax": "psd",
    "guard_bins": "psd",
    "amp_start": "sweep",
    "amp_stop": "sweep",
    "amp_step": "sweep",
    "architectures": "sweep",
    "eq_seeds": "equivalence",
    "eq_length": "equivalence",
    "eq_m_values": "equivalence",
    "eq_orders": "equivalence",
    "corrupt_entry": "equivalence",
}


@dataclass
class ScenarioConfig:
    """Everything a run depends on. Defaults are the ideal-case setup:
    second-order loop, four paths, OSR 64, -3 dBFS tone at B/5."""

    scenario: str = "fig4"
    seed: int = 1
    out: str = "sdmlab_out"
    n_samples: int = 2**18
    order: int = 2
    M: int = 4
    osr: float = 64
    amp_dbfs: float = -3.0
    fx_fraction: float = 0.2
    sigma_tau: float | None = None  # units of 1/f_H; None = scenario default
    correlated: bool = False
    K: int = DEFAULT_K
    psd_segment: int = 2**14
    psd_overlap: float = 0.5
    psd_fmax: float = 0.5
    guard_bins: int = 3
    amp_start: float = -80.0
    amp_stop: float = 0.0
    amp_step: float = 5.0
    architectures: str = "fig1,fig2,fig3a"
    eq_seeds: int = 20
    eq_length: int = 4096
    eq_m_values: str = "1,2,4"
    eq_orders: str = "1,2"
    corrupt_entry: str = ""  # test hook: "i,j:c0,c1,..." replaces one block-filter entry

    @property
    def effective_sigma(self) -> float:
        if self.scenario == "fig4":
            return 0.0
        if self.sigma_tau is None:
            return JITTER_DEFAULTS[self.scenario]
        return self.sigma_tau

    @property
    def metric(self) -> MetricConfig:
        return MetricConfig(self.osr, self.fx_fraction, self.guard_bins, self.psd_segment, self.psd_overlap)

    def chain(self, architecture: str, **kw) -> ChainSpec:
        base = dict(
            architecture=architecture,
            order=self.order,
            M=self.M,
            n_samples=self.n_samples,
            K=self.K,
            sigma_tau=self.effective_sigma,
            correlated=self.correlated,
        )
        base.update(kw)
        return ChainSpec(**base)

    def amplitudes(self) -> list[float]:
        n = int(math.floor((self.amp_stop - self.amp_start) / self.amp_step + 1e-9)) + 1
        return [self.amp_start + i * self.amp_step for i in range(n)]

    def int_list(self, name: str) -> list[int]:
        return [int(v) for v in str(getattr(self, name)).split(",") if v.strip()]

    def parsed_corruption(self) -> tuple[int, int, FirFilter] | None:
        if not self.corrupt_entry:
            return None
        try:
            ij, taps = self.corrupt_entry.split(":")
            i, j = (int(v) for v in ij.split(","))
            return i, j, FirFilter(tuple(float(v) for v in taps.split(",")))
        except ValueError as exc:
            raise ConfigError(f"bad corrupt_entry {self.corrupt_entry!r}: want 'i,j:c0,c1,...'") from exc

    def validate(self) -> ScenarioConfig:
        err = []
        if self.scenario not in SCENARIOS:
            err.append(f"scenario must be one of {SCENARIOS}")
        if self.order not in SUPPORTED_ORDERS:
            err.append(f"order must be in {SUPPORTED_ORDERS}")
        if self.M < 1:
            err.append("M must be >= 1")
        elif self.n_samples % self.M:
            err.append("n_samples must be a multiple of M")
        if not self.osr > 1:
            err.append("osr must exceed 1")
        if not 0 < self.fx_fraction < 1:
            err.append("fx_fraction must be in (0, 1)")
        if self.amp_dbfs > 0 or self.amp_stop > 0:
            err.append("amplitudes are dBFS and must be <= 0")
        if self.amp_step <= 0 or self.amp_start > self.amp_stop:
            err.append("sweep needs amp_start <= amp_stop and amp_step > 0")
        sigma = self.effective_sigma
        if not 0 <= sigma < 0.25:
            err.append("sigma_tau must be in [0, 0.25) periods of f_H")
        if self.K < 8:
            err.append("K must be >= 8")
        if self.scenario in ("fig4", "fig7") and self.n_samples < 4 * self.psd_segment:
            err.append("n_samples must cover at least 4 PSD segments")
        if not 0 <= self.psd_overlap < 1:
            err.append("psd_overlap must be in [0, 1)")
        bad = [a for a in self.architectures.split(",") if a not in ("fig1", "fig2", "fig3a")]
        if bad:
            err.append(f"unknown architectures {bad}")
        try:
            if any(m < 1 for m in self.int_list("eq_m_values")):
                err.append("eq_m_values must be >= 1")
            if any(o not in SUPPORTED_ORDERS for o in self.int_list("eq_orders")):
                err.append(f"eq_orders must be in {SUPPORTED_ORDERS}")
        except ValueError:
            err.append("eq_m_values / eq_orders must be comma-separated integers")
        self.parsed_corruption()
        if err:
            raise ConfigError("; ".join(err))
        return self


def _coerce(name: str, raw):
    ftype = {f.name: f.type for f in fields(ScenarioConfig)}[name]
    if raw is None:
        return None
    if isinstance(raw, str):
        raw = raw.strip()
        if "int" in ftype and "|" not in ftype:
            return int(float(raw)) if "e" in raw.lower() or "." in raw else int(raw, 0)
        if "float" in ftype:
            return None if raw.lower() in ("", "none", "default") else float(raw)
        if ftype == "bool":
            return raw.lower() in ("1", "true", "yes", "on")
    return raw


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> ScenarioConfig:
    """Defaults, then the INI file, then ``overrides`` (non-``None`` values only)."""
    values: dict = {}
    if path is not None:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        if not cp.read(path):
            raise ConfigError(f"cannot read config file {path}")
        known = set(SECTIONS)
        for section in cp.sections():
            for key, raw in cp.items(section):
                if key not in known:
                    raise ConfigError(f"unknown key [{section}] {key}")
                values[key] = raw
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = v
    try:
        cfg = ScenarioConfig(**{k: _coerce(k, v) for k, v in values.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


def dump_config(cfg: ScenarioConfig) -> str:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    for k, v in asdict(cfg).items():
        sec = SECTIONS[k]
        if not cp.has_section(sec):
            cp.add_section(sec)
        cp.set(sec, k, "" if v is None else str(v))
    lines = []
    for sec in cp.sections():
        lines.append(f"[{sec}]")
        lines += [f"{k} = {v}" for k, v in cp.items(sec)]
        lines.append("")
    return "\n".join(lines)


@dataclass
class RunOutcome:
    status: int
    outputs: list[Path] = field(default_factory=list)
    metrics: dict[str, float] = field(default_factory=dict)
    messages: list[str] = field(default_factory=list)
    seeds: dict[str, int] = field(default_factory=dict)

    def check(self, ok: bool, msg: str) -> None:
        self.messages.append(("PASS " if ok else "FAIL ") + msg)
        if not ok:
            self.status = EXIT_ASSERT


@dataclass
class RunManifest:
    config: ScenarioConfig
    outcome: RunOutcome
    warnings: list[str]
    timestamp: str = field(default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat())

    def render(self) -> str:
        lines = [
            "# sdmlab run manifest",
            f"timestamp = {self.timestamp}",
            f"tool_version = {__version__}",
            f"status = {self.outcome.status}",
            f"sigma_tau_effective = {self.config.effective_sigma}",
            "",
            dump_config(self.config),
            "[seeds]",
            "derivation = SeedSequence([master, *keys]).generate_state(1)[0]",
        ]
        lines += [f"{k} = {v}" for k, v in self.outcome.seeds.items()]
        lines += ["", "[outputs]"]
        lines += [f"{p.name} = sha256:{sha256(p)}" for p in self.outcome.outputs]
        lines += ["", "[checks]"] + self.outcome.messages
        lines += ["", "[warnings]"] + self.warnings
        return "\n".join(lines) + "\n"


def _out(cfg: ScenarioConfig) -> Path:
    p = Path(cfg.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _metrics_rows(metrics: dict[str, float], units: dict[str, str]):
    return [(k, v, units.get(k, "")) for k, v in metrics.items()]


def run_fig4(cfg: ScenarioConfig) -> RunOutcome:
    """Ideal-clock PSDs of the classical DAC output (V) and the analog mux output (G)."""
    cfg = replace(cfg, sigma_tau=0.0)
    mc = cfg.metric
    out = _out(cfg)
    res = RunOutcome(EXIT_OK)
    amp = dbfs_to_amplitude(cfg.amp_dbfs)
    v = run_chain(cfg.chain("fig1"), amp, mc)
    g = run_chain(cfg.chain("fig3a"), amp, mc)
    psd_v, psd_g = estimate_psd(v.waveform, mc), estimate_psd(g.waveform, mc)
    res.outputs += [
        write_psd(out / "psd_V.csv", psd_v, cfg.psd_fmax),
        write_psd(out / "psd_G.csv", psd_g, cfg.psd_fmax),
    ]
    m = res.metrics
    m["sndr_V"] = compute_sndr(v.waveform, mc)
    m["sndr_G"] = compute_sndr(g.waveform, mc)
    m["sndr_diff"] = m["sndr_G"] - m["sndr_V"]
    m["tone_freq"] = mc.tone_freq(cfg.n_samples)
    m["band"] = mc.band
    units = {k: "dB" for k in ("sndr_V", "sndr_G", "sndr_diff")}
    units.update(tone_freq="f_H", band="f_H")
    for k in range(1, cfg.M // 2 + 1):
        f0 = k / cfg.M
        if f0 <= cfg.psd_fmax:
            key = f"notch_G_{f0:g}"
            m[key] = notch_depth_db(psd_g, f0)
            units[key] = "dB"
    res.outputs.append(write_metrics(out / "metrics.csv", _metrics_rows(m, units)))
    res.check(abs(m["sndr_diff"]) <= 1.0, f"|SNDR_G - SNDR_V| = {abs(m['sndr_diff']):.3f} dB <= 1 dB")
    return res


PLATEAU_DB = 10.0


def run_fig6(cfg: ScenarioConfig) -> RunOutcome:
    """DR curves of the three architectures under clock jitter."""
    mc = cfg.metric
    out = _out(cfg)
    res = RunOutcome(EXIT_OK)
    sigma = cfg.effective_sigma
    # the operating point always joins the grid so the headline gap is measured directly
    amps = sorted(set(cfg.amplitudes()) | {float(cfg.amp_dbfs)})
    curves = {}
    for idx, arch in enumerate(("fig1", "fig2", "fig3a")):
        seed = derive_seed(cfg.seed, 6, idx)
        res.seeds[f"sweep_{arch}"] = seed
        curves[arch] = dr_sweep(amps, cfg.chain(arch), mc, seed)
    rows = []
    for arch, c in curves.items():
        rows += [(a, s, arch) for a, s in c.points]
        for a, msg in c.failures.items():
            res.messages.append(f"POINT-FAIL {arch} {a:g} dBFS: {msg}")
    res.outputs.append(write_csv(out / "dr.csv", ["amp_dbfs", "sndr_db", "scenario"], rows))

    c1, c2, c3 = curves["fig1"], curves["fig2"], curves["fig3a"]
    target = snr_improvement(cfg.M)
    p1 = dict(zip(c1.amplitudes, range(len(c1.points))))
    p2 = dict(zip(c2.amplitudes, range(len(c2.points))))
    p3 = dict(zip(c3.amplitudes, range(len(c3.points))))
    # plateau: the top PLATEAU_DB of input range below the classical peak
    top = float(c1.amplitudes[int(np.argmax(c1.sndr))]) if len(c1.points) else math.nan
    gap_rows, plateau, agree, ideal_agree = [], [], [], []
    for a, i in p1.items():
        if a not in p2 or a not in p3:
            continue
        j, k = p2[a], p3[a]
        gap = float(c3.sndr[k] - c1.sndr[i])
        confident = not (c1.low_confidence[i] or c2.low_confidence[j] or c3.low_confidence[k])
        pred = predict_snr_jtt1(dbfs_to_amplitude(a), 1.0, sigma, c1.sigma_dy[i], cfg.osr)
        jitter_dom = bool(confident and pred <= c1.ideal_sndr[i] - 10.0)
        on_plateau = bool(jitter_dom and top - PLATEAU_DB <= a <= top)
        gap_rows.append((a, gap, confident, jitter_dom, on_plateau))
        if not confident:
            continue
        agree.append(abs(c1.sndr[i] - c2.sndr[j]))
        if on_plateau:
            plateau.append(gap)
        elif sigma == 0:
            ideal_agree.append(abs(gap))
    res.outputs.append(
        write_csv(
            out / "gap.csv",
            ["amp_dbfs", "gap_db", "confident", "jitter_dominated", "plateau"],
            gap_rows,
        )
    )
    m = res.metrics
    for arch, c in curves.items():
        m[f"peak_sndr_{arch}"] = c.peak_sndr
        m[f"dr_{arch}"] = c.dynamic_range()
    op = float(cfg.amp_dbfs)
    if op in p1 and op in p3:
        m["sndr_fig1_at_op"] = float(c1.sndr[p1[op]])
        m["sndr_fig3a_at_op"] = float(c3.sndr[p3[op]])
        m["gap_at_op"] = float(c3.sndr[p3[op]] - c1.sndr[p1[op]])
    if plateau:
        m["gap_plateau_mean"] = float(np.mean(plateau))
    res.outputs.append(write_metrics(out / "metrics.csv", _metrics_rows(m, {k: "dB" for k in m})))

    res.check(bool(agree) and max(agree) <= 1.0, f"fig1 vs fig2 max |diff| = {max(agree, default=math.nan):.3f} dB <= 1 dB")
    if plateau:
        worst = max(abs(g - target) for g in plateau)
        res.check(worst <= 2.0, f"fig3a - fig1 gap within {target:.2f} +/- 2 dB over {len(plateau)} plateau points (worst dev {worst:.3f})")
    if ideal_agree:
        res.check(max(ideal_agree) <= 1.0, f"ideal fig3a vs fig1 max |diff| = {max(ideal_agree):.3f} dB <= 1 dB")
    return res


def run_fig7(cfg: ScenarioConfig) -> RunOutcome:
    """PSDs of V and G when the DAC clocks are jittered."""
    mc = cfg.metric
    out = _out(cfg)
    res = RunOutcome(EXIT_OK)
    sigma = cfg.effective_sigma
    amp = dbfs_to_amplitude(cfg.amp_dbfs)
    res.seeds["fig1"] = s1 = derive_seed(cfg.seed, 7, 0)
    res.seeds["fig3a"] = s3 = derive_seed(cfg.seed, 7, 2)
    v = run_chain(cfg.chain("fig1", sigma_tau=sigma), amp, mc, s1)
    g = run_chain(cfg.chain("fig3a", sigma_tau=sigma), amp, mc, s3)
    psd_v, psd_g = estimate_psd(v.waveform, mc), estimate_psd(g.waveform, mc)
    res.outputs += [
        write_psd(out / "psd_V.csv", psd_v, cfg.psd_fmax),
        write_psd(out / "psd_G.csv", psd_g, cfg.psd_fmax),
    ]
    n = cfg.n_samples
    m = res.metrics
    det_v, det_g = sndr_details(v.waveform, mc), sndr_details(g.waveform, mc)
    m["sndr_V"] = det_v.sndr_db
    m["sndr_G"] = det_g.sndr_db
    m["floor_V"] = inband_floor_db(psd_v, mc, n)
    m["floor_G"] = inband_floor_db(psd_g, mc, n)
    m["noise_V"] = det_v.noise_db
    m["noise_G"] = det_g.noise_db
    if sigma > 0:
        ideal = run_chain(cfg.chain("fig1", sigma_tau=0.0), amp, mc)
        m["floor_V_ideal"] = inband_floor_db(estimate_psd(ideal.waveform, mc), mc, n)
        m["floor_rise_V"] = m["floor_V"] - m["floor_V_ideal"]
        m["floor_gap"] = m["floor_V"] - m["floor_G"]
    res.outputs.append(write_metrics(out / "metrics.csv", _metrics_rows(m, {k: "dB" for k in m})))
    if sigma > 0:
        res.check(m["floor_rise_V"] >= 10.0, f"jitter raises V in-band floor by {m['floor_rise_V']:.2f} dB >= 10 dB")
        if cfg.M > 1:
            target = snr_improvement(cfg.M)
            res.check(
                abs(m["floor_gap"] - target) <= 2.0,
                f"G floor below V by {m['floor_gap']:.2f} dB, target {target:.2f} +/- 2 dB",
            )
    return res


def run_sweep(cfg: ScenarioConfig) -> RunOutcome:
    """DR sweep for the configured architectures; no pass/fail checks."""
    mc = cfg.metric
    out = _out(cfg)
    res = RunOutcome(EXIT_OK)
    rows, metrics = [], {}
    for idx, arch in enumerate(cfg.architectures.split(",")):
        seed = derive_seed(cfg.seed, 5, idx)
        res.seeds[f"sweep_{arch}"] = seed
        c = dr_sweep(cfg.amplitudes(), cfg.chain(arch), mc, seed)
        rows += [(a, s, arch) for a, s in c.points]
        metrics[f"peak_sndr_{arch}"] = c.peak_sndr
        metrics[f"dr_{arch}"] = c.dynamic_range()
        for a, msg in c.failures.items():
            res.messages.append(f"POINT-FAIL {arch} {a:g} dBFS: {msg}")
    res.metrics = metrics
    res.outputs.append(write_csv(out / "dr.csv", ["amp_dbfs", "sndr_db", "scenario"], rows))
    res.outputs.append(write_metrics(out / "metrics.csv", _metrics_rows(metrics, {})))
    return res


def run_equivalence(cfg: ScenarioConfig) -> RunOutcome:
    """Bit-exact audit of the TI modulator and the comb model of the analog mux."""
    out = _out(cfg)
    res = RunOutcome(EXIT_OK)
    corrupt = cfg.parsed_corruption()
    rows = []
    n_fail = 0
    for M in cfg.int_list("eq_m_values"):
        for L in cfg.int_list("eq_orders"):
            block = None
            if corrupt and corrupt[0] < M and corrupt[1] < M:
                block = build_block_filter(make_loop_filter(L), M).with_entry(*corrupt)
            for s in range(cfg.eq_seeds):
                rng = np.random.default_rng(derive_seed(cfg.seed, M, L, s))
                x = rng.uniform(-0.9, 0.9, cfg.eq_length)
                rep = equivalence_check(x, M, L, block=block)
                bank = LowRateBank(rng.choice([-1.0, 1.0], size=(M, cfg.eq_length // M)))
                dt = dt_model_check(bank, M, cfg.K)
                loc = rep.locate() or ("", "")
                ok = rep.passed and dt.passed
                n_fail += not ok
                rows.append((M, L, s, rep.max_abs_diff, rep.aligned_delay, loc[0], loc[1], dt.max_abs_diff, ok))
                if not ok:
                    where = f"path {loc[0]} step {loc[1]}" if rep.first_mismatch is not None else "-"
                    res.messages.append(
                        f"MISMATCH M={M} L={L} seed={s}: residual {rep.max_abs_diff:g}, delay {rep.aligned_delay}, "
                        f"first at {where}, diverged {rep.diverged_at}, dt-model {dt.max_abs_diff:g}"
                    )
    header = ["M", "order", "seed", "max_abs_diff", "aligned_delay", "mismatch_path", "mismatch_step", "dt_max_abs_diff", "pass"]
    res.outputs.append(write_csv(out / "equivalence.csv", header, rows))
    res.metrics = {"cases": float(len(rows)), "failures": float(n_fail)}
    res.outputs.append(write_metrics(out / "metrics.csv", _metrics_rows(res.metrics, {})))
    res.check(n_fail == 0, f"{len(rows) - n_fail}/{len(rows)} equivalence cases bit-exact")
    return res


RUNNERS = {
    "fig4": run_fig4,
    "fig6": run_fig6,
    "fig7": run_fig7,
    "equivalence": run_equivalence,
    "sweep": run_sweep,
}


def run_scenario(cfg: ScenarioConfig) -> tuple[RunOutcome, Path]:
    """Run ``cfg.scenario`` and write ``manifest.txt`` next to its outputs."""
    cfg.validate()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        outcome = RUNNERS[cfg.scenario](cfg)
    seen = []
    for w in caught:
        msg = f"{w.category.__name__}: {w.message}"
        if msg not in seen:
            seen.append(msg)
    manifest = RunManifest(cfg, outcome, seen)
    path = _out(cfg) / "manifest.txt"
    path.write_text(manifest.render())
    return outcome, path
