"""Monte Carlo of the gated D1 -> D2 -> D3 detection chain.

Time inside one trigger is measured in ps from the opening of the D2 gate,
which the D1 click opens. The D3 gate is centred on the D2 click plus the
configured D2-D3 delay. Recorded intervals are floor-quantised to the TAC
resolution and binned over the D2 gate.

Two modes share the same per-trigger probabilities:

* event-driven: every D2 fire is drawn individually (geometric skipping over
  the triggers that do nothing), with jitter, gate overlap and TAC
  alternate-event skipping applied per event;
* aggregated: category totals come from multinomial/binomial laws and are
  spread over bins with exact bin probabilities.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss
from scipy.special import ndtr

from . import kernels
from .budget import EfficiencyBudget, bins_per_gate
from .histogram import Histogram
from .rng import check_seed, seed_sequence, substream

EVENT = "event"
AGGREGATED = "aggregated"
MODES = (EVENT, AGGREGATED)
ALTERNATE = "alternate-skip"
IDEAL = "ideal"
TAC_MODES = {ALTERNATE: 0.5, IDEAL: 1.0}
DEFAULT_TRIGGER_CAP = 10**9
BLOCK_TRIGGERS = 2**24
# |ndtri| of the smallest uniform the kernels admit, rounded up
MAX_ABS_Z = 8.5


class TriggerCapExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class DetectorSpec:
    efficiency: float
    dark_prob_per_gate: float = 0.0
    gate_width_ns: float | None = None
    jitter_sigma_ps: float = 0.0
    dead_time_ns: float = 0.0
    delay_offset_ns: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("detector efficiency outside [0, 1]")
        if not 0.0 <= self.dark_prob_per_gate <= 1.0:
            raise ValueError("dark probability per gate outside [0, 1]")
        if self.jitter_sigma_ps < 0:
            raise ValueError("jitter sigma must be non-negative")
        if self.gate_width_ns is not None and not self.gate_width_ns > 0:
            raise ValueError("gate width must be positive for a gated detector")
        if self.dead_time_ns < 0:
            raise ValueError("dead time must be non-negative")


@dataclass(frozen=True)
class TacSpec:
    resolution_ps: float = 103.0
    efficiency_mode: str = ALTERNATE

    def __post_init__(self):
        if not self.resolution_ps > 0:
            raise ValueError("TAC resolution must be positive")
        if self.efficiency_mode not in TAC_MODES:
            raise ValueError(f"TAC mode must be one of {sorted(TAC_MODES)}")

    @property
    def efficiency(self) -> float:
        return TAC_MODES[self.efficiency_mode]


@dataclass(frozen=True)
class ExperimentConfig:
    budget: EfficiencyBudget
    d1: DetectorSpec
    d2: DetectorSpec
    d3: DetectorSpec
    tac: TacSpec
    p_spdc: float
    duration_s: float
    d2_d3_delay_ns: float = 0.0
    seed: int = 0
    mode: str = AGGREGATED
    trigger_cap: int = DEFAULT_TRIGGER_CAP

    def __post_init__(self):
        check_seed(self.seed)
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not self.duration_s > 0:
            raise ValueError("duration must be positive")
        if not 0.0 <= self.p_spdc <= 1.0:
            raise ValueError("p_spdc outside [0, 1]")
        if self.d2.gate_width_ns is None or self.d3.gate_width_ns is None:
            raise ValueError("D2 and D3 must be gated")
        if self.d1.dead_time_ns or self.d3.dead_time_ns:
            raise ValueError("dead time is modelled for D2 only; D1 runs at the effective trigger rate")
        b = self.budget
        checks = {
            "d2.efficiency": (self.d2.efficiency, b.eta_d2.mean),
            "d3.efficiency": (self.d3.efficiency, b.eta_d3.mean),
            "d1.efficiency": (self.d1.efficiency, b.eta_d1.mean),
            "d2.dark_prob_per_gate": (self.d2.dark_prob_per_gate, b.dark_prob_d2.mean),
            "d3.dark_prob_per_gate": (self.d3.dark_prob_per_gate, b.dark_prob_d3.mean),
            "d2.gate_width_ns": (self.d2.gate_width_ns, b.gate_d2_ns),
            "d3.gate_width_ns": (self.d3.gate_width_ns, b.gate_d3_ns),
            "tac efficiency": (self.tac.efficiency, b.eta_tac.mean),
        }
        for name, (got, want) in checks.items():
            if got != want:
                raise ValueError(f"{name} = {got} disagrees with the budget value {want}")
        bins_per_gate(self.d2.gate_width_ns, self.bin_width_ns)
        margin = MAX_ABS_Z * (self.d1.jitter_sigma_ps + self.d2.jitter_sigma_ps) / 1000.0
        reach = abs(self.delay_ns) + 0.5 * self.d3.gate_width_ns + margin
        c = self.d2.delay_offset_ns
        if c - reach < 0 or c + reach > self.d2.gate_width_ns:
            raise ValueError(
                f"peak at {c} ns with D3 gate reach {reach:.3f} ns does not fit inside the "
                f"{self.d2.gate_width_ns} ns D2 gate"
            )

    @classmethod
    def from_budget(cls, budget: EfficiencyBudget, p_spdc: float, duration_s: float, *,
                    jitter_ps=(360.0, 0.0, 360.0), peak_center_ns: float = 10.0,
                    d2_dead_time_ns: float = 0.0, d3_delay_offset_ns: float = 0.0,
                    tac: TacSpec | None = None, **kw) -> "ExperimentConfig":
        j1, j2, j3 = jitter_ps
        tac = tac or TacSpec(efficiency_mode=ALTERNATE if budget.eta_tac.mean == 0.5 else IDEAL)
        return cls(
            budget=budget,
            d1=DetectorSpec(budget.eta_d1.mean, jitter_sigma_ps=j1),
            d2=DetectorSpec(budget.eta_d2.mean, budget.dark_prob_d2.mean, budget.gate_d2_ns, j2,
                            d2_dead_time_ns, peak_center_ns),
            d3=DetectorSpec(budget.eta_d3.mean, budget.dark_prob_d3.mean, budget.gate_d3_ns, j3,
                            0.0, d3_delay_offset_ns),
            tac=tac, p_spdc=p_spdc, duration_s=duration_s, **kw,
        )

    @property
    def trigger_rate_hz(self) -> float:
        return self.budget.r_trigger.mean

    @property
    def bin_width_ns(self) -> float:
        return self.budget.bin_width_ns

    @property
    def delay_ns(self) -> float:
        """Offset of the D3 gate centre from the D2 click."""
        return self.d3.delay_offset_ns + self.d2_d3_delay_ns

    @property
    def n_triggers(self) -> int:
        return int(round(self.trigger_rate_hz * self.duration_s))

    @property
    def n_bins(self) -> int:
        return bins_per_gate(self.d2.gate_width_ns, self.bin_width_ns)

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class Counters:
    triggers: int = 0
    d2_fires: int = 0
    d3_fires: int = 0
    signal_triples: int = 0
    dark_triples: int = 0
    recorded: int = 0

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class SimResult:
    histogram: Histogram
    counters: Counters
    seed: int
    mode: str
    d2_d3_delay_ns: float = 0.0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        c = self.counters
        if not c.triggers >= c.d2_fires >= c.d3_fires >= c.recorded:
            raise AssertionError(f"counters not monotone along the chain: {c}")
        if self.histogram.total() != c.recorded or c.signal_triples + c.dark_triples != c.recorded:
            raise AssertionError("histogram total disagrees with the recorded counters")

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "mode": self.mode,
            "d2_d3_delay_ns": self.d2_d3_delay_ns,
            "duration_s": self.histogram.duration_s,
            "bin_width_ns": self.histogram.bin_width_ns,
            "n_bins": self.histogram.n_bins,
            "counters": self.counters.to_json(),
        }


# -- per-trigger probabilities ---------------------------------------------


def signal_fire_probability(cfg: ExperimentConfig) -> float:
    """Probability per trigger that a triplet photon fires D2.

    The spectral-acceptance factor eta_cw reduces the effective conversion
    probability of the broadband heralded input.
    """
    b = cfg.budget
    return (b.eta_775.mean * b.eta_in.mean * cfg.p_spdc * b.eta_cw.mean * b.eta_out.mean ** 2
            * 2 * b.eta_bs.mean ** 2 * cfg.d2.efficiency)


def _timing(cfg: ExperimentConfig) -> dict:
    return dict(
        center=cfg.d2.delay_offset_ns * 1000.0,
        gate2=cfg.d2.gate_width_ns * 1000.0,
        gate3=cfg.d3.gate_width_ns * 1000.0,
        delay=cfg.delay_ns * 1000.0,
        s1=cfg.d1.jitter_sigma_ps,
        s2=cfg.d2.jitter_sigma_ps,
        s3=cfg.d3.jitter_sigma_ps,
    )


def blocked_triggers(cfg: ExperimentConfig) -> int:
    """Triggers that fall inside D2's dead time after a D2 fire."""
    span = cfg.d2.dead_time_ns * 1e-9 * cfg.trigger_rate_hz
    return max(0, math.ceil(span - 1e-12) - 1) if span > 0 else 0


def gate_acceptance(delay_ps: float, gate3_ps: float, sigma_ps: float) -> float:
    """Probability that the partner photon's jittered arrival lands inside the D3 gate.

    Closed-form overlap of a Gaussian of width ``sigma_ps`` with a gate of
    width ``gate3_ps`` shifted by ``delay_ps``.
    """
    h = 0.5 * gate3_ps
    if sigma_ps == 0:
        return 1.0 if -h <= -delay_ps < h else 0.0
    return float(ndtr((h + delay_ps) / sigma_ps) - ndtr((delay_ps - h) / sigma_ps))


def _bin_preimages(cfg: ExperimentConfig) -> np.ndarray:
    """Continuous-time edges [a_k, b_k) of each bin after TAC floor quantisation."""
    res = cfg.tac.resolution_ps
    width = round(cfg.bin_width_ns * 1000)
    edges = np.array([res * math.ceil(k * width / res) for k in range(cfg.n_bins + 1)], dtype=float)
    edges[-1] = max(edges[-1], cfg.d2.gate_width_ns * 1000.0)
    return edges


def _gauss_box_cdf(x, s, h):
    """P(N(0, s) + U(-h, h) < x)."""
    x = np.asarray(x, dtype=float)
    if s == 0:
        return np.clip((x + h) / (2 * h), 0.0, 1.0)

    def prim(y):  # antiderivative of the standard normal CDF
        return y * ndtr(y) + np.exp(-0.5 * y * y) / math.sqrt(2 * math.pi)

    return s * (prim((x + h) / s) - prim((x - h) / s)) / (2 * h)


def partner_bin_probabilities(cfg: ExperimentConfig) -> np.ndarray:
    """Joint probability per bin that the partner arrives inside the D3 gate and is binned there.

    Sums to the gate acceptance. The D2 jitter is integrated with
    Gauss-Hermite nodes and the D3 jitter over the gate with Gauss-Legendre.
    """
    t = _timing(cfg)
    edges = _bin_preimages(cfg)
    c, h, d = t["center"], 0.5 * t["gate3"], t["delay"]
    s1, s2, s3 = t["s1"], t["s2"], t["s3"]
    if s2 > 0:
        z2, w2 = hermegauss(48)
        w2 = w2 / w2.sum()
    else:
        z2, w2 = np.zeros(1), np.ones(1)
    out = np.zeros(len(edges) - 1)
    for z, w in zip(z2, w2):
        lo, hi = d + s2 * z - h, d + s2 * z + h
        if s3 == 0:
            if not lo <= 0.0 < hi:
                continue
            x, wx = np.zeros(1), np.ones(1)
        else:
            lo, hi = max(lo, -12 * s3), min(hi, 12 * s3)
            if hi <= lo:
                continue
            xn, wn = leggauss(200)
            x = 0.5 * (hi - lo) * xn + 0.5 * (hi + lo)
            wx = 0.5 * (hi - lo) * wn * np.exp(-0.5 * (x / s3) ** 2) / (s3 * math.sqrt(2 * math.pi))
        # recorded time c - s1*z1 + x
        if s1 == 0:
            cdf = ((c + x)[None, :] < edges[:, None]).astype(float)
        else:
            cdf = ndtr((edges[:, None] - c - x[None, :]) / s1)
        out += w * (np.diff(cdf, axis=0) @ wx)
    return out


def sd_bin_probabilities(cfg: ExperimentConfig) -> np.ndarray:
    """Bin distribution of a D3 dark count inside a gate opened by a signal D2 click."""
    t = _timing(cfg)
    edges = _bin_preimages(cfg)
    s12 = math.hypot(t["s1"], t["s2"])
    cdf = _gauss_box_cdf(edges - t["center"] - t["delay"], s12, 0.5 * t["gate3"])
    p = np.diff(cdf)
    return p / p.sum()


def dd_bin_masses(cfg: ExperimentConfig) -> np.ndarray:
    """Per-bin probability (per dark D2 fire, per unit D3 dark probability) of a D3 dark count.

    The D2 dark click is uniform over the D2 gate; the D3 gate is clipped to
    the D2 gate and its dark probability scales with the remaining overlap.
    The density is piecewise linear, so trapezoids on its breakpoints are exact.
    """
    t = _timing(cfg)
    g2, g3, d = t["gate2"], t["gate3"], t["delay"]
    h = 0.5 * g3
    edges = _bin_preimages(cfg)
    knots = np.concatenate([edges, [d - h, d + h, g2 + d - h, g2 + d + h, 0.0, g2]])
    knots = np.unique(np.clip(knots, 0.0, g2))

    def length(x):
        return np.clip(np.minimum(g2, x - d + h) - np.maximum(0.0, x - d - h), 0.0, None)

    dens = length(knots) / (g2 * g3)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(knots))])
    at = np.interp(np.clip(edges, 0.0, g2), knots, cum)
    return np.diff(at)


def expected_rates(cfg: ExperimentConfig) -> dict:
    """Per-trigger probabilities shared by both simulation modes."""
    t = _timing(cfg)
    p_s = signal_fire_probability(cfg)
    p_d = (1.0 - p_s) * cfg.d2.dark_prob_per_gate
    k = blocked_triggers(cfg)
    p_fire = p_s + p_d
    scale = 1.0 / (1.0 + k * p_fire) if p_fire > 0 else 1.0
    accept = gate_acceptance(t["delay"], t["gate3"], math.hypot(t["s2"], t["s3"]))
    p3 = cfg.d3.dark_prob_per_gate
    dd_mass = dd_bin_masses(cfg)
    return dict(
        p_signal=p_s * scale,
        p_dark=p_d * scale,
        p_partner=cfg.d3.efficiency * accept,
        p_dark3_after_signal=p3,
        p_dark3_after_dark=p3 * float(dd_mass.sum()),
        gate_acceptance=accept,
        dd_mass=dd_mass,
    )


# -- simulation -------------------------------------------------------------


def _bins_of(ticks: np.ndarray, cfg: ExperimentConfig) -> np.ndarray:
    res = cfg.tac.resolution_ps
    width = round(cfg.bin_width_ns * 1000)
    quantised = np.floor(ticks / res) * res
    return (quantised // width).astype(np.int64)


def simulate_event_driven(cfg: ExperimentConfig, *, run: int = 0, workers: int = 1,
                          backend: str | None = None) -> SimResult:
    n = cfg.n_triggers
    if n > cfg.trigger_cap:
        raise TriggerCapExceeded(
            f"{n} triggers exceed the event-driven cap of {cfg.trigger_cap}; use mode 'aggregated'"
        )
    event_block, dead_time_mask = kernels.get_backend(backend)
    rates = expected_rates(cfg)
    k = blocked_triggers(cfg)
    # candidate fires are drawn without dead time; the mask below removes the blocked ones
    p_s = signal_fire_probability(cfg)
    p_fire = p_s + (1.0 - p_s) * cfg.d2.dark_prob_per_gate
    p_sig = p_s / p_fire if p_fire > 0 else 0.0
    t = _timing(cfg)
    starts = list(range(0, n, BLOCK_TRIGGERS))

    def one(b: int):
        bitgen = np.random.PCG64(seed_sequence(cfg.seed, EVENT, run, b))
        size = min(BLOCK_TRIGGERS, n - starts[b])
        return event_block(bitgen, size, p_fire, p_sig, t["center"], t["gate2"], t["gate3"], t["delay"],
                           t["s1"], t["s2"], t["s3"], cfg.d3.efficiency, cfg.d3.dark_prob_per_gate, k > 0)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(one, range(len(starts))))
    else:
        blocks = [one(b) for b in range(len(starts))]

    n_d2 = 0
    types, ticks = [], []
    if k > 0:
        offsets = np.cumsum([0] + [blk[0] for blk in blocks])
        idx = np.concatenate([blk[1] + s for blk, s in zip(blocks, starts)]) if blocks else np.empty(0, np.int64)
        keep = dead_time_mask(np.ascontiguousarray(idx, dtype=np.int64), k)
        n_d2 = int(keep.sum())
        for blk, off in zip(blocks, offsets):
            sel = keep[blk[2] + off]
            types.append(blk[3][sel])
            ticks.append(blk[4][sel])
    else:
        for blk in blocks:
            n_d2 += blk[0]
            types.append(blk[3])
            ticks.append(blk[4])
    types = np.concatenate(types) if types else np.empty(0, np.int64)
    ticks = np.concatenate(ticks) if ticks else np.empty(0, np.int64)

    n_d3 = len(types)
    if cfg.tac.efficiency_mode == ALTERNATE:
        kept = np.arange(n_d3) % 2 == 0
    else:
        kept = np.ones(n_d3, dtype=bool)
    bins = _bins_of(ticks[kept], cfg)
    counts = np.bincount(bins, minlength=cfg.n_bins)
    if len(counts) != cfg.n_bins:
        raise AssertionError("event outside the histogram window")
    rec_types = types[kept]
    counters = Counters(
        triggers=n,
        d2_fires=n_d2,
        d3_fires=n_d3,
        signal_triples=int(np.sum(rec_types == 1)),
        dark_triples=int(np.sum(rec_types == 2)),
        recorded=int(kept.sum()),
    )
    h = Histogram(cfg.bin_width_ns, tuple(int(c) for c in counts), cfg.duration_s, cfg.d1.delay_offset_ns)
    return SimResult(h, counters, cfg.seed, EVENT, cfg.d2_d3_delay_ns,
                     extra={"gate_acceptance": rates["gate_acceptance"]})


def simulate_aggregated(cfg: ExperimentConfig, *, run: int = 0) -> SimResult:
    rng = substream(cfg.seed, AGGREGATED, run)
    r = expected_rates(cfg)
    n = cfg.n_triggers
    p_none = max(0.0, 1.0 - r["p_signal"] - r["p_dark"])
    n_s, n_d, _ = rng.multinomial(n, [r["p_signal"], r["p_dark"], p_none])
    n_partner = rng.binomial(n_s, r["p_partner"])
    n_sd = rng.binomial(n_s - n_partner, r["p_dark3_after_signal"])
    n_dd = rng.binomial(n_d, r["p_dark3_after_dark"])

    partner_p = partner_bin_probabilities(cfg)
    dd_p = r["dd_mass"]
    shapes = [
        partner_p / partner_p.sum() if partner_p.sum() > 0 else np.full(cfg.n_bins, 1.0 / cfg.n_bins),
        sd_bin_probabilities(cfg),
        dd_p / dd_p.sum() if dd_p.sum() > 0 else np.full(cfg.n_bins, 1.0 / cfg.n_bins),
    ]
    shapes = [np.clip(p, 0.0, None) for p in shapes]
    per_cat = [rng.multinomial(m, p / p.sum()) for m, p in zip((n_partner, n_sd, n_dd), shapes)]
    eta = cfg.tac.efficiency
    if eta < 1.0:
        per_cat = [rng.binomial(x, eta) for x in per_cat]
    counts = per_cat[0] + per_cat[1] + per_cat[2]
    signal = int(per_cat[0].sum())
    dark = int(per_cat[1].sum() + per_cat[2].sum())
    counters = Counters(
        triggers=n,
        d2_fires=int(n_s + n_d),
        d3_fires=int(n_partner + n_sd + n_dd),
        signal_triples=signal,
        dark_triples=dark,
        recorded=signal + dark,
    )
    h = Histogram(cfg.bin_width_ns, tuple(int(c) for c in counts), cfg.duration_s, cfg.d1.delay_offset_ns)
    return SimResult(h, counters, cfg.seed, AGGREGATED, cfg.d2_d3_delay_ns,
                     extra={"gate_acceptance": r["gate_acceptance"]})


def simulate(cfg: ExperimentConfig, *, run: int = 0, workers: int = 1) -> SimResult:
    if cfg.mode == EVENT:
        return simulate_event_driven(cfg, run=run, workers=workers)
    return simulate_aggregated(cfg, run=run)


def scan_delay(cfg: ExperimentConfig, delays: Sequence[float], *, workers: int = 1) -> list[SimResult]:
    """One run per D2-D3 delay, each on its own substream under the same seed."""
    g3 = cfg.d3.gate_width_ns
    for d in delays:
        if abs(d) > g3:
            raise ValueError(f"delay {d} ns outside +/-{g3} ns")
    return [simulate(cfg.with_(d2_d3_delay_ns=float(d)), run=i, workers=workers) for i, d in enumerate(delays)]


def expected_counters(cfg: ExperimentConfig) -> dict:
    """Expectation of every counter (analytic; used as an oracle for both modes)."""
    r = expected_rates(cfg)
    n = cfg.n_triggers
    e_s, e_d = n * r["p_signal"], n * r["p_dark"]
    e_partner = e_s * r["p_partner"]
    e_sd = (e_s - e_partner) * r["p_dark3_after_signal"]
    e_dd = e_d * r["p_dark3_after_dark"]
    eta = cfg.tac.efficiency
    return dict(
        triggers=n, d2_fires=e_s + e_d, d3_fires=e_partner + e_sd + e_dd,
        signal_triples=eta * e_partner, dark_triples=eta * (e_sd + e_dd),
        recorded=eta * (e_partner + e_sd + e_dd),
    )
