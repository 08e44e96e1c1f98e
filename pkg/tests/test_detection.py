import math

import numpy as np
import pytest

from tripletsim.budget import r_triple
from tripletsim.detection import (
    ALTERNATE,
    EVENT,
    IDEAL,
    ExperimentConfig,
    SimResult,
    TacSpec,
    TriggerCapExceeded,
    blocked_triggers,
    dd_bin_masses,
    expected_counters,
    expected_rates,
    gate_acceptance,
    partner_bin_probabilities,
    scan_delay,
    sd_bin_probabilities,
    simulate,
    simulate_aggregated,
    simulate_event_driven,
)
from tripletsim.histogram import analyze_peak, estimate_background

KEYS = ("d2_fires", "d3_fires", "signal_triples", "dark_triples", "recorded")


@pytest.fixture(scope="module")
def cfg(loaded):
    return loaded.experiment


def test_config_matches_bundle(cfg):
    assert cfg.n_bins == 25
    assert cfg.n_triggers == 870_000 * 72_000
    assert cfg.tac.efficiency == 0.5


def test_config_validation(cfg, budget):
    with pytest.raises(ValueError):
        cfg.with_(duration_s=0.0)
    with pytest.raises(ValueError):
        cfg.with_(mode="fast")
    with pytest.raises(ValueError):
        cfg.with_(seed=-1)
    with pytest.raises(ValueError, match="does not fit"):
        cfg.with_(d2_d3_delay_ns=8.0)
    with pytest.raises(ValueError, match="tac"):
        cfg.with_(tac=TacSpec(efficiency_mode=IDEAL))
    with pytest.raises(ValueError):
        TacSpec(resolution_ps=0)


def test_all_zero_chain(budget):
    b = budget.with_means(eta_d2=0.0, eta_d3=0.0, dark_prob_d2=0.0, dark_prob_d3=0.0)
    for mode in ("event", "aggregated"):
        c = ExperimentConfig.from_budget(b, 0.0, 60.0, mode=mode)
        r = simulate(c)
        assert r.histogram.total() == 0 and r.histogram.n_bins == 25
        assert r.counters.triggers == c.n_triggers
        assert (r.counters.d2_fires, r.counters.d3_fires, r.counters.recorded) == (0, 0, 0)


def test_trigger_cap(cfg):
    with pytest.raises(TriggerCapExceeded, match="aggregated"):
        simulate_event_driven(cfg)


def test_gate_acceptance_closed_form():
    # values from an independent 40-digit evaluation
    assert gate_acceptance(0.0, 1500.0, math.hypot(360, 360) / math.sqrt(2)) == pytest.approx(
        0.96277914962022730, abs=1e-13)
    assert gate_acceptance(500.0, 1500.0, 360.0) == pytest.approx(0.75604015072429898, abs=1e-13)
    assert gate_acceptance(3000.0, 1500.0, 0.0) == 0.0


def test_partner_probabilities_sum_to_acceptance(cfg):
    for d in (-0.5, 0.0, 0.5):
        c = cfg.with_(d2_d3_delay_ns=d)
        assert partner_bin_probabilities(c).sum() == pytest.approx(expected_rates(c)["gate_acceptance"], rel=1e-9)
    assert sd_bin_probabilities(cfg).sum() == pytest.approx(1.0)


def test_dark_overlap_mass(cfg):
    # mean clipped D3 gate overlap for a uniform D2 click: 1 - (G3/2)^2 / (G2 G3)
    assert dd_bin_masses(cfg).sum() == pytest.approx(1 - 0.75**2 / (20 * 1.5), rel=1e-12)


def test_bins_partition_tac_grid(cfg):
    from tripletsim.detection import _bin_preimages

    edges = _bin_preimages(cfg)
    assert edges[0] == 0 and 20_000 <= edges[-1] < 20_000 + 103
    assert np.all(np.mod(edges[:-1], 103) == 0)


def test_reproducible_independent_of_workers(cfg):
    c = cfg.with_(duration_s=40.0, mode=EVENT, p_spdc=cfg.p_spdc * 300)
    a = simulate(c, workers=1)
    b = simulate(c, workers=4)
    assert a.histogram == b.histogram and a.counters == b.counters
    assert simulate(cfg) == simulate(cfg)


def test_event_driven_python_backend_matches(cfg):
    c = cfg.with_(duration_s=30.0, mode=EVENT, p_spdc=cfg.p_spdc * 300)
    a = simulate_event_driven(c, backend="cython")
    b = simulate_event_driven(c, backend="python")
    assert a.histogram == b.histogram and a.counters == b.counters


def test_result_invariants(cfg):
    r = simulate(cfg)
    c = r.counters
    assert c.triggers >= c.d2_fires >= c.d3_fires >= c.recorded
    assert r.histogram.total() == c.recorded == c.signal_triples + c.dark_triples
    assert r.seed == cfg.seed and r.histogram.n_bins == 25
    assert r.to_json()["counters"]["recorded"] == c.recorded


def test_dead_time_blocks_triggers(cfg):
    c = cfg.with_(d2=cfg.d2.__class__(**{**cfg.d2.__dict__, "dead_time_ns": 10_000.0}),
                  duration_s=20.0, mode=EVENT, p_spdc=0.0)
    k = blocked_triggers(c)
    assert k == 8
    r = simulate(c)
    p = cfg.d2.dark_prob_per_gate
    expect = c.n_triggers * p / (1 + k * p)
    assert abs(r.counters.d2_fires - expect) < 4 * math.sqrt(expect)
    agg = expected_counters(c.with_(mode="aggregated"))["d2_fires"]
    assert agg == pytest.approx(expect)


@pytest.mark.slow
def test_dark_only_event_driven(cfg):
    c = cfg.with_(p_spdc=0.0, mode=EVENT, trigger_cap=10**11)
    r = simulate(c)
    assert abs(r.histogram.total() - 254) < 3 * math.sqrt(254)
    assert r.counters.signal_triples == 0


def test_dark_only_background_unbiased(cfg):
    c = cfg.with_(p_spdc=0.0)
    e = expected_rates(c)
    per_bin = c.n_triggers * e["p_dark"] * e["p_dark3_after_signal"] * e["dd_mass"] * c.tac.efficiency
    analytic = np.delete(per_bin, range(11, 14)).mean()
    est = [estimate_background(simulate_aggregated(c.with_(seed=s)).histogram, (11, 14))[0] for s in range(100)]
    assert abs(np.mean(est) - analytic) < 3 * np.std(est, ddof=1) / 10


def test_background_matches_budget(cfg, report):
    r = analyze_peak(simulate(cfg).histogram)
    assert abs(r.background_mean_per_bin - report.background_per_bin.mean) < 3 * 0.9


def test_modes_agree_with_boosted_signal(cfg):
    c = cfg.with_(duration_s=120.0, p_spdc=cfg.p_spdc * 200)
    ev = [simulate_event_driven(c.with_(seed=s)) for s in range(60)]
    ag = [simulate_aggregated(c.with_(seed=s)) for s in range(60)]
    for k in KEYS:
        a = np.array([getattr(r.counters, k) for r in ev])
        b = np.array([getattr(r.counters, k) for r in ag])
        se = math.sqrt(a.var(ddof=1) / len(a) + b.var(ddof=1) / len(b))
        assert abs(a.mean() - b.mean()) < 3 * se, k
    he = np.mean([r.histogram.counts for r in ev], axis=0)
    ha = np.mean([r.histogram.counts for r in ag], axis=0)
    se = np.sqrt((he + ha) / 60) + 1e-9
    assert np.all(np.abs(he - ha) < 4 * se)


def test_peak_width(cfg):
    c = cfg.with_(p_spdc=cfg.p_spdc * 100)
    counts = np.mean([simulate(c.with_(seed=s)).histogram.counts for s in range(10)], axis=0)
    x = (np.arange(25) + 0.5) * 0.8
    half = counts.max() / 2
    above = np.nonzero(counts >= half)[0]
    lo, hi = above[0], above[-1]
    left = np.interp(half, [counts[lo - 1], counts[lo]], [x[lo - 1], x[lo]])
    right = np.interp(half, [counts[hi + 1], counts[hi]], [x[hi + 1], x[hi]])
    assert abs((right - left) - 1.2) <= 0.8


def test_simulated_rate_matches_budget(cfg, budget, report):
    c = cfg.with_(p_spdc=report.p_spdc_from_coinc.mean)
    sig = np.mean([simulate(c.with_(seed=s)).counters.signal_triples for s in range(30)]) / 20.0
    predicted = report.r_triple_per_hour
    assert abs(sig - predicted.mean) < 3 * math.hypot(predicted.sigma, math.sqrt(sig * 20 / 30) / 20)
    assert r_triple(budget) == pytest.approx(predicted.mean)


def test_scan_delay(cfg):
    results = scan_delay(cfg, [-0.5, 0.0, 0.5])
    assert [r.d2_d3_delay_ns for r in results] == [-0.5, 0.0, 0.5]
    assert len({r.histogram for r in results}) == 3
    with pytest.raises(ValueError):
        scan_delay(cfg, [2.0])


def test_far_delay_kills_signal(cfg):
    c = cfg.with_(d2_d3_delay_ns=3.0)
    r = simulate(c)
    assert r.counters.signal_triples == 0
    assert expected_counters(c)["signal_triples"] < 1e-6


def test_expected_counters_tac_modes(cfg, budget):
    ideal = ExperimentConfig.from_budget(budget.with_means(eta_tac=1.0), cfg.p_spdc, cfg.duration_s)
    assert ideal.tac.efficiency_mode == IDEAL
    assert expected_counters(ideal)["recorded"] == pytest.approx(2 * expected_counters(cfg)["recorded"])
    assert cfg.tac.efficiency_mode == ALTERNATE


def test_simresult_rejects_inconsistent_counters(cfg):
    r = simulate(cfg)
    bad = r.counters.__class__(**{**r.counters.to_json(), "recorded": r.counters.recorded + 1})
    with pytest.raises(AssertionError):
        SimResult(r.histogram, bad, r.seed, r.mode)
