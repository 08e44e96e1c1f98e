"""Analytic triplet-rate budget with Monte Carlo and linear error propagation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Callable, Mapping

import numpy as np
from scipy import constants

from .rng import substream

DEFAULT_SAMPLES = 100_000
DEFAULT_SEED = 20100101
SECONDS_PER_HOUR = 3600.0


@dataclass(frozen=True)
class UncertainValue:
    mean: float
    sigma: float = 0.0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")

    def interval(self) -> tuple[float, float]:
        return self.mean - self.sigma, self.mean + self.sigma

    def overlaps(self, other: "UncertainValue") -> bool:
        lo_a, hi_a = self.interval()
        lo_b, hi_b = other.interval()
        return lo_a <= hi_b and lo_b <= hi_a

    def to_json(self) -> dict:
        return {"mean": self.mean, "sigma": self.sigma}

    def display(self) -> str:
        """Two significant figures on sigma (or mean when sigma is zero)."""
        ref = self.sigma if self.sigma > 0 else abs(self.mean)
        if ref == 0:
            return "0 ± 0"
        digits = 1 - math.floor(math.log10(ref))
        if digits > 12:
            return f"{self.mean:.2g} ± {self.sigma:.2g}"
        if digits <= 0:
            return f"{round(self.mean, digits):.0f} ± {round(self.sigma, digits):.0f}"
        return f"{self.mean:.{digits}f} ± {self.sigma:.{digits}f}"


def uv(mean: float, sigma: float = 0.0) -> UncertainValue:
    return UncertainValue(float(mean), float(sigma))


# parameters that are probabilities or efficiencies and live on [0, 1]
UNIT_INTERVAL = {
    "eta_d1", "eta_775", "p_coinc", "eta_lp", "eta_duty", "eta_tac", "eta_cw",
    "eta_in", "eta_out", "eta_bs", "eta_d2", "eta_d3", "dark_prob_d2", "dark_prob_d3",
}


@dataclass(frozen=True)
class EfficiencyBudget:
    r_trigger: UncertainValue
    eta_d1: UncertainValue
    eta_775: UncertainValue
    p_coinc: UncertainValue
    eta_lp: UncertainValue
    eta_duty: UncertainValue
    eta_tac: UncertainValue
    eta_cw: UncertainValue
    eta_in: UncertainValue
    eta_out: UncertainValue
    eta_bs: UncertainValue
    eta_d2: UncertainValue
    eta_d3: UncertainValue
    dark_prob_d2: UncertainValue = uv(1.8e-3)
    dark_prob_d3: UncertainValue = uv(4.5e-6)
    gate_d2_ns: float = 20.0
    gate_d3_ns: float = 1.5
    bin_width_ns: float = 0.8

    def __post_init__(self):
        for name in UNIT_INTERVAL:
            v = getattr(self, name)
            if not 0.0 <= v.mean <= 1.0:
                raise ValueError(f"{name} = {v.mean} outside [0, 1]")
        if not self.r_trigger.mean > 0:
            raise ValueError("r_trigger must be positive")
        if not self.gate_d2_ns > self.gate_d3_ns > 0:
            raise ValueError("gate widths must satisfy gate_d2 > gate_d3 > 0")
        bins_per_gate(self.gate_d2_ns, self.bin_width_ns)

    @property
    def n_bins(self) -> int:
        return bins_per_gate(self.gate_d2_ns, self.bin_width_ns)

    def parameters(self) -> dict[str, UncertainValue]:
        return {f.name: getattr(self, f.name) for f in fields(self) if isinstance(getattr(self, f.name), UncertainValue)}

    def with_means(self, **means: float) -> "EfficiencyBudget":
        """Copy with the named parameters replaced by exact values."""
        return replace(self, **{k: uv(v) for k, v in means.items()})


def bins_per_gate(gate_ns: float, bin_width_ns: float) -> int:
    gate_ps, bin_ps = round(gate_ns * 1000), round(bin_width_ns * 1000)
    if bin_ps <= 0 or gate_ps % bin_ps:
        raise ValueError(f"bin width {bin_width_ns} ns does not tile the {gate_ns} ns gate")
    return gate_ps // bin_ps


def reference_budget() -> EfficiencyBudget:
    """Budget of the reference setup; the bundled ``paper_table1`` config carries the same values."""
    return EfficiencyBudget(
        r_trigger=uv(8.70e5, 0.05e5),
        eta_d1=uv(0.45, 0.05),
        eta_775=uv(0.53, 0.06),
        p_coinc=uv(2.5e-11, 0.2e-11),
        eta_lp=uv(0.50, 0.03),
        eta_duty=uv(0.01),
        eta_tac=uv(0.5),
        eta_cw=uv(0.67, 0.05),
        eta_in=uv(0.50, 0.05),
        eta_out=uv(0.50, 0.05),
        eta_bs=uv(0.45, 0.05),
        eta_d2=uv(0.20, 0.02),
        eta_d3=uv(0.10, 0.01),
    )


@dataclass(frozen=True)
class Measurements:
    """Characterisation data consumed by the inverse calculations."""

    coinc_to_singles: float = 0.24
    coinc_rate_hz: UncertainValue = uv(24.0, 2.0)
    coinc_pump_power_w: float = 245e-9
    pump_wavelength_nm: float = 775.0
    triplet_rate_per_hour: UncertainValue = uv(4.7, 0.6)
    power_in_w: float = 1.1e-3
    power_out_w: UncertainValue = uv(0.9e-9, 0.1e-9)
    duration_s: float = 72_000.0

    def parameters(self) -> dict[str, UncertainValue]:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v if isinstance(v, UncertainValue) else uv(v)
        return out


def _check_unit(**values: float):
    for name, v in values.items():
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} = {v} outside [0, 1]")


# -- plug-in formulas -------------------------------------------------------
# Each takes a mapping of parameter values (floats or equally shaped arrays).


def _p_triple(v, p_spdc):
    return v["eta_775"] * v["eta_in"] * p_spdc * v["eta_out"] ** 2 * 2 * v["eta_bs"] ** 2 * v["eta_d2"] * v["eta_d3"]


def _p_coinc(v, p_spdc):
    return (v["eta_in"] * p_spdc * v["eta_out"] ** 2 * v["eta_lp"] ** 2 * 2 * v["eta_bs"] ** 2
            * v["eta_d2"] * v["eta_d3"] * v["eta_duty"])


def _p_triple_from_coinc(v):
    return v["eta_775"] * v["p_coinc"] / (v["eta_lp"] ** 2 * v["eta_duty"])


def _r_triple(v):
    return SECONDS_PER_HOUR * v["r_trigger"] * _p_triple_from_coinc(v) * v["eta_tac"] * v["eta_cw"]


def _p_spdc_from_coinc(v):
    return v["p_coinc"] / _p_coinc(v, 1.0)


def _p_spdc_from_triplets(v):
    per_trigger = v["triplet_rate_per_hour"] / SECONDS_PER_HOUR / v["r_trigger"]
    return per_trigger / (_p_triple(v, 1.0) * v["eta_tac"] * v["eta_cw"])


def _p_spdc_from_power(v):
    return v["power_out_w"] / (v["eta_in"] * v["eta_out"] * v["eta_lp"] * v["power_in_w"])


def _dark_triples(v):
    return v["r_trigger"] * v["dark_prob_d2"] * v["dark_prob_d3"] * v["eta_tac"] * v["duration_s"]


def _eta_775(v):
    return v["coinc_to_singles"] / v["eta_d1"]


QUANTITIES: dict[str, Callable] = {
    "r_triple": _r_triple,
    "p_triple": _p_triple_from_coinc,
    "p_spdc_from_coinc": _p_spdc_from_coinc,
    "p_spdc_from_triplets": _p_spdc_from_triplets,
    "p_spdc_from_power": _p_spdc_from_power,
    "expected_dark_triples": _dark_triples,
    "eta_775": _eta_775,
}


def p_triple(budget: EfficiencyBudget, p_spdc: float) -> float:
    """Triple-coincidence probability per D1 trigger for a given PPLN conversion probability."""
    _check_unit(p_spdc=p_spdc)
    return _p_triple(_means(budget.parameters()), p_spdc)


def p_coinc(budget: EfficiencyBudget, p_spdc: float) -> float:
    """Laser-pumped pair-coincidence probability per input photon (quasi-free-running D2)."""
    _check_unit(p_spdc=p_spdc)
    return _p_coinc(_means(budget.parameters()), p_spdc)


def p_triple_from_coinc(budget: EfficiencyBudget) -> float:
    return _p_triple_from_coinc(_means(budget.parameters()))


def r_triple(budget: EfficiencyBudget) -> float:
    """Predicted detected triplet rate per hour (plug-in value)."""
    return _r_triple(_means(budget.parameters()))


def photon_rate(power_w: float, wavelength_nm: float) -> float:
    return power_w * wavelength_nm * 1e-9 / (constants.h * constants.c)


def p_coinc_from_counts(coinc_rate_hz: float, power_w: float, wavelength_nm: float) -> float:
    return coinc_rate_hz / photon_rate(power_w, wavelength_nm)


def infer_eta_775(coinc_to_singles: float, eta_d1: UncertainValue) -> UncertainValue:
    """Fibre-coupling probability of the 775 nm photon from the heralding ratio."""
    if not 0 < coinc_to_singles <= 1:
        raise ValueError("coincidence-to-singles ratio must lie in (0, 1]")
    if not 0 < eta_d1.mean <= 1:
        raise ValueError("eta_d1 must lie in (0, 1]")
    mean = coinc_to_singles / eta_d1.mean
    return UncertainValue(mean, mean * eta_d1.sigma / eta_d1.mean)


def infer_p_spdc_from_power(p_in: float, p_out: UncertainValue | float, budget: EfficiencyBudget) -> UncertainValue:
    """Conversion probability from detected pair power at high pump power.

    The pair carries the pump-photon energy, so photon-energy factors cancel
    and the ratio of powers is the ratio of photon fluxes.
    """
    if not isinstance(p_out, UncertainValue):
        p_out = uv(p_out)
    if not p_in > 0 or p_out.mean < 0:
        raise ValueError("input power must be positive and output power non-negative")
    params = {**budget.parameters(), "power_in_w": uv(p_in), "power_out_w": p_out}
    return propagate_linear(params, "p_spdc_from_power")


def expected_dark_triples(budget: EfficiencyBudget, duration_s: float) -> UncertainValue:
    """Accidental D1-D2dark-D3dark triples over ``duration_s`` across the whole D2 gate."""
    if not duration_s > 0:
        raise ValueError("duration must be positive")
    params = {**budget.parameters(), "duration_s": uv(duration_s)}
    return propagate_linear(params, "expected_dark_triples")


def background_per_bin(budget: EfficiencyBudget, duration_s: float) -> UncertainValue:
    total = expected_dark_triples(budget, duration_s)
    n = budget.n_bins
    return UncertainValue(total.mean / n, total.sigma / n)


# -- propagation ------------------------------------------------------------


def _means(params: Mapping[str, UncertainValue]) -> dict[str, float]:
    return {k: v.mean for k, v in params.items()}


def _bounds(name: str) -> tuple[float, float]:
    return (0.0, 1.0) if name in UNIT_INTERVAL else (0.0, math.inf)


def _truncated_normal(rng: np.random.Generator, mean: float, sigma: float, lo: float, hi: float,
                      size: int) -> np.ndarray:
    out = rng.normal(mean, sigma, size)
    bad = (out < lo) | (out > hi)
    while bad.any():
        out[bad] = rng.normal(mean, sigma, int(bad.sum()))
        bad = (out < lo) | (out > hi)
    return out


def _draws(params: Mapping[str, UncertainValue], samples: int, seed: int) -> dict:
    draws = {}
    for name, value in params.items():
        if value.sigma == 0:
            draws[name] = np.full(samples, value.mean)
        else:
            lo, hi = _bounds(name)
            draws[name] = _truncated_normal(substream(seed, "propagate", name), value.mean, value.sigma,
                                            lo, hi, samples)
    return draws


def _resolve(source, quantity: str, measurements: Measurements | None) -> tuple[dict[str, UncertainValue], Callable]:
    if quantity not in QUANTITIES:
        raise KeyError(f"unknown quantity {quantity!r}; known: {sorted(QUANTITIES)}")
    if isinstance(source, EfficiencyBudget):
        params = {**(measurements or Measurements()).parameters(), **source.parameters()}
    else:
        params = dict(source)
    return params, QUANTITIES[quantity]


def propagate(source, quantity: str, samples: int = DEFAULT_SAMPLES, seed: int = DEFAULT_SEED,
              measurements: Measurements | None = None) -> UncertainValue:
    """Monte Carlo propagation with independent truncated Gaussians.

    Each parameter draws from its own named substream, so the result depends
    only on (inputs, samples, seed).
    """
    if samples < 10_000:
        raise ValueError("propagation needs at least 10^4 samples")
    params, fn = _resolve(source, quantity, measurements)
    if all(v.sigma == 0 for v in params.values()):
        return UncertainValue(float(fn(_means(params))), 0.0)
    out = fn(_draws(params, samples, seed))
    return UncertainValue(float(np.mean(out)), float(np.std(out, ddof=1)))


def propagate_linear(source, quantity: str, measurements: Measurements | None = None) -> UncertainValue:
    """First-order Taylor propagation with central finite-difference partials."""
    params, fn = _resolve(source, quantity, measurements)
    base = _means(params)
    mean = float(fn(base))
    var = 0.0
    for k, v in params.items():
        if v.sigma == 0:
            continue
        h = 1e-6 * abs(v.mean) if v.mean != 0 else 1e-6 * v.sigma
        up, dn = dict(base), dict(base)
        up[k] += h
        dn[k] -= h
        var += ((fn(up) - fn(dn)) / (2 * h) * v.sigma) ** 2
    return UncertainValue(mean, math.sqrt(var))


# -- report -----------------------------------------------------------------


@dataclass
class BudgetReport:
    r_triple_per_hour: UncertainValue
    p_triple: UncertainValue
    p_spdc_from_coinc: UncertainValue
    p_spdc_from_triplets: UncertainValue
    p_spdc_from_power: UncertainValue
    expected_dark_triples: UncertainValue
    background_per_bin: UncertainValue
    p_spdc_consistency: str = field(default="")

    def to_json(self) -> dict:
        out = {f.name: getattr(self, f.name).to_json() for f in fields(self) if f.name != "p_spdc_consistency"}
        out["p_spdc_consistency"] = self.p_spdc_consistency
        return out


CONSISTENT = "consistent within 1σ"
INCONSISTENT = "inconsistent at 1σ"


def consistency_verdict(estimates) -> str:
    """Every pair of 1-sigma intervals must overlap."""
    est = list(estimates)
    ok = all(a.overlaps(b) for i, a in enumerate(est) for b in est[i + 1:])
    return CONSISTENT if ok else INCONSISTENT


def budget_report(budget: EfficiencyBudget, measurements: Measurements | None = None,
                  samples: int = DEFAULT_SAMPLES, seed: int = DEFAULT_SEED) -> BudgetReport:
    """Central (plug-in) values with Monte Carlo 1-sigma spreads.

    The inverse chains divide by squared efficiencies, which skews the sample
    mean upward; the central value is what the chain evaluates to at the
    parameter means.
    """
    if samples < 10_000:
        raise ValueError("propagation needs at least 10^4 samples")
    m = measurements or Measurements()
    params = {**m.parameters(), **budget.parameters()}
    central = _means(params)
    draws = _draws(params, samples, seed)

    def mc(q):
        fn = QUANTITIES[q]
        return UncertainValue(float(fn(central)), float(np.std(fn(draws), ddof=1)))

    dark = expected_dark_triples(budget, m.duration_s)
    spdc = [mc("p_spdc_from_coinc"), mc("p_spdc_from_triplets"), mc("p_spdc_from_power")]
    return BudgetReport(
        r_triple_per_hour=mc("r_triple"),
        p_triple=mc("p_triple"),
        p_spdc_from_coinc=spdc[0],
        p_spdc_from_triplets=spdc[1],
        p_spdc_from_power=spdc[2],
        expected_dark_triples=dark,
        background_per_bin=UncertainValue(dark.mean / budget.n_bins, dark.sigma / budget.n_bins),
        p_spdc_consistency=consistency_verdict(spdc),
    )
