"""Quasi-phase-matching of the PPLN secondary source.

Wavelengths are in nm at the API surface; wave numbers in rad/um.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from importlib import resources
from typing import NamedTuple, Sequence

import numpy as np
import yaml
from scipy.optimize import brentq

WAVELENGTH_DOMAIN_NM = (400.0, 2000.0)
TEMPERATURE_DOMAIN_C = (20.0, 200.0)
PUMP_BAND_NM = (770.0, 780.0)
SIGNAL_SCAN_NM = (1400.0, 1700.0)
SCAN_STEP_NM = 0.1
TMIN_WINDOW_C = (20.0, 120.0)
DEFAULT_SELLMEIER = "congruent_ln_jundt"


@dataclass(frozen=True)
class SellmeierSet:
    """Coefficients of the temperature-dependent extraordinary-index formula.

    ``n^2 = a1 + b1 f + (a2 + b2 f)/(l^2 - (a3 + b3 f)^2) + (a4 + b4 f)/(l^2 - a5^2) - a6 l^2``
    with ``f = (T - t0)(T + t1)``, ``l`` in um and ``T`` in C.
    """

    name: str
    a: tuple[float, float, float, float, float, float]
    b: tuple[float, float, float, float]
    t0: float = 24.5
    t1: float = 570.82

    def __post_init__(self):
        if len(self.a) != 6 or len(self.b) != 4:
            raise ValueError("Sellmeier set needs 6 'a' and 4 'b' coefficients")

    @classmethod
    def from_dict(cls, name: str, d: dict) -> "SellmeierSet":
        return cls(name=name, a=tuple(float(x) for x in d["a"]), b=tuple(float(x) for x in d["b"]),
                   t0=float(d.get("t0", 24.5)), t1=float(d.get("t1", 570.82)))

    @classmethod
    def bundled(cls, name: str = DEFAULT_SELLMEIER) -> "SellmeierSet":
        table = _bundled_table()
        if name not in table:
            raise KeyError(f"unknown Sellmeier set {name!r}; bundled: {sorted(table)}")
        return cls.from_dict(name, table[name])


@lru_cache(maxsize=None)
def _bundled_table() -> dict:
    text = resources.files("tripletsim").joinpath("data/sellmeier.yaml").read_text(encoding="utf-8")
    return yaml.safe_load(text)


def _check_domain(wavelength_nm, temperature_c):
    lo, hi = WAVELENGTH_DOMAIN_NM
    w = np.asarray(wavelength_nm, dtype=float)
    if np.any(~np.isfinite(w)) or np.any(w < lo) or np.any(w > hi):
        raise ValueError(f"wavelength outside [{lo}, {hi}] nm")
    tlo, thi = TEMPERATURE_DOMAIN_C
    if not (tlo <= temperature_c <= thi):
        raise ValueError(f"temperature {temperature_c} C outside [{tlo}, {thi}] C")


def refractive_index(s: SellmeierSet, wavelength_nm, temperature_c: float):
    _check_domain(wavelength_nm, temperature_c)
    lam2 = (np.asarray(wavelength_nm, dtype=float) / 1000.0) ** 2
    a1, a2, a3, a4, a5, a6 = s.a
    b1, b2, b3, b4 = s.b
    f = (temperature_c - s.t0) * (temperature_c + s.t1)
    n2 = (a1 + b1 * f
          + (a2 + b2 * f) / (lam2 - (a3 + b3 * f) ** 2)
          + (a4 + b4 * f) / (lam2 - a5 ** 2)
          - a6 * lam2)
    n = np.sqrt(n2)
    return float(n) if n.ndim == 0 else n


@dataclass(frozen=True)
class CrystalSpec:
    poling_period_um: float
    crystal_length_mm: float
    temperature_c: float
    sellmeier: SellmeierSet
    qpm_order: int = 1

    def __post_init__(self):
        if not self.poling_period_um > 0:
            raise ValueError("poling period must be positive")
        if self.qpm_order < 1 or self.qpm_order % 2 == 0:
            raise ValueError("QPM order must be an odd positive integer")

    def at(self, temperature_c: float) -> "CrystalSpec":
        return replace(self, temperature_c=temperature_c)


@dataclass(frozen=True)
class TuningPoint:
    pump_wavelength: float
    temperature: float
    signal_wavelength: float
    idler_wavelength: float

    def __post_init__(self):
        if self.signal_wavelength > self.idler_wavelength:
            raise ValueError("signal must not be longer than idler")
        lhs = 1.0 / self.pump_wavelength
        rhs = 1.0 / self.signal_wavelength + 1.0 / self.idler_wavelength
        if abs(lhs - rhs) > 1e-6 * lhs:
            raise ValueError("tuning point violates energy conservation")

    @classmethod
    def from_signal(cls, pump: float, temperature: float, signal: float) -> "TuningPoint":
        idler = idler_wavelength(pump, signal)
        s, i = sorted((signal, idler))
        return cls(pump, temperature, s, i)


@dataclass(frozen=True)
class PpktpCalibration:
    anchors: tuple[tuple[float, float], tuple[float, float]]
    margin_c: float = 5.0

    def __post_init__(self):
        (t_a, _), (t_b, _) = self.anchors
        if t_a == t_b:
            raise ValueError("calibration anchors need distinct temperatures")


def ppktp_output_wavelength(cal: PpktpCalibration, temperature_c: float) -> float:
    """Primary-source 775-band wavelength from the PPKTP temperature (two-point line)."""
    (t_a, w_a), (t_b, w_b) = cal.anchors
    lo, hi = min(t_a, t_b) - cal.margin_c, max(t_a, t_b) + cal.margin_c
    if not lo <= temperature_c <= hi:
        raise ValueError(f"PPKTP temperature {temperature_c} C outside calibrated range [{lo}, {hi}] C")
    return w_a + (w_b - w_a) * (temperature_c - t_a) / (t_b - t_a)


def idler_wavelength(pump: float, signal):
    if np.ndim(signal):
        return 1.0 / (1.0 / pump - 1.0 / np.asarray(signal, dtype=float))
    return 1.0 / (1.0 / pump - 1.0 / signal)


def _k(s: SellmeierSet, wavelength_nm, temperature_c):
    return 2 * np.pi * refractive_index(s, wavelength_nm, temperature_c) / (np.asarray(wavelength_nm) / 1000.0)


def _material_mismatch(s: SellmeierSet, temperature_c: float, pump: float, signal):
    """k_p - k_s - k_i, without the grating term."""
    idler = idler_wavelength(pump, signal)
    return _k(s, pump, temperature_c) - _k(s, signal, temperature_c) - _k(s, idler, temperature_c)


def phase_mismatch(c: CrystalSpec, pump: float, signal: float) -> float:
    if not signal > pump:
        raise ValueError(f"signal {signal} nm must be longer than pump {pump} nm")
    grating = c.qpm_order * 2 * np.pi / c.poling_period_um
    return float(_material_mismatch(c.sellmeier, c.temperature_c, pump, signal) - grating)


def _check_pump(pump: float):
    lo, hi = PUMP_BAND_NM
    if not lo <= pump <= hi:
        raise ValueError(f"pump {pump} nm outside [{lo}, {hi}] nm")


def solve_pair_wavelengths(c: CrystalSpec, pump: float) -> tuple[float, float] | None:
    """Non-degenerate (signal, idler) with zero mismatch, or None below cutoff."""
    _check_pump(pump)
    degenerate = 2.0 * pump
    hi = min(degenerate, SIGNAL_SCAN_NM[1])
    grid = np.arange(SIGNAL_SCAN_NM[0], hi, SCAN_STEP_NM)
    grid = np.append(grid, hi)
    grating = c.qpm_order * 2 * np.pi / c.poling_period_um
    vals = _material_mismatch(c.sellmeier, c.temperature_c, pump, grid) - grating
    if vals[-1] == 0.0 and hi == degenerate:
        return degenerate, degenerate
    crossings = np.nonzero(np.signbit(vals[:-1]) != np.signbit(vals[1:]))[0]
    if crossings.size == 0:
        return None
    j = crossings[-1]  # branch nearest degeneracy
    signal = brentq(lambda x: phase_mismatch(c, pump, x), grid[j], grid[j + 1], xtol=1e-12, rtol=1e-15)
    return signal, float(idler_wavelength(pump, signal))


class Degeneracy(NamedTuple):
    temperature: float
    wavelength: float


def min_phasematch_temperature(c: CrystalSpec, pump: float, window=TMIN_WINDOW_C) -> Degeneracy:
    """Temperature at which the pair becomes degenerate (signal = idler = 2 pump)."""
    _check_pump(pump)
    degenerate = 2.0 * pump
    grating = c.qpm_order * 2 * np.pi / c.poling_period_um

    def g(t):
        return float(_material_mismatch(c.sellmeier, t, pump, degenerate)) - grating

    temps = np.arange(window[0], window[1] + 0.5, 1.0)
    vals = [g(t) for t in temps]
    for j in range(len(temps) - 1):
        if vals[j] == 0.0:
            return Degeneracy(float(temps[j]), degenerate)
        if (vals[j] < 0) != (vals[j + 1] < 0):
            t = brentq(g, temps[j], temps[j + 1], xtol=1e-10)
            return Degeneracy(t, degenerate)
    raise ValueError(f"no degeneracy temperature bracketed in [{window[0]}, {window[1]}] C for pump {pump} nm")


def fit_poling_period(points: Sequence[TuningPoint], s: SellmeierSet, qpm_order: int = 1) -> tuple[float, float]:
    """Least-squares poling period over tuning points; returns (period_um, residual).

    The mismatch is linear in the grating vector 2*pi*m/period, so the minimiser
    is the mean material mismatch. Sums use fsum so the result does not depend
    on point order.
    """
    if not points:
        raise ValueError("need at least one tuning point")
    mism = [float(_material_mismatch(s, p.temperature, p.pump_wavelength, p.signal_wavelength)) for p in points]
    grating = math.fsum(mism) / len(mism)
    if not grating > 0:
        raise ValueError("tuning points imply a non-positive grating vector")
    residual = math.fsum((m - grating) ** 2 for m in mism)
    return qpm_order * 2 * math.pi / grating, residual


def tuning_curve(c: CrystalSpec, pump: float, temperatures: Sequence[float]) -> list[TuningPoint]:
    out = []
    for t in temperatures:
        pair = solve_pair_wavelengths(c.at(float(t)), pump)
        if pair is not None:
            out.append(TuningPoint(pump, float(t), *pair))
    return out
