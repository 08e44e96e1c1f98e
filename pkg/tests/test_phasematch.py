import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tripletsim.phasematch import (
    CrystalSpec,
    PpktpCalibration,
    SellmeierSet,
    TuningPoint,
    fit_poling_period,
    idler_wavelength,
    min_phasematch_temperature,
    phase_mismatch,
    ppktp_output_wavelength,
    refractive_index,
    solve_pair_wavelengths,
    tuning_curve,
)

JUNDT = SellmeierSet.bundled()
# independent 40-digit evaluation of the congruent-LN extraordinary formula
N_1550_25C = 2.1378801256208528


@pytest.fixture(scope="module")
def crystal(loaded):
    return loaded.crystal


def test_index_pin():
    assert refractive_index(JUNDT, 1550.0, 25.0) == pytest.approx(N_1550_25C, abs=1e-13)


def test_index_normal_dispersion():
    n = refractive_index(JUNDT, np.linspace(1400, 1700, 301), 60.0)
    assert np.all(np.diff(n) < 0)


def test_index_is_pure():
    assert refractive_index(JUNDT, 1510.0, 60.0) == refractive_index(JUNDT, 1510.0, 60.0)


@pytest.mark.parametrize("name", ["congruent_ln_jundt", "mgo_ln_gayer"])
def test_index_finite_above_one_on_domain(name):
    s = SellmeierSet.bundled(name)
    lam = np.linspace(400, 2000, 801)
    for t in (20.0, 80.0, 140.0, 200.0):
        n = refractive_index(s, lam, t)
        assert np.all(np.isfinite(n)) and np.all(n > 1)


def test_index_domain_errors():
    with pytest.raises(ValueError):
        refractive_index(JUNDT, 300.0, 25.0)
    with pytest.raises(ValueError):
        refractive_index(JUNDT, 1550.0, 250.0)


def test_unknown_sellmeier_set():
    with pytest.raises(KeyError):
        SellmeierSet.bundled("nope")


def test_idler_from_energy_conservation():
    assert idler_wavelength(775.0, 1510.0) == pytest.approx(1592.2, abs=0.05)


def test_phase_mismatch_rejects_unphysical(crystal):
    with pytest.raises(ValueError):
        phase_mismatch(crystal, 776.0, 770.0)


def test_phase_mismatch_continuous_in_temperature(crystal):
    temps = np.linspace(30, 90, 601)
    dk = np.array([phase_mismatch(crystal.at(t), 776.0, 1510.0) for t in temps])
    assert np.max(np.abs(np.diff(dk))) < 1e-3


def test_setting_logic(crystal):
    a = solve_pair_wavelengths(crystal.at(60.0), 776.0)
    assert a is not None and 1495 <= a[0] <= 1525 and 1575 <= a[1] <= 1605
    assert solve_pair_wavelengths(crystal.at(50.0), 776.0) is None
    assert solve_pair_wavelengths(crystal.at(50.0), 775.4) is not None


def test_roots_are_consistent(crystal):
    for pump in (775.4, 776.0):
        for t in (60.0, 62.0, 66.0):
            s, i = solve_pair_wavelengths(crystal.at(t), pump)
            assert s < i
            assert abs(phase_mismatch(crystal.at(t), pump, s)) < 1e-9
            assert abs(1 / pump - (1 / s + 1 / i)) < 1e-6 / pump


def test_pump_band_enforced(crystal):
    with pytest.raises(ValueError):
        solve_pair_wavelengths(crystal, 790.0)


def test_degeneracy(crystal):
    d = min_phasematch_temperature(crystal, 776.0)
    assert d.wavelength == pytest.approx(2 * 776.0, abs=1e-3)
    assert abs(phase_mismatch(crystal.at(d.temperature), 776.0, d.wavelength - 1e-9)) < 1e-6


def test_tmin_ordering(crystal):
    t_c = min_phasematch_temperature(crystal, 775.4).temperature
    t_a = min_phasematch_temperature(crystal, 776.0).temperature
    assert t_c < 50.0 <= t_a < 60.0


def test_tmin_monotone_in_pump(crystal):
    temps = [min_phasematch_temperature(crystal, p).temperature for p in np.linspace(775.0, 776.5, 16)]
    assert all(b > a for a, b in zip(temps, temps[1:]))


def test_tmin_not_bracketed(crystal):
    with pytest.raises(ValueError):
        min_phasematch_temperature(crystal.at(60.0), 776.0, window=(20.0, 40.0))


def test_existence_iff_above_tmin(crystal):
    for pump in (775.4, 776.0):
        t_min = min_phasematch_temperature(crystal, pump).temperature
        assert solve_pair_wavelengths(crystal.at(t_min - 0.01), pump) is None
        assert solve_pair_wavelengths(crystal.at(t_min + 0.01), pump) is not None


def test_separation_grows_with_temperature(crystal):
    curve = tuning_curve(crystal, 776.0, np.arange(58.5, 90.0, 0.5))
    sep = [p.idler_wavelength - p.signal_wavelength for p in curve]
    assert len(sep) > 50 and all(b > a for a, b in zip(sep, sep[1:]))


def test_fit_round_trip():
    true = CrystalSpec(18.9, 30.0, 60.0, JUNDT)
    points = [TuningPoint(775.7, t, *solve_pair_wavelengths(true.at(t), 775.7)) for t in (60.0, 64.0, 68.0)]
    period, residual = fit_poling_period(points, JUNDT)
    assert period == pytest.approx(18.9, abs=1e-3)
    assert residual < 1e-12


def test_fit_single_point_exact():
    period, residual = fit_poling_period([TuningPoint.from_signal(776.0, 60.0, 1510.0)], JUNDT)
    assert residual == 0.0
    c = CrystalSpec(period, 30.0, 60.0, JUNDT)
    assert abs(phase_mismatch(c, 776.0, 1510.0)) < 1e-9


def test_fit_needs_points():
    with pytest.raises(ValueError):
        fit_poling_period([], JUNDT)


@settings(max_examples=25, deadline=None)
@given(st.permutations(range(4)))
def test_fit_permutation_invariant(order):
    points = [TuningPoint.from_signal(p, t, s) for p, t, s in
              [(776.0, 60.0, 1510.0), (776.0, 70.0, 1452.0), (775.4, 55.0, 1500.0), (775.4, 65.0, 1460.0)]]
    base = fit_poling_period(points, JUNDT)
    assert fit_poling_period([points[i] for i in order], JUNDT) == base


def test_tuning_point_invariants():
    with pytest.raises(ValueError):
        TuningPoint(776.0, 60.0, 1600.0, 1500.0)
    with pytest.raises(ValueError):
        TuningPoint(776.0, 60.0, 1510.0, 1590.0)
    p = TuningPoint.from_signal(776.0, 60.0, 1600.0)
    assert p.signal_wavelength < p.idler_wavelength


def test_crystal_invariants():
    with pytest.raises(ValueError):
        CrystalSpec(0.0, 30.0, 60.0, JUNDT)
    with pytest.raises(ValueError):
        CrystalSpec(19.0, 30.0, 60.0, JUNDT, qpm_order=2)


def test_ppktp_calibration():
    cal = PpktpCalibration(((43.6, 776.0), (40.8, 775.4)))
    assert ppktp_output_wavelength(cal, 43.6) == pytest.approx(776.0, abs=1e-12)
    assert ppktp_output_wavelength(cal, 40.8) == pytest.approx(775.4, abs=1e-12)
    assert ppktp_output_wavelength(cal, 42.2) == pytest.approx(775.7, abs=1e-12)
    with pytest.raises(ValueError):
        ppktp_output_wavelength(cal, 30.0)
    with pytest.raises(ValueError):
        PpktpCalibration(((40.0, 776.0), (40.0, 775.4)))
