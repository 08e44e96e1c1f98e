import math
import warnings

import numpy as np
import pytest

from tripletsim.fock import (
    PAIR,
    TRIPLET,
    VACUUM,
    CascadeParams,
    FockBasisState,
    QuantumState,
    SeriesConvergenceError,
    apply_first_order_cascade,
    basis,
    evolve_exact,
    expm_apply,
    triplet_probability,
)


def test_zero_lambda1_gives_vacuum_only():
    s = apply_first_order_cascade(CascadeParams(0.0, 0.01, 1.0))
    assert s.amplitudes == {VACUUM: 1 + 0j}
    assert s.amplitude(PAIR) == 0 and s.amplitude(TRIPLET) == 0


def test_first_order_amplitudes():
    s = apply_first_order_cascade(CascadeParams(1e-3, 1e-2, 1.0))
    assert s.amplitude(TRIPLET) == pytest.approx(-1e-5, rel=1e-15)
    assert s.amplitude(PAIR) == pytest.approx(-1e-3j, rel=1e-15)
    assert s.amplitude(VACUUM) == 1
    assert not s.normalized


def test_first_order_carries_pump_phase():
    alpha = 0.3 * np.exp(0.7j)
    s = apply_first_order_cascade(CascadeParams(0.02, 0.05, alpha))
    assert s.amplitude(PAIR) == pytest.approx(-1j * 0.02 * alpha)
    assert s.amplitude(TRIPLET) == pytest.approx(-0.02 * 0.05 * alpha)


def test_negative_coupling_rejected():
    with pytest.raises(ValueError):
        CascadeParams(-1e-3, 1e-2)
    with pytest.raises(ValueError):
        CascadeParams(1e-3, -1e-2)


def test_warns_outside_perturbative_regime():
    with pytest.warns(RuntimeWarning):
        CascadeParams(0.2, 0.01)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        CascadeParams(0.01, 0.01)


def test_exact_matches_first_order():
    p = CascadeParams(1e-3, 1e-2, 1.0)
    exact, first = evolve_exact(p, 3), apply_first_order_cascade(p)
    for key in (PAIR, TRIPLET):
        rel = abs(exact.amplitude(key) - first.amplitude(key)) / abs(first.amplitude(key))
        assert rel < 1e-4


def test_exact_zero_couplings_is_identity():
    s = evolve_exact(CascadeParams(0.0, 0.0), 3)
    assert s.amplitudes == {VACUUM: 1 + 0j}
    assert s.norm() == 1.0


def test_exact_norm_preserved():
    s = evolve_exact(CascadeParams(1e-3, 1e-2), 3)
    assert abs(s.norm() - 1) < 1e-8
    assert 1 - s.leakage <= s.norm() ** 2 <= 1 + 1e-12


def test_truncation_convergence():
    p = CascadeParams(1e-2, 1e-2)
    a3 = evolve_exact(p, 3).amplitude(TRIPLET)
    a4 = evolve_exact(p, 4).amplitude(TRIPLET)
    assert abs(a4 - a3) / abs(a4) < 1e-6


def test_leakage_decreases_with_n_max():
    p = CascadeParams(0.05, 0.05)
    leaks = [evolve_exact(p, n).leakage for n in (2, 3, 4, 5)]
    assert all(b < a for a, b in zip(leaks, leaks[1:]))


def test_n_max_below_two_rejected():
    with pytest.raises(ValueError):
        evolve_exact(CascadeParams(1e-3, 1e-2), 1)


def test_series_cap_reported():
    h = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
    with pytest.raises(SeriesConvergenceError):
        expm_apply(h, np.array([1.0, 0.0], dtype=complex), max_terms=2)


def test_expm_apply_against_closed_form():
    # exp(-i t X) |0> = cos t |0> - i sin t |1>
    t = 2.7
    h = np.array([[0.0, t], [t, 0.0]], dtype=complex)
    out = expm_apply(h, np.array([1.0, 0.0], dtype=complex))
    assert out == pytest.approx([math.cos(t), -1j * math.sin(t)], abs=1e-12)


def test_triplet_probability_values():
    assert triplet_probability(CascadeParams(1e-3, 1e-2, 1.0)) == pytest.approx(1e-10, rel=1e-14)
    assert triplet_probability(CascadeParams(1e-3, 0.0, 1.0)) == 0.0


def test_triplet_probability_linear_in_intensity():
    rng = np.random.default_rng(7)
    for _ in range(10):
        a, b = rng.uniform(0.1, 5.0, 2)
        pa = triplet_probability(CascadeParams(1e-3, 1e-2, a))
        pb = triplet_probability(CascadeParams(1e-3, 1e-2, b))
        assert pb / pa == pytest.approx(b**2 / a**2, rel=1e-12)


def test_agreement_is_third_order():
    # (exact - first order) on pair and triplet amplitudes shrinks like scale**3
    ratios = []
    for scale in (1e-3, 2e-3, 4e-3, 8e-3, 1.6e-2):
        p = CascadeParams(scale, 2 * scale, 1.0)
        exact, first = evolve_exact(p, 3), apply_first_order_cascade(p)
        err = max(abs(exact.amplitude(k) - first.amplitude(k)) for k in (PAIR, TRIPLET))
        ratios.append(err / (3 * scale) ** 3)
    c = max(ratios)
    assert c < 1.0
    assert max(ratios) / min(ratios) < 1.5


def test_basis_and_state_validation():
    b = basis(2)
    assert len(b) == 3**4 and len(set(b)) == len(b)
    with pytest.raises(ValueError):
        QuantumState({FockBasisState(0, 0, 0, 4): 1.0}, n_max=3)


def test_normalize_is_explicit():
    s = apply_first_order_cascade(CascadeParams(0.05, 0.05))
    assert s.norm() > 1
    n = s.normalize()
    assert n.normalized and n.norm() == pytest.approx(1.0, abs=1e-15)
    assert not s.normalized
