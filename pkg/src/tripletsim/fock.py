"""Four-mode truncated Fock-space model of cascaded down-conversion.

Modes: 0 is the photon that pumps the second crystal, 1 its partner from the
first crystal, 2 and 3 the pair from the second crystal.

    H1 = lambda1 * (alpha a0+ a1+ + conj(alpha) a0 a1)
    H2 = lambda2 * (a0 a2+ a3+ + a0+ a2 a3)
    U  = exp(-i H2) exp(-i H1)
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

N_MODES = 4
DEFAULT_N_MAX = 3
SERIES_TOL = 1e-12
SERIES_MAX_TERMS = 200
PERTURBATIVE_LIMIT = 0.1


class FockBasisState(NamedTuple):
    n0: int
    n1: int
    n2: int
    n3: int


VACUUM = FockBasisState(0, 0, 0, 0)
PAIR = FockBasisState(1, 1, 0, 0)
TRIPLET = FockBasisState(0, 1, 1, 1)


class SeriesConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class CascadeParams:
    lambda1: float
    lambda2: float
    alpha: complex = 1.0

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("coupling strengths must be non-negative")
        if self.lambda1 * abs(self.alpha) > PERTURBATIVE_LIMIT or self.lambda2 > PERTURBATIVE_LIMIT:
            warnings.warn(
                f"couplings outside the perturbative regime "
                f"(lambda1*|alpha|={self.lambda1 * abs(self.alpha):.3g}, lambda2={self.lambda2:.3g})",
                RuntimeWarning,
                stacklevel=3,
            )


@dataclass
class QuantumState:
    amplitudes: dict[FockBasisState, complex]
    n_max: int
    normalized: bool = True
    leakage: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for key in self.amplitudes:
            if len(key) != N_MODES or any(n < 0 or n > self.n_max for n in key):
                raise ValueError(f"basis state {tuple(key)} outside truncation n_max={self.n_max}")

    def amplitude(self, occupations) -> complex:
        return self.amplitudes.get(FockBasisState(*occupations), 0j)

    def norm(self) -> float:
        return math.sqrt(math.fsum(abs(a) ** 2 for a in self.amplitudes.values()))

    def normalize(self) -> "QuantumState":
        """Return a unit-norm copy; never applied implicitly."""
        nrm = self.norm()
        if nrm == 0:
            raise ValueError("cannot normalize the zero state")
        amps = {k: a / nrm for k, a in self.amplitudes.items()}
        return QuantumState(amps, self.n_max, normalized=True, leakage=self.leakage, meta=dict(self.meta))

    def to_json(self) -> dict:
        return {
            "n_max": self.n_max,
            "normalized": self.normalized,
            "leakage": self.leakage,
            "norm": self.norm(),
            "amplitudes": [
                {"state": list(k), "re": a.real, "im": a.imag}
                for k, a in sorted(self.amplitudes.items())
            ],
        }


def apply_first_order_cascade(params: CascadeParams) -> QuantumState:
    """First-order expansion of U acting on vacuum (unnormalized)."""
    a = complex(params.alpha)
    amps = {VACUUM: 1 + 0j}
    pair = -1j * params.lambda1 * a
    triplet = -params.lambda1 * params.lambda2 * a
    if pair != 0:
        amps[PAIR] = pair
    if triplet != 0:
        amps[TRIPLET] = triplet
    return QuantumState(amps, n_max=1, normalized=False)


def triplet_probability(params: CascadeParams) -> float:
    return abs(params.lambda1 * params.lambda2 * complex(params.alpha)) ** 2


# -- exact evolution in the truncated space --------------------------------


def basis(n_max: int) -> list[FockBasisState]:
    return [FockBasisState(*occ) for occ in itertools.product(range(n_max + 1), repeat=N_MODES)]


def _index(occ, n_max: int) -> int:
    d = n_max + 1
    return ((occ[0] * d + occ[1]) * d + occ[2]) * d + occ[3]


def _hamiltonians(params: CascadeParams, n_max: int) -> tuple[np.ndarray, np.ndarray]:
    states = basis(n_max)
    dim = len(states)
    h1 = np.zeros((dim, dim), dtype=complex)
    h2 = np.zeros((dim, dim), dtype=complex)
    a = complex(params.alpha)
    for col, (n0, n1, n2, n3) in enumerate(states):
        # a0+ a1+
        if n0 < n_max and n1 < n_max:
            row = _index((n0 + 1, n1 + 1, n2, n3), n_max)
            amp = params.lambda1 * a * math.sqrt((n0 + 1) * (n1 + 1))
            h1[row, col] += amp
            h1[col, row] += amp.conjugate()
        # a0 a2+ a3+
        if n0 > 0 and n2 < n_max and n3 < n_max:
            row = _index((n0 - 1, n1, n2 + 1, n3 + 1), n_max)
            amp = params.lambda2 * math.sqrt(n0 * (n2 + 1) * (n3 + 1))
            h2[row, col] += amp
            h2[col, row] += amp
    return h1, h2


def expm_apply(h: np.ndarray, psi: np.ndarray, tol: float = SERIES_TOL, max_terms: int = SERIES_MAX_TERMS) -> np.ndarray:
    """exp(-i h) psi by a scaled Taylor series.

    The generator is split into s = ceil(||h||_1) steps so each series has a
    step norm <= 1; a step stops once the newest term's sup-norm drops below
    ``tol``.
    """
    scale = max(1, math.ceil(np.abs(h).sum(axis=0).max()))
    step = (-1j / scale) * h
    out = psi.astype(complex)
    for _ in range(scale):
        term = out
        acc = out.copy()
        for k in range(1, max_terms + 1):
            term = step @ term / k
            acc += term
            if np.abs(term).max() < tol:
                break
        else:
            raise SeriesConvergenceError(f"Taylor series did not reach tol={tol} in {max_terms} terms")
        out = acc
    return out


def evolve_exact(params: CascadeParams, n_max: int = DEFAULT_N_MAX) -> QuantumState:
    if n_max < 2:
        raise ValueError("n_max must be at least 2")
    h1, h2 = _hamiltonians(params, n_max)
    psi = np.zeros(h1.shape[0], dtype=complex)
    psi[0] = 1.0
    psi = expm_apply(h2, expm_apply(h1, psi))
    states = basis(n_max)
    # population parked on the truncation edge stands in for what was cut off
    edge = [i for i, occ in enumerate(states) if max(occ) == n_max]
    leakage = float(np.sum(np.abs(psi[edge]) ** 2))
    amps = {s: complex(psi[i]) for i, s in enumerate(states) if psi[i] != 0}
    return QuantumState(amps, n_max=n_max, normalized=True, leakage=leakage)
