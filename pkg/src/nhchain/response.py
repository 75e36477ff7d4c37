"""Linear-response steady state: reflection matrix, amplitudes, moments.

Everything here lives in the quadratic (weak-drive) regime where the complex
site amplitudes x0 = -H_NH^{-1} f determine all normal-ordered moments.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .chain import build_nh_hamiltonian, dissipation_profile
from .errors import SingularMatrixError, ValidationError

__all__ = [
    "ReflectionMap",
    "SteadyAmplitudes",
    "gamma_matrix",
    "steady_amplitudes",
    "output_fields",
    "reflection_map",
    "normal_ordered_expectation",
]

_COND_WARN = 1e12


@dataclass(frozen=True)
class SteadyAmplitudes:
    """Coherent field amplitude per site; x1 is exactly conj(x0)."""

    x0: np.ndarray

    @property
    def x1(self):
        return np.conj(self.x0)


@dataclass(frozen=True)
class ReflectionMap:
    """|Gamma_ii| tabulated on (drive frequency, site). Sites are 1-based."""

    omegas: np.ndarray
    sites: np.ndarray
    values: np.ndarray  # complex, shape (len(omegas), len(sites))

    def magnitude(self):
        return np.abs(self.values)


def _nh_at(spec, omega):
    return build_nh_hamiltonian(replace(spec, omega_drive=float(omega)))


def _factorize(h_nh):
    cond = np.linalg.cond(h_nh)
    if not np.isfinite(cond):
        raise SingularMatrixError("non-Hermitian Hamiltonian is singular")
    if cond > _COND_WARN:
        warnings.warn(
            f"ill-conditioned solve (cond ~ {cond:.2e}); results may be inaccurate",
            RuntimeWarning,
            stacklevel=3,
        )
    try:
        return lu_factor(h_nh)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - cond catches first
        raise SingularMatrixError(str(exc)) from exc


def gamma_matrix(spec, omega):
    """Reflection/transmission matrix i sqrt(K) H_NH^{-1} sqrt(K) + I at the
    probe frequency omega, with K = diag(kappa)."""
    h_nh = _nh_at(spec, omega)
    sqrt_k = np.sqrt(spec.kappa)
    lu = _factorize(h_nh)
    inv_sqrt_k = lu_solve(lu, np.diag(sqrt_k).astype(complex))
    return 1j * (sqrt_k[:, None] * inv_sqrt_k) + np.eye(spec.length)


def steady_amplitudes(spec, omega):
    """x0 = -H_NH^{-1} f for the drive amplitudes carried by the spec."""
    h_nh = _nh_at(spec, omega)
    lu = _factorize(h_nh)
    x0 = -lu_solve(lu, spec.drive.astype(complex))
    return SteadyAmplitudes(x0=x0)


def output_fields(spec, omega):
    """Input and output field amplitudes (alpha_in, alpha_out).

    alpha_in is recovered from f = -i sqrt(kappa) alpha_in; sites with
    kappa = 0 must be undriven.
    """
    kappa = spec.kappa
    undriven = kappa == 0
    if np.any(undriven & (spec.drive != 0)):
        raise ValidationError("driven sites need a nonzero measurement coupling")
    alpha_in = np.zeros(spec.length, dtype=complex)
    alpha_in[~undriven] = 1j * spec.drive[~undriven] / np.sqrt(kappa[~undriven])
    amps = steady_amplitudes(spec, omega)
    alpha_out = alpha_in + np.sqrt(kappa) * amps.x0
    return alpha_in, alpha_out


def reflection_map(spec, omegas, pattern=None):
    """|Gamma_ii(omega)| per site over a frequency grid.

    If a DissipationPattern is given, the spec's tunable losses are replaced so
    that the total loss follows the pattern (gamma_i = max(2 g_i - kappa_i, 0))
    before the sweep.
    """
    if pattern is not None:
        g = dissipation_profile(pattern, spec.length)
        spec = replace(spec, gamma=np.maximum(2.0 * g - spec.kappa, 0.0))
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    values = np.empty((omegas.size, spec.length), dtype=complex)
    for i, w in enumerate(omegas):
        values[i] = np.diag(gamma_matrix(spec, w))
    return ReflectionMap(
        omegas=omegas, sites=np.arange(1, spec.length + 1), values=values
    )


def normal_ordered_expectation(amplitudes, creation_sites, annihilation_sites):
    """<a_{i1}^dag ... a_{iN}^dag a_{j1} ... a_{jM}> in the coherent steady
    state: the product of conjugated and plain amplitudes (0-based sites)."""
    x0 = amplitudes.x0
    result = 1.0 + 0.0j
    for i in creation_sites:
        result *= np.conj(x0[i])
    for j in annihilation_sites:
        result *= x0[j]
    return result
