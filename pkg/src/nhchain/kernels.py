"""Hot numeric kernels: Berry curvature of the effective 2D Hamiltonian.

The jitted path is the default. Setting the environment variable
NHCHAIN_NO_NUMBA=1 (or having no numba installed) selects a vectorized
pure-numpy implementation of identical math; `benchmarks/bench_curvature.py`
compares the two.
"""

from __future__ import annotations

import os

import numpy as np

_FLAG = os.environ.get("NHCHAIN_NO_NUMBA", "").strip().lower()
_DISABLED = _FLAG in ("1", "true", "yes", "on")

try:
    if _DISABLED:
        raise ImportError("numba disabled by NHCHAIN_NO_NUMBA")
    from numba import njit

    NUMBA_ENABLED = True
except ImportError:
    NUMBA_ENABLED = False

    def njit(*args, **kwargs):
        def wrap(func):
            return func

        if args and callable(args[0]):
            return args[0]
        return wrap


def bloch_nh_hamiltonian(g, hopping, k):
    """Supercell Bloch Hamiltonian at resonance: tridiagonal - i diag(g),
    with the cell-boundary hopping carrying exp(-ik) in the upper corner."""
    n = len(g)
    h = np.zeros((n, n), dtype=np.complex128)
    for j in range(n):
        h[j, j] = -1j * g[j]
    for j in range(n - 1):
        h[j, j + 1] = hopping[j]
        h[j + 1, j] = hopping[j]
    h[0, n - 1] += hopping[n - 1] * np.exp(-1j * k)
    h[n - 1, 0] += hopping[n - 1] * np.exp(1j * k)
    return h


def effective_hamiltonian_matrix(g, hopping, k, eta):
    """eta * S - i S H(k) with S the alternating-sign diagonal; Hermitian."""
    n = len(g)
    h = bloch_nh_hamiltonian(g, hopping, k)
    out = np.empty((n, n), dtype=np.complex128)
    for i in range(n):
        s = 1.0 if i % 2 == 0 else -1.0
        for j in range(n):
            out[i, j] = -1j * s * h[i, j]
        out[i, i] += eta * s
    return out


_effective_hamiltonian_nb = njit(cache=True)(effective_hamiltonian_matrix)
if NUMBA_ENABLED:
    bloch_nh_hamiltonian = njit(cache=True)(bloch_nh_hamiltonian)


def curvature_from_eigensystem(energies, states, g, hopping, k, half):
    """Summed lower-band Berry curvature from an eigensystem of H_eff(k, eta).

    Uses the analytic derivatives: d/dk touches only the two boundary entries,
    d/deta is the alternating-sign diagonal. Gauge invariant: per-eigenvector
    rephasing cancels between the two matrix elements.
    """
    n = len(g)
    jb = hopping[n - 1]
    t = -jb * np.exp(-1j * k)  # dH_eff/dk entry [0, n-1]; [n-1, 0] is its conjugate
    omega = 0.0
    for a in range(half):
        for b in range(half, n):
            dk_ab = (
                np.conj(states[0, a]) * t * states[n - 1, b]
                + np.conj(states[n - 1, a]) * np.conj(t) * states[0, b]
            )
            de_ba = 0.0 + 0.0j
            for j in range(n):
                s = 1.0 if j % 2 == 0 else -1.0
                de_ba += np.conj(states[j, b]) * s * states[j, a]
            denom = energies[a] - energies[b]
            omega += (2.0 * dk_ab * de_ba / (denom * denom)).imag
    return omega


_curvature_from_eigensystem_nb = njit(cache=True)(curvature_from_eigensystem)


@njit(cache=True, nogil=True)
def _curvature_points_numba(g, hopping, k_pts, eta_pts):
    npts = len(k_pts)
    half = len(g) // 2
    omega = np.empty(npts)
    gaps = np.empty(npts)
    for i in range(npts):
        h = _effective_hamiltonian_nb(g, hopping, k_pts[i], eta_pts[i])
        energies, states = np.linalg.eigh(h)
        gaps[i] = energies[half] - energies[half - 1]
        omega[i] = _curvature_from_eigensystem_nb(
            energies, states, g, hopping, k_pts[i], half
        )
    return omega, gaps


def _curvature_points_numpy(g, hopping, k_pts, eta_pts):
    n = len(g)
    half = n // 2
    jb = hopping[n - 1]
    sign = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    npts = k_pts.size

    h = np.zeros((npts, n, n), dtype=np.complex128)
    idx = np.arange(n)
    h[:, idx, idx] = -1j * g[None, :]
    off = np.arange(n - 1)
    h[:, off, off + 1] = hopping[None, :-1]
    h[:, off + 1, off] = hopping[None, :-1]
    h[:, 0, n - 1] += jb * np.exp(-1j * k_pts)
    h[:, n - 1, 0] += jb * np.exp(1j * k_pts)
    heff = -1j * sign[None, :, None] * h
    heff[:, idx, idx] += eta_pts[:, None] * sign[None, :]

    energies, states = np.linalg.eigh(heff)
    gaps = energies[:, half] - energies[:, half - 1]

    t = -jb * np.exp(-1j * k_pts)
    lo = states[:, :, :half]
    hi = states[:, :, half:]
    # <a| dH/dk |b>: only the two corner entries contribute
    dk = (
        np.conj(lo[:, 0, :])[:, :, None] * t[:, None, None] * hi[:, n - 1, :][:, None, :]
        + np.conj(lo[:, n - 1, :])[:, :, None]
        * np.conj(t)[:, None, None]
        * hi[:, 0, :][:, None, :]
    )
    # <b| S |a>
    de = np.einsum("gjb,j,gja->gba", np.conj(hi), sign, lo)
    denom = energies[:, :half][:, :, None] - energies[:, half:][:, None, :]
    omega = (2.0 * dk * np.transpose(de, (0, 2, 1)) / denom**2).imag.sum(axis=(1, 2))
    return omega, gaps


_NUMPY_BATCH = 16384  # bound the (npts, n, n) workspace of the fallback


def curvature_points(g, hopping, k_pts, eta_pts):
    """Berry curvature and mid-spectrum gap at each (k, eta) point.

    Returns (omega, gaps), both arrays of len(k_pts).
    """
    g = np.ascontiguousarray(g, dtype=np.float64)
    hopping = np.ascontiguousarray(hopping, dtype=np.float64)
    k_pts = np.ascontiguousarray(k_pts, dtype=np.float64)
    eta_pts = np.ascontiguousarray(eta_pts, dtype=np.float64)
    if NUMBA_ENABLED:
        return _curvature_points_numba(g, hopping, k_pts, eta_pts)
    if k_pts.size <= _NUMPY_BATCH:
        return _curvature_points_numpy(g, hopping, k_pts, eta_pts)
    omega = np.empty(k_pts.size)
    gaps = np.empty(k_pts.size)
    for lo in range(0, k_pts.size, _NUMPY_BATCH):
        hi = min(lo + _NUMPY_BATCH, k_pts.size)
        omega[lo:hi], gaps[lo:hi] = _curvature_points_numpy(
            g, hopping, k_pts[lo:hi], eta_pts[lo:hi]
        )
    return omega, gaps
