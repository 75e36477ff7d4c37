"""Chern number of the dissipative chain via the effective 2D Hermitian problem.

The non-Hermitian Bloch supercell H(k) embeds into the Hermitian family
H_eff(k, eta) = eta S - i S H(k), where S is the alternating-sign diagonal.
The invariant is the integral of the lower-half-spectrum Berry curvature over
k in [0, 2pi) and eta over the whole real line, divided by 2 pi.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .chain import DissipationPattern, dissipation_profile, disorder_draws
from .errors import DegeneratePointError, GaplessModelError, ValidationError

__all__ = [
    "BlochSupercell",
    "IntegrationGrid",
    "ChernResult",
    "effective_hamiltonian",
    "berry_curvature",
    "chern_number",
    "disorder_phase_diagram",
    "supercell_from_pattern",
    "disordered_supercell",
]


@dataclass(frozen=True)
class BlochSupercell:
    """Periodic supercell at resonance: loss profile g and hoppings J.

    The last hopping entry is the cell-boundary bond that carries the Bloch
    phase. Even cell size is required by the alternating chiral operator.
    """

    g: np.ndarray
    hopping: np.ndarray

    def __post_init__(self):
        g = np.array(self.g, dtype=float, copy=True)
        j = np.array(self.hopping, dtype=float, copy=True)
        if g.ndim != 1 or g.size < 2 or g.size % 2 != 0:
            raise ValidationError("cell size must be a positive even integer")
        if j.shape != g.shape:
            raise ValidationError("need one hopping per site (last = cell boundary)")
        if np.any(g < 0):
            raise ValidationError("dissipations must be non-negative")
        g.flags.writeable = False
        j.flags.writeable = False
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "hopping", j)

    @property
    def size(self):
        return self.g.size

    def gap_tolerance(self):
        return 1e-8 * (self.g.max() + 4.0 * np.abs(self.hopping).max())

    def default_eta_max(self):
        return 10.0 * (self.g.max() + 4.0 * np.abs(self.hopping).max())


def supercell_from_pattern(pattern, cell_size, hopping=1.0):
    if cell_size % 4 != 0:
        raise ValidationError("cell size must be a multiple of the 4-site pattern")
    g = dissipation_profile(pattern, cell_size)
    return BlochSupercell(g=g, hopping=np.full(cell_size, float(hopping)))


def disordered_supercell(cell, delta_j, delta_g, seed, index):
    """Per-site uniform disorder inside the supercell, deterministic in (seed, index)."""
    u, v = disorder_draws(seed, index, cell.size, cell.size)
    return BlochSupercell(
        g=np.maximum(cell.g + delta_g * v, 0.0),
        hopping=cell.hopping + delta_j * u,
    )


@dataclass(frozen=True)
class IntegrationGrid:
    """Quadrature parameters for the (k, eta) integral.

    The eta axis is compactified through eta = alpha * tan(s), so a uniform
    s-grid concentrates points in the band region |eta| ~ alpha while still
    reaching the cutoff eta_max. The base n_k x n_eta midpoint mesh is then
    refined adaptively: any cell whose mid-spectrum gap is small compared to
    the cell extent is subdivided until the curvature peak it contains is
    resolved (the gap is Lipschitz in (k, eta), so an unresolved
    near-degeneracy cannot hide inside an accepted cell). With
    refinement_levels >= 2 the whole integral is repeated from a doubled base
    mesh and the two values must agree for the convergence flag.
    """

    n_k: int = 64
    n_eta: int = 64
    eta_max: float | None = None
    refinement_levels: int = 2
    split_factor: float = 2.0
    max_depth: int = 14
    max_evaluations: int = 4_000_000

    def __post_init__(self):
        if self.n_k < 8 or self.n_eta < 8:
            raise ValidationError("need at least 8 quadrature points per axis")
        if self.refinement_levels < 1:
            raise ValidationError("refinement_levels must be >= 1")
        if self.eta_max is not None and self.eta_max <= 0:
            raise ValidationError("eta_max must be positive")
        if self.split_factor < 1.0:
            raise ValidationError("split_factor must be >= 1")

    def resolve_eta_max(self, cell):
        if self.eta_max is not None:
            if self.eta_max <= cell.g.max() + 2.0 * np.abs(cell.hopping).max():
                raise ValidationError("eta_max must exceed max(g) + 2 max(J)")
            return float(self.eta_max)
        return cell.default_eta_max()


@dataclass(frozen=True)
class ChernResult:
    raw: float
    rounded: int
    gap_min: float
    converged: bool
    estimated_error: float


def effective_hamiltonian(cell, k, eta):
    """H_eff(k, eta) = eta S - i S H(k); Hermitian whenever the chiral
    symmetry of the supercell holds (even size, real hoppings, resonance)."""
    return kernels.effective_hamiltonian_matrix(cell.g, cell.hopping, float(k), float(eta))


def berry_curvature(cell, k, eta, gap_tolerance=None):
    """Lower-half-spectrum Berry curvature at a single (k, eta) point."""
    tol = cell.gap_tolerance() if gap_tolerance is None else gap_tolerance
    h = effective_hamiltonian(cell, k, eta)
    energies, states = np.linalg.eigh(h)
    half = cell.size // 2
    gap = energies[half] - energies[half - 1]
    if gap < tol:
        raise DegeneratePointError(k, eta, gap)
    return kernels.curvature_from_eigensystem(
        energies, states, cell.g, cell.hopping, float(k), half
    )


def _integrate_adaptive(cell, n_k, n_eta, eta_max, alpha, grid, gap_tol):
    """Adaptive midpoint quadrature of the curvature over [0, 2pi) x R.

    Works in (k, s) coordinates with eta = alpha tan(s). A cell is subdivided
    while its center gap is below split_factor * (its extent in k times the
    boundary hopping + its extent in eta); eigenvalue perturbation bounds make
    the gap 1-Lipschitz in eta and J_b-Lipschitz in k, so accepted cells are
    certified smooth on their own scale. Returns (total, tail, gap_min,
    refinement_change).
    """
    jb = abs(cell.hopping[-1])
    s_max = np.arctan(eta_max / alpha)
    gap_ceiling = 2.0 * (cell.g.max() + 4.0 * np.abs(cell.hopping).max())

    hk = np.pi / n_k
    hs = s_max / n_eta
    ck, cs = np.meshgrid(
        (2 * np.arange(n_k) + 1) * hk,
        -s_max + (2 * np.arange(n_eta) + 1) * hs,
        indexing="ij",
    )
    ck = ck.ravel()
    cs = cs.ravel()
    chk = np.full(ck.size, hk)
    chs = np.full(cs.size, hs)

    def weight(s, half_s):
        return alpha / np.cos(s) ** 2 * (2.0 * half_s)

    omega, gaps = kernels.curvature_points(cell.g, cell.hopping, ck, alpha * np.tan(cs))
    values = omega * weight(cs, chs) * (2.0 * chk)
    outer = np.abs(alpha * np.tan(cs)) > 0.5 * eta_max

    total = 0.0
    tail = 0.0
    gap_min = float(gaps.min())
    change = 0.0
    evaluations = ck.size

    for _depth in range(grid.max_depth + 1):
        eta_extent = weight(cs, chs)
        split = (gaps < grid.split_factor * (jb * 2.0 * chk + eta_extent)) & (
            gaps < gap_ceiling
        )
        keep = ~split
        total += float(values[keep].sum())
        tail += float(np.abs(values[keep & outer]).sum())
        if not split.any():
            break
        if _depth == grid.max_depth or evaluations > grid.max_evaluations:
            raise GaplessModelError(
                f"unresolved near-degeneracy (gap {gaps[split].min():.3e}) after "
                f"{evaluations} evaluations; the model is gapless or nearly so"
            )
        pk, ps = ck[split], cs[split]
        phk, phs = chk[split], chs[split]
        parent_vals = values[split]
        parent_outer = outer[split]
        # 2x2 children midpoints
        ck = np.concatenate([pk - phk / 2, pk + phk / 2, pk - phk / 2, pk + phk / 2])
        cs = np.concatenate([ps - phs / 2, ps - phs / 2, ps + phs / 2, ps + phs / 2])
        chk = np.tile(phk / 2, 4)
        chs = np.tile(phs / 2, 4)
        outer = np.tile(parent_outer, 4)
        omega, gaps = kernels.curvature_points(
            cell.g, cell.hopping, ck, alpha * np.tan(cs)
        )
        evaluations += ck.size
        values = omega * weight(cs, chs) * (2.0 * chk)
        child_sum = values.reshape(4, -1).sum(axis=0)
        change = float(np.abs(child_sum - parent_vals).sum())
        gap_min = min(gap_min, float(gaps.min()))
        if gap_min < gap_tol:
            raise GaplessModelError(
                f"mid-spectrum gap {gap_min:.3e} below tolerance {gap_tol:.3e}"
            )

    return (
        total / (2.0 * np.pi),
        tail / (2.0 * np.pi),
        gap_min,
        change / (2.0 * np.pi),
    )


def chern_number(cell, grid=None, gap_tolerance=None):
    """Quadrature of the Berry curvature; raises GaplessModelError on a
    mid-spectrum degeneracy anywhere on the integration domain (expected
    exactly at the pattern transition, where the bulk gap closes)."""
    if grid is None:
        grid = IntegrationGrid()
    tol = cell.gap_tolerance() if gap_tolerance is None else gap_tolerance
    eta_max = grid.resolve_eta_max(cell)
    alpha = cell.g.max() / 2.0 + np.abs(cell.hopping).max()

    values = []
    tail = 0.0
    gap_min = np.inf
    change = np.inf
    for level in range(grid.refinement_levels):
        total, tail, gap, change = _integrate_adaptive(
            cell, grid.n_k * 2**level, grid.n_eta * 2**level, eta_max, alpha, grid, tol
        )
        gap_min = min(gap_min, gap)
        values.append(total)

    raw = values[-1]
    level_change = abs(values[-1] - values[-2]) if len(values) > 1 else change
    estimated_error = level_change + tail
    rounded = int(np.rint(raw))
    converged = (
        level_change <= 0.02 and tail < 0.01 and abs(raw - rounded) <= 0.05
    )
    return ChernResult(
        raw=raw,
        rounded=rounded,
        gap_min=float(gap_min),
        converged=bool(converged),
        estimated_error=float(estimated_error),
    )


def _one_disorder_point(args):
    cell, delta_j, delta_g, seed, index, grid = args
    dcell = disordered_supercell(cell, delta_j, delta_g, seed, index)
    try:
        return index, chern_number(dcell, grid)
    except GaplessModelError:
        return index, None


def disorder_phase_diagram(x_values, pattern, dis, cell_size, grid=None, map_fn=map):
    """Disorder-averaged invariant per interpolation parameter x.

    Per x: `dis.realizations` disordered supercells are built (the same
    counter-based draws are reused across x values), the rounded invariant is
    averaged over the converged gapped realizations, and gapless or
    non-converged realizations are reported as a fraction. `map_fn` lets the
    caller supply a parallel map; results do not depend on evaluation order.

    Returns a list of dict rows with keys x, mean_C, std_C, frac_gapless,
    realizations, seed.
    """
    if cell_size % 4 != 0:
        raise ValidationError("cell size must be a multiple of 4")
    if grid is None:
        grid = IntegrationGrid()
    rows = []
    for x in np.atleast_1d(np.asarray(x_values, dtype=float)):
        cell = supercell_from_pattern(
            DissipationPattern(x=float(x), g_a=pattern.g_a, g_b=pattern.g_b), cell_size
        )
        if dis.delta_j == 0.0 and dis.delta_g == 0.0:
            tasks = [(cell, 0.0, 0.0, dis.seed, 0, grid)]
        else:
            tasks = [
                (cell, dis.delta_j, dis.delta_g, dis.seed, i, grid)
                for i in range(dis.realizations)
            ]
        results = sorted(map_fn(_one_disorder_point, tasks), key=lambda t: t[0])
        values = [
            res.rounded for _, res in results if res is not None and res.converged
        ]
        n_bad = sum(1 for _, res in results if res is None or not res.converged)
        rows.append(
            {
                "x": float(x),
                "mean_C": float(np.mean(values)) if values else float("nan"),
                "std_C": float(np.std(values)) if values else float("nan"),
                "frac_gapless": n_bad / len(tasks),
                "realizations": len(tasks),
                "seed": dis.seed,
            }
        )
    return rows
