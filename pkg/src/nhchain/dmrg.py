"""Steady-state search: DMRG on the third-quantized generator.

The stationary density matrix is the right eigenvector of the generator with
eigenvalue closest to zero. The matrix-product state is grown from the two
chain ends (one site per step, so the working dimension grows by the local
dimension r^2 rather than r^4) and then optimized by left/right sweeps. Each
local problem is non-Hermitian; it is solved by Arnoldi iteration with zero
shift, filtering the returned Ritz values for the smallest magnitude -- no
inversion of the effective generator is ever needed.

Observables use the dual-space trace rule <O> = <vac| O |rho>. The vacuum bra
in the truncated basis is obtained as the small-magnitude left eigenvector of
the effective generator, cross-checkable against the exact product-vacuum
contraction.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ArnoldiError, BasisDeficiencyError, ValidationError
from .liouvillian import (
    DONE,
    START,
    build_liouvillian_mpo,
    site_superoperator,
)

__all__ = [
    "DMRGConfig",
    "MPSState",
    "SteadyStateResult",
    "warmup_grow",
    "sweep_to_convergence",
    "solve_steady_state",
    "vacuum_left_vector",
    "expectation",
    "nonlinear_reflection",
    "NonlinearReflection",
]


@dataclass(frozen=True)
class DMRGConfig:
    """Convergence parameters: local truncation r, bond cutoff d, sweep and
    Arnoldi controls."""

    r: int
    bond_dim: int
    max_sweeps: int = 64
    target_eigen_tol: float = 1e-9
    krylov_dim: int = 24
    max_restarts: int = 4
    arnoldi_tol: float = 0.0
    warmup_arnoldi_tol: float = 1e-9
    n_ritz: int = 4
    dense_cutoff: int = 1024
    left_vector_factor: float = 100.0

    def __post_init__(self):
        if self.r < 2:
            raise ValidationError("local truncation r must be at least 2")
        if self.bond_dim < 1:
            raise ValidationError("bond dimension must be positive")
        if self.target_eigen_tol <= 0:
            raise ValidationError("target_eigen_tol must be positive")


@dataclass
class MPSState:
    """Mixed-canonical matrix product state; tensors are (left, phys, right)."""

    tensors: list
    center: int
    discarded: list = field(default_factory=list)

    @property
    def length(self):
        return len(self.tensors)

    def bond_dims(self):
        return [t.shape[2] for t in self.tensors[:-1]]


@dataclass
class SteadyStateResult:
    state: MPSState
    mpo: object
    config: DMRGConfig
    eigenvalue_abs: float
    converged: bool
    sweeps: int
    vacuum_overlap_ok: bool | None = None
    observables: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# environment contractions

def _boundary_left():
    return {START: np.ones((1, 1), dtype=complex)}


def _boundary_right():
    return {DONE: np.ones((1, 1), dtype=complex)}


def _transfer_left(env, tensor, w):
    """Extend a left environment over one site: bra = conj(tensor), ket = tensor."""
    dl, p, dr = tensor.shape
    ket = tensor.reshape(dl, p * dr)
    out = {}
    for (a, b), op in w.items():
        if a not in env:
            continue
        mid = env[a] @ ket  # (dl_bra, p*dr)
        mid = mid.reshape(-1, p, dr).transpose(1, 0, 2).reshape(p, -1)
        mid = (op @ mid).reshape(p, -1, dr)  # (p_bra, dl_bra, dr)
        contrib = np.einsum("iqk,qil->kl", tensor.conj(), mid)
        out[b] = out[b] + contrib if b in out else contrib
    return out


def _transfer_right(env, tensor, w):
    dl, p, dr = tensor.shape
    out = {}
    for (a, b), op in w.items():
        if b not in env:
            continue
        mid = tensor.reshape(dl * p, dr) @ env[b].T  # (dl*p, dr_bra)
        mid = mid.reshape(dl, p, -1).transpose(1, 0, 2).reshape(p, -1)
        mid = (op @ mid).reshape(p, dl, -1)  # (p_bra, dl, dr_bra)
        contrib = np.einsum("iqk,qlk->il", tensor.conj(), mid)
        out[a] = out[a] + contrib if a in out else contrib
    return out


def _matvec(env_l, w, env_r, v, shape, transpose=False):
    """Apply the effective local generator (or its transpose) to v."""
    dl, p, dr = shape
    v = v.reshape(dl, p, dr)
    out = None
    for (a, b), op in w.items():
        if a not in env_l or b not in env_r:
            continue
        el, er = env_l[a], env_r[b]
        if transpose:
            mid = el.T @ v.reshape(dl, p * dr)
            mid = mid.reshape(-1, p, dr).transpose(1, 0, 2).reshape(p, -1)
            mid = (op.T @ mid).reshape(p, -1, dr)
            mid = np.ascontiguousarray(mid.transpose(1, 0, 2)).reshape(-1, dr)
            if sp.issparse(er):
                term = (er.T @ mid.T).T
            else:
                term = mid @ er
            term = term.reshape(-1, p, er.shape[1])
        else:
            mid = el @ v.reshape(dl, p * dr)
            mid = mid.reshape(-1, p, dr).transpose(1, 0, 2).reshape(p, -1)
            mid = (op @ mid).reshape(p, -1, dr)
            mid = np.ascontiguousarray(mid.transpose(1, 0, 2)).reshape(-1, dr)
            if sp.issparse(er):
                term = (er @ mid.T).T
            else:
                term = mid @ er.T
            term = term.reshape(-1, p, er.shape[0])
        out = term if out is None else out + term
    return out.ravel()


def _dense_local(env_l, w, env_r, shape, transpose=False):
    dl, p, dr = shape
    mats = []
    for (a, b), op in w.items():
        if a not in env_l or b not in env_r:
            continue
        er = env_r[b].toarray() if sp.issparse(env_r[b]) else env_r[b]
        term = np.kron(np.kron(env_l[a], op.toarray()), er)
        mats.append(term)
    m = sum(mats)
    return m.T if transpose else m


# ---------------------------------------------------------------------------
# local eigensolve

def _solve_local(env_l, w, env_r, shape, v0, config, transpose=False):
    """Eigenpair of the effective generator with eigenvalue closest to zero."""
    dim = int(np.prod(shape))

    def apply(x):
        return _matvec(env_l, w, env_r, x, shape, transpose=transpose)

    if v0 is not None:
        v0 = v0.ravel()
        nrm = np.linalg.norm(v0)
        if nrm > 0:
            v0 = v0 / nrm
            # exact-eigenvector guard: Krylov would break down
            av = apply(v0)
            lam = np.vdot(v0, av)
            if np.linalg.norm(av - lam * v0) <= 1e-12 * max(1.0, np.linalg.norm(av)):
                return lam, v0
        else:
            v0 = None

    if dim <= max(config.dense_cutoff, 2 * config.n_ritz + 2):
        dense = _dense_local(env_l, w, env_r, shape, transpose=transpose)
        vals, vecs = sla.eig(dense)
        idx = int(np.argmin(np.abs(vals)))
        vec = vecs[:, idx]
        return vals[idx], vec / np.linalg.norm(vec)

    op = spla.LinearOperator((dim, dim), matvec=apply, dtype=complex)
    ncv = config.krylov_dim
    last_exc = None
    for attempt in range(config.max_restarts):
        try:
            vals, vecs = spla.eigs(
                op,
                k=config.n_ritz,
                which="LR",
                v0=v0,
                ncv=min(dim - 1, ncv),
                tol=config.arnoldi_tol,
                maxiter=4000,
            )
        except spla.ArpackNoConvergence as exc:
            last_exc = exc
            ncv = min(dim - 1, ncv * 2)
            continue
        idx = int(np.argmin(np.abs(vals)))
        vec = vecs[:, idx]
        vec = vec / np.linalg.norm(vec)
        return vals[idx], vec
    resid = None
    if last_exc is not None and len(getattr(last_exc, "eigenvalues", [])) > 0:
        resid = float(np.min(np.abs(last_exc.eigenvalues)))
    raise ArnoldiError(
        f"Arnoldi failed to converge after {config.max_restarts} restarts "
        f"(dim {dim})",
        residual=resid,
    )


# ---------------------------------------------------------------------------
# warmup: asymmetric block growth from the two chain ends

def _split_keep(psi_mat, d):
    u, s, vh = sla.svd(psi_mat, full_matrices=False)
    keep = min(d, s.size)
    total = float((s**2).sum())
    discarded = float((s[keep:] ** 2).sum()) / total if total > 0 else 0.0
    return u[:, :keep], s[:keep], vh[:keep], discarded


def warmup_grow(mpo, config):
    """Grow blocks from sites 1 and L inward, one site per step.

    The first solve couples the two end sites through the full local bases;
    its decomposition seeds both blocks. Every later step solves a one-site
    problem between the blocks (dimension d * r^2 * d), truncates to the bond
    cutoff, and absorbs the free site, alternating ends. Intermediate block
    environments are retained on the returned state.
    """
    L = mpo.length
    if L < 2:
        raise ValidationError("need at least two sites")
    p = mpo.local_dim
    d = config.bond_dim

    # untruncated end block: identity tensor on the last site
    ident_right = np.eye(p, dtype=complex).reshape(p, p, 1)
    env_r_blocks = [_transfer_right(_boundary_right(), ident_right, mpo.tensors[-1])]
    env_l_blocks = []

    vac_site = np.zeros(p, dtype=complex)
    vac_site[0] = 1.0

    # first solve: site 0 against the identity end block
    lam, psi = _solve_local(
        _boundary_left(),
        mpo.tensors[0],
        env_r_blocks[-1],
        (1, p, p),
        np.kron(vac_site, vac_site),
        config,
    )
    u, s, vh, disc = _split_keep(psi.reshape(p, p), d)
    left_tensors = [u.reshape(1, p, -1)]
    right_tensors = [vh.reshape(-1, p, 1)]
    discarded = [disc]
    vac_a = u.conj().T @ vac_site
    vac_b = vh.conj() @ vac_site
    env_l_blocks.append(
        _transfer_left(_boundary_left(), left_tensors[0], mpo.tensors[0])
    )
    env_r_blocks = [_transfer_right(_boundary_right(), right_tensors[0], mpo.tensors[-1])]

    if L == 2:
        center_tensor = (s[:, None] * vh).reshape(-1, p, 1)
        state = MPSState(
            tensors=[left_tensors[0], center_tensor], center=1, discarded=discarded
        )
        state.eigenvalue = lam
        return state

    left_edge, right_edge = 1, L - 2
    side_a = True
    while left_edge <= right_edge:
        last_step = left_edge == right_edge
        j = left_edge if side_a else right_edge
        env_l = env_l_blocks[-1]
        env_r = env_r_blocks[-1]
        da = env_l[next(iter(env_l))].shape[0]
        db = env_r[next(iter(env_r))].shape[0]
        guess = np.einsum("a,p,b->apb", vac_a, vac_site, vac_b)
        lam, psi = _solve_local(env_l, mpo.tensors[j], env_r, (da, p, db), guess, config)
        if side_a or last_step:
            u, s, vh, disc = _split_keep(psi.reshape(da * p, db), d)
            t = u.reshape(da, p, -1)
            left_tensors.append(t)
            env_l_blocks.append(_transfer_left(env_l, t, mpo.tensors[j]))
            vac_a = u.conj().T @ np.kron(vac_a, vac_site)
            left_edge += 1
        else:
            u, s, vh, disc = _split_keep(psi.reshape(da, p * db), d)
            t = vh.reshape(-1, p, db)
            right_tensors.insert(0, t)
            env_r_blocks.append(_transfer_right(env_r, t, mpo.tensors[j]))
            vac_b = vh.conj() @ np.kron(vac_site, vac_b)
            right_edge -= 1
        discarded.append(disc)
        side_a = not side_a

    # keep the final state: fold the remaining singular factor into the first
    # right tensor, making it the orthogonality center
    carry = s[:, None] * vh
    right_tensors[0] = np.tensordot(carry, right_tensors[0], axes=([1], [0]))
    state = MPSState(
        tensors=left_tensors + right_tensors,
        center=len(left_tensors),
        discarded=discarded,
    )
    state.eigenvalue = lam
    state.warmup_left_blocks = env_l_blocks
    state.warmup_right_blocks = env_r_blocks
    return state


# ---------------------------------------------------------------------------
# sweeps

def _build_left_envs(state, mpo, upto):
    envs = [_boundary_left()]
    for j in range(upto):
        envs.append(_transfer_left(envs[-1], state.tensors[j], mpo.tensors[j]))
    return envs


def _build_right_envs(state, mpo, downto):
    L = state.length
    envs = {L: _boundary_right()}
    for j in range(L - 1, downto - 1, -1):
        envs[j] = _transfer_right(envs[j + 1], state.tensors[j], mpo.tensors[j])
    return envs


def _move_center(state, j, direction, d):
    """SVD split of the center tensor, absorbing the remainder into the next site."""
    t = state.tensors[j]
    dl, p, dr = t.shape
    if direction > 0:
        u, s, vh, disc = _split_keep(t.reshape(dl * p, dr), d)
        state.tensors[j] = u.reshape(dl, p, -1)
        carry = s[:, None] * vh
        state.tensors[j + 1] = np.tensordot(carry, state.tensors[j + 1], axes=([1], [0]))
        state.center = j + 1
    else:
        u, s, vh, disc = _split_keep(t.reshape(dl, p * dr), d)
        state.tensors[j] = vh.reshape(-1, p, dr)
        carry = u * s[None, :]
        state.tensors[j - 1] = np.tensordot(state.tensors[j - 1], carry, axes=([2], [0]))
        state.center = j - 1
    state.discarded.append(disc)


def sweep_to_convergence(state, mpo, config):
    """Alternating one-site sweeps until |eigenvalue| <= target tolerance.

    A sweep is one full pass in one direction; on non-convergence after
    max_sweeps the result is flagged and observables are withheld.
    """
    L = state.length
    d = config.bond_dim

    while state.center > 0:
        _move_center(state, state.center, -1, d)

    left_envs = _build_left_envs(state, mpo, 0)
    right_envs = _build_right_envs(state, mpo, 1)

    lam = getattr(state, "eigenvalue", np.inf)
    sweeps = 0
    converged = False
    direction = +1
    while sweeps < config.max_sweeps and not converged:
        rng = range(L - 1) if direction > 0 else range(L - 1, 0, -1)
        for j in rng:
            shape = state.tensors[j].shape
            lam, vec = _solve_local(
                left_envs[j],
                mpo.tensors[j],
                right_envs[j + 1],
                shape,
                state.tensors[j],
                config,
            )
            state.tensors[j] = vec.reshape(shape)
            if direction > 0:
                _move_center(state, j, +1, d)
                left_envs = left_envs[: j + 1]
                left_envs.append(
                    _transfer_left(left_envs[j], state.tensors[j], mpo.tensors[j])
                )
                right_envs.pop(j + 1, None)
            else:
                _move_center(state, j, -1, d)
                right_envs[j] = _transfer_right(
                    right_envs[j + 1], state.tensors[j], mpo.tensors[j]
                )
                left_envs = left_envs[: j + 1]
        sweeps += 1
        converged = abs(lam) <= config.target_eigen_tol
        direction = -direction
        if direction > 0 and not converged:
            # returning to a left-edge start; rebuild the right environments
            right_envs = _build_right_envs(state, mpo, 1)
            left_envs = left_envs[:1]

    state.eigenvalue = lam
    return SteadyStateResult(
        state=state,
        mpo=mpo,
        config=config,
        eigenvalue_abs=float(abs(lam)),
        converged=bool(converged),
        sweeps=sweeps,
    )


def solve_steady_state(spec, omega, config):
    """Build the generator MPO at omega, warm up, and sweep to convergence."""
    mpo = build_liouvillian_mpo(spec, omega, config.r)
    state = warmup_grow(mpo, config)
    return sweep_to_convergence(state, mpo, config)


# ---------------------------------------------------------------------------
# observables

def vacuum_left_vector(state, mpo, config, eigenvalue_abs=None):
    """Dual-vacuum covector in the truncated center basis.

    Found as the smallest-magnitude left eigenvector of the effective
    generator at the orthogonality center. Raises BasisDeficiencyError when
    its eigenvalue is not comparably close to zero, which signals that the
    truncated basis cannot represent the trace functional.
    """
    j = state.center
    left_envs = _build_left_envs(state, mpo, j)
    right_envs = _build_right_envs(state, mpo, j + 1)
    shape = state.tensors[j].shape
    guess = _product_bra_center(state, j)
    lam, vec = _solve_local(
        left_envs[j],
        mpo.tensors[j],
        right_envs[j + 1],
        shape,
        guess,
        config,
        transpose=True,
    )
    ref = max(
        config.target_eigen_tol,
        eigenvalue_abs if eigenvalue_abs is not None else config.target_eigen_tol,
    )
    if abs(lam) > config.left_vector_factor * ref:
        raise BasisDeficiencyError(
            f"left zero-vector eigenvalue {abs(lam):.3e} far from the steady "
            f"state's {ref:.3e}; truncated basis cannot represent the vacuum"
        )
    return vec.reshape(shape), abs(lam)


def _product_bra_center(state, j):
    """Covector of the product-vacuum functional in the center coordinates.

    The dual pairing is bilinear (no conjugation), so the coordinates are the
    plain vacuum components of the basis states on either side of the center.
    """
    left = np.ones((1,), dtype=complex)
    for t in state.tensors[:j]:
        left = left @ t[:, 0, :]
    right = np.ones((1,), dtype=complex)
    for t in reversed(state.tensors[j + 1 :]):
        right = t[:, 0, :] @ right
    p = state.tensors[j].shape[1]
    phys = np.zeros(p, dtype=complex)
    phys[0] = 1.0
    return np.einsum("a,p,b->apb", left, phys, right)


def _centered_state(result, site):
    """A copy of the converged state gauge-moved so the center sits at `site`.

    Gauge moves are exact here (the singular ranks never exceed the existing
    bond dimensions), so local operators applied at the center act entirely
    inside the represented subspace.
    """
    cache = result.observables.setdefault("_centered", {})
    if site in cache:
        return cache[site]
    state = MPSState(
        tensors=list(result.state.tensors),
        center=result.state.center,
        discarded=[],
    )
    d = max(t.shape[2] for t in state.tensors)
    while state.center > site:
        _move_center(state, state.center, -1, d)
    while state.center < site:
        _move_center(state, state.center, +1, d)
    cache[site] = state
    return state


def expectation(result, kind, site, method="product_bra"):
    """Steady-state average <O> = <vac|O|rho> / <vac|rho>.

    kind: 'a', 'n', 'n2', or 'var_n' (n2 - n^2). The state is centered on the
    operator's site first. method 'left_vector' represents the dual vacuum by
    the small-magnitude left eigenvector of the effective generator (with its
    eigenvalue validity check); 'product_bra' contracts the literal product
    vacuum covector, which is exact for the given state.
    """
    if not result.converged:
        raise ArnoldiError("steady state not converged; observables withheld")
    if site < 0 or site >= result.mpo.length:
        raise ValidationError(f"site {site} out of range")
    if kind == "var_n":
        n = expectation(result, "n", site, method)
        n2 = expectation(result, "n2", site, method)
        return n2 - n**2

    cache_key = (kind, site, method)
    if cache_key in result.observables:
        return result.observables[cache_key]

    state = _centered_state(result, site)
    op = site_superoperator(result.config.r, kind)

    if method == "left_vector":
        lv_cache = result.observables.setdefault("_left_vectors", {})
        if site not in lv_cache:
            try:
                w, _lam = vacuum_left_vector(
                    state, result.mpo, result.config, result.eigenvalue_abs
                )
                result.vacuum_overlap_ok = True
            except BasisDeficiencyError:
                result.vacuum_overlap_ok = False
                raise
            lv_cache[site] = w
        bra = lv_cache[site]
    elif method == "product_bra":
        bra = _product_bra_center(state, site)
    else:
        raise ValidationError(f"unknown method {method!r}")

    center = state.tensors[site]
    applied = np.einsum("pq,aqb->apb", op.toarray(), center)
    numer = np.sum(bra.ravel() * applied.ravel())
    denom = np.sum(bra.ravel() * center.ravel())
    value = complex(numer / denom)
    result.observables[cache_key] = value
    return value


@dataclass
class NonlinearReflection:
    gamma: complex
    densities: np.ndarray
    density_variances: np.ndarray
    result: SteadyStateResult


def nonlinear_reflection(spec, omega, drive_site, f_amp, config, method="product_bra"):
    """Reflection at one strongly driven site from the DMRG steady state.

    alpha_out / alpha_in = 1 + sqrt(kappa) <a_i> / alpha_in with
    alpha_in = i f / sqrt(kappa). Densities for every site come along.
    """
    if spec.kappa[drive_site] <= 0:
        raise ValidationError("drive site needs a nonzero measurement coupling")
    drive = np.zeros(spec.length, dtype=complex)
    drive[drive_site] = f_amp
    result = solve_steady_state(replace(spec, drive=drive), omega, config)
    kappa = spec.kappa[drive_site]
    alpha_in = 1j * f_amp / np.sqrt(kappa)
    a_avg = expectation(result, "a", drive_site, method)
    gamma = 1.0 + np.sqrt(kappa) * a_avg / alpha_in
    n = np.array(
        [expectation(result, "n", j, method).real for j in range(spec.length)]
    )
    var = np.array(
        [expectation(result, "var_n", j, method).real for j in range(spec.length)]
    )
    return NonlinearReflection(
        gamma=complex(gamma), densities=n, density_variances=var, result=result
    )
