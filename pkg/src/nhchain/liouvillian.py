"""Third-quantized Liouvillian: local operators, MPO form, and exact oracles.

The Lindblad generator of the driven chain is rewritten in doubled boson
operators (two flavors per site, nu = 0 acting from the left, nu = 1 from the
right of the density matrix). In the dual Fock basis the flavors are ordinary
truncated ladder operators, the generator is strictly nearest-neighbour, and
the trace functional is the product vacuum bra. Quadratic hopping rides on the
non-Hermitian Hamiltonian H_NH = H - i diag(g); the on-site quartic part
carries the interaction.

Two independent verification paths live here as well: a direct dense assembly
of the third-quantized generator (no MPO machinery involved) and a vectorized
second-quantized Liouvillian on the truncated Fock space, solved for its null
vector.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .chain import build_nh_hamiltonian
from .errors import ValidationError

__all__ = [
    "ladder",
    "fused_site_ops",
    "site_superoperator",
    "LiouvillianMPO",
    "build_liouvillian_mpo",
    "mpo_to_dense",
    "third_quantized_dense",
    "ExactSteadyState",
    "exact_steady_state_oracle",
    "vectorized_liouvillian",
]

# MPO bond channels: 0 = finished, 1..4 = pass a0 / a0' / a1 / a1', 5 = start.
MPO_WIDTH = 6
START, DONE = 5, 0


def ladder(r):
    """Truncated lowering operator; [a, a^T] = 1 on the first r-1 levels."""
    if r < 2:
        raise ValidationError("local truncation must be at least 2")
    return sp.diags(np.sqrt(np.arange(1, r)), 1, format="csr")


def fused_site_ops(r):
    """Flavor ladder operators on the fused r^2 local space (flavor 0 first)."""
    a = ladder(r)
    eye = sp.identity(r, format="csr")
    return {
        "a0": sp.kron(a, eye, format="csr"),
        "a0p": sp.kron(a.T, eye, format="csr"),
        "a1": sp.kron(eye, a, format="csr"),
        "a1p": sp.kron(eye, a.T, format="csr"),
    }


def onsite_generator(ops, h, f, u):
    """Single-site part of the generator: quadratic (diagonal of H_NH),
    linear drive, and the four on-site quartic interaction monomials."""
    a0, a0p = ops["a0"], ops["a0p"]
    a1, a1p = ops["a1"], ops["a1p"]
    d = (-1j * h) * (a0p @ a0) + (1j * np.conj(h)) * (a1p @ a1)
    if f != 0:
        d = d + (-1j * f) * a0p + (1j * np.conj(f)) * a1p
    if u != 0:
        quartic = (
            2.0 * (a1p @ a1 @ a1 @ a0)
            + a1p @ a1p @ a1 @ a1
            - a0p @ a0p @ a0 @ a0
            - 2.0 * (a0p @ a1 @ a0 @ a0)
        )
        d = d + (-1j * u / 2.0) * quartic
    return d.tocsr()


def site_superoperator(r, kind):
    """Third-quantized form of left multiplication by a second-quantized
    single-site operator: a -> a0, and a^dag -> a0' + a1 (inverse transform).

    kind: 'a' (annihilation), 'n' (a^dag a), 'n2' ((a^dag a)^2).
    """
    ops = fused_site_ops(r)
    if kind == "a":
        return ops["a0"]
    n_left = (ops["a0p"] + ops["a1"]) @ ops["a0"]
    if kind == "n":
        return n_left.tocsr()
    if kind == "n2":
        return (n_left @ n_left).tocsr()
    raise ValidationError(f"unknown operator kind {kind!r}")


@dataclass(frozen=True)
class LiouvillianMPO:
    """Nearest-neighbour operator-valued matrix product form of the generator.

    tensors[j] maps (row, col) bond channels to sparse local operators on the
    fused r^2 space; contraction runs from the start channel on the left
    boundary to the done channel on the right.
    """

    tensors: tuple
    r: int
    length: int

    @property
    def local_dim(self):
        return self.r * self.r


def build_liouvillian_mpo(spec, omega, r):
    """MPO of the third-quantized generator at drive frequency omega."""
    if r < 2:
        raise ValidationError("local truncation must be at least 2")
    spec = replace(spec, omega_drive=float(omega))
    h_nh = build_nh_hamiltonian(spec)
    ops = fused_site_ops(r)
    tensors = []
    for j in range(spec.length):
        w = {
            (DONE, DONE): sp.identity(r * r, format="csr"),
            (START, START): sp.identity(r * r, format="csr"),
            (1, DONE): ops["a0"],
            (2, DONE): ops["a0p"],
            (3, DONE): ops["a1"],
            (4, DONE): ops["a1p"],
            (START, DONE): onsite_generator(
                ops, h_nh[j, j], spec.drive[j], spec.interaction[j]
            ),
        }
        if j < spec.length - 1:
            jj = spec.hopping[j]
            w[(START, 1)] = (-1j * jj) * ops["a0p"]
            w[(START, 2)] = (-1j * jj) * ops["a0"]
            w[(START, 3)] = (1j * jj) * ops["a1p"]
            w[(START, 4)] = (1j * jj) * ops["a1"]
        tensors.append(w)
    return LiouvillianMPO(tensors=tuple(tensors), r=r, length=spec.length)


def mpo_to_dense(mpo):
    """Contract the MPO to one sparse matrix on the full (r^2)^L space.

    Intended for small systems; raises when the target dimension is too big.
    """
    dim = (mpo.r**2) ** mpo.length
    if dim > 20000:
        raise ValidationError(f"contraction dimension {dim} too large")
    row = {b: op for (a, b), op in mpo.tensors[0].items() if a == START}
    for w in mpo.tensors[1:]:
        nxt = {}
        for (a, b), op in w.items():
            if a not in row:
                continue
            term = sp.kron(row[a], op, format="csr")
            nxt[b] = nxt[b] + term if b in nxt else term
        row = nxt
    return row[DONE].tocsr()


def _embed(op, j, length, local_dim):
    left = sp.identity(local_dim**j, format="csr")
    right = sp.identity(local_dim ** (length - j - 1), format="csr")
    return sp.kron(sp.kron(left, op), right, format="csr")


def third_quantized_dense(spec, omega, r):
    """Direct assembly of the third-quantized generator on the full space.

    Independent of the MPO path: every term is embedded site by site with
    explicit Kronecker products.
    """
    spec = replace(spec, omega_drive=float(omega))
    h_nh = build_nh_hamiltonian(spec)
    ops = fused_site_ops(r)
    L = spec.length
    p = r * r
    dim = p**L
    if dim > 20000:
        raise ValidationError(f"dimension {dim} too large")
    total = sp.csr_matrix((dim, dim), dtype=complex)
    for j in range(L):
        total = total + _embed(
            onsite_generator(ops, h_nh[j, j], spec.drive[j], spec.interaction[j]),
            j,
            L,
            p,
        )
    for j in range(L - 1):
        jj = spec.hopping[j]
        for op_a, op_b, coeff in (
            ("a0p", "a0", -1j * jj),
            ("a0", "a0p", -1j * jj),
            ("a1p", "a1", 1j * jj),
            ("a1", "a1p", 1j * jj),
        ):
            total = total + coeff * (
                _embed(ops[op_a], j, L, p) @ _embed(ops[op_b], j + 1, L, p)
            )
    return total.tocsr()


def _fock_ops(cutoff, length):
    a = ladder(cutoff)
    ops = []
    for j in range(length):
        ops.append(_embed(a, j, length, cutoff))
    return ops


def second_quantized_hamiltonian(spec, omega, cutoff):
    """Driven rotating-frame Hamiltonian on the truncated Fock space."""
    spec = replace(spec, omega_drive=float(omega))
    L = spec.length
    a_ops = _fock_ops(cutoff, L)
    dim = cutoff**L
    h = sp.csr_matrix((dim, dim), dtype=complex)
    for j in range(L):
        n_j = (a_ops[j].getH() @ a_ops[j]).tocsr()
        h = h + (spec.omega[j] - spec.omega_drive) * n_j
        h = h - (spec.interaction[j] / 2.0) * (n_j @ (n_j - sp.identity(dim)))
        if spec.drive[j] != 0:
            h = h + spec.drive[j] * a_ops[j].getH() + np.conj(spec.drive[j]) * a_ops[j]
    for j in range(L - 1):
        h = h + spec.hopping[j] * (
            a_ops[j].getH() @ a_ops[j + 1] + a_ops[j + 1].getH() @ a_ops[j]
        )
    return h.tocsr()


def vectorized_liouvillian(spec, omega, cutoff):
    """Second-quantized generator as a sparse superoperator (row-major vec)."""
    L = spec.length
    dim = cutoff**L
    h = second_quantized_hamiltonian(spec, omega, cutoff)
    eye = sp.identity(dim, format="csr")
    sup = -1j * (sp.kron(h, eye) - sp.kron(eye, h.T))
    g = spec.dissipation
    a_ops = _fock_ops(cutoff, L)
    for j in range(L):
        if g[j] == 0:
            continue
        a = a_ops[j]
        n_j = (a.getH() @ a).tocsr()
        sup = sup + g[j] * (
            2.0 * sp.kron(a, a.conj())
            - sp.kron(n_j, eye)
            - sp.kron(eye, n_j.T)
        )
    return sup.tocsr()


@dataclass
class ExactSteadyState:
    """Steady density matrix of the truncated second-quantized problem."""

    rho: np.ndarray
    cutoff: int
    length: int

    def _site_op(self, op, j):
        return _embed(sp.csr_matrix(op), j, self.length, self.cutoff)

    def expect(self, op, site):
        full = self._site_op(op, site)
        return complex(np.trace(full @ self.rho))

    def amplitude(self, site):
        return self.expect(ladder(self.cutoff).toarray(), site)

    def density(self, site):
        a = ladder(self.cutoff).toarray()
        return self.expect(a.conj().T @ a, site)

    def density_variance(self, site):
        a = ladder(self.cutoff).toarray()
        n = a.conj().T @ a
        return (self.expect(n @ n, site) - self.expect(n, site) ** 2).real


def exact_steady_state_oracle(spec, omega, cutoff):
    """Null vector of the vectorized generator, normalized to unit trace.

    Small systems only (cutoff^length <= 4096). The zero eigenvector is found
    by replacing one row of the generator with the trace functional and
    solving the resulting nonsingular sparse system.
    """
    dim = cutoff**spec.length
    if dim > 4096:
        raise ValidationError(
            f"Fock dimension {dim} exceeds the desk-scale bound 4096"
        )
    sup = vectorized_liouvillian(spec, omega, cutoff).tolil()
    trace_row = np.zeros(dim * dim)
    trace_row[(np.arange(dim)) * (dim + 1)] = 1.0
    sup[0, :] = trace_row
    rhs = np.zeros(dim * dim, dtype=complex)
    rhs[0] = 1.0
    vec = spla.spsolve(sup.tocsc(), rhs)
    rho = vec.reshape(dim, dim)
    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.trace(rho).real
    return ExactSteadyState(rho=rho, cutoff=cutoff, length=spec.length)
