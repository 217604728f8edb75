"""MPS tensors: blocking, expansion, fiducial states, injectivity, symmetry action.

Tensors are stored as complex arrays ``A[i, a, b]`` (physical index first,
then left and right virtual indices) with an optional declared block
partition of the bond dimension.  Expansion uses periodic boundary
conditions.  The block-structure detector recovers the partition from the
transfer-operator fixed-point algebra and is limited to desk-scale tensors
in canonical-form normalization; for anything else the partition must be
declared.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import projreps
from .engine import DenseState
from .groups import Element, PhaseLabel

TOL = 1e-10
RANK_TOL = 1e-8
AMPLITUDE_BUDGET = 2**24


class BudgetError(ValueError):
    """Requested expansion exceeds the desk-scale amplitude budget."""


class DegenerateInputError(ValueError):
    """The tensor generates the zero state."""


class DetectError(RuntimeError):
    """Block detection needs a declared partition for this tensor."""


@dataclass
class MPSTensor:
    """Translation-invariant MPS tensor with optional block partition."""

    array: np.ndarray
    partition: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        self.array = np.asarray(self.array, dtype=complex)
        if self.array.ndim != 3 or self.array.shape[1] != self.array.shape[2]:
            raise ValueError("tensor must have shape (d, D, D)")
        if self.partition is not None and sum(self.partition) != self.bond_dim:
            raise ValueError("partition does not tile the bond dimension")

    @property
    def phys_dim(self) -> int:
        return self.array.shape[0]

    @property
    def bond_dim(self) -> int:
        return self.array.shape[1]

    def block_slices(self) -> List[slice]:
        if self.partition is None:
            raise ValueError("tensor has no declared partition")
        out, start = [], 0
        for size in self.partition:
            out.append(slice(start, start + size))
            start += size
        return out


def expand_state(A: MPSTensor, n: int) -> DenseState:
    """Periodic-boundary state tr[A^{i_1} ... A^{i_n}], normalized."""
    d, D = A.phys_dim, A.bond_dim
    if d**n > AMPLITUDE_BUDGET:
        raise BudgetError(f"{d}^{n} amplitudes exceed the desk budget")
    R = A.array.copy()
    for _ in range(n - 1):
        R = np.einsum("xab,ybc->xyac", R, A.array).reshape(-1, D, D)
    amps = np.trace(R, axis1=1, axis2=2)
    norm = np.linalg.norm(amps)
    if norm < 1e-14:
        raise DegenerateInputError("all trace amplitudes vanish")
    return DenseState((d,) * n, (amps / norm).reshape((d,) * n))


def block(A: MPSTensor, l: int) -> MPSTensor:
    """Merge l adjacent sites: physical dimension d^l, entries prod A^{i_j}."""
    d, D = A.phys_dim, A.bond_dim
    if d**l * D * D > AMPLITUDE_BUDGET:
        raise BudgetError("blocked tensor exceeds the desk budget")
    R = A.array.copy()
    for _ in range(l - 1):
        R = np.einsum("xab,ybc->xyac", R, A.array).reshape(-1, D, D)
    return MPSTensor(R, partition=A.partition)


def fiducial_state(A: MPSTensor) -> DenseState:
    """|A> = sum (A^i)_{lm} |l>|i>|m>, normalized, on dims (D, d, D)."""
    F = np.transpose(A.array, (1, 0, 2))
    norm = np.linalg.norm(F)
    if norm < 1e-14:
        raise DegenerateInputError("zero tensor has no fiducial state")
    return DenseState((A.bond_dim, A.phys_dim, A.bond_dim), F / norm)


def is_block_injective(A: MPSTensor, partition: Optional[Sequence[int]] = None) -> bool:
    """True iff {A^i} spans the full block-diagonal algebra of the partition."""
    part = tuple(partition) if partition is not None else A.partition
    if part is None:
        raise ValueError("a partition is required")
    if sum(part) != A.bond_dim:
        raise ValueError("partition does not tile the bond dimension")
    tensor = MPSTensor(A.array, tuple(part))
    slices = tensor.block_slices()
    # off-block support disqualifies immediately
    mask = np.zeros((A.bond_dim, A.bond_dim), dtype=bool)
    for s in slices:
        mask[s, s] = True
    off = A.array[:, ~mask]
    if off.size and np.max(np.abs(off)) > RANK_TOL:
        return False
    cols = []
    for i in range(A.phys_dim):
        cols.append(np.concatenate([A.array[i, s, s].reshape(-1) for s in slices]))
    coeff = np.array(cols)
    target_rank = sum(size**2 for size in part)
    if coeff.shape[1] != target_rank:
        raise AssertionError("coefficient matrix width mismatch")
    svals = np.linalg.svd(coeff, compute_uv=False)
    rank = int(np.sum(svals > RANK_TOL * max(1.0, svals[0])))
    return rank == target_rank


def transfer_matrix(A: MPSTensor) -> np.ndarray:
    """T = sum_i A^i (x) conj(A^i), acting on vectorized bond operators."""
    return sum(np.kron(A.array[i], A.array[i].conj()) for i in range(A.phys_dim))


def detect_blocks(A: MPSTensor, tol: float = 1e-8) -> Tuple[int, ...]:
    """Recover the block partition from the transfer fixed-point algebra.

    Requires desk-scale bond dimension and canonical-form normalization
    (sum_i A^i A^i{dag} proportional to the identity); otherwise the caller
    must declare the partition.
    """
    D = A.bond_dim
    if D > 8:
        raise DetectError("detection is limited to D <= 8; declare the partition")
    gauge = sum(A.array[i] @ A.array[i].conj().T for i in range(A.phys_dim))
    c = np.trace(gauge).real / D
    if np.max(np.abs(gauge - c * np.eye(D))) > 1e-8 * max(1.0, abs(c)):
        raise DetectError("tensor is not in canonical normalization; declare the partition")

    T = transfer_matrix(A) / c
    evals, evecs = np.linalg.eig(T)
    radius = np.max(np.abs(evals))
    sel = np.abs(evals - radius) < tol * max(1.0, radius)
    fixed = [evecs[:, i].reshape(D, D) for i in np.where(sel)[0]]
    # Hermitian generic element of the fixed-point algebra
    rng = np.random.default_rng(7)
    Y = np.zeros((D, D), dtype=complex)
    for X in fixed:
        cc = rng.standard_normal() + 1j * rng.standard_normal()
        Y += cc * X + np.conj(cc) * X.conj().T
    evals_y, V = np.linalg.eigh(Y)
    clusters = projreps._eigenspace_clusters(evals_y, tol=1e-8 * max(1.0, float(np.max(np.abs(evals_y)))))
    # order clusters by basis position and check block-diagonality in that basis
    order = np.concatenate([c_ for c_ in clusters])
    Vo = V[:, order]
    sizes = tuple(len(c_) for c_ in clusters)
    rotated = np.einsum("pa,iab,bq->ipq", Vo.conj().T, A.array, Vo)
    mask = np.zeros((D, D), dtype=bool)
    start = 0
    for size in sizes:
        mask[start:start + size, start:start + size] = True
        start += size
    off = rotated[:, ~mask]
    if off.size and np.max(np.abs(off)) > 1e-7:
        raise DetectError("fixed-point eigenbasis does not block-diagonalize the tensor")
    return sizes


def verify_symmetry_action(A: MPSTensor,
                           U: Dict[Element, np.ndarray],
                           P: Dict[Element, np.ndarray],
                           omega: Dict[Tuple[Element, int], np.ndarray],
                           phases: Optional[Dict[Tuple[Element, int], complex]] = None,
                           tol: float = TOL) -> bool:
    """Check the non-injective symmetry action equation for every g and i.

    sum_j (U_g)_{ij} A^j = P_g^T [ (+)_alpha e^{i phi^alpha_g}
    omega(g,alpha)^dag A^i_alpha omega(g,alpha) ] P_g, with blocks indexed by
    the declared partition.  The injective (single block) case reduces to the
    1D-irrep equation.
    """
    if A.partition is None:
        raise ValueError("tensor needs a declared partition")
    slices = A.block_slices()
    D = A.bond_dim
    for g, Ug in U.items():
        B = np.einsum("ij,jab->iab", Ug, A.array)
        inner = np.zeros_like(A.array)
        for alpha, s in enumerate(slices):
            w = omega[(g, alpha)]
            ph = 1.0 if phases is None else phases[(g, alpha)]
            inner[:, s, s] = ph * np.einsum(
                "pa,iab,bq->ipq", w.conj().T, A.array[:, s, s], w
            )
        Pg = P[g]
        rhs = np.einsum("ap,ipq,qb->iab", Pg.T, inner, Pg)
        if np.max(np.abs(B - rhs)) > tol:
            return False
    return True


def _mixed_transfer_gauge(B_block: np.ndarray, A_block: np.ndarray,
                          scale: float) -> Optional[Tuple[np.ndarray, complex]]:
    """Gauge omega with B^i = lambda omega^dag A^i omega, if one exists.

    Uses the leading eigenvector of the mixed transfer operator
    E(X) = sum_i A^i X (B^i)^dag; for gauge-related injective blocks its
    spectral radius reaches the canonical normalization scale and the
    eigenvector is proportional to a unitary.
    """
    Db = A_block.shape[1]
    T = sum(np.kron(A_block[i], B_block[i].conj()) for i in range(A_block.shape[0]))
    evals, evecs = np.linalg.eig(T)
    k = int(np.argmax(np.abs(evals)))
    if abs(abs(evals[k]) - scale) > 1e-8 * max(1.0, scale):
        return None
    M = evecs[:, k].reshape(Db, Db)
    # polar-normalize to a unitary candidate
    u, s, vh = np.linalg.svd(M)
    if np.max(s) < 1e-12 or (np.max(s) - np.min(s)) / np.max(s) > 1e-8:
        return None
    omega = u @ vh
    lam = evals[k] / scale
    resid = max(
        np.max(np.abs(np.conj(lam) * omega.conj().T @ A_block[i] @ omega - B_block[i]))
        for i in range(A_block.shape[0])
    )
    if resid > 1e-8:
        return None
    return omega, np.conj(lam)


def verify_phase_label(A: MPSTensor, U: Dict[Element, np.ndarray],
                       label: PhaseLabel) -> bool:
    """Check that (A, U) realizes the given phase label (H-tilde, mu).

    Verifies the block count, that the stabilizer of block 0 under the
    detected permutation equals the embedded subgroup, and that the virtual
    projective representation extracted on block 0 carries a cocycle in the
    class mu (ratio against the standard cocycle is a coboundary).
    """
    part = A.partition if A.partition is not None else detect_blocks(A)
    tensor = MPSTensor(A.array, tuple(part))
    if not is_block_injective(tensor):
        raise ValueError("tensor is not block injective for this partition")
    sub = label.sub
    if len(part) != sub.k_order:
        return False
    slices = tensor.block_slices()
    gauge = sum(A.array[i] @ A.array[i].conj().T for i in range(A.phys_dim))
    scale = float(np.trace(gauge).real / A.bond_dim)

    # detect the block permutation of every symmetry element
    perms: Dict[Element, List[int]] = {}
    gauges: Dict[Tuple[Element, int], Tuple[np.ndarray, complex]] = {}
    for g, Ug in U.items():
        B = np.einsum("ij,jab->iab", Ug, A.array)
        pi = [-1] * len(part)
        for beta, sb in enumerate(slices):
            found = None
            for alpha, sa in enumerate(slices):
                if part[alpha] != part[beta]:
                    continue
                hit = _mixed_transfer_gauge(B[:, sb, sb], A.array[:, sa, sa], scale)
                if hit is not None:
                    found = alpha
                    gauges[(g, beta)] = hit
                    break
            if found is None:
                return False
            pi[beta] = found
        if sorted(pi) != list(range(len(part))):
            return False
        perms[g] = pi

    stabilizer = {g for g, pi in perms.items() if pi[0] == 0}
    if stabilizer != set(sub.embedded_subgroup()):
        return False

    # virtual cocycle on block 0, relabelled to the subset H
    h_group = sub.h_group()
    mats = {}
    for g in stabilizer:
        h = sub.h_of(g)  # g = |K| h, so h(g) recovers the H-label
        mats[h] = gauges[(g, 0)][0]
    omega_coc = projreps.numeric_cocycle(h_group, mats)
    std = projreps.standard_cocycle(
        projreps.CocycleClass(h_group, label.cocycle_class.entries)
    )
    trivial, _ = projreps.cocycle_is_trivial(projreps.cocycle_ratio(omega_coc, std))
    return trivial


def read_tensor(path: str) -> MPSTensor:
    """Read a tensor from the structured text format.

    Line 1: ``d D``; optional line 2: ``partition: n1 n2 ...``; then d*D*D
    lines of ``re im`` pairs in row-major (i, a, b) order.
    """
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    d, D = (int(x) for x in lines[0].split())
    idx = 1
    partition = None
    if lines[idx].startswith("partition:"):
        partition = tuple(int(x) for x in lines[idx].split(":", 1)[1].split())
        idx += 1
    entries = []
    for ln in lines[idx:idx + d * D * D]:
        re, im = (float(x) for x in ln.split())
        entries.append(complex(re, im))
    if len(entries) != d * D * D:
        raise ValueError("wrong number of tensor entries")
    return MPSTensor(np.array(entries).reshape(d, D, D), partition)


def write_tensor(path: str, A: MPSTensor) -> None:
    with open(path, "w") as fh:
        fh.write(f"{A.phys_dim} {A.bond_dim}\n")
        if A.partition is not None:
            fh.write("partition: " + " ".join(str(x) for x in A.partition) + "\n")
        for val in A.array.reshape(-1):
            fh.write(f"{val.real:.17g} {val.imag:.17g}\n")


def ghz_tensor(local_dim: int = 2) -> MPSTensor:
    """A^x = E_xx: generates the |0..0> + ... + |d-1..d-1> state."""
    arr = np.zeros((local_dim, local_dim, local_dim), dtype=complex)
    for x in range(local_dim):
        arr[x, x, x] = 1.0
    return MPSTensor(arr, partition=(1,) * local_dim)
