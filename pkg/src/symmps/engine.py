"""Dense complex statevector engine for qudit registers.

States carry one ndarray axis per qudit.  Measurements are projective
families given either as projector matrices or as an orthonormal outcome
basis; enumerate mode returns every branch with its exact probability,
sample mode draws one branch from a seeded Born-rule stream.  Branches with
probability below PRUNE_TOL are dropped (they are analytic zeros in every
protocol simulated here, and double precision leaves orders of margin).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

NORM_TOL = 1e-10
COMPLETENESS_TOL = 1e-9
PRUNE_TOL = 1e-12


class ShapeError(ValueError):
    """Operator and site dimensions do not match."""


class IncompleteFamilyError(ValueError):
    """A measurement family does not resolve the identity."""


@dataclass
class DenseState:
    """Pure state of a qudit register; one array axis per qudit."""

    dims: Tuple[int, ...]
    psi: np.ndarray

    def __post_init__(self):
        if self.psi.shape != tuple(self.dims):
            self.psi = self.psi.reshape(self.dims)

    @classmethod
    def from_vector(cls, vec: np.ndarray, dims: Sequence[int]) -> "DenseState":
        return cls(tuple(dims), np.asarray(vec, dtype=complex).reshape(tuple(dims)))

    @classmethod
    def product(cls, locals_: Sequence[np.ndarray]) -> "DenseState":
        psi = np.array([1.0], dtype=complex)
        dims = []
        for v in locals_:
            psi = np.tensordot(psi, np.asarray(v, dtype=complex), axes=0)
            dims.append(len(v))
        return cls(tuple(dims), psi.reshape(tuple(dims)))

    @property
    def num_sites(self) -> int:
        return len(self.dims)

    def vector(self) -> np.ndarray:
        return self.psi.reshape(-1)

    def norm(self) -> float:
        return float(np.linalg.norm(self.psi))

    def normalized(self) -> "DenseState":
        n = self.norm()
        if n == 0:
            raise ValueError("cannot normalize the zero state")
        return DenseState(self.dims, self.psi / n)

    def copy(self) -> "DenseState":
        return DenseState(self.dims, self.psi.copy())


def tensor(a: DenseState, b: DenseState) -> DenseState:
    psi = np.tensordot(a.psi, b.psi, axes=0)
    return DenseState(a.dims + b.dims, psi)


def apply_local(state: DenseState, op: np.ndarray, sites: Sequence[int]) -> DenseState:
    """Contract a local operator into the state on the given sites (in order)."""
    sites = list(sites)
    d = 1
    for s in sites:
        d *= state.dims[s]
    op = np.asarray(op, dtype=complex)
    if op.shape != (d, d):
        raise ShapeError(f"operator shape {op.shape} does not match sites dim {d}")
    sub = tuple(state.dims[s] for s in sites)
    op_t = op.reshape(sub + sub)
    n_in = len(sites)
    psi = np.tensordot(op_t, state.psi, axes=(tuple(range(n_in, 2 * n_in)), tuple(sites)))
    # tensordot puts the operator output axes first; move them home
    psi = np.moveaxis(psi, range(n_in), sites)
    return DenseState(state.dims, psi)


def project_bra(state: DenseState, bra_vec: np.ndarray, sites: Sequence[int]) -> DenseState:
    """Apply <v| on the given sites, returning the (unnormalized) rest."""
    sites = list(sites)
    d = 1
    for s in sites:
        d *= state.dims[s]
    bra = np.asarray(bra_vec, dtype=complex).conj().reshape(
        tuple(state.dims[s] for s in sites)
    )
    psi = np.tensordot(bra, state.psi, axes=(tuple(range(len(sites))), tuple(sites)))
    rem_dims = tuple(dim for i, dim in enumerate(state.dims) if i not in sites)
    return DenseState(rem_dims, psi)


def _family_projectors(family: Sequence[np.ndarray], d: int) -> List[np.ndarray]:
    projs = []
    for P in family:
        P = np.asarray(P, dtype=complex)
        if P.ndim == 1:
            if P.shape != (d,):
                raise ShapeError("outcome vector dimension mismatch")
            P = np.outer(P, P.conj())
        if P.shape != (d, d):
            raise ShapeError("projector dimension mismatch")
        projs.append(P)
    return projs


def check_complete(family: Sequence[np.ndarray], d: int,
                   tol: float = COMPLETENESS_TOL) -> None:
    projs = _family_projectors(family, d)
    total = sum(projs)
    if np.max(np.abs(total - np.eye(d))) > tol:
        raise IncompleteFamilyError("measurement family does not sum to identity")


def measure_enumerate(state: DenseState, family: Sequence[np.ndarray],
                      sites: Sequence[int],
                      prune: float = PRUNE_TOL) -> List[Tuple[int, float, DenseState]]:
    """All branches (outcome, probability, normalized post-state)."""
    d = 1
    for s in sites:
        d *= state.dims[s]
    projs = _family_projectors(family, d)
    check_complete(projs, d)
    branches = []
    nrm2 = state.norm() ** 2
    for k, P in enumerate(projs):
        post = apply_local(state, P, sites)
        p = post.norm() ** 2 / nrm2
        if p < prune:
            continue
        branches.append((k, p, post.normalized()))
    return branches


def measure_sample(state: DenseState, family: Sequence[np.ndarray],
                   sites: Sequence[int],
                   rng: np.random.Generator) -> Tuple[int, float, DenseState]:
    """One Born-rule draw from the family."""
    d = 1
    for s in sites:
        d *= state.dims[s]
    projs = _family_projectors(family, d)
    check_complete(projs, d)
    nrm2 = state.norm() ** 2
    posts = [apply_local(state, P, sites) for P in projs]
    probs = np.array([post.norm() ** 2 / nrm2 for post in posts])
    probs = probs / probs.sum()
    k = int(rng.choice(len(projs), p=probs))
    return k, float(probs[k]), posts[k].normalized()


def fidelity(a: DenseState, b: DenseState) -> float:
    """|<a|b>|^2 for normalized inputs."""
    va = a.vector() / np.linalg.norm(a.vector())
    vb = b.vector() / np.linalg.norm(b.vector())
    return float(abs(np.vdot(va, vb)) ** 2)


def overlap_modulus(a: DenseState, b: DenseState) -> float:
    va = a.vector() / np.linalg.norm(a.vector())
    vb = b.vector() / np.linalg.norm(b.vector())
    return float(abs(np.vdot(va, vb)))


def entropy(state: DenseState, cut_sites: Iterable[int]) -> float:
    """Entanglement entropy in bits across (cut_sites | rest), Schmidt based."""
    cut = sorted(set(cut_sites))
    rest = [i for i in range(state.num_sites) if i not in cut]
    if not cut or not rest:
        return 0.0
    psi = np.moveaxis(state.psi, cut, range(len(cut)))
    da = int(np.prod([state.dims[i] for i in cut]))
    db = psi.size // da
    mat = psi.reshape(da, db)
    s = np.linalg.svd(mat, compute_uv=False)
    s = s / np.linalg.norm(s)
    p = s**2
    p = p[p > 1e-16]
    return float(-np.sum(p * np.log2(p)))


def is_product_over_sites(state: DenseState, tol: float = NORM_TOL) -> bool:
    """True iff every single-site marginal is pure."""
    return all(entropy(state, [i]) < tol for i in range(state.num_sites))


@dataclass
class OutcomeNode:
    """One node of a branch-enumeration record."""

    sites: Tuple[int, ...]
    outcome: int
    probability: float
    children: List["OutcomeNode"] = field(default_factory=list)


def ghz_state(local_dim: int, n: int) -> DenseState:
    psi = np.zeros((local_dim,) * n, dtype=complex)
    for x in range(local_dim):
        psi[(x,) * n] = 1.0
    psi /= np.sqrt(local_dim)
    return DenseState((local_dim,) * n, psi)


def bell_pair(local_dim: int) -> np.ndarray:
    """Maximally entangled |Phi+> on two qudits, as a flat vector."""
    v = np.eye(local_dim, dtype=complex).reshape(-1)
    return v / np.sqrt(local_dim)


def swap_gate(d: int) -> np.ndarray:
    S = np.zeros((d * d, d * d), dtype=complex)
    for a in range(d):
        for b in range(d):
            S[b * d + a, a * d + b] = 1.0
    return S
