"""Block symmetries, symmetric Bell measurements, and the preparation protocol.

This module turns a phase label (aligned subgroup H of G plus a cohomology
class mu of H) into:

* the block physical symmetry ``U_g = [(+)_a omega*_{h(g+a)} (x)
  omega_{h(g+a)}] (X^{k(g)} (x) 1 (x) 1)`` acting on d = |K| D^2 levels,
* the representative MPS tensor (GHZ factor over the block index tensored
  with a Bell-pair chain),
* the complete symmetric generalized Bell measurement built from the
  unitaries ``V_{r,q} = U_r Ztilde^q (x) 1 (x) omega_{h(q)}``,
* the four-step preparation protocol (fiducial preparation, relocation
  swaps, on-site pair measurement, feedforward correction), with exact
  branch enumeration or seeded Born sampling,
* the closure law of the V family and the slide-through correction plan.

Per-site corrections are quasi-commuting unitaries: a symmetry element
(exactly commuting, G abelian) composed with the measured Vtilde factor
(quasi-commuting, implementable through the ancilla lift below).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import engine, mps, projreps
from .engine import DenseState
from .groups import Element, GroupSpec, MembershipError, SubgroupDecomposition
from .mps import MPSTensor
from .projreps import CocycleClass, ConsistencyError, ProjectiveRep, phase_to_complex

TOL = 1e-10
PRUNE_TOL = 1e-12
FIDELITY_TOL = 1e-9


class UnsupportedSymmetryError(ValueError):
    """Operation requires an abelian (commuting) symmetry family."""


class LiftSearchError(RuntimeError):
    """No commuting lift found within the allowed ancilla power."""


# ---------------------------------------------------------------------------
# Block symmetry
# ---------------------------------------------------------------------------

@dataclass
class BlockSymmetry:
    """The chosen physical symmetry of a phase label, with its building blocks."""

    sub: SubgroupDecomposition
    rep: ProjectiveRep
    mats: Dict[Element, np.ndarray]
    k_elements: Tuple[Element, ...]
    d: int

    @property
    def spec(self) -> GroupSpec:
        return self.sub.parent

    @property
    def block_dim(self) -> int:
        return self.rep.dim

    def unitary(self, g: Element) -> np.ndarray:
        return self.mats[g]

    def kernel(self) -> Tuple[Element, ...]:
        dim = self.d
        return tuple(
            g for g in self.spec.elements()
            if np.max(np.abs(self.mats[g] - np.eye(dim))) < 1e-8
        )


def _k_perm_matrix(sub: SubgroupDecomposition, k: Element,
                   k_elements: Sequence[Element]) -> np.ndarray:
    """X^{k}: |a> -> |a - k| per factor mod |K_m| (X = sum |i><i+1|)."""
    nK = len(k_elements)
    index = {a: i for i, a in enumerate(k_elements)}
    P = np.zeros((nK, nK), dtype=complex)
    for a in k_elements:
        P[index[sub.sub_k(a, k)], index[a]] = 1.0
    return P


def build_symmetry(sub: SubgroupDecomposition,
                   mu: CocycleClass | ProjectiveRep,
                   seed: int = 0, verify: bool = True) -> BlockSymmetry:
    """Construct the block symmetry for the phase (H, mu).

    ``mu`` may be a cohomology class (the mu-irrep is then built from its
    standard cocycle) or an explicit projective irrep of H, e.g. the Pauli
    representation.
    """
    h_group = sub.h_group()
    if isinstance(mu, ProjectiveRep):
        if mu.group.moduli != h_group.moduli:
            raise MembershipError("projective rep does not live over H")
        rep = mu
    else:
        rep = projreps.mu_irrep(CocycleClass(h_group, mu.entries), seed=seed)

    K = sub.k_subset()
    D = rep.dim
    d = len(K) * D * D
    eye2 = np.eye(D * D, dtype=complex)
    mats: Dict[Element, np.ndarray] = {}
    spec = sub.parent
    for g in spec.elements():
        P = _k_perm_matrix(sub, sub.k_of(g), K)
        Bg = np.zeros((d, d), dtype=complex)
        for ia, alpha in enumerate(K):
            w = rep.mats[sub.h_of(spec.add(g, alpha))]
            Bg[ia * D * D:(ia + 1) * D * D, ia * D * D:(ia + 1) * D * D] = \
                np.kron(w.conj(), w)
        mats[g] = Bg @ np.kron(P, eye2)

    sym = BlockSymmetry(sub=sub, rep=rep, mats=mats, k_elements=K, d=d)
    if verify:
        for g in spec.elements():
            for h in spec.elements():
                err = np.max(np.abs(mats[g] @ mats[h] - mats[spec.add(g, h)]))
                if err > TOL:
                    raise ConsistencyError(
                        f"U is not a linear representation at ({g},{h}): {err:.2e}"
                    )
    expected = spec.order // len(rep.center)
    if d != expected:
        raise ConsistencyError("dimension bookkeeping d = |G|/|Z| failed")
    return sym


# ---------------------------------------------------------------------------
# Representative tensor and fiducial states
# ---------------------------------------------------------------------------

def build_representative(sym: BlockSymmetry) -> MPSTensor:
    """Tensor generating GHZ_{|K|} (block index) tensor a Bell-pair chain."""
    K = sym.k_elements
    D = sym.block_dim
    nK = len(K)
    bond = nK * D
    arr = np.zeros((sym.d, bond, bond), dtype=complex)
    for ia in range(nK):
        for j in range(D):
            for k in range(D):
                p = (ia * D + j) * D + k
                arr[p, ia * D + j, ia * D + k] = 1.0
    return MPSTensor(arr, partition=(D,) * nK)


def representative_virtual_action(sym: BlockSymmetry) -> Tuple[
        Dict[Element, np.ndarray], Dict[Tuple[Element, int], np.ndarray]]:
    """(P_g, omega(g, alpha)) pair realizing the symmetry action on the tensor."""
    spec = sym.spec
    K = sym.k_elements
    D = sym.block_dim
    perms = {}
    omegas = {}
    for g in spec.elements():
        perms[g] = np.kron(_k_perm_matrix(sym.sub, sym.sub.k_of(g), K),
                           np.eye(D, dtype=complex))
        for ia, alpha in enumerate(K):
            omegas[(g, ia)] = sym.rep.mats[sym.sub.h_of(spec.add(g, alpha))]
    return perms, omegas


def build_fiducial_rep(sym: BlockSymmetry) -> DenseState:
    """Per-site three-qudit state used by the protocol; U_g x U_g x U_g invariant.

    It is the fiducial state of the representative tensor with one extra
    Bell pair between the virtual legs, which lifts each virtual leg to the
    full physical dimension d.  Leg slot layout, with i over the block index
    and j, k, c over the D-dimensional factors:
    left = (i, c, j), physical = (i, j, k), right = (i, k, c).
    """
    K = sym.k_elements
    D = sym.block_dim
    d = sym.d
    nK = len(K)
    F = np.zeros((d, d, d), dtype=complex)
    for i in range(nK):
        for j in range(D):
            for k in range(D):
                for c in range(D):
                    left = (i * D + c) * D + j
                    phys = (i * D + j) * D + k
                    right = (i * D + k) * D + c
                    F[left, phys, right] = 1.0
    F /= np.linalg.norm(F)
    return DenseState((d, d, d), F)


def anchor_state(sym: BlockSymmetry) -> np.ndarray:
    """|Phi~+> = sum |i,j,k> (x) |i,k,j> / sqrt(d) on two d-level qudits."""
    K = sym.k_elements
    D = sym.block_dim
    d = sym.d
    v = np.zeros((d, d), dtype=complex)
    for i in range(len(K)):
        for j in range(D):
            for k in range(D):
                v[(i * D + j) * D + k, (i * D + k) * D + j] = 1.0
    v /= np.sqrt(d)
    return v.reshape(-1)


# ---------------------------------------------------------------------------
# Measurement family
# ---------------------------------------------------------------------------

def build_Ztilde(q: Element, sym: BlockSymmetry) -> np.ndarray:
    """Diagonal phase matrix Z^{k(q)} . diag_a chi^{phi(h(q))}_a on C^{|K|}."""
    sub = sym.sub
    spec = sym.spec
    kq = sub.k_of(q)
    phi_label = sym.rep.phi[sub.h_of(q)]  # element of H subset, read as element of G
    diag = []
    for alpha in sym.k_elements:
        phase = Fraction(0)
        for a, x, km in zip(kq, alpha, sub.k_moduli):
            phase += Fraction(a * x, km)
        phase += spec.character(phi_label, alpha)
        diag.append(phase_to_complex(phase % 1))
    return np.diag(diag)


def build_Vtilde(q: Element, sym: BlockSymmetry) -> np.ndarray:
    D = sym.block_dim
    return np.kron(build_Ztilde(q, sym),
                   np.kron(np.eye(D, dtype=complex),
                           sym.rep.mats[sym.sub.h_of(q)]))


@dataclass
class MeasurementFamily:
    """Complete symmetric generalized Bell measurement {P_{r,q}}."""

    sym: BlockSymmetry
    s_elements: Tuple[Element, ...]
    outcomes: Tuple[Tuple[Element, Element], ...]
    vectors: np.ndarray          # (d^2, n_out), columns are outcome vectors
    anchor: np.ndarray
    v_mats: Dict[Tuple[Element, Element], np.ndarray]
    vt_mats: Dict[Element, np.ndarray]

    @property
    def n_outcomes(self) -> int:
        return self.vectors.shape[1]

    def projectors(self) -> List[np.ndarray]:
        return [np.outer(self.vectors[:, o], self.vectors[:, o].conj())
                for o in range(self.n_outcomes)]


def index_set(sym: BlockSymmetry) -> Tuple[Element, ...]:
    """S^mu = {g in G : h(g) in Q}, Q the lex-smallest center-coset reps."""
    Q = set(projreps.coset_reps_of_center(sym.rep))
    return tuple(g for g in sym.spec.elements() if sym.sub.h_of(g) in Q)


def build_measurement(sym: BlockSymmetry,
                      custom_set: Optional[Sequence[Element]] = None) -> MeasurementFamily:
    """The measurement family over S^mu x S^mu (or a custom index set)."""
    S = tuple(custom_set) if custom_set is not None else index_set(sym)
    d = sym.d
    anchor = anchor_state(sym)
    anchor_mat = anchor.reshape(d, d)
    vt_mats = {q: build_Vtilde(q, sym) for q in S}
    outcomes = []
    v_mats = {}
    cols = []
    for r in S:
        Ur = sym.mats[r]
        for q in S:
            V = Ur @ vt_mats[q]
            v_mats[(r, q)] = V
            w = (anchor_mat @ V.T).reshape(-1)
            outcomes.append((r, q))
            cols.append(w)
    vectors = np.array(cols).T
    return MeasurementFamily(sym=sym, s_elements=S, outcomes=tuple(outcomes),
                             vectors=vectors, anchor=anchor,
                             v_mats=v_mats, vt_mats=vt_mats)


@dataclass
class Lemma3Report:
    completeness_residual: float
    symmetry_residual: float
    orthonormality_residual: float
    trace_identity_residual: float
    failures: Tuple[str, ...]

    @property
    def passed(self) -> bool:
        return not self.failures


def verify_lemma3(fam: MeasurementFamily, tol: float = TOL) -> Lemma3Report:
    """Completeness, symmetry, and orthonormality of the measurement family."""
    sym = fam.sym
    d = sym.d
    W = fam.vectors
    failures = []

    comp = float(np.max(np.abs(W @ W.conj().T - np.eye(d * d))))
    if comp > tol:
        failures.append("completeness")

    symres = 0.0
    for g in sym.spec.elements():
        UU = np.kron(sym.mats[g], sym.mats[g])
        Wg = UU @ W
        # rank-one projectors commute with U x U iff each outcome vector is
        # mapped onto its own ray
        overlaps = np.sum(W.conj() * Wg, axis=0)
        resid = float(np.max(np.linalg.norm(Wg - W * overlaps, axis=0)))
        symres = max(symres, resid)
    if symres > tol:
        failures.append("symmetry")

    gram = np.zeros((fam.n_outcomes, fam.n_outcomes), dtype=complex)
    for a, oa in enumerate(fam.outcomes):
        Va = fam.v_mats[oa]
        for b, ob in enumerate(fam.outcomes):
            gram[a, b] = np.trace(Va.conj().T @ fam.v_mats[ob]) / d
    ortho = float(np.max(np.abs(gram - np.eye(fam.n_outcomes))))
    if ortho > tol:
        failures.append("orthonormality")

    D = sym.block_dim
    nK = len(sym.k_elements)
    ident = sym.spec.identity
    tres = 0.0
    for r in fam.s_elements:
        for q in fam.s_elements:
            val = np.trace(sym.mats[r].conj().T @ fam.vt_mats[q])
            want = D * D * nK if (r == ident and q == ident) else 0.0
            tres = max(tres, abs(val - want))
    if tres > tol:
        failures.append("trace-identity")

    return Lemma3Report(comp, symres, ortho, tres, tuple(failures))


# ---------------------------------------------------------------------------
# Closure of the V family (Lemmas 5 and 6)
# ---------------------------------------------------------------------------

def _f_index(sym: BlockSymmetry, p: Element, q: Element) -> Element:
    sub = sym.sub
    spec = sym.spec
    hp, hq = sub.h_of(p), sub.h_of(q)
    hsum = sub.add_h(hp, hq)
    phi_sum = spec.add(sym.rep.phi[hp], sym.rep.phi[hq])
    kpart = sub.add_k(sub.add_k(sub.k_of(p), sub.k_of(q)), sub.hat_k_of(phi_sum))
    return spec.add(sub.scale_k(hsum), kpart)


def _f_tilde_index(sym: BlockSymmetry, p: Element, q: Element) -> Element:
    sub = sym.sub
    spec = sym.spec
    hp, hq = sub.h_of(p), sub.h_of(q)
    hdiff = sub.sub_h(hq, hp)
    phi_diff = spec.sub(sym.rep.phi[hq], sym.rep.phi[hp])
    kpart = sub.add_k(sub.sub_k(sub.k_of(q), sub.k_of(p)), sub.hat_k_of(phi_diff))
    return spec.add(sub.scale_k(hdiff), kpart)


def compose_V(sym: BlockSymmetry, p: Element, q: Element) -> Tuple[Element, complex]:
    """Index f(p,q) and exact phase with Vt_p Vt_q = phase Vt_{f(p,q)}."""
    f = _f_index(sym, p, q)
    prod = build_Vtilde(p, sym) @ build_Vtilde(q, sym)
    target = build_Vtilde(f, sym)
    phase = np.trace(target.conj().T @ prod) / sym.d
    if np.max(np.abs(prod - phase * target)) > TOL:
        raise ConsistencyError(f"V closure fails at ({p},{q})")
    return f, complex(phase)


def compose_Vdag(sym: BlockSymmetry, p: Element, q: Element) -> Tuple[Element, complex]:
    """Index f~(p,q) and phase with Vt_p^dag Vt_q = phase Vt_{f~(p,q)}."""
    f = _f_tilde_index(sym, p, q)
    prod = build_Vtilde(p, sym).conj().T @ build_Vtilde(q, sym)
    target = build_Vtilde(f, sym)
    phase = np.trace(target.conj().T @ prod) / sym.d
    if np.max(np.abs(prod - phase * target)) > TOL:
        raise ConsistencyError(f"V-dagger closure fails at ({p},{q})")
    return f, complex(phase)


# ---------------------------------------------------------------------------
# Lemma 4: vanishing of the twisted trace network
# ---------------------------------------------------------------------------

def protocol_tensor(sym: BlockSymmetry) -> MPSTensor:
    """Bond-d tensor of the glued fiducial network: E_ii (x) |j><k| (x) 1_D.

    Its state equals the representative state times a decoupled loop factor;
    the physical symmetry fits into its virtual trace, which is what the
    vanishing lemma is about.
    """
    K = sym.k_elements
    D = sym.block_dim
    d = sym.d
    nK = len(K)
    arr = np.zeros((d, d, d), dtype=complex)
    for i in range(nK):
        for j in range(D):
            for k in range(D):
                p = (i * D + j) * D + k
                for c in range(D):
                    arr[p, (i * D + j) * D + c, (i * D + k) * D + c] = 1.0
    return MPSTensor(arr)


def verify_lemma4(sym: BlockSymmetry, n: int, tol: float = PRUNE_TOL) -> bool:
    """tr[U_g A^{p_1} ... A^{p_n}] vanishes for every U_g != 1 and all p."""
    A = protocol_tensor(sym).array
    kernel = set(sym.kernel())
    for g in sym.spec.elements():
        R = np.einsum("ab,pbc->pac", sym.mats[g], A)
        for _ in range(n - 1):
            R = np.einsum("xab,pbc->xpac", R, A).reshape(-1, sym.d, sym.d)
        amps = np.trace(R, axis1=1, axis2=2)
        if g in kernel:
            if np.max(np.abs(amps)) < tol:
                return False  # identity insertion must reproduce the state
        else:
            if np.max(np.abs(amps)) > tol:
                return False
    return True


# ---------------------------------------------------------------------------
# Slide-through corrections
# ---------------------------------------------------------------------------

@dataclass
class CorrectionPlan:
    """Per-site correction data derived from the measurement outcomes.

    Pair b couples the right virtual leg of site b with the left virtual leg
    of site b+1 (mod n).  Site i is corrected by Vt_{q_{i-1}} U_{u_i}^dag
    with u_i = r_0 + ... + r_{i-1} + |K| h(q_{i-1}); the global leftover is
    U_{r_0 + ... + r_{n-1}}, which vanishing-probability branches never make
    nontrivial.
    """

    outcomes: Tuple[Tuple[Element, Element], ...]
    site_elements: Tuple[Element, ...]
    site_qs: Tuple[Element, ...]
    global_element: Element

    def site_unitaries(self, sym: BlockSymmetry) -> List[np.ndarray]:
        ops = []
        for u, q in zip(self.site_elements, self.site_qs):
            ops.append(build_Vtilde(q, sym) @ sym.mats[u].conj().T)
        return ops


def slide_corrections(sym: BlockSymmetry,
                      outcomes: Sequence[Tuple[Element, Element]]) -> CorrectionPlan:
    spec = sym.spec
    sub = sym.sub
    n = len(outcomes)
    for r, q in outcomes:
        if sub.h_of(r) not in set(projreps.coset_reps_of_center(sym.rep)) or \
           sub.h_of(q) not in set(projreps.coset_reps_of_center(sym.rep)):
            raise MembershipError(f"outcome ({r},{q}) outside the index set")
    total = spec.identity
    prefix = [spec.identity]
    for r, _ in outcomes:
        total = spec.add(total, r)
        prefix.append(total)
    site_elements = []
    site_qs = []
    for i in range(n):
        b = (i - 1) % n
        q_b = outcomes[b][1]
        u = spec.add(prefix[i], sub.scale_k(sub.h_of(q_b)))
        site_elements.append(u)
        site_qs.append(q_b)
    return CorrectionPlan(outcomes=tuple(outcomes),
                          site_elements=tuple(site_elements),
                          site_qs=tuple(site_qs),
                          global_element=total)


def verify_slide_through(sym: BlockSymmetry) -> float:
    """Residual of the two slide rules on the per-site fiducial state.

    Left rule: U_r^dag on the left leg equals U_r on the physical and right
    legs (from the threefold invariance).  Right rule: Vt_q on the left leg
    equals U_{|K| h(q)}^dag Vt_q on the physical leg.
    """
    F = build_fiducial_rep(sym).psi
    worst = 0.0
    for r in sym.spec.elements():
        U = sym.mats[r]
        lhs = np.einsum("ax,xbc->abc", U.conj().T, F)
        rhs = np.einsum("by,cz,ayz->abc", U, U, F)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    for q in index_set(sym):
        Vt = build_Vtilde(q, sym)
        slid = sym.mats[sym.sub.scale_k(sym.sub.h_of(q))].conj().T @ Vt
        lhs = np.einsum("ax,xbc->abc", Vt, F)
        rhs = np.einsum("by,ayc->abc", slid, F)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


# ---------------------------------------------------------------------------
# Relocation schedule (step ii of the protocol)
# ---------------------------------------------------------------------------

def relocation_schedule(n: int) -> List[List[Tuple[int, int]]]:
    """Layers of disjoint swap gates moving each right virtual qudit one site on.

    Qudit 3i, 3i+1, 3i+2 are the left virtual, physical and right virtual
    qudits of site i.  Gates act between nearest-neighbor sites; gates within
    a layer touch disjoint sites, and two layers suffice on an even ring.
    """
    layers: List[List[Tuple[int, int]]] = [[], []]
    if n % 2 == 1 and n > 1:
        layers.append([])
    for b in range(n):
        gate = (3 * b + 2, (3 * (b + 1)) % (3 * n))
        if n % 2 == 1 and b == n - 1:
            layers[2].append(gate)
        else:
            layers[b % 2].append(gate)
    return [layer for layer in layers if layer]


# ---------------------------------------------------------------------------
# Protocol runner
# ---------------------------------------------------------------------------

@dataclass
class ProtocolTranscript:
    """One protocol branch: outcomes, probability, corrections, final fidelity."""

    outcomes: Tuple[Tuple[Element, Element], ...]
    probability: float
    fidelity: float
    correction_elements: Tuple[Element, ...]
    correction_qs: Tuple[Element, ...]
    global_element: Element
    global_is_identity: bool


@dataclass
class ProtocolResult:
    transcripts: List[ProtocolTranscript]
    probability_sum: float
    min_fidelity: float
    mode: str

    @property
    def all_corrected(self) -> bool:
        return self.min_fidelity >= 1 - FIDELITY_TOL


def _pair_contract_grow(tail: np.ndarray, F: np.ndarray, W: np.ndarray,
                        d: int) -> np.ndarray:
    """All measurement children at once when gluing a fresh site.

    tail axes: (..., R_prev); F axes: (L, P, R).  Output axes:
    (..., outcome, P, R).  The relocation swap on the measured pair is fused
    into the contraction: the outcome bra reads (R-content, L-content), which
    is the post-swap slot order.
    """
    n_out = W.shape[1]
    Wc = W.conj().reshape(d, d, n_out)
    T1 = np.tensordot(tail, Wc, axes=([-1], [0]))       # (..., L, out)
    child = np.tensordot(T1, F, axes=([-2], [0]))       # (..., out, P, R)
    return child


def _pair_contract_close(tail: np.ndarray, W: np.ndarray, d: int) -> np.ndarray:
    """Close the ring: contract the last pair (R_{n-1}, L_0) for all outcomes.

    tail axes: (L_0, P_0, ..., P_{n-1}, R_{n-1}); output axes: (P..., outcome).
    """
    n_out = W.shape[1]
    Wc = W.conj().reshape(d, d, n_out)
    return np.einsum("y...x,xyo->...o", tail, Wc, optimize=True)


def run_protocol(sym: BlockSymmetry, n: int, mode: str = "enumerate",
                 seed: int = 0, trials: int = 100,
                 prune: float = PRUNE_TOL) -> ProtocolResult:
    """Execute the four-step preparation protocol on n sites.

    enumerate mode walks every branch of the measurement tree with exact
    probabilities; sample mode draws ``trials`` Born-rule paths from a seeded
    stream.  Every surviving branch is corrected with its slide-through plan
    and compared against the representative state.
    """
    d = sym.d
    if d**n > mps.AMPLITUDE_BUDGET:
        raise mps.BudgetError("physical register exceeds the desk budget")
    fam = build_measurement(sym)
    W = fam.vectors
    F = build_fiducial_rep(sym).psi
    target = mps.expand_state(build_representative(sym), n)
    kernel = set(sym.kernel())
    corr_cache: Dict[Tuple[Element, Element], np.ndarray] = {}

    def correction_op(u: Element, q: Element) -> np.ndarray:
        key = (u, q)
        if key not in corr_cache:
            corr_cache[key] = fam.vt_mats[q] @ sym.mats[u].conj().T
        return corr_cache[key]

    def finish(outcome_path: List[int], final: np.ndarray, prob: float,
               transcripts: List[ProtocolTranscript]) -> None:
        outcomes = tuple(fam.outcomes[o] for o in outcome_path)
        plan = slide_corrections(sym, outcomes)
        state = DenseState((d,) * n, final.copy())
        for site, (u, q) in enumerate(zip(plan.site_elements, plan.site_qs)):
            state = engine.apply_local(state, correction_op(u, q), [site])
        fid = engine.fidelity(state, target)
        transcripts.append(ProtocolTranscript(
            outcomes=outcomes,
            probability=prob,
            fidelity=fid,
            correction_elements=plan.site_elements,
            correction_qs=plan.site_qs,
            global_element=plan.global_element,
            global_is_identity=plan.global_element in kernel,
        ))

    transcripts: List[ProtocolTranscript] = []

    if mode == "enumerate":
        def walk(tail: np.ndarray, site: int, path: List[int]) -> None:
            if site == n:
                finals = _pair_contract_close(tail, W, d)
                probs = np.linalg.norm(finals.reshape(-1, finals.shape[-1]),
                                       axis=0) ** 2
                for o in range(finals.shape[-1]):
                    if probs[o] < prune:
                        continue
                    finish(path + [o], finals[..., o], float(probs[o]), transcripts)
                return
            children = _pair_contract_grow(tail, F, W, d)
            out_axis = children.ndim - 3
            norms2 = np.sum(
                np.abs(children) ** 2,
                axis=tuple(i for i in range(children.ndim) if i != out_axis),
            )
            for o in range(children.shape[out_axis]):
                if norms2[o] < prune:
                    continue
                walk(np.take(children, o, axis=out_axis), site + 1, path + [o])

        walk(F.copy(), 1, [])
        psum = sum(t.probability for t in transcripts)
        minf = min((t.fidelity for t in transcripts), default=1.0)
        return ProtocolResult(transcripts, psum, minf, "enumerate")

    if mode == "sample":
        Wc = W.conj().reshape(d, d, fam.n_outcomes)
        gram_F = np.tensordot(F.conj(), F, axes=([1, 2], [1, 2]))  # over (P, R)
        for t in range(trials):
            rng = np.random.default_rng([seed, t])
            tail = F.copy()
            path: List[int] = []
            for site in range(1, n):
                T1 = np.tensordot(tail, Wc, axes=([-1], [0]))  # (..., L, out)
                norms2 = np.einsum("...yo,yz,...zo->o", T1.conj(), gram_F, T1,
                                   optimize=True).real
                p = norms2 / norms2.sum()
                o = int(rng.choice(len(p), p=p))
                path.append(o)
                tail = np.tensordot(T1[..., o], F, axes=([-1], [0]))
            finals = _pair_contract_close(tail, W, d)
            probs = np.linalg.norm(finals.reshape(-1, finals.shape[-1]), axis=0) ** 2
            pbr = probs / probs.sum()
            o = int(rng.choice(len(pbr), p=pbr))
            path.append(o)
            finish(path, finals[..., o], float(probs[o]), transcripts)
        psum = sum(t.probability for t in transcripts)
        minf = min((t.fidelity for t in transcripts), default=1.0)
        return ProtocolResult(transcripts, psum, minf, "sample")

    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# On-site trivialization and the trivial-to-SPT plan
# ---------------------------------------------------------------------------

def common_eigenbasis(mats: Sequence[np.ndarray], seed: int = 0,
                      tol: float = 1e-9) -> np.ndarray:
    """Common eigenbasis of a family of commuting unitaries.

    Exists iff the family is abelian; a non-commuting family raises
    UnsupportedSymmetryError.
    """
    dim = mats[0].shape[0]
    for A in mats:
        for B in mats:
            if np.max(np.abs(A @ B - B @ A)) > 1e-8:
                raise UnsupportedSymmetryError("no common symmetric eigenbasis exists")
    rng = np.random.default_rng(seed)
    for attempt in range(8):
        coeff = rng.standard_normal(len(mats)) + 1j * rng.standard_normal(len(mats))
        Hmat = np.zeros((dim, dim), dtype=complex)
        for c, U in zip(coeff, mats):
            Hmat += c * U + np.conj(c) * U.conj().T
        _, V = np.linalg.eigh(Hmat)
        ok = all(
            np.max(np.abs((V.conj().T @ U @ V) - np.diag(np.diag(V.conj().T @ U @ V)))) < tol
            for U in mats
        )
        if ok:
            return V
    raise ConsistencyError("failed to build a joint eigenbasis")


@dataclass
class OnsiteBranch:
    outcomes: Tuple[int, ...]
    probability: float
    state: DenseState


def trivialize_onsite(state: DenseState, mats: Sequence[np.ndarray],
                      mode: str = "enumerate", seed: int = 0,
                      prune: float = PRUNE_TOL) -> List[OnsiteBranch]:
    """Measure every site in the joint symmetric eigenbasis of the family.

    Every branch of the resulting tree is a symmetric pure product state;
    this is the abelian-symmetry trivialization move.
    """
    V = common_eigenbasis(mats, seed=seed)
    dim = mats[0].shape[0]
    family = [np.outer(V[:, k], V[:, k].conj()) for k in range(dim)]
    branches = [OnsiteBranch((), 1.0, state)]
    for site in range(state.num_sites):
        nxt: List[OnsiteBranch] = []
        for br in branches:
            if mode == "enumerate":
                for k, p, post in engine.measure_enumerate(br.state, family, [site],
                                                           prune=prune):
                    nxt.append(OnsiteBranch(br.outcomes + (k,), br.probability * p, post))
            else:
                rng = np.random.default_rng([seed, site, len(nxt)])
                k, p, post = engine.measure_sample(br.state, family, [site], rng)
                nxt.append(OnsiteBranch(br.outcomes + (k,), br.probability * p, post))
        branches = nxt
    return branches


@dataclass
class TrivToSptPlan:
    """Two-stage plan: prepare SPT(mu) (x) SPT(mu^{-1}), then trivialize factor 2."""

    cls: CocycleClass
    inverse_cls: CocycleClass
    class_sum: CocycleClass

    @property
    def stages(self) -> Tuple[str, ...]:
        if self.cls.is_trivial:
            return ()
        return ("prepare-joint", "trivialize-inverse-factor")


def triv_to_spt_plan(cls: CocycleClass) -> TrivToSptPlan:
    inv = cls.neg()
    total = projreps.tensor_class_add(cls, inv)
    if not total.is_trivial:
        raise ConsistencyError("class plus inverse class is not trivial")
    return TrivToSptPlan(cls=cls, inverse_cls=inv, class_sum=total)


def execute_triv_to_spt(plan: TrivToSptPlan, n: int, seed: int = 0) -> Tuple[
        DenseState, List[OnsiteBranch]]:
    """Run the plan at desk scale: build the joint chain state and trivialize.

    Returns the mu-representative target and the measurement branches of the
    mu^{-1} factor; each branch leaves the joint state as target (x) product.
    """
    full_sub = SubgroupDecomposition(
        GroupSpec(plan.cls.group.factors), tuple(r for _, r in plan.cls.group.factors)
    )
    sym_mu = build_symmetry(full_sub, CocycleClass(full_sub.h_group(), plan.cls.entries),
                            seed=seed)
    sym_inv = build_symmetry(full_sub, CocycleClass(full_sub.h_group(),
                                                    plan.inverse_cls.entries), seed=seed)
    target = mps.expand_state(build_representative(sym_mu), n)
    chain_inv = mps.expand_state(build_representative(sym_inv), n)
    wmats = [sym_inv.mats[g] for g in sym_inv.spec.elements()]
    branches = trivialize_onsite(chain_inv, wmats, mode="enumerate", seed=seed)
    return target, branches


# ---------------------------------------------------------------------------
# Quasi-commuting lift
# ---------------------------------------------------------------------------

@dataclass
class CommutingLift:
    """Strictly commuting ancilla implementation of a quasi-commuting unitary."""

    m: int
    phi0: Optional[np.ndarray]
    phi1: Optional[np.ndarray]
    lifted: np.ndarray
    residual: float


def quasi_commutation_phases(V: np.ndarray, mats: Dict[Element, np.ndarray],
                             tol: float = 1e-8) -> Dict[Element, complex]:
    """Phases c_g with U_g V = c_g V U_g; error if V is not quasi-commuting."""
    dim = V.shape[0]
    phases = {}
    for g, U in mats.items():
        M = U @ V @ U.conj().T @ V.conj().T
        c = np.trace(M) / dim
        if abs(abs(c) - 1.0) > tol or np.max(np.abs(M - c * np.eye(dim))) > tol:
            raise UnsupportedSymmetryError("V does not quasi-commute with the family")
        phases[g] = complex(c)
    return phases


def quasi_commuting_lift(V: np.ndarray, mats: Dict[Element, np.ndarray],
                         characters: Dict[object, Dict[Element, complex]],
                         m_max: int = 4) -> CommutingLift:
    """Ancilla lift of a quasi-commuting unitary.

    Searches U^{(x)m} for a pair of one-dimensional sub-representations whose
    relative character cancels the quasi-commutation phases, then builds
    Vt = |phi1><phi0| (x) V + h.c. (+) identity, which commutes with
    U^{(x)m} (x) U and implements V on the phi0 sector.
    """
    phases = quasi_commutation_phases(V, mats)
    if all(abs(c - 1.0) < 1e-10 for c in phases.values()):
        return CommutingLift(m=0, phi0=None, phi1=None, lifted=V.copy(), residual=0.0)

    elements = list(mats.keys())
    order = len(elements)
    for m in range(1, m_max + 1):
        powers = {g: _tensor_power(mats[g], m) for g in elements}
        dim_m = powers[elements[0]].shape[0]
        # isotypic projectors of the available 1D irreps
        sectors = {}
        for label, chi in characters.items():
            P = sum(np.conj(chi[g]) * powers[g] for g in elements) / order
            if np.linalg.norm(P) > 1e-8:
                sectors[label] = P
        for a, chi_a in characters.items():
            if a not in sectors:
                continue
            for b, chi_b in characters.items():
                if b not in sectors:
                    continue
                if a != b and all(abs(chi_b[g] - chi_a[g] * np.conj(phases[g])) < 1e-8
                                  for g in elements):
                    phi0 = _leading_vector(sectors[a])
                    phi1 = _leading_vector(sectors[b])
                    lifted = _build_lift(phi0, phi1, V)
                    resid = _lift_residual(lifted, powers, mats, elements, m)
                    if resid < TOL:
                        return CommutingLift(m=m, phi0=phi0, phi1=phi1,
                                             lifted=lifted, residual=resid)
    raise LiftSearchError(f"no commuting lift found with m <= {m_max}")


def _tensor_power(U: np.ndarray, m: int) -> np.ndarray:
    out = np.array([[1.0 + 0j]])
    for _ in range(m):
        out = np.kron(out, U)
    return out


def _leading_vector(P: np.ndarray) -> np.ndarray:
    evals, evecs = np.linalg.eigh((P + P.conj().T) / 2)
    return evecs[:, -1]


def _build_lift(phi0: np.ndarray, phi1: np.ndarray, V: np.ndarray) -> np.ndarray:
    dim_anc = len(phi0)
    dim = V.shape[0]
    P0 = np.outer(phi0, phi0.conj())
    P1 = np.outer(phi1, phi1.conj())
    cross = np.outer(phi1, phi0.conj())
    rest = np.eye(dim_anc) - P0 - P1
    return (np.kron(cross, V) + np.kron(cross.conj().T, V.conj().T)
            + np.kron(rest, np.eye(dim, dtype=complex)))


def _lift_residual(lifted: np.ndarray, powers: Dict[Element, np.ndarray],
                   mats: Dict[Element, np.ndarray], elements: Sequence[Element],
                   m: int) -> float:
    resid = 0.0
    for g in elements:
        big = np.kron(powers[g], mats[g])
        resid = max(resid, float(np.max(np.abs(big @ lifted - lifted @ big))))
    return resid
