"""Cocycles, mu-irreps, projective centers and the operator bases they generate.

Cohomology classes of a finite abelian group ``H = prod Z_{n_m}`` are stored
as strictly upper-triangular integer matrices ``mu_ij`` reduced modulo
``gcd(n_i, n_j)``.  The standard cocycle of a class has the exact rational
phase ``sum_{i<j} mu_ij a_i b_j / gcd(n_i, n_j)``, and the mu-irrep is built
from the cocycle-twisted regular representation by numerically extracting one
irreducible block.  The twisted-regular machinery works from a plain
multiplication table, so the dihedral module reuses it unchanged.

Triviality of an exact cocycle is decided by the antisymmetrized pairing
``beta(g, h) = gamma(g, h) / gamma(h, g)`` (a complete class invariant for
finite abelian groups); when trivial, an explicit coboundary witness is
constructed and re-verified against every pair before it is returned.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .groups import (
    Element,
    GroupSpec,
    GroupStructureError,
    MembershipError,
)

TOL = 1e-10
RANK_TOL = 1e-8


class ConsistencyError(RuntimeError):
    """An internal invariant of a construction failed to verify."""


def phase_to_complex(phase: Fraction) -> complex:
    return complex(np.exp(2j * np.pi * float(phase)))


def rationalize_phase(z: complex, max_den: int = 4096, tol: float = 1e-8) -> Fraction:
    """Angle of a unit complex number as an exact fraction of a turn."""
    if abs(abs(z) - 1.0) > 1e-6:
        raise ConsistencyError(f"phase {z} is not on the unit circle")
    turns = float(np.angle(z)) / (2 * np.pi) % 1.0
    frac = Fraction(turns).limit_denominator(max_den) % 1
    if abs(phase_to_complex(frac) - z / abs(z)) > tol:
        raise ConsistencyError(f"phase {z} is not a small-denominator root of unity")
    return frac


# ---------------------------------------------------------------------------
# Cohomology classes and cocycles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CocycleClass:
    """Element of H^2(H, U(1)) in the upper-triangular normal form."""

    group: GroupSpec
    entries: Tuple[Tuple[int, ...], ...]

    def __post_init__(self):
        m = self.group.num_factors
        if len(self.entries) != m or any(len(row) != m for row in self.entries):
            raise GroupStructureError("class matrix shape does not match factor count")
        mods = self.group.moduli
        for i in range(m):
            for j in range(m):
                v = self.entries[i][j]
                if j <= i:
                    if v != 0:
                        raise GroupStructureError("class matrix must be strictly upper triangular")
                else:
                    d = math.gcd(mods[i], mods[j])
                    if not 0 <= v < max(d, 1):
                        raise GroupStructureError(
                            f"class entry {v} not reduced mod gcd {d}"
                        )

    @property
    def is_trivial(self) -> bool:
        return all(v == 0 for row in self.entries for v in row)

    def entry_modulus(self, i: int, j: int) -> int:
        mods = self.group.moduli
        return math.gcd(mods[i], mods[j])

    def neg(self) -> "CocycleClass":
        m = self.group.num_factors
        rows = tuple(
            tuple(
                (-self.entries[i][j]) % self.entry_modulus(i, j) if j > i else 0
                for j in range(m)
            )
            for i in range(m)
        )
        return CocycleClass(self.group, rows)


def trivial_class(group: GroupSpec) -> CocycleClass:
    m = group.num_factors
    return CocycleClass(group, tuple((0,) * m for _ in range(m)))


def cocycle_classes(group: GroupSpec) -> List[CocycleClass]:
    """All classes of H^2(H, U(1)), enumerated entrywise."""
    m = group.num_factors
    mods = group.moduli
    ranges = []
    positions = []
    for i in range(m):
        for j in range(i + 1, m):
            positions.append((i, j))
            ranges.append(range(math.gcd(mods[i], mods[j])))
    classes = []
    for combo in itertools.product(*ranges):
        rows = [[0] * m for _ in range(m)]
        for (i, j), v in zip(positions, combo):
            rows[i][j] = v
        classes.append(CocycleClass(group, tuple(tuple(r) for r in rows)))
    return classes


def tensor_class_add(c1: CocycleClass, c2: CocycleClass) -> CocycleClass:
    """Class of the tensor product of two projective reps: entrywise sum."""
    if c1.group != c2.group:
        raise GroupStructureError("classes live over different groups")
    m = c1.group.num_factors
    rows = tuple(
        tuple(
            (c1.entries[i][j] + c2.entries[i][j]) % c1.entry_modulus(i, j) if j > i else 0
            for j in range(m)
        )
        for i in range(m)
    )
    return CocycleClass(c1.group, rows)


@dataclass(frozen=True)
class Cocycle:
    """A 2-cocycle on a finite abelian group with exact rational phases."""

    group: GroupSpec
    table: Dict[Tuple[Element, Element], Fraction]

    def phase(self, g: Element, h: Element) -> Fraction:
        return self.table[(g, h)]

    def value(self, g: Element, h: Element) -> complex:
        return phase_to_complex(self.table[(g, h)])

    def verify_cocycle_condition(self) -> None:
        els = list(self.group.elements())
        for g in els:
            for h in els:
                gh = self.group.add(g, h)
                for k in els:
                    lhs = (self.table[(g, h)] + self.table[(gh, k)]) % 1
                    rhs = (self.table[(h, k)] + self.table[(g, self.group.add(h, k))]) % 1
                    if lhs != rhs:
                        raise ConsistencyError(
                            f"cocycle condition fails at ({g},{h},{k})"
                        )

    def beta(self, g: Element, h: Element) -> Fraction:
        """Antisymmetrized pairing, invariant under coboundaries."""
        return (self.table[(g, h)] - self.table[(h, g)]) % 1


def cocycle_condition_holds(coc: Cocycle) -> bool:
    """Exhaustive 2-cocycle condition over all |H|^3 triples, exactly.

    Phases are scaled to integers over a common denominator and checked with
    vectorized modular arithmetic, which keeps order-64 groups fast.
    """
    group = coc.group
    els = list(group.elements())
    n = len(els)
    index = {g: i for i, g in enumerate(els)}
    den = 1
    for v in coc.table.values():
        den = den * v.denominator // math.gcd(den, v.denominator)
    num = np.zeros((n, n), dtype=np.int64)
    add = np.zeros((n, n), dtype=np.int64)
    for g in els:
        for h in els:
            num[index[g], index[h]] = int(coc.table[(g, h)] * den)
            add[index[g], index[h]] = index[group.add(g, h)]
    gh = add  # (g, h) -> index of g+h
    lhs = num[:, :, None] + num[gh, :]     # p(g,h) + p(g+h, k)
    rhs = num[None, :, :] + num[:, gh]     # p(h,k) + p(g, h+k)
    return bool(np.all((lhs - rhs) % den == 0))


def standard_cocycle(cls: CocycleClass) -> Cocycle:
    """Explicit normal-form cocycle of a class.

    gamma(a, b) has phase sum_{i<j} mu_ij a_i b_j / gcd(n_i, n_j) mod 1; the
    2-cocycle condition holds exactly because each summand is bilinear.
    """
    group = cls.group
    m = group.num_factors
    table: Dict[Tuple[Element, Element], Fraction] = {}
    for a in group.elements():
        for b in group.elements():
            phase = Fraction(0)
            for i in range(m):
                for j in range(i + 1, m):
                    mu = cls.entries[i][j]
                    if mu:
                        phase += Fraction(mu * a[i] * b[j], cls.entry_modulus(i, j))
            table[(a, b)] = phase % 1
    return Cocycle(group, table)


def coboundary(group: GroupSpec, nu: Dict[Element, Fraction]) -> Cocycle:
    """delta(nu)(g, h) = nu(g + h) - nu(g) - nu(h) mod 1."""
    table = {}
    for g in group.elements():
        for h in group.elements():
            table[(g, h)] = (nu[group.add(g, h)] - nu[g] - nu[h]) % 1
    return Cocycle(group, table)


def cocycle_ratio(a: Cocycle, b: Cocycle) -> Cocycle:
    if a.group.moduli != b.group.moduli:
        raise GroupStructureError("cocycles live over different groups")
    table = {k: (a.table[k] - b.table[k]) % 1 for k in a.table}
    return Cocycle(a.group, table)


def cocycle_is_trivial(coc: Cocycle) -> Tuple[bool, Optional[Dict[Element, Fraction]]]:
    """Decide whether a cocycle is a coboundary; return an explicit witness if so.

    The class vanishes iff the pairing beta is identically zero.  In that case
    all lifts commute, so normalizing the lifts along the factor-ordered
    generator words reduces the cocycle to per-factor overflow phases, each of
    which is integrated to a witness.  The assembled witness is re-verified
    against every pair before returning.
    """
    group = coc.group
    mods = group.moduli
    els = list(group.elements())
    ident = group.identity

    offset = coc.table[(ident, ident)]
    p = {k: (v - offset) % 1 for k, v in coc.table.items()}

    for g in els:
        for h in els:
            if (p[(g, h)] - p[(h, g)]) % 1 != 0:
                return False, None

    def gen(m: int) -> Element:
        return tuple(1 if i == m else 0 for i in range(len(mods)))

    # Phase of the ordered generator word for g, relative to the bare lift.
    lam: Dict[Element, Fraction] = {}
    for g in els:
        acc = ident
        total = Fraction(0)
        for m, gm in enumerate(g):
            if mods[m] == 1:
                continue
            em = gen(m)
            for _ in range(gm):
                total += p[(acc, em)]
                acc = group.add(acc, em)
        lam[g] = total % 1

    # Per-factor overflow phase of the normalized lifts.
    delta = []
    for m, nm in enumerate(mods):
        em = gen(m)
        d = Fraction(0)
        for s in range(1, nm):
            d += p[(tuple(s if i == m else 0 for i in range(len(mods))), em)]
        delta.append(d % 1)

    witness: Dict[Element, Fraction] = {}
    for g in els:
        rho = sum((Fraction(gm * 1, 1) * delta[m] / mods[m] for m, gm in enumerate(g)),
                  Fraction(0))
        witness[g] = (lam[g] - rho - offset) % 1

    for g in els:
        for h in els:
            lhs = (witness[group.add(g, h)] - witness[g] - witness[h]) % 1
            if lhs != coc.table[(g, h)] % 1:
                raise ConsistencyError(
                    "coboundary witness failed verification; pairing logic broken"
                )
    return True, witness


def same_class(a: Cocycle, b: Cocycle) -> bool:
    """Two exact cocycles represent the same class iff their pairings agree."""
    for g in a.group.elements():
        for h in a.group.elements():
            if a.beta(g, h) != (b.table[(g, h)] - b.table[(h, g)]) % 1:
                return False
    return True


# ---------------------------------------------------------------------------
# Twisted regular representation and block extraction (table based, reusable)
# ---------------------------------------------------------------------------

def twisted_regular_from_table(mult: np.ndarray, gamma: np.ndarray) -> List[np.ndarray]:
    """Left twisted regular representation R_g |x> = gamma[g, x] |g x>."""
    n = mult.shape[0]
    mats = []
    for g in range(n):
        R = np.zeros((n, n), dtype=complex)
        for x in range(n):
            R[mult[g, x], x] = gamma[g, x]
        mats.append(R)
    return mats


def commutant_element(mats: Sequence[np.ndarray], seed: int = 0) -> np.ndarray:
    """Generic Hermitian element of the commutant of a unitary family."""
    n = mats[0].shape[0]
    rng = np.random.default_rng(seed)
    R = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    R = (R + R.conj().T) / 2
    C = sum(U @ R @ U.conj().T for U in mats) / len(mats)
    return (C + C.conj().T) / 2


def _eigenspace_clusters(evals: np.ndarray, tol: float) -> List[np.ndarray]:
    order = np.argsort(evals)
    clusters = [[order[0]]]
    for idx in order[1:]:
        if evals[idx] - evals[clusters[-1][-1]] < tol:
            clusters[-1].append(idx)
        else:
            clusters.append([idx])
    return [np.array(c) for c in clusters]


def invariant_blocks(mats: Sequence[np.ndarray], seed: int = 0) -> List[np.ndarray]:
    """Isometries onto the irreducible invariant subspaces cut out by a
    generic commutant element.  Each returned W has orthonormal columns."""
    C = commutant_element(mats, seed=seed)
    evals, evecs = np.linalg.eigh(C)
    scale = max(1.0, float(np.max(np.abs(evals))))
    blocks = []
    for cluster in _eigenspace_clusters(evals, tol=1e-8 * scale):
        W = evecs[:, cluster]
        blocks.append(W)
    return blocks


def extract_irrep_block(mats: Sequence[np.ndarray], dim_expected: int,
                        seed: int = 0) -> np.ndarray:
    """Isometry onto one irreducible block of the expected dimension.

    Retries with fresh commutant elements in case of an accidental eigenvalue
    collision; a persistent mismatch is an internal consistency error.
    """
    for attempt in range(4):
        blocks = invariant_blocks(mats, seed=seed + attempt)
        for W in blocks:
            if W.shape[1] != dim_expected:
                continue
            residual = max(
                float(np.max(np.abs(U @ W - W @ (W.conj().T @ U @ W))))
                for U in mats
            )
            if residual < 1e-8:
                return W
    raise ConsistencyError(
        f"no invariant block of dimension {dim_expected} found"
    )


# ---------------------------------------------------------------------------
# Projective representations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProjectiveRep:
    """Unitary family omega_g with cocycle gamma, over a finite abelian group."""

    group: GroupSpec
    mats: Dict[Element, np.ndarray]
    cocycle: Cocycle
    dim: int
    phi: Dict[Element, Element]
    center: Tuple[Element, ...]

    def omega(self, g: Element) -> np.ndarray:
        return self.mats[g]

    def verify(self, tol: float = TOL) -> None:
        group = self.group
        for g in group.elements():
            U = self.mats[g]
            if np.max(np.abs(U @ U.conj().T - np.eye(self.dim))) > tol:
                raise ConsistencyError(f"omega_{g} is not unitary")
            for h in group.elements():
                prod = U @ self.mats[h]
                target = self.cocycle.value(g, h) * self.mats[group.add(g, h)]
                if np.max(np.abs(prod - target)) > tol:
                    raise ConsistencyError(f"projective relation fails at ({g},{h})")
        # trace condition and dimension identity
        for h in group.elements():
            t = abs(np.trace(self.mats[h]))
            if h in self.center:
                if abs(t - self.dim) > tol:
                    raise ConsistencyError(f"central trace |tr omega_{h}| != D")
            else:
                if t > tol:
                    raise ConsistencyError(f"non-central trace tr omega_{h} != 0")
        if self.dim**2 * len(self.center) != group.order:
            raise ConsistencyError("dimension identity D^2 |Z| = |H| fails")

    @property
    def is_mnc(self) -> bool:
        return len(self.center) == 1


def _phi_from_class(cls: CocycleClass) -> Dict[Element, Element]:
    """Exact commutation homomorphism of the standard cocycle.

    phi(h) is the H-label with chi^{phi(h)}_g = gamma(g,h)/gamma(h,g); for the
    normal form the pairing is bilinear and is solved per generator.
    """
    group = cls.group
    mods = group.moduli
    m = group.num_factors
    coc = standard_cocycle(cls)
    phi = {}
    for h in group.elements():
        t = []
        for i in range(m):
            if mods[i] == 1:
                t.append(0)
                continue
            e_i = tuple(1 if s == i else 0 for s in range(m))
            b = coc.beta(e_i, h)
            val = b * mods[i]
            if val.denominator != 1:
                raise ConsistencyError("pairing is not a character of H")
            t.append(int(val) % mods[i])
        phi[h] = tuple(t)
    return phi


def phi_mu(rep: ProjectiveRep, tol: float = TOL) -> Dict[Element, Element]:
    """Commutation homomorphism computed from the matrices.

    For each h, the unique label t with omega_g omega_h = chi^t_g omega_h
    omega_g for all g, matched exactly against the character table of H.
    """
    group = rep.group
    els = list(group.elements())
    phi = {}
    for h in els:
        Wh = rep.mats[h]
        ratios = []
        for g in els:
            M = rep.mats[g] @ Wh @ (Wh @ rep.mats[g]).conj().T
            c = np.trace(M) / rep.dim
            if np.max(np.abs(M - c * np.eye(rep.dim))) > 1e-8:
                raise ConsistencyError("commutator of omegas is not scalar")
            ratios.append(c)
        found = None
        for t in els:
            if all(
                abs(ratios[i] - phase_to_complex(group.character(t, g))) < 1e-8
                for i, g in enumerate(els)
            ):
                found = t
                break
        if found is None:
            raise ConsistencyError(f"no character matches the commutation phases of {h}")
        phi[h] = found
    # homomorphism property
    for g in els:
        for h in els:
            if phi[group.add(g, h)] != group.add(phi[g], phi[h]):
                raise ConsistencyError("phi is not a homomorphism")
    return phi


def projective_center(rep: ProjectiveRep) -> Tuple[Element, ...]:
    ident = rep.group.identity
    return tuple(g for g in rep.group.elements() if rep.phi[g] == ident)


def mu_irrep(cls: CocycleClass, seed: int = 0) -> ProjectiveRep:
    """The mu-irrep of a class, via the twisted regular representation.

    The block dimension is fixed beforehand by D = sqrt(|H| / |Z|) with the
    center computed exactly from the class pairing; extraction failing to
    produce a block of that dimension is an error, not a choice.
    """
    group = cls.group
    els = list(group.elements())
    index = {g: i for i, g in enumerate(els)}
    n = len(els)

    coc = standard_cocycle(cls)
    phi = _phi_from_class(cls)
    ident = group.identity
    center = tuple(g for g in els if phi[g] == ident)
    dsq = group.order // len(center)
    dim = math.isqrt(dsq)
    if dim * dim != dsq:
        raise ConsistencyError("|H| / |Z| is not a perfect square")

    mult = np.zeros((n, n), dtype=int)
    gamma = np.zeros((n, n), dtype=complex)
    for g in els:
        for x in els:
            mult[index[g], index[x]] = index[group.add(g, x)]
            gamma[index[g], index[x]] = coc.value(g, x)
    regular = twisted_regular_from_table(mult, gamma)

    if dim == n:
        W = np.eye(n, dtype=complex)
    else:
        W = extract_irrep_block(regular, dim_expected=dim, seed=seed)
    mats = {g: W.conj().T @ regular[index[g]] @ W for g in els}

    rep = ProjectiveRep(group=group, mats=mats, cocycle=coc, dim=dim,
                        phi=phi, center=center)
    rep.verify()
    if phi_mu(rep) != phi:
        raise ConsistencyError("matrix phi disagrees with the class pairing")
    return rep


def pauli_rep() -> ProjectiveRep:
    """The Pauli projective irrep of Z2 x Z2: 1, sigma_z, sigma_x, sigma_y."""
    group = GroupSpec(((2, 1), (2, 1)))
    sz = np.array([[1, 0], [0, -1]], dtype=complex)
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sy = np.array([[0, -1j], [1j, 0]], dtype=complex)
    mats = {
        (0, 0): np.eye(2, dtype=complex),
        (1, 0): sz,
        (0, 1): sx,
        (1, 1): sy,
    }
    table = {}
    for g in group.elements():
        for h in group.elements():
            prod = mats[g] @ mats[h]
            target = mats[group.add(g, h)]
            val = np.trace(target.conj().T @ prod) / 2
            table[(g, h)] = rationalize_phase(complex(val), max_den=4)
    coc = Cocycle(group, table)
    phi = {g: (g[1], g[0]) for g in group.elements()}
    rep = ProjectiveRep(group=group, mats=mats, cocycle=coc, dim=2,
                        phi=phi, center=(group.identity,))
    rep.verify()
    return rep


def coset_reps_of_center(rep: ProjectiveRep) -> Tuple[Element, ...]:
    """Lexicographically smallest representative per coset of H / Z(H)."""
    group = rep.group
    seen = set()
    reps = []
    for g in group.elements():  # lex order
        coset = frozenset(group.add(g, z) for z in rep.center)
        if coset not in seen:
            seen.add(coset)
            reps.append(g)
    return tuple(reps)


def onb_from_irrep(rep: ProjectiveRep, Q: Sequence[Element]) -> List[np.ndarray]:
    """{omega_g}_{g in Q} as an operator basis; orthonormality is enforced.

    Q must hold exactly one representative per coset of H / Z(H), so that the
    family is orthonormal under <A, B> = tr(A^dag B) / D.
    """
    group = rep.group
    cosets = set()
    for g in Q:
        coset = frozenset(group.add(g, z) for z in rep.center)
        if coset in cosets:
            raise MembershipError(f"duplicate coset representative {g}")
        cosets.add(coset)
    if len(Q) != rep.dim**2:
        raise MembershipError("representative set has the wrong size")
    ops = [rep.mats[g] for g in Q]
    gram = np.array([
        [np.trace(a.conj().T @ b) / rep.dim for b in ops] for a in ops
    ])
    if np.max(np.abs(gram - np.eye(len(ops)))) > TOL:
        raise ConsistencyError("operator basis is not orthonormal")
    return ops


def numeric_cocycle(group: GroupSpec, mats: Dict[Element, np.ndarray],
                    max_den: int = 4096) -> Cocycle:
    """Exact cocycle of a unitary family closed under multiplication up to phase.

    Each matrix is first normalized to unit determinant so that the remaining
    phases are bounded-order roots of unity; the rationalization is verified
    entrywise.
    """
    dim = next(iter(mats.values())).shape[0]
    normed = {}
    for g, U in mats.items():
        det = np.linalg.det(U)
        normed[g] = U * np.exp(-1j * np.angle(det) / dim)
    table = {}
    for g in group.elements():
        for h in group.elements():
            prod = normed[g] @ normed[h]
            target = normed[group.add(g, h)]
            val = np.trace(target.conj().T @ prod) / dim
            if abs(abs(val) - 1.0) > 1e-8:
                raise ConsistencyError("family is not closed up to phase")
            table[(g, h)] = rationalize_phase(complex(val), max_den=max_den)
    return Cocycle(group, table)
