"""Dihedral-group (order 8) data and the join-and-measure protocols.

Elements are words r^a s^b with a in [4], b in [2], indexed as 2a + b.  The
tables carry the four linear characters, the two-dimensional linear irrep,
and the nontrivial two-dimensional projective irrep omega extracted from the
cocycle-twisted regular representation (the cocycle comes from spinor lifts;
its class is certified nontrivial by the absence of one-dimensional twisted
blocks).  The basis of omega is canonicalized so that the paper-level
relations between |Phi+->, |Psi+->, Z gates and P_f hold verbatim.

Two protocols are simulated end to end on a ring:

* SPT: per-site state space C2 (x) C2 holding halves of neighboring Bell
  pairs, symmetry omega (x) omega*, measurement {P0, P1, Pf}, eta
  measurement on joined pairs of error sites.
* GHZ: per-site state space C8 under the regular representation, measurement
  {|phi_i><phi_i|} plus the non-abelian projector, Fourier pair measurement
  on joined error sites.

Feasibility of joining follows the distance rule: an outcome string is
correctable at swap depth l iff every error site has another error site
within ring distance 2l.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import engine, projreps
from .engine import DenseState
from .projreps import ConsistencyError

TOL = 1e-10
PRUNE_TOL = 1e-12

D8Element = Tuple[int, int]  # (rotation count mod 4, reflection bit)


def d8_elements() -> Tuple[D8Element, ...]:
    return tuple((a, b) for a in range(4) for b in range(2))


def d8_index(g: D8Element) -> int:
    return 2 * g[0] + g[1]


def d8_mul(g: D8Element, h: D8Element) -> D8Element:
    a, b = g
    c, d = h
    return ((a + (c if b == 0 else -c)) % 4, (b + d) % 2)


def d8_inv(g: D8Element) -> D8Element:
    a, b = g
    return ((-a) % 4, 0) if b == 0 else (a, 1)


def linear_characters() -> Dict[int, Dict[D8Element, float]]:
    """The four 1D irreps: chi^{(i)}(r^a s^b) = eps^a delta^b."""
    chars = {}
    for i in range(4):
        eps = -1.0 if i >= 2 else 1.0
        delta = -1.0 if i % 2 else 1.0
        chars[i] = {g: (eps ** g[0]) * (delta ** g[1]) for g in d8_elements()}
    return chars


def two_dim_irrep() -> Dict[D8Element, np.ndarray]:
    """U^{(4)}: plane rotation by 90 degrees and the diag(1,-1) reflection."""
    R = np.array([[0.0, -1.0], [1.0, 0.0]], dtype=complex)
    S = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
    mats = {}
    for a in range(4):
        for b in range(2):
            mats[(a, b)] = np.linalg.matrix_power(R, a) @ (S if b else np.eye(2))
    return mats


def _spin_cocycle() -> Dict[Tuple[D8Element, D8Element], complex]:
    """Nontrivial 2-cocycle from spinor lifts: rho = exp(-i pi sigma_z / 4)."""
    rho = np.diag([np.exp(-1j * np.pi / 4), np.exp(1j * np.pi / 4)])
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    lift = {}
    for a in range(4):
        for b in range(2):
            lift[(a, b)] = np.linalg.matrix_power(rho, a) @ (sx if b else np.eye(2))
    gamma = {}
    for g in d8_elements():
        for h in d8_elements():
            prod = lift[g] @ lift[h]
            target = lift[d8_mul(g, h)]
            val = np.trace(target.conj().T @ prod) / 2
            if abs(abs(val) - 1.0) > 1e-12:
                raise ConsistencyError("spin lifts are not closed up to phase")
            gamma[(g, h)] = complex(np.round(val.real)) + 0j
    return gamma


def _has_one_dim_twisted_block(gamma: Dict[Tuple[D8Element, D8Element], complex]) -> bool:
    """A 1D block of the twisted regular rep exists iff the cocycle is trivial."""
    els = d8_elements()
    index = {g: i for i, g in enumerate(els)}
    mult = np.zeros((8, 8), dtype=int)
    gam = np.zeros((8, 8), dtype=complex)
    for g in els:
        for x in els:
            mult[index[g], index[x]] = index[d8_mul(g, x)]
            gam[index[g], index[x]] = gamma[(g, x)]
    mats = projreps.twisted_regular_from_table(mult, gam)
    for seed in range(3):
        blocks = projreps.invariant_blocks(mats, seed=seed)
        if all(W.shape[1] != 1 for W in blocks):
            return False
    return True


@dataclass(frozen=True)
class D8Tables:
    """All D8 data used by the protocols, verified at construction."""

    chars: Dict[int, Dict[D8Element, float]]
    u4: Dict[D8Element, np.ndarray]
    omega: Dict[D8Element, np.ndarray]
    omega_cocycle: Dict[Tuple[D8Element, D8Element], complex]
    site_symmetry: Dict[D8Element, np.ndarray]   # omega (x) omega^* on C4
    Z: np.ndarray                                # the local Z gate of the relations
    phi_plus: np.ndarray
    phi_minus: np.ndarray
    psi_pair: np.ndarray                         # (4, 2): the Psi+- column pair
    P0: np.ndarray
    P1: np.ndarray
    Pf: np.ndarray


def _extract_omega() -> Tuple[Dict[D8Element, np.ndarray],
                              Dict[Tuple[D8Element, D8Element], complex]]:
    gamma = _spin_cocycle()
    if _has_one_dim_twisted_block(gamma):
        raise ConsistencyError("cocycle built from spin lifts is trivial")
    els = d8_elements()
    index = {g: i for i, g in enumerate(els)}
    mult = np.zeros((8, 8), dtype=int)
    gam = np.zeros((8, 8), dtype=complex)
    for g in els:
        for x in els:
            mult[index[g], index[x]] = index[d8_mul(g, x)]
            gam[index[g], index[x]] = gamma[(g, x)]
    regular = projreps.twisted_regular_from_table(mult, gam)
    W = projreps.extract_irrep_block(regular, dim_expected=2, seed=1)
    omega = {g: W.conj().T @ regular[index[g]] @ W for g in els}
    for g in els:
        for h in els:
            err = np.max(np.abs(omega[g] @ omega[h]
                                - gamma[(g, h)] * omega[d8_mul(g, h)]))
            if err > TOL:
                raise ConsistencyError("extracted omega violates its cocycle")
    return omega, gamma


def _canonicalize(omega: Dict[D8Element, np.ndarray]) -> Tuple[
        Dict[D8Element, np.ndarray], np.ndarray]:
    """Rotate the omega basis so the odd one-dimensional sector operator is
    exactly diag(1, -1); returns (omega', Z)."""
    els = d8_elements()
    U = {g: np.kron(omega[g], omega[g].conj()) for g in els}
    chars = linear_characters()
    # the chi^{(1)} sector of omega (x) omega^*: one-dimensional
    P = sum(chars[1][g] * U[g] for g in els) / 8
    evals, evecs = np.linalg.eigh((P + P.conj().T) / 2)
    if evals[-1] < 0.5:
        raise ConsistencyError("omega (x) omega^* has no odd 1D sector")
    v = evecs[:, -1]
    M = np.sqrt(2) * v.reshape(2, 2).T        # sector vector = (1 (x) M)|Phi+>
    lam = np.linalg.eigvals(M)[0]
    M = M / lam
    if np.max(np.abs(M - M.conj().T)) > 1e-8 or \
       np.max(np.abs(M @ M - np.eye(2))) > 1e-8:
        raise ConsistencyError("odd-sector operator cannot be phase-normalized")
    # basis q with q^T M q^* = diag(1, -1); then omega' = q^dag omega q
    _, q = np.linalg.eigh(M.conj())
    q = q[:, ::-1]
    new_omega = {g: q.conj().T @ omega[g] @ q for g in els}
    Z = q.T @ M @ q.conj()
    if np.max(np.abs(Z - np.diag([1.0, -1.0]))) > 1e-8:
        raise ConsistencyError("failed to canonicalize the odd-sector operator")
    return new_omega, np.diag([1.0 + 0j, -1.0 + 0j])


@functools.lru_cache(maxsize=1)
def d8_tables() -> D8Tables:
    chars = linear_characters()
    u4 = two_dim_irrep()

    # group axioms of the word multiplication
    els = d8_elements()
    for g in els:
        for h in els:
            for k in els:
                if d8_mul(d8_mul(g, h), k) != d8_mul(g, d8_mul(h, k)):
                    raise ConsistencyError("multiplication table is not associative")
        if d8_mul(g, d8_inv(g)) != (0, 0):
            raise ConsistencyError("inverse table broken")

    # character orthogonality and U4 character pattern
    for i in range(4):
        for j in range(4):
            s = sum(chars[i][g] * chars[j][g] for g in els)
            if abs(s - (8.0 if i == j else 0.0)) > TOL:
                raise ConsistencyError("linear characters are not orthogonal")
    u4_char = {g: np.trace(u4[g]).real for g in els}
    if not (abs(u4_char[(0, 0)] - 2) < TOL and abs(u4_char[(2, 0)] + 2) < TOL):
        raise ConsistencyError("U4 character pattern broken")
    for g in els:
        if g not in ((0, 0), (2, 0)) and abs(u4_char[g]) > TOL:
            raise ConsistencyError("U4 character pattern broken")
    for g in els:
        for h in els:
            if np.max(np.abs(u4[g] @ u4[h] - u4[d8_mul(g, h)])) > TOL:
                raise ConsistencyError("U4 is not a representation")

    omega, gamma = _extract_omega()
    omega, Z = _canonicalize(omega)
    site = {g: np.kron(omega[g], omega[g].conj()) for g in els}

    phi_plus = np.zeros(4, dtype=complex)
    phi_plus[0] = phi_plus[3] = 1 / np.sqrt(2)
    phi_minus = np.kron(np.eye(2), Z) @ phi_plus
    P0 = np.outer(phi_plus, phi_plus.conj())
    P1 = np.outer(phi_minus, phi_minus.conj())
    Pf = np.eye(4) - P0 - P1
    psi = np.zeros((4, 2), dtype=complex)
    psi[1, 0] = psi[2, 0] = 1 / np.sqrt(2)
    psi[1, 1] = 1 / np.sqrt(2)
    psi[2, 1] = -1 / np.sqrt(2)

    tables = D8Tables(chars=chars, u4=u4, omega=omega, omega_cocycle=gamma,
                      site_symmetry=site, Z=Z, phi_plus=phi_plus,
                      phi_minus=phi_minus, psi_pair=psi, P0=P0, P1=P1, Pf=Pf)
    _verify_tables(tables)
    return tables


def _verify_tables(t: D8Tables) -> None:
    els = d8_elements()
    eye2 = np.eye(2)
    IZ = np.kron(eye2, t.Z)
    ZI = np.kron(t.Z, eye2)

    # invariant-subspace decomposition of omega (x) omega^*
    for g in els:
        U = t.site_symmetry[g]
        if np.max(np.abs(U @ t.phi_plus - t.phi_plus)) > TOL:
            raise ConsistencyError("Phi+ is not invariant")
        if np.max(np.abs(U @ t.phi_minus - t.chars[1][g] * t.phi_minus)) > TOL:
            raise ConsistencyError("Phi- does not carry the odd character")
        for k in (t.P0, t.P1, t.Pf):
            if np.max(np.abs(U @ k - k @ U)) > TOL:
                raise ConsistencyError("measurement is not symmetric")
    # Psi block carries a rep with the U4 character
    psi_char = {g: complex(np.trace(t.psi_pair.conj().T @ t.site_symmetry[g]
                                    @ t.psi_pair)) for g in els}
    for g in els:
        if abs(psi_char[g] - np.trace(t.u4[g])) > 1e-8:
            raise ConsistencyError("Psi sector character differs from U4")

    # the five operator relations
    if np.max(np.abs(t.phi_minus - IZ @ t.phi_plus)) > TOL:
        raise ConsistencyError("Phi- != (1 x Z) Phi+")
    if np.max(np.abs(IZ @ t.phi_plus - ZI @ t.phi_plus)) > TOL:
        raise ConsistencyError("(1 x Z) Phi+ != (Z x 1) Phi+")
    if np.max(np.abs(t.Pf @ IZ + t.Pf @ ZI)) > TOL:
        raise ConsistencyError("Pf (1 x Z) != -Pf (Z x 1)")
    if np.max(np.abs(t.Pf @ IZ - IZ @ t.Pf)) > TOL:
        raise ConsistencyError("Pf does not commute with 1 x Z")
    for g in els:
        U = t.site_symmetry[g]
        M = U @ IZ @ U.conj().T @ IZ.conj().T
        c = np.trace(M) / 4
        if abs(abs(c) - 1) > TOL or np.max(np.abs(M - c * np.eye(4))) > TOL:
            raise ConsistencyError("1 x Z does not quasi-commute with U_g")

    # tensor square of U4 decomposes into the four linear irreps
    sq_char = {g: np.trace(t.u4[g]) ** 2 for g in els}
    for i in range(4):
        inner = sum(sq_char[g] * t.chars[i][g] for g in els) / 8
        if abs(inner - 1.0) > TOL:
            raise ConsistencyError("U4 (x) U4 does not contain each linear irrep once")


def locc_obstruction_check(mats: Sequence[np.ndarray], tol: float = 1e-8) -> bool:
    """True iff the family {omega_g (x) omega_g^*} is non-commutative."""
    pairs = [np.kron(m, m.conj()) for m in mats]
    worst = 0.0
    for A in pairs:
        for B in pairs:
            worst = max(worst, float(np.max(np.abs(A @ B - B @ A))))
    return worst > tol


# ---------------------------------------------------------------------------
# SPT protocol
# ---------------------------------------------------------------------------

def spt_state(n: int) -> DenseState:
    """Ring of Bell pairs |Phi+>_{R_i, L_{i+1}}; site basis index 2 L + R."""
    if 4**n > 2**24:
        raise ValueError("SPT register exceeds the desk budget")
    psi = np.zeros((4,) * n, dtype=complex)
    for bonds in itertools.product(range(2), repeat=n):
        # site i holds (L_i, R_i) = (bonds[i-1], bonds[i])
        idx = tuple(2 * bonds[i - 1] + bonds[i] for i in range(n))
        psi[idx] = 1.0
    psi /= np.linalg.norm(psi)
    return DenseState((4,) * n, psi)


def spt_measurement() -> List[np.ndarray]:
    t = d8_tables()
    return [t.P0, t.P1, t.Pf]


def coarse_string(fine: Sequence[int], fail_outcome: int) -> str:
    return "".join("f" if k == fail_outcome else "s" for k in fine)


def analytic_round1_probability(n: int, num_f: int) -> float:
    """The flat even-string law: 2^{-(n-1)} per coarse string with even |f|."""
    return 0.0 if num_f % 2 else 0.5 ** (n - 1)


def _enumerate_round1(state: DenseState, family: Sequence[np.ndarray],
                      prune: float = PRUNE_TOL) -> List[Tuple[Tuple[int, ...], float, DenseState]]:
    branches = [((), 1.0, state)]
    for site in range(state.num_sites):
        nxt = []
        for outs, p, st in branches:
            for k, pk, post in engine.measure_enumerate(st, family, [site], prune=prune):
                nxt.append((outs + (k,), p * pk, post))
        branches = nxt
    return branches


def spt_round1_distribution(n: int, prune: float = PRUNE_TOL) -> Dict[str, float]:
    """Exact coarse-outcome distribution of the first measurement round."""
    family = spt_measurement()
    dist: Dict[str, float] = {}
    for outs, p, _ in _enumerate_round1(spt_state(n), family, prune=prune):
        key = coarse_string(outs, fail_outcome=2)
        dist[key] = dist.get(key, 0.0) + p
    return dist


def spt_error_norm(num_f: int) -> float:
    """Norm of P_f^{(x)|f|} |SPT_{|f|}>; vanishes for odd |f|."""
    t = d8_tables()
    st = spt_state(num_f)
    for site in range(num_f):
        st = engine.apply_local(st, t.Pf, [site])
    return st.norm()


def spt_error_state(num_f: int) -> DenseState:
    """Normalized P_f^{(x)|f|}|SPT_{|f|}>, the GHZ-type error state."""
    if num_f % 2:
        raise ValueError("odd error count is a probability-zero branch")
    t = d8_tables()
    st = spt_state(num_f)
    for site in range(num_f):
        st = engine.apply_local(st, t.Pf, [site])
    return st.normalized()


def eta_vectors() -> Tuple[np.ndarray, np.ndarray]:
    """|eta_0> and |eta_1| on a pair of sites (dim 16), computational basis."""
    v0 = np.zeros(16, dtype=complex)
    v1 = np.zeros(16, dtype=complex)
    i0110 = int("0110", 2)
    i1001 = int("1001", 2)
    v0[i0110] = v0[i1001] = 1 / np.sqrt(2)
    v1[i0110] = 1 / np.sqrt(2)
    v1[i1001] = -1 / np.sqrt(2)
    return v0, v1


def eta_measurement() -> List[np.ndarray]:
    """{|eta0><eta0|, |eta1><eta1|, orthogonal complement} on two sites."""
    v0, v1 = eta_vectors()
    P0 = np.outer(v0, v0.conj())
    P1 = np.outer(v1, v1.conj())
    return [P0, P1, np.eye(16) - P0 - P1]


def symmetric_connector(source: np.ndarray, target: np.ndarray,
                        sym_mats: Sequence[np.ndarray]) -> np.ndarray:
    """Unitary mapping source to target (up to phase) that commutes with the
    given symmetric family.  Both vectors must be invariant under the family;
    the connector is a reflection inside their span."""
    for U in sym_mats:
        for v in (source, target):
            if np.max(np.abs(U @ v - v)) > 1e-8:
                raise ConsistencyError("connector endpoints are not invariant")
    s = source / np.linalg.norm(source)
    tvec = target / np.linalg.norm(target)
    ov = np.vdot(tvec, s)
    if abs(ov) > 1 - 1e-12:
        return np.eye(len(s), dtype=complex)
    tvec = tvec * np.exp(1j * np.angle(ov)) if abs(ov) > 1e-12 else tvec
    diff = s - tvec
    diff /= np.linalg.norm(diff)
    refl = np.eye(len(s), dtype=complex) - 2 * np.outer(diff, diff.conj())
    for U in sym_mats:
        if np.max(np.abs(U @ refl - refl @ U)) > 1e-8:
            raise ConsistencyError("connector fails to commute with the symmetry")
    return refl


# ---------------------------------------------------------------------------
# Error configurations and the swap join circuit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ErrorConfiguration:
    """Positions of error sites on a ring and the available swap depth."""

    n: int
    positions: Tuple[int, ...]
    depth: int

    def __post_init__(self):
        if any(not 0 <= p < self.n for p in self.positions):
            raise ValueError("positions outside the ring")
        if list(self.positions) != sorted(set(self.positions)):
            raise ValueError("positions must be strictly increasing")


def ring_distance(n: int, a: int, b: int) -> int:
    d = abs(a - b) % n
    return min(d, n - d)


def is_correctable(cfg: ErrorConfiguration) -> bool:
    """Distance rule: every error site has another within ring distance 2l."""
    pos = cfg.positions
    if len(pos) <= 1:
        return len(pos) == 0
    for p in pos:
        if min(ring_distance(cfg.n, p, q) for q in pos if q != p) > 2 * cfg.depth:
            return False
    return True


@dataclass
class JoinSchedule:
    """Pairing of error sites plus the nearest-neighbor swap layers joining them."""

    feasible: bool
    pairs: Tuple[Tuple[int, int], ...]
    layers: Tuple[Tuple[Tuple[int, int], ...], ...]
    depth: int


def swap_join_circuit(cfg: ErrorConfiguration) -> JoinSchedule:
    """Consecutive pairing in ring order, with the swap layers that join pairs.

    Feasibility is exactly the distance rule.  The returned layers move the
    two members of each pair toward each other one step per layer; pairs
    occupy disjoint arcs, so the gates of one layer are disjoint.
    """
    feasible = is_correctable(cfg)
    pos = list(cfg.positions)
    m = len(pos)
    if m == 0:
        return JoinSchedule(feasible, (), (), 0)
    if m % 2:
        return JoinSchedule(False, (), (), 0)

    def gap(a: int, b: int) -> int:
        return (b - a - 1) % cfg.n

    # two consecutive-pairing phases; keep the one with the smaller max gap
    options = []
    for shift in (0, 1):
        ordered = pos[shift:] + pos[:shift]
        pairs = tuple((ordered[2 * i], ordered[2 * i + 1]) for i in range(m // 2))
        options.append((max(gap(a, b) for a, b in pairs), pairs))
    options.sort(key=lambda x: x[0])
    _, pairs = options[0]

    depth = max((gap(a, b) + 1) // 2 for a, b in pairs)
    layers = []
    for t in range(1, depth + 1):
        layer = []
        for a, b in pairs:
            g = gap(a, b)
            left_moves = (g + 1) // 2
            right_moves = g // 2
            if t <= left_moves:
                layer.append(((a + t - 1) % cfg.n, (a + t) % cfg.n))
            if t <= right_moves:
                layer.append(((b - t) % cfg.n, (b - t + 1) % cfg.n))
        layers.append(tuple(layer))
    return JoinSchedule(feasible, pairs, tuple(layers), depth)


# ---------------------------------------------------------------------------
# Failure probability
# ---------------------------------------------------------------------------

def p_fail_bound(n: int, l: int) -> float:
    """Counting bound on non-correctable strings: n / 2^{4l+1}."""
    return n / 2.0 ** (4 * l + 1)


def sample_even_strings(n: int, trials: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples from the flat law on even-|f| strings, as a bool array."""
    bits = rng.integers(0, 2, size=(trials, n - 1), dtype=np.int8)
    parity = bits.sum(axis=1) % 2
    return np.concatenate([bits, parity[:, None]], axis=1).astype(bool)


def p_fail_estimate(n: int, l: int, trials: int, seed: int = 0) -> Tuple[float, float]:
    """Monte Carlo infeasible fraction under the flat even law, with std error."""
    rng = np.random.default_rng(seed)
    f = sample_even_strings(n, trials, rng)
    near = np.zeros_like(f)
    for shift in range(1, 2 * l + 1):
        near |= np.roll(f, shift, axis=1)
        near |= np.roll(f, -shift, axis=1)
    isolated = f & ~near
    fail = isolated.any(axis=1)
    p_hat = float(fail.mean())
    sigma = float(np.sqrt(max(p_hat * (1 - p_hat), 1e-12) / trials))
    return p_hat, sigma


# ---------------------------------------------------------------------------
# GHZ protocol data
# ---------------------------------------------------------------------------

@dataclass
class GHZSetup:
    regular: Dict[D8Element, np.ndarray]
    phi: Tuple[np.ndarray, ...]          # |phi_0..3>
    ztilde: Tuple[np.ndarray, ...]       # diagonal character gates
    Pf: np.ndarray
    split: np.ndarray                    # permutation |g> -> |x, c, y> (GHZ2 factors)


@functools.lru_cache(maxsize=1)
def ghz_setup() -> GHZSetup:
    t = d8_tables()
    els = d8_elements()
    regular = {}
    for g in els:
        U = np.zeros((8, 8), dtype=complex)
        for h in els:
            U[d8_index(d8_mul(g, h)), d8_index(h)] = 1.0
        regular[g] = U
    for g in els:
        for h in els:
            if np.max(np.abs(regular[g] @ regular[h] - regular[d8_mul(g, h)])) > TOL:
                raise ConsistencyError("regular representation broken")

    phi0 = np.ones(8, dtype=complex) / np.sqrt(8)
    ztilde = tuple(np.diag([t.chars[i][g] for g in sorted(els, key=d8_index)]).astype(complex)
                   for i in range(4))
    phi = tuple(ztilde[i] @ phi0 for i in range(4))
    for i in range(4):
        for j in range(4):
            ov = np.vdot(phi[i], phi[j])
            if abs(ov - (1.0 if i == j else 0.0)) > TOL:
                raise ConsistencyError("phi vectors are not orthonormal")
        for g in els:
            if np.max(np.abs(regular[g] @ phi[i] - t.chars[i][g] * phi[i])) > TOL:
                raise ConsistencyError("phi_i is not a character eigenvector")
    Pf = np.eye(8, dtype=complex) - sum(np.outer(v, v.conj()) for v in phi)
    for i in range(4):
        if np.max(np.abs(Pf @ ztilde[i] - ztilde[i] @ Pf)) > TOL:
            raise ConsistencyError("Pf does not commute with the character gates")

    split = np.zeros((8, 8), dtype=complex)
    for a in range(4):
        for b in range(2):
            x, c, y = a % 2, a // 2, b
            split[4 * x + 2 * c + y, d8_index((a, b))] = 1.0
    minus = np.array([1, -1], dtype=complex) / np.sqrt(2)
    pf_split = np.kron(np.kron(np.eye(2), np.outer(minus, minus.conj())), np.eye(2))
    if np.max(np.abs(split @ Pf @ split.conj().T - pf_split)) > TOL:
        raise ConsistencyError("Pf does not factor as 1 (x) |-><-| (x) 1")

    return GHZSetup(regular=regular, phi=phi, ztilde=ztilde, Pf=Pf, split=split)


def ghz_measurement() -> List[np.ndarray]:
    s = ghz_setup()
    fam = [np.outer(v, v.conj()) for v in s.phi]
    fam.append(s.Pf)
    return fam


def ghz_round1_distribution(n: int, prune: float = PRUNE_TOL) -> Dict[str, float]:
    family = ghz_measurement()
    dist: Dict[str, float] = {}
    for outs, p, _ in _enumerate_round1(engine.ghz_state(8, n), family, prune=prune):
        key = coarse_string(outs, fail_outcome=4)
        dist[key] = dist.get(key, 0.0) + p
    return dist


def _site_minus_vector(v: Tuple[int, int]) -> np.ndarray:
    """|v, -> in the group basis: bits (x, y) fixed, the c bit in |->."""
    out = np.zeros(8, dtype=complex)
    x, y = v
    for c in range(2):
        out[d8_index((x + 2 * c, y))] = (-1) ** c / np.sqrt(2)
    return out


def ghz_pair_vectors() -> Dict[Tuple[int, int], np.ndarray]:
    """Fourier pair vectors m-hat over the GHZ2 (x) GHZ2 branch label."""
    vecs = {}
    for m in itertools.product(range(2), repeat=2):
        acc = np.zeros(64, dtype=complex)
        for v in itertools.product(range(2), repeat=2):
            sign = (-1) ** (m[0] * v[0] + m[1] * v[1])
            sv = _site_minus_vector(v)
            acc += sign * np.kron(sv, sv) / 2
        vecs[m] = acc
    return vecs


def ghz_pair_measurement() -> List[np.ndarray]:
    """{m-hat projectors} plus the orthogonal complement, on two sites."""
    vecs = ghz_pair_vectors()
    fam = [np.outer(v, v.conj()) for v in vecs.values()]
    fam.append(np.eye(64) - sum(fam))
    return fam


def _char_label_add(i: int, j: int) -> int:
    """Product of 1D characters chi^i chi^j = chi^{i (+) j} (bitwise)."""
    return (i ^ j)


def ghz_error_correction(num_f: int) -> Dict[str, object]:
    """Pair measurement on the GHZ error state: every branch disentangles.

    Returns the verification data: outcome probabilities, the orthogonal
    complement weight and the maximal pair-respecting cut entropy.
    """
    if num_f % 2:
        raise ValueError("odd error count is a probability-zero branch")
    s = ghz_setup()
    st = engine.ghz_state(8, num_f)
    for site in range(num_f):
        st = engine.apply_local(st, s.Pf, [site])
    st = st.normalized()
    fam = ghz_pair_measurement()
    labels = list(ghz_pair_vectors().keys()) + ["perp"]
    branches = [((), 1.0, st)]
    for p_idx in range(num_f // 2):
        sites = [2 * p_idx, 2 * p_idx + 1]
        nxt = []
        for outs, p, cur in branches:
            for k, pk, post in engine.measure_enumerate(cur, fam, sites):
                nxt.append((outs + (labels[k],), p * pk, post))
        branches = nxt
    max_entropy = 0.0
    perp_weight = 0.0
    for outs, p, post in branches:
        if "perp" in outs:
            perp_weight += p
            continue
        for cut in range(1, num_f // 2):
            max_entropy = max(max_entropy,
                              engine.entropy(post, list(range(2 * cut))))
    return {
        "branches": branches,
        "perp_weight": perp_weight,
        "max_pair_cut_entropy": max_entropy,
    }


# ---------------------------------------------------------------------------
# Full join-and-measure runner
# ---------------------------------------------------------------------------

@dataclass
class JoinMeasureTranscript:
    fine_outcomes: Tuple[int, ...]
    coarse: str
    probability: float
    feasible: bool
    join_depth: int
    round2_outcomes: Tuple[object, ...]
    fidelity: float


@dataclass
class JoinMeasureResult:
    kind: str
    n: int
    depth: int
    transcripts: List[JoinMeasureTranscript]
    probability_sum: float
    infeasible_probability: float
    min_feasible_fidelity: float


def _spt_round1_corrections(n: int, fine: Sequence[int],
                            t: D8Tables) -> List[Tuple[int, np.ndarray]]:
    """Correction gates after round 1: fix Phi- sites and push the Z chain."""
    eye2 = np.eye(2)
    IZ = np.kron(eye2, t.Z)
    ZI = np.kron(t.Z, eye2)
    ops = []
    f_sites = [i for i, k in enumerate(fine) if k == 2]
    for i, k in enumerate(fine):
        if k == 1:
            ops.append((i, IZ))
    for j in f_sites:
        w = 0
        i = (j - 1) % n
        while fine[i] != 2 and i != j:
            w ^= 1 if fine[i] == 1 else 0
            i = (i - 1) % n
        if w:
            ops.append((j, ZI))
    return ops


def _ghz_round1_corrections(n: int, fine: Sequence[int],
                            s: GHZSetup) -> List[Tuple[int, np.ndarray]]:
    """Undo the character gates site-wise and park the total on an error site."""
    ops = []
    pending = 0
    f_sites = [i for i, k in enumerate(fine) if k == 4]
    for i, k in enumerate(fine):
        if k != 4:
            if k != 0:
                ops.append((i, s.ztilde[k].conj().T))
            pending = _char_label_add(pending, k)
    if f_sites and pending:
        ops.append((f_sites[0], s.ztilde[pending]))
    return ops


def run_join_and_measure(kind: str, n: int, l: int, mode: str = "enumerate",
                         seed: int = 0, trials: int = 100,
                         prune: float = PRUNE_TOL) -> JoinMeasureResult:
    """Round 1 on-site measurement, coarse graining, join, round 2, correction.

    Every branch is recorded; infeasible branches (distance rule at depth l)
    carry no round-2 data.  Feasible branches report the fidelity with the
    per-site target after all corrections.
    """
    t = d8_tables()
    if kind == "SPT":
        initial = spt_state(n)
        family = spt_measurement()
        fail_k = 2
        site_target = t.phi_plus
        sym_site = [t.site_symmetry[g] for g in d8_elements()]
    elif kind == "GHZ":
        s = ghz_setup()
        initial = engine.ghz_state(8, n)
        family = ghz_measurement()
        fail_k = 4
        site_target = s.phi[0]
        sym_site = [s.regular[g] for g in d8_elements()]
    else:
        raise ValueError(f"unknown protocol kind {kind!r}")

    if mode == "enumerate":
        round1 = _enumerate_round1(initial, family, prune=prune)
    elif mode == "sample":
        round1 = []
        for trial in range(trials):
            rng = np.random.default_rng([seed, trial])
            st = initial
            outs: Tuple[int, ...] = ()
            prob = 1.0
            for site in range(n):
                k, pk, st = engine.measure_sample(st, family, [site], rng)
                outs = outs + (k,)
                prob *= pk
            round1.append((outs, prob, st))
    else:
        raise ValueError(f"unknown mode {mode!r}")

    transcripts: List[JoinMeasureTranscript] = []
    pair_sym = [np.kron(U, U) for U in sym_site]
    target_pair = np.kron(site_target, site_target)
    connectors: Dict[object, np.ndarray] = {}

    for fine, prob, state in round1:
        coarse = coarse_string(fine, fail_k)
        f_sites = [i for i, k in enumerate(fine) if k == fail_k]
        cfg = ErrorConfiguration(n=n, positions=tuple(f_sites), depth=l)
        schedule = swap_join_circuit(cfg)
        if not schedule.feasible:
            transcripts.append(JoinMeasureTranscript(
                fine, coarse, prob, False, schedule.depth, (), 0.0))
            continue

        st = state
        if kind == "SPT":
            for site, op in _spt_round1_corrections(n, fine, t):
                st = engine.apply_local(st, op, [site])
        else:
            for site, op in _ghz_round1_corrections(n, fine, ghz_setup()):
                st = engine.apply_local(st, op, [site])

        # round 2 on the joined pairs
        sub_branches = [((), prob, st)]
        if f_sites:
            if kind == "SPT":
                fam2 = eta_measurement()
                labels2: List[object] = [0, 1, "perp"]
            else:
                fam2 = ghz_pair_measurement()
                labels2 = list(ghz_pair_vectors().keys()) + ["perp"]
            for a, b in schedule.pairs:
                nxt = []
                for outs2, p2, cur in sub_branches:
                    for k2, pk2, post in engine.measure_enumerate(cur, fam2, [a, b],
                                                                  prune=prune):
                        nxt.append((outs2 + (labels2[k2],), p2 * pk2, post))
                sub_branches = nxt

        for outs2, p2, post in sub_branches:
            if "perp" in outs2:
                transcripts.append(JoinMeasureTranscript(
                    fine, coarse, p2, True, schedule.depth, outs2, 0.0))
                continue
            cur = post
            for (a, b), out2 in zip(schedule.pairs, outs2):
                if kind == "SPT":
                    if out2 == 1:
                        cur = engine.apply_local(cur, np.kron(np.eye(2), t.Z), [a])
                    key = "spt"
                    source = eta_vectors()[0]
                else:
                    if out2 != (0, 0):
                        m = 2 * out2[0] + out2[1]
                        cur = engine.apply_local(cur, ghz_setup().ztilde[m].conj().T, [a])
                    key = "ghz"
                    source = ghz_pair_vectors()[(0, 0)]
                if key not in connectors:
                    connectors[key] = symmetric_connector(source, target_pair, pair_sym)
                cur = engine.apply_local(cur, connectors[key], [a, b])
            target = DenseState.product([site_target] * n)
            fid = engine.fidelity(cur, target)
            transcripts.append(JoinMeasureTranscript(
                fine, coarse, p2, True, schedule.depth, outs2, fid))

    psum = sum(tr.probability for tr in transcripts)
    infeasible = sum(tr.probability for tr in transcripts if not tr.feasible)
    feas_fids = [tr.fidelity for tr in transcripts if tr.feasible]
    return JoinMeasureResult(kind=kind, n=n, depth=l, transcripts=transcripts,
                             probability_sum=psum,
                             infeasible_probability=infeasible,
                             min_feasible_fidelity=min(feas_fids, default=1.0))
