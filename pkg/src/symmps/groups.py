"""Exact arithmetic for finite abelian groups and their aligned subgroups.

A finite abelian group is stored as an ordered product of cyclic factors of
prime-power order.  Elements are plain tuples of residues, one per factor,
and every operation here is exact integer / rational arithmetic; nothing is
converted to floating point until a matrix is actually built elsewhere.

An aligned subgroup is given by per-factor exponents ``r_tilde <= r``.  It
induces the subset ``H`` (residues below the per-factor subgroup order), the
quotient-isomorphic subset ``K`` (residues below the per-factor cofactor
order), the embedded subgroup ``|K|*H`` of the parent, and the two Euclidean
division bijections ``g -> (h(g), k(g))`` and ``g -> (hat_h(g), hat_k(g))``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence, Tuple

Element = Tuple[int, ...]

MAX_GROUP_ORDER = 2**20


class GroupStructureError(ValueError):
    """Structural mismatch: wrong number of residues, factor mismatch, ..."""


class MembershipError(ValueError):
    """An element lies outside the required subset (H or K)."""


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    d = 2
    while d * d <= n:
        if n % d == 0:
            return False
        d += 1
    return True


@dataclass(frozen=True)
class GroupSpec:
    """Finite abelian group as an ordered tuple of (prime, exponent) factors."""

    factors: Tuple[Tuple[int, int], ...]

    def __post_init__(self):
        order = 1
        for p, r in self.factors:
            if not _is_prime(p):
                raise GroupStructureError(f"factor base {p} is not prime")
            if r < 1:
                raise GroupStructureError(f"factor exponent {r} must be >= 1")
            order *= p**r
        if order > MAX_GROUP_ORDER:
            raise GroupStructureError(f"group order {order} exceeds desk budget")

    @property
    def moduli(self) -> Tuple[int, ...]:
        return tuple(p**r for p, r in self.factors)

    @property
    def num_factors(self) -> int:
        return len(self.factors)

    @property
    def order(self) -> int:
        n = 1
        for m in self.moduli:
            n *= m
        return n

    @property
    def identity(self) -> Element:
        return (0,) * len(self.factors)

    def validate(self, g: Element) -> None:
        if len(g) != len(self.factors):
            raise GroupStructureError(
                f"element {g} has {len(g)} residues, group has {len(self.factors)} factors"
            )
        for x, m in zip(g, self.moduli):
            if not 0 <= x < m:
                raise GroupStructureError(f"residue {x} out of range for modulus {m}")

    def elements(self) -> Iterator[Element]:
        """All elements in lexicographic residue order."""
        return itertools.product(*(range(m) for m in self.moduli))

    def index(self, g: Element) -> int:
        """Position of ``g`` in lexicographic order (mixed-radix value)."""
        self.validate(g)
        idx = 0
        for x, m in zip(g, self.moduli):
            idx = idx * m + x
        return idx

    def element(self, idx: int) -> Element:
        res = []
        for m in reversed(self.moduli):
            idx, x = divmod(idx, m)
            res.append(x)
        return tuple(reversed(res))

    def add(self, g1: Element, g2: Element) -> Element:
        self.validate(g1)
        self.validate(g2)
        return tuple((a + b) % m for a, b, m in zip(g1, g2, self.moduli))

    def sub(self, g1: Element, g2: Element) -> Element:
        self.validate(g1)
        self.validate(g2)
        return tuple((a - b) % m for a, b, m in zip(g1, g2, self.moduli))

    def neg(self, g: Element) -> Element:
        self.validate(g)
        return tuple((-a) % m for a, m in zip(g, self.moduli))

    def character(self, q: Element, g: Element) -> Fraction:
        """Exact phase of the irrep labelled by q at g, i.e. chi^q_g = e^{2 pi i phase}.

        The phase is sum_m q_m g_m / |G_m| mod 1; symmetric in q and g.
        """
        self.validate(q)
        self.validate(g)
        phase = Fraction(0)
        for a, b, m in zip(q, g, self.moduli):
            phase += Fraction(a * b, m)
        return phase % 1


@dataclass(frozen=True)
class SubgroupDecomposition:
    """Aligned subgroup of a finite abelian group and its quotient data."""

    parent: GroupSpec
    sub_exponents: Tuple[int, ...]

    def __post_init__(self):
        if len(self.sub_exponents) != self.parent.num_factors:
            raise GroupStructureError("subgroup exponent tuple length mismatch")
        for rt, (p, r) in zip(self.sub_exponents, self.parent.factors):
            if not 0 <= rt <= r:
                raise GroupStructureError(
                    f"subgroup exponent {rt} outside [0, {r}]"
                )

    @property
    def h_moduli(self) -> Tuple[int, ...]:
        return tuple(p**rt for (p, _), rt in zip(self.parent.factors, self.sub_exponents))

    @property
    def k_moduli(self) -> Tuple[int, ...]:
        return tuple(
            p ** (r - rt) for (p, r), rt in zip(self.parent.factors, self.sub_exponents)
        )

    def h_group(self) -> GroupSpec:
        """The subset H promoted to a group with its own moduli (trivial factors kept)."""
        return _degenerate_spec(self, quotient=False)

    def k_group(self) -> GroupSpec:
        return _degenerate_spec(self, quotient=True)

    @property
    def h_order(self) -> int:
        n = 1
        for m in self.h_moduli:
            n *= m
        return n

    @property
    def k_order(self) -> int:
        n = 1
        for m in self.k_moduli:
            n *= m
        return n

    # -- subsets of the parent -------------------------------------------

    def h_subset(self) -> Tuple[Element, ...]:
        """H as a subset of G: residues below the per-factor subgroup order."""
        return tuple(itertools.product(*(range(m) for m in self.h_moduli)))

    def k_subset(self) -> Tuple[Element, ...]:
        return tuple(itertools.product(*(range(m) for m in self.k_moduli)))

    def embedded_subgroup(self) -> Tuple[Element, ...]:
        """H-tilde = |K| * H, the actual subgroup of the parent."""
        return tuple(self.scale_k(h) for h in self.h_subset())

    def in_h(self, g: Element) -> bool:
        self.parent.validate(g)
        return all(x < m for x, m in zip(g, self.h_moduli))

    def in_k(self, g: Element) -> bool:
        self.parent.validate(g)
        return all(x < m for x, m in zip(g, self.k_moduli))

    def scale_k(self, h: Element) -> Element:
        """|K| * h, elementwise; maps the subset H onto the subgroup H-tilde."""
        if not self.in_h(h):
            raise MembershipError(f"{h} is not in the subset H")
        return tuple(km * x for x, km in zip(h, self.k_moduli))

    def scale_h(self, k: Element) -> Element:
        """|H| * k, elementwise; maps the subset K onto the subgroup K-tilde."""
        if not self.in_k(k):
            raise MembershipError(f"{k} is not in the subset K")
        return tuple(hm * x for x, hm in zip(k, self.h_moduli))

    # -- group operations on the subset groups ----------------------------

    def add_h(self, h1: Element, h2: Element) -> Element:
        for h in (h1, h2):
            if not self.in_h(h):
                raise MembershipError(f"{h} is not in the subset H")
        return tuple((a + b) % m for a, b, m in zip(h1, h2, self.h_moduli))

    def sub_h(self, h1: Element, h2: Element) -> Element:
        for h in (h1, h2):
            if not self.in_h(h):
                raise MembershipError(f"{h} is not in the subset H")
        return tuple((a - b) % m for a, b, m in zip(h1, h2, self.h_moduli))

    def add_k(self, k1: Element, k2: Element) -> Element:
        for k in (k1, k2):
            if not self.in_k(k):
                raise MembershipError(f"{k} is not in the subset K")
        return tuple((a + b) % m for a, b, m in zip(k1, k2, self.k_moduli))

    def sub_k(self, k1: Element, k2: Element) -> Element:
        for k in (k1, k2):
            if not self.in_k(k):
                raise MembershipError(f"{k} is not in the subset K")
        return tuple((a - b) % m for a, b, m in zip(k1, k2, self.k_moduli))

    # -- the two Euclidean division bijections ----------------------------

    def h_of(self, g: Element) -> Element:
        """Per-factor quotient by |K_m|; the H part of g."""
        self.parent.validate(g)
        return tuple(x // km for x, km in zip(g, self.k_moduli))

    def k_of(self, g: Element) -> Element:
        """Per-factor remainder mod |K_m|; the K part of g.  A homomorphism."""
        self.parent.validate(g)
        return tuple(x % km for x, km in zip(g, self.k_moduli))

    def hat_h_of(self, g: Element) -> Element:
        """Per-factor remainder mod |H_m| (dual division against K-tilde)."""
        self.parent.validate(g)
        return tuple(x % hm for x, hm in zip(g, self.h_moduli))

    def hat_k_of(self, g: Element) -> Element:
        """Per-factor quotient by |H_m| (dual division against K-tilde)."""
        self.parent.validate(g)
        return tuple(x // hm for x, hm in zip(g, self.h_moduli))

    # -- characters --------------------------------------------------------

    def h_character(self, p: Element, h: Element) -> Fraction:
        """Exact phase of the irrep of (H, +_H) labelled by p at h."""
        for x in (p, h):
            if not self.in_h(x):
                raise MembershipError(f"{x} is not in the subset H")
        phase = Fraction(0)
        for a, b, m in zip(p, h, self.h_moduli):
            phase += Fraction(a * b, m)
        return phase % 1

    def character_embed(self, p: Element) -> Element:
        """|K| * p, so that the H-irrep p equals the G-irrep |K|p on H."""
        return self.scale_k(p)


def _degenerate_spec(sub: SubgroupDecomposition, quotient: bool = False) -> GroupSpec:
    """GroupSpec for the subset group, keeping one trivial factor per parent factor.

    Trivial factors (order 1) cannot be expressed as (p, r>=1), so they are
    carried as modulus-1 slots via a ZeroFactorSpec below.
    """
    moduli = sub.k_moduli if quotient else sub.h_moduli
    return ZeroFactorSpec(
        factors=tuple(sub.parent.factors),
        _moduli=tuple(moduli),
    )


@dataclass(frozen=True)
class ZeroFactorSpec(GroupSpec):
    """GroupSpec variant allowing per-factor modulus 1 (trivial cyclic slots)."""

    _moduli: Tuple[int, ...] = field(default=())

    def __post_init__(self):
        order = 1
        for m in self._moduli:
            order *= m
        if order > MAX_GROUP_ORDER:
            raise GroupStructureError(f"group order {order} exceeds desk budget")

    @property
    def moduli(self) -> Tuple[int, ...]:
        return self._moduli


def group_of_subset(sub: SubgroupDecomposition, which: str) -> GroupSpec:
    """The subset H or K of the decomposition promoted to its own group."""
    if which == "H":
        return _degenerate_spec(sub, quotient=False)
    if which == "K":
        return _degenerate_spec(sub, quotient=True)
    raise ValueError(f"unknown subset {which!r}")


# -- module-level operation surface ---------------------------------------

def add(g1: Element, g2: Element, spec: GroupSpec, mode: str = "G",
        sub: SubgroupDecomposition | None = None) -> Element:
    """Residue-wise sum modulo the moduli of the selected group structure."""
    if mode == "G":
        return spec.add(g1, g2)
    if sub is None:
        raise GroupStructureError("modes H and K require a SubgroupDecomposition")
    if mode == "H":
        return sub.add_h(g1, g2)
    if mode == "K":
        return sub.add_k(g1, g2)
    raise ValueError(f"unknown mode {mode!r}")


def sub(g1: Element, g2: Element, spec: GroupSpec, mode: str = "G",
        subdec: SubgroupDecomposition | None = None) -> Element:
    if mode == "G":
        return spec.sub(g1, g2)
    if subdec is None:
        raise GroupStructureError("modes H and K require a SubgroupDecomposition")
    if mode == "H":
        return subdec.sub_h(g1, g2)
    if mode == "K":
        return subdec.sub_k(g1, g2)
    raise ValueError(f"unknown mode {mode!r}")


def euclid_split(g: Element, subdec: SubgroupDecomposition) -> Tuple[Element, Element]:
    """g -> (h(g), k(g)) with g = |K| h(g) + k(g) elementwise."""
    return subdec.h_of(g), subdec.k_of(g)


def hat_split(g: Element, subdec: SubgroupDecomposition) -> Tuple[Element, Element]:
    """g -> (hat_h(g), hat_k(g)), the dual Euclidean division against K-tilde."""
    return subdec.hat_h_of(g), subdec.hat_k_of(g)


def character(q: Element, g: Element, spec: GroupSpec) -> Fraction:
    return spec.character(q, g)


def subgroup_character_embed(p: Element, subdec: SubgroupDecomposition) -> Element:
    return subdec.character_embed(p)


@dataclass(frozen=True)
class PhaseLabel:
    """A phase label (H, mu): aligned subgroup plus a cohomology class of H."""

    sub: SubgroupDecomposition
    cocycle_class: "CocycleClass"  # noqa: F821  (proj_reps type, imported lazily)

    @property
    def is_trivial_class(self) -> bool:
        return self.cocycle_class.is_trivial


def aligned_subgroups(spec: GroupSpec) -> Iterator[SubgroupDecomposition]:
    """All aligned-product subgroups, i.e. all exponent tuples r_tilde <= r."""
    ranges = [range(r + 1) for _, r in spec.factors]
    for exps in itertools.product(*ranges):
        yield SubgroupDecomposition(spec, tuple(exps))


def enumerate_phase_labels(spec: GroupSpec) -> list:
    """All phase labels (aligned subgroup, cohomology class of it)."""
    from . import projreps  # local import; projreps depends on this module

    labels = []
    for sd in aligned_subgroups(spec):
        for cls in projreps.cocycle_classes(group_of_subset(sd, "H")):
            labels.append(PhaseLabel(sd, cls))
    return labels


def format_element(g: Element) -> str:
    return "(" + ",".join(str(x) for x in g) + ")"
