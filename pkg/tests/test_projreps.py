"""Cocycles, mu-irreps, centers, operator bases."""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symmps import projreps
from symmps.groups import GroupSpec, MembershipError
from symmps.projreps import (
    CocycleClass,
    Cocycle,
    coboundary,
    cocycle_classes,
    cocycle_condition_holds,
    cocycle_is_trivial,
    cocycle_ratio,
    coset_reps_of_center,
    mu_irrep,
    numeric_cocycle,
    onb_from_irrep,
    pauli_rep,
    phi_mu,
    projective_center,
    standard_cocycle,
    tensor_class_add,
    trivial_class,
)

KLEIN = GroupSpec(((2, 1), (2, 1)))
KLEIN_MU1 = CocycleClass(KLEIN, ((0, 1), (0, 0)))
Z4S = GroupSpec(((2, 2), (2, 2)))


class TestStandardCocycle:
    def test_klein_values(self):
        coc = standard_cocycle(KLEIN_MU1)
        assert coc.phase((1, 0), (0, 1)) == Fraction(1, 2)
        assert coc.phase((0, 1), (1, 0)) == 0

    def test_pauli_cross_check(self):
        # the antisymmetrized pairing of the class matches sigma_z sigma_x = -sigma_x sigma_z
        coc = standard_cocycle(KLEIN_MU1)
        sz = np.array([[1, 0], [0, -1]], dtype=complex)
        sx = np.array([[0, 1], [1, 0]], dtype=complex)
        ratio = (sz @ sx)[0, 1] / (sx @ sz)[0, 1]
        assert abs(projreps.phase_to_complex(coc.beta((1, 0), (0, 1))) - ratio) < 1e-12

    def test_zero_class(self):
        coc = standard_cocycle(trivial_class(KLEIN))
        assert all(v == 0 for v in coc.table.values())

    def test_condition_exhaustive(self):
        standard_cocycle(KLEIN_MU1).verify_cocycle_condition()
        assert cocycle_condition_holds(standard_cocycle(KLEIN_MU1))

    def test_fast_checker_rejects_corruption(self):
        coc = standard_cocycle(KLEIN_MU1)
        table = dict(coc.table)
        table[((1, 0), (1, 1))] += Fraction(1, 2)
        assert not cocycle_condition_holds(Cocycle(KLEIN, table))


class TestTriviality:
    def test_pauli_class_nontrivial(self):
        ok, witness = cocycle_is_trivial(standard_cocycle(KLEIN_MU1))
        assert not ok and witness is None

    def test_zero_cocycle_trivial(self):
        ok, witness = cocycle_is_trivial(standard_cocycle(trivial_class(KLEIN)))
        assert ok
        assert all(v == 0 for v in witness.values())

    @given(st.integers(0, 10**6))
    @settings(max_examples=20, deadline=None)
    def test_coboundary_roundtrip(self, seed):
        rng = np.random.default_rng(seed)
        group = GroupSpec(((2, 2), (3, 1)))
        nu = {g: Fraction(int(rng.integers(0, 24)), 24) for g in group.elements()}
        coc = coboundary(group, nu)
        ok, witness = cocycle_is_trivial(coc)
        assert ok
        rebuilt = coboundary(group, witness)
        assert rebuilt.table == coc.table

    def test_all_classes_small_groups(self):
        # trivial iff the class matrix vanishes
        for group in [KLEIN, GroupSpec(((2, 2), (2, 1))), GroupSpec(((3, 1), (3, 1)))]:
            for cls in cocycle_classes(group):
                ok, _ = cocycle_is_trivial(standard_cocycle(cls))
                assert ok == cls.is_trivial


class TestMuIrrep:
    def test_klein_pauli_like(self):
        rep = mu_irrep(KLEIN_MU1)
        assert rep.dim == 2
        assert rep.center == ((0, 0),)
        assert rep.is_mnc
        # same class as the Pauli representation
        ratio = cocycle_ratio(numeric_cocycle(KLEIN, rep.mats), pauli_rep().cocycle)
        ok, _ = cocycle_is_trivial(ratio)
        assert ok

    def test_trivial_class(self):
        rep = mu_irrep(trivial_class(KLEIN))
        assert rep.dim == 1
        for g in KLEIN.elements():
            assert abs(rep.mats[g][0, 0] - 1) < 1e-12

    @pytest.mark.parametrize("mu,dim,center_order", [(1, 4, 1), (2, 2, 4)])
    def test_z4xz4_classes(self, mu, dim, center_order):
        # oracle: the center from the exact pairing of the standard cocycle
        cls = CocycleClass(Z4S, ((0, mu), (0, 0)))
        coc = standard_cocycle(cls)
        els = list(Z4S.elements())
        oracle_center = [g for g in els if all(coc.beta(g, h) == 0 for h in els)]
        assert len(oracle_center) == center_order
        rep = mu_irrep(cls)
        assert rep.dim == dim
        assert set(rep.center) == set(oracle_center)

    def test_rep_invariants_verified(self):
        # verify() re-checks the relation, unitarity, traces, dimension identity
        mu_irrep(KLEIN_MU1).verify()
        mu_irrep(CocycleClass(Z4S, ((0, 2), (0, 0)))).verify()

    def test_deterministic(self):
        a = mu_irrep(KLEIN_MU1)
        b = mu_irrep(KLEIN_MU1)
        for g in KLEIN.elements():
            assert np.max(np.abs(a.mats[g] - b.mats[g])) == 0


class TestPhiAndCenter:
    def test_pauli_phi_is_swap(self):
        rep = pauli_rep()
        phi = phi_mu(rep)
        for g in KLEIN.elements():
            assert phi[g] == (g[1], g[0])

    def test_trivial_phi_is_identity_map(self):
        rep = mu_irrep(trivial_class(KLEIN))
        phi = phi_mu(rep)
        for g in KLEIN.elements():
            assert phi[g] == (0, 0)

    def test_phi_homomorphism_exhaustive(self):
        rep = mu_irrep(CocycleClass(Z4S, ((0, 2), (0, 0))))
        phi = phi_mu(rep)
        for g in Z4S.elements():
            for h in Z4S.elements():
                assert phi[Z4S.add(g, h)] == Z4S.add(phi[g], phi[h])

    def test_pauli_center_mnc(self):
        assert projective_center(pauli_rep()) == ((0, 0),)

    def test_trivial_center_full(self):
        rep = mu_irrep(trivial_class(KLEIN))
        assert set(projective_center(rep)) == set(KLEIN.elements())


class TestOperatorBasis:
    def test_pauli_onb(self):
        rep = pauli_rep()
        ops = onb_from_irrep(rep, list(KLEIN.elements()))
        assert len(ops) == 4

    def test_trivial_onb(self):
        rep = mu_irrep(trivial_class(KLEIN))
        ops = onb_from_irrep(rep, [(0, 0)])
        assert len(ops) == 1

    def test_z4xz4_gram(self):
        rep = mu_irrep(CocycleClass(Z4S, ((0, 2), (0, 0))))
        Q = coset_reps_of_center(rep)
        ops = onb_from_irrep(rep, Q)
        gram = np.array([[np.trace(a.conj().T @ b) / rep.dim for b in ops]
                         for a in ops])
        assert np.max(np.abs(gram - np.eye(len(ops)))) < 1e-10

    def test_duplicate_coset_rejected(self):
        rep = mu_irrep(CocycleClass(Z4S, ((0, 2), (0, 0))))
        Q = list(coset_reps_of_center(rep))
        Q[1] = Z4S.add(Q[0], rep.center[1])  # same coset as Q[0]
        with pytest.raises(MembershipError):
            onb_from_irrep(rep, Q)


class TestClassAlgebra:
    def test_inverse_class(self):
        cls = CocycleClass(Z4S, ((0, 3), (0, 0)))
        assert tensor_class_add(cls, cls.neg()).is_trivial

    def test_klein_classes_z2(self):
        assert tensor_class_add(KLEIN_MU1, KLEIN_MU1).is_trivial
        assert len(cocycle_classes(KLEIN)) == 2

    def test_tensor_product_cocycle_matches_class_sum(self):
        # omega^{mu1} (x) omega^{mu2} carries the class mu1 + mu2
        c1 = CocycleClass(Z4S, ((0, 1), (0, 0)))
        c2 = CocycleClass(Z4S, ((0, 3), (0, 0)))
        r1, r2 = mu_irrep(c1), mu_irrep(c2)
        mats = {g: np.kron(r1.mats[g], r2.mats[g]) for g in Z4S.elements()}
        prod_coc = numeric_cocycle(Z4S, mats)
        target = standard_cocycle(tensor_class_add(c1, c2))
        ok, _ = cocycle_is_trivial(cocycle_ratio(prod_coc, target))
        assert ok
