from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from klab import systems as S
from klab.selmer_instance import generate_instance, generate_tower_instance, inst_a, joint_rich


@pytest.fixture(scope="module")
def mixed():
    return generate_instance(3, 2, 1, 3, (1,), seed=5)


@pytest.fixture(scope="module")
def split():
    return generate_instance(2, 2, 2, 3, (), seed=1)


def test_perm_sign():
    assert S.perm_sign([0, 1, 2]) == 1 and S.perm_sign([1, 0, 2]) == -1 and S.perm_sign([2, 0, 1]) == 1


def test_psi_on_equal_vertices_is_identity(mixed):
    for n in mixed.vertices():
        f = S.psi_map(mixed, n, n)
        assert np.array_equal(f.matrix, mixed.ring.eye(f.matrix.shape[0]))


def test_inst_a_systems():
    inst = inst_a(3, 1)
    # f ^ t contracted by the transverse coordinate gives -f
    assert S.psi_map(inst, (0,), ()).matrix.tolist() == [[2]]
    SS = S.stark_module(inst)
    assert SS.module.invariant_factors == [1]
    g = SS.generator()
    u = int(g.values[(0,)][0]) % 3
    assert u != 0 and int(g.values[()][0]) % 3 == (-u) % 3
    KM = S.kolyvagin_modules(inst)
    assert KM.KS.invariant_factors == [1] and KM.stub.invariant_factors == [1]
    assert S.pi_map(inst, ()).matrix.tolist() == [[1]]


def test_psi_transitive_and_order_free(mixed):
    top = tuple(mixed.active)
    for m in mixed.vertices():
        for l in mixed.vertices():
            if S.divides(l, m):
                lhs = S.psi_map(mixed, top, m).then(S.psi_map(mixed, m, l))
                assert lhs.equals(S.psi_map(mixed, top, l))
        rest = [q for q in top if q not in m]
        for perm in permutations(rest):
            for pm in permutations(m):
                f = S.psi_map_explicit(mixed, top, m, list(pm) + list(perm))
                assert f.equals(S.psi_map(mixed, top, m))


def test_psi_rejects_non_divisor(mixed):
    with pytest.raises(ValueError):
        S.psi_map(mixed, (0,), (1,))


def test_stark_module_split(split):
    SS = S.stark_module(split)
    assert SS.module.is_free(1)
    g = SS.generator()
    assert g.is_compatible()
    assert all(S.stark_projection_image_ok(split, n, SS) for n in split.vertices())
    top = S.stark_from_top(split)
    x = S._solve_system(SS, top.values)
    assert x is not None and S.element_order(SS.module, x) == split.ring.k


def test_image_identities(mixed):
    for n in mixed.vertices():
        if mixed.mu(n):
            continue
        for m in mixed.vertices():
            if S.divides(m, n):
                assert S.psi_image_ok(mixed, n, m)
                assert S.pi_psi_image_ok(mixed, n, m)


def test_transform_lands_in_stub_module(mixed):
    g = S.stark_module(mixed).generator()
    kap = S.pi_transform(mixed, g)
    KM = S.kolyvagin_modules(mixed)
    assert kap.is_section() and not kap.edge_defects()
    assert kap.is_stub() and KM.in_stub(kap)
    assert KM.stub.is_free(1) and KM.contains_stub_image()
    assert S.lower_bound_check(mixed, kap, True)["ok"]
    assert not S.lower_bound_check(mixed, kap.scale(3), True)["ok"] or mixed.ring.k <= 1


def test_profile_split(split):
    prof = S.invariant_profile(S.stark_module(split).generator())
    assert prof.dphi == [0] * (len(split.active) + 1) and prof.ord == 0
    rec = S.recover_structure(prof)
    assert rec["invariant_factors"] == [] and rec["finite"]
    assert S.compare_recovery(split, rec)["match"]


def test_profile_one_factor(mixed):
    g = S.stark_module(mixed).generator()
    prof = S.invariant_profile(g)
    assert prof.dphi[0] == 1 and prof.d[0] == 1
    assert S.recover_structure(prof)["invariant_factors"] == [1]
    shifted = S.invariant_profile(g.scale(3))
    assert shifted.dphi == [x + 1 if x + 1 < 2 else S.INF for x in prof.dphi]


def test_recovery_with_large_length_is_infinite():
    inst = generate_instance(3, 3, 1, 3, (2, 1), seed=0)
    rec = S.recover_structure(S.invariant_profile(S.stark_module(inst).generator()))
    assert not rec["finite"] and rec["invariant_factors"] == [1]
    cmp = S.compare_recovery(inst, rec)
    assert cmp["tail_consistent"] and cmp["match"] is None


def test_recovery_exact_with_room():
    inst = generate_instance(2, 4, 1, 3, (2, 1), seed=0)
    prof = S.invariant_profile(S.stark_module(inst).generator())
    assert prof.dphi == [3, 1, 0, 0]
    rec = S.recover_structure(prof)
    assert rec["invariant_factors"] == [2, 1] and S.compare_recovery(inst, rec)["match"]


def test_zero_system_has_no_ord(split):
    g = S.stark_module(split).generator()
    with pytest.raises(ValueError):
        S.invariant_profile(g.scale(0))


def test_dual_profiles_are_tail_sums(mixed):
    dl, _ = S.dual_profiles(mixed)
    assert dl == S.tail_sums([1], len(mixed.active))
    assert S.tail_sums([2, 1], 3) == [3, 1, 0, 0]


def test_core_paths(mixed, split):
    inst = inst_a(3, 1)
    assert S.core_path(inst, (), ()) == [()]
    assert S.core_path(inst, (), (0,)) == [(), (0,)]
    core = mixed.core_vertices()
    for a in core:
        for b in core:
            pth = S.core_path(mixed, a, b)
            assert isinstance(pth, list) and pth[0] == a and pth[-1] == b
    assert isinstance(S.core_path(split, (), tuple(split.active)), list)
    with pytest.raises(ValueError):
        S.core_path(mixed, (), ())


def test_hub_certificates(mixed):
    for c in mixed.core_vertices():
        cert = S.hub_certificate(mixed, c)
        assert cert["ok"]
    for n in mixed.vertices():
        ch = S.descent_chain(mixed, n)
        assert len(ch) - 1 == mixed.lam_bar(n)
        if mixed.is_core_vertex(n):
            for q in mixed.active:
                if q not in n:
                    assert S.edge_criteria_agree(mixed, n, q)


def test_stub_sheaf_shape(mixed):
    st_ = S.stub_subsheaf(mixed).sheaf
    assert st_.is_locally_cyclic() and st_.has_trivial_monodromy()


def test_rank_two_witness_outside_stub_module():
    inst = generate_instance(3, 2, 2, 4, (1, 1), seed=0)
    n = S.torsion_wedge_vertex(inst)
    assert n == ()
    kap = S.torsion_wedge_section(inst, n)
    KM = S.kolyvagin_modules(inst)
    assert kap.is_section() and not kap.is_stub() and not KM.in_stub(kap)
    assert KM.KS.invariant_factors == [2, 1] and KM.stub.invariant_factors == [2]


def test_rank_one_joint_rich_modules_agree():
    for s in range(3):
        inst = generate_instance(3, 2, 1, 3, (1,), seed=s)
        assert joint_rich(inst)
        KM = S.kolyvagin_modules(inst)
        assert KM.KS.length == KM.stub.length and KM.contains_stub_image()


def test_tower():
    inst = generate_tower_instance(3, 2, 1, 3, [2, 1, 2], seed=0)
    rep = S.tower_check(inst)
    assert rep["ok"] and rep["limit_compatible"]
    assert S.kolyvagin_tower_check(inst)["ok"]


@settings(max_examples=15, deadline=None)
@given(st.sampled_from([1, 2, 4, 5, 7, 8]))
def test_unit_multiples_keep_profile(u):
    inst = generate_instance(3, 2, 1, 3, (1,), seed=5)
    g = S.stark_module(inst).generator()
    assert g.scale(u).is_compatible()
    assert S.invariant_profile(g.scale(u)).dphi == S.invariant_profile(g).dphi
    kap = S.pi_transform(inst, g.scale(u))
    assert kap.is_section()
