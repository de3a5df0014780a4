from itertools import product

import numpy as np
import pytest

from klab.ring_linalg import ResidueRing, Submodule
from klab.selmer_instance import (InfeasibleTarget, SelmerInstance, check_instance, descent_prime, fcol,
                                  generate_instance, generate_tower_instance, inst_a, joint_rich, reduce_instance,
                                  tcol, tower_levels)


@pytest.fixture(scope="module")
def mixed():
    return generate_instance(3, 2, 1, 3, (1,), seed=5)


@pytest.fixture(scope="module")
def split():
    return generate_instance(2, 2, 2, 3, (), seed=1)


def test_inst_a_groups():
    inst = inst_a(3, 1)
    assert inst.vertices() == [(), (0,)]
    assert inst.H().howell.tolist() == [[1, 0]]
    assert inst.H((0,)).howell.tolist() == [[0, 1]]
    assert inst.H_relaxed((0,)).length == 2
    assert inst.H(strict=(0,)).length == 0
    assert inst.lam(()) == 0 and inst.lam((0,)) == 0
    assert inst.core_vertices() == [(), (0,)]
    assert check_instance(inst)["valid"]


def test_coordinate_layout():
    assert (fcol(0), tcol(0), fcol(2), tcol(2)) == (0, 1, 4, 5)


def test_broken_instance_fails_rank_axiom():
    ring = ResidueRing(3, 1)
    inst = SelmerInstance(ring, 1, Submodule(ring, 2, [[1, 0]]))
    rep = check_instance(inst)
    assert not rep["V1"] and not rep["valid"]


def brute_selmer(inst, pattern):
    """Elements of X satisfying the pattern, by enumeration."""
    ring = inst.ring
    cols = inst.killed_columns(pattern)
    H = inst.X.howell
    out = set()
    for c in product(range(ring.q), repeat=H.shape[0]):
        x = np.array(c, dtype=np.int64) @ H % ring.q
        if not any(x[cols]):
            out.add(tuple(x.tolist()))
    return out


def test_selmer_groups_against_enumeration():
    inst = generate_instance(2, 1, 1, 3, (1,), seed=0)
    for n in inst.vertices():
        for pat in (inst.pattern(transverse=n), inst.pattern(relaxed=n)):
            assert len(brute_selmer(inst, pat)) == 2 ** inst.selmer_group(pat).length


def test_lengths_match_rank_plus_dual(mixed):
    k, r = mixed.ring.k, mixed.r
    for n in mixed.vertices():
        assert mixed.H(n).length == r * k + mixed.lam(n)
        assert mixed.H_relaxed(n).length == (r + len(n)) * k + mixed.mu(n)
        assert mixed.H(n).contains_submodule(mixed.H_strict_at(n, 0 if 0 not in n else n[0]))


@pytest.mark.parametrize("e", [(1,), (1, 1), (2, 1), (2,)])
def test_smallest_core_vertex_has_size_of_e(e):
    inst = generate_instance(3, 2, 1, 4, e, seed=2)
    assert inst.dual_invariants(()) == list(e)
    assert min(len(n) for n in inst.core_vertices()) == len(e)


def test_descent_prime_lowers_torsion_rank(mixed):
    for n in mixed.vertices():
        if mixed.lam(n):
            q = descent_prime(mixed, n)
            assert q is not None and q not in n
            assert mixed.lam_bar(tuple(sorted(n + (q,)))) == mixed.lam_bar(n) - 1


def test_generation_is_seeded(mixed):
    again = generate_instance(3, 2, 1, 3, (1,), seed=5)
    assert again.digest() == mixed.digest()
    assert check_instance(mixed)["valid"]


def test_split_instance_is_all_core(split):
    assert split.core_vertices() == split.vertices()
    assert joint_rich(split)


@pytest.mark.parametrize("args", [(3, 1, 2, 1, ()), (3, 2, 1, 2, (1, 1)), (3, 1, 1, 3, (2,)), (3, 1, 0, 2, ())])
def test_infeasible_targets(args):
    p, k, r, m, e = args
    with pytest.raises(InfeasibleTarget):
        generate_instance(p, k, r, m, e)


def test_json_roundtrip(mixed):
    back = SelmerInstance.from_json(mixed.to_json())
    assert back.digest() == mixed.digest()
    for n in mixed.vertices():
        assert back.H(n) == mixed.H(n)
    with pytest.raises(ValueError):
        SelmerInstance.from_json({"p": 3})


def test_reduce_to_top_level_is_identity(mixed):
    assert reduce_instance(mixed, 2).digest() == mixed.digest()
    with pytest.raises(ValueError):
        reduce_instance(mixed, 3)


def test_split_reduction_stays_split(split):
    red = reduce_instance(split, 1)
    assert red.ring.k == 1 and check_instance(red)["valid"]
    assert red.core_vertices() == red.vertices()


def test_reduction_clamps_dual_exponents():
    inst = generate_instance(3, 2, 1, 2, (2,), seed=0)
    assert inst.dual_invariants(()) == [2]
    assert reduce_instance(inst, 1).dual_invariants(()) == [1]


def test_tower_levels():
    inst = generate_tower_instance(3, 2, 1, 3, [2, 1, 2], seed=0)
    assert tower_levels(inst) == {1: [0, 1, 2], 2: [0, 2]}
    assert reduce_instance(inst, 2).active == (0, 2)
