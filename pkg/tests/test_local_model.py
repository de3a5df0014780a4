import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from klab.acceptance import _eligible_frobenius
from klab.local_model import (FrobeniusModule, char_poly_split, compute_I_q, finite_is_free_rank_one, finite_module,
                              finite_singular_map, fixed_module, poly_eval_matrix, poly_mul)
from klab.ring_linalg import ResidueRing

R9 = ResidueRing(3, 2)


def test_trivial_frobenius():
    fm = FrobeniusModule(R9, [[1]])
    P, Q = char_poly_split(fm)
    assert P == [1, 8] and Q == [8]
    f, iso = finite_singular_map(fm)
    assert iso and f.matrix.tolist() == [[8]]


def test_unipotent_block():
    fm = FrobeniusModule(R9, [[1, 1], [0, 1]])
    P, Q = char_poly_split(fm)
    assert P == [1, 7, 1]  # (1 - x)^2
    assert Q == [8, 1]  # x - 1
    Qm = poly_eval_matrix(R9, Q, fm.inverse())
    # column e2 goes to -e1
    assert (Qm @ np.array([0, 1]) % 9).tolist() == [8, 0]
    assert finite_module(fm).is_free(1) and fixed_module(fm).length == 2
    assert finite_singular_map(fm)[1]


def test_identity_is_not_iso():
    fm = FrobeniusModule(R9, np.eye(2, dtype=np.int64))
    assert not finite_singular_map(fm)[1]
    assert not finite_is_free_rank_one(fm)


@pytest.mark.parametrize("u,free", [(2, True), (5, True), (4, False), (7, False)])
def test_diagonal_unit(u, free):
    fm = FrobeniusModule(R9, np.diag([1, u]))
    assert finite_is_free_rank_one(fm) == free
    assert finite_singular_map(fm)[1] == free


def test_ineligible_and_singular_rejected():
    with pytest.raises(ValueError):
        char_poly_split(FrobeniusModule(R9, [[2]]))
    with pytest.raises(ValueError):
        FrobeniusModule(R9, [[3]])


def test_compute_I_q():
    assert compute_I_q(FrobeniusModule(R9, np.diag([1, 2]))) == 2
    assert compute_I_q(FrobeniusModule(R9, np.diag([1, 2]), ram_exp=3)) == 1
    assert compute_I_q(FrobeniusModule(R9, np.diag([1, 2]), ram_exp=1)) == 0
    # Fr = 1 mod m leaves two copies of R/m, so no level works
    assert compute_I_q(FrobeniusModule(R9, np.diag([1, 4]))) == 0
    assert compute_I_q(FrobeniusModule(R9, np.eye(2, dtype=np.int64))) == 0


def test_json_roundtrip():
    fm = FrobeniusModule(R9, [[1, 1], [0, 1]], ram_exp=3)
    back = FrobeniusModule.from_json(fm.to_json())
    assert np.array_equal(back.frobenius, fm.frobenius) and back.ram_exp == 3


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([(2, 2), (3, 1), (3, 2), (5, 1), (2, 3)]), st.integers(1, 3), st.integers(0, 2 ** 32 - 1))
def test_factorization_and_iso_criterion(pk, d, seed):
    ring = ResidueRing(*pk)
    fm = _eligible_frobenius(ring, d, np.random.default_rng(seed))
    P, Q = char_poly_split(fm)
    assert poly_mul(ring, [ring.q - 1, 1], Q) == P
    assert finite_singular_map(fm)[1] == finite_is_free_rank_one(fm)
