import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from klab.acceptance import _a2_case, _unimodular, uniqueness_verdict
from klab.exterior import (CartesianSquare, ExteriorPower, cartesian_map, compound, contraction_matrix,
                           element_images, module_elements, psi_hat, psi_hat_by_splitting, subsets, wedge_map)
from klab.ring_linalg import ModuleMap, PresentedModule, ResidueRing, smith

R9 = ResidueRing(3, 2)
R27 = ResidueRing(3, 3)


def mat(ring, r, c):
    return st.lists(st.integers(0, ring.q - 1), min_size=r * c, max_size=r * c).map(
        lambda xs: np.array(xs, dtype=np.int64).reshape(r, c))


def test_colex_order():
    assert subsets(3, 2) == ((0, 1), (0, 2), (1, 2))
    assert subsets(4, 2)[3] == (0, 3)


@settings(max_examples=30, deadline=None)
@given(mat(R9, 3, 3), mat(R9, 3, 3), st.integers(0, 3))
def test_compound_is_multiplicative(A, B, r):
    lhs = compound(R9, A @ B % 9, r)
    rhs = compound(R9, A, r) @ compound(R9, B, r) % 9
    assert np.array_equal(lhs, rhs)


def test_compound_top_is_determinant():
    A = np.array([[2, 1, 0], [0, 1, 4], [1, 0, 1]])
    assert compound(R9, A, 3)[0, 0] == round(np.linalg.det(A)) % 9


@settings(max_examples=30, deadline=None)
@given(mat(R9, 2, 3))
def test_wedge_is_alternating(V):
    E = ExteriorPower(PresentedModule.free(R9, 3), 2)
    a = E.wedge(V)
    b = E.wedge(V[::-1])
    assert np.array_equal((a + b) % 9, np.zeros_like(a))
    assert not E.wedge(np.vstack([V[0], V[0]])).any()


def test_diagonal_shortcut_matches_general_presentation():
    M = PresentedModule.diagonal(R27, [1, 3, 2])
    for r in range(4):
        E = ExteriorPower(M, r)
        assert E.module.invariant_factors == E.general_module().invariant_factors


def test_psi_hat_on_free_rank_two():
    # psi = first coordinate, N = 0 + R, r = 2: e1 ^ e2 -> 1 (x) e2
    M = PresentedModule.free(R9, 2)
    c = np.array([1, 0])
    N = PresentedModule.free(R9, 1)
    iota = ModuleMap(N, M, [[0, 1]])
    f = psi_hat(M, c, N, iota, 2)
    assert f.matrix.tolist() == [[1]]


def test_psi_hat_r_equals_one_is_psi():
    M = PresentedModule.diagonal(R9, [2, 1])
    c = np.array([3, 3])
    g = ModuleMap(M, PresentedModule.free(R9, 1), c.reshape(-1, 1))
    N, inc = g.kernel()
    f = psi_hat(M, c, N, inc, 1)
    assert np.array_equal(f.matrix.reshape(-1) % 9, c)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.lists(st.integers(0, 26), min_size=3, max_size=3))
def test_free_rank_r_iso_iff_surjective(r, vals):
    c = np.array(vals[:r], dtype=np.int64)
    M = PresentedModule.free(R27, r)
    g = ModuleMap(M, PresentedModule.free(R27, 1), c.reshape(-1, 1))
    N, inc = g.kernel()
    assert psi_hat(M, c, N, inc, r).is_iso() == g.is_surjective()


def test_image_against_monomials():
    # M = R + R/m over Z/9 with psi killing the torsion part
    M = PresentedModule.diagonal(R9, [2, 1])
    for a in (1, 3):
        c = np.array([a, 0])
        g = ModuleMap(M, PresentedModule.free(R9, 1), c.reshape(-1, 1))
        N, inc = g.kernel()
        for r in (1, 2):
            f = psi_hat(M, c, N, inc, r)
            T = f.codomain
            # psi(M) is the ideal (a); products psi(m) x already form a submodule
            elems = module_elements(T)
            want = {tuple(T.normal_form(np.array(x) * s % 9).reshape(-1)) for x in elems for s in range(0, 9, a)}
            assert element_images(f) == want


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 2), min_size=1, max_size=3), st.data())
def test_contraction_identity_and_image(exps, data):
    M = PresentedModule.diagonal(R9, exps)
    c = np.array([data.draw(st.integers(0, 8)) * R9.pk(2 - a) % 9 for a in exps], dtype=np.int64)
    g = ModuleMap(M, PresentedModule.free(R9, 1), c.reshape(-1, 1))
    N, inc = g.kernel()
    b = R9.min_val(c)
    for r in range(1, len(exps) + 1):
        f = psi_hat(M, c, N, inc, r)
        lhs = f.matrix @ compound(R9, inc.matrix, r - 1) % 9
        assert ExteriorPower(M, r - 1).module.is_zero(lhs - contraction_matrix(R9, c, r))
        assert element_images(f) == module_elements(f.codomain, R9.pk(b) if b < 2 else 0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 3), min_size=1, max_size=3), st.data())
def test_split_route_agrees(exps, data):
    M = PresentedModule.diagonal(R27, exps)
    c = np.array([data.draw(st.integers(0, 26)) * R27.pk(3 - a) % 27 for a in exps], dtype=np.int64)
    for r in range(1, len(exps) + 1):
        sp = psi_hat_by_splitting(M, c, r)
        if sp is None:
            continue
        m2, N2, i2 = sp
        assert psi_hat(M, c, N2, i2, r).equals(m2)


def test_uniqueness_holds_for_free_modules():
    rng = np.random.default_rng(4)
    for _ in range(10):
        g = int(rng.integers(1, 4))
        M = PresentedModule.free(R9, g)
        c = rng.integers(0, 9, g)
        f = ModuleMap(M, PresentedModule.free(R9, 1), c.reshape(-1, 1))
        N, inc = f.kernel()
        for r in range(1, g + 1):
            ph = psi_hat(M, c, N, inc, r)
            assert uniqueness_verdict(ph, inc, R9.min_val(c), r) == "unique"


def test_uniqueness_can_fail_without_cyclic_splitting():
    # R/9 + R/27 + R/3 over Z/27, c = (9, 24, 9): no summand Rm carries psi(M)
    M = PresentedModule.diagonal(R27, [2, 3, 1])
    c = np.array([9, 24, 9])
    f = ModuleMap(M, PresentedModule.free(R27, 1), c.reshape(-1, 1))
    N, inc = f.kernel()
    ph = psi_hat(M, c, N, inc, 3)
    other = ModuleMap(ph.domain, ph.codomain, 2 * ph.matrix % 27, check=False)
    mid = ExteriorPower(M, 2).module
    for g in (ph, other):
        assert mid.is_zero(g.matrix @ compound(R27, inc.matrix, 2) % 27 - contraction_matrix(R27, c, 3))
        assert element_images(g) == module_elements(g.codomain, 3)
    assert not ph.equals(other)
    assert psi_hat_by_splitting(M, c, 3) is None
    assert uniqueness_verdict(ph, inc, 1, 3) == "non_unique"


def square(ring, M2, s1, h, c1):
    quot = PresentedModule(ring, h.shape[1], c1)
    M1, inc = ModuleMap(M2, quot, h, check=False).kernel()
    return CartesianSquare(M1, M2, inc, c1, h)


def test_cartesian_with_zero_c1_is_iterated_contraction():
    M2 = PresentedModule.free(R9, 3)
    h = np.array([[1], [3], [0]])
    sq = square(R9, M2, 0, h, np.zeros((0, 1), dtype=np.int64))
    f = cartesian_map(sq, 2)
    g = psi_hat(M2, h.reshape(-1), sq.M1, sq.iota, 3)
    assert f.equals(g)


def test_cartesian_identity_square_is_identity():
    M = PresentedModule.free(R9, 2)
    sq = CartesianSquare(M, M, ModuleMap(M, M, np.eye(2, dtype=np.int64)), np.eye(1, dtype=np.int64),
                         np.array([[1], [0]]))
    f = cartesian_map(sq, 1)
    assert f.is_iso() and np.array_equal(f.matrix, np.eye(1, dtype=np.int64))


def test_cartesian_rejects_non_cartesian():
    M2 = PresentedModule.free(R9, 2)
    M1 = PresentedModule.free(R9, 1)
    with pytest.raises(ValueError):
        CartesianSquare(M1, M2, ModuleMap(M1, M2, [[1, 0]]), np.zeros((0, 1), dtype=np.int64), [[1], [0]])


@pytest.mark.parametrize("seed", range(6))
def test_stacked_squares_and_image_formula(seed):
    rng = np.random.default_rng(seed)
    for ring in (ResidueRing(2, 2), ResidueRing(3, 2), ResidueRing(3, 1)):
        for _ in range(5):
            out = _a2_case(ring, rng)
            assert out == {"independent": True, "image": True, "compose": True}


def test_basis_independence_with_unit_change():
    rng = np.random.default_rng(9)
    M2 = PresentedModule.free(R9, 3)
    h = rng.integers(0, 9, (3, 2))
    B = _unimodular(R9, 2, rng)
    sq = square(R9, M2, 1, h, B[:1])
    f = cartesian_map(sq, 1)
    Psi = sq.default_basis()
    T = np.array([[5, 0], [3, 7]])
    assert all(v == 0 for v in smith(R9, T).vals)
    assert cartesian_map(sq, 1, Psi @ T % 9).equals(f)


def test_wedge_map_of_identity():
    M = PresentedModule.diagonal(R9, [2, 1])
    f = wedge_map(ModuleMap(M, M, np.eye(2, dtype=np.int64)), 2)
    assert np.array_equal(f.matrix, np.eye(1, dtype=np.int64))
