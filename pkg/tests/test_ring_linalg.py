from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from klab.ring_linalg import (ModuleMap, PresentedModule, ResidueRing, Submodule, annihilator, dumps, hom_to_R,
                              howell_form, intersect, invariant_factors, kernel, length, matrix_from_json,
                              matrix_to_json, module_sum, quotient, smith, solve)

R9 = ResidueRing(3, 2)
R27 = ResidueRing(3, 3)


def span(ring, rows, n):
    """Every element of the row span, by brute force."""
    rows = np.asarray(rows, dtype=np.int64).reshape(-1, n)
    out = set()
    for coeffs in product(range(ring.q), repeat=rows.shape[0]):
        out.add(tuple((np.array(coeffs, dtype=np.int64) @ rows % ring.q).tolist()) if rows.shape[0] else (0,) * n)
    if not out:
        out.add((0,) * n)
    return out


def matrices(ring, rows, cols):
    return st.lists(st.integers(0, ring.q - 1), min_size=rows * cols, max_size=rows * cols).map(
        lambda xs: np.array(xs, dtype=np.int64).reshape(rows, cols))


def test_ring_basics():
    assert R9.q == 9 and R9.val(0) == 2 and R9.val(6) == 1 and R9.val(4) == 0
    assert R9.inv(2) * 2 % 9 == 1
    with pytest.raises(ZeroDivisionError):
        R9.inv(3)
    with pytest.raises(ValueError):
        ResidueRing(4, 1)


def test_howell_identity_is_fixed():
    assert np.array_equal(howell_form(R9, np.eye(2, dtype=np.int64)), np.eye(2, dtype=np.int64))


def test_howell_drops_zero_rows():
    H = howell_form(R9, [[3, 0], [0, 0]])
    assert H.tolist() == [[3, 0]]


@settings(max_examples=25, deadline=None)
@given(matrices(ResidueRing(3, 1), 3, 3))
def test_howell_idempotent_and_same_span(A):
    ring = ResidueRing(3, 1)
    H = howell_form(ring, A)
    assert np.array_equal(howell_form(ring, H), H)
    assert span(ring, H, 3) == span(ring, A, 3)


def test_howell_random_4x4_over_27():
    rng = np.random.default_rng(0)
    for _ in range(3):
        A = rng.integers(0, 27, (4, 4)) * rng.choice([1, 3, 9], (4, 4)) % 27
        H = howell_form(R27, A)
        assert np.array_equal(howell_form(R27, H), H)
        # exhaustive membership in both directions via Submodule.contains
        S1, S2 = Submodule(R27, 4, A), Submodule(R27, 4, H)
        assert all(S2.contains(r) for r in A) and all(S1.contains(r) for r in H)
        assert S1 == S2


def test_howell_property_on_small_spans():
    # elements vanishing in the first c columns are spanned by rows with pivot past c
    ring = ResidueRing(2, 2)
    rng = np.random.default_rng(3)
    for _ in range(20):
        A = rng.integers(0, 4, (3, 3))
        H = howell_form(ring, A)
        piv = [int(np.nonzero(r)[0][0]) for r in H]
        full = span(ring, H, 3)
        for c in range(3):
            tail = H[[i for i, pc in enumerate(piv) if pc >= c]]
            want = {x for x in full if not any(x[:c])}
            assert span(ring, tail, 3) == want


@settings(max_examples=40, deadline=None)
@given(matrices(R9, 3, 3))
def test_smith_reconstructs(A):
    S = smith(R9, A)
    D = S.U @ A @ S.W % 9
    for i in range(3):
        for j in range(3):
            want = R9.pk(S.vals[i]) % 9 if i == j else 0
            assert D[i, j] == want
    assert np.array_equal(S.U @ S.Uinv % 9, np.eye(3, dtype=np.int64))
    assert np.array_equal(S.W @ S.Winv % 9, np.eye(3, dtype=np.int64))


@settings(max_examples=40, deadline=None)
@given(matrices(R9, 3, 2), st.lists(st.integers(0, 8), min_size=3, max_size=3))
def test_solve_finds_preimages(A, x):
    x = np.array(x, dtype=np.int64)
    B = x @ A % 9
    X = solve(R9, A, B)
    assert X is not None and np.array_equal(X @ A % 9, B.reshape(1, -1))


def test_invariant_factors_trivial_cases():
    assert PresentedModule(R9, 2, np.eye(2, dtype=np.int64)).invariant_factors == []
    assert PresentedModule(R9, 2, np.diag([3, 1])).invariant_factors == [1]
    assert PresentedModule.diagonal(R9, [1, 2]).invariant_factors == [2, 1]


def torsion_counts(M: PresentedModule):
    """Number of elements killed by p^j, j = 0..k, by enumerating the cokernel."""
    ring = M.ring
    elems = set()
    for coeffs in product(range(ring.q), repeat=M.ngens):
        elems.add(tuple(M.normal_form(np.array(coeffs, dtype=np.int64)).reshape(-1)))
    out = []
    for j in range(ring.k + 1):
        out.append(sum(1 for x in elems if M.is_zero(np.array(x) * ring.pk(j) % ring.q)))
    return len(elems), out


def counts_from_factors(p, k, factors):
    return [int(np.prod([p ** min(a, j) for a in factors])) for j in range(k + 1)]


def test_invariant_factors_match_torsion_counts():
    rng = np.random.default_rng(7)
    for _ in range(6):
        rel = rng.integers(0, 9, (5, 3)) * rng.choice([1, 3], (5, 3)) % 9
        rel = rel.T  # 3 x 5 presentation, five generators
        M = PresentedModule(R9, 5, rel)
        size, counts = torsion_counts(M)
        f = M.invariant_factors
        assert size == 3 ** sum(f)
        assert counts == counts_from_factors(3, 2, f)


def test_kernel_of_projection():
    f = ModuleMap(PresentedModule.free(R9, 2), PresentedModule.free(R9, 1), [[1], [0]])
    K, inc = f.kernel()
    assert Submodule(R9, 2, inc.matrix) == Submodule(R9, 2, [[0, 1]])
    assert length(K) == 2


def test_length_of_mixed_module():
    assert PresentedModule.diagonal(R9, [1, 2]).length == 3


def test_intersect_matches_enumeration():
    rng = np.random.default_rng(11)
    ring = ResidueRing(2, 2)
    for _ in range(5):
        A = Submodule(ring, 4, rng.integers(0, 4, (2, 4)))
        B = Submodule(ring, 4, rng.integers(0, 4, (2, 4)))
        common = span(ring, A.howell, 4) & span(ring, B.howell, 4)
        C = intersect(A, B)
        assert span(ring, C.howell, 4) == common
        S = module_sum(A, B)
        assert S.contains_submodule(A) and S.contains_submodule(B)


def test_quotient_and_hom():
    A = Submodule.full(R9, 2)
    B = Submodule(R9, 2, [[3, 0]])
    Q = quotient(A, B)
    assert Q.invariant_factors == [2, 1]
    assert hom_to_R(PresentedModule.diagonal(R9, [1])).invariant_factors == [1]


PAIRING = np.array([[0, 1], [-1, 0]]) % 9


def test_annihilator_extremes():
    assert annihilator(Submodule.full(R9, 2), PAIRING).length == 0
    assert annihilator(Submodule.zero(R9, 2), PAIRING).length == 4


def test_annihilator_of_3_0():
    X = Submodule(R9, 2, [[3, 0]])
    A = annihilator(X, PAIRING)
    assert A.length == 3
    assert A.contains([0, 3]) and A.contains([1, 0])
    # enumeration of all 81 pairs
    want = {(a, b) for a in range(9) for b in range(9) if (3 * b) % 9 == 0}
    assert span(R9, A.howell, 2) == want


def test_module_element_valuation():
    M = PresentedModule.diagonal(R9, [2])
    assert M.valuation_of([3]) == 1 and M.valuation_of([0]) == 2 and M.generator_index([6]) == 1


def test_matrix_json_roundtrip():
    A = np.array([[1, 2], [3, 8]])
    ring, B = matrix_from_json(matrix_to_json(R9, A))
    assert ring == R9 and np.array_equal(A, B)
    assert dumps({"b": 1, "a": [1, 2]}) == '{"a":[1,2],"b":1}'


def test_invariant_factors_helper():
    assert invariant_factors(Submodule(R9, 2, [[3, 0], [0, 1]])) == [2, 1]
    f = ModuleMap(PresentedModule.free(R9, 1), PresentedModule.free(R9, 1), [[3]])
    K, _ = kernel(f)
    assert K.invariant_factors == [1]


def test_invariant_factors_against_integer_smith_form():
    # over Z the Smith form is computed independently; reducing its diagonal
    # to p-adic valuations capped at k gives the exponents over Z/p^k
    from sympy import Matrix, ZZ
    from sympy.matrices.normalforms import smith_normal_form
    rng = np.random.default_rng(12)
    for _ in range(10):
        A = rng.integers(-20, 20, (3, 4)) * rng.choice([1, 3, 9], (3, 4))
        D = smith_normal_form(Matrix(A.tolist()), domain=ZZ)
        exps = []
        for i in range(3):
            d = int(D[i, i])
            v = 2 if d == 0 else min(next(j for j in range(40) if d % 3 ** (j + 1)), 2)
            exps.append(v)
        # cokernel of the rows of A in R^4: one free generator plus R/3^v per row
        M = PresentedModule(R9, 4, A % 9)
        want = sorted([2] + [v for v in exps if v], reverse=True)
        assert M.invariant_factors == want
