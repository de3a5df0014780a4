"""Local data at one prime, read off from a Frobenius matrix over Z/p^k.

Row convention: Fr acts on row vectors by v -> v @ F.T, so the matrix F is
the usual column-acting Frobenius.
"""

from dataclasses import dataclass

import numpy as np

from .ring_linalg import ModuleMap, PresentedModule, ResidueRing, Submodule, kernel_basis, matrix_from_json, matrix_to_json, smith, solve


@dataclass(frozen=True)
class FrobeniusModule:
    ring: ResidueRing
    frobenius: np.ndarray
    ram_exp: int = 0

    def __post_init__(self):
        F = np.array(self.frobenius, dtype=np.int64) % self.ring.q
        if F.ndim != 2 or F.shape[0] != F.shape[1]:
            raise ValueError("frobenius must be square")
        if not all(v == 0 for v in smith(self.ring, F).vals):
            raise ValueError("frobenius is not invertible over R")
        object.__setattr__(self, "frobenius", F)

    @property
    def d(self) -> int:
        return self.frobenius.shape[0]

    def inverse(self) -> np.ndarray:
        return solve(self.ring, self.frobenius, self.ring.eye(self.d))

    def to_json(self):
        return {"frobenius": matrix_to_json(self.ring, self.frobenius), "ram_exp": int(self.ram_exp)}

    @classmethod
    def from_json(cls, d):
        ring, F = matrix_from_json(d["frobenius"])
        return cls(ring, F, int(d.get("ram_exp", 0)))


def principal_minor_sums(ring: ResidueRing, F) -> list:
    """c_j = sum of j x j principal minors of F, for j = 0..d."""
    from .exterior import compound
    d = F.shape[0]
    out = [1]
    for j in range(1, d + 1):
        C = compound(ring, F, j)
        out.append(int(np.trace(C)) % ring.q)
    return out


def char_poly_split(fm: FrobeniusModule):
    """(P, Q) with P(x) = det(1 - F x) and (x - 1) Q(x) = P(x).

    Polynomials are coefficient lists, constant term first.
    """
    ring = fm.ring
    c = principal_minor_sums(ring, fm.frobenius)
    P = [((-1) ** j * c[j]) % ring.q for j in range(len(c))]
    if sum(P) % ring.q:
        raise ValueError("not eligible: det(1 - Fr) is nonzero")
    d = len(P) - 1
    Q = [0] * d
    # synthetic division by (x - 1), from the top coefficient down
    Q[d - 1] = P[d]
    for j in range(d - 1, 0, -1):
        Q[j - 1] = (P[j] + Q[j]) % ring.q
    return P, Q


def poly_mul(ring, a, b):
    out = [0] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] = (out[i + j] + x * y) % ring.q
    return out


def poly_eval_matrix(ring, coeffs, A) -> np.ndarray:
    n = A.shape[0]
    out = np.zeros((n, n), dtype=np.int64)
    for c in reversed(coeffs):
        out = (out @ A + c * ring.eye(n)) % ring.q
    return out


def finite_module(fm: FrobeniusModule) -> PresentedModule:
    """T / (Fr - 1) T."""
    ring = fm.ring
    return PresentedModule(ring, fm.d, (fm.frobenius - ring.eye(fm.d)).T % ring.q)


def fixed_module(fm: FrobeniusModule) -> Submodule:
    """T^(Fr = 1) inside T."""
    ring = fm.ring
    return Submodule(ring, fm.d, kernel_basis(ring, (fm.frobenius - ring.eye(fm.d)).T % ring.q))


def finite_singular_map(fm: FrobeniusModule):
    """(map T/(Fr-1)T -> T^(Fr=1), is_iso) induced by Q(Fr^-1)."""
    ring = fm.ring
    _, Q = char_poly_split(fm)
    Qm = poly_eval_matrix(ring, Q, fm.inverse())
    fin = finite_module(fm)
    fix = fixed_module(fm)
    rowmap = Qm.T % ring.q
    img = Submodule(ring, fm.d, rowmap)
    if not fix.contains_submodule(img):
        raise AssertionError("Q(Fr^-1) T is not contained in T^(Fr=1)")
    D, _, from_D = fin.diagonalized()
    mat = fix.coords(from_D.matrix @ rowmap % ring.q)
    f = ModuleMap(D, fix.module, mat)
    return f, f.is_iso()


def finite_is_free_rank_one(fm: FrobeniusModule) -> bool:
    return finite_module(fm).is_free(1)


def compute_I_q(fm: FrobeniusModule) -> int:
    """Exponent j with I_q = m^j; 0 means the whole ring."""
    ring = fm.ring
    d = fm.d
    rel = (fm.frobenius - ring.eye(d)).T % ring.q
    ram_val = ring.val(fm.ram_exp)
    for j in range(ring.k, 0, -1):
        if ram_val < j:
            continue
        M = PresentedModule(ring, d, np.vstack([rel, ring.eye(d) * ring.pk(j)]))
        if M.invariant_factors == [j]:
            return j
    return 0
