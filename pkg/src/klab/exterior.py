"""Exterior powers over Z/p^k and contraction maps built from them.

Basis of the r-th power: r-subsets of generator indices in colex order.
"""

from functools import lru_cache
from itertools import combinations, product

import numpy as np

from .ring_linalg import ModuleMap, PresentedModule, ResidueRing, as_rows, kernel_basis, smith, solve


@lru_cache(maxsize=None)
def subsets(g: int, r: int):
    """r-subsets of range(g) in colex order."""
    if r < 0 or r > g:
        return ()
    return tuple(sorted(combinations(range(g), r), key=lambda s: tuple(reversed(s))))


@lru_cache(maxsize=None)
def subset_index(g: int, r: int):
    return {S: i for i, S in enumerate(subsets(g, r))}


def insert_sign(T, i) -> int:
    """Sign of e_i ^ e_T = sign * e_{T + i} (i not in T)."""
    return -1 if sum(1 for t in T if t < i) % 2 else 1


class ExteriorPower:
    """The r-th exterior power of a presented module."""

    def __init__(self, base: PresentedModule, r: int):
        self.base = base
        self.r = int(r)
        self.ring = base.ring
        self.basis = subsets(base.ngens, self.r)
        self.index = subset_index(base.ngens, self.r)

    def __repr__(self):
        return f"ExteriorPower(r={self.r}, base={self.base!r})"

    @property
    def rank(self) -> int:
        return len(self.basis)

    def _build(self) -> PresentedModule:
        ring, g, r = self.ring, self.base.ngens, self.r
        if r == 0:
            return PresentedModule.free(ring, 1)
        exps = self.base.exps
        if exps is not None:
            # diagonal base: e_S is killed exactly by p^(min of its exponents)
            return PresentedModule.diagonal(ring, [min(exps[i] for i in S) for S in self.basis])
        rows = []
        for a in self.base.relations:
            for T in subsets(g, r - 1):
                row = np.zeros(self.rank, dtype=np.int64)
                for i in np.nonzero(a)[0]:
                    i = int(i)
                    if i in T:
                        continue
                    S = tuple(sorted(T + (i,)))
                    row[self.index[S]] += insert_sign(T, i) * int(a[i])
                rows.append(row % ring.q)
        return PresentedModule(ring, self.rank, as_rows(rows, self.rank))

    @property
    def module(self) -> PresentedModule:
        if not hasattr(self, "_module"):
            self._module = self._build()
        return self._module

    def general_module(self) -> PresentedModule:
        """Presentation from the base relations, ignoring the diagonal shortcut."""
        exps = self.base.exps
        if exps is None:
            return self.module
        base = PresentedModule(self.ring, self.base.ngens, self.base.relations)
        return ExteriorPower(base, self.r).module

    def wedge(self, vectors) -> np.ndarray:
        """Coordinates of v_1 ^ ... ^ v_r for the rows v_i (in base coordinates)."""
        V = as_rows(vectors, self.base.ngens)
        if V.shape[0] != self.r:
            raise ValueError(f"need {self.r} vectors, got {V.shape[0]}")
        return compound(self.ring, V, self.r).reshape(-1)


def _minors(ring: ResidueRing, A, r):
    """dict (rows, cols) -> r x r minor mod q, built up by expansion along the last row."""
    q = ring.q
    A = np.asarray(A, dtype=np.int64) % q
    m, n = A.shape
    prev = {((), ()): 1}
    for d in range(1, r + 1):
        cur = {}
        for S in combinations(range(m), d):
            last, rest = S[-1], S[:-1]
            for T in combinations(range(n), d):
                tot = 0
                for j, t in enumerate(T):
                    a = int(A[last, t])
                    if a == 0:
                        continue
                    sub = prev[(rest, T[:j] + T[j + 1:])]
                    if sub:
                        sgn = 1 if (d - 1 + j) % 2 == 0 else -1
                        tot += sgn * a * sub
                cur[(S, T)] = tot % q
        prev = cur
    return prev


def compound(ring: ResidueRing, A, r: int) -> np.ndarray:
    """r-th compound matrix (all r x r minors) with colex-ordered rows and columns."""
    A = np.asarray(A, dtype=np.int64)
    m, n = A.shape
    R, C = subsets(m, r), subsets(n, r)
    out = np.zeros((len(R), len(C)), dtype=np.int64)
    if not R or not C:
        return out
    mins = _minors(ring, A, r)
    ci = subset_index(n, r)
    for i, S in enumerate(R):
        for T in C:
            out[i, ci[T]] = mins[(S, T)]
    return out


def wedge_map(f: ModuleMap, r: int, src=None, dst=None) -> ModuleMap:
    """The induced map on r-th exterior powers."""
    src = src or ExteriorPower(f.domain, r)
    dst = dst or ExteriorPower(f.codomain, r)
    return ModuleMap(src.module, dst.module, compound(f.ring, f.matrix, r), check=False)


def contraction_matrix(ring: ResidueRing, values, r: int) -> np.ndarray:
    """Matrix of e_S -> sum_i (-1)^(i) c_{s_i} e_{S - s_i} on r-subsets (0-based i)."""
    c = np.asarray(values, dtype=np.int64).reshape(-1) % ring.q
    g = c.shape[0]
    src, dst = subsets(g, r), subset_index(g, r - 1)
    out = np.zeros((len(src), len(dst)), dtype=np.int64)
    for a, S in enumerate(src):
        for i, s in enumerate(S):
            if c[s]:
                out[a, dst[S[:i] + S[i + 1:]]] += (-1) ** i * int(c[s])
    return out % ring.q


def _functional_values(M: PresentedModule, psi):
    ring = M.ring
    if isinstance(psi, ModuleMap):
        C = psi.codomain
        if not C.is_free(1):
            raise ValueError("contraction target must be free of rank one")
        D, to_D, _ = C.diagonalized()
        return (psi.matrix @ to_D.matrix % ring.q).reshape(-1)
    c = np.asarray(psi, dtype=np.int64).reshape(-1) % ring.q
    if c.shape[0] != M.ngens:
        raise ValueError("functional has the wrong length")
    return c


def check_kernel(M: PresentedModule, c, iota: ModuleMap):
    """Raise unless iota embeds N as exactly the kernel of the functional c."""
    ring = M.ring
    if M.relations.shape[0] and (M.relations @ c % ring.q).any():
        raise ValueError("functional does not vanish on the relations of M")
    if (iota.matrix @ c % ring.q).any():
        raise ValueError("N is not contained in the kernel of psi")
    if not iota.is_injective():
        raise ValueError("N -> M is not injective")
    b = ring.min_val(c)
    if iota.domain.length != M.length - (ring.k - b):
        raise ValueError("N is not the full kernel of psi")


def psi_hat(M: PresentedModule, psi, N: PresentedModule, iota: ModuleMap, r: int, check=True) -> ModuleMap:
    """Contraction ^r M -> ^(r-1) N attached to psi: M -> R with kernel N.

    M must be given in diagonal form.  The map is the unique one whose
    composite with ^(r-1) iota is the interior product with psi.
    """
    ring = M.ring
    if r < 1:
        raise ValueError("degree must be at least one")
    if M.exps is None:
        raise ValueError("psi_hat expects a diagonal presentation of M")
    c = _functional_values(M, psi)
    if check:
        check_kernel(M, c, iota)
    src = ExteriorPower(M, r)
    dst = ExteriorPower(N, r - 1)
    b = ring.min_val(c)
    if b >= ring.k or src.rank == 0:
        return ModuleMap(src.module, dst.module, np.zeros((src.rank, dst.rank), dtype=np.int64), check=False)
    raw = contraction_matrix(ring, c, r)
    y = raw // ring.pk(b)
    mid = ExteriorPower(M, r - 1)
    # w with p^b w = 0 in ^(r-1) M are exactly the multiples of p^(a_T - b) e_T
    mods = np.diag(np.array([ring.pk(max(a - b, 0)) for a in mid.module.exps], dtype=np.int64))
    A = np.vstack([compound(ring, iota.matrix, r - 1), mods.reshape(mid.rank, mid.rank)])
    X = solve(ring, A, y)
    if X is None:
        raise ArithmeticError("contraction does not factor through the kernel")
    z = X[:, :dst.rank] * ring.pk(b) % ring.q
    return ModuleMap(src.module, dst.module, z, check=False)


def split_kernel(M: PresentedModule, psi):
    """Kernel of psi adapted to a splitting M = R m + N0, or None if none exists.

    Returns (N, iota, i0).  N keeps the index layout of M: slot i0 holds
    p^(k-b) m, other slots hold g_i - (c_i / c_i0) m.
    """
    ring = M.ring
    if M.exps is None:
        raise ValueError("expects a diagonal presentation")
    exps = M.exps
    c = _functional_values(M, psi)
    vals = [ring.val(x) for x in c]
    b = min(vals) if vals else ring.k
    if b >= ring.k:
        return None
    for i0 in range(len(c)):
        if vals[i0] != b:
            continue
        if all(vals[i] + exps[i] >= b + exps[i0] for i in range(len(c))):
            break
    else:
        return None
    u = ring.inv(int(c[i0]) // ring.pk(b))
    g = M.ngens
    mat = ring.eye(g)
    n_exps = list(exps)
    for i in range(g):
        if i == i0:
            mat[i, i0] = ring.pk(ring.k - b)
            n_exps[i] = max(exps[i0] - (ring.k - b), 0)
        else:
            d = (int(c[i]) // ring.pk(b)) * u % ring.q
            mat[i, i0] = (-d) % ring.q
    N = PresentedModule.diagonal(ring, n_exps)
    return N, ModuleMap(N, M, mat % ring.q, check=False), i0


def psi_hat_by_splitting(M: PresentedModule, psi, r: int):
    """Second construction of the contraction, via an adapted splitting of M.

    Returns (map, N, iota) or None when no adapted splitting exists.
    """
    ring = M.ring
    c = _functional_values(M, psi)
    res = split_kernel(M, c)
    if res is None:
        return None
    N, iota, i0 = res
    g = M.ngens
    # change of basis: g_i = g'_i + d_i g_i0, with g'_i0 = g_i0
    Pinv = ring.eye(g)
    u = ring.inv(int(c[i0]) // ring.pk(ring.val(c[i0])))
    b = ring.val(c[i0])
    for i in range(g):
        if i != i0:
            Pinv[i, i0] = (int(c[i]) // ring.pk(b)) * u % ring.q
    src = ExteriorPower(M, r)
    dst = ExteriorPower(N, r - 1)
    didx = dst.index
    adapted = np.zeros((src.rank, dst.rank), dtype=np.int64)
    for a, T in enumerate(src.basis):
        if i0 not in T:
            continue
        pos = T.index(i0)
        rest = T[:pos] + T[pos + 1:]
        adapted[a, didx[rest]] = (-1) ** pos * int(c[i0])
    mat = compound(ring, Pinv, r) @ (adapted % ring.q) % ring.q
    return ModuleMap(src.module, dst.module, mat, check=False), N, iota


# -- cartesian squares -----------------------------------------------------


class CartesianSquare:
    """M1 -> M2 over C1 -> C2 with h: M2 -> C2 = R^s2 and M1 = h^-1(C1).

    c1 holds a basis of C1 as rows in R^s2; hmat is the matrix of h.
    """

    def __init__(self, M1: PresentedModule, M2: PresentedModule, iota: ModuleMap, c1, hmat, check=True):
        ring = M2.ring
        self.ring = ring
        self.M1, self.M2, self.iota = M1, M2, iota
        self.hmat = as_rows(hmat, np.asarray(hmat).shape[-1]) % ring.q
        self.s2 = self.hmat.shape[1]
        self.c1 = as_rows(c1, self.s2) % ring.q
        self.s1 = self.c1.shape[0]
        if check:
            self.validate()

    def validate(self):
        ring, s1, s2 = self.ring, self.s1, self.s2
        if s1 > s2:
            raise ValueError("C1 has larger rank than C2")
        if s1 and any(v != 0 for v in smith(ring, self.c1).vals):
            raise ValueError("C1 -> C2 is not a split injection of free modules")
        C2 = PresentedModule.free(ring, s2)
        h = ModuleMap(self.M2, C2, self.hmat)
        if not self.iota.is_injective():
            raise ValueError("M1 -> M2 is not injective")
        quot = PresentedModule(ring, s2, self.c1)
        to_quot = ModuleMap(self.M2, quot, self.hmat, check=False)
        K, _ = to_quot.kernel()
        img = self.iota.then(to_quot)
        if not img.is_zero() or K.length != self.M1.length:
            raise ValueError("square is not cartesian: M1 differs from h^-1(C1)")
        return h

    def default_basis(self) -> np.ndarray:
        """Columns psi_1..psi_s2 dual to an extension of the C1 basis."""
        ring, s1, s2 = self.ring, self.s1, self.s2
        if s2 == 0:
            return np.zeros((0, 0), dtype=np.int64)
        if s1:
            S = smith(ring, self.c1)
            B = np.vstack([self.c1, S.Winv[s1:]])
        else:
            B = ring.eye(s2)
        return solve(ring, B.T, ring.eye(s2)).T % ring.q

    def check_basis(self, Psi):
        ring, s1 = self.ring, self.s1
        Psi = np.asarray(Psi, dtype=np.int64) % ring.q
        if Psi.shape != (self.s2, self.s2) or (self.s2 and not all(v == 0 for v in smith(ring, Psi).vals)):
            raise ValueError("functionals do not form a basis of the dual of C2")
        if (self.c1 @ Psi[:, s1:] % ring.q).any():
            raise ValueError("trailing functionals must vanish on C1")
        return Psi


def _det(ring, A) -> int:
    A = np.asarray(A, dtype=np.int64)
    if A.shape[0] == 0:
        return 1
    return int(compound(ring, A, A.shape[0])[0, 0])


def cartesian_map(sq: CartesianSquare, r: int, Psi=None) -> ModuleMap:
    """The contraction ^(r+s2) M2 -> ^(r+s1) M1 for a cartesian square.

    Both rank-one determinant factors are trivialized by the dual standard
    bases of C2 = R^s2 and of C1 (its given basis), so the result does not
    depend on the admissible functionals used to build it.
    """
    ring = sq.ring
    Psi = sq.default_basis() if Psi is None else sq.check_basis(Psi)
    s1, s2 = sq.s1, sq.s2
    D, to_D, from_D = sq.M2.diagonalized()
    top = r + s2
    # current module with its embedding into M2
    cur, emb = D, from_D
    step = wedge_map(to_D, top)
    deg = top
    for i in range(s2 - 1, s1 - 1, -1):
        c = emb.matrix @ sq.hmat @ Psi[:, i] % ring.q
        f = ModuleMap(cur, PresentedModule.free(ring, 1), c.reshape(-1, 1), check=False)
        N, inc = f.kernel()
        step = step.then(psi_hat(cur, c, N, inc, deg, check=False))
        cur, emb = N, inc.then(emb)
        deg -= 1
    # identify the final kernel with M1
    iso = emb.factor_through(sq.iota)
    step = step.then(wedge_map(iso, deg))
    scale = _det(ring, sq.c1 @ Psi[:, :s1] % ring.q) if s1 else 1
    dPsi = _det(ring, Psi)
    scale = scale * ring.inv(dPsi) % ring.q
    return ModuleMap(step.domain, step.codomain, step.matrix * scale % ring.q, check=False)


def element_images(f: ModuleMap):
    """All values of f, as a set of normal forms (brute force, small modules only)."""
    ring = f.ring
    D, _, from_D = f.domain.diagonalized()
    g = D.exps
    out = set()
    for coeffs in product(*[range(ring.p ** a) for a in g]):
        x = np.array(coeffs, dtype=np.int64) @ from_D.matrix if g else np.zeros(f.domain.ngens, dtype=np.int64)
        out.add(tuple(f.codomain.normal_form(f(x)).reshape(-1)))
    return out


def module_elements(M: PresentedModule, scale: int = 1):
    """All elements of scale * M as normal forms (brute force)."""
    ring = M.ring
    D, _, from_D = M.diagonalized()
    out = set()
    for coeffs in product(*[range(ring.p ** a) for a in D.exps]):
        x = (np.array(coeffs, dtype=np.int64) @ from_D.matrix * scale % ring.q) if D.exps else np.zeros(M.ngens, dtype=np.int64)
        out.add(tuple(M.normal_form(x).reshape(-1)))
    return out
