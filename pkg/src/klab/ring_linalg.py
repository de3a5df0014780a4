"""Exact linear algebra over R = Z/p^k.

Matrices are numpy int64 arrays with entries in [0, p^k).  Vectors are rows;
a matrix acts on the right, so the image of a row vector x is x @ A.
"""

import json
from functools import cached_property

import numpy as np


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    d = 2
    while d * d <= n:
        if n % d == 0:
            return False
        d += 1
    return True


class ResidueRing:
    """The ring Z/p^k with its valuation and unit inverses precomputed."""

    def __init__(self, p: int, k: int):
        p, k = int(p), int(k)
        if k < 1 or not _is_prime(p):
            raise ValueError(f"need p prime and k >= 1, got p={p}, k={k}")
        self.p, self.k = p, k
        self.q = p ** k
        vt = np.full(self.q, k, dtype=np.int64)
        inv = np.zeros(self.q, dtype=np.int64)
        for x in range(1, self.q):
            v, y = 0, x
            while y % p == 0:
                y //= p
                v += 1
            vt[x] = v
            if v == 0:
                inv[x] = pow(x, -1, self.q)
        self.vt = vt
        self.inv_table = inv
        self.powers = np.array([p ** i % self.q for i in range(k + 1)], dtype=np.int64)

    def __repr__(self):
        return f"ResidueRing({self.p}, {self.k})"

    def __eq__(self, other):
        return isinstance(other, ResidueRing) and (self.p, self.k) == (other.p, other.k)

    def __hash__(self):
        return hash((self.p, self.k))

    def val(self, x) -> int:
        """m-adic valuation; k for zero."""
        return int(self.vt[int(x) % self.q])

    def inv(self, x) -> int:
        x = int(x) % self.q
        if x % self.p == 0:
            raise ZeroDivisionError(f"{x} is not a unit mod {self.q}")
        return int(self.inv_table[x])

    def pk(self, v: int) -> int:
        """p^v as an element of R (zero once v >= k)."""
        return 0 if v >= self.k else int(self.powers[v])

    def arr(self, a, shape=None) -> np.ndarray:
        a = np.array(a, dtype=np.int64)
        if shape is not None:
            a = a.reshape(shape)
        return a % self.q

    def zeros(self, r, c) -> np.ndarray:
        return np.zeros((r, c), dtype=np.int64)

    def eye(self, n) -> np.ndarray:
        return np.eye(n, dtype=np.int64)

    def min_val(self, a) -> int:
        a = np.asarray(a)
        if a.size == 0:
            return self.k
        return int(self.vt[a % self.q].min())

    def reduce_to(self, j: int) -> "ResidueRing":
        return ResidueRing(self.p, j)


def as_rows(a, n: int) -> np.ndarray:
    """View a as an int64 matrix with n columns (n may be zero)."""
    a = np.array(a, dtype=np.int64)
    if n == 0:
        return np.zeros((a.shape[0] if a.ndim == 2 else 0, 0), dtype=np.int64)
    return a.reshape(-1, n)


# -- normal forms ---------------------------------------------------------


class Smith:
    """U @ A @ W = diag(p^vals) with U, W invertible over R."""

    def __init__(self, U, Uinv, W, Winv, vals):
        self.U, self.Uinv, self.W, self.Winv, self.vals = U, Uinv, W, Winv, vals


def smith(ring: ResidueRing, A) -> Smith:
    """Smith reduction over Z/p^k by minimal-valuation pivoting.

    Over the local ring every entry of least valuation divides the whole
    remaining block, so elimination never needs gcd steps.
    """
    q, k = ring.q, ring.k
    A = np.array(A, dtype=np.int64) % q
    if A.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    m, n = A.shape
    U, Uinv = ring.eye(m), ring.eye(m)
    W, Winv = ring.eye(n), ring.eye(n)
    vals = []
    for t in range(min(m, n)):
        V = ring.vt[A[t:, t:]]
        idx = int(np.argmin(V))
        v = int(V.flat[idx])
        if v >= k:
            vals.extend([k] * (min(m, n) - t))
            break
        i, j = divmod(idx, n - t)
        i += t
        j += t
        if i != t:
            A[[t, i]] = A[[i, t]]
            U[[t, i]] = U[[i, t]]
            Uinv[:, [t, i]] = Uinv[:, [i, t]]
        if j != t:
            A[:, [t, j]] = A[:, [j, t]]
            W[:, [t, j]] = W[:, [j, t]]
            Winv[[t, j]] = Winv[[j, t]]
        piv = ring.pk(v)
        w = int(A[t, t]) // piv
        c = ring.inv(w)
        A[t] = A[t] * c % q
        U[t] = U[t] * c % q
        Uinv[:, t] = Uinv[:, t] * w % q
        f = A[:, t] // piv
        f[t] = 0
        if f.any():
            A = (A - np.outer(f, A[t])) % q
            U = (U - np.outer(f, U[t])) % q
            Uinv[:, t] = (Uinv[:, t] + Uinv @ f) % q
        g = A[t, :] // piv
        g[t] = 0
        if g.any():
            A = (A - np.outer(A[:, t], g)) % q
            W = (W - np.outer(W[:, t], g)) % q
            Winv[t, :] = (Winv[t, :] + g @ Winv) % q
        vals.append(v)
    return Smith(U, Uinv, W, Winv, vals)


def howell_form(ring: ResidueRing, A, ncols=None) -> np.ndarray:
    """Canonical Howell normal form of the row span of A.

    Pivots are powers p^v, entries above a pivot lie in [0, p^v), zero rows
    are dropped, and every span element whose first c entries vanish is a
    combination of the rows whose pivots lie past column c.
    """
    q, k = ring.q, ring.k
    A = np.array(A, dtype=np.int64)
    if A.size == 0:
        n = ncols if ncols is not None else (A.shape[1] if A.ndim == 2 else 0)
        return np.zeros((0, n), dtype=np.int64)
    A = A.reshape(-1, A.shape[-1]) % q
    n = A.shape[1]
    rows = [r.copy() for r in A if r.any()]
    r = 0
    for c in range(n):
        best, bv = None, k
        for i in range(r, len(rows)):
            v = ring.vt[rows[i][c]]
            if v < bv:
                best, bv = i, v
                if v == 0:
                    break
        if best is None:
            continue
        rows[r], rows[best] = rows[best], rows[r]
        piv = ring.pk(bv)
        w = int(rows[r][c]) // piv
        rows[r] = rows[r] * ring.inv(w) % q
        pr = rows[r]
        for i in range(len(rows)):
            if i != r and rows[i][c]:
                rows[i] = (rows[i] - (int(rows[i][c]) // piv) * pr) % q
        extra = pr * ring.pk(k - bv) % q
        if extra.any():
            rows.append(extra)
        r += 1
    out = [x for x in rows[:r]]
    if not out:
        return np.zeros((0, n), dtype=np.int64)
    return np.array(out, dtype=np.int64)


def kernel_basis(ring: ResidueRing, A) -> np.ndarray:
    """Rows generating {x : x @ A = 0}."""
    A = np.array(A, dtype=np.int64) % ring.q
    m = A.shape[0]
    if A.shape[1] == 0:
        return ring.eye(m)
    S = smith(ring, A)
    out = []
    for i in range(m):
        v = S.vals[i] if i < len(S.vals) else 0
        if i >= len(S.vals):
            out.append(S.U[i])
        elif v < ring.k:
            if v > 0:
                out.append(S.U[i] * ring.pk(ring.k - v) % ring.q)
        else:
            out.append(S.U[i])
    if not out:
        return np.zeros((0, m), dtype=np.int64)
    return np.array(out, dtype=np.int64) % ring.q


def solve(ring: ResidueRing, A, B):
    """Return X with X @ A = B (row by row), or None if some row has no solution."""
    q = ring.q
    A = np.array(A, dtype=np.int64) % q
    B = np.array(B, dtype=np.int64).reshape(-1, A.shape[1]) % q
    m, n = A.shape
    if m == 0:
        return np.zeros((B.shape[0], 0), dtype=np.int64) if not B.any() else None
    S = smith(ring, A)
    C = B @ S.W % q
    Y = np.zeros((B.shape[0], m), dtype=np.int64)
    for i in range(n):
        v = S.vals[i] if i < len(S.vals) else ring.k
        col = C[:, i]
        if v >= ring.k:
            if col.any():
                return None
            continue
        if (ring.vt[col] < v).any():
            return None
        Y[:, i] = col // ring.pk(v)
    return Y @ S.U % q


# -- modules ---------------------------------------------------------------


class PresentedModule:
    """The module R^g / (row span of relations)."""

    def __init__(self, ring: ResidueRing, ngens: int, relations=None):
        self.ring = ring
        self.ngens = int(ngens)
        if relations is None:
            relations = np.zeros((0, ngens), dtype=np.int64)
        rel = as_rows(relations, self.ngens) % ring.q
        self.relations = rel
        self._exps = None

    @classmethod
    def diagonal(cls, ring, exps):
        """Direct sum of R/m^a for a in exps (each 0 <= a <= k)."""
        exps = [int(a) for a in exps]
        if any(a < 0 or a > ring.k for a in exps):
            raise ValueError(f"exponents must lie in [0, {ring.k}]")
        rel = np.diag(np.array([ring.pk(a) for a in exps], dtype=np.int64)).reshape(len(exps), len(exps))
        M = cls(ring, len(exps), rel)
        M._exps = exps
        return M

    @classmethod
    def free(cls, ring, n):
        return cls.diagonal(ring, [ring.k] * n)

    @property
    def exps(self):
        """Exponents if the presentation is diagonal, else None."""
        return self._exps

    def __repr__(self):
        return f"PresentedModule({self.ring.p}^{self.ring.k}, factors={self.invariant_factors})"

    @cached_property
    def _smith(self):
        return smith(self.ring, self.relations) if self.relations.shape[0] else None

    @cached_property
    def _diag(self):
        """(exps, to_diag, from_diag): coordinates x -> x @ to_diag, y -> y @ from_diag."""
        g, k = self.ngens, self.ring.k
        if self._exps is not None:
            keep = [i for i, a in enumerate(self._exps) if a > 0]
            eye = self.ring.eye(g)
            return [self._exps[i] for i in keep], eye[:, keep], eye[keep, :]
        if self._smith is None:
            return [k] * g, self.ring.eye(g), self.ring.eye(g)
        S = self._smith
        exps = [S.vals[i] if i < len(S.vals) else k for i in range(g)]
        keep = [i for i in range(g) if exps[i] > 0]
        return [exps[i] for i in keep], S.W[:, keep], S.Winv[keep, :]

    @property
    def invariant_factors(self):
        return sorted(self._diag[0], reverse=True)

    @property
    def length(self) -> int:
        return sum(self._diag[0])

    def is_free(self, rank=None) -> bool:
        f = self.invariant_factors
        ok = all(a == self.ring.k for a in f)
        return ok and (rank is None or len(f) == rank)

    def is_cyclic(self) -> bool:
        return len(self._diag[0]) <= 1

    def is_zero_module(self) -> bool:
        return self.length == 0

    def diagonalized(self):
        """(D, to_D, from_D): a diagonal module with inverse isomorphisms."""
        exps, T, F = self._diag
        D = PresentedModule.diagonal(self.ring, exps)
        return D, ModuleMap(self, D, T, check=False), ModuleMap(D, self, F, check=False)

    def coords(self, x) -> np.ndarray:
        """Coordinates of x (rows) in the diagonal basis, reduced."""
        exps, T, _ = self._diag
        y = as_rows(x, self.ngens) @ T % self.ring.q
        mods = np.array([self.ring.pk(a) if a < self.ring.k else self.ring.q for a in exps], dtype=np.int64)
        if len(exps):
            y = y % mods
        return y

    def is_zero(self, x) -> bool:
        return not self.coords(x).any()

    def equal(self, x, y) -> bool:
        return self.is_zero(np.asarray(x) - np.asarray(y))

    def normal_form(self, x) -> np.ndarray:
        """Canonical representative of x (rows) in R^g."""
        _, _, F = self._diag
        return self.coords(x) @ F % self.ring.q

    def valuation_of(self, x) -> int:
        """max{j : x in m^j M}; k for the zero element."""
        exps, _, _ = self._diag
        y = self.coords(x).reshape(-1)
        best = self.ring.k
        for c, a in zip(y, exps):
            if c:
                best = min(best, self.ring.val(c))
        return best

    def generator_index(self, x):
        """For cyclic M: i with R x = m^i M, or None if x generates no such ideal."""
        exps, _, _ = self._diag
        if not exps:
            return 0
        if len(exps) != 1:
            raise ValueError("module is not cyclic")
        c = int(self.coords(x).reshape(-1)[0])
        return exps[0] if c == 0 else self.ring.val(c)

    def scaled(self, j: int):
        """The submodule m^j M with its inclusion."""
        f = ModuleMap(self, self, self.ring.eye(self.ngens) * self.ring.pk(j) % self.ring.q, check=False)
        return f.image()

    def to_json(self):
        return {"p": self.ring.p, "k": self.ring.k, "ngens": self.ngens,
                "relations": matrix_to_json(self.ring, self.relations)}


class ModuleMap:
    """Homomorphism given by a matrix whose row i is the image of generator i."""

    def __init__(self, domain: PresentedModule, codomain: PresentedModule, matrix, check=True):
        ring = domain.ring
        self.ring = ring
        self.domain, self.codomain = domain, codomain
        M = as_rows(matrix, codomain.ngens).reshape(domain.ngens, codomain.ngens) % ring.q
        self.matrix = M
        if check and domain.relations.shape[0]:
            if not codomain.is_zero(domain.relations @ M % ring.q):
                raise ValueError("matrix does not kill the domain relations")

    def __call__(self, x):
        return np.array(x, dtype=np.int64) @ self.matrix % self.ring.q

    def then(self, g: "ModuleMap") -> "ModuleMap":
        return ModuleMap(self.domain, g.codomain, self.matrix @ g.matrix % self.ring.q, check=False)

    def scale(self, c) -> "ModuleMap":
        return ModuleMap(self.domain, self.codomain, self.matrix * int(c) % self.ring.q, check=False)

    def equals(self, g: "ModuleMap") -> bool:
        return self.codomain.is_zero(self.matrix - g.matrix)

    def is_zero(self) -> bool:
        return self.codomain.is_zero(self.matrix)

    def _stacked(self):
        return np.vstack([self.matrix, self.codomain.relations]) if self.codomain.relations.shape[0] else self.matrix

    def kernel(self):
        """(K, inclusion K -> domain) with K diagonal."""
        ring, g = self.ring, self.domain.ngens
        Z = kernel_basis(ring, self._stacked())[:, :g]
        return _subquotient(ring, Z, self.domain)

    def image(self):
        """(I, inclusion I -> codomain) with I diagonal."""
        return _subquotient(self.ring, self.matrix, self.codomain)

    def is_injective(self) -> bool:
        return self.kernel()[0].length == 0

    def is_surjective(self) -> bool:
        return self.image()[0].length == self.codomain.length

    def is_iso(self) -> bool:
        return self.is_injective() and self.is_surjective()

    def factor_through(self, inc: "ModuleMap") -> "ModuleMap":
        """g with g.then(inc) == self, for an injective inc with the same codomain."""
        ring = self.ring
        A = np.vstack([inc.matrix, self.codomain.relations]) if self.codomain.relations.shape[0] else inc.matrix
        X = solve(ring, A, self.matrix)
        if X is None:
            raise ValueError("image does not lie in the image of the inclusion")
        return ModuleMap(self.domain, inc.domain, X[:, :inc.domain.ngens], check=False)


def _subquotient(ring, G, M: PresentedModule):
    """The submodule of M generated by rows G, as a diagonal module with its inclusion."""
    G = as_rows(G, M.ngens) % ring.q
    s = G.shape[0]
    if s == 0:
        D = PresentedModule.diagonal(ring, [])
        return D, ModuleMap(D, M, np.zeros((0, M.ngens), dtype=np.int64), check=False)
    A = np.vstack([G, M.relations]) if M.relations.shape[0] else G
    rel = kernel_basis(ring, A)[:, :s]
    P = PresentedModule(ring, s, rel)
    D, _, fromD = P.diagonalized()
    inc = ModuleMap(D, M, fromD.matrix @ G % ring.q, check=False)
    return D, inc


class Submodule:
    """Submodule of the free module R^n, stored by its Howell form."""

    def __init__(self, ring: ResidueRing, n: int, rows=None):
        self.ring = ring
        self.n = int(n)
        if rows is None:
            rows = np.zeros((0, self.n), dtype=np.int64)
        self.howell = howell_form(ring, np.array(rows, dtype=np.int64).reshape(-1, self.n), self.n)

    @classmethod
    def full(cls, ring, n):
        return cls(ring, n, ring.eye(n))

    @classmethod
    def zero(cls, ring, n):
        return cls(ring, n)

    def __repr__(self):
        return f"Submodule(n={self.n}, factors={self.invariant_factors})"

    def __eq__(self, other):
        return (isinstance(other, Submodule) and self.ring == other.ring and self.n == other.n
                and self.howell.shape == other.howell.shape and bool((self.howell == other.howell).all()))

    def __hash__(self):
        return hash((self.ring, self.n, self.howell.tobytes()))

    @cached_property
    def _basis(self):
        ring = self.ring
        if self.howell.shape[0] == 0:
            return [], [], ring.eye(self.n), np.zeros((0, self.n), dtype=np.int64)
        S = smith(ring, self.howell)
        vals = [v for v in S.vals]
        idx = [i for i, v in enumerate(vals) if v < ring.k]
        exps = [ring.k - vals[i] for i in idx]
        gens = np.array([S.Winv[i] * ring.pk(vals[i]) % ring.q for i in idx], dtype=np.int64).reshape(-1, self.n)
        return exps, vals, S.W, gens

    @property
    def exps(self):
        return list(self._basis[0])

    @property
    def gens(self) -> np.ndarray:
        """Diagonal generators: gens[i] has annihilator m^exps[i]."""
        return self._basis[3]

    @property
    def invariant_factors(self):
        return sorted(self.exps, reverse=True)

    @property
    def length(self) -> int:
        return sum(self.exps)

    def is_free(self, rank=None) -> bool:
        return all(a == self.ring.k for a in self.exps) and (rank is None or len(self.exps) == rank)

    @cached_property
    def module(self) -> PresentedModule:
        return PresentedModule.diagonal(self.ring, self.exps)

    def coords(self, x, check=True) -> np.ndarray:
        """Coordinates of elements x (rows of R^n) in the diagonal generators."""
        ring = self.ring
        exps, vals, W, _ = self._basis
        X = np.array(x, dtype=np.int64).reshape(-1, self.n) % ring.q
        Z = X @ W % ring.q
        out = np.zeros((X.shape[0], len(exps)), dtype=np.int64)
        j = 0
        for i in range(self.n):
            v = vals[i] if i < len(vals) else ring.k
            col = Z[:, i]
            if v >= ring.k:
                if check and col.any():
                    raise ValueError("element not in submodule")
                continue
            if check and (ring.vt[col] < v).any():
                raise ValueError("element not in submodule")
            out[:, j] = (col // ring.pk(v)) % ring.pk(exps[j]) if exps[j] < ring.k else col // ring.pk(v)
            j += 1
        return out

    def contains(self, x) -> bool:
        try:
            self.coords(x)
            return True
        except ValueError:
            return False

    def contains_submodule(self, other: "Submodule") -> bool:
        return other.howell.shape[0] == 0 or self.contains(other.howell)

    def inclusion_into(self, other: "Submodule") -> ModuleMap:
        return ModuleMap(self.module, other.module, other.coords(self.gens), check=False)

    def functional(self, vec) -> np.ndarray:
        """Values of the functional x -> x . vec on the diagonal generators."""
        return self.gens @ np.array(vec, dtype=np.int64) % self.ring.q

    def intersect(self, other: "Submodule") -> "Submodule":
        ring = self.ring
        A, B = self.howell, other.howell
        if A.shape[0] == 0 or B.shape[0] == 0:
            return Submodule.zero(ring, self.n)
        Z = kernel_basis(ring, np.vstack([A, (-B) % ring.q]))[:, :A.shape[0]]
        return Submodule(ring, self.n, Z @ A % ring.q)

    def __add__(self, other: "Submodule") -> "Submodule":
        return Submodule(self.ring, self.n, np.vstack([self.howell, other.howell]))

    def scale(self, j: int) -> "Submodule":
        return Submodule(self.ring, self.n, self.howell * self.ring.pk(j) % self.ring.q)

    def kill_coordinates(self, cols) -> "Submodule":
        """Elements whose listed coordinates vanish."""
        cols = list(cols)
        if not cols or self.howell.shape[0] == 0:
            return self
        ring = self.ring
        Z = kernel_basis(ring, self.howell[:, cols])
        return Submodule(ring, self.n, Z @ self.howell % ring.q)

    def reduce(self, j: int) -> "Submodule":
        r = self.ring.reduce_to(j)
        return Submodule(r, self.n, self.howell % r.q)

    def torsion_points(self) -> "Submodule":
        """The m-torsion M[m]."""
        ring = self.ring
        gens = [g * ring.pk(a - 1) % ring.q for g, a in zip(self.gens, self.exps)]
        return Submodule(ring, self.n, np.array(gens, dtype=np.int64).reshape(-1, self.n))

    def to_json(self):
        return matrix_to_json(self.ring, self.howell, cols=self.n)

    @classmethod
    def from_json(cls, d):
        ring = ResidueRing(d["p"], d["k"])
        return cls(ring, d["cols"], matrix_from_json(d)[1])


def quotient(A: Submodule, B: Submodule) -> PresentedModule:
    """A / B as a presented module on the diagonal generators of A."""
    if A.n != B.n or not A.contains_submodule(B):
        raise ValueError("dimension mismatch: B is not contained in A")
    ring = A.ring
    rel = [row for row in A.module.relations]
    if B.howell.shape[0]:
        rel.extend(A.coords(B.howell))
    return PresentedModule(ring, len(A.exps), np.array(rel, dtype=np.int64).reshape(-1, len(A.exps)))


def hom_to_R(M: PresentedModule) -> PresentedModule:
    """Hom(M, R) as the submodule of R^g of functionals killing the relations."""
    ring = M.ring
    if M.relations.shape[0] == 0:
        return PresentedModule.free(ring, M.ngens)
    Z = kernel_basis(ring, M.relations.T)
    return Submodule(ring, M.ngens, Z).module


def is_unimodular(ring: ResidueRing, J) -> bool:
    J = np.array(J, dtype=np.int64) % ring.q
    if J.ndim != 2 or J.shape[0] != J.shape[1]:
        return False
    S = smith(ring, J)
    return all(v == 0 for v in S.vals)


def annihilator(X: Submodule, pairing) -> Submodule:
    """{y : <x, y> = x @ pairing @ y^T = 0 for all x in X}."""
    ring = X.ring
    J = np.array(pairing, dtype=np.int64) % ring.q
    if J.shape != (X.n, X.n) or not is_unimodular(ring, J):
        raise ValueError("invalid pairing: not a perfect form")
    if X.howell.shape[0] == 0:
        return Submodule.full(ring, X.n)
    Z = kernel_basis(ring, (X.howell @ J % ring.q).T)
    return Submodule(ring, X.n, Z)


def length(M) -> int:
    return M.length


def invariant_factors(M) -> list:
    return M.invariant_factors


def intersect(A: Submodule, B: Submodule) -> Submodule:
    return A.intersect(B)


def module_sum(A: Submodule, B: Submodule) -> Submodule:
    return A + B


def kernel(f: ModuleMap):
    return f.kernel()


def image(f: ModuleMap):
    return f.image()


def matrix_to_json(ring: ResidueRing, A, cols=None):
    A = np.array(A, dtype=np.int64)
    rows = A.shape[0] if A.ndim == 2 else 0
    c = A.shape[1] if A.ndim == 2 else (cols or 0)
    return {"p": ring.p, "k": ring.k, "rows": int(rows), "cols": int(c),
            "entries": [int(x) for x in (A % ring.q).reshape(-1)]}


def matrix_from_json(d):
    for key in ("p", "k", "rows", "cols", "entries"):
        if key not in d:
            raise ValueError(f"matrix JSON missing key '{key}'")
    ring = ResidueRing(d["p"], d["k"])
    if len(d["entries"]) != d["rows"] * d["cols"]:
        raise ValueError("matrix JSON: entries length does not match rows*cols")
    A = np.array(d["entries"], dtype=np.int64).reshape(d["rows"], d["cols"]) % ring.q
    return ring, A


def dumps(obj) -> str:
    """Deterministic JSON text."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))
