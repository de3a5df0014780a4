"""Synthetic Selmer data modeled by exact annihilation inside L = sum_q R^2.

Each prime q contributes the coordinates f_q (finite line) and t_q
(transverse line) at positions 2i and 2i+1.  X is the image of the fully
relaxed Selmer group; its annihilator under the local pairing
<(a_f, a_t), (b_f, b_t)> = a_f b_t - a_t b_f plays the dual side.

Vertices (squarefree products of primes) are tuples of sorted prime indices.
"""

import hashlib
from functools import cached_property
from itertools import combinations

import numpy as np

from ._pool import pmap
from .ring_linalg import ResidueRing, Submodule, annihilator, dumps, matrix_from_json, matrix_to_json, smith

FINITE, TRANSVERSE, RELAXED, STRICT = "finite", "transverse", "relaxed", "strict"
DUAL_CONDITION = {FINITE: FINITE, TRANSVERSE: TRANSVERSE, RELAXED: STRICT, STRICT: RELAXED}
FAITHFUL_NOTE = "faithful model: the strict-everywhere group is zero because X is taken as the image in L"


class InfeasibleTarget(ValueError):
    pass


class BudgetExhausted(RuntimeError):
    pass


def fcol(i):
    return 2 * i


def tcol(i):
    return 2 * i + 1


def local_pairing(ring: ResidueRing, m: int) -> np.ndarray:
    J = ring.zeros(2 * m, 2 * m)
    for i in range(m):
        J[2 * i, 2 * i + 1] = 1
        J[2 * i + 1, 2 * i] = ring.q - 1
    return J


class SelmerInstance:
    def __init__(self, ring: ResidueRing, r: int, X: Submodule, labels=None, fs_units=None, levels=None,
                 active=None, seed=None):
        self.ring = ring
        self.r = int(r)
        if X.n % 2:
            raise ValueError("ambient rank must be even")
        self.m = X.n // 2
        self.X = X
        self.labels = list(labels) if labels is not None else [f"q{i + 1}" for i in range(self.m)]
        self.fs_units = [int(u) % ring.q for u in (fs_units if fs_units is not None else [1] * self.m)]
        if any(u % ring.p == 0 for u in self.fs_units):
            raise ValueError("finite-singular scalars must be units")
        self.levels = [int(x) for x in (levels if levels is not None else [ring.k] * self.m)]
        self.active = tuple(sorted(active)) if active is not None else tuple(range(self.m))
        self.seed = seed
        self._cache = {}

    def __repr__(self):
        return f"SelmerInstance(p={self.ring.p}, k={self.ring.k}, r={self.r}, m={self.m}, active={self.active})"

    # -- vertices -----------------------------------------------------------

    def index_of(self, label):
        if isinstance(label, (int, np.integer)):
            if not 0 <= int(label) < self.m:
                raise KeyError(f"unknown prime index {label}")
            return int(label)
        if label not in self.labels:
            raise KeyError(f"unknown prime label {label!r}")
        return self.labels.index(label)

    def vertex(self, primes) -> tuple:
        return tuple(sorted({self.index_of(q) for q in primes}))

    def vertices(self):
        """All squarefree products of active primes, ordered by size then lexicographically."""
        out = []
        for j in range(len(self.active) + 1):
            out.extend(combinations(self.active, j))
        return out

    def vertex_name(self, n) -> str:
        return "1" if not n else "*".join(self.labels[i] for i in n)

    # -- patterns and Selmer groups ------------------------------------------

    def pattern(self, transverse=(), relaxed=(), strict=()):
        pat = [FINITE] * self.m
        for cond, qs in ((TRANSVERSE, transverse), (RELAXED, relaxed), (STRICT, strict)):
            for q in qs:
                pat[self.index_of(q)] = cond
        return tuple(pat)

    @staticmethod
    def killed_columns(pattern, dual=False):
        cols = []
        for i, c in enumerate(pattern):
            if dual:
                c = DUAL_CONDITION[c]
            if c in (FINITE, STRICT):
                cols.append(tcol(i))
            if c in (TRANSVERSE, STRICT):
                cols.append(fcol(i))
        return cols

    def _check_pattern(self, pattern):
        pattern = tuple(pattern)
        if len(pattern) != self.m or any(c not in DUAL_CONDITION for c in pattern):
            raise ValueError(f"bad pattern {pattern}")
        return pattern

    def selmer_group(self, pattern) -> Submodule:
        pattern = self._check_pattern(pattern)
        key = ("H", pattern)
        if key not in self._cache:
            self._cache[key] = self.X.kill_coordinates(self.killed_columns(pattern))
        return self._cache[key]

    @cached_property
    def dual_X(self) -> Submodule:
        return annihilator(self.X, local_pairing(self.ring, self.m))

    def dual_selmer_group(self, pattern) -> Submodule:
        pattern = self._check_pattern(pattern)
        key = ("D", pattern)
        if key not in self._cache:
            self._cache[key] = self.dual_X.kill_coordinates(self.killed_columns(pattern, dual=True))
        return self._cache[key]

    # named structures
    def H(self, n=(), relaxed=(), strict=()):
        """H for the structure transverse at n, relaxed at `relaxed`, strict at `strict`."""
        return self.selmer_group(self.pattern(transverse=n, relaxed=relaxed, strict=strict))

    def H_relaxed(self, n):
        return self.selmer_group(self.pattern(relaxed=n))

    def H_strict_at(self, n, q):
        return self.selmer_group(self.pattern(transverse=n, strict=(q,)))

    def lam(self, n) -> int:
        return self.dual_selmer_group(self.pattern(transverse=n)).length

    def mu(self, n) -> int:
        # dual of the structure relaxed at n is strict at n
        return self.dual_selmer_group(self.pattern(relaxed=n)).length

    def lam_bar(self, n) -> int:
        """Dimension of the m-torsion of the dual Selmer group at n."""
        return len(self.dual_selmer_group(self.pattern(transverse=n)).exps)

    def dual_invariants(self, n=()):
        return self.dual_selmer_group(self.pattern(transverse=n)).invariant_factors

    def is_core_vertex(self, n) -> bool:
        return self.lam(n) == 0

    def core_vertices(self):
        return [n for n in self.vertices() if self.is_core_vertex(n)]

    # -- localization ---------------------------------------------------------

    def loc_ideal(self, S: Submodule, col) -> int:
        """Exponent j with (image of S under the coordinate projection) = m^j."""
        return self.ring.min_val(S.howell[:, col]) if S.howell.shape[0] else self.ring.k

    def reduce(self, j: int) -> "SelmerInstance":
        return reduce_instance(self, j)

    # -- serialization --------------------------------------------------------

    def to_json(self):
        return {
            "p": self.ring.p, "k": self.ring.k, "r": self.r,
            "primes": [{"label": self.labels[i], "level": self.levels[i], "fs_unit": self.fs_units[i],
                        "active": i in self.active} for i in range(self.m)],
            "X": self.X.to_json(),
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, d):
        for key in ("p", "k", "r", "primes", "X"):
            if key not in d:
                raise ValueError(f"instance JSON missing key '{key}'")
        ring = ResidueRing(d["p"], d["k"])
        _, H = matrix_from_json(d["X"])
        pr = d["primes"]
        X = Submodule(ring, 2 * len(pr), H)
        active = [i for i, q in enumerate(pr) if q.get("active", True)]
        return cls(ring, d["r"], X, [q["label"] for q in pr], [q.get("fs_unit", 1) for q in pr],
                   [q.get("level", ring.k) for q in pr], active, d.get("seed"))

    def digest(self) -> str:
        return hashlib.sha256(dumps(self.to_json()).encode()).hexdigest()[:16]


# -- validity ----------------------------------------------------------------


def _free_plus(factors, k, t):
    return sorted(list(factors) + [k] * t, reverse=True)


def _torsion_vectors(S: Submodule):
    """Basis of S[m] as rows (the p^(a-1) multiples of diagonal generators)."""
    return S.torsion_points().gens


def _nonzero_combos(ring, vecs):
    """All nonzero F_p-combinations of the given m-torsion rows (as vectors mod q)."""
    vecs = np.asarray(vecs, dtype=np.int64)
    out = []
    if vecs.shape[0] == 0:
        return out
    from itertools import product
    for c in product(range(ring.p), repeat=vecs.shape[0]):
        if any(c):
            out.append(np.array(c, dtype=np.int64) @ vecs % ring.q)
    return out


def check_instance(inst: SelmerInstance, full=True) -> dict:
    """Scan every vertex and report the validity axioms V1-V5 with witnesses."""
    ring, k, r, m = inst.ring, inst.ring.k, inst.r, inst.m
    report = {"note": FAITHFUL_NOTE, "V1": True, "V2": True, "V3": True, "V4": True, "V5": True, "failures": []}

    def fail(axiom, **info):
        report[axiom] = False
        if len(report["failures"]) < 20:
            report["failures"].append(dict(axiom=axiom, **info))

    if inst.X.length != (r + m) * k:
        fail("V1", length=inst.X.length, expected=(r + m) * k)
    V = inst.vertices()

    def scan(n):
        out = []
        H = inst.H(n)
        D = inst.dual_selmer_group(inst.pattern(transverse=n))
        if H.invariant_factors != _free_plus(D.invariant_factors, k, r):
            out.append(("V3", dict(vertex=list(n), structure="F(n)", H=H.invariant_factors, dual=D.invariant_factors)))
        Hr = inst.H_relaxed(n)
        Dr = inst.dual_selmer_group(inst.pattern(relaxed=n))
        if Hr.invariant_factors != _free_plus(Dr.invariant_factors, k, r + len(n)):
            out.append(("V3", dict(vertex=list(n), structure="F^n", H=Hr.invariant_factors, dual=Dr.invariant_factors)))
        return out

    for res in pmap(scan, V):
        for ax, info in res:
            fail(ax, **info)
    if not report["V3"]:
        report["valid"] = False
        return report

    for n in V:
        ln = inst.lam(n)
        Hn = inst.H(n)
        for q in inst.active:
            if q in n:
                continue
            nq = tuple(sorted(n + (q,)))
            a = min(ln + inst.loc_ideal(Hn, fcol(q)), k)
            b = min(inst.lam(nq) + inst.loc_ideal(inst.H(nq), tcol(q)), k)
            if a != b:
                fail("V4", vertex=list(n), prime=inst.labels[q], finite_side=a, transverse_side=b)
    if full:
        v5 = richness(inst)
        if not v5["ok"]:
            report["V5"] = False
            report["failures"].extend(v5["failures"][:10])
        report["V5_detail"] = {"descent": v5["descent"], "core_connected": v5["core_connected"],
                               "joint_rich": joint_rich(inst)}
    report["valid"] = all(report[a] for a in ("V1", "V2", "V3", "V4", "V5"))
    return report


def descent_prime(inst: SelmerInstance, n):
    """A prime q not dividing n at which m^(k-1) H_F(n) and the top layer of the dual localize nonzero.

    The top layer is m^(e-1) H_F(n)* with m^e its exponent; it lies in the
    m-torsion, so such a q also lowers the m-rank of the dual.
    """
    ring = inst.ring
    H = inst.H(n)
    top = H.scale(ring.k - 1)
    D = inst.dual_selmer_group(inst.pattern(transverse=n))
    if D.length:
        D = D.scale(max(D.exps) - 1)
    for q in inst.active:
        if q in n:
            continue
        if inst.loc_ideal(top, fcol(q)) < ring.k and inst.loc_ideal(D, fcol(q)) < ring.k:
            return q
    return None


def _support_masks(inst, S: Submodule, free):
    """Distinct sets of free primes where a nonzero class of S[m] has nonzero finite coordinate."""
    ring = inst.ring
    masks = set()
    for c in _nonzero_combos(ring, _torsion_vectors(S)):
        masks.add(frozenset(q for q in free if c[fcol(q)] % ring.q))
    return masks


def joint_descent_ok(inst: SelmerInstance, n) -> bool:
    """Every nonzero c in H_F(n)[m] and d in its dual [m] share a prime q not dividing n with c_q, d_q != 0."""
    free = [q for q in inst.active if q not in n]
    A = _support_masks(inst, inst.H(n), free)
    B = _support_masks(inst, inst.dual_selmer_group(inst.pattern(transverse=n)), free)
    return all(a & b for a in A for b in B)


def iso_edge(inst: SelmerInstance, n, q) -> bool:
    """Localization at q is nonzero on H_F(n)[m] (for core n this makes both sheaf maps isomorphisms)."""
    T = inst.H(n).torsion_points()
    return inst.loc_ideal(T, fcol(q)) < inst.ring.k


def core_components(inst: SelmerInstance):
    core = set(inst.core_vertices())
    comp, seen = [], set()
    for v in sorted(core, key=lambda x: (len(x), x)):
        if v in seen:
            continue
        stack, cur = [v], []
        seen.add(v)
        while stack:
            u = stack.pop()
            cur.append(u)
            for w in _core_neighbours(inst, u, core):
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        comp.append(sorted(cur, key=lambda x: (len(x), x)))
    return comp


def _core_neighbours(inst, u, core):
    out = []
    for q in inst.active:
        if q in u:
            w = tuple(x for x in u if x != q)
            if w in core and iso_edge(inst, w, q):
                out.append(w)
        else:
            w = tuple(sorted(u + (q,)))
            if w in core and iso_edge(inst, u, q):
                out.append(w)
    return out


def richness(inst: SelmerInstance) -> dict:
    """Finite stand-in for the Cebotarev arguments.

    descent: every non-core vertex has a prime where both the top layer of
    the Selmer group and the m-torsion of the dual localize nonzero.
    core_connected: core vertices form one component under edges where
    localization on the m-torsion is nonzero.
    """
    failures = []
    descent = True
    for n in inst.vertices():
        if inst.lam(n) > 0 and descent_prime(inst, n) is None:
            descent = False
            failures.append({"axiom": "V5", "kind": "descent", "vertex": list(n)})
    comps = core_components(inst)
    connected = len(comps) == 1
    if not connected:
        failures.append({"axiom": "V5", "kind": "core_connectivity", "components": len(comps)})
    return {"ok": descent and connected, "descent": descent, "core_connected": connected, "failures": failures}


def joint_rich(inst: SelmerInstance) -> bool:
    """Element-level descent at every non-core vertex (see joint_descent_ok).

    Not part of V5: it cannot hold when m = r + #e with two or more nonzero e_i.
    """
    return all(joint_descent_ok(inst, n) for n in inst.vertices() if inst.lam(n) > 0)


def literal_richness(inst: SelmerInstance) -> dict:
    """Per-element form: every nonzero c in H_F(n)[m] and in its dual has some q not dividing n with c_q != 0."""
    ring = inst.ring
    bad = []
    for n in inst.vertices():
        free = [q for q in inst.active if q not in n]
        for side, S in (("selmer", inst.H(n)), ("dual", inst.dual_selmer_group(inst.pattern(transverse=n)))):
            for c in _nonzero_combos(ring, _torsion_vectors(S)):
                if not any(c[fcol(q)] % ring.q for q in free):
                    bad.append({"vertex": list(n), "side": side})
                    break
    return {"ok": not bad, "violations": len(bad), "first": bad[:3]}


# -- generation ----------------------------------------------------------------


def _rand_unimodular(ring, n, rng):
    while True:
        A = rng.integers(0, ring.q, (n, n))
        if n == 0 or all(v == 0 for v in smith(ring, A).vals):
            return A % ring.q


def _interleave(ring, Af, At):
    rows, m = Af.shape
    A = ring.zeros(rows, 2 * m)
    A[:, 0::2] = Af
    A[:, 1::2] = At
    return A % ring.q


def feasible(k, r, m, e) -> bool:
    e = [x for x in e if x]
    return r >= 1 and m >= r and len(e) <= m - r and all(1 <= x <= k for x in e)


def instance_from_dual(ring, r, A, units, labels=None, seed=None, levels=None):
    """Instance whose dual side is the row span of A (must be a free summand of rank m - r)."""
    m = A.shape[1] // 2
    D = Submodule(ring, 2 * m, A)
    X = annihilator(D, local_pairing(ring, m))
    return SelmerInstance(ring, r, X, labels, units, levels, seed=seed)


def generate_instance(p, k, r, m, e=(), seed=0, budget=200, all_core=None, levels=None, require_valid=True,
                      prefer_joint=True, joint_budget=25):
    """Seeded instance whose dual Selmer group at 1 is sum R/m^e_i.

    The dual side is built directly: A = (A_f | A_t) with A_t of Smith form
    diag(p^e_1, ..., 1, ...), then X = A^perp.  Candidates are rejected until
    check_instance passes.  With e empty (and all_core left at None) the
    instance is required to have every vertex core.  Valid candidates that
    are also joint_rich are preferred for the first joint_budget attempts.
    """
    e = sorted([int(x) for x in e if int(x)], reverse=True)
    if not feasible(k, r, m, e):
        raise InfeasibleTarget(f"infeasible target: p={p} k={k} r={r} m={m} e={e} "
                               f"(need m >= r >= 1, #e <= m - r, 1 <= e_i <= k)")
    ring = ResidueRing(p, k)
    rng = np.random.default_rng(seed)
    if all_core is None:
        all_core = not e
    s = m - r
    if len(e) >= 2 and m == r + len(e):
        prefer_joint = False  # joint richness cannot hold here, see joint_rich
    last = fallback = None
    for attempt in range(budget):
        if fallback is not None and attempt >= joint_budget:
            return fallback
        d = np.zeros((s, m), dtype=np.int64)
        for i in range(s):
            d[i, i] = ring.pk(e[i]) if i < len(e) else 1
        At = _rand_unimodular(ring, s, rng) @ d @ _rand_unimodular(ring, m, rng) % ring.q
        Af = rng.integers(0, ring.q, (s, m))
        A = _interleave(ring, Af, At)
        if s and any(v != 0 for v in smith(ring.reduce_to(1), A % p).vals):
            continue
        units = [int(rng.choice([u for u in range(1, ring.q) if u % p])) for _ in range(m)]
        inst = instance_from_dual(ring, r, A, units, seed=seed, levels=levels)
        if all_core and any(inst.lam(n) for n in inst.vertices()):
            continue
        if inst.dual_invariants(()) != e:
            last = {"reason": "dual structure mismatch", "got": inst.dual_invariants(())}
            continue
        if not require_valid:
            inst.attempts = attempt + 1
            return inst
        rep = check_instance(inst)
        if rep["valid"]:
            inst.attempts = attempt + 1
            inst.joint_rich = joint_rich(inst)
            if inst.joint_rich or not prefer_joint:
                return inst
            fallback = fallback or inst
            continue
        last = rep["failures"][:3]
    if fallback is not None:
        return fallback
    raise BudgetExhausted(f"no valid instance within {budget} attempts for p={p} k={k} r={r} m={m} e={e}; "
                          f"last failure: {last}")


def inst_a(p=3, k=1):
    """X = L with one prime and core rank one."""
    ring = ResidueRing(p, k)
    return SelmerInstance(ring, 1, Submodule.full(ring, 2), ["q"], [1])


# -- towers ---------------------------------------------------------------------


def reduce_instance(inst: SelmerInstance, j: int, active=None) -> SelmerInstance:
    """X mod p^j over Z/p^j; active primes default to those of level >= j."""
    if j < 1 or j > inst.ring.k:
        raise ValueError("reduction level must satisfy 1 <= j <= k")
    ring = inst.ring.reduce_to(j)
    X = inst.X.reduce(j)
    if active is None:
        active = [i for i in inst.active if inst.levels[i] >= j]
    levels = [min(x, j) for x in inst.levels]
    units = [u % ring.q for u in inst.fs_units]
    return SelmerInstance(ring, inst.r, X, inst.labels, units, levels, active, inst.seed)


def tower_levels(inst: SelmerInstance):
    """{j: active primes with level >= j} for j = 1..k."""
    return {j: [i for i in inst.active if inst.levels[i] >= j] for j in range(1, inst.ring.k + 1)}


def generate_tower_instance(p, K, r, m, levels, e=(), seed=0, budget=200):
    """Level-K instance with assigned prime levels whose reductions are all valid."""
    rng = np.random.default_rng(seed)
    for attempt in range(budget):
        sub = int(rng.integers(0, 2 ** 31))
        try:
            inst = generate_instance(p, K, r, m, e, seed=sub, budget=20, all_core=False, levels=levels)
        except BudgetExhausted:
            continue
        ok = True
        for j in range(1, K + 1):
            red = reduce_instance(inst, j, active=[i for i in range(m) if levels[i] >= K])
            if not check_instance(red)["valid"] or not any(red.mu(n) == 0 for n in red.vertices()):
                ok = False
                break
            red = reduce_instance(inst, j)
            if not check_instance(red)["valid"]:
                ok = False
                break
        if ok:
            inst.seed = seed
            return inst
    raise BudgetExhausted(f"no tower instance within {budget} attempts (levels={levels})")


def instance_to_text(inst: SelmerInstance) -> str:
    return dumps(inst.to_json())
