"""Stark systems, Kolyvagin systems and the transform between them.

Trivializations used throughout:
  * Y_n = ^(r+nu) H_{F^n} carries the factor ^nu W_n generated by the dual
    transverse functionals wedged in global prime order;
  * the Selmer stalk ^r H_{F(n)} (x) G_n uses G_n = (x) G_q with stored
    generators, so every G factor is the identity on coordinates;
  * loc^f at q is the finite coordinate scaled by the finite-singular unit u_q.

A system is stored as {vertex: coordinate vector in the stored basis}.
"""

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ._pool import pmap
from .exterior import CartesianSquare, ExteriorPower, cartesian_map, compound, psi_hat
from .graph_sheaf import NotLocallyCyclic, SheafOnGraph, edge_key, global_sections
from .ring_linalg import ModuleMap, PresentedModule, solve
from .selmer_instance import SelmerInstance, descent_prime, fcol, iso_edge, reduce_instance, tcol

INF = math.inf


def _cached(inst, key, build):
    c = inst._cache
    if key not in c:
        c[key] = build()
    return c[key]


def divides(m, n) -> bool:
    return set(m) <= set(n)


def perm_sign(seq) -> int:
    """Sign of the permutation sorting seq."""
    seq = list(seq)
    s = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                s = -s
    return s


def direct_sum(mods):
    """Diagonal direct sum of diagonal modules, with generator offsets."""
    exps, off = [], []
    for M in mods:
        off.append(len(exps))
        exps.extend(M.exps)
    ring = mods[0].ring
    return PresentedModule.diagonal(ring, exps), off


def _in_span(M: PresentedModule, G, x) -> bool:
    """Is x in the submodule of M generated by the rows of G?"""
    ring = M.ring
    parts = [np.asarray(G, dtype=np.int64).reshape(-1, M.ngens)]
    if M.relations.shape[0]:
        parts.append(M.relations)
    A = np.vstack(parts)
    if A.shape[0] == 0:
        return M.is_zero(x)
    return solve(ring, A, np.asarray(x, dtype=np.int64).reshape(-1, M.ngens)) is not None


def same_submodule(M: PresentedModule, G1, G2) -> bool:
    G1 = np.asarray(G1, dtype=np.int64).reshape(-1, M.ngens)
    G2 = np.asarray(G2, dtype=np.int64).reshape(-1, M.ngens)
    return all(_in_span(M, G2, g) for g in G1) and all(_in_span(M, G1, g) for g in G2)


def scaled_gens(M: PresentedModule, j: int) -> np.ndarray:
    return M.ring.eye(M.ngens) * M.ring.pk(j) % M.ring.q


def element_order(M: PresentedModule, x) -> int:
    """Length of R x inside the diagonal module M."""
    ring = M.ring
    best = 0
    for c, a in zip(M.coords(x).reshape(-1), M._diag[0]):
        if c:
            best = max(best, a - ring.val(int(c)))
    return best


# -- Stark side -----------------------------------------------------------------


def stark_datum(inst: SelmerInstance, n) -> ExteriorPower:
    n = tuple(n)
    return _cached(inst, ("Y", n), lambda: ExteriorPower(inst.H_relaxed(n).module, inst.r + len(n)))


def stark_square(inst: SelmerInstance, n, m, check=False) -> CartesianSquare:
    """H_{F^m} -> H_{F^n} over sum_{q|m} H_tr -> sum_{q|n} H_tr, via the transverse coordinates."""
    n, m = tuple(n), tuple(m)
    Hn, Hm = inst.H_relaxed(n), inst.H_relaxed(m)
    ring = inst.ring
    hmat = Hn.gens[:, [tcol(q) for q in n]] if n else ring.zeros(len(Hn.exps), 0)
    c1 = ring.eye(len(n))[[n.index(q) for q in m]] if n else ring.zeros(0, 0)
    return CartesianSquare(Hm.module, Hn.module, Hm.inclusion_into(Hn), c1.reshape(len(m), len(n)), hmat, check=check)


def _check_divides(inst, n, m):
    if not divides(m, n):
        raise ValueError(f"{inst.vertex_name(m)} does not divide {inst.vertex_name(n)}")


def psi_map(inst: SelmerInstance, n, m) -> ModuleMap:
    """Psi_{n,m}: Y_n -> Y_m."""
    n, m = inst.vertex(n), inst.vertex(m)
    _check_divides(inst, n, m)

    def build():
        Yn, Ym = stark_datum(inst, n), stark_datum(inst, m)
        if n == m:
            return ModuleMap(Yn.module, Ym.module, inst.ring.eye(Yn.rank), check=False)
        f = cartesian_map(stark_square(inst, n, m), inst.r)
        return ModuleMap(Yn.module, Ym.module, f.matrix, check=False)

    return _cached(inst, ("psi", n, m), build)


def psi_map_explicit(inst: SelmerInstance, n, m, order=None) -> ModuleMap:
    """Psi_{n,m} as a chain of single-prime contractions.

    order lists the primes of n with those of m first; the contraction for
    the last prime is applied first.  The sign converts between the
    orientation given by `order` and the stored global-order orientation.
    """
    n, m = inst.vertex(n), inst.vertex(m)
    _check_divides(inst, n, m)
    rest = [q for q in n if q not in m]
    order = list(order) if order is not None else list(m) + rest
    if sorted(order[:len(m)]) != list(m) or sorted(order) != list(n):
        raise ValueError("order must list the primes of m first, then the rest of n")
    ring = inst.ring
    sign = perm_sign(order) * perm_sign(order[:len(m)])
    Yn = stark_datum(inst, n)
    mat = ring.eye(Yn.rank)
    deg = inst.r + len(n)
    for i in range(len(order), len(m), -1):
        q = order[i - 1]
        big, small = tuple(sorted(order[:i])), tuple(sorted(order[:i - 1]))
        Hb, Hs = inst.H_relaxed(big), inst.H_relaxed(small)
        step = psi_hat(Hb.module, Hb.gens[:, tcol(q)], Hs.module, Hs.inclusion_into(Hb), deg, check=False)
        mat = mat @ step.matrix % ring.q
        deg -= 1
    return ModuleMap(Yn.module, stark_datum(inst, m).module, mat * sign % ring.q, check=False)


@dataclass
class StarkSystem:
    inst: SelmerInstance
    values: dict

    def module(self, n) -> PresentedModule:
        return stark_datum(self.inst, n).module

    def scale(self, c):
        q = self.inst.ring.q
        return StarkSystem(self.inst, {n: v * int(c) % q for n, v in self.values.items()})

    def is_compatible(self) -> bool:
        inst = self.inst
        for n, v in self.values.items():
            for q in n:
                m = tuple(x for x in n if x != q)
                if m in self.values and not self.module(m).equal(psi_map(inst, n, m)(v), self.values[m]):
                    return False
        return True

    def to_json(self):
        return {self.inst.vertex_name(n): [int(x) for x in self.module(n).normal_form(v).reshape(-1)]
                for n, v in sorted(self.values.items(), key=lambda t: (len(t[0]), t[0]))}


@dataclass
class StarkModule:
    inst: SelmerInstance
    module: PresentedModule
    embedding: ModuleMap
    offsets: dict

    def value(self, x, n):
        Y = stark_datum(self.inst, n)
        o = self.offsets[n]
        return (np.asarray(x, dtype=np.int64) @ self.embedding.matrix)[o:o + Y.rank] % self.inst.ring.q

    def system(self, x) -> StarkSystem:
        return StarkSystem(self.inst, {n: self.value(x, n) for n in self.offsets})

    def generator(self) -> StarkSystem:
        if not self.module.is_cyclic() or not self.module.exps:
            raise ValueError("Stark module is not cyclic")
        return self.system(self.module.ring.eye(self.module.ngens)[0])

    def projection(self, n) -> ModuleMap:
        Y = stark_datum(self.inst, n)
        o = self.offsets[n]
        return ModuleMap(self.module, Y.module, self.embedding.matrix[:, o:o + Y.rank], check=False)


def stark_module(inst: SelmerInstance) -> StarkModule:
    """Compatible tuples (eps_n) under Psi on all corank-one pairs."""

    def build():
        ring = inst.ring
        V = inst.vertices()
        Ys = pmap(lambda n: stark_datum(inst, n), V)
        total, off = direct_sum([Y.module for Y in Ys])
        offsets = dict(zip(V, off))
        pairs = [(n, q) for n in V for q in n]
        targets = [stark_datum(inst, tuple(x for x in n if x != q)) for n, q in pairs]
        if not pairs:
            D, inc = ModuleMap(total, total, ring.eye(total.ngens), check=False).image()
            return StarkModule(inst, D, inc, offsets)
        cod, coff = direct_sum([Y.module for Y in targets])
        Phi = ring.zeros(total.ngens, cod.ngens)
        mats = pmap(lambda nq: psi_map(inst, nq[0], tuple(x for x in nq[0] if x != nq[1])).matrix, pairs)
        for (n, q), c, Y, mat in zip(pairs, coff, targets, mats):
            m = tuple(x for x in n if x != q)
            Phi[offsets[n]:offsets[n] + mat.shape[0], c:c + Y.rank] += mat
            Phi[offsets[m]:offsets[m] + Y.rank, c:c + Y.rank] -= ring.eye(Y.rank)
        K, emb = ModuleMap(total, cod, Phi % ring.q, check=False).kernel()
        return StarkModule(inst, K, emb, offsets)

    return _cached(inst, ("SS",), build)


def stark_from_top(inst: SelmerInstance) -> StarkSystem:
    """Second route: the generator of Y at the top vertex pushed down by Psi."""
    top = tuple(inst.active)
    Y = stark_datum(inst, top).module
    if not Y.is_free(1):
        raise ValueError("top Stark datum is not free of rank one")
    _, _, from_D = Y.diagonalized()
    g = from_D.matrix[0]
    return StarkSystem(inst, {n: psi_map(inst, top, n)(g) for n in inst.vertices()})


def stark_projection_image_ok(inst: SelmerInstance, n, SS: StarkModule = None) -> bool:
    """Image of SS_r -> Y_n equals m^mu(n) Y_n."""
    SS = SS or stark_module(inst)
    Y = stark_datum(inst, n).module
    P = SS.projection(n)
    return same_submodule(Y, P.matrix, scaled_gens(Y, min(inst.mu(n), inst.ring.k)))


def psi_image_ok(inst: SelmerInstance, n, m) -> bool:
    """Psi_{n,m}(Y_n) = m^mu(m) Y_m, expected whenever mu(n) = 0."""
    Y = stark_datum(inst, m).module
    return same_submodule(Y, psi_map(inst, n, m).matrix, scaled_gens(Y, min(inst.mu(m), inst.ring.k)))


# -- Selmer sheaf and its stub subsheaf ---------------------------------------------


def selmer_stalk(inst: SelmerInstance, n) -> ExteriorPower:
    n = tuple(n)
    return _cached(inst, ("S", n), lambda: ExteriorPower(inst.H(n).module, inst.r))


def edge_maps(inst: SelmerInstance, n, q):
    """(psi_n^e, psi_nq^e) on the edge joining n and nq: contraction by u_q loc^f and by loc^tr."""
    n = tuple(n)
    nq = tuple(sorted(n + (q,)))

    def build():
        r = inst.r
        K = inst.H_strict_at(n, q)
        Hn, Hnq = inst.H(n), inst.H(nq)
        u = inst.fs_units[q]
        left = psi_hat(Hn.module, Hn.gens[:, fcol(q)] * u % inst.ring.q, K.module, K.inclusion_into(Hn), r, check=False)
        right = psi_hat(Hnq.module, Hnq.gens[:, tcol(q)], K.module, K.inclusion_into(Hnq), r, check=False)
        return left, right

    return _cached(inst, ("edge", n, q), build)


def graph_edges(inst: SelmerInstance):
    return [(n, q) for n in inst.vertices() for q in inst.active if q not in n]


def selmer_sheaf(inst: SelmerInstance) -> SheafOnGraph:
    def build():
        V = inst.vertices()
        stalks = {n: selmer_stalk(inst, n).module for n in V}
        E = graph_edges(inst)
        built = pmap(lambda nq: edge_maps(inst, *nq), E)
        emods, maps = {}, {}
        for (n, q), (left, right) in zip(E, built):
            nq = tuple(sorted(n + (q,)))
            e = edge_key(n, nq)
            emods[e] = left.codomain
            maps[(n, e)] = left
            maps[(nq, e)] = right
        return SheafOnGraph(inst.ring, V, stalks, emods, maps)

    return _cached(inst, ("sheaf",), build)


class StubMismatch(ValueError):
    pass


@dataclass
class StubSheaf:
    sheaf: SheafOnGraph
    inclusions: dict = field(default_factory=dict)


def stub_subsheaf(inst: SelmerInstance) -> StubSheaf:
    """S'(n) = m^lambda(n) S(n), edge modules the common image of both endpoints."""

    def build():
        ring = inst.ring
        full = selmer_sheaf(inst)
        V = inst.vertices()
        incs = {}
        for n in V:
            incs[n] = full.stalks[n].scaled(min(inst.lam(n), ring.k))[1]
        stalks = {n: incs[n].domain for n in V}
        emods, maps = {}, {}
        for n, q in graph_edges(inst):
            nq = tuple(sorted(n + (q,)))
            e = edge_key(n, nq)
            a = incs[n].then(full.psi(n, e))
            b = incs[nq].then(full.psi(nq, e))
            E, incE = a.image()
            if not same_submodule(full.edge_modules[e], a.matrix, b.matrix):
                raise StubMismatch(f"stub images differ on edge {inst.vertex_name(n)} - {inst.vertex_name(nq)}")
            emods[e] = E
            maps[(n, e)] = a.factor_through(incE)
            maps[(nq, e)] = b.factor_through(incE)
        return StubSheaf(SheafOnGraph(ring, V, stalks, emods, maps), incs)

    return _cached(inst, ("stub",), build)


@dataclass
class KolyvaginSystem:
    inst: SelmerInstance
    values: dict

    def module(self, n) -> PresentedModule:
        return selmer_stalk(self.inst, n).module

    def scale(self, c):
        q = self.inst.ring.q
        return KolyvaginSystem(self.inst, {n: v * int(c) % q for n, v in self.values.items()})

    def is_section(self) -> bool:
        return selmer_sheaf(self.inst).is_section(self.values)

    def edge_defects(self):
        """Edges where psi_n^e(kappa_n) != psi_nq^e(kappa_nq)."""
        sh = selmer_sheaf(self.inst)
        bad = []
        for e in sh.edges:
            u, w = e
            if not sh.edge_modules[e].equal(sh.psi(u, e)(self.values[u]), sh.psi(w, e)(self.values[w])):
                bad.append(e)
        return bad

    def is_stub(self) -> bool:
        inst = self.inst
        return all(self.module(n).valuation_of(v) >= min(inst.lam(n), inst.ring.k) or self.module(n).is_zero(v)
                   for n, v in self.values.items())

    def is_zero(self) -> bool:
        return all(self.module(n).is_zero(v) for n, v in self.values.items())

    def to_json(self):
        return {self.inst.vertex_name(n): [int(x) for x in self.module(n).normal_form(v).reshape(-1)]
                for n, v in sorted(self.values.items(), key=lambda t: (len(t[0]), t[0]))}


@dataclass
class KolyvaginModules:
    inst: SelmerInstance
    KS: PresentedModule
    KS_emb: ModuleMap
    stub: PresentedModule
    stub_emb: ModuleMap  # into the same direct sum of full stalks
    offsets: dict

    def system(self, row) -> KolyvaginSystem:
        row = np.asarray(row, dtype=np.int64).reshape(-1)
        out = {}
        for n, o in self.offsets.items():
            out[n] = row[o:o + selmer_stalk(self.inst, n).rank] % self.inst.ring.q
        return KolyvaginSystem(self.inst, out)

    def stub_generator(self) -> KolyvaginSystem:
        if not self.stub.is_cyclic() or not self.stub.exps:
            raise ValueError("stub module is not cyclic")
        return self.system(self.stub_emb.matrix[0])

    def total(self) -> PresentedModule:
        return direct_sum([selmer_stalk(self.inst, n).module for n in self.offsets])[0]

    def contains_stub_image(self) -> bool:
        T = self.total()
        return all(_in_span(T, self.KS_emb.matrix, g) for g in self.stub_emb.matrix)

    def in_stub(self, kappa: KolyvaginSystem) -> bool:
        T = self.total()
        row = np.concatenate([kappa.values[n] for n in self.offsets])
        return _in_span(T, self.stub_emb.matrix, row)

    def strict_containment(self) -> bool:
        return self.stub.length < self.KS.length


def kolyvagin_modules(inst: SelmerInstance) -> KolyvaginModules:
    def build():
        sh = selmer_sheaf(inst)
        st = stub_subsheaf(inst)
        G, emb = global_sections(sh)
        G2, emb2 = global_sections(st.sheaf)
        off, _ = sh._offsets()
        soff, _ = st.sheaf._offsets()
        ring = inst.ring
        total = sum(sh.stalks[n].ngens for n in sh.vertices)
        out = ring.zeros(G2.ngens, total)
        for n in sh.vertices:
            inc = st.inclusions[n]
            blk = emb2.matrix[:, soff[n]:soff[n] + inc.domain.ngens]
            out[:, off[n]:off[n] + sh.stalks[n].ngens] = blk @ inc.matrix % ring.q
        stub_emb = ModuleMap(G2, sh.total_module(), out, check=False)
        return KolyvaginModules(inst, G, emb, G2, stub_emb, off)

    return _cached(inst, ("KS",), build)


# -- the transform ---------------------------------------------------------------


def pi_map(inst: SelmerInstance, n, Psi=None) -> ModuleMap:
    """Pi_n: Y_n -> S(n), contracting by u_q loc^f for every q | n."""
    n = inst.vertex(n)

    def build(P):
        ring = inst.ring
        Hn, H = inst.H_relaxed(n), inst.H(n)
        Y, S = stark_datum(inst, n), selmer_stalk(inst, n)
        if not n:
            return ModuleMap(Y.module, S.module, ring.eye(Y.rank), check=False)
        units = np.array([inst.fs_units[q] for q in n], dtype=np.int64)
        hmat = Hn.gens[:, [fcol(q) for q in n]] * units % ring.q
        sq = CartesianSquare(H.module, Hn.module, H.inclusion_into(Hn), ring.zeros(0, len(n)), hmat, check=False)
        f = cartesian_map(sq, inst.r, P)
        return ModuleMap(Y.module, S.module, f.matrix, check=False)

    if Psi is not None:
        return build(Psi)
    return _cached(inst, ("pi", n), lambda: build(None))


def pi_transform(inst: SelmerInstance, eps: StarkSystem) -> KolyvaginSystem:
    """kappa_n = (-1)^nu(n) Pi_n(eps_n)."""
    q = inst.ring.q
    return KolyvaginSystem(inst, {n: (-1) ** len(n) * pi_map(inst, n)(v) % q for n, v in eps.values.items()})


def pi_psi_image_ok(inst: SelmerInstance, n, m) -> bool:
    """(Pi_m o Psi_{n,m})(Y_n) = m^lambda(m) S(m), expected when mu(n) = 0."""
    f = psi_map(inst, n, m).then(pi_map(inst, m))
    S = selmer_stalk(inst, m).module
    return same_submodule(S, f.matrix, scaled_gens(S, min(inst.lam(m), inst.ring.k)))


# -- profiles and recovery -------------------------------------------------------


@dataclass
class InvariantProfile:
    k: int
    phi: dict
    dphi: list  # indexed by nu = 0..max
    ord: int
    d: list  # d(i) for i = ord .. max - 1

    @property
    def dphi_inf(self):
        return self.dphi[-1]

    def to_json(self):
        enc = lambda x: "inf" if x == INF else int(x)
        return {"k": self.k, "dphi": [enc(x) for x in self.dphi], "ord": self.ord, "d": [int(x) for x in self.d]}


def profile_from_values(values: dict, modules, k: int) -> InvariantProfile:
    phi = {}
    for n, v in values.items():
        M = modules(n)
        phi[n] = INF if M.is_zero(v) else M.valuation_of(v)
    top = max(len(n) for n in values)
    dphi = [min([phi[n] for n in values if len(n) == i], default=INF) for i in range(top + 1)]
    finite = [i for i, x in enumerate(dphi) if x != INF]
    if not finite:
        raise ValueError("ord is undefined for the zero system")
    o = finite[0]
    d = [dphi[i] - dphi[i + 1] for i in range(o, top)]
    return InvariantProfile(k, phi, dphi, o, d)


def invariant_profile(system) -> InvariantProfile:
    return profile_from_values(system.values, system.module, system.inst.ring.k)


def recover_structure(profile: InvariantProfile, k=None) -> dict:
    """Invariant factors sum R/m^d(i) predicted by the profile of a system."""
    k = profile.k if k is None else k
    factors = sorted([int(x) for x in profile.d if x], reverse=True)
    out = {"ord": profile.ord, "d": [int(x) for x in profile.d], "invariant_factors": factors,
           "dphi_inf": profile.dphi_inf if profile.dphi_inf != INF else "inf"}
    if profile.dphi[0] == INF:
        out["finite"] = False
        out["note"] = "length infinite at this level: the value at 1 vanishes"
    else:
        out["finite"] = True
        out["length_bound"] = int(profile.dphi[0])
    return out


def compare_recovery(inst: SelmerInstance, rec: dict) -> dict:
    actual = inst.dual_invariants(())
    res = {"actual": actual, "recovered": rec["invariant_factors"], "finite": rec["finite"]}
    if rec["finite"]:
        res["match"] = rec["invariant_factors"] == actual
    else:
        # only the tail beyond ord is visible; it must agree with the smaller factors
        res["match"] = None
        res["tail_consistent"] = rec["invariant_factors"] == actual[len(actual) - len(rec["invariant_factors"]):] \
            if rec["invariant_factors"] else True
    return res


def lower_bound_check(inst: SelmerInstance, kappa: KolyvaginSystem, primitive: bool) -> dict:
    """length(dual) <= max{i : kappa_1 in m^i S(1)} when kappa_1 != 0, equality iff primitive."""
    L = inst.dual_selmer_group(inst.pattern()).length
    k = inst.ring.k
    S1 = kappa.module(())
    v = kappa.values[()]
    if S1.is_zero(v):
        ok = (L >= k) if primitive else True
        return {"kappa1_zero": True, "ok": ok, "length": L}
    bound = S1.valuation_of(v)
    ok = L <= bound and ((L == bound) == primitive)
    return {"kappa1_zero": False, "ok": ok, "length": L, "bound": bound}


def dual_profiles(inst: SelmerInstance):
    """(d lambda, d mu): minima of lambda and mu over vertices with a given number of primes."""
    V = inst.vertices()
    top = len(inst.active)
    dl = [min(inst.lam(n) for n in V if len(n) == i) for i in range(top + 1)]
    dm = [min(inst.mu(n) for n in V if len(n) == i) for i in range(top + 1)]
    return dl, dm


def tail_sums(e, top):
    e = sorted([x for x in e if x], reverse=True)
    return [sum(e[t:]) for t in range(top + 1)]


# -- paths ---------------------------------------------------------------------


def core_path(inst: SelmerInstance, n, n2):
    """Core vertices joined by edges where both Selmer sheaf maps are isomorphisms.

    Returns the vertex list, or a dict describing why none exists.
    """
    n, n2 = inst.vertex(n), inst.vertex(n2)
    for v in (n, n2):
        if not inst.is_core_vertex(v):
            raise ValueError(f"{inst.vertex_name(v)} is not a core vertex")
    if n == n2:
        return [n]
    sh = selmer_sheaf(inst)
    core = set(inst.core_vertices())
    prev = {n: None}
    dq = deque([n])
    while dq:
        u = dq.popleft()
        for w in sh.nbrs[u]:
            if w in prev or w not in core:
                continue
            e = edge_key(u, w)
            if sh.psi(u, e).is_iso() and sh.psi(w, e).is_iso():
                prev[w] = u
                dq.append(w)
    if n2 not in prev:
        return {"found": False, "reason": "richness insufficient: no iso path between core vertices",
                "components": len(_components(inst, core))}
    path = [n2]
    while prev[path[-1]] is not None:
        path.append(prev[path[-1]])
    return path[::-1]


def _components(inst, core):
    from .selmer_instance import core_components
    return core_components(inst)


def edge_criteria_agree(inst: SelmerInstance, n, q) -> bool:
    """For a core vertex n: loc_q nonzero on H_F(n)[m] iff both sheaf maps on (n, nq) are isos."""
    nq = tuple(sorted(n + (q,)))
    sh = selmer_sheaf(inst)
    e = edge_key(n, nq)
    both = inst.is_core_vertex(nq) and sh.psi(n, e).is_iso() and sh.psi(nq, e).is_iso()
    return iso_edge(inst, n, q) == both


def descent_chain(inst: SelmerInstance, n):
    """n = n_0, n_0 q_0, ... until a core vertex, each step lowering the m-torsion rank of the dual."""
    chain = [tuple(n)]
    while not inst.is_core_vertex(chain[-1]):
        q = descent_prime(inst, chain[-1])
        if q is None:
            return None
        chain.append(tuple(sorted(chain[-1] + (q,))))
    return chain


def hub_certificate(inst: SelmerInstance, n) -> dict:
    """Surjective stub-sheaf paths from the core vertex n to every vertex."""
    n = inst.vertex(n)
    if not inst.is_core_vertex(n):
        raise ValueError(f"{inst.vertex_name(n)} is not a core vertex")
    st = stub_subsheaf(inst).sheaf
    try:
        tr = st.transports(n)
    except NotLocallyCyclic:
        return {"ok": False, "reason": "stub sheaf is not locally cyclic"}
    paths = {inst.vertex_name(w): [inst.vertex_name(x) for x in tr[w][1]] for w in st.vertices if w in tr}
    missing = [inst.vertex_name(w) for w in st.vertices if w not in tr]
    descents = {}
    descent_ok = True
    for w in st.vertices:
        if inst.is_core_vertex(w):
            continue
        ch = descent_chain(inst, w)
        if ch is None:
            descent_ok = False
            descents[inst.vertex_name(w)] = None
            continue
        # each step w -> wq must be an isomorphism on the stub side at w
        steps_ok = all(st.is_iso_edge_map(a, edge_key(a, b)) for a, b in zip(ch, ch[1:]))
        length_ok = len(ch) - 1 == inst.lam_bar(w)
        descent_ok &= steps_ok and length_ok
        descents[inst.vertex_name(w)] = [inst.vertex_name(x) for x in ch]
    return {"ok": not missing and descent_ok, "hub": n, "paths": paths, "missing": missing,
            "descent": descents, "descent_ok": descent_ok}


# -- the witness for KS strictly larger than KS' -------------------------------------


def torsion_wedge_vertex(inst: SelmerInstance):
    """A vertex where H_F(n) = R^r + (R/m)^r, if any."""
    k, r = inst.ring.k, inst.r
    for n in inst.vertices():
        if inst.H(n).invariant_factors == [k] * r + [1] * r:
            return n
    return None


def torsion_wedge_section(inst: SelmerInstance, n) -> KolyvaginSystem:
    """kappa_n = d_1 ^ ... ^ d_r on the torsion generators, zero at every other vertex."""
    S = selmer_stalk(inst, n)
    exps = S.base.exps
    tors = tuple(i for i, a in enumerate(exps) if a == 1)
    vals = {}
    for v in inst.vertices():
        vals[v] = np.zeros(selmer_stalk(inst, v).rank, dtype=np.int64)
    x = np.zeros(S.rank, dtype=np.int64)
    x[S.index[tors]] = 1
    vals[n] = x
    return KolyvaginSystem(inst, vals)


# -- towers ------------------------------------------------------------------------


def reduction_map(big: SelmerInstance, small: SelmerInstance, H_big, H_small) -> ModuleMap:
    """The map H(T/p^K) -> H(T/p^j) induced by reducing coordinates."""
    q = small.ring.q
    mat = H_small.coords(H_big.gens % q)
    return ModuleMap(H_big.module, H_small.module, mat, check=False)


def reduce_stark(big: SelmerInstance, small: SelmerInstance, eps: StarkSystem, vertices=None) -> StarkSystem:
    out = {}
    for n in (vertices if vertices is not None else small.vertices()):
        f = reduction_map(big, small, big.H_relaxed(n), small.H_relaxed(n))
        deg = small.r + len(n)
        out[n] = np.asarray(eps.values[n]) @ compound(big.ring, f.matrix, deg) % small.ring.q
    return StarkSystem(small, out)


def _solve_system(SS: StarkModule, target: dict):
    """x in SS with x_n = target_n for every n in target (None if impossible)."""
    ring = SS.inst.ring
    cols, rels, rhs = [], [], []
    for n, t in target.items():
        o = SS.offsets[n]
        Y = stark_datum(SS.inst, n).module
        cols.append(SS.embedding.matrix[:, o:o + Y.ngens])
        rhs.append(np.asarray(t, dtype=np.int64).reshape(-1))
        rels.append(Y.relations)
    A = np.hstack(cols)
    nrel = sum(x.shape[0] for x in rels)
    R = ring.zeros(nrel, A.shape[1])
    r0 = c0 = 0
    for x in rels:
        R[r0:r0 + x.shape[0], c0:c0 + x.shape[1]] = x
        r0 += x.shape[0]
        c0 += x.shape[1]
    sol = solve(ring, np.vstack([A, R]), np.concatenate(rhs))
    if sol is None:
        return None
    return sol[0, :SS.module.ngens]


def _generates_free_rank_one(SS: StarkModule, eps: StarkSystem) -> bool:
    """eps lies in SS and generates it, SS being free of rank one."""
    if not SS.module.is_free(1):
        return False
    x = _solve_system(SS, eps.values)
    if x is None:
        return False
    return SS.inst.ring.val(int(SS.module.coords(x).reshape(-1)[0])) == 0


def tower_check(inst: SelmerInstance) -> dict:
    """Finite-stage checks for an instance over Z/p^K with prime levels."""
    K = inst.ring.k
    top_active = [i for i in inst.active if inst.levels[i] >= K]
    rep = {"K": K, "levels": list(inst.levels), "stages": [], "ok": True, "failures": []}

    def fail(j, what):
        rep["ok"] = False
        rep["failures"].append({"level": j, "map": what})

    topK = reduce_instance(inst, K, active=top_active)
    SS_top = stark_module(topK)
    if not SS_top.module.is_free(1):
        fail(K, "SS at the top level is not free of rank one")
        return rep
    g_top = SS_top.generator()
    gens = {}
    prev = None
    for j in range(K, 0, -1):
        st = {"level": j}
        onK = reduce_instance(inst, j, active=top_active)
        onj = reduce_instance(inst, j)
        red = reduce_stark(topK, onK, g_top)
        SSK = stark_module(onK)
        st["surjective"] = bool(red.is_compatible() and _generates_free_rank_one(SSK, red))
        if not st["surjective"]:
            fail(j, "reduction from the top level is not surjective")
        SSj = stark_module(onj)
        gj = SSj.generator()
        restr = StarkSystem(onK, {n: gj.values[n] for n in onK.vertices()})
        st["restriction_iso"] = bool(SSj.module.is_free(1) and _generates_free_rank_one(SSK, restr))
        if not st["restriction_iso"]:
            fail(j, "restriction to the top prime set is not an isomorphism")
        # compatible choice: level j generator restricting to the reduction of level j+1
        if prev is None:
            x = _solve_system(SSj, {n: v for n, v in red.values.items()})
        else:
            pj, pinst, pSS = prev
            upper = [n for n in onj.vertices() if all(inst.levels[q] >= j + 1 for q in n)]
            down = reduce_stark(pinst, onj, pj, upper)
            x = _solve_system(SSj, down.values)
        if x is None:
            fail(j, "no compatible generator at this level")
            st["compatible"] = False
            rep["stages"].append(st)
            continue
        gj = SSj.system(x)
        st["compatible"] = True
        st["primitive"] = bool(_generates_free_rank_one(SSj, gj))
        if not st["primitive"]:
            fail(j, "compatible family member is not a generator")
        prof = invariant_profile(gj)
        dp = [x for x in prof.dphi if x != INF]
        st["dphi"] = prof.to_json()["dphi"]
        st["dphi_nonincreasing"] = all(a >= b for a, b in zip(dp, dp[1:]))
        st["d_nonincreasing"] = all(a >= b for a, b in zip(prof.d, prof.d[1:])) and all(x >= 0 for x in prof.d)
        st["primitive_iff_dphi_inf_zero"] = (prof.dphi_inf == 0) == st["primitive"]
        for key in ("dphi_nonincreasing", "d_nonincreasing", "primitive_iff_dphi_inf_zero"):
            if not st[key]:
                fail(j, key)
        gens[j] = gj
        prev = (gj, onj, SSj)
        rep["stages"].append(st)
    # limit reconstruction: eps_n from the level min(levels of n), eps_1 from the top
    if len(gens) == K:
        rec = {}
        for n in inst.vertices():
            j = min([inst.levels[q] for q in n], default=K)
            rec[n] = (j, gens[j].values[n])
        ok = True
        for n, (j, v) in rec.items():
            for q in n:
                m = tuple(x for x in n if x != q)
                jm, vm = rec[m]
                small = reduce_instance(inst, j)
                bigm = reduce_instance(inst, jm)
                f = reduction_map(bigm, small, bigm.H_relaxed(m), small.H_relaxed(m))
                vm_red = np.asarray(vm) @ compound(bigm.ring, f.matrix, small.r + len(m)) % small.ring.q
                lhs = psi_map(small, n, m)(v)
                if not stark_datum(small, m).module.equal(lhs, vm_red):
                    ok = False
        rep["limit_compatible"] = ok
        rep["top_value_nonzero_mod_m"] = bool(gens[1].values[()].any()) or any(
            not stark_datum(reduce_instance(inst, 1), n).module.is_zero(v) for n, v in gens[1].values.items())
        if not ok:
            fail(0, "limit reconstruction is not compatible")
        if not rep["top_value_nonzero_mod_m"]:
            fail(1, "generator vanishes modulo m")
    return rep


def kolyvagin_tower_check(inst: SelmerInstance) -> dict:
    """KS' generators at each level j (prime set P_j) stay nonzero modulo m after reduction."""
    K = inst.ring.k
    out = {"ok": True, "levels": {}}
    for j in range(1, K + 1):
        red = reduce_instance(inst, j)
        KM = kolyvagin_modules(red)
        free = KM.stub.is_free(1)
        out["levels"][j] = free
        out["ok"] &= free
    return out
