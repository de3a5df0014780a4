"""Sheaves of R-modules on finite graphs.

A sheaf carries a module per vertex, a module per edge, and a map from each
vertex stalk to each incident edge module.  Edges are keyed by their sorted
endpoint pair, so at most one edge joins two vertices.
"""

from collections import deque

import numpy as np

from ._pool import pmap
from .ring_linalg import ModuleMap, PresentedModule, ResidueRing, as_rows, matrix_to_json


class NotLocallyCyclic(ValueError):
    pass


class NoSection(ValueError):
    pass


def edge_key(u, v):
    if u == v:
        raise ValueError("loops are not allowed")
    return (u, v) if u < v else (v, u)


class SheafOnGraph:
    def __init__(self, ring: ResidueRing, vertices, stalks, edge_modules, maps):
        self.ring = ring
        self.vertices = sorted(vertices)
        self.stalks = dict(stalks)
        self.edge_modules = {edge_key(*e): M for e, M in edge_modules.items()}
        self.edges = sorted(self.edge_modules)
        self.maps = {}
        for (v, e), f in maps.items():
            self.maps[(v, edge_key(*e))] = f
        self.nbrs = {v: [] for v in self.vertices}
        for e in self.edges:
            u, w = e
            if (u, e) not in self.maps or (w, e) not in self.maps:
                raise ValueError(f"missing vertex-to-edge map on edge {e}")
            self.nbrs[u].append(w)
            self.nbrs[w].append(u)
        self._cyc = None

    def psi(self, v, e) -> ModuleMap:
        return self.maps[(v, edge_key(*e))]

    # -- global sections --------------------------------------------------

    def _offsets(self):
        off, n = {}, 0
        for v in self.vertices:
            off[v] = n
            n += self.stalks[v].ngens
        return off, n

    def total_module(self) -> PresentedModule:
        """Direct sum of the stalks."""
        off, n = self._offsets()
        rows = []
        for v in self.vertices:
            for rel in self.stalks[v].relations:
                row = np.zeros(n, dtype=np.int64)
                row[off[v]:off[v] + len(rel)] = rel
                rows.append(row)
        return PresentedModule(self.ring, n, as_rows(rows, n))

    def difference_map(self) -> ModuleMap:
        off, n = self._offsets()
        eoff, en = {}, 0
        for e in self.edges:
            eoff[e] = en
            en += self.edge_modules[e].ngens
        rows = []
        for e in self.edges:
            for rel in self.edge_modules[e].relations:
                row = np.zeros(en, dtype=np.int64)
                row[eoff[e]:eoff[e] + len(rel)] = rel
                rows.append(row)
        target = PresentedModule(self.ring, en, as_rows(rows, en))
        D = np.zeros((n, en), dtype=np.int64)
        for e in self.edges:
            u, w = e
            a, b = eoff[e], eoff[e] + self.edge_modules[e].ngens
            D[off[u]:off[u] + self.stalks[u].ngens, a:b] += self.maps[(u, e)].matrix
            D[off[w]:off[w] + self.stalks[w].ngens, a:b] -= self.maps[(w, e)].matrix
        return ModuleMap(self.total_module(), target, D % self.ring.q, check=False)

    def split(self, x):
        """Break a vector of the total module into per-vertex pieces."""
        off, _ = self._offsets()
        x = np.asarray(x, dtype=np.int64).reshape(-1)
        return {v: x[off[v]:off[v] + self.stalks[v].ngens].copy() for v in self.vertices}

    def join(self, section) -> np.ndarray:
        return np.concatenate([np.asarray(section[v], dtype=np.int64).reshape(-1) for v in self.vertices]) \
            if self.vertices else np.zeros(0, dtype=np.int64)

    def is_section(self, section) -> bool:
        for e in self.edges:
            u, w = e
            a = self.maps[(u, e)](section[u])
            b = self.maps[(w, e)](section[w])
            if not self.edge_modules[e].equal(a, b):
                return False
        return True

    # -- cyclic structure -------------------------------------------------

    def _cyclic_data(self):
        """Per module: (exponent, generator); per map: scalar on generators."""
        if self._cyc is not None:
            return self._cyc
        ring = self.ring

        def gen(M):
            D, _, from_D = M.diagonalized()
            if len(D.exps) > 1:
                return None
            if not D.exps:
                return 0, np.zeros(M.ngens, dtype=np.int64)
            return D.exps[0], from_D.matrix[0]

        vgen = {v: gen(self.stalks[v]) for v in self.vertices}
        egen = {e: gen(self.edge_modules[e]) for e in self.edges}
        ok = all(x is not None for x in vgen.values()) and all(x is not None for x in egen.values())
        scal = {}
        if ok:
            for (v, e), f in self.maps.items():
                a, g = vgen[v]
                ae = egen[e][0]
                if ae == 0:
                    scal[(v, e)] = 0
                    continue
                c = int(self.edge_modules[e].coords(f(g)).reshape(-1)[0])
                scal[(v, e)] = c % ring.pk(ae) if ae < ring.k else c
                if ring.val(scal[(v, e)]) != 0:
                    ok = False
        self._cyc = (ok, vgen, egen, scal)
        return self._cyc

    def is_locally_cyclic(self) -> bool:
        return self._cyclic_data()[0]

    def _require_cyclic(self):
        if not self.is_locally_cyclic():
            raise NotLocallyCyclic("sheaf is not locally cyclic")
        return self._cyclic_data()[1:]

    def is_iso_edge_map(self, v, e) -> bool:
        vgen, egen, scal = self._require_cyclic()
        e = edge_key(*e)
        return vgen[v][0] == egen[e][0]

    def step_scalar(self, v, w):
        """Scalar t with transport S(v) -> S(w) sending gen_v to t gen_w, or None if not surjective."""
        vgen, egen, scal = self._require_cyclic()
        e = edge_key(v, w)
        aw = vgen[w][0]
        if egen[e][0] != aw:
            return None
        if aw == 0:
            return 0
        ring = self.ring
        mod = ring.pk(aw) if aw < ring.k else ring.q
        return scal[(v, e)] * pow(scal[(w, e)], -1, mod) % mod

    def transports(self, v):
        """BFS over surjective steps from v: dict w -> (scalar, path)."""
        vgen = self._require_cyclic()[0]
        ring = self.ring
        out = {v: (1 % (ring.pk(vgen[v][0]) if vgen[v][0] < ring.k else ring.q) if vgen[v][0] else 0, [v])}
        dq = deque([v])
        while dq:
            u = dq.popleft()
            t, path = out[u]
            for w in self.nbrs[u]:
                if w in out:
                    continue
                s = self.step_scalar(u, w)
                if s is None:
                    continue
                aw = vgen[w][0]
                mod = ring.pk(aw) if aw < ring.k else ring.q
                out[w] = (t * s % mod if aw else 0, path + [w])
                dq.append(w)
        return out

    def surjective_path(self, v, w):
        tr = self.transports(v)
        return tr[w][1] if w in tr else None

    def surjective_paths(self, v, w, limit=10000):
        """All simple surjective paths from v to w (small graphs)."""
        self._require_cyclic()
        out = []

        def dfs(path, seen):
            if len(out) >= limit:
                return
            u = path[-1]
            if u == w:
                out.append(list(path))
                return
            for x in self.nbrs[u]:
                if x not in seen and self.step_scalar(u, x) is not None:
                    seen.add(x)
                    path.append(x)
                    dfs(path, seen)
                    path.pop()
                    seen.discard(x)

        dfs([v], {v})
        return out

    def path_scalar(self, path):
        vgen = self._require_cyclic()[0]
        ring = self.ring
        t = 1
        for u, w in zip(path, path[1:]):
            s = self.step_scalar(u, w)
            if s is None:
                raise ValueError(f"step {u} -> {w} is not surjective")
            t *= s
        aw = vgen[path[-1]][0]
        return t % (ring.pk(aw) if aw < ring.k else ring.q) if aw else 0

    def is_hub(self, v) -> bool:
        return len(self.transports(v)) == len(self.vertices)

    def hubs(self):
        return [v for v in self.vertices if self.is_hub(v)]

    def _edge_mismatch(self, tr, e):
        """Compare psi_w^e T_w with psi_w'^e T_w' on one edge; return witness or None."""
        vgen, egen, scal = self._cyclic_data()[1:]
        u, w = e
        if u not in tr or w not in tr:
            return None
        ae = egen[e][0]
        if ae == 0:
            return None
        ring = self.ring
        mod = ring.pk(ae) if ae < ring.k else ring.q
        a = scal[(u, e)] * tr[u][0] % mod
        b = scal[(w, e)] * tr[w][0] % mod
        if a != b:
            return {"edge": e, "paths": [tr[u][1], tr[w][1]], "values": [int(a), int(b)]}
        return None

    def monodromy_witness(self):
        """None if monodromy is trivial, else a dict describing a failing pair of paths."""
        self._require_cyclic()

        def from_start(v):
            tr = self.transports(v)
            for e in self.edges:
                wit = self._edge_mismatch(tr, e)
                if wit:
                    wit["start"] = v
                    return wit
            return None

        for wit in pmap(from_start, self.vertices):
            if wit:
                return wit
        return None

    def has_trivial_monodromy(self) -> bool:
        return self.monodromy_witness() is None

    def monodromy_by_enumeration(self, max_vertices=12) -> bool:
        """Direct check over all pairs of simple surjective paths (small graphs only)."""
        if len(self.vertices) > max_vertices:
            raise ValueError("graph too large for path enumeration")
        vgen, egen, scal = self._require_cyclic()
        ring = self.ring
        for v in self.vertices:
            vals = {}
            for w in self.vertices:
                vals[w] = [self.path_scalar(P) for P in self.surjective_paths(v, w)]
            for e in self.edges:
                u, w = e
                ae = egen[e][0]
                if ae == 0:
                    continue
                mod = ring.pk(ae) if ae < ring.k else ring.q
                img = {scal[(u, e)] * t % mod for t in vals[u]} | {scal[(w, e)] * t % mod for t in vals[w]}
                if len(img) > 1:
                    return False
        return True

    # -- sections from a hub ------------------------------------------------

    def scalar_of(self, v, x) -> int:
        """c with x = c gen_v in the cyclic stalk S(v)."""
        vgen = self._require_cyclic()[0]
        a, _ = vgen[v]
        if a == 0:
            return 0
        c = int(self.stalks[v].coords(x).reshape(-1)[0])
        return c

    def section_from_stalk(self, v, x):
        vgen = self._require_cyclic()[0]
        if not self.is_hub(v):
            raise ValueError(f"{v} is not a hub")
        wit = self.monodromy_witness()
        if wit is not None:
            raise NoSection(f"nontrivial monodromy: {wit}")
        tr = self.transports(v)
        c = self.scalar_of(v, x)
        ring = self.ring
        sec = {}
        for w in self.vertices:
            a, g = vgen[w]
            sec[w] = (c * tr[w][0] * g) % ring.q if a else np.zeros(self.stalks[w].ngens, dtype=np.int64)
        assert self.is_section(sec)
        return sec

    def generator_index(self, v, x) -> int:
        """i with R x = m^i S(v) (i = exponent of the stalk when x = 0)."""
        vgen = self._require_cyclic()[0]
        a, _ = vgen[v]
        if a == 0:
            return 0
        c = self.scalar_of(v, x)
        return min(self.ring.val(c), a)

    def generator_index_propagates(self, section) -> bool:
        vgen = self._require_cyclic()[0]
        for u in self.vertices:
            au = vgen[u][0]
            if au == 0:
                continue
            i = self.generator_index(u, section[u])
            if i >= au:
                continue
            for w in self.vertices:
                if self.generator_index(w, section[w]) != min(i, vgen[w][0]):
                    return False
        return True

    def is_primitive(self, section) -> bool:
        return all(self.generator_index(v, section[v]) == 0 for v in self.vertices)

    def to_json(self):
        return {
            "vertices": [str(v) for v in self.vertices],
            "edges": [[str(u), str(w)] for u, w in self.edges],
            "stalks": {str(v): self.stalks[v].to_json() for v in self.vertices},
            "edge_modules": {f"{u}|{w}": self.edge_modules[(u, w)].to_json() for u, w in self.edges},
            "maps": {f"{v}@{e[0]}|{e[1]}": matrix_to_json(self.ring, f.matrix) for (v, e), f in sorted(self.maps.items(), key=str)},
        }


def global_sections(sh: SheafOnGraph):
    """(Gamma, embedding Gamma -> direct sum of stalks)."""
    return sh.difference_map().kernel()


def evaluation_map(sh: SheafOnGraph, v, gamma=None) -> ModuleMap:
    """f_v : Gamma -> S(v)."""
    G, emb = gamma or global_sections(sh)
    off, _ = sh._offsets()
    n = sh.stalks[v].ngens
    return ModuleMap(G, sh.stalks[v], emb.matrix[:, off[v]:off[v] + n], check=False)


def enumerate_sections(sh: SheafOnGraph):
    """All global sections by brute force over the stalks (tiny sheaves only)."""
    from itertools import product
    ring = sh.ring
    per = []
    for v in sh.vertices:
        D, _, from_D = sh.stalks[v].diagonalized()
        elems = []
        for c in product(*[range(ring.p ** a) for a in D.exps]):
            x = np.array(c, dtype=np.int64) @ from_D.matrix % ring.q if D.exps else np.zeros(sh.stalks[v].ngens, dtype=np.int64)
            elems.append(x)
        per.append(elems)
    out = []
    for combo in product(*per):
        sec = dict(zip(sh.vertices, combo))
        if sh.is_section(sec):
            out.append(sec)
    return out


def constant_sheaf(ring, vertices, edges, stalk=None):
    """Every stalk and edge module equal to one module; all maps the identity."""
    M = stalk or PresentedModule.free(ring, 1)
    eye = ring.eye(M.ngens)
    stalks = {v: M for v in vertices}
    emods = {edge_key(u, w): M for u, w in edges}
    maps = {}
    for u, w in edges:
        e = edge_key(u, w)
        maps[(u, e)] = ModuleMap(M, M, eye)
        maps[(w, e)] = ModuleMap(M, M, eye)
    return SheafOnGraph(ring, vertices, stalks, emods, maps)


def scalar_sheaf(ring, vertices, edge_scalars, exps=None):
    """Cyclic sheaf: stalks R/m^a_v, edge (u,w) gets R/m^min(a), maps multiply by given scalars.

    edge_scalars maps (u, w) -> (s_u, s_w).
    """
    exps = exps or {}
    stalks = {v: PresentedModule.diagonal(ring, [exps.get(v, ring.k)]) for v in vertices}
    emods, maps = {}, {}
    for (u, w), (su, sw) in edge_scalars.items():
        e = edge_key(u, w)
        ae = min(exps.get(u, ring.k), exps.get(w, ring.k))
        E = PresentedModule.diagonal(ring, [ae])
        emods[e] = E
        maps[(u, e)] = ModuleMap(stalks[u], E, [[su]])
        maps[(w, e)] = ModuleMap(stalks[w], E, [[sw]])
    return SheafOnGraph(ring, vertices, stalks, emods, maps)
