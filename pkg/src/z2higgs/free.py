"""Double expansion in the free phase: cycle and closed-surface polymers.

Cycle polymers (family "L1") are connected edge sets with every vertex of
even degree. Surface polymers ("L2") are closed 2-forms whose support is
connected through shared cubes. A cycle and a surface interact when they
link, i.e. when the surface is odd on a spanning surface of the cycle; the
Ursell weight of such a pair is 2 instead of 1.

All weights use the shifted convention exp(beta * sum_p (rho(w(p)) - 1)),
which is exp(-4 beta |w|) once both orientations are counted.
"""

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import mpmath
import numpy as np

from . import cluster as cx
from .exact import TinyLattice, _cycle_surfaces, closed_two_forms, check_z
from .lattice import Chain, PathChain, spanning_surface

DPS = 50
FAMILIES = ("L1", "L2")


class Divergent(ArithmeticError):
    pass


# ---- mirrored paths ---------------------------------------------------------

def mirrored_path(gamma):
    """Reflect x2 -> -x2 and reverse orientation."""
    if gamma.k != 1:
        raise ValueError("mirrored_path needs a 1-chain")
    for (base, _), c in gamma.boundary().coeffs.items():
        if c and (base[1] != 0 or any(base[2:])):
            raise ValueError("endpoints must lie on the x1-axis")
    out = PathChain()
    for (base, dirs), c in gamma.coeffs.items():
        b = list(base)
        if dirs == (1,):
            # the reflected edge runs the other way, which cancels the minus sign
            b[1] = -b[1] - 1
            out._add((tuple(b), dirs), c)
        else:
            b[1] = -b[1]
            out._add((tuple(b), dirs), -c)
    return out


# ---- enumeration ------------------------------------------------------------

def _vertex_edge_masks(geom):
    cache = cx._graph_cache(geom)
    if "vedges" not in cache:
        ev = geom.edge_vertices
        vm = [0] * geom.n_cells(0)
        for e, (a, b) in enumerate(ev):
            vm[a] |= 1 << e
            vm[b] |= 1 << e
        cache["vedges"] = vm
    return cache["vedges"]


def _cube_masks(geom):
    """Per plaquette, the bitmask of cubes containing it."""
    cache = cx._graph_cache(geom)
    if "pcubes" not in cache:
        if geom.kmax >= 3 and geom.n_cells(3):
            cof = geom.cofaces(2)
            cache["pcubes"] = [cx.mask_of(r[r >= 0]) for r in cof]
        else:
            cache["pcubes"] = [0] * geom.n_cells(2)
    return cache["pcubes"]


def _parity_masks(kind, geom):
    if kind == "L1":
        ev = geom.edge_vertices
        return [(1 << int(a)) | (1 << int(b)) for a, b in ev]
    return _cube_masks(geom)


def _closed_sets(kind, geom, anchor, max_size, forbid=0, target=0):
    """Connected sets through anchor whose parity mask equals target, pruned.

    For L1 the parity mask is the set of odd vertices; for L2 the set of
    cubes meeting the plaquettes an odd number of times. Each added cell
    fixes at most `per` parity defects, which bounds the remaining work.
    """
    adj = cx.adjacency_masks("G0" if kind == "L1" else "G3", geom)
    pm = _parity_masks(kind, geom)
    per = 2 if kind == "L1" else max(2 * (geom.m - 2), 1)
    start = 1 << anchor
    out = []
    stack = [(start, adj[anchor] & ~forbid & ~start, forbid | start, 1, pm[anchor])]
    while stack:
        S, cand, excl, size, odd = stack.pop()
        if odd == target:
            out.append(S)
        if size == max_size:
            continue
        while cand:
            low = cand & -cand
            cand ^= low
            v = low.bit_length() - 1
            nodd = odd ^ pm[v]
            if bin(nodd ^ target).count("1") <= per * (max_size - size - 1):
                stack.append((S | low, (cand | adj[v]) & ~excl & ~low, excl | low, size + 1, nodd))
            excl |= low
    return out


@dataclass(frozen=True)
class FreePolymer:
    family: str
    cells: tuple

    @property
    def size(self):
        return len(self.cells)

    @property
    def mask(self):
        return cx.mask_of(self.cells)


def enumerate_free_polymers(family, anchor, max_size, geom):
    """Cycle polymers through a vertex (L1) or surface polymers through a plaquette (L2)."""
    family = family.upper()
    if max_size > cx.MAX_POLYMER_SIZE + 4:
        raise cx.BudgetExceeded(f"max_size {max_size} too large")
    if family == "L1":
        inc = sorted(cx.cells_of(_vertex_edge_masks(geom)[anchor]))
        masks = []
        below = 0
        for e in inc:
            masks += _closed_sets("L1", geom, e, max_size, forbid=below)
            below |= 1 << e
    elif family == "L2":
        masks = _closed_sets("L2", geom, anchor, max_size)
    else:
        raise ValueError(f"unknown family {family!r}")
    out = [FreePolymer(family, tuple(cx.cells_of(s))) for s in masks]
    out.sort(key=lambda p: (p.size, p.cells))
    return out


def all_free_polymers(family, max_size, geom):
    """Every polymer of the family in the box, each once (smallest cell as anchor)."""
    family = family.upper()
    n = geom.n_cells(1 if family == "L1" else 2)
    out = []
    for c in range(n):
        below = (1 << c) - 1
        for s in _closed_sets(family, geom, c, max_size, forbid=below):
            out.append(FreePolymer(family, tuple(cx.cells_of(s))))
    out.sort(key=lambda p: (p.size, p.cells))
    return out


def completions(gamma, L_max, geom):
    """L_gamma: connected edge sets g0 with gamma + g0 closed, |g0| <= L_max, as masks."""
    ends = [geom.index(base, ()) for (base, _), c in gamma.boundary().mod2().coeffs.items()]
    if len(ends) != 2:
        raise ValueError("need an open path with two endpoints")
    u, v = ends
    target = (1 << u) | (1 << v)
    vm = _vertex_edge_masks(geom)
    out = []
    below = 0
    for e in sorted(cx.cells_of(vm[u])):
        out += _closed_sets("L1", geom, e, L_max, forbid=below, target=target)
        below |= 1 << e
    return out


# ---- linking and interaction ------------------------------------------------

def _edge_chain(cells, geom):
    return Chain(1, {geom.cell(1, int(e)): 1 for e in cells})


def surface_mask(cells, geom):
    """Plaquette mask of a spanning surface of a closed edge set."""
    if not len(cells):
        return 0
    q = spanning_surface(_edge_chain(cells, geom), geom)
    return cx.mask_of(geom.index(*key) for key in q.mod2().coeffs)


def linking_parity(omega_mask, q_mask):
    """1 if rho(omega(q)) = -1."""
    return bin(omega_mask & q_mask).count("1") & 1


class MixedCluster:
    """Multiset of free polymers with the linked-pair weight 2 built in."""

    def __init__(self, polymers, geom, surfaces=None):
        self.polymers = sorted(polymers, key=lambda p: (p.family, p.size, p.cells))
        self.geom = geom
        self.counts = Counter(self.polymers)
        surfaces = surfaces if surfaces is not None else {}
        self._q = {}
        for p in self.polymers:
            if p.family == "L1" and p not in self._q:
                self._q[p] = surfaces.get(p) if p in surfaces else surface_mask(p.cells, geom)
        self.rel = interaction_matrix(self.polymers, geom, self._q)
        if not cx.is_cluster(self.rel):
            raise ValueError("multiset is decomposable")

    @property
    def n(self):
        return len(self.polymers)

    @property
    def norm(self):
        return sum(p.size for p in self.polymers)

    @property
    def s1(self):
        return [p for p in self.polymers if p.family == "L1"]

    @property
    def s2(self):
        return [p for p in self.polymers if p.family == "L2"]

    def multiplicity_factorial(self):
        return math.prod(math.factorial(c) for c in self.counts.values())


def _interacts(a, b, geom, q):
    if a.family == b.family:
        kind = "G0" if a.family == "L1" else "G3"
        adj = cx.adjacency_masks(kind, geom)
        bm = b.mask
        if a.mask & bm:
            return 1
        return 1 if any(adj[c] & bm for c in a.cells) else 0
    cyc, surf = (a, b) if a.family == "L1" else (b, a)
    return 2 * linking_parity(surf.mask, q[cyc])


def interaction_matrix(polymers, geom, q):
    n = len(polymers)
    rel = [[0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            rel[i][j] = rel[j][i] = _interacts(polymers[i], polymers[j], geom, q)
    return rel


def _touches(cells, gamma0_vertices, geom):
    ev = geom.edge_vertices
    return any(int(x) in gamma0_vertices for c in cells for x in ev[c])


def _vertex_set(chain, geom):
    if chain is None or not chain.coeffs:
        return set()
    return {geom.index(v, ()) for v in chain.vertices()}


def psi_free(S, p, gamma=None, gamma0=None):
    """U / prod n! times the product of single-polymer activities."""
    geom = S.geom
    qg = surface_mask(np.flatnonzero(gamma.to_vector(geom, mod2=True)), geom) \
        if gamma is not None and gamma.coeffs else 0
    v0 = _vertex_set(gamma0, geom)
    t = math.tanh(2 * p.kappa)
    act = 1.0
    for poly in S.polymers:
        if poly.family == "L2":
            act *= (-1 if linking_parity(poly.mask, qg) else 1) * math.exp(-4 * p.beta * poly.size)
        else:
            if _touches(poly.cells, v0, geom):
                return 0.0
            act *= t ** poly.size
    return cx.ursell_from_relation(S.rel) / S.multiplicity_factorial() * act


# ---- truncated log Z-check --------------------------------------------------

@dataclass
class FreeSeries:
    value: object
    n_clusters: int
    pool_size: int


class FreePool:
    def __init__(self, geom, size_max):
        self.geom = geom
        self.polymers = all_free_polymers("L1", size_max, geom) + all_free_polymers("L2", size_max, geom)
        self.q = {p: surface_mask(p.cells, geom) for p in self.polymers if p.family == "L1"}
        n = len(self.polymers)
        self.nbrs = [[] for _ in range(n)]
        self.rel = np.zeros((n, n), dtype=np.int8)
        for i in range(n):
            for j in range(i, n):
                w = 1 if i == j else _interacts(self.polymers[i], self.polymers[j], geom, self.q)
                if w:
                    self.rel[i, j] = self.rel[j, i] = w
                    self.nbrs[i].append(j)
                    if i != j:
                        self.nbrs[j].append(i)
        self.sizes = [p.size for p in self.polymers]

    def clusters(self, n_max, size_max):
        level = {(i,) for i in range(len(self.polymers)) if self.sizes[i] <= size_max}
        out = list(level)
        for _ in range(1, n_max):
            nxt = set()
            for cl in level:
                room = size_max - sum(self.sizes[i] for i in cl)
                cand = set()
                for i in cl:
                    cand.update(self.nbrs[i])
                for j in cand:
                    if self.sizes[j] <= room:
                        nxt.add(tuple(sorted(cl + (j,))))
            out.extend(nxt)
            level = nxt
        return out


def free_series(p, gamma, gamma0, n_max, size_max, geom, pool=None, dps=DPS):
    """Truncated sum of Psi^{gamma, gamma0} over clusters; approximates log Z-check[gamma, gamma0]."""
    pool = pool or FreePool(geom, size_max)
    qg = surface_mask(np.flatnonzero(gamma.to_vector(geom, mod2=True)), geom) \
        if gamma is not None and gamma.coeffs else 0
    v0 = _vertex_set(gamma0, geom)
    ok = [not (poly.family == "L1" and _touches(poly.cells, v0, geom)) for poly in pool.polymers]
    sign = [(-1 if poly.family == "L2" and linking_parity(poly.mask, qg) else 1) for poly in pool.polymers]
    cls = pool.clusters(n_max, size_max)
    cache = {}
    with mpmath.workdps(dps):
        t = mpmath.tanh(2 * mpmath.mpf(p.kappa))
        eb = mpmath.exp(-4 * mpmath.mpf(p.beta))
        tot = mpmath.mpf(0)
        for cl in cls:
            if not all(ok[i] for i in cl):
                continue
            n = len(cl)
            rel = tuple(tuple(int(pool.rel[cl[i], cl[j]]) if i != j else 0 for j in range(n)) for i in range(n))
            if rel not in cache:
                cache[rel] = cx.ursell_from_relation(rel)
            u = cache[rel]
            if not u:
                continue
            a1 = sum(pool.sizes[i] for i in cl if pool.polymers[i].family == "L1")
            a2 = sum(pool.sizes[i] for i in cl if pool.polymers[i].family == "L2")
            s = math.prod(sign[i] for i in cl)
            f = math.prod(math.factorial(c) for c in Counter(cl).values())
            tot += mpmath.mpf(s * u) / f * t ** a1 * eb ** a2
        return FreeSeries(tot, len(cls), len(pool.polymers))


def exact_check_z_pair(lat, p, gamma, gamma0, dps=DPS):
    """Z-check[gamma, gamma0] by enumerating closed 2-forms and cycles of a tiny lattice."""
    geom = lat.geom if isinstance(lat, TinyLattice) else lat
    forms, _ = closed_two_forms(geom)
    cycles, surfaces = _cycle_surfaces(geom)
    E = geom.n_cells(1)
    g = gamma.to_vector(geom, mod2=True) if gamma is not None and gamma.coeffs else np.zeros(E, np.uint8)
    if g.any():
        qg = np.zeros(geom.n_cells(2), np.int64)
        qg[cx.cells_of(surface_mask(np.flatnonzero(g), geom))] = 1
    else:
        qg = np.zeros(geom.n_cells(2), np.int64)
    v0 = sorted(_vertex_set(gamma0, geom))
    if v0:
        inc = geom.incidence(1).toarray()[v0].astype(np.int64)  # (|v0|, E)
        keep = ((cycles.astype(np.int64) @ inc.T) == 0).all(1)
        cycles, surfaces = cycles[keep], surfaces[keep]
    F = forms.astype(np.int64)
    link = ((F @ surfaces.T.astype(np.int64)) + (F @ qg)[:, None]) & 1
    sign = 1 - 2 * link
    table = np.zeros((geom.n_cells(2) + 1, E + 1), dtype=np.int64)
    a = F.sum(1)
    L = cycles.sum(1)
    np.add.at(table, (np.repeat(a, len(L)), np.tile(L, len(a))), sign.ravel())
    with mpmath.workdps(dps):
        t = mpmath.tanh(2 * mpmath.mpf(p.kappa))
        eb = mpmath.exp(-4 * mpmath.mpf(p.beta))
        tot = mpmath.mpf(0)
        for i, j in np.argwhere(table != 0):
            tot += int(table[i, j]) * eb ** int(i) * t ** int(j)
        return tot


# ---- open lines -------------------------------------------------------------

@dataclass
class Decomposition:
    rows: list  # (gamma0 Chain, length, weight)
    tail: float
    L_max: int

    def __len__(self):
        return len(self.rows)


def completion_tail(L_max, kappa, m):
    """sum_{j > L_max} (2m tanh 2 kappa)^j; inf when the ratio is >= 1."""
    r = 2 * m * math.tanh(2 * kappa)
    if r >= 1:
        return math.inf
    return r ** (L_max + 1) / (1 - r)


def decompose_open_line(gamma, L_max, geom, kappa=0.0):
    masks = completions(gamma, L_max, geom)
    t = math.tanh(2 * kappa)
    rows = []
    for s in sorted(masks, key=lambda s: (bin(s).count("1"), s)):
        cells = cx.cells_of(s)
        rows.append((_edge_chain(cells, geom), len(cells), t ** len(cells)))
    return Decomposition(rows, completion_tail(L_max, kappa, geom.m), L_max)


# ---- bounds -----------------------------------------------------------------

def _series(term, start, tol=1e-17, cap=100000):
    tot = 0.0
    for j in range(start, start + cap):
        x = term(j)
        tot += x
        if x <= tol * max(tot, 1e-300) and j > start + 3:
            return tot
    raise Divergent("series did not settle")


def path_path(a, kappa, m=3):
    """sum_{j>=2} 2j (2m)^(2j) tanh(2 kappa)^(2aj)."""
    x = (2 * m) ** 2 * math.tanh(2 * kappa) ** (2 * a)
    if x >= 1:
        raise Divergent(f"path-path ratio {x:.4g} >= 1")
    return 2 * (x / (1 - x) ** 2 - x)


def spin_spin(a, beta, m=3):
    """sum_{j>=2(m-1)} M3^(2j+1) exp(-4 beta a j)."""
    M3 = cx.degree_bounds(m)["G3"]
    y = M3 ** 2 * math.exp(-4 * beta * a)
    if y >= 1:
        raise Divergent(f"spin-spin ratio {y:.4g} >= 1")
    return M3 * y ** (2 * (m - 1)) / (1 - y)


def _d0_default(m, d0, exponent):
    return (cx.compute_constants(m).D0 if d0 is None else d0), (m - 1 if exponent is None else exponent)


def path_spin(a, beta, m=3, d0=None, exponent=None):
    """sum_j D0 j^p sum_{k >= max(4j, 2(m-1))} M3^(2k-1) exp(-4 beta a k)."""
    d0, ex = _d0_default(m, d0, exponent)
    M3 = cx.degree_bounds(m)["G3"]
    y = M3 ** 2 * math.exp(-4 * beta * a)
    if y >= 1:
        raise Divergent(f"path-spin ratio {y:.4g} >= 1")
    return _series(lambda j: d0 * j ** ex * y ** max(4 * j, 2 * (m - 1)) / (M3 * (1 - y)), 1)


def spin_path(a, kappa, m=3, d0=None, exponent=None):
    """sum_j D0 j^p sum_{k >= 4j} (2m)^k tanh(2 kappa)^(ak)."""
    d0, ex = _d0_default(m, d0, exponent)
    z = 2 * m * math.tanh(2 * kappa) ** a
    if z >= 1:
        raise Divergent(f"spin-path ratio {z:.4g} >= 1")
    if z == 0:
        return 0.0
    return _series(lambda j: d0 * j ** ex * z ** (4 * j) / (1 - z), 1)


def gamma0_term(length, alpha, kappa, m=3):
    return (length + 1) * path_path(1 - alpha, kappa, m)


def gamma0_term2(length, alpha, beta, m=3, d0=None, exponent=None):
    return length * path_spin(1 - alpha, beta, m, d0, exponent)


def gamma0_term4(length, alpha, beta, kappa, eps, m=3, d0=None, exponent=None):
    """Bound for clusters whose surfaces meet both gamma1 + g and gamma2 + g-hat."""
    d0, ex = _d0_default(m, d0, exponent)
    M3 = cx.degree_bounds(m)["G3"]
    y = M3 ** 2 * math.exp(-4 * (1 - eps) * beta)
    if y >= 1:
        raise Divergent(f"ratio {y:.4g} >= 1")
    k_sum = y ** (2 * (m - 1)) / (M3 * (1 - y))
    r = max(math.exp(-4 * beta), math.tanh(2 * kappa)) ** eps
    if r >= 1:
        raise Divergent("max(exp(-4 beta), tanh 2 kappa)^eps >= 1")
    j_sum = _series(lambda j: j ** ex * r ** max(4 * j - 2 * (m - 1), 0), 1)
    return 2 * d0 * length * math.exp(-8 * beta * eps * (m - 1)) * k_sum * j_sum


def kp_cases(alpha, beta, kappa, m=3, d0=None, exponent=None):
    """The four per-unit-size case sums at a = 1 - alpha (inf if divergent)."""
    a = 1 - alpha

    def safe(f, *args):
        try:
            return float(f(*args))
        except Divergent:
            return math.inf
    return {"path_path": safe(path_path, a, kappa, m),
            "spin_spin": safe(spin_spin, a, beta, m),
            "path_spin": 2 * safe(path_spin, a, beta, m, d0, exponent),
            "spin_path": 2 * safe(spin_path, a, kappa, m, d0, exponent)}


def kp_feasible(alpha, beta, kappa, m=3, d0=None, exponent=None):
    return all(v <= alpha for v in kp_cases(alpha, beta, kappa, m, d0, exponent).values())


def free_bound_eval(which, *args, **kw):
    table = {"pathpath": path_path, "spinspin": spin_spin, "pathspin": path_spin,
             "spinpath": spin_path, "gamma0term": gamma0_term, "gamma0term2": gamma0_term2,
             "gamma0term4": gamma0_term4, "kpfeasible": kp_feasible}
    try:
        f = table[which.lower().replace("_", "")]
    except KeyError:
        raise ValueError(f"unknown bound {which!r}") from None
    return f(*args, **kw)


# ---- report -----------------------------------------------------------------

@dataclass
class FreeReport:
    beta: float
    kappa: float
    R: int
    T: int
    alpha: float
    admissible: bool
    rows: list = field(default_factory=list)
    per_length: float = math.inf
    sqrt_rho_bound: float = math.inf
    completion_tail: float = math.inf
    exact: dict = None

    def to_dict(self):
        d = dict(self.__dict__)
        d["rows"] = [dict(r) for r in self.rows]
        return d


def per_length_bound(alpha, beta, kappa, eps, m=3, d0=None, exponent=None, min_length=1):
    """Upper bound on log rho(gamma1, gamma2, g) / |g| from the A0, A1, A2 estimates."""
    a0 = path_path(1 - alpha, kappa, m) * (1 + 1 / min_length)
    a2 = path_spin(1 - alpha, beta, m, d0, exponent)
    a1 = 4 * gamma0_term4(1, alpha, beta, kappa, eps, m, d0, exponent)
    return a0, a1, a2


def mf_ratio_free_report(p, R, T, geom, L_max=None, alpha=0.5, eps=0.1, lat=None, d0=None,
                         exponent=None, dps=DPS):
    """A0/A1/A2 bounds per completion path and the resulting estimate for rho^(1/2).

    With `lat` (a TinyLattice on the same geometry) the exact branch also
    reports rho from exact Z-check values, both directly and through the
    decomposition over completions.
    """
    from .lattice import build_line_pair
    m = geom.m
    g1, g2 = build_line_pair(R, T, geom)
    ok = kp_feasible(alpha, p.beta, p.kappa, m, d0, exponent)
    rep = FreeReport(p.beta, p.kappa, R, T, alpha, ok)
    L_max = T + 2 if L_max is None else L_max
    dec = decompose_open_line(g1, L_max, geom, p.kappa)
    rep.completion_tail = dec.tail
    try:
        a0, a1, a2 = per_length_bound(alpha, p.beta, p.kappa, eps, m, d0, exponent, T)
        b = a0 + a1 + a2
    except Divergent:
        a0 = a1 = a2 = b = math.inf
    rep.per_length = b
    for chain, n, w in dec.rows:
        rep.rows.append({"length": n, "weight": w, "A0": a0 * n, "A1": a1 * n, "A2": a2 * n,
                         "log_rho_bound": b * n})
    r = 2 * m * math.tanh(2 * p.kappa) * math.exp(b / 2) if math.isfinite(b) else math.inf
    rep.sqrt_rho_bound = r ** T / (1 - r) if r < 1 else math.inf
    if lat is not None:
        rep.exact = _exact_branch(lat, p, g1, g2, dec, dps)
    return rep


def _exact_branch(lat, p, g1, g2, dec, dps):
    geom = lat.geom
    loop = g1 + g2
    with mpmath.workdps(dps):
        z1 = check_z(lat, p, g1, dps)
        z2 = check_z(lat, p, g2, dps)
        z12 = check_z(lat, p, loop, dps)
        z0 = check_z(lat, p, PathChain(), dps)
        direct = z1 * z2 / (z12 * z0)
        t = mpmath.tanh(2 * mpmath.mpf(p.kappa))
        acc = mpmath.mpf(0)
        for chain, n, _ in dec.rows:
            closed = (g1 + chain).mod2()
            acc += t ** n * exact_check_z_pair(lat, p, closed, chain, dps)
        via = acc * acc / (z12 * z0) if len(dec.rows) else mpmath.mpf(0)
        return {"rho": float(direct), "rho_decomposed": float(via),
                "check_z_gamma1": float(z1), "decomposed_check_z_gamma1": float(acc)}


def linking_table(omegas, cycles, geom, second_surface=None):
    """Linking parities of every (surface, cycle) pair; optional alternative surfaces."""
    qs = [surface_mask(c.cells, geom) for c in cycles]
    out = np.array([[linking_parity(w.mask, q) for q in qs] for w in omegas], dtype=np.int8)
    if second_surface is None:
        return out
    qs2 = [second_surface(c) for c in cycles]
    out2 = np.array([[linking_parity(w.mask, q) for q in qs2] for w in omegas], dtype=np.int8)
    return out, out2


def free_constants_table(alpha_grid, beta_grid, kappa_grid, m=3):
    """{alpha: [(beta, kappa) admissible]} on a grid."""
    res = defaultdict(list)
    for a in alpha_grid:
        for b in beta_grid:
            for k in kappa_grid:
                if kp_feasible(a, b, k, m):
                    res[a].append((b, k))
    return dict(res)
