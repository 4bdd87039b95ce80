"""Polymer and cluster machinery for the Higgs and confinement expansions.

Sets of cells are Python-int bitmasks over the canonical cell index of a
geometry. A polymer is a connected cell set; a cluster is a multiset of
polymers whose interaction graph is connected. Cluster weights are

    Psi(S) = U(S) / prod_eta n_S(eta)!  *  prod_eta activity(eta)

where U is the signed connected-graph sum over the labelled list of
polymers. The 1/n! factor accounts for orderings of repeated polymers, so
that log Z equals the sum of Psi over clusters.
"""

import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import mpmath
import numpy as np
from scipy import optimize

from .lattice import LatticeGeometry, dist

DPS = 50
MAX_POLYMER_SIZE = 8
MAX_URSELL = 7

GRAPH_CELL_DIM = {"G0": 1, "G1": 1, "G2": 2, "G3": 2}


class BudgetExceeded(ValueError):
    pass


class DomainError(ValueError):
    pass


# ---- constants --------------------------------------------------------------

def degree_bounds(m):
    return {"G0": 4 * m - 1, "G1": 6 * (m - 1), "G2": 8 * m - 12, "G3": 10 * (m - 2)}


def kappa0_objective(alpha, m=3):
    M1 = 6 * (m - 1)
    return np.log(M1 ** 2 + 1.0 / alpha) / (4 * (1 - alpha))


def kappa0_higgs(m=3):
    """(alpha, kappa0) by golden-section search of the defining objective."""
    grid = np.linspace(1e-4, 1 - 1e-4, 2001)
    vals = kappa0_objective(grid, m)
    i = int(np.clip(np.argmin(vals), 1, len(grid) - 2))
    alpha = optimize.golden(kappa0_objective, args=(m,), brack=(grid[i - 1], grid[i], grid[i + 1]),
                            tol=1e-12)
    return float(alpha), float(kappa0_objective(alpha, m))


def _conf_gap(alpha, t, M2):
    """M2^3 u / (1 - M2^2 u) - 2 alpha with u = t^(1 - alpha); +inf if undefined."""
    u = t ** (1 - alpha)
    den = 1 - M2 ** 2 * u
    if den <= 0:
        return np.inf
    return M2 ** 3 * u / den - 2 * alpha


def _conf_alpha_grid(t, M2, n=4001):
    a = np.linspace(1e-6, 1 - 1e-6, n)
    u = t ** (1 - a)
    den = 1 - M2 ** 2 * u
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(den > 0, M2 ** 3 * u / den - 2 * a, np.inf)
    return a, g


def conf_feasible(beta, m=3):
    """Feasibility predicate defining beta0 in the confinement phase."""
    M2 = degree_bounds(m)["G2"]
    t = math.tanh(2 * beta)
    if not M2 ** 2 * t < 1:
        return False
    if t == 0:
        return True
    a, g = _conf_alpha_grid(t, M2)
    i = int(np.argmin(g))
    if g[i] < 0:
        return True
    lo, hi = a[max(i - 1, 0)], a[min(i + 1, len(a) - 1)]
    res = optimize.minimize_scalar(_conf_gap, bounds=(lo, hi), args=(t, M2), method="bounded",
                                   options={"xatol": 1e-14})
    return bool(res.fun < 0)


def beta0_conf(m=3, tol=1e-13):
    M2 = degree_bounds(m)["G2"]
    lo, hi = 0.0, math.atanh(1.0 / M2 ** 2) / 2
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if conf_feasible(mid, m):
            lo = mid
        else:
            hi = mid
    return lo


def alpha_conf(beta, m=3):
    """Smallest alpha in (0,1) satisfying the confinement KP inequality.

    Only defined below beta0; the displayed domain "beta > beta0" is read as
    "beta < beta0", the only range where the set is nonempty.
    """
    M2 = degree_bounds(m)["G2"]
    t = math.tanh(2 * beta)
    if t == 0:
        return 0.0
    a, g = _conf_alpha_grid(t, M2)
    ok = np.flatnonzero(g < 0)
    if not len(ok):
        raise DomainError(f"no admissible alpha at beta={beta}")
    j = ok[0]
    if j == 0:
        return float(a[0])
    # g changes sign between a[j-1] and a[j]
    return float(optimize.brentq(lambda x: min(_conf_gap(x, t, M2), 1e300), a[j - 1], a[j], xtol=1e-15))


def plaquette_distance_constant(m=3, N=3):
    """Smallest D0 with #{p : dist(e, p) = j} <= D0 j^(m-1) for all e, j >= 1 on B_N."""
    geom = LatticeGeometry.box(m, N)
    X = geom.vertex_coords()
    ev = geom.edge_vertices
    pe = geom.plaquette_edges
    P = geom.n_cells(2)
    pverts = np.zeros((P, 4), dtype=np.int64)
    for i in range(P):
        pverts[i] = np.unique(ev[pe[i]].ravel())
    best = 0.0
    for e in range(geom.n_cells(1)):
        a = X[ev[e]]  # (2, m)
        d = np.abs(a[:, None, None, :] - X[pverts][None, :, :, :]).sum(-1).min(axis=(0, 2))
        cnt = np.bincount(d)
        for j in range(1, len(cnt)):
            best = max(best, cnt[j] / j ** (m - 1))
    return best


@dataclass(frozen=True)
class ExpansionConstants:
    m: int
    M0: int
    M1: int
    M2: int
    M3: int
    D0: float
    alpha_higgs: float
    kappa0_higgs: float
    beta0_conf: float


@lru_cache(maxsize=None)
def compute_constants(m=3, d0_box=3):
    if m < 3:
        raise DomainError("m >= 3 required")
    b = degree_bounds(m)
    alpha, k0 = kappa0_higgs(m)
    return ExpansionConstants(m, b["G0"], b["G1"], b["G2"], b["G3"],
                              plaquette_distance_constant(m, d0_box) if d0_box else float("nan"),
                              alpha, k0, beta0_conf(m))


# ---- bounds -----------------------------------------------------------------

def ceps_closed(eps, m=3):
    """Closed-form ceiling for C_eps, taken at kappa = kappa0 + eps; inf if divergent."""
    alpha, k0 = kappa0_higgs(m)
    M1 = degree_bounds(m)["G1"]
    kappa = k0 + eps
    x = math.exp(-2 * (2 * kappa - alpha))
    den = 1 - 4 * M1 ** 2 * x
    return 4 * x / den if den > 0 else math.inf


def ceps_kp(eps, m=3):
    """Variant with the exponent -4 kappa (1 - alpha) of the KP argument."""
    alpha, k0 = kappa0_higgs(m)
    M1 = degree_bounds(m)["G1"]
    x = math.exp(-4 * (k0 + eps) * (1 - alpha))
    den = 1 - M1 ** 2 * x
    return 4 * x / den if den > 0 else math.inf


def single_cell_bound(k, kappa, eps, m=3, ceps=None):
    _, k0 = kappa0_higgs(m)
    if not kappa > k0 + eps:
        raise DomainError("need kappa > kappa0 + eps")
    c = ceps_closed(eps, m) if ceps is None else ceps
    return c / 4 * math.exp(-4 * k * (kappa - k0 - eps))


def tail_higgs(R, T, kappa, eps, m=3):
    _, k0 = kappa0_higgs(m)
    if not kappa > k0 + eps:
        raise DomainError("need kappa > kappa0 + eps")
    c = ceps_closed(eps, m)
    dlt = kappa - k0 - eps
    k = min(R, T)
    r = math.exp(-4 * dlt)
    # sum_j exp(-4 max(j, k) dlt) = k r^k + r^(k+1) / (1 - r)
    s = k * r ** k + r ** (k + 1) / (1 - r)
    return 4 * c * s + 2 * c * max(T - 2 * R, 0) * math.exp(-4 * max(2 * R, k) * dlt)


def cov_bound(support_size, distance, kappa, eps, m=3):
    _, k0 = kappa0_higgs(m)
    if not kappa > k0 + eps:
        raise DomainError("need kappa > kappa0 + eps")
    return ceps_closed(eps, m) * support_size * math.exp(-4 * (kappa - k0 - eps) * distance)


def ceps_conf(beta, m=3, slack=0.0):
    M2 = degree_bounds(m)["G2"]
    if not beta < beta0_conf(m):
        raise DomainError("need beta < beta0_conf")
    alpha = alpha_conf(beta, m)
    x = math.tanh(2 * beta) ** ((1 - slack) * (1 - alpha))
    den = 1 - M2 ** 2 * x
    return x / den if den > 0 else math.inf


def tail_conf(k, beta, eps, m=3, slack=0.0):
    if not (eps > 0 and beta + eps < beta0_conf(m)):
        raise DomainError("need 0 < eps and beta + eps < beta0_conf")
    c = ceps_conf(beta + eps, m, slack)
    return c * (math.tanh(2 * beta) / math.tanh(2 * (beta + eps))) ** k


def sum_conf(R, T, k, beta, eps, m=3, slack=0.0):
    """2(m-1) C (2 sum_j r^max(j,k) + max(0, T - 2R) r^max(2R, k)), r = t_b / t_(b+eps)."""
    if not (eps > 0 and beta + eps < beta0_conf(m)):
        raise DomainError("need 0 < eps and beta + eps < beta0_conf")
    c = ceps_conf(beta + eps, m, slack)
    r = math.tanh(2 * beta) / math.tanh(2 * (beta + eps))
    s = k * r ** k + r ** (k + 1) / (1 - r)
    return 2 * (m - 1) * c * (2 * s + max(0, T - 2 * R) * r ** max(2 * R, k))


def bound_eval(which, *args, **kw):
    table = {"ceps": ceps_closed, "ceps_kp": ceps_kp, "singlecell": single_cell_bound,
             "tailhiggs": tail_higgs, "covbound": cov_bound, "cepsconf": ceps_conf,
             "tailconf": tail_conf, "sumconf": sum_conf}
    try:
        f = table[which.lower().replace("_", "")]
    except KeyError:
        raise ValueError(f"unknown bound {which!r}") from None
    return f(*args, **kw)


# ---- adjacency --------------------------------------------------------------

def _graph_cache(geom):
    if not hasattr(geom, "_graph_cache"):
        geom._graph_cache = {}
    return geom._graph_cache


def adjacency(kind, geom):
    """Neighbour lists (sorted arrays, no self loops) of the named graph."""
    kind = kind.upper()
    cache = _graph_cache(geom)
    if kind in cache:
        return cache[kind]
    if kind == "G0":
        inc = geom.incidence(1).T.tocsr()  # edge -> vertices
    elif kind == "G1":
        inc = geom.incidence(2).tocsr()  # edge -> plaquettes
    elif kind == "G2":
        inc = geom.incidence(2).T.tocsr()  # plaquette -> edges
    elif kind == "G3":
        inc = geom.incidence(3).tocsr() if geom.kmax >= 3 else None  # plaquette -> cubes
        if inc is None:
            inc = np.zeros((geom.n_cells(2), 0))
    else:
        raise ValueError(f"unknown graph {kind!r}")
    import scipy.sparse as sp
    inc = sp.csr_matrix(inc)
    A = (inc @ inc.T).tocsr()
    out = []
    for i in range(A.shape[0]):
        nb = A.indices[A.indptr[i]:A.indptr[i + 1]]
        out.append(np.sort(nb[nb != i]))
    cache[kind] = out
    return out


def adjacency_masks(kind, geom):
    key = kind.upper() + "_mask"
    cache = _graph_cache(geom)
    if key not in cache:
        cache[key] = [sum(1 << int(j) for j in nb) for nb in adjacency(kind, geom)]
    return cache[key]


def mask_of(cells):
    m = 0
    for c in cells:
        m |= 1 << int(c)
    return m


def cells_of(mask):
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


def is_connected(cells, adj_masks):
    cells = list(cells)
    if not cells:
        return False
    allm = mask_of(cells)
    seen = 1 << cells[0]
    frontier = seen
    while frontier:
        nxt = 0
        for c in cells_of(frontier):
            nxt |= adj_masks[c]
        nxt &= allm & ~seen
        seen |= nxt
        frontier = nxt
    return seen == allm


# ---- connected-set enumeration ---------------------------------------------

def connected_sets(adj_masks, anchor, max_size, forbid=0):
    """Yield every connected set (as a bitmask) containing anchor, once each.

    Branches on candidate cells: a popped candidate is either included, or
    excluded from the rest of that branch, so no set is produced twice.
    """
    start = 1 << anchor
    stack = [(start, adj_masks[anchor] & ~forbid & ~start, forbid | start, 1)]
    while stack:
        S, cand, excl, size = stack.pop()
        yield S
        if size == max_size:
            continue
        while cand:
            low = cand & -cand
            cand ^= low
            v = low.bit_length() - 1
            new_cand = (cand | adj_masks[v]) & ~excl & ~low
            stack.append((S | low, new_cand, excl | low, size + 1))
            excl |= low


def count_connected_sets(adj_masks, anchor, max_size, forbid=0):
    """counts[k] = number of connected sets of size k containing anchor."""
    counts = [0] * (max_size + 1)
    am = adj_masks

    def rec(cand, excl, size):
        counts[size] += 1
        if size == max_size:
            return
        while cand:
            low = cand & -cand
            cand ^= low
            rec((cand | am[low.bit_length() - 1]) & ~excl & ~low, excl | low, size + 1)
            excl |= low

    start = 1 << anchor
    rec(am[anchor] & ~forbid & ~start, forbid | start, 1)
    return counts


@dataclass(frozen=True)
class Polymer:
    kind: str
    cells: tuple  # sorted cell indices

    @property
    def size(self):
        return len(self.cells)

    @property
    def mask(self):
        return mask_of(self.cells)

    def interacts(self, other, geom):
        """Union of the two supports is connected in the polymer graph."""
        adj = adjacency_masks(self.kind, geom)
        a, b = self.mask, other.mask
        if a & b:
            return True
        return any(adj[c] & b for c in self.cells)

    def form(self, geom):
        v = np.zeros(geom.n_cells(GRAPH_CELL_DIM[self.kind]), dtype=np.uint8)
        v[list(self.cells)] = 1
        return v


def make_polymer(kind, cells, geom):
    cells = tuple(sorted(int(c) for c in cells))
    if not cells or not is_connected(cells, adjacency_masks(kind, geom)):
        raise ValueError("polymer support must be nonempty and connected")
    return Polymer(kind.upper(), cells)


def enumerate_polymers(kind, anchor, max_size, geom):
    if max_size > MAX_POLYMER_SIZE:
        raise BudgetExceeded(f"max_size {max_size} > {MAX_POLYMER_SIZE}")
    adj = adjacency_masks(kind, geom)
    out = [Polymer(kind.upper(), tuple(cells_of(s))) for s in connected_sets(adj, anchor, max_size)]
    out.sort(key=lambda p: (p.size, p.cells))
    return out


# ---- Ursell functions -------------------------------------------------------

def connected_graph_sum(w):
    """sum over connected graphs G on range(n) of prod_{ij in G} w[i][j].

    Uses C(V) = A(V) - sum_{S: v0 in S, S != V} C(S) A(V \\ S) with
    A(V) = prod_{i<j in V} (1 + w_ij).
    """
    n = len(w)
    if n == 0:
        return 0
    full = (1 << n) - 1
    A = [1] * (1 << n)
    for mask in range(1, 1 << n):
        top = mask.bit_length() - 1
        rest = mask ^ (1 << top)
        a = A[rest]
        r = rest
        while r:
            low = r & -r
            a *= 1 + w[top][low.bit_length() - 1]
            r ^= low
        A[mask] = a
    C = [0] * (1 << n)
    for mask in range(1, 1 << n):
        low = mask & -mask
        rest = mask ^ low
        c = A[mask]
        sub = rest
        # proper subsets S of mask containing low: S = low | sub, sub != rest
        sub = (sub - 1) & rest
        while True:
            if sub != rest:
                S = low | sub
                c -= C[S] * A[mask ^ S]
            if sub == 0:
                break
            sub = (sub - 1) & rest
        C[mask] = c
    return C[full]


def connected_graph_sum_bruteforce(w):
    n = len(w)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    total = 0
    for sel in range(1 << len(pairs)):
        chosen = [pairs[k] for k in range(len(pairs)) if sel >> k & 1]
        parent = list(range(n))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x
        for i, j in chosen:
            parent[find(i)] = find(j)
        if len({find(i) for i in range(n)}) != 1:
            continue
        prod = 1
        for i, j in chosen:
            prod *= w[i][j]
        total += prod
    return total


def ursell_from_relation(rel):
    """U for a symmetric 0/1 (or weight) incompatibility matrix: w = -rel."""
    n = len(rel)
    if n > MAX_URSELL:
        raise BudgetExceeded(f"n(S) = {n} > {MAX_URSELL}")
    w = [[-rel[i][j] if i != j else 0 for j in range(n)] for i in range(n)]
    return connected_graph_sum(w)


def relation_matrix(polymers, geom):
    n = len(polymers)
    rel = [[0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if polymers[i].interacts(polymers[j], geom):
                rel[i][j] = rel[j][i] = 1
    return rel


def is_cluster(rel):
    """Interaction graph on the labelled list is connected."""
    n = len(rel)
    if n == 0:
        return False
    seen = {0}
    todo = [0]
    while todo:
        i = todo.pop()
        for j in range(n):
            if rel[i][j] and j not in seen:
                seen.add(j)
                todo.append(j)
    return len(seen) == n


def is_decomposable_bruteforce(rel):
    n = len(rel)
    for mask in range(1, (1 << n) - 1):
        a = [i for i in range(n) if mask >> i & 1]
        b = [i for i in range(n) if not mask >> i & 1]
        if all(not rel[i][j] for i in a for j in b):
            return True
    return False


class ClusterMultiset:
    """A multiset of polymers with the interaction read from a geometry."""

    def __init__(self, polymers, geom):
        self.polymers = sorted(polymers, key=lambda p: (p.size, p.cells))
        self.geom = geom
        self.counts = Counter(self.polymers)
        self.rel = relation_matrix(self.polymers, geom)
        if not is_cluster(self.rel):
            raise ValueError("multiset is decomposable")

    @property
    def n(self):
        return len(self.polymers)

    @property
    def norm1(self):
        return sum(p.size for p in self.polymers)

    @property
    def norm2(self):
        return sum(int(self.geom.d(p.form(self.geom), 1).sum()) for p in self.polymers)

    @property
    def support(self):
        return sorted(set().union(*[set(p.cells) for p in self.polymers]))

    def parity(self, gamma):
        """S(gamma) = sum n(eta) eta(gamma) mod 2."""
        g = set(np.flatnonzero(gamma.to_vector(self.geom, mod2=True)).tolist()) if gamma.coeffs else set()
        return sum(len(g.intersection(p.cells)) for p in self.polymers) % 2

    def multiplicity_factorial(self):
        return math.prod(math.factorial(c) for c in self.counts.values())


def ursell(S, mode="hardcore"):
    """Connected-graph sum over the labelled polymer list of S.

    In "freemixed" mode S.rel carries weight 2 on linked mixed pairs.
    """
    if mode.lower().replace("_", "") not in ("hardcore", "freemixed"):
        raise ValueError(f"unknown mode {mode!r}")
    return ursell_from_relation(S.rel)


def psi(S, p, gamma=None, phase="higgs"):
    """Cluster weight U / prod n! * activity, optionally with the sign rho(S(gamma))."""
    U = ursell(S)
    f = S.multiplicity_factorial()
    geom = S.geom
    if phase == "higgs":
        w = math.exp(-4 * p.beta * S.norm2 - 4 * p.kappa * S.norm1)
        sign = -1 if (gamma is not None and S.parity(gamma)) else 1
        return U / f * w * sign
    if phase == "confinement":
        g = gamma.to_vector(geom, mod2=True) if (gamma is not None and gamma.coeffs) else \
            np.zeros(geom.n_cells(1), np.uint8)
        tb, tk = math.tanh(2 * p.beta), math.tanh(2 * p.kappa)
        act = 1.0
        for poly in S.polymers:
            de = geom.codifferential(poly.form(geom))
            act *= tb ** poly.size * tk ** (int(de.sum()) - 2 * int((de & g).sum()))
        return U / f * act
    raise ValueError(f"unknown phase {phase!r}")


# ---- truncated series -------------------------------------------------------

def _ball(adj, seeds, radius):
    seen = set(seeds)
    frontier = set(seeds)
    for _ in range(radius):
        nxt = set()
        for c in frontier:
            nxt.update(int(x) for x in adj[c])
        nxt -= seen
        seen |= nxt
        frontier = nxt
    return seen


class PolymerPool:
    """All polymers of size <= size_max inside a region of cells."""

    def __init__(self, kind, geom, region, size_max):
        self.kind = kind.upper()
        self.geom = geom
        adj = adjacency_masks(self.kind, geom)
        region = sorted(region)
        region_mask = mask_of(region)
        outside = ~region_mask
        masks = []
        for c in region:
            below = (1 << c) - 1
            for s in connected_sets(adj, c, size_max, forbid=(below | outside) & ~(1 << c)):
                masks.append(s)
        self.masks = masks
        self.sizes = [bin(s).count("1") for s in masks]
        self.closures = []
        for s in masks:
            cl = s
            for c in cells_of(s):
                cl |= adj[c]
            self.closures.append(cl)
        self.by_cell = defaultdict(list)
        for i, s in enumerate(masks):
            for c in cells_of(s):
                self.by_cell[c].append(i)

    def __len__(self):
        return len(self.masks)

    def interacts(self, i, j):
        return bool(self.closures[i] & self.masks[j])

    def touching(self, mask):
        out = set()
        for c in cells_of(mask):
            out.update(self.by_cell.get(c, ()))
        return out


def enumerate_clusters(pool, seeds, n_max, size_max):
    """All clusters (sorted tuples of pool indices) grown from seed polymers."""
    level = {(i,) for i in seeds if pool.sizes[i] <= size_max}
    out = list(level)
    for _ in range(1, n_max):
        nxt = set()
        for cl in level:
            used = sum(pool.sizes[i] for i in cl)
            room = size_max - used
            if room <= 0:
                continue
            reach = 0
            for i in cl:
                reach |= pool.closures[i]
            for j in pool.touching(reach):
                if pool.sizes[j] <= room:
                    nxt.add(tuple(sorted(cl + (j,))))
        out.extend(nxt)
        level = nxt
    return out


@dataclass
class SeriesResult:
    value: object  # mpmath mpf
    tail: float
    n_clusters: int
    coefficients: dict

    def __float__(self):
        return float(self.value)


def _cluster_ursell(pool, cl, cache):
    n = len(cl)
    rel = tuple(tuple(1 if (i != j and pool.interacts(cl[i], cl[j])) else 0 for j in range(n))
                for i in range(n))
    if rel not in cache:
        cache[rel] = ursell_from_relation(rel)
    return cache[rel]


def _mult_factorial(cl):
    return math.prod(math.factorial(c) for c in Counter(cl).values())


def _edge_parities(pool, gmask):
    return [bin(s & gmask).count("1") & 1 for s in pool.masks]


def higgs_coefficients(mode, geom, gammas, n_max, size_max):
    """Exact rational coefficients c[(norm2, norm1)] of the truncated series."""
    kind = "G1"
    adj = adjacency(kind, geom)
    E = geom.n_cells(1)
    gmasks = [mask_of(np.flatnonzero(g.to_vector(geom, mod2=True))) if g.coeffs else 0 for g in gammas]
    if mode == "logz":
        anchors = list(range(E))
    else:
        anchors = cells_of(gmasks[0])
    region = _ball(adj, anchors, max(size_max - 1, 0))
    pool = PolymerPool(kind, geom, region, size_max)
    d_sizes = []
    for s in pool.masks:
        v = np.zeros(E, np.uint8)
        v[cells_of(s)] = 1
        d_sizes.append(int(geom.d(v, 1).sum()))
    amask = mask_of(anchors)
    seeds = [i for i, s in enumerate(pool.masks) if s & amask]
    clusters = enumerate_clusters(pool, seeds, n_max, size_max)
    par = [_edge_parities(pool, gm) for gm in gmasks]
    coeffs = defaultdict(Fraction)
    cache = {}
    for cl in clusters:
        if mode == "logz":
            factor = 1
        elif mode == "logwilson":
            if sum(par[0][i] for i in cl) % 2 == 0:
                continue
            factor = 2
        elif mode in ("logrho", "covariance"):
            if sum(par[0][i] for i in cl) % 2 == 0 or sum(par[1][i] for i in cl) % 2 == 0:
                continue
            factor = -4 if mode == "logrho" else 1
        else:
            raise ValueError(f"unknown mode {mode!r}")
        u = _cluster_ursell(pool, cl, cache)
        if u == 0:
            continue
        key = (sum(d_sizes[i] for i in cl), sum(pool.sizes[i] for i in cl))
        coeffs[key] += Fraction(factor * u, _mult_factorial(cl))
    return {k: v for k, v in coeffs.items() if v}, len(clusters)


def evaluate_higgs(coeffs, p, dps=DPS):
    with mpmath.workdps(dps):
        b, k = mpmath.mpf(p.beta), mpmath.mpf(p.kappa)
        tot = mpmath.mpf(0)
        for (s2, s1), c in sorted(coeffs.items()):
            tot += mpmath.mpf(c.numerator) / c.denominator * mpmath.exp(-4 * b * s2 - 4 * k * s1)
        return tot


def default_eps(kappa, m=3):
    """Smallest eps on a grid for which the C_eps ceiling converges, below kappa - kappa0."""
    _, k0 = kappa0_higgs(m)
    for eps in np.arange(0.05, 5.0, 0.01):
        if eps >= kappa - k0:
            break
        if math.isfinite(ceps_closed(float(eps), m)):
            return float(eps)
    return None


def truncated_series(mode, p, gammas, n_max, size_max, geom, phase="higgs", eps=None, dps=DPS):
    """Truncated cluster sum and a tail bound for the omitted clusters.

    Higgs modes: logz -> log Z (shifted), logwilson -> -log <W_g>,
    logrho -> log rho, covariance -> |<W12> - <W1><W2>| estimate.
    """
    mode = mode.lower()
    if phase == "confinement":
        return _truncated_conf(mode, p, gammas, n_max, size_max, geom, eps, dps)
    if gammas is None:
        gammas = []
    elif not isinstance(gammas, (list, tuple)):
        gammas = [gammas]
    coeffs, n = higgs_coefficients(mode, geom, list(gammas), n_max, size_max)
    val = evaluate_higgs(coeffs, p, dps)
    if mode == "covariance":
        val = 4 * abs(val)
    k = min(n_max, size_max) + 1
    m = geom.m
    eps = default_eps(p.kappa, m) if eps is None else eps
    tail = math.inf
    if eps is not None:
        try:
            sc = single_cell_bound(k, p.kappa, eps, m)
            if mode == "logz":
                tail = geom.n_cells(1) * sc
            elif mode == "logwilson":
                tail = 2 * len(gammas[0].coeffs) * sc
            else:
                tail = 4 * len(gammas[0].coeffs) * sc
        except DomainError:
            tail = math.inf
    return SeriesResult(val, tail, n, coeffs)


def _conf_pool(geom, gammas, size_max, all_plaquettes):
    kind = "G2"
    adj = adjacency(kind, geom)
    P = geom.n_cells(2)
    if all_plaquettes:
        anchors = list(range(P))
    else:
        # plaquettes whose boundary meets some gamma
        inc = geom.incidence(2).tocsr()
        anchors = set()
        for g in gammas:
            for e in np.flatnonzero(g.to_vector(geom, mod2=True)):
                anchors.update(int(x) for x in inc.indices[inc.indptr[e]:inc.indptr[e + 1]])
        anchors = sorted(anchors)
    region = _ball(adj, anchors, max(size_max - 1, 0))
    pool = PolymerPool(kind, geom, region, size_max)
    amask = mask_of(anchors)
    seeds = [i for i, s in enumerate(pool.masks) if s & amask]
    return pool, seeds


def _conf_psi_sum(pool, clusters, geom, p, gvec, dps):
    """sum over clusters of Psi^gamma in mpmath."""
    inc = geom.incidence(2)
    dvec = []
    for s in pool.masks:
        v = np.zeros(geom.n_cells(2), np.int64)
        v[cells_of(s)] = 1
        dvec.append((inc @ v) % 2)
    cache = {}
    with mpmath.workdps(dps):
        tb = mpmath.tanh(2 * mpmath.mpf(p.beta))
        tk = mpmath.tanh(2 * mpmath.mpf(p.kappa))
        tot = mpmath.mpf(0)
        for cl in clusters:
            u = _cluster_ursell(pool, cl, cache)
            if u == 0:
                continue
            a = sum(pool.sizes[i] for i in cl)
            b = sum(int(dvec[i].sum()) - 2 * int((dvec[i] & gvec).sum()) for i in cl)
            tot += mpmath.mpf(u) / _mult_factorial(cl) * tb ** a * tk ** b
        return tot


def _truncated_conf(mode, p, gammas, n_max, size_max, geom, eps, dps):
    if gammas is None:
        gammas = []
    elif not isinstance(gammas, (list, tuple)):
        gammas = [gammas]
    E = geom.n_cells(1)

    def gv(g):
        return g.to_vector(geom, mod2=True).astype(np.int64) if g.coeffs else np.zeros(E, np.int64)
    with mpmath.workdps(dps):
        tk = mpmath.tanh(2 * mpmath.mpf(p.kappa))
        if mode == "logz":
            pool, seeds = _conf_pool(geom, [], size_max, True)
            cl = enumerate_clusters(pool, seeds, n_max, size_max)
            val = _conf_psi_sum(pool, cl, geom, p, np.zeros(E, np.int64), dps)
        elif mode == "logwilson":
            g = gammas[0]
            pool, seeds = _conf_pool(geom, [g], size_max, False)
            cl = enumerate_clusters(pool, seeds, n_max, size_max)
            diff = _conf_psi_sum(pool, cl, geom, p, gv(g), dps) - \
                _conf_psi_sum(pool, cl, geom, p, np.zeros(E, np.int64), dps)
            val = -len(g.coeffs) * mpmath.log(tk) - diff
        elif mode == "logrho":
            g1, g2 = gammas
            loop = g1 + g2
            pool, seeds = _conf_pool(geom, [g1, g2], size_max, False)
            cl = enumerate_clusters(pool, seeds, n_max, size_max)
            z = np.zeros(E, np.int64)
            val = (_conf_psi_sum(pool, cl, geom, p, gv(g1), dps)
                   + _conf_psi_sum(pool, cl, geom, p, gv(g2), dps)
                   - _conf_psi_sum(pool, cl, geom, p, gv(loop), dps)
                   - _conf_psi_sum(pool, cl, geom, p, z, dps))
        else:
            raise ValueError(f"mode {mode!r} not available in the confinement phase")
    tail = math.inf
    k = min(n_max, size_max) + 1
    if eps is not None:
        try:
            tail = 2 * 2 * (geom.m - 1) * sum(len(g.coeffs) for g in gammas) * tail_conf(k, p.beta, eps, geom.m)
        except DomainError:
            tail = math.inf
    return SeriesResult(val, tail, len(cl), {})


def truncated_ceps(eps, geom, anchor, n_max=2, size_max=3, m=3):
    """Indicative lower estimate of C_eps: 4 sum |Psi_{0, kappa0+eps}| over clusters at anchor."""
    from .model import ModelParams
    _, k0 = kappa0_higgs(m)
    p = ModelParams(0.0, k0 + eps)
    return 4 * float(abs_sum_at_edge(geom, anchor, p, n_max, size_max, kmin=1))


def abs_sum_at_edge(geom, anchor, p, n_max, size_max, kmin=1, dps=30):
    """sum over clusters with anchor in supp S and norm1 >= kmin of |Psi|."""
    adj = adjacency("G1", geom)
    region = _ball(adj, [anchor], max(size_max - 1, 0))
    pool = PolymerPool("G1", geom, region, size_max)
    E = geom.n_cells(1)
    d_sizes = []
    for s in pool.masks:
        v = np.zeros(E, np.uint8)
        v[cells_of(s)] = 1
        d_sizes.append(int(geom.d(v, 1).sum()))
    seeds = [i for i, s in enumerate(pool.masks) if s >> anchor & 1]
    clusters = enumerate_clusters(pool, seeds, n_max, size_max)
    cache = {}
    with mpmath.workdps(dps):
        tot = mpmath.mpf(0)
        for cl in clusters:
            n1 = sum(pool.sizes[i] for i in cl)
            if n1 < kmin:
                continue
            u = _cluster_ursell(pool, cl, cache)
            n2 = sum(d_sizes[i] for i in cl)
            tot += abs(mpmath.mpf(u) / _mult_factorial(cl)) * mpmath.exp(
                -4 * mpmath.mpf(p.beta) * n2 - 4 * mpmath.mpf(p.kappa) * n1)
        return tot


def _plaquette_masks(geom):
    """Per edge, the bitmask of plaquettes containing it."""
    cof = geom.edge_plaquettes
    return [mask_of(row[row >= 0]) for row in cof]


def anchored_activity_sum(geom, p, cell, size_max, power=1.0):
    """sum over polymers eta' containing cell, |eta'| <= size_max, of activity^power."""
    adj = adjacency_masks("G1", geom)
    pm = _plaquette_masks(geom)
    tot = 0.0
    for s in connected_sets(adj, cell, size_max):
        dm = 0
        cs = cells_of(s)
        for c in cs:
            dm ^= pm[c]
        tot += math.exp(-(4 * p.beta * bin(dm).count("1") + 4 * p.kappa * len(cs)) * power)
    return tot


def kp_check(geom, p, alpha, eta_max=3, partner_max=5, anchor=None):
    """One-sided Kotecky-Preiss check on enumerable polymers at one anchor.

    For each polymer eta of size <= eta_max containing the anchor, the sum of
    activity^(1 - alpha) over polymers eta' of size <= partner_max meeting the
    G1 closure of eta is bounded above by summing per closure cell, and that
    upper bound is compared with alpha * kappa * |supp eta|. Returns the worst
    ratio lhs / rhs; a value <= 1 means the condition holds on these terms.
    """
    amasks = adjacency_masks("G1", geom)
    if anchor is None:
        anchor = interior_cells(geom, 1)[0]
    per_cell = {}
    worst = 0.0
    for s in connected_sets(amasks, anchor, eta_max):
        cl = s
        for c in cells_of(s):
            cl |= amasks[c]
        lhs = 0.0
        for c in cells_of(cl):
            if c not in per_cell:
                per_cell[c] = anchored_activity_sum(geom, p, c, partner_max, 1 - alpha)
            lhs += per_cell[c]
        worst = max(worst, lhs / (alpha * p.kappa * bin(s).count("1")))
    return worst


def interior_cells(geom, k):
    """Cells whose full coboundary lies in the box (k = 1 edges, k = 2 plaquettes)."""
    if k == 1:
        deg = (geom.edge_plaquettes >= 0).sum(1)
        return [int(i) for i in np.flatnonzero(deg == 2 * (geom.m - 1))]
    if k == 2:
        # every boundary edge interior, so the G2 neighbourhood is complete
        full = (geom.edge_plaquettes >= 0).sum(1) == 2 * (geom.m - 1)
        ok = full[geom.plaquette_edges].all(1)
        return [int(i) for i in np.flatnonzero(ok)]
    raise ValueError("k must be 1 or 2")


def polymer_count_table(geom, kind, kmax=5, anchors=None):
    """{anchor: counts by size} for connected sets at each anchor."""
    adj = adjacency_masks(kind, geom)
    k = GRAPH_CELL_DIM[kind.upper()]
    anchors = interior_cells(geom, k) if anchors is None else anchors
    return {a: count_connected_sets(adj, a, kmax) for a in anchors}


def line_pair_distance(g1, g2):
    return dist(g1, g2)
