"""Cubical cells, chains and Z2 forms on a box of Z^m with free boundary.

Cells are keyed by ``(basepoint, directions)`` with ``directions`` a sorted
tuple of axes. Forms are uint8 arrays over the positively oriented cells of a
:class:`LatticeGeometry`, in its canonical order.
"""

from dataclasses import dataclass
from functools import cached_property
from itertools import combinations, product
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from . import gf2

MAX_CELL_DIM = 3


class OrientedCell(NamedTuple):
    base: tuple
    dirs: tuple
    sign: int = 1

    def __neg__(self):
        return OrientedCell(self.base, self.dirs, -self.sign)

    @property
    def key(self):
        return (self.base, self.dirs)

    @property
    def k(self):
        return len(self.dirs)


def _faces(base, dirs):
    """Signed faces of a positive cell: yields (coeff, base, dirs)."""
    for i, j in enumerate(dirs):
        rest = dirs[:i] + dirs[i + 1:]
        shifted = base[:j] + (base[j] + 1,) + base[j + 1:]
        s = 1 if i % 2 == 0 else -1
        yield s, shifted, rest
        yield -s, base, rest


class Chain:
    """Integer k-chain: sparse map from positive k-cells to coefficients."""

    def __init__(self, k, coeffs=None):
        self.k = k
        self.coeffs = {}
        for key, c in (coeffs or {}).items():
            if c:
                self.coeffs[(tuple(key[0]), tuple(key[1]))] = int(c)

    @classmethod
    def from_cells(cls, cells):
        cells = list(cells)
        k = cells[0].k if cells else 0
        out = cls(k)
        for c in cells:
            out._add(c.key, c.sign)
        return out

    def _add(self, key, c):
        v = self.coeffs.get(key, 0) + c
        if v:
            self.coeffs[key] = v
        else:
            self.coeffs.pop(key, None)

    def __add__(self, other):
        if other.coeffs and self.coeffs and other.k != self.k:
            raise ValueError("degree mismatch")
        out = Chain(self.k if self.coeffs else other.k, self.coeffs)
        for key, c in other.coeffs.items():
            out._add(key, c)
        return out._narrow(type(self))

    def _narrow(self, cls):
        if cls is Chain:
            return self
        try:
            return cls(self.k, self.coeffs)
        except ValueError:
            return self

    def __neg__(self):
        return type(self)(self.k, {key: -c for key, c in self.coeffs.items()})

    def __sub__(self, other):
        return self + (-other)

    def __eq__(self, other):
        return isinstance(other, Chain) and self.coeffs == other.coeffs and (
            not self.coeffs or self.k == other.k)

    def __hash__(self):
        return hash(frozenset(self.coeffs.items()))

    def __len__(self):
        return len(self.coeffs)

    def __iter__(self):
        return iter(sorted(self.coeffs.items()))

    def __repr__(self):
        return f"{type(self).__name__}(k={self.k}, {dict(sorted(self.coeffs.items()))})"

    def mod2(self):
        return Chain(self.k, {key: c % 2 for key, c in self.coeffs.items()})

    @property
    def support(self):
        return sorted(self.coeffs)

    def shifted(self, offset):
        offset = tuple(offset)
        return type(self)(self.k, {
            (tuple(b + o for b, o in zip(base, offset)), dirs): c
            for (base, dirs), c in self.coeffs.items()})

    def boundary(self):
        if self.k < 1:
            raise ValueError("boundary of a 0-chain")
        out = Chain(self.k - 1)
        for (base, dirs), c in self.coeffs.items():
            for s, fb, fd in _faces(base, dirs):
                out._add((fb, fd), s * c)
        return out

    def vertices(self):
        """All lattice points touched by the cells of the support."""
        pts = set()
        for base, dirs in self.coeffs:
            for corner in product(*[(0, 1) if j in dirs else (0,) for j in range(len(base))]):
                pts.add(tuple(b + c for b, c in zip(base, corner)))
        return pts

    def to_vector(self, geom, mod2=False):
        v = np.zeros(geom.n_cells(self.k), dtype=np.int64)
        for key, c in self.coeffs.items():
            v[geom.index(*key)] += c
        return (v % 2).astype(np.uint8) if mod2 else v

    @classmethod
    def from_vector(cls, vec, k, geom):
        idx = np.flatnonzero(vec)
        return cls(k, {geom.cell(k, i): int(vec[i]) for i in idx})


def boundary(chain):
    return chain.boundary()


@dataclass(frozen=True)
class PathClass:
    kind: str  # "loop", "open" or "invalid"
    start: tuple = None
    end: tuple = None


class PathChain(Chain):
    """1-chain with coefficients in {-1, 0, 1}."""

    def __init__(self, k=1, coeffs=None):
        if isinstance(k, dict):
            k, coeffs = 1, k
        if k != 1:
            raise ValueError("a path is a 1-chain")
        super().__init__(1, coeffs)
        bad = [c for c in self.coeffs.values() if c not in (-1, 1)]
        if bad:
            raise ValueError(f"path coefficients must be in {{-1,0,1}}, got {bad[0]}")

    @classmethod
    def from_vertices(cls, pts):
        """Path through a sequence of nearest-neighbour lattice points."""
        pts = [tuple(int(x) for x in p) for p in pts]
        acc = Chain(1)
        for a, b in zip(pts, pts[1:]):
            diff = [y - x for x, y in zip(a, b)]
            nz = [j for j, d in enumerate(diff) if d]
            if len(nz) != 1 or abs(diff[nz[0]]) != 1:
                raise ValueError(f"{a} -> {b} is not a lattice step")
            j = nz[0]
            if diff[j] == 1:
                acc._add((a, (j,)), 1)
            else:
                acc._add((b, (j,)), -1)
        return cls(1, acc.coeffs)

    @cached_property
    def boundary_chain(self):
        return Chain.boundary(self)

    @property
    def length(self):
        return len(self.coeffs)

    def classify(self):
        bd = self.boundary_chain
        if not bd.coeffs:
            return PathClass("loop")
        if len(bd.coeffs) == 2 and sorted(bd.coeffs.values()) == [-1, 1]:
            start = next(k for k, c in bd.coeffs.items() if c == -1)[0]
            end = next(k for k, c in bd.coeffs.items() if c == 1)[0]
            return PathClass("open", start, end)
        return PathClass("invalid")

    def edge_indices(self, geom):
        return np.array(sorted(geom.index(*key) for key in self.coeffs), dtype=np.int64)


def classify_path(gamma):
    return gamma.classify()


def as_path(chain):
    return chain if isinstance(chain, PathChain) else PathChain(1, chain.coeffs)


class LatticeGeometry:
    """Positive cells of the box prod_j [lo_j, hi_j] in Z^m, for k <= 3."""

    def __init__(self, lo, hi):
        lo = np.asarray(lo, dtype=np.int64)
        hi = np.asarray(hi, dtype=np.int64)
        if lo.shape != hi.shape or lo.ndim != 1 or np.any(hi < lo):
            raise ValueError("bad box bounds")
        self.m = len(lo)
        self.lo, self.hi = lo, hi
        self.shape = tuple(int(s) for s in hi - lo + 1)
        self.kmax = min(MAX_CELL_DIM, self.m)
        self.combos = [list(combinations(range(self.m), k)) for k in range(self.kmax + 1)]
        self._combo_id = [{c: i for i, c in enumerate(cs)} for cs in self.combos]
        self._bases, self._dir_ids, self._lookup = [], [], []
        for k in range(self.kmax + 1):
            self._build(k)

    @classmethod
    def box(cls, m, N):
        if m < 1 or N < 0:
            raise ValueError("need m >= 1, N >= 0")
        g = cls([-N] * m, [N] * m)
        g.N = N
        return g

    @classmethod
    def from_ranges(cls, ranges):
        ranges = list(ranges)
        return cls([r[0] for r in ranges], [r[1] for r in ranges])

    N = None

    def __repr__(self):
        if self.N is not None:
            return f"LatticeGeometry.box(m={self.m}, N={self.N})"
        return f"LatticeGeometry({self.lo.tolist()}, {self.hi.tolist()})"

    def _build(self, k):
        bases, ids = [], []
        for ci, dirs in enumerate(self.combos[k]):
            upper = self.hi.copy()
            upper[list(dirs)] -= 1
            if np.any(upper < self.lo):
                continue
            axes = [np.arange(a, b + 1) for a, b in zip(self.lo, upper)]
            grid = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, self.m)
            bases.append(grid)
            ids.append(np.full(len(grid), ci))
        if bases:
            bases = np.concatenate(bases)
            ids = np.concatenate(ids)
        else:
            bases = np.zeros((0, self.m), dtype=np.int64)
            ids = np.zeros(0, dtype=np.int64)
        order = np.lexsort([ids] + [bases[:, j] for j in reversed(range(self.m))])
        bases, ids = bases[order], ids[order]
        lookup = np.full((len(self.combos[k]),) + self.shape, -1, dtype=np.int64)
        if len(bases):
            lookup[(ids,) + tuple((bases - self.lo).T)] = np.arange(len(bases))
        self._bases.append(bases)
        self._dir_ids.append(ids)
        self._lookup.append(lookup)

    def _check_k(self, k):
        if not 0 <= k <= self.kmax:
            raise ValueError(f"cell dimension {k} out of range 0..{self.kmax}")

    def n_cells(self, k):
        self._check_k(k)
        return len(self._bases[k])

    def cell(self, k, i):
        self._check_k(k)
        return tuple(int(x) for x in self._bases[k][i]), self.combos[k][self._dir_ids[k][i]]

    def cells(self, k):
        return [self.cell(k, i) for i in range(self.n_cells(k))]

    def index(self, base, dirs):
        k = len(dirs)
        self._check_k(k)
        ci = self._combo_id[k].get(tuple(dirs))
        rel = np.asarray(base) - self.lo
        if ci is None or np.any(rel < 0) or np.any(rel >= self.shape):
            raise KeyError(f"cell {(base, dirs)} not in box")
        i = int(self._lookup[k][(ci,) + tuple(rel)])
        if i < 0:
            raise KeyError(f"cell {(base, dirs)} not in box")
        return i

    def contains(self, base, dirs):
        try:
            self.index(base, dirs)
            return True
        except KeyError:
            return False

    def vertex_coords(self):
        return self._bases[0]

    def boundary_matrix(self, k):
        """Signed incidence, shape (n_{k-1}, n_k)."""
        if not 1 <= k <= self.kmax:
            raise ValueError("boundary matrix needs 1 <= k <= kmax")
        return self._bmats[k]

    @cached_property
    def _bmats(self):
        out = {}
        for k in range(1, self.kmax + 1):
            rows, cols, vals = [], [], []
            bases, ids = self._bases[k], self._dir_ids[k]
            for ci, dirs in enumerate(self.combos[k]):
                sel = np.flatnonzero(ids == ci)
                if not len(sel):
                    continue
                b = bases[sel]
                for i, j in enumerate(dirs):
                    rest = dirs[:i] + dirs[i + 1:]
                    fid = self._combo_id[k - 1][rest]
                    s = 1 if i % 2 == 0 else -1
                    up = b.copy()
                    up[:, j] += 1
                    for pts, sign in ((up, s), (b, -s)):
                        f = self._lookup[k - 1][(np.full(len(sel), fid),) + tuple((pts - self.lo).T)]
                        rows.append(f)
                        cols.append(sel)
                        vals.append(np.full(len(sel), sign))
            if not rows:
                out[k] = sp.csr_matrix((self.n_cells(k - 1), self.n_cells(k)), dtype=np.int8)
                continue
            rows, cols, vals = (np.concatenate(x) for x in (rows, cols, vals))
            out[k] = sp.csr_matrix((vals.astype(np.int8), (rows, cols)),
                                   shape=(self.n_cells(k - 1), self.n_cells(k)))
        return out

    def incidence(self, k):
        """Unsigned (mod 2) boundary incidence as a CSR matrix."""
        return abs(self.boundary_matrix(k)).astype(np.int64)

    def faces(self, k):
        """(n_k, 2k) array of face indices of each positive k-cell."""
        B = self.incidence(k).T.tocsr()
        return B.indices.reshape(self.n_cells(k), 2 * k)

    def cofaces(self, k):
        """Padded (n_k, max) array of (k+1)-cells containing each k-cell; -1 pads."""
        C = self.incidence(k + 1).tocsr()
        deg = np.diff(C.indptr)
        out = np.full((self.n_cells(k), max(int(deg.max(initial=0)), 1)), -1, dtype=np.int64)
        for i in range(self.n_cells(k)):
            nb = C.indices[C.indptr[i]:C.indptr[i + 1]]
            out[i, :len(nb)] = nb
        return out

    @cached_property
    def edge_vertices(self):
        return self.faces(1)

    @cached_property
    def plaquette_edges(self):
        return self.faces(2)

    @cached_property
    def edge_plaquettes(self):
        return self.cofaces(1)

    def coboundary(self, base, dirs):
        k = len(dirs)
        if k >= self.kmax:
            raise ValueError("no cells above the top dimension")
        i = self.index(base, dirs)
        row = self.boundary_matrix(k + 1).getrow(i)
        return Chain(k + 1, {self.cell(k + 1, j): int(v) for j, v in zip(row.indices, row.data)})

    def d(self, form, k):
        """Exterior derivative of a Z2 k-form."""
        form = np.asarray(form, dtype=np.int64)
        return ((self.incidence(k + 1).T @ form) % 2).astype(np.uint8)

    def codifferential(self, omega):
        """delta omega(e) = parity of support plaquettes containing e."""
        omega = np.asarray(omega, dtype=np.int64)
        return ((self.incidence(2) @ omega) % 2).astype(np.uint8)

    def sub_box(self, lo, hi):
        lo = np.maximum(np.asarray(lo), self.lo)
        hi = np.minimum(np.asarray(hi), self.hi)
        return LatticeGeometry(lo, hi)


def enumerate_cells(geom, k):
    return [OrientedCell(b, d, 1) for b, d in geom.cells(k)]


def coboundary(cell, geom):
    return geom.coboundary(cell.base, cell.dirs) if cell.sign > 0 else -geom.coboundary(cell.base, cell.dirs)


def d(form, k, geom):
    return geom.d(form, k)


def codifferential(omega, geom):
    return geom.codifferential(omega)


def dist(g1, g2):
    """l1 lattice distance between the supports of two chains."""
    p1, p2 = g1.vertices(), g2.vertices()
    if not p1 or not p2:
        raise ValueError("distance needs nonempty supports")
    a = np.array(sorted(p1))
    b = np.array(sorted(p2))
    return int(np.abs(a[:, None, :] - b[None, :, :]).sum(-1).min())


def build_line_pair(R, T, geom):
    """Two open lines bounding a 2R x T rectangle in the (x1, x2)-plane.

    Endpoints sit on the x1-axis at x1 = a and a + T with a = -(T // 2).
    gamma1 runs from (a, 0) down to x2 = -R, across, and back up; gamma2
    closes the rectangle through x2 = +R.
    """
    if R < 1 or T < 1:
        raise ValueError("need R, T >= 1")
    m = geom.m
    a = -(T // 2)
    lo = np.zeros(m, dtype=np.int64)
    hi = np.zeros(m, dtype=np.int64)
    lo[:2] = a, -R
    hi[:2] = a + T, R
    if np.any(lo < geom.lo) or np.any(hi > geom.hi):
        raise ValueError(f"rectangle R={R}, T={T} does not fit in {geom}")

    def pt(x1, x2):
        return (x1, x2) + (0,) * (m - 2)

    down = [pt(a, -y) for y in range(R + 1)]
    across = [pt(a + x, -R) for x in range(1, T + 1)]
    up = [pt(a + T, -R + y) for y in range(1, R + 1)]
    g1 = PathChain.from_vertices(down + across + up)
    up2 = [pt(a + T, y) for y in range(R + 1)]
    back = [pt(a + T - x, R) for x in range(1, T + 1)]
    down2 = [pt(a, R - y) for y in range(1, R + 1)]
    g2 = PathChain.from_vertices(up2 + back + down2)
    return g1, g2


def _rectangle_fill(gamma):
    """Flat filling if gamma (mod 2) is the boundary of an axis rectangle."""
    pts = gamma.vertices()
    arr = np.array(sorted(pts))
    varying = [j for j in range(arr.shape[1]) if arr[:, j].min() != arr[:, j].max()]
    if len(varying) != 2:
        return None
    i, j = varying
    lo, hi = arr.min(0), arr.max(0)
    base0 = tuple(int(x) for x in lo)
    fill = Chain(2)
    for a in range(lo[i], hi[i]):
        for b in range(lo[j], hi[j]):
            base = list(base0)
            base[i], base[j] = a, b
            fill._add((tuple(base), (i, j)), 1)
    if fill.boundary().mod2() == gamma.mod2():
        return fill
    return None


def spanning_surface(gamma, geom=None):
    """A 2-chain q with boundary q = gamma mod 2 (coefficients in {0,1})."""
    if gamma.boundary().mod2().coeffs:
        raise ValueError("spanning surface needs a closed chain")
    if not gamma.coeffs:
        return Chain(2)
    q = _rectangle_fill(gamma)
    if q is None:
        # solve inside the bounding box of the loop, which is contractible
        arr = np.array(sorted(gamma.vertices()))
        local = LatticeGeometry(arr.min(0), arr.max(0))
        if local.kmax < 2 or local.n_cells(2) == 0:
            raise RuntimeError("loop has no spanning surface in its bounding box")
        b = gamma.to_vector(local, mod2=True)
        x = gf2.solve(local.incidence(2).toarray(), b)
        if x is None:
            raise RuntimeError("no GF(2) solution for a spanning surface")
        q = Chain(2, {local.cell(2, i): 1 for i in np.flatnonzero(x)})
    assert q.boundary().mod2() == gamma.mod2()
    return q
