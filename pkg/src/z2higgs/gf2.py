"""Dense GF(2) linear algebra on Python-int bitsets.

A matrix is a list of ints, one per row; bit j of row i is entry (i, j).
"""

import numpy as np


def pack_rows(mat):
    """Pack a 0/1 numpy matrix into a list of int rows (bit j = column j)."""
    mat = np.asarray(mat, dtype=np.uint8) & 1
    rows = []
    for r in mat:
        # little-endian bit order so column 0 is bit 0
        rows.append(int.from_bytes(np.packbits(r, bitorder="little").tobytes(), "little"))
    return rows


def unpack(x, n):
    out = np.zeros(n, dtype=np.uint8)
    j = 0
    while x:
        if x & 1:
            out[j] = 1
        x >>= 1
        j += 1
    return out


def to_int(vec):
    vec = np.asarray(vec, dtype=np.uint8) & 1
    return int.from_bytes(np.packbits(vec, bitorder="little").tobytes(), "little")


def rref(rows, ncols):
    """Reduced row echelon form. Returns (rows, pivot columns)."""
    rows = [r for r in rows if r]
    pivots = []
    rank = 0
    for col in range(ncols):
        bit = 1 << col
        sel = None
        for i in range(rank, len(rows)):
            if rows[i] & bit:
                sel = i
                break
        if sel is None:
            continue
        rows[rank], rows[sel] = rows[sel], rows[rank]
        piv = rows[rank]
        for i in range(len(rows)):
            if i != rank and rows[i] & bit:
                rows[i] ^= piv
        pivots.append(col)
        rank += 1
        if rank == len(rows):
            break
    return rows[:rank], pivots


def rank(mat):
    rows = pack_rows(mat) if isinstance(mat, np.ndarray) else list(mat)
    ncols = mat.shape[1] if isinstance(mat, np.ndarray) else max((r.bit_length() for r in rows), default=0)
    return len(rref(rows, ncols)[0])


def nullspace(mat):
    """Basis of {x : mat @ x = 0 mod 2} as a list of uint8 vectors."""
    mat = np.asarray(mat, dtype=np.uint8)
    ncols = mat.shape[1]
    red, pivots = rref(pack_rows(mat), ncols)
    free = [c for c in range(ncols) if c not in set(pivots)]
    basis = []
    for f in free:
        x = 1 << f
        for r, pc in zip(red, pivots):
            if r >> f & 1:
                x |= 1 << pc
        basis.append(unpack(x, ncols))
    return basis


def solve(mat, b):
    """One solution of mat @ x = b over GF(2), or None if inconsistent."""
    mat = np.asarray(mat, dtype=np.uint8)
    nrows, ncols = mat.shape
    # augment: column ncols carries b
    aug = np.concatenate([mat & 1, (np.asarray(b, dtype=np.uint8) & 1).reshape(nrows, 1)], axis=1)
    red, pivots = rref(pack_rows(aug), ncols + 1)
    if ncols in pivots:
        return None
    x = np.zeros(ncols, dtype=np.uint8)
    for r, pc in zip(red, pivots):
        x[pc] = (r >> ncols) & 1
    return x


def span(basis):
    """All 2^len(basis) combinations, as an (2^k, n) uint8 array."""
    if not basis:
        raise ValueError("empty basis: pass the ambient dimension via span_or_zero")
    B = np.array(basis, dtype=np.uint8)
    k = B.shape[0]
    coeffs = (np.arange(1 << k)[:, None] >> np.arange(k)) & 1
    return (coeffs.astype(np.int64) @ B.astype(np.int64) % 2).astype(np.uint8)


def span_or_zero(basis, n):
    if not basis:
        return np.zeros((1, n), dtype=np.uint8)
    return span(basis)
