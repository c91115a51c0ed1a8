"""Bit-string plumbing shared by every module.

Conventions
-----------
* A codeword of length ``m`` is a uint8 array ``c[0..m-1]``; position 0 is
  the first codeword bit.
* The integer code of a bit string puts position 0 in the most significant
  bit, so integer order is lexicographic order.
* The rank of a window ``c[I]`` (``I`` sorted) is the integer code of the
  sub-string, i.e. its lexicographic rank.
"""

from __future__ import annotations

import math

import numpy as np


def binary_entropy(q: float) -> float:
    """Binary entropy in bits; ``H(0) = H(1) = 0``."""
    if q < 0 or q > 1:
        raise ValueError(f"entropy argument {q} outside [0, 1]")
    if q == 0 or q == 1:
        return 0.0
    return -q * math.log2(q) - (1 - q) * math.log2(1 - q)


def inverse_binary_entropy(h: float, tol: float = 1e-12) -> float:
    """The unique ``q`` in ``[0, 1/2]`` with ``H(q) = h`` (bisection)."""
    if h < 0 or h > 1 + 1e-15:
        raise ValueError(f"entropy value {h} outside [0, 1]")
    if h <= 0:
        return 0.0
    if h >= 1:
        return 0.5
    lo, hi = 0.0, 0.5
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = binary_entropy(mid)
        if abs(val - h) <= tol:
            return mid
        if val < h:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def as_bits(c, length: int | None = None) -> np.ndarray:
    """Coerce a bit string ("0110", list, array or int with ``length``)."""
    if isinstance(c, (int, np.integer)) and not isinstance(c, bool):
        if length is None:
            raise ValueError("integer bit strings need an explicit length")
        return int_to_bits(int(c), length)
    if isinstance(c, str):
        arr = np.frombuffer(c.encode(), dtype=np.uint8) - ord("0")
    else:
        arr = np.asarray(c, dtype=np.int64)
    if arr.ndim != 1 or np.any((arr != 0) & (arr != 1)):
        raise ValueError("bit strings must be one-dimensional with 0/1 entries")
    arr = arr.astype(np.uint8)
    if length is not None and arr.size != length:
        raise ValueError(f"expected {length} bits, got {arr.size}")
    return arr


def bits_to_int(bits) -> int:
    out = 0
    for v in as_bits(bits):
        out = (out << 1) | int(v)
    return out


def int_to_bits(value: int, length: int) -> np.ndarray:
    if value < 0 or value >> length:
        raise ValueError(f"{value} does not fit in {length} bits")
    return np.array([(value >> (length - 1 - k)) & 1 for k in range(length)],
                    dtype=np.uint8)


def bits_to_str(bits) -> str:
    return "".join("1" if v else "0" for v in np.asarray(bits))


def int_to_hex(value: int, length: int) -> str:
    digits = max(1, -(-length // 4))
    return format(value, f"0{digits}x")


def window_ranks(codes: np.ndarray, positions, length: int) -> np.ndarray:
    """Lexicographic ranks of ``c[positions]`` for an array of integer codes."""
    codes = np.asarray(codes, dtype=np.int64)
    out = np.zeros(codes.shape, dtype=np.int64)
    for k in positions:
        out = (out << 1) | ((codes >> (length - 1 - int(k))) & 1)
    return out


def unpack_codes(codes: np.ndarray, length: int) -> np.ndarray:
    """Integer codes -> ``(len(codes), length)`` uint8 bit matrix."""
    codes = np.asarray(codes, dtype=np.int64)
    shifts = np.arange(length - 1, -1, -1, dtype=np.int64)
    return ((codes[:, None] >> shifts) & 1).astype(np.uint8)


def pack_rows(bit_rows: np.ndarray) -> np.ndarray:
    """``(count, length)`` bit matrix -> integer codes."""
    bit_rows = np.asarray(bit_rows, dtype=np.int64)
    length = bit_rows.shape[1]
    weights = np.left_shift(1, np.arange(length - 1, -1, -1, dtype=np.int64))
    return bit_rows @ weights


def popcount(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.uint64)
    out = np.zeros(values.shape, dtype=np.int64)
    while np.any(values):
        out += (values & np.uint64(1)).astype(np.int64)
        values = values >> np.uint64(1)
    return out


def gf2_rank(matrix: np.ndarray) -> int:
    """Rank over GF(2) by Gaussian elimination."""
    work = np.array(matrix, dtype=np.uint8) % 2
    rows, cols = work.shape
    rank = 0
    for col in range(cols):
        pivot = None
        for r in range(rank, rows):
            if work[r, col]:
                pivot = r
                break
        if pivot is None:
            continue
        work[[rank, pivot]] = work[[pivot, rank]]
        for r in range(rows):
            if r != rank and work[r, col]:
                work[r] ^= work[rank]
        rank += 1
        if rank == rows:
            break
    return rank


def gf2_nullspace(matrix: np.ndarray) -> np.ndarray:
    """Basis (as rows) of ``{v : M v = 0}`` over GF(2)."""
    work = np.array(matrix, dtype=np.uint8) % 2
    rows, cols = work.shape
    pivots = []
    r = 0
    for col in range(cols):
        pivot = None
        for k in range(r, rows):
            if work[k, col]:
                pivot = k
                break
        if pivot is None:
            continue
        work[[r, pivot]] = work[[pivot, r]]
        for k in range(rows):
            if k != r and work[k, col]:
                work[k] ^= work[r]
        pivots.append(col)
        r += 1
        if r == rows:
            break
    free = [c for c in range(cols) if c not in pivots]
    basis = []
    for f in free:
        v = np.zeros(cols, dtype=np.uint8)
        v[f] = 1
        for row, pc in enumerate(pivots):
            if work[row, f]:
                v[pc] = 1
        basis.append(v)
    return np.array(basis, dtype=np.uint8).reshape(len(basis), cols)
