"""Block-marginal vectors and the checks defined on them.

A block-marginal vector stacks, for every right vertex ``i``, a distribution
over the ``2^b`` values of the window ``c[I_i]`` (lexicographic order, the
first index of ``I_i`` being the most significant bit).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from . import bits
from .ensemble import DecoderSpec
from .errors import DimensionMismatch, EmptyPreimage, NotAPmf

PMF_TOL = 1e-10
NEG_TOL = 1e-12


def _as_blocks(blocks) -> np.ndarray:
    arr = np.array(blocks, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatch("blocks must be a 2-d array (n, 2^b)")
    size = arr.shape[1]
    if size & (size - 1) or size == 0:
        raise DimensionMismatch(f"block length {size} is not a power of two")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class BlockMarginalVector:
    blocks: np.ndarray
    clipped: bool = False

    def __post_init__(self):
        arr = _as_blocks(self.blocks)
        if arr.size and arr.min() < -NEG_TOL:
            raise NotAPmf(f"negative block entry {arr.min():.3g}")
        dev = np.abs(arr.sum(axis=1) - 1)
        if dev.size and dev.max() > PMF_TOL:
            raise NotAPmf(f"block sums deviate from 1 by {dev.max():.3g}")
        object.__setattr__(self, "blocks", arr)

    @property
    def n(self) -> int:
        return self.blocks.shape[0]

    @property
    def b(self) -> int:
        return self.blocks.shape[1].bit_length() - 1

    def __sub__(self, other):
        if isinstance(other, BlockMarginalVector):
            return PerturbationVector(self.blocks - other.blocks, check=False)
        if isinstance(other, PerturbationVector):
            return BlockMarginalVector(self.blocks - other.blocks)
        return NotImplemented

    def __add__(self, other):
        if isinstance(other, PerturbationVector):
            return BlockMarginalVector(self.blocks + other.blocks)
        return NotImplemented

    def mix(self, other: "BlockMarginalVector", weight: float) -> "BlockMarginalVector":
        """``weight * self + (1 - weight) * other``."""
        return BlockMarginalVector(weight * self.blocks + (1 - weight) * other.blocks)

    def clip(self) -> "BlockMarginalVector":
        arr = np.clip(self.blocks, 0, None)
        return BlockMarginalVector(arr / arr.sum(axis=1, keepdims=True), clipped=True)

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "b": self.b, "blocks": self.blocks.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "BlockMarginalVector":
        data = json.loads(text)
        vec = cls(np.array(data["blocks"], dtype=np.float64))
        if vec.n != data["n"] or vec.b != data["b"]:
            raise DimensionMismatch("header does not match the block array")
        return vec


@dataclass(frozen=True, eq=False)
class PerturbationVector:
    blocks: np.ndarray
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        arr = _as_blocks(self.blocks)
        if self.check:
            dev = np.abs(arr.sum(axis=1))
            if dev.size and dev.max() > PMF_TOL:
                raise DimensionMismatch(f"perturbation blocks sum to {dev.max():.3g}, not 0")
        object.__setattr__(self, "blocks", arr)

    @property
    def n(self) -> int:
        return self.blocks.shape[0]

    @property
    def b(self) -> int:
        return self.blocks.shape[1].bit_length() - 1

    def __mul__(self, scalar):
        return PerturbationVector(self.blocks * float(scalar), check=self.check)

    __rmul__ = __mul__

    def __add__(self, other):
        if isinstance(other, PerturbationVector):
            return PerturbationVector(self.blocks + other.blocks, check=self.check)
        return NotImplemented

    def __neg__(self):
        return PerturbationVector(-self.blocks, check=self.check)


def _check_dims(spec: DecoderSpec, blocks: np.ndarray) -> None:
    if blocks.shape != (spec.n, 2**spec.b):
        raise DimensionMismatch(f"vector has shape {blocks.shape}, decoder needs "
                                f"{(spec.n, 2**spec.b)}")


def block_marginal(block: np.ndarray, b: int, axes) -> np.ndarray:
    """Marginal of one block onto local axes ``axes`` (sorted)."""
    keep = tuple(sorted(axes))
    drop = tuple(a for a in range(b) if a not in keep)
    return np.asarray(block).reshape((2,) * b).sum(axis=drop).reshape(-1)


# --------------------------------------------------------------------------
# constructing vectors
# --------------------------------------------------------------------------

def phi_of_codeword(spec: DecoderSpec, c) -> BlockMarginalVector:
    code = bits.bits_to_int(bits.as_bits(c, spec.length))
    blocks = np.zeros((spec.n, 2**spec.b))
    for i in range(spec.n):
        blocks[i, spec.window_ranks(i, np.array([code]))[0]] = 1.0
    return BlockMarginalVector(blocks)


def _pmf_arrays(spec: DecoderSpec, P):
    """Normalize a pmf given as a dict or dense array to (codes, probs)."""
    if isinstance(P, dict):
        codes, probs = [], []
        for key, val in P.items():
            code = int(key) if isinstance(key, (int, np.integer)) else \
                bits.bits_to_int(bits.as_bits(key, spec.length))
            codes.append(code)
            probs.append(float(val))
        codes = np.array(codes, dtype=np.int64)
        probs = np.array(probs, dtype=np.float64)
    else:
        probs = np.asarray(P, dtype=np.float64)
        if probs.shape != (2**spec.length,):
            raise NotAPmf(f"dense pmf must have 2^{spec.length} entries")
        codes = np.arange(probs.size, dtype=np.int64)
    if probs.size and probs.min() < 0:
        raise NotAPmf("pmf has negative entries")
    if abs(probs.sum() - 1) > PMF_TOL:
        raise NotAPmf(f"pmf sums to {probs.sum()!r}")
    return codes, probs


def phi_of_distribution(spec: DecoderSpec, P) -> BlockMarginalVector:
    """Block marginals of a codeword pmf (dict ``{codeword: prob}`` or dense)."""
    codes, probs = _pmf_arrays(spec, P)
    blocks = np.empty((spec.n, 2**spec.b))
    for i in range(spec.n):
        blocks[i] = np.bincount(spec.window_ranks(i, codes), weights=probs,
                                minlength=2**spec.b)
    return BlockMarginalVector(blocks)


@dataclass(frozen=True)
class ReferenceVectors:
    phi_I: BlockMarginalVector
    phi_U: BlockMarginalVector
    phi_A: BlockMarginalVector


def uniform_vector(spec: DecoderSpec) -> BlockMarginalVector:
    return BlockMarginalVector(np.full((spec.n, 2**spec.b), 2.0**-spec.b))


def ideal_vector(spec: DecoderSpec, x) -> BlockMarginalVector:
    x = bits.as_bits(x, spec.n)
    blocks = np.zeros((spec.n, 2**spec.b))
    for i in range(spec.n):
        pre = spec.preimage(i, int(x[i]))
        if pre.size == 0:
            raise EmptyPreimage(f"f_{i}^(-1)({x[i]}) is empty")
        blocks[i, pre] = 1.0 / pre.size
    return BlockMarginalVector(blocks)


def reference_vectors(spec: DecoderSpec, x) -> ReferenceVectors:
    phi_I = ideal_vector(spec, x)
    phi_U = uniform_vector(spec)
    n = spec.n
    return ReferenceVectors(phi_I, phi_U, phi_I.mix(phi_U, n / (n + 1)))


# --------------------------------------------------------------------------
# consistency
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    i: int
    j: int
    indices: tuple
    magnitude: float


@dataclass
class ConsistencyReport:
    bit_consistent: bool
    bitpair_consistent: bool
    marginally_consistent: bool
    violations: list
    bit_marginals: dict
    bitpair_marginals: dict
    e1_max: float
    e2_max: float
    eb_min: float


def _local_axes(index_set: np.ndarray, shared) -> tuple:
    where = {int(v): k for k, v in enumerate(index_set)}
    return tuple(where[int(s)] for s in shared)


def shared_pairs(spec: DecoderSpec):
    """Yield ``(i, j, shared_indices)`` for every overlapping pair ``i < j``."""
    sets = [set(map(int, row)) for row in spec.index_sets]
    for i, j in itertools.combinations(range(spec.n), 2):
        shared = sets[i] & sets[j]
        if shared:
            yield i, j, tuple(sorted(shared))


def _consistency(spec: DecoderSpec, blocks: np.ndarray, tol: float = PMF_TOL):
    """Bit / bit-pair / full-overlap discrepancies of an arbitrary block array."""
    b = spec.b
    bit_v, pair_v, full_v = [], [], []
    for i, j, shared in shared_pairs(spec):
        ai = _local_axes(spec.index_sets[i], shared)
        aj = _local_axes(spec.index_sets[j], shared)
        for s, (ki, kj) in enumerate(zip(ai, aj)):
            d = np.abs(block_marginal(blocks[i], b, (ki,))
                       - block_marginal(blocks[j], b, (kj,))).max()
            if d > tol:
                bit_v.append(Violation(i, j, (shared[s],), float(d)))
        for s, t in itertools.combinations(range(len(shared)), 2):
            d = np.abs(block_marginal(blocks[i], b, (ai[s], ai[t]))
                       - block_marginal(blocks[j], b, (aj[s], aj[t]))).max()
            if d > tol:
                pair_v.append(Violation(i, j, (shared[s], shared[t]), float(d)))
        if len(shared) > 2:
            d = np.abs(block_marginal(blocks[i], b, ai)
                       - block_marginal(blocks[j], b, aj)).max()
            if d > tol:
                full_v.append(Violation(i, j, shared, float(d)))
    return bit_v, pair_v, full_v


def consistency_report(spec: DecoderSpec, phi: BlockMarginalVector) -> ConsistencyReport:
    _check_dims(spec, phi.blocks)
    b = spec.b
    bit_v, pair_v, full_v = _consistency(spec, phi.blocks)
    bit_marg, pair_marg = {}, {}
    for i, row in enumerate(spec.index_sets):
        for k, l in enumerate(row):
            bit_marg.setdefault(int(l), block_marginal(phi.blocks[i], b, (k,)))
        for k1, k2 in itertools.combinations(range(b), 2):
            key = (int(row[k1]), int(row[k2]))
            if key not in pair_marg:
                pair_marg[key] = block_marginal(phi.blocks[i], b, (k1, k2))
    e1 = max((np.abs(v - 0.5).max() for v in bit_marg.values()), default=0.0)
    e2 = max((np.abs(v - 0.25).max() for v in pair_marg.values()), default=0.0)
    return ConsistencyReport(
        bit_consistent=not bit_v,
        bitpair_consistent=not pair_v,
        marginally_consistent=not (bit_v or pair_v or full_v),
        violations=bit_v + pair_v + full_v,
        bit_marginals=bit_marg,
        bitpair_marginals=pair_marg,
        e1_max=float(e1), e2_max=float(e2), eb_min=float(phi.blocks.min()))


# --------------------------------------------------------------------------
# eligible perturbations
# --------------------------------------------------------------------------

@dataclass
class EligibilityResult:
    eligible: bool
    violations: list
    margins: dict


def check_eligibility(spec: DecoderSpec, x, eta: PerturbationVector,
                      decomposition: tuple | None = None) -> EligibilityResult:
    """Test ``eta`` against the eligible-perturbation conditions.

    Conditions: ``zero-sum`` blocks; ``pair-bound`` (bit-pair marginals on
    every shared pair at most ``n^-4`` in magnitude); ``entry-bound``
    (``eta_i(w) <= 1 / (n^2 |f_i^-1(x_i)|)``); ``consistency`` (of the
    decomposition ``(phi, phi_prime)`` when given, else of ``eta`` itself).
    Margins are ``bound - value``; negative means violated.
    """
    _check_dims(spec, eta.blocks)
    x = bits.as_bits(x, spec.n)
    n, b = spec.n, spec.b
    violations = []
    margins = {}

    sums = np.abs(eta.blocks.sum(axis=1))
    margins["zero-sum"] = float(PMF_TOL - sums.max())
    for i in np.flatnonzero(sums > PMF_TOL):
        violations.append(("zero-sum", int(i), None, float(sums[i]), 0.0))

    bound = float(n) ** -4
    worst = 0.0
    for i, j, shared in shared_pairs(spec):
        if len(shared) < 2:
            continue
        for blk in (i, j):
            axes = _local_axes(spec.index_sets[blk], shared)
            for s, t in itertools.combinations(range(len(shared)), 2):
                val = float(np.abs(block_marginal(eta.blocks[blk], b,
                                                  (axes[s], axes[t]))).max())
                worst = max(worst, val)
                if val > bound + NEG_TOL:
                    violations.append(("pair-bound", blk, (shared[s], shared[t]),
                                       val, bound))
    margins["pair-bound"] = bound - worst

    entry_margin = np.inf
    for i in range(n):
        cap = 1.0 / (n * n * spec.preimage_size(i, int(x[i])))
        k = int(np.argmax(eta.blocks[i]))
        val = float(eta.blocks[i, k])
        entry_margin = min(entry_margin, cap - val)
        if val > cap + NEG_TOL:
            violations.append(("entry-bound", i, k, val, cap))
    margins["entry-bound"] = float(entry_margin)

    if decomposition is not None:
        phi, phi_prime = decomposition
        gap = float(np.abs(phi.blocks - phi_prime.blocks - eta.blocks).max())
        if gap > PMF_TOL:
            violations.append(("consistency", None, "decomposition", gap, 0.0))
        for name, vec in (("phi", phi), ("phi_prime", phi_prime)):
            rep = consistency_report(spec, vec)
            if not (rep.bit_consistent and rep.bitpair_consistent):
                violations.append(("consistency", None, name,
                                   max(v.magnitude for v in rep.violations), 0.0))
        margins["consistency"] = -gap
    else:
        bit_v, pair_v, _ = _consistency(spec, eta.blocks)
        worst = max((v.magnitude for v in bit_v + pair_v), default=0.0)
        margins["consistency"] = -worst
        for v in bit_v + pair_v:
            violations.append(("consistency", v.i, v.indices, v.magnitude, 0.0))

    return EligibilityResult(not violations, violations, margins)
