"""Decoder ensemble: parameters, syndrome maps, random graphs and local functions.

A decoder is a bipartite graph (one index set ``I_i`` of ``b`` codeword
positions per source bit) together with local functions
``f_i = table_i o g`` where ``g(w) = H w`` is a GF(2) syndrome map shared by
every right vertex and ``table_i`` is a random 0/1 table over syndromes.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np

from . import bits
from .errors import (DimensionMismatch, InfeasibleBias, NoAdmissibleWindow,
                     RankDeficient, RowSpaceWeightViolation, SyndromeError)

SPEC_VERSION = 1
_ENUMERATION_ROWS = 20


@dataclass(frozen=True)
class CodeParams:
    n: int
    p: float
    epsilon: float
    R: float
    p_eps: float
    eps_prime: float
    b: int
    b_prime: int
    length: int
    seed: int = 0
    override: bool = False
    identity: bool = False
    b_rule: float = math.inf

    def to_dict(self) -> dict:
        out = asdict(self)
        if math.isinf(out["b_rule"]):
            out["b_rule"] = None
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "CodeParams":
        data = dict(data)
        if data.get("b_rule") is None:
            data["b_rule"] = math.inf
        return cls(**data)


def ones_count(p: float, b_prime: int) -> int:
    """Number of syndromes mapped to 1: ``ceil(p 2^b')``."""
    return math.ceil(p * 2**b_prime - 1e-9)


def _default_b_prime(b: int) -> int:
    m = b.bit_length() - 1
    if b >= 8 and b == 1 << m:
        return b - m - 1
    raise NoAdmissibleWindow(
        f"no default syndrome length for b={b}; pass b_prime explicitly")


def derive_parameters(n: int, p: float, epsilon: float,
                      overrides: dict | None = None, seed: int = 0) -> CodeParams:
    """Rates and window sizes for a length-``n`` Bernoulli(``p``) source.

    ``overrides`` may carry ``b``, ``b_prime`` and ``length`` (codeword
    length); any override sets the ``override`` flag.
    """
    if n < 1:
        raise InfeasibleBias(f"n must be positive, got {n}")
    if not 0 < p <= 0.5:
        raise InfeasibleBias(f"p must lie in (0, 1/2], got {p}")
    if epsilon < 0 or p + epsilon > 0.5 + 1e-15:
        raise InfeasibleBias(f"p + epsilon = {p + epsilon} exceeds 1/2")
    overrides = dict(overrides or {})
    unknown = set(overrides) - {"b", "b_prime", "length"}
    if unknown:
        raise InfeasibleBias(f"unknown overrides {sorted(unknown)}")

    R = bits.binary_entropy(min(p + epsilon, 0.5))
    p_eps = p + epsilon / 2
    gap = max(R - bits.binary_entropy(p_eps), 0.0) / 2
    eps_prime = bits.inverse_binary_entropy(gap)
    identity = p == 0.5
    length = int(overrides.get("length", math.ceil(n * R - 1e-12)))
    b_rule = 100 * math.log2(n) / eps_prime if eps_prime > 0 else math.inf

    if "b" in overrides or "b_prime" in overrides:
        if "b" not in overrides:
            raise NoAdmissibleWindow("b_prime override needs b as well")
        b = int(overrides["b"])
        b_prime = int(overrides.get("b_prime", 0)) or _default_b_prime(b)
    elif identity:
        b, b_prime = 1, 1
    else:
        if math.isinf(b_rule):
            raise NoAdmissibleWindow("epsilon = 0 leaves no rate slack for a window")
        b = 8
        while b < b_rule:
            b *= 2
        b_prime = _default_b_prime(b)

    if not b >= b_prime >= 1:
        raise NoAdmissibleWindow(f"need b >= b_prime >= 1, got b={b}, b_prime={b_prime}")
    if length < b:
        raise NoAdmissibleWindow(
            f"codeword length {length} is shorter than the window b={b}")
    return CodeParams(n=n, p=p, epsilon=epsilon, R=R, p_eps=p_eps,
                      eps_prime=eps_prime, b=b, b_prime=b_prime, length=length,
                      seed=int(seed), override=bool(overrides), identity=identity,
                      b_rule=b_rule)


# --------------------------------------------------------------------------
# syndrome maps
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SyndromeMap:
    H: np.ndarray

    def __post_init__(self):
        H = np.array(self.H, dtype=np.uint8) % 2
        if H.ndim != 2 or H.shape[0] == 0:
            raise SyndromeError("H must be a non-empty 2-d binary matrix")
        H.setflags(write=False)
        object.__setattr__(self, "H", H)

    @property
    def b(self) -> int:
        return self.H.shape[1]

    @property
    def b_prime(self) -> int:
        return self.H.shape[0]

    @cached_property
    def lut(self) -> np.ndarray:
        """Syndrome rank for every window rank."""
        windows = bits.unpack_codes(np.arange(2**self.b), self.b)
        syn = (windows.astype(np.int64) @ self.H.T.astype(np.int64)) % 2
        out = bits.pack_rows(syn)
        out.setflags(write=False)
        return out

    def apply(self, window) -> np.ndarray:
        w = bits.as_bits(window, self.b)
        return ((self.H.astype(np.int64) @ w) % 2).astype(np.uint8)

    def rows_as_strings(self) -> list[str]:
        return [bits.bits_to_str(r) for r in self.H]


def row_space_min_weight(H: np.ndarray) -> tuple[int, np.ndarray]:
    """Minimum weight of a nonzero row combination, with a witness.

    Exhaustive over all ``2^b'`` combinations; only for ``b' <= 20``.
    """
    H = np.asarray(H, dtype=np.int64) % 2
    rows = H.shape[0]
    coeffs = bits.unpack_codes(np.arange(1, 2**rows), rows).astype(np.int64)
    words = (coeffs @ H) % 2
    weights = words.sum(axis=1)
    k = int(np.argmin(weights))
    return int(weights[k]), words[k].astype(np.uint8)


def _light_word_in_row_space(H: np.ndarray):
    """First weight-1 or weight-2 vector lying in the row space, else None."""
    b = H.shape[1]
    base = bits.gf2_rank(H)
    for i in range(b):
        for j in range(i, b):
            e = np.zeros(b, dtype=np.uint8)
            e[i] = 1
            e[j] = 1
            if bits.gf2_rank(np.vstack([H, e])) == base:
                return e
    return None


def validate_syndrome(H: np.ndarray) -> None:
    """Full row rank and row-space minimum weight >= 3, or raise."""
    H = np.asarray(H, dtype=np.uint8) % 2
    if bits.gf2_rank(H) < H.shape[0]:
        raise RankDeficient(f"H ({H.shape[0]}x{H.shape[1]}) is not of full row rank")
    if H.shape[0] <= _ENUMERATION_ROWS:
        weight, witness = row_space_min_weight(H)
        if weight <= 2:
            raise RowSpaceWeightViolation(
                f"row combination {bits.bits_to_str(witness)} has weight {weight}",
                witness=witness)
    else:
        witness = _light_word_in_row_space(H)
        if witness is not None:
            raise RowSpaceWeightViolation(
                f"row space contains {bits.bits_to_str(witness)}", witness=witness)


def extended_hamming_rows(m: int) -> np.ndarray:
    """Basis of the length-2^m extended Hamming code (the dual of RM(1, m))."""
    b = 2**m
    rm1 = [np.ones(b, dtype=np.uint8)]
    cols = np.arange(b)
    for j in range(m):
        rm1.append(((cols >> j) & 1).astype(np.uint8))
    return bits.gf2_nullspace(np.array(rm1))


def build_syndrome_map(b: int | None = None, custom_H=None,
                       b_prime: int | None = None) -> SyndromeMap:
    """Validated syndrome map.

    With ``custom_H`` the given matrix is checked and used. Otherwise ``b``
    must be ``2^m`` (``m >= 3``) and the rows of H span the extended Hamming
    code, giving ``b' = 2^m - m - 1``; ``b_prime = 1`` selects the single
    all-ones parity row instead (any ``b >= 3``).
    """
    if custom_H is not None:
        H = np.array([bits.as_bits(r) for r in custom_H]) if isinstance(
            custom_H, (list, tuple)) and custom_H and isinstance(custom_H[0], str) \
            else np.asarray(custom_H, dtype=np.uint8)
        validate_syndrome(H)
        return SyndromeMap(H)
    if b is None:
        raise SyndromeError("need either b or custom_H")
    if b_prime == 1:
        H = np.ones((1, b), dtype=np.uint8)
    else:
        m = b.bit_length() - 1
        if b != 1 << m or m < 3:
            raise SyndromeError(f"default syndrome needs b = 2^m with m >= 3, got {b}")
        if b_prime is not None and b_prime != b - m - 1:
            raise SyndromeError(f"default syndrome for b={b} has b'={b - m - 1}")
        H = extended_hamming_rows(m)
    validate_syndrome(H)
    return SyndromeMap(H)


# --------------------------------------------------------------------------
# decoders
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DecoderSpec:
    params: CodeParams
    index_sets: np.ndarray
    syndrome: SyndromeMap
    local_tables: np.ndarray
    check_tables: bool = field(default=True, repr=False)

    def __post_init__(self):
        index_sets = np.sort(np.asarray(self.index_sets, dtype=np.int64), axis=1)
        tables = np.asarray(self.local_tables, dtype=np.uint8)
        index_sets.setflags(write=False)
        tables.setflags(write=False)
        object.__setattr__(self, "index_sets", index_sets)
        object.__setattr__(self, "local_tables", tables)
        self.validate()

    def validate(self) -> None:
        n, b = self.params.n, self.params.b
        if self.index_sets.shape != (n, b):
            raise DimensionMismatch(f"index sets have shape {self.index_sets.shape}, "
                                    f"expected {(n, b)}")
        if self.syndrome.b != b or self.syndrome.b_prime != self.params.b_prime:
            raise DimensionMismatch("syndrome map does not match (b, b_prime)")
        if self.local_tables.shape != (n, 2**self.params.b_prime):
            raise DimensionMismatch("local tables have the wrong shape")
        if b > 1 and np.any(np.diff(self.index_sets, axis=1) == 0):
            raise DimensionMismatch("index sets must have distinct entries")
        if self.index_sets.min() < 0 or self.index_sets.max() >= self.params.length:
            raise DimensionMismatch("index set entry out of range")
        if self.check_tables:
            want = ones_count(self.params.p, self.params.b_prime)
            counts = self.local_tables.sum(axis=1)
            if np.any(counts != want):
                raise DimensionMismatch(f"local tables must have {want} ones each")

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def length(self) -> int:
        return self.params.length

    @property
    def b(self) -> int:
        return self.params.b

    @cached_property
    def decision_lut(self) -> np.ndarray:
        """``decision_lut[i, r]`` is ``f_i`` evaluated on the window of rank ``r``."""
        out = self.local_tables[:, self.syndrome.lut]
        out.setflags(write=False)
        return out

    def preimage(self, i: int, bit: int) -> np.ndarray:
        """Window ranks in ``f_i^{-1}(bit)``."""
        return np.flatnonzero(self.decision_lut[i] == bit)

    def preimage_size(self, i: int, bit: int) -> int:
        return int(np.count_nonzero(self.decision_lut[i] == bit))

    def window_ranks(self, i: int, codes) -> np.ndarray:
        return bits.window_ranks(codes, self.index_sets[i], self.length)

    def to_json(self) -> str:
        return json.dumps({
            "version": SPEC_VERSION,
            "params": self.params.to_dict(),
            "index_sets": self.index_sets.tolist(),
            "H": self.syndrome.rows_as_strings(),
            "local_tables": [bits.bits_to_str(t) for t in self.local_tables],
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DecoderSpec":
        data = json.loads(text)
        if data.get("version") != SPEC_VERSION:
            raise DimensionMismatch(f"unsupported decoder version {data.get('version')}")
        params = CodeParams.from_dict(data["params"])
        H = np.array([bits.as_bits(r) for r in data["H"]])
        tables = np.array([bits.as_bits(t) for t in data["local_tables"]])
        return cls(params, np.array(data["index_sets"]), SyndromeMap(H), tables,
                   check_tables=not params.identity)


def partial_fisher_yates(rng: np.random.Generator, pool: int, k: int,
                         rows: int) -> np.ndarray:
    """``rows`` independent uniform ``k``-subsets of ``range(pool)``, sorted."""
    perm = np.tile(np.arange(pool, dtype=np.int64), (rows, 1))
    ridx = np.arange(rows)
    for t in range(k):
        j = rng.integers(t, pool, size=rows)
        tmp = perm[ridx, t].copy()
        perm[ridx, t] = perm[ridx, j]
        perm[ridx, j] = tmp
    return np.sort(perm[:, :k], axis=1)


def sample_decoder(params: CodeParams, syndrome: SyndromeMap | None = None,
                   index_sets=None) -> DecoderSpec:
    """Draw ``(G, f)`` from the ensemble; deterministic in ``params.seed``.

    ``index_sets`` pins the graph (only the local tables are drawn).
    """
    if params.length < params.b:
        raise NoAdmissibleWindow("codeword shorter than the window")
    if syndrome is None:
        syndrome = build_syndrome_map(params.b, b_prime=params.b_prime)
    rng = np.random.default_rng(params.seed)
    if index_sets is None:
        index_sets = partial_fisher_yates(rng, params.length, params.b, params.n)
    ones = partial_fisher_yates(rng, 2**params.b_prime,
                                ones_count(params.p, params.b_prime), params.n)
    tables = np.zeros((params.n, 2**params.b_prime), dtype=np.uint8)
    np.put_along_axis(tables, ones, 1, axis=1)
    return DecoderSpec(params, np.asarray(index_sets), syndrome, tables)


def identity_decoder(n: int) -> DecoderSpec:
    """The rate-1 scheme ``C = X``: ``I_i = {i}`` and ``f_i`` the identity."""
    params = derive_parameters(n, 0.5, 0.0)
    return DecoderSpec(params, np.arange(n).reshape(n, 1),
                       SyndromeMap(np.ones((1, 1), dtype=np.uint8)),
                       np.tile(np.array([0, 1], dtype=np.uint8), (n, 1)),
                       check_tables=False)


def local_decode(spec: DecoderSpec, i: int, c) -> int:
    codes = bits.bits_to_int(bits.as_bits(c, spec.length))
    return int(spec.decision_lut[i, spec.window_ranks(i, np.array([codes]))[0]])


def decode_codes(spec: DecoderSpec, codes) -> np.ndarray:
    """Decoded source bits ``(len(codes), n)`` for integer codewords."""
    codes = np.asarray(codes, dtype=np.int64)
    out = np.empty((codes.size, spec.n), dtype=np.uint8)
    for i in range(spec.n):
        out[:, i] = spec.decision_lut[i, spec.window_ranks(i, codes)]
    return out


def global_decode(spec: DecoderSpec, c) -> np.ndarray:
    code = bits.bits_to_int(bits.as_bits(c, spec.length))
    return decode_codes(spec, [code])[0]


# --------------------------------------------------------------------------
# overlaps
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class OverlapProfile:
    max_overlap: int
    pair_histogram: dict


def _incidence(index_sets: np.ndarray, length: int) -> np.ndarray:
    index_sets = np.asarray(index_sets)
    lead = index_sets.shape[:-1]
    inc = np.zeros(lead + (length,), dtype=np.float32)
    np.put_along_axis(inc, index_sets, 1.0, axis=-1)
    return inc


def overlap_profile(spec: DecoderSpec) -> OverlapProfile:
    if spec.n < 2:
        raise DimensionMismatch("overlap profile needs at least two index sets")
    inc = _incidence(spec.index_sets, spec.length)
    ov = np.rint(inc @ inc.T).astype(np.int64)
    iu = np.triu_indices(spec.n, k=1)
    sizes = ov[iu]
    values, counts = np.unique(sizes, return_counts=True)
    return OverlapProfile(int(sizes.max()),
                          {int(v): int(c) for v, c in zip(values, counts)})


def pair_overlap_tail(length: int, b: int, k: int) -> Fraction:
    """Exact ``Pr[|I_i & I_j| >= k]`` for two independent uniform b-subsets."""
    total = math.comb(length, b)
    hits = sum(math.comb(b, l) * math.comb(length - b, b - l) for l in range(k, b + 1))
    return Fraction(hits, total)


def overlap_union_bound(n: int, length: int, b: int, k: int = 3) -> float:
    """Union bound ``C(n, 2) Pr[|I_i & I_j| >= k]`` on any pair reaching ``k``."""
    return float(math.comb(n, 2) * pair_overlap_tail(length, b, k))


def overlap_exceedance_frequency(n: int, length: int, b: int, draws: int,
                                 seed: int = 0, k: int = 3,
                                 chunk: int = 2000) -> float:
    """Fraction of sampled graphs whose largest pairwise overlap is ``>= k``."""
    rng = np.random.default_rng(seed)
    hits = 0
    iu = np.triu_indices(n, k=1)
    done = 0
    while done < draws:
        batch = min(chunk, draws - done)
        sets = partial_fisher_yates(rng, length, b, batch * n).reshape(batch, n, b)
        inc = _incidence(sets, length)
        ov = inc @ np.swapaxes(inc, 1, 2)
        worst = ov[:, iu[0], iu[1]].max(axis=1)
        hits += int(np.count_nonzero(worst >= k - 0.5))
        done += batch
    return hits / draws
