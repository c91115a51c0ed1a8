"""Private encoder: valid codewords, expurgation and the two-branch plan.

For a source string ``x`` the encoder mixes two distributions: with weight
``n/(n+1)`` a uniform draw from the expurgated valid codewords (these decode
to ``x`` exactly) and with weight ``1/(n+1)`` a draw from a matched
distribution whose block marginals are ``phi_U - n eta``, where ``eta`` is
the deviation of the valid branch from the ideal marginals. The mixture's
block marginals are ``(n phi_I + phi_U) / (n+1)`` whatever ``eta`` is, and
these depend on ``x`` only through ``x_i`` in block ``i``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from . import bits
from .ensemble import DecoderSpec, decode_codes, ones_count
from .errors import InstanceTooLarge, PrivcodeError
from .marginals import (BlockMarginalVector, PerturbationVector, check_eligibility,
                        ideal_vector, uniform_vector)
from .matcher import AdditiveDistribution, MatchReport, match_marginals

ENUMERATION_MAX_LENGTH = 26
_CHUNK = 1 << 20

FALLBACK_WEIGHT = "weight-outside-ball"
FALLBACK_MATCHER = "matcher-failed"
FALLBACK_EMPTY = "empty-expurgated"


# --------------------------------------------------------------------------
# valid codewords and expurgation
# --------------------------------------------------------------------------

def _cylinder_counts(spec: DecoderSpec, codes: np.ndarray) -> np.ndarray:
    out = np.zeros((spec.n, 2**spec.b), dtype=np.int64)
    for i in range(spec.n):
        out[i] = np.bincount(spec.window_ranks(i, codes), minlength=2**spec.b)
    return out


@dataclass
class ValidCodewordIndex:
    x: np.ndarray
    codewords: np.ndarray
    cylinder_counts: np.ndarray
    expurgated: np.ndarray
    expurgated_counts: np.ndarray
    bad_cylinders: list = field(default_factory=list)

    @property
    def count(self) -> int:
        return int(self.codewords.size)

    @property
    def expurgated_count(self) -> int:
        return int(self.expurgated.size)

    def valid_marginals(self, denominator: str = "expurgated") -> np.ndarray:
        """Block marginals of the surviving codewords.

        ``denominator="expurgated"`` gives the law of a uniform draw from the
        expurgated set; ``"all"`` divides by the number of valid codewords
        instead, so blocks sum to the surviving fraction.
        """
        total = self.expurgated_count if denominator == "expurgated" else self.count
        if total == 0:
            return np.zeros(self.expurgated_counts.shape)
        return self.expurgated_counts / total

    def codebook_json(self, length: int) -> str:
        b = self.cylinder_counts.shape[1].bit_length() - 1
        return json.dumps({
            "x": bits.bits_to_str(self.x),
            "count": self.count,
            "expurgated_count": self.expurgated_count,
            "bad_cylinders": [[i, bits.bits_to_str(bits.int_to_bits(r, b))]
                              for i, r in self.bad_cylinders],
            "codewords": [bits.int_to_hex(int(c), length) for c in self.expurgated],
        }, sort_keys=True)


def enumerate_valid(spec: DecoderSpec, x) -> ValidCodewordIndex:
    """All codewords that decode to ``x`` (exhaustive scan, ``length <= 26``)."""
    if spec.length > ENUMERATION_MAX_LENGTH:
        raise InstanceTooLarge(f"enumeration needs length <= {ENUMERATION_MAX_LENGTH}, "
                               f"got {spec.length}")
    x = bits.as_bits(x, spec.n)
    total = 2**spec.length
    found = []
    for start in range(0, total, _CHUNK):
        codes = np.arange(start, min(total, start + _CHUNK), dtype=np.int64)
        keep = np.ones(codes.size, dtype=bool)
        for i in range(spec.n):
            keep &= spec.decision_lut[i, spec.window_ranks(i, codes)] == x[i]
        found.append(codes[keep])
    codewords = np.concatenate(found)
    counts = _cylinder_counts(spec, codewords)
    return ValidCodewordIndex(x, codewords, counts, codewords.copy(), counts.copy())


def bad_cylinder_mask(spec: DecoderSpec, index: ValidCodewordIndex) -> np.ndarray:
    """``(n, 2^b)`` mask of over-heavy cylinders.

    Cylinder ``(i, w)`` is bad when its share of the valid codewords exceeds
    ``1/|f_i^-1(x_i)| + 1/(n 2^b)``; compared in integer arithmetic.
    """
    n, size = spec.n, 2**spec.b
    total = index.count
    mask = np.zeros((n, size), dtype=bool)
    for i in range(n):
        pre = spec.preimage_size(i, int(index.x[i]))
        # count/total > 1/pre + 1/(n size)  <=>  count*pre*n*size > total*(n*size + pre)
        mask[i] = index.cylinder_counts[i] * pre * n * size > total * (n * size + pre)
    return mask


def expurgate(index: ValidCodewordIndex, spec: DecoderSpec) -> ValidCodewordIndex:
    """Remove every valid codeword that lies in a bad cylinder."""
    if index.count == 0:
        return index
    mask = bad_cylinder_mask(spec, index)
    keep = np.ones(index.count, dtype=bool)
    for i in range(spec.n):
        if mask[i].any():
            keep &= ~mask[i][spec.window_ranks(i, index.codewords)]
    survivors = index.codewords[keep]
    bad = [(int(i), int(r)) for i, r in zip(*np.nonzero(mask))]
    return ValidCodewordIndex(index.x, index.codewords, index.cylinder_counts,
                              survivors, _cylinder_counts(spec, survivors), bad)


def expected_valid_count(length: int, n: int, weight: int, p: float, b_prime: int) -> float:
    """Ensemble mean of ``|C(x)|``: ``2^length q1^w q0^(n-w)``."""
    q1 = ones_count(p, b_prime) / 2**b_prime
    return 2.0**length * q1**weight * (1 - q1) ** (n - weight)


# --------------------------------------------------------------------------
# encoding plans
# --------------------------------------------------------------------------

@dataclass
class EncodingPlan:
    """Mixture ``w * Uniform(expurgated) + (1 - w) * matched``.

    ``matched`` is None for a uniform second component; a fallback plan has
    ``weight_valid = 0`` and records its ``fallback`` reason.
    """
    spec: DecoderSpec
    x: np.ndarray
    weight_valid: float
    expurgated: np.ndarray
    matched: AdditiveDistribution | None = None
    fallback: str | None = None
    detail: str = ""
    eta: PerturbationVector | None = None
    eta_all: np.ndarray | None = None
    match_report: MatchReport | None = None
    index: ValidCodewordIndex | None = None

    @property
    def uses_fallback(self) -> bool:
        return self.fallback is not None

    def _valid_block(self, i: int) -> np.ndarray:
        if self.expurgated.size == 0:
            return np.zeros(2**self.spec.b)
        ranks = self.spec.window_ranks(i, self.expurgated)
        return np.bincount(ranks, minlength=2**self.spec.b) / self.expurgated.size

    def _matched_block(self, i: int) -> np.ndarray:
        if self.matched is None:
            return np.full(2**self.spec.b, 2.0**-self.spec.b)
        return np.asarray(self.matched.marginalize(self.spec.index_sets[i]), dtype=np.float64)

    def block_marginal(self, i: int) -> np.ndarray:
        """Exact law of the window ``C_{I_i}`` under the plan."""
        w = self.weight_valid
        out = np.zeros(2**self.spec.b)
        if w > 0:
            out += w * self._valid_block(i)
        if w < 1:
            out += (1 - w) * self._matched_block(i)
        return out

    def block_marginals(self) -> np.ndarray:
        return np.array([self.block_marginal(i) for i in range(self.spec.n)])

    def probabilities(self, codes) -> np.ndarray:
        """Exact pointwise probabilities at integer codes."""
        codes = np.asarray(codes, dtype=np.int64)
        out = np.zeros(codes.shape)
        if self.weight_valid > 0:
            hit = np.isin(codes, self.expurgated)
            out += hit * (self.weight_valid / self.expurgated.size)
        if self.weight_valid < 1:
            rest = (self.matched.evaluate_codes(codes) if self.matched is not None
                    else np.full(codes.shape, 2.0**-self.spec.length))
            out += (1 - self.weight_valid) * rest
        return out

    def pmf(self) -> np.ndarray:
        if self.spec.length > ENUMERATION_MAX_LENGTH:
            raise InstanceTooLarge("dense pmf needs length <= 26")
        return self.probabilities(np.arange(2**self.spec.length, dtype=np.int64))

    def bit_error(self, i: int) -> float:
        """Exact ``Pr[decoded bit i != x_i]`` from the block-``i`` law."""
        wrong = self.spec.preimage(i, 1 - int(self.x[i]))
        return float(self.block_marginal(i)[wrong].sum())

    def bit_errors(self) -> np.ndarray:
        return np.array([self.bit_error(i) for i in range(self.spec.n)])

    def summary(self) -> dict:
        return {
            "x": bits.bits_to_str(self.x),
            "fallback": self.fallback,
            "detail": self.detail,
            "weight_valid": self.weight_valid,
            "valid_count": None if self.index is None else self.index.count,
            "expurgated_count": int(self.expurgated.size),
            "eta_max_abs": None if self.eta is None else float(np.abs(self.eta.blocks).max()),
            "eta_all_max_abs": None if self.eta_all is None
            else float(np.abs(self.eta_all).max()),
            "bit_errors": self.bit_errors().tolist(),
        }


def fallback_plan(spec: DecoderSpec, x, reason: str, detail: str = "",
                  index: ValidCodewordIndex | None = None, eta=None,
                  eta_all=None) -> EncodingPlan:
    """Uniform encoding over all codewords.

    ``eta`` records the rejected perturbation when there was one.
    """
    return EncodingPlan(spec, bits.as_bits(x, spec.n), 0.0, np.zeros(0, dtype=np.int64),
                        None, reason, detail, eta, eta_all, index=index)


def identity_plan(spec: DecoderSpec, x) -> EncodingPlan:
    """``C = x`` for the rate-1 identity decoder."""
    x = bits.as_bits(x, spec.n)
    return EncodingPlan(spec, x, 1.0, np.array([bits.bits_to_int(x)], dtype=np.int64))


def build_encoding_plan(spec: DecoderSpec, x, repair: bool = True) -> EncodingPlan:
    """The encoder's distribution for source ``x``.

    Falls back to uniform encoding when ``x`` is heavier than ``n p_eps``,
    when nothing survives expurgation, or when the perturbation is not
    eligible or cannot be matched.
    """
    x = bits.as_bits(x, spec.n)
    n = spec.n
    if spec.params.identity and spec.length == n and spec.b == 1:
        return identity_plan(spec, x)
    if int(x.sum()) > n * spec.params.p_eps + 1e-12:
        return fallback_plan(spec, x, FALLBACK_WEIGHT,
                             f"weight {int(x.sum())} > {n * spec.params.p_eps:g}")
    index = expurgate(enumerate_valid(spec, x), spec)
    if index.expurgated_count == 0:
        return fallback_plan(spec, x, FALLBACK_EMPTY,
                             f"{index.count} valid codewords, none survive", index)
    phi_I = ideal_vector(spec, x)
    phi_V = BlockMarginalVector(index.valid_marginals("expurgated"))
    eta = phi_V - phi_I
    eta_all = index.valid_marginals("all") - phi_I.blocks
    elig = check_eligibility(spec, x, eta, decomposition=(phi_V, phi_I))
    if not elig.eligible:
        kinds = sorted({v[0] for v in elig.violations})
        return fallback_plan(spec, x, FALLBACK_MATCHER,
                             "ineligible perturbation: " + ", ".join(kinds), index,
                             eta, eta_all)
    try:
        targets = BlockMarginalVector(uniform_vector(spec).blocks - n * eta.blocks)
        result = match_marginals(spec, targets, repair=repair)
    except PrivcodeError as exc:
        return fallback_plan(spec, x, FALLBACK_MATCHER, f"{exc.kind}: {exc}", index,
                             eta, eta_all)
    return EncodingPlan(spec, x, n / (n + 1), index.expurgated, result.dist, None, "",
                        eta, eta_all, result.report, index)


def encode(plan: EncodingPlan, seed=None, count: int | None = None):
    """Draw codewords (integer codes) from ``plan``.

    Returns one code when ``count`` is None, else an array of ``count``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    k = 1 if count is None else int(count)
    out = np.zeros(k, dtype=np.int64)
    if k:
        valid = rng.random(k) < plan.weight_valid
        nv = int(valid.sum())
        if nv:
            out[valid] = plan.expurgated[rng.integers(0, plan.expurgated.size, size=nv)]
        if nv < k:
            if plan.matched is not None:
                out[~valid] = plan.matched.sample(k - nv, rng)
            else:
                out[~valid] = rng.integers(0, 2**plan.spec.length, size=k - nv)
    return int(out[0]) if count is None else out


class PrivateCodec:
    """Encoder/decoder pair for one decoder; plans are cached per source."""

    def __init__(self, spec: DecoderSpec, plan_builder=build_encoding_plan):
        self.spec = spec
        self.plan_builder = plan_builder
        self._plans = {}

    @property
    def rate(self) -> float:
        return self.spec.length / self.spec.n

    def plan(self, x) -> EncodingPlan:
        key = bits.bits_to_str(bits.as_bits(x, self.spec.n))
        if key not in self._plans:
            self._plans[key] = self.plan_builder(self.spec, key)
        return self._plans[key]

    def encode(self, x, seed=None, count: int | None = None):
        return encode(self.plan(x), seed, count)

    def decode(self, codes) -> np.ndarray:
        return decode_codes(self.spec, np.atleast_1d(codes))


# --------------------------------------------------------------------------
# non-binary sources
# --------------------------------------------------------------------------

def plane_count(alphabet_size: int) -> int:
    return max(1, math.ceil(math.log2(alphabet_size)))


def to_bitplanes(symbols, alphabet_size: int) -> np.ndarray:
    """``(k, len)`` array whose row ``l`` holds bit ``l`` of every symbol."""
    symbols = np.asarray(symbols, dtype=np.int64)
    k = plane_count(alphabet_size)
    if symbols.size and (symbols.min() < 0 or symbols.max() >= 2**k):
        raise ValueError(f"symbols must lie in [0, {2**k})")
    return ((symbols[None, :] >> np.arange(k)[:, None]) & 1).astype(np.uint8)


def merge_bitplanes(planes) -> np.ndarray:
    planes = np.asarray(planes, dtype=np.int64)
    return (planes << np.arange(planes.shape[0])[:, None]).sum(axis=0)


# --------------------------------------------------------------------------
# residual correction
# --------------------------------------------------------------------------

class ResidualCoder(Protocol):
    rate: float
    private: bool

    def encode(self, z: np.ndarray, rng: np.random.Generator) -> np.ndarray: ...

    def decode(self, c: np.ndarray) -> np.ndarray: ...

    def random_codeword(self, n: int, rng: np.random.Generator) -> np.ndarray: ...


class IdentityResidualCoder:
    """Sends the residual verbatim: rate 1, private and exact."""
    rate = 1.0
    private = True

    def encode(self, z, rng=None):
        return np.asarray(z, dtype=np.uint8).copy()

    def decode(self, c):
        return np.asarray(c, dtype=np.uint8).copy()

    def random_codeword(self, n, rng):
        return rng.integers(0, 2, size=n).astype(np.uint8)


@dataclass
class ResidualComposition:
    stage1: PrivateCodec
    stage2: ResidualCoder
    delta: float

    @property
    def rate(self) -> float:
        return self.stage1.rate + self.stage2.rate


def compose_residual(comp: ResidualComposition, x, seed=None) -> dict:
    """Encode ``x`` in two stages and reconstruct it.

    The second stage carries ``z = x XOR decode(c1)`` when ``z`` has at most
    ``delta n`` ones and a uniformly random codeword otherwise.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    spec = comp.stage1.spec
    x = bits.as_bits(x, spec.n)
    c1 = comp.stage1.encode(x, rng)
    first = comp.stage1.decode(c1)[0]
    z = first ^ x
    sparse = int(z.sum()) <= comp.delta * spec.n
    c2 = comp.stage2.encode(z, rng) if sparse else comp.stage2.random_codeword(spec.n, rng)
    x_hat = first ^ comp.stage2.decode(c2)
    return {"c1": c1, "c2": c2, "z": z, "sparse": sparse, "x_hat": x_hat,
            "correct": bool(np.array_equal(x_hat, x))}
