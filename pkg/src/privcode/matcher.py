"""Constructing a codeword distribution with prescribed block marginals.

The distribution is kept in additive form: the uniform base ``2^-m`` plus a
list of lifted correction terms. A term with support ``J`` and zero-sum
table ``T`` contributes ``2^-(m - |J|) T[c_J]`` to ``P(c)``, so it shifts
the marginal on ``J`` by exactly ``T`` and leaves total mass at 1.

Three rounds of terms are added: one per bit (bit marginals), one per pair
of bits sharing a block (pair marginals), and one per block (full block
marginals). When two blocks share at most two bits, a later round never
disturbs what an earlier round matched, so all block marginals come out
exact; nonnegativity is then checked rather than assumed.

At small block counts the three rounds can overshoot into negative values
even for realizable targets. An optional repair round then adds the
smallest multiple of ``Q - S`` that restores nonnegativity, where ``S`` is
the three-round function and ``Q`` an LP-realized pmf with the same block
marginals; ``Q - S`` has zero block marginals, so nothing matched is lost.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import bits, lp
from .ensemble import DecoderSpec
from .errors import (InconsistentTargets, InstanceTooLarge, NegativeConditional,
                     NegativeMass, OverlapTooLarge)
from .marginals import (NEG_TOL, BlockMarginalVector, _check_dims, _consistency,
                        block_marginal, shared_pairs)

DENSE_MAX_LENGTH = 24
EXACT_MAX_LENGTH = 12
REPAIR_MAX_LENGTH = 16
MARGINAL_MAX = 16
_CHUNK = 1 << 20


def _marginal_table(table: np.ndarray, size: int, keep) -> np.ndarray:
    """Sum a ``2^size`` table over every local axis not in ``keep``."""
    drop = tuple(a for a in range(size) if a not in keep)
    out = table.reshape((2,) * size)
    if drop:
        out = out.sum(axis=drop)
    return np.asarray(out).reshape(-1)


@dataclass(frozen=True, eq=False)
class LiftedTerm:
    support: tuple
    table: np.ndarray
    stage: int = 0

    def __post_init__(self):
        support = tuple(int(v) for v in self.support)
        if list(support) != sorted(set(support)):
            raise ValueError(f"support must be sorted and distinct, got {support}")
        table = np.asarray(self.table)
        if table.shape != (2 ** len(support),):
            raise ValueError("table length must be 2^|support|")
        total = table.sum()
        if abs(float(total)) > 1e-9:
            raise ValueError(f"correction table sums to {float(total)!r}, not 0")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "table", table)

    @property
    def size(self) -> int:
        return len(self.support)


@dataclass(frozen=True, eq=False)
class AdditiveDistribution:
    """Uniform base plus lifted zero-sum terms over ``length``-bit strings."""
    length: int
    terms: tuple = ()
    verified: str | None = None
    min_pointwise: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        for t in self.terms:
            if t.support and t.support[-1] >= self.length:
                raise ValueError(f"term support {t.support} exceeds length {self.length}")

    @property
    def exact(self) -> bool:
        return any(t.table.dtype == object for t in self.terms)

    def _base(self, exact: bool):
        return Fraction(1, 2**self.length) if exact else 2.0**-self.length

    def evaluate(self, c):
        code = bits.bits_to_int(bits.as_bits(c, self.length))
        codes = np.array([code], dtype=np.int64)
        value = self._base(self.exact)
        for t in self.terms:
            rank = int(bits.window_ranks(codes, t.support, self.length)[0])
            value = value + t.table[rank] / 2 ** (self.length - t.size)
        return value

    def evaluate_codes(self, codes: np.ndarray) -> np.ndarray:
        """Pointwise values at an array of integer codes (float64)."""
        codes = np.asarray(codes, dtype=np.int64)
        out = np.full(codes.shape, 2.0**-self.length)
        for t in self.terms:
            ranks = bits.window_ranks(codes, t.support, self.length)
            out += t.table.astype(np.float64)[ranks] * 2.0 ** (t.size - self.length)
        return out

    def evaluate_all(self) -> np.ndarray:
        """Dense pmf over all ``2^length`` codes, in integer order."""
        if self.length > DENSE_MAX_LENGTH:
            raise InstanceTooLarge(f"dense evaluation needs length <= {DENSE_MAX_LENGTH}")
        if self.exact:
            codes = np.arange(2**self.length, dtype=np.int64)
            out = np.full(codes.size, self._base(True), dtype=object)
            for t in self.terms:
                scale = Fraction(1, 2 ** (self.length - t.size))
                out = out + t.table[bits.window_ranks(codes, t.support, self.length)] * scale
            return out
        total = 2**self.length
        out = np.empty(total)
        for start in range(0, total, _CHUNK):
            codes = np.arange(start, min(total, start + _CHUNK), dtype=np.int64)
            out[start:start + codes.size] = self.evaluate_codes(codes)
        return out

    def marginalize(self, J) -> np.ndarray:
        """Exact marginal on the sorted index set ``J`` (dense, ``2^|J|``)."""
        J = tuple(sorted(int(v) for v in J))
        if len(J) > MARGINAL_MAX:
            raise InstanceTooLarge(f"marginal over {len(J)} > {MARGINAL_MAX} bits")
        exact = self.exact
        shape = (2,) * len(J)
        out = np.full(shape, self._base(exact) * 2 ** (self.length - len(J)),
                      dtype=object if exact else np.float64)
        pos = {v: k for k, v in enumerate(J)}
        for t in self.terms:
            keep = [k for k, v in enumerate(t.support) if v in pos]
            if not keep:
                continue    # a zero-sum table marginalizes to 0
            sub = _marginal_table(t.table, t.size, keep)
            axes = [pos[t.support[k]] for k in keep]
            view = [1] * len(J)
            for a in axes:
                view[a] = 2
            # axes of J are sorted as are those of the support, so no transpose
            scale = (Fraction(1, 2 ** (len(J) - len(keep))) if exact
                     else 2.0 ** (len(keep) - len(J)))
            out = out + sub.reshape(view) * scale
        return out.reshape(-1)

    def min_value(self):
        """Minimum pointwise value and the mode that produced it.

        Dense scan for ``length <= 24``; otherwise the lower bound
        ``2^-m (1 - sum_t 2^|J_t| max|T_t|)``.
        """
        if self.length <= DENSE_MAX_LENGTH:
            if self.exact:
                return min(self.evaluate_all()), "dense"
            total = 2**self.length
            low = np.inf
            for start in range(0, total, _CHUNK):
                codes = np.arange(start, min(total, start + _CHUNK), dtype=np.int64)
                low = min(low, float(self.evaluate_codes(codes).min()))
            return low, "dense"
        slack = sum(2.0**t.size * float(np.abs(t.table.astype(np.float64)).max())
                    for t in self.terms)
        return 2.0**-self.length * (1.0 - slack), "certified-bound"

    def verify(self) -> "AdditiveDistribution":
        """Return a copy tagged with its verified minimum; raise if negative."""
        low, mode = self.min_value()
        if low < -NEG_TOL:
            raise NegativeMass(f"minimum pointwise mass {float(low)!r} ({mode})")
        return AdditiveDistribution(self.length, self.terms, mode, low)

    def sample(self, count: int, seed=None) -> np.ndarray:
        """Exact sequential sampling; returns integer codes (MSB = position 0)."""
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        m = self.length
        codes = np.zeros(count, dtype=np.int64)
        if count == 0:
            return codes
        # partial[t][j]: table summed over all but the first j support positions
        partial = []
        for t in self.terms:
            tab = t.table.astype(np.float64)
            partial.append([_marginal_table(tab, t.size, range(j)) for j in range(t.size + 1)])
        where = [{v: k for k, v in enumerate(t.support)} for t in self.terms]
        depth = [0] * len(self.terms)
        ranks = [np.zeros(count, dtype=np.int64) for _ in self.terms]
        prev = np.ones(count)
        for k in range(m):
            zero = np.full(count, 2.0 ** -(k + 1))
            for ti, t in enumerate(self.terms):
                j = depth[ti] + (1 if k in where[ti] else 0)
                if j == 0:
                    continue
                r = ranks[ti] * 2 if k in where[ti] else ranks[ti]
                zero += partial[ti][j][r] * 2.0 ** (j - k - 1)
            one = prev - zero
            if zero.min() < -NEG_TOL or one.min() < -NEG_TOL:
                raise NegativeConditional(f"negative prefix mass at bit {k}")
            pick = rng.random(count) * prev >= zero
            codes = (codes << 1) | pick
            prev = np.where(pick, one, zero)
            for ti in range(len(self.terms)):
                if k in where[ti]:
                    ranks[ti] = ranks[ti] * 2 + pick
                    depth[ti] += 1
        return codes

    def to_json(self) -> str:
        return json.dumps({
            "nR": self.length,
            "terms": [{"support": list(t.support), "stage": t.stage,
                       "table": [str(v) if isinstance(v, Fraction) else float(v)
                                 for v in t.table]} for t in self.terms],
            "verified": self.verified,
        })

    @classmethod
    def from_json(cls, text: str) -> "AdditiveDistribution":
        data = json.loads(text)
        terms = []
        for t in data["terms"]:
            exact = any(isinstance(v, str) for v in t["table"])
            table = (np.array([Fraction(v) for v in t["table"]], dtype=object) if exact
                     else np.array(t["table"], dtype=np.float64))
            terms.append(LiftedTerm(tuple(t["support"]), table, t.get("stage", 0)))
        return cls(data["nR"], terms, data.get("verified"))


def uniform_distribution(length: int) -> AdditiveDistribution:
    return AdditiveDistribution(length, (), "dense" if length <= DENSE_MAX_LENGTH
                                else "certified-bound", 2.0**-length)


@dataclass
class MatchReport:
    stage_residuals: dict
    min_pointwise: float
    verified_mode: str
    e1_max: float
    e2_max: float
    eb_min: float
    term_counts: dict = field(default_factory=dict)
    repair_weight: float = 0.0
    unrepaired_min: float | None = None

    def to_json(self) -> str:
        return json.dumps({
            "stage_residuals": self.stage_residuals,
            "min_pointwise": float(self.min_pointwise),
            "verified_mode": self.verified_mode,
            "e1_max": self.e1_max, "e2_max": self.e2_max, "eb_min": self.eb_min,
            "term_counts": self.term_counts,
            "repair_weight": float(self.repair_weight),
            "unrepaired_min": None if self.unrepaired_min is None
            else float(self.unrepaired_min),
        }, sort_keys=True)


@dataclass
class MatchResult:
    dist: AdditiveDistribution
    report: MatchReport


def _targets(spec: DecoderSpec, blocks: np.ndarray):
    """Per-bit and per-pair target marginals read off the first covering block."""
    b = spec.b
    bit_t, pair_t = {}, {}
    for i, row in enumerate(spec.index_sets):
        row = [int(v) for v in row]
        for k, l in enumerate(row):
            bit_t.setdefault(l, block_marginal(blocks[i], b, (k,)))
        for k1, k2 in itertools.combinations(range(b), 2):
            pair_t.setdefault((row[k1], row[k2]), block_marginal(blocks[i], b, (k1, k2)))
    return bit_t, pair_t


def _residuals(dist: AdditiveDistribution, spec: DecoderSpec, blocks, bit_t, pair_t) -> dict:
    def gap(J, target):
        return float(np.abs(np.asarray(dist.marginalize(J) - target, dtype=np.float64)).max())
    return {
        "bit": max((gap((l,), v) for l, v in bit_t.items()), default=0.0),
        "pair": max((gap(lm, v) for lm, v in pair_t.items()), default=0.0),
        "block": max(gap(spec.index_sets[i], blocks[i]) for i in range(spec.n)),
    }


def _repair_term(spec: DecoderSpec, targets: BlockMarginalVector,
                 stage: AdditiveDistribution, exact: bool):
    """Zero-marginal correction on the covered bits, or None if unrealizable.

    Returns the term and the weight ``theta`` of the realizing pmf mixed in.
    """
    union = tuple(sorted({int(v) for row in spec.index_sets for v in row}))
    codes = np.arange(2**spec.length, dtype=np.int64)
    ranks = bits.window_ranks(codes, union, spec.length)
    S_u = stage.marginalize(union)
    if exact:
        S = stage.evaluate_all()
        _, theta_f = lp.realize(spec, targets, base=S.astype(np.float64))
        # the float optimum is a guess; each candidate is certified exactly
        guesses = [] if theta_f is None else [
            Fraction(theta_f).limit_denominator(10**4),
            Fraction(min(theta_f + 1e-6, 1.0)).limit_denominator(10**6)]
        for theta in guesses + [Fraction(1)]:
            if not 0 < theta <= 1:
                continue
            floor = np.array([max(Fraction(0), (1 - theta) * v) for v in S], dtype=object)
            P = lp.realize_above(spec, targets, floor)
            if P is not None:
                break
        else:
            return None, None
        P_u = np.full(2 ** len(union), Fraction(0), dtype=object)
        for c in np.flatnonzero(P != 0):
            P_u[ranks[c]] += P[c]
        return LiftedTerm(union, P_u - S_u, 4), theta
    P, theta = lp.realize(spec, targets, base=stage.evaluate_all())
    if P is None:
        return None, None
    P_u = np.bincount(ranks, weights=P, minlength=2 ** len(union))
    return LiftedTerm(union, P_u - S_u, 4), theta


def match_marginals(spec: DecoderSpec, targets: BlockMarginalVector,
                    exact: bool = False, repair: bool = True) -> MatchResult:
    """Build a distribution whose block marginals equal ``targets``.

    Raises ``OverlapTooLarge`` if two blocks share three or more bits,
    ``InconsistentTargets`` if shared bit or bit-pair marginals disagree, and
    ``NegativeMass`` if the result dips below zero. With ``repair`` (and
    ``length <= 16``) a negative three-round result is repaired when the
    targets are realizable, so ``NegativeMass`` then means they are not.
    ``exact=True`` runs the construction in rational arithmetic
    (``length <= 12``).
    """
    _check_dims(spec, targets.blocks)
    for i, j, shared in shared_pairs(spec):
        if len(shared) > 2:
            raise OverlapTooLarge(f"blocks {i} and {j} share {len(shared)} bits")
    bit_v, pair_v, _ = _consistency(spec, targets.blocks)
    if bit_v or pair_v:
        worst = max(bit_v + pair_v, key=lambda v: v.magnitude)
        raise InconsistentTargets(f"blocks {worst.i} and {worst.j} disagree on "
                                  f"{worst.indices} by {worst.magnitude:.3g}")
    if exact and spec.length > EXACT_MAX_LENGTH:
        raise InstanceTooLarge(f"exact matching needs length <= {EXACT_MAX_LENGTH}")

    blocks = targets.blocks
    if exact:
        blocks = np.array([[Fraction(float(v)) for v in row] for row in blocks], dtype=object)
    bit_t, pair_t = _targets(spec, blocks)
    half = Fraction(1, 2) if exact else 0.5
    m = spec.length
    residuals = {}

    terms = [LiftedTerm((l,), bit_t[l] - half, 1) for l in sorted(bit_t)]
    stage = AdditiveDistribution(m, terms)
    residuals["stage1"] = _residuals(stage, spec, blocks, bit_t, pair_t)

    new = [LiftedTerm(lm, pair_t[lm] - stage.marginalize(lm), 2) for lm in sorted(pair_t)]
    terms += new
    stage = AdditiveDistribution(m, terms)
    residuals["stage2"] = _residuals(stage, spec, blocks, bit_t, pair_t)

    new = []
    for i, row in enumerate(spec.index_sets):
        J = tuple(int(v) for v in row)
        new.append(LiftedTerm(J, blocks[i] - stage.marginalize(J), 3))
    terms += new
    stage = AdditiveDistribution(m, terms)
    residuals["stage3"] = _residuals(stage, spec, blocks, bit_t, pair_t)

    theta, unrepaired = 0.0, None
    low, _ = stage.min_value()
    if low < -NEG_TOL and repair and m <= REPAIR_MAX_LENGTH:
        unrepaired = float(low)
        term, theta = _repair_term(spec, targets, stage, exact)
        if term is None:
            raise NegativeMass(f"minimum pointwise mass {unrepaired!r} and the "
                               f"targets are not realizable")
        terms.append(term)
        stage = AdditiveDistribution(m, terms)
        residuals["stage4"] = _residuals(stage, spec, blocks, bit_t, pair_t)
    dist = stage.verify()
    e1 = max(float(np.abs(np.asarray(v - half, dtype=np.float64)).max()) for v in bit_t.values())
    e2 = max((float(np.abs(np.asarray(v, dtype=np.float64) - 0.25).max())
              for v in pair_t.values()), default=0.0)
    report = MatchReport(
        stage_residuals=residuals,
        min_pointwise=dist.min_pointwise,
        verified_mode=dist.verified,
        e1_max=e1, e2_max=e2, eb_min=float(targets.blocks.min()),
        term_counts={"stage1": len(bit_t), "stage2": len(pair_t), "stage3": spec.n,
                     "stage4": int(unrepaired is not None)},
        repair_weight=float(theta), unrepaired_min=unrepaired,
    )
    return MatchResult(dist, report)
