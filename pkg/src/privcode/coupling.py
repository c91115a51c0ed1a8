"""Coupled encoding of ``k`` source blocks through one shared uniform ``S``.

Each block's codewords are listed in decreasing order of the distortion
they cause, and laid out as consecutive intervals of ``[0, 1)`` with
lengths equal to their probabilities. Block ``i`` (0-based) is shifted right
by ``i/k`` modulo 1, and every block selects the codeword whose shifted
interval contains ``S``. Marginally each block still follows its own plan.
If every block puts mass at most ``1/k`` on codewords with distortion at
least ``delta n`` (the red ones), the red intervals occupy disjoint slots,
so any ``S`` meets at most one red codeword and the total distortion is at
most ``n + k delta n``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from . import bits
from .codec import ENUMERATION_MAX_LENGTH, EncodingPlan
from .ensemble import decode_codes
from .errors import DimensionMismatch, InstanceTooLarge


@dataclass(frozen=True, eq=False)
class BlockList:
    codes: np.ndarray
    distortion: np.ndarray
    prob: np.ndarray
    ends: np.ndarray
    offset: float
    red: np.ndarray

    @property
    def starts(self) -> np.ndarray:
        return np.concatenate([[0.0], self.ends[:-1]])

    @property
    def red_mass(self) -> float:
        return float(self.prob[self.red].sum())

    def select(self, S) -> np.ndarray:
        """Positions in the list selected by the shared values ``S``."""
        u = np.mod(np.asarray(S, dtype=np.float64) - self.offset, 1.0)
        # np.mod can round a tiny negative up to 1.0
        return np.minimum(np.searchsorted(self.ends, u, side="right"), self.codes.size - 1)


def make_block_list(codes, prob, distortion, offset: float, red_level: float) -> BlockList:
    """Sort by distortion (descending, ties by code) and lay out intervals."""
    codes = np.asarray(codes, dtype=np.int64)
    prob = np.asarray(prob, dtype=np.float64)
    distortion = np.asarray(distortion, dtype=np.int64)
    keep = prob > 0
    codes, prob, distortion = codes[keep], prob[keep], distortion[keep]
    order = np.lexsort((codes, -distortion))
    codes, prob, distortion = codes[order], prob[order], distortion[order]
    ends = np.cumsum(prob)
    ends[-1] = 1.0
    return BlockList(codes, distortion, prob, ends, float(offset) % 1.0,
                     distortion >= red_level)


@dataclass(frozen=True, eq=False)
class CouplingSchedule:
    blocks: tuple
    n: int
    delta: float
    length: int = 0

    @property
    def k(self) -> int:
        return len(self.blocks)

    @property
    def bound(self) -> float:
        """Worst-case total distortion ``n + k delta n`` for typical inputs."""
        return self.n + self.k * self.delta * self.n

    def select(self, S) -> np.ndarray:
        """``(k,)`` list positions for a scalar ``S``, or ``(k, len(S))``."""
        return np.array([blk.select(S) for blk in self.blocks])

    def codewords(self, S) -> np.ndarray:
        pos = self.select(S)
        return np.array([blk.codes[p] for blk, p in zip(self.blocks, pos)])

    def total_distortion(self, S) -> np.ndarray:
        pos = self.select(S)
        return sum(blk.distortion[p] for blk, p in zip(self.blocks, pos))

    def breakpoints(self) -> np.ndarray:
        """Sorted distinct points of ``[0, 1)`` where some selection changes."""
        pts = [np.zeros(1)]
        for blk in self.blocks:
            pts.append(np.mod(blk.starts + blk.offset, 1.0))
        return np.unique(np.concatenate(pts))

    def sweep(self) -> dict:
        """Evaluate every region between consecutive breakpoints.

        Selections are constant on each region, so its midpoint is a faithful
        representative. Returns region bounds, total distortions and the
        measure of ``S`` assigned to every list entry of every block.
        """
        left = self.breakpoints()
        right = np.append(left[1:], 1.0)
        mid = (left + right) / 2
        pos = self.select(mid)
        width = right - left
        total = sum(blk.distortion[p] for blk, p in zip(self.blocks, pos))
        measure = [np.bincount(p, weights=width, minlength=blk.codes.size)
                   for blk, p in zip(self.blocks, pos)]
        return {"left": left, "right": right, "total_distortion": total,
                "selected": pos, "measure": measure}

    def worst_case(self) -> tuple[int, float]:
        """Largest total distortion over all ``S`` and a point attaining it."""
        sw = self.sweep()
        j = int(np.argmax(sw["total_distortion"]))
        return int(sw["total_distortion"][j]), float(sw["left"][j])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["block", "rank", "codeword", "distortion", "probability",
                    "shifted_start", "red"])
        for i, blk in enumerate(self.blocks):
            shifted = np.mod(blk.starts + blk.offset, 1.0)
            for r in range(blk.codes.size):
                code = (bits.int_to_hex(int(blk.codes[r]), self.length) if self.length
                        else int(blk.codes[r]))
                w.writerow([i, r, code, int(blk.distortion[r]), repr(float(blk.prob[r])),
                            repr(float(shifted[r])), int(blk.red[r])])
        return buf.getvalue()


def schedule_from_lists(entries, n: int, delta: float, length: int = 0) -> CouplingSchedule:
    """Schedule from ``k`` triples ``(codes, probabilities, distortions)``."""
    k = len(entries)
    blocks = tuple(make_block_list(c, p, d, i / k, delta * n)
                   for i, (c, p, d) in enumerate(entries))
    return CouplingSchedule(blocks, n, delta, length)


def _plan_entries(plan: EncodingPlan, x) -> tuple:
    spec = plan.spec
    if spec.length > ENUMERATION_MAX_LENGTH:
        raise InstanceTooLarge(f"schedules need length <= {ENUMERATION_MAX_LENGTH}")
    x = bits.as_bits(x, spec.n)
    if not np.array_equal(x, plan.x):
        raise DimensionMismatch("plan was built for a different source block")
    pmf = plan.pmf()
    codes = np.flatnonzero(pmf > 0)
    dist = (decode_codes(spec, codes) != x).sum(axis=1)
    return codes, pmf[codes], dist


def build_schedule(plans, xs, delta: float) -> CouplingSchedule:
    """Schedule for ``k`` plans sharing one decoder."""
    if len(plans) != len(xs) or not plans:
        raise DimensionMismatch("need one plan per source block")
    spec = plans[0].spec
    if any(p.spec is not spec for p in plans):
        raise DimensionMismatch("all plans must share one decoder")
    entries = [_plan_entries(p, x) for p, x in zip(plans, xs)]
    return schedule_from_lists(entries, spec.n, delta, spec.length)


def draw_shared(seed) -> float:
    """A uniform dyadic rational in ``[0, 1)`` with 53 random bits."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return int(rng.integers(0, 2**53)) / 2.0**53


def coupled_encode(schedule: CouplingSchedule, S: float | None = None, seed=None) -> dict:
    """Select one codeword per block from the shared value ``S``.

    ``S`` is drawn from ``seed`` when not given.
    """
    if S is None:
        S = draw_shared(seed)
    if not 0 <= S < 1:
        raise ValueError(f"S must lie in [0, 1), got {S}")
    pos = schedule.select(S)
    return {"S": float(S), "positions": pos,
            "codewords": np.array([blk.codes[p] for blk, p in zip(schedule.blocks, pos)]),
            "distortions": np.array([blk.distortion[p] for blk, p in zip(schedule.blocks, pos)])}


def check_distortion_typical(plans, xs, delta: float, k: int | None = None) -> dict:
    """Whether every block's probability of distortion ``>= delta n`` is ``<= 1/k``."""
    k = len(plans) if k is None else k
    red = []
    for plan, x in zip(plans, xs):
        codes, prob, dist = _plan_entries(plan, x)
        red.append(float(prob[dist >= delta * plan.spec.n].sum()))
    red = np.array(red)
    return {"typical": bool(np.all(red <= 1.0 / k + 1e-12)), "red_mass": red,
            "limit": 1.0 / k}
