"""Privacy audits, error estimates, ensemble statistics and report export."""

from __future__ import annotations

import csv
import dataclasses
import io
import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bits
from .codec import (EncodingPlan, PrivateCodec, build_encoding_plan, enumerate_valid,
                    expected_valid_count, expurgate)
from .ensemble import CodeParams, DecoderSpec, overlap_profile, sample_decoder
from .errors import ScopeTooLarge
from .marginals import (BlockMarginalVector, PerturbationVector, check_eligibility,
                        phi_of_distribution, uniform_vector)

SCHEMA_VERSION = 1
AUDIT_MAX_N = 16


# --------------------------------------------------------------------------
# report export
# --------------------------------------------------------------------------

def _plain(obj):
    """Recursively convert numpy values to JSON-friendly Python objects."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _plain(dataclasses.asdict(obj))
    return obj


def report_json(kind: str, payload, params: CodeParams | None = None,
                seeds=None, timestamp: str | None = None) -> str:
    """Canonical JSON for a report: sorted keys, versioned, replayable."""
    doc = {"schema_version": SCHEMA_VERSION, "kind": kind,
           "params": None if params is None else params.to_dict(),
           "seeds": _plain(seeds), "result": _plain(payload)}
    if timestamp is not None:
        doc["timestamp"] = timestamp
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def parallel_map(fn, items, workers: int = 1) -> list:
    """Ordered map; with ``workers > 1`` items run in separate processes.

    Every item carries its own seed, so results never depend on ``workers``.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def rows_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in _plain(list(row))])
    return buf.getvalue()


# --------------------------------------------------------------------------
# privacy
# --------------------------------------------------------------------------

@dataclass
class PrivacyAudit:
    leakage: float
    leakage_by_block: np.ndarray
    worst_pair: tuple | None
    conditionals: dict
    attribution: dict
    mutual_information: np.ndarray
    scope_size: int

    def summary(self) -> dict:
        return {"leakage": self.leakage,
                "leakage_by_block": self.leakage_by_block,
                "worst_pair": self.worst_pair,
                "attribution": self.attribution,
                "mutual_information_bits": self.mutual_information,
                "scope_size": self.scope_size}


def audit_scope(spec: DecoderSpec, scope="all") -> list[np.ndarray]:
    """Source strings to audit: ``"all"``, ``"weight-bounded"`` or a list."""
    n = spec.n
    if not isinstance(scope, str):
        return [bits.as_bits(x, n) for x in scope]
    if n > AUDIT_MAX_N:
        raise ScopeTooLarge(f"auditing enumerates 2^{n} sources; n must be <= {AUDIT_MAX_N}")
    xs = [np.array(x, dtype=np.uint8) for x in itertools.product((0, 1), repeat=n)]
    if scope == "weight-bounded":
        limit = n * spec.params.p_eps + 1e-12
        xs = [x for x in xs if x.sum() <= limit]
    elif scope != "all":
        raise ValueError(f"unknown scope {scope!r}")
    return xs


def _entropy(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def audit_privacy(spec: DecoderSpec, plan_builder=build_encoding_plan,
                  scope="all", prior: float | None = None) -> PrivacyAudit:
    """Exact leakage of every window about the other source bits.

    Leakage of block ``i`` is the largest total-variation distance between
    the laws of ``C_{I_i}`` under two audited sources that agree on bit
    ``i``. The mutual information ``I(C_{I_i}; X | X_i)`` is reported under
    an i.i.d. Bernoulli(``prior``) source restricted to the scope (default
    prior: the decoder's ``p``).
    """
    xs = audit_scope(spec, scope)
    if len(xs) > 2**AUDIT_MAX_N:
        raise ScopeTooLarge("scope exceeds 2^16 sources")
    n = spec.n
    prior = spec.params.p if prior is None else prior
    plans = [plan_builder(spec, x) for x in xs]
    marg = np.array([pl.block_marginals() for pl in plans])     # (X, n, 2^b)
    weights = np.array([prior ** x.sum() * (1 - prior) ** (n - x.sum()) for x in xs])
    attribution = {bits.bits_to_str(x): pl.fallback for x, pl in zip(xs, plans)
                   if pl.fallback is not None}
    leak = np.zeros(n)
    mi = np.zeros(n)
    worst = None
    conditionals = {}
    X = np.array(xs)
    for i in range(n):
        for v in (0, 1):
            rows = np.flatnonzero(X[:, i] == v)
            if rows.size == 0:
                continue
            distinct, inverse = np.unique(marg[rows, i], axis=0, return_inverse=True)
            conditionals[(i, v)] = distinct
            if len(distinct) > 1:
                tv = 0.5 * np.abs(distinct[:, None, :] - distinct[None, :, :]).sum(axis=2)
                a, b = np.unravel_index(np.argmax(tv), tv.shape)
                if tv[a, b] > leak[i]:
                    leak[i] = tv[a, b]
                    xa = rows[np.flatnonzero(inverse.reshape(-1) == a)[0]]
                    xb = rows[np.flatnonzero(inverse.reshape(-1) == b)[0]]
                    if worst is None or tv[a, b] > worst[3]:
                        worst = (i, bits.bits_to_str(xs[xa]), bits.bits_to_str(xs[xb]),
                                 float(tv[a, b]))
            w = weights[rows]
            if w.sum() > 0:
                w = w / w.sum()
                mix = w @ marg[rows, i]
                gap = _entropy(mix) - sum(wk * _entropy(mk) for wk, mk in zip(w, marg[rows, i]))
                mi[i] += weights[rows].sum() / weights.sum() * max(gap, 0.0)
    return PrivacyAudit(float(leak.max(initial=0.0)), leak, worst, conditionals,
                        attribution, mi, len(xs))


def total_variation(p, q) -> float:
    return float(0.5 * np.abs(np.asarray(p) - np.asarray(q)).sum())


# --------------------------------------------------------------------------
# random eligible targets
# --------------------------------------------------------------------------

def random_eligible_targets(spec: DecoderSpec, x, rng: np.random.Generator,
                            fraction: float | None = None):
    """Targets ``phi_U - n eta`` for a random eligible perturbation ``eta``.

    ``eta = s (phi_P - phi_U)`` where ``phi_P`` are the block marginals of a
    random codeword pmf (flat Dirichlet), so ``eta`` is the difference of
    two realizable, bit-pair consistent vectors. ``s`` is ``fraction`` (drawn
    uniformly when None) of the largest scale meeting the entry and pair
    bounds. Returns ``(targets, eta)``.
    """
    x = bits.as_bits(x, spec.n)
    n = spec.n
    U = uniform_vector(spec).blocks
    P = rng.dirichlet(np.ones(2**spec.length))
    d = phi_of_distribution(spec, P / P.sum()).blocks - U
    caps = np.array([1.0 / (n * n * spec.preimage_size(i, int(x[i]))) for i in range(n)])
    peak = d.max(axis=1)
    s = float(np.min(np.where(peak > 0, caps / np.where(peak > 0, peak, 1), np.inf)))
    res = check_eligibility(spec, x, PerturbationVector(d * s))
    pair = [v for v in res.violations if v[0] == "pair-bound"]
    if pair:
        s *= min(v[4] / v[3] for v in pair)
    frac = rng.uniform() if fraction is None else fraction
    eta = PerturbationVector(d * s * frac)
    return BlockMarginalVector(U - n * eta.blocks), eta


# --------------------------------------------------------------------------
# error and distortion
# --------------------------------------------------------------------------

@dataclass
class ErrorReport:
    trials: int
    per_bit: np.ndarray
    block_error: float
    histogram: np.ndarray
    exact_per_bit: np.ndarray
    tail: float | None = None
    delta: float | None = None

    def summary(self) -> dict:
        return {"trials": self.trials, "per_bit": self.per_bit,
                "block_error": self.block_error, "histogram": self.histogram,
                "exact_per_bit": self.exact_per_bit, "tail": self.tail,
                "delta": self.delta}


def estimate_error(spec: DecoderSpec, plan_builder=build_encoding_plan, source="bernoulli",
                   trials: int = 1000, seed=0, p: float | None = None,
                   delta: float | None = None) -> ErrorReport:
    """Monte-Carlo error rates, with exact per-bit error averaged alongside.

    ``source`` is ``"bernoulli"`` (i.i.d. bits with bias ``p``, default the
    decoder's) or an explicit list of source strings drawn uniformly.
    """
    n = spec.n
    if trials <= 0:
        return ErrorReport(0, np.zeros(0), float("nan"), np.zeros(n + 1, dtype=np.int64),
                           np.zeros(0))
    rng = np.random.default_rng(seed)
    if isinstance(source, str):
        bias = spec.params.p if p is None else p
        X = (rng.random((trials, n)) < bias).astype(np.uint8)
    else:
        pool = np.array([bits.as_bits(x, n) for x in source])
        X = pool[rng.integers(0, len(pool), size=trials)]
    codec = PrivateCodec(spec, plan_builder)
    keys, inverse = np.unique(X, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    wrong = np.zeros((trials, n), dtype=bool)
    exact = np.zeros(n)
    for k, x in enumerate(keys):
        rows = np.flatnonzero(inverse == k)
        codes = codec.encode(x, rng, count=rows.size)
        wrong[rows] = codec.decode(codes) != x
        exact += rows.size * codec.plan(x).bit_errors()
    dist = wrong.sum(axis=1)
    tail = None if delta is None else float(np.mean(dist >= delta * n))
    return ErrorReport(trials, wrong.mean(axis=0), float(np.mean(dist > 0)),
                       np.bincount(dist, minlength=n + 1), exact / trials, tail, delta)


# --------------------------------------------------------------------------
# ensemble concentration
# --------------------------------------------------------------------------

@dataclass
class ConcentrationReport:
    counts: np.ndarray
    expected: float
    mean: float
    std_error: float
    ratios: np.ndarray
    max_overlaps: np.ndarray
    overlap_exceedance: float
    expurgated_fractions: np.ndarray
    seeds: list = field(default_factory=list)

    @property
    def z_score(self) -> float:
        if self.std_error == 0:
            return 0.0 if self.mean == self.expected else float("inf")
        return (self.mean - self.expected) / self.std_error

    def summary(self) -> dict:
        return {"draws": int(self.counts.size), "expected": self.expected,
                "mean": self.mean, "std_error": self.std_error, "z_score": self.z_score,
                "overlap_exceedance": self.overlap_exceedance,
                "mean_expurgated_fraction": float(self.expurgated_fractions.mean()),
                "counts": self.counts, "max_overlaps": self.max_overlaps}


def decoder_seeds(seed, draws: int) -> list[int]:
    """Independent per-draw seeds spawned from one root seed."""
    return [int(s.generate_state(1, np.uint64)[0])
            for s in np.random.SeedSequence(seed).spawn(draws)]


def _draw_stats(job) -> tuple:
    params, x, seed, syndrome, expurgation = job
    spec = sample_decoder(dataclasses.replace(params, seed=seed), syndrome)
    index = enumerate_valid(spec, x)
    fraction = 0.0
    if expurgation and index.count:
        fraction = 1 - expurgate(index, spec).expurgated_count / index.count
    return index.count, overlap_profile(spec).max_overlap, fraction


def concentration_study(params: CodeParams, x, draws: int, seed=0, syndrome=None,
                        expurgation: bool = True, workers: int = 1) -> ConcentrationReport:
    """Valid-codeword counts and overlaps over ``draws`` sampled decoders."""
    x = bits.as_bits(x, params.n)
    seeds = decoder_seeds(seed, draws)
    stats = parallel_map(_draw_stats, [(params, x, s, syndrome, expurgation) for s in seeds],
                         workers)
    counts = np.array([st[0] for st in stats], dtype=np.int64)
    overlaps = np.array([st[1] for st in stats])
    fractions = np.array([st[2] for st in stats])
    expected = expected_valid_count(params.length, params.n, int(x.sum()),
                                    params.p, params.b_prime)
    se = float(counts.std(ddof=1) / np.sqrt(draws)) if draws > 1 else 0.0
    return ConcentrationReport(counts, expected, float(counts.mean()), se,
                               counts / expected, overlaps,
                               float(np.mean(overlaps >= 3)), fractions, seeds)


# --------------------------------------------------------------------------
# excess-mass inequality
# --------------------------------------------------------------------------

@dataclass
class ExcessCheck:
    hypothesis_holds: bool
    spread: float
    spread_limit: float
    lhs: float
    rhs: float
    conclusion_holds: bool


def excess_fraction_check(pmf, alpha: float, eps: float) -> ExcessCheck:
    """Check ``sum (p_i - 1/D)^2 <= 1/(alpha D)`` and its consequence.

    Consequence: ``sum [p_i - (1+eps)/D]^+ <= (1+eps)/(alpha eps^2)``.
    """
    p = np.asarray(pmf, dtype=np.float64)
    D = p.size
    spread = float(((p - 1.0 / D) ** 2).sum())
    limit = 1.0 / (alpha * D)
    lhs = float(np.clip(p - (1 + eps) / D, 0, None).sum())
    rhs = (1 + eps) / (alpha * eps**2)
    return ExcessCheck(spread <= limit * (1 + 1e-12), spread, limit, lhs, rhs,
                       lhs <= rhs * (1 + 1e-12))


APPENDIX_CHUNK = 1000


def _appendix_chunk(job) -> tuple:
    count, max_D, seed = job
    rng = np.random.default_rng(seed)
    rows, violations = [], 0
    while len(rows) < count:
        D = int(rng.integers(2, max_D + 1))
        alpha = float(np.exp(rng.uniform(0, np.log(1000))))
        eps = float(rng.uniform(0.01, 2.0))
        z = rng.standard_normal(D)
        if rng.random() < 0.5:
            z[rng.integers(D)] += 3 * np.sqrt(D)      # one heavy entry
        z -= z.mean()
        norm = np.sqrt((z**2).sum())
        if norm == 0:
            continue
        scale = np.sqrt(rng.random() / (alpha * D)) / norm
        low = z.min()
        if low < 0:
            scale = min(scale, (1.0 / D) / -low)
        pmf = np.clip(1.0 / D + scale * z, 0, None)
        res = excess_fraction_check(pmf, alpha, eps)
        if not res.hypothesis_holds:
            continue
        violations += not res.conclusion_holds
        rows.append((D, alpha, eps, res.spread, res.spread_limit, res.lhs, res.rhs))
    return rows, violations


def appendix_sweep(count: int = 10_000, max_D: int = 64, seed=0, workers: int = 1):
    """Random pmfs satisfying the hypothesis; returns rows and violation count.

    Each row is ``(D, alpha, eps, spread, spread_limit, lhs, rhs)``.
    Directions are random zero-sum vectors scaled to a random fraction of the
    allowed spread, or to the largest scale that keeps every entry
    nonnegative if that is smaller. Work is split into fixed-size chunks
    with spawned seeds.
    """
    sizes = [APPENDIX_CHUNK] * (count // APPENDIX_CHUNK)
    if count % APPENDIX_CHUNK:
        sizes.append(count % APPENDIX_CHUNK)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    parts = parallel_map(_appendix_chunk, [(c, max_D, s) for c, s in zip(sizes, seeds)],
                         workers)
    rows = [r for part in parts for r in part[0]]
    return rows, sum(part[1] for part in parts)
