"""Exact membership oracle for the set of generable block-marginal vectors.

``phi`` is generable iff the system ``A P = (phi, 1)``, ``P >= 0`` has a
solution, where column ``c`` of ``A`` is the one-hot block-marginal vector of
codeword ``c`` stacked on a final all-ones row. Feasibility is decided by a
phase-one simplex. Infeasible instances come with a Farkas certificate
``y``: ``y . A_c <= 0`` for every codeword ``c`` and ``y . (phi, 1) > 0``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.optimize
import scipy.sparse

from . import bits
from .ensemble import DecoderSpec
from .errors import InstanceTooLarge
from .marginals import BlockMarginalVector, _check_dims

LP_TOL = 1e-9
EXACT_MAX_COLUMNS = 4096
MAX_LENGTH = 20


@dataclass
class LPResult:
    feasible: bool
    witness: dict | None
    certificate: np.ndarray | None
    mode: str
    iterations: int = 0

    def witness_json(self, length: int) -> str:
        """Sparse ``{codeword bits: probability}`` map."""
        if self.witness is None:
            return "null"
        return json.dumps({bits.bits_to_str(bits.int_to_bits(c, length)): float(p)
                           for c, p in sorted(self.witness.items())})


def column_rows(spec: DecoderSpec) -> np.ndarray:
    """``rows[c]``: the ``n + 1`` nonzero rows of the column of codeword ``c``."""
    codes = np.arange(2**spec.length, dtype=np.int64)
    size = 2**spec.b
    rows = np.empty((codes.size, spec.n + 1), dtype=np.int64)
    for i in range(spec.n):
        rows[:, i] = i * size + spec.window_ranks(i, codes)
    rows[:, spec.n] = spec.n * size
    return rows


def _is_dyadic(values: np.ndarray, max_bits: int = 40) -> bool:
    scaled = values * 2.0**max_bits
    return bool(np.all(scaled == np.round(scaled)))


def lp_membership(spec: DecoderSpec, phi: BlockMarginalVector,
                  exact: bool | None = None, method: str = "auto") -> LPResult:
    """Decide whether ``phi`` is the block-marginal vector of some codeword pmf.

    ``exact=None`` picks rational arithmetic when ``2^length <= 4096`` and
    every entry of ``phi`` is a dyadic rational (so that the float data are
    the intended exact data); otherwise a floating-point LP with tolerance
    ``1e-9`` is solved.

    In exact mode ``method="auto"`` first certifies a floating-point answer
    in rational arithmetic (re-solving the vertex support exactly, or
    checking the rationalized Farkas ray) and runs the rational simplex only
    when that fails; ``method="simplex"`` always runs the rational simplex.
    """
    _check_dims(spec, phi.blocks)
    if spec.length > MAX_LENGTH:
        raise InstanceTooLarge(f"LP oracle enumerates 2^{spec.length} codewords")
    rows = column_rows(spec)
    rhs = np.append(phi.blocks.reshape(-1), 1.0)
    if exact is None:
        exact = rows.shape[0] <= EXACT_MAX_COLUMNS and _is_dyadic(rhs)
    if not exact:
        return _float_phase_one(rows, rhs)
    return _exact_feasibility(rows, [Fraction(v) for v in rhs], method)


def _exact_feasibility(rows: np.ndarray, exact_rhs: list, method: str = "auto") -> LPResult:
    if method == "auto":
        rhs = np.array([float(v) for v in exact_rhs])
        certified = _certify_float(rows, rhs, exact_rhs)
        if certified is not None:
            return certified
    return _exact_phase_one(rows, exact_rhs)


def verify_certificate(spec: DecoderSpec, phi: BlockMarginalVector, y) -> bool:
    """Check a Farkas certificate in exact arithmetic."""
    rows = column_rows(spec)
    y = [Fraction(v) for v in y]
    rhs = [Fraction(v) for v in np.append(phi.blocks.reshape(-1), 1.0)]
    yarr = np.array(y, dtype=object)
    if max(yarr[rows].sum(axis=1)) > 0:
        return False
    return sum(a * b for a, b in zip(y, rhs)) > 0


def _certify_float(rows: np.ndarray, rhs: np.ndarray, exact_rhs: list):
    """Promote a floating-point answer to an exactly verified one, or None."""
    try:
        res = _float_phase_one(rows, rhs, vertex=True)
    except InstanceTooLarge:
        return None
    if res.feasible:
        support = np.array(sorted(res.witness))
        values = _solve_exact(rows[support], exact_rhs)
        if values is None or any(v < 0 for v in values):
            return None
        witness = {int(c): v for c, v in zip(support, values) if v != 0}
        return LPResult(True, witness, None, "exact", res.iterations)
    for denom in (2**10, 2**20, 10**6, 10**12):
        y = [Fraction(float(v)).limit_denominator(denom) for v in res.certificate]
        yarr = np.array(y, dtype=object)
        if max(yarr[rows].sum(axis=1)) <= 0 and sum(a * b for a, b in zip(y, exact_rhs)) > 0:
            return LPResult(False, None, yarr, "exact", res.iterations)
    return None


def _solve_exact(col_rows: np.ndarray, rhs: list):
    """Exact solution of ``A_S p = rhs`` for the columns ``S``, or None."""
    n_rows, k = len(rhs), col_rows.shape[0]
    zero, one = Fraction(0), Fraction(1)
    aug = [[zero] * k + [rhs[r]] for r in range(n_rows)]
    for j, rset in enumerate(col_rows):
        for r in rset:
            aug[r][j] = one
    pivots = []
    r = 0
    for col in range(k):
        piv = next((q for q in range(r, n_rows) if aug[q][col] != 0), None)
        if piv is None:
            continue
        aug[r], aug[piv] = aug[piv], aug[r]
        pv = aug[r][col]
        aug[r] = [v / pv for v in aug[r]]
        for q in range(n_rows):
            if q != r and aug[q][col] != 0:
                f = aug[q][col]
                aug[q] = [a - f * b for a, b in zip(aug[q], aug[r])]
        pivots.append(col)
        r += 1
    if any(aug[q][k] != 0 for q in range(r, n_rows)) or len(pivots) < k:
        return None
    values = [zero] * k
    for q, col in enumerate(pivots):
        values[col] = aug[q][k]
    return values


def _exact_phase_one(rows: np.ndarray, rhs: list) -> LPResult:
    """Revised phase-one simplex over the rationals.

    Dantzig pricing, switching permanently to Bland's rule after a run of
    degenerate pivots so that termination is guaranteed.
    """
    n_cols, n_rows = rows.shape[0], len(rhs)
    zero, one = Fraction(0), Fraction(1)
    binv = np.full((n_rows, n_rows), zero, dtype=object)
    for r in range(n_rows):
        binv[r, r] = one
    x_basic = np.array(rhs, dtype=object)
    basis = [n_cols + r for r in range(n_rows)]
    in_basis = np.zeros(n_cols, dtype=bool)
    iterations = 0
    bland = False
    degenerate_run = 0
    while True:
        cost = np.array([one if v >= n_cols else zero for v in basis], dtype=object)
        y = cost @ binv
        reduced = -y[rows].sum(axis=1)
        candidates = np.flatnonzero((reduced < 0) & ~in_basis)
        if candidates.size == 0:
            break
        if bland:
            enter = int(candidates[0])
        else:
            enter = int(candidates[np.argmin(reduced[candidates])])
        d = binv[:, rows[enter]].sum(axis=1)
        best, leave = None, None
        for r in range(n_rows):
            if d[r] > 0:
                ratio = x_basic[r] / d[r]
                if best is None or ratio < best or (ratio == best and basis[r] < basis[leave]):
                    best, leave = ratio, r
        # phase one is bounded below by 0, so a leaving row always exists
        degenerate_run = degenerate_run + 1 if best == 0 else 0
        if degenerate_run > 50:
            bland = True
        piv = d[leave]
        binv[leave] = binv[leave] / piv
        x_basic[leave] = x_basic[leave] / piv
        d[leave] = zero
        binv -= np.outer(d, binv[leave])
        x_basic -= d * x_basic[leave]
        if basis[leave] < n_cols:
            in_basis[basis[leave]] = False
        basis[leave] = enter
        in_basis[enter] = True
        iterations += 1

    infeasibility = sum((x_basic[r] for r in range(n_rows) if basis[r] >= n_cols), zero)
    if infeasibility > 0:
        return LPResult(False, None, y, "exact", iterations)
    witness = {int(v): x_basic[r] for r, v in enumerate(basis)
               if v < n_cols and x_basic[r] != 0}
    return LPResult(True, witness, None, "exact", iterations)


def _float_phase_one(rows: np.ndarray, rhs: np.ndarray, vertex: bool = False) -> LPResult:
    n_cols, n_rows = rows.shape[0], rhs.size
    data = np.ones(rows.size)
    col_idx = np.repeat(np.arange(n_cols), rows.shape[1])
    A = scipy.sparse.csr_matrix((data, (rows.reshape(-1), col_idx)),
                                shape=(n_rows, n_cols))
    opts = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}
    res = scipy.optimize.linprog(np.zeros(n_cols), A_eq=A, b_eq=rhs, bounds=(0, None),
                                 method="highs-ds" if vertex else "highs", options=opts)
    if res.status == 0:
        x = np.clip(res.x, 0, None)
        if np.abs(A @ x - rhs).max() <= LP_TOL:
            return LPResult(True, {int(c): float(x[c]) for c in np.flatnonzero(x > 0)},
                            None, "float", int(getattr(res, "nit", 0)))
    # Farkas ray: maximize rhs . y subject to A^T y <= 0 and rhs . y <= 1
    A_ub = scipy.sparse.vstack([A.T, scipy.sparse.csr_matrix(rhs.reshape(1, -1))])
    b_ub = np.append(np.zeros(n_cols), 1.0)
    ray = scipy.optimize.linprog(-rhs, A_ub=A_ub, b_ub=b_ub, bounds=(None, None),
                                 method="highs", options=opts)
    if ray.status == 0 and -ray.fun > LP_TOL:
        return LPResult(False, None, ray.x, "float", int(getattr(ray, "nit", 0)))
    raise InstanceTooLarge("floating-point LP was inconclusive at tolerance 1e-9")



def _sparse_columns(rows: np.ndarray, n_rows: int):
    n_cols = rows.shape[0]
    col_idx = np.repeat(np.arange(n_cols), rows.shape[1])
    return scipy.sparse.csr_matrix((np.ones(rows.size), (rows.reshape(-1), col_idx)),
                                   shape=(n_rows, n_cols))


def _polish(A, rhs: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Least-squares correction of ``x`` on its support, kept if still >= 0."""
    support = np.flatnonzero(x > 0)
    dense = A[:, support].toarray()
    step = np.linalg.lstsq(dense, rhs - dense @ x[support], rcond=None)[0]
    better = x.copy()
    better[support] += step
    if better.min() >= 0 and (np.abs(A @ better - rhs).max() <= np.abs(A @ x - rhs).max()):
        return better
    return x


def realize(spec: DecoderSpec, phi: BlockMarginalVector, exact: bool = False,
            base: np.ndarray | None = None):
    """Dense nonnegative pmf over all codes with block marginals ``phi``.

    Returns ``(pmf, theta)`` or ``(None, None)`` when ``phi`` is not
    realizable. Given a dense signed function ``base`` with the same block
    marginals, the float solver returns the realization closest to it in the
    sense of the smallest ``theta`` with ``pmf = base + theta (Q - base)``
    for some realizing pmf ``Q``; without ``base``, ``theta`` is None.
    """
    _check_dims(spec, phi.blocks)
    if spec.length > MAX_LENGTH:
        raise InstanceTooLarge(f"LP oracle enumerates 2^{spec.length} codewords")
    if exact:
        res = lp_membership(spec, phi, exact=True)
        if not res.feasible:
            return None, None
        out = np.full(2**spec.length, Fraction(0), dtype=object)
        for c, v in res.witness.items():
            out[c] = v
        return out, None
    rows = column_rows(spec)
    rhs = np.append(phi.blocks.reshape(-1), 1.0)
    A = _sparse_columns(rows, rhs.size)
    opts = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}
    n_cols = rows.shape[0]
    if base is None:
        res = scipy.optimize.linprog(np.zeros(n_cols), A_eq=A, b_eq=rhs, bounds=(0, None),
                                     method="highs-ds", options=opts)
        theta = None
    else:
        # variables (pmf, theta): min theta, pmf + theta * base >= base where base > 0
        pos = np.flatnonzero(base > 0)
        A_ub = scipy.sparse.hstack([
            -scipy.sparse.identity(n_cols, format="csr")[pos],
            scipy.sparse.csr_matrix(-base[pos].reshape(-1, 1))]).tocsr()
        A_eq = scipy.sparse.hstack([A, scipy.sparse.csr_matrix((rhs.size, 1))]).tocsr()
        cost = np.zeros(n_cols + 1)
        cost[-1] = 1.0
        res = scipy.optimize.linprog(cost, A_ub=A_ub, b_ub=-base[pos], A_eq=A_eq, b_eq=rhs,
                                     bounds=[(0, None)] * n_cols + [(0, 1)],
                                     method="highs", options=opts)
        theta = float(res.x[-1]) if res.status == 0 else None
    if res.status != 0:
        return None, None
    x = np.clip(res.x[:n_cols], 0, None)
    if np.abs(A @ x - rhs).max() > LP_TOL:
        return None, None
    return _polish(A, rhs, x), theta


def realize_above(spec: DecoderSpec, phi: BlockMarginalVector, floor) -> np.ndarray | None:
    """Exact pmf ``P >= floor`` (pointwise) with block marginals ``phi``, or None.

    ``floor`` is a dense nonnegative array of Fractions over all codes.
    """
    _check_dims(spec, phi.blocks)
    if spec.length > MAX_LENGTH or 2**spec.length > EXACT_MAX_COLUMNS:
        raise InstanceTooLarge(f"exact LP needs 2^length <= {EXACT_MAX_COLUMNS}")
    rows = column_rows(spec)
    rhs = [Fraction(v) for v in np.append(phi.blocks.reshape(-1), 1.0)]
    floor = np.asarray(floor, dtype=object)
    for c in np.flatnonzero(floor != 0):
        for r in rows[c]:
            rhs[r] -= floor[c]
    if min(rhs) < 0:
        return None
    res = _exact_feasibility(rows, rhs)
    if not res.feasible:
        return None
    out = floor.copy()
    for c, v in res.witness.items():
        out[c] += v
    return out
