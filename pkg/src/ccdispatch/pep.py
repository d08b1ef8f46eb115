"""Generation of approximate p-efficient points from a finite wind sample.

The column-generation subproblem keeps exactly ``q = ceil(p * N)`` samples
and maximizes ``lam @ v`` where ``v`` is the component-wise minimum of the
kept samples, capped at the marginal quantile bound ``ell``.  Equivalently,
choose ``r = N - q`` samples to drop.  Keeping fewer than ``q`` can only lower
the minimum and dropping fewer than ``r`` never raises it, so the quota is
exact.

Ties between optimal kept sets are broken toward the lexicographically
smallest sorted index list.  Both solvers below apply that rule, so their
outputs agree bit for bit.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import DispatchError, QuotaError
from .scenario import ScenarioSet, quota

log = logging.getLogger(__name__)

TIE_TOL = 1e-12
EXHAUSTIVE_LIMIT = 20
REFINE_PASSES = 1
DEPTH_MARGIN = 0
DEEP_WEIGHT = 0.02


@dataclass(frozen=True)
class PePoint:
    v: np.ndarray
    kept: np.ndarray
    objective: float

    @property
    def kept_indices(self) -> np.ndarray:
        return np.flatnonzero(self.kept)


@dataclass
class SearchStats:
    nodes: int = 0
    pruned: int = 0
    incumbent: float = -math.inf
    root_bound: float = math.inf


def _check(sset: ScenarioSet, p: float, lam, ell):
    lam = np.asarray(lam, dtype=float)
    ell = np.asarray(ell, dtype=float)
    T = sset.horizon
    if lam.shape != (T,) or ell.shape != (T,):
        raise DispatchError(f"lam and ell must have length {T}")
    if np.any(lam < 0) or not np.all(np.isfinite(lam)):
        raise DispatchError("multiplier vector must be finite and nonnegative")
    q = quota(p, sset.n_samples)
    if q > sset.n_samples:
        raise QuotaError(f"quota {q} exceeds sample count {sset.n_samples}")
    return lam, ell, q


def _point(W: np.ndarray, ell: np.ndarray, lam: np.ndarray, kept: np.ndarray) -> PePoint:
    v = np.minimum(ell, W[kept].min(axis=0))
    return PePoint(v=v, kept=kept, objective=float(lam @ v))


def solve_exhaustive(sset: ScenarioSet, p: float, lam, ell) -> PePoint:
    """Enumerate every kept set of size ceil(p*N); for small test instances only."""
    lam, ell, q = _check(sset, p, lam, ell)
    N = sset.n_samples
    if N > EXHAUSTIVE_LIMIT:
        raise DispatchError(f"exhaustive enumeration limited to N <= {EXHAUSTIVE_LIMIT}, got {N}")
    W = sset.samples
    combos = list(itertools.combinations(range(N), q))
    values = np.empty(len(combos))
    for i, c in enumerate(combos):
        values[i] = lam @ np.minimum(ell, W[list(c)].min(axis=0))
    best = values.max()
    # combinations() yields in lexicographic order
    first = int(np.argmax(values >= best - TIE_TOL))
    kept = np.zeros(N, dtype=bool)
    kept[list(combos[first])] = True
    return _point(W, ell, lam, kept)


def _value(Wc: np.ndarray, lam: np.ndarray, rows: np.ndarray) -> float:
    return float(lam @ Wc[rows].min(axis=0))


def _greedy_drop(Wc, lam, alive, budget):
    """Drop ``budget`` rows from ``alive`` one at a time by largest immediate gain."""
    alive = alive.copy()
    idx = np.flatnonzero(alive)
    for _ in range(budget):
        sub = Wc[idx]
        order = np.argsort(sub, axis=0, kind="stable")
        lo = sub[order[0], np.arange(sub.shape[1])]
        second = sub[order[1], np.arange(sub.shape[1])] if len(idx) > 1 else lo
        gain = np.zeros(len(idx))
        np.add.at(gain, order[0], lam * (second - lo))
        if gain.max() > 0:
            pick = int(np.argmax(gain))
        else:
            pick = int(order[0][int(np.argmax(lam))])
        alive[idx[pick]] = False
        idx = np.delete(idx, pick)
    return alive




@njit(cache=True)
def _lp_gain(gain, cost, lam, budget):
    """Greedy LP solution of the multiple-choice knapsack over column hulls."""
    K, T = gain.shape
    slopes = np.empty(K * T)
    dxs = np.empty(K * T)
    dys = np.empty(K * T)
    cols = np.empty(K * T, dtype=np.int64)
    hx = np.empty(K)
    hy = np.empty(K)
    m = 0
    for t in range(T):
        if lam[t] <= 0.0:
            continue
        h = 1
        hx[0] = 0.0
        hy[0] = 0.0
        for k in range(1, K):
            x = cost[k, t]
            y = gain[k, t]
            if y <= hy[h - 1]:
                continue
            while h >= 2 and (hy[h - 1] - hy[h - 2]) * (x - hx[h - 2]) <= (y - hy[h - 2]) * (hx[h - 1] - hx[h - 2]):
                h -= 1
            hx[h] = x
            hy[h] = y
            h += 1
        for i in range(1, h):
            dxs[m] = hx[i] - hx[i - 1]
            dys[m] = hy[i] - hy[i - 1]
            slopes[m] = dys[m] / dxs[m]
            cols[m] = t
            m += 1
    extra = np.zeros(T)
    used = np.zeros(T)
    left = budget
    for i in np.argsort(-slopes[:m], kind="mergesort"):
        if left <= 0.0:
            break
        take = min(1.0, left / dxs[i])
        extra[cols[i]] += take * dys[i]
        used[cols[i]] += take * dxs[i]
        left -= take * dxs[i]
    return extra, used


def _knapsack_bound(Wu: np.ndarray, lam: np.ndarray, cap: np.ndarray, budget: int):
    """Upper bound on ``lam @ v`` when at most ``budget`` rows of ``Wu`` are dropped.

    Raising column ``t`` to its ``(k+1)``-th smallest value needs the ``k``
    lowest rows gone.  A row that sits among the lowest ``budget`` rows of
    ``m`` columns is charged ``1/m`` in each of them, so the charges of any
    dropped set never exceed its size.  That turns the joint choice into a
    multiple-choice knapsack over columns, whose LP relaxation (greedy over
    upper concave hulls) is a valid bound.  Also returns the per-column
    values of that LP solution.
    """
    n, T = Wu.shape
    part = np.argpartition(Wu, budget, axis=0)[: budget + 1]
    order = np.take_along_axis(part, np.argsort(np.take_along_axis(Wu, part, axis=0), axis=0), axis=0)
    lows = np.take_along_axis(Wu, order, axis=0)
    vals = np.minimum(lows, cap)
    low_rows = order[:budget]
    gain = lam * (vals - vals[0])
    weight = np.ones((budget, T))
    best = None
    for _ in range(1 + REFINE_PASSES):
        tot = np.zeros(n)
        np.add.at(tot, low_rows, weight)
        share = weight / tot[low_rows]
        cost = np.vstack([np.zeros((1, T)), np.cumsum(share, axis=0)])
        extra, used = _lp_gain(gain, cost, lam, float(budget))
        value = float(lam @ vals[0] + extra.sum())
        if best is None or value < best[0]:
            best = (value, extra)
        depth = (cost[1:] <= used + 1e-12).sum(axis=0) + DEPTH_MARGIN
        weight = np.where(np.arange(budget)[:, None] < depth, 1.0, DEEP_WEIGHT)
    value, extra = best
    bcol = vals[0] + np.divide(extra, lam, out=np.zeros(T), where=lam > 0)
    return value, bcol

def _search(W: np.ndarray, lam: np.ndarray, r: int, keep: np.ndarray, drop: np.ndarray,
            target: float | None = None, stats: SearchStats | None = None):
    """Best-first branch and bound over which undecided rows to drop.

    ``W`` is already capped at ``ell``.  Exactly ``r`` rows are dropped in
    total, ``drop`` rows count against that budget and ``keep`` rows may not
    be dropped.  Returns ``(value, dropped_mask)`` of the best completion, or
    of the first completion reaching ``target`` when one is given; ``None``
    if no completion reaches ``target``.
    """
    stats = stats if stats is not None else SearchStats()
    N, T = W.shape
    cols = np.flatnonzero(lam > 0)
    rem = r - int(drop.sum())
    pool = np.flatnonzero(~keep & ~drop)
    if rem < 0 or rem > len(pool):
        return None

    kept_rows = np.flatnonzero(keep)
    if cols.size == 0 or rem == 0:
        dropped = drop.copy()
        dropped[pool[:rem]] = True
        val = _value(W[:, cols], lam[cols], np.flatnonzero(~dropped)) if cols.size else 0.0
        if target is not None and val < target:
            return None
        return val, dropped

    # Rows of the pool that are above the (rem+1)-th smallest in every weighted
    # column can never attain a minimum, so they are kept without branching.
    Wp = W[np.ix_(pool, cols)]
    kth = np.partition(Wp, rem, axis=0)[rem] if len(pool) > rem else np.full(cols.size, np.inf)
    cand_mask = np.any(Wp <= kth, axis=1)
    cand = pool[cand_mask]
    fixed_rows = np.concatenate([kept_rows, pool[~cand_mask]])

    Wc = W[np.ix_(cand, cols)]
    lc = lam[cols]
    n = len(cand)
    fixed_min = W[np.ix_(fixed_rows, cols)].min(axis=0) if len(fixed_rows) else np.full(cols.size, np.inf)

    def evaluate(ex, kp):
        """Bound, current minima and per-column bound values of a node."""
        budget = rem - int(ex.sum())
        und = ~ex & ~kp
        Wu = Wc[und]
        fmin = np.minimum(fixed_min, Wc[kp].min(axis=0)) if kp.any() else fixed_min
        cur = np.minimum(fmin, Wu.min(axis=0)) if len(Wu) else fmin
        if len(Wu) <= budget or budget == 0:
            bcol = fmin if len(Wu) <= budget else cur
            return float(lc @ bcol), cur, bcol, budget, und
        b, bcol = _knapsack_bound(Wu, lc, fmin, budget)
        return b, cur, bcol, budget, und

    def finish(ex, budget, und):
        dropped = drop.copy()
        dropped[cand[ex]] = True
        extra = np.flatnonzero(und)[:budget]
        dropped[cand[extra]] = True
        return dropped

    best_val = -math.inf
    best_drop = None
    thresh = target

    # incumbent from a greedy drop sequence at the root
    if target is None:
        alive = _greedy_drop(Wc, lc, np.ones(n, dtype=bool), rem)
        cur = np.minimum(fixed_min, Wc[alive].min(axis=0)) if alive.any() else fixed_min
        best_val = float(lc @ cur)
        best_drop = finish(~alive, 0, np.zeros(n, dtype=bool))

    root_ex = np.zeros(n, dtype=bool)
    root_kp = np.zeros(n, dtype=bool)
    b, cur, bcol, budget, und = evaluate(root_ex, root_kp)
    stats.root_bound = min(stats.root_bound, b)
    heap = [(-b, 0, root_ex, root_kp)]
    tick = 1
    max_kept = n - rem

    while heap:
        negb, _, ex, kp = heapq.heappop(heap)
        bound = -negb
        if thresh is not None:
            if bound < thresh:
                stats.pruned += 1
                continue
        elif bound <= best_val + TIE_TOL:
            stats.pruned += 1
            continue
        stats.nodes += 1
        bound, cur, bcol, budget, und = evaluate(ex, kp)
        val = float(lc @ cur)
        if val > best_val:
            best_val = val
            best_drop = finish(ex, budget, und)
            if thresh is not None and best_val >= thresh:
                break
        # the whole subtree is dominated by its trivial completion
        if bound - val <= TIE_TOL:
            continue
        gap = lc * (bcol - cur)
        t = int(np.argmax(gap))
        und_idx = np.flatnonzero(und)
        s = und_idx[int(np.argmin(Wc[und_idx, t]))]

        # cheap completion: drop the budget's worth of smallest rows in column t
        if budget > 0:
            order = und_idx[np.argsort(Wc[und_idx, t], kind="stable")[:budget]]
            ex_h = ex.copy()
            ex_h[order] = True
            alive = ~ex_h
            hv = float(lc @ np.minimum(fixed_min, Wc[alive].min(axis=0)))
            if hv > best_val:
                best_val = hv
                best_drop = finish(ex_h, 0, np.zeros(n, dtype=bool))
                if thresh is not None and best_val >= thresh:
                    break

        children = []
        if budget > 0:
            ex2 = ex.copy()
            ex2[s] = True
            children.append((ex2, kp))
        if int(kp.sum()) < max_kept:
            kp2 = kp.copy()
            kp2[s] = True
            children.append((ex, kp2))
        for cex, ckp in children:
            cb = evaluate(cex, ckp)[0]
            if thresh is not None and cb < thresh:
                stats.pruned += 1
                continue
            if thresh is None and cb <= best_val + TIE_TOL:
                stats.pruned += 1
                continue
            heapq.heappush(heap, (-cb, tick, cex, ckp))
            tick += 1

    stats.incumbent = best_val
    if best_drop is None or (thresh is not None and best_val < thresh):
        return None
    return best_val, best_drop


def solve_mip(sset: ScenarioSet, p: float, lam, ell, stats: SearchStats | None = None) -> PePoint:
    """Exact maximizer of ``lam @ v`` over kept sets of size ceil(p*N)."""
    lam, ell, q = _check(sset, p, lam, ell)
    W = np.minimum(sset.samples, ell)
    N = sset.n_samples
    r = N - q
    stats = stats if stats is not None else SearchStats()

    none = np.zeros(N, dtype=bool)
    best, witness = _search(W, lam, r, none, none, stats=stats)
    log.debug("pep search: %d nodes, %d pruned, value %.12g", stats.nodes, stats.pruned, best)
    target = best - TIE_TOL

    # Walk indices in order and keep each one whenever some optimal kept set
    # still allows it; ``witness`` is a dropped set consistent with the
    # decisions so far that reaches the target.
    cols = lam > 0
    keep = np.zeros(N, dtype=bool)
    drop = np.zeros(N, dtype=bool)
    for s in range(N):
        n_keep = int(keep.sum())
        if n_keep == q:
            drop[s:] = True
            break
        if N - s == q - n_keep:
            keep[s:] = True
            break
        if not witness[s]:
            keep[s] = True
            continue
        # s is dropped in the witness; try swapping it for a later undecided row
        later = np.flatnonzero(~witness[s + 1:]) + s + 1
        if later.size:
            alive = ~witness
            v_cur = W[alive][:, cols].min(axis=0) if cols.any() else np.zeros(0)
            if float(lam[cols] @ np.minimum(v_cur, W[s, cols])) >= target:
                witness = witness.copy()
                witness[s] = False
                witness[later[-1]] = True
                keep[s] = True
                continue
        trial = keep.copy()
        trial[s] = True
        found = _search(W, lam, r, trial, drop, target=target)
        if found is None:
            drop[s] = True
        else:
            keep[s] = True
            witness = found[1]
    return _point(sset.samples, ell, lam, keep)
