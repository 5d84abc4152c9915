"""Compiled inner loops of the association search.

Arrays follow the ``(BS, AV)`` layout of ``SlicingProblem.arrays``: ``logc``
holds ``ln(rate at fraction one)`` (``-inf`` where the BS cannot serve the
AV) and ``fmin`` the minimum bandwidth fraction each AV needs from each BS.
The score of an association is ``sum_k logc[j(k), k] + sum_j G_j`` where
``G_j`` is the best ``sum ln f`` at BS ``j`` (see ``share_value``).
"""
import numpy as np
from numba import njit

OVERLOAD = -1e9
TOL = 1e-10


@njit(cache=True)
def free_value(n):
    if n <= 1.0:
        return 0.0
    return -n * np.log(n)


@njit(cache=True)
def share_value(vals):
    """Best ``sum ln f`` over fractions summing to one with ``f >= vals``.

    Overloaded sets (minima summing above one) score ``OVERLOAD * (1 + excess)``.
    """
    n = vals.size
    if n == 0:
        return 0.0
    total = 0.0
    mx = 0.0
    for v in vals:
        total += v
        if v > mx:
            mx = v
    if not np.isfinite(total):
        return OVERLOAD * (1.0 + 1e6)
    if total > 1.0 + 1e-12:
        return OVERLOAD * (1.0 + (total - 1.0))
    if mx * n <= 1.0:
        return -n * np.log(n)
    srt = np.sort(vals)[::-1]
    remaining = 1.0
    free = n
    acc = 0.0
    for v in srt:
        if v * free > remaining:
            acc += np.log(v)
            remaining -= v
            free -= 1
        else:
            break
    return acc + free * np.log(remaining / free)


@njit(cache=True)
def _members(row, assoc, j, add, skip):
    cnt = 0
    for k in range(assoc.size):
        if assoc[k] == j and k != skip:
            cnt += 1
    if add >= 0:
        cnt += 1
    out = np.empty(cnt)
    i = 0
    for k in range(assoc.size):
        if assoc[k] == j and k != skip:
            out[i] = row[k]
            i += 1
    if add >= 0:
        out[i] = row[add]
    return out


@njit(cache=True)
def _score(assoc, logc, fmin):
    J, N = logc.shape
    s = 0.0
    for k in range(N):
        s += logc[assoc[k], k]
    for j in range(J):
        s += share_value(_members(fmin[j], assoc, j, -1, -1))
    return s


@njit(cache=True)
def greedy(logc, fmin):
    """Insert AVs in index order at the BS with the largest marginal score."""
    J, N = logc.shape
    assoc = np.full(N, -1, dtype=np.int64)
    n = np.zeros(J)
    maxf = np.zeros(J)
    G = np.zeros(J)
    for k in range(N):
        best = -np.inf
        bj = -1
        bg = 0.0
        for j in range(J):
            if not np.isfinite(logc[j, k]):
                continue
            fv = free_value(n[j] + 1.0)
            if logc[j, k] + fv - G[j] <= best + TOL:
                continue
            if max(maxf[j], fmin[j, k]) * (n[j] + 1.0) <= 1.0:
                g_new = fv
            else:
                g_new = share_value(_members(fmin[j], assoc, j, k, -1))
            gain = logc[j, k] + g_new - G[j]
            if gain > best + TOL:
                best = gain
                bj = j
                bg = g_new
        if bj < 0:
            return assoc, False
        assoc[k] = bj
        n[bj] += 1.0
        if fmin[bj, k] > maxf[bj]:
            maxf[bj] = fmin[bj, k]
        G[bj] = bg
    return assoc, True


@njit(cache=True)
def local_search(assoc0, logc, fmin, max_moves):
    """Best-improvement single-AV relocation; returns the association and the score trace."""
    J, N = logc.shape
    assoc = assoc0.copy()
    n = np.zeros(J)
    maxf = np.zeros(J)
    for k in range(N):
        j = assoc[k]
        n[j] += 1.0
        if fmin[j, k] > maxf[j]:
            maxf[j] = fmin[j, k]
    G = np.empty(J)
    for j in range(J):
        G[j] = share_value(_members(fmin[j], assoc, j, -1, -1))
    score = _score(assoc, logc, fmin)
    trace = np.empty(max_moves + 1)
    trace[0] = score
    m = 0
    while m < max_moves:
        best_delta = TOL
        bj = -1
        bk = -1
        bgj = 0.0
        bga = 0.0
        for k in range(N):
            a = assoc[k]
            cur = logc[a, k]
            rem_free = free_value(n[a] - 1.0)
            ga = 0.0
            ga_known = False
            for j in range(J):
                if j == a or not np.isfinite(logc[j, k]):
                    continue
                fv = free_value(n[j] + 1.0)
                if logc[j, k] - cur + fv - G[j] + rem_free - G[a] <= best_delta:
                    continue
                if not ga_known:
                    if n[a] <= 1.0:
                        ga = 0.0
                    elif maxf[a] * (n[a] - 1.0) <= 1.0:
                        ga = rem_free
                    else:
                        ga = share_value(_members(fmin[a], assoc, a, -1, k))
                    ga_known = True
                if max(maxf[j], fmin[j, k]) * (n[j] + 1.0) <= 1.0:
                    gj = fv
                else:
                    gj = share_value(_members(fmin[j], assoc, j, k, -1))
                delta = logc[j, k] - cur + gj - G[j] + ga - G[a]
                if delta > best_delta:
                    best_delta = delta
                    bj = j
                    bk = k
                    bgj = gj
                    bga = ga
        if bj < 0:
            break
        a = assoc[bk]
        assoc[bk] = bj
        n[bj] += 1.0
        n[a] -= 1.0
        G[bj] = bgj
        G[a] = bga
        if fmin[bj, bk] > maxf[bj]:
            maxf[bj] = fmin[bj, bk]
        mx = 0.0
        for k in range(N):
            if assoc[k] == a and fmin[a, k] > mx:
                mx = fmin[a, k]
        maxf[a] = mx
        new_score = _score(assoc, logc, fmin)
        if new_score < score - 1e-7 * max(1.0, abs(score)):
            raise RuntimeError("local search decreased the score")
        score = new_score
        m += 1
        trace[m] = score
    return assoc, trace[: m + 1]


@njit(cache=True)
def beta_arrays(eff, cover, bandwidth, min_rates, beta):
    J, N, S = eff.shape
    logc = np.full((J, N), -np.inf)
    fmin = np.full((J, N), np.inf)
    for j in range(J):
        for k in range(N):
            if not cover[j, k]:
                continue
            c = 0.0
            for s in range(S):
                c += beta[s] * eff[j, k, s]
            c *= bandwidth
            if c > 0.0:
                logc[j, k] = np.log(c)
                fmin[j, k] = min_rates[k] / c
    return logc, fmin


@njit(cache=True)
def search_one(eff, cover, bandwidth, min_rates, beta, start, max_moves):
    """Greedy (or the given start) plus local search at one beta.

    Returns ``(score, assoc, trace)``; ``score`` is ``-inf`` when no feasible
    association was reached.
    """
    logc, fmin = beta_arrays(eff, cover, bandwidth, min_rates, beta)
    J, N = logc.shape
    for k in range(N):
        ok = False
        for j in range(J):
            if np.isfinite(logc[j, k]):
                ok = True
                break
        if not ok:
            return -np.inf, np.full(N, -1, dtype=np.int64), np.empty(0)
    if start.size == N:
        for k in range(N):
            if not np.isfinite(logc[start[k], k]):
                return -np.inf, np.full(N, -1, dtype=np.int64), np.empty(0)
        assoc = start.copy()
    else:
        assoc, ok = greedy(logc, fmin)
        if not ok:
            return -np.inf, assoc, np.empty(0)
    assoc, trace = local_search(assoc, logc, fmin, max_moves)
    score = trace[-1]
    if score <= OVERLOAD / 2:
        return -np.inf, assoc, trace
    return score, assoc, trace


@njit(cache=True)
def search_grid(eff, cover, bandwidth, min_rates, grid, max_moves):
    """Run ``search_one`` at every grid row; keep the first strictly best feasible point."""
    N = eff.shape[1]
    best = -np.inf
    best_i = -1
    best_assoc = np.full(N, -1, dtype=np.int64)
    best_trace = np.empty(0)
    empty = np.empty(0, dtype=np.int64)
    for g in range(grid.shape[0]):
        score, assoc, trace = search_one(eff, cover, bandwidth, min_rates, grid[g], empty, max_moves)
        if score > best + TOL:
            best = score
            best_i = g
            best_assoc = assoc
            best_trace = trace
    return best_i, best, best_assoc, best_trace
