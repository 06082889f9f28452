"""Compiled core of the clearing DP.

States are residual digit vectors (bandwidth and compute per seller slot,
in units of the gcd of that seller's demands) packed into int64 codes with a
mixed radix. Each layer is a sorted array of unique codes plus the best gain
reaching it. A Lagrangian bound (buyer exclusiveness priced out, leaving one
small 2-D knapsack table per seller) and a beam-search lower bound prune
states that cannot lie on an optimal path.
"""

from __future__ import annotations

import numpy as np
from numba import njit

OK = 0
STATE_CAP = 1
INCONSISTENT = 2


@njit(cache=True)
def _encode(dig, stride):
    c = 0
    for d in range(dig.size):
        c += dig[d] * stride[d]
    return c


@njit(cache=True)
def _decode(code, stride, radix, out):
    for d in range(out.size):
        out[d] = (code // stride[d]) % radix[d]


@njit(cache=True)
def _clamp(dig, rem_row):
    for d in range(dig.size):
        if dig[d] > rem_row[d]:
            dig[d] = rem_row[d]


@njit(cache=True)
def build_tables(prices, ptr, slot, db, dc, margin, radix, m, maxr):
    """tables[i, s] is the best priced profit seller s can collect from buyers i.. at each residual."""
    n = ptr.size - 1
    tables = np.zeros((n + 1, m, maxr, maxr))
    suffix = np.zeros(n + 1)
    for i in range(n - 1, -1, -1):
        suffix[i] = suffix[i + 1] + prices[i]
        tables[i] = tables[i + 1]
        for k in range(ptr[i], ptr[i + 1]):
            p = margin[k] - prices[i]
            if p <= 0.0:
                continue
            s = slot[k]
            rb, rc = radix[2 * s], radix[2 * s + 1]
            for a in range(db[k], rb):
                for b in range(dc[k], rc):
                    v = p + tables[i + 1, s, a - db[k], b - dc[k]]
                    if v > tables[i, s, a, b]:
                        tables[i, s, a, b] = v
    return tables, suffix


@njit(cache=True)
def _bound(tables, suffix, layer, dig, m):
    ub = suffix[layer]
    for s in range(m):
        ub += tables[layer, s, dig[2 * s], dig[2 * s + 1]]
    return ub


@njit(cache=True)
def _root_counts(tables, start_dig, ptr, slot, db, dc, m):
    """How many sellers pick each buyer in the root knapsack solutions."""
    n = ptr.size - 1
    counts = np.zeros(n)
    for s in range(m):
        a, b = start_dig[2 * s], start_dig[2 * s + 1]
        for i in range(n):
            if tables[i, s, a, b] == tables[i + 1, s, a, b]:
                continue
            for k in range(ptr[i], ptr[i + 1]):
                if slot[k] == s:
                    counts[i] += 1.0
                    a -= db[k]
                    b -= dc[k]
                    break
    return counts


@njit(cache=True)
def lagrangian_prices(best, lb, start_dig, ptr, slot, db, dc, margin, radix, m, maxr, iters, gap):
    """Buyer prices minimising the root Lagrangian bound (scan of scaled prices, then Polyak steps)."""
    n = ptr.size - 1
    prices = best.copy()
    ub = np.inf
    for j in range(5):
        lam = best * (0.25 * j)
        t, sfx = build_tables(lam, ptr, slot, db, dc, margin, radix, m, maxr)
        v = _bound(t, sfx, 0, start_dig, m)
        if v < ub:
            ub = v
            prices = lam.copy()
    lam = prices.copy()
    for _ in range(iters):
        if ub - lb <= gap * max(lb, 1.0):
            break
        t, sfx = build_tables(lam, ptr, slot, db, dc, margin, radix, m, maxr)
        v = _bound(t, sfx, 0, start_dig, m)
        if v < ub:
            ub = v
            prices = lam.copy()
        g = _root_counts(t, start_dig, ptr, slot, db, dc, m) - 1.0
        norm = 0.0
        for i in range(n):
            if lam[i] <= 0.0 and g[i] < 0.0:
                g[i] = 0.0
            norm += g[i] * g[i]
        if norm == 0.0:
            break
        step = (v - lb) / norm
        for i in range(n):
            lam[i] = max(lam[i] + step * g[i], 0.0)
    return prices


@njit(cache=True)
def _expand(codes, gains, layer, ptr, slot, db, dc, margin, radix, stride, rem):
    """All successors of one layer (skip first, then each option), with their gains."""
    nd = radix.size
    nopt = ptr[layer + 1] - ptr[layer]
    cap = codes.size * (1 + nopt)
    out_c = np.empty(cap, dtype=np.int64)
    out_g = np.empty(cap)
    dig = np.empty(nd, dtype=np.int64)
    nxt = np.empty(nd, dtype=np.int64)
    rem_row = rem[layer + 1]
    w = 0
    for j in range(codes.size):
        _decode(codes[j], stride, radix, dig)
        nxt[:] = dig
        _clamp(nxt, rem_row)
        out_c[w] = _encode(nxt, stride)
        out_g[w] = gains[j]
        w += 1
        for k in range(ptr[layer], ptr[layer + 1]):
            s = slot[k]
            if dig[2 * s] < db[k] or dig[2 * s + 1] < dc[k]:
                continue
            nxt[:] = dig
            nxt[2 * s] -= db[k]
            nxt[2 * s + 1] -= dc[k]
            _clamp(nxt, rem_row)
            out_c[w] = _encode(nxt, stride)
            out_g[w] = gains[j] + margin[k]
            w += 1
    return out_c[:w], out_g[:w]


@njit(cache=True)
def _dedup(codes, gains):
    """Unique codes in ascending order, each with its maximum gain."""
    order = np.argsort(codes, kind="mergesort")
    uc = np.empty(codes.size, dtype=np.int64)
    ug = np.empty(codes.size)
    w = -1
    for t in range(order.size):
        c, g = codes[order[t]], gains[order[t]]
        if w >= 0 and uc[w] == c:
            if g > ug[w]:
                ug[w] = g
        else:
            w += 1
            uc[w] = c
            ug[w] = g
    return uc[: w + 1], ug[: w + 1]


@njit(cache=True)
def _priorities(codes, gains, layer, tables, suffix, stride, radix, m):
    dig = np.empty(radix.size, dtype=np.int64)
    pr = np.empty(codes.size)
    for j in range(codes.size):
        _decode(codes[j], stride, radix, dig)
        pr[j] = gains[j] + _bound(tables, suffix, layer, dig, m)
    return pr


@njit(cache=True)
def beam_lower_bound(start, width, ptr, slot, db, dc, margin, radix, stride, rem, tables, suffix, m):
    """Welfare of a feasible solution found by keeping the ``width`` most promising states per layer."""
    n = ptr.size - 1
    codes = np.array([start], dtype=np.int64)
    gains = np.zeros(1)
    for i in range(n):
        c, g = _expand(codes, gains, i, ptr, slot, db, dc, margin, radix, stride, rem)
        codes, gains = _dedup(c, g)
        if codes.size > width:
            pr = _priorities(codes, gains, i + 1, tables, suffix, stride, radix, m)
            keep = np.sort(np.argsort(-pr, kind="mergesort")[:width])
            codes, gains = codes[keep], gains[keep]
    return gains.max()


@njit(cache=True)
def _lookup(codes, values, c):
    k = np.searchsorted(codes, c)
    if k < codes.size and codes[k] == c:
        return values[k]
    return -np.inf


@njit(cache=True)
def solve(start, lb, state_cap, eps, ptr, slot, db, dc, margin, radix, stride, rem, tables, suffix, m):
    """Exact layered DP; returns (status, chosen option index per buyer or -1)."""
    n = ptr.size - 1
    nd = radix.size
    offs = np.zeros(n + 2, dtype=np.int64)
    all_c = np.empty(1024, dtype=np.int64)
    all_c[0] = start
    offs[1] = 1
    codes = np.array([start], dtype=np.int64)
    gains = np.zeros(1)
    choice = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        c, g = _expand(codes, gains, i, ptr, slot, db, dc, margin, radix, stride, rem)
        c, g = _dedup(c, g)
        if lb == -np.inf:
            codes, gains = c, g
        else:
            keep = _priorities(c, g, i + 1, tables, suffix, stride, radix, m) >= lb
            codes, gains = c[keep], g[keep]
        total = offs[i + 1] + codes.size
        if total > state_cap:
            return STATE_CAP, choice
        if total > all_c.size:
            grown = np.empty(max(2 * all_c.size, total), dtype=np.int64)
            grown[: offs[i + 1]] = all_c[: offs[i + 1]]
            all_c = grown
        all_c[offs[i + 1]:total] = codes
        offs[i + 2] = total

    # backward values; pruned successors are worth -inf
    vals = np.full(offs[n + 1], -np.inf)
    vals[offs[n]:offs[n + 1]] = 0.0
    dig = np.empty(nd, dtype=np.int64)
    nxt = np.empty(nd, dtype=np.int64)
    for i in range(n - 1, -1, -1):
        nc = all_c[offs[i + 1]:offs[i + 2]]
        nv = vals[offs[i + 1]:offs[i + 2]]
        for j in range(offs[i], offs[i + 1]):
            _decode(all_c[j], stride, radix, dig)
            nxt[:] = dig
            _clamp(nxt, rem[i + 1])
            best = _lookup(nc, nv, _encode(nxt, stride))
            for k in range(ptr[i], ptr[i + 1]):
                s = slot[k]
                if dig[2 * s] < db[k] or dig[2 * s + 1] < dc[k]:
                    continue
                nxt[:] = dig
                nxt[2 * s] -= db[k]
                nxt[2 * s + 1] -= dc[k]
                _clamp(nxt, rem[i + 1])
                v = margin[k] + _lookup(nc, nv, _encode(nxt, stride))
                if v > best:
                    best = v
            vals[j] = best

    # forward reconstruction: skip on ties, then the lowest seller slot
    state = start
    for i in range(n):
        target = _lookup(all_c[offs[i]:offs[i + 1]], vals[offs[i]:offs[i + 1]], state)
        nc = all_c[offs[i + 1]:offs[i + 2]]
        nv = vals[offs[i + 1]:offs[i + 2]]
        _decode(state, stride, radix, dig)
        nxt[:] = dig
        _clamp(nxt, rem[i + 1])
        skip = _encode(nxt, stride)
        if _lookup(nc, nv, skip) >= target - eps:
            state = skip
            continue
        for k in range(ptr[i], ptr[i + 1]):
            s = slot[k]
            if dig[2 * s] < db[k] or dig[2 * s + 1] < dc[k]:
                continue
            nxt[:] = dig
            nxt[2 * s] -= db[k]
            nxt[2 * s + 1] -= dc[k]
            _clamp(nxt, rem[i + 1])
            c = _encode(nxt, stride)
            if margin[k] + _lookup(nc, nv, c) >= target - eps:
                choice[i] = k
                state = c
                break
        if choice[i] < 0:
            return INCONSISTENT, choice
    return OK, choice
