"""Compiled kernels for tree growth and split scanning.

The same scan routine backs both the module-level split-search functions
and the whole-tree grower, so every code path prices a candidate split
with identical arithmetic (sequential left-to-right accumulation).

Probabilistic routing and per-node feature subsampling draw from a
SplitMix64 stream keyed by (tree seed, node id); 53-bit uniforms are
(state >> 11) / 2^53. This stream is self-contained and documented so a
reimplementation in any language reproduces the same trees.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# Strategy codes shared with tree.py
STRAT_MIA = 0
STRAT_SURROGATE = 1
STRAT_PROB = 2
STRAT_BLOCK = 3

# Route codes (node.route): leaf = -1
ROUTE_L = 0
ROUTE_R = 1
ROUTE_SEP = 2
ROUTE_PROB = 3
ROUTE_SURR = 4


@njit(cache=True, inline="always")
def _mix64(state):
    z = (state + np.uint64(0x9E3779B97F4A7C15)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def _node_stream(seed, node_id):
    return _mix64(_mix64(np.uint64(seed) ^ np.uint64(node_id)))


@njit(cache=True, inline="always")
def _uniform(state):
    """Advance the stream and return (state, u) with u in [0, 1)."""
    state = _mix64(state)
    return state, np.float64(state >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def scan_feature(xs, ys, my, my2, nm, min_leaf, with_missing):
    """Best threshold on one feature; xs ascending observed values.

    With with_missing, each cut is priced twice (missing block of nm rows
    with sums (my, my2) joined to the left or to the right child).
    Without it, the block is ignored and the criterion covers observed
    rows only. Ties resolve to the smallest threshold, left route first.

    Returns (found, sse, z, route, nl, ly, ly2, total_y, total_y2).
    """
    n = xs.shape[0]
    total_y = 0.0
    total_y2 = 0.0
    for i in range(n):
        total_y += ys[i]
        total_y2 += ys[i] * ys[i]
    best_sse = np.inf
    best_z = 0.0
    best_route = ROUTE_L
    best_nl = 0
    best_ly = 0.0
    best_ly2 = 0.0
    ly = 0.0
    ly2 = 0.0
    for k in range(1, n):
        ly += ys[k - 1]
        ly2 += ys[k - 1] * ys[k - 1]
        if xs[k - 1] == xs[k]:
            continue
        nl = k
        nr = n - k
        ry = total_y - ly
        ry2 = total_y2 - ly2
        if with_missing:
            if nl + nm >= min_leaf and nr >= min_leaf:
                sse = ((ly2 + my2) - (ly + my) * (ly + my) / (nl + nm)) + (
                    ry2 - ry * ry / nr
                )
                if sse < best_sse:
                    best_sse = sse
                    best_z = 0.5 * (xs[k - 1] + xs[k])
                    best_route = ROUTE_L
                    best_nl = nl
                    best_ly = ly
                    best_ly2 = ly2
            if nl >= min_leaf and nr + nm >= min_leaf:
                sse = (ly2 - ly * ly / nl) + (
                    (ry2 + my2) - (ry + my) * (ry + my) / (nr + nm)
                )
                if sse < best_sse:
                    best_sse = sse
                    best_z = 0.5 * (xs[k - 1] + xs[k])
                    best_route = ROUTE_R
                    best_nl = nl
                    best_ly = ly
                    best_ly2 = ly2
        else:
            if nl >= min_leaf and nr >= min_leaf:
                sse = (ly2 - ly * ly / nl) + (ry2 - ry * ry / nr)
                if sse < best_sse:
                    best_sse = sse
                    best_z = 0.5 * (xs[k - 1] + xs[k])
                    best_route = ROUTE_L
                    best_nl = nl
                    best_ly = ly
                    best_ly2 = ly2
    found = np.isfinite(best_sse)
    return found, best_sse, best_z, best_route, best_nl, best_ly, best_ly2, total_y, total_y2


@njit(cache=True)
def surrogate_scan(xs, ts):
    """Best one-cut classifier of a 0/1 target along a sorted feature.

    ts holds 1.0 where the primary split sends the row left. Returns
    (found, wrong_count, z, flip); plain orientation (low values -> left)
    wins ties, then the smaller threshold.
    """
    n = xs.shape[0]
    total_t = 0.0
    for i in range(n):
        total_t += ts[i]
    best_wrong = np.inf
    best_z = 0.0
    best_flip = False
    lt = 0.0
    for k in range(1, n):
        lt += ts[k - 1]
        if xs[k - 1] == xs[k]:
            continue
        wrong_plain = (k - lt) + (total_t - lt)
        wrong_flip = lt + (n - k) - (total_t - lt)
        if wrong_plain < best_wrong:
            best_wrong = wrong_plain
            best_z = 0.5 * (xs[k - 1] + xs[k])
            best_flip = False
        if wrong_flip < best_wrong:
            best_wrong = wrong_flip
            best_z = 0.5 * (xs[k - 1] + xs[k])
            best_flip = True
    return np.isfinite(best_wrong), best_wrong, best_z, best_flip


@njit(cache=True)
def _seq_mean(y, rows, start, end):
    total = 0.0
    for i in range(start, end):
        total += y[rows[i]]
    return total / (end - start)


@njit(cache=True)
def grow_tree(
    values,
    mask,
    y,
    order,
    rows,
    allowed,
    mtry,
    strategy,
    max_depth,
    min_split,
    min_leaf,
    min_gain_abs,
    seed,
):
    """Grow a full tree with an explicit stack; returns flat node arrays.

    order[f] holds all row ids sorted ascending by feature f with masked
    rows last; rows is the primary row ordering. Both are partitioned
    stably in place as nodes split, so no sorting happens during growth.
    """
    n, d = values.shape
    cap = 2 * max(1, n // min_leaf) + 8
    feature = np.full(cap, -1, np.int32)
    threshold = np.full(cap, np.nan)
    route = np.full(cap, np.int8(-1))
    p_left = np.full(cap, np.nan)
    left = np.full(cap, -1, np.int32)
    right = np.full(cap, -1, np.int32)
    n_node = np.zeros(cap, np.int32)
    value = np.zeros(cap)
    majority = np.zeros(cap, np.int8)
    max_rules = cap * max(1, d - 1) if strategy == STRAT_SURROGATE else 1
    surr_feature = np.zeros(max_rules, np.int32)
    surr_threshold = np.zeros(max_rules)
    surr_flip = np.zeros(max_rules, np.uint8)
    surr_err = np.zeros(max_rules)
    surr_start = np.zeros(cap, np.int64)
    surr_count = np.zeros(cap, np.int32)
    n_rules = 0
    train_pred = np.zeros(n)

    xs = np.empty(n)
    ys = np.empty(n)
    ts = np.empty(n)
    go_left = np.zeros(n, np.uint8)
    tmp = np.empty(n, np.int32)
    cand = np.empty(d, np.int64)
    pool = np.empty(d, np.int64)

    stack_node = np.empty(cap, np.int64)
    stack_depth = np.empty(cap, np.int64)
    stack_start = np.empty(cap, np.int64)
    stack_end = np.empty(cap, np.int64)
    top = 0
    stack_node[0] = 0
    stack_depth[0] = 0
    stack_start[0] = 0
    stack_end[0] = n
    next_id = 1

    while top >= 0:
        node_id = stack_node[top]
        depth = stack_depth[top]
        start = stack_start[top]
        end = stack_end[top]
        top -= 1
        nn = end - start
        node_value = _seq_mean(y, rows, start, end)
        n_node[node_id] = nn
        value[node_id] = node_value

        pure = True
        y0 = y[rows[start]]
        for i in range(start + 1, end):
            if y[rows[i]] != y0:
                pure = False
                break
        if depth >= max_depth or nn < min_split or pure:
            for i in range(start, end):
                train_pred[rows[i]] = node_value
            continue

        stream = _node_stream(seed, node_id)
        n_allowed = allowed.shape[0]
        if 0 < mtry < n_allowed:
            for i in range(n_allowed):
                pool[i] = allowed[i]
            remaining = n_allowed
            for i in range(mtry):
                stream = _mix64(stream)
                j = np.int64(stream % np.uint64(remaining))
                cand[i] = pool[j]
                pool[j] = pool[remaining - 1]
                remaining -= 1
            n_cand = mtry
            # ascending feature order restores the documented tie-break
            for i in range(1, n_cand):
                key = cand[i]
                j = i - 1
                while j >= 0 and cand[j] > key:
                    cand[j + 1] = cand[j]
                    j -= 1
                cand[j + 1] = key
        else:
            for i in range(n_allowed):
                cand[i] = allowed[i]
            n_cand = n_allowed

        best_found = False
        best_key = np.inf  # criterion for mia, negative gain otherwise
        best_feature = -1
        best_z = 0.0
        best_route = ROUTE_L
        best_sep = False
        best_nl = 0
        best_ly = 0.0
        best_ly2 = 0.0
        best_nobs = 0
        best_ty = 0.0
        best_ty2 = 0.0
        best_my = 0.0
        best_my2 = 0.0
        best_nm = 0

        for ci in range(n_cand):
            f = cand[ci]
            nm = 0
            i = end - 1
            while i >= start and mask[order[f, i], f]:
                nm += 1
                i -= 1
            nobs =nn - nm
            my = 0.0
            my2 = 0.0
            for i in range(end - nm, end):
                yv = y[order[f, i]]
                my += yv
                my2 += yv * yv
            for i in range(nobs):
                r = order[f, start + i]
                xs[i] = values[r, f]
                ys[i] = y[r]
            if strategy == STRAT_MIA:
                if nobs >= 2:
                    found, sse, z, rt, nl, ly, ly2, ty, ty2 = scan_feature(
                        xs[:nobs], ys[:nobs], my, my2, nm, min_leaf, True
                    )
                    if found and sse < best_key:
                        best_found = True
                        best_key = sse
                        best_feature = f
                        best_z = z
                        best_route = rt
                        best_sep = False
                        best_nl = nl
                        best_ly = ly
                        best_ly2 = ly2
                        best_nobs = nobs
                        best_ty = ty
                        best_ty2 = ty2
                        best_my = my
                        best_my2 = my2
                        best_nm = nm
                if nm >= min_leaf and nobs >= min_leaf:
                    ty = 0.0
                    ty2 = 0.0
                    for i in range(nobs):
                        ty += ys[i]
                        ty2 += ys[i] * ys[i]
                    sse = (ty2 - ty * ty / nobs) + (my2 - my * my / nm)
                    if sse < best_key:
                        best_found = True
                        best_key = sse
                        best_feature = f
                        best_sep = True
                        best_nobs = nobs
                        best_nm = nm
            else:
                if nobs < 2 * min_leaf:
                    continue
                found, sse, z, rt, nl, ly, ly2, ty, ty2 = scan_feature(
                    xs[:nobs], ys[:nobs], 0.0, 0.0, 0, min_leaf, False
                )
                if found:
                    gain = (ty2 - ty * ty / nobs) - sse
                    if -gain < best_key:
                        best_found = True
                        best_key = -gain
                        best_feature = f
                        best_z = z
                        best_route = rt
                        best_sep = False
                        best_nl = nl
                        best_ly = ly
                        best_ly2 = ly2
                        best_nobs = nobs
                        best_ty = ty
                        best_ty2 = ty2
                        best_my = my
                        best_my2 = my2
                        best_nm = nm

        if not best_found:
            for i in range(start, end):
                train_pred[rows[i]] = node_value
            continue

        if min_gain_abs > 0.0:
            if strategy == STRAT_MIA:
                ty_all = 0.0
                ty2_all = 0.0
                for i in range(start, end):
                    yv = y[rows[i]]
                    ty_all += yv
                    ty2_all += yv * yv
                gain = (ty2_all - ty_all * ty_all / nn) - best_key
            else:
                gain = -best_key
            if gain < min_gain_abs:
                for i in range(start, end):
                    train_pred[rows[i]] = node_value
                continue

        f = best_feature
        if best_sep:
            for i in range(start, end):
                r = rows[i]
                go_left[r] = 0 if mask[r, f] else 1
            feature[node_id] = f
            route[node_id] = ROUTE_SEP
        else:
            for i in range(start, end):
                r = rows[i]
                if mask[r, f]:
                    go_left[r] = 0
                else:
                    go_left[r] = 1 if values[r, f] <= best_z else 0
            feature[node_id] = f
            threshold[node_id] = best_z
            if strategy == STRAT_MIA:
                route[node_id] = best_route
                if best_route == ROUTE_L:
                    for i in range(end - best_nm, end):
                        go_left[order[f, i]] = 1
            else:
                nl_obs = best_nl
                nr_obs = best_nobs - best_nl
                majority[node_id] = 0 if nl_obs >= nr_obs else 1
                if strategy == STRAT_PROB:
                    pl = nl_obs / (nl_obs + nr_obs)
                    p_left[node_id] = pl
                    route[node_id] = ROUTE_PROB
                    for i in range(end - best_nm, end):
                        stream, u = _uniform(stream)
                        if u < pl:
                            go_left[order[f, i]] = 1
                elif strategy == STRAT_BLOCK:
                    ry = best_ty - best_ly
                    ry2 = best_ty2 - best_ly2
                    nr = best_nobs - best_nl
                    err_l = (
                        (best_ly2 + best_my2)
                        - (best_ly + best_my) * (best_ly + best_my) / (best_nl + best_nm)
                    ) + (ry2 - ry * ry / nr)
                    err_r = (best_ly2 - best_ly * best_ly / best_nl) + (
                        (ry2 + best_my2) - (ry + best_my) * (ry + best_my) / (nr + best_nm)
                    )
                    if err_l <= err_r:
                        route[node_id] = ROUTE_L
                        for i in range(end - best_nm, end):
                            go_left[order[f, i]] = 1
                    else:
                        route[node_id] = ROUTE_R
                else:  # surrogate
                    route[node_id] = ROUTE_SURR
                    nl_count = np.int64(nl_obs)
                    nr_count = np.int64(nr_obs)
                    blind = min(nl_count, nr_count) / best_nobs
                    rule_begin = n_rules
                    for f2 in range(d):
                        if f2 == f:
                            continue
                        nb = 0
                        for i in range(start, end):
                            r = order[f2, i]
                            if mask[r, f2]:
                                break
                            if not mask[r, f]:
                                xs[nb] = values[r, f2]
                                ts[nb] = 1.0 if values[r, f] <= best_z else 0.0
                                nb += 1
                        if nb < 2:
                            continue
                        found2, wrong, z2, flip2 = surrogate_scan(xs[:nb], ts[:nb])
                        if not found2:
                            continue
                        err = wrong / nb
                        if err < blind:
                            # insertion by (err, feature); f2 ascends already
                            pos = n_rules
                            while pos > rule_begin and surr_err[pos - 1] > err:
                                surr_feature[pos] = surr_feature[pos - 1]
                                surr_threshold[pos] = surr_threshold[pos - 1]
                                surr_flip[pos] = surr_flip[pos - 1]
                                surr_err[pos] = surr_err[pos - 1]
                                pos -= 1
                            surr_feature[pos] = f2
                            surr_threshold[pos] = z2
                            surr_flip[pos] = 1 if flip2 else 0
                            surr_err[pos] = err
                            n_rules += 1
                    surr_start[node_id] = rule_begin
                    surr_count[node_id] = n_rules - rule_begin
                    for i in range(end - best_nm, end):
                        r = order[f, i]
                        side = majority[node_id]
                        for q in range(rule_begin, n_rules):
                            f2 = surr_feature[q]
                            if not mask[r, f2]:
                                lo = values[r, f2] <= surr_threshold[q]
                                if surr_flip[q] == 1:
                                    side = 1 if lo else 0
                                else:
                                    side = 0 if lo else 1
                                break
                        if side == 0:
                            go_left[r] = 1

        n_left = np.int64(0)
        for i in range(start, end):
            if go_left[rows[i]] == 1:
                n_left += 1
        if n_left == 0 or n_left == nn:
            feature[node_id] = -1
            threshold[node_id] = np.nan
            route[node_id] = -1
            for i in range(start, end):
                train_pred[rows[i]] = node_value
            continue

        # stable partition of the primary ordering and every feature ordering
        w = 0
        for i in range(start, end):
            r = rows[i]
            if go_left[r] == 1:
                tmp[w] = r
                w += 1
        for i in range(start, end):
            r = rows[i]
            if go_left[r] == 0:
                tmp[w] = r
                w += 1
        for i in range(nn):
            rows[start + i] = tmp[i]
        for f2 in range(d):
            w = 0
            for i in range(start, end):
                r = order[f2, i]
                if go_left[r] == 1:
                    tmp[w] = r
                    w += 1
            for i in range(start, end):
                r = order[f2, i]
                if go_left[r] == 0:
                    tmp[w] = r
                    w += 1
            for i in range(nn):
                order[f2, start + i] = tmp[i]

        left_id = next_id
        right_id = next_id + 1
        next_id += 2
        left[node_id] = left_id
        right[node_id] = right_id
        mid = start + n_left
        top += 1
        stack_node[top] = right_id
        stack_depth[top] = depth + 1
        stack_start[top] = mid
        stack_end[top] = end
        top += 1
        stack_node[top] = left_id
        stack_depth[top] = depth + 1
        stack_start[top] = start
        stack_end[top] = mid

    return (
        feature[:next_id].copy(),
        threshold[:next_id].copy(),
        route[:next_id].copy(),
        p_left[:next_id].copy(),
        left[:next_id].copy(),
        right[:next_id].copy(),
        n_node[:next_id].copy(),
        value[:next_id].copy(),
        majority[:next_id].copy(),
        surr_feature[:n_rules].copy(),
        surr_threshold[:n_rules].copy(),
        surr_flip[:n_rules].copy(),
        surr_err[:n_rules].copy(),
        surr_start[:next_id].copy(),
        surr_count[:next_id].copy(),
        train_pred,
    )
