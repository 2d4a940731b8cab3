"""Compiled inner loops for tree and fern ensembles.

Every ensemble member draws from its own SplitMix64 stream started from a
pre-assigned seed, so results do not depend on the order members are
processed in and are identical across platforms.
"""

import numpy as np
from numba import njit, uint64

_GAIN_EPS = 1e-12
_GOLDEN = uint64(0x9E3779B97F4A7C15)
_MIX1 = uint64(0xBF58476D1CE4E5B9)
_MIX2 = uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True)
def _seed_state(state, seed):
    state[0] = uint64(seed)


@njit(cache=True)
def _next_u64(state):
    state[0] += _GOLDEN
    z = state[0]
    z = (z ^ (z >> uint64(30))) * _MIX1
    z = (z ^ (z >> uint64(27))) * _MIX2
    return z ^ (z >> uint64(31))


@njit(cache=True)
def _randint(state, n):
    """Uniform integer in [0, n)."""
    u = (_next_u64(state) >> uint64(11)) * _INV53
    k = int(u * n)
    return k if k < n else n - 1


@njit(cache=True)
def _shuffle(state, a, n):
    for i in range(n - 1, 0, -1):
        j = _randint(state, i + 1)
        tmp = a[i]
        a[i] = a[j]
        a[j] = tmp


@njit(cache=True)
def _majority(counts):
    best = 0
    for k in range(1, counts.shape[0]):
        if counts[k] > counts[best]:
            best = k
    return best


@njit(cache=True)
def _grow_tree(X, y, n_classes, order, svals, idx, perm, mtry, min_node, max_depth, lam, used,
               feat, thr, left, right, value, dec, state):
    """Grow one CART tree over the bag ``idx`` (duplicates allowed).

    ``order[f]`` lists all rows sorted by feature ``f`` (values in
    ``svals[f]``); a node's split
    search scans it, skipping rows absent from the node, so no per-node sort
    is needed. Writes nodes into the row views ``feat`` .. ``dec`` and
    returns the node count. ``lam`` < 1 penalises the gain of features not
    yet in ``used``; ``used`` is updated in place whenever a feature wins.
    """
    n_rows, p = X.shape
    n = idx.shape[0]
    stack_node = np.empty(n * 2 + 1, np.int64)
    stack_lo = np.empty(n * 2 + 1, np.int64)
    stack_hi = np.empty(n * 2 + 1, np.int64)
    stack_depth = np.empty(n * 2 + 1, np.int64)
    counts = np.zeros(n_classes, np.int64)
    cl = np.zeros(n_classes, np.int64)
    in_node = np.zeros(n_rows, np.int64)

    n_nodes = 1
    top = 0
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = n
    stack_depth[0] = 0
    while top >= 0:
        node = stack_node[top]
        lo = stack_lo[top]
        hi = stack_hi[top]
        depth = stack_depth[top]
        top -= 1
        m = hi - lo
        counts[:] = 0
        for i in range(lo, hi):
            counts[y[idx[i]]] += 1
        feat[node] = -1
        left[node] = -1
        right[node] = -1
        dec[node] = 0.0
        thr[node] = 0.0
        value[node] = _majority(counts)
        n_nonzero = 0
        s_parent = 0
        for k in range(n_classes):
            if counts[k] > 0:
                n_nonzero += 1
            s_parent += counts[k] * counts[k]
        if m < 2 or n_nonzero < 2 or m < min_node or (max_depth >= 0 and depth >= max_depth):
            continue
        parent_score = s_parent / m
        for i in range(lo, hi):
            in_node[idx[i]] += 1

        best_gain = 0.0
        best_raw = 0.0
        best_f = -1
        best_t = 0.0
        for c in range(mtry):
            j = c + _randint(state, p - c)
            tmp = perm[c]
            perm[c] = perm[j]
            perm[j] = tmp
            f = perm[c]
            cl[:] = 0
            nl = 0
            sl = 0
            sr = s_parent
            prev_v = 0.0
            have_prev = False
            for a in range(n_rows):
                r = order[f, a]
                w = in_node[r]
                if w == 0:
                    continue
                v = svals[f, a]
                if have_prev and v > prev_v:
                    raw = sl / nl + sr / (m - nl) - parent_score
                    if raw > _GAIN_EPS * m:
                        gain = raw
                        if lam < 1.0 and not used[f]:
                            gain = raw * lam
                        t = 0.5 * (prev_v + v)
                        if t >= v:
                            t = prev_v
                        if gain > best_gain or (gain == best_gain and best_f >= 0 and
                                                (f < best_f or (f == best_f and t < best_t))):
                            best_gain = gain
                            best_raw = raw
                            best_f = f
                            best_t = t
                k = y[r]
                cr_k = counts[k] - cl[k]
                sl += 2 * cl[k] * w + w * w
                sr -= 2 * cr_k * w - w * w
                cl[k] += w
                nl += w
                prev_v = v
                have_prev = True
        for i in range(lo, hi):
            in_node[idx[i]] = 0
        if best_f < 0:
            continue
        used[best_f] = True
        # partition idx[lo:hi] so rows with x <= t come first
        a = lo
        b = hi - 1
        while a <= b:
            if X[idx[a], best_f] <= best_t:
                a += 1
            else:
                tmp = idx[a]
                idx[a] = idx[b]
                idx[b] = tmp
                b -= 1
        feat[node] = best_f
        thr[node] = best_t
        dec[node] = best_raw
        l_id = n_nodes
        r_id = n_nodes + 1
        n_nodes += 2
        left[node] = l_id
        right[node] = r_id
        top += 1
        stack_node[top] = r_id
        stack_lo[top] = a
        stack_hi[top] = hi
        stack_depth[top] = depth + 1
        top += 1
        stack_node[top] = l_id
        stack_lo[top] = lo
        stack_hi[top] = a
        stack_depth[top] = depth + 1
    return n_nodes


@njit(cache=True)
def column_order(X):
    n, p = X.shape
    order = np.empty((p, n), np.int64)
    svals = np.empty((p, n), np.float64)
    col = np.empty(n, np.float64)
    for f in range(p):
        for i in range(n):
            col[i] = X[i, f]
        o = np.argsort(col, kind="mergesort")
        for i in range(n):
            order[f, i] = o[i]
            svals[f, i] = col[o[i]]
    return order, svals


@njit(cache=True)
def fit_forest(X, y, n_classes, seeds, mtry, min_node, max_depth, lam):
    n, p = X.shape
    n_trees = seeds.shape[0]
    max_nodes = 2 * n - 1
    feat = np.full((n_trees, max_nodes), -1, np.int64)
    thr = np.zeros((n_trees, max_nodes), np.float64)
    left = np.full((n_trees, max_nodes), -1, np.int64)
    right = np.full((n_trees, max_nodes), -1, np.int64)
    value = np.zeros((n_trees, max_nodes), np.int64)
    dec = np.zeros((n_trees, max_nodes), np.float64)
    n_nodes = np.zeros(n_trees, np.int64)
    inbag = np.zeros((n_trees, n), np.int64)
    used = np.zeros(p, np.bool_)
    perm = np.empty(p, np.int64)
    idx = np.empty(n, np.int64)
    order, svals = column_order(X)
    state = np.zeros(1, np.uint64)
    for t in range(n_trees):
        _seed_state(state, seeds[t])
        for i in range(n):
            r = _randint(state, n)
            idx[i] = r
            inbag[t, r] += 1
        for j in range(p):
            perm[j] = j
        n_nodes[t] = _grow_tree(X, y, n_classes, order, svals, idx, perm, mtry, min_node, max_depth,
                                lam, used, feat[t], thr[t], left[t], right[t], value[t], dec[t],
                                state)
    return feat, thr, left, right, value, dec, n_nodes, inbag, used


@njit(cache=True)
def _tree_leaf(feat, thr, left, right, row, over_f, over_v):
    node = 0
    while left[node] >= 0:
        f = feat[node]
        v = over_v if f == over_f else row[f]
        if v <= thr[node]:
            node = left[node]
        else:
            node = right[node]
    return node


@njit(cache=True)
def forest_votes(feat, thr, left, right, value, n_classes, X, tree_mask):
    n = X.shape[0]
    votes = np.zeros((n, n_classes), np.int64)
    for t in range(feat.shape[0]):
        if not tree_mask[t]:
            continue
        for i in range(n):
            leaf = _tree_leaf(feat[t], thr[t], left[t], right[t], X[i], -1, 0.0)
            votes[i, value[t, leaf]] += 1
    return votes


@njit(cache=True)
def oob_votes(feat, thr, left, right, value, inbag, y, n_classes, X):
    """OOB vote matrix plus each tree's own error on its OOB rows (nan if none)."""
    n = X.shape[0]
    votes = np.zeros((n, n_classes), np.int64)
    tree_err = np.full(feat.shape[0], np.nan)
    for t in range(feat.shape[0]):
        wrong = 0
        n_oob = 0
        for i in range(n):
            if inbag[t, i] != 0:
                continue
            leaf = _tree_leaf(feat[t], thr[t], left[t], right[t], X[i], -1, 0.0)
            votes[i, value[t, leaf]] += 1
            n_oob += 1
            if value[t, leaf] != y[i]:
                wrong += 1
        if n_oob > 0:
            tree_err[t] = wrong / n_oob
    return votes, tree_err


@njit(cache=True)
def permutation_diffs(feat, thr, left, right, value, n_nodes, inbag, X, y, seeds, identity):
    """Per-tree OOB accuracy drop after permuting each used feature.

    Returns an (n_trees, P) matrix; entries for features a tree never splits
    on are exactly zero, as permuting them cannot change its predictions.
    """
    n, p = X.shape
    n_trees = feat.shape[0]
    diffs = np.zeros((n_trees, p), np.float64)
    oob = np.empty(n, np.int64)
    col = np.empty(n, np.float64)
    seen = np.zeros(p, np.bool_)
    state = np.zeros(1, np.uint64)
    for t in range(n_trees):
        _seed_state(state, seeds[t])
        n_oob = 0
        for i in range(n):
            if inbag[t, i] == 0:
                oob[n_oob] = i
                n_oob += 1
        if n_oob == 0:
            continue
        correct0 = 0
        for a in range(n_oob):
            i = oob[a]
            leaf = _tree_leaf(feat[t], thr[t], left[t], right[t], X[i], -1, 0.0)
            if value[t, leaf] == y[i]:
                correct0 += 1
        seen[:] = False
        for node in range(n_nodes[t]):
            f = feat[t, node]
            if f < 0 or seen[f]:
                continue
            seen[f] = True
        for f in range(p):
            if not seen[f]:
                continue
            for a in range(n_oob):
                col[a] = X[oob[a], f]
            if not identity:
                _shuffle(state, col, n_oob)
            correct1 = 0
            for a in range(n_oob):
                i = oob[a]
                leaf = _tree_leaf(feat[t], thr[t], left[t], right[t], X[i], f, col[a])
                if value[t, leaf] == y[i]:
                    correct1 += 1
            diffs[t, f] = (correct0 - correct1) / n_oob
    return diffs


@njit(cache=True)
def _fern_leaf(fe, th, row, over_f, over_v):
    leaf = 0
    for d in range(fe.shape[0]):
        f = fe[d]
        v = over_v if f == over_f else row[f]
        if v < th[d]:
            leaf |= 1 << d
    return leaf


@njit(cache=True)
def fit_ferns(X, y, n_classes, seeds, depth, smoothing):
    n, p = X.shape
    n_ferns = seeds.shape[0]
    n_leaves = 1 << depth
    feats = np.empty((n_ferns, depth), np.int64)
    thrs = np.empty((n_ferns, depth), np.float64)
    logp = np.empty((n_ferns, n_leaves, n_classes), np.float64)
    inbag = np.zeros((n_ferns, n), np.int64)
    bag = np.empty(n, np.int64)
    counts = np.empty((n_leaves, n_classes), np.float64)
    state = np.zeros(1, np.uint64)
    for m in range(n_ferns):
        _seed_state(state, seeds[m])
        for i in range(n):
            r = _randint(state, n)
            bag[i] = r
            inbag[m, r] += 1
        for d in range(depth):
            f = _randint(state, p)
            feats[m, d] = f
            thrs[m, d] = X[bag[_randint(state, n)], f]
        counts[:, :] = smoothing
        for i in range(n):
            r = bag[i]
            leaf = _fern_leaf(feats[m], thrs[m], X[r], -1, 0.0)
            counts[leaf, y[r]] += 1.0
        for leaf in range(n_leaves):
            tot = 0.0
            for k in range(n_classes):
                tot += counts[leaf, k]
            for k in range(n_classes):
                logp[m, leaf, k] = np.log(counts[leaf, k] / tot)
    return feats, thrs, logp, inbag


@njit(cache=True)
def ferns_scores(feats, thrs, logp, X):
    n = X.shape[0]
    n_classes = logp.shape[2]
    scores = np.zeros((n, n_classes), np.float64)
    for m in range(feats.shape[0]):
        for i in range(n):
            leaf = _fern_leaf(feats[m], thrs[m], X[i], -1, 0.0)
            for k in range(n_classes):
                scores[i, k] += logp[m, leaf, k]
    return scores


@njit(cache=True)
def ferns_oob_scores(feats, thrs, logp, inbag, X):
    n = X.shape[0]
    n_classes = logp.shape[2]
    scores = np.zeros((n, n_classes), np.float64)
    n_votes = np.zeros(n, np.int64)
    for m in range(feats.shape[0]):
        for i in range(n):
            if inbag[m, i] != 0:
                continue
            leaf = _fern_leaf(feats[m], thrs[m], X[i], -1, 0.0)
            n_votes[i] += 1
            for k in range(n_classes):
                scores[i, k] += logp[m, leaf, k]
    return scores, n_votes


@njit(cache=True)
def ferns_importance_sums(feats, thrs, logp, inbag, X, y, seeds, identity, linear):
    """Sum and count of per-fern OOB correct-class score drops per feature."""
    n, p = X.shape
    n_ferns, depth = feats.shape
    sums = np.zeros(p, np.float64)
    uses = np.zeros(p, np.int64)
    oob = np.empty(n, np.int64)
    col = np.empty(n, np.float64)
    state = np.zeros(1, np.uint64)
    for m in range(n_ferns):
        _seed_state(state, seeds[m])
        n_oob = 0
        for i in range(n):
            if inbag[m, i] == 0:
                oob[n_oob] = i
                n_oob += 1
        if n_oob == 0:
            continue
        base = 0.0
        for a in range(n_oob):
            i = oob[a]
            leaf = _fern_leaf(feats[m], thrs[m], X[i], -1, 0.0)
            s = logp[m, leaf, y[i]]
            base += np.exp(s) if linear else s
        for d in range(depth):
            f = feats[m, d]
            dup = False
            for e in range(d):
                if feats[m, e] == f:
                    dup = True
            if dup:
                continue
            for a in range(n_oob):
                col[a] = X[oob[a], f]
            if not identity:
                _shuffle(state, col, n_oob)
            pert = 0.0
            for a in range(n_oob):
                i = oob[a]
                leaf = _fern_leaf(feats[m], thrs[m], X[i], f, col[a])
                s = logp[m, leaf, y[i]]
                pert += np.exp(s) if linear else s
            sums[f] += (base - pert) / n_oob
            uses[f] += 1
    return sums, uses
