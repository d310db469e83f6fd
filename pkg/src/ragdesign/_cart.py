"""Compiled kernels for growing and evaluating regression trees.

Trees are stored as parallel node arrays. ``feature[i] == -1`` marks a leaf;
internal nodes send a row left iff ``row[feature] <= threshold``.
"""

import numba
import numpy as np

LEAF = -1


def encode_features(X):
    """Per-feature sorted unique values and the rank code of every entry.

    Returns ``(codes, uniq, uniq_off)``: ``uniq[uniq_off[f]:uniq_off[f + 1]]``
    are the distinct values of column ``f`` and ``codes[i, f]`` indexes them.
    """
    n_features = X.shape[1]
    codes = np.empty(X.shape, dtype=np.int64)
    parts = []
    for f in range(n_features):
        u, inv = np.unique(X[:, f], return_inverse=True)
        codes[:, f] = inv
        parts.append(u)
    off = np.concatenate([[0], np.cumsum([p.size for p in parts])]).astype(np.int64)
    return codes, np.concatenate(parts), off


@numba.njit(nogil=True, cache=True, inline="always")
def _consider(sum_l, n_l, total, n, min_samples_leaf, lo, hi, f, best_score, best_feat, best_thr):
    """Score the cut between adjacent distinct values ``lo < hi``; keep it if better."""
    n_r = n - n_l
    if n_l < min_samples_leaf or n_r < min_samples_leaf:
        return best_score, best_feat, best_thr
    sum_r = total - sum_l
    score = sum_l * sum_l / n_l + sum_r * sum_r / n_r
    thr = lo + 0.5 * (hi - lo)
    if not (thr >= lo and thr < hi):
        thr = lo
    better = score > best_score
    if not better and score == best_score:
        better = f < best_feat or (f == best_feat and thr < best_thr)
    if better:
        return score, f, thr
    return best_score, best_feat, best_thr


@numba.njit(nogil=True, cache=True)
def grow_tree(X, y, rows, max_depth, min_samples_split, min_samples_leaf, n_candidates, rng, codes, uniq, uniq_off):
    """Grow one CART regression tree on ``X[rows], y[rows]`` (``rows`` may repeat).

    Each node draws features in random order, skips those constant within the
    node, and scores the first ``n_candidates`` non-constant ones. The split
    maximizing ``sum_L^2/n_L + sum_R^2/n_R`` (i.e. minimizing the children's
    summed squared error) wins; exact ties go to the lower feature index, then
    the smaller threshold.
    """
    n_rows = rows.shape[0]
    n_features = X.shape[1]
    cap = 2 * n_rows + 1
    feature = np.full(cap, LEAF, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    depth_of = np.zeros(cap, dtype=np.int64)

    idx = rows.copy()
    buf = np.empty(n_rows, dtype=np.int64)
    xs = np.empty(n_rows)
    ys = np.empty(n_rows)
    order_feat = np.arange(n_features)
    max_uniq = 0
    for f in range(n_features):
        max_uniq = max(max_uniq, uniq_off[f + 1] - uniq_off[f])
    cnt = np.zeros(max_uniq, dtype=np.int64)
    acc = np.zeros(max_uniq)

    # breadth-first queue of (start, end) row ranges; node ids follow queue order,
    # so all draws for level d precede level d + 1 and a shallower tree is an
    # exact prefix of a deeper one grown from the same seed
    q_start = np.empty(cap, dtype=np.int64)
    q_end = np.empty(cap, dtype=np.int64)
    q_start[0] = 0
    q_end[0] = n_rows
    n_nodes = 1

    for node in range(cap):
        if node >= n_nodes:
            break
        s = q_start[node]
        e = q_end[node]
        n = e - s

        total = 0.0
        ymin = np.inf
        ymax = -np.inf
        for i in range(s, e):
            v = y[idx[i]]
            total += v
            if v < ymin:
                ymin = v
            if v > ymax:
                ymax = v
        value[node] = total / n

        if depth_of[node] >= max_depth or n < min_samples_split or n < 2 * min_samples_leaf or ymin == ymax:
            continue

        for i in range(n_features):
            order_feat[i] = i
        best_feat = -1
        best_thr = 0.0
        best_score = -np.inf
        visited = 0
        for i in range(n_features):
            if visited >= n_candidates:
                break
            j = i + rng.integers(0, n_features - i)
            tmp = order_feat[i]
            order_feat[i] = order_feat[j]
            order_feat[j] = tmp
            f = order_feat[i]

            n_uniq = uniq_off[f + 1] - uniq_off[f]
            if n_uniq <= 8 * n:
                # exact histogram over the feature's global value ranks
                base = uniq_off[f]
                lo_c = n_uniq
                hi_c = -1
                for r in range(n):
                    row = idx[s + r]
                    c = codes[row, f]
                    cnt[c] += 1
                    acc[c] += y[row]
                    if c < lo_c:
                        lo_c = c
                    if c > hi_c:
                        hi_c = c
                if lo_c == hi_c:
                    cnt[lo_c] = 0
                    acc[lo_c] = 0.0
                    continue
                visited += 1
                sum_l = 0.0
                n_l = 0
                prev = -1
                for c in range(lo_c, hi_c + 1):
                    if cnt[c] == 0:
                        continue
                    if prev >= 0:
                        best_score, best_feat, best_thr = _consider(
                            sum_l, n_l, total, n, min_samples_leaf, uniq[base + prev], uniq[base + c], f,
                            best_score, best_feat, best_thr)
                    sum_l += acc[c]
                    n_l += cnt[c]
                    cnt[c] = 0
                    acc[c] = 0.0
                    prev = c
                continue

            for r in range(n):
                xs[r] = X[idx[s + r], f]
            perm = np.argsort(xs[:n], kind="mergesort")
            if xs[perm[0]] == xs[perm[n - 1]]:
                continue
            visited += 1
            for r in range(n):
                ys[r] = y[idx[s + perm[r]]]

            sum_l = 0.0
            for r in range(n - 1):
                sum_l += ys[r]
                lo = xs[perm[r]]
                hi = xs[perm[r + 1]]
                if lo == hi:
                    continue
                best_score, best_feat, best_thr = _consider(sum_l, r + 1, total, n, min_samples_leaf, lo, hi, f,
                                                            best_score, best_feat, best_thr)

        if best_feat < 0:
            continue

        # stable partition of idx[s:e] around the chosen threshold
        n_left = 0
        n_right = 0
        for r in range(s, e):
            row = idx[r]
            if X[row, best_feat] <= best_thr:
                idx[s + n_left] = row
                n_left += 1
            else:
                buf[n_right] = row
                n_right += 1
        for r in range(n_right):
            idx[s + n_left + r] = buf[r]

        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        feature[node] = best_feat
        threshold[node] = best_thr
        left[node] = lid
        right[node] = rid
        depth_of[lid] = depth_of[node] + 1
        depth_of[rid] = depth_of[node] + 1

        q_start[lid] = s
        q_end[lid] = s + n_left
        q_start[rid] = s + n_left
        q_end[rid] = e

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy())


@numba.njit(nogil=True, cache=True)
def predict_trees(feature, threshold, left, right, value, roots, X):
    """Outputs of every tree on every row: ``(n_trees, n_rows)``."""
    n_trees = roots.shape[0]
    n = X.shape[0]
    out = np.empty((n_trees, n))
    for t in range(n_trees):
        root = roots[t]
        for r in range(n):
            node = root
            while feature[node] != LEAF:
                if X[r, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[t, r] = value[node]
    return out
