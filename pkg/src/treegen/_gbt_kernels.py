"""Numba kernels for histogram-based gradient boosting.

The tree grower works on pre-binned features (int32 bin indices, -1 for
missing). Bin b of feature f means "value <= thresholds[f][b]"; bin
n_thr[f] collects values above the last threshold. Split gain follows the
second-order formula with unit hessians, so hessian sums are row counts.

Everything here is sequential and allocation-free in the hot loops, which
makes fits bit-reproducible regardless of how many forests are trained
concurrently (the callers parallelize across forests with nogil).
"""

import numpy as np
from numba import njit

LEAF = np.int32(-1)

# A candidate split must beat the incumbent by this relative margin; gains
# that agree to ~1e-10 of each other are treated as tied so that
# floating-point noise from different summation orders cannot override the
# deterministic tie-break (lowest feature, lowest threshold, missing-left
# first). Against the initial incumbent of 0 this reduces to "gain > 0",
# the plain positive-gain rule.
GAIN_TIE_REL = 1e-10


@njit(cache=True, nogil=True)
def _beats(gain, best_gain):
    return gain > best_gain * (1.0 + GAIN_TIE_REL)


@njit(cache=True, nogil=True)
def build_forest(binned, y, n_thr, thr_vals, base_score, n_trees, max_depth,
                 learning_rate, lam, gamma, min_child_weight, subsample, seed,
                 node_feat, node_thr, node_left, node_right, node_default_left,
                 node_value, tree_starts):
    """Grow `n_trees` boosted trees; returns the total node count.

    Output arrays are preallocated to capacity n_trees * (2^(max_depth+1)-1).
    """
    n, p = binned.shape
    preds = np.full(n, base_score)
    g = np.empty(n)
    for i in range(n):
        g[i] = preds[i] - y[i]

    max_bins = 0
    for f in range(p):
        if n_thr[f] + 1 > max_bins:
            max_bins = n_thr[f] + 1
    max_width = 1 << max_depth  # nodes per level

    hist_g = np.zeros((max_width, p, max_bins))
    hist_c = np.zeros((max_width, p, max_bins), dtype=np.int64)

    row_node = np.empty(n, dtype=np.int32)   # level slot per row, -1 settled
    leaf_of_row = np.empty(n, dtype=np.int32)
    in_tree = np.ones(n, dtype=np.bool_)

    lvl_id = np.empty(max_width, dtype=np.int32)
    lvl_g = np.empty(max_width)
    lvl_c = np.empty(max_width)
    nxt_id = np.empty(max_width, dtype=np.int32)
    nxt_g = np.empty(max_width)
    nxt_c = np.empty(max_width)
    # per-slot split decision for the current level
    sp_feat = np.empty(max_width, dtype=np.int32)
    sp_bin = np.empty(max_width, dtype=np.int32)
    sp_left = np.empty(max_width, dtype=np.bool_)
    sp_child = np.empty(max_width, dtype=np.int32)  # slot of left child next level

    use_subsample = subsample < 1.0
    if use_subsample:
        np.random.seed(seed)

    node_count = 0
    for tree in range(n_trees):
        tree_starts[tree] = node_count
        if use_subsample:
            kept = 0
            for i in range(n):
                in_tree[i] = np.random.random() < subsample
                if in_tree[i]:
                    kept += 1
            if kept == 0:
                in_tree[:] = True

        root = node_count
        node_count += 1
        g_root = 0.0
        c_root = 0.0
        for i in range(n):
            row_node[i] = 0
            if in_tree[i]:
                g_root += g[i]
                c_root += 1.0
        lvl_id[0] = root
        lvl_g[0] = g_root
        lvl_c[0] = c_root
        n_active = 1

        for depth in range(max_depth + 1):
            if n_active == 0:
                break
            if depth == max_depth:
                for s in range(n_active):
                    _finalize_leaf(node_feat, node_value, lvl_id[s], lvl_g[s], lvl_c[s], lam)
                for i in range(n):
                    if row_node[i] >= 0:
                        leaf_of_row[i] = lvl_id[row_node[i]]
                        row_node[i] = -1
                break

            for s in range(n_active):
                for f in range(p):
                    for b in range(n_thr[f] + 1):
                        hist_g[s, f, b] = 0.0
                        hist_c[s, f, b] = 0
            for i in range(n):
                s = row_node[i]
                if s >= 0 and in_tree[i]:
                    gi = g[i]
                    for f in range(p):
                        b = binned[i, f]
                        if b >= 0:
                            hist_g[s, f, b] += gi
                            hist_c[s, f, b] += 1

            n_next = 0
            any_split = False
            for s in range(n_active):
                g_par = lvl_g[s]
                c_par = lvl_c[s]
                parent_score = g_par * g_par / (c_par + lam) if c_par + lam > 0.0 else 0.0
                best_gain = 0.0
                best_f = -1
                best_b = -1
                best_left = True
                best_gl = 0.0
                best_cl = 0.0
                for f in range(p):
                    m = n_thr[f]
                    if m == 0:
                        continue
                    g_nm = 0.0
                    c_nm = 0.0
                    for b in range(m + 1):
                        g_nm += hist_g[s, f, b]
                        c_nm += hist_c[s, f, b]
                    c_miss = c_par - c_nm
                    # counts are exact integers; without missing rows the
                    # residual gradient mass is pure rounding noise and must
                    # not break the left/right tie
                    g_miss = g_par - g_nm if c_miss > 0.0 else 0.0
                    gl = 0.0
                    cl = 0.0
                    for b in range(m):
                        gl += hist_g[s, f, b]
                        cl += hist_c[s, f, b]
                        # missing rows to the left
                        gl1 = gl + g_miss
                        cl1 = cl + c_miss
                        gr1 = g_par - gl1
                        cr1 = c_par - cl1
                        if cl1 >= min_child_weight and cr1 >= min_child_weight:
                            gain = 0.5 * (gl1 * gl1 / (cl1 + lam)
                                          + gr1 * gr1 / (cr1 + lam)
                                          - parent_score) - gamma
                            if _beats(gain, best_gain):
                                best_gain = gain
                                best_f = f
                                best_b = b
                                best_left = True
                                best_gl = gl1
                                best_cl = cl1
                        # missing rows to the right
                        gr2 = g_par - gl
                        cr2 = c_par - cl
                        if cl >= min_child_weight and cr2 >= min_child_weight:
                            gain = 0.5 * (gl * gl / (cl + lam)
                                          + gr2 * gr2 / (cr2 + lam)
                                          - parent_score) - gamma
                            if _beats(gain, best_gain):
                                best_gain = gain
                                best_f = f
                                best_b = b
                                best_left = False
                                best_gl = gl
                                best_cl = cl

                gid = lvl_id[s]
                if best_f < 0:
                    _finalize_leaf(node_feat, node_value, gid, g_par, c_par, lam)
                    sp_feat[s] = -1
                else:
                    any_split = True
                    left_id = node_count
                    right_id = node_count + 1
                    node_count += 2
                    node_feat[gid] = best_f
                    node_thr[gid] = thr_vals[best_f, best_b]
                    node_left[gid] = left_id
                    node_right[gid] = right_id
                    node_default_left[gid] = best_left
                    sp_feat[s] = best_f
                    sp_bin[s] = best_b
                    sp_left[s] = best_left
                    sp_child[s] = n_next
                    nxt_id[n_next] = left_id
                    nxt_g[n_next] = best_gl
                    nxt_c[n_next] = best_cl
                    nxt_id[n_next + 1] = right_id
                    nxt_g[n_next + 1] = g_par - best_gl
                    nxt_c[n_next + 1] = c_par - best_cl
                    n_next += 2

            for i in range(n):
                s = row_node[i]
                if s < 0:
                    continue
                if sp_feat[s] < 0:
                    leaf_of_row[i] = lvl_id[s]
                    row_node[i] = -1
                else:
                    b = binned[i, sp_feat[s]]
                    if b < 0:
                        go_left = sp_left[s]
                    else:
                        go_left = b <= sp_bin[s]
                    row_node[i] = sp_child[s] if go_left else sp_child[s] + 1

            if not any_split:
                break
            tmp = lvl_id; lvl_id = nxt_id; nxt_id = tmp
            tmp = lvl_g; lvl_g = nxt_g; nxt_g = tmp
            tmp = lvl_c; lvl_c = nxt_c; nxt_c = tmp
            n_active = n_next

        for i in range(n):
            preds[i] += learning_rate * node_value[leaf_of_row[i]]
            g[i] = preds[i] - y[i]

    tree_starts[n_trees] = node_count
    return node_count


@njit(cache=True, nogil=True)
def _finalize_leaf(node_feat, node_value, gid, g_sum, c_sum, lam):
    node_feat[gid] = LEAF
    node_value[gid] = -g_sum / (c_sum + lam) if c_sum + lam > 0.0 else 0.0


@njit(cache=True, nogil=True)
def predict(features, node_feat, node_thr, node_left, node_right,
            node_default_left, node_value, tree_starts, base_score,
            learning_rate, n_trees_limit, out):
    """Route rows through the trees; NaN features follow the default side."""
    n = features.shape[0]
    for i in range(n):
        acc = 0.0
        for t in range(n_trees_limit):
            nd = tree_starts[t]
            while node_feat[nd] >= 0:
                x = features[i, node_feat[nd]]
                if np.isnan(x):
                    nd = node_left[nd] if node_default_left[nd] else node_right[nd]
                elif x <= node_thr[nd]:
                    nd = node_left[nd]
                else:
                    nd = node_right[nd]
            acc += node_value[nd]
        out[i] = base_score + learning_rate * acc
