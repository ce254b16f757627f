"""Independent brute-force references used by the tests."""
import itertools

import numpy as np


def brute_raster(points, width, canvas_w, canvas_h):
    """Per-pixel minimum distance to every segment; flat indices within width/2."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 1:
        pts = np.vstack([pts, pts])
    yy, xx = np.mgrid[0:canvas_h, 0:canvas_w].astype(float)
    best = np.full(xx.shape, np.inf)
    for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
        dx, dy = x1 - x0, y1 - y0
        seg2 = dx * dx + dy * dy
        t = np.clip(((xx - x0) * dx + (yy - y0) * dy) / seg2, 0, 1) if seg2 > 0 else 0.0
        best = np.minimum(best, (xx - x0 - t * dx) ** 2 + (yy - y0 - t * dy) ** 2)
    return np.flatnonzero((best <= (width / 2) ** 2 + 1e-9).ravel())


def brute_capacitated(cost, caps):
    """Exhaustive best labelling of predictions to GTs (or none).

    Feasible: GT j receives at most caps[j] predictions. Objective, in order:
    most pairs, most GTs covered, least total cost.
    Returns (n_pairs, n_covered, total_cost, frozenset of (pred, gt)).
    """
    P, G = cost.shape
    caps = np.asarray(caps)
    if P == 0:
        return 0, 0, 0.0, frozenset()
    labels = np.indices((G + 1,) * P).reshape(P, -1).T  # value G = unassigned
    onehot = labels[:, :, None] == np.arange(G)[None, None, :]
    per_gt = onehot.sum(axis=1)
    feasible = np.all(per_gt <= caps[None, :], axis=1)
    n_pairs = (labels < G).sum(axis=1)
    covered = (per_gt > 0).sum(axis=1)
    padded = np.hstack([cost, np.zeros((P, 1))])
    total = padded[np.arange(P)[None, :], labels].sum(axis=1)
    n_pairs = np.where(feasible, n_pairs, -1)
    best_pairs = n_pairs.max()
    cand = n_pairs == best_pairs
    best_cov = covered[cand].max()
    cand &= covered == best_cov
    idx = np.flatnonzero(cand)
    k = idx[np.argmin(total[idx])]
    chosen = frozenset((p, int(labels[k, p])) for p in range(P) if labels[k, p] < G)
    return int(best_pairs), int(best_cov), float(total[k]), chosen


def brute_match(ious, t_iou):
    """All one-to-one matchings; most pairs with IoU > t, then largest IoU sum."""
    ious = np.asarray(ious, dtype=float)
    P, G = ious.shape
    best = (0, 0.0)
    if P == 0 or G == 0:
        return best
    small, large = (P, G) if P <= G else (G, P)
    for perm in itertools.permutations(range(large), small):
        pairs = [(i, perm[i]) if P <= G else (perm[i], i) for i in range(small)]
        good = [ious[r, c] for r, c in pairs if ious[r, c] > t_iou]
        cand = (len(good), float(sum(good)))
        if cand[0] > best[0] or (cand[0] == best[0] and cand[1] > best[1] + 1e-12):
            best = cand
    return best


def numeric_gradients(loss_fn, params, h=1e-5):
    """Central finite differences of ``loss_fn()`` w.r.t. each array in ``params`` (in place)."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + h
            up = loss_fn()
            p[i] = old - h
            down = loss_fn()
            p[i] = old
            g[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads
