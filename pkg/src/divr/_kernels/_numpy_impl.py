"""Pure-numpy implementations of the hot kernels.

These are the reference semantics; the compiled extension in ``_core.pyx``
matches the index selections exactly and the float accumulations to
round-off.  All routines are deterministic and, where they select points,
permutation-invariant: ties are broken by lexicographic comparison of
coordinates, never by input index.
"""

import numpy as np


def farthest_point_sample(xyz: np.ndarray, k: int) -> np.ndarray:
    """Select ``k`` spread-out points from an (N, 3) cloud.

    Starts from the lexicographically smallest point and greedily adds the
    point with maximal distance to the selected set.  Ties on distance fall
    back to lexicographic order, so the selected coordinates depend only on
    the point set, not its ordering.
    """
    xyz = np.ascontiguousarray(xyz, dtype=np.float64)
    n = xyz.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"cannot sample {k} centroids from {n} points")
    x, y, z = xyz[:, 0], xyz[:, 1], xyz[:, 2]
    order = np.lexsort((z, y, x))
    selected = np.empty(k, dtype=np.int64)
    selected[0] = order[0]
    min_d2 = np.sum((xyz - xyz[selected[0]]) ** 2, axis=1)
    for i in range(1, k):
        best = min_d2.max()
        cand = np.flatnonzero(min_d2 == best)
        if cand.size > 1:
            sub = np.lexsort((z[cand], y[cand], x[cand]))
            nxt = cand[sub[0]]
        else:
            nxt = cand[0]
        selected[i] = nxt
        d2 = np.sum((xyz - xyz[nxt]) ** 2, axis=1)
        np.minimum(min_d2, d2, out=min_d2)
    return selected


def ball_group(
    xyz: np.ndarray, centroids: np.ndarray, radius: float, cap: int
) -> tuple[np.ndarray, np.ndarray]:
    """Group points within ``radius`` of each centroid, capped at ``cap``.

    Returns ``(idx, counts)`` where ``idx`` has shape (M, cap) with -1
    padding.  Members are ordered by (distance, x, y, z), so the retained
    set under the cap is permutation-invariant.
    """
    xyz = np.ascontiguousarray(xyz, dtype=np.float64)
    centroids = np.ascontiguousarray(centroids, dtype=np.float64)
    m = centroids.shape[0]
    idx = np.full((m, cap), -1, dtype=np.int64)
    counts = np.zeros(m, dtype=np.int64)
    r2 = radius * radius
    for ci in range(m):
        d2 = np.sum((xyz - centroids[ci]) ** 2, axis=1)
        members = np.flatnonzero(d2 <= r2)
        if members.size == 0:
            continue
        mx = xyz[members]
        order = np.lexsort((mx[:, 2], mx[:, 1], mx[:, 0], d2[members]))
        members = members[order][:cap]
        idx[ci, : members.size] = members
        counts[ci] = members.size
    return idx, counts


def ecc_forward(
    h: np.ndarray, weights: np.ndarray, src: np.ndarray, dst: np.ndarray, n_nodes: int
) -> tuple[np.ndarray, np.ndarray]:
    """Mean-aggregated edge-conditioned messages.

    ``h`` is (N, F_in), ``weights`` is (E, F_out, F_in) giving one matrix per
    edge.  Message of edge e is ``weights[e] @ h[src[e]]``; each node averages
    messages over its incoming edges.  Nodes without incoming edges get zero.
    Returns ``(out, counts)`` with out shape (N, F_out).
    """
    f_out = weights.shape[1]
    out = np.zeros((n_nodes, f_out), dtype=np.float64)
    counts = np.bincount(dst, minlength=n_nodes).astype(np.float64)
    if src.size:
        msg = np.einsum("eoi,ei->eo", weights, h[src])
        np.add.at(out, dst, msg)
        nz = counts > 0
        out[nz] /= counts[nz, None]
    return out, counts


def ecc_backward(
    grad: np.ndarray,
    h: np.ndarray,
    weights: np.ndarray,
    src: np.ndarray,
    dst: np.ndarray,
    counts: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of ``ecc_forward`` w.r.t. node features and edge weights."""
    gh = np.zeros_like(h)
    gw = np.zeros_like(weights)
    if src.size:
        scale = np.where(counts > 0, counts, 1.0)
        gmsg = grad[dst] / scale[dst, None]
        gw[:] = np.einsum("eo,ei->eoi", gmsg, h[src])
        ghs = np.einsum("eoi,eo->ei", weights, gmsg)
        np.add.at(gh, src, ghs)
    return gh, gw
