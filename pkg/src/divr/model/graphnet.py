"""Edge-conditioned graph convolution and the temporal context encoder.

Edge features are mapped by a small network to one weight matrix per edge;
messages are mean-aggregated over incoming edges.  Typed nodes enter a
shared feature space through per-type input projections (the homogeneous
variant uses a single shared projection instead).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import _kernels as kernels
from .. import autodiff as ad
from ..autodiff import Parameters, Tensor
from ..scenegraph import (
    EDGE_FEATURE_DIM,
    HOMO_EDGE_FEATURE_DIM,
    NODE_FEATURE_DIM,
    NODE_TYPES,
)
from .blocks import init_linear, init_mlp, linear, mlp

N_FRAMES = 6


@dataclass(frozen=True)
class FrameArrays:
    """Dense per-frame graph features, ordered by node id."""

    node_feats: np.ndarray  # (N, 19)
    node_types: np.ndarray  # (N,) index into NODE_TYPES
    edge_src: np.ndarray  # (E,) int64
    edge_dst: np.ndarray  # (E,) int64
    edge_feats: np.ndarray  # (E, 9) typed feature; [:, 3:] is the untyped part


def ecc_aggregate(
    h: Tensor, theta: Tensor, src: np.ndarray, dst: np.ndarray, n_nodes: int
) -> Tensor:
    """Mean over incoming edges of (per-edge matrix) @ (source features)."""
    out, counts = kernels.ecc_forward(h.data, theta.data, src, dst, n_nodes)

    def vjp(g):
        return kernels.ecc_backward(g, h.data, theta.data, src, dst, counts)

    return ad.custom(out, (h, theta), vjp)


def init_ecc(
    p: Parameters, prefix: str, f_in: int, f_out: int, edge_dim: int, hidden: int, rng
) -> None:
    init_linear(p, f"{prefix}.root", f_in, f_out, rng)
    init_mlp(p, f"{prefix}.edge", (edge_dim, hidden, f_in * f_out), rng)


def ecc_conv(
    p: Parameters,
    prefix: str,
    h: Tensor,
    edge_src: np.ndarray,
    edge_dst: np.ndarray,
    edge_feats: np.ndarray,
    act=ad.relu,
) -> Tensor:
    """h'_i = act(W_root h_i + mean_{j->i} Theta(e_ji) h_j + b)."""
    n_nodes, f_in = h.data.shape
    f_out = p[f"{prefix}.root.W"].data.shape[1]
    if edge_src.size and (edge_src.max() >= n_nodes or edge_dst.max() >= n_nodes):
        raise ValueError("edge endpoint beyond node count")
    root = linear(p, f"{prefix}.root", h)
    if edge_src.size:
        theta = mlp(p, f"{prefix}.edge", Tensor(edge_feats), 2)
        theta = ad.reshape(theta, (edge_feats.shape[0], f_out, f_in))
        msg = ecc_aggregate(h, theta, edge_src, edge_dst, n_nodes)
        root = root + msg
    return act(root)


def init_context_encoder(p: Parameters, cfg, hetero: bool, rng) -> None:
    gh = cfg.gcn_hidden
    if hetero:
        for ntype in NODE_TYPES:
            init_linear(p, f"ctx.in.{ntype.value}", NODE_FEATURE_DIM, gh, rng)
    else:
        init_linear(p, "ctx.in.shared", NODE_FEATURE_DIM, gh, rng)
    edge_dim = EDGE_FEATURE_DIM if hetero else HOMO_EDGE_FEATURE_DIM
    init_ecc(p, "ctx.conv0", gh, gh, edge_dim, gh, rng)
    init_ecc(p, "ctx.conv1", gh, gh, edge_dim, gh, rng)
    init_linear(p, "ctx.out", N_FRAMES * gh, cfg.latent_dim, rng)


def _project_nodes(p: Parameters, frame: FrameArrays, hetero: bool) -> Tensor:
    x = Tensor(frame.node_feats)
    if not hetero:
        return linear(p, "ctx.in.shared", x)
    out = None
    for ti, ntype in enumerate(NODE_TYPES):
        sel = (frame.node_types == ti).astype(np.float64)[:, None]
        if not sel.any():
            continue
        proj = linear(p, f"ctx.in.{ntype.value}", x) * Tensor(sel)
        out = proj if out is None else out + proj
    if out is None:
        raise ValueError("frame has no nodes")
    return out


def context_encoder(
    p: Parameters, cfg, frames: list[FrameArrays], hetero: bool
) -> Tensor:
    """Per frame: 2 ecc layers + global mean pool; concat over 6 frames,
    linear, tiled to the (n_latents, dim) latent array."""
    if len(frames) != N_FRAMES:
        raise ValueError(f"context encoder needs {N_FRAMES} frames, got {len(frames)}")
    pooled = []
    for frame in frames:
        edge_feats = frame.edge_feats if hetero else frame.edge_feats[:, 3:]
        h = _project_nodes(p, frame, hetero)
        h = ecc_conv(p, "ctx.conv0", h, frame.edge_src, frame.edge_dst, edge_feats)
        h = ecc_conv(p, "ctx.conv1", h, frame.edge_src, frame.edge_dst, edge_feats)
        pooled.append(ad.reshape(ad.tmean(h, axis=0), (1, -1)))
    stacked = ad.reshape(ad.concat(pooled, axis=0), (1, -1))
    v = linear(p, "ctx.out", stacked)
    return ad.tile_rows(ad.reshape(v, (-1,)), cfg.n_latents)
