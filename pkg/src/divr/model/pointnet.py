"""Point-set encoder for the gaze-weighted scene cloud.

Two set-abstraction levels (shared mlp, farthest-point sampling, radius
grouping, masked max-pool), a global max-pool, and a latent encoder on the
tiled global feature.  All pooling is over point sets, so the encoder is
exactly permutation-invariant in its input points.
"""

from __future__ import annotations

import numpy as np

from .. import _kernels as kernels
from .. import autodiff as ad
from ..autodiff import Parameters, Tensor
from .blocks import (
    init_linear,
    init_mlp,
    init_perceiver,
    linear,
    mlp,
    perceiver_encode,
    sinusoidal_encoding,
)

SA1_CENTROIDS = 32
SA2_CENTROIDS = 8
SA1_RADIUS = 0.5
SA2_RADIUS = 1.5
GROUP_CAP = 16

CLOUD_CHANNELS = 4  # x, y, z, gaze weight


def init_gaze_encoder(p: Parameters, cfg, rng) -> None:
    h = cfg.gcn_hidden
    init_mlp(p, "gaze.mlp1", (CLOUD_CHANNELS, h, h), rng)
    init_mlp(p, "gaze.mlp2", (3 + h, h, h), rng)
    init_linear(p, "gaze.proj", h, cfg.latent_dim, rng)
    init_perceiver(p, "gaze.enc", cfg.latent_dim, cfg.n_latents, cfg.n_layers, rng)


def _abstraction(
    xyz: np.ndarray, feats: Tensor, n_centroids: int, radius: float
) -> tuple[np.ndarray, Tensor]:
    """One set-abstraction level: sample centroids, group, masked max-pool."""
    centroid_idx = kernels.farthest_point_sample(xyz, n_centroids)
    centroids = xyz[centroid_idx]
    group_idx, _counts = kernels.ball_group(xyz, centroids, radius, GROUP_CAP)
    mask = group_idx >= 0
    gathered = feats[np.where(mask, group_idx, 0)]  # (M, cap, h)
    pooled = ad.masked_max(gathered, mask)  # (M, h)
    return centroids, pooled


def gaze_encoder(p: Parameters, cfg, cloud: np.ndarray) -> Tensor:
    """Encode an (n_points, 4) gaze-weighted cloud into (n_latents, dim)."""
    if cloud.ndim != 2 or cloud.shape[1] != CLOUD_CHANNELS:
        raise ValueError(f"cloud must be (n, {CLOUD_CHANNELS}), got {cloud.shape}")
    n = cloud.shape[0]
    if n < SA1_CENTROIDS:
        raise ValueError(f"cloud has {n} points < {SA1_CENTROIDS} centroids")
    xyz = np.ascontiguousarray(cloud[:, :3])

    h1 = ad.relu(mlp(p, "gaze.mlp1", Tensor(cloud), 2))
    c1_xyz, f1 = _abstraction(xyz, h1, SA1_CENTROIDS, SA1_RADIUS)

    h2 = ad.relu(mlp(p, "gaze.mlp2", ad.concat([Tensor(c1_xyz), f1], axis=1), 2))
    _c2_xyz, f2 = _abstraction(c1_xyz, h2, SA2_CENTROIDS, SA2_RADIUS)

    global_feat = ad.amax(f2, axis=0)  # (h,)
    v = linear(p, "gaze.proj", ad.reshape(global_feat, (1, -1)))
    tokens = ad.tile_rows(ad.reshape(v, (-1,)), cfg.n_latents)
    tokens = tokens + Tensor(sinusoidal_encoding(cfg.n_latents, cfg.latent_dim))
    return perceiver_encode(p, "gaze.enc", tokens, cfg.n_layers, cfg.n_heads)
