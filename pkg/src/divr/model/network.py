"""Model assembly: branch encoders, cross-modal fusion, trajectory decoder,
the four architecture variants, and checkpoint I/O."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import autodiff as ad
from ..autodiff import Parameters, Tensor
from ..core import FUTURE_LEN, PAST_LEN
from .blocks import (
    attention_block,
    feed_forward,
    init_attention_block,
    init_feed_forward,
    init_linear,
    init_mlp,
    init_perceiver,
    linear,
    mlp,
    perceiver_encode,
    sinusoidal_encoding,
)
from .graphnet import FrameArrays, context_encoder, init_context_encoder
from .pointnet import gaze_encoder, init_gaze_encoder

CHECKPOINT_SCHEMA = "divr-checkpoint/1"

VARIANTS = ("divr-het", "divr-hom", "mlp", "motion-gaze")
N_QUERIES = FUTURE_LEN + PAST_LEN  # 10 prediction + 6 reconstruction

_PRESETS = {
    "paper": dict(latent_dim=256, n_latents=32, n_layers=6, n_heads=8, gcn_hidden=64),
    "tiny": dict(latent_dim=16, n_latents=4, n_layers=2, n_heads=2, gcn_hidden=16),
}


@dataclass(frozen=True)
class ModelConfig:
    latent_dim: int = 16
    n_latents: int = 4
    n_layers: int = 2
    n_heads: int = 2
    gcn_hidden: int = 16
    preset: str = "tiny"

    def __post_init__(self):
        if self.latent_dim % self.n_heads:
            raise ValueError(
                f"latent_dim {self.latent_dim} not divisible by {self.n_heads} heads"
            )

    @classmethod
    def from_preset(cls, name: str) -> "ModelConfig":
        if name not in _PRESETS:
            raise ValueError(f"unknown preset {name!r}, expected {list(_PRESETS)}")
        return cls(preset=name, **_PRESETS[name])


@dataclass
class PredictionBundle:
    prediction: np.ndarray  # (10, 2) meters
    reconstruction: np.ndarray | None  # (6, 2) meters, None for the mlp baseline
    variant: str
    metrics: dict[str, float] = field(default_factory=dict)


def init_params(variant: str, cfg: ModelConfig, seed: int = 0) -> Parameters:
    """Create all weights for a variant in a fixed order (deterministic per seed)."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}, expected {VARIANTS}")
    rng = np.random.default_rng(seed)
    p = Parameters()
    if variant == "mlp":
        hidden = 4 * cfg.latent_dim
        init_mlp(p, "mlp", (2 * PAST_LEN, hidden, hidden, 2 * FUTURE_LEN), rng)
        return p

    init_linear(p, "motion.embed", 2, cfg.latent_dim, rng)
    init_perceiver(p, "motion.enc", cfg.latent_dim, cfg.n_latents, cfg.n_layers, rng)
    init_gaze_encoder(p, cfg, rng)
    if variant in ("divr-het", "divr-hom"):
        init_context_encoder(p, cfg, hetero=(variant == "divr-het"), rng=rng)
    init_attention_block(p, "fuse.mg", cfg.latent_dim, rng)
    init_feed_forward(p, "fuse.mg_ff", cfg.latent_dim, rng)
    if variant in ("divr-het", "divr-hom"):
        init_attention_block(p, "fuse.mc", cfg.latent_dim, rng)
        init_feed_forward(p, "fuse.mc_ff", cfg.latent_dim, rng)
    p.add("dec.queries", rng.normal(0.0, 0.02, size=(N_QUERIES, cfg.latent_dim)))
    init_attention_block(p, "dec.cross", cfg.latent_dim, rng)
    init_linear(p, "dec.head", cfg.latent_dim, 2, rng)
    return p


def motion_encoder(p: Parameters, cfg: ModelConfig, past: np.ndarray) -> Tensor:
    """Embed the 6 observed positions, add position encodings, encode."""
    if past.shape != (PAST_LEN, 2):
        raise ValueError(f"past must be ({PAST_LEN}, 2), got {past.shape}")
    tokens = linear(p, "motion.embed", Tensor(past))
    tokens = tokens + Tensor(sinusoidal_encoding(PAST_LEN, cfg.latent_dim))
    return perceiver_encode(p, "motion.enc", tokens, cfg.n_layers, cfg.n_heads)


def fuse_and_decode(
    p: Parameters,
    cfg: ModelConfig,
    f_motion: Tensor,
    f_gaze: Tensor,
    f_context: Tensor | None,
) -> tuple[Tensor, Tensor]:
    """Motion attends to gaze, then to context; learned queries read out
    10 future positions and 6 input reconstructions."""
    s = attention_block(p, "fuse.mg", f_motion, f_gaze, cfg.n_heads)
    s = feed_forward(p, "fuse.mg_ff", s)
    if f_context is not None:
        s = attention_block(p, "fuse.mc", s, f_context, cfg.n_heads)
        s = feed_forward(p, "fuse.mc_ff", s)
    queries = p["dec.queries"] + Tensor(
        sinusoidal_encoding(N_QUERIES, cfg.latent_dim)
    )
    decoded = attention_block(p, "dec.cross", queries, s, cfg.n_heads)
    out = linear(p, "dec.head", decoded)  # (16, 2)
    return out[:FUTURE_LEN], out[FUTURE_LEN:]


def _zeroed_frames(frames: list[FrameArrays]) -> list[FrameArrays]:
    return [
        FrameArrays(
            node_feats=np.zeros_like(f.node_feats),
            node_types=f.node_types,
            edge_src=f.edge_src,
            edge_dst=f.edge_dst,
            edge_feats=np.zeros_like(f.edge_feats),
        )
        for f in frames
    ]


def forward_variant(
    p: Parameters,
    cfg: ModelConfig,
    variant: str,
    past: np.ndarray,
    cloud: np.ndarray | None = None,
    frames: list[FrameArrays] | None = None,
    ablate: str | None = None,
) -> tuple[Tensor, Tensor | None]:
    """Run one variant's forward pass; returns (prediction, reconstruction)."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}, expected {VARIANTS}")
    has_gaze = variant != "mlp"
    has_graph = variant in ("divr-het", "divr-hom")
    if ablate is not None:
        if ablate not in ("graph", "gaze"):
            raise ValueError(f"ablate must be 'graph' or 'gaze', got {ablate!r}")
        if ablate == "graph" and not has_graph:
            raise ValueError(f"variant {variant!r} has no graph branch to ablate")
        if ablate == "gaze" and not has_gaze:
            raise ValueError(f"variant {variant!r} has no gaze branch to ablate")

    if variant == "mlp":
        x = Tensor(past.reshape(1, 2 * PAST_LEN))
        out = mlp(p, "mlp", x, 3)
        return ad.reshape(out, (FUTURE_LEN, 2)), None

    if cloud is None:
        raise ValueError(f"variant {variant!r} requires a gaze cloud")
    if ablate == "gaze":
        cloud = np.zeros_like(cloud)
    f_motion = motion_encoder(p, cfg, past)
    f_gaze = gaze_encoder(p, cfg, cloud)
    f_context = None
    if has_graph:
        if frames is None:
            raise ValueError(f"variant {variant!r} requires graph frames")
        if ablate == "graph":
            frames = _zeroed_frames(frames)
        f_context = context_encoder(p, cfg, frames, hetero=(variant == "divr-het"))
    return fuse_and_decode(p, cfg, f_motion, f_gaze, f_context)


def predict(
    p: Parameters,
    cfg: ModelConfig,
    variant: str,
    past: np.ndarray,
    cloud: np.ndarray | None = None,
    frames: list[FrameArrays] | None = None,
    ablate: str | None = None,
) -> PredictionBundle:
    """Inference-mode forward returning plain arrays."""
    with ad.no_grad():
        pred, recon = forward_variant(
            p, cfg, variant, past, cloud=cloud, frames=frames, ablate=ablate
        )
    return PredictionBundle(
        prediction=pred.data.copy(),
        reconstruction=None if recon is None else recon.data.copy(),
        variant=variant,
    )


# checkpoint I/O --------------------------------------------------------


def save_checkpoint(path, params: Parameters, cfg: ModelConfig, variant: str) -> None:
    """Versioned binary: header line, JSON meta line, then row-major
    little-endian float64 blobs in declared name order."""
    names = params.names()
    meta = {
        "variant": variant,
        "config": asdict(cfg),
        "names": names,
        "shapes": {n: list(params[n].data.shape) for n in names},
    }
    with open(path, "wb") as fh:
        fh.write((CHECKPOINT_SCHEMA + "\n").encode())
        fh.write((json.dumps(meta, sort_keys=True) + "\n").encode())
        for n in names:
            fh.write(np.ascontiguousarray(params[n].data, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[Parameters, ModelConfig, str]:
    with open(path, "rb") as fh:
        blob = fh.read()
    head, _, rest = blob.partition(b"\n")
    if head.decode() != CHECKPOINT_SCHEMA:
        raise ValueError(
            f"{path}: unknown checkpoint schema {head.decode()!r}, "
            f"expected {CHECKPOINT_SCHEMA!r}"
        )
    meta_line, _, payload = rest.partition(b"\n")
    meta = json.loads(meta_line.decode())
    cfg = ModelConfig(**meta["config"])
    params = init_params(meta["variant"], cfg, seed=0)
    offset = 0
    state = {}
    for n in meta["names"]:
        shape = tuple(meta["shapes"][n])
        size = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(
            payload, dtype="<f8", count=size, offset=offset
        ).reshape(shape)
        state[n] = arr.astype(np.float64)
        offset += size * 8
    params.load_state(state)
    return params, cfg, meta["variant"]
