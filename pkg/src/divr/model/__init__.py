from .blocks import (
    attention_block,
    feed_forward,
    layer_norm,
    linear,
    mlp,
    perceiver_encode,
    sinusoidal_encoding,
)
from .graphnet import FrameArrays, context_encoder, ecc_conv
from .network import (
    CHECKPOINT_SCHEMA,
    VARIANTS,
    ModelConfig,
    PredictionBundle,
    forward_variant,
    fuse_and_decode,
    init_params,
    load_checkpoint,
    motion_encoder,
    predict,
    save_checkpoint,
)
from .pointnet import gaze_encoder

__all__ = [
    "attention_block",
    "feed_forward",
    "layer_norm",
    "linear",
    "mlp",
    "perceiver_encode",
    "sinusoidal_encoding",
    "FrameArrays",
    "context_encoder",
    "ecc_conv",
    "CHECKPOINT_SCHEMA",
    "VARIANTS",
    "ModelConfig",
    "PredictionBundle",
    "forward_variant",
    "fuse_and_decode",
    "init_params",
    "load_checkpoint",
    "motion_encoder",
    "predict",
    "save_checkpoint",
    "gaze_encoder",
]
