"""Hybrid spatial/channel attention post-processing for compressed video."""

from .blocks import (
    GlobalFeatureExtractor,
    LocalFeatureExtractor,
    PatchEmbed,
    ResidualBlock,
    SwinBlock,
    TokenGrid,
    WindowAttention,
    pixel_shuffle,
    polarized_pool,
    window_merge,
    window_partition,
)
from .fusion import (
    FUSION_MODES,
    ChannelAttentionFusion,
    HybridAttentionFusion,
    SpatialAttentionFusion,
    fuse_hybrid,
)
from .gradcheck import GradCheckReport, grad_check
from .metrics import RdCurve, RdPoint, bd_rate, ms_ssim, msssim_to_db, psnr
from .model import (
    CheckpointError,
    HVPPNet,
    HybridFusionBlock,
    ModelConfig,
    ParameterStore,
    enhance_frame,
    expected_param_count,
    load_checkpoint,
    save_checkpoint,
)
from .training import (
    TrainConfig,
    TrainState,
    adam_step,
    charbonnier,
    parse_config_file,
    scheduled_lr,
    train,
    weighted_yuv_loss,
)
from .yuv import (
    Frame444,
    ManifestError,
    PatchPair,
    QpPlane,
    Yuv420Frame,
    YuvSequence,
    downsample_444_to_420,
    make_qp_plane,
    read_train_manifest,
    read_yuv420,
    sample_patch_pair,
    upsample_420_to_444,
    write_yuv420,
)

__version__ = "0.1.0"
