"""Robustness-scored encoder checkpoint selection and segmentation evaluation."""

from .augment import (
    JitterParams,
    color_jitter,
    cutmix,
    cutmix_box,
    hsv_to_rgb,
    imagenet_augment,
    mixup,
    random_erasing,
    random_resized_crop,
    resize_bilinear,
    rgb_to_hsv,
    rotate_about_center,
    rotate_flip,
    rotated_crop_geometry,
    rotated_crop_idrid,
    smooth_labels,
)
from .encoder import (
    DEFAULT_EPOCH_GRID,
    LeveledEncoder,
    build_encoder,
    forward,
    he_init,
    load_encoder,
    save_encoder,
    synthesize_checkpoints,
    trunc_normal_init,
)
from .errors import (
    DegenerateInputError,
    FileFormatError,
    ManifestError,
    MissingDataError,
    RobselError,
    ShapeMismatchError,
)
from .metrics import (
    RobustnessConfig,
    TripletSet,
    augment_pairs,
    build_triplets,
    cosine_distance,
    l2_distance,
    negative_permutation,
    pearson_distance,
    pool_or_flatten,
    robustness,
    triplet_hinge,
)
from .prng import PrngStream, compose_stream_id, mix64
from .segeval import (
    ConfusionCounts,
    binarize,
    confusion,
    dice_index,
    dice_loss,
    dice_per_class,
    jaccard_index,
    jaccard_per_class,
    mcc,
    mcc_per_class,
    spearman,
)
from .selection import (
    CheckpointSeries,
    SelectionResult,
    select_offline,
    select_online,
    tis,
    worst_best_ratio,
)
from .tensorfile import read_tensor, write_tensor

__version__ = "0.1.0"
