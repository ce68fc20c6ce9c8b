"""Illumination-routed model bank for feature-level person re-identification.

The package covers the whole desk-scale workflow: synthetic labeled feature
generation with controlled illumination, centroid illumination estimation
and switching, per-condition affine encoders, a KISSME Mahalanobis metric
bank indexed by unordered condition pairs, benchmark split protocols with
CMC evaluation, and a cycle-consistent diffusion translator verified
against closed-form Gaussian models.
"""

__version__ = "0.1.0"

from .core import (
    DistanceMatrix,
    Sample,
    SampleSet,
    read_feature_file,
    validate_set,
    write_feature_file,
)
from .cyclediff import (
    GaussianDDIM,
    LatentCode,
    NoiseSchedule,
    decode,
    encode as diffusion_encode,
    make_schedule,
    psnr,
    ssim,
    translate,
)
from .encoders import Encoder, encode, encode_set, identity_encoder, train_condition_encoder
from .evalproto import (
    CmcResult,
    MetaRecord,
    SplitSpec,
    cmc,
    filter_valid_queries,
    make_split,
    meta_from_samples,
    single_illumination_eval,
)
from .illum import (
    CentroidClassifier,
    classify,
    coverage_fraction,
    most_common_labels,
    partition_target,
    train_illumination_estimator,
    train_switch,
)
from .metric import (
    MahalanobisMatrix,
    MetricBank,
    PairingPolicy,
    PairSet,
    build_metric_bank,
    kissme_learn,
    mahalanobis_sq,
    psd_project,
)
from .smb import SynthesisModelBank, assemble, distance, distance_matrix, rank_row, route
from .ulisynth import (
    GeneratorConfig,
    generate_source_domain,
    light_intensity,
    select_subset_by_illumination,
    simulate_target_domain,
)
