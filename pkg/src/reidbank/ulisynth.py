"""Synthetic labeled feature data with controlled generation factors.

Every sample is built from an identity prototype plus background and
z-rotation offsets.  Illumination acts as a systematic, recoverable
transformation: the leading ``illum_gain_dims`` coordinates (plus a fixed
positive brightness baseline) are multiplied by the light-intensity ratio
of the sample's illumination label against label 0.  The baseline keeps
the per-label class means separated, so illumination is recoverable from
the features themselves and not only from their spread.

Source-domain sets enumerate the full factor grid, one sample per
(identity, background, zrotation, illumination) tuple, in that
lexicographic order.  Target-domain sets drop the illumination grid and
instead draw each sample's (hidden) illumination label from caller-given
condition weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ILLUMINATION_RANGE, Sample, SampleSet
from .seeding import substream

BACKGROUND_OFFSET_SCALE = 0.3
ZROTATION_OFFSET_SCALE = 0.2


def light_intensity(label: int) -> float:
    """Directional-light intensity for an illumination label in {0..7}.

    The mapping exp(0.5 * label + 0.6) - 1 is exponential in the label so
    that label steps read as roughly linear brightness changes; it is
    strictly increasing over the label range.
    """
    if int(label) != label or label not in ILLUMINATION_RANGE:
        raise ValueError(f"illumination label must be an integer in {{0..7}}, got {label!r}")
    return math.exp(0.5 * int(label) + 0.6) - 1.0


def illumination_gain(label: int) -> float:
    """Multiplicative gain relative to the neutral label 0."""
    return light_intensity(label) / light_intensity(0)


@dataclass(frozen=True)
class GeneratorConfig:
    identities: int
    backgrounds: int
    zrotations: int
    illuminations: tuple[int, ...]
    dimension: int
    illum_gain_dims: int
    illum_baseline: float = 5.0
    illum_identity_leak: float = 0.4
    illum_jitter: float = 0.5
    noise_scale: float = 0.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "illuminations", tuple(int(v) for v in self.illuminations))
        if self.identities < 2:
            raise ValueError("identities must be >= 2")
        if self.backgrounds < 1 or self.zrotations < 1:
            raise ValueError("backgrounds and zrotations must be >= 1")
        if not self.illuminations:
            raise ValueError("at least one illumination label is required")
        if len(set(self.illuminations)) != len(self.illuminations):
            raise ValueError("illumination labels must be distinct")
        for lab in self.illuminations:
            if lab not in ILLUMINATION_RANGE:
                raise ValueError(f"illumination label {lab} outside {{0..7}}")
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if not 0 <= self.illum_gain_dims <= self.dimension:
            raise ValueError("illum_gain_dims must lie in [0, dimension]")
        if not math.isfinite(self.illum_baseline):
            raise ValueError("illum_baseline must be finite")
        if not 0 <= self.illum_identity_leak <= 1:
            raise ValueError("illum_identity_leak must lie in [0, 1]")
        if self.illum_jitter < 0:
            raise ValueError("illum_jitter must be >= 0")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be >= 0")

    @property
    def total_samples(self) -> int:
        return self.identities * self.backgrounds * self.zrotations * len(self.illuminations)


def _factor_components(config: GeneratorConfig, seed: int):
    protos = substream(seed, "prototypes").standard_normal((config.identities, config.dimension))
    bgs = BACKGROUND_OFFSET_SCALE * substream(seed, "backgrounds").standard_normal(
        (config.backgrounds, config.dimension)
    )
    zrs = ZROTATION_OFFSET_SCALE * substream(seed, "zrotations").standard_normal(
        (config.zrotations, config.dimension)
    )
    return protos, bgs, zrs


def _apply_illumination(
    base: np.ndarray,
    prototype_rows: np.ndarray,
    gains: np.ndarray,
    config: GeneratorConfig,
    rng,
) -> np.ndarray:
    """Scale the leading gain dims by each sample's light-intensity ratio.

    Those brightness channels keep only an attenuated share of the identity
    prototype (``illum_identity_leak``) plus a per-sample exposure jitter
    (``illum_jitter``), both riding on a fixed positive baseline, so raw
    cross-illumination comparisons are genuinely confounded while the
    channel statistics stay domain-stable."""
    feats = base.copy()
    k = config.illum_gain_dims
    if k:
        block = feats[:, :k] - (1.0 - config.illum_identity_leak) * prototype_rows[:, :k]
        block += config.illum_jitter * rng.standard_normal(block.shape)
        feats[:, :k] = gains[:, None] * (block + config.illum_baseline)
    return feats


def generate_source_domain(config: GeneratorConfig) -> SampleSet:
    """Full factor grid as a labeled SampleSet, deterministic in config.seed.

    Camera labels coincide with background labels: in the rendered analogue
    each background is one fixed virtual camera location.
    """
    k_id, n_bg, n_zr = config.identities, config.backgrounds, config.zrotations
    labels = np.asarray(config.illuminations, dtype=np.int64)
    n = config.total_samples
    ii, bb, rr, ll = np.unravel_index(np.arange(n), (k_id, n_bg, n_zr, len(labels)))

    protos, bgs, zrs = _factor_components(config, config.seed)
    proto_rows = protos[ii]
    base = proto_rows + bgs[bb] + zrs[rr]
    gains = np.array([illumination_gain(lab) for lab in labels])[ll]
    feats = _apply_illumination(base, proto_rows, gains, config, substream(config.seed, "jitter"))
    feats += config.noise_scale * substream(config.seed, "noise").standard_normal((n, config.dimension))

    samples = [
        Sample(
            identity=int(ii[j]),
            camera=int(bb[j]),
            features=feats[j],
            illumination=int(labels[ll[j]]),
            zrotation=int(rr[j]),
        )
        for j in range(n)
    ]
    return SampleSet(samples, dimension=config.dimension)


def select_subset_by_illumination(sset: SampleSet, label: int) -> SampleSet:
    """Samples whose illumination equals ``label``, order preserved; may be empty."""
    return SampleSet(
        [s for s in sset if s.illumination == label],
        dimension=sset.dimension,
    )


def simulate_target_domain(config: GeneratorConfig, condition_weights, seed: int) -> SampleSet:
    """Desk-scale unlabeled-domain stand-in with hidden illumination truth.

    One sample per (identity, background, zrotation) tuple; each sample's
    illumination label is drawn from ``condition_weights``, which aligns
    index-by-index with ``config.illuminations``.  The drawn label is
    recorded on the sample as ground truth for evaluation; consumers that
    model deployment conditions must not read it.  Two camera labels are
    assigned round-robin within each identity.
    """
    weights = np.asarray(condition_weights, dtype=np.float64)
    if weights.ndim != 1 or weights.shape[0] != len(config.illuminations):
        raise ValueError("condition_weights must align with config.illuminations")
    if (weights < 0).any():
        raise ValueError("condition_weights must be non-negative")
    if abs(float(weights.sum()) - 1.0) > 1e-9:
        raise ValueError(f"condition_weights must sum to 1, got {weights.sum()!r}")

    k_id, n_bg, n_zr = config.identities, config.backgrounds, config.zrotations
    n = k_id * n_bg * n_zr
    ii, bb, rr = np.unravel_index(np.arange(n), (k_id, n_bg, n_zr))

    protos, bgs, zrs = _factor_components(config, seed)
    proto_rows = protos[ii]
    base = proto_rows + bgs[bb] + zrs[rr]

    labels = np.asarray(config.illuminations, dtype=np.int64)
    lidx = substream(seed, "illumination").choice(len(labels), size=n, p=weights)
    gains = np.array([illumination_gain(lab) for lab in labels])[lidx]
    feats = _apply_illumination(base, proto_rows, gains, config, substream(seed, "jitter"))
    feats += config.noise_scale * substream(seed, "noise").standard_normal((n, config.dimension))

    cameras = (bb * n_zr + rr) % 2
    samples = [
        Sample(
            identity=int(ii[j]),
            camera=int(cameras[j]),
            features=feats[j],
            illumination=int(labels[lidx[j]]),
            zrotation=int(rr[j]),
        )
        for j in range(n)
    ]
    return SampleSet(samples, dimension=config.dimension)
