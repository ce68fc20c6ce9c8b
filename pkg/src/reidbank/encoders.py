"""Per-condition affine feature encoders.

Two built-in kinds: ``identity`` passes features through unchanged, and
``whitening`` centers and decorrelates against one condition's training
statistics.  Whitening gives genuinely condition-adapted embeddings
without any deep training; scale differences between encoders are
deliberately preserved, which is exactly what the metric bank exists to
absorb.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Sample, SampleSet

ENCODER_KINDS = ("identity", "whitening")


@dataclass(frozen=True)
class Encoder:
    kind: str
    condition: int
    weight: np.ndarray
    mean: np.ndarray

    def __post_init__(self):
        if self.kind not in ENCODER_KINDS:
            raise ValueError(f"unknown encoder kind {self.kind!r}; expected one of {ENCODER_KINDS}")
        w = np.array(self.weight, dtype=np.float64)
        m = np.array(self.mean, dtype=np.float64)
        if w.ndim != 2:
            raise ValueError("weight must be a (d_out, d_in) matrix")
        if m.ndim != 1 or m.shape[0] != w.shape[1]:
            raise ValueError("mean must be a d_in vector")
        if not (np.isfinite(w).all() and np.isfinite(m).all()):
            raise ValueError("encoder parameters must be finite")
        w.flags.writeable = False
        m.flags.writeable = False
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "condition", int(self.condition))

    @property
    def input_dimension(self) -> int:
        return self.weight.shape[1]

    @property
    def output_dimension(self) -> int:
        return self.weight.shape[0]

    def with_condition(self, condition: int) -> "Encoder":
        return dataclasses.replace(self, condition=condition)


def identity_encoder(dimension: int, condition: int = 1) -> Encoder:
    return Encoder("identity", condition, np.eye(dimension), np.zeros(dimension))


def train_condition_encoder(synthetic: SampleSet, kind: str, condition: int = 1) -> Encoder:
    """Fit an encoder to one condition's training set.

    Whitening uses W = (Sigma + eps*I)^(-1/2) by symmetric eigendecomposition
    with eps = 1e-6 * trace(Sigma)/d (floored when the covariance is all
    zero, so a degenerate set still yields finite parameters).
    """
    if len(synthetic) == 0:
        raise ValueError("cannot train an encoder on an empty set")
    d = synthetic.dimension
    if kind == "identity":
        return identity_encoder(d, condition)
    if kind != "whitening":
        raise ValueError(f"unknown encoder kind {kind!r}; expected one of {ENCODER_KINDS}")
    mat = synthetic.feature_matrix()
    mean = mat.mean(axis=0)
    centered = mat - mean
    cov = centered.T @ centered / mat.shape[0]
    eps = 1e-6 * float(np.trace(cov)) / d
    if eps <= 0.0:
        eps = 1e-12
    w, v = np.linalg.eigh(cov)
    weight = (v / np.sqrt(np.maximum(w, 0.0) + eps)) @ v.T
    return Encoder("whitening", condition, weight, mean)


def encode(encoder: Encoder, x) -> np.ndarray:
    """Apply the affine map W (x - mean)."""
    vec = x.features if isinstance(x, Sample) else np.asarray(x, dtype=np.float64)
    if vec.ndim != 1 or vec.shape[0] != encoder.input_dimension:
        raise ValueError(
            f"dimension mismatch: encoder expects {encoder.input_dimension}-d input, got shape {vec.shape}"
        )
    return encoder.weight @ (vec - encoder.mean)


def encode_set(encoder: Encoder, sset: SampleSet) -> SampleSet:
    """Encode every sample, preserving all labels."""
    samples = [
        Sample(
            identity=s.identity,
            camera=s.camera,
            features=encode(encoder, s),
            illumination=s.illumination,
            zrotation=s.zrotation,
        )
        for s in sset
    ]
    return SampleSet(samples, dimension=encoder.output_dimension)


def write_encoder(path, encoder: Encoder) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{encoder.kind},{encoder.condition},{encoder.input_dimension},{encoder.output_dimension}\n")
        fh.write(",".join(repr(float(v)) for v in encoder.mean) + "\n")
        for row in encoder.weight:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_encoder(path) -> Encoder:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        kind, condition, d_in, d_out = fh.readline().rstrip("\n").split(",")
        mean = np.array([float(v) for v in fh.readline().rstrip("\n").split(",")])
        rows = [[float(v) for v in line.rstrip("\n").split(",")] for line in fh if line.strip()]
    weight = np.array(rows)
    if weight.shape != (int(d_out), int(d_in)) or mean.shape[0] != int(d_in):
        raise ValueError(f"{path}: encoder body does not match declared shape")
    return Encoder(kind, int(condition), weight, mean)
