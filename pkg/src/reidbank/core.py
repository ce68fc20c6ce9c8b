"""Shared domain types and the delimited feature-file format.

A feature file is UTF-8 text with LF line endings.  The first line is the
header ``id,camera,illum,zrot,f0,...,f{d-1}``; each following line is one
record, comma separated, no quoting.  ``illum`` and ``zrot`` may be empty
(unknown).  Floats are written with full round-trip precision so a rerun
of the same generator produces byte-identical files.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

ILLUMINATION_RANGE = range(0, 8)
ZROTATION_RANGE = range(0, 8)

#: Feature width of the reference encoder head; all operations are generic in d.
DEFAULT_DIMENSION = 1024


@dataclass(frozen=True)
class Sample:
    """One d-dimensional embedding with identity/camera labels and optional
    illumination and z-rotation labels.

    Construction only coerces types; range and finiteness rules are checked
    by :func:`validate_set`, which reports violations instead of raising.
    """

    identity: int
    camera: int
    features: np.ndarray
    illumination: Optional[int] = None
    zrotation: Optional[int] = None

    def __post_init__(self):
        arr = np.array(self.features, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError(f"features must be a non-empty 1-D vector, got shape {arr.shape}")
        arr.flags.writeable = False
        object.__setattr__(self, "features", arr)
        object.__setattr__(self, "identity", int(self.identity))
        object.__setattr__(self, "camera", int(self.camera))
        if self.illumination is not None:
            object.__setattr__(self, "illumination", int(self.illumination))
        if self.zrotation is not None:
            object.__setattr__(self, "zrotation", int(self.zrotation))

    @property
    def dimension(self) -> int:
        return self.features.shape[0]


class SampleSet:
    """Ordered, immutable collection of samples sharing one feature dimension.

    Iteration order is fixed by construction order; iterating twice yields
    identical sequences.
    """

    def __init__(self, samples: Iterable[Sample], dimension: Optional[int] = None):
        self._samples = tuple(samples)
        if dimension is None:
            if not self._samples:
                raise ValueError("dimension is required for an empty SampleSet")
            dimension = self._samples[0].dimension
        self._dimension = int(dimension)
        self._matrix: Optional[np.ndarray] = None

    @property
    def samples(self) -> tuple[Sample, ...]:
        return self._samples

    @property
    def dimension(self) -> int:
        return self._dimension

    def __len__(self) -> int:
        return len(self._samples)

    def __iter__(self) -> Iterator[Sample]:
        return iter(self._samples)

    def __getitem__(self, index: int) -> Sample:
        return self._samples[index]

    def feature_matrix(self) -> np.ndarray:
        """(n, d) matrix of all features; requires a dimension-consistent set."""
        if self._matrix is None:
            if not self._samples:
                mat = np.zeros((0, self._dimension))
            else:
                if any(s.dimension != self._dimension for s in self._samples):
                    raise ValueError("mixed feature dimensions; run validate_set first")
                mat = np.stack([s.features for s in self._samples])
            mat.flags.writeable = False
            self._matrix = mat
        return self._matrix

    def identities(self) -> np.ndarray:
        return np.array([s.identity for s in self._samples], dtype=np.int64)

    def cameras(self) -> np.ndarray:
        return np.array([s.camera for s in self._samples], dtype=np.int64)

    def illuminations(self) -> np.ndarray:
        """Illumination labels with -1 standing in for unknown."""
        return np.array(
            [-1 if s.illumination is None else s.illumination for s in self._samples],
            dtype=np.int64,
        )

    def take(self, indices: Sequence[int]) -> "SampleSet":
        """Sub-set by positional indices, order preserved as given."""
        return SampleSet([self._samples[int(i)] for i in indices], dimension=self._dimension)


def validate_set(sset: SampleSet) -> list[str]:
    """All invariant violations in the set; empty list means the set is valid.

    Side-effect free and idempotent.
    """
    violations: list[str] = []
    for i, s in enumerate(sset):
        if s.dimension != sset.dimension:
            violations.append(
                f"sample {i}: dimension {s.dimension} does not match set dimension {sset.dimension}"
            )
        if not np.isfinite(s.features).all():
            violations.append(f"sample {i}: non-finite feature entries")
        if s.identity < 0:
            violations.append(f"sample {i}: negative identity label {s.identity}")
        if s.camera < 0:
            violations.append(f"sample {i}: negative camera label {s.camera}")
        if s.illumination is not None and s.illumination not in ILLUMINATION_RANGE:
            violations.append(f"sample {i}: illumination {s.illumination} outside {{0..7}}")
        if s.zrotation is not None and s.zrotation not in ZROTATION_RANGE:
            violations.append(f"sample {i}: zrotation {s.zrotation} outside {{0..7}}")
    return violations


@dataclass(frozen=True)
class DistanceMatrix:
    """Q x G matrix of query-to-gallery distances; every entry finite."""

    entries: np.ndarray

    def __post_init__(self):
        arr = np.array(self.entries, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"distance matrix must be 2-D, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("distance matrix entries must all be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "entries", arr)

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]


# ---------------------------------------------------------------------------
# Feature file format


def _fmt(x: float) -> str:
    return repr(float(x))


def write_feature_file(path, sset: SampleSet) -> None:
    path = Path(path)
    d = sset.dimension
    header = "id,camera,illum,zrot," + ",".join(f"f{i}" for i in range(d))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for s in sset:
            illum = "" if s.illumination is None else str(s.illumination)
            zrot = "" if s.zrotation is None else str(s.zrotation)
            feats = ",".join(_fmt(v) for v in s.features)
            fh.write(f"{s.identity},{s.camera},{illum},{zrot},{feats}\n")


def read_feature_file(path) -> SampleSet:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        if header[:4] != ["id", "camera", "illum", "zrot"]:
            raise ValueError(f"{path}: bad feature file header")
        d = len(header) - 4
        if d < 1:
            raise ValueError(f"{path}: header declares no feature columns")
        samples = []
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != d + 4:
                raise ValueError(f"{path}:{lineno}: expected {d + 4} fields, got {len(parts)}")
            illum = int(parts[2]) if parts[2] else None
            zrot = int(parts[3]) if parts[3] else None
            feats = np.array([float(v) for v in parts[4:]])
            samples.append(
                Sample(
                    identity=int(parts[0]),
                    camera=int(parts[1]),
                    features=feats,
                    illumination=illum,
                    zrotation=zrot,
                )
            )
    return SampleSet(samples, dimension=d)


def write_distance_matrix(path, dm: DistanceMatrix) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{dm.rows},{dm.cols}\n")
        for row in dm.entries:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_distance_matrix(path) -> DistanceMatrix:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        q, g = (int(v) for v in fh.readline().rstrip("\n").split(","))
        rows = []
        for line in fh:
            line = line.rstrip("\n")
            if line:
                rows.append([float(v) for v in line.split(",")])
    arr = np.array(rows, dtype=np.float64).reshape(q, g) if rows else np.zeros((q, g))
    if arr.shape != (q, g):
        raise ValueError(f"{path}: matrix body does not match declared shape {q}x{g}")
    return DistanceMatrix(arr)
