"""KISSME Mahalanobis metric learning and the condition-pair metric bank.

KISSME estimates second moments of pair differences for same-identity and
different-identity pairs and takes

    M_hat = inv(Sigma_S + lam*I) - inv(Sigma_D + lam*I)

followed by symmetrization and projection onto the PSD cone.  A metric
bank holds one matrix per unordered condition pair (a, b) with
1 <= a <= b <= N, which is N*(N-1)/2 + N matrices in total.  Distances
produced under different matrices are compared raw; no cross-matrix
rescaling is applied.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import SampleSet
from .seeding import substream

SYMMETRY_TOLERANCE = 1e-9
NEGATIVE_DISTANCE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class MahalanobisMatrix:
    """Symmetric d x d matrix for squared-distance evaluation, optionally
    tagged with the unordered condition pair it serves."""

    entries: np.ndarray
    condition_pair: Optional[tuple[int, int]] = None

    def __post_init__(self):
        arr = np.array(self.entries, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError(f"matrix must be square, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("matrix entries must be finite")
        if np.abs(arr - arr.T).max(initial=0.0) > SYMMETRY_TOLERANCE:
            raise ValueError("matrix is not symmetric within 1e-9")
        arr.flags.writeable = False
        object.__setattr__(self, "entries", arr)
        if self.condition_pair is not None:
            a, b = (int(v) for v in self.condition_pair)
            object.__setattr__(self, "condition_pair", (min(a, b), max(a, b)))

    @property
    def dimension(self) -> int:
        return self.entries.shape[0]


def identity_matrix(dimension: int, condition_pair: Optional[tuple[int, int]] = None) -> MahalanobisMatrix:
    return MahalanobisMatrix(np.eye(dimension), condition_pair)


def psd_project(sym: np.ndarray) -> np.ndarray:
    """Nearest-PSD reconstruction: eigendecompose, clamp negative eigenvalues
    to zero, rebuild.  Input must be symmetric within 1e-9."""
    arr = np.asarray(sym, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"psd_project expects a square matrix, got shape {arr.shape}")
    if np.abs(arr - arr.T).max(initial=0.0) > SYMMETRY_TOLERANCE:
        raise ValueError("psd_project input is not symmetric within 1e-9")
    w, v = np.linalg.eigh(arr)
    out = (v * np.maximum(w, 0.0)) @ v.T
    return 0.5 * (out + out.T)


def _entries(matrix) -> np.ndarray:
    return matrix.entries if isinstance(matrix, MahalanobisMatrix) else np.asarray(matrix, dtype=np.float64)


def quad_form_rows(diff: np.ndarray, entries: np.ndarray) -> np.ndarray:
    """Row-wise quadratic forms diff_g^T M diff_g for a (G, d) difference
    block; negatives within tolerance clamp to zero."""
    vals = np.einsum("gd,gd->g", diff @ entries, diff)
    if vals.size and vals.min() < -NEGATIVE_DISTANCE_TOLERANCE:
        raise ValueError(f"quadratic form produced {vals.min()}; matrix is not PSD")
    return np.maximum(vals, 0.0)


def mahalanobis_sq(matrix, x, y) -> float:
    """Squared distance (x - y)^T M (x - y)."""
    entries = _entries(matrix)
    xv = np.asarray(x, dtype=np.float64)
    yv = np.asarray(y, dtype=np.float64)
    if xv.shape != yv.shape or xv.ndim != 1:
        raise ValueError(f"vector shapes must match, got {xv.shape} and {yv.shape}")
    if xv.shape[0] != entries.shape[0]:
        raise ValueError(f"dimension mismatch: matrix is {entries.shape[0]}-d, vectors are {xv.shape[0]}-d")
    return float(quad_form_rows((xv - yv)[None, :], entries)[0])


@dataclass(frozen=True)
class PairSet:
    """Similar (same identity) and dissimilar (different identity) vector
    pairs, stored as aligned (n, d) blocks; both groups non-empty."""

    similar_a: np.ndarray
    similar_b: np.ndarray
    dissimilar_a: np.ndarray
    dissimilar_b: np.ndarray

    def __post_init__(self):
        blocks = {}
        for name in ("similar_a", "similar_b", "dissimilar_a", "dissimilar_b"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            if arr.ndim != 2 or arr.shape[0] == 0:
                raise ValueError(f"{name} must be a non-empty (n, d) block")
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} contains non-finite entries")
            arr.flags.writeable = False
            blocks[name] = arr
        dims = {b.shape[1] for b in blocks.values()}
        if len(dims) != 1:
            raise ValueError("all pair blocks must share one dimension")
        if blocks["similar_a"].shape != blocks["similar_b"].shape:
            raise ValueError("similar blocks must align")
        if blocks["dissimilar_a"].shape != blocks["dissimilar_b"].shape:
            raise ValueError("dissimilar blocks must align")
        for name, arr in blocks.items():
            object.__setattr__(self, name, arr)

    @classmethod
    def from_pairs(cls, similar, dissimilar) -> "PairSet":
        sim = [(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)) for a, b in similar]
        dis = [(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)) for a, b in dissimilar]
        if not sim or not dis:
            raise ValueError("both pair lists must be non-empty")
        return cls(
            similar_a=np.stack([a for a, _ in sim]),
            similar_b=np.stack([b for _, b in sim]),
            dissimilar_a=np.stack([a for a, _ in dis]),
            dissimilar_b=np.stack([b for _, b in dis]),
        )

    @property
    def dimension(self) -> int:
        return self.similar_a.shape[1]

    @property
    def n_similar(self) -> int:
        return self.similar_a.shape[0]

    @property
    def n_dissimilar(self) -> int:
        return self.dissimilar_a.shape[0]


def _inverse_sym(matrix: np.ndarray, tag: str) -> np.ndarray:
    """Inverse through symmetric eigendecomposition; names the offending
    covariance when it is numerically singular."""
    w, v = np.linalg.eigh(matrix)
    if w.min() <= 0 or w.min() < w.max() * 1e-13:
        raise np.linalg.LinAlgError(
            f"{tag} covariance is numerically singular (eigenvalues in [{w.min()!r}, {w.max()!r}]); "
            "use a positive regularization"
        )
    return (v / w) @ v.T


def kissme_learn(pairs: PairSet, reg: Optional[float] = None) -> MahalanobisMatrix:
    """Learn a Mahalanobis matrix from labeled pairs.

    ``reg`` is the ridge added to both pair-difference covariances before
    inversion; None selects 1e-3 * trace(Sigma)/d per covariance.
    """
    if reg is not None and reg < 0:
        raise ValueError("reg must be >= 0")
    d = pairs.dimension
    ds = pairs.similar_a - pairs.similar_b
    dd = pairs.dissimilar_a - pairs.dissimilar_b
    sigma_s = ds.T @ ds / pairs.n_similar
    sigma_d = dd.T @ dd / pairs.n_dissimilar
    lam_s = reg if reg is not None else 1e-3 * float(np.trace(sigma_s)) / d
    lam_d = reg if reg is not None else 1e-3 * float(np.trace(sigma_d)) / d
    eye = np.eye(d)
    m_hat = _inverse_sym(sigma_s + lam_s * eye, "similar-pair") - _inverse_sym(
        sigma_d + lam_d * eye, "dissimilar-pair"
    )
    return MahalanobisMatrix(psd_project(0.5 * (m_hat + m_hat.T)))


@dataclass(frozen=True)
class PairingPolicy:
    """How pairs are drawn for metric learning: all same-identity pairs up
    to ``max_pairs`` (uniformly subsampled beyond it) and an equal count of
    uniformly drawn different-identity pairs."""

    max_pairs: int = 50_000
    seed: int = 0

    def __post_init__(self):
        if self.max_pairs < 1:
            raise ValueError("max_pairs must be >= 1")


class MetricBank:
    """All N*(N-1)/2 + N matrices of an N-condition deployment, keyed by
    unordered condition pair."""

    def __init__(self, matrices: Mapping[tuple[int, int], MahalanobisMatrix], conditions: int):
        if conditions < 1:
            raise ValueError("conditions must be >= 1")
        normalized: dict[tuple[int, int], MahalanobisMatrix] = {}
        for key, mat in matrices.items():
            a, b = (int(v) for v in key)
            normalized[(min(a, b), max(a, b))] = mat
        expected = {(a, b) for a in range(1, conditions + 1) for b in range(a, conditions + 1)}
        if set(normalized) != expected:
            missing = sorted(expected - set(normalized))
            extra = sorted(set(normalized) - expected)
            raise ValueError(f"bank keys do not cover conditions 1..{conditions}: missing {missing}, extra {extra}")
        dims = {m.dimension for m in normalized.values()}
        if len(dims) != 1:
            raise ValueError("all bank matrices must share one dimension")
        self._matrices = normalized
        self._conditions = conditions

    @property
    def conditions(self) -> int:
        return self._conditions

    @property
    def dimension(self) -> int:
        return next(iter(self._matrices.values())).dimension

    def __len__(self) -> int:
        return len(self._matrices)

    def matrix_for(self, a: int, b: int) -> MahalanobisMatrix:
        key = (min(int(a), int(b)), max(int(a), int(b)))
        return self._matrices[key]

    def items(self):
        return sorted(self._matrices.items())


def _similar_pairs_within(sset: SampleSet, rng: np.random.Generator, cap: int):
    ids = sset.identities()
    left, right = [], []
    for ident in np.unique(ids):
        idx = np.flatnonzero(ids == ident)
        if idx.size < 2:
            continue
        a, b = np.triu_indices(idx.size, k=1)
        left.append(idx[a])
        right.append(idx[b])
    if not left:
        raise ValueError("no same-identity pairs available within the set")
    left = np.concatenate(left)
    right = np.concatenate(right)
    if left.size > cap:
        pick = rng.choice(left.size, size=cap, replace=False)
        left, right = left[pick], right[pick]
    return left, right


def _dissimilar_pairs_within(sset: SampleSet, rng: np.random.Generator, count: int):
    ids = sset.identities()
    if np.unique(ids).size < 2:
        raise ValueError("dissimilar pairs require at least two identities")
    left = np.empty(0, dtype=np.int64)
    right = np.empty(0, dtype=np.int64)
    while left.size < count:
        draw = max(count - left.size, 16) * 2
        a = rng.integers(0, len(sset), size=draw)
        b = rng.integers(0, len(sset), size=draw)
        keep = ids[a] != ids[b]
        left = np.concatenate([left, a[keep]])
        right = np.concatenate([right, b[keep]])
    return left[:count], right[:count]


def _similar_pairs_across(set_a: SampleSet, set_b: SampleSet, rng: np.random.Generator, cap: int, tag: str):
    ids_a, ids_b = set_a.identities(), set_b.identities()
    shared = np.intersect1d(np.unique(ids_a), np.unique(ids_b))
    if shared.size == 0:
        raise ValueError(f"conditions {tag} share no identities; cross-condition pairs are impossible")
    left, right = [], []
    for ident in shared:
        ia = np.flatnonzero(ids_a == ident)
        ib = np.flatnonzero(ids_b == ident)
        ga, gb = np.meshgrid(ia, ib, indexing="ij")
        left.append(ga.ravel())
        right.append(gb.ravel())
    left = np.concatenate(left)
    right = np.concatenate(right)
    if left.size > cap:
        pick = rng.choice(left.size, size=cap, replace=False)
        left, right = left[pick], right[pick]
    return left, right


def _dissimilar_pairs_across(set_a: SampleSet, set_b: SampleSet, rng: np.random.Generator, count: int, tag: str):
    ids_a, ids_b = set_a.identities(), set_b.identities()
    pairable = (ids_a[:, None] != ids_b[None, :]).any()
    if not pairable:
        raise ValueError(f"conditions {tag} admit no different-identity cross pairs")
    left = np.empty(0, dtype=np.int64)
    right = np.empty(0, dtype=np.int64)
    while left.size < count:
        draw = max(count - left.size, 16) * 2
        a = rng.integers(0, len(set_a), size=draw)
        b = rng.integers(0, len(set_b), size=draw)
        keep = ids_a[a] != ids_b[b]
        left = np.concatenate([left, a[keep]])
        right = np.concatenate([right, b[keep]])
    return left[:count], right[:count]


def build_pair_set(set_a: SampleSet, set_b: Optional[SampleSet], policy: PairingPolicy, tag: str) -> PairSet:
    """Pairs for one bank entry: within one set when ``set_b`` is None,
    across two sets otherwise."""
    rng = substream(policy.seed, "pairs", tag)
    if set_b is None:
        sl, sr = _similar_pairs_within(set_a, rng, policy.max_pairs)
        dl, dr = _dissimilar_pairs_within(set_a, rng, sl.size)
        mat = set_a.feature_matrix()
        return PairSet(mat[sl], mat[sr], mat[dl], mat[dr])
    sl, sr = _similar_pairs_across(set_a, set_b, rng, policy.max_pairs, tag)
    dl, dr = _dissimilar_pairs_across(set_a, set_b, rng, sl.size, tag)
    mat_a, mat_b = set_a.feature_matrix(), set_b.feature_matrix()
    return PairSet(mat_a[sl], mat_b[sr], mat_a[dl], mat_b[dr])


def build_metric_bank(
    per_condition: Sequence[SampleSet],
    policy: PairingPolicy = PairingPolicy(),
    reg: Optional[float] = None,
) -> MetricBank:
    """Learn the full bank: within-condition matrices from each set's own
    pairs and one cross matrix per condition pair from cross-set pairs."""
    n = len(per_condition)
    if n < 1:
        raise ValueError("at least one condition set is required")
    matrices: dict[tuple[int, int], MahalanobisMatrix] = {}
    for a in range(1, n + 1):
        pairs = build_pair_set(per_condition[a - 1], None, policy, f"{a}x{a}")
        learned = kissme_learn(pairs, reg)
        matrices[(a, a)] = MahalanobisMatrix(learned.entries, (a, a))
    for a in range(1, n + 1):
        for b in range(a + 1, n + 1):
            pairs = build_pair_set(per_condition[a - 1], per_condition[b - 1], policy, f"{a}x{b}")
            learned = kissme_learn(pairs, reg)
            matrices[(a, b)] = MahalanobisMatrix(learned.entries, (a, b))
    return MetricBank(matrices, conditions=n)


def write_matrix(path, matrix: MahalanobisMatrix) -> None:
    path = Path(path)
    a, b = matrix.condition_pair if matrix.condition_pair is not None else (0, 0)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{a},{b},{matrix.dimension}\n")
        for row in matrix.entries:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_matrix(path) -> MahalanobisMatrix:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        a, b, d = (int(v) for v in fh.readline().rstrip("\n").split(","))
        rows = [[float(v) for v in line.rstrip("\n").split(",")] for line in fh if line.strip()]
    arr = np.array(rows)
    if arr.shape != (d, d):
        raise ValueError(f"{path}: matrix body does not match declared dimension {d}")
    pair = None if (a, b) == (0, 0) else (a, b)
    return MahalanobisMatrix(arr, pair)
