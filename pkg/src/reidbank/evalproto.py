"""Benchmark split protocols, valid-query filtering, and CMC evaluation.

Protocols reproduce the published query/gallery construction of five re-ID
benchmarks on conforming metadata, plus a ``generic`` camera split for
simulated targets.  The ``market`` protocol is a fixed published split,
so its records must arrive role-tagged; everything else draws from the
split seed.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import DistanceMatrix, SampleSet
from .encoders import Encoder
from .illum import CentroidClassifier
from .metric import MahalanobisMatrix, MetricBank
from .seeding import substream
from .smb import assemble, distance_matrix, rank_row

PROTOCOLS = ("prid", "viper", "cuhk01", "ilids", "market", "generic")

EXCLUDE_NONE = "none"
EXCLUDE_SAME_ID_SAME_CAMERA = "same_id_same_camera"
EXCLUSIONS = (EXCLUDE_NONE, EXCLUDE_SAME_ID_SAME_CAMERA)


@dataclass(frozen=True)
class MetaRecord:
    """Identity/camera membership of one image, with a sequence index to
    disambiguate repeated captures and an optional published-split role."""

    identity: int
    camera: int
    sequence: int = 0
    role: Optional[str] = None

    def __post_init__(self):
        if self.identity < 0 or self.camera < 0 or self.sequence < 0:
            raise ValueError("identity, camera, and sequence must be non-negative")


def meta_from_samples(sset: SampleSet) -> list[MetaRecord]:
    """Metadata view of a SampleSet; sequence numbers count repeated
    (identity, camera) occurrences in order."""
    counters: dict[tuple[int, int], int] = {}
    records = []
    for s in sset:
        key = (s.identity, s.camera)
        seq = counters.get(key, 0)
        counters[key] = seq + 1
        records.append(MetaRecord(identity=s.identity, camera=s.camera, sequence=seq))
    return records


@dataclass(frozen=True)
class SplitSpec:
    protocol: str
    seed: int
    query_indices: tuple[int, ...]
    gallery_indices: tuple[int, ...]

    def __post_init__(self):
        q = tuple(int(i) for i in self.query_indices)
        g = tuple(int(i) for i in self.gallery_indices)
        if set(q) & set(g):
            raise ValueError("query and gallery index lists must be disjoint")
        object.__setattr__(self, "query_indices", q)
        object.__setattr__(self, "gallery_indices", g)


def _two_cameras(meta: Sequence[MetaRecord], protocol: str) -> tuple[int, int]:
    cams = sorted({m.camera for m in meta})
    if len(cams) != 2:
        raise ValueError(f"{protocol} protocol expects exactly 2 cameras, got {len(cams)}")
    return cams[0], cams[1]


def _single_shot_indices(meta: Sequence[MetaRecord]) -> dict[tuple[int, int], int]:
    """Index of the lowest-sequence record per (identity, camera)."""
    chosen: dict[tuple[int, int], int] = {}
    for i, m in enumerate(meta):
        key = (m.identity, m.camera)
        if key not in chosen or meta[chosen[key]].sequence > m.sequence:
            chosen[key] = i
    return chosen


def _records_by(meta, identity, camera) -> list[int]:
    return [i for i, m in enumerate(meta) if m.identity == identity and m.camera == camera]


def make_split(
    meta: Sequence[MetaRecord],
    protocol: str,
    seed: int = 0,
    query_fraction: float = 1.0,
) -> SplitSpec:
    """Build the query/gallery index lists for one protocol.

    prid     single-shot two-camera split: 100 of the 200 shared identities
             form the query (camera A side); their camera-B images plus all
             549 camera-B-only identities form the gallery.
    viper    632 identities, one image per camera; 316 random identities,
             camera-a images query, camera-b images gallery.
    cuhk01   971 identities, two images per camera; 486 random identities,
             one random image per side.
    ilids    300 identities, one image per camera; 150 random identities.
    market   the published fixed split; records must carry role tags and
             the result is seed-independent.
    generic  lowest-camera records of a seeded fraction of identities form
             the query; all other-camera records form the gallery.
    """
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}; expected one of {PROTOCOLS}")
    meta = list(meta)
    if protocol == "market":
        roles = {m.role for m in meta}
        if None in roles:
            raise ValueError("market protocol requires role-tagged records (published split)")
        query = [i for i, m in enumerate(meta) if m.role == "query"]
        gallery = [i for i, m in enumerate(meta) if m.role == "gallery"]
        return SplitSpec(protocol, seed, tuple(query), tuple(gallery))

    rng = substream(seed, "split", protocol)

    if protocol == "generic":
        if not 0 < query_fraction <= 1:
            raise ValueError("query_fraction must lie in (0, 1]")
        cams = sorted({m.camera for m in meta})
        if len(cams) < 2:
            raise ValueError("generic protocol expects at least 2 cameras")
        probe_cam = cams[0]
        idents = sorted({m.identity for m in meta})
        if query_fraction < 1:
            count = max(1, int(round(query_fraction * len(idents))))
            chosen = sorted(rng.choice(idents, size=count, replace=False).tolist())
        else:
            chosen = idents
        chosen_set = set(chosen)
        query = [i for i, m in enumerate(meta) if m.camera == probe_cam and m.identity in chosen_set]
        gallery = [i for i, m in enumerate(meta) if m.camera != probe_cam]
        return SplitSpec(protocol, seed, tuple(query), tuple(gallery))

    cam_a, cam_b = _two_cameras(meta, protocol)
    ids_a = {m.identity for m in meta if m.camera == cam_a}
    ids_b = {m.identity for m in meta if m.camera == cam_b}

    if protocol == "prid":
        shot = _single_shot_indices(meta)
        shared = sorted(ids_a & ids_b)
        b_only = sorted(ids_b - ids_a)
        if len(shared) != 200:
            raise ValueError(f"prid protocol expects 200 identities shared across cameras, got {len(shared)}")
        if len(b_only) != 549:
            raise ValueError(f"prid protocol expects 549 camera-B-only identities, got {len(b_only)}")
        chosen = sorted(rng.choice(shared, size=100, replace=False).tolist())
        query = [shot[(ident, cam_a)] for ident in chosen]
        gallery = [shot[(ident, cam_b)] for ident in chosen] + [shot[(ident, cam_b)] for ident in b_only]
        return SplitSpec(protocol, seed, tuple(query), tuple(gallery))

    if protocol == "viper":
        idents = sorted(ids_a | ids_b)
        if len(idents) != 632 or ids_a != ids_b:
            raise ValueError(f"viper protocol expects 632 identities in both cameras, got {len(idents)}")
        shot = _single_shot_indices(meta)
        for ident in idents:
            if len(_records_by(meta, ident, cam_a)) != 1 or len(_records_by(meta, ident, cam_b)) != 1:
                raise ValueError("viper protocol expects exactly one image per identity per camera")
        chosen = sorted(rng.choice(idents, size=316, replace=False).tolist())
        query = [shot[(ident, cam_a)] for ident in chosen]
        gallery = [shot[(ident, cam_b)] for ident in chosen]
        return SplitSpec(protocol, seed, tuple(query), tuple(gallery))

    if protocol == "cuhk01":
        idents = sorted(ids_a | ids_b)
        if len(idents) != 971 or ids_a != ids_b:
            raise ValueError(f"cuhk01 protocol expects 971 identities in both cameras, got {len(idents)}")
        per_side: dict[tuple[int, int], list[int]] = {}
        for ident in idents:
            for cam in (cam_a, cam_b):
                recs = _records_by(meta, ident, cam)
                if len(recs) != 2:
                    raise ValueError("cuhk01 protocol expects exactly two images per identity per camera")
                per_side[(ident, cam)] = recs
        chosen = sorted(rng.choice(idents, size=486, replace=False).tolist())
        query = [per_side[(ident, cam_a)][int(rng.integers(0, 2))] for ident in chosen]
        gallery = [per_side[(ident, cam_b)][int(rng.integers(0, 2))] for ident in chosen]
        return SplitSpec(protocol, seed, tuple(query), tuple(gallery))

    # ilids
    idents = sorted(ids_a | ids_b)
    if len(idents) != 300 or ids_a != ids_b:
        raise ValueError(f"ilids protocol expects 300 identities in both cameras, got {len(idents)}")
    shot = _single_shot_indices(meta)
    chosen = sorted(rng.choice(idents, size=150, replace=False).tolist())
    query = [shot[(ident, cam_a)] for ident in chosen]
    gallery = [shot[(ident, cam_b)] for ident in chosen]
    return SplitSpec(protocol, seed, tuple(query), tuple(gallery))


def filter_valid_queries(split: SplitSpec, meta: Sequence[MetaRecord]) -> SplitSpec:
    """Drop query indices whose identity never occurs in the gallery;
    the gallery is unchanged.  Idempotent."""
    meta = list(meta)
    gallery_ids = {meta[i].identity for i in split.gallery_indices}
    kept = tuple(i for i in split.query_indices if meta[i].identity in gallery_ids)
    return dataclasses.replace(split, query_indices=kept)


@dataclass(frozen=True)
class CmcResult:
    """CMC-k accuracies with the exact hit counts behind them."""

    ks: tuple[int, ...]
    hits: tuple[int, ...]
    num_queries: int

    def accuracy(self, k: int) -> float:
        return self.hits[self.ks.index(k)] / self.num_queries

    def __getitem__(self, k: int) -> float:
        return self.accuracy(k)

    def fraction(self, k: int) -> Fraction:
        return Fraction(self.hits[self.ks.index(k)], self.num_queries)

    def percent(self, k: int) -> float:
        """Percentage rounded to one decimal, the usual table precision."""
        return round(100.0 * self.accuracy(k), 1)

    def as_dict(self) -> dict[int, float]:
        return {k: self.accuracy(k) for k in self.ks}


def _meta_arrays(records) -> tuple[np.ndarray, np.ndarray]:
    ids = np.array([m.identity for m in records], dtype=np.int64)
    cams = np.array([m.camera for m in records], dtype=np.int64)
    return ids, cams


def cmc(
    dist: DistanceMatrix,
    query_meta,
    gallery_meta,
    ks: Sequence[int],
    exclusion: str = EXCLUDE_NONE,
) -> CmcResult:
    """Cumulative matching characteristics at the requested ranks.

    Each query row is ranked, gallery entries removed by the exclusion
    policy are dropped, and the rank of the first same-identity entry is
    scored.  A query left with no true match raises, naming the query;
    callers should filter valid queries first.
    """
    if exclusion not in EXCLUSIONS:
        raise ValueError(f"unknown exclusion policy {exclusion!r}; expected one of {EXCLUSIONS}")
    ks = tuple(int(k) for k in ks)
    if not ks or any(k < 1 for k in ks):
        raise ValueError("ks must be positive integers")
    q_ids, q_cams = _meta_arrays(query_meta)
    g_ids, g_cams = _meta_arrays(gallery_meta)
    if dist.rows != q_ids.size or dist.cols != g_ids.size:
        raise ValueError(
            f"distance matrix is {dist.rows}x{dist.cols} but metadata describes {q_ids.size}x{g_ids.size}"
        )
    if q_ids.size == 0:
        raise ValueError("cmc requires at least one query")
    hits = {k: 0 for k in ks}
    for qi in range(dist.rows):
        order = rank_row(dist.entries[qi])
        ranked_ids = g_ids[order]
        if exclusion == EXCLUDE_SAME_ID_SAME_CAMERA:
            keep = ~((ranked_ids == q_ids[qi]) & (g_cams[order] == q_cams[qi]))
            ranked_ids = ranked_ids[keep]
        matches = ranked_ids == q_ids[qi]
        if not matches.any():
            raise ValueError(
                f"query {qi} (identity {int(q_ids[qi])}) has no gallery match after exclusion; "
                "run filter_valid_queries first"
            )
        rank = int(np.argmax(matches)) + 1
        for k in ks:
            if rank <= k:
                hits[k] += 1
    return CmcResult(ks=ks, hits=tuple(hits[k] for k in ks), num_queries=q_ids.size)


def single_illumination_eval(
    encoder: Encoder,
    matrix: MahalanobisMatrix,
    queries: SampleSet,
    gallery: SampleSet,
    ks: Sequence[int],
    exclusion: str = EXCLUDE_NONE,
) -> CmcResult:
    """Score with one encoder and one matrix for every sample, bypassing the
    switch: the degenerate single-condition model bank."""
    d = encoder.input_dimension
    switch = CentroidClassifier(labels=(1,), centroids=np.zeros((1, d)))
    bank = MetricBank({(1, 1): MahalanobisMatrix(matrix.entries, (1, 1))}, conditions=1)
    model = assemble(switch, (encoder.with_condition(1),), bank)
    dm = distance_matrix(model, queries, gallery)
    return cmc(dm, queries.samples, gallery.samples, ks, exclusion)


def write_split(path, split: SplitSpec) -> None:
    path = Path(path)
    payload = {
        "protocol": split.protocol,
        "seed": split.seed,
        "query_indices": list(split.query_indices),
        "gallery_indices": list(split.gallery_indices),
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def read_split(path) -> SplitSpec:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    return SplitSpec(
        protocol=payload["protocol"],
        seed=int(payload["seed"]),
        query_indices=tuple(payload["query_indices"]),
        gallery_indices=tuple(payload["gallery_indices"]),
    )
