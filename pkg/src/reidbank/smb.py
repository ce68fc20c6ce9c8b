"""The assembled model bank: illumination switch, per-condition encoders,
and the condition-pair metric bank.

Each sample is routed by the switch to its condition's encoder; a query
and gallery pair is then scored by the bank matrix of their unordered
condition pair.  Distances from different matrices within one query row
are compared raw.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import DistanceMatrix, Sample, SampleSet
from .encoders import Encoder, encode
from .illum import CentroidClassifier, classify
from .metric import MetricBank, quad_form_rows


@dataclass(frozen=True)
class SynthesisModelBank:
    switch: CentroidClassifier
    encoders: tuple[Encoder, ...]
    bank: MetricBank

    def __post_init__(self):
        object.__setattr__(self, "encoders", tuple(self.encoders))
        n = self.bank.conditions
        if len(self.encoders) != n:
            raise ValueError(
                f"assembly mismatch: {len(self.encoders)} encoders but the bank covers {n} conditions"
            )
        if self.switch.labels != tuple(range(1, n + 1)):
            raise ValueError(
                f"assembly mismatch: switch labels {self.switch.labels} are not conditions 1..{n}"
            )
        for i, enc in enumerate(self.encoders, start=1):
            if enc.condition != i:
                raise ValueError(f"assembly mismatch: encoder at slot {i} is tagged condition {enc.condition}")
            if enc.input_dimension != self.switch.dimension:
                raise ValueError(
                    f"assembly mismatch: encoder {i} expects {enc.input_dimension}-d input, "
                    f"switch is {self.switch.dimension}-d"
                )
            if enc.output_dimension != self.bank.dimension:
                raise ValueError(
                    f"assembly mismatch: encoder {i} emits {enc.output_dimension}-d vectors, "
                    f"bank matrices are {self.bank.dimension}-d"
                )

    @property
    def conditions(self) -> int:
        return self.bank.conditions


def assemble(switch: CentroidClassifier, encoders, bank: MetricBank) -> SynthesisModelBank:
    """Validated, immutable model bank; raises naming the inconsistent part."""
    return SynthesisModelBank(switch=switch, encoders=tuple(encoders), bank=bank)


def route(smb: SynthesisModelBank, sample) -> tuple[int, np.ndarray]:
    """(condition index, encoded vector) for one sample."""
    x = sample.features if isinstance(sample, Sample) else np.asarray(sample, dtype=np.float64)
    condition = classify(smb.switch, x)
    return condition, encode(smb.encoders[condition - 1], x)


def distance(smb: SynthesisModelBank, query, gallery) -> float:
    """Routed squared distance between one query and one gallery sample."""
    cq, xq = route(smb, query)
    cg, xg = route(smb, gallery)
    matrix = smb.bank.matrix_for(cq, cg)
    return float(quad_form_rows((xq - xg)[None, :], matrix.entries)[0])


def distance_matrix(
    smb: SynthesisModelBank,
    queries: SampleSet,
    gallery: SampleSet,
    workers: int = 1,
) -> DistanceMatrix:
    """All query-to-gallery routed distances.

    Rows are independent; with ``workers`` > 1 they are computed
    concurrently through the same per-row kernel, so scheduling cannot
    change any entry.
    """
    q_routed = [route(smb, s) for s in queries]
    g_routed = [route(smb, s) for s in gallery]
    g_matrix = (
        np.stack([vec for _, vec in g_routed]) if g_routed else np.zeros((0, smb.bank.dimension))
    )
    g_conditions = np.array([cond for cond, _ in g_routed], dtype=np.int64)
    groups = [(cond, np.flatnonzero(g_conditions == cond)) for cond in range(1, smb.conditions + 1)]
    groups = [(cond, idx) for cond, idx in groups if idx.size]

    out = np.zeros((len(queries), len(gallery)))

    def fill_row(qi: int) -> None:
        cq, xq = q_routed[qi]
        for cg, idx in groups:
            entries = smb.bank.matrix_for(cq, cg).entries
            out[qi, idx] = quad_form_rows(xq[None, :] - g_matrix[idx], entries)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill_row, range(len(queries))))
    else:
        for qi in range(len(queries)):
            fill_row(qi)
    return DistanceMatrix(out)


def rank_row(row) -> np.ndarray:
    """Gallery indices by ascending distance; ties keep the lower index."""
    arr = np.asarray(row, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError("rank_row expects a 1-D row")
    if not np.isfinite(arr).all():
        raise ValueError("rank_row requires finite distances")
    return np.argsort(arr, kind="stable")
