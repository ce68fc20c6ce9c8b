import numpy as np
import pytest

from oracles import cmc_bruteforce
from reidbank.core import DistanceMatrix, Sample, SampleSet
from reidbank.encoders import identity_encoder
from reidbank.evalproto import (
    EXCLUDE_SAME_ID_SAME_CAMERA,
    MetaRecord,
    SplitSpec,
    cmc,
    filter_valid_queries,
    make_split,
    meta_from_samples,
    read_split,
    single_illumination_eval,
    write_split,
)
from reidbank.illum import CentroidClassifier
from reidbank.metric import MetricBank, identity_matrix
from reidbank.smb import assemble, distance_matrix


def rec(identity, camera, sequence=0, role=None):
    return MetaRecord(identity=identity, camera=camera, sequence=sequence, role=role)


# --- protocol-shaped metadata builders ---------------------------------------


def prid_meta():
    meta = []
    for ident in range(385):
        meta.append(rec(ident, 0))
    for ident in range(200):
        meta.append(rec(ident, 1))
    for ident in range(385, 934):
        meta.append(rec(ident, 1))
    return meta


def viper_meta():
    return [rec(i, c) for i in range(632) for c in (0, 1)]


def cuhk01_meta():
    return [rec(i, c, s) for i in range(971) for c in (0, 1) for s in (0, 1)]


def ilids_meta():
    return [rec(i, c) for i in range(300) for c in (0, 1)]


def market_meta():
    meta = []
    count = 0
    while count < 3368:
        meta.append(rec(count % 750, count % 6, role="query"))
        count += 1
    for i in range(19732):
        meta.append(rec(i % 800, i % 6, sequence=i, role="gallery"))
    return meta


def test_prid_split_counts():
    split = make_split(prid_meta(), "prid", seed=0)
    assert len(split.query_indices) == 100
    assert len(split.gallery_indices) == 649


def test_viper_split_counts():
    split = make_split(viper_meta(), "viper", seed=0)
    assert len(split.query_indices) == 316
    assert len(split.gallery_indices) == 316


def test_cuhk01_split_counts():
    split = make_split(cuhk01_meta(), "cuhk01", seed=0)
    assert len(split.query_indices) == 486
    assert len(split.gallery_indices) == 486


def test_ilids_split_counts():
    split = make_split(ilids_meta(), "ilids", seed=0)
    assert len(split.query_indices) == 150
    assert len(split.gallery_indices) == 150


def test_market_split_counts_and_seed_independence():
    meta = market_meta()
    a = make_split(meta, "market", seed=0)
    b = make_split(meta, "market", seed=12345)
    assert len(a.query_indices) == 3368
    assert len(a.gallery_indices) == 19732
    assert a.query_indices == b.query_indices
    assert a.gallery_indices == b.gallery_indices


def test_split_is_deterministic_given_seed():
    meta = viper_meta()
    a = make_split(meta, "viper", seed=9)
    b = make_split(meta, "viper", seed=9)
    assert a == b
    c = make_split(meta, "viper", seed=10)
    assert c.query_indices != a.query_indices


def test_prid_rejects_wrong_shared_identities():
    meta = [rec(i, 0) for i in range(385)] + [rec(i, 1) for i in range(150)]
    with pytest.raises(ValueError, match="200"):
        make_split(meta, "prid", seed=0)


def test_viper_rejects_wrong_identity_count():
    meta = [rec(i, c) for i in range(600) for c in (0, 1)]
    with pytest.raises(ValueError, match="632"):
        make_split(meta, "viper", seed=0)


def test_market_requires_roles():
    with pytest.raises(ValueError, match="role"):
        make_split(viper_meta(), "market", seed=0)


def test_generic_split_uses_lowest_camera_for_queries():
    meta = [rec(i, c) for i in range(10) for c in (0, 1, 1)]
    split = make_split(meta, "generic", seed=0)
    assert all(meta[i].camera == 0 for i in split.query_indices)
    assert all(meta[i].camera == 1 for i in split.gallery_indices)
    assert len(split.query_indices) == 10
    assert len(split.gallery_indices) == 20


def test_generic_split_fraction():
    meta = [rec(i, c) for i in range(20) for c in (0, 1)]
    split = make_split(meta, "generic", seed=4, query_fraction=0.5)
    assert len(split.query_indices) == 10
    assert len(split.gallery_indices) == 20


def test_split_spec_rejects_overlap():
    with pytest.raises(ValueError):
        SplitSpec(protocol="generic", seed=0, query_indices=(1, 2), gallery_indices=(2, 3))


def test_unknown_protocol():
    with pytest.raises(ValueError):
        make_split(viper_meta(), "mars", seed=0)


def test_single_shot_prid_uses_lowest_sequence():
    meta = prid_meta() + [rec(0, 0, sequence=5), rec(0, 1, sequence=7)]
    split = make_split(meta, "prid", seed=0)
    for i in split.query_indices + split.gallery_indices:
        assert meta[i].sequence == 0


# --- valid-query filtering ----------------------------------------------------


def test_filter_keeps_matched_queries():
    meta = [rec(0, 0), rec(1, 0), rec(0, 1), rec(1, 1)]
    split = SplitSpec("generic", 0, (0, 1), (2, 3))
    assert filter_valid_queries(split, meta) == split


def test_filter_drops_everything_when_nothing_matches():
    meta = [rec(0, 0), rec(1, 0), rec(5, 1), rec(6, 1)]
    split = SplitSpec("generic", 0, (0, 1), (2, 3))
    filtered = filter_valid_queries(split, meta)
    assert filtered.query_indices == ()
    assert filtered.gallery_indices == (2, 3)


def test_filter_reproduces_published_valid_query_counts():
    # condition-pure slice shaped like the first published subset row:
    # 51 queries, 343 gallery images, 27 valid queries
    meta = []
    for i in range(27):
        meta.append(rec(i, 0))
    for i in range(27, 51):
        meta.append(rec(i, 0))
    for i in range(343):
        ident = i if i < 27 else 1000 + i
        meta.append(rec(ident, 1, sequence=i))
    split = SplitSpec("generic", 0, tuple(range(51)), tuple(range(51, 51 + 343)))
    filtered = filter_valid_queries(split, meta)
    assert len(split.query_indices) == 51
    assert len(split.gallery_indices) == 343
    assert len(filtered.query_indices) == 27


def test_filter_is_idempotent():
    meta = [rec(0, 0), rec(1, 0), rec(0, 1), rec(9, 1)]
    split = SplitSpec("generic", 0, (0, 1), (2, 3))
    once = filter_valid_queries(split, meta)
    twice = filter_valid_queries(once, meta)
    assert once == twice


# --- CMC ----------------------------------------------------------------------


def test_cmc_definition_on_known_ranks():
    # query 0 ranks its match first; query 1 ranks its match third
    dist = DistanceMatrix(np.array([[0.1, 0.5, 0.9], [0.2, 0.3, 0.8]]))
    q_meta = [rec(0, 0), rec(2, 0)]
    g_meta = [rec(0, 1), rec(1, 1), rec(2, 1)]
    result = cmc(dist, q_meta, g_meta, ks=(1, 2, 3))
    assert result.accuracy(1) == 0.5
    assert result.accuracy(3) == 1.0
    assert result.fraction(1) == pytest.approx(0.5)
    assert result.percent(1) == 50.0


def test_cmc_all_rank_one():
    dist = DistanceMatrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
    q_meta = [rec(0, 0), rec(1, 0)]
    g_meta = [rec(0, 1), rec(1, 1)]
    result = cmc(dist, q_meta, g_meta, ks=(1,))
    assert result.accuracy(1) == 1.0


def test_cmc_monotone_and_saturates():
    rng = np.random.default_rng(0)
    g_meta = [rec(i % 7, 1, sequence=i) for i in range(30)]
    q_meta = [rec(i, 0) for i in range(7)]
    dist = DistanceMatrix(rng.random((7, 30)))
    ks = tuple(range(1, 31))
    result = cmc(dist, q_meta, g_meta, ks=ks)
    accs = [result.accuracy(k) for k in ks]
    assert all(b >= a for a, b in zip(accs, accs[1:]))
    assert accs[-1] == 1.0


def test_cmc_error_names_unmatched_query():
    dist = DistanceMatrix(np.array([[0.1, 0.2]]))
    with pytest.raises(ValueError, match="query 0"):
        cmc(dist, [rec(5, 0)], [rec(0, 1), rec(1, 1)], ks=(1,))


def test_cmc_same_camera_exclusion():
    # the nearest entry is a same-id same-camera capture and must be skipped
    dist = DistanceMatrix(np.array([[0.1, 0.2, 0.3]]))
    q_meta = [rec(0, 0)]
    g_meta = [rec(0, 0), rec(1, 1), rec(0, 1)]
    plain = cmc(dist, q_meta, g_meta, ks=(1,))
    excluded = cmc(dist, q_meta, g_meta, ks=(1, 2), exclusion=EXCLUDE_SAME_ID_SAME_CAMERA)
    assert plain.accuracy(1) == 1.0
    assert excluded.accuracy(1) == 0.0
    assert excluded.accuracy(2) == 1.0


def test_cmc_invariant_under_increasing_transform():
    rng = np.random.default_rng(1)
    g_meta = [rec(i % 5, 1, sequence=i) for i in range(20)]
    q_meta = [rec(i, 0) for i in range(5)]
    raw = rng.random((5, 20))
    a = cmc(DistanceMatrix(raw), q_meta, g_meta, ks=(1, 3, 5))
    b = cmc(DistanceMatrix(np.exp(raw)), q_meta, g_meta, ks=(1, 3, 5))
    c = cmc(DistanceMatrix(np.log1p(raw)), q_meta, g_meta, ks=(1, 3, 5))
    assert a.as_dict() == b.as_dict() == c.as_dict()


def test_cmc_matches_bruteforce():
    rng = np.random.default_rng(2)
    for _ in range(20):
        g_meta = [rec(int(rng.integers(0, 10)), int(rng.integers(0, 2)), sequence=i) for i in range(50)]
        present = sorted({m.identity for m in g_meta})
        q_meta = [rec(i, 0) for i in present[:10]]
        dist = rng.random((len(q_meta), 50))
        ks = (1, 2, 5, 10, 25, 50)
        ours = cmc(DistanceMatrix(dist), q_meta, g_meta, ks=ks)
        expected = cmc_bruteforce(dist, q_meta, g_meta, ks)
        for k in ks:
            assert ours.accuracy(k) == expected[k]


def test_single_condition_eval_matches_degenerate_model_bank():
    rng = np.random.default_rng(3)
    d = 6
    queries = SampleSet([Sample(identity=i, camera=0, features=rng.standard_normal(d)) for i in range(8)])
    gallery = SampleSet(
        [Sample(identity=i % 8, camera=1, features=rng.standard_normal(d)) for i in range(24)]
    )
    encoder = identity_encoder(d, 1)
    matrix = identity_matrix(d, (1, 1))
    direct = single_illumination_eval(encoder, matrix, queries, gallery, ks=(1, 5))
    switch = CentroidClassifier(labels=(1,), centroids=np.zeros((1, d)))
    model = assemble(switch, (encoder,), MetricBank({(1, 1): matrix}, conditions=1))
    dm = distance_matrix(model, queries, gallery)
    via_bank = cmc(dm, queries.samples, gallery.samples, ks=(1, 5))
    assert direct.as_dict() == via_bank.as_dict()


def test_meta_from_samples_sequences():
    samples = [
        Sample(identity=1, camera=0, features=[0.0]),
        Sample(identity=1, camera=0, features=[1.0]),
        Sample(identity=1, camera=1, features=[2.0]),
    ]
    meta = meta_from_samples(SampleSet(samples))
    assert [(m.identity, m.camera, m.sequence) for m in meta] == [(1, 0, 0), (1, 0, 1), (1, 1, 0)]


def test_split_serialization_round_trip(tmp_path):
    split = make_split(viper_meta(), "viper", seed=3)
    path = tmp_path / "split.json"
    write_split(path, split)
    assert read_split(path) == split
