import numpy as np
import pytest

from reidbank.core import Sample, SampleSet
from reidbank.encoders import identity_encoder
from reidbank.illum import CentroidClassifier
from reidbank.metric import MahalanobisMatrix, MetricBank, identity_matrix
from reidbank.smb import assemble, distance, distance_matrix, rank_row, route


def two_condition_bank(d=2):
    """Switch splits on the first coordinate sign; matrices are scaled
    identities so the selected matrix is readable from the distance."""
    switch = CentroidClassifier(labels=(1, 2), centroids=np.array([[-5.0] + [0.0] * (d - 1), [5.0] + [0.0] * (d - 1)]))
    encoders = (identity_encoder(d, 1), identity_encoder(d, 2))
    bank = MetricBank(
        {
            (1, 1): MahalanobisMatrix(np.eye(d), (1, 1)),
            (2, 2): MahalanobisMatrix(2.0 * np.eye(d), (2, 2)),
            (1, 2): MahalanobisMatrix(3.0 * np.eye(d), (1, 2)),
        },
        conditions=2,
    )
    return assemble(switch, encoders, bank)


def sample(vec, identity=0, camera=0):
    return Sample(identity=identity, camera=camera, features=vec)


def test_assemble_two_conditions():
    model = two_condition_bank()
    assert model.conditions == 2
    assert len(model.bank) == 3


def test_assemble_rejects_count_mismatch():
    switch = CentroidClassifier(labels=(1, 2), centroids=np.zeros((2, 2)) + [[-1.0, 0.0], [1.0, 0.0]])
    encoders = (identity_encoder(2, 1), identity_encoder(2, 2))
    small_bank = MetricBank({(1, 1): identity_matrix(2, (1, 1))}, conditions=1)
    with pytest.raises(ValueError, match="encoders"):
        assemble(switch, encoders, small_bank)


def test_assemble_rejects_dimension_mismatch():
    switch = CentroidClassifier(labels=(1,), centroids=np.zeros((1, 3)))
    with pytest.raises(ValueError, match="dimension|expects"):
        assemble(switch, (identity_encoder(2, 1),), MetricBank({(1, 1): identity_matrix(2, (1, 1))}, conditions=1))


def test_assemble_degenerate_single_condition():
    switch = CentroidClassifier(labels=(1,), centroids=np.zeros((1, 2)))
    model = assemble(switch, (identity_encoder(2, 1),), MetricBank({(1, 1): identity_matrix(2, (1, 1))}, conditions=1))
    assert model.conditions == 1


def test_route_follows_switch():
    model = two_condition_bank()
    cond, vec = route(model, sample([-4.0, 1.0]))
    assert cond == 1
    np.testing.assert_array_equal(vec, [-4.0, 1.0])
    cond2, _ = route(model, sample([6.0, 0.0]))
    assert cond2 == 2


def test_route_is_deterministic():
    model = two_condition_bank()
    s = sample([2.0, 3.0])
    assert route(model, s)[0] == route(model, s)[0]
    np.testing.assert_array_equal(route(model, s)[1], route(model, s)[1])


def test_distance_selects_matrix_by_condition_pair():
    model = two_condition_bank()
    same_1 = distance(model, sample([-5.0, 0.0]), sample([-5.0, 1.0]))
    assert same_1 == pytest.approx(1.0)
    same_2 = distance(model, sample([5.0, 0.0]), sample([5.0, 1.0]))
    assert same_2 == pytest.approx(2.0)
    cross = distance(model, sample([-5.0, 0.0]), sample([5.0, 0.0]))
    assert cross == pytest.approx(3.0 * 100.0)


def test_distance_is_symmetric_under_swap():
    model = two_condition_bank()
    rng = np.random.default_rng(0)
    for _ in range(20):
        a, b = sample(rng.standard_normal(2) * 6), sample(rng.standard_normal(2) * 6)
        assert distance(model, a, b) == distance(model, b, a)


def test_single_condition_identity_reduces_to_euclidean():
    switch = CentroidClassifier(labels=(1,), centroids=np.zeros((1, 4)))
    model = assemble(switch, (identity_encoder(4, 1),), MetricBank({(1, 1): identity_matrix(4, (1, 1))}, conditions=1))
    rng = np.random.default_rng(1)
    queries = SampleSet([sample(rng.standard_normal(4), identity=i) for i in range(6)])
    gallery = SampleSet([sample(rng.standard_normal(4), identity=i) for i in range(9)])
    dm = distance_matrix(model, queries, gallery)
    direct = np.array([[float(((q.features - g.features) ** 2).sum()) for g in gallery] for q in queries])
    np.testing.assert_allclose(dm.entries, direct, rtol=1e-12)
    for qi in range(len(queries)):
        np.testing.assert_array_equal(rank_row(dm.entries[qi]), np.argsort(direct[qi], kind="stable"))


def test_distance_matrix_single_entry_equals_distance():
    model = two_condition_bank()
    q = SampleSet([sample([-5.0, 2.0])])
    g = SampleSet([sample([4.0, 1.0])])
    dm = distance_matrix(model, q, g)
    assert dm.entries.shape == (1, 1)
    assert dm.entries[0, 0] == distance(model, q[0], g[0])


def test_distance_matrix_shape():
    model = two_condition_bank()
    rng = np.random.default_rng(2)
    q = SampleSet([sample(rng.standard_normal(2) * 6) for _ in range(3)])
    g = SampleSet([sample(rng.standard_normal(2) * 6) for _ in range(5)])
    assert distance_matrix(model, q, g).entries.shape == (3, 5)


def test_distance_matrix_parallel_matches_sequential_bitwise():
    model = two_condition_bank()
    rng = np.random.default_rng(3)
    q = SampleSet([sample(rng.standard_normal(2) * 6) for _ in range(16)])
    g = SampleSet([sample(rng.standard_normal(2) * 6) for _ in range(25)])
    seq = distance_matrix(model, q, g, workers=1)
    par = distance_matrix(model, q, g, workers=4)
    assert np.array_equal(seq.entries, par.entries)


def test_scaling_every_bank_matrix_preserves_rankings():
    rng = np.random.default_rng(4)
    switch = CentroidClassifier(labels=(1, 2), centroids=np.array([[-5.0, 0.0], [5.0, 0.0]]))
    encoders = (identity_encoder(2, 1), identity_encoder(2, 2))
    base = rng.standard_normal((2, 2))
    m11 = MahalanobisMatrix(np.eye(2) + 0.1 * (base + base.T), (1, 1))
    entries = {
        (1, 1): m11,
        (2, 2): MahalanobisMatrix(1.7 * np.eye(2), (2, 2)),
        (1, 2): MahalanobisMatrix(0.6 * np.eye(2), (1, 2)),
    }
    model = assemble(switch, encoders, MetricBank(entries, conditions=2))
    scaled = assemble(
        switch,
        encoders,
        MetricBank(
            {k: MahalanobisMatrix(2.0 * m.entries, k) for k, m in entries.items()},
            conditions=2,
        ),
    )
    q = SampleSet([sample(rng.standard_normal(2) * 6) for _ in range(8)])
    g = SampleSet([sample(rng.standard_normal(2) * 6) for _ in range(30)])
    dm1 = distance_matrix(model, q, g).entries
    dm2 = distance_matrix(scaled, q, g).entries
    np.testing.assert_array_equal(dm2, 2.0 * dm1)
    for qi in range(len(q)):
        np.testing.assert_array_equal(rank_row(dm1[qi]), rank_row(dm2[qi]))


def test_rank_row_orders_ascending_with_stable_ties():
    np.testing.assert_array_equal(rank_row(np.array([0.3, 0.1, 0.2])), [1, 2, 0])
    np.testing.assert_array_equal(rank_row(np.array([1.0, 1.0, 1.0, 1.0])), [0, 1, 2, 3])
    np.testing.assert_array_equal(rank_row(np.array([0.4, 0.0, 0.2]))[:1], [1])


def test_rank_row_rejects_nonfinite():
    with pytest.raises(ValueError):
        rank_row(np.array([0.1, np.nan]))
