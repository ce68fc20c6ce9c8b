import numpy as np
import pytest

from oracles import kissme_bruteforce, min_eigenvalue_independent
from reidbank.core import Sample, SampleSet
from reidbank.metric import (
    MahalanobisMatrix,
    MetricBank,
    PairingPolicy,
    PairSet,
    build_metric_bank,
    identity_matrix,
    kissme_learn,
    mahalanobis_sq,
    psd_project,
    read_matrix,
    write_matrix,
)


def test_mahalanobis_identity_reduces_to_euclidean():
    m = identity_matrix(2)
    assert mahalanobis_sq(m, np.array([3.0, 4.0]), np.array([0.0, 0.0])) == pytest.approx(25.0)


def test_mahalanobis_diagonal_weighting():
    m = MahalanobisMatrix(np.diag([2.0, 1.0]))
    assert mahalanobis_sq(m, np.array([1.0, 1.0]), np.array([0.0, 0.0])) == pytest.approx(3.0)


def test_mahalanobis_hand_evaluated_quadratic_form():
    m = MahalanobisMatrix(np.array([[2.0, 1.0], [1.0, 2.0]]))
    # (1,-1) M (1,-1)^T = 2 - 1 - 1 + 2 = 2
    assert mahalanobis_sq(m, np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(2.0)


def test_mahalanobis_dimension_mismatch():
    with pytest.raises(ValueError):
        mahalanobis_sq(identity_matrix(2), np.array([1.0, 2.0, 3.0]), np.array([0.0, 0.0, 0.0]))
    with pytest.raises(ValueError):
        mahalanobis_sq(identity_matrix(3), np.array([1.0, 2.0]), np.array([0.0, 0.0]))


def test_mahalanobis_symmetry_is_exact():
    rng = np.random.default_rng(1)
    base = rng.standard_normal((4, 4))
    m = MahalanobisMatrix(psd_project(base + base.T))
    for _ in range(20):
        x, y = rng.standard_normal(4), rng.standard_normal(4)
        assert mahalanobis_sq(m, x, y) == mahalanobis_sq(m, y, x)


def test_identity_matches_squared_euclidean_tightly():
    rng = np.random.default_rng(2)
    m = identity_matrix(16)
    for _ in range(50):
        x, y = rng.standard_normal(16), rng.standard_normal(16)
        expected = float(((x - y) ** 2).sum())
        assert mahalanobis_sq(m, x, y) == pytest.approx(expected, rel=1e-12)


def test_scaling_matrix_scales_distances_and_keeps_ranking():
    rng = np.random.default_rng(3)
    base = rng.standard_normal((5, 5))
    m = MahalanobisMatrix(psd_project(base + base.T) + np.eye(5))
    m2 = MahalanobisMatrix(2.0 * m.entries)
    m3 = MahalanobisMatrix(3.7 * m.entries)
    query = rng.standard_normal(5)
    gallery = rng.standard_normal((40, 5))
    d1 = np.array([mahalanobis_sq(m, query, g) for g in gallery])
    d2 = np.array([mahalanobis_sq(m2, query, g) for g in gallery])
    d3 = np.array([mahalanobis_sq(m3, query, g) for g in gallery])
    np.testing.assert_array_equal(d2, 2.0 * d1)
    np.testing.assert_allclose(d3, 3.7 * d1, rtol=1e-12)
    np.testing.assert_array_equal(np.argsort(d1, kind="stable"), np.argsort(d2, kind="stable"))
    np.testing.assert_array_equal(np.argsort(d1, kind="stable"), np.argsort(d3, kind="stable"))


def test_psd_project_identity_unchanged():
    np.testing.assert_array_equal(psd_project(np.eye(3)), np.eye(3))


def test_psd_project_clamps_negative_eigenvalues():
    out = psd_project(np.diag([2.0, -3.0]))
    np.testing.assert_allclose(out, np.diag([2.0, 0.0]), atol=1e-12)


def test_psd_project_output_is_psd_by_independent_eigensolve():
    rng = np.random.default_rng(4)
    for _ in range(100):
        base = rng.standard_normal((6, 6))
        out = psd_project(base + base.T)
        assert min_eigenvalue_independent(out) >= -1e-9


def test_psd_project_rejects_asymmetric_input():
    bad = np.array([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(ValueError):
        psd_project(bad)


def test_matrix_type_rejects_asymmetric_entries():
    with pytest.raises(ValueError):
        MahalanobisMatrix(np.array([[1.0, 2.0], [0.0, 1.0]]))


def one_dim_pairs(similar_diff, dissimilar_diff):
    similar = [(np.array([v]), np.array([0.0])) for v in similar_diff]
    dissimilar = [(np.array([v]), np.array([0.0])) for v in dissimilar_diff]
    return PairSet.from_pairs(similar, dissimilar)


def test_kissme_one_dim_closed_form():
    # Sigma_S = 1, Sigma_D = 4 -> 1/1 - 1/4 = 0.75
    pairs = one_dim_pairs([1.0, -1.0], [2.0, -2.0])
    learned = kissme_learn(pairs, reg=0.0)
    assert learned.entries[0, 0] == pytest.approx(0.75, abs=1e-12)


def test_kissme_one_dim_projects_negative_to_zero():
    # Sigma_S = 4, Sigma_D = 1 -> -0.75 -> clipped to 0
    pairs = one_dim_pairs([2.0, -2.0], [1.0, -1.0])
    learned = kissme_learn(pairs, reg=0.0)
    assert learned.entries[0, 0] == pytest.approx(0.0, abs=1e-12)


def random_pairs(rng, d, n_sim=40, n_dis=40):
    similar = [(rng.standard_normal(d), rng.standard_normal(d)) for _ in range(n_sim)]
    dissimilar = [(3 * rng.standard_normal(d), 3 * rng.standard_normal(d)) for _ in range(n_dis)]
    return similar, dissimilar


def test_kissme_matches_bruteforce_oracle():
    rng = np.random.default_rng(5)
    for _ in range(25):
        similar, dissimilar = random_pairs(rng, 3)
        lam = float(rng.uniform(0.05, 0.5))
        learned = kissme_learn(PairSet.from_pairs(similar, dissimilar), reg=lam)
        expected = kissme_bruteforce(similar, dissimilar, lam)
        assert np.abs(learned.entries - expected).max() < 1e-9


def test_kissme_invariant_to_pair_order():
    rng = np.random.default_rng(6)
    similar, dissimilar = random_pairs(rng, 4)
    a = kissme_learn(PairSet.from_pairs(similar, dissimilar), reg=0.1)
    b = kissme_learn(PairSet.from_pairs(similar[::-1], dissimilar[::-1]), reg=0.1)
    assert np.abs(a.entries - b.entries).max() < 1e-10


def test_kissme_rejects_empty_pairs_and_negative_reg():
    with pytest.raises(ValueError):
        PairSet.from_pairs([], [(np.zeros(2), np.ones(2))])
    pairs = one_dim_pairs([1.0], [2.0])
    with pytest.raises(ValueError):
        kissme_learn(pairs, reg=-1.0)


def test_kissme_singular_covariance_names_offender():
    # one similar pair in 2-D leaves a rank-1 similar covariance
    similar = [(np.array([1.0, 0.0]), np.array([0.0, 0.0]))]
    dissimilar = [
        (np.array([2.0, 1.0]), np.array([0.0, 0.0])),
        (np.array([1.0, -2.0]), np.array([0.0, 0.0])),
    ]
    with pytest.raises(np.linalg.LinAlgError, match="similar"):
        kissme_learn(PairSet.from_pairs(similar, dissimilar), reg=0.0)


def condition_sets(n_conditions, ids=8, per_id=4, d=6, seed=0):
    rng = np.random.default_rng(seed)
    protos = rng.standard_normal((ids, d))
    sets = []
    for c in range(n_conditions):
        samples = []
        for i in range(ids):
            for _ in range(per_id):
                samples.append(
                    Sample(
                        identity=i,
                        camera=c,
                        features=protos[i] + 0.1 * rng.standard_normal(d) + 2.0 * c,
                    )
                )
        sets.append(SampleSet(samples))
    return sets


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_bank_size_formula(n):
    bank = build_metric_bank(condition_sets(n), PairingPolicy(seed=1))
    assert len(bank) == n * (n - 1) // 2 + n
    for a in range(1, n + 1):
        for b in range(a, n + 1):
            matrix = bank.matrix_for(a, b)
            assert matrix.condition_pair == (a, b)
            assert matrix.dimension == 6


def test_bank_lookup_is_unordered():
    bank = build_metric_bank(condition_sets(2), PairingPolicy(seed=2))
    assert bank.matrix_for(2, 1) is bank.matrix_for(1, 2)


def test_bank_requires_shared_identities_for_cross_pairs():
    rng = np.random.default_rng(3)
    set_a = SampleSet([Sample(identity=i, camera=0, features=rng.standard_normal(4)) for i in range(4) for _ in range(3)])
    set_b = SampleSet([Sample(identity=i + 10, camera=1, features=rng.standard_normal(4)) for i in range(4) for _ in range(3)])
    with pytest.raises(ValueError, match="share no identities"):
        build_metric_bank([set_a, set_b], PairingPolicy(seed=3))


def test_bank_validates_completeness():
    with pytest.raises(ValueError):
        MetricBank({(1, 1): identity_matrix(3, (1, 1))}, conditions=2)


def test_learned_metric_beats_euclidean_on_structured_data():
    """Rank-1 with the learned within-condition matrix is at least Euclidean's
    in the majority of seeds."""
    from reidbank.encoders import train_condition_encoder, encode_set
    from reidbank.evalproto import single_illumination_eval
    from reidbank.metric import identity_matrix as eye_m
    from reidbank.encoders import identity_encoder
    from reidbank.ulisynth import GeneratorConfig, generate_source_domain, simulate_target_domain

    wins = 0
    seeds = range(5)
    for seed in seeds:
        src = generate_source_domain(
            GeneratorConfig(
                identities=40,
                backgrounds=4,
                zrotations=4,
                illuminations=(2,),
                dimension=24,
                illum_gain_dims=6,
                seed=seed,
            )
        )
        encoder = train_condition_encoder(src, "whitening", condition=1)
        bank = build_metric_bank([encode_set(encoder, src)], PairingPolicy(seed=seed))
        target = simulate_target_domain(
            GeneratorConfig(
                identities=60,
                backgrounds=2,
                zrotations=4,
                illuminations=(2,),
                dimension=24,
                illum_gain_dims=6,
                seed=seed + 1000,
            ),
            (1.0,),
            seed=seed + 1000,
        )
        queries = SampleSet([s for s in target if s.camera == 0], dimension=24)
        gallery = SampleSet([s for s in target if s.camera == 1], dimension=24)
        learned = single_illumination_eval(encoder, bank.matrix_for(1, 1), queries, gallery, ks=(1,))
        euclid = single_illumination_eval(identity_encoder(24), eye_m(24), queries, gallery, ks=(1,))
        if learned.accuracy(1) >= euclid.accuracy(1):
            wins += 1
    assert wins >= 3


def test_matrix_serialization_round_trip(tmp_path):
    rng = np.random.default_rng(8)
    base = rng.standard_normal((4, 4))
    matrix = MahalanobisMatrix(psd_project(base + base.T), (1, 2))
    path = tmp_path / "matrix.csv"
    write_matrix(path, matrix)
    assert path.read_text().splitlines()[0] == "1,2,4"
    back = read_matrix(path)
    np.testing.assert_array_equal(back.entries, matrix.entries)
    assert back.condition_pair == (1, 2)
