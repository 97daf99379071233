import numpy as np
import pytest

from fedprio.criteria import (
    ClientObservation,
    measure_cohort,
    normalize_cohort,
    raw_CB,
    raw_DS,
    raw_IS,
    raw_LD,
    raw_MW,
)
from fedprio.data import ClientShard, Sample
from fedprio.errors import ConfigurationError
from fedprio.learner import Parameters


def obs(train_size=10, label_counts=None, sharp_count=10, received=None, trained=None):
    received = Parameters(np.zeros(4)) if received is None else received
    trained = received.copy() if trained is None else trained
    return ClientObservation(
        client_id="c",
        train_size=train_size,
        label_counts=label_counts if label_counts is not None else {0: train_size},
        sharp_count=sharp_count,
        received_global=received,
        trained_local=trained,
    )


def test_raw_ds_is_train_size():
    assert raw_DS(obs(train_size=300)) == 300.0


def test_ds_normalizes_proportionally():
    np.testing.assert_allclose(normalize_cohort([300.0, 100.0]), [0.75, 0.25])


def test_raw_ld_counts_distinct_labels():
    assert raw_LD(obs(label_counts={3: 2, 7: 1})) == 2.0
    assert raw_LD(obs(label_counts={k: 1 for k in range(10)})) == 10.0


def test_noniid_client_sees_at_most_two_labels():
    # two single-label shards per client keeps label diversity at <= 2
    assert raw_LD(obs(label_counts={1: 10, 8: 10})) <= 2.0


def test_raw_mw_identity_when_no_divergence():
    assert raw_MW(obs()) == 1.0


def test_raw_mw_known_value():
    received = Parameters(np.zeros(4))
    trained = Parameters(np.array([3.0, 0.0, 0.0, 0.0]))  # distance 3 -> 1/sqrt(4)
    assert raw_MW(obs(received=received, trained=trained)) == pytest.approx(0.5, abs=1e-15)


def test_raw_mw_strictly_decreasing_in_divergence():
    rng = np.random.default_rng(2)
    received = Parameters(rng.normal(size=16))
    values = []
    for scale in np.linspace(0.0, 5.0, 100):
        direction = rng.normal(size=16)
        direction /= np.linalg.norm(direction)
        trained = Parameters(received.values + direction * scale)
        values.append((scale, raw_MW(obs(received=received, trained=trained))))
    values.sort(key=lambda p: p[0])
    phis = [phi for _, phi in values]
    assert all(a > b for a, b in zip(phis, phis[1:]))
    assert all(0.0 < phi <= 1.0 for phi in phis)


def test_raw_mw_length_mismatch():
    with pytest.raises(RuntimeError):
        raw_MW(obs(received=Parameters(np.zeros(4)), trained=Parameters(np.zeros(5))))


@pytest.mark.parametrize(
    "pos,neg,expected",
    [(5, 5, 1.0), (8, 2, 0.25), (10, 0, 0.0)],
)
def test_raw_cb_values(pos, neg, expected):
    counts = {}
    if pos:
        counts[1] = pos
    if neg:
        counts[0] = neg
    assert raw_CB(obs(label_counts=counts)) == pytest.approx(expected, abs=1e-15)


def test_raw_cb_rejects_multiclass():
    with pytest.raises(ConfigurationError):
        raw_CB(obs(label_counts={0: 3, 1: 3, 2: 3}))


def test_raw_is_values():
    assert raw_IS(obs(train_size=4, sharp_count=4)) == 1.0
    assert raw_IS(obs(train_size=4, sharp_count=3)) == 0.75


def test_is_of_concatenation_is_weighted_mean():
    a = obs(train_size=10, sharp_count=6)
    b = obs(train_size=30, sharp_count=30)
    combined = obs(train_size=40, sharp_count=36)
    expected = (raw_IS(a) * 10 + raw_IS(b) * 30) / 40
    assert raw_IS(combined) == pytest.approx(expected, abs=1e-15)


# ---------------------------------------------------------------------------
# normalize_cohort
# ---------------------------------------------------------------------------


def test_normalize_shares():
    np.testing.assert_allclose(normalize_cohort([300, 100]), [0.75, 0.25])


def test_normalize_zero_sum_falls_back_to_uniform():
    np.testing.assert_allclose(normalize_cohort([0.0, 0.0, 0.0]), [1 / 3, 1 / 3, 1 / 3])


def test_normalize_scale_invariant():
    rng = np.random.default_rng(0)
    for _ in range(50):
        raws = rng.uniform(0.0, 10.0, size=rng.integers(2, 12))
        k = rng.uniform(0.1, 100.0)
        np.testing.assert_allclose(normalize_cohort(raws), normalize_cohort(raws * k), atol=1e-12)


def test_normalize_output_in_unit_interval_and_sums_to_one():
    rng = np.random.default_rng(1)
    for _ in range(100):
        raws = rng.uniform(0.0, 5.0, size=rng.integers(1, 20))
        shares = normalize_cohort(raws)
        assert ((shares >= 0.0) & (shares <= 1.0)).all()
        assert abs(shares.sum() - 1.0) < 1e-9


def test_normalize_rejects_negative_and_empty():
    with pytest.raises(ValueError):
        normalize_cohort([1.0, -0.5])
    with pytest.raises(ValueError):
        normalize_cohort([])


# ---------------------------------------------------------------------------
# measure_cohort
# ---------------------------------------------------------------------------


def shard_from(labels, client_id="c0", sharp=None):
    samples = [
        Sample(features=np.zeros(2), label=lab, sharp=True if sharp is None else sharp[i])
        for i, lab in enumerate(labels)
    ]
    return ClientShard(client_id, samples, [])


def test_measure_cohort_matrix():
    received = Parameters(np.zeros(2))
    observations = [
        ClientObservation.from_shard(shard_from([0] * 300, "a"), received, received.copy()),
        ClientObservation.from_shard(shard_from([0, 1] * 50, "b"), received, received.copy()),
    ]
    cohort = measure_cohort(observations, ("DS", "LD"))
    assert cohort.client_ids == ("a", "b")
    np.testing.assert_allclose(cohort.raw[:, 0], [300, 100])
    np.testing.assert_allclose(cohort.raw[:, 1], [1, 2])
    np.testing.assert_allclose(cohort.normalized[:, 0], [0.75, 0.25])
    np.testing.assert_allclose(cohort.normalized[:, 1], [1 / 3, 2 / 3])
    for j in range(2):
        assert abs(cohort.normalized[:, j].sum() - 1.0) < 1e-9


def test_measure_cohort_unknown_criterion():
    with pytest.raises(ConfigurationError):
        measure_cohort([], ("XX",))


def test_measure_cohort_empty():
    with pytest.raises(ValueError):
        measure_cohort([], ("DS",))


def test_observation_from_shard_counts():
    shard = shard_from([2, 2, 5], sharp=[True, False, True])
    observation = ClientObservation.from_shard(shard, Parameters(np.zeros(2)), Parameters(np.zeros(2)))
    assert observation.train_size == 3
    assert observation.label_counts == {2: 2, 5: 1}
    assert observation.sharp_count == 2
