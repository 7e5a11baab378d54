import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from uirloss.data import (
    UNLABELED,
    BatchComposer,
    DatasetFormatError,
    SampleSet,
    alternate_view,
    compose_batch,
    format_dataset,
    gen_universe,
    labeled_count,
    parse_dataset,
    plant_known,
    read_dataset,
    sample_heldout,
    sample_labeled,
    sample_unlabeled,
    write_dataset,
    zipf_counts,
)
from uirloss.numerics import cosine_distance


@pytest.fixture
def universe():
    return gen_universe(5, 3, 16, seed=7)


def test_universe_deterministic_and_unit(universe):
    again = gen_universe(5, 3, 16, seed=7)
    np.testing.assert_array_equal(universe.known_centers, again.known_centers)
    np.testing.assert_array_equal(universe.unknown_centers, again.unknown_centers)
    allc = np.vstack([universe.known_centers, universe.unknown_centers])
    np.testing.assert_allclose(np.linalg.norm(allc, axis=1), 1.0, atol=1e-12)
    gram = allc @ allc.T
    np.fill_diagonal(gram, -2)
    assert gram.max() < 1 - 1e-9


def test_universe_errors():
    with pytest.raises(ValueError):
        gen_universe(0, 3, 4, 0)
    with pytest.raises(ValueError):
        gen_universe(2, 3, 1, 0)


def test_universe_center_lookup(universe):
    np.testing.assert_array_equal(universe.center(6), universe.unknown_centers[1])
    np.testing.assert_array_equal(universe.center(2), universe.known_centers[2])


def test_sample_labeled_noise_free(universe):
    s = sample_labeled(universe, 4, 0.0, seed=1)
    assert len(s) == 20
    np.testing.assert_array_equal(s.inputs, universe.known_centers[s.labels])
    assert s.provenance == "known"


def test_sample_labeled_mean_converges():
    uni = gen_universe(4, 1, 16, seed=3)
    s = sample_labeled(uni, 500, 0.1, seed=3)
    for k in range(4):
        mean = s.inputs[s.labels == k].mean(axis=0)
        assert cosine_distance(mean, uni.known_centers[k]) < 0.05


def test_sample_unlabeled_counts_and_disjointness(universe):
    s = sample_unlabeled(universe, 37, seed=2)
    assert len(s) == 37
    assert np.all(s.labels == UNLABELED)
    assert np.all(s.identities >= universe.n_known)
    assert s.is_unlabeled


def test_zipf_high_exponent_concentrates():
    counts = zipf_counts(100, 1000, 5.0, np.random.default_rng(0))
    assert counts.sum() == 1000
    assert counts.max() >= 950


def test_zipf_default_exponent_produces_singletons():
    uni = gen_universe(2, 100, 8, seed=0)
    found = False
    for seed in range(3):
        s = sample_unlabeled(uni, 1000, 1.5, 0.1, seed)
        counts = np.bincount(s.identities - uni.n_known, minlength=100)
        found |= bool(np.any(counts == 1))
    assert found


def test_unlabeled_identity_subset(universe):
    s = sample_unlabeled(universe, 50, seed=0, identities=[2])
    assert np.all(s.identities == universe.n_known + 2)


def test_heldout_labels_are_global_ids(universe):
    h = sample_heldout(universe, [0, 2], 3, 0.0, seed=0)
    assert sorted(set(h.labels.tolist())) == [5, 7]
    np.testing.assert_array_equal(h.inputs[0], universe.unknown_centers[0])


def test_plant_known_appends_known_identities(universe):
    s = sample_unlabeled(universe, 10, seed=0)
    p = plant_known(s, universe, 4, 0.02, seed=0)
    assert len(p) == 14
    assert p.provenance == "mixed"
    assert np.all(p.labels == UNLABELED)
    assert np.all(p.identities[10:] < universe.n_known)


def test_alternate_view_flips_first_coordinate():
    x = np.array([[1.0, 2.0], [-3.0, 4.0]])
    np.testing.assert_array_equal(alternate_view(x), [[-1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(alternate_view(alternate_view(x)), x)
    assert x[0, 0] == 1.0


def test_labeled_count_rounding():
    assert labeled_count(64, 0.75) == 48
    assert labeled_count(4, 0.75) == 3
    assert labeled_count(2, 0.75) == 2  # 1.5 rounds up
    assert labeled_count(6, 0.25) == 2  # 1.5 rounds up


def _pools(n_lab=20, n_unl=7):
    lab = SampleSet(np.arange(n_lab, dtype=float)[:, None], np.arange(n_lab) % 3)
    unl = SampleSet(100 + np.arange(n_unl, dtype=float)[:, None], np.full(n_unl, UNLABELED),
                    "unknown")
    return lab, unl


def test_compose_batch_split():
    lab, unl = _pools(100, 50)
    b = compose_batch(lab, unl, 64, 0.75, np.random.default_rng(0))
    assert b.labeled_inputs.shape[0] == 48
    assert b.unlabeled_inputs.shape[0] == 16
    b = compose_batch(lab, unl, 4, 0.75, np.random.default_rng(0))
    assert (b.labeled_inputs.shape[0], b.unlabeled_inputs.shape[0]) == (3, 1)


def test_compose_batch_rejects_bad_fraction():
    lab, unl = _pools()
    with pytest.raises(ValueError):
        compose_batch(lab, unl, 8, 1.0, np.random.default_rng(0))
    with pytest.raises(ValueError):
        compose_batch(lab, unl, 1, 0.5, np.random.default_rng(0))


def test_epoch_covers_labeled_once_and_signals_boundary():
    lab, unl = _pools(20, 7)
    comp = BatchComposer(lab, unl, 8, 0.75, np.random.default_rng(1))
    seen, unl_seen = [], []
    while (b := comp.next_batch()) is not None:
        seen.extend(b.labeled_inputs[:, 0].tolist())
        unl_seen.extend(b.unlabeled_inputs[:, 0].tolist())
    assert sorted(seen) == list(range(20))
    # 20 labeled rows at 6 per batch: 4 batches, 2 unlabeled each
    assert len(unl_seen) == 8
    # unlabeled pool of 7 is fully used before any repeat
    assert sorted(unl_seen[:7]) == list(range(100, 107))
    # next epoch starts fresh
    second = list(comp.epoch())
    assert sorted(np.concatenate([b.labeled_inputs[:, 0] for b in second]).tolist()) == list(range(20))


@given(st.integers(2, 40), st.integers(1, 60), st.integers(1, 30), st.integers(0, 2**32 - 1))
def test_batch_composition_conserves_labeled_samples(batch_size, n_lab, n_unl, seed):
    lab, unl = _pools(n_lab, n_unl)
    comp = BatchComposer(lab, unl, batch_size, 0.75, np.random.default_rng(seed))
    seen = np.concatenate([b.labeled_inputs[:, 0] for b in comp.epoch()])
    assert sorted(seen.tolist()) == list(range(n_lab))


def test_composer_deterministic():
    lab, unl = _pools(30, 11)
    a = [b.unlabeled_inputs.tobytes() for b in BatchComposer(lab, unl, 8, 0.75,
                                                           np.random.default_rng(5)).epoch()]
    b = [b.unlabeled_inputs.tobytes() for b in BatchComposer(lab, unl, 8, 0.75,
                                                           np.random.default_rng(5)).epoch()]
    assert a == b


def test_dataset_round_trip(tmp_path, universe):
    s = sample_labeled(universe, 3, 0.1, seed=4)
    path = tmp_path / "d.txt"
    write_dataset(s, path)
    back = read_dataset(path)
    assert back.inputs.tobytes() == s.inputs.tobytes()
    np.testing.assert_array_equal(back.labels, s.labels)
    assert path.read_text().splitlines()[0] == "uirset v1 16 15"
    assert format_dataset(back) == path.read_text()


def test_dataset_provenance_from_labels(universe):
    u = parse_dataset(format_dataset(sample_unlabeled(universe, 3, seed=0)))
    assert u.provenance == "unknown"
    p = plant_known(sample_unlabeled(universe, 3, seed=0), universe, 1, 0.0, 0)
    assert parse_dataset(format_dataset(p)).provenance == "unknown"


@pytest.mark.parametrize("text", [
    "",
    "wrong v1 2 1\n0 1.0 2.0\n",
    "uirset v2 2 1\n0 1.0 2.0\n",
    "uirset v1 2 2\n0 1.0 2.0\n",
    "uirset v1 2 1\n0 1.0\n",
    "uirset v1 2 1\nx 1.0 2.0\n",
    "uirset v1 2 1\n0 1.0 nan\n",
    "uirset v1 two 1\n0 1.0 2.0\n",
])
def test_dataset_format_errors(text):
    with pytest.raises(DatasetFormatError):
        parse_dataset(text)
