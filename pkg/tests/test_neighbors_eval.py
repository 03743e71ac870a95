"""kNN classification, NMI, stratified splits and the gap curve."""
import numpy as np
import pytest
from sklearn.metrics import normalized_mutual_info_score
from sklearn.neighbors import KNeighborsClassifier

from surfml.errors import InputError
from surfml.neighbors_eval import (
    EvalReport,
    generalization_gap_curve,
    knn_classify,
    nmi,
    pair_hinge_loss,
    split_eval,
    stratified_splits,
    zero_one_error,
)


def _dist(test, train):
    return np.sqrt(np.sum((test[:, None, :] - train[None, :, :]) ** 2, axis=-1))


def test_knn_matches_sklearn_k1():
    rng = np.random.default_rng(0)
    for trial in range(20):
        train = rng.normal(0, 1, (30, 2))
        test = rng.normal(0, 1, (10, 2))
        labels = rng.integers(0, 3, 30).tolist()
        ref = KNeighborsClassifier(n_neighbors=1).fit(train, labels).predict(test)
        got = knn_classify(_dist(test, train), labels, 1)
        assert got == ref.tolist()


@pytest.mark.parametrize("k", [3, 5, 7])
def test_knn_matches_sklearn_two_class_odd_k(k):
    # With two classes and odd k there are no vote ties, so any sane
    # implementation must agree with the reference exactly.
    rng = np.random.default_rng(1)
    for trial in range(10):
        train = rng.normal(0, 1, (40, 2))
        test = rng.normal(0, 1, (15, 2))
        labels = rng.integers(0, 2, 40).tolist()
        ref = KNeighborsClassifier(n_neighbors=k).fit(train, labels).predict(test)
        got = knn_classify(_dist(test, train), labels, k)
        assert got == ref.tolist()


def test_knn_distance_tie_breaks_toward_lower_index():
    train = np.array([[1.0, 0.0], [-1.0, 0.0]])
    got = knn_classify(_dist(np.array([[0.0, 0.0]]), train), ["a", "b"], 1)
    assert got == ["a"]


def test_knn_vote_tie_breaks_toward_nearest():
    train = np.array([[1.0, 0.0], [2.0, 0.0], [-1.5, 0.0], [-2.5, 0.0]])
    labels = ["a", "a", "b", "b"]
    got = knn_classify(_dist(np.array([[0.0, 0.0]]), train), labels, 4)
    assert got == ["a"]


def test_knn_input_validation():
    with pytest.raises(InputError):
        knn_classify(np.zeros((1, 3)), ["a", "b"], 1)
    with pytest.raises(InputError):
        knn_classify(np.zeros((1, 2)), ["a", "b"], 3)
    with pytest.raises(InputError):
        knn_classify(np.zeros((1, 2)), ["a", "b"], 0)
    with pytest.raises(InputError):
        knn_classify(np.zeros((1, 0)), [], 1)


def test_zero_one_error_and_accuracy_sum_to_one():
    rng = np.random.default_rng(2)
    for _ in range(50):
        truth = rng.integers(0, 3, 20).tolist()
        pred = rng.integers(0, 3, 20).tolist()
        err = zero_one_error(pred, truth)
        acc = sum(p == t for p, t in zip(pred, truth)) / 20
        assert err + acc == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(InputError):
        zero_one_error([0], [0, 1])
    with pytest.raises(InputError):
        zero_one_error([], [])


def test_nmi_matches_sklearn_arithmetic_mean():
    rng = np.random.default_rng(3)
    for _ in range(50):
        a = rng.integers(0, 4, 60).tolist()
        b = rng.integers(0, 3, 60).tolist()
        ref = normalized_mutual_info_score(a, b, average_method="arithmetic")
        assert nmi(a, b) == pytest.approx(ref, abs=1e-9)


def test_nmi_perfect_and_relabeled():
    a = [0, 0, 1, 1, 2, 2]
    assert nmi(a, a) == pytest.approx(1.0, abs=1e-12)
    assert nmi(a, ["x", "x", "y", "y", "z", "z"]) == pytest.approx(1.0, abs=1e-12)


def test_nmi_degenerate_conventions():
    # Both single-label: identical partitions, defined as 1.
    assert nmi([0, 0, 0], [7, 7, 7]) == 1.0
    # One side single-label, the other not: no shared information, 0.
    assert nmi([0, 0, 0], [0, 1, 2]) == 0.0
    assert nmi([0, 1, 2], [5, 5, 5]) == 0.0
    with pytest.raises(InputError):
        nmi([], [])
    with pytest.raises(InputError):
        nmi([0, 1], [0])


def test_nmi_symmetric():
    rng = np.random.default_rng(4)
    for _ in range(20):
        a = rng.integers(0, 3, 30).tolist()
        b = rng.integers(0, 5, 30).tolist()
        assert nmi(a, b) == pytest.approx(nmi(b, a), abs=1e-12)


def test_stratified_splits_disjoint_and_stratified():
    labels = [0] * 10 + [1] * 20 + [2] * 5
    splits = stratified_splits(labels, n_splits=8, test_frac=0.2, seed=7)
    assert len(splits) == 8
    for train, test in splits:
        combined = np.sort(np.concatenate([train, test]))
        assert np.array_equal(combined, np.arange(35))
        # each class keeps roughly test_frac of its members in the test set
        test_labels = [labels[i] for i in test]
        assert test_labels.count(0) == 2
        assert test_labels.count(1) == 4
        assert test_labels.count(2) == 1


def test_stratified_splits_deterministic_and_seed_sensitive():
    labels = [0, 0, 0, 1, 1, 1, 1, 1]
    a = stratified_splits(labels, 5, 0.25, seed=1)
    b = stratified_splits(labels, 5, 0.25, seed=1)
    c = stratified_splits(labels, 5, 0.25, seed=2)
    assert all(np.array_equal(x[0], y[0]) and np.array_equal(x[1], y[1])
               for x, y in zip(a, b))
    assert any(not np.array_equal(x[1], y[1]) for x, y in zip(a, c))


def test_stratified_splits_rejects_singleton_class():
    with pytest.raises(InputError):
        stratified_splits([0, 0, 1], 3, 0.2, seed=0)


def test_split_eval_perfect_pipeline_scores_zero():
    rng = np.random.default_rng(5)
    pts = np.vstack([rng.normal(0, 0.1, (15, 2)), rng.normal(5, 0.1, (15, 2))])
    labels = [0] * 15 + [1] * 15

    def pipeline(train_pts, train_labels, test_pts):
        return knn_classify(_dist(test_pts, train_pts), train_labels, 1)

    report = split_eval(pts, labels, pipeline, n_splits=5, seed=0)
    assert report.mean == 0.0
    assert report.std == 0.0
    assert len(report.values) == 5
    assert report.metadata["n_splits"] == 5


def test_eval_report_csv_roundtrips_floats():
    report = EvalReport(metric="zero_one_error", mean=1.0 / 3.0, std=0.1,
                        values=[0.25, 0.5], metadata={"seed": 3})
    text = report.to_csv()
    lines = text.strip().split("\n")
    assert lines[0] == "# seed=3"
    assert lines[1] == "split,value"
    assert float(lines[2].split(",")[1]) == 0.25
    assert float(lines[-2].split(",")[1]) == 1.0 / 3.0


def test_pair_hinge_loss_values_and_lipschitz():
    rho = np.array([0.0, 0.5, 1.0, 2.0])
    same = np.array([True, True, False, False])
    got = pair_hinge_loss(rho, same)
    assert np.array_equal(got, [0.0, 0.5, 0.0, 0.0])
    assert pair_hinge_loss(np.array([0.25]), np.array([False]))[0] == 0.75
    # 1-Lipschitz: |loss(r1) - loss(r2)| <= |r1 - r2| in each branch
    rng = np.random.default_rng(6)
    r1, r2 = rng.uniform(0, 3, (2, 100))
    for flag in (True, False):
        s = np.full(100, flag)
        assert np.all(np.abs(pair_hinge_loss(r1, s) - pair_hinge_loss(r2, s))
                      <= np.abs(r1 - r2) + 1e-12)


def test_generalization_gap_curve_shape_and_m_order():
    from surfml.geodesic import GeodesicConfig
    from surfml.metric_learning import OptimizerConfig
    from surfml.surfaces import euclidean_surface
    from surfml.synthetic import gaussian_pair_generator

    surface = euclidean_surface(2)
    gen = gaussian_pair_generator(d=2, separation=2.0)
    curve = generalization_gap_curve(
        surface, gen, m_values=[6, 12], n_trials=2,
        opt=OptimizerConfig(max_iters=5), seed=0,
        geo=GeodesicConfig(n_intermediate=0))
    assert [m for m, _ in curve] == [6, 12]
    assert all(np.isfinite(g) for _, g in curve)
