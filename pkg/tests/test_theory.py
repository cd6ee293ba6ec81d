import math

import numpy as np
import pytest

from mtlspca.core import LabelVector, build_similarity, naive_labels, optimal_labels
from mtlspca.datasets import added_task_means, gen_transfer, transfer_spec
from mtlspca.errors import DegenerateModelError
from mtlspca.experiments import MTL, derive_seed, evaluate_methods, transfer_theory
from mtlspca.layout import ProblemLayout
from mtlspca.stats import GramEstimate
from mtlspca.theory import TheoryModel, gaussian_tail, predicted_error, score_means

from .conftest import transfer_gram, transfer_layout


def test_gaussian_tail_values():
    assert gaussian_tail(0.0) == 0.5
    assert gaussian_tail(40.0) < 1e-300
    # erfc-based reference values of the standard normal upper tail
    assert gaussian_tail(1.0) == pytest.approx(0.15865525393145707, abs=1e-12)
    assert gaussian_tail(-1.0) == pytest.approx(0.8413447460685429, abs=1e-12)
    assert gaussian_tail(0.977) == pytest.approx(0.16428, abs=1e-4)


def test_score_means_beta_one():
    layout, gram = transfer_layout(), transfer_gram(1.0)
    y = optimal_labels(build_similarity(gram, layout), layout, 2)
    yn = y.y * layout.n_flat
    num = yn @ gram.g[:, 2]
    assert num == pytest.approx(1.9090909 * 2100, rel=1e-6)
    m1, m2 = score_means(gram, y, layout, 2)
    assert m1 == pytest.approx(0.977, abs=1e-3)
    assert m2 == pytest.approx(-m1, rel=1e-12)


def test_score_means_beta_zero_block_reduction():
    layout, gram = transfer_layout(), transfer_gram(0.0)
    y = optimal_labels(build_similarity(gram, layout), layout, 2)
    m1, _ = score_means(gram, y, layout, 2)
    assert m1 == pytest.approx(100 / math.sqrt(20000), rel=1e-12)


def test_zero_gram_is_chance_level():
    layout = transfer_layout()
    y = LabelVector(np.array([0.5, -0.5, 1.0, -1.0]), 2)
    gram = GramEstimate(np.zeros((4, 4)))
    assert score_means(gram, y, layout, 2) == (0.0, 0.0)
    assert predicted_error(gram, layout, 2, y) == 0.5


def test_zero_labels_are_degenerate():
    with pytest.raises(DegenerateModelError):
        score_means(transfer_gram(1.0), LabelVector(np.zeros(4), 2), transfer_layout(), 2)


@pytest.mark.parametrize("beta,expected", [(0.0, 0.23974021347741697), (1.0, 0.16428249171959852)])
def test_transfer_endpoints(beta, expected):
    assert transfer_theory(beta).err == pytest.approx(expected, abs=1e-3)


def test_orientation_and_scale_invariance():
    layout = transfer_layout()
    for beta in np.linspace(0, 1, 7):
        gram = transfer_gram(beta)
        model = TheoryModel.build(gram, layout, 2)
        assert model.m1 >= model.m2
        assert 0 <= model.err <= 1
        scaled = predicted_error(gram, layout, 2, model.labels.scaled(7.5))
        assert scaled == pytest.approx(model.err, rel=1e-12)


def test_optimal_labels_beat_naive_in_theory():
    layout = transfer_layout()
    for beta in np.linspace(0, 1, 10):
        gram = transfer_gram(beta)
        assert TheoryModel.build(gram, layout, 2).err <= TheoryModel.build(gram, layout, 2, "naive").err + 1e-12


def test_optimal_labels_minimize_predicted_error():
    # a one-parameter search over the source label weight never beats the closed form
    layout = transfer_layout()
    gram = transfer_gram(0.6)
    best = TheoryModel.build(gram, layout, 2).err
    for a in np.linspace(-2, 2, 401):
        y = LabelVector(np.array([a, -a, 1.0, -1.0]), 2)
        assert predicted_error(gram, layout, 2, y) >= best - 1e-12


def test_endpoint_gap():
    assert transfer_theory(0.0).err - transfer_theory(1.0).err >= 0.05


def test_m1_equals_m2_is_chance():
    layout = ProblemLayout.from_counts(5, [(5, 5)])
    gram = GramEstimate(np.ones((2, 2)))
    y = LabelVector(np.array([1.0, 1.0]), 1)
    m1, m2 = score_means(gram, y, layout, 1)
    assert m1 == m2
    assert predicted_error(gram, layout, 1, y) == 0.5


def _added_layout(k, p=100):
    counts = [(20, 20) if t == 2 else (50, 50) for t in range(1, k + 1)] if k > 1 else [(20, 20)]
    ids = range(1, k + 1) if k > 1 else [2]
    return ProblemLayout.from_counts(p, counts, ids)


def _block_gram(k, beta):
    """Gram of tasks sharing beta e_1 with mutually orthogonal remainders."""
    mus = np.zeros((k + 1, k))
    for t in range(k):
        mus[0, t] = beta
        mus[t + 1, t] = math.sqrt(1 - beta * beta)
    m = np.column_stack([c for t in range(k) for c in (-mus[:, t], mus[:, t])])
    return GramEstimate(m.T @ m)


def test_orthogonal_sources_add_nothing():
    errs = [TheoryModel.build(_block_gram(k, 0.0), _added_layout(k), 2).err for k in range(1, 8)]
    np.testing.assert_allclose(errs, errs[0], rtol=1e-12)


def test_identical_sources_never_hurt():
    errs = [TheoryModel.build(_block_gram(k, 1.0), _added_layout(k), 2).err for k in range(1, 10)]
    assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))
    assert errs[-1] < errs[0] - 0.05


def test_random_sources_at_beta_zero_are_nearly_neutral():
    # random unit remainders in p = 100 overlap only by O(1/sqrt(p))
    means = added_task_means(np.random.default_rng(5), 100, 0.0, 6)
    cols = np.column_stack([c for t in range(6) for c in (-means[:, t], means[:, t])])
    errs = []
    for k in range(1, 7):
        tasks = list(range(1, k + 1)) if k > 1 else [2]
        sub = cols[:, [2 * (t - 1) + j for t in tasks for j in (0, 1)]]
        errs.append(TheoryModel.from_means(sub, _added_layout(k), 2).err)
    assert max(errs) - min(errs) < 0.01


@pytest.mark.slow
@pytest.mark.parametrize("beta", [0.0, 0.5, 1.0])
def test_monte_carlo_matches_prediction_at_scale(beta):
    # p = 400 and every count x4 keep c0 fixed while shrinking fluctuations
    predicted = transfer_theory(beta, p=400, n_source=4000, n_target=200).err
    errs = [
        evaluate_methods(gen_transfer(transfer_spec(beta, derive_seed(11, r), 400, 4000, 200, 20_000)), (MTL,))[MTL]
        for r in range(5)
    ]
    assert abs(np.mean(errs) - predicted) < 0.01


def test_naive_labels_model():
    layout = transfer_layout()
    model = TheoryModel.build(transfer_gram(0.0), layout, 2, naive_labels(layout, 2))
    # uninformative source dominates the naive projection
    assert model.err > 0.4
