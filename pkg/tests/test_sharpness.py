import numpy as np
import pytest
from hypothesis import given, strategies as st

from fictsc.models import ModelConfig, build
from fictsc.optim import run_full_batch
from fictsc.sharpness import (NotAtMinimumError, empirical_fim_norm, landscape_slice, lemma1_check,
                              random_directions, sharpness, sharpness_value)
from fictsc.toys import LeastSquaresModel, QuadraticModel, gauss_markov_fixture, logistic_fixture

# realized Hessian-trace vs Fisher-trace gap on the logistic fixture (seed 0, n=4000)
LOGISTIC_GAP = 0.016678540582260176

PM1 = (np.array([1.0, -1.0]), None)


def test_estimators_on_two_sample_quadratic():
    m = QuadraticModel(0.0)
    assert empirical_fim_norm(m, PM1, "batch-mean") == 0.0
    assert empirical_fim_norm(m, PM1, "per-sample") == 1.0
    with pytest.raises(ValueError):
        empirical_fim_norm(m, PM1, "median")
    with pytest.raises(ValueError):
        empirical_fim_norm(m, (np.zeros(0), None))


def test_estimators_agree_on_single_or_duplicate_samples():
    m = QuadraticModel(0.7)
    for data in [(np.array([2.0]), None), (np.array([2.0, 2.0, 2.0]), None)]:
        assert empirical_fim_norm(m, data, "batch-mean") == pytest.approx(
            empirical_fim_norm(m, data, "per-sample"), rel=1e-15)


def test_sharpness_examples():
    rep = sharpness(QuadraticModel(0.0), PM1, alpha=0.1, estimator="per-sample")
    assert rep.loss_at_point == 0.5 and rep.fim_norm == 1.0
    assert rep.sharpness == pytest.approx(1 / 300, rel=1e-14)
    assert sharpness_value(0.3, 0.0, 1.0) == 0.0
    assert sharpness(QuadraticModel(0.0), PM1, 0.2).sharpness == pytest.approx(4 * rep.sharpness, rel=1e-14)
    with pytest.raises(ValueError):
        sharpness(QuadraticModel(0.0), PM1, alpha=0.0)
    assert "estimator=per-sample" in rep.record()


@given(st.floats(1e-4, 10), st.floats(0, 1e6), st.floats(0, 1e3))
def test_sharpness_formula(alpha, fim, loss):
    assert sharpness_value(alpha, fim, loss) == alpha * alpha * fim / (2.0 * (1.0 + loss))


@given(st.integers(0, 10**6))
def test_per_sample_dominates_batch_mean(seed):
    rng = np.random.default_rng(seed)
    cfg = ModelConfig("mlp", d=1, T=5, classes=3, width=4, seed=seed % 7)
    m = build(cfg)
    X, y = rng.normal(size=(6, 1, 5)), rng.integers(0, 3, size=6)
    assert empirical_fim_norm(m, (X, y), "per-sample") >= empirical_fim_norm(m, (X, y), "batch-mean") - 1e-12


def test_lemma1_gauss_markov():
    X, y, w = gauss_markov_fixture()
    rep = lemma1_check(LeastSquaresModel(w), (X, y))
    assert rep.relative_gap < 1e-3


def test_lemma1_logistic_regression_lock():
    X, y, _ = logistic_fixture()
    m = build(ModelConfig("linear", d=1, T=2, classes=2, seed=0))
    run_full_batch(m, X, y, lr=2.0, steps=3000)
    rep = lemma1_check(m, (X, y))
    assert rep.relative_gap < 0.3
    assert rep.relative_gap == pytest.approx(LOGISTIC_GAP, abs=1e-6)


def test_lemma1_rejects_non_minimum():
    X, y, w = gauss_markov_fixture()
    with pytest.raises(NotAtMinimumError):
        lemma1_check(LeastSquaresModel(w + 1.0), (X, y))


def _mlp():
    cfg = ModelConfig("mlp", d=1, T=6, classes=2, width=4, seed=1)
    rng = np.random.default_rng(2)
    return build(cfg), (rng.normal(size=(8, 1, 6)), rng.integers(0, 2, size=8))


def test_slice_center_and_zero_radius():
    m, data = _mlp()
    sl = landscape_slice(m, data, seed=3, radius=0.5, resolution=5)
    assert sl.losses.shape == (5, 5) and sl.resolution == 5
    assert sl.losses[2, 2] == m.loss(*data)
    flat = landscape_slice(m, data, seed=3, radius=0.0, resolution=3)
    assert np.all(flat.losses == flat.losses[1, 1])
    with pytest.raises(ValueError):
        landscape_slice(m, data, resolution=4)


def test_slice_quadratic_closed_form():
    m = QuadraticModel(0.4, curvature=2.5)
    data = (np.array([0.0]), None)
    sl = landscape_slice(m, data, radius=1.0, resolution=7,
                         directions=(np.array([1.0]), np.array([0.0])))
    for i, a in enumerate(sl.alphas):
        np.testing.assert_allclose(sl.losses[i], 0.5 * 2.5 * (0.4 + a) ** 2, rtol=1e-14)


def test_directions_orthogonal_and_deterministic():
    m, _ = _mlp()
    d1, d2 = random_directions(m, seed=9)
    assert abs(d1 @ d2) < 1e-9 * np.linalg.norm(d1) * np.linalg.norm(d2)
    e1, e2 = random_directions(m, seed=9)
    assert np.array_equal(d1, e1) and np.array_equal(d2, e2)
    # filter normalization: each tensor's slice of d1 has that tensor's norm
    pos = 0
    for p in m.params:
        seg = d1[pos:pos + p.size]
        assert np.linalg.norm(seg) == pytest.approx(np.linalg.norm(p.values), rel=1e-12)
        pos += p.size


def test_slice_file(tmp_path):
    m, data = _mlp()
    sl = landscape_slice(m, data, resolution=3, radius=0.1)
    sl.write(tmp_path / "s.txt")
    rows = (tmp_path / "s.txt").read_text().splitlines()
    assert rows[0] == "# a b loss" and len(rows) == 10 and len(rows[5].split()) == 3
