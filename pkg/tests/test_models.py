import numpy as np
import pytest
from hypothesis import given, strategies as st

from causalbias.datasets import Dataset
from causalbias.errors import InputError, TrainingDivergenceError
from causalbias.models import (FrlPenaltySpec, ModelSpec, TrainedModel, flatten, init_params,
                               load_model, logits, mmd2, objective, predict, representations,
                               save_model, standardized_mmd2, train_erm, train_frl,
                               train_group_classifier, train_oracle_frl, unflatten)
from causalbias.scm import ScmConfig, build_scm, exact_joint, sample_dataset

FAST = ModelSpec(epochs=5)


@pytest.fixture(scope="module")
def unbiased():
    scm = build_scm(ScmConfig(mechanism="unbiased", separability_strength=0.8))
    return scm, sample_dataset(scm, 20000, 0), sample_dataset(scm, 20000, 1)


def brute_mmd2(rep, groups, bandwidths):
    g = groups.astype(bool)
    total = 0.0
    for s in bandwidths:
        k = np.exp(-((rep[:, None, :] - rep[None, :, :]) ** 2).sum(-1) / (2 * s * s))
        np.fill_diagonal(k, 0.0)
        n1, n0 = g.sum(), (~g).sum()
        total += (k[np.ix_(g, g)].sum() / (n1 * (n1 - 1)) + k[np.ix_(~g, ~g)].sum() / (n0 * (n0 - 1))
                  - 2 * k[np.ix_(g, ~g)].sum() / (n1 * n0))
    return total


def numeric_grad(f, x, h=1e-6):
    out = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        out.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return out


@given(st.integers(0, 2 ** 31), st.integers(1, 3), st.integers(4, 12))
def test_mmd2_matches_double_sum(seed, dim, n):
    gen = np.random.default_rng(seed)
    rep = gen.normal(size=(n, dim))
    groups = np.r_[np.zeros(n // 2), np.ones(n - n // 2)].astype(int)
    value, _ = mmd2(rep, groups, (0.5, 1.0, 2.0))
    assert abs(value - brute_mmd2(rep, groups, (0.5, 1.0, 2.0))) < 1e-10


@pytest.mark.parametrize("fn", [mmd2, standardized_mmd2])
def test_penalty_gradients(fn):
    gen = np.random.default_rng(3)
    for _ in range(5):
        rep = gen.normal(size=(14, 2))
        groups = gen.permutation(np.r_[np.zeros(7), np.ones(7)]).astype(int)
        _, grad = fn(rep, groups, (0.5, 1.0))
        num = numeric_grad(lambda r: fn(r, groups, (0.5, 1.0))[0], rep)
        assert np.abs(grad - num).max() <= 1e-6 * max(1.0, np.abs(num).max())


def test_standardized_penalty_is_scale_free():
    gen = np.random.default_rng(4)
    rep = gen.normal(size=(40, 1))
    groups = np.r_[np.zeros(20), np.ones(20)].astype(int)
    rep[groups == 1] += 0.5
    v1, _ = standardized_mmd2(rep, groups, (1.0,), eps=0.0)
    v2, _ = standardized_mmd2(10 * rep + 3, groups, (1.0,), eps=0.0)
    assert abs(v1 - v2) < 1e-12


def test_penalty_needs_two_per_group():
    with pytest.raises(InputError):
        mmd2(np.zeros((3, 1)), np.array([0, 0, 1]), (1.0,))


def objective_grad_error(gen, hidden=(), standardize=True) -> float:
    """Relative error of the analytic FRL objective gradient on one random instance."""
    spec = ModelSpec(hidden_widths=hidden, representation_dim=hidden[-1] if hidden else 1, l2=1e-3)
    penalty = FrlPenaltySpec(penalty_weight=2.0, standardize=standardize)
    X = gen.choice([-1.0, 1.0], size=(16, 4))
    t = gen.integers(0, 2, 16).astype(float)
    groups = gen.permutation(np.r_[np.zeros(8), np.ones(8)]).astype(int)
    params = init_params(4, spec, gen)
    _, grads = objective(params, X, t, groups, penalty, spec.l2)
    vec = flatten(params)
    num = numeric_grad(lambda v: objective(unflatten(v, params), X, t, groups, penalty,
                                           spec.l2)[0], vec)
    ana = flatten(grads)
    return float(np.linalg.norm(ana - num) / max(np.linalg.norm(num), 1e-12))


@pytest.mark.parametrize("hidden", [(), (3,)])
@pytest.mark.parametrize("standardize", [True, False])
def test_objective_gradient_check(hidden, standardize):
    gen = np.random.default_rng(len(hidden) + 2 * standardize)
    for _ in range(10):
        assert objective_grad_error(gen, hidden, standardize) <= 1e-4


def test_separable_toy_reaches_full_accuracy():
    y = np.tile([0, 1], 200)
    a = np.repeat([0, 1], 200)
    d = Dataset(y[:, None], np.zeros((400, 1)), a, y, y)
    model = train_erm(d, ModelSpec(epochs=30))
    assert (predict(model, d)[1] == y).all()


def test_determinism_and_zero_penalty(unbiased):
    _, train, _ = unbiased
    a = train_erm(train, FAST)
    b = train_erm(train, FAST)
    c = train_frl(train, FAST, FrlPenaltySpec(penalty_weight=0.0))
    for (Wa, ba), (Wb, bb), (Wc, bc) in zip(a.weights, b.weights, c.weights):
        assert np.array_equal(Wa, Wb) and np.array_equal(Wa, Wc)
        assert np.array_equal(ba, bb) and np.array_equal(ba, bc)
    d = train_erm(train, ModelSpec(epochs=5, seed=1))
    assert not np.array_equal(a.weights[0][0], d.weights[0][0])


def test_oracle_masks_sensitive_channels(unbiased):
    _, train, test = unbiased
    model = train_oracle_frl(train, FAST)
    assert model.input_mask.tolist() == [True] * 4 + [False] * 4
    flipped = Dataset(test.x_z, 1 - test.x_a, test.a, test.y, test.z)
    assert np.array_equal(logits(model, test), logits(model, flipped))


def test_a_is_not_an_input(unbiased):
    _, train, test = unbiased
    model = train_erm(train, FAST)
    other = Dataset(test.x_z, test.x_a, 1 - test.a, test.y, test.z)
    assert np.array_equal(representations(model, test), representations(model, other))
    assert representations(model, test).shape == (len(test), 1)
    mlp = train_erm(train, ModelSpec(hidden_widths=(5,), representation_dim=5, epochs=2))
    assert representations(mlp, test).shape == (len(test), 5)


def test_prediction_tie_rule():
    spec = ModelSpec()
    model = TrainedModel(spec, ((np.zeros((2, 1)), np.zeros(1)),), "ERM", np.ones(2, bool), (1, 1))
    d = Dataset([[0], [1]], [[1], [0]], [0, 1], [0, 1], [0, 1])
    scores, labels = predict(model, d)
    assert (scores == 0.5).all() and (labels == 0).all()


def test_bayes_matched_scores_and_accuracy(unbiased):
    scm, train, test = unbiased
    model = train_erm(train, ModelSpec(epochs=20))
    joint = exact_joint(scm).marginal(["X_Z", "X_A", "Y"])
    post = joint[:, :, 1] / joint.sum(axis=2)
    xz = test.x_z @ (1 << np.arange(4))
    xa = test.x_a @ (1 << np.arange(4))
    scores, labels = predict(model, test)
    assert np.abs(scores - post[xz, xa]).mean() < 0.05
    bayes = (np.maximum(joint[:, :, 0], joint[:, :, 1])).sum()
    assert abs((labels == test.y).mean() - bayes) < 0.02


def test_erm_ignores_sensitive_channels_on_unbiased_data():
    # permuting x_a at test time barely moves ERM accuracy
    scm = build_scm(ScmConfig(mechanism="unbiased", separability_strength=0.9))
    gaps = []
    for seed in range(10):
        train = sample_dataset(scm, 5000, 2 * seed)
        test = sample_dataset(scm, 5000, 2 * seed + 1)
        model = train_erm(train, ModelSpec(seed=seed))
        perm = np.random.default_rng(seed).permutation(len(test))
        shuffled = Dataset(test.x_z, test.x_a[perm], test.a, test.y, test.z)
        acc = lambda d: (predict(model, d)[1] == d.y).mean()
        gaps.append(100 * abs(acc(test) - acc(shuffled)))
    assert np.mean(gaps) < 1.0


def test_frl_reduces_group_discrepancy():
    scm = build_scm(ScmConfig(mechanism="annotation_disparity", mechanism_strength=1.0,
                              separability_strength=1.0))
    train = sample_dataset(scm, 20000, 0)
    erm = train_erm(train, ModelSpec())
    frl = train_frl(train, ModelSpec(), FrlPenaltySpec())
    sub = np.random.default_rng(0).choice(len(train), 2000, replace=False)
    gaps = [standardized_mmd2(representations(m, train)[sub], train.a[sub], (0.5, 1.0, 2.0))[0]
            for m in (erm, frl)]
    assert gaps[1] < 0.5 * gaps[0]


def test_group_classifier_targets_a(unbiased):
    _, train, _ = unbiased
    clf = train_group_classifier(train, FAST)
    assert clf.target == "a"
    assert (predict(clf, train)[1] == train.a).mean() > 0.85


def test_save_load_round_trip(tmp_path, unbiased):
    _, train, test = unbiased
    model = train_frl(train, ModelSpec(hidden_widths=(3,), representation_dim=3, epochs=1),
                      FrlPenaltySpec(kernel_bandwidths=(0.7,), penalty_weight=1.5))
    save_model(model, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert back.to_dict() == model.to_dict()
    assert np.array_equal(logits(back, test), logits(model, test))
    (tmp_path / "old.json").write_text('{"version": 99}')
    with pytest.raises(InputError):
        load_model(tmp_path / "old.json")


def test_spec_validation():
    with pytest.raises(InputError):
        ModelSpec(hidden_widths=(4,), representation_dim=3)
    with pytest.raises(InputError):
        ModelSpec(representation_dim=2)
    with pytest.raises(InputError):
        ModelSpec.from_dict({"lr": 1})
    with pytest.raises(InputError):
        FrlPenaltySpec(kernel_bandwidths=())
    with pytest.raises(InputError):
        FrlPenaltySpec.from_dict({"weight": 1})


def test_width_mismatch(unbiased):
    _, train, _ = unbiased
    model = train_erm(train, FAST)
    other = Dataset(np.zeros((4, 2)), np.zeros((4, 2)), [0, 1, 0, 1], [0, 1, 1, 0], [0, 1, 1, 0])
    with pytest.raises(InputError):
        predict(model, other)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported(unbiased):
    _, train, _ = unbiased
    with pytest.raises(TrainingDivergenceError):
        train_erm(train, ModelSpec(hidden_widths=(4,), representation_dim=4, learning_rate=1e300,
                                   epochs=3))
