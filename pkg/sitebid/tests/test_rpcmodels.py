import logging
import numpy as np
import pytest

from sitebid.config import GbrtConfig
from sitebid.exceptions import CheckpointError, SingularSystemError, ValidationError, UnknownRpcModelError
from sitebid.features import FeatureVector
from sitebid.rpcmodels.base import loads_rpc_model, predict
from sitebid.rpcmodels.gbrt import GbrtRpcModel, fit_gbrt, select_tree_count
from sitebid.rpcmodels.linear import LinearRpcModel, fit_linear, solve_ridge
from sitebid.samples import GroupSample
from sitebid.utils import get_registered_rpc_models


def sample(group_id, rpc, weight=1.0, context=None, **stats):
    return GroupSample(
        group_id=group_id,
        members=(group_id,),
        features=FeatureVector(stats=stats).with_context(context),
        rpc=rpc,
        clicks_weight=weight,
    )


@pytest.fixture
def linear_samples():
    rng = np.random.default_rng(0)
    samples = []

    for idx in range(40):
        x1, x2 = rng.normal(size=2)
        samples.append(sample(f'g{idx:02d}', 1.0 + 2.0 * x1 - 0.5 * x2, weight=1.0 + idx % 3, x1=x1, x2=x2))

    return samples


def test_registered():
    models = get_registered_rpc_models()

    assert models['linear'] is LinearRpcModel
    assert models['gbrt'] is GbrtRpcModel
    # Registered by the test app.
    assert 'mean' in models


def test_linear_recovers_coefficients(linear_samples):
    model = fit_linear(linear_samples, l2=1e-9)

    assert model.intercept == pytest.approx(1.0, abs=1e-6)
    assert model.coef == pytest.approx([2.0, -0.5], abs=1e-6)
    assert model.feature_names == ['x1', 'x2']
    assert predict(model, FeatureVector(stats={'x1': 1.0, 'x2': 2.0})) == pytest.approx(2.0, abs=1e-6)


def test_linear_missing_values():
    samples = [
        sample('g1', 1.0, x=1.0, z=None),
        sample('g2', 3.0, x=3.0, z=None),
        sample('g3', 2.0, x=None, z=None),
    ]
    model = LinearRpcModel(l2=0.1).fit(samples)

    # Missing values impute to the training mean; never observed columns to zero.
    assert model.means == pytest.approx([2.0, 0.0])
    assert np.all(np.isfinite(model.predict(samples)))
    assert predict(model, FeatureVector(stats={})) == pytest.approx(predict(model, FeatureVector(stats={'x': 2.0})))


def test_linear_singular():
    samples = [sample('g1', 1.0, x=1.0, y=1.0), sample('g2', 2.0, x=2.0, y=2.0), sample('g3', 3.0, x=3.0, y=3.0)]

    with pytest.raises(SingularSystemError):
        fit_linear(samples, l2=0.0)

    assert fit_linear(samples, l2=0.1)

    with pytest.raises(ValidationError):
        LinearRpcModel(l2=-1)


def test_linear_picks_l2(linear_samples, caplog):
    caplog.set_level(logging.INFO, logger='sitebid.rpcmodels.linear')

    model = LinearRpcModel(l2=1e6).fit(linear_samples[:30], linear_samples[30:])

    assert model.l2 < 1e6
    assert 'instead of configured 1000000.0' in caplog.text


def test_solve_ridge_intercept_unpenalized():
    x = np.array([[0.0], [0.0]])
    intercept, coef = solve_ridge(x, np.array([5.0, 5.0]), np.ones(2), l2=10.0)

    assert intercept == pytest.approx(5.0)
    assert coef == pytest.approx([0.0])


def test_fit_uses_responses_and_context():
    samples = [
        sample('g1', 1.0, context=(0.1, 0.2), x=1.0),
        sample('g2', None, weight=0.0, context=(0.3, 0.4), x=5.0),
        sample('g3', 2.0, context=(0.5, 0.6), x=2.0),
    ]
    model = LinearRpcModel().fit(samples)
    assert model.feature_names == ['x', 'ctx_0', 'ctx_1']
    assert model.predict(samples).shape == (3,)

    no_context = LinearRpcModel(use_context=False).fit(samples)
    assert no_context.feature_names == ['x']

    with pytest.raises(ValidationError):
        LinearRpcModel().fit([samples[1]])


def test_gbrt_stump():
    samples = [sample('g1', 0.0, x=0.0), sample('g2', 2.0, x=1.0)]
    model = fit_gbrt(samples, GbrtConfig(n_trees=1, max_depth=1, learning_rate=1.0, min_leaf_weight=1.0))

    assert model.n_trees == 1
    assert model.trees[0].n_leaves == 2
    assert list(model.predict(samples)) == [0.0, 2.0]


def test_gbrt_missing_values():
    cfg = GbrtConfig(n_trees=1, max_depth=1, learning_rate=1.0, min_leaf_weight=1.0)
    samples = [
        sample('g1', 1.0, x=0.0),
        sample('g2', 1.0, x=1.0),
        sample('g3', 5.0, x=2.0),
        sample('g4', 5.0, x=None),
    ]
    model = fit_gbrt(samples, cfg)

    # Missing values join the side fitting them best.
    assert model.predict(samples) == pytest.approx([1.0, 1.0, 5.0, 5.0])

    # Unseen missing values follow the heavier child.
    model = fit_gbrt(samples[:3], cfg)
    assert predict(model, FeatureVector(stats={'x': None})) == pytest.approx(1.0)


def test_gbrt_min_leaf_weight():
    samples = [sample('g1', 0.0, x=0.0), sample('g2', 2.0, x=1.0)]
    model = fit_gbrt(samples, GbrtConfig(n_trees=3, max_depth=2, learning_rate=1.0, min_leaf_weight=1.5))

    assert all(tree.n_leaves == 1 for tree in model.trees)
    assert model.predict(samples) == pytest.approx([1.0, 1.0])


def test_gbrt_fits_nonlinear():
    rng = np.random.default_rng(1)
    samples = [sample(f'g{idx:03d}', 3.0 if x > 0.5 else 1.0, x=x) for idx, x in enumerate(rng.random(60))]

    model = fit_gbrt(samples, GbrtConfig(n_trees=20, max_depth=2, learning_rate=0.5))
    predictions = model.predict(samples)

    assert np.max(np.abs(predictions - [item.rpc for item in samples])) < 1e-4

    stages = model.staged_predict(model.matrix(samples))
    assert stages.shape == (21, 60)
    assert np.array_equal(stages[-1], predictions)


def test_gbrt_subsample():
    rng = np.random.default_rng(1)
    samples = [sample(f'g{idx:03d}', float(x), x=x) for idx, x in enumerate(rng.random(30))]
    cfg = GbrtConfig(n_trees=5, max_depth=2, learning_rate=0.5, subsample=0.5, seed=2)

    first, second = fit_gbrt(samples, cfg), fit_gbrt(samples, cfg)

    assert np.array_equal(first.predict(samples), second.predict(samples))
    assert first.dumps() == second.dumps()


def test_gbrt_select_tree_count():
    train = [sample('g1', 0.0, x=0.0), sample('g2', 2.0, x=1.0)]
    # Validation disagrees with training: no tree helps.
    val = [sample('v1', 2.0, x=0.0), sample('v2', 0.0, x=1.0)]

    model = fit_gbrt(train, GbrtConfig(n_trees=5, max_depth=1, learning_rate=0.5, min_leaf_weight=1.0))
    assert select_tree_count(model, val) == 0
    assert model.n_trees == 0
    assert model.predict(val) == pytest.approx([1.0, 1.0])

    tuned = GbrtRpcModel(GbrtConfig(n_trees=5, max_depth=1, learning_rate=0.5, min_leaf_weight=1.0)).fit(train, train)
    assert tuned.n_trees == 5


@pytest.mark.parametrize('model', [
    LinearRpcModel(l2=0.5),
    GbrtRpcModel(GbrtConfig(n_trees=5, max_depth=3, learning_rate=0.3, min_leaf_weight=1.0)),
])
def test_persistence(model, linear_samples):
    model.fit(linear_samples)
    loaded = loads_rpc_model(model.dumps())

    assert type(loaded) is type(model)
    assert loaded.feature_names == model.feature_names
    assert np.array_equal(loaded.predict(linear_samples), model.predict(linear_samples))
    assert loaded.dumps() == model.dumps()


def test_persistence_errors(linear_samples):
    text = LinearRpcModel().fit(linear_samples).dumps()

    with pytest.raises(CheckpointError):
        loads_rpc_model('garbage')

    with pytest.raises(CheckpointError):
        loads_rpc_model(text.replace('sitebid-rpc-model\tlinear\t1', 'sitebid-rpc-model\tlinear\t7'))

    with pytest.raises(CheckpointError):
        loads_rpc_model('\n'.join(text.splitlines()[:-1]))

    with pytest.raises(UnknownRpcModelError):
        loads_rpc_model(text.replace('\tlinear\t', '\tunknown\t'))


def test_custom_model(linear_samples):
    from .testapp.sitebids import MeanRpcModel

    model = MeanRpcModel().fit(linear_samples)
    loaded = loads_rpc_model(model.dumps())

    assert isinstance(loaded, MeanRpcModel)
    assert loaded.mean == model.mean


def weighted_sse(predictions, samples):
    return sum(item.clicks_weight * (prediction - item.rpc) ** 2 for prediction, item in zip(predictions, samples))


@pytest.mark.parametrize('seed', range(10))
def test_gbrt_training_error_non_increasing(seed):
    rng = np.random.default_rng(seed)
    samples = []

    for idx in range(80):
        x1, x2 = rng.normal(size=2)
        x3 = None if rng.random() < 0.2 else float(rng.normal())
        rpc = float(np.sin(x1) + 0.5 * x2 ** 2 + rng.normal(scale=0.3))
        samples.append(sample(f'g{idx:03d}', rpc, weight=float(rng.integers(1, 20)), x1=x1, x2=x2, x3=x3))

    learning_rate = float(rng.uniform(0.05, 1.0))
    model = fit_gbrt(samples, GbrtConfig(n_trees=25, max_depth=3, learning_rate=learning_rate, min_leaf_weight=2.0))

    errors = [weighted_sse(stage, samples) for stage in model.staged_predict(model.matrix(samples))]

    for before, after in zip(errors, errors[1:]):
        assert after <= before * (1 + 1e-12)

    assert errors[-1] < errors[0]


@pytest.mark.parametrize('seed', range(3))
def test_gbrt_uniform_weights(seed):
    rng = np.random.default_rng(seed)
    points = [(float(x), float(y)) for x, y in rng.normal(size=(50, 2))]
    cfg = GbrtConfig(n_trees=15, max_depth=3, learning_rate=0.3, min_leaf_weight=1.0)

    unit = [sample(f'g{idx:02d}', x * y + x, x=x, y=y) for idx, (x, y) in enumerate(points)]
    scaled = [sample(f'g{idx:02d}', x * y + x, weight=2.5, x=x, y=y) for idx, (x, y) in enumerate(points)]

    expected = fit_gbrt(unit, cfg).predict(unit)
    assert fit_gbrt(scaled, cfg).predict(scaled) == pytest.approx(expected, abs=1e-10)

    linear = fit_linear(unit, l2=1e-9).predict(unit)
    assert fit_linear(scaled, l2=1e-9 * 2.5).predict(scaled) == pytest.approx(linear, abs=1e-10)
