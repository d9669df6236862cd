import pytest

from sitebid.config import RunConfig, TrainConfig, WorldConfig, PRESETS, get_preset, derive_seed
from sitebid.exceptions import SiteBidConfigurationError


def test_defaults_from_settings():
    config = RunConfig()

    # Set by the test project settings.
    assert config.tokenizer.seq_len == 16
    assert config.cluster.threshold == 0.35
    assert config.bid.budget is None


def test_dumps_loads():
    config = RunConfig(seed=5).override({'gbrt.learning_rate': 0.3, 'bid.budget': 12.5, 'out': 'some/where'})
    text = config.dumps()

    assert 'gbrt.learning_rate = 0.3\n' in text
    assert 'bid.budget = 12.5\n' in text
    assert 'experiment.deterministic_clicks = false\n' in text
    assert text.splitlines() == sorted(text.splitlines())

    assert RunConfig.loads(text) == config
    assert RunConfig.loads(RunConfig().dumps()) == RunConfig()


def test_loads(tmp_path):
    text = (
        '# comment\n'
        '\n'
        'seed = 3  # trailing\n'
        'gbrt.n_trees = 7\n'
        'bid.budget = none\n'
        'experiment.deterministic_clicks = yes\n'
    )
    config = RunConfig.loads(text)

    assert config.seed == 3
    assert config.gbrt.n_trees == 7
    assert config.bid.budget is None
    assert config.experiment.deterministic_clicks is True

    path = tmp_path / 'run.txt'
    path.write_text('seed = 9\n')

    base = RunConfig(threads=4)
    loaded = RunConfig.load(path, base=base)
    assert (loaded.seed, loaded.threads) == (9, 4)

    with pytest.raises(SiteBidConfigurationError) as e:
        RunConfig.loads('seed = 1\nnonsense\n')
    assert 'line 2' in str(e.value)


def test_override():
    config = RunConfig().override({'embed.epochs': '3', 'gbrt.subsample': 0.5, 'bid.mode': 'budget'})

    assert config.embed.epochs == 3
    assert config.gbrt.subsample == 0.5
    assert config.bid.mode == 'budget'
    # Copies are independent.
    assert RunConfig().embed.epochs == 10

    for values in (
        {'nope': 1},
        {'gbrt.nope': 1},
        {'seed.deeper': 1},
        {'gbrt': 1},
        {'seed': 'x'},
        {'embed.learning_rate': 'fast'},
        {'experiment.deterministic_clicks': 'maybe'},
    ):
        with pytest.raises(SiteBidConfigurationError):
            RunConfig().override(values)


def test_presets():
    assert set(PRESETS) == {'table2', 'table3'}

    config = RunConfig().override(get_preset('table2'))
    assert config.world.n_ads == 2000
    assert config.world.queries_per_theme == 3
    assert config.world.feedback_sparsity == 0.9

    with pytest.raises(SiteBidConfigurationError):
        get_preset('table9')


def test_derive_seed():
    assert derive_seed(1, 'pairs') == derive_seed(1, 'pairs')
    assert derive_seed(1, 'pairs') != derive_seed(2, 'pairs')
    assert derive_seed(1, 'pairs') != derive_seed(1, 'world')
    assert 0 <= derive_seed(123, 'world') < 2 ** 32

    assert RunConfig(seed=4).stage_seed('world') == derive_seed(4, 'world')


def test_validate():
    assert TrainConfig().validate() == TrainConfig()
    assert TrainConfig(learning_rate=0.0).validate()

    for cfg in (
        TrainConfig(learning_rate=-1.0),
        TrainConfig(adam_beta1=1.0),
        TrainConfig(epochs=0),
        TrainConfig(d_model=10, n_heads=4),
    ):
        with pytest.raises(SiteBidConfigurationError):
            cfg.validate()

    for cfg in (
        WorldConfig(single_item_share=-0.1),
        WorldConfig(n_ads=0),
        WorldConfig(noise_scale=-1.0),
    ):
        with pytest.raises(SiteBidConfigurationError):
            cfg.validate()
