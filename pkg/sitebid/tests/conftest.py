from typing import Sequence

import pytest
from pytest_djangoapp import configure_djangoapp_plugin


pytest_plugins = configure_djangoapp_plugin({
    'SITEBID_SEQ_LEN': 16,
})


@pytest.fixture
def make_ad():
    """Returns a factory of catalog ads."""
    from sitebid.features import FeatureVector
    from sitebid.ingest import Ad, Item

    def make_ad_(
            ad_id: str,
            titles: Sequence[str] = ('Oak Chair',),
            product_type: str = None,
            total_clicks: int = 0,
            **stats
    ):
        items = tuple(
            Item(title=title, description=f'{title} description'.lower(), revenue_rank=rank)
            for rank, title in enumerate(titles, 1)
        )
        return Ad(
            ad_id=ad_id,
            items=items,
            product_type=product_type,
            total_clicks=total_clicks,
            feedback=FeatureVector(stats=dict(stats)),
        )

    return make_ad_


@pytest.fixture
def write_text(tmp_path):
    """Writes text into a file under a temporary directory, returns its path."""

    def write_text_(name: str, text: str):
        path = tmp_path / name
        path.write_text(text, encoding='utf-8')
        return path

    return write_text_


@pytest.fixture
def tiny_train_cfg():
    from sitebid.config import TrainConfig

    return TrainConfig(
        learning_rate=0.01, batch_size=64, epochs=5, seed=3,
        n_layers=1, n_heads=2, d_model=8, d_out=4, ff_mult=2,
    )


@pytest.fixture
def small_config(tmp_path):
    """Run config small enough for whole-pipeline tests."""
    from sitebid.config import RunConfig

    return RunConfig(out=str(tmp_path)).override({
        'tokenizer.seq_len': 16,
        'tokenizer.vocab_size': 500,
        'embed.d_model': 8,
        'embed.n_heads': 2,
        'embed.d_out': 4,
        'embed.n_layers': 1,
        'embed.epochs': 2,
        'classifier.epochs': 20,
        'classifier.d_model': 8,
        'gbrt.n_trees': 10,
        'gbrt.max_depth': 2,
        'world.n_ads': 80,
        'world.n_product_types': 2,
        'world.n_intention_themes': 2,
        'world.queries_per_theme': 6,
        'experiment.seeds': 2,
    })
