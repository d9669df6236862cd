from dataclasses import replace

import numpy as np
import pytest
import torch

from sitebid.config import WorldConfig
from sitebid.exceptions import ValidationError, CheckpointError
from sitebid.ingest import AdPair, NEGATIVE_IM, build_pairs
from sitebid.intent import (
    EmbeddingNet, forward, pair_loss, pair_gradients, grad_check, train, embed_catalog,
    save_checkpoint, load_checkpoint, write_embeddings, read_embeddings,
)
from sitebid.simulation import generate_world
from sitebid.tokens import TokenSequence, build_vocab, tokenize_text, ad_text, tokenize_ad

THEMES = {
    'soft': ['soft velvet armchair cushion', 'velvet cushion soft seat', 'armchair soft velvet'],
    'bright': ['bright brass lamp bulb', 'lamp bulb bright shade', 'brass shade bright lamp'],
}


@pytest.fixture
def themed():
    """Two intention themes: co-clicked within, never across."""
    texts = {
        f'{theme}{idx}': text
        for theme, variants in THEMES.items()
        for idx, text in enumerate(variants)
    }
    vocab = build_vocab(texts.values(), max_size=50)
    tokens = {ad_id: tokenize_text(text, vocab, seq_len=8) for ad_id, text in texts.items()}

    ad_ids = sorted(texts)
    pairs = []

    for pos, ad_i in enumerate(ad_ids):
        for ad_j in ad_ids[pos + 1:]:
            same = ad_i.rstrip('0123456789') == ad_j.rstrip('0123456789')
            pairs.append(AdPair(ad_i, ad_j, 0.8 if same else NEGATIVE_IM))

    return vocab, tokens, pairs


def test_pair_loss():
    assert pair_loss(1.0, 0.0) == pytest.approx(0.6931, abs=1e-4)
    assert pair_loss(-1.0, -1.0) == pytest.approx(-1.3133, abs=1e-4)
    assert pair_loss(0.958, 1.0) == pytest.approx(0.3002, abs=2e-4)
    assert pair_loss(0.0, 0.7) == 0
    # Stable for large inner products.
    assert np.isfinite(pair_loss(1.0, -800.0))


def test_forward(themed, tiny_train_cfg):
    vocab, tokens, _ = themed
    net = EmbeddingNet(len(vocab), 8, tiny_train_cfg)

    vector = forward(net, tokens['soft0'])
    assert vector.shape == (4,)
    assert np.linalg.norm(vector) == pytest.approx(1.0)

    # All-pad input still gives a unit vector.
    padded = tokenize_text('', vocab, seq_len=8)
    assert np.linalg.norm(forward(net, padded)) == pytest.approx(1.0)

    bad = TokenSequence((len(vocab),) + (0,) * 7)

    with pytest.raises(ValidationError):
        forward(net, bad)

    with pytest.raises(ValidationError):
        forward(net, tokenize_text('soft', vocab, seq_len=5))


def test_init_is_seeded(themed, tiny_train_cfg):
    vocab, tokens, _ = themed

    first = EmbeddingNet(len(vocab), 8, tiny_train_cfg)
    second = EmbeddingNet(len(vocab), 8, tiny_train_cfg)
    other = EmbeddingNet(len(vocab), 8, replace(tiny_train_cfg, seed=4))

    assert np.array_equal(forward(first, tokens['soft0']), forward(second, tokens['soft0']))
    assert not np.array_equal(forward(first, tokens['soft0']), forward(other, tokens['soft0']))


def test_grad_check(themed, tiny_train_cfg):
    vocab, tokens, _ = themed
    net = EmbeddingNet(len(vocab), 8, tiny_train_cfg)

    assert grad_check(net, (tokens['soft0'], tokens['bright1'], 0.7), epsilon=1e-5) < 1e-4
    assert grad_check(net, (tokens['soft0'], tokens['soft2'], NEGATIVE_IM), epsilon=1e-5, seed=1) < 1e-4

    before = [parameter.detach().clone() for parameter in net.parameters()]
    grad_check(net, (tokens['soft1'], tokens['bright0'], 1.0), n_coords=16)

    # Parameters are restored after probing.
    assert all(torch.equal(old, new) for old, new in zip(before, net.parameters()))


def test_zero_metric_gradients(themed, tiny_train_cfg):
    vocab, tokens, _ = themed
    net = EmbeddingNet(len(vocab), 8, tiny_train_cfg)

    gradients = pair_gradients(net, (tokens['soft0'], tokens['bright0'], 0.0))

    assert gradients
    assert all(bool(torch.all(gradient == 0)) for gradient in gradients.values())


def test_train_zero_learning_rate(themed, tiny_train_cfg):
    vocab, tokens, pairs = themed
    cfg = replace(tiny_train_cfg, learning_rate=0.0, epochs=3, batch_size=4)

    net, losses = train(pairs, tokens, cfg, len(vocab))
    fresh = EmbeddingNet(len(vocab), 8, cfg)

    assert all(torch.equal(a, b) for a, b in zip(net.state_dict().values(), fresh.state_dict().values()))
    assert len(losses) == 3
    assert losses[1] == pytest.approx(losses[0], rel=1e-9)
    assert losses[2] == pytest.approx(losses[0], rel=1e-9)


def test_train(themed, tiny_train_cfg):
    vocab, tokens, pairs = themed
    cfg = replace(tiny_train_cfg, learning_rate=0.005, epochs=80, batch_size=len(pairs))

    net, losses = train(pairs, tokens, cfg, len(vocab))

    assert len(losses) == 80
    assert all(later < earlier for earlier, later in zip(losses[:5], losses[1:6]))
    assert losses[-1] < losses[0]

    vectors = {ad_id: forward(net, sequence) for ad_id, sequence in tokens.items()}
    within, across = [], []

    for pair in pairs:
        cosine = float(vectors[pair.ad_i] @ vectors[pair.ad_j])
        (across if pair.is_negative else within).append(cosine)

    assert np.mean(within) > np.mean(across)

    # Same seed, same result.
    _, again = train(pairs, tokens, cfg, len(vocab))
    assert again == losses

    with pytest.raises(ValidationError):
        train([], tokens, cfg, len(vocab))

    with pytest.raises(ValidationError):
        train([AdPair('soft0', 'unknown', 0.5)], tokens, cfg, len(vocab))



def pair_auc(positives, negatives) -> float:
    """Share of (positive, negative) score couples ranked right, ties count half."""
    positives, negatives = np.asarray(positives)[:, None], np.asarray(negatives)[None, :]
    return float(np.mean((positives > negatives) + 0.5 * (positives == negatives)))


def test_train_generalizes(tiny_train_cfg):
    world = generate_world(WorldConfig(
        n_ads=120, n_product_types=2, n_intention_themes=2, queries_per_theme=2, feedback_sparsity=0.0, seed=5))

    vocab = build_vocab([ad_text(ad) for ad in world.ads], max_size=500)
    tokens = {ad.ad_id: tokenize_ad(ad, vocab, 32) for ad in world.ads}

    ad_ids = sorted(world.catalog)
    held_out = set(np.random.default_rng(1).choice(ad_ids, size=len(ad_ids) // 4, replace=False))

    pairs = [
        pair for pair in build_pairs(world.report, neg_seed=2, totals={ad.ad_id: ad.total_clicks for ad in world.ads})
        if pair.ad_i not in held_out and pair.ad_j not in held_out
    ]
    cfg = replace(tiny_train_cfg, learning_rate=0.01, epochs=15, batch_size=32, d_model=16, d_out=8)

    net, _ = train(pairs, tokens, cfg, len(vocab))
    embeddings = embed_catalog(net, world.ads, vocab)

    held_out = sorted(held_out)
    within, across = [], []

    for pos, ad_i in enumerate(held_out):
        for ad_j in held_out[pos + 1:]:
            cosine = float(embeddings[ad_i] @ embeddings[ad_j])
            same = world.truth[ad_i].theme == world.truth[ad_j].theme
            (within if same else across).append(cosine)

    # Ads never seen in training land next to their intention theme.
    assert np.mean(within) > np.mean(across)
    assert pair_auc(within, across) > 0.9


def test_embed_catalog(make_ad, tiny_train_cfg):
    ads = [
        make_ad('a1', titles=['Oak Chair']),
        make_ad('a2', titles=['Desk Lamp', 'Wool Rug']),
        make_ad('a3', titles=['Oak Chair']),
        make_ad('a4', titles=['Pine Table']),
    ]
    vocab = build_vocab([ad_text(ad) for ad in ads], max_size=100)
    net = EmbeddingNet(len(vocab), 16, tiny_train_cfg)

    embeddings = embed_catalog(net, ads, vocab)
    permuted = embed_catalog(net, ads[::-1], vocab, batch_size=1)

    assert list(embeddings) == ['a1', 'a2', 'a3', 'a4']
    assert all(np.array_equal(embeddings[ad_id], permuted[ad_id]) for ad_id in embeddings)
    # Identical texts give identical vectors.
    assert np.array_equal(embeddings['a1'], embeddings['a3'])
    assert np.allclose(embeddings['a2'], forward(net, tokenize_ad(ads[1], vocab, 16)))


def test_checkpoint(themed, tiny_train_cfg, tmp_path):
    vocab, tokens, _ = themed
    net = EmbeddingNet(len(vocab), 8, tiny_train_cfg)
    path = tmp_path / 'intent.json'

    save_checkpoint(net, vocab, path)
    loaded = load_checkpoint(path, vocab)

    assert loaded.cfg == net.cfg
    assert np.array_equal(forward(loaded, tokens['bright2']), forward(net, tokens['bright2']))

    with pytest.raises(CheckpointError):
        load_checkpoint(path, build_vocab(['other words'], max_size=10))

    broken = tmp_path / 'broken.json'
    broken.write_text(path.read_text().replace('"version": 1', '"version": 99'))

    with pytest.raises(CheckpointError):
        load_checkpoint(broken)

    broken.write_text('{')

    with pytest.raises(CheckpointError):
        load_checkpoint(broken)


def test_embeddings_file(tmp_path, write_text):
    embeddings = {'a1': np.array([0.6, 0.8]), 'a2': np.array([1.0, 0.0])}
    path = tmp_path / 'embeddings.csv'

    write_embeddings(embeddings, path)
    loaded = read_embeddings(path)

    assert list(loaded) == ['a1', 'a2']
    assert np.array_equal(loaded['a1'], embeddings['a1'])

    with pytest.raises(ValidationError):
        read_embeddings(write_text('bad.csv', 'ad_id,v_0\na1,x\n'))
