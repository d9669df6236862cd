"""File based pipeline stages.

Every stage reads its inputs, validates them, writes declared outputs
into `RunConfig.out` and returns a StageResult with a one-line summary.

"""
import csv
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Union

import torch

from .bidders.base import GroupEconomics, estimate_click_slope, write_bids, write_economics, read_economics
from .clustering import build_groups, training_set, train_classifier, write_groups, read_groups, reduction_ratio
from .config import RunConfig
from .exceptions import ValidationError, ClassifierError
from .ingest import (
    parse_catalog, parse_search_terms, validate_report, build_pairs, write_catalog, write_search_terms,
    write_pairs, read_pairs,
)
from .intent import train, embed_catalog, save_checkpoint, load_checkpoint, write_embeddings, read_embeddings
from .samples import aggregate_features, score
from .signals import sig_stage_done
from .simulation import (
    generate_world, fit_group_model, run_experiment, summarize_reports, format_table3, table3_rows,
    run_offline, summarize_offline, format_table2, table2_rows, write_rows,
)
from .tokens import Vocabulary, build_vocab, ad_text, tokenize_ad
from .utils import get_registered_bidder

LOGGER = logging.getLogger(__name__)

TypePath = Union[str, Path]

RUN_CONFIG_FILE = 'run_config.txt'


@dataclass(frozen=True)
class StageResult:

    stage: str
    outputs: List[Path]
    summary: str


def _out(config: RunConfig, name: str) -> Path:
    path = Path(config.out)
    path.mkdir(parents=True, exist_ok=True)
    return path / name


def _done(config: RunConfig, stage: str, outputs: List[Path], summary: str) -> StageResult:
    run_config = _out(config, RUN_CONFIG_FILE)
    run_config.write_text(config.dumps(), encoding='utf-8')

    result = StageResult(stage=stage, outputs=outputs + [run_config], summary=summary)
    sig_stage_done.send(None, stage=stage, outputs=result.outputs, summary=summary)

    LOGGER.info('Stage `%s` done: %s', stage, summary)

    return result


def _require(path: Optional[TypePath], name: str) -> Path:
    if not path:
        raise ValidationError(f'`{name}` input is required')

    path = Path(path)

    if not path.is_file():
        raise ValidationError(f'`{name}` input `{path}` does not exist')

    return path


def ingest(config: RunConfig, catalog: TypePath = None, search_terms: TypePath = None, synthetic: bool = False):
    """Validates (or generates) the catalog and the search-term report.

    :param config:
    :param catalog: catalog CSV
    :param search_terms: search-term report CSV
    :param synthetic: generate a world from `config.world` instead of reading inputs

    """
    LOGGER.info('Ingest seed %s', config.stage_seed('world'))

    if synthetic:
        world = generate_world(replace(config.world, seed=config.stage_seed('world')))
        ads, records = list(world.ads), list(world.report)

    else:
        ads = parse_catalog(_require(catalog, 'catalog'))
        records = parse_search_terms(_require(search_terms, 'search-terms')) if search_terms else []

    validate_report(records, ads)

    catalog_out, report_out = _out(config, 'catalog.csv'), _out(config, 'search_terms.csv')
    write_catalog(ads, catalog_out)
    write_search_terms(records, report_out)

    return _done(config, 'ingest', [catalog_out, report_out], f'ads={len(ads)},records={len(records)}')


def pairs(config: RunConfig, catalog: TypePath, search_terms: TypePath):
    """Builds interactive metric training pairs."""
    ads = parse_catalog(_require(catalog, 'catalog'))
    records = parse_search_terms(_require(search_terms, 'search-terms'))
    validate_report(records, ads)

    seed = config.stage_seed('pairs')
    LOGGER.info('Negative sampling seed %s', seed)

    built = build_pairs(records, seed, {ad.ad_id: ad.total_clicks for ad in ads})

    out = _out(config, 'pairs.csv')
    write_pairs(built, out)

    negatives = sum(1 for pair in built if pair.is_negative)

    return _done(
        config, 'pairs', [out], f'pairs={len(built)},positive={len(built) - negatives},negative={negatives}')


def train_embed(config: RunConfig, catalog: TypePath, pairs_path: TypePath):
    """Trains the intention embedding network."""
    ads = parse_catalog(_require(catalog, 'catalog'))
    built = read_pairs(_require(pairs_path, 'pairs'))

    vocab = build_vocab([ad_text(ad) for ad in ads], config.tokenizer.vocab_size)
    tokens = {ad.ad_id: tokenize_ad(ad, vocab, config.tokenizer.seq_len) for ad in ads}

    embed_cfg = replace(config.embed, seed=config.stage_seed('train-embed'))
    LOGGER.info('Embedding training config %s', embed_cfg)

    net, losses = train(built, tokens, embed_cfg, len(vocab))

    vocab_out, checkpoint_out, loss_out = (
        _out(config, 'vocab.txt'), _out(config, 'intent.json'), _out(config, 'loss.csv'))

    vocab.save(vocab_out)
    save_checkpoint(net, vocab, checkpoint_out)

    with open(loss_out, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['epoch', 'loss'])
        writer.writerows([epoch, repr(loss)] for epoch, loss in enumerate(losses))

    final = losses[-1] if losses else float('nan')

    return _done(
        config, 'train-embed', [vocab_out, checkpoint_out, loss_out],
        f'pairs={len(built)},epochs={len(losses)},loss={final:.6f},parameters={net.n_parameters}')


def embed(config: RunConfig, catalog: TypePath, vocab: TypePath, checkpoint: TypePath):
    """Embeds every catalog ad with a trained network."""
    ads = parse_catalog(_require(catalog, 'catalog'))
    vocabulary = Vocabulary.load(_require(vocab, 'vocab'))
    net = load_checkpoint(_require(checkpoint, 'checkpoint'), vocabulary)

    embeddings = embed_catalog(net, ads, vocabulary)

    out = _out(config, 'embeddings.csv')
    write_embeddings(embeddings, out)

    return _done(config, 'embed', [out], f'ads={len(embeddings)},dim={net.cfg.d_out}')


def cluster(config: RunConfig, catalog: TypePath, embeddings: TypePath):
    """Classifies product types and clusters ads into groups."""
    ads = parse_catalog(_require(catalog, 'catalog'))
    vectors = read_embeddings(_require(embeddings, 'embeddings'))

    samples, labels = training_set(ads, vectors)
    clf, default_label = None, None

    try:
        clf = train_classifier(samples, labels, replace(config.classifier, seed=config.stage_seed('classifier')))

    except ClassifierError:
        if len(set(labels)) != 1:
            raise
        default_label = labels[0]
        LOGGER.warning('Single product type `%s`, classifier is not trained', default_label)

    groups = build_groups(
        ads, vectors, clf, threshold=config.cluster.threshold, threads=config.threads, default_label=default_label)

    out = _out(config, 'groups.csv')
    write_groups(groups, out)

    accuracy = 'n/a' if clf is None else f'{clf.accuracy:.4f}'

    return _done(
        config, 'cluster', [out],
        f'groups={len(groups)},ads={len(ads)},reduction={reduction_ratio(groups, len(ads)):.4f},accuracy={accuracy}')


def train_rpc(
        config: RunConfig,
        catalog: TypePath,
        groups: TypePath,
        embeddings: TypePath,
        model: str = None,
        duration: float = None
):
    """Fits an RPC model on group samples and writes predictions and group economics.

    :param config:
    :param catalog:
    :param groups: groups CSV
    :param embeddings: embeddings CSV (centroids)
    :param model: RPC model alias, defaults to `experiment.model`
    :param duration: history length used to estimate click slopes, defaults to `world.history_duration`

    """
    alias = model or config.experiment.model
    duration = duration or config.world.history_duration

    ads = {ad.ad_id: ad for ad in parse_catalog(_require(catalog, 'catalog'))}
    vectors = read_embeddings(_require(embeddings, 'embeddings'))
    grouped = read_groups(_require(groups, 'groups'), vectors)

    samples = [aggregate_features(group, ads) for group in grouped]
    fitted = fit_group_model(alias, config, samples, config.stage_seed('train-rpc'))
    predictions = fitted.predict(samples)

    model_out, predictions_out, economics_out = (
        _out(config, 'rpc_model.txt'), _out(config, 'predictions.csv'), _out(config, 'economics.csv'))

    model_out.write_text(fitted.dumps(), encoding='utf-8')

    with open(predictions_out, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['group_id', 'rpc_pred'])
        writer.writerows([sample.group_id, repr(float(value))] for sample, value in zip(samples, predictions))

    economics = [
        GroupEconomics(
            group_id=sample.group_id,
            rpc=max(float(value), 0.0),
            click_slope=estimate_click_slope(
                sample.features.get('clicks'), sample.features.get('spend'), duration),
        )
        for sample, value in zip(samples, predictions)
    ]
    write_economics(economics, economics_out)

    responded = [(sample, value) for sample, value in zip(samples, predictions) if sample.has_response]
    fit = score([value for _, value in responded], [sample for sample, _ in responded]) if responded else None
    wmse = 'n/a' if fit is None else f'{fit["wmse"]:.6f}'

    return _done(
        config, 'train-rpc', [model_out, predictions_out, economics_out],
        f'model={alias},groups={len(samples)},responses={len(responded)},wmse={wmse}')


def bid(config: RunConfig, groups: TypePath):
    """Computes bids for group economics with the configured bidder.

    :param config: `bid.mode` names the bidder
    :param groups: economics CSV `group_id,rpc,click_slope`

    """
    economics = read_economics(_require(groups, 'groups'))
    bidder = get_registered_bidder(config.bid.mode)(config.bid)

    plan = bidder.plan(economics)

    bids_out, plan_out = _out(config, 'bids.csv'), _out(config, 'plan.txt')
    write_bids(plan, bids_out)
    plan_out.write_text(plan.summary_line + '\n', encoding='utf-8')

    return _done(config, 'bid', [bids_out, plan_out], plan.summary_line)


def simulate(config: RunConfig):
    """Runs AA/AB experiment replicas and writes the relative metrics table."""
    LOGGER.info('Experiment config:\n%s', config.dumps())

    summary = summarize_reports(run_experiment(config))

    csv_out, text_out = _out(config, 'table3.csv'), _out(config, 'table3.txt')
    write_rows(table3_rows(summary), csv_out)
    text_out.write_text(format_table3(summary), encoding='utf-8')

    return _done(
        config, 'simulate', [csv_out, text_out],
        f"seeds={config.experiment.seeds},aa_rps={summary['aa_rps']:.2f},ab_rps={summary['ab_rps']:.2f},"
        f"ab_spend={summary['ab_spend']:.2f}")


def evaluate(config: RunConfig):
    """Runs offline RPC prediction comparison and writes the relative accuracy table."""
    LOGGER.info('Evaluation config:\n%s', config.dumps())

    summary = summarize_offline(run_offline(config))

    csv_out, text_out = _out(config, 'table2.csv'), _out(config, 'table2.txt')
    write_rows(table2_rows(summary), csv_out)
    text_out.write_text(format_table2(summary), encoding='utf-8')

    cells = ','.join(f'{alias}_{mode}={values["wmse"]:.2f}' for (alias, mode), values in sorted(summary.items()))

    return _done(config, 'eval', [csv_out, text_out], f'seeds={config.experiment.seeds},{cells}')


def set_threads(config: RunConfig):
    """Caps torch intra-op workers."""
    torch.set_num_threads(max(1, config.threads))

