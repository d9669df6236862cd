"""Synthetic SEM world, offline RPC prediction comparison and online AA/AB experiments."""
import csv
import logging
import math
import time
from dataclasses import dataclass, replace, field
from itertools import product
from pathlib import Path
from typing import Dict, Tuple, List, Mapping, Optional, Sequence, Iterable, Union

import numpy as np

from .bidders.base import GroupEconomics
from .bidders.target import bid_target_rps
from .clustering import AdGroup, build_groups, training_set, train_classifier, reduction_ratio
from .config import RunConfig, WorldConfig, derive_seed
from .features import FeatureVector
from .ingest import Ad, Item, SearchTermRecord, build_pairs
from .intent import EmbeddingNet, train, embed_catalog
from .rpcmodels.base import RpcModelBase
from .samples import GroupSample, aggregate_features, score_arrays, split_dataset, dataset_overview
from .tokens import build_vocab, ad_text, tokenize_ad
from .utils import get_registered_rpc_model, map_ordered

LOGGER = logging.getLogger(__name__)

TypePath = Union[str, Path]

PRODUCT_TYPE_NAMES = ('chairs', 'tables', 'lamps', 'rugs', 'sofas', 'beds', 'desks', 'shelves')

SYLLABLES = ('ka', 'lo', 'mi', 'ne', 'ru', 'ta', 'vi', 'zo', 'be', 'do', 'fa', 'gu', 'hi', 'ju', 'pe', 'sa')

MODES = ('singular', 'cluster')
TABLE2_MODELS = ('linear', 'gbrt')


@dataclass(frozen=True)
class AdTruth:
    """Latent properties of a synthetic ad."""

    ad_id: str
    product_type: str
    theme: str
    true_rpc: float
    click_slope: float
    bounce_rate: float


@dataclass(frozen=True)
class PeriodOutcome:

    clicks: float
    spend: float
    revenue: float

    @property
    def rps(self) -> float:
        return self.revenue / self.spend if self.spend > 0 else 0.0


@dataclass(frozen=True)
class World:
    """Synthetic catalog, search-term report, ground truth and label week outcomes."""

    config: WorldConfig
    ads: Tuple[Ad, ...]
    report: Tuple[SearchTermRecord, ...]
    truth: Dict[str, AdTruth]
    labels: Dict[str, PeriodOutcome]
    """Outcomes of the week following the history window, at the reference bid."""

    @property
    def catalog(self) -> Dict[str, Ad]:
        return {ad.ad_id: ad for ad in self.ads}

    def label_outcomes(self, ad_ids: Iterable[str] = None) -> Dict[str, Tuple[float, float]]:
        """Returns ad id -> (clicks, revenue) of the label week."""
        ad_ids = self.labels.keys() if ad_ids is None else ad_ids
        return {ad_id: (self.labels[ad_id].clicks, self.labels[ad_id].revenue) for ad_id in ad_ids}


def _lognormal(rng: np.random.Generator, mean: float, sigma: float, size=None):
    """Lognormal draws with the given mean."""
    return mean * rng.lognormal(-sigma ** 2 / 2, sigma, size=size) if sigma > 0 else (
        mean if size is None else np.full(size, mean))


def _make_words(rng: np.random.Generator, count: int) -> List[str]:
    n_syllables = 3

    while len(SYLLABLES) ** n_syllables < count * 2:
        n_syllables += 1

    total = len(SYLLABLES) ** n_syllables
    words = []

    for code in rng.choice(total, size=count, replace=False):
        syllables = []
        for _ in range(n_syllables):
            code, rest = divmod(int(code), len(SYLLABLES))
            syllables.append(SYLLABLES[rest])
        words.append(''.join(syllables))

    return words


def _product_type_names(count: int) -> List[str]:
    if count <= len(PRODUCT_TYPE_NAMES):
        return list(PRODUCT_TYPE_NAMES[:count])
    return [f'type{idx}' for idx in range(count)]


def generate_world(cfg: WorldConfig) -> World:
    """Generates a synthetic SEM world.

    Ads of one intention theme share query vocabulary, landing text words
    and a revenue-per-click level. A share `feedback_sparsity` of ads has
    no observable history: empty feedback and no search-term report rows.

    :param cfg:

    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)

    type_names = _product_type_names(cfg.n_product_types)
    n_themes = cfg.n_intention_themes

    words = iter(_make_words(
        rng,
        cfg.n_product_types * (cfg.product_words + n_themes * cfg.theme_words) + cfg.filler_words,
    ))
    filler = [next(words) for _ in range(cfg.filler_words)]

    themes = []

    for type_name in type_names:
        product_words = [next(words) for _ in range(cfg.product_words)]

        for theme_idx in range(n_themes):
            theme_words = [next(words) for _ in range(cfg.theme_words)]

            queries = set()
            attempts = 0

            while len(queries) < cfg.queries_per_theme and attempts < cfg.queries_per_theme * 50:
                attempts += 1
                head = product_words[int(rng.integers(len(product_words)))]
                picked = rng.choice(len(theme_words), size=min(2, len(theme_words)), replace=False)
                queries.add(' '.join([head] + [theme_words[idx] for idx in sorted(picked)]))

            rpc = float(_lognormal(rng, cfg.rpc_mean, cfg.rpc_theme_sigma))
            bounce = float(np.clip(0.5 - 0.2 * math.log(rpc / cfg.rpc_mean), 0.05, 0.95))

            themes.append({
                'name': f'{type_name}-{theme_idx}',
                'product_type': type_name,
                'product_words': product_words,
                'theme_words': theme_words,
                'queries': sorted(queries),
                'rpc': rpc,
                'bounce': bounce,
            })

    def pick(pool: Sequence[str]) -> str:
        return pool[int(rng.integers(len(pool)))] if pool else ''

    ads, report, truth, labels = [], [], {}, {}
    width = len(str(cfg.n_ads))

    for idx in range(cfg.n_ads):
        ad_id = f'ad{idx:0{width}d}'
        theme = themes[int(rng.integers(len(themes)))]

        if cfg.max_items == 1 or rng.random() < cfg.single_item_share:
            n_items = 1
        else:
            n_items = int(rng.integers(2, cfg.max_items + 1))

        items = []

        for rank in range(1, n_items + 1):
            title = ' '.join([
                pick(theme['product_words']), pick(theme['theme_words']), pick(theme['theme_words']), pick(filler),
            ]).title()
            description = ' '.join([
                pick(theme['theme_words']), pick(filler), pick(theme['theme_words']), pick(filler),
                pick(theme['product_words']),
            ])
            items.append(Item(
                title=' '.join(title.split()),
                description=' '.join(description.split()),
                revenue_rank=rank,
            ))

        true_rpc = float(_lognormal(rng, theme['rpc'], cfg.rpc_ad_sigma))
        click_slope = float(_lognormal(rng, cfg.click_slope_mean, cfg.click_slope_sigma))
        bounce_rate = float(np.clip(theme['bounce'] + rng.normal(0, 0.05), 0.0, 1.0))

        ad_truth = AdTruth(
            ad_id=ad_id,
            product_type=theme['product_type'],
            theme=theme['name'],
            true_rpc=true_rpc,
            click_slope=click_slope,
            bounce_rate=bounce_rate,
        )

        hidden = rng.random() < cfg.feedback_sparsity
        history = _draw_outcome(rng, ad_truth, cfg.reference_bid, cfg.history_duration, cfg.noise_scale)
        conversion_rate = min(0.5, 0.05 * true_rpc / cfg.rpc_mean)
        conversions = int(rng.binomial(int(history.clicks), conversion_rate))
        bounce_missing = rng.random() < cfg.bounce_missing

        if hidden:
            stats = {name: None for name in ('clicks', 'conversions', 'spend', 'revenue', 'bounce_rate')}
            total_clicks = 0

        else:
            stats = {
                'clicks': history.clicks,
                'conversions': float(conversions),
                'spend': history.spend,
                'revenue': history.revenue,
                'bounce_rate': None if bounce_missing or not history.clicks else bounce_rate,
            }
            total_clicks = int(history.clicks)

            if total_clicks:
                queries = theme['queries']
                n_queries = int(rng.integers(1, min(3, len(queries)) + 1))
                chosen = sorted(rng.choice(len(queries), size=n_queries, replace=False))
                split = rng.multinomial(total_clicks, [1 / n_queries] * n_queries)

                for query_idx, clicks in zip(chosen, split):
                    if clicks:
                        report.append(SearchTermRecord(ad_id, queries[query_idx], int(clicks)))

        ads.append(Ad(
            ad_id=ad_id,
            items=tuple(items),
            product_type=theme['product_type'] if n_items == 1 else None,
            total_clicks=total_clicks,
            feedback=FeatureVector(stats=stats),
        ))
        truth[ad_id] = ad_truth
        labels[ad_id] = _draw_outcome(rng, ad_truth, cfg.reference_bid, cfg.label_duration, cfg.noise_scale)

    LOGGER.debug('World: %s ads, %s themes, %s report rows', len(ads), len(themes), len(report))

    return World(config=cfg, ads=tuple(ads), report=tuple(report), truth=truth, labels=labels)


def _draw_outcome(
        rng: np.random.Generator,
        truth: AdTruth,
        bid: float,
        duration: float,
        noise_scale: float,
        deterministic: bool = False
) -> PeriodOutcome:

    expected = truth.click_slope * bid * duration

    if deterministic:
        clicks = expected
        return PeriodOutcome(clicks=clicks, spend=clicks * bid, revenue=clicks * truth.true_rpc)

    clicks = int(rng.poisson(expected)) if expected > 0 else 0
    factors = _lognormal(rng, 1.0, noise_scale, size=clicks)
    revenue = truth.true_rpc * float(np.sum(factors)) if clicks else 0.0

    return PeriodOutcome(clicks=float(clicks), spend=clicks * bid, revenue=revenue)


def simulate_period(
        bids: Mapping[str, float],
        truth: Mapping[str, AdTruth],
        duration: float,
        seed: int,
        noise_scale: float = 0.5,
        deterministic: bool = False
) -> Dict[str, PeriodOutcome]:
    """Realizes clicks, spend and revenue of ads bidding for a period.

    Expected clicks are click_slope * bid * duration; clicks are Poisson
    (or equal to expectation in deterministic mode); each click pays its bid
    and yields true_rpc times a mean-one lognormal factor.

    Every ad draws from its own stream derived from the seed and the ad id,
    so an ad outcome depends only on its bid, whatever other ads bid along.

    :param bids: ad id -> non-negative bid
    :param truth:
    :param duration:
    :param seed: common random numbers seed
    :param noise_scale: revenue noise sigma
    :param deterministic: expectations instead of draws (no noise)

    """
    outcomes = {}

    for ad_id in sorted(bids):
        bid = bids[ad_id]

        if bid < 0:
            raise ValueError(f'negative bid for `{ad_id}`')

        rng = np.random.default_rng(derive_seed(seed, ad_id))
        outcomes[ad_id] = _draw_outcome(rng, truth[ad_id], bid, duration, noise_scale, deterministic=deterministic)

    return outcomes


def totals(outcomes: Iterable[PeriodOutcome]) -> PeriodOutcome:
    outcomes = list(outcomes)

    return PeriodOutcome(
        clicks=sum(outcome.clicks for outcome in outcomes),
        spend=sum(outcome.spend for outcome in outcomes),
        revenue=sum(outcome.revenue for outcome in outcomes),
    )


def stratified_split(ads: Iterable[str], labels: Mapping[str, str], seed: int) -> Tuple[List[str], List[str]]:
    """Splits ads into control and test arms within every product type.

    Returns (control, test) sorted ad id lists; test gets half (rounded down) of every stratum.

    :param ads: ad ids
    :param labels: ad id -> product type
    :param seed:

    """
    rng = np.random.default_rng(seed)
    strata: Dict[str, List[str]] = {}

    for ad_id in sorted(ads):
        strata.setdefault(labels[ad_id], []).append(ad_id)

    control, test = [], []

    for label in sorted(strata):
        members = strata[label]
        order = rng.permutation(len(members))
        half = len(members) // 2
        test.extend(members[idx] for idx in order[:half])
        control.extend(members[idx] for idx in order[half:])

    return sorted(control), sorted(test)


@dataclass
class Pipeline:
    """Fitted grouping of a world: embeddings, product types and ad groups."""

    embeddings: Dict[str, np.ndarray]
    groups: Dict[str, List[AdGroup]]
    """Groups per mode: `singular` (singletons) and `cluster`."""

    losses: List[float] = field(default_factory=list)
    classifier_accuracy: Optional[float] = None

    def product_types(self) -> Dict[str, str]:
        return {ad_id: group.product_type for group in self.groups['singular'] for ad_id in group.member_ad_ids}


def fit_pipeline(world: World, config: RunConfig, seed: int) -> Pipeline:
    """Runs tokenization, intention embedding, classification and clustering.

    :param world:
    :param config:
    :param seed: replica seed all stage seeds derive from

    """
    ads = list(world.ads)

    vocab = build_vocab([ad_text(ad) for ad in ads], config.tokenizer.vocab_size)
    tokens = {ad.ad_id: tokenize_ad(ad, vocab, config.tokenizer.seq_len) for ad in ads}

    pairs = build_pairs(world.report, derive_seed(seed, 'pairs'), {ad.ad_id: ad.total_clicks for ad in ads})
    embed_cfg = replace(config.embed, seed=derive_seed(seed, 'train-embed'))

    if pairs:
        net, losses = train(pairs, tokens, embed_cfg, len(vocab))
    else:
        LOGGER.warning('No interactive metric pairs, intention embedding stays untrained')
        net, losses = EmbeddingNet(len(vocab), config.tokenizer.seq_len, embed_cfg), []

    embeddings = embed_catalog(net, ads, vocab)

    vectors, labels = training_set(ads, embeddings)
    clf, default_label = None, None

    if len(set(labels)) >= 2:
        clf = train_classifier(vectors, labels, replace(config.classifier, seed=derive_seed(seed, 'classifier')))
    else:
        default_label = labels[0] if labels else 'unknown'

    def group(threshold: float) -> List[AdGroup]:
        return build_groups(
            ads, embeddings, clf, threshold=threshold, threads=config.threads, default_label=default_label)

    return Pipeline(
        embeddings=embeddings,
        groups={'singular': group(0.0), 'cluster': group(config.cluster.threshold)},
        losses=losses,
        classifier_accuracy=clf.accuracy if clf else None,
    )


def make_model(alias: str, config: RunConfig) -> RpcModelBase:
    return get_registered_rpc_model(alias).from_config(config)


def fit_group_model(
        alias: str,
        config: RunConfig,
        samples: Sequence[GroupSample],
        seed: int
) -> RpcModelBase:
    """Fits a model holding out a tenth of the samples for tuning when there are enough."""
    samples = [sample for sample in samples if sample.has_response]

    if len(samples) >= 10:
        train_samples, val, _ = split_dataset(samples, (0.9, 0.1, 0.0), seed=seed)
    else:
        train_samples, val = samples, []

    return make_model(alias, config).fit(train_samples, val)


def group_predictions(model: RpcModelBase, samples: Sequence[GroupSample]) -> Dict[str, float]:
    return {sample.group_id: float(value) for sample, value in zip(samples, model.predict(samples))}


def ad_predictions(groups: Sequence[AdGroup], predictions: Mapping[str, float]) -> Dict[str, float]:
    """Spreads group predictions over member ads."""
    return {ad_id: predictions[group.group_id] for group in groups for ad_id in group.member_ad_ids}


@dataclass(frozen=True)
class ExperimentReport:
    """Test arm metrics relative to control (control is 100% by construction)."""

    seed: int
    aa_spend: float
    aa_rps: float
    ab_spend: float
    ab_rps: float
    multiplier: float
    """Proportional bid adjustment applied to the test arm in the AB period."""

    control: float = 100.0

    METRICS = ('aa_spend', 'aa_rps', 'ab_spend', 'ab_rps')


def _relative(test: PeriodOutcome, control: PeriodOutcome) -> Tuple[float, float]:
    spend = 100.0 * test.spend / control.spend if control.spend > 0 else 100.0
    rps = 100.0 * test.rps / control.rps if control.rps > 0 else 100.0
    return spend, rps


def _expected_spend(bids: Mapping[str, float], truth: Mapping[str, AdTruth], ad_ids: Iterable[str]) -> float:
    return sum(truth[ad_id].click_slope * bids[ad_id] ** 2 for ad_id in ad_ids)


def _plan_bids(
        groups: Sequence[AdGroup],
        predictions: Mapping[str, float],
        ad_ids: Iterable[str],
        rps_target: float
) -> Dict[str, float]:
    """Common RPS bids for groups; every ad bids its group bid."""
    plan = bid_target_rps(
        [GroupEconomics(group.group_id, max(predictions[group.group_id], 0.0)) for group in groups], rps_target)
    by_ad = {ad_id: plan.bids[group.group_id] for group in groups for ad_id in group.member_ad_ids}

    return {ad_id: by_ad[ad_id] for ad_id in ad_ids}


def run_ab(config: RunConfig, seed: int) -> ExperimentReport:
    """Runs one replica of the online experiment.

    Arms come from stratified sampling over product types. In the AA period
    both arms bid singular-ad predictions; in the AB period the test arm
    switches to its policy (cluster-based by default) with a common RPS goal
    and a proportional bid adjustment keeping its expected spend share.

    RPC models learn from label week outcomes of ads having history only.
    Every ad realizes its clicks from one stream in both periods, so
    outcomes differ between arms and periods by bids alone.

    :param config:
    :param seed: replica seed

    """
    experiment = config.experiment
    world = generate_world(replace(config.world, seed=derive_seed(seed, 'world')))
    pipeline = fit_pipeline(world, config, seed)
    catalog = world.catalog
    outcomes = world.label_outcomes(ad.ad_id for ad in world.ads if not ad.feedback.is_missing('clicks'))

    predictions = {}

    for mode in MODES:
        samples = [aggregate_features(group, catalog, outcomes) for group in pipeline.groups[mode]]
        model = fit_group_model(experiment.model, config, samples, derive_seed(seed, 'fit'))
        predictions[mode] = group_predictions(model, samples)

    control, test = stratified_split(catalog, pipeline.product_types(), derive_seed(seed, 'arms'))

    def bids(mode: str, ad_ids: List[str]) -> Dict[str, float]:
        return _plan_bids(pipeline.groups[mode], predictions[mode], ad_ids, experiment.rps_target)

    clicks_seed = derive_seed(seed, 'clicks')

    def period(arm_bids: Mapping[str, float], duration: float) -> PeriodOutcome:
        return totals(simulate_period(
            arm_bids, world.truth, duration, clicks_seed,
            noise_scale=config.world.noise_scale, deterministic=experiment.deterministic_clicks,
        ).values())

    control_bids, test_aa_bids = bids('singular', control), bids('singular', test)
    test_ab_bids = bids(experiment.test_policy, test)

    aa_spend = _expected_spend(test_aa_bids, world.truth, test)
    ab_spend = _expected_spend(test_ab_bids, world.truth, test)
    multiplier = math.sqrt(aa_spend / ab_spend) if aa_spend > 0 and ab_spend > 0 else 1.0
    test_ab_bids = {ad_id: bid * multiplier for ad_id, bid in test_ab_bids.items()}

    aa = _relative(
        period(test_aa_bids, experiment.aa_duration),
        period(control_bids, experiment.aa_duration))
    ab = _relative(
        period(test_ab_bids, experiment.ab_duration),
        period(control_bids, experiment.ab_duration))

    report = ExperimentReport(
        seed=seed, aa_spend=aa[0], aa_rps=aa[1], ab_spend=ab[0], ab_rps=ab[1], multiplier=multiplier)

    LOGGER.info(
        'Replica %s: AA spend %.2f%% rps %.2f%%, AB spend %.2f%% rps %.2f%%',
        seed, report.aa_spend, report.aa_rps, report.ab_spend, report.ab_rps)

    return report


def replica_seeds(config: RunConfig) -> List[int]:
    return [derive_seed(config.seed, f'replica-{idx}') for idx in range(config.experiment.seeds)]


def run_experiment(config: RunConfig) -> List[ExperimentReport]:
    """Runs AA/AB replicas for every replica seed."""
    started = time.monotonic()
    reports = map_ordered(lambda seed: run_ab(config, seed), replica_seeds(config), config.threads)
    LOGGER.info('%s AA/AB replicas done in %.1fs', len(reports), time.monotonic() - started)
    return reports


def summarize_reports(reports: Sequence[ExperimentReport]) -> Dict[str, float]:
    """Returns mean relative metrics over replicas."""
    if not reports:
        raise ValueError('no experiment reports')

    return {
        metric: float(np.mean([getattr(report, metric) for report in reports]))
        for metric in ExperimentReport.METRICS
    }


@dataclass(frozen=True)
class OfflineResult:
    """Offline RPC prediction comparison for one replica."""

    seed: int
    scores: Dict[Tuple[str, str], Dict[str, float]]
    """(model alias, mode) -> {wmse, wmae} on test ads."""

    overview: Dict[str, Dict[str, float]]
    reduction: float

    def relative(self) -> Dict[Tuple[str, str], Dict[str, float]]:
        """Scores in percent of linear regression on singular ads."""
        reference = self.scores[('linear', 'singular')]

        return {
            key: {
                metric: 100.0 * value / reference[metric] if reference[metric] > 0 else 100.0
                for metric, value in values.items()
            }
            for key, values in self.scores.items()
        }


def offline_eval(
        config: RunConfig,
        seed: int,
        models: Sequence[str] = TABLE2_MODELS,
        world: World = None,
        pipeline: Pipeline = None
) -> OfflineResult:
    """Compares RPC models trained on singular ads and on ad groups.

    Ads are split 80/10/10. Group responses come from the label week outcomes
    of train (validation) members only. Every test ad is scored with the
    prediction of its group, weighted by its label week clicks.

    :param config:
    :param seed: replica seed
    :param models: RPC model aliases; `linear` is the reference
    :param world: prebuilt world (generated from the replica seed otherwise)
    :param pipeline: prebuilt grouping for the world

    """
    if world is None:
        world = generate_world(replace(config.world, seed=derive_seed(seed, 'world')))

    if pipeline is None:
        pipeline = fit_pipeline(world, config, seed)

    catalog = world.catalog
    train_ads, val_ads, test_ads = split_dataset(sorted(catalog), seed=derive_seed(seed, 'split'))

    scored = [ad_id for ad_id in test_ads if world.labels[ad_id].clicks > 0]
    y = [world.labels[ad_id].revenue / world.labels[ad_id].clicks for ad_id in scored]
    w = [world.labels[ad_id].clicks for ad_id in scored]

    scores = {}
    overview_samples = {}

    for mode in MODES:
        groups = pipeline.groups[mode]
        train_samples = [aggregate_features(group, catalog, world.label_outcomes(train_ads)) for group in groups]
        val_samples = [aggregate_features(group, catalog, world.label_outcomes(val_ads)) for group in groups]
        overview_samples[mode] = train_samples

        for alias in models:
            model = make_model(alias, config).fit(train_samples, val_samples)
            predictions = ad_predictions(groups, group_predictions(model, train_samples))
            scores[(alias, mode)] = score_arrays([predictions[ad_id] for ad_id in scored], y, w)

    result = OfflineResult(
        seed=seed,
        scores=scores,
        overview=dataset_overview(overview_samples['singular'], overview_samples['cluster']),
        reduction=reduction_ratio(pipeline.groups['cluster'], len(catalog)),
    )

    LOGGER.info(
        'Replica %s: %s',
        seed, ', '.join(f'{alias}/{mode} wmse {value["wmse"]:.4f}' for (alias, mode), value in scores.items()))

    return result


def run_offline(config: RunConfig, models: Sequence[str] = TABLE2_MODELS) -> List[OfflineResult]:
    """Runs offline comparison for every replica seed."""
    started = time.monotonic()
    results = map_ordered(lambda seed: offline_eval(config, seed, models), replica_seeds(config), config.threads)
    LOGGER.info('%s offline replicas done in %.1fs', len(results), time.monotonic() - started)
    return results


def summarize_offline(results: Sequence[OfflineResult]) -> Dict[Tuple[str, str], Dict[str, float]]:
    """Returns relative scores averaged over replicas."""
    if not results:
        raise ValueError('no offline results')

    relatives = [result.relative() for result in results]

    return {
        key: {
            metric: float(np.mean([relative[key][metric] for relative in relatives]))
            for metric in relatives[0][key]
        }
        for key in relatives[0]
    }


def _align(rows: List[List[str]]) -> str:
    widths = [max(len(row[idx]) for row in rows) for idx in range(len(rows[0]))]
    lines = [
        '  '.join(
            cell.ljust(width) if idx == 0 else cell.rjust(width)
            for idx, (cell, width) in enumerate(zip(row, widths))
        )
        for row in rows
    ]
    return '\n'.join(line.rstrip() for line in lines) + '\n'


def table2_rows(summary: Mapping[Tuple[str, str], Mapping[str, float]]) -> List[List[str]]:
    """CSV rows `model,mode,wmse,wmae` in percent of the reference."""
    rows = [['model', 'mode', 'wmse', 'wmae']]

    for alias, mode in sorted(summary, key=lambda key: (key[0] != 'linear', key[0], MODES.index(key[1]))):
        values = summary[(alias, mode)]
        rows.append([alias, mode, f'{values["wmse"]:.2f}', f'{values["wmae"]:.2f}'])

    return rows


def format_table2(summary: Mapping[Tuple[str, str], Mapping[str, float]]) -> str:
    """Aligned text table: a row per model, WMSE and WMAE per mode."""
    aliases = sorted({alias for alias, _ in summary}, key=lambda alias: (alias != 'linear', alias))
    header = ['Model'] + [f'{metric.upper()} {mode}' for metric, mode in product(('wmse', 'wmae'), MODES)]
    rows = [header]

    for alias in aliases:
        title = get_registered_rpc_model(alias).title or alias
        rows.append([title] + [
            f'{summary[(alias, mode)][metric]:.1f}%' for metric, mode in product(('wmse', 'wmae'), MODES)
        ])

    return _align(rows)


def table3_rows(summary: Mapping[str, float]) -> List[List[str]]:
    """CSV rows `period,metric,control,test` in percent of control."""
    rows = [['period', 'metric', 'control', 'test']]

    for metric in ExperimentReport.METRICS:
        period, name = metric.split('_')
        rows.append([period.upper(), name, '100.00', f'{summary[metric]:.2f}'])

    return rows


def format_table3(summary: Mapping[str, float]) -> str:
    """Aligned text table of test arm metrics relative to control."""
    rows = [['Period', 'Metric', 'Control', 'Test']]

    for metric in ExperimentReport.METRICS:
        period, name = metric.split('_')
        title = name.upper() if name == 'rps' else name.title()
        rows.append([period.upper(), title, '100.0%', f'{summary[metric]:.1f}%'])

    return _align(rows)


def write_rows(rows: List[List[str]], path: TypePath):

    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerows(rows)
