from dataclasses import replace
from math import comb

import numpy as np
import pytest

from sitebid.config import RunConfig, WorldConfig, get_preset
from sitebid.exceptions import SiteBidConfigurationError
from sitebid.ingest import validate_report
from sitebid.simulation import (
    AdTruth, PeriodOutcome, generate_world, simulate_period, totals, stratified_split, fit_pipeline,
    run_ab, run_experiment, summarize_reports, offline_eval, run_offline, summarize_offline, replica_seeds,
    table2_rows, table3_rows, format_table2, format_table3,
)


@pytest.fixture
def world():
    return generate_world(WorldConfig(
        n_ads=60, n_product_types=2, n_intention_themes=2, queries_per_theme=6, feedback_sparsity=0.5, seed=7))


def test_generate_world(world):
    assert len(world.ads) == 60
    assert len({ad.ad_id for ad in world.ads}) == 60
    assert set(world.truth) == set(world.labels) == set(world.catalog)

    validate_report(world.report, world.ads)

    reported = {record.ad_id for record in world.report}

    for ad in world.ads:
        truth = world.truth[ad.ad_id]

        assert truth.product_type in ('chairs', 'tables')
        assert truth.true_rpc > 0 and truth.click_slope > 0
        assert ad.product_type in (None, truth.product_type)
        assert (ad.product_type is None) != ad.is_single_item

        if ad.feedback.is_missing('clicks'):
            # Ads without history are absent from the report.
            assert ad.total_clicks == 0
            assert ad.ad_id not in reported
            assert all(ad.feedback.is_missing(name) for name in ad.feedback.names)

    hidden = sum(1 for ad in world.ads if ad.feedback.is_missing('clicks'))
    assert 0 < hidden < 60

    assert generate_world(world.config) == world
    assert generate_world(replace(world.config, seed=8)) != world

    with pytest.raises(SiteBidConfigurationError):
        generate_world(replace(world.config, feedback_sparsity=1.5))


def test_simulate_period():
    truth = {
        'a1': AdTruth('a1', 'chairs', 'chairs-0', true_rpc=2.0, click_slope=3.0, bounce_rate=0.5),
        'a2': AdTruth('a2', 'chairs', 'chairs-0', true_rpc=1.0, click_slope=1.0, bounce_rate=0.5),
    }

    outcomes = simulate_period({'a1': 0.5, 'a2': 0.0}, truth, duration=2.0, seed=1, deterministic=True)

    assert outcomes['a1'] == PeriodOutcome(clicks=3.0, spend=1.5, revenue=6.0)
    assert outcomes['a2'] == PeriodOutcome(clicks=0.0, spend=0.0, revenue=0.0)
    assert outcomes['a1'].rps == 4.0
    assert totals(outcomes.values()) == PeriodOutcome(3.0, 1.5, 6.0)

    drawn = simulate_period({'a1': 0.5, 'a2': 1.0}, truth, duration=100.0, seed=1)
    assert drawn == simulate_period({'a2': 1.0, 'a1': 0.5}, truth, duration=100.0, seed=1)
    # Every click pays its bid.
    assert drawn['a1'].spend == drawn['a1'].clicks * 0.5
    assert drawn['a1'].clicks == pytest.approx(150, rel=0.3)

    with pytest.raises(ValueError):
        simulate_period({'a1': -1.0}, truth, duration=1.0, seed=1)


def test_stratified_split():
    labels = {f'a{idx}': 'chairs' if idx < 5 else 'lamps' for idx in range(11)}

    control, test = stratified_split(labels, labels, seed=3)

    assert sorted(control + test) == sorted(labels)
    assert not set(control) & set(test)
    assert sum(1 for ad_id in test if labels[ad_id] == 'chairs') == 2
    assert sum(1 for ad_id in test if labels[ad_id] == 'lamps') == 3
    assert stratified_split(labels, labels, seed=3) == (control, test)


@pytest.mark.parametrize('seed', range(3))
def test_stratified_split_shares(seed):
    rng = np.random.default_rng(seed)
    names = ('chairs', 'tables', 'lamps', 'rugs')
    labels = {f'a{idx:05d}': names[rng.choice(4, p=(0.55, 0.25, 0.15, 0.05))] for idx in range(10001)}

    control, test = stratified_split(labels, labels, seed=seed)

    for name in names:
        control_share = sum(1 for ad_id in control if labels[ad_id] == name) / len(control)
        test_share = sum(1 for ad_id in test if labels[ad_id] == name) / len(test)
        assert abs(control_share - test_share) < 0.02


def test_fit_pipeline(world, small_config):
    pipeline = fit_pipeline(world, small_config, seed=1)

    assert set(pipeline.embeddings) == set(world.catalog)
    assert len(pipeline.groups['singular']) == 60
    assert len(pipeline.groups['cluster']) <= 60
    assert len(pipeline.losses) == 2

    grouped = sorted(ad_id for group in pipeline.groups['cluster'] for ad_id in group.member_ad_ids)
    assert grouped == sorted(world.catalog)

    product_types = pipeline.product_types()
    for ad in world.ads:
        if ad.product_type:
            assert product_types[ad.ad_id] == ad.product_type


def test_null_experiment(small_config):
    config = small_config.override({'world.feedback_sparsity': 0.0, 'experiment.test_policy': 'singular'})

    report = run_ab(config, seed=11)

    # Same policy in both arms and periods: nothing changes, clicks are drawn.
    assert report.multiplier == 1.0
    assert report.ab_spend == report.aa_spend
    assert report.ab_rps == report.aa_rps

    # Clustering at threshold 0 is the singular policy.
    clustered = run_ab(config.override({'experiment.test_policy': 'cluster', 'cluster.threshold': 0.0}), seed=11)
    assert clustered.multiplier == 1.0
    assert (clustered.ab_spend, clustered.ab_rps) == (clustered.aa_spend, clustered.aa_rps)
    assert clustered.ab_rps == pytest.approx(report.ab_rps, rel=1e-9)

    deterministic = run_ab(config.override({'experiment.deterministic_clicks': True}), seed=11)
    assert deterministic.ab_rps == deterministic.aa_rps


def test_simulate_period_common_streams():
    truth = {
        ad_id: AdTruth(ad_id, 'chairs', 'chairs-0', true_rpc=1.5, click_slope=2.0, bounce_rate=0.5)
        for ad_id in ('a1', 'a2', 'a3')
    }

    together = simulate_period({'a1': 0.4, 'a2': 0.7, 'a3': 0.2}, truth, duration=7.0, seed=5)
    alone = simulate_period({'a2': 0.7}, truth, duration=7.0, seed=5)

    # An ad outcome does not depend on which other ads bid in the period.
    assert alone['a2'] == together['a2']
    assert simulate_period({'a2': 0.7}, truth, duration=7.0, seed=6) != alone


def test_experiment(small_config):
    config = small_config.override({'experiment.model': 'linear'})

    reports = run_experiment(config)

    assert [report.seed for report in reports] == replica_seeds(config)
    assert all(report.control == 100.0 for report in reports)
    assert all(report.multiplier > 0 for report in reports)

    summary = summarize_reports(reports)
    assert set(summary) == {'aa_spend', 'aa_rps', 'ab_spend', 'ab_rps'}
    assert all(np.isfinite(value) for value in summary.values())

    rows = table3_rows(summary)
    assert rows[0] == ['period', 'metric', 'control', 'test']
    assert [row[:3] for row in rows[1:]] == [
        ['AA', 'spend', '100.00'], ['AA', 'rps', '100.00'], ['AB', 'spend', '100.00'], ['AB', 'rps', '100.00']]
    assert 'RPS' in format_table3(summary)

    with pytest.raises(ValueError):
        summarize_reports([])


def test_offline_eval(world, small_config):
    result = offline_eval(small_config, seed=1, world=world)

    assert set(result.scores) == {
        ('linear', 'singular'), ('linear', 'cluster'), ('gbrt', 'singular'), ('gbrt', 'cluster')}
    assert all(value['wmse'] >= 0 and value['wmae'] >= 0 for value in result.scores.values())
    assert 0 < result.reduction <= 1

    relative = result.relative()
    assert relative[('linear', 'singular')] == {'wmse': pytest.approx(100.0), 'wmae': pytest.approx(100.0)}

    assert result.overview['singular']['sample_size'] == 60
    assert result.overview['singular']['missing_ratio'] > 0

    summary = summarize_offline([result, result])
    assert summary[('gbrt', 'cluster')]['wmse'] == pytest.approx(relative[('gbrt', 'cluster')]['wmse'])

    rows = table2_rows(summary)
    assert rows[1][:2] == ['linear', 'singular']
    assert len(rows) == 5

    text = format_table2(summary)
    assert 'LR' in text and 'GBRT' in text


def sign_test(wins: int, n: int) -> float:
    """One-sided sign test p-value of `wins` successes out of `n`."""
    return sum(comb(n, k) for k in range(wins, n + 1)) / 2 ** n


def test_offline_direction():
    results = run_offline(RunConfig(threads=4).override(get_preset('table2')))

    assert len(results) == 10

    comparisons = {
        'cluster gbrt over singular gbrt': (('gbrt', 'cluster'), ('gbrt', 'singular')),
        'gbrt over linear, singular': (('gbrt', 'singular'), ('linear', 'singular')),
        'gbrt over linear, cluster': (('gbrt', 'cluster'), ('linear', 'cluster')),
    }

    for name, (better, worse) in comparisons.items():
        wins = sum(1 for result in results if result.scores[better]['wmse'] < result.scores[worse]['wmse'])
        assert sign_test(wins, len(results)) < 0.05, f'{name}: {wins} of {len(results)}'


def test_ab_direction():
    reports = run_experiment(RunConfig(threads=4).override(get_preset('table3')))

    assert len(reports) == 20

    summary = summarize_reports(reports)

    # Arms are alike while bidding the same way.
    assert 97 <= summary['aa_rps'] <= 103
    assert summary['ab_rps'] > 100
