import argparse
import logging

from django.core.management.base import BaseCommand, CommandError

from ... import toolbox
from ...config import RunConfig, PRESETS, get_preset
from ...exceptions import SiteBidError, SiteBidConfigurationError

FLAG_KEYS = {
    'seed': 'seed',
    'threads': 'threads',
    'out': 'out',
    'threshold': 'cluster.threshold',
    'model': 'experiment.model',
    'mode': 'bid.mode',
    'budget': 'bid.budget',
    'rps_target': 'bid.rps_target',
    'seeds': 'experiment.seeds',
    'test_policy': 'experiment.test_policy',
    'deterministic': 'experiment.deterministic_clicks',
}
"""Command line options mapped to run config keys."""

VERBOSITY_LEVELS = {0: logging.ERROR, 1: logging.WARNING, 2: logging.INFO, 3: logging.DEBUG}

STAGES = {
    'ingest': lambda config, options: toolbox.ingest(
        config, options['catalog'], options['search_terms'], synthetic=options['synthetic']),
    'pairs': lambda config, options: toolbox.pairs(config, options['catalog'], options['search_terms']),
    'train-embed': lambda config, options: toolbox.train_embed(config, options['catalog'], options['pairs']),
    'embed': lambda config, options: toolbox.embed(
        config, options['catalog'], options['vocab'], options['checkpoint']),
    'cluster': lambda config, options: toolbox.cluster(config, options['catalog'], options['embeddings']),
    'train-rpc': lambda config, options: toolbox.train_rpc(
        config, options['catalog'], options['groups'], options['embeddings'], duration=options['duration']),
    'bid': lambda config, options: toolbox.bid(config, options['groups']),
    'simulate': lambda config, options: toolbox.simulate(config),
    'eval': lambda config, options: toolbox.evaluate(config),
}


def build_config(options: dict) -> RunConfig:
    """Resolves run config: defaults, preset, config file, `--set` items, flags (the latter win).

    :param options: parsed command options

    """
    config = RunConfig()

    if options.get('preset'):
        config = config.override(get_preset(options['preset']))

    if options.get('config'):
        config = RunConfig.load(options['config'], base=config)

    overrides = {}

    for item in options.get('set') or []:
        key, sep, value = item.partition('=')

        if not sep:
            raise SiteBidConfigurationError(f'`--set {item}`: expected `key=value`')

        overrides[key.strip()] = value.strip()

    for option, key in FLAG_KEYS.items():
        value = options.get(option)

        if value is not None:
            overrides[key] = value

    return config.override(overrides)


class Command(BaseCommand):

    help = 'Runs a search engine marketing bidding pipeline stage.'

    requires_system_checks = []

    def add_arguments(self, parser):
        common = argparse.ArgumentParser(add_help=False)
        common.add_argument(
            '--config', dest='config', default=None,
            help='Run config file with `section.key = value` lines.')
        common.add_argument(
            '--preset', dest='preset', default=None, choices=sorted(PRESETS), help='Named config preset.')
        common.add_argument(
            '--set', dest='set', action='append', default=None, metavar='KEY=VALUE',
            help='Config override, e.g. `gbrt.n_trees=50`. Repeatable.')
        common.add_argument('--seed', dest='seed', type=int, default=None, help='Global seed.')
        common.add_argument('--threads', dest='threads', type=int, default=None, help='Workers cap.')
        common.add_argument('--out', dest='out', default=None, help='Output directory.')

        stages = parser.add_subparsers(
            dest='stage', metavar='stage', required=True, parser_class=argparse.ArgumentParser)

        def stage(name: str, help_text: str) -> argparse.ArgumentParser:
            return stages.add_parser(name, parents=[common], help=help_text)

        ingest = stage('ingest', 'Validate catalog and search-term report.')
        ingest.add_argument('--catalog', dest='catalog', default=None)
        ingest.add_argument('--search-terms', dest='search_terms', default=None)
        ingest.add_argument(
            '--synthetic', dest='synthetic', action='store_true', default=False,
            help='Generate a synthetic world instead of reading inputs.')

        pairs = stage('pairs', 'Build interactive metric training pairs.')
        pairs.add_argument('--catalog', dest='catalog', required=True)
        pairs.add_argument('--search-terms', dest='search_terms', required=True)

        train_embed = stage('train-embed', 'Train intention embedding network.')
        train_embed.add_argument('--catalog', dest='catalog', required=True)
        train_embed.add_argument('--pairs', dest='pairs', required=True)

        embed = stage('embed', 'Embed catalog ads.')
        embed.add_argument('--catalog', dest='catalog', required=True)
        embed.add_argument('--vocab', dest='vocab', required=True)
        embed.add_argument('--checkpoint', dest='checkpoint', required=True)

        cluster = stage('cluster', 'Group ads by product type and intention.')
        cluster.add_argument('--catalog', dest='catalog', required=True)
        cluster.add_argument('--embeddings', dest='embeddings', required=True)
        cluster.add_argument('--threshold', dest='threshold', type=float, default=None)

        train_rpc = stage('train-rpc', 'Fit RPC model on ad groups.')
        train_rpc.add_argument('--catalog', dest='catalog', required=True)
        train_rpc.add_argument('--groups', dest='groups', required=True)
        train_rpc.add_argument('--embeddings', dest='embeddings', required=True)
        train_rpc.add_argument('--model', dest='model', default=None, help='RPC model alias.')
        train_rpc.add_argument(
            '--duration', dest='duration', type=float, default=None,
            help='History length in days for click slope estimation.')

        bid = stage('bid', 'Compute bids from group economics.')
        bid.add_argument('--groups', dest='groups', required=True, help='CSV `group_id,rpc,click_slope`.')
        bid.add_argument('--mode', dest='mode', default=None, help='Bidder alias: `target` or `budget`.')
        bid.add_argument('--budget', dest='budget', type=float, default=None)
        bid.add_argument('--rps-target', dest='rps_target', type=float, default=None)

        simulate = stage('simulate', 'Run AA/AB experiment replicas on synthetic worlds.')
        evaluate = stage('eval', 'Compare RPC models on singular ads and ad groups.')

        for experiment in (simulate, evaluate):
            experiment.add_argument('--seeds', dest='seeds', type=int, default=None, help='Number of replicas.')
            experiment.add_argument('--threshold', dest='threshold', type=float, default=None)

        simulate.add_argument('--model', dest='model', default=None, help='RPC model alias.')
        simulate.add_argument('--test-policy', dest='test_policy', default=None, choices=('cluster', 'singular'))
        simulate.add_argument(
            '--deterministic', dest='deterministic', action='store_const', const=True, default=None,
            help='Use expected clicks instead of random draws.')

    def handle(self, *args, **options):
        stage = options['stage']

        logging.getLogger('sitebid').setLevel(VERBOSITY_LEVELS.get(options.get('verbosity', 1), logging.DEBUG))

        try:
            config = build_config(options)
            toolbox.set_threads(config)
            result = STAGES[stage](config, options)

        except (SiteBidError, OSError) as e:
            raise CommandError(f'{stage}: {e}')

        self.stdout.write(f'{result.summary}\n')
