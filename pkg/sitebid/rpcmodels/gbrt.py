import logging
from dataclasses import dataclass
from typing import List, Sequence, Optional, Tuple

import numpy as np

from .base import RpcModelBase, expect, format_floats, weighted_mean
from ..config import GbrtConfig
from ..exceptions import CheckpointError
from ..samples import GroupSample, score_arrays, canonical_order, with_response

if False:  # pragma: nocover
    from ..config import RunConfig  # noqa

LOGGER = logging.getLogger(__name__)

LEAF = -1


@dataclass
class RegressionTree:
    """Array-encoded binary regression tree. Node 0 is the root.

    Internal nodes route `x <= threshold` left, missing values
    follow `missing_left`. Leaves have `feature == -1`.

    """
    feature: np.ndarray
    threshold: np.ndarray
    missing_left: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature == LEAF))

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Returns leaf values for every row."""
        node = np.zeros(len(x), dtype=np.int64)

        while True:
            rows = np.nonzero(self.feature[node] != LEAF)[0]

            if not len(rows):
                break

            current = node[rows]
            values = x[rows, self.feature[current]]

            go_left = np.where(np.isnan(values), self.missing_left[current], values <= self.threshold[current])
            node[rows] = np.where(go_left, self.left[current], self.right[current])

        return self.value[node]


class _TreeBuilder:

    def __init__(self, x: np.ndarray, residual: np.ndarray, w: np.ndarray, cfg: GbrtConfig):
        self.x = x
        self.residual = residual
        self.w = w
        self.cfg = cfg
        self.nodes: List[Tuple[int, float, bool, int, int, float]] = []

    def build(self, rows: np.ndarray) -> RegressionTree:
        self._grow(rows, 0)
        columns = list(zip(*self.nodes))

        return RegressionTree(
            feature=np.array(columns[0], dtype=np.int64),
            threshold=np.array(columns[1], dtype=np.float64),
            missing_left=np.array(columns[2], dtype=bool),
            left=np.array(columns[3], dtype=np.int64),
            right=np.array(columns[4], dtype=np.int64),
            value=np.array(columns[5], dtype=np.float64),
        )

    def _grow(self, rows: np.ndarray, depth: int) -> int:
        idx = len(self.nodes)
        self.nodes.append(None)

        w, r = self.w[rows], self.residual[rows]
        weight = w.sum()
        value = float((w * r).sum() / weight)

        split = None

        if depth < self.cfg.max_depth and weight >= 2 * self.cfg.min_leaf_weight and len(rows) > 1:
            split = self._best_split(rows)

        if split is None:
            self.nodes[idx] = (LEAF, 0.0, False, LEAF, LEAF, value)
            return idx

        feature, threshold, missing_left = split
        values = self.x[rows, feature]
        go_left = np.where(np.isnan(values), missing_left, values <= threshold)

        left = self._grow(rows[go_left], depth + 1)
        right = self._grow(rows[~go_left], depth + 1)

        self.nodes[idx] = (feature, threshold, missing_left, left, right, value)

        return idx

    def _best_split(self, rows: np.ndarray) -> Optional[Tuple[int, float, bool]]:
        w, r = self.w[rows], self.residual[rows]
        total_w = w.sum()
        total_s = (w * r).sum()
        parent = total_s ** 2 / total_w

        if (w * r * r).sum() - parent <= 1e-12 * (w * r * r).sum():
            # Residuals are constant within the node.
            return None

        min_leaf = max(self.cfg.min_leaf_weight, 0.0)
        best_gain, best = 0.0, None

        for feature in range(self.x.shape[1]):
            values = self.x[rows, feature]
            missing = np.isnan(values)
            present = ~missing

            if present.sum() < 2:
                continue

            order = np.argsort(values[present], kind='stable')
            sorted_values = values[present][order]
            sorted_w = w[present][order]
            sorted_s = (w * r)[present][order]

            # Candidate cut after position k where the next value differs.
            cut = np.nonzero(sorted_values[:-1] < sorted_values[1:])[0]

            if not len(cut):
                continue

            cum_w, cum_s = np.cumsum(sorted_w), np.cumsum(sorted_s)
            present_w, present_s = cum_w[-1], cum_s[-1]
            missing_w, missing_s = w[missing].sum(), (w * r)[missing].sum()

            left_w, left_s = cum_w[cut], cum_s[cut]
            right_w, right_s = present_w - left_w, present_s - left_s

            options = [
                (left_w + missing_w, left_s + missing_s, right_w, right_s),  # missing go left
                (left_w, left_s, right_w + missing_w, right_s + missing_s),  # missing go right
            ]

            gains = []

            for lw, ls, rw, rs in options:
                valid = (lw >= min_leaf) & (rw >= min_leaf) & (lw > 0) & (rw > 0)

                with np.errstate(divide='ignore', invalid='ignore'):
                    gain = ls ** 2 / lw + rs ** 2 / rw - parent

                gains.append(np.where(valid, gain, -np.inf))

            if missing_w > 0:
                # Interleave options per cut: missing-left first.
                candidates = np.stack(gains, axis=1).reshape(-1)
                pos = int(np.argmax(candidates))
                gain = candidates[pos]
                k, missing_left = cut[pos // 2], pos % 2 == 0

            else:
                pos = int(np.argmax(gains[0]))
                gain = gains[0][pos]
                k = cut[pos]
                # Unseen missing values follow the heavier child.
                missing_left = bool(left_w[pos] >= right_w[pos])

            if gain > best_gain:
                low, high = sorted_values[k], sorted_values[k + 1]
                threshold = (low + high) / 2

                if not low <= threshold < high:
                    threshold = low

                best_gain, best = gain, (feature, float(threshold), bool(missing_left))

        return best


class GbrtRpcModel(RpcModelBase):
    """Gradient boosted regression trees minimizing clicks-weighted squared error."""

    alias = 'gbrt'
    title = 'GBRT'

    def __init__(self, cfg: GbrtConfig = None, use_context: bool = True):
        super().__init__(use_context=use_context)
        self.cfg = cfg or GbrtConfig()
        self.base_score = 0.0
        self.learning_rate = self.cfg.learning_rate
        self.trees: List[RegressionTree] = []

    @classmethod
    def from_config(cls, config: 'RunConfig') -> 'GbrtRpcModel':
        return cls(cfg=config.gbrt)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def _fit(self, x: np.ndarray, y: np.ndarray, w: np.ndarray, val: List[GroupSample]):
        cfg = self.cfg
        rng = np.random.default_rng(cfg.seed)

        self.base_score = weighted_mean(y, w)
        self.learning_rate = cfg.learning_rate
        self.trees = []

        n = len(y)
        prediction = np.full(n, self.base_score)

        for _ in range(cfg.n_trees):
            residual = y - prediction

            if cfg.subsample < 1.0:
                size = max(1, int(round(n * cfg.subsample)))
                rows = np.sort(rng.choice(n, size=size, replace=False))
            else:
                rows = np.arange(n)

            tree = _TreeBuilder(x, residual, w, cfg).build(rows)
            self.trees.append(tree)

            prediction = prediction + self.learning_rate * tree.apply(x)

        if val:
            select_tree_count(self, val)

    def staged_predict(self, x: np.ndarray) -> np.ndarray:
        """Returns predictions after 0, 1, ... n_trees trees (rows are stages)."""
        stages = np.empty((self.n_trees + 1, len(x)))
        prediction = np.full(len(x), self.base_score)
        stages[0] = prediction

        for idx, tree in enumerate(self.trees, 1):
            prediction = prediction + self.learning_rate * tree.apply(x)
            stages[idx] = prediction

        return stages

    def _predict_matrix(self, x: np.ndarray) -> np.ndarray:
        prediction = np.full(len(x), self.base_score)

        for tree in self.trees:
            prediction = prediction + self.learning_rate * tree.apply(x)

        return prediction

    def _dump_body(self) -> List[str]:
        lines = [
            '\t'.join(['base_score'] + format_floats([self.base_score])),
            '\t'.join(['learning_rate'] + format_floats([self.learning_rate])),
            f'trees\t{self.n_trees}',
        ]

        for tree in self.trees:
            lines.append(f'tree\t{tree.n_nodes}')

            for idx in range(tree.n_nodes):
                lines.append('\t'.join([
                    'node',
                    str(int(tree.feature[idx])),
                    repr(float(tree.threshold[idx])),
                    '1' if tree.missing_left[idx] else '0',
                    str(int(tree.left[idx])),
                    str(int(tree.right[idx])),
                    repr(float(tree.value[idx])),
                ]))

        return lines

    def _load_body(self, lines: List[List[str]]):
        self.base_score = float(expect(lines[0], 'base_score', 1)[0])
        self.learning_rate = float(expect(lines[1], 'learning_rate', 1)[0])
        n_trees = int(expect(lines[2], 'trees', 1)[0])

        n_features = len(self.feature_names)
        pos = 3
        self.trees = []

        for _ in range(n_trees):
            n_nodes = int(expect(lines[pos], 'tree', 1)[0])
            nodes = [expect(line, 'node', 6) for line in lines[pos + 1:pos + 1 + n_nodes]]

            if len(nodes) != n_nodes:
                raise CheckpointError('tree is truncated')

            pos += 1 + n_nodes

            tree = RegressionTree(
                feature=np.array([int(node[0]) for node in nodes], dtype=np.int64),
                threshold=np.array([float(node[1]) for node in nodes], dtype=np.float64),
                missing_left=np.array([node[2] == '1' for node in nodes], dtype=bool),
                left=np.array([int(node[3]) for node in nodes], dtype=np.int64),
                right=np.array([int(node[4]) for node in nodes], dtype=np.int64),
                value=np.array([float(node[5]) for node in nodes], dtype=np.float64),
            )

            internal = tree.feature != LEAF

            if np.any(tree.feature[internal] >= n_features) or np.any(tree.left[internal] >= n_nodes) \
                    or np.any(tree.right[internal] >= n_nodes):
                raise CheckpointError('tree references unknown features or nodes')

            self.trees.append(tree)

        if pos != len(lines):
            raise CheckpointError('unexpected trailing lines')


def select_tree_count(model: GbrtRpcModel, val: Sequence[GroupSample]) -> int:
    """Truncates the ensemble at the tree count minimizing validation WMSE.

    Returns the kept number of trees.

    :param model:
    :param val: validation samples with responses

    """
    val = canonical_order(with_response(val))

    if not val:
        return model.n_trees

    stages = model.staged_predict(model.matrix(val))
    y = [sample.rpc for sample in val]
    w = [sample.clicks_weight for sample in val]

    errors = [score_arrays(stage, y, w)['wmse'] for stage in stages]
    best = int(np.argmin(errors))

    model.trees = model.trees[:best]
    LOGGER.debug('Kept %s trees out of %s by validation WMSE', best, len(stages) - 1)

    return best


def fit_gbrt(samples: Sequence[GroupSample], cfg: GbrtConfig = None) -> GbrtRpcModel:
    """Fits a clicks-weighted gradient boosted tree ensemble.

    :param samples: training samples
    :param cfg:

    """
    return GbrtRpcModel(cfg=cfg).fit(samples)
