import logging
from typing import List, Sequence

import numpy as np

from .base import RpcModelBase, expect, format_floats, parse_floats
from ..exceptions import SingularSystemError, ValidationError
from ..samples import GroupSample, score
from ..settings import LINEAR_L2

if False:  # pragma: nocover
    from ..config import RunConfig  # noqa

LOGGER = logging.getLogger(__name__)

L2_GRID = (0.001, 0.01, 0.1, 1.0, 10.0, 100.0)
"""Ridge strengths tried on the validation split."""


class LinearRpcModel(RpcModelBase):
    """Clicks-weighted ridge regression with an unpenalized intercept.
    Missing values are imputed with training means.

    """
    alias = 'linear'
    title = 'LR'

    def __init__(self, l2: float = LINEAR_L2, use_context: bool = True):
        super().__init__(use_context=use_context)

        if l2 < 0:
            raise ValidationError('l2 must be non-negative')

        self.l2 = l2
        self.intercept = 0.0
        self.coef = np.zeros(0)
        self.means = np.zeros(0)

    @classmethod
    def from_config(cls, config: 'RunConfig') -> 'LinearRpcModel':
        return cls(l2=config.linear.l2)

    def _fit(self, x: np.ndarray, y: np.ndarray, w: np.ndarray, val: List[GroupSample]):

        observed = ~np.isnan(x)
        counts = observed.sum(axis=0)
        sums = np.where(observed, x, 0.0).sum(axis=0)
        # Columns never observed impute to zero.
        self.means = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)

        x = self._impute(x)

        if not val:
            self.intercept, self.coef = solve_ridge(x, y, w, self.l2)
            return

        best = None

        for l2 in sorted(set(L2_GRID) | {self.l2}):
            try:
                self.intercept, self.coef = solve_ridge(x, y, w, l2)

            except SingularSystemError:
                continue

            wmse = score(self.predict(val), val)['wmse']

            if best is None or wmse < best[0]:
                best = (wmse, l2, self.intercept, self.coef)

        if best is None:
            raise SingularSystemError('no ridge strength gives a solvable system')

        configured = self.l2
        _, self.l2, self.intercept, self.coef = best

        if self.l2 != configured:
            LOGGER.info('Validation picked l2 %s instead of configured %s', self.l2, configured)

    def _impute(self, x: np.ndarray) -> np.ndarray:
        return np.where(np.isnan(x), self.means[None, :], x)

    def _predict_matrix(self, x: np.ndarray) -> np.ndarray:
        return self.intercept + self._impute(x) @ self.coef

    def _dump_body(self) -> List[str]:
        return [
            '\t'.join(['l2'] + format_floats([self.l2])),
            '\t'.join(['intercept'] + format_floats([self.intercept])),
            '\t'.join(['coef'] + format_floats(self.coef)),
            '\t'.join(['means'] + format_floats(self.means)),
        ]

    def _load_body(self, lines: List[List[str]]):
        size = len(self.feature_names)
        self.l2 = float(expect(lines[0], 'l2', 1)[0])
        self.intercept = float(expect(lines[1], 'intercept', 1)[0])
        self.coef = parse_floats(expect(lines[2], 'coef', size))
        self.means = parse_floats(expect(lines[3], 'means', size))


def solve_ridge(x: np.ndarray, y: np.ndarray, w: np.ndarray, l2: float):
    """Solves weighted ridge normal equations.

    Returns (intercept, coefficients).

    :param x: imputed design matrix
    :param y: responses
    :param w: sample weights
    :param l2: penalty on coefficients (intercept is not penalized)

    :raises SingularSystemError:

    """
    design = np.hstack([np.ones((len(x), 1)), x])
    gram = design.T @ (design * w[:, None])
    penalty = np.eye(design.shape[1]) * l2
    penalty[0, 0] = 0.0
    system = gram + penalty

    if l2 == 0 and np.linalg.matrix_rank(system) < system.shape[0]:
        raise SingularSystemError('weighted least squares system is singular, use l2 > 0')

    try:
        solution = np.linalg.solve(system, design.T @ (w * y))

    except np.linalg.LinAlgError:
        raise SingularSystemError('ridge system is singular, use a larger l2')

    return float(solution[0]), solution[1:]


def fit_linear(samples: Sequence[GroupSample], l2: float = LINEAR_L2) -> LinearRpcModel:
    """Fits clicks-weighted ridge regression.

    :param samples: training samples
    :param l2: ridge strength

    """
    return LinearRpcModel(l2=l2).fit(samples)
