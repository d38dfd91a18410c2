import numpy as np
import pytest

from stochdim.paths import PiecewisePath, TimeGrid
from stochdim.strategies import StepStrategy


def make_w() -> PiecewisePath:
    """Grid {0,1,2,3}; dimension 2 on (0,2], a new asset enters at 2."""
    grid = TimeGrid(np.array([0.0, 1.0, 2.0, 3.0]))
    return PiecewisePath.from_arrays(
        grid,
        [10.0, 20.0],
        [0, 2],
        [[10.0, 20.0], [12.0, 21.0, 5.0]],
        [[[11.0, 19.0], [12.0, 21.0]], [[13.0, 20.0, 6.0]]],
    )


@pytest.fixture
def w_path():
    return make_w()


@pytest.fixture
def w_strategy():
    return StepStrategy([(0.0, [1.0, 1.0]), (2.0, [1.0, 1.0, 2.0])])


def continuous_path(values, times=None) -> PiecewisePath:
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    t = np.arange(len(v), dtype=float) if times is None else np.asarray(times, dtype=float)
    return PiecewisePath.from_arrays(TimeGrid(t), v[0], [0], [v[0]], [v[1:]])
