import functools

import pytest

from frem.data import apply_scaling, make_biased_classification, minmax_scale, split
from frem.trainer import TrainConfig, evaluate, train_frem

BIASED_EPOCHS = 100


@functools.lru_cache(maxsize=None)
def _biased_run(lam: float, fairness: str, seed: int):
    data = make_biased_classification(seed=seed)
    train, test = split(data, (0.8, 0.2), seed)
    train, scaling = minmax_scale(train)
    test = apply_scaling(test, scaling)
    config = TrainConfig(lam=lam, epochs=BIASED_EPOCHS, batch_size=200, gamma=0.1,
                         fairness=fairness, seed=seed)
    net, history = train_frem(train, config)
    return evaluate(net, test, config), history


@pytest.fixture(scope="session")
def biased_run():
    """Train-and-evaluate on the synthetic biased task, cached across modules.

    A lambda = 0 run does not depend on the fairness notion, so EO requests
    at lambda = 0 reuse the DP run.
    """
    def run(lam, fairness="dp", seed=0):
        return _biased_run(float(lam), "dp" if lam == 0 else fairness, seed)

    return run
