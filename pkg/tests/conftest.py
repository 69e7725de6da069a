import functools
import os
import pickle
import time

import numpy as np
import pytest

from sqaguide import datagen
from sqaguide.losses import LossWeights
from sqaguide.pipeline import DeskConfig, prepare_desk
from sqaguide.training import FinetuneConfig, finetune_real, finetune_simulated


@pytest.fixture(scope="session")
def desk():
    """Corpus (125 sources x 4 variants), trained proxy and pretrained enhancer.

    Set SQAGUIDE_DESK_CACHE to a file path to reuse the artifacts across runs.
    """
    cache = os.environ.get("SQAGUIDE_DESK_CACHE")
    if cache and os.path.exists(cache):
        with open(cache, "rb") as fh:
            d = pickle.load(fh)
        if d.config == DeskConfig():
            return d
    d = prepare_desk(DeskConfig())
    if cache:
        with open(cache, "wb") as fh:
            pickle.dump(d, fh)
    return d


class FinetuneRuns:
    """Fine-tuning runs on the desk artifacts, each computed at most once."""

    def __init__(self, desk):
        self.desk = desk
        self.seconds = {}  # wall time per run

    @functools.lru_cache(maxsize=None)
    def simulated(self, lambdas):
        d = self.desk
        t0 = time.perf_counter()
        res = finetune_simulated(d.se0, d.proxy, d.train_pairs, LossWeights(*lambdas), FinetuneConfig(),
                                 d.val_pairs)
        self.seconds[("simu", lambdas)] = time.perf_counter() - t0
        return res

    @functools.lru_cache(maxsize=None)
    def real(self, score, reg):
        d = self.desk
        unpaired = [datagen.Pair(p.noisy, None, None) for p in d.train_pairs]
        t0 = time.perf_counter()
        res = finetune_real(d.se0, d.proxy, unpaired, LossWeights(0.0, score, 0.0, reg), FinetuneConfig(),
                            d.val_pairs)
        self.seconds[("real", score, reg)] = time.perf_counter() - t0
        return res

    @functools.cached_property
    def noisy_sdr(self):
        return float(np.mean([datagen.oracle_values(p.clean, p.noisy, p.transcript, metrics=("SDR",))["SDR"]
                              for p in self.desk.val_pairs]))


@pytest.fixture(scope="session")
def runs(desk):
    return FinetuneRuns(desk)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
