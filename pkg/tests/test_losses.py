import numpy as np
import pytest

from sqaguide import autodiff as ad
from sqaguide import datagen
from sqaguide.losses import (LogMagRef, LossWeights, MultiResConfig, loss_feat, loss_real, loss_reg, loss_score,
                             loss_simu, loss_spec)
from sqaguide.metrics import default_registry
from sqaguide.signal import Waveform
from sqaguide.sqa import SqaConfig, SqaModel, sqa_forward

# hand-copied (alpha, scale) of the desk heads, kept independent of the registry code
DESK_SIGNS = {"LSD": (1, 8.0), "SDR": (-1, 8.0), "CER": (1, 0.25), "ESTOI": (-1, 0.2), "PhonemeSimilarity": (-1, 0.2),
              "SpeakerSimilarity": (-1, 0.35), "MCD": (1, 25.0), "RankingScore": (1, 0.2)}


@pytest.fixture(scope="module")
def toy():
    proxy = SqaModel(SqaConfig(widths=(32,), hidden_dim=16, seed=3))
    pair = datagen.simulate_pairs(1, 77, 0.3)[0]
    return proxy, pair.noisy.samples, pair.clean.samples


def value(fn, x, *args, **kw):
    t = ad.Tape()
    return float(fn(t.param(x), *args, **kw).value)


def test_config_validation():
    with pytest.raises(ValueError):
        MultiResConfig(())
    with pytest.raises(ValueError):
        MultiResConfig(((512, 200),))
    with pytest.raises(ValueError):
        LossWeights(0, 0, 0, 0)
    with pytest.raises(ValueError):
        LossWeights(-1.0)
    with pytest.raises(ValueError):
        LossWeights(1.0, metric_weights={"SDR": -1.0})


def test_spectral_identities(rng):
    x = rng.standard_normal(4000)
    assert value(loss_spec, x, x) == pytest.approx(0.0, abs=1e-9)
    assert value(loss_spec, x, LogMagRef(x)) == pytest.approx(0.0, abs=1e-9)
    # uniform magnitude ratios give the log ratio per resolution
    assert value(loss_spec, np.e * x, x) == pytest.approx(3.0, abs=1e-4)
    assert value(loss_reg, 2 * x, x) == pytest.approx(3 * np.log(2), abs=1e-4)
    one = MultiResConfig(((512, 128),))
    assert value(loss_spec, np.e * x, x, one) == pytest.approx(1.0, abs=1e-4)
    with pytest.raises(ValueError):
        value(loss_spec, x, x[:-1])


def test_loss_reg_grows_along_interpolation_path(rng):
    x0 = rng.standard_normal(4000)
    other = rng.standard_normal(4000)
    vals = [value(loss_reg, (1 - a) * x0 + a * other, x0) for a in np.linspace(0, 1, 11)]
    assert vals[0] == pytest.approx(0.0, abs=1e-9)
    assert np.all(np.diff(vals) > 0)


def test_spectral_gradient(rng):
    x = rng.standard_normal(3200)
    ref = rng.standard_normal(3200)
    assert ad.grad_check(lambda t, v: loss_spec(v, ref), x) < 1e-4


def test_loss_score_examples():
    reg = default_registry()
    w = LossWeights(0.0, 1.0, standardize=False)
    assert loss_score({"ESTOI": 0.8, "CER": 0.3}, reg, w) == pytest.approx(-0.5)
    zero = LossWeights(0.0, 1.0, metric_weights={"ESTOI": 0.0, "CER": 0.0}, standardize=False)
    assert loss_score({"ESTOI": 0.8, "CER": 0.3}, reg, zero) == 0.0
    with pytest.raises(KeyError):
        loss_score({"ESTOI": 0.8}, reg, LossWeights(0.0, 1.0, metric_weights={"CER": 1.0}))


def test_loss_score_raw_and_standardized_modes(toy):
    proxy, x, _ = toy
    scores = {n: proxy.predict(Waveform(x)).scores[n] for n in proxy.metrics}
    raw = loss_score(scores, proxy.registry, LossWeights(0, 1, standardize=False))
    std = loss_score(scores, proxy.registry, LossWeights(0, 1))
    assert raw == pytest.approx(sum(a * scores[n] for n, (a, _) in DESK_SIGNS.items()), abs=1e-12)
    assert std == pytest.approx(sum(a * scores[n] / s for n, (a, s) in DESK_SIGNS.items()), abs=1e-12)
    assert raw == pytest.approx(-0.4343620439249001, abs=1e-9)
    assert std == pytest.approx(-2.485219015120819, abs=1e-9)


def test_score_gradient_sign_contract():
    reg = default_registry()
    weights = LossWeights(0.0, 1.0, metric_weights={"SDR": 2.0, "MCD": 0.5}, standardize=False)
    tape = ad.Tape()
    leaves = {n: tape.param(0.3) for n in DESK_SIGNS}
    grads = tape.backward(loss_score(leaves, reg, weights))
    for n, (alpha, _) in DESK_SIGNS.items():
        w = weights.metric_weights.get(n, 1.0)
        assert float(grads.of(leaves[n])) == w * alpha


def test_loss_feat():
    tape = ad.Tape()
    h = tape.param(np.array([1.0, 2.0]))
    assert float(loss_feat(h, np.zeros(2)).value) == 3.0
    assert float(loss_feat(h, np.array([1.0, 2.0])).value) == 0.0
    with pytest.raises(ValueError):
        loss_feat(h, np.zeros(3))


def test_feat_gradient_through_both_branches(toy):
    proxy, x, c = toy

    def f(t, a, b):
        return loss_feat(sqa_forward(proxy, a).hidden_node, sqa_forward(proxy, b).hidden_node)

    assert ad.grad_check(f, [x, c]) < 1e-4


def test_simu_reductions_and_frozen_value(toy):
    proxy, x, c = toy
    assert value(loss_simu, x, c, proxy, LossWeights(1, 0, 0)) == value(loss_spec, x, c)
    assert value(loss_simu, c, c, proxy, LossWeights(0, 0, 1)) == 0.0
    assert value(loss_simu, x, c, proxy, LossWeights(1, 1, 1)) == pytest.approx(10.986744599461275, abs=1e-9)


def test_real_reductions_and_frozen_value(toy):
    proxy, x, c = toy
    scores = {n: proxy.predict(Waveform(x)).scores[n] for n in proxy.metrics}
    only_score = loss_score(scores, proxy.registry, LossWeights(0, 1))
    assert value(loss_real, x, c, proxy, LossWeights(0, 1, 0, 0)) == pytest.approx(only_score, abs=1e-9)
    # at the initial model the regularizer vanishes
    assert value(loss_real, x, x, proxy, LossWeights(0, 1, 0, 1)) == pytest.approx(only_score, abs=1e-9)
    assert value(loss_real, x, 0.5 * c, proxy, LossWeights(0, 1, 0, 1)) == pytest.approx(7.6882048731349215,
                                                                                           abs=1e-9)


@pytest.mark.parametrize("lams", [(1, 0, 0), (1, 1, 0), (1, 0, 1), (1, 1, 1), (0, 1, 0), (0, 0, 1)])
def test_simu_linear_in_lambda(toy, lams):
    proxy, x, c = toy
    a = value(loss_simu, x, c, proxy, LossWeights(*lams))
    b = value(loss_simu, x, c, proxy, LossWeights(*lams).scaled(2.0))
    assert b == pytest.approx(2 * a, rel=1e-10, abs=1e-10)


def test_real_linear_in_lambda(toy):
    proxy, x, c = toy
    a = value(loss_real, x, c, proxy, LossWeights(0, 1, 0, 1))
    b = value(loss_real, x, c, proxy, LossWeights(0, 2, 0, 2))
    assert b == pytest.approx(2 * a, rel=1e-10)


def test_losses_non_negative(rng):
    for _ in range(5):
        x, y = rng.standard_normal((2, 2000))
        assert value(loss_spec, x, y) >= 0 and value(loss_reg, x, y) >= 0
