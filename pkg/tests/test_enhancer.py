import numpy as np
import pytest

from sqaguide import autodiff as ad
from sqaguide import datagen
from sqaguide.enhancer import SeConfig, SeModel, SeTrainConfig, enhance, pretrain_se, spectral_loss
from sqaguide.losses import LossWeights, loss_simu
from sqaguide.metrics import sdr
from sqaguide.signal import Waveform
from sqaguide.sqa import SqaConfig, SqaModel


def forced(value):
    m = SeModel(SeConfig(hidden=(16,)))
    last = f"l{m.n_layers - 1}"
    m.params[last + ".W"][:] = 0.0
    m.params[last + ".b"][:] = value
    return m


def noisy_sine(seed=0, n=8000):
    rng = np.random.default_rng(seed)
    t = np.arange(n) / 16000
    return Waveform(0.5 * np.sin(2 * np.pi * 440 * t) + 0.1 * rng.standard_normal(n))


def test_config_validation():
    with pytest.raises(ValueError):
        SeConfig(context=-1)
    with pytest.raises(ValueError):
        SeConfig(n_fft=500)
    with pytest.raises(ValueError):
        SeModel(SeConfig(hop=200))
    with pytest.raises(ValueError):
        enhance(SeModel(), Waveform(np.ones(100)))
    with pytest.raises(ValueError):
        enhance(SeModel(), Waveform(np.ones(4000), 8000))


def test_all_ones_mask_is_identity():
    x = noisy_sine()
    out = enhance(forced(60.0), x)
    assert len(out.enhanced) == len(x)
    assert np.max(np.abs(out.enhanced.samples - x.samples)) < 1e-6


def test_all_zeros_mask_silences():
    out = enhance(forced(-60.0), noisy_sine())
    assert np.max(np.abs(out.enhanced.samples)) < 1e-12


def test_random_init_does_not_add_energy():
    x = noisy_sine(1)
    m = SeModel(SeConfig(seed=4))
    out = enhance(m, x)
    assert np.all((out.mask > 0) & (out.mask < 1))
    re, im = m.spectrum(x.samples)
    power = re * re + im * im
    assert np.all(out.mask ** 2 * power <= power)
    assert np.sum(out.mask ** 2 * power) < np.sum(power)


def test_taped_and_plain_paths_agree():
    x = noisy_sine(2)
    m = SeModel(SeConfig(hidden=(16,), seed=1))
    plain = enhance(m, x)
    taped = enhance(m, x, ad.Tape())
    assert np.allclose(plain.enhanced.samples, taped.enhanced.samples, atol=1e-12)
    assert np.allclose(plain.mask, taped.mask, atol=1e-12)
    assert np.array_equal(enhance(m, x).enhanced.samples, plain.enhanced.samples)


def test_parameter_gradients_of_simulated_objective():
    pair = datagen.simulate_pairs(1, 5, 0.2)[0]
    se = SeModel(SeConfig(hidden=(8,), seed=2))
    proxy = SqaModel(SqaConfig(widths=(16,), hidden_dim=8))
    names = sorted(se.params)

    def f(tape, *vals):
        leaves = dict(zip(names, vals))
        y = enhance(se, pair.noisy, tape, leaves).node
        return loss_simu(y, pair.clean.samples, proxy, LossWeights(1, 1, 1))

    assert ad.grad_check(f, [se.params[k] for k in names]) < 1e-4


def test_checkpoint_roundtrip(tmp_path):
    m = SeModel(SeConfig(hidden=(16,), seed=3))
    m.buffers["feat_mean"] += 1.5
    m.save(tmp_path / "se.ckpt")
    back = SeModel.load(tmp_path / "se.ckpt")
    assert back.config == m.config and back.n_params == m.n_params
    x = noisy_sine()
    assert np.array_equal(enhance(back, x).enhanced.samples, enhance(m, x).enhanced.samples)


def test_pretraining_errors():
    with pytest.raises(ValueError):
        pretrain_se(SeModel(), [])


def test_identity_pretraining_converges():
    # clean == noisy: the best mask is all ones
    pairs = [datagen.Pair(c, c, None) for c in (datagen.synth_clean(i, 0.3) for i in range(8))]
    m = SeModel(SeConfig())
    pretrain_se(m, pairs, SeTrainConfig(steps=1200, batch_size=4, lr=5e-3))
    assert spectral_loss(m, pairs) < 0.05


def test_desk_pretraining_beats_untrained_and_noisy(desk):
    held_out = desk.val_pairs
    untrained = SeModel(SeConfig(seed=desk.config.seed))
    assert spectral_loss(desk.se0, held_out) < spectral_loss(untrained, held_out)
    noisy = np.mean([sdr(p.clean, p.noisy) for p in held_out])
    enhanced = np.mean([sdr(p.clean, enhance(desk.se0, p.noisy).enhanced) for p in held_out])
    assert enhanced >= noisy + 1.0
