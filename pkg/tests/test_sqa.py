import numpy as np
import pytest

from sqaguide import autodiff as ad
from sqaguide.checkpoint import CheckpointError
from sqaguide.metrics import default_registry
from sqaguide.signal import Waveform
from sqaguide.sqa import (DESK_METRICS, SqaConfig, SqaModel, SqaTrainConfig, apply_range_activation, evaluate_sqa,
                          sqa_forward, train_sqa)

SMALL = dict(widths=(32,), hidden_dim=16)


@pytest.fixture(scope="module")
def toy(desk):
    """200 labeled training variants plus the held-out variants, with cached features."""
    model = SqaModel(SqaConfig(**SMALL))
    train = desk.corpus.items("train")[:200]
    val = desk.corpus.items("val") + desk.corpus.items("test")
    return (train, [model.features(w) for w, _ in train], val, [model.features(w) for w, _ in val])


def test_config_and_model_validation():
    with pytest.raises(ValueError):
        SqaConfig(hidden_dim=4)
    with pytest.raises(ValueError):
        SqaConfig(metrics=())
    with pytest.raises(ValueError):
        SqaModel(SqaConfig(metrics=("NOPE",)))
    m = SqaModel()
    assert m.metrics == list(DESK_METRICS)
    assert m.params["head.W"].shape == (64, len(DESK_METRICS))


def test_activation_examples():
    reg = default_registry()
    assert apply_range_activation(reg["CER"], -0.5) == 0.0
    assert apply_range_activation(reg["MOS"], 0.0) == pytest.approx(3.0)
    assert apply_range_activation(reg["SDR"], -7.3) == -7.3
    assert apply_range_activation(reg["SpeakerSimilarity"], 0.0) == 0.0
    assert apply_range_activation(reg["ESTOI"], 1e6) <= 1.0
    tape = ad.Tape()
    node = apply_range_activation(reg["ESTOI"], tape.const(0.0))
    assert float(node.value) == pytest.approx(0.5)


def test_scores_stay_in_range_over_random_draws(rng):
    reg = default_registry()
    z = rng.standard_normal(10_000) * np.exp(rng.uniform(-3, 6, 10_000))
    for spec in reg:
        out = np.asarray(apply_range_activation(spec, z))
        assert all(spec.contains(v) or (spec.lo_open and v == spec.lo) for v in out), spec.name
    # whole model on random parameters and inputs
    for seed in range(20):
        m = SqaModel(SqaConfig(seed=seed, **SMALL))
        for k in m.params:
            m.params[k] = m.params[k] * 5.0
        w = Waveform(np.random.default_rng(seed).standard_normal(4000) * 10 ** rng.uniform(-4, 1))
        out = m.predict(w)
        for name in m.metrics:
            spec = reg[name]
            v = out.scores[name]
            assert spec.lo <= v <= spec.hi


def test_short_input_rejected():
    with pytest.raises(ValueError):
        SqaModel().predict(Waveform(np.ones(3000)))
    with pytest.raises(ValueError):
        SqaModel().predict(Waveform(np.ones(8000), 8000))


def test_forward_is_deterministic_and_tape_matches_numpy(rng):
    m = SqaModel(SqaConfig(**SMALL))
    w = Waveform(rng.standard_normal(4000))
    a, b = m.predict(w), m.predict(w)
    assert a.scores.values == b.scores.values
    taped = sqa_forward(m, w, tape=ad.Tape())
    for n in m.metrics:
        assert taped.scores[n] == pytest.approx(a.scores[n], abs=1e-9)
    assert np.allclose(taped.hidden, a.hidden, atol=1e-12)


def test_frame_permutation_invariance_of_pooling(rng):
    m = SqaModel(SqaConfig(**SMALL))
    feats = m.features(Waveform(rng.standard_normal(6000)))
    perm = rng.permutation(feats.shape[0])
    pre_a, _, h_a = m.forward_features(feats)
    pre_b, _, h_b = m.forward_features(feats[perm])
    assert np.allclose(h_a, h_b, atol=1e-12) and np.allclose(pre_a, pre_b, atol=1e-12)


def test_input_gradient_through_frozen_proxy(rng):
    m = SqaModel(SqaConfig(**SMALL))
    x0 = rng.standard_normal(3200) * 0.1

    def f(tape, x):
        out = sqa_forward(m, x)
        return sum((out.score_nodes[n] * (1.0 / m.registry[n].scale) for n in m.metrics), tape.const(0.0))

    assert ad.grad_check(f, x0) < 1e-4


def test_training_loss_decreases(toy):
    train, feats, _, _ = toy
    m = SqaModel(SqaConfig(**SMALL))
    rep = train_sqa(m, train, cfg=SqaTrainConfig(epochs=30, seed=0), features=feats)
    assert len(rep.history) == 30
    assert rep.history[-1] < rep.history[0]
    assert rep.steps > 0


def test_frozen_encoder_is_worse(toy):
    train, feats, val, vfeats = toy
    full = SqaModel(SqaConfig(**SMALL))
    train_sqa(full, train, cfg=SqaTrainConfig(epochs=30), features=feats)
    frozen = SqaModel(SqaConfig(**SMALL))
    train_sqa(frozen, train, cfg=SqaTrainConfig(epochs=30, freeze_encoder=True), features=feats)
    lcc_full, _ = evaluate_sqa(full, val, vfeats)
    lcc_frozen, _ = evaluate_sqa(frozen, val, vfeats)
    assert lcc_full["SDR"] > lcc_frozen["SDR"]
    assert np.nanmean(list(lcc_full.values())) > np.nanmean(list(lcc_frozen.values()))


def test_training_errors():
    m = SqaModel(SqaConfig(**SMALL))
    with pytest.raises(ValueError):
        train_sqa(m, [])


def test_checkpoint_roundtrip_and_digest(tmp_path, rng):
    m = SqaModel(SqaConfig(**SMALL))
    m.buffers["feat_mean"] = rng.standard_normal(m.config.n_features)
    path = tmp_path / "sqa.ckpt"
    m.save(path)
    back = SqaModel.load(path)
    assert back.config == m.config and back.registry == m.registry
    for k in m.params:
        assert np.array_equal(back.params[k], m.params[k])
    assert np.array_equal(back.buffers["feat_mean"], m.buffers["feat_mean"])
    m.save(tmp_path / "again.ckpt")
    assert (tmp_path / "again.ckpt").read_bytes() == path.read_bytes()
    raw = bytearray(path.read_bytes())
    i = raw.find(b'"registry_digest":"') + len(b'"registry_digest":"')
    raw[i:i + 1] = b"0" if raw[i:i + 1] != b"0" else b"1"
    (tmp_path / "bad.ckpt").write_bytes(bytes(raw))
    with pytest.raises(CheckpointError):
        SqaModel.load(tmp_path / "bad.ckpt")
    (tmp_path / "trunc.ckpt").write_bytes(path.read_bytes()[:-16])
    with pytest.raises(CheckpointError):
        SqaModel.load(tmp_path / "trunc.ckpt")
