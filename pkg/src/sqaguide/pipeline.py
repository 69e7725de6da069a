"""End-to-end desk setup shared by the ``demo`` command and the acceptance tests.

One call builds a labeled corpus, trains the proxy on it, pretrains the
enhancer on simulated pairs and draws the fine-tuning sets. Every stage
derives its seed from ``DeskConfig.seed``.
"""
import time
from dataclasses import asdict, dataclass, field

from . import datagen
from .enhancer import SeConfig, SeModel, SeTrainConfig, pretrain_se
from .sqa import SqaConfig, SqaModel, SqaTrainConfig, train_sqa


@dataclass(frozen=True)
class DeskConfig:
    seed: int = 0
    n_sources: int = 125
    variants: int = 4
    duration: float = 1.0
    sqa_epochs: int = 60
    sqa_lr: float = 3e-3
    se_pairs: int = 128
    se_steps: int = 600
    se_lr: float = 3e-3
    ft_train: int = 32
    ft_val: int = 12

    def to_json(self):
        return asdict(self)


@dataclass(eq=False)
class DeskArtifacts:
    config: DeskConfig
    corpus: object
    proxy: SqaModel
    sqa_report: object
    se0: SeModel
    se_history: list
    train_pairs: list
    val_pairs: list
    seconds: dict = field(default_factory=dict)  # wall time per stage


def desk_pairs(cfg, role):
    """Fine-tuning pairs; 'train' and 'val' use disjoint seeds."""
    n, offset = (cfg.ft_train, 2) if role == "train" else (cfg.ft_val, 3)
    return datagen.simulate_pairs(n, cfg.seed * 1000 + offset, cfg.duration)


def prepare_desk(cfg=None, log=None):
    cfg = cfg or DeskConfig()
    say = log or (lambda msg: None)
    start = time.perf_counter()
    say(f"generating corpus: {cfg.n_sources} sources x {cfg.variants} variants")
    corpus = datagen.generate_corpus(cfg.n_sources, cfg.variants, cfg.seed, cfg.duration)
    t0 = time.perf_counter()
    say("training proxy")
    proxy = SqaModel(SqaConfig(seed=cfg.seed))
    report = train_sqa(proxy, corpus.items("train"), corpus.items("val") + corpus.items("test"),
                       SqaTrainConfig(epochs=cfg.sqa_epochs, lr=cfg.sqa_lr, seed=cfg.seed))
    t1 = time.perf_counter()
    say("pretraining enhancer")
    se0 = SeModel(SeConfig(seed=cfg.seed))
    pairs = datagen.simulate_pairs(cfg.se_pairs, cfg.seed * 1000 + 1, cfg.duration)
    history = pretrain_se(se0, pairs, SeTrainConfig(steps=cfg.se_steps, lr=cfg.se_lr, seed=cfg.seed))
    seconds = {"corpus": t0 - start, "sqa": t1 - t0, "se": time.perf_counter() - t1}
    return DeskArtifacts(cfg, corpus, proxy, report, se0, history,
                         desk_pairs(cfg, "train"), desk_pairs(cfg, "val"), seconds)
