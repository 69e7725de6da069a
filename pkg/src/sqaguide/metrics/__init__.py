"""Metric registry, deterministic oracles, ranking score and correlation."""
from .oracles import (cer, edit_distance, estoi, lsd, mcd, mcd_from_cepstra, mel_cepstra,
                      phoneme_similarity, sdr, si_snr, speaker_similarity_toy)
from .ranking import RankGroup, average_ranks, pearson, rank_groups, rank_score, spearman
from .registry import (RANKING_SCORE, MetricRegistry, MetricSpec, MetricVector,
                       default_registry)

__all__ = [
    "MetricRegistry", "MetricSpec", "MetricVector", "RankGroup", "RANKING_SCORE", "average_ranks",
    "cer", "default_registry", "edit_distance", "estoi", "lsd", "mcd", "mcd_from_cepstra",
    "mel_cepstra", "pearson", "phoneme_similarity", "rank_groups", "rank_score", "sdr", "si_snr",
    "spearman", "speaker_similarity_toy",
]
