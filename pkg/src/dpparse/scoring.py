"""Word probabilities and arc scores for the segmentation lattice.

A candidate's probability interpolates its soft count in the current
token lexicon with a base distribution over all candidate segments,
weighted by the Dirichlet-process concentration.  Arc scores add a
length-dependent term to the log probability; by default long tokens
are penalized (``penalty_sign=-1``), matching the "favors short tokens"
behaviour.  ``penalty_sign=+1`` gives the additive variant where the
term acts as a length bonus.

All arithmetic is 64-bit regardless of 32-bit input storage: path scores
sum many logs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DPParams:
    """Dirichlet-process weights plus the running lexicon masses."""

    alpha0: float = 100.0
    gamma: float = 1.8
    delta: float = 4.0
    epsilon_log: float = 1e-10
    penalty_sign: float = -1.0
    n_lexicon: float = 0.0
    n_base: int = 1

    def __post_init__(self):
        if not self.alpha0 > 0:
            raise ValueError("alpha0 must be > 0")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if not self.delta > 0:
            raise ValueError("delta must be > 0")
        if not self.epsilon_log > 0:
            raise ValueError("epsilon_log must be > 0")
        if self.penalty_sign not in (-1.0, 1.0):
            raise ValueError("penalty_sign must be -1 or +1")
        if self.n_lexicon < 0:
            raise ValueError("n_lexicon must be >= 0")
        if self.n_base < 1:
            raise ValueError("n_base must be >= 1")


def base_probability(base_freq: float, n_base: int) -> float:
    """Candidate-pool frequency normalized to a prior probability."""
    if n_base == 0:
        raise ValueError("empty base pool")
    return base_freq / n_base


def word_probability(lexicon_freq: float, base_prob: float, params: DPParams) -> float:
    """Dirichlet-process mix of observed token frequency and the prior."""
    denom = params.n_lexicon + params.alpha0
    return lexicon_freq / denom + params.alpha0 * base_prob / denom


def length_penalty(len_blocks: int, gamma: float, delta: float) -> float:
    """((len - 1) / delta) ** gamma, with 0 at len 1 for every gamma."""
    if len_blocks < 1:
        raise ValueError("len_blocks must be >= 1")
    base = (len_blocks - 1) / delta
    if base == 0.0:
        return 0.0
    return base**gamma


def arc_score(word_prob: float, len_blocks: int, params: DPParams) -> float:
    """Log word probability (guarded) plus the signed length term."""
    if word_prob < 0:
        raise ValueError("word_prob must be >= 0")
    return math.log(word_prob + params.epsilon_log) + params.penalty_sign * (
        length_penalty(len_blocks, params.gamma, params.delta)
    )


def arc_scores_batch(
    word_probs: np.ndarray, lengths: np.ndarray, params: DPParams
) -> np.ndarray:
    """Vectorized `arc_score` over candidate arrays."""
    lengths = np.asarray(lengths, dtype=np.float64)
    base = (lengths - 1.0) / params.delta
    q = np.where(base == 0.0, 0.0, base**params.gamma)
    return np.log(np.asarray(word_probs, dtype=np.float64) + params.epsilon_log) + (
        params.penalty_sign * q
    )


def sentence_log_probability(word_probs) -> float:
    """Utterance log probability: the sum of segment log probabilities."""
    return float(sum(math.log(p) for p in word_probs))
