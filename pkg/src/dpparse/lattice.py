"""Segmentation lattice, N-best beam search, and softmax path sampling.

Nodes sit between blocks (0..n_blocks); each arc (i, j) is a candidate
token whose length respects the configured bounds.  A path is a chain of
arcs covering the whole utterance.  Work per utterance is
O(n_blocks * max_len * beam).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class ScoredLattice:
    """All admissible arcs of one utterance with their scores."""

    n_blocks: int
    min_len: int
    max_len: int
    scores: dict[tuple[int, int], float] = field(default_factory=dict)

    def arcs(self):
        return self.scores.items()

    @property
    def n_arcs(self) -> int:
        return len(self.scores)


@dataclass
class NBestList:
    """Complete paths with non-increasing total scores.

    Each path is the full boundary sequence (0, ..., n_blocks); its score
    is the sum of its arc scores.
    """

    paths: list[tuple[tuple[int, ...], float]]

    def __len__(self):
        return len(self.paths)

    def boundaries(self, i: int) -> tuple[int, ...]:
        return self.paths[i][0]

    def scores(self) -> np.ndarray:
        return np.array([s for _, s in self.paths], dtype=np.float64)


def build_lattice(
    n_blocks: int, score_fn, min_len: int = 1, max_len: int = 20
) -> ScoredLattice:
    """Score every admissible arc once via ``score_fn(start, end)``."""
    if not 1 <= min_len <= max_len:
        raise ValueError("need 1 <= min_len <= max_len")
    if n_blocks < min_len:
        raise ValueError(
            f"utterance shorter than minimum segment ({n_blocks} < {min_len})"
        )
    scores = {}
    for i in range(n_blocks):
        top = min(max_len, n_blocks - i)
        for length in range(min_len, top + 1):
            scores[(i, i + length)] = float(score_fn(i, i + length))
    return ScoredLattice(n_blocks, min_len, max_len, scores)


def _hyp_key(hyp):
    # Higher score first; ties prefer fewer segments, then the
    # lexicographically smallest boundary sequence.
    score, n_segs, bounds = hyp
    return (-score, n_segs, bounds)


def nbest(lattice: ScoredLattice, beam: int) -> NBestList:
    """True top-N complete paths whenever ``beam`` covers all paths.

    With smaller beams each returned path is still a valid complete path;
    results are deterministic under the documented tie-breaking.
    """
    if beam < 1:
        raise ValueError("beam must be >= 1")
    n = lattice.n_blocks
    scores = lattice.scores
    # hypothesis = (accumulated score, segment count, boundary tuple)
    beams: list[list] = [[] for _ in range(n + 1)]
    beams[0] = [(0.0, 0, (0,))]
    for j in range(1, n + 1):
        candidates = []
        for i in range(max(0, j - lattice.max_len), j - lattice.min_len + 1):
            arc = scores.get((i, j))
            if arc is None or not beams[i]:
                continue
            for score, n_segs, bounds in beams[i]:
                candidates.append((score + arc, n_segs + 1, bounds + (j,)))
        if candidates:
            candidates.sort(key=_hyp_key)
            del candidates[beam:]
        beams[j] = candidates
    if not beams[n]:
        raise ValueError(f"no complete segmentation path over {n} blocks")
    return NBestList([(bounds, score) for score, _, bounds in beams[n]])


def sample_path(
    nbest_list: NBestList, temperature: float, rng: np.random.Generator
) -> tuple[int, ...]:
    """Draw one path from the softmax of total scores (max-subtracted)."""
    if not nbest_list.paths:
        raise ValueError("empty n-best list")
    if not temperature > 0:
        raise ValueError("temperature must be > 0")
    logits = nbest_list.scores() / temperature
    logits -= logits.max()
    probs = np.exp(logits)
    probs /= probs.sum()
    u = rng.random()
    i = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    i = min(i, len(probs) - 1)
    return nbest_list.paths[i][0]
