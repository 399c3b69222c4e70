"""Segmentation evaluation: token/boundary F1, baseline segmenter, ABX.

Hypothesis boundaries are first snapped onto phoneme edges: a boundary
falling inside a phoneme moves to that phoneme's end when it lies more
than 30ms or more than half the phoneme past its start, else to the
start.  A token is correct iff both snapped edges equal a gold word's
edges.  Boundary precision/recall cover internal boundaries only
(utterance edges are trivially correct), micro-averaged over the corpus.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from dpparse.core import BLOCK_MS, Corpus, GoldAlignment, Segment, Segmentation

SNAP_THRESHOLD_MS = 30.0


@dataclass
class EvalReport:
    token_precision: float
    token_recall: float
    token_f1: float
    boundary_precision: float
    boundary_recall: float
    boundary_f1: float
    n_hyp_tokens: int
    n_gold_tokens: int
    n_token_hits: int
    n_hyp_boundaries: int
    n_gold_boundaries: int
    n_boundary_hits: int

    def as_dict(self) -> dict:
        return {
            "token_precision": round(self.token_precision, 6),
            "token_recall": round(self.token_recall, 6),
            "token_f1": round(self.token_f1, 6),
            "boundary_precision": round(self.boundary_precision, 6),
            "boundary_recall": round(self.boundary_recall, 6),
            "boundary_f1": round(self.boundary_f1, 6),
            "n_hyp_tokens": self.n_hyp_tokens,
            "n_gold_tokens": self.n_gold_tokens,
            "n_token_hits": self.n_token_hits,
            "n_hyp_boundaries": self.n_hyp_boundaries,
            "n_gold_boundaries": self.n_gold_boundaries,
            "n_boundary_hits": self.n_boundary_hits,
        }


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def _ratio(num: int, denom: int) -> float:
    return num / denom if denom else 0.0


@dataclass(frozen=True)
class Triplet:
    """ABX item: a and x share a category, b is the distractor."""

    a: np.ndarray
    b: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        if not (len(self.a) == len(self.b) == len(self.x)):
            raise ValueError("triplet embeddings must share dimensionality")


# ---------------------------------------------------------------------------
# boundary snapping

def _snap_one(b: float, starts: list[float], phones) -> float:
    pos = bisect_right(starts, b) - 1
    if pos < 0:
        raise ValueError(f"boundary {b} before phone coverage")
    s, e = phones[pos][0], phones[pos][1]
    if b == s:
        return b
    if b >= e:
        if b == e:
            return b
        raise ValueError(f"boundary {b} outside phone coverage")
    into = b - s
    if into > SNAP_THRESHOLD_MS or into > (e - s) / 2:
        return e
    return s


def snap_boundaries(hyp_ms, phones) -> list[float]:
    """Snap boundary times onto phoneme edges; sorted and deduplicated.

    ``phones`` are (start, end[, label]) intervals covering the
    utterance without overlap.  Boundaries already on an edge stay put.
    Idempotent: snapping snapped boundaries is the identity.
    """
    phones = sorted(phones, key=lambda p: p[0])
    starts = [p[0] for p in phones]
    return sorted({_snap_one(float(b), starts, phones) for b in hyp_ms})


# ---------------------------------------------------------------------------
# token and boundary F1

def token_boundary_f1(hyp: Segmentation, gold: GoldAlignment) -> EvalReport:
    """Corpus-level scores of a hypothesis against a gold alignment.

    Every hypothesized utterance must have gold word intervals.  When no
    phoneme intervals exist for an utterance, boundaries are used
    unsnapped.
    """
    tok_hits = tok_found = tok_hyp = tok_gold = 0
    bnd_hits = bnd_hyp = bnd_gold = 0
    for utt_id, segs in hyp.items():
        if utt_id not in gold.words:
            raise ValueError(f"missing gold alignment for {utt_id!r}")
        gold_words = gold.words[utt_id]
        phones = gold.phones.get(utt_id)
        if phones:
            sorted_phones = sorted(phones, key=lambda p: p[0])
            starts = [p[0] for p in sorted_phones]

            def snap(value: float) -> float:
                return _snap_one(value, starts, sorted_phones)

        else:
            def snap(value: float) -> float:
                return value

        hyp_tokens = [
            (snap(seg.start * BLOCK_MS), snap(seg.end * BLOCK_MS)) for seg in segs
        ]
        gold_tokens = set(gold_words)
        tok_hits += sum(1 for t in hyp_tokens if t in gold_tokens)
        tok_found += len(gold_tokens & set(hyp_tokens))
        tok_hyp += len(hyp_tokens)
        tok_gold += len(gold_words)
        # internal boundaries only; snapped hypothesis edges, deduplicated
        duration = gold_words[-1][1]
        hyp_bounds = {b for t in hyp_tokens for b in t} - {0.0, duration}
        gold_bounds = {w[0] for w in gold_words} - {0.0}
        bnd_hits += len(hyp_bounds & gold_bounds)
        bnd_hyp += len(hyp_bounds)
        bnd_gold += len(gold_bounds)
    tp, tr = _ratio(tok_hits, tok_hyp), _ratio(tok_found, tok_gold)
    bp, br = _ratio(bnd_hits, bnd_hyp), _ratio(bnd_hits, bnd_gold)
    return EvalReport(
        token_precision=tp,
        token_recall=tr,
        token_f1=_f1(tp, tr),
        boundary_precision=bp,
        boundary_recall=br,
        boundary_f1=_f1(bp, br),
        n_hyp_tokens=tok_hyp,
        n_gold_tokens=tok_gold,
        n_token_hits=tok_hits,
        n_hyp_boundaries=bnd_hyp,
        n_gold_boundaries=bnd_gold,
        n_boundary_hits=bnd_hits,
    )


# ---------------------------------------------------------------------------
# naive baseline

def fixed_rate_segmenter(corpus: Corpus, period_blocks: int = 3) -> Segmentation:
    """Boundaries at every multiple of the period, content ignored.

    A final residue shorter than the period becomes a shorter last token.
    """
    if period_blocks < 1:
        raise ValueError("period_blocks must be >= 1")
    seg = Segmentation()
    for utt in corpus:
        bounds = list(range(0, utt.n_blocks, period_blocks)) + [utt.n_blocks]
        uid = utt.utterance_id
        seg.set_utterance(
            uid, [Segment(uid, a, b) for a, b in zip(bounds[:-1], bounds[1:])]
        )
    return seg


# ---------------------------------------------------------------------------
# ABX discrimination

def abx_score(triplets) -> float:
    """Fraction of triplets where x is closer to a than to b (cosine).

    Ties count one half.  ``triplets`` is a list of Triplet or an array
    of shape (n, 3, dim).  Zero vectors are rejected: cosine distance is
    undefined for them.
    """
    if isinstance(triplets, np.ndarray):
        if triplets.ndim != 3 or triplets.shape[1] != 3:
            raise ValueError("expected shape (n, 3, dim)")
        a, b, x = triplets[:, 0], triplets[:, 1], triplets[:, 2]
    else:
        triplets = list(triplets)
        if not triplets:
            raise ValueError("empty triplet list")
        a = np.stack([np.asarray(t.a, dtype=np.float64) for t in triplets])
        b = np.stack([np.asarray(t.b, dtype=np.float64) for t in triplets])
        x = np.stack([np.asarray(t.x, dtype=np.float64) for t in triplets])
    if a.shape[0] == 0:
        raise ValueError("empty triplet list")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    for name, m in (("a", a), ("b", b), ("x", x)):
        if np.any(np.linalg.norm(m, axis=1) == 0):
            raise ValueError(f"zero vector among {name} embeddings")
    d_ax = _cosine_distance(a, x)
    d_bx = _cosine_distance(b, x)
    wins = (d_ax < d_bx).astype(np.float64)
    wins[d_ax == d_bx] = 0.5
    return float(wins.mean())


def _cosine_distance(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    num = np.einsum("ij,ij->i", u, v)
    den = np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
    return 1.0 - num / den


def pool_overlapping(
    vectors: np.ndarray,
    spans_ms,
    window_ms: tuple[float, float],
    min_overlap_ms: float = 40.0,
) -> np.ndarray:
    """Mean-pool rows whose time span overlaps the window by more than a floor.

    ``spans_ms`` gives one (start, end) per row; rows overlapping
    ``window_ms`` by strictly more than ``min_overlap_ms`` are averaged.
    """
    vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    spans = np.asarray(spans_ms, dtype=np.float64)
    if spans.shape[0] != vectors.shape[0]:
        raise ValueError("one time span required per vector")
    lo, hi = float(window_ms[0]), float(window_ms[1])
    overlap = np.minimum(spans[:, 1], hi) - np.maximum(spans[:, 0], lo)
    keep = overlap > min_overlap_ms
    if not np.any(keep):
        raise ValueError("no row overlaps the window by more than the floor")
    return vectors[keep].mean(axis=0)
