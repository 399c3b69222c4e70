"""Outer segmentation loop: seed, precompute base tables, iterate.

Each iteration (1) rebuilds the token lexicon from the current
segmentation and (2) re-segments every utterance by sampling from the
N-best paths of its scored lattice.  The whole corpus is one batch: the
lexicon is frozen while utterances are decoded, so results do not depend
on utterance processing order or worker count.  Per-utterance RNG
streams are derived from (seed, iteration, utterance id).
"""

from __future__ import annotations

import dataclasses
import hashlib
import logging
import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from dpparse.core import Corpus, Segment, Segmentation, short_utterances, validate_corpus
from dpparse.density import (
    DensityParams,
    DiscreteCountStore,
    InstanceIndex,
    KMeansModel,
    calibrate_beta,
)
from dpparse.embed import UtteranceEmbedder
from dpparse.lattice import ScoredLattice, nbest, sample_path
from dpparse.scoring import DPParams, arc_scores_batch

logger = logging.getLogger(__name__)

# Queries are flushed to the kNN index in groups of roughly this many rows.
_GROUP_QUERIES = 16384


@dataclass(frozen=True)
class TrainerConfig:
    n_iterations: int = 10
    beam: int = 10
    l0_subsample: int = 1_000_000
    seed: int = 0
    workers: int | None = None
    min_len: int = 1
    max_len: int = 20
    temperature: float = 1.0
    frequency_backend: str = "knn"  # "knn" or "kmeans" (continuous corpora)
    kmeans_clusters: int = 0
    calibration_sample: int = 10_000
    normalize: bool = False
    dp: DPParams = field(default_factory=DPParams)
    density: DensityParams = field(default_factory=DensityParams)

    def __post_init__(self):
        if self.n_iterations < 1:
            raise ValueError("n_iterations must be >= 1")
        if self.l0_subsample < 1:
            raise ValueError("l0_subsample must be >= 1")
        if self.beam < 1:
            raise ValueError("beam must be >= 1")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError("need 1 <= min_len <= max_len")
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")
        if self.frequency_backend not in ("knn", "kmeans"):
            raise ValueError(f"unknown frequency backend {self.frequency_backend!r}")
        if self.frequency_backend == "kmeans" and self.kmeans_clusters < 1:
            raise ValueError("kmeans backend needs kmeans_clusters >= 1")


@dataclass
class TrainerState:
    """Everything carried between iterations; indexes are never mutated."""

    iteration: int
    segmentation: Segmentation
    lexicon_index: object | None
    base_index: object
    base_probs: dict[str, np.ndarray]
    beta: float | None
    n_base: int
    n_lexicon: int  # token mass behind lexicon_index


# ---------------------------------------------------------------------------
# candidate enumeration

@lru_cache(maxsize=4096)
def candidate_bounds(n_blocks: int, min_len: int, max_len: int):
    """(starts, ends) arrays of all candidates, by start then length."""
    starts, ends = [], []
    for i in range(n_blocks):
        top = min(max_len, n_blocks - i)
        for length in range(min_len, top + 1):
            starts.append(i)
            ends.append(i + length)
    s = np.array(starts, dtype=np.int64)
    e = np.array(ends, dtype=np.int64)
    s.setflags(write=False)
    e.setflags(write=False)
    return s, e


def n_candidates(n_blocks: int, min_len: int, max_len: int) -> int:
    return sum(
        max(0, n_blocks - length + 1) for length in range(min_len, max_len + 1)
    )


def candidate_ordinal(
    n_blocks: int, min_len: int, max_len: int, start: int, end: int
) -> int:
    """Position of segment [start, end) in the canonical enumeration."""
    if not (0 <= start < end <= n_blocks and min_len <= end - start <= max_len):
        raise ValueError(f"[{start}, {end}) is not a candidate of {n_blocks} blocks")
    before = sum(
        max(0, min(max_len, n_blocks - i) - min_len + 1) for i in range(start)
    )
    return before + (end - start - min_len)


def enumerate_candidates(
    corpus: Corpus, min_len: int = 1, max_len: int = 20
) -> list[Segment]:
    """All segments with admissible lengths, every utterance, scan order."""
    out = []
    for utt in corpus:
        starts, ends = candidate_bounds(utt.n_blocks, min_len, max_len)
        uid = utt.utterance_id
        out.extend(Segment(uid, int(a), int(b)) for a, b in zip(starts, ends))
    return out


def init_segmentation(corpus: Corpus, max_len: int = 20) -> Segmentation:
    """Seed lexicon: whole short utterances as single tokens.

    Utterances longer than ``max_len`` blocks contribute nothing; an
    empty seed is legal (scores then reduce to the base distribution).
    """
    seg = Segmentation()
    for utt in corpus:
        if utt.n_blocks <= max_len:
            seg.set_utterance(
                utt.utterance_id, [Segment(utt.utterance_id, 0, utt.n_blocks)]
            )
    return seg


# ---------------------------------------------------------------------------
# RNG derivation

def _utt_digest(utterance_id: str) -> int:
    return int.from_bytes(
        hashlib.sha256(utterance_id.encode("utf-8")).digest()[:8], "little"
    )


def _utterance_rng(seed: int, utterance_id: str, iteration: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence((seed, iteration, _utt_digest(utterance_id)))
    )


def _derived_rng(seed: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, tag)))


_TAG_SUBSAMPLE = 101
_TAG_CALIBRATION = 102
_TAG_KMEANS_BASE = 103
_TAG_KMEANS_ITER = 104


# ---------------------------------------------------------------------------
# per-utterance candidate features

def _utterance_groups(corpus: Corpus, config: TrainerConfig):
    """Yield utterance groups of roughly _GROUP_QUERIES candidates."""
    group, total = [], 0
    for utt in corpus:
        starts, ends = candidate_bounds(utt.n_blocks, config.min_len, config.max_len)
        group.append((utt, starts, ends))
        total += len(starts)
        if total >= _GROUP_QUERIES:
            yield group
            group, total = [], 0
    if group:
        yield group


def _group_embeddings(group, normalize: bool) -> np.ndarray:
    parts = [
        UtteranceEmbedder(utt, normalize).embed_many(starts, ends)
        for utt, starts, ends in group
    ]
    return np.concatenate(parts, axis=0)


def _keys_for(utt, starts, ends) -> list[bytes]:
    symbols = utt.symbols
    return [symbols[a:b].tobytes() for a, b in zip(starts, ends)]


# ---------------------------------------------------------------------------
# frequency backends

class _KnnTables:
    """Continuous-mode base/lexicon stores built on InstanceIndex."""

    def __init__(self, config: TrainerConfig):
        self.config = config

    def build_base(self, corpus: Corpus, sampled_flat: np.ndarray, total: int):
        config = self.config
        vectors, segments = self._materialize(corpus, sampled_flat)
        index = InstanceIndex(vectors, segments)
        beta = self._calibrate(index, vectors, segments)
        params = DensityParams(config.density.k, beta, config.density.epsilon_f)
        base_probs = {}
        for group in _utterance_groups(corpus, config):
            embs = _group_embeddings(group, config.normalize)
            codes, starts, ends = _provenance_arrays(index, group)
            freqs = index.kernel_frequencies_arrays(
                embs, codes, starts, ends, params, config.workers
            )
            offset = 0
            for utt, s, _e in group:
                base_probs[utt.utterance_id] = freqs[offset : offset + len(s)] / index.n
                offset += len(s)
        return index, base_probs, beta, index.n

    def _materialize(self, corpus: Corpus, sampled_flat: np.ndarray):
        config = self.config
        counts, utts = [], []
        for utt in corpus:
            counts.append(n_candidates(utt.n_blocks, config.min_len, config.max_len))
            utts.append(utt)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        vec_parts, segments = [], []
        for i, utt in enumerate(utts):
            lo = np.searchsorted(sampled_flat, offsets[i], side="left")
            hi = np.searchsorted(sampled_flat, offsets[i + 1], side="left")
            if lo == hi:
                continue
            local = sampled_flat[lo:hi] - offsets[i]
            starts, ends = candidate_bounds(utt.n_blocks, config.min_len, config.max_len)
            s, e = starts[local], ends[local]
            emb = UtteranceEmbedder(utt, config.normalize).embed_many(s, e)
            vec_parts.append(emb)
            uid = utt.utterance_id
            segments.extend(Segment(uid, int(a), int(b)) for a, b in zip(s, e))
        return np.concatenate(vec_parts, axis=0), segments

    def _calibrate(self, index: InstanceIndex, vectors, segments) -> float:
        config = self.config
        if index.n < 100:
            logger.warning(
                "base pool too small to calibrate (%d entries); using beta=%g",
                index.n,
                config.density.beta,
            )
            return config.density.beta
        rng = _derived_rng(config.seed, _TAG_CALIBRATION)
        m = min(config.calibration_sample, index.n)
        picks = np.sort(rng.choice(index.n, size=m, replace=False))
        sample = [(vectors[i], segments[i]) for i in picks]
        return calibrate_beta(
            index,
            sample,
            config.density.k,
            config.density.epsilon_f,
            workers=config.workers,
        )

    def build_lexicon(self, corpus: Corpus, segmentation: Segmentation):
        tokens = list(segmentation.tokens())
        if not tokens:
            return None, 0
        vec_parts = []
        for utt_id, segs in segmentation.items():
            utt = corpus.utterance(utt_id)
            embedder = UtteranceEmbedder(utt, self.config.normalize)
            starts = np.array([s.start for s in segs])
            ends = np.array([s.end for s in segs])
            vec_parts.append(embedder.embed_many(starts, ends))
        vectors = np.concatenate(vec_parts, axis=0)
        segments = [s for _, segs in segmentation.items() for s in segs]
        return InstanceIndex(vectors, segments), len(tokens)

    def lexicon_frequencies(self, lexicon, group, embs, beta) -> np.ndarray:
        if lexicon is None:
            return np.zeros(embs.shape[0])
        config = self.config
        params = DensityParams(config.density.k, beta, config.density.epsilon_f)
        codes, starts, ends = _provenance_arrays(lexicon, group)
        return lexicon.kernel_frequencies_arrays(
            embs, codes, starts, ends, params, config.workers
        )


def _provenance_arrays(index: InstanceIndex, group):
    codes, starts, ends = [], [], []
    for utt, s, e in group:
        codes.append(np.full(len(s), index.utt_code(utt.utterance_id), dtype=np.int64))
        starts.append(s)
        ends.append(e)
    return (
        np.concatenate(codes),
        np.concatenate(starts).astype(np.int64),
        np.concatenate(ends).astype(np.int64),
    )


class _KMeansTables:
    """Ablation backend: frequencies are cluster sizes, no exclusion."""

    def __init__(self, config: TrainerConfig):
        self.config = config

    def build_base(self, corpus: Corpus, sampled_flat: np.ndarray, total: int):
        config = self.config
        knn = _KnnTables(config)
        vectors, _segments = knn._materialize(corpus, sampled_flat)
        n_base = vectors.shape[0]
        seed = int(
            np.random.SeedSequence((config.seed, _TAG_KMEANS_BASE)).generate_state(1)[0]
        )
        model = KMeansModel(min(config.kmeans_clusters, n_base), seed=seed).fit(vectors)
        base_probs = {}
        for group in _utterance_groups(corpus, config):
            embs = _group_embeddings(group, config.normalize)
            freqs = model.frequencies(embs)
            offset = 0
            for utt, s, _e in group:
                base_probs[utt.utterance_id] = freqs[offset : offset + len(s)] / n_base
                offset += len(s)
        return model, base_probs, None, n_base

    def build_lexicon(self, corpus: Corpus, segmentation: Segmentation):
        tokens = list(segmentation.tokens())
        if not tokens:
            return None, 0
        index, n = _KnnTables(self.config).build_lexicon(corpus, segmentation)
        seed = int(
            np.random.SeedSequence(
                (self.config.seed, _TAG_KMEANS_ITER)
            ).generate_state(1)[0]
        )
        model = KMeansModel(min(self.config.kmeans_clusters, n), seed=seed)
        model.fit(index.vectors)
        return model, n

    def lexicon_frequencies(self, lexicon, group, embs, beta) -> np.ndarray:
        if lexicon is None:
            return np.zeros(embs.shape[0])
        return lexicon.frequencies(embs)


class _DiscreteTables:
    """Text-mode stores: exact multiset counts with overlap exclusion."""

    def __init__(self, config: TrainerConfig):
        self.config = config

    def build_base(self, corpus: Corpus, sampled_flat: np.ndarray, total: int):
        config = self.config
        store = DiscreteCountStore()
        counts = [
            n_candidates(u.n_blocks, config.min_len, config.max_len) for u in corpus
        ]
        offsets = np.concatenate([[0], np.cumsum(counts)])
        for i, utt in enumerate(corpus):
            lo = np.searchsorted(sampled_flat, offsets[i], side="left")
            hi = np.searchsorted(sampled_flat, offsets[i + 1], side="left")
            if lo == hi:
                continue
            local = sampled_flat[lo:hi] - offsets[i]
            starts, ends = candidate_bounds(utt.n_blocks, config.min_len, config.max_len)
            uid = utt.utterance_id
            for a, b in zip(starts[local], ends[local]):
                store.add(utt.symbols[a:b].tobytes(), Segment(uid, int(a), int(b)))
        n_base = store.total
        base_probs = {}
        for utt in corpus:
            starts, ends = candidate_bounds(utt.n_blocks, config.min_len, config.max_len)
            base_probs[utt.utterance_id] = (
                self._count_many(store, utt, starts, ends) / n_base
            )
        return store, base_probs, None, n_base

    @staticmethod
    def _count_many(store: DiscreteCountStore, utt, starts, ends) -> np.ndarray:
        uid = utt.utterance_id
        symbols = utt.symbols
        out = np.empty(len(starts), dtype=np.float64)
        for i, (a, b) in enumerate(zip(starts, ends)):
            out[i] = store.count_excluding_overlaps(
                symbols[a:b].tobytes(), Segment(uid, int(a), int(b))
            )
        return out

    def build_lexicon(self, corpus: Corpus, segmentation: Segmentation):
        store = DiscreteCountStore()
        for utt_id, segs in segmentation.items():
            symbols = corpus.utterance(utt_id).symbols
            for seg in segs:
                store.add(symbols[seg.start : seg.end].tobytes(), seg)
        if store.total == 0:
            return None, 0
        return store, store.total

    def lexicon_frequencies(self, lexicon, group, embs, beta) -> np.ndarray:
        if lexicon is None:
            total = sum(len(s) for _, s, _ in group)
            return np.zeros(total)
        parts = [
            self._count_many(lexicon, utt, starts, ends)
            for utt, starts, ends in group
        ]
        return np.concatenate(parts)


def _tables_for(corpus: Corpus, config: TrainerConfig):
    if corpus.mode == "discrete":
        return _DiscreteTables(config)
    if config.frequency_backend == "kmeans":
        return _KMeansTables(config)
    return _KnnTables(config)


# ---------------------------------------------------------------------------
# spec operations

def build_base(corpus: Corpus, config: TrainerConfig, candidates=None):
    """Subsample the candidate pool, build the base store, cache priors.

    Returns (base_index, base_probs, beta, n_base).  ``candidates``
    defaults to every admissible segment of the corpus; the priors are
    constant across iterations and cached per utterance in enumeration
    order.
    """
    total = sum(
        n_candidates(u.n_blocks, config.min_len, config.max_len) for u in corpus
    )
    if total == 0:
        raise ValueError("corpus has no candidate segments")
    if candidates is not None and len(candidates) != total:
        raise ValueError(
            "explicit candidate lists must cover the full enumeration "
            f"({len(candidates)} given, {total} enumerated)"
        )
    m = min(config.l0_subsample, total)
    if m < total:
        rng = _derived_rng(config.seed, _TAG_SUBSAMPLE)
        sampled = np.sort(rng.choice(total, size=m, replace=False))
    else:
        sampled = np.arange(total)
    tables = _tables_for(corpus, config)
    return tables.build_base(corpus, sampled, total)


def init_state(corpus: Corpus, config: TrainerConfig) -> TrainerState:
    """Validate, seed the segmentation, and precompute base tables."""
    report = validate_corpus(corpus)
    if not report.ok:
        raise ValueError(f"invalid corpus:\n{report}")
    too_short = short_utterances(corpus, config.min_len)
    if too_short:
        raise ValueError(
            "utterances shorter than the minimum segment length: "
            + ", ".join(too_short[:10])
        )
    if corpus.mode == "discrete" and config.frequency_backend == "kmeans":
        raise ValueError("kmeans backend applies to continuous corpora only")
    seed_seg = init_segmentation(corpus, config.max_len)
    base_index, base_probs, beta, n_base = build_base(corpus, config)
    return TrainerState(
        iteration=0,
        segmentation=seed_seg,
        lexicon_index=None,
        base_index=base_index,
        base_probs=base_probs,
        beta=beta,
        n_base=n_base,
        n_lexicon=0,
    )


def run_iteration(
    state: TrainerState, corpus: Corpus, config: TrainerConfig
) -> TrainerState:
    """One rebuild-lexicon / re-segment pass over the whole corpus.

    The new segmentation replaces the old only after every utterance has
    been decoded; its token count becomes the lexicon mass of the NEXT
    iteration, never this one.
    """
    tables = _tables_for(corpus, config)
    lexicon, n_lexicon = tables.build_lexicon(corpus, state.segmentation)
    iteration = state.iteration + 1
    dp = dataclasses.replace(
        config.dp, n_lexicon=float(n_lexicon), n_base=state.n_base
    )
    denom = dp.n_lexicon + dp.alpha0
    new_bounds: dict[str, tuple[int, ...]] = {}
    for group in _utterance_groups(corpus, config):
        if corpus.mode == "continuous":
            embs = _group_embeddings(group, config.normalize)
        else:
            embs = np.empty((sum(len(s) for _, s, _ in group), 0))
        lex_freq = tables.lexicon_frequencies(lexicon, group, embs, state.beta)
        offset = 0
        for utt, starts, ends in group:
            uid = utt.utterance_id
            n = len(starts)
            p0 = state.base_probs[uid]
            word_probs = (
                lex_freq[offset : offset + n] / denom + dp.alpha0 * p0 / denom
            )
            arc = arc_scores_batch(word_probs, ends - starts, dp)
            scores = {
                (int(a), int(b)): float(s) for a, b, s in zip(starts, ends, arc)
            }
            lat = ScoredLattice(utt.n_blocks, config.min_len, config.max_len, scores)
            paths = nbest(lat, config.beam)
            rng = _utterance_rng(config.seed, uid, iteration)
            new_bounds[uid] = sample_path(paths, config.temperature, rng)
            offset += n
    new_seg = Segmentation.from_boundaries(new_bounds)
    return dataclasses.replace(
        state,
        iteration=iteration,
        segmentation=new_seg,
        lexicon_index=lexicon,
        n_lexicon=n_lexicon,
    )


def train(corpus: Corpus, config: TrainerConfig, log_stream=None) -> Segmentation:
    """Full run: seeding, base precompute, and the iteration budget.

    The iteration budget is fixed; no convergence test is applied.  One
    log line per iteration reports the token count, mean token length in
    ms, and wall time.
    """
    t0 = time.perf_counter()
    state = init_state(corpus, config)
    logger.info(
        "initialized: %d utterances, base pool %d, beta %s, %.2fs",
        len(corpus),
        state.n_base,
        f"{state.beta:.4g}" if state.beta is not None else "n/a",
        time.perf_counter() - t0,
    )
    for _ in range(config.n_iterations):
        t_iter = time.perf_counter()
        state = run_iteration(state, corpus, config)
        seg = state.segmentation
        line = (
            f"iteration={state.iteration} tokens={seg.n_tokens} "
            f"mean_token_ms={seg.mean_token_blocks() * 40.0:.1f} "
            f"wall_s={time.perf_counter() - t_iter:.2f}"
        )
        logger.info("%s", line)
        if log_stream is not None:
            log_stream.write(line + "\n")
    return state.segmentation


def base_prob_of(state: TrainerState, seg: Segment, corpus: Corpus, config: TrainerConfig) -> float:
    """Cached prior of one candidate, looked up by (utterance, start, end)."""
    n_blocks = corpus.utterance(seg.utterance_id).n_blocks
    ordinal = candidate_ordinal(
        n_blocks, config.min_len, config.max_len, seg.start, seg.end
    )
    return float(state.base_probs[seg.utterance_id][ordinal])
