import dataclasses

import numpy as np
import pytest

from dpparse.core import Corpus, FrameMatrix, Segment, SymbolSequence
from dpparse.density import DensityParams, DiscreteCountStore, InstanceIndex
from dpparse.scoring import DPParams
from dpparse.synthgen import GenConfig, generate
from dpparse.trainer import (
    TrainerConfig,
    base_prob_of,
    build_base,
    candidate_ordinal,
    enumerate_candidates,
    init_segmentation,
    init_state,
    n_candidates,
    run_iteration,
    train,
)


def _continuous_corpus(seed=0, n_utterances=60, vocab=8):
    cfg = GenConfig(
        vocab_size=vocab,
        n_utterances=n_utterances,
        dim=8,
        zipf_exponent=1.0,
        word_len_range=(2, 4),
        words_per_utterance_range=(2, 3),
        noise_sigma=0.05,
        seed=seed,
    )
    corpus, gold, _ = generate(cfg)
    return corpus, gold


def _discrete_corpus(seed=0, n_utterances=120, vocab=6):
    cfg = GenConfig(
        vocab_size=vocab,
        n_utterances=n_utterances,
        dim=8,
        zipf_exponent=1.0,
        word_len_range=(2, 3),
        words_per_utterance_range=(2, 3),
        noise_sigma=0.0,
        seed=seed,
        mode="discrete",
        alphabet_size=8,
    )
    corpus, gold, _ = generate(cfg)
    return corpus, gold


def _config(**kw):
    base = dict(n_iterations=2, beam=5, seed=0, workers=2)
    base.update(kw)
    return TrainerConfig(**base)


class TestInitSegmentation:
    def _corpus(self, lengths):
        return Corpus(
            [FrameMatrix(f"u{i}", np.ones((n, 4))) for i, n in enumerate(lengths)]
        )

    def test_threshold_rule(self):
        seg = init_segmentation(self._corpus([5, 15, 30]), max_len=20)
        assert set(seg.utterance_ids()) == {"u0", "u1"}
        assert seg["u0"] == (Segment("u0", 0, 5),)
        assert seg.n_tokens == 2

    def test_all_long_gives_empty_seed(self):
        seg = init_segmentation(self._corpus([25, 30]), max_len=20)
        assert seg.n_tokens == 0

    def test_all_short_gives_full_seed(self):
        seg = init_segmentation(self._corpus([3, 4, 5]), max_len=20)
        assert seg.n_tokens == 3


class TestEnumerateCandidates:
    def test_six_blocks_bounds_two_six(self):
        corpus = Corpus([FrameMatrix("u", np.ones((6, 2)))])
        cands = enumerate_candidates(corpus, 2, 6)
        assert len(cands) == 15  # 5+4+3+2+1

    def test_single_block(self):
        corpus = Corpus([FrameMatrix("u", np.ones((1, 2)))])
        cands = enumerate_candidates(corpus, 1, 20)
        assert cands == [Segment("u", 0, 1)]

    def test_empty_corpus(self):
        assert enumerate_candidates(Corpus([]), 1, 20) == []

    def test_count_matches_formula(self):
        corpus = Corpus([FrameMatrix("u", np.ones((9, 2)))])
        assert len(enumerate_candidates(corpus, 2, 5)) == n_candidates(9, 2, 5)

    def test_ordinal_round_trip(self):
        corpus = Corpus([FrameMatrix("u", np.ones((7, 2)))])
        cands = enumerate_candidates(corpus, 1, 4)
        for i, seg in enumerate(cands):
            assert candidate_ordinal(7, 1, 4, seg.start, seg.end) == i


class TestBuildBase:
    def test_small_pool_uses_everything(self):
        corpus, _ = _continuous_corpus(n_utterances=20)
        config = _config()
        index, probs, beta, n_base = build_base(corpus, config)
        total = sum(n_candidates(u.n_blocks, 1, 20) for u in corpus)
        assert n_base == total
        assert index.n == total
        assert beta > 0

    def test_subsample_cap(self):
        corpus, _ = _continuous_corpus(n_utterances=20)
        config = _config(l0_subsample=500)
        index, probs, beta, n_base = build_base(corpus, config)
        assert n_base == 500

    def test_prior_cache_covers_all_candidates(self):
        corpus, _ = _continuous_corpus(n_utterances=15)
        config = _config()
        _, probs, _, _ = build_base(corpus, config)
        for utt in corpus:
            assert len(probs[utt.utterance_id]) == n_candidates(utt.n_blocks, 1, 20)
            assert np.all(probs[utt.utterance_id] >= 0)
            assert np.all(probs[utt.utterance_id] <= 1)

    def test_discrete_backend_counts(self):
        corpus, _ = _discrete_corpus(n_utterances=40)
        config = _config()
        store, probs, beta, n_base = build_base(corpus, config)
        assert isinstance(store, DiscreteCountStore)
        assert beta is None
        assert n_base == store.total
        # a present whole-utterance candidate has prior count/(pool size)
        utt = corpus.utterances[0]
        key = utt.symbols.tobytes()
        seg = Segment(utt.utterance_id, 0, utt.n_blocks)
        expected = store.count_excluding_overlaps(key, seg) / n_base
        assert probs[utt.utterance_id][
            candidate_ordinal(utt.n_blocks, 1, 20, 0, utt.n_blocks)
        ] == pytest.approx(expected)

    def test_explicit_candidates_must_match_enumeration(self):
        corpus, _ = _continuous_corpus(n_utterances=5)
        config = _config()
        with pytest.raises(ValueError, match="full enumeration"):
            build_base(corpus, config, candidates=[Segment("u000000", 0, 1)])


class TestInitState:
    def test_rejects_invalid_corpus(self):
        bad = np.ones((4, 3))
        bad[0, 0] = np.inf
        corpus = Corpus([FrameMatrix("u", bad)])
        with pytest.raises(ValueError, match="invalid corpus"):
            init_state(corpus, _config())

    def test_rejects_short_utterances(self):
        corpus = Corpus(
            [FrameMatrix("ok", np.ones((5, 2))), FrameMatrix("tiny", np.ones((1, 2)))]
        )
        with pytest.raises(ValueError, match="tiny"):
            init_state(corpus, _config(min_len=2))

    def test_seed_and_tables(self):
        corpus, _ = _continuous_corpus(n_utterances=12)
        state = init_state(corpus, _config())
        assert state.iteration == 0
        assert state.n_lexicon == 0
        assert state.segmentation.n_tokens == len(corpus)  # all short


class TestRunIteration:
    def test_segmentation_valid_after_each_iteration(self):
        corpus, _ = _continuous_corpus(n_utterances=25)
        config = _config()
        state = init_state(corpus, config)
        for _ in range(2):
            state = run_iteration(state, corpus, config)
            assert state.segmentation.validate(corpus) == []
            assert len(state.segmentation) == len(corpus)

    def test_lexicon_mass_lags_one_iteration(self):
        corpus, _ = _continuous_corpus(n_utterances=25)
        config = _config()
        state0 = init_state(corpus, config)
        state1 = run_iteration(state0, corpus, config)
        assert state1.n_lexicon == state0.segmentation.n_tokens
        state2 = run_iteration(state1, corpus, config)
        assert state2.n_lexicon == state1.segmentation.n_tokens

    def test_deterministic_rerun(self):
        corpus, _ = _continuous_corpus(n_utterances=20)
        config = _config(beam=1, temperature=1e-9)
        state = init_state(corpus, config)
        out1 = run_iteration(state, corpus, config)
        out2 = run_iteration(state, corpus, config)
        assert out1.segmentation == out2.segmentation

    def test_prior_cache_identical_across_iterations(self):
        corpus, _ = _continuous_corpus(n_utterances=20)
        config = _config()
        state = init_state(corpus, config)
        before = {k: v.copy() for k, v in state.base_probs.items()}
        state = run_iteration(state, corpus, config)
        state = run_iteration(state, corpus, config)
        for k in before:
            assert np.array_equal(state.base_probs[k], before[k])

    def test_empty_seed_is_legal(self):
        # every utterance longer than max_len: priors only at iteration 1
        corpus, _ = _continuous_corpus(n_utterances=15)
        config = _config(max_len=3)
        state = init_state(corpus, config)
        assert state.segmentation.n_tokens == 0
        state = run_iteration(state, corpus, config)
        assert state.segmentation.validate(corpus) == []

    def test_frequent_substring_beats_prior_discrete(self):
        corpus, _ = _discrete_corpus(n_utterances=150, vocab=4)
        config = _config()
        state = init_state(corpus, config)
        state = run_iteration(state, corpus, config)
        # most frequent token type of the produced segmentation
        store = DiscreteCountStore()
        for seg in state.segmentation.tokens():
            symbols = corpus.utterance(seg.utterance_id).symbols
            store.add(symbols[seg.start : seg.end].tobytes(), seg)
        counts: dict[bytes, int] = {}
        example: dict[bytes, Segment] = {}
        for seg in state.segmentation.tokens():
            key = corpus.utterance(seg.utterance_id).symbols[
                seg.start : seg.end
            ].tobytes()
            counts[key] = counts.get(key, 0) + 1
            example[key] = seg
        key, freq = max(counts.items(), key=lambda kv: kv[1])
        assert freq >= 2
        seg = example[key]
        n_tokens = state.segmentation.n_tokens
        p0 = base_prob_of(state, seg, corpus, config)
        lexicon_freq = store.count_excluding_overlaps(key, Segment("fresh", 0, 1))
        dp = DPParams(n_lexicon=float(n_tokens), n_base=state.n_base)
        p_w = lexicon_freq / (n_tokens + dp.alpha0) + dp.alpha0 * p0 / (
            n_tokens + dp.alpha0
        )
        assert p_w > p0


class TestTrain:
    def test_same_seed_identical_output(self):
        corpus, _ = _continuous_corpus(n_utterances=20)
        config = _config()
        assert train(corpus, config) == train(corpus, config)

    def test_workers_do_not_change_results(self):
        corpus, _ = _continuous_corpus(n_utterances=20)
        seg1 = train(corpus, _config(workers=1))
        seg2 = train(corpus, _config(workers=2))
        assert seg1 == seg2

    def test_log_stream_lines(self):
        import io as stdio

        corpus, _ = _continuous_corpus(n_utterances=15)
        stream = stdio.StringIO()
        train(corpus, _config(n_iterations=3), log_stream=stream)
        lines = stream.getvalue().strip().splitlines()
        assert len(lines) == 3
        assert lines[0].startswith("iteration=1 tokens=")
        assert "mean_token_ms=" in lines[0] and "wall_s=" in lines[0]

    def test_zero_iterations_rejected(self):
        with pytest.raises(ValueError):
            _config(n_iterations=0)

    def test_discrete_training_runs(self):
        corpus, gold = _discrete_corpus(n_utterances=80)
        config = _config(n_iterations=3, dp=DPParams(delta=2.0))
        seg = train(corpus, config)
        assert seg.validate(corpus) == []

    def test_kmeans_backend_runs(self):
        corpus, _ = _continuous_corpus(n_utterances=20)
        config = _config(frequency_backend="kmeans", kmeans_clusters=8)
        seg = train(corpus, config)
        assert seg.validate(corpus) == []

    def test_kmeans_backend_rejected_for_discrete(self):
        corpus, _ = _discrete_corpus(n_utterances=30)
        config = _config(frequency_backend="kmeans", kmeans_clusters=4)
        with pytest.raises(ValueError, match="continuous"):
            init_state(corpus, config)

    def test_calibration_fallback_for_tiny_pool(self, caplog):
        corpus = Corpus(
            [FrameMatrix(f"u{i}", np.random.default_rng(i).normal(size=(4, 3)))
             for i in range(3)]
        )
        config = _config(min_len=1, max_len=3, density=DensityParams(k=5, beta=2.0))
        state = init_state(corpus, config)
        assert state.beta == 2.0  # configured value, calibration skipped
