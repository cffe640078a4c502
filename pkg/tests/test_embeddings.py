import numpy as np
import pytest

from sparsedoc.corpus import build_vocabulary
from sparsedoc.embeddings import (
    EmbeddingConfig,
    EmbeddingMatrix,
    load_vectors,
    noise_distribution,
    probe_loss,
    save_vectors,
    train_doc2vecc,
    train_sgns,
)
from sparsedoc.errors import DataFormatError


def _two_topic_corpus(seed=7, docs_per_topic=60, topic_size=20, doc_len=30):
    rng = np.random.default_rng(seed)
    topics = [[f"a{i}" for i in range(topic_size)], [f"b{i}" for i in range(topic_size)]]
    token_docs = []
    for words in topics:
        for _ in range(docs_per_topic):
            token_docs.append(list(rng.choice(words, size=doc_len)))
    vocab = build_vocabulary(token_docs, min_frequency=1)
    indexed = [np.array([vocab.index[w] for w in d], dtype=np.int32) for d in token_docs]
    return vocab, indexed, topics


def _stopword_corpus(seed=7, n_stop=20, stop_rate=0.5, topic_size=80, docs_per_topic=40):
    rng = np.random.default_rng(seed)
    topics = [[f"t{t}w{i}" for i in range(topic_size)] for t in range(3)]
    stop = [f"filler{j}" for j in range(n_stop)]
    token_docs = []
    for t in range(3):
        for _ in range(docs_per_topic):
            length = rng.integers(200, 300)
            token_docs.append(
                [
                    stop[rng.integers(0, n_stop)]
                    if rng.random() < stop_rate
                    else topics[t][rng.integers(0, topic_size)]
                    for _ in range(length)
                ]
            )
    vocab = build_vocabulary(token_docs, min_frequency=1)
    indexed = [np.array([vocab.index[w] for w in d], dtype=np.int32) for d in token_docs]
    return vocab, indexed, stop


def _mean_cosine(matrix, rows_a, rows_b):
    unit = matrix / np.linalg.norm(matrix, axis=1, keepdims=True)
    sims = unit[rows_a] @ unit[rows_b].T
    if rows_a == rows_b:
        mask = ~np.eye(len(rows_a), dtype=bool)
        return sims[mask].mean()
    return sims.mean()


class TestTrainingBasics:
    def test_zero_epochs_returns_initialization(self):
        vocab, indexed, _ = _two_topic_corpus(docs_per_topic=5)
        cfg = EmbeddingConfig(dim=16, window=3, negatives=3, epochs=0, seed=5)
        emb = train_sgns(indexed, vocab, cfg)
        bound = 0.5 / cfg.dim
        assert emb.vectors.min() >= -bound and emb.vectors.max() <= bound
        assert not emb.output_vectors.any()

    def test_deterministic_given_seed(self):
        vocab, indexed, _ = _two_topic_corpus(docs_per_topic=10)
        cfg = EmbeddingConfig(dim=12, window=3, negatives=4, epochs=2, seed=17)
        a = train_sgns(indexed, vocab, cfg)
        b = train_sgns(indexed, vocab, cfg)
        np.testing.assert_array_equal(a.vectors, b.vectors)
        c = train_doc2vecc(indexed, vocab, cfg)
        d = train_doc2vecc(indexed, vocab, cfg)
        np.testing.assert_array_equal(c.vectors, d.vectors)

    def test_empty_corpus_is_an_error(self):
        vocab, _, _ = _two_topic_corpus(docs_per_topic=2)
        cfg = EmbeddingConfig(dim=8, epochs=1)
        with pytest.raises(DataFormatError):
            train_sgns([], vocab, cfg)
        with pytest.raises(DataFormatError):
            train_doc2vecc([np.zeros(0, np.int32)], vocab, cfg)

    def test_finite_after_training(self):
        vocab, indexed, _ = _two_topic_corpus(docs_per_topic=15)
        cfg = EmbeddingConfig(dim=24, window=4, negatives=5, epochs=4, seed=2)
        for trainer in (train_sgns, train_doc2vecc):
            emb = trainer(indexed, vocab, cfg)
            assert np.isfinite(emb.vectors).all()

    def test_full_keep_rate_trains(self):
        vocab, indexed, _ = _two_topic_corpus(docs_per_topic=5)
        cfg = EmbeddingConfig(dim=8, window=2, negatives=2, epochs=1, seed=1, keep_rate=1.0)
        emb = train_doc2vecc(indexed, vocab, cfg)
        assert np.isfinite(emb.vectors).all()

    def test_noise_distribution_is_unigram_power(self):
        vocab, _, _ = _two_topic_corpus(docs_per_topic=3)
        cdf = noise_distribution(vocab)
        weights = vocab.frequency.astype(float) ** 0.75
        np.testing.assert_allclose(np.diff(cdf, prepend=0.0), weights / weights.sum(), atol=1e-12)
        assert cdf[-1] == 1.0


class TestTopicSeparation:
    def test_sgns_separates_disjoint_topics(self):
        vocab, indexed, topics = _two_topic_corpus()
        cfg = EmbeddingConfig(dim=25, window=5, negatives=5, epochs=5, seed=3)
        emb = train_sgns(indexed, vocab, cfg)
        rows_a = [vocab.index[w] for w in topics[0]]
        rows_b = [vocab.index[w] for w in topics[1]]
        within = 0.5 * (_mean_cosine(emb.vectors, rows_a, rows_a)
                        + _mean_cosine(emb.vectors, rows_b, rows_b))
        cross = _mean_cosine(emb.vectors, rows_a, rows_b)
        assert within > cross

    def test_doc2vecc_separates_disjoint_topics(self):
        vocab, indexed, topics = _two_topic_corpus()
        cfg = EmbeddingConfig(dim=25, window=5, negatives=5, epochs=5, seed=3)
        emb = train_doc2vecc(indexed, vocab, cfg)
        rows_a = [vocab.index[w] for w in topics[0]]
        rows_b = [vocab.index[w] for w in topics[1]]
        within = 0.5 * (_mean_cosine(emb.vectors, rows_a, rows_a)
                        + _mean_cosine(emb.vectors, rows_b, rows_b))
        cross = _mean_cosine(emb.vectors, rows_a, rows_b)
        assert within > cross


class TestCorruptionShrinkage:
    def test_frequent_tokens_shrink_versus_sgns(self):
        # Planted uniform-background fillers are the 20 most frequent tokens;
        # their mean norm under corruption training must be at most half the
        # plain skip-gram norm at identical seed and epochs.
        vocab, indexed, stop = _stopword_corpus()
        cfg = EmbeddingConfig(dim=40, window=5, negatives=5, epochs=10, seed=77, keep_rate=0.3)
        emb_sgns = train_sgns(indexed, vocab, cfg)
        emb_d2v = train_doc2vecc(indexed, vocab, cfg)

        top20 = np.argsort(-vocab.frequency)[:20]
        assert {vocab.tokens[i] for i in top20} == set(stop)
        norm_sgns = np.linalg.norm(emb_sgns.vectors[top20], axis=1).mean()
        norm_d2v = np.linalg.norm(emb_d2v.vectors[top20], axis=1).mean()
        assert norm_d2v <= 0.5 * norm_sgns

        # background tokens end smaller than topical tokens
        topical = [i for i in range(len(vocab)) if i not in set(top20.tolist())]
        assert norm_d2v < np.linalg.norm(emb_d2v.vectors[topical], axis=1).mean()


def test_probe_loss_decreases_with_training():
    vocab, indexed, _ = _two_topic_corpus(docs_per_topic=30)
    cfg0 = EmbeddingConfig(dim=20, window=4, negatives=5, epochs=0, seed=11)
    cfg5 = EmbeddingConfig(dim=20, window=4, negatives=5, epochs=5, seed=11)
    before = probe_loss(train_sgns(indexed, vocab, cfg0), indexed, vocab, cfg0)
    after = probe_loss(train_sgns(indexed, vocab, cfg5), indexed, vocab, cfg5)
    assert after < before


class TestVectorFiles:
    def test_round_trip(self, tmp_path):
        vocab, indexed, _ = _two_topic_corpus(docs_per_topic=3)
        cfg = EmbeddingConfig(dim=7, window=2, negatives=2, epochs=1, seed=4)
        emb = train_sgns(indexed, vocab, cfg)
        fp = tmp_path / "vectors.txt"
        save_vectors(emb, fp)
        loaded = load_vectors(fp)
        assert loaded.tokens == emb.tokens
        assert np.abs(loaded.vectors - emb.vectors).max() <= 5e-7

    def test_header_row_count_mismatch(self, tmp_path):
        fp = tmp_path / "bad.txt"
        fp.write_text("3 2\nfoo 0.1 0.2\nbar 0.3 0.4\n", encoding="utf-8")
        with pytest.raises(DataFormatError):
            load_vectors(fp)

    def test_dimension_mismatch_names_line(self, tmp_path):
        fp = tmp_path / "bad.txt"
        fp.write_text("2 3\nfoo 0.1 0.2 0.3\nbar 0.3 0.4\n", encoding="utf-8")
        with pytest.raises(DataFormatError, match="3"):
            load_vectors(fp)

    def test_token_with_space_rejected(self, tmp_path):
        emb = EmbeddingMatrix(tokens=["ok", "not ok"], vectors=np.zeros((2, 2)))
        with pytest.raises(DataFormatError):
            save_vectors(emb, tmp_path / "v.txt")
