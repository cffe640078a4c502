import math

import numpy as np
import pytest

from sparsedoc.corpus import (
    DEFAULT_STOPWORDS,
    Document,
    build_vocabulary,
    compute_idf,
    index_documents,
    load_dataset,
    load_vocabulary,
    save_vocabulary,
    tokenize,
)
from sparsedoc.errors import DataFormatError


class TestTokenize:
    def test_lowercase_and_stopword_removal(self):
        assert tokenize("The cat SAT.", stopwords=DEFAULT_STOPWORDS) == ["cat", "sat"]

    def test_empty_text(self):
        assert tokenize("") == []

    def test_all_stopwords(self):
        assert tokenize("a a a", stopwords=frozenset({"a"})) == []

    def test_punctuation_stripped(self):
        assert tokenize("e-mail, stuff; (really)!") == ["e", "mail", "stuff", "really"]

    def test_idempotent_on_own_output(self):
        rng = np.random.default_rng(0)
        words = ["Running!", "classes", "flies", "breeded", "The", "misc.forsale", "x86_64"]
        for _ in range(50):
            text = " ".join(rng.choice(words, size=8))
            for stem in (False, True):
                once = tokenize(text, stem=stem)
                again = tokenize(" ".join(once), stem=stem)
                assert once == again

    def test_deterministic(self):
        text = "Some Mixed CASE text, with 123 numbers!"
        assert tokenize(text) == tokenize(text)


class TestVocabulary:
    def test_min_frequency_cutoff(self):
        vocab = build_vocabulary([["x", "x", "y"], ["x", "z"]], min_frequency=2)
        assert vocab.tokens == ["x"]
        assert vocab.frequency[0] == 3
        assert vocab.doc_frequency[0] == 2
        assert vocab.n_documents == 2

    def test_min_frequency_one_keeps_everything(self):
        vocab = build_vocabulary([["x", "x", "y"], ["x", "z"]], min_frequency=1)
        assert set(vocab.tokens) == {"x", "y", "z"}

    def test_empty_vocabulary_is_an_error(self):
        with pytest.raises(DataFormatError):
            build_vocabulary([["a", "b", "c"]], min_frequency=100)

    def test_index_order_frequency_then_lexicographic(self):
        vocab = build_vocabulary([["b", "b", "a", "a", "c"]], min_frequency=1)
        assert vocab.tokens == ["a", "b", "c"]  # a and b tie at 2, a first

    def test_df_matches_brute_force_membership_count(self):
        rng = np.random.default_rng(3)
        alphabet = [f"w{i}" for i in range(20)]
        docs = [list(rng.choice(alphabet, size=rng.integers(1, 15))) for _ in range(40)]
        vocab = build_vocabulary(docs, min_frequency=1)
        for i, token in enumerate(vocab.tokens):
            assert vocab.doc_frequency[i] == sum(token in d for d in docs)
        assert vocab.doc_frequency.sum() <= len(vocab) * len(docs)


class TestIdf:
    def test_word_in_every_document(self):
        vocab = build_vocabulary([["w"], ["w"], ["w"], ["w"]], min_frequency=1)
        assert compute_idf(vocab)[0] == 0.0

    def test_half_document_frequency(self):
        vocab = build_vocabulary([["w", "x"], ["w", "x"], ["x"], ["x"]], min_frequency=1)
        idf = compute_idf(vocab)
        assert idf[vocab.index["w"]] == pytest.approx(math.log(2), abs=1e-12)

    def test_rare_word_large_corpus(self):
        # N=1000, df=1
        docs = [["common"] for _ in range(999)] + [["common", "rare"]]
        vocab = build_vocabulary(docs, min_frequency=1)
        idf = compute_idf(vocab)
        assert idf[vocab.index["rare"]] == pytest.approx(math.log(1000), abs=1e-12)

    def test_monotone_in_document_frequency(self):
        rng = np.random.default_rng(5)
        docs = [list(set(rng.choice([f"w{i}" for i in range(12)], size=6))) for _ in range(30)]
        vocab = build_vocabulary(docs, min_frequency=1)
        idf = compute_idf(vocab)
        for a in range(len(vocab)):
            for b in range(len(vocab)):
                if vocab.doc_frequency[a] < vocab.doc_frequency[b]:
                    assert idf[a] > idf[b]


class TestDatasetLoading:
    def test_newsgroup_dirs(self, tmp_path):
        for split in ("train", "test"):
            for cls in ("alpha", "beta"):
                d = tmp_path / split / cls
                d.mkdir(parents=True)
                for i in range(3):
                    (d / f"doc{i}.txt").write_text(f"Some {cls} text {i}", encoding="utf-8")
        docs, labels = load_dataset(tmp_path, "newsgroup-dirs")
        assert labels == ["alpha", "beta"]
        assert len(docs) == 12
        train = [d for d in docs if d.split == "train"]
        assert len(train) == 6
        assert {d.labels for d in train} == {(0,), (1,)}

    def test_multilabel_tsv(self, tmp_path):
        fp = tmp_path / "data.tsv"
        fp.write_text("d1\tacq,grain\tWheat and oil news\nd2\tacq\tMore text\n", encoding="utf-8")
        docs, labels = load_dataset(fp, "multilabel-tsv")
        assert labels == ["acq", "grain"]
        assert docs[0].labels == (0, 1)
        assert docs[1].labels == (0,)

    def test_multilabel_tsv_missing_column(self, tmp_path):
        fp = tmp_path / "bad.tsv"
        fp.write_text("d1\tacq\ttext ok\nd2\tno text column\n", encoding="utf-8")
        with pytest.raises(DataFormatError, match="2"):
            load_dataset(fp, "multilabel-tsv")

    def test_missing_path(self, tmp_path):
        with pytest.raises(DataFormatError):
            load_dataset(tmp_path / "nope", "newsgroup-dirs")

    def test_unknown_format(self, tmp_path):
        with pytest.raises(DataFormatError):
            load_dataset(tmp_path, "parquet")


def test_vocabulary_round_trip(tmp_path):
    docs = [["alpha", "beta", "beta"], ["alpha", "gamma"], ["alpha"]]
    vocab = build_vocabulary(docs, min_frequency=1)
    idf = compute_idf(vocab)
    fp = tmp_path / "vocab.txt"
    save_vocabulary(vocab, idf, fp)
    loaded, idf2 = load_vocabulary(fp)
    assert loaded.tokens == vocab.tokens
    assert np.array_equal(loaded.frequency, vocab.frequency)
    assert np.array_equal(loaded.doc_frequency, vocab.doc_frequency)
    assert loaded.n_documents == vocab.n_documents
    np.testing.assert_allclose(idf2, idf, atol=5e-7)


def test_index_documents_drops_oov():
    docs = [Document("d0", (0,), ["x", "x", "q"], "train")]
    vocab = build_vocabulary([["x", "y"], ["x"]], min_frequency=1)
    indexed = index_documents(docs, vocab)
    assert indexed[0].tolist() == [vocab.index["x"], vocab.index["x"]]
    assert indexed[0].dtype == np.int32
