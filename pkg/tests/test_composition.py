import numpy as np
import pytest

from sparsedoc.clustering import sparsify
from sparsedoc.composition import (
    DocumentVectorSet,
    build_table,
    embed_corpus,
    embed_document,
    embed_document_dense,
    load_docvecs,
    load_table_dense,
    save_docvecs,
    save_table,
    word_topic_vector,
)
from sparsedoc.embeddings import EmbeddingMatrix
from sparsedoc.errors import DataFormatError


def _random_setup(seed=0, v=50, k=8, d=6, l=3, dirichlet=2.0):
    rng = np.random.default_rng(seed)
    tokens = [f"w{i}" for i in range(v)]
    emb = EmbeddingMatrix(tokens=tokens, vectors=rng.standard_normal((v, d)))
    posteriors = rng.dirichlet(np.full(k, dirichlet), size=v)
    idf = rng.random(v) * 3
    table = build_table(emb, sparsify(posteriors, l), idf)
    return rng, emb, posteriors, idf, table


class TestWordTopicVector:
    def test_direct_evaluation(self):
        out = word_topic_vector(np.array([1.0, 2.0]), {1: 0.9}, idf=2.0, n_clusters=3)
        np.testing.assert_allclose(out, [0, 0, 1.8, 3.6, 0, 0], atol=1e-12)

    def test_zero_idf_gives_zero_vector(self):
        out = word_topic_vector(np.array([1.0, 2.0]), {0: 0.5, 2: 0.5}, idf=0.0, n_clusters=3)
        assert not out.any()

    def test_empty_support_warns(self):
        with pytest.warns(UserWarning):
            out = word_topic_vector(np.array([1.0, 2.0]), {}, idf=1.0, n_clusters=3)
        assert not out.any()


class TestBuildTable:
    def test_row_structure_matches_direct_formula(self):
        _, emb, posteriors, idf, table = _random_setup()
        sparse = sparsify(posteriors, 3)
        for i in range(len(table)):
            expected = word_topic_vector(emb.vectors[i], sparse.row_dict(i),
                                         idf[i], sparse.n_clusters)
            np.testing.assert_allclose(table.row_dense(i), expected, atol=1e-12)

    def test_nonzero_bound(self):
        _, _, _, _, table = _random_setup(v=30, k=10, d=5, l=4)
        for i in range(len(table)):
            assert table.row_nonzeros(i) <= table.l * table.block_dim

    def test_sparsity_bound_forced_by_l_over_k(self):
        _, _, _, _, table = _random_setup(v=40, k=20, d=8, l=2)
        assert table.sparsity() >= 1.0 - table.l / table.n_clusters - 1e-12

    def test_misaligned_vocabularies_error(self):
        rng, emb, posteriors, idf, _ = _random_setup()
        with pytest.raises(DataFormatError):
            build_table(emb, sparsify(posteriors[:-1], 2), idf)
        with pytest.raises(DataFormatError):
            build_table(emb, sparsify(posteriors, 2), idf[:-1])

    def test_dense_l_equals_k(self):
        _, _, posteriors, _, _ = _random_setup()
        rng, emb, posteriors, idf, _ = _random_setup(l=8, k=8)
        table = build_table(emb, sparsify(posteriors, 8), idf)
        dense = table.to_dense()
        assert (dense != 0).mean() > 0.9  # all blocks populated


class TestEmbedDocument:
    def test_single_token_identity(self):
        _, _, _, _, table = _random_setup()
        vec = embed_document(["w3"], table, normalize=False)
        np.testing.assert_allclose(vec, table.row_dense(3), atol=1e-12)

    def test_repeated_token_additivity(self):
        _, _, _, _, table = _random_setup()
        once = embed_document(["w5"], table, normalize=False)
        twice = embed_document(["w5", "w5"], table, normalize=False)
        np.testing.assert_allclose(twice, 2 * once, atol=1e-12)

    def test_concatenation_linearity(self):
        rng, _, _, _, table = _random_setup(seed=4)
        doc_a = [f"w{i}" for i in rng.integers(0, 50, size=12)]
        doc_b = [f"w{i}" for i in rng.integers(0, 50, size=7)]
        combined = embed_document(doc_a + doc_b, table, normalize=False)
        parts = embed_document(doc_a, table, normalize=False) + embed_document(
            doc_b, table, normalize=False
        )
        np.testing.assert_allclose(combined, parts, atol=1e-9)

    def test_unknown_tokens_skipped(self):
        _, _, _, _, table = _random_setup()
        known = embed_document(["w1", "w2"], table, normalize=False)
        mixed = embed_document(["w1", "unknown", "w2"], table, normalize=False)
        np.testing.assert_allclose(mixed, known, atol=1e-12)

    def test_all_unknown_warns_and_zero(self):
        _, _, _, _, table = _random_setup()
        with pytest.warns(UserWarning):
            vec = embed_document(["nope", "nada"], table, normalize=False)
        assert not vec.any()

    def test_block_support_subset_of_token_supports(self):
        rng, _, _, _, table = _random_setup(seed=9)
        doc = [f"w{i}" for i in rng.integers(0, 50, size=20)]
        vec = embed_document(doc, table, normalize=False)
        d = table.block_dim
        allowed = set()
        for t in doc:
            allowed.update(int(k) for k in table.support[table.index[t]] if k >= 0)
        nonzero_blocks = {int(j) // d for j in np.flatnonzero(vec)}
        assert nonzero_blocks <= allowed

    def test_thousand_documents_match_dense_oracle(self):
        rng, _, _, _, table = _random_setup(seed=12, v=80, k=12, d=10, l=3)
        dense = table.to_dense()
        for _ in range(1000):
            doc = rng.integers(0, 80, size=rng.integers(1, 60)).astype(np.int32)
            sparse_vec = embed_document(doc, table, normalize=False)
            oracle = embed_document_dense(doc, dense, normalize=False)
            np.testing.assert_allclose(sparse_vec, oracle, atol=1e-9)

    def test_normalization(self):
        _, _, _, _, table = _random_setup()
        vec = embed_document(["w1", "w4", "w7"], table, normalize=True)
        assert np.linalg.norm(vec) == pytest.approx(1.0, abs=1e-12)


class TestEmbedCorpus:
    def test_empty_corpus(self):
        _, _, _, _, table = _random_setup()
        docs, report = embed_corpus([], table)
        assert docs.vectors.shape == (0, table.dim)
        assert report.n_documents == 0

    def test_touched_counts_monotone_in_l(self):
        rng, emb, posteriors, idf, _ = _random_setup(seed=3, v=60, k=10, d=5)
        docs = [rng.integers(0, 60, size=30).astype(np.int32) for _ in range(50)]
        touched = []
        for l in (3, 7):
            table = build_table(emb, sparsify(posteriors, l), idf)
            _, report = embed_corpus(docs, table, normalize=False)
            touched.append(report.touched_nonzeros)
        assert touched[0] <= touched[1]

    def test_timing_report_with_oracle(self):
        rng, _, _, _, table = _random_setup(seed=5, v=40, k=6, d=4, l=2)
        docs = [rng.integers(0, 40, size=20).astype(np.int32) for _ in range(30)]
        vecs, report = embed_corpus(docs, table, time_dense_oracle=True)
        assert report.dense_seconds_per_doc is not None
        assert report.sparse_seconds_per_doc > 0
        assert vecs.vectors.shape == (30, table.dim)


def test_table_file_round_trip(tmp_path):
    _, _, _, _, table = _random_setup(v=12, k=5, d=3, l=2)
    fp = tmp_path / "wtv.txt"
    save_table(table, fp)
    dense, tokens = load_table_dense(fp)
    assert tokens == table.tokens
    np.testing.assert_allclose(dense, table.to_dense(), atol=5e-7)


def test_docvecs_round_trip_dense_and_sparse(tmp_path):
    rng = np.random.default_rng(8)
    vectors = rng.standard_normal((5, 12))
    vectors[vectors < 0.5] = 0.0
    docs = DocumentVectorSet(ids=[f"d{i}" for i in range(5)], vectors=vectors)
    for sparse in (False, True):
        fp = tmp_path / f"dv_{sparse}.txt"
        save_docvecs(docs, fp, sparse=sparse)
        loaded = load_docvecs(fp)
        assert loaded.ids == docs.ids
        np.testing.assert_allclose(loaded.vectors, vectors, atol=5e-7)
