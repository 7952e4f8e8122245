import json

import numpy as np
import pytest

from conftest import NEW_TYPES, SHARED, UNK_TYPES, make_vocab
from vocab_transplant.errors import FormatError, ProjectionError, ReconciliationError, SolverError
from vocab_transplant.ml.tokenizer import DEFAULT_SPECIALS, UNK, Vocabulary, tokenize_word, unused_token
from vocab_transplant.ml.transplant import (
    EmbeddingMatrix,
    Provenance,
    Strategy,
    align_vocabs,
    fit_distribution,
    fit_projection,
    init_normal,
    init_projection,
    init_subword_average,
    init_uniform,
    load_embeddings,
    projection_rows,
    reconcile_size,
    save_embeddings,
    transplant,
)
from vocab_transplant.ml.vectors import WordVectors


def _residual(F, B, W):
    return float(np.sum((F @ W - B) ** 2))


# ========================================
# ALIGNEMENT & TAILLE
# ========================================
def test_alignment_partition(alignment):
    non_special_shared = set(SHARED)
    assert alignment.shared == non_special_shared | set(DEFAULT_SPECIALS)
    assert alignment.new == set(NEW_TYPES)
    assert not alignment.shared & alignment.new
    assert alignment.effective_target_size == 5 + len(SHARED) + len(NEW_TYPES)
    for token in alignment.shared:
        assert alignment.src_vocab.tokens[alignment.src_id[token]] == token
        assert alignment.tgt_vocab.tokens[alignment.tgt_id[token]] == token


def test_self_alignment(src_vocab):
    align = align_vocabs(src_vocab, src_vocab)
    assert align.new == frozenset()
    assert align.shared == {t for t in src_vocab if not src_vocab.is_unused(t)}


def test_disjoint_alignment(src_vocab):
    other = make_vocab(list(DEFAULT_SPECIALS) + ["xx", "yy", "zz"])
    align = align_vocabs(src_vocab, other)
    assert align.new == {"xx", "yy", "zz"}
    assert align.shared == set(DEFAULT_SPECIALS)


def test_reconcile_equal_sizes_unchanged(src_vocab):
    assert reconcile_size(src_vocab, src_vocab) is src_vocab


def test_reconcile_removes_surplus_unused():
    src = make_vocab(list(DEFAULT_SPECIALS) + [f"s{i}" for i in range(10)])
    tgt = make_vocab(list(DEFAULT_SPECIALS) + [f"t{i}" for i in range(8)] + [unused_token(i) for i in range(5)])
    assert len(tgt) - len(src) == 3

    out = reconcile_size(src, tgt)
    assert len(out) == len(src)
    removed = set(tgt.tokens) - set(out.tokens)
    assert removed == {unused_token(2), unused_token(3), unused_token(4)}
    assert [t for t in out if not out.is_unused(t)] == [t for t in tgt if not tgt.is_unused(t)]


def test_reconcile_pads_smaller_target(src_vocab, tgt_vocab):
    out = reconcile_size(src_vocab, tgt_vocab)
    assert len(out) == len(src_vocab)
    assert out.tokens[: len(tgt_vocab)] == tgt_vocab.tokens
    assert out.tokens[len(tgt_vocab)] == unused_token(5)


def test_reconcile_shortfall():
    src = make_vocab(list(DEFAULT_SPECIALS) + ["a"])
    tgt = make_vocab(list(DEFAULT_SPECIALS) + ["a", "b", "c"])
    with pytest.raises(ReconciliationError) as info:
        reconcile_size(src, tgt)
    assert info.value.shortfall == 2


# ========================================
# INITIALISATION
# ========================================
@pytest.mark.parametrize("strategy", list(Strategy))
def test_shared_rows_are_exact_copies(strategy, alignment, src_emb, ft_vectors):
    result = transplant(strategy, alignment, src_emb, seed=5, ft=ft_vectors)
    rows = result.matrix.rows
    for token in alignment.shared:
        assert np.array_equal(rows[alignment.tgt_id[token]], src_emb.rows[alignment.src_id[token]])
        assert result.provenance[token] is Provenance.COPIED
    assert set(result.provenance) == alignment.shared | alignment.new
    assert np.isfinite(rows).all()
    assert result.matrix.vocab is alignment.tgt_vocab


def test_unused_rows_follow_source(alignment, src_emb):
    rows = init_uniform(alignment, src_emb, seed=1).rows
    tgt = alignment.tgt_vocab
    assert np.array_equal(rows[tgt.id_of[unused_token(1)]], src_emb.row(unused_token(1)))
    assert not rows[tgt.id_of[unused_token(4)]].any()


def test_uniform_bounds_and_determinism(alignment, src_emb):
    first = init_uniform(alignment, src_emb, seed=3)
    second = init_uniform(alignment, src_emb, seed=3)
    assert np.array_equal(first.rows, second.rows)
    new_rows = first.rows[[alignment.tgt_id[t] for t in alignment.new]]
    assert (new_rows >= -1).all() and (new_rows < 1).all()

    other = init_uniform(alignment, src_emb, seed=4)
    assert not np.array_equal(first.rows, other.rows)


def test_uniform_rejects_empty_range(alignment, src_emb):
    with pytest.raises(ValueError):
        init_uniform(alignment, src_emb, seed=0, lo=1.0, hi=1.0)


def test_fit_distribution_hand_values():
    vocab = Vocabulary(("[PAD]", "[UNK]"), specials=("[PAD]", "[UNK]"))
    fit = fit_distribution(EmbeddingMatrix(vocab, np.array([[0.0], [2.0]])))
    assert fit.mu.tolist() == [1.0] and fit.sigma.tolist() == [1.0]

    with pytest.raises(ValueError):
        fit_distribution(EmbeddingMatrix(Vocabulary(("[UNK]",), specials=("[UNK]",)), np.zeros((1, 3))))


def test_fit_distribution_matches_two_pass_oracle():
    vocab = make_vocab(list(DEFAULT_SPECIALS) + [f"w{i}" for i in range(95)])
    rows = np.random.default_rng(8).normal(size=(100, 8))
    fit = fit_distribution(EmbeddingMatrix(vocab, rows))
    for d in range(8):
        column = [float(x) for x in rows[:, d]]
        mean = sum(column) / len(column)
        var = sum((x - mean) ** 2 for x in column) / len(column)
        assert abs(fit.mu[d] - mean) < 1e-12
        assert abs(fit.sigma[d] - var ** 0.5) < 1e-12


def test_normal_degenerate_source_gives_mu(src_vocab, tgt_vocab):
    row = np.linspace(-0.3, 0.7, 8)
    src_emb = EmbeddingMatrix(src_vocab, np.tile(row, (len(src_vocab), 1)))
    align = align_vocabs(src_vocab, reconcile_size(src_vocab, tgt_vocab))
    fit = fit_distribution(src_emb)
    assert np.array_equal(fit.mu, row) and not fit.sigma.any()

    out = init_normal(align, src_emb, seed=2)
    for token in align.new:
        assert np.array_equal(out.rows[align.tgt_id[token]], row)


def test_normal_sample_mean_bound():
    src_vocab = make_vocab(list(DEFAULT_SPECIALS) + [f"s{i}" for i in range(45)])
    src_emb = EmbeddingMatrix(src_vocab, np.random.default_rng(4).normal(loc=0.5, scale=2.0, size=(50, 4)))
    tgt_tokens = list(DEFAULT_SPECIALS) + [f"n{i}" for i in range(10_000)]
    align = align_vocabs(src_vocab, make_vocab(tgt_tokens))
    fit = fit_distribution(src_emb)

    out = init_normal(align, src_emb, seed=6)
    new_rows = out.rows[[align.tgt_id[t] for t in align.new]]
    bound = 4 * fit.sigma / np.sqrt(10_000)
    assert (np.abs(new_rows.mean(axis=0) - fit.mu) <= bound).all()


def _oracle_mean(token, src_emb):
    vocab = src_emb.vocab
    if token.startswith("##"):
        result = tokenize_word(token[2:], vocab, continuation=True)
    else:
        result = tokenize_word(token, vocab)
    if result.is_unk:
        return src_emb.row(UNK)
    total = np.zeros(src_emb.dim)
    for piece in result.pieces:
        total = total + src_emb.row(piece)
    return total / len(result.pieces)


def test_subword_average_matches_oracle(alignment, src_emb):
    out = init_subword_average(alignment, src_emb, src_emb.vocab)
    for token in alignment.new:
        np.testing.assert_allclose(out.rows[alignment.tgt_id[token]], _oracle_mean(token, src_emb), rtol=0, atol=1e-12)


def test_subword_average_unk_and_singletons(alignment, src_emb):
    out = init_subword_average(alignment, src_emb)
    for token in UNK_TYPES:
        assert np.array_equal(out.rows[alignment.tgt_id[token]], src_emb.row(UNK))
    # "##abcd" = ##abc + ##d ; "abcd" = abc + ##d
    expected = (src_emb.row("abc") + src_emb.row("##d")) / 2
    np.testing.assert_allclose(out.rows[alignment.tgt_id["abcd"]], expected, atol=1e-15)


def test_subword_average_two_element_mean():
    src = make_vocab(list(DEFAULT_SPECIALS) + ["x", "##y"])
    rows = np.zeros((7, 2))
    rows[5], rows[6] = [1, 0], [0, 1]
    tgt = make_vocab(list(DEFAULT_SPECIALS) + ["xy", "x"])
    align = align_vocabs(src, tgt)
    out = init_subword_average(align, EmbeddingMatrix(src, rows))
    assert out.rows[tgt.id_of["xy"]].tolist() == [0.5, 0.5]


# ========================================
# PROJECTION
# ========================================
def _projection_system(n, d_in, d_out, seed, consistent=True):
    rng = np.random.default_rng(seed)
    words = [f"w{i}" for i in range(n)]
    F = rng.normal(size=(n, d_in))
    W_true = rng.normal(size=(d_in, d_out))
    B = F @ W_true if consistent else rng.normal(size=(n, d_out))
    vocab = make_vocab(list(DEFAULT_SPECIALS) + words)
    src_rows = np.vstack([rng.normal(size=(5, d_out)), B])
    ft = WordVectors(tuple(words), F)
    return ft, EmbeddingMatrix(vocab, src_rows), words, F, B, W_true


def test_projection_identity():
    ft, src_emb, words, F, _, _ = _projection_system(6, 6, 6, seed=1)
    src_emb = EmbeddingMatrix(src_emb.vocab, np.vstack([src_emb.rows[:5], F]))
    model = fit_projection(ft, src_emb, words, ridge=0.0)
    np.testing.assert_allclose(model.W, np.eye(6), atol=1e-8)


def test_projection_recovers_exact_map():
    ft, src_emb, words, _, _, W_true = _projection_system(50, 4, 6, seed=2)
    model = fit_projection(ft, src_emb, words, ridge=0.0)
    np.testing.assert_allclose(model.W, W_true, atol=1e-6)
    assert model.n_fit == 50 and model.n_skipped == 0


@pytest.mark.parametrize("consistent, scale, trials", [(True, 1e-3, 100), (False, 1.0, 1000)])
def test_projection_is_least_squares_optimum(consistent, scale, trials):
    ft, src_emb, words, F, B, _ = _projection_system(200, 8, 16, seed=3, consistent=consistent)
    model = fit_projection(ft, src_emb, words, ridge=0.0)
    assert model.residual == pytest.approx(_residual(F, B, model.W))
    rng = np.random.default_rng(4)
    for _ in range(trials):
        delta = rng.normal(size=model.W.shape)
        delta *= scale / np.linalg.norm(delta)
        assert model.residual <= _residual(F, B, model.W + delta)


def test_projection_skips_shared_missing_from_ft():
    ft, src_emb, words, _, _, _ = _projection_system(30, 4, 6, seed=5)
    model = fit_projection(ft, src_emb, words + list(DEFAULT_SPECIALS), ridge=1e-8)
    assert model.n_fit == 30 and model.n_skipped == 5


def test_projection_errors():
    ft, src_emb, words, _, _, _ = _projection_system(10, 4, 6, seed=6)
    with pytest.raises(ProjectionError):
        fit_projection(ft, src_emb, ["absent"])
    singular = WordVectors(tuple(words), np.zeros((10, 4)))
    with pytest.raises(SolverError, match="ridge"):
        fit_projection(singular, src_emb, words, ridge=0.0)
    with pytest.raises(ValueError):
        fit_projection(ft, src_emb, words, ridge=-1.0)


def test_projection_rows_and_fallback(alignment, src_emb, ft_vectors):
    model = fit_projection(ft_vectors, src_emb, alignment.shared)
    result = projection_rows(alignment, src_emb, ft_vectors, model)
    rows = result.matrix.rows
    for token in alignment.new:
        i = alignment.tgt_id[token]
        if token in ft_vectors:
            x = ft_vectors.rows[ft_vectors.index[token]]
            naive = [sum(x[k] * model.W[k, j] for k in range(len(x))) for j in range(src_emb.dim)]
            np.testing.assert_allclose(rows[i], naive, atol=1e-10)
            assert result.provenance[token] is Provenance.PROJECTED
        else:
            np.testing.assert_allclose(rows[i], _oracle_mean(token, src_emb), atol=1e-12)
    assert result.fallback_count == len(NEW_TYPES) - 18


def test_projection_zero_ft_row_gives_zero(alignment, src_emb, ft_vectors):
    zero_rows = ft_vectors.rows.copy()
    zero_rows[ft_vectors.index["abcd"]] = 0.0
    ft = WordVectors(ft_vectors.vocab, zero_rows)
    model = fit_projection(ft, src_emb, alignment.shared)
    out = init_projection(alignment, src_emb, ft, model)
    assert not out.rows[alignment.tgt_id["abcd"]].any()


def test_projection_dimension_mismatch(alignment, src_emb, ft_vectors):
    model = fit_projection(ft_vectors, src_emb, alignment.shared)
    bad = type(model)(W=model.W[:, :4], residual=model.residual, ridge=model.ridge)
    with pytest.raises(ValueError):
        init_projection(alignment, src_emb, ft_vectors, bad)


def test_projection_requires_vectors(alignment, src_emb):
    with pytest.raises(ValueError):
        transplant("fasttext-projection", alignment, src_emb)


# ========================================
# FICHIERS DE MATRICES
# ========================================
def test_embeddings_text_round_trip(tmp_path, src_emb):
    path = tmp_path / "emb.txt"
    save_embeddings(src_emb, path)
    loaded = load_embeddings(path, src_emb.vocab)
    assert loaded.vocab == src_emb.vocab
    np.testing.assert_allclose(loaded.rows, src_emb.rows, rtol=1e-8)


def test_embeddings_binary_layout(tmp_path, src_emb):
    written = save_embeddings(src_emb, tmp_path / "emb.bin")
    assert [p.name for p in written] == ["emb.bin", "emb.json", "emb.vocab.txt"]
    header = json.loads((tmp_path / "emb.json").read_text(encoding="utf-8"))
    assert header == {"rows": 60, "dim": 8, "vocab_file": "emb.vocab.txt"}
    assert (tmp_path / "emb.bin").stat().st_size == 60 * 8 * 4

    loaded = load_embeddings(tmp_path / "emb.bin")
    assert loaded.vocab == src_emb.vocab
    np.testing.assert_array_equal(loaded.rows, src_emb.rows.astype("<f4"))


def test_embeddings_vocab_mismatch(tmp_path, src_emb, tgt_vocab):
    path = tmp_path / "emb.txt"
    save_embeddings(src_emb, path)
    with pytest.raises(FormatError):
        load_embeddings(path, tgt_vocab)
