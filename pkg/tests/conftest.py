import numpy as np
import pytest

from vocab_transplant.etl.prepare_corpus import EmojiMap
from vocab_transplant.ml.tokenizer import DEFAULT_SPECIALS, Vocabulary, unused_token
from vocab_transplant.ml.transplant import EmbeddingMatrix, align_vocabs, reconcile_size
from vocab_transplant.ml.vectors import WordVectors

LETTERS = list("abcdefghijkl")

SOURCE_MULTI = [
    "ab", "cd", "ef", "gh", "ij", "kl", "abc", "def", "ghi", "jkl",
    "##ab", "##cd", "##ef", "##gh", "##ij", "##kl", "##abc", "##def",
    "ba", "dc", "fe", "hg", "ji", "lk", "##ba", "##dc", "##fe", "##hg",
]

SHARED = ["a", "b", "c", "d", "e", "f", "##a", "##b", "##c", "ab", "cd", "abc", "##ab", "##cd", "def"]

NEW_TYPES = [
    "abcd", "cdef", "efgh", "ghij", "ijkl", "abab", "cdcd", "bade", "fade", "cafe",
    "deaf", "bead", "##abcd", "##cdef", "##efgh", "hijk", "lkji", "gab", "jab", "kale",
    "zeta", "##xyz", "dab", "fed", "hale",
]
# caractères absents de l'alphabet source
UNK_TYPES = ["zeta", "##xyz"]


def make_vocab(tokens):
    return Vocabulary(tuple(tokens))


@pytest.fixture
def src_vocab():
    tokens = (
        list(DEFAULT_SPECIALS)
        + [unused_token(i) for i in range(3)]
        + LETTERS
        + ["##" + ch for ch in LETTERS]
        + SOURCE_MULTI
    )
    vocab = make_vocab(tokens)
    assert len(vocab) == 60
    return vocab


@pytest.fixture
def tgt_vocab():
    tokens = list(DEFAULT_SPECIALS) + SHARED + NEW_TYPES + [unused_token(i) for i in range(5)]
    return make_vocab(tokens)


@pytest.fixture
def src_emb(src_vocab):
    rng = np.random.default_rng(0)
    return EmbeddingMatrix(src_vocab, rng.normal(size=(len(src_vocab), 8)))


@pytest.fixture
def alignment(src_vocab, tgt_vocab):
    return align_vocabs(src_vocab, reconcile_size(src_vocab, tgt_vocab))


@pytest.fixture
def ft_vectors():
    """Vecteurs « fastText » sans n-grammes : types partagés + une partie des nouveaux."""
    rng = np.random.default_rng(1)
    words = SHARED + NEW_TYPES[:18]
    return WordVectors(tuple(words), rng.normal(size=(len(words), 6)))


@pytest.fixture
def emoji_map():
    return EmojiMap({"😂": ":face_with_tears_of_joy:", "👍": ":thumbs_up:", "❤️": ":red_heart:", "❤": ":red_heart:"})
