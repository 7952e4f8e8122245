import logging
from collections import Counter
from collections.abc import Iterable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit
from tqdm import tqdm

from vocab_transplant.errors import FormatError, TrainingError
from vocab_transplant.ml._kernels import sgns_train_pairs

logger = logging.getLogger(__name__)

NOISE_EXPONENT = 0.75
_FNV_OFFSET = 2166136261
_FNV_PRIME = 16777619


# ========================================
# N-GRAMMES DE CARACTÈRES
# ========================================
def fnv1a_32(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & 0xFFFFFFFF
    return h


def char_ngrams(word: str, nmin: int, nmax: int) -> list[str]:
    """N-grammes du mot entouré de < et >, sans le mot complet lui-même."""
    padded = f"<{word}>"
    grams = []
    for n in range(nmin, nmax + 1):
        if n >= len(padded):
            break
        grams.extend(padded[i:i + n] for i in range(len(padded) - n + 1))
    return grams


def ngram_buckets(word: str, nmin: int, nmax: int, buckets: int) -> list[int]:
    if buckets <= 0:
        return []
    return [fnv1a_32(g.encode("utf-8")) % buckets for g in char_ngrams(word, nmin, nmax)]


# ========================================
# VECTEURS
# ========================================
@dataclass(frozen=True)
class WordVectors:
    vocab: tuple[str, ...]
    rows: np.ndarray
    ngram_rows: np.ndarray | None = None
    ngram_min: int = 3
    ngram_max: int = 6
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "vocab", tuple(self.vocab))
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] != len(self.vocab) or rows.shape[1] < 1:
            raise ValueError(f"matrice {rows.shape} incompatible avec {len(self.vocab)} mots")
        ngram_rows = self.ngram_rows
        if ngram_rows is None:
            ngram_rows = np.zeros((0, rows.shape[1]))
        ngram_rows = np.asarray(ngram_rows, dtype=np.float64)
        if ngram_rows.ndim != 2 or ngram_rows.shape[1] != rows.shape[1]:
            raise ValueError("dimension des n-grammes différente de celle des mots")
        if not (np.isfinite(rows).all() and np.isfinite(ngram_rows).all()):
            raise ValueError("valeurs non finies dans les vecteurs")
        index = {}
        for i, word in enumerate(self.vocab):
            if word in index:
                raise ValueError(f"mot en double {word!r}")
            index[word] = i
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "ngram_rows", ngram_rows)
        object.__setattr__(self, "index", index)

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    @property
    def ngram_buckets(self) -> int:
        return self.ngram_rows.shape[0]

    def __contains__(self, word: object) -> bool:
        return word in self.index

    def __len__(self) -> int:
        return len(self.vocab)

    def input_vector(self, word: str) -> np.ndarray:
        """Représentation d'entrée : moyenne de la ligne du mot et de ses n-grammes."""
        i = self.index[word]
        ids = ngram_buckets(word, self.ngram_min, self.ngram_max, self.ngram_buckets)
        if not ids:
            return self.rows[i].copy()
        return (self.rows[i] + self.ngram_rows[ids].sum(axis=0)) / (1 + len(ids))

    def input_matrix(self) -> np.ndarray:
        if self.ngram_buckets == 0:
            return self.rows.copy()
        return np.vstack([self.input_vector(w) for w in self.vocab]) if self.vocab else self.rows.copy()


def save_text(v: WordVectors, path: str | Path) -> None:
    """Format texte word2vec : en-tête « n dim » puis « mot v1 … vdim »."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    matrix = v.input_matrix()
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"{len(v.vocab)} {v.dim}\n")
        for word, row in zip(v.vocab, matrix):
            f.write(word + " " + " ".join(f"{x:.9g}" for x in row) + "\n")


def read_text_rows(path: str | Path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().split()
        try:
            if len(header) != 2:
                raise ValueError
            count, dim = int(header[0]), int(header[1])
        except ValueError:
            raise FormatError("en-tête « nombre dimension » attendu", path=path, line=1) from None
        if count < 0 or dim < 1:
            raise FormatError(f"en-tête invalide {count} {dim}", path=path, line=1)

        words: list[str] = []
        rows = np.empty((count, dim), dtype=np.float64)
        for line_no, line in enumerate(f, start=2):
            parts = line.rstrip("\r\n").rstrip(" ").split(" ")
            if parts == [""]:
                continue
            if len(words) == count:
                raise FormatError(f"plus de {count} lignes annoncées dans l'en-tête", path=path, line=line_no)
            if len(parts) != dim + 1:
                raise FormatError(
                    f"{len(parts) - 1} valeurs au lieu de {dim}", path=path, line=line_no
                )
            try:
                rows[len(words)] = [float(x) for x in parts[1:]]
            except ValueError:
                raise FormatError("valeur non numérique", path=path, line=line_no) from None
            words.append(parts[0])
    if len(words) != count:
        raise FormatError(f"{len(words)} lignes lues, {count} annoncées dans l'en-tête", path=path, line=1)
    return words, rows


def load_text(path: str | Path) -> WordVectors:
    words, rows = read_text_rows(path)
    try:
        return WordVectors(tuple(words), rows)
    except ValueError as exc:
        raise FormatError(str(exc), path=path) from exc


# ========================================
# PERTE ET GRADIENT (référence numpy)
# ========================================
def negative_sampling_loss(inputs: np.ndarray, context: np.ndarray, negatives: np.ndarray) -> float:
    """
    -log σ(h·c) - Σ log σ(-h·n), avec h la moyenne des lignes d'entrée
    (ligne du mot + lignes n-grammes).
    """
    h = np.asarray(inputs).mean(axis=0)
    return float(np.logaddexp(0.0, -(h @ context)) + np.logaddexp(0.0, negatives @ h).sum())


def negative_sampling_gradients(inputs: np.ndarray, context: np.ndarray, negatives: np.ndarray):
    """Gradients analytiques (entrées, contexte, négatifs) de `negative_sampling_loss`."""
    inputs = np.asarray(inputs)
    h = inputs.mean(axis=0)
    pos = expit(h @ context)
    neg = expit(negatives @ h)
    grad_h = -(1.0 - pos) * context + neg @ negatives
    grad_inputs = np.tile(grad_h / len(inputs), (len(inputs), 1))
    grad_context = -(1.0 - pos) * h
    grad_negatives = np.outer(neg, h)
    return grad_inputs, grad_context, grad_negatives


# ========================================
# ENTRAÎNEMENT SKIPGRAM
# ========================================
def _window_pairs(sentence: np.ndarray, window: int, rng: np.random.Generator):
    n = len(sentence)
    spans = rng.integers(1, window + 1, size=n)
    centers, contexts = [], []
    for i in range(n):
        for j in range(max(0, i - spans[i]), min(n, i + spans[i] + 1)):
            if j != i:
                centers.append(sentence[i])
                contexts.append(sentence[j])
    return np.asarray(centers, dtype=np.int64), np.asarray(contexts, dtype=np.int64)


def _subword_index(vocab, ngram_min, ngram_max, buckets):
    ptr = [0]
    ids: list[int] = []
    for word in vocab:
        ids.extend(ngram_buckets(word, ngram_min, ngram_max, buckets))
        ptr.append(len(ids))
    return np.asarray(ptr, dtype=np.int64), np.asarray(ids, dtype=np.int64)


def train_skipgram(
    corpus: Iterable[str],
    dim: int = 50,
    window: int = 5,
    negatives: int = 5,
    epochs: int = 5,
    min_count: int = 2,
    ngram_min: int = 3,
    ngram_max: int = 6,
    buckets: int = 2**17,
    lr: float = 0.05,
    seed: int = 0,
    workers: int = 1,
) -> WordVectors:
    """
    Skipgram à échantillonnage négatif avec n-grammes de caractères hachés.
    Un seul worker : résultat déterministe pour une graine donnée. Plusieurs
    workers : mises à jour concurrentes sans verrou, non déterministe.
    """
    for name, value in (("dim", dim), ("window", window), ("negatives", negatives), ("epochs", epochs), ("workers", workers)):
        if value < 1:
            raise ValueError(f"{name} doit être >= 1, reçu {value}")
    if min_count < 1 or buckets < 0 or lr <= 0 or not 1 <= ngram_min <= ngram_max:
        raise ValueError("hyperparamètres invalides (min_count, buckets, lr ou bornes des n-grammes)")

    lines = [line.split() for line in corpus]
    counts = Counter(token for tokens in lines for token in tokens)
    vocab = sorted((w for w, c in counts.items() if c >= min_count), key=lambda w: (-counts[w], w))
    if not vocab:
        raise TrainingError(f"aucun mot n'atteint min_count={min_count}")
    index = {w: i for i, w in enumerate(vocab)}
    sentences = [
        np.asarray([index[t] for t in tokens if t in index], dtype=np.int64) for tokens in lines
    ]
    sentences = [s for s in sentences if len(s) > 1]

    rng = np.random.default_rng(seed)
    bound = 1.0 / dim
    word_rows = rng.uniform(-bound, bound, size=(len(vocab), dim))
    ngram_rows = rng.uniform(-bound, bound, size=(buckets, dim))
    out_rows = np.zeros((len(vocab), dim))
    sub_ptr, sub_ids = _subword_index(vocab, ngram_min, ngram_max, buckets)

    noise = np.asarray([counts[w] for w in vocab], dtype=np.float64) ** NOISE_EXPONENT
    cdf = np.cumsum(noise / noise.sum())
    cdf[-1] = 1.0

    total_words = epochs * sum(len(s) for s in sentences)
    logger.info(
        "🧠 Skipgram: %d mots, %d phrases, dim=%d, %d époques, %d worker(s)",
        len(vocab), len(sentences), dim, epochs, workers,
    )

    def train_sentences(batch, batch_rng, start, stride=1):
        # pas décroissant linéairement vers 0 sur l'ensemble des époques
        done = 0
        for sentence in batch:
            alpha = lr * max(0.0, 1.0 - (start + done * stride) / total_words)
            centers, contexts = _window_pairs(sentence, window, batch_rng)
            noise_ids = np.searchsorted(cdf, batch_rng.random((len(centers), negatives)), side="right")
            sgns_train_pairs(
                word_rows, ngram_rows, out_rows, centers, contexts,
                noise_ids.astype(np.int64), sub_ptr, sub_ids, alpha,
            )
            done += len(sentence)
        return done

    processed = 0
    for _ in tqdm(range(epochs), desc="skipgram", disable=None):
        if workers == 1:
            processed += train_sentences(sentences, rng, processed)
            continue
        shards = [sentences[k::workers] for k in range(workers)]
        seeds = np.random.SeedSequence(int(rng.integers(2**63))).spawn(workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(train_sentences, shard, np.random.default_rng(s), processed, workers)
                for shard, s in zip(shards, seeds)
            ]
            processed += sum(f.result() for f in futures)

    if not (np.isfinite(word_rows).all() and np.isfinite(ngram_rows).all()):
        raise TrainingError("divergence: valeurs non finies après entraînement, réduire lr")
    logger.info("✅ Skipgram terminé (%d mots traités)", processed)
    return WordVectors(tuple(vocab), word_rows, ngram_rows, ngram_min, ngram_max)
