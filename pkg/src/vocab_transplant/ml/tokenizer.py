import logging
import unicodedata
from collections import Counter, defaultdict
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from tqdm import tqdm

from vocab_transplant.errors import FormatError, TrainingError

logger = logging.getLogger(__name__)

PAD, UNK, CLS, SEP, MASK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"
DEFAULT_SPECIALS = (PAD, UNK, CLS, SEP, MASK)
CONTINUATION_PREFIX = "##"
UNUSED_PREFIX = "[unused"
MAX_WORD_CHARS = 100

# @ et # restent collés aux mentions / hashtags
_KEPT_SYMBOLS = {"@", "#"}


def unused_token(index: int) -> str:
    return f"{UNUSED_PREFIX}-{index}]"


# ========================================
# VOCABULAIRE
# ========================================
@dataclass(frozen=True)
class Vocabulary:
    """Liste ordonnée de sous-mots ; l'id d'un token est sa position."""

    tokens: tuple[str, ...]
    specials: tuple[str, ...] = DEFAULT_SPECIALS
    continuation_prefix: str = CONTINUATION_PREFIX
    unused_prefix: str = UNUSED_PREFIX
    id_of: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "specials", tuple(self.specials))
        id_of: dict[str, int] = {}
        for i, token in enumerate(self.tokens):
            if not token:
                raise ValueError(f"token vide à l'id {i}")
            if token in id_of:
                raise ValueError(f"token en double {token!r} (ids {id_of[token]} et {i})")
            id_of[token] = i
        missing = [s for s in self.specials if s not in id_of]
        if missing:
            raise ValueError(f"tokens spéciaux absents: {', '.join(missing)}")
        object.__setattr__(self, "id_of", id_of)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: object) -> bool:
        return token in self.id_of

    def __iter__(self):
        return iter(self.tokens)

    def is_unused(self, token: str) -> bool:
        return token.startswith(self.unused_prefix)

    def is_special(self, token: str) -> bool:
        return token in self.specials

    @property
    def unused_tokens(self) -> list[str]:
        return [t for t in self.tokens if self.is_unused(t)]

    @property
    def unk_id(self) -> int:
        return self.id_of[UNK]

    def encode(self, pieces: Iterable[str]) -> list[int]:
        return [self.id_of.get(p, self.unk_id) for p in pieces]


@dataclass(frozen=True)
class TokenizationResult:
    pieces: tuple[str, ...]
    is_unk: bool = False

    def __len__(self) -> int:
        return len(self.pieces)


def save_vocab(vocab: Vocabulary, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for token in vocab.tokens:
            f.write(token + "\n")


def load_vocab(
    path: str | Path,
    specials: Sequence[str] = DEFAULT_SPECIALS,
    continuation_prefix: str = CONTINUATION_PREFIX,
    unused_prefix: str = UNUSED_PREFIX,
) -> Vocabulary:
    """Un token par ligne, id = numéro de ligne à partir de 0."""
    path = Path(path)
    try:
        text = path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"UTF-8 invalide à l'octet {exc.start}", path=path) from exc

    tokens: list[str] = []
    first_line: dict[str, int] = {}
    for line_no, token in enumerate(text.splitlines(), start=1):
        if not token:
            raise FormatError("token vide", path=path, line=line_no)
        if token in first_line:
            raise FormatError(
                f"token en double {token!r} (déjà vu ligne {first_line[token]})", path=path, line=line_no
            )
        first_line[token] = line_no
        tokens.append(token)

    missing = [s for s in specials if s not in first_line]
    if missing:
        raise FormatError(f"tokens spéciaux absents: {', '.join(missing)}", path=path)
    return Vocabulary(tuple(tokens), tuple(specials), continuation_prefix, unused_prefix)


# ========================================
# PRÉ-TOKENISATION
# ========================================
def _is_punctuation(ch: str) -> bool:
    if ch in _KEPT_SYMBOLS:
        return False
    return unicodedata.category(ch)[0] in ("P", "S")


def pre_tokenize(line: str) -> list[str]:
    """Découpe sur les espaces puis isole chaque caractère de ponctuation."""
    words = []
    for chunk in line.split():
        current = []
        for ch in chunk:
            if _is_punctuation(ch):
                if current:
                    words.append("".join(current))
                    current = []
                words.append(ch)
            else:
                current.append(ch)
        if current:
            words.append("".join(current))
    return words


# ========================================
# TOKENISATION (plus long préfixe d'abord)
# ========================================
def tokenize_word(word: str, vocab: Vocabulary, continuation: bool = False) -> TokenizationResult:
    """
    Segmentation WordPiece gloutonne. Avec `continuation=True`, le mot est traité
    comme la suite d'un mot : le premier morceau porte aussi le préfixe.
    """
    if not word:
        raise ValueError("mot vide")
    if any(ch.isspace() for ch in word):
        raise ValueError(f"le mot contient un espace: {word!r}")
    if len(word) > MAX_WORD_CHARS:
        return TokenizationResult((UNK,), is_unk=True)

    prefix = vocab.continuation_prefix
    pieces = []
    start = 0
    while start < len(word):
        end = len(word)
        piece = None
        while start < end:
            candidate = word[start:end]
            if start > 0 or continuation:
                candidate = prefix + candidate
            if candidate in vocab.id_of:
                piece = candidate
                break
            end -= 1
        if piece is None:
            return TokenizationResult((UNK,), is_unk=True)
        pieces.append(piece)
        start = end
    return TokenizationResult(tuple(pieces))


def tokenize_text(line: str, vocab: Vocabulary) -> list[str]:
    tokens = []
    for word in pre_tokenize(line):
        tokens.extend(tokenize_word(word, vocab).pieces)
    return tokens


def detokenize(pieces: Sequence[str], prefix: str = CONTINUATION_PREFIX) -> str:
    return "".join(p[len(prefix):] if p.startswith(prefix) else p for p in pieces)


# ========================================
# ENTRAÎNEMENT
# ========================================
def _merge_pair(symbols: list[str], left: str, right: str, merged: str) -> list[str]:
    out = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == left and symbols[i + 1] == right:
            out.append(merged)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return out


class _PairStatistics:
    """
    Fréquences des symboles et des paires adjacentes, pondérées par la
    fréquence des mots, et index paire -> mots qui la contiennent. Une fusion
    ne recompte que les mots touchés.
    """

    def __init__(self, splits: dict[str, list[str]], counts: Counter):
        self.splits = splits
        self.counts = counts
        self.symbol_freq: Counter = Counter()
        self.pair_freq: Counter = Counter()
        self.where: dict[tuple[str, str], set[str]] = defaultdict(set)
        for word, symbols in splits.items():
            self._add(word, symbols)

    def _add(self, word: str, symbols: list[str]) -> None:
        freq = self.counts[word]
        for symbol in symbols:
            self.symbol_freq[symbol] += freq
        for pair in zip(symbols, symbols[1:]):
            self.pair_freq[pair] += freq
            self.where[pair].add(word)

    def _remove(self, word: str, symbols: list[str]) -> None:
        freq = self.counts[word]
        for symbol in symbols:
            self.symbol_freq[symbol] -= freq
        for pair in zip(symbols, symbols[1:]):
            self.pair_freq[pair] -= freq
            if self.pair_freq[pair] <= 0:
                del self.pair_freq[pair]
            words = self.where.get(pair)
            if words is not None:
                words.discard(word)
                if not words:
                    del self.where[pair]

    def merge(self, left: str, right: str, merged: str) -> None:
        for word in list(self.where.get((left, right), ())):
            symbols = self.splits[word]
            self._remove(word, symbols)
            self.splits[word] = _merge_pair(symbols, left, right, merged)
            self._add(word, self.splits[word])


def train_wordpiece(
    corpus: Iterable[str],
    target_size: int,
    min_pair_freq: int = 2,
    specials: Sequence[str] = DEFAULT_SPECIALS,
    n_unused: int = 0,
    continuation_prefix: str = CONTINUATION_PREFIX,
) -> Vocabulary:
    """
    Entraîne un vocabulaire WordPiece : spéciaux, [unused-x], alphabet, puis
    fusions choisies par score freq(paire) / (freq(gauche) × freq(droite)).
    Égalités départagées par ordre lexicographique de la chaîne fusionnée.
    """
    if min_pair_freq < 1:
        raise ValueError(f"min_pair_freq doit être >= 1, reçu {min_pair_freq}")
    if n_unused < 0:
        raise ValueError(f"n_unused doit être >= 0, reçu {n_unused}")

    counts: Counter = Counter()
    for line in corpus:
        counts.update(pre_tokenize(line))
    if not counts:
        raise TrainingError("corpus vide: aucun mot à partir duquel entraîner")

    # forme nue de chaque caractère vu, forme ## de ceux vus en milieu de mot
    chars = set()
    inner_chars = set()
    for word in counts:
        chars.update(word)
        inner_chars.update(word[1:])
    alphabet = sorted(chars) + sorted(continuation_prefix + ch for ch in inner_chars)

    head = list(specials) + [unused_token(i) for i in range(n_unused)]
    reserved = len(head) + len(alphabet)
    if target_size <= reserved:
        raise ValueError(
            f"target_size={target_size} trop petit: {len(specials)} spéciaux + {n_unused} unused "
            f"+ {len(alphabet)} caractères"
        )

    tokens = head + [t for t in alphabet if t not in head]
    known = set(tokens)
    splits = {
        word: [word[0]] + [continuation_prefix + ch for ch in word[1:]]
        for word in counts
    }

    logger.info("🔤 Entraînement WordPiece: %d mots distincts, alphabet de %d symboles", len(counts), len(alphabet))
    stats = _PairStatistics(splits, counts)
    progress = tqdm(total=target_size - len(tokens), desc="wordpiece", disable=None)
    while len(tokens) < target_size:
        best = None
        for (left, right), freq in stats.pair_freq.items():
            if freq < min_pair_freq:
                continue
            merged = left + (right[len(continuation_prefix):] if right.startswith(continuation_prefix) else right)
            score = freq / (stats.symbol_freq[left] * stats.symbol_freq[right])
            key = (-score, merged, left)
            if best is None or key < best[0]:
                best = (key, left, right, merged)
        if best is None:
            break

        _, left, right, merged = best
        stats.merge(left, right, merged)
        if merged not in known:
            tokens.append(merged)
            known.add(merged)
            progress.update(1)
    progress.close()

    n_merged = len(tokens) - reserved
    next_unused = n_unused
    while len(tokens) < target_size:
        candidate = unused_token(next_unused)
        next_unused += 1
        if candidate not in known:
            tokens.append(candidate)
            known.add(candidate)

    logger.info(
        "✅ Vocabulaire de %d types (%d fusions, %d [unused-x] de remplissage)",
        len(tokens), n_merged, next_unused - n_unused,
    )
    return Vocabulary(tuple(tokens), tuple(specials), continuation_prefix, UNUSED_PREFIX)
