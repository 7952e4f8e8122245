import json
import logging
import re
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
import pandas as pd
from sklearn.model_selection import train_test_split

from vocab_transplant.errors import CorpusDecodeError, FormatError

logger = logging.getLogger(__name__)

USER_SENTINEL = "@USER"
URL_SENTINEL = "HTTPURL"

# @ + lettres/chiffres/underscore ; un @ isolé reste tel quel
_MENTION = r"(?<![\w@])@\w+"
# préfixe http(s):// ou www., jusqu'au prochain espace
_URL = r"(?<!\w)(?:[Hh][Tt][Tt][Pp][Ss]?://|[Ww][Ww][Ww]\.)\S+"
_SPAN_RE = re.compile(rf"(?P<url>{_URL})|(?P<mention>{_MENTION})|(?P<sentinel>\b{URL_SENTINEL}\b)")


# ========================================
# TYPES
# ========================================
@dataclass(frozen=True)
class TweetRecord:
    id: str
    text: str

    def __post_init__(self):
        if not self.id:
            raise ValueError("un tweet doit avoir un id non vide")


class EmojiMap(Mapping[str, str]):
    """Table emoji -> alias, appliquée par correspondance la plus longue d'abord."""

    def __init__(self, entries: Mapping[str, str]):
        for key, alias in entries.items():
            if not key:
                raise ValueError("clé d'emoji vide")
            if not alias or any(ch.isspace() for ch in alias):
                raise ValueError(f"alias invalide pour {key!r}: {alias!r}")
        self._entries = dict(entries)
        keys = sorted(self._entries, key=lambda k: (-len(k), k))
        self._pattern = re.compile("|".join(map(re.escape, keys))) if keys else None

    def __getitem__(self, key: str) -> str:
        return self._entries[key]

    def __iter__(self):
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def translate(self, text: str) -> str:
        if self._pattern is None:
            return text
        return self._pattern.sub(lambda m: f" {self._entries[m.group(0)]} ", text)


@dataclass(frozen=True)
class CorpusStats:
    n_read: int
    n_duplicates: int
    n_written: int
    n_dev: int = 0


# ========================================
# TABLE D'EMOJIS
# ========================================
def load_emoji_map(path: str | Path) -> EmojiMap:
    """Charge le TSV emoji -> alias (colonne 1 = emoji, colonne 2 = alias)."""
    path = Path(path)
    lines = pd.Series(path.read_text(encoding="utf-8").split("\n"), dtype=object).str.rstrip("\r")
    # index = numéro de ligne dans le fichier, lignes vides ignorées
    lines.index = lines.index + 1
    fields = lines[lines.str.strip() != ""].str.split("\t")

    entries: dict[str, str] = {}
    for line_no, parts in fields.items():
        if len(parts) != 2:
            raise FormatError(f"{len(parts)} colonnes au lieu de 2", path=path, line=line_no)
        key, alias = parts
        if not key:
            raise FormatError("emoji vide", path=path, line=line_no)
        if not alias or any(ch.isspace() for ch in alias):
            raise FormatError(f"alias invalide {alias!r}", path=path, line=line_no)
        if key in entries:
            raise FormatError(f"emoji en double {key!r}", path=path, line=line_no)
        entries[key] = alias
    logger.debug("📂 %d emojis chargés depuis %s", len(entries), path)
    return EmojiMap(entries)


def build_emoji_map(path: str | Path, language: str = "en") -> int:
    """Génère le TSV à partir du paquet `emoji`. Retourne le nombre d'entrées."""
    import emoji

    rows = []
    for symbol, data in emoji.EMOJI_DATA.items():
        alias = data.get(language)
        if not alias or any(ch.isspace() for ch in alias):
            continue
        rows.append((symbol, alias))
    rows.sort()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for symbol, alias in rows:
            f.write(f"{symbol}\t{alias}\n")
    logger.info("✅ %d alias d'emojis écrits dans %s", len(rows), path)
    return len(rows)


# ========================================
# NORMALISATION
# ========================================
@lru_cache(maxsize=4096)
def _simple_fold(ch: str) -> str:
    folded = ch.casefold()
    if len(folded) == 1:
        return folded
    # pliage complet sur plusieurs caractères (ß, İ, ﬀ...) : forme simple ou inchangé
    lowered = ch.lower()
    return lowered if len(lowered) == 1 else ch


def simple_casefold(text: str) -> str:
    """Pliage de casse Unicode simple, caractère par caractère, sans contexte."""
    return "".join(map(_simple_fold, text))


def normalize_tweet(raw: str | bytes, emoji_map: EmojiMap) -> str:
    """
    Normalise un tweet : mentions -> @USER, URLs -> HTTPURL, emojis -> alias,
    minuscules (sauf sentinelles), espaces compactés.
    """
    if isinstance(raw, (bytes, bytearray)):
        try:
            raw = bytes(raw).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorpusDecodeError(exc.start) from exc

    parts = []
    cursor = 0
    for match in _SPAN_RE.finditer(raw):
        parts.append(simple_casefold(emoji_map.translate(raw[cursor:match.start()])))
        parts.append(USER_SENTINEL if match.lastgroup == "mention" else URL_SENTINEL)
        cursor = match.end()
    parts.append(simple_casefold(emoji_map.translate(raw[cursor:])))
    return " ".join("".join(parts).split())


# ========================================
# DÉDOUBLONNAGE & SPLIT
# ========================================
def dedup_stream(records: Iterable[TweetRecord]) -> Iterator[TweetRecord]:
    """Garde la première occurrence de chaque id, dans l'ordre d'arrivée."""
    seen: set[str] = set()
    for record in records:
        if record.id in seen:
            continue
        seen.add(record.id)
        yield record


def split_holdout(records, holdout_fraction: float, seed: int):
    """
    Met de côté round(fraction × total) éléments pour le dev.
    L'ordre d'origine est conservé dans chacune des deux parties.
    """
    if not 0 < holdout_fraction < 1:
        raise ValueError(f"holdout_fraction doit être dans (0, 1), reçu {holdout_fraction}")
    records = list(records)
    n_dev = int(np.floor(holdout_fraction * len(records) + 0.5))
    if n_dev == 0:
        return records, []
    if n_dev == len(records):
        return [], records

    train_idx, dev_idx = train_test_split(
        np.arange(len(records)),
        test_size=n_dev,
        random_state=seed % 2**32,
        shuffle=True,
    )
    train = [records[i] for i in np.sort(train_idx)]
    dev = [records[i] for i in np.sort(dev_idx)]
    return train, dev


# ========================================
# LECTURE DES FICHIERS
# ========================================
def _decoded_lines(path: Path) -> Iterator[tuple[int, str]]:
    with open(path, "rb") as f:
        for line_no, raw in enumerate(f, start=1):
            try:
                yield line_no, raw.decode("utf-8").rstrip("\r\n")
            except UnicodeDecodeError as exc:
                raise CorpusDecodeError(exc.start, path=path, line=line_no) from exc


def read_records(path: str | Path, fmt: str = "auto") -> Iterator[TweetRecord]:
    """Lit du JSONL ({"id", "text"}) ou du texte brut (un tweet par ligne)."""
    path = Path(path)
    if fmt == "auto":
        fmt = "jsonl" if path.suffix.lower() in (".jsonl", ".json", ".ndjson") else "text"
    if fmt not in ("jsonl", "text"):
        raise ValueError(f"format de corpus inconnu: {fmt!r}")

    for line_no, line in _decoded_lines(path):
        if fmt == "text":
            yield TweetRecord(id=str(line_no), text=line)
            continue
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"JSON invalide ({exc.msg})", path=path, line=line_no) from exc
        if not isinstance(obj, dict) or "id" not in obj or "text" not in obj:
            raise FormatError("champs 'id' et 'text' attendus", path=path, line=line_no)
        if obj["id"] is None or str(obj["id"]) == "":
            raise FormatError("id vide", path=path, line=line_no)
        if not isinstance(obj["text"], str):
            raise FormatError("'text' doit être une chaîne", path=path, line=line_no)
        yield TweetRecord(id=str(obj["id"]), text=obj["text"])


def _write_lines(path: Path, lines: Iterable[str]) -> int:
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for line in lines:
            f.write(line + "\n")
            n += 1
    return n


def prepare_corpus(
    input_path: str | Path,
    output_path: str | Path,
    emoji_map: EmojiMap,
    fmt: str = "auto",
    dev_output: str | Path | None = None,
    holdout_fraction: float | None = None,
    seed: int = 0,
) -> CorpusStats:
    """Dédoublonne, normalise et écrit le corpus (et éventuellement le split dev)."""
    output_path = Path(output_path)
    logger.info("📂 Lecture du corpus %s", input_path)

    n_read = 0

    def counted(records):
        nonlocal n_read
        for record in records:
            n_read += 1
            yield record

    unique = dedup_stream(counted(read_records(input_path, fmt)))
    normalized = (normalize_tweet(r.text, emoji_map) for r in unique)

    if holdout_fraction is None:
        n_written = _write_lines(output_path, normalized)
        n_dev = 0
    else:
        if dev_output is None:
            raise ValueError("dev_output est requis quand holdout_fraction est fourni")
        train, dev = split_holdout(list(normalized), holdout_fraction, seed)
        n_written = _write_lines(output_path, train)
        n_dev = _write_lines(Path(dev_output), dev)

    stats = CorpusStats(
        n_read=n_read,
        n_duplicates=n_read - n_written - n_dev,
        n_written=n_written,
        n_dev=n_dev,
    )
    logger.info(
        "✅ %d tweets lus, %d doublons retirés, %d écrits (+%d dev)",
        stats.n_read, stats.n_duplicates, stats.n_written, stats.n_dev,
    )
    return stats
