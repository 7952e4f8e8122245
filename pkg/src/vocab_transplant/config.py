import hashlib
import logging
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any

import yaml

from vocab_transplant.errors import ConfigError

# ========================================
# CHEMINS
# ========================================
BASE_DIR = Path(__file__).resolve().parents[2]
CONFIG_DIR = BASE_DIR / "config"
DATA_DIR = BASE_DIR / "data"
RAW_DIR = DATA_DIR / "raw"
INTERIM_DIR = DATA_DIR / "interim"
PROCESSED_DIR = DATA_DIR / "processed"

DEFAULT_SETTINGS = CONFIG_DIR / "settings.yaml"
DEFAULT_EMOJI_MAP = CONFIG_DIR / "emoji_map.tsv"

STRATEGIES = ("uniform", "normal", "fasttext-projection", "subword-average")
LOG_ENV_VAR = "VT_LOG"

_PATH_KEYS = ("corpus", "emoji_map", "source_vocab", "source_embeddings", "vectors", "output_dir", "interim_dir")
_INPUT_KEYS = ("corpus", "emoji_map", "source_vocab", "source_embeddings", "vectors")


def setup_logging(level: str | int | None = None) -> None:
    """Configure le logger racine. Le niveau vient de VT_LOG si non fourni."""
    raw = level if level is not None else os.environ.get(LOG_ENV_VAR, "INFO")
    resolved: int | None
    if isinstance(raw, int) or str(raw).strip().isdigit():
        resolved = int(raw)
    else:
        resolved = logging.getLevelName(str(raw).strip().upper())
        if not isinstance(resolved, int):
            resolved = None
    logging.basicConfig(
        level=resolved if resolved is not None else logging.INFO,
        format="%(asctime)s - %(levelname)s - %(message)s",
        force=True,
    )
    if resolved is None:
        logging.getLogger(__name__).warning("⚠️ Niveau de log inconnu %r, INFO utilisé", raw)


def derive_seed(seed: int, stage: str) -> int:
    """Graine stable (64 bits non signés) pour une étape donnée du pipeline."""
    digest = hashlib.blake2b(f"{seed}:{stage}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class PipelineConfig:
    # chemins
    corpus: Path | None = None
    corpus_format: str = "auto"
    emoji_map: Path = DEFAULT_EMOJI_MAP
    source_vocab: Path | None = None
    source_embeddings: Path | None = None
    vectors: Path | None = None
    output_dir: Path = PROCESSED_DIR
    interim_dir: Path = INTERIM_DIR

    strategy: str = "subword-average"
    seed: int = 42

    # corpus
    holdout_fraction: float | None = None

    # vocabulaire WordPiece
    vocab_size: int = 32000
    min_pair_freq: int = 2
    n_unused: int = 100

    # skipgram
    vec_dim: int = 50
    vec_window: int = 5
    vec_negatives: int = 5
    vec_epochs: int = 5
    vec_min_count: int = 2
    vec_ngram_min: int = 3
    vec_ngram_max: int = 6
    vec_buckets: int = 2**17
    vec_lr: float = 0.05
    vec_workers: int = 1

    # transplantation
    ridge: float = 1e-8
    uniform_lo: float = -1.0
    uniform_hi: float = 1.0
    embeddings_format: str = "text"

    # rapports
    report_format: str = "json"
    provenance: bool = False
    plot: bool = False

    def override(self, **changes: Any) -> "PipelineConfig":
        """Les options de la CLI écrasent la configuration (None = pas d'option)."""
        kept = {k: v for k, v in changes.items() if v is not None}
        for key in kept.keys() & set(_PATH_KEYS):
            kept[key] = Path(kept[key])
        return replace(self, **kept)

    def validate(self, *, require: tuple[str, ...] = ()) -> "PipelineConfig":
        for key in require:
            if getattr(self, key) is None:
                raise ConfigError(f"clé obligatoire manquante: {key}")
        for key in _INPUT_KEYS:
            path = getattr(self, key)
            if path is not None and not Path(path).exists():
                raise ConfigError(f"{key}: fichier introuvable {path}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"stratégie inconnue {self.strategy!r} (attendu: {', '.join(STRATEGIES)})")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError(f"la graine doit être un entier 64 bits, reçu {self.seed!r}")
        if self.holdout_fraction is not None and not 0 < self.holdout_fraction < 1:
            raise ConfigError(f"holdout_fraction hors de (0, 1): {self.holdout_fraction}")
        if self.report_format not in ("json", "csv"):
            raise ConfigError(f"report_format inconnu: {self.report_format!r}")
        if self.embeddings_format not in ("text", "binary"):
            raise ConfigError(f"embeddings_format inconnu: {self.embeddings_format!r}")
        return self


def load_config(path: str | Path = DEFAULT_SETTINGS) -> PipelineConfig:
    """Lit un settings.yaml plat. Les chemins relatifs partent du dossier du fichier."""
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: YAML invalide ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: un mapping clé/valeur plat est attendu")

    known = {f.name for f in fields(PipelineConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{path}: clés inconnues {', '.join(unknown)}")

    for key, value in data.items():
        if isinstance(value, (dict, list)):
            raise ConfigError(f"{path}: la clé {key} doit avoir une valeur simple")
        if key in _PATH_KEYS and value is not None:
            candidate = Path(value)
            data[key] = candidate if candidate.is_absolute() else (path.parent / candidate).resolve()
    return PipelineConfig(**data)
