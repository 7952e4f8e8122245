import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from scipy import linalg

from vocab_transplant.errors import FormatError, ProjectionError, ReconciliationError, SolverError
from vocab_transplant.ml.tokenizer import UNK, TokenizationResult, Vocabulary, load_vocab, save_vocab, tokenize_word, unused_token
from vocab_transplant.ml.vectors import WordVectors, read_text_rows

logger = logging.getLogger(__name__)


class Strategy(str, Enum):
    UNIFORM = "uniform"
    NORMAL = "normal"
    PROJECTION = "fasttext-projection"
    SUBWORD_AVERAGE = "subword-average"


class Provenance(str, Enum):
    COPIED = "copied"
    SAMPLED = "sampled"
    PROJECTED = "projected"
    AVERAGED = "averaged"
    UNK_FALLBACK = "unk-fallback"


# ========================================
# TYPES
# ========================================
@dataclass(frozen=True)
class EmbeddingMatrix:
    vocab: Vocabulary
    rows: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] != len(self.vocab) or rows.shape[1] < 1:
            raise ValueError(f"matrice {rows.shape} incompatible avec un vocabulaire de {len(self.vocab)} types")
        if not np.isfinite(rows).all():
            raise ValueError("valeurs non finies dans la matrice d'embeddings")
        object.__setattr__(self, "rows", rows)

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def row(self, token: str) -> np.ndarray:
        return self.rows[self.vocab.id_of[token]]


@dataclass(frozen=True)
class VocabAlignment:
    shared: frozenset[str]
    new: frozenset[str]
    src_id: dict[str, int] = field(compare=False)
    tgt_id: dict[str, int] = field(compare=False)
    src_vocab: Vocabulary = field(compare=False, repr=False)
    tgt_vocab: Vocabulary = field(compare=False, repr=False)

    @property
    def effective_target_size(self) -> int:
        return len(self.shared) + len(self.new)

    def new_in_order(self) -> list[str]:
        return sorted(self.new, key=self.tgt_id.__getitem__)

    def shared_in_order(self) -> list[str]:
        return sorted(self.shared, key=self.tgt_id.__getitem__)


@dataclass(frozen=True)
class DistributionFit:
    mu: np.ndarray
    sigma: np.ndarray


@dataclass(frozen=True)
class ProjectionModel:
    W: np.ndarray
    residual: float
    ridge: float
    n_fit: int = 0
    n_skipped: int = 0


@dataclass(frozen=True)
class TransplantResult:
    matrix: EmbeddingMatrix
    strategy: Strategy
    provenance: dict[str, Provenance]
    fallback_count: int = 0


# ========================================
# ALIGNEMENT DES VOCABULAIRES
# ========================================
def align_vocabs(src: Vocabulary, tgt: Vocabulary) -> VocabAlignment:
    """Partage la cible en types partagés / nouveaux (hors [unused-x])."""
    shared, new = set(), set()
    for token in tgt.tokens:
        if tgt.is_unused(token):
            continue
        if token in src.id_of and not src.is_unused(token):
            shared.add(token)
        else:
            new.add(token)
    return VocabAlignment(
        shared=frozenset(shared),
        new=frozenset(new),
        src_id={t: src.id_of[t] for t in shared},
        tgt_id={t: tgt.id_of[t] for t in shared | new},
        src_vocab=src,
        tgt_vocab=tgt,
    )


def reconcile_size(src: Vocabulary, tgt: Vocabulary) -> Vocabulary:
    """Ramène la cible à la taille de la source en retirant / ajoutant des [unused-x]."""
    surplus = len(tgt) - len(src)
    if surplus == 0:
        return tgt

    tokens = list(tgt.tokens)
    if surplus > 0:
        unused_ids = [i for i, t in enumerate(tokens) if tgt.is_unused(t)]
        if len(unused_ids) < surplus:
            raise ReconciliationError(shortfall=surplus - len(unused_ids), surplus=surplus, available=len(unused_ids))
        dropped = set(unused_ids[-surplus:])
        tokens = [t for i, t in enumerate(tokens) if i not in dropped]
        logger.info("✂️ %d tokens [unused-x] retirés de la cible", surplus)
    else:
        present = set(tokens)
        k = 0
        while len(tokens) < len(src):
            candidate = unused_token(k)
            if candidate not in present:
                tokens.append(candidate)
                present.add(candidate)
            k += 1
        logger.info("➕ %d tokens [unused-x] ajoutés à la cible", -surplus)
    return Vocabulary(tuple(tokens), tgt.specials, tgt.continuation_prefix, tgt.unused_prefix)


# ========================================
# INITIALISATION
# ========================================
def _base_rows(align: VocabAlignment, src_emb: EmbeddingMatrix):
    """Lignes partagées copiées ; [unused-x] = ligne source homonyme, sinon zéro."""
    tgt = align.tgt_vocab
    rows = np.zeros((len(tgt), src_emb.dim))
    provenance: dict[str, Provenance] = {}
    for token in align.shared_in_order():
        rows[align.tgt_id[token]] = src_emb.rows[align.src_id[token]]
        provenance[token] = Provenance.COPIED
    for i, token in enumerate(tgt.tokens):
        if tgt.is_unused(token) and token in src_emb.vocab.id_of:
            rows[i] = src_emb.rows[src_emb.vocab.id_of[token]]
    return rows, provenance


def _finish(align, rows, provenance, strategy, fallback_count=0) -> TransplantResult:
    ordered = {t: provenance[t] for t in sorted(provenance, key=align.tgt_id.__getitem__)}
    matrix = EmbeddingMatrix(align.tgt_vocab, rows)
    return TransplantResult(matrix, strategy, ordered, fallback_count)


def _check_source(align: VocabAlignment, src_emb: EmbeddingMatrix) -> None:
    if src_emb.vocab is not align.src_vocab and src_emb.vocab != align.src_vocab:
        raise ValueError("la matrice source n'est pas alignée sur le vocabulaire source de l'alignement")


def uniform_rows(align, src_emb, seed: int, lo: float = -1.0, hi: float = 1.0) -> TransplantResult:
    if not lo < hi:
        raise ValueError(f"bornes invalides: lo={lo} >= hi={hi}")
    _check_source(align, src_emb)
    rows, provenance = _base_rows(align, src_emb)
    new = align.new_in_order()
    rng = np.random.default_rng(seed)
    # rng.uniform peut arrondir à hi ; on borne à [lo, hi)
    sampled = rng.uniform(lo, hi, size=(len(new), src_emb.dim))
    sampled = np.minimum(sampled, np.nextafter(hi, lo))
    for token, row in zip(new, sampled):
        rows[align.tgt_id[token]] = row
        provenance[token] = Provenance.SAMPLED
    return _finish(align, rows, provenance, Strategy.UNIFORM)


def init_uniform(align, src_emb, seed: int, lo: float = -1.0, hi: float = 1.0) -> EmbeddingMatrix:
    """Nouveaux types tirés i.i.d. dans U[lo, hi)."""
    return uniform_rows(align, src_emb, seed, lo, hi).matrix


def fit_distribution(src_emb: EmbeddingMatrix) -> DistributionFit:
    """Moyenne et écart-type (population) par dimension."""
    rows = src_emb.rows
    if rows.shape[0] < 2:
        raise ValueError("au moins 2 lignes sont nécessaires pour estimer μ et σ")
    mu = rows.mean(axis=0)
    sigma = rows.std(axis=0, ddof=0)
    # colonnes constantes : μ exact, σ nul
    constant = np.ptp(rows, axis=0) == 0
    mu[constant] = rows[0, constant]
    sigma[constant] = 0.0
    return DistributionFit(mu=mu, sigma=sigma)


def normal_rows(align, src_emb, seed: int) -> TransplantResult:
    _check_source(align, src_emb)
    fit = fit_distribution(src_emb)
    rows, provenance = _base_rows(align, src_emb)
    new = align.new_in_order()
    rng = np.random.default_rng(seed)
    sampled = fit.mu + fit.sigma * rng.standard_normal((len(new), src_emb.dim))
    for token, row in zip(new, sampled):
        rows[align.tgt_id[token]] = row
        provenance[token] = Provenance.SAMPLED
    return _finish(align, rows, provenance, Strategy.NORMAL)


def init_normal(align, src_emb, seed: int) -> EmbeddingMatrix:
    """Nouveaux types tirés dans N(μ[d], σ[d]) estimés sur la matrice source."""
    return normal_rows(align, src_emb, seed).matrix


def source_pieces(token: str, src_vocab: Vocabulary) -> TokenizationResult:
    """Tokenise un type cible avec le tokenizer source (mode continuation pour ##x)."""
    prefix = src_vocab.continuation_prefix
    if token.startswith(prefix) and len(token) > len(prefix):
        return tokenize_word(token[len(prefix):], src_vocab, continuation=True)
    return tokenize_word(token, src_vocab)


def _average_row(token, src_emb, src_vocab):
    result = source_pieces(token, src_vocab)
    if result.is_unk:
        return src_emb.rows[src_emb.vocab.id_of[UNK]], Provenance.UNK_FALLBACK
    ids = [src_emb.vocab.id_of[p] for p in result.pieces]
    return src_emb.rows[ids].mean(axis=0), Provenance.AVERAGED


def subword_average_rows(align, src_emb, src_vocab: Vocabulary | None = None) -> TransplantResult:
    _check_source(align, src_emb)
    src_vocab = src_vocab if src_vocab is not None else src_emb.vocab
    if src_vocab != src_emb.vocab:
        raise ValueError("src_vocab et la matrice source ne correspondent pas")
    rows, provenance = _base_rows(align, src_emb)
    for token in align.new_in_order():
        rows[align.tgt_id[token]], provenance[token] = _average_row(token, src_emb, src_vocab)
    return _finish(align, rows, provenance, Strategy.SUBWORD_AVERAGE)


def init_subword_average(align, src_emb, src_vocab: Vocabulary | None = None) -> EmbeddingMatrix:
    """Chaque nouveau type = moyenne des lignes source de ses morceaux (tokenizer source)."""
    return subword_average_rows(align, src_emb, src_vocab).matrix


def fit_projection(ft: WordVectors, src_emb: EmbeddingMatrix, shared, ridge: float = 1e-8) -> ProjectionModel:
    """
    Moindres carrés régularisés : (FᵀF + ridge·I) W = FᵀB, F = vecteurs fastText,
    B = lignes source, sur les types partagés présents dans `ft`.
    """
    if ridge < 0:
        raise ValueError(f"ridge doit être >= 0, reçu {ridge}")
    fit_set = [t for t in shared if t in ft.index and t in src_emb.vocab.id_of]
    fit_set.sort(key=src_emb.vocab.id_of.__getitem__)
    n_skipped = len(set(shared)) - len(fit_set)
    if not fit_set:
        raise ProjectionError("aucun type partagé présent dans les vecteurs fastText")
    if n_skipped:
        logger.info("ℹ️ %d types partagés absents des vecteurs fastText, ignorés", n_skipped)
    if len(fit_set) < ft.dim:
        logger.warning("⚠️ %d types pour ajuster une projection de dimension %d", len(fit_set), ft.dim)

    inputs = ft.input_matrix()
    F = inputs[[ft.index[t] for t in fit_set]]
    B = src_emb.rows[[src_emb.vocab.id_of[t] for t in fit_set]]
    gram = F.T @ F + ridge * np.eye(ft.dim)
    try:
        factor = linalg.cho_factor(gram)
        W = linalg.cho_solve(factor, F.T @ B)
    except linalg.LinAlgError as exc:
        raise SolverError(f"système singulier ({exc}); essayer ridge > 0") from exc
    if not np.isfinite(W).all():
        raise SolverError("solution non finie; essayer ridge > 0")
    residual = float(np.sum((F @ W - B) ** 2))
    logger.info("📐 Projection ajustée sur %d types, résidu %.6g", len(fit_set), residual)
    return ProjectionModel(W=W, residual=residual, ridge=ridge, n_fit=len(fit_set), n_skipped=n_skipped)


def projection_rows(align, src_emb, ft: WordVectors, model: ProjectionModel) -> TransplantResult:
    _check_source(align, src_emb)
    if model.W.shape != (ft.dim, src_emb.dim):
        raise ValueError(
            f"W de forme {model.W.shape}, attendu ({ft.dim}, {src_emb.dim})"
        )
    rows, provenance = _base_rows(align, src_emb)
    inputs = ft.input_matrix()
    fallback = 0
    for token in align.new_in_order():
        i = align.tgt_id[token]
        if token in ft.index:
            rows[i] = inputs[ft.index[token]] @ model.W
            provenance[token] = Provenance.PROJECTED
        else:
            rows[i], provenance[token] = _average_row(token, src_emb, src_emb.vocab)
            fallback += 1
    if fallback:
        logger.info("ℹ️ %d nouveaux types sans vecteur fastText, moyenne des sous-mots utilisée", fallback)
    return _finish(align, rows, provenance, Strategy.PROJECTION, fallback)


def init_projection(align, src_emb, ft: WordVectors, model: ProjectionModel) -> EmbeddingMatrix:
    """Nouveaux types = E_FT(x)·W ; sans vecteur fastText, repli sur la moyenne des sous-mots."""
    return projection_rows(align, src_emb, ft, model).matrix


def transplant(
    strategy: Strategy | str,
    align: VocabAlignment,
    src_emb: EmbeddingMatrix,
    seed: int = 0,
    ft: WordVectors | None = None,
    model: ProjectionModel | None = None,
    ridge: float = 1e-8,
    lo: float = -1.0,
    hi: float = 1.0,
) -> TransplantResult:
    strategy = Strategy(strategy)
    logger.info(
        "🔁 Transplantation (%s): %d partagés, %d nouveaux", strategy.value, len(align.shared), len(align.new)
    )
    if strategy is Strategy.UNIFORM:
        return uniform_rows(align, src_emb, seed, lo, hi)
    if strategy is Strategy.NORMAL:
        return normal_rows(align, src_emb, seed)
    if strategy is Strategy.SUBWORD_AVERAGE:
        return subword_average_rows(align, src_emb)
    if ft is None:
        raise ValueError("la stratégie fasttext-projection exige des vecteurs fastText")
    if model is None:
        model = fit_projection(ft, src_emb, align.shared, ridge)
    return projection_rows(align, src_emb, ft, model)


# ========================================
# LECTURE / ÉCRITURE DES MATRICES
# ========================================
def _is_binary(path: Path) -> bool:
    return path.suffix.lower() in (".bin", ".json")


def save_embeddings(matrix: EmbeddingMatrix, path: str | Path, fmt: str | None = None) -> list[Path]:
    """
    Texte word2vec, ou binaire float32 little-endian + en-tête JSON
    {"rows", "dim", "vocab_file"} à côté (même nom, suffixe .json).
    """
    path = Path(path)
    fmt = fmt or ("binary" if _is_binary(path) else "text")
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "text":
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(f"{len(matrix.vocab)} {matrix.dim}\n")
            for token, row in zip(matrix.vocab.tokens, matrix.rows):
                f.write(token + " " + " ".join(f"{x:.9g}" for x in row) + "\n")
        return [path]
    if fmt != "binary":
        raise ValueError(f"format de matrice inconnu: {fmt!r}")

    data_path = path.with_suffix(".bin")
    header_path = path.with_suffix(".json")
    vocab_path = path.with_suffix(".vocab.txt")
    matrix.rows.astype("<f4").tofile(data_path)
    save_vocab(matrix.vocab, vocab_path)
    header = {"rows": len(matrix.vocab), "dim": matrix.dim, "vocab_file": vocab_path.name}
    header_path.write_text(json.dumps(header) + "\n", encoding="utf-8")
    return [data_path, header_path, vocab_path]


def load_embeddings(path: str | Path, vocab: Vocabulary | None = None) -> EmbeddingMatrix:
    path = Path(path)
    if not _is_binary(path):
        tokens, rows = read_text_rows(path)
        if vocab is None:
            try:
                vocab = Vocabulary(tuple(tokens))
            except ValueError as exc:
                raise FormatError(str(exc), path=path) from exc
        elif list(vocab.tokens) != tokens:
            raise FormatError("les tokens de la matrice ne suivent pas le vocabulaire fourni", path=path)
        return EmbeddingMatrix(vocab, rows)

    header_path = path.with_suffix(".json")
    try:
        header = json.loads(header_path.read_text(encoding="utf-8"))
        n_rows, dim = int(header["rows"]), int(header["dim"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"en-tête JSON invalide ({exc})", path=header_path) from exc
    if vocab is None:
        if not header.get("vocab_file"):
            raise FormatError("vocab_file absent de l'en-tête", path=header_path)
        vocab = load_vocab(header_path.parent / header["vocab_file"])
    data = np.fromfile(path.with_suffix(".bin"), dtype="<f4")
    if data.size != n_rows * dim:
        raise FormatError(f"{data.size} valeurs lues, {n_rows}×{dim} attendues", path=path.with_suffix(".bin"))
    if len(vocab) != n_rows:
        raise FormatError(f"{n_rows} lignes pour un vocabulaire de {len(vocab)} types", path=header_path)
    return EmbeddingMatrix(vocab, data.reshape(n_rows, dim).astype(np.float64))
