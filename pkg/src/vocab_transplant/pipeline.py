"""Étapes du pipeline : preprocess -> train-vocab -> train-vectors -> transplant -> analyze."""

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

from vocab_transplant.analysis.report import TransplantReport, build_report, emit_report, write_histogram_html
from vocab_transplant.config import PipelineConfig, derive_seed
from vocab_transplant.errors import ConfigError
from vocab_transplant.etl.prepare_corpus import CorpusStats, load_emoji_map, prepare_corpus
from vocab_transplant.ml.tokenizer import Vocabulary, load_vocab, save_vocab, tokenize_text, train_wordpiece
from vocab_transplant.ml.transplant import (
    Strategy,
    align_vocabs,
    load_embeddings,
    reconcile_size,
    save_embeddings,
    transplant,
)
from vocab_transplant.ml.vectors import WordVectors, load_text, save_text, train_skipgram

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TransplantOutputs:
    embeddings: list[Path]
    reports: list[Path]
    report: TransplantReport


def _read_lines(path: Path) -> list[str]:
    with open(path, "r", encoding="utf-8") as f:
        return [line.rstrip("\n") for line in f]


# ========================================
# ÉTAPES
# ========================================
def run_preprocess(
    corpus: Path,
    output: Path,
    emoji_map_path: Path,
    fmt: str = "auto",
    dev_output: Path | None = None,
    holdout_fraction: float | None = None,
    seed: int = 0,
) -> CorpusStats:
    emoji_map = load_emoji_map(emoji_map_path)
    return prepare_corpus(
        corpus, output, emoji_map, fmt,
        dev_output=dev_output,
        holdout_fraction=holdout_fraction,
        seed=derive_seed(seed, "split"),
    )


def run_train_vocab(corpus: Path, output: Path, vocab_size: int, min_pair_freq: int, n_unused: int) -> Vocabulary:
    logger.info("📂 Chargement du corpus normalisé %s", corpus)
    vocab = train_wordpiece(_read_lines(corpus), vocab_size, min_pair_freq, n_unused=n_unused)
    save_vocab(vocab, output)
    logger.info("✅ Vocabulaire sauvegardé dans: %s", output)
    return vocab


def run_train_vectors(corpus: Path, output: Path, config: PipelineConfig, vocab: Vocabulary | None = None) -> WordVectors:
    """Entraîne les vecteurs skipgram, sur le corpus tokenisé par `vocab` si fourni."""
    lines = _read_lines(corpus)
    if vocab is not None:
        logger.info("🔤 Tokenisation WordPiece du corpus (%d lignes)", len(lines))
        lines = [" ".join(tokenize_text(line, vocab)) for line in lines]
    vectors = train_skipgram(
        lines,
        dim=config.vec_dim,
        window=config.vec_window,
        negatives=config.vec_negatives,
        epochs=config.vec_epochs,
        min_count=config.vec_min_count,
        ngram_min=config.vec_ngram_min,
        ngram_max=config.vec_ngram_max,
        buckets=config.vec_buckets,
        lr=config.vec_lr,
        seed=derive_seed(config.seed, "vectors"),
        workers=config.vec_workers,
    )
    save_text(vectors, output)
    logger.info("✅ Vecteurs sauvegardés dans: %s", output)
    return vectors


def run_transplant(
    source_vocab: Path,
    source_embeddings: Path,
    target_vocab: Path,
    output: Path,
    report_path: Path,
    config: PipelineConfig,
) -> TransplantOutputs:
    strategy = Strategy(config.strategy)
    if strategy is Strategy.PROJECTION and config.vectors is None:
        raise ConfigError("la stratégie fasttext-projection exige --vectors")

    src_vocab = load_vocab(source_vocab)
    src_emb = load_embeddings(source_embeddings, src_vocab)
    tgt_vocab = reconcile_size(src_vocab, load_vocab(target_vocab))
    align = align_vocabs(src_vocab, tgt_vocab)
    ft = load_text(config.vectors) if strategy is Strategy.PROJECTION else None

    result = transplant(
        strategy, align, src_emb,
        seed=derive_seed(config.seed, "transplant"),
        ft=ft,
        ridge=config.ridge,
        lo=config.uniform_lo,
        hi=config.uniform_hi,
    )
    report = build_report(
        align, strategy, result.provenance, result.fallback_count, include_provenance=config.provenance
    )
    # validation du rapport avant d'écrire quoi que ce soit
    report.validate()
    embeddings = save_embeddings(result.matrix, output, config.embeddings_format)
    reports = emit_report(report, report_path, config.report_format)
    logger.info("✅ Matrice adaptée sauvegardée dans: %s", embeddings[0])
    return TransplantOutputs(embeddings, reports, report)


def run_analyze(
    pairs: Sequence[tuple[str, Path, Path]],
    output: Path,
    fmt: str = "json",
    plot: Path | None = None,
    proportions: bool = False,
) -> dict[str, TransplantReport]:
    """
    Un rapport par paire (libellé, vocabulaire source, vocabulaire cible).
    Avec une seule paire le rapport va dans `output` ; sinon chaque paire écrit
    `<nom>_<libellé>`. La figure superpose les histogrammes de toutes les paires.
    """
    labels = [label for label, _, _ in pairs]
    if not pairs:
        raise ValueError("au moins une paire de vocabulaires est attendue")
    if len(set(labels)) != len(labels):
        raise ValueError(f"libellés en double: {', '.join(labels)}")

    reports: dict[str, TransplantReport] = {}
    for label, source_vocab, target_vocab in pairs:
        align = align_vocabs(load_vocab(source_vocab), load_vocab(target_vocab))
        report = build_report(align)
        path = output if len(pairs) == 1 else output.with_name(f"{output.stem}_{label}{output.suffix}")
        emit_report(report, path, fmt)
        logger.info("📊 %s: %d nouveaux types, %.2f sous-mots en moyenne", label, report.n_new, report.mean_subwords)
        reports[label] = report
    if plot is not None:
        write_histogram_html({label: r.histogram for label, r in reports.items()}, plot, proportions)
        logger.info("📈 Figure écrite dans: %s", plot)
    return reports


def run_all(config: PipelineConfig) -> TransplantOutputs:
    """Enchaîne toutes les étapes à partir d'une seule configuration."""
    config.validate(require=("corpus", "source_vocab", "source_embeddings"))
    interim = Path(config.interim_dir)
    processed = Path(config.output_dir)
    corpus_path = interim / "corpus.txt"

    run_preprocess(
        config.corpus, corpus_path, config.emoji_map, config.corpus_format,
        dev_output=interim / "dev.txt" if config.holdout_fraction else None,
        holdout_fraction=config.holdout_fraction,
        seed=config.seed,
    )
    vocab_path = processed / "vocab.txt"
    vocab = run_train_vocab(corpus_path, vocab_path, config.vocab_size, config.min_pair_freq, config.n_unused)

    if config.strategy == Strategy.PROJECTION.value and config.vectors is None:
        vectors_path = processed / "vectors.vec"
        run_train_vectors(corpus_path, vectors_path, config, vocab)
        config = config.override(vectors=vectors_path)

    suffix = ".bin" if config.embeddings_format == "binary" else ".txt"
    outputs = run_transplant(
        config.source_vocab,
        config.source_embeddings,
        vocab_path,
        processed / f"embeddings{suffix}",
        processed / f"report.{config.report_format}",
        config,
    )
    # histogramme en CSV en plus du rapport principal
    extra = emit_report(outputs.report, processed / "analysis.csv", "csv")
    if config.plot:
        write_histogram_html({"cible": outputs.report.histogram}, processed / "analysis.html")
    return TransplantOutputs(outputs.embeddings, outputs.reports + extra, outputs.report)
