import logging
from pathlib import Path
from typing import List, Optional

import typer

from vocab_transplant import pipeline
from vocab_transplant.config import (
    DEFAULT_EMOJI_MAP,
    INTERIM_DIR,
    PROCESSED_DIR,
    STRATEGIES,
    PipelineConfig,
    load_config,
    setup_logging,
)
from vocab_transplant.errors import VocabTransplantError
from vocab_transplant.etl.prepare_corpus import build_emoji_map
from vocab_transplant.ml.tokenizer import load_vocab

logger = logging.getLogger(__name__)

app = typer.Typer(help="Adaptation de vocabulaire et d'embeddings à un domaine cible.", no_args_is_help=True)

_DEFAULTS = PipelineConfig()


@app.callback()
def main():
    setup_logging()


def _fail(exc: Exception) -> None:
    typer.echo(f"❌ {exc}", err=True)
    raise typer.Exit(code=1)


def _base_config(config_path: Optional[Path]) -> PipelineConfig:
    return load_config(config_path) if config_path is not None else PipelineConfig()


@app.command()
def preprocess(
    corpus: Path = typer.Argument(..., help="Corpus brut (JSONL id/text ou texte)."),
    output: Path = typer.Option(INTERIM_DIR / "corpus.txt", "--output", "-o"),
    emoji_map: Path = typer.Option(DEFAULT_EMOJI_MAP, "--emoji-map"),
    fmt: str = typer.Option("auto", "--format", help="auto | jsonl | text"),
    dev_output: Optional[Path] = typer.Option(None, "--dev-output"),
    holdout_fraction: Optional[float] = typer.Option(None, "--holdout-fraction"),
    seed: int = typer.Option(_DEFAULTS.seed, "--seed"),
):
    """Dédoublonne et normalise un corpus de tweets."""
    try:
        if holdout_fraction is not None and dev_output is None:
            raise typer.BadParameter("--dev-output est requis avec --holdout-fraction")
        stats = pipeline.run_preprocess(corpus, output, emoji_map, fmt, dev_output, holdout_fraction, seed)
    except (VocabTransplantError, OSError, ValueError) as exc:
        _fail(exc)
    typer.echo(
        f"✅ {stats.n_read} lus, {stats.n_duplicates} doublons, {stats.n_written} écrits, {stats.n_dev} dev"
    )


@app.command("train-vocab")
def train_vocab(
    corpus: Path = typer.Argument(..., help="Corpus normalisé, un tweet par ligne."),
    output: Path = typer.Option(PROCESSED_DIR / "vocab.txt", "--output", "-o"),
    vocab_size: int = typer.Option(_DEFAULTS.vocab_size, "--vocab-size"),
    min_pair_freq: int = typer.Option(_DEFAULTS.min_pair_freq, "--min-pair-freq"),
    n_unused: int = typer.Option(_DEFAULTS.n_unused, "--n-unused"),
):
    """Entraîne un vocabulaire WordPiece."""
    try:
        vocab = pipeline.run_train_vocab(corpus, output, vocab_size, min_pair_freq, n_unused)
    except (VocabTransplantError, OSError, ValueError) as exc:
        _fail(exc)
    typer.echo(f"✅ {len(vocab)} types écrits dans {output}")


@app.command("train-vectors")
def train_vectors(
    corpus: Path = typer.Argument(..., help="Corpus normalisé."),
    output: Path = typer.Option(PROCESSED_DIR / "vectors.vec", "--output", "-o"),
    vocab: Optional[Path] = typer.Option(None, "--vocab", help="Tokeniser le corpus avec ce vocabulaire WordPiece."),
    config_path: Optional[Path] = typer.Option(None, "--config", "-c"),
    dim: Optional[int] = typer.Option(None, "--dim"),
    window: Optional[int] = typer.Option(None, "--window"),
    negatives: Optional[int] = typer.Option(None, "--negatives"),
    epochs: Optional[int] = typer.Option(None, "--epochs"),
    min_count: Optional[int] = typer.Option(None, "--min-count"),
    ngram_min: Optional[int] = typer.Option(None, "--ngram-min"),
    ngram_max: Optional[int] = typer.Option(None, "--ngram-max"),
    buckets: Optional[int] = typer.Option(None, "--buckets"),
    lr: Optional[float] = typer.Option(None, "--lr"),
    workers: Optional[int] = typer.Option(None, "--workers"),
    seed: Optional[int] = typer.Option(None, "--seed"),
):
    """Entraîne des vecteurs skipgram avec n-grammes de caractères."""
    try:
        config = _base_config(config_path).override(
            vec_dim=dim, vec_window=window, vec_negatives=negatives, vec_epochs=epochs,
            vec_min_count=min_count, vec_ngram_min=ngram_min, vec_ngram_max=ngram_max,
            vec_buckets=buckets, vec_lr=lr, vec_workers=workers, seed=seed,
        )
        wordpiece = load_vocab(vocab) if vocab is not None else None
        vectors = pipeline.run_train_vectors(corpus, output, config, wordpiece)
    except (VocabTransplantError, OSError, ValueError) as exc:
        _fail(exc)
    typer.echo(f"✅ {len(vectors)} vecteurs de dimension {vectors.dim} écrits dans {output}")


@app.command("transplant")
def transplant_cmd(
    source_vocab: Path = typer.Option(..., "--source-vocab"),
    source_embeddings: Path = typer.Option(..., "--source-embeddings"),
    target_vocab: Path = typer.Option(..., "--target-vocab"),
    strategy: Optional[str] = typer.Option(None, "--strategy", help=" | ".join(STRATEGIES)),
    vectors: Optional[Path] = typer.Option(None, "--vectors", help="Vecteurs fastText (format texte word2vec)."),
    output: Path = typer.Option(PROCESSED_DIR / "embeddings.txt", "--output", "-o"),
    report: Path = typer.Option(PROCESSED_DIR / "report.json", "--report"),
    report_format: Optional[str] = typer.Option(None, "--report-format", help="json | csv"),
    embeddings_format: Optional[str] = typer.Option(None, "--embeddings-format", help="text | binary"),
    ridge: Optional[float] = typer.Option(None, "--ridge"),
    seed: Optional[int] = typer.Option(None, "--seed"),
    provenance: Optional[bool] = typer.Option(None, "--provenance/--no-provenance"),
    config_path: Optional[Path] = typer.Option(None, "--config", "-c"),
):
    """Aligne les vocabulaires et initialise la matrice d'embeddings cible."""
    try:
        config = _base_config(config_path).override(
            strategy=strategy, vectors=vectors, ridge=ridge, seed=seed, provenance=provenance,
            report_format=report_format, embeddings_format=embeddings_format,
        ).validate()
    except (VocabTransplantError, OSError, ValueError) as exc:
        _fail(exc)
    if config.strategy == "fasttext-projection" and config.vectors is None:
        typer.echo("❌ la stratégie fasttext-projection exige des vecteurs (--vectors ou clé vectors)", err=True)
        raise typer.Exit(code=2)
    try:
        outputs = pipeline.run_transplant(source_vocab, source_embeddings, target_vocab, output, report, config)
    except (VocabTransplantError, OSError, ValueError) as exc:
        _fail(exc)
    r = outputs.report
    typer.echo(f"✅ {r.n_shared} partagés, {r.n_new} nouveaux ({r.pct_new:.1f}%), {r.fallback_count} replis")


def _analysis_pairs(source_vocab: list[Path], target_vocab: list[Path], label: list[str]) -> list[tuple[str, Path, Path]]:
    if len(source_vocab) != len(target_vocab):
        raise typer.BadParameter(
            f"{len(source_vocab)} --source-vocab pour {len(target_vocab)} --target-vocab"
        )
    if not label:
        label = ["cible"] if len(source_vocab) == 1 else [f"paire{i + 1}" for i in range(len(source_vocab))]
    if len(label) != len(source_vocab):
        raise typer.BadParameter(f"{len(label)} --label pour {len(source_vocab)} paires de vocabulaires")
    return list(zip(label, source_vocab, target_vocab))


@app.command()
def analyze(
    source_vocab: List[Path] = typer.Option(..., "--source-vocab", help="Répétable : une entrée par paire."),
    target_vocab: List[Path] = typer.Option(..., "--target-vocab", help="Répétable, dans le même ordre."),
    output: Path = typer.Option(PROCESSED_DIR / "analysis.json", "--output", "-o"),
    fmt: str = typer.Option("json", "--format", help="json | csv"),
    plot: Optional[Path] = typer.Option(None, "--plot", help="Figure HTML comparant les histogrammes."),
    label: Optional[List[str]] = typer.Option(None, "--label", help="Libellé de chaque paire."),
    proportions: bool = typer.Option(False, "--proportions", help="Proportions plutôt qu'effectifs sur la figure."),
):
    """Statistiques de recouvrement et histogramme des sous-mots des nouveaux types."""
    pairs = _analysis_pairs(list(source_vocab), list(target_vocab), list(label or []))
    try:
        reports = pipeline.run_analyze(pairs, output, fmt, plot, proportions)
    except (VocabTransplantError, OSError, ValueError) as exc:
        _fail(exc)
    for name, r in reports.items():
        typer.echo(f"✅ {name}: {r.n_shared} partagés, {r.n_new} nouveaux, {r.mean_subwords:.2f} sous-mots en moyenne")


@app.command("run-all")
def run_all(
    config_path: Path = typer.Option(Path("config/settings.yaml"), "--config", "-c"),
    seed: Optional[int] = typer.Option(None, "--seed"),
    strategy: Optional[str] = typer.Option(None, "--strategy"),
    output_dir: Optional[Path] = typer.Option(None, "--output-dir"),
):
    """Enchaîne preprocess, train-vocab, (train-vectors), transplant et analyze."""
    try:
        config = load_config(config_path).override(seed=seed, strategy=strategy, output_dir=output_dir)
        outputs = pipeline.run_all(config)
    except (VocabTransplantError, OSError, ValueError) as exc:
        _fail(exc)
    for path in outputs.embeddings + outputs.reports:
        typer.echo(f"✅ {path}")


@app.command("build-emoji-map")
def build_emoji_map_cmd(
    output: Path = typer.Option(DEFAULT_EMOJI_MAP, "--output", "-o"),
    language: str = typer.Option("en", "--language"),
):
    """Génère la table emoji -> alias à partir du paquet emoji."""
    n = build_emoji_map(output, language)
    typer.echo(f"✅ {n} alias écrits dans {output}")


if __name__ == "__main__":
    app()
