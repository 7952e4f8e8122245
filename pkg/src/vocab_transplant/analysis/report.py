import json
import logging
import math
from collections import Counter
from collections.abc import Iterable, Mapping
from dataclasses import asdict, dataclass, field
from pathlib import Path

import pandas as pd
import plotly.graph_objects as go

from vocab_transplant.errors import ReportValidationError
from vocab_transplant.ml.tokenizer import Vocabulary
from vocab_transplant.ml.transplant import Provenance, Strategy, VocabAlignment, source_pieces

logger = logging.getLogger(__name__)

_TOLERANCE = 1e-9
_STRATEGY_NAMES = {s.value for s in Strategy}
_PROVENANCE_NAMES = {p.value for p in Provenance}

COLORS = ["#2563EB", "#7C3AED", "#10B981", "#F59E0B", "#EF4444", "#06B6D4"]


@dataclass
class TransplantReport:
    n_shared: int
    n_new: int
    pct_new: float
    strategy: str | None
    fallback_count: int
    histogram: dict[int, int]
    mean_subwords: float
    effective_target_size: int
    source_size: int = 0
    target_size: int = 0
    histogram_proportions: dict[int, float] = field(default_factory=dict)
    per_token_provenance: dict[str, str] | None = None

    def problems(self) -> list[str]:
        """Liste des invariants violés (vide si le rapport est cohérent)."""
        issues = []
        if self.n_shared < 0 or self.n_new < 0 or self.fallback_count < 0:
            issues.append("compteurs négatifs")
        if self.n_shared + self.n_new != self.effective_target_size:
            issues.append(
                f"n_shared + n_new = {self.n_shared + self.n_new} ≠ taille effective {self.effective_target_size}"
            )
        total = sum(self.histogram.values())
        if total != self.n_new:
            issues.append(f"l'histogramme totalise {total}, attendu n_new = {self.n_new}")
        if any(k < 1 or v < 0 for k, v in self.histogram.items()):
            issues.append("clé ou fréquence d'histogramme invalide")
        if self.n_new and total == self.n_new:
            expected = sum(k * v for k, v in self.histogram.items()) / self.n_new
            if not math.isclose(self.mean_subwords, expected, rel_tol=_TOLERANCE, abs_tol=_TOLERANCE):
                issues.append(f"mean_subwords = {self.mean_subwords}, attendu {expected}")
        elif not self.n_new and self.mean_subwords != 0.0:
            issues.append("mean_subwords doit valoir 0 sans nouveau type")
        if self.effective_target_size:
            expected_pct = 100.0 * self.n_new / self.effective_target_size
            if not math.isclose(self.pct_new, expected_pct, rel_tol=_TOLERANCE, abs_tol=_TOLERANCE):
                issues.append(f"pct_new = {self.pct_new}, attendu {expected_pct}")
        if self.strategy is not None and self.strategy not in _STRATEGY_NAMES:
            issues.append(f"stratégie inconnue {self.strategy!r}")
        if self.per_token_provenance is not None:
            if len(self.per_token_provenance) != self.effective_target_size:
                issues.append("la provenance ne couvre pas tous les types effectifs")
            if set(self.per_token_provenance.values()) - _PROVENANCE_NAMES:
                issues.append("valeur de provenance inconnue")
        return issues

    def validate(self) -> "TransplantReport":
        issues = self.problems()
        if issues:
            raise ReportValidationError("rapport incohérent: " + "; ".join(issues))
        return self


# ========================================
# HISTOGRAMME DES SOUS-MOTS
# ========================================
def subword_histogram(new_types: Iterable[str], src_vocab: Vocabulary) -> dict[int, int]:
    """Nombre de morceaux de chaque nouveau type sous le tokenizer source ([UNK] compte 1)."""
    counts = Counter(len(source_pieces(t, src_vocab).pieces) for t in new_types)
    return dict(sorted(counts.items()))


def mean_subword_count(hist: Mapping[int, int]) -> float:
    total = sum(hist.values())
    if not hist or total == 0:
        raise ValueError("histogramme vide")
    return sum(k * v for k, v in hist.items()) / total


def build_report(
    align: VocabAlignment,
    strategy: Strategy | str | None = None,
    provenance: Mapping[str, Provenance | str] | None = None,
    fallback_count: int = 0,
    include_provenance: bool = False,
) -> TransplantReport:
    histogram = subword_histogram(align.new_in_order(), align.src_vocab)
    n_new = len(align.new)
    effective = align.effective_target_size
    per_token = None
    if include_provenance and provenance is not None:
        per_token = {t: Provenance(p).value for t, p in provenance.items()}
    report = TransplantReport(
        n_shared=len(align.shared),
        n_new=n_new,
        pct_new=100.0 * n_new / effective if effective else 0.0,
        strategy=Strategy(strategy).value if strategy is not None else None,
        fallback_count=fallback_count,
        histogram=histogram,
        mean_subwords=mean_subword_count(histogram) if n_new else 0.0,
        effective_target_size=effective,
        source_size=len(align.src_vocab),
        target_size=len(align.tgt_vocab),
        histogram_proportions={k: v / n_new for k, v in histogram.items()},
        per_token_provenance=per_token,
    )
    logger.info(
        "📊 %d partagés, %d nouveaux (%.1f%%), %.2f sous-mots en moyenne",
        report.n_shared, report.n_new, report.pct_new, report.mean_subwords,
    )
    return report


# ========================================
# ÉCRITURE DES RAPPORTS
# ========================================
def emit_report(report: TransplantReport, path: str | Path, fmt: str = "json") -> list[Path]:
    """
    JSON complet, ou deux CSV : <nom>_summary.csv (une ligne) et
    <nom>_histogram.csv (« subwords,count », trié par nombre de sous-mots).
    """
    if fmt not in ("json", "csv"):
        raise ValueError(f"format de rapport inconnu: {fmt!r}")
    report.validate()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    if fmt == "json":
        payload = asdict(report)
        payload["histogram"] = {str(k): v for k, v in sorted(report.histogram.items())}
        payload["histogram_proportions"] = {str(k): v for k, v in sorted(report.histogram_proportions.items())}
        path.write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        return [path]

    summary_path = path.with_name(f"{path.stem}_summary.csv")
    histogram_path = path.with_name(f"{path.stem}_histogram.csv")
    summary = {
        k: v for k, v in asdict(report).items()
        if k not in ("histogram", "histogram_proportions", "per_token_provenance")
    }
    pd.DataFrame([summary]).to_csv(summary_path, index=False, lineterminator="\n")
    hist_df = pd.DataFrame(sorted(report.histogram.items()), columns=["subwords", "count"])
    hist_df.to_csv(histogram_path, index=False, lineterminator="\n")
    return [summary_path, histogram_path]


def load_report(path: str | Path) -> TransplantReport:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    payload["histogram"] = {int(k): v for k, v in payload["histogram"].items()}
    payload["histogram_proportions"] = {int(k): v for k, v in payload.get("histogram_proportions", {}).items()}
    return TransplantReport(**payload)


# ========================================
# COMPARAISON ET FIGURE
# ========================================
def histogram_frame(histograms: Mapping[str, Mapping[int, int]]) -> pd.DataFrame:
    """Une ligne par (nom, nombre de sous-mots) avec effectif et proportion."""
    records = []
    for name, hist in histograms.items():
        total = sum(hist.values())
        for k, v in sorted(hist.items()):
            records.append({"name": name, "subwords": k, "count": v, "proportion": v / total if total else 0.0})
    return pd.DataFrame(records, columns=["name", "subwords", "count", "proportion"])


def histogram_figure(histograms: Mapping[str, Mapping[int, int]], proportions: bool = False) -> go.Figure:
    df = histogram_frame(histograms)
    y = "proportion" if proportions else "count"
    fig = go.Figure()
    for i, (name, group) in enumerate(df.groupby("name", sort=False)):
        fig.add_trace(go.Bar(x=group["subwords"], y=group[y], name=name, marker_color=COLORS[i % len(COLORS)]))
    fig.update_layout(
        barmode="group",
        title="Nombre de sous-mots des nouveaux types",
        xaxis_title="#sous-mots (1 = [UNK])",
        yaxis_title="proportion" if proportions else "effectif",
        plot_bgcolor="white",
    )
    return fig


def write_histogram_html(histograms: Mapping[str, Mapping[int, int]], path: str | Path, proportions: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    histogram_figure(histograms, proportions).write_html(path, include_plotlyjs="cdn")
    return path
