"""Summary charts written next to the delimited comparison output."""

from __future__ import annotations

from collections import Counter
from pathlib import Path
from typing import Iterable

from matplotlib.figure import Figure
from matplotlib.backends.backend_agg import FigureCanvasAgg

from tflparity.compare import ComparisonReport, DivergenceCategory, SummaryMatrix, Verdict

_COLORS = {Verdict.PASS: "#2a9d8f", Verdict.FAIL: "#e76f51", Verdict.ERROR: "#6c757d", Verdict.SKIP: "#ced4da"}


def _save(fig: Figure, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    FigureCanvasAgg(fig)
    fig.savefig(path, dpi=100, metadata={"Software": None})
    return path


def parity_chart(summary: SummaryMatrix, path: str | Path) -> Path:
    rows = list(summary.rows)
    fig = Figure(figsize=(max(4.0, 0.45 * len(rows) + 2), 3.6))
    ax = fig.add_subplot()
    xs = range(len(rows))
    ax.bar(xs, [r.parity_pct for r in rows], color=[_COLORS[r.verdict] for r in rows])
    ax.axhline(summary.threshold, color="black", linestyle="--", linewidth=1)
    ax.set_xticks(list(xs), [r.entry_id for r in rows], rotation=60, ha="right", fontsize=7)
    ax.set_ylim(0, 105)
    ax.set_ylabel("cell parity (%)")
    ax.set_title(f"{summary.share_label} at or above {summary.threshold:g}%")
    fig.tight_layout()
    return _save(fig, Path(path))


def category_chart(reports: Iterable[ComparisonReport], path: str | Path) -> Path:
    counts: Counter = Counter()
    for r in reports:
        counts.update(r.histogram)
    cats = [c.value for c in DivergenceCategory if counts[c.value]]
    fig = Figure(figsize=(6.0, 0.35 * max(len(cats), 1) + 1.2))
    ax = fig.add_subplot()
    ax.barh(range(len(cats)), [counts[c] for c in cats], color="#264653")
    ax.set_yticks(range(len(cats)), cats, fontsize=7)
    ax.invert_yaxis()
    ax.set_xlabel("differing cells")
    if not cats:
        ax.text(0.5, 0.5, "no differences", ha="center", va="center", transform=ax.transAxes)
    fig.tight_layout()
    return _save(fig, Path(path))


def write_report_bundle(reports: list[ComparisonReport], out_dir: str | Path, threshold: float = 80.0) -> dict[str, Path]:
    """summary.csv, summary.json and the two PNG charts in ``out_dir``."""
    from tflparity.compare import summarize

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = summarize(reports, threshold)
    paths = {"csv": out / "summary.csv", "json": out / "summary.json"}
    paths["csv"].write_text(summary.to_csv(), encoding="utf-8")
    paths["json"].write_text(summary.to_json(), encoding="utf-8")
    paths["parity_png"] = parity_chart(summary, out / "parity.png")
    paths["categories_png"] = category_chart(reports, out / "categories.png")
    return paths
