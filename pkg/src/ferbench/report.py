"""Tables, CSV exports and figures from statistics and similarity reports.

Each figure is written next to a CSV holding exactly the plotted numbers;
the CSVs are the stable surface, the images carry no style contract.
"""

from __future__ import annotations

import json
import logging
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .core import AGE_GROUPS, EXPRESSIONS, GENDERS, atomic_write_text  # noqa: E402
from .similarity import SimilarityReport  # noqa: E402
from .stats import StatisticsBundle, csv_text, statistics_tables  # noqa: E402

log = logging.getLogger(__name__)


def fmt4(x) -> str:
    return "NA" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.4f}"


def local_global_rows(report: SimilarityReport, ls=None, gs=None) -> list[list[str]]:
    ls = report.ls if ls is None else ls
    gs = report.gs if gs is None else gs
    return [[d, fmt4(float(ls[i])), fmt4(float(gs[i]))] for i, d in enumerate(report.datasets)]


def paired_rows(report: SimilarityReport, ps=None) -> tuple[list[str], list[list[str]]]:
    ps = report.ps if ps is None else ps
    header = ["train_dataset", *report.datasets]
    rows = [[d, *(fmt4(float(v)) for v in ps[i])] for i, d in enumerate(report.datasets)]
    return header, rows


def write_similarity_csvs(report: SimilarityReport, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    written = []

    def put(name, header, rows):
        path = out_dir / name
        atomic_write_text(path, csv_text(header, rows))
        written.append(path)

    lg_header = ["dataset", "local_similarity", "global_similarity"]
    put("local_global.csv", lg_header, local_global_rows(report))
    put("paired_similarity.csv", *paired_rows(report))
    put("cross_similarity.csv", *paired_rows(report, report.cs))
    for m in report.models:
        put(f"local_global_{m}.csv", lg_header,
            local_global_rows(report, report.per_model_ls[m], report.per_model_gs[m]))
        put(f"paired_similarity_{m}.csv", *paired_rows(report, report.per_model_ps[m]))
    put("missing_pairs.csv", ["architecture_id", "train_dataset", "test_dataset"],
        [list(k) for k in report.missing_pairs])
    return written


def local_global_table(report: SimilarityReport) -> str:
    """Markdown table of per-dataset local and global similarity."""
    lines = ["| Dataset | Local Similarity | Global Similarity |", "|---|---|---|"]
    for d, ls, gs in local_global_rows(report):
        lines.append(f"| {d} | {ls} | {gs} |")
    return "\n".join(lines) + "\n"


def report_to_json(report: SimilarityReport) -> str:
    def clean(a):
        return [None if math.isnan(v) else v for v in np.asarray(a, dtype=float).ravel()]

    n = len(report.datasets)
    data = {
        "models": report.models,
        "datasets": report.datasets,
        "cs": [clean(report.cs[i]) for i in range(n)],
        "ls": clean(report.ls),
        "gs": clean(report.gs),
        "ps": [clean(report.ps[i]) for i in range(n)],
        "per_model_ls": {m: clean(v) for m, v in report.per_model_ls.items()},
        "per_model_gs": {m: clean(v) for m, v in report.per_model_gs.items()},
        "missing_pairs": [list(k) for k in report.missing_pairs],
    }
    return json.dumps(data, indent=1) + "\n"


# -- figures ---------------------------------------------------------------------

def _save(fig, path: Path, header, rows, written):
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    csv_path = path.with_suffix(".csv")
    atomic_write_text(csv_path, csv_text(header, rows))
    written.extend([path, csv_path])


def _stacked(ax, names, fractions, categories):
    left = np.zeros(len(names))
    for c in categories:
        vals = np.array([fractions[n].get(c, 0.0) for n in names])
        ax.barh(names, vals, left=left, label=c)
        left += vals
    ax.set_xlim(0, 1)
    ax.legend(fontsize=7, loc="lower right")


def render_statistics_figures(stats: StatisticsBundle, out_dir) -> tuple[list[Path], list[str]]:
    out_dir = Path(out_dir)
    written: list[Path] = []
    notices: list[str] = []
    tables = statistics_tables(stats)

    names = stats.datasets
    if names:
        fig, ax = plt.subplots(figsize=(6, 0.3 * len(names) + 1.5))
        ax.barh(names, [stats.image_count_per_dataset[n] for n in names])
        ax.set_xscale("log")
        ax.set_xlabel("images (log scale, after exclusion)")
        _save(fig, out_dir / "image_count.png", *tables["image_count"], written)
    else:
        notices.append("image_count: no datasets")

    if stats.user_count_per_dataset:
        users = sorted(stats.user_count_per_dataset)
        fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 0.3 * len(users) + 1.5))
        a1.barh(users, [stats.user_count_per_dataset[u] for u in users])
        a1.set_xlabel("users")
        a2.barh(users, [stats.images_per_user[u] for u in users])
        a2.set_xlabel("images per user")
        header = ["dataset", "user_count", "images_per_user"]
        rows = [[u, stats.user_count_per_dataset[u], f"{stats.images_per_user[u]:.6f}"]
                for u in users]
        _save(fig, out_dir / "users.png", header, rows, written)
    else:
        notices.append("users: no dataset carries user ids; figure skipped")

    if stats.age_histogram:
        ages = sorted(stats.age_histogram)
        fig, ax = plt.subplots(figsize=(7, 3))
        ax.bar(ages, [stats.age_histogram[a] for a in ages], width=1.0)
        ax.set_xlabel("age (1-year bins)")
        ax.set_ylabel("images")
        _save(fig, out_dir / "age_histogram.png", *tables["age_histogram"], written)
    else:
        notices.append("age_histogram: no ages; figure skipped")

    for key, cats in (("gender_distribution", GENDERS), ("age_group_distribution", AGE_GROUPS),
                      ("class_distribution", EXPRESSIONS)):
        source = getattr(stats, key)
        if not source:
            notices.append(f"{key}: no data; figure skipped")
            continue
        ds = sorted(source)
        if key == "gender_distribution":
            fractions = {d: dict(zip(GENDERS, source[d])) for d in ds}
        else:
            fractions = source
        fig, ax = plt.subplots(figsize=(7, 0.3 * len(ds) + 1.5))
        _stacked(ax, ds, fractions, cats)
        _save(fig, out_dir / f"{key}.png", *tables[key], written)

    for n in notices:
        log.warning(n)
    return written, notices


def render_similarity_figures(report: SimilarityReport, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    written: list[Path] = []
    names = report.datasets
    for metric, per_model in (("local_similarity", report.per_model_ls),
                              ("global_similarity", report.per_model_gs)):
        fig, ax = plt.subplots(figsize=(max(5, 0.5 * len(names) + 2), 3.5))
        width = 0.8 / max(1, len(report.models))
        x = np.arange(len(names))
        for k, m in enumerate(report.models):
            ax.bar(x + k * width, np.nan_to_num(per_model[m]), width, label=m)
        ax.set_xticks(x + 0.4 - width / 2, names, rotation=60, ha="right", fontsize=7)
        ax.set_ylim(0, 1)
        ax.set_ylabel(metric.replace("_", " "))
        ax.legend(fontsize=7)
        header = ["dataset", *report.models]
        rows = [[d, *(fmt4(float(per_model[m][i])) for m in report.models)]
                for i, d in enumerate(names)]
        _save(fig, out_dir / f"{metric}_per_network.png", header, rows, written)

    # rows = training dataset, columns = test dataset
    fig, ax = plt.subplots(figsize=(0.45 * len(names) + 3, 0.45 * len(names) + 2))
    im = ax.imshow(np.ma.masked_invalid(report.ps), cmap="viridis")
    ax.set_xticks(range(len(names)), names, rotation=60, ha="right", fontsize=7)
    ax.set_yticks(range(len(names)), names, fontsize=7)
    ax.set_xlabel("test dataset")
    ax.set_ylabel("train dataset")
    for i in range(len(names)):
        for j in range(len(names)):
            v = report.ps[i, j]
            if not math.isnan(v):
                ax.text(j, i, f"{v:.2f}", ha="center", va="center", fontsize=6, color="w")
    fig.colorbar(im, ax=ax, fraction=0.046)
    _save(fig, out_dir / "paired_similarity_heatmap.png", *paired_rows(report), written)
    return written


def render_figures(stats: StatisticsBundle | None, report: SimilarityReport | None,
                   out_dir) -> tuple[list[Path], list[str]]:
    written, notices = [], []
    if stats is not None:
        w, n = render_statistics_figures(stats, out_dir)
        written += w
        notices += n
    else:
        notices.append("statistics: not available; dataset figures skipped")
    if report is not None:
        written += render_similarity_figures(report, out_dir)
    else:
        notices.append("similarity: not available; metric figures skipped")
    return written, notices
