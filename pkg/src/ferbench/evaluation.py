"""Cross-dataset evaluation, macro-F1 and the fold-averaged performance tensor."""

from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import DatasetManifest, SampleRecord, atomic_write_text, label_order
from .errors import IntegrityError, UndefinedScoreError

RESULTS_HEADER = ["model_id", "architecture_id", "train_dataset", "fold_index", "test_dataset",
                  "n_test", "classes_used", "macro_f1", "per_class_f1"]


@dataclass
class EvalResult:
    model_id: str
    architecture_id: str
    train_dataset: str
    fold_index: int
    test_dataset: str
    classes_used: tuple[str, ...]
    n_test: int
    confusion: list[list[int]] | None
    per_class_f1: dict[str, float]
    macro_f1: float

    @property
    def key(self) -> tuple[str, str, int, str]:
        return (self.architecture_id, self.train_dataset, self.fold_index, self.test_dataset)


@dataclass
class SkippedEval:
    """A (model, test set) pair with no shared classes; a missing value, not zero."""
    model_id: str
    architecture_id: str
    train_dataset: str
    fold_index: int
    test_dataset: str
    reason: str = "empty_class_intersection"

    @property
    def key(self) -> tuple[str, str, int, str]:
        return (self.architecture_id, self.train_dataset, self.fold_index, self.test_dataset)


# -- F1 ------------------------------------------------------------------------

def per_class_f1(confusion) -> list[float | None]:
    """F1 per class from a rows=true, columns=predicted matrix.

    Zero-support classes yield None; a zero column sum gives precision 0.
    """
    cm = np.asarray(confusion, dtype=np.int64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ValueError(f"confusion matrix must be square, got shape {cm.shape}")
    if (cm < 0).any():
        raise ValueError("confusion matrix has negative entries")
    out: list[float | None] = []
    for c in range(cm.shape[0]):
        support = int(cm[c].sum())
        if support == 0:
            out.append(None)
            continue
        tp = int(cm[c, c])
        predicted = int(cm[:, c].sum())
        precision = tp / predicted if predicted else 0.0
        recall = tp / support
        denom = precision + recall
        out.append(2 * precision * recall / denom if denom else 0.0)
    return out


def macro_f1(confusion) -> float:
    scores = [f for f in per_class_f1(confusion) if f is not None]
    if not scores:
        raise UndefinedScoreError("no class has any true samples")
    return sum(scores) / len(scores)


def confusion_matrix(y_true, y_pred, classes) -> list[list[int]]:
    index = {c: i for i, c in enumerate(classes)}
    cm = [[0] * len(classes) for _ in classes]
    for t, p in zip(y_true, y_pred):
        cm[index[t]][index[p]] += 1
    return cm


# -- evaluation ------------------------------------------------------------------

def class_intersection_filter(class_set_trained, test_manifest: DatasetManifest,
                              sample_ids=None) -> tuple[list[SampleRecord], tuple[str, ...]]:
    """Keep test samples whose label the model was trained on.

    Returns the kept samples and the classes actually used. ``sample_ids``
    restricts the test set further (e.g. to a held-out fold).
    """
    trained = set(class_set_trained)
    keep = [s for s in test_manifest.included()
            if s.label in trained and (sample_ids is None or s.sample_id in sample_ids)]
    classes_used = tuple(label_order(s.label for s in keep))
    return keep, classes_used


def result_from_predictions(meta: dict, test_dataset: str, classes_used, y_true, y_pred) -> EvalResult:
    cm = confusion_matrix(y_true, y_pred, classes_used)
    f1s = per_class_f1(cm)
    return EvalResult(
        model_id=meta["model_id"],
        architecture_id=meta["architecture_id"],
        train_dataset=meta["train_dataset"],
        fold_index=int(meta["fold_index"]),
        test_dataset=test_dataset,
        classes_used=tuple(classes_used),
        n_test=len(y_true),
        confusion=cm,
        per_class_f1={c: f for c, f in zip(classes_used, f1s) if f is not None},
        macro_f1=macro_f1(cm),
    )


def evaluate_model(handle, test_manifest: DatasetManifest, processed_root, model=None,
                   sample_ids=None, batch_size: int = 64) -> EvalResult | SkippedEval:
    """Score a trained model on a test manifest under the class-intersection rule.

    ``model`` overrides loading the handle's weights; it must map a
    (N, 1, H, W) batch to logits ordered like ``handle.class_set_trained``.
    """
    from .training.trainer import load_images, load_trained_model, predict

    meta = {"model_id": handle.model_id, "architecture_id": handle.architecture_id,
            "train_dataset": handle.train_dataset, "fold_index": handle.fold_index}
    trained = list(handle.class_set_trained)
    samples, classes_used = class_intersection_filter(trained, test_manifest, sample_ids)
    if not samples:
        return SkippedEval(test_dataset=test_manifest.name, **meta)
    if model is None:
        model = load_trained_model(handle)
    images = load_images(processed_root, test_manifest.name, [s.sample_id for s in samples])
    allowed = [trained.index(c) for c in classes_used]
    pred_idx = predict(model, images, allowed, batch_size)
    y_pred = [trained[i] for i in pred_idx]
    y_true = [s.label for s in samples]
    return result_from_predictions(meta, test_manifest.name, classes_used, y_true, y_pred)


# -- results store -----------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def results_csv_text(results) -> str:
    rows = sorted((r for r in results if isinstance(r, EvalResult)), key=lambda r: r.key)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULTS_HEADER)
    for r in rows:
        writer.writerow([
            r.model_id, r.architecture_id, r.train_dataset, r.fold_index, r.test_dataset,
            r.n_test, ";".join(r.classes_used), _fmt(r.macro_f1),
            ";".join(f"{c}={_fmt(v)}" for c, v in r.per_class_f1.items()),
        ])
    return buf.getvalue()


def write_results_csv(results, path) -> None:
    atomic_write_text(path, results_csv_text(results))


def read_results_csv(path) -> list[EvalResult]:
    out = []
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            per_class = {}
            if row["per_class_f1"]:
                for pair in row["per_class_f1"].split(";"):
                    label, value = pair.split("=", 1)
                    per_class[label] = float(value)
            out.append(EvalResult(
                model_id=row["model_id"], architecture_id=row["architecture_id"],
                train_dataset=row["train_dataset"], fold_index=int(row["fold_index"]),
                test_dataset=row["test_dataset"],
                classes_used=tuple(c for c in row["classes_used"].split(";") if c),
                n_test=int(row["n_test"]), confusion=None, per_class_f1=per_class,
                macro_f1=float(row["macro_f1"]),
            ))
    return out


class ResultsStore:
    """One JSON file per (arch, train, fold, test) key, each written atomically."""

    def __init__(self, root):
        self.root = Path(root)

    def path_for(self, key) -> Path:
        arch, train, fold, test = key
        return self.root / "evals" / arch / train / str(fold) / f"{test}.json"

    def put(self, result: EvalResult | SkippedEval) -> Path:
        data = asdict(result)
        data["skipped"] = isinstance(result, SkippedEval)
        path = self.path_for(result.key)
        atomic_write_text(path, json.dumps(data, sort_keys=True, indent=1) + "\n")
        return path

    def has(self, key) -> bool:
        return self.path_for(key).exists()

    def all(self) -> list[EvalResult | SkippedEval]:
        out = []
        for path in sorted((self.root / "evals").glob("*/*/*/*.json")):
            data = json.loads(path.read_text(encoding="utf-8"))
            if data.pop("skipped"):
                out.append(SkippedEval(**data))
            else:
                data["classes_used"] = tuple(data["classes_used"])
                out.append(EvalResult(**data))
        return out


# -- performance tensor ---------------------------------------------------------------

@dataclass
class PerformanceTensor:
    scores: dict[tuple[str, str, str], float] = field(default_factory=dict)
    fold_counts: dict[tuple[str, str, str], int] = field(default_factory=dict)
    missing: list[tuple[str, str, str]] = field(default_factory=list)

    @property
    def models(self) -> list[str]:
        return sorted({k[0] for k in self.scores} | {k[0] for k in self.missing})

    @property
    def datasets(self) -> list[str]:
        names = set()
        for m, a, b in list(self.scores) + self.missing:
            names.update((a, b))
        return sorted(names)

    def get(self, model: str, d_train: str, d_test: str) -> float | None:
        return self.scores.get((model, d_train, d_test))

    def __len__(self):
        return len(self.scores)


def build_performance_tensor(results) -> PerformanceTensor:
    """Average macro-F1 over folds per (architecture, train, test)."""
    per_key: dict[tuple, float] = {}
    skipped = set()
    for r in results:
        if isinstance(r, SkippedEval):
            skipped.add((r.architecture_id, r.train_dataset, r.test_dataset))
            continue
        if r.key in per_key and per_key[r.key] != r.macro_f1:
            raise IntegrityError(f"conflicting duplicate results for {r.key}: "
                                 f"{per_key[r.key]} vs {r.macro_f1}")
        per_key[r.key] = r.macro_f1

    grouped = defaultdict(list)
    for (arch, train, fold, test), value in sorted(per_key.items()):
        grouped[(arch, train, test)].append(value)
    tensor = PerformanceTensor()
    for key, values in sorted(grouped.items()):
        tensor.scores[key] = sum(values) / len(values)
        tensor.fold_counts[key] = len(values)
    tensor.missing = sorted(skipped - set(grouped))
    return tensor


def tensor_from_scores(scores: dict[tuple[str, str, str], float]) -> PerformanceTensor:
    """Wrap hand-built (model, train, test) -> score entries, one fold each."""
    return PerformanceTensor(dict(scores), {k: 1 for k in scores}, [])
