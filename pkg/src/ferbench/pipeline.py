"""Pipeline stages. Each reads the previous stage's artifacts under output_root."""

from __future__ import annotations

import importlib
import json
import logging
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

from PIL import Image

from . import annotate as ann
from .config import ADAPTER_ROLES, RunConfig
from .core import (DatasetManifest, SampleRecord, atomic_write_text, processed_image_path,
                   read_manifest, write_manifest)
from .datasets import RawDataset, VideoClip, media_file, read_layout
from .errors import FerBenchError, SamplingError
from .evaluation import (ResultsStore, SkippedEval, build_performance_tensor, evaluate_model,
                         read_results_csv, write_results_csv)
from .normalize import (ClassMap, Unmapped, aggregate_user_demographics, align_and_crop,
                        apply_exclusion, assign_age_group, frame_roles, sample_frames, unify_class)
from .normalize.frames import PASSTHROUGH
from .report import (local_global_table, render_figures, report_to_json, write_similarity_csvs)
from .similarity import build_similarity_report
from .stats import compute_statistics, csv_text, export_statistics
from .training import TrainedModelHandle, folds_from_json, folds_to_json, make_folds, train_model

log = logging.getLogger(__name__)

STAGES = ["ingest", "frames", "classes", "annotated", "age_groups", "excluded", "preprocessed"]


class Workspace:
    """Filesystem layout of one run."""

    def __init__(self, root):
        self.root = Path(root)

    def manifest(self, stage: str, dataset: str) -> Path:
        n = STAGES.index(stage) + 1
        return self.root / "manifests" / f"{n:02d}_{stage}" / f"{dataset}.jsonl"

    def videos(self, dataset: str) -> Path:
        return self.manifest("ingest", dataset).with_suffix(".videos.jsonl")

    @property
    def processed(self) -> Path:
        return self.root / "processed"

    def split(self, dataset: str) -> Path:
        return self.root / "splits" / f"{dataset}.json"

    def model_dir(self, dataset: str, arch: str, fold: int) -> Path:
        return self.root / "models" / dataset / arch / str(fold)

    def job_spec(self, dataset: str, arch: str, fold: int) -> Path:
        return self.root / "jobs" / dataset / arch / f"{fold}.json"

    @property
    def results(self) -> Path:
        return self.root / "results"

    @property
    def results_csv(self) -> Path:
        return self.results / "results.csv"

    @property
    def stats(self) -> Path:
        return self.root / "stats"

    @property
    def metrics(self) -> Path:
        return self.root / "metrics"

    @property
    def report(self) -> Path:
        return self.root / "report"


def _selected(cfg: RunConfig, datasets=None) -> list[str]:
    names = sorted(cfg.datasets)
    if datasets:
        unknown = set(datasets) - set(names)
        if unknown:
            raise FerBenchError(f"unknown dataset(s): {', '.join(sorted(unknown))}")
        names = [n for n in names if n in datasets]
    return names


def _transform_stage(cfg, datasets, src, dst, fn) -> list[Path]:
    ws = Workspace(cfg.output_root)
    written = []
    for name in _selected(cfg, datasets):
        manifest = read_manifest(ws.manifest(src, name))
        out = fn(cfg, cfg.datasets[name], manifest)
        write_manifest(out, ws.manifest(dst, name))
        written.append(ws.manifest(dst, name))
    return written


# -- normalization stages ------------------------------------------------------------

def stage_ingest(cfg: RunConfig, datasets=None) -> list[Path]:
    ws = Workspace(cfg.output_root)
    written = []
    for name in _selected(cfg, datasets):
        dcfg = cfg.datasets[name]
        raw: RawDataset = read_layout(dcfg.layout, name, dcfg.root)
        if not raw.images and not raw.videos:
            raise FerBenchError(f"{name}: no samples found under {dcfg.root}")
        write_manifest(DatasetManifest(name, dcfg.provenance, raw.images), ws.manifest("ingest", name))
        videos = "".join(json.dumps(v.to_dict()) + "\n" for v in raw.videos)
        atomic_write_text(ws.videos(name), videos)
        written.append(ws.manifest("ingest", name))
    return written


def expand_clip(clip: VideoClip, strategy: str) -> list[SampleRecord]:
    if strategy == PASSTHROUGH:
        raise SamplingError(f"video {clip.video_id!r} in a dataset configured as passthrough")
    indices = sample_frames(clip.frame_count, strategy, clip.video_id)
    out = []
    for idx, role in zip(indices, frame_roles(strategy)):
        out.append(SampleRecord(
            dataset=clip.dataset, sample_id=f"{clip.video_id}_f{idx:05d}",
            media_path=clip.media_path, media_type="video", frame_index=idx,
            label_raw="neutral" if role == "neutral" else clip.label_raw,
            user_id=clip.user_id, age_years=clip.age_years, gender=clip.gender,
            age_group=clip.age_group,
        ))
    return out


def stage_sample_frames(cfg: RunConfig, datasets=None) -> list[Path]:
    ws = Workspace(cfg.output_root)
    written = []
    for name in _selected(cfg, datasets):
        manifest = read_manifest(ws.manifest("ingest", name))
        samples = list(manifest.samples)
        vpath = ws.videos(name)
        if vpath.exists():
            for line in vpath.read_text(encoding="utf-8").split("\n"):
                if line.strip():
                    clip = VideoClip(**json.loads(line))
                    samples.extend(expand_clip(clip, cfg.datasets[name].sampling))
        out = replace(manifest, samples=samples)
        write_manifest(out, ws.manifest("frames", name))
        written.append(ws.manifest("frames", name))
    return written


def _unify(cfg, dcfg, manifest):
    cmap = ClassMap.from_csv(cfg.class_map_path) if cfg.class_map_path else ClassMap.default()
    samples = []
    for s in manifest.samples:
        label = unify_class(s.label_raw, s.dataset, cmap)
        samples.append(replace(s, label=None if isinstance(label, Unmapped) else label))
    return replace(manifest, samples=samples)


def stage_unify_classes(cfg, datasets=None):
    return _transform_stage(cfg, datasets, "frames", "classes", _unify)


class _NoAdapter(ann.FaceDetector, ann.LandmarkPoseEstimator, ann.AgeGenderEstimator):
    def detect_faces(self, image_path):
        return []

    def _estimate(self, image_path, bbox):
        return None


class _Precomputed(ann.FaceDetector, ann.LandmarkPoseEstimator, ann.AgeGenderEstimator):
    """Answers adapter calls from a batch response, keyed by image path."""

    def __init__(self, records_by_path, role):
        self.records = records_by_path
        self.role = role

    def detect_faces(self, image_path):
        rec = self.records.get(str(image_path))
        return [rec.detection] if rec and rec.detection else []

    def _estimate(self, image_path, bbox):
        rec = self.records.get(str(image_path))
        if rec is None:
            return None
        return rec.landmarks if self.role == "landmarks" else rec.age_gender


def build_annotator(cfg: RunConfig, root, items) -> ann.Annotator:
    batch_cache = {}
    roles = {}
    for role in ADAPTER_ROLES:
        spec = cfg.adapters.get(role, "stub")
        if spec == "stub":
            roles[role] = {"detector": ann.StubFaceDetector, "landmarks": ann.StubLandmarkPoseEstimator,
                           "age_gender": ann.StubAgeGenderEstimator}[role](root)
        elif spec == "none":
            roles[role] = _NoAdapter()
        elif spec.startswith("command:"):
            command = spec[len("command:"):].strip()
            if command not in batch_cache:
                by_sid = {it.sample_id: it.image_path for it in items}
                recs = ann.SubprocessAnnotator(command).annotate(items)
                batch_cache[command] = {by_sid[r.sample_id]: r for r in recs}
            roles[role] = _Precomputed(batch_cache[command], role)
        elif spec.startswith("python:"):
            module, _, attr = spec[len("python:"):].partition(":")
            roles[role] = getattr(importlib.import_module(module), attr)(root)
        else:
            raise FerBenchError(f"unknown adapter spec {spec!r} for role {role}")
    return ann.Annotator(roles["detector"], roles["landmarks"], roles["age_gender"])


def annotate_manifest(cfg: RunConfig, dcfg, manifest: DatasetManifest) -> DatasetManifest:
    items = [ann.BatchItem(s.sample_id, str(media_file(s, dcfg.root).resolve()))
             for s in manifest.samples]
    annotator = build_annotator(cfg, dcfg.root, items)
    records = {r.sample_id: r for r in annotator.annotate(items)}

    # per-user fusion of age/gender estimates; user-less samples keep their own
    per_user = defaultdict(list)
    for s in manifest.samples:
        ag = records[s.sample_id].age_gender
        if ag is not None:
            key = s.user_id if s.user_id is not None else f"\0{s.sample_id}"
            per_user[key].append((s.sample_id, ag.age_years, ag.gender))
    fused = {k: aggregate_user_demographics(v) for k, v in per_user.items()}

    samples = []
    for s in manifest.samples:
        rec = records[s.sample_id]
        upd = {}
        if rec.detection is not None:
            upd["face_bbox"] = tuple(rec.detection.bbox)
        if rec.landmarks is not None:
            upd["eye_left"] = tuple(rec.landmarks.eye_left)
            upd["eye_right"] = tuple(rec.landmarks.eye_right)
            if s.head_pose is None:
                upd["head_pose"] = ann.bin_head_pose(rec.landmarks.pose.yaw)
        key = s.user_id if s.user_id is not None else f"\0{s.sample_id}"
        if key in fused:
            age, gender = fused[key]
            # dataset-provided age or age group outranks the estimate
            if s.age_years is None and s.age_group is None and age is not None:
                upd["age_years"] = age
            if s.gender is None and gender is not None:
                upd["gender"] = gender
        samples.append(replace(s, **upd))
    return replace(manifest, samples=samples)


def stage_annotate(cfg, datasets=None):
    return _transform_stage(cfg, datasets, "classes", "annotated", annotate_manifest)


def _age_groups(cfg, dcfg, manifest):
    samples = [replace(s, age_group=assign_age_group(dataset_age=s.age_years, dataset_group=s.age_group))
               for s in manifest.samples]
    return replace(manifest, samples=samples)


def stage_age_groups(cfg, datasets=None):
    return _transform_stage(cfg, datasets, "annotated", "age_groups", _age_groups)


def _exclude(cfg, dcfg, manifest):
    return replace(manifest, samples=[apply_exclusion(s) for s in manifest.samples])


def stage_exclude(cfg, datasets=None):
    return _transform_stage(cfg, datasets, "age_groups", "excluded", _exclude)


def preprocess_record(s: SampleRecord, root, processed_root) -> Path:
    with Image.open(media_file(s, root)) as im:
        image = im.convert("RGB")
    eye_left, eye_right = s.eye_left, s.eye_right
    if eye_left is None or eye_right is None:
        # pose came from dataset labels without landmarks: crop unrotated
        x, y, w, h = s.face_bbox
        eye_left, eye_right = (x, y + h / 2), (x + w, y + h / 2)
    face = align_and_crop(image, eye_left, eye_right, s.face_bbox)
    out = processed_image_path(processed_root, s.dataset, s.sample_id)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = out.with_name(f".{out.name}.tmp")
    Image.fromarray(face, mode="L").save(tmp, format="PNG")
    tmp.replace(out)
    return out


def _preprocess(cfg, dcfg, manifest):
    processed = Workspace(cfg.output_root).processed
    for s in manifest.included():
        preprocess_record(s, dcfg.root, processed)
    return manifest


def stage_preprocess(cfg, datasets=None):
    return _transform_stage(cfg, datasets, "excluded", "preprocessed", _preprocess)


def final_manifest(cfg: RunConfig, name: str) -> DatasetManifest:
    return read_manifest(Workspace(cfg.output_root).manifest("preprocessed", name))


# -- statistics and splits ---------------------------------------------------------------

def stage_stats(cfg, datasets=None) -> list[Path]:
    manifests = [final_manifest(cfg, n) for n in _selected(cfg, datasets)]
    bundle = compute_statistics(manifests)
    return export_statistics(bundle, Workspace(cfg.output_root).stats)


def stage_split(cfg, datasets=None) -> list[Path]:
    ws = Workspace(cfg.output_root)
    written = []
    for name in _selected(cfg, datasets):
        folds = make_folds(final_manifest(cfg, name), cfg.training.fold_count, cfg.seed)
        atomic_write_text(ws.split(name), folds_to_json(folds))
        written.append(ws.split(name))
    return written


# -- training -------------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainJob:
    dataset: str
    architecture_id: str
    fold_index: int
    seed: int
    config_hash: str


def plan_training(cfg: RunConfig, datasets=None, archs=None, folds=None) -> list[TrainJob]:
    archs = [a for a in cfg.architectures if not archs or a in archs]
    jobs = []
    for name in _selected(cfg, datasets):
        for arch in archs:
            for k in range(cfg.training.fold_count):
                if folds and k not in folds:
                    continue
                jobs.append(TrainJob(name, arch, k, cfg.seed, cfg.training.config_hash()))
    return jobs


def run_train_job(cfg: RunConfig, job: TrainJob) -> str:
    ws = Workspace(cfg.output_root)
    out_dir = ws.model_dir(job.dataset, job.architecture_id, job.fold_index)
    meta = out_dir / "metadata.json"
    if meta.exists() and TrainedModelHandle.load(out_dir).config_hash == job.config_hash:
        return f"skip {job.dataset}/{job.architecture_id}/{job.fold_index} (up to date)"
    atomic_write_text(ws.job_spec(job.dataset, job.architecture_id, job.fold_index),
                      json.dumps(asdict(job), indent=1, sort_keys=True) + "\n")
    manifest = final_manifest(cfg, job.dataset)
    folds = folds_from_json(ws.split(job.dataset).read_text(encoding="utf-8"))
    fold = next(f for f in folds if f.fold_index == job.fold_index)
    handle = train_model(job.architecture_id, manifest, fold, cfg.training, ws.processed, out_dir)
    return (f"trained {handle.model_id}: epochs {handle.epochs_run}, "
            f"val acc {handle.val_accuracy:.4f}, val F1 {handle.val_macro_f1}")


def _run_jobs(fn, cfg, jobs, n_workers):
    if n_workers <= 1 or len(jobs) <= 1:
        return [fn(cfg, j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(fn, [cfg] * len(jobs), jobs))


def stage_train(cfg, datasets=None, archs=None, folds=None, jobs=1, dry_run=False) -> list[str]:
    planned = plan_training(cfg, datasets, archs, folds)
    if dry_run:
        return [f"train {j.dataset} {j.architecture_id} fold {j.fold_index} seed {j.seed}"
                for j in planned]
    return _run_jobs(run_train_job, cfg, planned, jobs)


# -- evaluation and metrics ---------------------------------------------------------------------

@dataclass(frozen=True)
class EvalJob:
    train_dataset: str
    architecture_id: str
    fold_index: int
    test_dataset: str


def plan_evaluation(cfg, datasets=None, archs=None, folds=None) -> list[EvalJob]:
    tests = sorted(cfg.datasets)
    return [EvalJob(t.dataset, t.architecture_id, t.fold_index, test)
            for t in plan_training(cfg, datasets, archs, folds) for test in tests]


def run_eval_group(cfg: RunConfig, group: tuple) -> list[str]:
    """Evaluate one trained model on each requested test dataset."""
    (train, arch, fold), tests = group
    ws = Workspace(cfg.output_root)
    handle = TrainedModelHandle.load(ws.model_dir(train, arch, fold))
    store = ResultsStore(ws.results)
    lines = []
    for test in tests:
        ids = None
        if test == train:
            splits = folds_from_json(ws.split(train).read_text(encoding="utf-8"))
            ids = next(f for f in splits if f.fold_index == fold).val_ids
        result = evaluate_model(handle, final_manifest(cfg, test), ws.processed, sample_ids=ids)
        store.put(result)
        if isinstance(result, SkippedEval):
            lines.append(f"skip {handle.model_id} on {test}: {result.reason}")
        else:
            lines.append(f"{handle.model_id} on {test}: macro F1 {result.macro_f1:.4f}")
    return lines


def export_results(cfg) -> Path:
    ws = Workspace(cfg.output_root)
    results = ResultsStore(ws.results).all()
    write_results_csv(results, ws.results_csv)
    skipped = sorted({(r.architecture_id, r.train_dataset, r.fold_index, r.test_dataset)
                      for r in results if isinstance(r, SkippedEval)})
    atomic_write_text(ws.results / "skipped.csv",
                      csv_text(["architecture_id", "train_dataset", "fold_index", "test_dataset"],
                               [list(k) for k in skipped]))
    return ws.results_csv


def stage_evaluate(cfg, datasets=None, archs=None, folds=None, jobs=1, dry_run=False) -> list[str]:
    planned = plan_evaluation(cfg, datasets, archs, folds)
    if dry_run:
        return [f"evaluate {j.architecture_id}__{j.train_dataset}__fold{j.fold_index} on {j.test_dataset}"
                for j in planned]
    groups = defaultdict(list)
    for j in planned:
        groups[(j.train_dataset, j.architecture_id, j.fold_index)].append(j.test_dataset)
    lines = [line for chunk in _run_jobs(run_eval_group, cfg, sorted(groups.items()), jobs)
             for line in chunk]
    export_results(cfg)
    return lines


def load_tensor(results_csv, store_root=None):
    results = list(read_results_csv(results_csv))
    if store_root is not None and Path(store_root, "evals").exists():
        results += [r for r in ResultsStore(store_root).all() if isinstance(r, SkippedEval)]
    return build_performance_tensor(results)


def write_metrics(results_csv, out_dir, store_root=None) -> list[Path]:
    tensor = load_tensor(results_csv, store_root)
    report = build_similarity_report(tensor)
    out_dir = Path(out_dir)
    written = write_similarity_csvs(report, out_dir)
    atomic_write_text(out_dir / "similarity.json", report_to_json(report))
    atomic_write_text(out_dir / "table_local_global.md", local_global_table(report))
    return written + [out_dir / "similarity.json", out_dir / "table_local_global.md"]


def write_report(results_csv, out_dir, manifests=None, store_root=None) -> tuple[list[Path], list[str]]:
    tensor = load_tensor(results_csv, store_root)
    report = build_similarity_report(tensor)
    out_dir = Path(out_dir)
    stats = compute_statistics(manifests) if manifests else None
    written, notices = render_figures(stats, report, out_dir)
    atomic_write_text(out_dir / "table_local_global.md", local_global_table(report))
    written += write_similarity_csvs(report, out_dir)
    return written + [out_dir / "table_local_global.md"], notices
