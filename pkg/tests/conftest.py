from __future__ import annotations

import pytest

from ferbench.core import DatasetManifest, SampleRecord
from ferbench.evaluation import tensor_from_scores

# (model, train, test) -> score for two models over datasets A and B
HAND_SCORES = {
    ("m1", "A", "A"): 0.9, ("m1", "A", "B"): 0.5, ("m1", "B", "A"): 0.4, ("m1", "B", "B"): 0.8,
    ("m2", "A", "A"): 0.7, ("m2", "A", "B"): 0.3, ("m2", "B", "A"): 0.6, ("m2", "B", "B"): 0.6,
}

# published local / global similarity per dataset
PUBLISHED_LS_GS = {
    "AffectNet": (0.5622, 0.6095),
    "BioVidEmo": (0.3603, 0.2030),
    "BU-4DFE": (0.7348, 0.3981),
    "CK+": (0.9355, 0.4121),
    "DDCF": (0.8797, 0.3978),
    "DEFSS": (0.8395, 0.3058),
    "ElderReact": (0.2224, 0.1667),
    "EmoReact": (0.4806, 0.0994),
    "ExpW": (0.4882, 0.4782),
    "FACES": (0.9681, 0.3707),
    "FEGA": (0.7606, 0.4017),
    "FER2013": (0.6807, 0.5008),
    "FE-Test": (0.8384, 0.3368),
    "JAFFE": (0.6129, 0.2686),
    "KDEF": (0.8966, 0.4551),
    "Lifespan": (0.7587, 0.1769),
    "LIRIS-CSE": (0.4318, 0.1934),
    "MMI": (0.6130, 0.3977),
    "NHFI": (0.6229, 0.4773),
    "NIMH-ChEFS": (0.9107, 0.2916),
    "RAF-DB": (0.7578, 0.4601),
    "RaFD": (0.9849, 0.4539),
    "SFEW": (0.4681, 0.2795),
    "WSEFEP": (0.9314, 0.3695),
}


def published_scores(model: str = "published") -> dict:
    """One-model tensor whose diagonal is LS and whose off-diagonal row is constant GS."""
    scores = {}
    for d, (ls, gs) in PUBLISHED_LS_GS.items():
        for t in PUBLISHED_LS_GS:
            scores[(model, d, t)] = ls if t == d else gs
    return scores


def record(sid: str, dataset: str = "ds", **kw) -> SampleRecord:
    kw.setdefault("label_raw", kw.get("label") or "happiness")
    return SampleRecord(dataset=dataset, sample_id=sid, media_path=f"images/{sid}.png", **kw)


def manifest(name: str, samples, provenance: str = "lab_controlled") -> DatasetManifest:
    return DatasetManifest(name=name, provenance=provenance, samples=list(samples))


@pytest.fixture
def hand_tensor():
    return tensor_from_scores(HAND_SCORES)


@pytest.fixture
def published_tensor():
    return tensor_from_scores(published_scores())


NORMALIZATION_STAGES = ("ingest", "sample_frames", "unify_classes", "annotate", "age_groups",
                        "exclude", "preprocess")


def write_config(path, datasets: dict, **extra) -> None:
    """Write a run config; ``datasets`` maps name -> root (or a dict of settings)."""
    import yaml

    data = {"output_root": "out", "seed": 0, "datasets": {}, **extra}
    for name, entry in datasets.items():
        data["datasets"][name] = {"root": str(entry)} if not isinstance(entry, dict) else entry
    path.write_text(yaml.safe_dump(data, sort_keys=True))


def normalize_all(cfg) -> None:
    from ferbench import pipeline

    for stage in NORMALIZATION_STAGES:
        getattr(pipeline, f"stage_{stage}")(cfg)


@pytest.fixture(scope="session")
def glyph_run(tmp_path_factory):
    """A normalized 3-class glyph dataset: (config, final manifest, processed root)."""
    from ferbench.config import load_config
    from ferbench.pipeline import Workspace, final_manifest
    from ferbench.synth import GlyphDatasetSpec, generate_glyph_dataset

    root = tmp_path_factory.mktemp("glyph")
    generate_glyph_dataset(root / "data", GlyphDatasetSpec(
        "glyph3", ("happiness", "sadness", "surprise"), images_per_class=80, users=10, seed=5))
    write_config(root / "cfg.yaml", {"glyph3": root / "data"},
                 training={"architectures": ["tiny"], "fold_count": 2, "max_epochs": 5,
                           "batch_size": 16})
    cfg = load_config(root / "cfg.yaml")
    normalize_all(cfg)
    return cfg, final_manifest(cfg, "glyph3"), Workspace(cfg.output_root).processed


# criterion number -> (verdict, description); filled by the acceptance suite
ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        verdict, text = ACCEPTANCE[n]
        terminalreporter.write_line(f"{verdict} criterion {n:2d}: {text}")
