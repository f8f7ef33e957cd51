from __future__ import annotations

import random
from collections import Counter
from dataclasses import replace

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import manifest, record
from ferbench.errors import DataError, FoldError, TrainingError
from ferbench.training import (
    Augmenter, FoldSplit, TrainedModelHandle, TrainingConfig, build_model, compute_class_weights,
    early_stop_decision, folds_from_json, folds_to_json, load_trained_model, make_folds,
    train_model,
)


def user_manifest(users: dict[str, int], name="ds"):
    samples = []
    for u, n in users.items():
        samples += [record(f"{u}_{i}", name, label="happiness" if i % 2 else "fear", user_id=u)
                    for i in range(n)]
    return manifest(name, samples)


class TestFolds:
    def test_equal_partition_without_users(self):
        m = manifest("ds", [record(f"s{i}", label="fear") for i in range(10)])
        folds = make_folds(m, 5, seed=1)
        assert [len(f.val_ids) for f in folds] == [2] * 5

    def test_subject_disjoint_packing(self):
        m = user_manifest({"u1": 4, "u2": 4, "u3": 2})
        folds = make_folds(m, 2, seed=0)
        users = [{sid.split("_")[0] for sid in f.val_ids} for f in folds]
        assert sorted(map(sorted, users)) in ([["u1", "u3"], ["u2"]], [["u1"], ["u2", "u3"]])

    def test_deterministic(self):
        m = user_manifest({"a": 3, "b": 5, "c": 2, "d": 4})
        assert folds_to_json(make_folds(m, 3, 9)) == folds_to_json(make_folds(m, 3, 9))

    def test_json_round_trip(self):
        folds = make_folds(user_manifest({"a": 3, "b": 5, "c": 2}), 2, 0)
        assert folds_from_json(folds_to_json(folds)) == folds

    def test_dominant_user_is_rejected(self):
        with pytest.raises(FoldError):
            make_folds(user_manifest({"big": 9, "small": 1}), 2, 0)

    def test_too_few_samples(self):
        with pytest.raises(FoldError):
            make_folds(manifest("ds", [record("a", label="fear")]), 2, 0)

    def test_excluded_samples_are_left_out(self):
        m = manifest("ds", [record(f"s{i}", label="fear") for i in range(6)]
                     + [record("gone", label="fear", excluded=True, exclusion_reason="no_face")])
        folds = make_folds(m, 3, 0)
        assert all("gone" not in f.train_ids | f.val_ids for f in folds)

    def test_stratified_balances_classes(self):
        m = manifest("ds", [record(f"s{i}", label=["fear", "anger"][i % 2]) for i in range(20)])
        by_id = m.by_id()
        for f in make_folds(m, 2, 3):
            assert Counter(by_id[i].label for i in f.val_ids) == {"fear": 5, "anger": 5}


@st.composite
def user_manifests(draw):
    n_users = draw(st.integers(2, 12))
    sizes = draw(st.lists(st.integers(1, 6), min_size=n_users, max_size=n_users))
    total = sum(sizes)
    k = draw(st.integers(2, 5))
    return user_manifest({f"u{i:02d}": n for i, n in enumerate(sizes)}), k, total


@settings(max_examples=200, deadline=None)
@given(user_manifests(), st.integers(0, 2**16))
def test_fold_properties(case, seed):
    m, k, total = case
    try:
        folds = make_folds(m, k, seed)
    except FoldError:
        groups = Counter(s.user_id for s in m.samples)
        assert max(groups.values()) > (1 - 1 / k) * total or len(groups) < k
        return
    everything = {s.sample_id for s in m.samples}
    vals = [f.val_ids for f in folds]
    assert sorted(i for v in vals for i in v) == sorted(everything)
    for f in folds:
        assert not f.train_ids & f.val_ids
        assert f.train_ids | f.val_ids == everything
    owner = {}
    for fi, v in enumerate(vals):
        for sid in v:
            assert owner.setdefault(sid.split("_")[0], fi) == fi
    assert folds_to_json(make_folds(m, k, seed)) == folds_to_json(folds)


class TestClassWeights:
    def test_balanced(self):
        assert compute_class_weights({"happiness": 20, "anger": 20}) == {"happiness": 1.0, "anger": 1.0}

    def test_imbalanced(self):
        w = compute_class_weights({"happiness": 30, "fear": 10})
        assert w["happiness"] == pytest.approx(0.6667, abs=1e-4)
        assert w["fear"] == 2.0

    def test_single_class_rejected(self):
        with pytest.raises(TrainingError):
            compute_class_weights({"happiness": 10, "fear": 0})

    @given(st.dictionaries(st.sampled_from(["a", "b", "c", "d", "e", "f", "g"]),
                           st.integers(1, 10_000), min_size=2))
    def test_weighted_total_equals_sample_count(self, counts):
        w = compute_class_weights(counts)
        assert sum(n * w[c] for c, n in counts.items()) == pytest.approx(sum(counts.values()),
                                                                         rel=1e-12)


class TestEarlyStop:
    def test_plateau_after_small_gains(self):
        h = [0.50, 0.52, 0.521, 0.522, 0.523, 0.524, 0.525]
        assert early_stop_decision(h[:6]) == "continue"
        assert early_stop_decision(h) == "stop"

    def test_always_improving_runs_to_cap(self):
        h = [0.5 + 0.02 * i for i in range(20)]
        assert all(early_stop_decision(h[:n], max_epochs=20) == "continue" for n in range(1, 20))
        assert early_stop_decision(h, max_epochs=20) == "stop"

    def test_flat_history(self):
        assert early_stop_decision([0.5] * 5) == "continue"
        assert early_stop_decision([0.5] * 6) == "stop"

    def test_improvement_resets_counter(self):
        assert early_stop_decision([0.5, 0.5, 0.5, 0.5, 0.5, 0.6, 0.6, 0.6]) == "continue"


def _stop_epoch(history, patience, max_epochs):
    for n in range(1, len(history) + 1):
        if early_stop_decision(history[:n], patience=patience, max_epochs=max_epochs) == "stop":
            return n
    return None


@settings(max_examples=1000, deadline=None)
@given(st.lists(st.floats(0, 1, allow_nan=False), min_size=1, max_size=30),
       st.integers(1, 8), st.integers(1, 30))
def test_early_stop_bounds(history, patience, max_epochs):
    stop = _stop_epoch(history, patience, max_epochs)
    if stop is not None:
        assert stop >= min(patience + 1, max_epochs)
        assert stop <= max_epochs
    else:
        assert len(history) < max_epochs


class TestModels:
    @pytest.mark.parametrize("arch", ["tiny", "swin_t", "convnext_tiny"])
    def test_grayscale_input(self, arch):
        model = build_model(arch, 4).eval()
        with torch.no_grad():
            assert model(torch.rand(1, 1, 224, 224)).shape == (1, 4)

    def test_unknown_arch(self):
        with pytest.raises(KeyError):
            build_model("resnet9000", 3)

    def test_training_config_invariants(self):
        for bad in ({"max_epochs": 0}, {"fold_count": 1}, {"early_stop_patience": 0}):
            with pytest.raises(ValueError):
                TrainingConfig(**bad)


# -- training on real processed glyphs ----------------------------------------------

def test_train_smoke(glyph_run, tmp_path):
    cfg, m, processed = glyph_run
    fold = make_folds(m, 2, 0)[0]
    counter = Augmenter(cfg.training.augmentation)
    handle = train_model("tiny", m, fold, cfg.training, processed, tmp_path / "art", counter)
    assert handle.epochs_run <= 5
    assert handle.class_set_trained == ("happiness", "sadness", "surprise")
    assert handle.val_accuracy > 1 / 3
    # augmentation touched each training sample once per epoch and nothing else
    assert counter.calls == handle.epochs_run * len(fold.train_ids)

    reloaded = TrainedModelHandle.load(tmp_path / "art")
    assert reloaded == handle
    model = load_trained_model(reloaded)
    x = torch.rand(2, 1, 224, 224)
    with torch.no_grad():
        assert torch.equal(model(x), handle.model.eval()(x))


def test_max_epochs_one(glyph_run):
    cfg, m, processed = glyph_run
    config = replace(cfg.training, max_epochs=1)
    handle = train_model("tiny", m, make_folds(m, 2, 0)[1], config, processed)
    assert handle.epochs_run == 1


def test_missing_class_is_dropped(glyph_run):
    cfg, m, processed = glyph_run
    ids = sorted(s.sample_id for s in m.included())
    by_id = m.by_id()
    rng = random.Random(0)
    val = {i for i in ids if by_id[i].label == "surprise" or rng.random() < 0.2}
    fold = FoldSplit(0, frozenset(ids) - val, frozenset(val))
    handle = train_model("tiny", m, fold, replace(cfg.training, max_epochs=1), processed)
    assert handle.class_set_trained == ("happiness", "sadness")


def test_missing_image_names_sample(glyph_run, tmp_path):
    cfg, m, processed = glyph_run
    fold = make_folds(m, 2, 0)[0]
    with pytest.raises(DataError, match=min(fold.train_ids)):
        train_model("tiny", m, fold, cfg.training, tmp_path / "empty")
