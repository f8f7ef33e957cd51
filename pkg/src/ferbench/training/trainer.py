"""Training one (dataset, architecture, fold) cell."""

from __future__ import annotations

import copy
import hashlib
import io
import json
import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torch import nn
from torchvision.transforms import v2

from ..core import DatasetManifest, atomic_write_text, label_order, processed_image_path
from ..errors import DataError, TrainingError
from .early_stop import STOP, early_stop_decision
from .folds import FoldSplit
from .models import build_model
from .weights import compute_class_weights

log = logging.getLogger(__name__)


@dataclass
class AugmentationConfig:
    enabled: bool = True
    hflip_p: float = 0.5
    rotation_deg: float = 15.0
    translate: float = 0.10
    scale: tuple[float, float] = (0.9, 1.1)
    brightness: float = 0.2
    contrast: float = 0.2


@dataclass
class TrainingConfig:
    architecture_id: str = "tiny"
    max_epochs: int = 20
    early_stop_min_delta: float = 0.01
    early_stop_patience: int = 5
    fold_count: int = 5
    seed: int = 0
    augmentation: AugmentationConfig = field(default_factory=AugmentationConfig)
    pretrained_init: bool = False
    # optimizer settings are not given by the benchmark protocol; these are defaults
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    batch_size: int = 32

    def __post_init__(self):
        if isinstance(self.augmentation, dict):
            aug = dict(self.augmentation)
            if "scale" in aug:
                aug["scale"] = tuple(aug["scale"])
            self.augmentation = AugmentationConfig(**aug)
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.fold_count < 2:
            raise ValueError("fold_count must be >= 2")
        if self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be >= 1")

    def config_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


@dataclass
class TrainedModelHandle:
    model_id: str
    architecture_id: str
    train_dataset: str
    fold_index: int
    class_set_trained: tuple[str, ...]
    artifact_path: str
    epochs_run: int
    best_epoch: int = 0
    val_accuracy: float = 0.0
    val_macro_f1: float | None = None
    val_history: list[float] = field(default_factory=list)
    config_hash: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> TrainedModelHandle:
        data = json.loads(text)
        data["class_set_trained"] = tuple(data["class_set_trained"])
        return cls(**data)

    @classmethod
    def load(cls, artifact_dir) -> TrainedModelHandle:
        return cls.from_json((Path(artifact_dir) / "metadata.json").read_text(encoding="utf-8"))


def model_id_for(arch: str, dataset: str, fold: int) -> str:
    return f"{arch}__{dataset}__fold{fold}"


class Augmenter:
    """Training-time transform; ``calls`` counts augmented samples."""

    def __init__(self, cfg: AugmentationConfig):
        self.cfg = cfg
        self.calls = 0
        self.transform = v2.Compose([
            v2.RandomHorizontalFlip(cfg.hflip_p),
            v2.RandomAffine(degrees=cfg.rotation_deg, translate=(cfg.translate, cfg.translate),
                            scale=cfg.scale),
            v2.ColorJitter(brightness=cfg.brightness, contrast=cfg.contrast),
        ])

    def __call__(self, batch: torch.Tensor) -> torch.Tensor:
        self.calls += len(batch)
        if not self.cfg.enabled:
            return batch
        return torch.stack([self.transform(x) for x in batch])


def load_images(processed_root, dataset: str, sample_ids) -> torch.Tensor:
    """Stack processed faces into an (N, 1, H, W) float tensor in [0, 1]."""
    arrays = []
    for sid in sample_ids:
        path = processed_image_path(processed_root, dataset, sid)
        if not path.exists():
            raise DataError(f"missing processed image for sample {sid!r} of {dataset!r}: {path}")
        with Image.open(path) as im:
            arrays.append(np.asarray(im.convert("L"), dtype=np.uint8))
    if not arrays:
        return torch.empty(0, 1, 224, 224)
    return torch.from_numpy(np.stack(arrays)).unsqueeze(1).float().div_(255.0)


@torch.no_grad()
def predict(model: nn.Module, images: torch.Tensor, allowed=None, batch_size: int = 64) -> list[int]:
    """Argmax class index per image, optionally restricted to ``allowed`` indices."""
    model.eval()
    out = []
    for start in range(0, len(images), batch_size):
        logits = model(images[start:start + batch_size])
        if allowed is not None:
            idx = torch.as_tensor(allowed)
            out.extend(idx[logits[:, idx].argmax(1)].tolist())
        else:
            out.extend(logits.argmax(1).tolist())
    return out


def _seed_everything(seed: int) -> torch.Generator:
    torch.manual_seed(seed)
    gen = torch.Generator()
    gen.manual_seed(seed)
    return gen


def train_model(architecture_id: str, manifest: DatasetManifest, fold: FoldSplit,
                config: TrainingConfig, processed_root, artifact_dir=None,
                augmenter: Augmenter | None = None) -> TrainedModelHandle:
    by_id = manifest.by_id()
    train_ids = sorted(i for i in fold.train_ids if not by_id[i].excluded)
    val_ids = sorted(i for i in fold.val_ids if not by_id[i].excluded)

    counts = Counter(by_id[i].label for i in train_ids)
    weights = compute_class_weights(counts)
    classes = tuple(label_order(weights))
    class_index = {c: i for i, c in enumerate(classes)}
    dropped = sorted(set(manifest.class_set) - set(classes))
    if dropped:
        log.info("%s fold %d: no training samples for %s", manifest.name, fold.fold_index, dropped)

    gen = _seed_everything(config.seed * 1000 + fold.fold_index)
    x_train = load_images(processed_root, manifest.name, train_ids)
    y_train = torch.tensor([class_index[by_id[i].label] for i in train_ids])
    val_ids = [i for i in val_ids if by_id[i].label in class_index]
    x_val = load_images(processed_root, manifest.name, val_ids)
    y_val = torch.tensor([class_index[by_id[i].label] for i in val_ids], dtype=torch.long)

    model = build_model(architecture_id, len(classes), config.pretrained_init)
    criterion = nn.CrossEntropyLoss(weight=torch.tensor([weights[c] for c in classes],
                                                        dtype=torch.float32))
    optimizer = torch.optim.AdamW(model.parameters(), lr=config.learning_rate,
                                  weight_decay=config.weight_decay)
    augment = augmenter or Augmenter(config.augmentation)

    history: list[float] = []
    best_state, best_acc, best_epoch = None, -1.0, 0
    for epoch in range(1, config.max_epochs + 1):
        model.train()
        order = torch.randperm(len(x_train), generator=gen)
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            loss = criterion(model(augment(x_train[idx])), y_train[idx])
            if not math.isfinite(loss.item()):
                raise TrainingError(f"non-finite loss {loss.item()}", epoch=epoch)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()

        if len(x_val):
            pred = torch.tensor(predict(model, x_val))
            acc = (pred == y_val).float().mean().item()
        else:
            acc = 0.0
        history.append(acc)
        if acc > best_acc:
            best_acc, best_epoch = acc, epoch
            best_state = copy.deepcopy(model.state_dict())
        log.debug("%s %s fold %d epoch %d val_acc %.4f", architecture_id, manifest.name,
                  fold.fold_index, epoch, acc)
        if early_stop_decision(history, config.early_stop_min_delta, config.early_stop_patience,
                               config.max_epochs) == STOP:
            break

    model.load_state_dict(best_state)
    handle = TrainedModelHandle(
        model_id=model_id_for(architecture_id, manifest.name, fold.fold_index),
        architecture_id=architecture_id,
        train_dataset=manifest.name,
        fold_index=fold.fold_index,
        class_set_trained=classes,
        artifact_path=str(artifact_dir) if artifact_dir is not None else "",
        epochs_run=len(history),
        best_epoch=best_epoch,
        val_accuracy=best_acc,
        val_history=history,
        config_hash=config.config_hash(),
    )

    from ..evaluation import evaluate_model, EvalResult

    own = evaluate_model(handle, manifest, processed_root, model=model, sample_ids=set(val_ids))
    handle.val_macro_f1 = own.macro_f1 if isinstance(own, EvalResult) else None

    if artifact_dir is not None:
        save_trained_model(model, handle, artifact_dir)
    handle.model = model  # in-memory convenience, not serialized
    return handle


def save_trained_model(model: nn.Module, handle: TrainedModelHandle, artifact_dir) -> None:
    artifact_dir = Path(artifact_dir)
    artifact_dir.mkdir(parents=True, exist_ok=True)
    buf = io.BytesIO()
    torch.save(model.state_dict(), buf)
    tmp = artifact_dir / ".weights.pt.tmp"
    tmp.write_bytes(buf.getvalue())
    tmp.replace(artifact_dir / "weights.pt")
    atomic_write_text(artifact_dir / "metadata.json", handle.to_json())


def load_trained_model(handle: TrainedModelHandle) -> nn.Module:
    cached = getattr(handle, "model", None)
    if cached is not None:
        return cached
    model = build_model(handle.architecture_id, len(handle.class_set_trained), pretrained=False)
    state = torch.load(Path(handle.artifact_path) / "weights.pt", map_location="cpu",
                       weights_only=True)
    model.load_state_dict(state)
    model.eval()
    return model
