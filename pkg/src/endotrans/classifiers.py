"""Patch classifiers: three CNN architectures, SGD training, and evaluation.

All three networks are trained from random initialization (no pretrained
weights) with a two-way softmax head.  Training samples batches uniformly
with replacement, applies a random crop plus a dihedral transform to every
sample, and takes one SGD step (momentum + weight decay) on the log-loss per
iteration.  Evaluation is deterministic: a center crop, no augmentation.

vgg-f realization (the architecture is less standardized than the others),
width multiplier 1.0, input 224 x 224 x 3:

    conv1   64 @ 11x11, stride 4, pad 2; ReLU; maxpool 3x3 stride 2
    conv2  256 @ 5x5,   stride 1, pad 2; ReLU; maxpool 3x3 stride 2
    conv3  256 @ 3x3,   stride 1, pad 1; ReLU
    conv4  256 @ 3x3,   stride 1, pad 1; ReLU
    conv5  256 @ 3x3,   stride 1, pad 1; ReLU; maxpool 3x3 stride 2
    adaptive average pool to 6x6
    fc6  9216 -> 4096; ReLU; dropout 0.5
    fc7  4096 -> 4096; ReLU; dropout 0.5
    fc8  4096 -> 2 (softmax)

Differences from the original CNN-F description: conv1 uses padding 2 and
local response normalization is omitted, mirroring common modern
realizations of the AlexNet family.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as TF

from .augment import dihedral_apply
from .data import LABELS, DomainDataset
from .errors import NumericalError, ValidationError
from .networks import fill_fanin_uniform_
from .util import dataclass_from_dict

log = logging.getLogger(__name__)

ARCHITECTURES = ("alexnet", "vggf", "vgg16")
DEFAULT_CROP = {"alexnet": 227, "vggf": 224, "vgg16": 224}


@dataclass(frozen=True)
class ClassifierSpec:
    """Which network to build; ``crop_size`` defaults per architecture."""

    architecture: str
    crop_size: int | None = None
    width_mult: float = 1.0
    num_classes: int = 2

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValidationError(
                f"unknown architecture {self.architecture!r}; expected one of {ARCHITECTURES}"
            )
        if self.crop_size is None:
            object.__setattr__(self, "crop_size", DEFAULT_CROP[self.architecture])
        if self.crop_size < 8:
            raise ValidationError(f"crop_size too small: {self.crop_size}")
        if self.width_mult <= 0:
            raise ValidationError("width_mult must be positive")


def _w(width_mult: float) -> Callable[[int], int]:
    return lambda ch: max(8, int(round(ch * width_mult)))


class _PatchCNN(nn.Module):
    """Common conv-feature + fc-head scaffold with a softmax helper."""

    def __init__(self, spec: ClassifierSpec, features: nn.Sequential, pool_size: int, fc_in: int):
        super().__init__()
        c = _w(spec.width_mult)
        self.spec = spec
        self.crop_size = spec.crop_size
        self.features = features
        self.avgpool = nn.AdaptiveAvgPool2d(pool_size)
        self.classifier = nn.Sequential(
            nn.Dropout(0.5),
            nn.Linear(fc_in, c(4096)),
            nn.ReLU(inplace=True),
            nn.Dropout(0.5),
            nn.Linear(c(4096), c(4096)),
            nn.ReLU(inplace=True),
            nn.Linear(c(4096), spec.num_classes),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.avgpool(self.features(x))
        return self.classifier(torch.flatten(x, 1))

    def predict_proba(self, x: torch.Tensor) -> torch.Tensor:
        return TF.softmax(self.forward(x), dim=1)


def _alexnet(spec: ClassifierSpec) -> _PatchCNN:
    c = _w(spec.width_mult)
    features = nn.Sequential(
        nn.Conv2d(3, c(64), 11, stride=4, padding=2), nn.ReLU(inplace=True), nn.MaxPool2d(3, 2),
        nn.Conv2d(c(64), c(192), 5, padding=2), nn.ReLU(inplace=True), nn.MaxPool2d(3, 2),
        nn.Conv2d(c(192), c(384), 3, padding=1), nn.ReLU(inplace=True),
        nn.Conv2d(c(384), c(256), 3, padding=1), nn.ReLU(inplace=True),
        nn.Conv2d(c(256), c(256), 3, padding=1), nn.ReLU(inplace=True), nn.MaxPool2d(3, 2),
    )
    return _PatchCNN(spec, features, pool_size=6, fc_in=c(256) * 36)


def _vggf(spec: ClassifierSpec) -> _PatchCNN:
    c = _w(spec.width_mult)
    features = nn.Sequential(
        nn.Conv2d(3, c(64), 11, stride=4, padding=2), nn.ReLU(inplace=True), nn.MaxPool2d(3, 2),
        nn.Conv2d(c(64), c(256), 5, padding=2), nn.ReLU(inplace=True), nn.MaxPool2d(3, 2),
        nn.Conv2d(c(256), c(256), 3, padding=1), nn.ReLU(inplace=True),
        nn.Conv2d(c(256), c(256), 3, padding=1), nn.ReLU(inplace=True),
        nn.Conv2d(c(256), c(256), 3, padding=1), nn.ReLU(inplace=True), nn.MaxPool2d(3, 2),
    )
    return _PatchCNN(spec, features, pool_size=6, fc_in=c(256) * 36)


_VGG16_CFG = (64, 64, "M", 128, 128, "M", 256, 256, 256, "M", 512, 512, 512, "M", 512, 512, 512, "M")


def _vgg16(spec: ClassifierSpec) -> _PatchCNN:
    c = _w(spec.width_mult)
    layers: list[nn.Module] = []
    in_ch = 3
    for item in _VGG16_CFG:
        if item == "M":
            layers.append(nn.MaxPool2d(2, 2))
        else:
            layers += [nn.Conv2d(in_ch, c(item), 3, padding=1), nn.ReLU(inplace=True)]
            in_ch = c(item)
    return _PatchCNN(spec, nn.Sequential(*layers), pool_size=7, fc_in=c(512) * 49)


_BUILDERS = {"alexnet": _alexnet, "vggf": _vggf, "vgg16": _vgg16}


def build_classifier(spec: ClassifierSpec, seed: int) -> _PatchCNN:
    """Construct the network with seed-deterministic (bit-identical) initialization."""
    model = _BUILDERS[spec.architecture](spec)
    fill_fanin_uniform_(model, np.random.default_rng(seed))
    return model


@dataclass
class ClfTrainConfig:
    iterations: int = 5000
    batch_size: int = 128
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0005
    lr_drop_points: tuple[float, float] = (0.6, 0.85)
    lr_decay: float = 0.1
    audit_batches: bool = False
    device: str = "cpu"
    seed: int | None = None

    def __post_init__(self):
        if self.iterations < 1:
            raise ValidationError(f"iterations must be >= 1, got {self.iterations}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr < 0:
            raise ValidationError("lr must be non-negative")
        if self.seed is None:
            raise ValidationError("classifier config requires an explicit seed")
        self.lr_drop_points = tuple(self.lr_drop_points)

    @classmethod
    def from_dict(cls, data: dict) -> "ClfTrainConfig":
        return dataclass_from_dict(cls, data, context="classifier config")

    def lr_at(self, iteration: int) -> float:
        drops = sum(1 for frac in self.lr_drop_points if iteration >= int(frac * self.iterations))
        return self.lr * self.lr_decay**drops


@dataclass
class TrainingLog:
    loss_curve: list = field(default_factory=list)  # (iteration, loss, lr)
    batch_sources: list = field(default_factory=list)  # per-iteration source_id tuples (audit mode)


def fit_classifier(
    model: _PatchCNN,
    config: ClfTrainConfig,
    train_set: DomainDataset,
    batch_hook: Callable | None = None,
) -> TrainingLog:
    """Run the SGD loop on an already-built model.

    Per iteration: sample ``batch_size`` patches uniformly with replacement,
    then per sample draw the crop offsets (top, left) and a dihedral id, in
    that order, from the config-seeded generator.  ``batch_hook`` (tests) is
    called with ``(iteration, batch_tensor, label_tensor)`` before each step.
    """
    if len(train_set) == 0:
        raise ValidationError("training set is empty")
    present = {lab for lab, n in train_set.recount().items() if n > 0}
    if len(present) < 2:
        raise ValidationError(f"training set has a single label {sorted(present)}; need both classes")
    crop = model.crop_size
    for p in train_set:
        h, w = p.size
        if crop > h or crop > w:
            raise ValidationError(f"crop size {crop} exceeds training patch size {h}x{w}")

    rng = np.random.default_rng(config.seed)
    torch.manual_seed(int(config.seed))  # dropout masks
    optimizer = torch.optim.SGD(
        model.parameters(), lr=config.lr, momentum=config.momentum, weight_decay=config.weight_decay
    )
    model.to(config.device)
    model.train()
    labels = np.array([LABELS.index(p.label) for p in train_set], dtype=np.int64)
    n = len(train_set)
    result = TrainingLog()

    for it in range(config.iterations):
        lr = config.lr_at(it)
        for group in optimizer.param_groups:
            group["lr"] = lr
        idx = rng.integers(0, n, size=config.batch_size)
        views = []
        for i in idx:
            pixels = train_set[int(i)].pixels
            h, w = pixels.shape[:2]
            top = int(rng.integers(0, h - crop + 1))
            left = int(rng.integers(0, w - crop + 1))
            tid = int(rng.integers(0, 8))
            views.append(dihedral_apply(pixels[top : top + crop, left : left + crop], tid).transpose(2, 0, 1))
        batch = torch.from_numpy(np.stack(views)).to(config.device)
        target = torch.from_numpy(labels[idx]).to(config.device)
        if config.audit_batches:
            result.batch_sources.append(tuple(train_set[int(i)].source_id for i in idx))
        if batch_hook is not None:
            batch_hook(it, batch, target)
        loss = TF.cross_entropy(model(batch), target)
        value = float(loss.detach())
        if not math.isfinite(value):
            raise NumericalError("non-finite classifier loss", snapshot={"iteration": it, "loss": value})
        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        optimizer.step()
        result.loss_curve.append((it, value, lr))
        if it % 200 == 0:
            log.debug("iter %d/%d loss=%.4f lr=%g", it, config.iterations, value, lr)
    model.eval()
    return result


def train_classifier(
    config: ClfTrainConfig,
    spec: ClassifierSpec,
    train_set: DomainDataset,
    batch_hook: Callable | None = None,
) -> tuple[_PatchCNN, TrainingLog]:
    """Build a fresh classifier for ``spec`` and train it on ``train_set``."""
    model = build_classifier(spec, seed=int(config.seed))
    history = fit_classifier(model, config, train_set, batch_hook=batch_hook)
    return model, history


@dataclass(frozen=True)
class PredictionRecord:
    source_id: str
    true_label: str
    predicted_label: str
    probability: float

    @property
    def correct(self) -> bool:
        return self.true_label == self.predicted_label


@dataclass(frozen=True)
class EvalResult:
    records: tuple[PredictionRecord, ...]
    accuracy: float


def evaluate(model: _PatchCNN, test_set: DomainDataset, batch_size: int = 64) -> EvalResult:
    """Deterministic center-crop inference; one record per test patch."""
    if len(test_set) == 0:
        raise ValidationError("test set is empty")
    crop = model.crop_size
    device = next(model.parameters()).device
    model.eval()
    records: list[PredictionRecord] = []
    correct = 0
    with torch.no_grad():
        for start in range(0, len(test_set), batch_size):
            chunk = test_set.patches[start : start + batch_size]
            views = []
            for p in chunk:
                h, w = p.size
                if crop > h or crop > w:
                    raise ValidationError(f"crop size {crop} exceeds test patch size {h}x{w}")
                top, left = (h - crop) // 2, (w - crop) // 2
                views.append(p.pixels[top : top + crop, left : left + crop].transpose(2, 0, 1))
            batch = torch.from_numpy(np.ascontiguousarray(np.stack(views))).to(device)
            probs = model.predict_proba(batch).cpu().numpy()
            pred = probs.argmax(axis=1)
            for p, cls, prob_row in zip(chunk, pred, probs):
                rec = PredictionRecord(
                    source_id=p.source_id,
                    true_label=p.label,
                    predicted_label=LABELS[int(cls)],
                    probability=float(prob_row[int(cls)]),
                )
                records.append(rec)
                correct += int(rec.correct)
    return EvalResult(records=tuple(records), accuracy=correct / len(records))


def write_prediction_records(path: str | Path, records: Sequence[PredictionRecord]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["source_id", "true", "pred", "prob"])
        for r in records:
            # repr is the shortest exact representation, so records round-trip
            writer.writerow([r.source_id, r.true_label, r.predicted_label, repr(r.probability)])
    return path


def read_prediction_records(path: str | Path) -> tuple[PredictionRecord, ...]:
    path = Path(path)
    records = []
    with path.open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            records.append(
                PredictionRecord(
                    source_id=row["source_id"],
                    true_label=row["true"],
                    predicted_label=row["pred"],
                    probability=float(row["prob"]),
                )
            )
    return tuple(records)


def save_classifier(model: _PatchCNN, path: str | Path, meta_extra: dict | None = None) -> Path:
    from .checkpoint import save_checkpoint
    from .networks import state_dict_arrays

    meta = {
        "kind": "classifier",
        "spec": {
            "architecture": model.spec.architecture,
            "crop_size": model.spec.crop_size,
            "width_mult": model.spec.width_mult,
            "num_classes": model.spec.num_classes,
        },
    }
    meta.update(meta_extra or {})
    return save_checkpoint(path, state_dict_arrays(model), meta)


def load_classifier(path: str | Path) -> tuple[_PatchCNN, dict]:
    from .checkpoint import load_checkpoint
    from .networks import load_state_arrays

    arrays, meta = load_checkpoint(path)
    if meta.get("kind") != "classifier":
        raise ValidationError(f"{path}: not a classifier checkpoint")
    spec = ClassifierSpec(**meta["spec"])
    model = _BUILDERS[spec.architecture](spec)
    load_state_arrays(model, arrays)
    model.eval()
    return model, meta
