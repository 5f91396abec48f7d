"""Unpaired translation model: bundle, training loop, and fake-dataset materialization.

The model holds two generators (``F`` maps domain X = WLI to domain Y = NBI,
``G`` maps back) and two patch discriminators.  Training alternates one
generator update and one discriminator update per batch; generators descend
``w_cyc * L_c + w_gan * <generator view of the adversarial loss>`` while
discriminators ascend their view (descent on the negation).

The per-epoch loss log is an append-only CSV ``epoch,L_c,L_d_gen,L_d_disc``
where ``L_d_gen`` is the generator-side adversarial objective and
``L_d_disc`` the discriminator-side descent objective for the configured
adversarial form.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import losses
from .augment import dihedral_apply
from .checkpoint import load_checkpoint, save_checkpoint
from .data import DomainDataset, ImagePatch
from .errors import NumericalError, ValidationError
from .networks import (
    PatchDiscriminator,
    UNetGenerator,
    fill_normal_,
    load_state_arrays,
    state_dict_arrays,
)
from .util import dataclass_from_dict, stable_hash

log = logging.getLogger(__name__)

DIRECTIONS = ("x_to_y", "y_to_x")
SOURCE_DOMAIN = {"x_to_y": "WLI", "y_to_x": "NBI"}
TARGET_FAKE_DOMAIN = {"x_to_y": "NBI_f", "y_to_x": "WLI_f"}
#: which translation direction produces each fake domain tag
DIRECTION_FOR_FAKE = {"NBI_f": "x_to_y", "WLI_f": "y_to_x"}


@dataclass
class LossWeights:
    """Equal cycle/adversarial weighting by default; the identity term is unused."""

    w_cyc: float = 1.0
    w_gan: float = 1.0
    w_id: float = 0.0

    def __post_init__(self):
        if self.w_cyc < 0 or self.w_gan < 0:
            raise ValidationError("loss weights must be non-negative")
        if self.w_id != 0.0:
            raise ValidationError("the identity loss is not supported; w_id must stay 0")


@dataclass
class GanTrainConfig:
    epochs: int = 1000
    initial_lr: float = 1e-5
    batch_size: int = 1
    beta1: float = 0.5
    beta2: float = 0.999
    augment: bool = True
    adversarial_form: str = "log"  # "log" | "lsgan"
    replay_buffer: bool = False
    replay_buffer_size: int = 50
    canvas_size: int = 768
    train_crop: int | None = None
    generator_base_channels: int = 64
    generator_depth: int = 6
    max_channels: int = 512
    discriminator_base_channels: int = 64
    discriminator_layers: int = 3
    checkpoint_every: int = 0
    device: str = "cpu"
    seed: int | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.initial_lr <= 0:
            raise ValidationError(f"initial_lr must be > 0, got {self.initial_lr}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.adversarial_form not in ("log", "lsgan"):
            raise ValidationError(f"unknown adversarial_form {self.adversarial_form!r}")
        if self.seed is None:
            raise ValidationError("gan config requires an explicit seed")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "GanTrainConfig":
        return dataclass_from_dict(cls, data, context="gan config")

    def lr_factor(self, epoch: int) -> float:
        """Constant for the first half of training, then linear decay to 0."""
        half = self.epochs // 2
        if epoch < half or self.epochs == 1:
            return 1.0
        return (self.epochs - epoch) / float(self.epochs - half)


@dataclass
class TranslationModelBundle:
    """The four networks plus training state; checkpoints round-trip bit-exactly."""

    F: UNetGenerator
    G: UNetGenerator
    D_X: PatchDiscriminator
    D_Y: PatchDiscriminator
    weights: LossWeights
    config: GanTrainConfig
    seed: int
    epoch: int = 0
    config_hash: str = ""

    def generator_for(self, direction: str) -> UNetGenerator:
        if direction not in DIRECTIONS:
            raise ValidationError(f"unknown direction {direction!r}; expected one of {DIRECTIONS}")
        return self.F if direction == "x_to_y" else self.G

    def save(self, path: str | Path) -> Path:
        arrays: dict[str, np.ndarray] = {}
        for prefix, module in (("F", self.F), ("G", self.G), ("D_X", self.D_X), ("D_Y", self.D_Y)):
            for k, v in state_dict_arrays(module).items():
                arrays[f"{prefix}.{k}"] = v
        meta = {
            "kind": "translation_bundle",
            "epoch": self.epoch,
            "seed": self.seed,
            "config": self.config.to_dict(),
            "weights": dataclasses.asdict(self.weights),
            "config_hash": self.config_hash,
        }
        return save_checkpoint(path, arrays, meta)

    @classmethod
    def load(cls, path: str | Path) -> "TranslationModelBundle":
        arrays, meta = load_checkpoint(path)
        if meta.get("kind") != "translation_bundle":
            raise ValidationError(f"{path}: not a translation checkpoint (kind={meta.get('kind')!r})")
        config = GanTrainConfig.from_dict(meta["config"])
        bundle = build_bundle(config, LossWeights(**meta["weights"]))
        bundle.epoch = meta["epoch"]
        bundle.config_hash = meta.get("config_hash", "")
        for prefix, module in (("F", bundle.F), ("G", bundle.G), ("D_X", bundle.D_X), ("D_Y", bundle.D_Y)):
            sub = {k[len(prefix) + 1 :]: v for k, v in arrays.items() if k.startswith(prefix + ".")}
            load_state_arrays(module, sub)
        return bundle


def build_bundle(config: GanTrainConfig, weights: LossWeights | None = None) -> TranslationModelBundle:
    """Construct and deterministically initialize the four networks."""
    weights = weights or LossWeights()
    gen_kwargs = dict(
        base_channels=config.generator_base_channels,
        depth=config.generator_depth,
        max_channels=config.max_channels,
    )
    F = UNetGenerator(**gen_kwargs)
    G = UNetGenerator(**gen_kwargs)
    D_X = PatchDiscriminator(base_channels=config.discriminator_base_channels, n_layers=config.discriminator_layers)
    D_Y = PatchDiscriminator(base_channels=config.discriminator_base_channels, n_layers=config.discriminator_layers)
    rng = np.random.default_rng(config.seed)
    for module in (F, G, D_X, D_Y):
        fill_normal_(module, rng, std=0.02)
        module.to(config.device)
    return TranslationModelBundle(
        F=F, G=G, D_X=D_X, D_Y=D_Y, weights=weights, config=config, seed=int(config.seed)
    )


class ImagePool:
    """Replay buffer of past fake images for discriminator updates."""

    def __init__(self, size: int, rng: np.random.Generator):
        self.size = size
        self.rng = rng
        self.images: list[torch.Tensor] = []

    def query(self, batch: torch.Tensor) -> torch.Tensor:
        if self.size <= 0:
            return batch
        out = []
        for img in batch:
            img = img.detach()
            if len(self.images) < self.size:
                self.images.append(img.clone())
                out.append(img)
            elif self.rng.random() < 0.5:
                idx = int(self.rng.integers(0, self.size))
                out.append(self.images[idx].clone())
                self.images[idx] = img.clone()
            else:
                out.append(img)
        return torch.stack(out, dim=0)


def _patch_tensor(pixels: np.ndarray, device: str) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(pixels.transpose(2, 0, 1))).to(device)


class GanTrainer:
    """Owns the bundle, its optimizers, and the alternating update loop."""

    def __init__(
        self,
        config: GanTrainConfig,
        weights: LossWeights | None = None,
        bundle: TranslationModelBundle | None = None,
    ):
        self.config = config
        self.bundle = bundle or build_bundle(config, weights)
        self.opt_g = torch.optim.Adam(
            list(self.bundle.F.parameters()) + list(self.bundle.G.parameters()),
            lr=config.initial_lr,
            betas=(config.beta1, config.beta2),
        )
        self.opt_d = torch.optim.Adam(
            list(self.bundle.D_X.parameters()) + list(self.bundle.D_Y.parameters()),
            lr=config.initial_lr,
            betas=(config.beta1, config.beta2),
        )
        self.rng = np.random.default_rng([int(config.seed), 0x5A11])
        pool_rng = np.random.default_rng([int(config.seed), 0xB0FF])
        pool_size = config.replay_buffer_size if config.replay_buffer else 0
        self.pool_x = ImagePool(pool_size, pool_rng)
        self.pool_y = ImagePool(pool_size, pool_rng)
        self.history: list[dict] = []

    def _set_lr(self, epoch: int) -> float:
        lr = self.config.initial_lr * self.config.lr_factor(epoch)
        for opt in (self.opt_g, self.opt_d):
            for group in opt.param_groups:
                group["lr"] = lr
        return lr

    def _check_finite(self, stage: str, components: dict) -> None:
        if not all(math.isfinite(v) for v in components.values()):
            raise NumericalError(f"non-finite loss during {stage} step", snapshot=components)

    def generator_step(self, batch_x: torch.Tensor, batch_y: torch.Tensor) -> dict:
        """One descent step on the generators; returns loss components and detached fakes."""
        b = self.bundle
        for d in (b.D_X, b.D_Y):
            d.requires_grad_(False)
        fake_y = b.F(batch_x)
        fake_x = b.G(batch_y)
        recon_x = b.G(fake_y)
        recon_y = b.F(fake_x)
        l_cyc = losses.cycle_terms(batch_x, recon_x, batch_y, recon_y)
        if self.config.adversarial_form == "log":
            adv = losses.generator_adversarial_objective(
                losses.per_image_probability(torch.sigmoid(b.D_Y(fake_y))),
                losses.per_image_probability(torch.sigmoid(b.D_X(fake_x))),
            )
        else:
            adv = losses.lsgan_generator_objective(b.D_Y(fake_y), b.D_X(fake_x))
        total = b.weights.w_cyc * l_cyc + b.weights.w_gan * adv
        components = {"L_c": float(l_cyc.detach()), "L_d_gen": float(adv.detach())}
        self._check_finite("generator", components)
        self.opt_g.zero_grad(set_to_none=True)
        total.backward()
        self.opt_g.step()
        for d in (b.D_X, b.D_Y):
            d.requires_grad_(True)
        components["fake_x"] = fake_x.detach()
        components["fake_y"] = fake_y.detach()
        return components

    def discriminator_step(
        self, batch_x: torch.Tensor, batch_y: torch.Tensor, fake_x: torch.Tensor, fake_y: torch.Tensor
    ) -> dict:
        """One ascent step on the discriminators (descent on the negated view)."""
        b = self.bundle
        fake_x = self.pool_x.query(fake_x)
        fake_y = self.pool_y.query(fake_y)
        if self.config.adversarial_form == "log":
            objective = losses.discriminator_adversarial_objective(
                losses.per_image_probability(torch.sigmoid(b.D_X(batch_x))),
                losses.per_image_probability(torch.sigmoid(b.D_Y(fake_y))),
                losses.per_image_probability(torch.sigmoid(b.D_X(fake_x))),
                losses.per_image_probability(torch.sigmoid(b.D_Y(batch_y))),
            )
        else:
            objective = losses.lsgan_discriminator_objective(
                b.D_X(batch_x), b.D_Y(fake_y), b.D_X(fake_x), b.D_Y(batch_y)
            )
        components = {"L_d_disc": float(objective.detach())}
        self._check_finite("discriminator", components)
        self.opt_d.zero_grad(set_to_none=True)
        objective.backward()
        self.opt_d.step()
        return components

    def _prepare(self, patch: ImagePatch) -> torch.Tensor:
        pixels = patch.pixels
        crop = self.config.train_crop
        if crop is not None:
            h, w = pixels.shape[:2]
            if crop > h or crop > w:
                raise ValidationError(f"train_crop {crop} exceeds patch size {h}x{w}")
            top = int(self.rng.integers(0, h - crop + 1))
            left = int(self.rng.integers(0, w - crop + 1))
            pixels = pixels[top : top + crop, left : left + crop]
        if self.config.augment:
            pixels = dihedral_apply(pixels, int(self.rng.integers(0, 8)))
        return _patch_tensor(pixels, self.config.device)

    def train(self, dataset_x: DomainDataset, dataset_y: DomainDataset, out_dir: str | Path | None = None):
        """Run the full alternating loop; returns the trained bundle."""
        if len(dataset_x) == 0 or len(dataset_y) == 0:
            raise ValidationError("both training pools must be nonempty")
        cfg = self.config
        out_dir = Path(out_dir) if out_dir is not None else None
        log_path = out_dir / "loss_log.csv" if out_dir else None
        if log_path and not log_path.exists():
            out_dir.mkdir(parents=True, exist_ok=True)
            log_path.write_text("epoch,L_c,L_d_gen,L_d_disc\n", encoding="utf-8")

        nx, ny = len(dataset_x), len(dataset_y)
        steps = math.ceil(max(nx, ny) / cfg.batch_size)
        for epoch in range(self.bundle.epoch, cfg.epochs):
            lr = self._set_lr(epoch)
            order_x = self.rng.permutation(nx)
            order_y = self.rng.permutation(ny)
            sums = {"L_c": 0.0, "L_d_gen": 0.0, "L_d_disc": 0.0}
            for step in range(steps):
                xs = [self._prepare(dataset_x[order_x[(step * cfg.batch_size + j) % nx]]) for j in range(cfg.batch_size)]
                ys = [self._prepare(dataset_y[order_y[(step * cfg.batch_size + j) % ny]]) for j in range(cfg.batch_size)]
                batch_x = torch.stack(xs)
                batch_y = torch.stack(ys)
                rec = self.generator_step(batch_x, batch_y)
                drec = self.discriminator_step(batch_x, batch_y, rec["fake_x"], rec["fake_y"])
                sums["L_c"] += rec["L_c"]
                sums["L_d_gen"] += rec["L_d_gen"]
                sums["L_d_disc"] += drec["L_d_disc"]
            means = {k: v / steps for k, v in sums.items()}
            means["epoch"] = epoch
            means["lr"] = lr
            self.history.append(means)
            self.bundle.epoch = epoch + 1
            if log_path:
                with log_path.open("a", encoding="utf-8") as fh:
                    fh.write(f"{epoch},{means['L_c']:.6f},{means['L_d_gen']:.6f},{means['L_d_disc']:.6f}\n")
            if epoch % 25 == 0 or epoch == cfg.epochs - 1:
                log.info(
                    "epoch %d/%d  L_c=%.4f  L_d_gen=%.4f  L_d_disc=%.4f",
                    epoch + 1, cfg.epochs, means["L_c"], means["L_d_gen"], means["L_d_disc"],
                )
            if out_dir and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
                self.bundle.save(out_dir / "checkpoints" / f"epoch_{epoch + 1:04d}.ckpt")
        return self.bundle


def train_translation(
    config: GanTrainConfig,
    real_x: DomainDataset,
    real_y: DomainDataset,
    weights: LossWeights | None = None,
    out_dir: str | Path | None = None,
) -> TranslationModelBundle:
    """Train the translation model on two unpaired pools."""
    trainer = GanTrainer(config, weights)
    trainer.bundle.config_hash = stable_hash(config.to_dict())
    return trainer.train(real_x, real_y, out_dir=out_dir)


def translate_dataset(
    bundle, dataset: DomainDataset, direction: str, batch_size: int = 8
) -> DomainDataset:
    """Map every patch through the direction's generator, producing a fake dataset.

    Labels, patient ids, and source ids are preserved; the domain tag becomes
    the fake counterpart and provenance is set to ``fake``.  Inference applies
    no stochastic augmentation.
    """
    if direction not in DIRECTIONS:
        raise ValidationError(f"unknown direction {direction!r}; expected one of {DIRECTIONS}")
    expected = SOURCE_DOMAIN[direction]
    if dataset.domain != expected:
        raise ValidationError(
            f"direction {direction} translates {expected} data, got dataset domain {dataset.domain!r}"
        )
    generator = bundle.generator_for(direction)
    device = getattr(getattr(bundle, "config", None), "device", "cpu")
    was_training = getattr(generator, "training", False)
    if hasattr(generator, "eval"):
        generator.eval()
    fakes: list[ImagePatch] = []
    with torch.no_grad():
        for start in range(0, len(dataset), batch_size):
            chunk = dataset.patches[start : start + batch_size]
            batch = torch.stack([_patch_tensor(p.pixels, device) for p in chunk])
            out = generator(batch).cpu().numpy()
            for patch, pixels in zip(chunk, out):
                fakes.append(
                    ImagePatch(
                        pixels=np.ascontiguousarray(pixels.transpose(1, 2, 0)).astype(np.float32),
                        label=patch.label,
                        patient_id=patch.patient_id,
                        domain=TARGET_FAKE_DOMAIN[direction],
                        source_id=patch.source_id,
                        provenance="fake",
                    )
                )
    if hasattr(generator, "train") and was_training:
        generator.train()
    return DomainDataset(tuple(fakes), TARGET_FAKE_DOMAIN[direction])
