"""Run configuration: one YAML file drives data paths, both training stages,
and the evaluation protocol.

Loading is strict: unknown keys anywhere in the file are an error, so typos
fail fast instead of silently falling back to defaults.  Every section hashes
canonically (key order and YAML formatting do not matter), which is what the
resume logic uses to decide whether cached artifacts are still valid.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .classifiers import ARCHITECTURES, ClassifierSpec, ClfTrainConfig
from .errors import ValidationError
from .translation import GanTrainConfig, LossWeights
from .util import dataclass_from_dict, stable_hash

EXPERIMENT_IDS = ("E1", "E2a", "E2b", "E3a", "E3b")


@dataclass
class PathsConfig:
    wli_manifest: str = ""
    nbi_manifest: str = ""
    patch_size: int = 256

    def __post_init__(self):
        if self.patch_size < 8:
            raise ValidationError(f"patch_size too small: {self.patch_size}")


@dataclass
class ExperimentConfig:
    ids: tuple[str, ...] = EXPERIMENT_IDS
    k_folds: int = 5
    architectures: tuple[str, ...] = ARCHITECTURES
    per_fold_gan: bool = False
    seed: int | None = None

    def __post_init__(self):
        self.ids = tuple(self.ids)
        self.architectures = tuple(self.architectures)
        for eid in self.ids:
            if eid not in EXPERIMENT_IDS:
                raise ValidationError(f"unknown experiment id {eid!r}; expected one of {EXPERIMENT_IDS}")
        if len(set(self.ids)) != len(self.ids):
            raise ValidationError("duplicate experiment ids")
        for arch in self.architectures:
            if arch not in ARCHITECTURES:
                raise ValidationError(f"unknown architecture {arch!r}; expected one of {ARCHITECTURES}")
        if not self.architectures:
            raise ValidationError("at least one architecture is required")
        if self.k_folds < 2:
            raise ValidationError(f"k_folds must be >= 2, got {self.k_folds}")
        if self.seed is None:
            raise ValidationError("experiment config requires an explicit seed")


@dataclass
class ClassifierSection:
    """Shared training defaults plus per-architecture overrides and shapes."""

    default: dict = field(default_factory=dict)
    overrides: dict = field(default_factory=dict)
    specs: dict = field(default_factory=dict)

    def __post_init__(self):
        for arch in list(self.overrides) + list(self.specs):
            if arch not in ARCHITECTURES:
                raise ValidationError(f"classifier section references unknown architecture {arch!r}")
        # Validate eagerly so a broken override fails at load time, not mid-run.
        for arch in ARCHITECTURES:
            self.config_for(arch)
            self.spec_for(arch)

    def config_for(self, arch: str) -> ClfTrainConfig:
        merged = dict(self.default)
        merged.update(self.overrides.get(arch, {}))
        merged.setdefault("seed", 0)
        return ClfTrainConfig.from_dict(merged)

    def spec_for(self, arch: str) -> ClassifierSpec:
        kwargs = dict(self.specs.get(arch, {}))
        try:
            return ClassifierSpec(architecture=arch, **kwargs)
        except TypeError as exc:
            raise ValidationError(f"classifier spec for {arch}: {exc}") from exc


@dataclass
class RunConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    gan: GanTrainConfig | None = None
    weights: LossWeights = field(default_factory=LossWeights)
    classifier: ClassifierSection = field(default_factory=ClassifierSection)
    experiment: ExperimentConfig | None = None

    def to_dict(self) -> dict:
        return {
            "paths": dataclasses.asdict(self.paths),
            "gan": self.gan.to_dict() if self.gan else None,
            "weights": dataclasses.asdict(self.weights),
            "classifier": dataclasses.asdict(self.classifier),
            "experiment": dataclasses.asdict(self.experiment) if self.experiment else None,
        }

    def full_hash(self) -> str:
        return stable_hash(self.to_dict())

    def gan_hash(self) -> str:
        if self.gan is None:
            raise ValidationError("config has no gan section")
        return stable_hash({"gan": self.gan.to_dict(), "weights": dataclasses.asdict(self.weights)})

    def classifier_hash(self, arch: str) -> str:
        return stable_hash(
            {
                "config": dataclasses.asdict(self.clf_config_for(arch)),
                "spec": dataclasses.asdict(self.spec_for(arch)),
            }
        )

    def clf_config_for(self, arch: str) -> ClfTrainConfig:
        return self.classifier.config_for(arch)

    def spec_for(self, arch: str) -> ClassifierSpec:
        return self.classifier.spec_for(arch)

    def require_gan(self) -> GanTrainConfig:
        if self.gan is None:
            raise ValidationError("this command needs a [gan] section in the config")
        return self.gan

    def require_experiment(self) -> ExperimentConfig:
        if self.experiment is None:
            raise ValidationError("this command needs an [experiment] section in the config")
        return self.experiment


_SECTIONS = ("paths", "gan", "weights", "classifier", "experiment")


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ValidationError(f"config root must be a mapping, got {type(data).__name__}")
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ValidationError(f"unknown config sections: {sorted(unknown)}; expected among {_SECTIONS}")

    def section(name: str) -> dict:
        value = data.get(name) or {}
        if not isinstance(value, dict):
            raise ValidationError(f"config section {name!r} must be a mapping")
        return value

    cfg = RunConfig(
        paths=dataclass_from_dict(PathsConfig, section("paths"), context="paths section"),
        gan=GanTrainConfig.from_dict(section("gan")) if data.get("gan") else None,
        weights=dataclass_from_dict(LossWeights, section("weights"), context="weights section"),
        classifier=dataclass_from_dict(ClassifierSection, section("classifier"), context="classifier section"),
        experiment=(
            dataclass_from_dict(ExperimentConfig, section("experiment"), context="experiment section")
            if data.get("experiment")
            else None
        ),
    )
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise
    try:
        data = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ValidationError(f"{path}: invalid YAML: {exc}") from exc
    if data is None:
        data = {}
    return config_from_dict(data)
