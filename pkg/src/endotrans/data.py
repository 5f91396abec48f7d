"""Datasets of endoscopic image patches and their manifest files.

A patch is a 3-channel image with pixel values normalized to [-1, 1],
carrying a diagnosis label, the originating patient, the imaging domain
(white-light ``WLI`` or narrow-band ``NBI``, plus the translated variants
``WLI_f`` / ``NBI_f``) and a stable ``source_id``.  Datasets are immutable
once built; all operations here return new objects.

Manifest format (UTF-8 CSV with header)::

    path,patient_id,label,domain[,provenance,source_id]

``label`` is one of ``healthy`` / ``celiac``; ``provenance`` defaults to
``real``.  Fake (translated) datasets carry ``provenance=fake`` and the
``source_id`` of the real source patch.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
from PIL import Image

from .errors import ManifestError, ValidationError

LABELS = ("healthy", "celiac")
REAL_DOMAINS = ("WLI", "NBI")
FAKE_DOMAINS = ("WLI_f", "NBI_f")
DOMAINS = REAL_DOMAINS + FAKE_DOMAINS
PROVENANCES = ("real", "fake")

MANIFEST_FIELDS = ("path", "patient_id", "label", "domain")
MANIFEST_OPTIONAL_FIELDS = ("provenance", "source_id")


def normalize_u8(pixels: np.ndarray) -> np.ndarray:
    """Map 8-bit RGB values linearly onto [-1, 1] (float32)."""
    return (pixels.astype(np.float32) / 127.5) - 1.0


def denormalize_to_u8(pixels: np.ndarray) -> np.ndarray:
    """Invert :func:`normalize_u8`; exact for values produced by it."""
    return np.clip(np.rint((np.asarray(pixels, dtype=np.float64) + 1.0) * 127.5), 0, 255).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class ImagePatch:
    """One RGB patch plus its metadata.

    ``pixels`` is an H x W x 3 float32 array in [-1, 1].  For translated
    (fake) patches, ``label``, ``patient_id`` and ``source_id`` are those of
    the real source patch.
    """

    pixels: np.ndarray
    label: str
    patient_id: str
    domain: str
    source_id: str
    provenance: str = "real"

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValidationError(f"unknown label {self.label!r}; expected one of {LABELS}")
        if self.provenance not in PROVENANCES:
            raise ValidationError(f"unknown provenance {self.provenance!r}")
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValidationError(f"patch pixels must be HxWx3, got shape {self.pixels.shape}")

    @property
    def size(self) -> tuple[int, int]:
        return self.pixels.shape[0], self.pixels.shape[1]

    def with_pixels(self, pixels: np.ndarray) -> "ImagePatch":
        """Copy of this patch with new pixel data, metadata unchanged."""
        return replace(self, pixels=pixels)


def _domain_parts(tag: str) -> tuple[str, ...]:
    return tuple(tag.split("+"))


@dataclass(frozen=True, eq=False)
class DomainDataset:
    """An ordered multiset of patches from one domain (or a merged composite).

    ``domain`` is a single tag like ``"NBI"`` or a ``"+"``-joined composite
    such as ``"NBI+NBI_f"`` for merged training pools.
    """

    patches: tuple[ImagePatch, ...]
    domain: str
    counts: dict = field(default_factory=dict)

    def __post_init__(self):
        parts = set(_domain_parts(self.domain))
        for p in self.patches:
            if p.domain not in parts:
                raise ValidationError(
                    f"patch domain {p.domain!r} does not match dataset domain {self.domain!r}"
                )
        recount = dict(Counter(p.label for p in self.patches))
        for lab in LABELS:
            recount.setdefault(lab, 0)
        object.__setattr__(self, "counts", recount)

    @classmethod
    def from_patches(cls, patches: Iterable[ImagePatch], domain: str | None = None) -> "DomainDataset":
        patches = tuple(patches)
        if domain is None:
            seen: list[str] = []
            for p in patches:
                if p.domain not in seen:
                    seen.append(p.domain)
            domain = "+".join(seen) if seen else "empty"
        return cls(patches=patches, domain=domain)

    def __len__(self) -> int:
        return len(self.patches)

    def __iter__(self) -> Iterator[ImagePatch]:
        return iter(self.patches)

    def __getitem__(self, i: int) -> ImagePatch:
        return self.patches[i]

    @property
    def is_composite(self) -> bool:
        return "+" in self.domain

    @property
    def patients(self) -> frozenset[str]:
        return frozenset(p.patient_id for p in self.patches)

    def recount(self) -> dict:
        """Recompute per-label counts from the patches (invariant check)."""
        counts = dict(Counter(p.label for p in self.patches))
        for lab in LABELS:
            counts.setdefault(lab, 0)
        return counts

    def filter(self, predicate) -> "DomainDataset":
        return DomainDataset(tuple(p for p in self.patches if predicate(p)), self.domain)

    def summary(self) -> str:
        return f"{self.domain}: {len(self)} ({self.counts['healthy']}/{self.counts['celiac']})"


def load_manifest(path: str | Path, expected_size: int | None = 256) -> DomainDataset:
    """Load a dataset from a manifest CSV.

    Every referenced image must decode to ``expected_size`` square RGB
    (pass ``None`` to accept any size, uniform across the manifest).
    Images are never resized; a wrong size is an error.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    root = path.parent

    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return DomainDataset.from_patches([], domain="empty")
        known = set(MANIFEST_FIELDS) | set(MANIFEST_OPTIONAL_FIELDS)
        unknown = [c for c in reader.fieldnames if c not in known]
        if unknown:
            raise ManifestError(f"{path}: unknown manifest column(s) {unknown}")
        missing = [c for c in MANIFEST_FIELDS if c not in reader.fieldnames]
        if missing:
            raise ManifestError(f"{path}: missing manifest column(s) {missing}")
        rows = list(reader)

    patches: list[ImagePatch] = []
    seen_ids: set[str] = set()
    domain: str | None = None
    uniform: tuple[int, int] | None = None
    for i, row in enumerate(rows, start=2):  # header is line 1
        values = {k: (v or "").strip() for k, v in row.items() if k is not None}
        for col in MANIFEST_FIELDS:
            if not values.get(col):
                raise ManifestError(f"{path}: row {i}: missing value for {col!r}")
        if values["label"] not in LABELS:
            raise ManifestError(f"{path}: row {i}: unknown label {values['label']!r}")
        if values["domain"] not in DOMAINS:
            raise ManifestError(f"{path}: row {i}: unknown domain {values['domain']!r}")
        if domain is None:
            domain = values["domain"]
        elif values["domain"] != domain:
            raise ManifestError(
                f"{path}: row {i}: mixed domains in one manifest ({values['domain']!r} vs {domain!r})"
            )
        provenance = values.get("provenance") or "real"
        if provenance not in PROVENANCES:
            raise ManifestError(f"{path}: row {i}: unknown provenance {provenance!r}")
        if provenance == "fake" and not values.get("source_id"):
            raise ManifestError(f"{path}: row {i}: fake rows must carry source_id")
        source_id = values.get("source_id") or values["path"]
        if source_id in seen_ids:
            raise ManifestError(f"{path}: row {i}: duplicate source_id {source_id!r}")
        seen_ids.add(source_id)

        img_path = root / values["path"]
        if not img_path.exists():
            raise ManifestError(f"{path}: row {i}: image not found: {img_path}")
        try:
            with Image.open(img_path) as img:
                arr = np.asarray(img.convert("RGB"))
        except Exception as exc:
            raise ManifestError(f"{path}: row {i}: cannot decode image {img_path}: {exc}") from exc
        if expected_size is not None and arr.shape != (expected_size, expected_size, 3):
            raise ValidationError(
                f"{img_path}: expected {expected_size}x{expected_size}x3 image, got {arr.shape}"
            )
        if uniform is None:
            uniform = arr.shape[:2]
        elif arr.shape[:2] != uniform:
            raise ValidationError(
                f"{img_path}: image size {arr.shape[:2]} differs from the manifest's {uniform}"
            )
        patches.append(
            ImagePatch(
                pixels=normalize_u8(arr),
                label=values["label"],
                patient_id=values["patient_id"],
                domain=values["domain"],
                source_id=source_id,
                provenance=provenance,
            )
        )

    return DomainDataset.from_patches(patches, domain=domain or "empty")


def save_dataset(dataset: DomainDataset, out_dir: str | Path, manifest_name: str = "manifest.csv") -> Path:
    """Write a dataset as PNG files plus a manifest CSV; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    any_fake = any(p.provenance == "fake" for p in dataset)
    fields = list(MANIFEST_FIELDS) + (["provenance", "source_id"] if any_fake else ["source_id"])
    manifest_path = out_dir / manifest_name
    with manifest_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for i, patch in enumerate(dataset):
            fname = f"{patch.domain}_{i:05d}.png"
            Image.fromarray(denormalize_to_u8(patch.pixels)).save(out_dir / fname)
            row = [fname, patch.patient_id, patch.label, patch.domain]
            if any_fake:
                row.append(patch.provenance)
            row.append(patch.source_id)
            writer.writerow(row)
    return manifest_path


def pad_to_canvas(
    patch: ImagePatch,
    canvas: int = 768,
    mode: str = "reflect",
    fill: float = -1.0,
) -> ImagePatch:
    """Center the patch on a ``canvas`` x ``canvas`` square.

    The border is reflect-padded by default to avoid hard synthetic edges;
    ``mode="constant"`` fills with ``fill`` instead.
    """
    h, w = patch.size
    if h > canvas or w > canvas:
        raise ValidationError(f"patch {h}x{w} does not fit canvas {canvas}")
    if h == canvas and w == canvas:
        return patch
    top = (canvas - h) // 2
    left = (canvas - w) // 2
    pad = ((top, canvas - h - top), (left, canvas - w - left), (0, 0))
    if mode == "reflect":
        pixels = np.pad(patch.pixels, pad, mode="reflect")
    elif mode == "constant":
        pixels = np.pad(patch.pixels, pad, mode="constant", constant_values=fill)
    else:
        raise ValidationError(f"unknown padding mode {mode!r}")
    return patch.with_pixels(np.ascontiguousarray(pixels))


def merge_datasets(a: DomainDataset, b: DomainDataset) -> DomainDataset:
    """Multiset union of two datasets; duplicates are kept for sampling."""
    parts: list[str] = []
    for tag in _domain_parts(a.domain) + _domain_parts(b.domain):
        if tag not in parts and tag != "empty":
            parts.append(tag)
    domain = "+".join(parts) if parts else "empty"
    return DomainDataset(a.patches + b.patches, domain)


def concat_datasets(datasets: Sequence[DomainDataset]) -> DomainDataset:
    if not datasets:
        return DomainDataset.from_patches([], domain="empty")
    out = datasets[0]
    for d in datasets[1:]:
        out = merge_datasets(out, d)
    return out
