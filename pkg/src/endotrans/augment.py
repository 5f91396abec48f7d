"""Dihedral flip/rotation augmentation and crop operations.

The eight transforms form the symmetry group of the square: ids 0-3 are
counter-clockwise rotations by 0/90/180/270 degrees, ids 4-7 add a
horizontal flip after the rotation.  Id 0 is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ImagePatch
from .errors import ValidationError

N_DIHEDRAL = 8


@dataclass(frozen=True)
class AugmentSpec:
    """A sampled augmentation: one dihedral transform plus the crop size."""

    transform_id: int
    crop_size: int

    def __post_init__(self):
        if not 0 <= self.transform_id < N_DIHEDRAL:
            raise ValidationError(f"transform_id must be in [0, {N_DIHEDRAL}), got {self.transform_id}")
        if self.crop_size < 1:
            raise ValidationError(f"crop_size must be positive, got {self.crop_size}")


def dihedral_apply(pixels: np.ndarray, transform_id: int) -> np.ndarray:
    """Apply one of the eight flip/rotation transforms to an H x W x C array."""
    if not 0 <= transform_id < N_DIHEDRAL:
        raise ValidationError(f"transform_id must be in [0, {N_DIHEDRAL}), got {transform_id}")
    rot = transform_id % 4
    out = np.rot90(pixels, k=rot, axes=(0, 1)) if rot else pixels
    if transform_id >= 4:
        out = np.flip(out, axis=1)
    return np.ascontiguousarray(out)


def dihedral_augment(patch: ImagePatch, transform_id: int) -> ImagePatch:
    """Transformed copy of the patch; metadata unchanged."""
    return patch.with_pixels(dihedral_apply(patch.pixels, transform_id))


def crop_at(patch: ImagePatch, size: int, top: int, left: int) -> ImagePatch:
    h, w = patch.size
    if size > h or size > w:
        raise ValidationError(f"crop size {size} exceeds patch size {h}x{w}")
    if not (0 <= top <= h - size and 0 <= left <= w - size):
        raise ValidationError(f"crop offset ({top}, {left}) out of range for {h}x{w} -> {size}")
    return patch.with_pixels(np.ascontiguousarray(patch.pixels[top : top + size, left : left + size]))


def random_crop(patch: ImagePatch, size: int, rng: np.random.Generator) -> ImagePatch:
    """Crop a size x size window at a position drawn from ``rng``."""
    h, w = patch.size
    if size > h or size > w:
        raise ValidationError(f"crop size {size} exceeds patch size {h}x{w}")
    top = int(rng.integers(0, h - size + 1))
    left = int(rng.integers(0, w - size + 1))
    return crop_at(patch, size, top, left)


def center_crop(patch: ImagePatch, size: int) -> ImagePatch:
    """Deterministic central crop, used at test time."""
    h, w = patch.size
    if size > h or size > w:
        raise ValidationError(f"crop size {size} exceeds patch size {h}x{w}")
    return crop_at(patch, size, (h - size) // 2, (w - size) // 2)


def sample_augment(rng: np.random.Generator, crop_size: int) -> AugmentSpec:
    return AugmentSpec(transform_id=int(rng.integers(0, N_DIHEDRAL)), crop_size=crop_size)


def augment_patch(patch: ImagePatch, spec: AugmentSpec, rng: np.random.Generator) -> ImagePatch:
    """Random crop to ``spec.crop_size`` followed by the dihedral transform."""
    return dihedral_augment(random_crop(patch, spec.crop_size, rng), spec.transform_id)
