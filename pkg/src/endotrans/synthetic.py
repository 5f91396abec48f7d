"""Procedural two-domain toy corpus for end-to-end checks and demos.

Images are striped, tinted textures.  The class signal is carried by stripe
frequency (coarse for ``healthy``, fine for ``celiac``) plus a color tint —
both survive rotations and flips, so augmentation cannot erase them.  Every
patient has a fixed diagnosis and contributes several images, which gives the
patient-grouped fold logic something real to chew on.

The second domain applies a fixed, invertible, pixel-local color remap (an
affine channel mix plus offsets) to independently generated content.  A
classifier fit on raw first-domain colors degrades badly on the remapped
domain, and a well-trained translation model restores most of the gap —
exactly the regime the full pipeline is meant to exercise.
"""

from __future__ import annotations

import numpy as np

from .data import DomainDataset, ImagePatch
from .errors import ValidationError
from .util import derive_seed

#: per-class stripe frequency ranges (cycles per image edge) and base tints
_CLASS_STYLE = {
    "healthy": {"freq": (2.0, 3.0), "tint": (0.35, 0.55, 0.40)},
    "celiac": {"freq": (7.0, 9.0), "tint": (0.55, 0.35, 0.30)},
}


def remap_to_y(pixels: np.ndarray) -> np.ndarray:
    """Fixed color remap defining the second domain's appearance.

    Operates per pixel in [0, 1] space as one affine transform: the
    red/green pair is mixed (their difference compressed to roughly a
    quarter and pushed toward red), and blue is squeezed into a bright
    band.  All eigenvalues of the mix are positive, so no color axis is
    inverted and the remap is a single global invertible map whose honest
    inverse is also the simplest one — nothing rewards trading the two
    class palettes for each other.  It still defeats a classifier trained
    on raw first-domain colors, because the offsets drop both class
    palettes on the same side of every channel contrast that separates the
    classes in the first domain.
    """
    arr = (np.asarray(pixels, dtype=np.float64) + 1.0) / 2.0
    arr = np.clip(arr, 0.0, 1.0)
    r, g, b = arr[..., 0], arr[..., 1], arr[..., 2]
    out = np.stack(
        [
            0.52 * r + 0.28 * g + 0.24,
            0.28 * r + 0.52 * g - 0.04,
            0.30 * b + 0.35,
        ],
        axis=-1,
    )
    return (np.clip(out, 0.0, 1.0) * 2.0 - 1.0).astype(np.float32)


def _texture(rng: np.random.Generator, label: str, size: int) -> np.ndarray:
    style = _CLASS_STYLE[label]
    yy, xx = np.meshgrid(np.linspace(0, 1, size), np.linspace(0, 1, size), indexing="ij")

    freq = rng.uniform(*style["freq"])
    theta = rng.uniform(0, np.pi)
    phase = rng.uniform(0, 2 * np.pi)
    stripes = 0.10 * np.sin(2 * np.pi * freq * (np.cos(theta) * xx + np.sin(theta) * yy) + phase)

    gdir = rng.uniform(0, 2 * np.pi)
    gradient = 0.06 * ((xx - 0.5) * np.cos(gdir) + (yy - 0.5) * np.sin(gdir))

    base = np.asarray(style["tint"]) + rng.normal(0, 0.04, size=3)
    img = base[None, None, :] + (stripes + gradient)[..., None]
    img = img + rng.normal(0, 0.005, size=img.shape)
    img = np.clip(img, 0.02, 0.98)
    return (img * 2.0 - 1.0).astype(np.float32)


def make_synthetic_dataset(
    domain: str,
    n_patients: int,
    images_per_patient: int = 4,
    size: int = 64,
    seed: int = 0,
    patient_prefix: str = "P",
) -> DomainDataset:
    """Generate a labeled pool for one domain.

    Patients alternate diagnoses (even index healthy, odd celiac) so both
    classes are always present.  ``domain="NBI"`` pushes the content through
    :func:`remap_to_y`; the content streams of different (seed, domain,
    prefix) triples are independent.
    """
    if domain not in ("WLI", "NBI"):
        raise ValidationError(f"synthetic domain must be WLI or NBI, got {domain!r}")
    if n_patients < 2:
        raise ValidationError("need at least 2 patients (one per class)")
    rng = np.random.default_rng(derive_seed(seed, domain, patient_prefix))
    patches = []
    for pi in range(n_patients):
        label = "healthy" if pi % 2 == 0 else "celiac"
        pid = f"{patient_prefix}{pi:02d}"
        for ii in range(images_per_patient):
            pixels = _texture(rng, label, size)
            if domain == "NBI":
                pixels = remap_to_y(pixels)
            patches.append(
                ImagePatch(
                    pixels=np.ascontiguousarray(pixels),
                    label=label,
                    patient_id=pid,
                    domain=domain,
                    source_id=f"{domain}_{pid}_{ii:02d}",
                )
            )
    return DomainDataset.from_patches(patches, domain=domain)


def make_corpus(
    n_patients: int = 8,
    images_per_patient: int = 4,
    size: int = 64,
    seed: int = 0,
) -> dict[str, DomainDataset]:
    """Unpaired two-domain corpus with disjoint patient populations."""
    return {
        "WLI": make_synthetic_dataset(
            "WLI", n_patients, images_per_patient, size, seed, patient_prefix="PX"
        ),
        "NBI": make_synthetic_dataset(
            "NBI", n_patients, images_per_patient, size, seed, patient_prefix="PY"
        ),
    }
