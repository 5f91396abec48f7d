import numpy as np
import pytest

from endotrans.data import DomainDataset, ImagePatch
from endotrans.synthetic import make_corpus


def make_patch(
    size=8,
    label="healthy",
    patient_id="P00",
    domain="WLI",
    source_id=None,
    provenance="real",
    seed=0,
    value=None,
):
    """Small random (or constant) patch for unit tests."""
    if value is not None:
        pixels = np.full((size, size, 3), value, dtype=np.float32)
    else:
        rng = np.random.default_rng(seed)
        pixels = rng.uniform(-1, 1, size=(size, size, 3)).astype(np.float32)
    if source_id is None:
        source_id = f"{domain}_{patient_id}_{seed}"
    return ImagePatch(
        pixels=pixels,
        label=label,
        patient_id=patient_id,
        domain=domain,
        source_id=source_id,
        provenance=provenance,
    )


def make_tiny_dataset(domain="WLI", n_patients=4, per_patient=2, size=8):
    patches = []
    for pi in range(n_patients):
        label = "healthy" if pi % 2 == 0 else "celiac"
        for ii in range(per_patient):
            patches.append(
                make_patch(
                    size=size,
                    label=label,
                    patient_id=f"P{pi:02d}",
                    domain=domain,
                    source_id=f"{domain}_P{pi:02d}_{ii}",
                    seed=pi * 100 + ii,
                )
            )
    return DomainDataset.from_patches(patches, domain=domain)


@pytest.fixture(scope="session")
def corpus64():
    """Small synthetic two-domain corpus at 64 px, shared across tests."""
    return make_corpus(n_patients=6, images_per_patient=2, size=64, seed=11)
