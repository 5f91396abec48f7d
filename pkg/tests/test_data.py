import numpy as np
import pytest
from PIL import Image

from endotrans.data import (
    DomainDataset,
    ImagePatch,
    concat_datasets,
    denormalize_to_u8,
    load_manifest,
    merge_datasets,
    normalize_u8,
    pad_to_canvas,
    save_dataset,
)
from endotrans.errors import ManifestError, ValidationError

from conftest import make_patch, make_tiny_dataset


def test_normalize_round_trip_exact_for_all_u8_values():
    values = np.arange(256, dtype=np.uint8).reshape(16, 16)
    rgb = np.stack([values] * 3, axis=-1)
    normalized = normalize_u8(rgb)
    assert normalized.dtype == np.float32
    assert normalized.min() == -1.0 and normalized.max() == 1.0
    assert np.array_equal(denormalize_to_u8(normalized), rgb)


def test_normalize_range_endpoints():
    assert normalize_u8(np.array([[[0, 127, 255]]], dtype=np.uint8)).tolist() == [
        [[-1.0, pytest.approx(-0.003921568, abs=1e-6), 1.0]]
    ]


def test_patch_validation():
    with pytest.raises(ValidationError):
        make_patch(label="benign")
    with pytest.raises(ValidationError):
        make_patch(provenance="synthetic")
    with pytest.raises(ValidationError):
        ImagePatch(
            pixels=np.zeros((4, 4), dtype=np.float32),
            label="healthy",
            patient_id="P0",
            domain="WLI",
            source_id="x",
        )


def test_dataset_counts_and_summary():
    ds = make_tiny_dataset(n_patients=3, per_patient=2)
    assert len(ds) == 6
    assert ds.counts == {"healthy": 4, "celiac": 2}
    assert ds.recount() == ds.counts
    assert ds.summary() == "WLI: 6 (4/2)"
    assert ds.patients == frozenset({"P00", "P01", "P02"})


def test_dataset_rejects_foreign_domain():
    patches = [make_patch(domain="WLI"), make_patch(domain="NBI", source_id="other")]
    with pytest.raises(ValidationError):
        DomainDataset(tuple(patches), "WLI")


def test_from_patches_infers_composite_domain():
    patches = [make_patch(domain="WLI"), make_patch(domain="NBI", source_id="other")]
    ds = DomainDataset.from_patches(patches)
    assert ds.domain == "WLI+NBI"
    assert ds.is_composite
    assert DomainDataset.from_patches([]).domain == "empty"


def test_filter_keeps_domain_tag():
    ds = make_tiny_dataset(n_patients=4)
    kept = ds.filter(lambda p: p.patient_id == "P01")
    assert kept.domain == "WLI"
    assert kept.patients == frozenset({"P01"})


def test_merge_keeps_duplicates_and_order():
    a = make_tiny_dataset("WLI", n_patients=2)
    b = make_tiny_dataset("NBI", n_patients=2)
    merged = merge_datasets(a, b)
    assert merged.domain == "WLI+NBI"
    assert len(merged) == len(a) + len(b)
    again = merge_datasets(merged, a)
    assert len(again) == len(merged) + len(a)  # multiset semantics
    assert again.domain == "WLI+NBI"
    assert concat_datasets([]).domain == "empty"


def _write_images(root, names, size=16):
    for name in names:
        arr = np.random.default_rng(hash(name) % 2**32).integers(
            0, 256, size=(size, size, 3), dtype=np.uint8
        )
        Image.fromarray(arr, "RGB").save(root / name)


def _write_manifest(root, rows, header="path,patient_id,label,domain"):
    lines = [header] + rows
    path = root / "manifest.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def test_load_manifest_happy_path(tmp_path):
    _write_images(tmp_path, ["a.png", "b.png"])
    path = _write_manifest(
        tmp_path,
        ["a.png,P1,healthy,WLI", "b.png,P2,celiac,WLI"],
    )
    ds = load_manifest(path, expected_size=16)
    assert len(ds) == 2
    assert ds.domain == "WLI"
    assert ds[0].source_id == "a.png"  # defaults to the path
    assert ds[0].provenance == "real"
    assert ds[0].pixels.shape == (16, 16, 3)


def test_load_manifest_rejects_unknown_column(tmp_path):
    _write_images(tmp_path, ["a.png"])
    path = _write_manifest(
        tmp_path, ["a.png,P1,healthy,WLI,x"], header="path,patient_id,label,domain,extra"
    )
    with pytest.raises(ManifestError, match="unknown manifest column"):
        load_manifest(path, expected_size=16)


def test_load_manifest_rejects_missing_column(tmp_path):
    path = _write_manifest(tmp_path, ["a.png,P1,healthy"], header="path,patient_id,label")
    with pytest.raises(ManifestError, match="missing manifest column"):
        load_manifest(path, expected_size=16)


@pytest.mark.parametrize(
    "row,message",
    [
        ("a.png,,healthy,WLI", "missing value"),
        ("a.png,P1,polyp,WLI", "unknown label"),
        ("a.png,P1,healthy,XYZ", "unknown domain"),
    ],
)
def test_load_manifest_row_errors_name_the_row(tmp_path, row, message):
    _write_images(tmp_path, ["a.png"])
    path = _write_manifest(tmp_path, [row])
    with pytest.raises(ManifestError, match=f"row 2: {message}"):
        load_manifest(path, expected_size=16)


def test_load_manifest_rejects_mixed_domains(tmp_path):
    _write_images(tmp_path, ["a.png", "b.png"])
    path = _write_manifest(tmp_path, ["a.png,P1,healthy,WLI", "b.png,P2,celiac,NBI"])
    with pytest.raises(ManifestError, match="mixed domains"):
        load_manifest(path, expected_size=16)


def test_load_manifest_rejects_duplicate_source_id(tmp_path):
    _write_images(tmp_path, ["a.png", "b.png"])
    path = _write_manifest(
        tmp_path,
        ["a.png,P1,healthy,WLI,s1", "b.png,P2,celiac,WLI,s1"],
        header="path,patient_id,label,domain,source_id",
    )
    with pytest.raises(ManifestError, match="duplicate source_id"):
        load_manifest(path, expected_size=16)


def test_load_manifest_fake_requires_source_id(tmp_path):
    _write_images(tmp_path, ["a.png"])
    path = _write_manifest(
        tmp_path,
        ["a.png,P1,healthy,NBI_f,fake,"],
        header="path,patient_id,label,domain,provenance,source_id",
    )
    with pytest.raises(ManifestError, match="fake rows must carry source_id"):
        load_manifest(path, expected_size=16)


def test_load_manifest_missing_image(tmp_path):
    path = _write_manifest(tmp_path, ["gone.png,P1,healthy,WLI"])
    with pytest.raises(ManifestError, match="image not found"):
        load_manifest(path, expected_size=16)


def test_load_manifest_never_resizes(tmp_path):
    _write_images(tmp_path, ["a.png"], size=16)
    path = _write_manifest(tmp_path, ["a.png,P1,healthy,WLI"])
    with pytest.raises(ValidationError, match="expected 32x32x3"):
        load_manifest(path, expected_size=32)


def test_load_manifest_enforces_uniform_size(tmp_path):
    _write_images(tmp_path, ["a.png"], size=16)
    _write_images(tmp_path, ["b.png"], size=24)
    path = _write_manifest(tmp_path, ["a.png,P1,healthy,WLI", "b.png,P2,celiac,WLI"])
    with pytest.raises(ValidationError, match="differs from the manifest"):
        load_manifest(path, expected_size=None)


def test_save_then_load_round_trip(tmp_path):
    ds = make_tiny_dataset("NBI", n_patients=3, per_patient=2, size=16)
    manifest = save_dataset(ds, tmp_path / "out")
    loaded = load_manifest(manifest, expected_size=16)
    assert len(loaded) == len(ds)
    assert loaded.domain == "NBI"
    for orig, back in zip(ds, loaded):
        assert back.label == orig.label
        assert back.patient_id == orig.patient_id
        assert back.source_id == orig.source_id
        # PNG stores u8, so the round trip is exact at u8 resolution
        assert np.array_equal(denormalize_to_u8(back.pixels), denormalize_to_u8(orig.pixels))


def test_save_fake_dataset_round_trip(tmp_path):
    patches = [
        make_patch(domain="NBI_f", provenance="fake", source_id=f"src{i}", seed=i)
        for i in range(3)
    ]
    ds = DomainDataset.from_patches(patches, domain="NBI_f")
    manifest = save_dataset(ds, tmp_path / "fake")
    loaded = load_manifest(manifest, expected_size=8)
    assert all(p.provenance == "fake" for p in loaded)
    assert [p.source_id for p in loaded] == ["src0", "src1", "src2"]


def test_pad_to_canvas_centers_and_reflects():
    patch = make_patch(size=4)
    padded = pad_to_canvas(patch, canvas=8, mode="reflect")
    assert padded.size == (8, 8)
    assert np.array_equal(padded.pixels[2:6, 2:6], patch.pixels)
    # reflection: the row just above the content mirrors the content's second row
    assert np.array_equal(padded.pixels[1, 2:6], patch.pixels[1, :])


def test_pad_to_canvas_constant_and_noop():
    patch = make_patch(size=4)
    padded = pad_to_canvas(patch, canvas=6, mode="constant", fill=-1.0)
    assert padded.pixels[0, 0, 0] == -1.0
    assert pad_to_canvas(patch, canvas=4) is patch
    with pytest.raises(ValidationError):
        pad_to_canvas(patch, canvas=2)
    with pytest.raises(ValidationError):
        pad_to_canvas(patch, canvas=8, mode="wrap")
