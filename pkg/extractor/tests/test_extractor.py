import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from fvf_extractor.backbones import WeightsUnavailableError, get_spec, weights_checksum
from fvf_extractor.cli import main
from fvf_extractor.extract import extract_folder, list_labeled_images, preprocess
from fvf_extractor.fvf import read_fvf, write_fvf


@pytest.fixture(scope="module")
def image_folder(tmp_path_factory):
    """10 images, 2 classes, mixed sizes and formats."""
    root = tmp_path_factory.mktemp("images")
    rng = np.random.default_rng(0)
    for cls, count in (("lesion", 5), ("normal", 5)):
        d = root / cls
        d.mkdir()
        for i in range(count):
            arr = rng.integers(0, 255, size=(40 + 8 * i, 48, 3), dtype=np.uint8)
            Image.fromarray(arr).save(d / f"img{i}.png")
    return root


def test_fvf_round_trip(tmp_path):
    feats = np.arange(12, dtype=np.float32).reshape(3, 4)
    labels = np.array([0, 1, 1])
    path = tmp_path / "x.fvf"
    write_fvf(path, feats, labels, ["a", "b"], {"k": 1})
    f2, l2, names, meta = read_fvf(path)
    assert np.array_equal(f2, feats)
    assert l2.tolist() == [0, 1, 1]
    assert names == ["a", "b"]
    assert meta == {"k": 1}


def test_fvf_rejects_bad_labels(tmp_path):
    with pytest.raises(ValueError, match="label out of range"):
        write_fvf(tmp_path / "bad.fvf", np.zeros((2, 2), dtype=np.float32),
                  np.array([0, 2]), ["a", "b"], {})


def test_listing_is_sorted_and_labeled(image_folder):
    paths, labels, names = list_labeled_images(image_folder)
    assert names == ["lesion", "normal"]
    assert labels == [0] * 5 + [1] * 5
    assert paths == sorted(paths)


def test_empty_folder_errors(tmp_path):
    with pytest.raises(ValueError, match="no class subdirectories"):
        list_labeled_images(tmp_path)
    (tmp_path / "cls").mkdir()
    with pytest.raises(ValueError, match="no images"):
        list_labeled_images(tmp_path)


def test_preprocess_shape_and_range(image_folder):
    spec = get_spec("resnet50")
    path = next(image_folder.rglob("*.png"))
    with Image.open(path) as img:
        x = preprocess(img, spec)
    assert x.shape == (3, 224, 224)
    assert np.isfinite(x.numpy()).all()


def test_extract_resnet50_shapes(image_folder, tmp_path):
    out = tmp_path / "feats.fvf"
    summary = extract_folder(image_folder, "resnet50", out, weights="random:0")
    assert summary == {"n": 10, "d": 2048, "k": 2, "skipped": 0, "out": str(out)}
    feats, labels, names, meta = read_fvf(out)
    assert feats.shape == (10, 2048)
    assert labels.tolist() == [0] * 5 + [1] * 5
    assert names == ["lesion", "normal"]
    assert meta["backbone"] == "resnet50"
    assert meta["preprocessing"]["center_crop"] == 224
    assert len(meta["weights_sha256"]) == 64


def test_repeated_extraction_is_byte_identical(image_folder, tmp_path):
    a, b = tmp_path / "a.fvf", tmp_path / "b.fvf"
    extract_folder(image_folder, "resnet50", a, weights="random:0")
    extract_folder(image_folder, "resnet50", b, weights="random:0")
    assert a.read_bytes() == b.read_bytes()


def test_unreadable_image_skipped_with_warning(image_folder, tmp_path, capsys):
    broken_root = tmp_path / "imgs"
    for cls in ("lesion", "normal"):
        (broken_root / cls).mkdir(parents=True)
    for src in image_folder.rglob("*.png"):
        (broken_root / src.parent.name / src.name).write_bytes(src.read_bytes())
    (broken_root / "lesion" / "corrupt.png").write_bytes(b"not an image")
    out = tmp_path / "feats.fvf"
    summary = extract_folder(broken_root, "resnet50", out, weights="random:0")
    assert summary["n"] == 10 and summary["skipped"] == 1
    _, _, _, meta = read_fvf(out)
    assert len(meta["skipped"]) == 1 and "corrupt.png" in meta["skipped"][0]
    assert "skipping unreadable image" in capsys.readouterr().err


def test_hub_backbones_fail_cleanly_offline():
    with pytest.raises(WeightsUnavailableError):
        from fvf_extractor.backbones import build_backbone
        build_backbone("dinov2-base", "random:0")


def test_cli_extract(image_folder, tmp_path, capsys):
    out = tmp_path / "cli.fvf"
    rc = main(["--backbone", "resnet50", "--input", str(image_folder),
               "--out", str(out), "--weights", "random:0"])
    assert rc == 0
    assert "N=10 d=2048 K=2" in capsys.readouterr().out


def test_primary_component_loads_and_trains_on_extracted_features(
        image_folder, tmp_path):
    """The FVF1 file is the interface: the downstream package must load it
    and run a full training sweep on it without error."""
    out = tmp_path / "feats.fvf"
    extract_folder(image_folder, "resnet50", out, weights="random:0")

    import noisecascade

    ds = noisecascade.load(out)
    assert ds.n == 10 and ds.dim == 2048 and ds.num_classes == 2

    cfg = {
        "dataset": {"path": str(out)},
        "split": {"train_frac": 0.5, "val_frac": 0.2, "test_frac": 0.3,
                  "stratified": True, "seed": 0},
        "methods": [{"name": "ce"}],
        "noise": [{"kind": "none"}],
        "seeds": [0],
        "train": {"max_epochs": 2, "batch_size": 4},
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    proc = subprocess.run(
        [sys.executable, "-m", "noisecascade.cli", "run", "--config",
         str(cfg_path), "--out-dir", str(tmp_path / "out")],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    results = list((tmp_path / "out").glob("*/results.csv"))
    assert len(results) == 1
    assert len(results[0].read_text().strip().splitlines()) == 2
