"""Batched frozen-backbone feature extraction into FVF1 files.

Images come from a folder with one subdirectory per class, or from a
MedMNIST dataset name. Rows are emitted in lexicographic path order so the
output is reproducible; unreadable images are skipped with a warning and
recorded in the metadata. Inference runs single-threaded in eval mode, so
repeated extraction of the same folder is byte-identical.
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .backbones import build_backbone, get_spec, weights_checksum
from .fvf import write_fvf

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tif", ".tiff", ".webp"}


def list_labeled_images(root: Path) -> tuple[list[Path], list[int], list[str]]:
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"{root} is not a directory")
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not class_dirs:
        raise ValueError(f"no class subdirectories under {root}")
    paths, labels = [], []
    for idx, cdir in enumerate(class_dirs):
        files = sorted(p for p in cdir.rglob("*")
                       if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
        paths.extend(files)
        labels.extend([idx] * len(files))
    if not paths:
        raise ValueError(f"no images found under {root}")
    return paths, labels, [d.name for d in class_dirs]


def preprocess(img: Image.Image, spec) -> torch.Tensor:
    img = img.convert("RGB")
    w, h = img.size
    scale = spec.resize / min(w, h)
    img = img.resize((max(1, round(w * scale)), max(1, round(h * scale))),
                     Image.BILINEAR)
    w, h = img.size
    left = (w - spec.crop) // 2
    top = (h - spec.crop) // 2
    img = img.crop((left, top, left + spec.crop, top + spec.crop))
    x = torch.from_numpy(np.asarray(img, dtype=np.float32) / 255.0)
    x = x.permute(2, 0, 1)
    mean = torch.tensor(spec.mean).view(3, 1, 1)
    std = torch.tensor(spec.std).view(3, 1, 1)
    return (x - mean) / std


def extract_folder(input_dir, backbone: str, out_path, weights: str = "pretrained",
                   batch_size: int = 32) -> dict:
    """Extract one feature row per readable image; returns a summary dict."""
    spec = get_spec(backbone)
    paths, labels, class_names = list_labeled_images(Path(input_dir))
    model = build_backbone(backbone, weights)
    torch.set_num_threads(1)  # run-to-run byte stability

    tensors, kept_labels, skipped = [], [], []
    for path, label in zip(paths, labels):
        try:
            with Image.open(path) as img:
                tensors.append(preprocess(img, spec))
            kept_labels.append(label)
        except Exception as exc:
            print(f"warning: skipping unreadable image {path}: {exc}",
                  file=sys.stderr)
            skipped.append(str(path))
    if not tensors:
        raise ValueError("no readable images to extract")

    chunks = []
    with torch.no_grad():
        for i in range(0, len(tensors), batch_size):
            batch = torch.stack(tensors[i:i + batch_size])
            out = model(batch)
            if out.ndim != 2 or out.shape[1] != spec.expected_dim:
                raise ValueError(
                    f"backbone emitted dim {tuple(out.shape)}, expected "
                    f"(B, {spec.expected_dim})")
            chunks.append(out.cpu().numpy().astype(np.float32))
    features = np.concatenate(chunks, axis=0)

    meta = {
        "source": str(input_dir),
        "backbone": spec.name,
        "feature_dim": spec.expected_dim,
        "weights": weights,
        "weights_sha256": weights_checksum(model),
        "preprocessing": spec.recipe(),
        "skipped": skipped,
    }
    write_fvf(out_path, features, np.asarray(kept_labels), class_names, meta)
    return {"n": len(features), "d": spec.expected_dim,
            "k": len(class_names), "skipped": len(skipped), "out": str(out_path)}


def extract_medmnist(name: str, backbone: str, out_path, split: str = "train",
                     weights: str = "pretrained", batch_size: int = 64) -> dict:
    """MedMNIST source; needs the medmnist package and its data download."""
    try:
        import medmnist
        from medmnist import INFO
    except ImportError as exc:
        raise RuntimeError(
            "the medmnist package is required for medmnist sources "
            "(pip install medmnist)") from exc
    info = INFO[name]
    cls = getattr(medmnist, info["python_class"])
    dataset = cls(split=split, download=True)
    spec = get_spec(backbone)
    model = build_backbone(backbone, weights)
    torch.set_num_threads(1)

    chunks, labels = [], []
    with torch.no_grad():
        for i in range(0, len(dataset), batch_size):
            imgs = []
            for j in range(i, min(i + batch_size, len(dataset))):
                img, label = dataset[j]
                imgs.append(preprocess(img, spec))
                labels.append(int(np.asarray(label).reshape(-1)[0]))
            out = model(torch.stack(imgs))
            chunks.append(out.cpu().numpy().astype(np.float32))
    features = np.concatenate(chunks, axis=0)
    class_names = [info["label"][str(i)] for i in range(len(info["label"]))]
    meta = {
        "source": f"medmnist:{name}:{split}",
        "backbone": spec.name,
        "feature_dim": spec.expected_dim,
        "weights": weights,
        "weights_sha256": weights_checksum(model),
        "preprocessing": spec.recipe(),
        "skipped": [],
    }
    write_fvf(out_path, features, np.asarray(labels), class_names, meta)
    return {"n": len(features), "d": spec.expected_dim,
            "k": len(class_names), "skipped": 0, "out": str(out_path)}
