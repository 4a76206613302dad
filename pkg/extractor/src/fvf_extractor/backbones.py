"""Frozen backbone registry: architectures, preprocessing recipes, weights.

Weights sources:

* ``pretrained`` -- the published weights (torchvision / torch.hub /
  open_clip); needs network or a local cache;
* ``random:<seed>`` -- deterministic random initialization, for pipeline
  and format testing where feature semantics do not matter;
* a filesystem path to a ``state_dict`` checkpoint.

The backbone is always frozen and run in eval mode.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import torch

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
CLIP_MEAN = (0.48145466, 0.4578275, 0.40821073)
CLIP_STD = (0.26862954, 0.26130258, 0.27577711)


class WeightsUnavailableError(RuntimeError):
    pass


@dataclass(frozen=True)
class BackboneSpec:
    name: str
    expected_dim: int
    resize: int
    crop: int
    mean: tuple[float, float, float]
    std: tuple[float, float, float]

    def recipe(self) -> dict:
        return {"resize_shorter_side": self.resize, "center_crop": self.crop,
                "normalize_mean": list(self.mean), "normalize_std": list(self.std)}


SPECS = {
    "resnet50": BackboneSpec("resnet50", 2048, 256, 224, IMAGENET_MEAN, IMAGENET_STD),
    "dinov2-base": BackboneSpec("dinov2-base", 768, 256, 224, IMAGENET_MEAN, IMAGENET_STD),
    "biomedclip": BackboneSpec("biomedclip", 512, 224, 224, CLIP_MEAN, CLIP_STD),
}


def get_spec(name: str) -> BackboneSpec:
    if name not in SPECS:
        raise ValueError(f"unknown backbone {name!r}; have {sorted(SPECS)}")
    return SPECS[name]


def _build_resnet50(weights: str) -> torch.nn.Module:
    from torchvision import models

    if weights == "pretrained":
        try:
            model = models.resnet50(weights=models.ResNet50_Weights.IMAGENET1K_V2)
        except Exception as exc:  # download failure, offline environment
            raise WeightsUnavailableError(
                "pretrained resnet50 weights are not obtainable here; pass "
                "--weights random:<seed> or a local checkpoint path") from exc
    elif weights.startswith("random:"):
        torch.manual_seed(int(weights.split(":", 1)[1]))
        model = models.resnet50(weights=None)
    else:
        model = models.resnet50(weights=None)
        state = torch.load(weights, map_location="cpu", weights_only=True)
        model.load_state_dict(state)
    model.fc = torch.nn.Identity()
    return model


def _build_dinov2(weights: str) -> torch.nn.Module:
    if weights.startswith("random:"):
        raise WeightsUnavailableError(
            "dinov2-base has no local architecture definition; the hub "
            "download is required even for random weights")
    try:
        return torch.hub.load("facebookresearch/dinov2", "dinov2_vitb14")
    except Exception as exc:
        raise WeightsUnavailableError(
            "dinov2-base requires torch.hub access to facebookresearch/dinov2"
        ) from exc


def _build_biomedclip(weights: str) -> torch.nn.Module:
    try:
        import open_clip  # noqa: F401
    except ImportError as exc:
        raise WeightsUnavailableError(
            "biomedclip requires the open_clip_torch package") from exc
    raise WeightsUnavailableError(
        "biomedclip loading is not wired for this environment; extract with "
        "resnet50 or dinov2-base")


_BUILDERS = {
    "resnet50": _build_resnet50,
    "dinov2-base": _build_dinov2,
    "biomedclip": _build_biomedclip,
}


def build_backbone(name: str, weights: str = "pretrained") -> torch.nn.Module:
    model = _BUILDERS[get_spec(name).name](weights)
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model


def weights_checksum(model: torch.nn.Module) -> str:
    """sha256 over all parameters/buffers in sorted name order; identifies
    the exact weights independent of their source."""
    h = hashlib.sha256()
    state = model.state_dict()
    for key in sorted(state):
        h.update(key.encode())
        h.update(state[key].detach().cpu().numpy().tobytes())
    return h.hexdigest()
