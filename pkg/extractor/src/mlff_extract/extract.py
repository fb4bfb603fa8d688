"""Run images through a frozen backbone, pool tapped stages, write the container.

Variant 0 is the untouched image; variants >= 1 apply a seeded horizontal
flip and/or Gaussian pixel noise (on the 0..1 tensor, before normalization)
ahead of extraction, because the frozen backbone makes image-space
augmentation impossible any later.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .backbones import (
    IMAGENET_MEAN,
    IMAGENET_STD,
    backbone_info,
    build_backbone,
    resolve_module,
)
from .container import write_embeddings
from .errors import ConfigurationError, DataError
from .pooling import pool_spatial, pool_vit

log = logging.getLogger("mlff_extract")


@dataclass
class ImageItem:
    path: str
    label: int
    task_id: int


@dataclass
class ExtractionSpec:
    backbone: str
    images: list  # ImageItem
    output: str
    num_classes: int = 0  # 0: max label + 1
    stages: list = field(default_factory=list)  # empty: backbone defaults
    pooling: str = ""  # empty: backbone default
    pretrained: bool = True
    seed: int = 0
    image_size: int = 224
    variants: int = 0
    flip: bool = True
    noise_sigma: float = 0.0

    def __post_init__(self):
        if not self.images:
            raise ConfigurationError("image list is empty")
        if self.variants < 0:
            raise ConfigurationError("variants must be >= 0")
        if self.noise_sigma < 0:
            raise ConfigurationError("noise_sigma must be >= 0")
        if self.image_size < 16:
            raise ConfigurationError("image_size must be >= 16")
        info = backbone_info(self.backbone)
        if not self.stages:
            self.stages = list(info["stages"])
        if not self.pooling:
            self.pooling = info["pooling"]
        if self.pooling not in ("spatial-average", "cls-plus-mean-token"):
            raise ConfigurationError(f"unknown pooling rule {self.pooling!r}")
        if not self.num_classes:
            self.num_classes = max(item.label for item in self.images) + 1

    @classmethod
    def from_dict(cls, d: dict) -> "ExtractionSpec":
        allowed = {
            "backbone", "images", "output", "num_classes", "stages", "pooling",
            "pretrained", "seed", "image_size", "variants", "flip", "noise_sigma",
        }
        unknown = set(d) - allowed
        if unknown:
            raise ConfigurationError(f"unknown spec keys: {sorted(unknown)}")
        for key in ("backbone", "images", "output"):
            if key not in d:
                raise ConfigurationError(f"spec key {key!r} is required")
        images = [
            ImageItem(path=str(i["path"]), label=int(i["label"]),
                      task_id=int(i.get("task_id", 0)))
            for i in d["images"]
        ]
        return cls(
            backbone=str(d["backbone"]),
            images=images,
            output=str(d["output"]),
            num_classes=int(d.get("num_classes", 0)),
            stages=list(d.get("stages", [])),
            pooling=str(d.get("pooling", "")),
            pretrained=bool(d.get("pretrained", True)),
            seed=int(d.get("seed", 0)),
            image_size=int(d.get("image_size", 224)),
            variants=int(d.get("variants", 0)),
            flip=bool(d.get("flip", True)),
            noise_sigma=float(d.get("noise_sigma", 0.0)),
        )


def _load_image(path: str, size: int) -> torch.Tensor:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"image not found: {path}")
    img = Image.open(p).convert("RGB").resize((size, size), Image.BILINEAR)
    arr = np.asarray(img, dtype=np.float32) / 255.0
    return torch.from_numpy(arr).permute(2, 0, 1)  # (3, H, W), 0..1


def _normalize(x: torch.Tensor) -> torch.Tensor:
    mean = torch.tensor(IMAGENET_MEAN).view(3, 1, 1)
    std = torch.tensor(IMAGENET_STD).view(3, 1, 1)
    return (x - mean) / std


def _augment(x: torch.Tensor, flip: bool, sigma: float, rng: np.random.Generator) -> torch.Tensor:
    out = x
    if flip and rng.integers(2):
        out = torch.flip(out, dims=[2])
    if sigma > 0:
        noise = torch.from_numpy(rng.normal(0.0, sigma, size=tuple(out.shape)).astype(np.float32))
        out = (out + noise).clamp(0.0, 1.0)
    return out


def _pool(stage_output: torch.Tensor, pooling: str) -> np.ndarray:
    t = stage_output.detach()
    if pooling == "spatial-average":
        if t.ndim != 4 or t.shape[0] != 1:
            raise DataError(f"expected a (1, C, H, W) stage output, got {tuple(t.shape)}")
        return pool_spatial(t[0].numpy())
    if t.ndim != 3 or t.shape[0] != 1:
        raise DataError(f"expected a (1, 1+R, E) stage output, got {tuple(t.shape)}")
    return pool_vit(t[0].numpy())


def extract(spec: ExtractionSpec) -> dict:
    """Write the dataset file; returns the level dims and record count."""
    model = build_backbone(spec.backbone, spec.pretrained, spec.seed)
    captured: dict[int, torch.Tensor] = {}
    hooks = []
    for idx, stage in enumerate(spec.stages):
        module = resolve_module(model, stage)

        def make_hook(i):
            def hook(_mod, _inp, out):
                captured[i] = out if isinstance(out, torch.Tensor) else out[0]
            return hook

        hooks.append(module.register_forward_hook(make_hook(idx)))

    def forward_levels(x: torch.Tensor) -> list[np.ndarray]:
        captured.clear()
        with torch.no_grad():
            model(_normalize(x).unsqueeze(0))
        missing = [spec.stages[i] for i in range(len(spec.stages)) if i not in captured]
        if missing:
            raise ConfigurationError(f"stages never fired during forward: {missing}")
        return [_pool(captured[i], spec.pooling) for i in range(len(spec.stages))]

    level_dims: list[int] | None = None
    rows = []
    for sample_id, item in enumerate(spec.images):
        base = _load_image(item.path, spec.image_size)
        for variant in range(spec.variants + 1):
            if variant == 0:
                x = base
            else:
                rng = np.random.default_rng(
                    np.random.SeedSequence([spec.seed, sample_id, variant])
                )
                x = _augment(base, spec.flip, spec.noise_sigma, rng)
            levels = forward_levels(x)
            dims = [v.shape[0] for v in levels]
            if level_dims is None:
                level_dims = dims
                log.info("probed level dims: %s", dims)
            elif dims != level_dims:
                raise DataError(
                    f"dimension drift at sample {sample_id}: {dims} != {level_dims}"
                )
            rows.append((sample_id, item.label, item.task_id, variant, levels))
    for h in hooks:
        h.remove()
    write_embeddings(
        spec.output,
        level_dims=level_dims,
        num_classes=spec.num_classes,
        records=rows,
        backbone=spec.backbone,
        pooling=spec.pooling,
        metadata={
            "stages": spec.stages,
            "pretrained": spec.pretrained,
            "seed": spec.seed,
            "image_size": spec.image_size,
            "preprocessing": {
                "resize": spec.image_size,
                "normalize_mean": list(IMAGENET_MEAN),
                "normalize_std": list(IMAGENET_STD),
            },
            "variants": spec.variants,
            "flip": spec.flip,
            "noise_sigma": spec.noise_sigma,
        },
    )
    return {"level_dims": level_dims, "record_count": len(rows)}
