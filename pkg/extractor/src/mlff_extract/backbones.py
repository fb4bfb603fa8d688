"""Backbone registry: canonical stage taps, pooling rule, preprocessing.

Defaults tap four block boundaries per family, from the end of the first
block to the end of the last one before the classifier; override the stage
list in the spec for other choices.  MobileNetV3-S has no unique interior
picks, so its defaults are documented here rather than claimed canonical.
"""

from __future__ import annotations

import torch
import torchvision.models as tvm

from .errors import ConfigurationError

BACKBONES = {
    "resnet18": {
        "builder": tvm.resnet18,
        "weights": tvm.ResNet18_Weights.IMAGENET1K_V1,
        "stages": ["layer1", "layer2", "layer3", "layer4"],
        "pooling": "spatial-average",
    },
    "resnet50": {
        "builder": tvm.resnet50,
        "weights": tvm.ResNet50_Weights.IMAGENET1K_V2,
        "stages": ["layer1", "layer2", "layer3", "layer4"],
        "pooling": "spatial-average",
    },
    "mobilenet_v3_small": {
        "builder": tvm.mobilenet_v3_small,
        "weights": tvm.MobileNet_V3_Small_Weights.IMAGENET1K_V1,
        "stages": ["features.1", "features.3", "features.8", "features.12"],
        "pooling": "spatial-average",
    },
    "vit_b_16": {
        "builder": tvm.vit_b_16,
        "weights": tvm.ViT_B_16_Weights.IMAGENET1K_V1,
        "stages": [
            "encoder.layers.encoder_layer_0",
            "encoder.layers.encoder_layer_4",
            "encoder.layers.encoder_layer_8",
            "encoder.layers.encoder_layer_11",
        ],
        "pooling": "cls-plus-mean-token",
    },
}

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


def backbone_info(name: str) -> dict:
    if name not in BACKBONES:
        raise ConfigurationError(
            f"unknown backbone {name!r}; available: {sorted(BACKBONES)}"
        )
    return BACKBONES[name]


def build_backbone(name: str, pretrained: bool, seed: int) -> torch.nn.Module:
    info = backbone_info(name)
    if pretrained:
        model = info["builder"](weights=info["weights"])
    else:
        # frozen random weights: deterministic stand-in when no weight cache
        # or network is available
        torch.manual_seed(seed)
        model = info["builder"](weights=None)
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model


def resolve_module(model: torch.nn.Module, path: str) -> torch.nn.Module:
    node = model
    for part in path.split("."):
        if not hasattr(node, part):
            named = dict(node.named_children())
            if part in named:
                node = named[part]
                continue
            raise ConfigurationError(f"stage {path!r} not found in backbone")
        node = getattr(node, part)
    return node
