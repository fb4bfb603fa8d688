"""Head checkpoints: the dataset container framing with a head-params record kind.

The manifest carries the architecture, seed, optimizer scalars and a tensor
directory (name + shape); the payload is the named tensors concatenated as
little-endian float32 arrays.  Round trips are bit-exact.
"""

from __future__ import annotations

import numpy as np

from .errors import CorruptionError, FormatError
from .model import FusionConfig, LinearProbeHead, MLFFHead, MLPProbeHead
from .store import read_container, write_container

RECORD_KIND = "head-params"


def _named_tensors(head) -> list[tuple[str, np.ndarray]]:
    out = []
    if head.kind == "mlff":
        for i, (dense, bn, _) in enumerate(head.branches):
            out.append((f"level{i}.dense.weight", dense.weight))
            out.append((f"level{i}.dense.bias", dense.bias))
            out.append((f"level{i}.bn.gamma", bn.gamma))
            out.append((f"level{i}.bn.beta", bn.beta))
            out.append((f"level{i}.bn.running_mean", bn.running_mean))
            out.append((f"level{i}.bn.running_var", bn.running_var))
        out.append(("hidden.weight", head.hidden.weight))
        out.append(("hidden.bias", head.hidden.bias))
        out.append(("classifier.weight", head.classifier.weight))
        out.append(("classifier.bias", head.classifier.bias))
    elif head.kind == "linear":
        out.append(("classifier.weight", head.classifier.weight))
        out.append(("classifier.bias", head.classifier.bias))
    elif head.kind == "mlp":
        out.append(("hidden.weight", head.hidden.weight))
        out.append(("hidden.bias", head.hidden.bias))
        out.append(("classifier.weight", head.classifier.weight))
        out.append(("classifier.bias", head.classifier.bias))
    else:
        raise FormatError(f"unknown head kind {head.kind!r}")
    for j, m in enumerate(head.adam.m):
        out.append((f"adam.m.{j}", m))
    for j, v in enumerate(head.adam.v):
        out.append((f"adam.v.{j}", v))
    return out


def save_head(head, path, metadata: dict | None = None) -> None:
    tensors = _named_tensors(head)
    manifest = {
        "format_version": 1,
        "record_kind": RECORD_KIND,
        "head_kind": head.kind,
        "seed": head.seed,
        "adam": {
            "t": head.adam.t,
            "beta1": head.adam.beta1,
            "beta2": head.adam.beta2,
            "epsilon": head.adam.epsilon,
        },
        "tensors": [{"name": n, "shape": list(t.shape)} for n, t in tensors],
        "metadata": metadata or {},
    }
    if head.kind == "mlff":
        manifest["fusion"] = head.config.to_dict()
        bn = head.branches[0][1]
        manifest["batchnorm"] = {"momentum": bn.momentum, "epsilon": bn.epsilon}
    elif head.kind == "linear":
        manifest["probe"] = {"in_dim": head.in_dim, "num_classes": head.num_classes}
    elif head.kind == "mlp":
        manifest["probe"] = {
            "in_dim": head.in_dim,
            "hidden_dim": head.hidden_dim,
            "num_classes": head.num_classes,
        }
    payload = b"".join(np.ascontiguousarray(t, dtype="<f4").tobytes() for _, t in tensors)
    write_container(path, manifest, payload)


def load_head(path):
    manifest, payload = read_container(path)
    if manifest.get("record_kind") != RECORD_KIND:
        raise FormatError(
            f"expected a {RECORD_KIND} container, found {manifest.get('record_kind')!r}"
        )
    kind = manifest["head_kind"]
    seed = int(manifest["seed"])
    if kind == "mlff":
        bn = manifest.get("batchnorm", {})
        head = MLFFHead(
            FusionConfig.from_dict(manifest["fusion"]),
            seed=seed,
            bn_momentum=float(bn.get("momentum", 0.1)),
            bn_epsilon=float(bn.get("epsilon", 1e-5)),
        )
    elif kind == "linear":
        p = manifest["probe"]
        head = LinearProbeHead(int(p["in_dim"]), int(p["num_classes"]), seed=seed)
    elif kind == "mlp":
        p = manifest["probe"]
        head = MLPProbeHead(
            int(p["in_dim"]), int(p["hidden_dim"]), int(p["num_classes"]), seed=seed
        )
    else:
        raise FormatError(f"unknown head kind {kind!r}")
    tensors = _named_tensors(head)
    directory = manifest["tensors"]
    if len(directory) != len(tensors):
        raise CorruptionError(
            f"tensor directory has {len(directory)} entries, expected {len(tensors)}"
        )
    offset = 0
    for (name, target), entry in zip(tensors, directory):
        if entry["name"] != name or tuple(entry["shape"]) != target.shape:
            raise CorruptionError(
                f"tensor mismatch: file has {entry['name']}{entry['shape']}, "
                f"expected {name}{list(target.shape)}"
            )
        nbytes = target.size * 4
        if offset + nbytes > len(payload):
            raise CorruptionError("tensor payload truncated")
        target[...] = np.frombuffer(payload, dtype="<f4", count=target.size,
                                    offset=offset).reshape(target.shape)
        offset += nbytes
    if offset != len(payload):
        raise CorruptionError("trailing bytes after tensor payload")
    adam = manifest.get("adam", {})
    head.adam.t = int(adam.get("t", 0))
    head.adam.beta1 = float(adam.get("beta1", 0.9))
    head.adam.beta2 = float(adam.get("beta2", 0.999))
    head.adam.epsilon = float(adam.get("epsilon", 1e-8))
    return head, manifest.get("metadata", {})
