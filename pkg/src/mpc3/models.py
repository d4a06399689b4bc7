"""Model fixtures and the on-disk model-spec / weight formats.

Weight files hold little-endian 64-bit ring words behind a small header:
magic "MPCW", format version, tensor count, then each tensor's shape.
Model specs are JSON documents listing layer kinds and geometry, plus
either a weight-file reference or an initializer seed.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .nn import (
    AVGPOOL,
    CONV2D,
    FLATTEN,
    FULLY_CONNECTED,
    RELU,
    LayerSpec,
    ModelGraph,
    avgpool,
    conv2d,
    flatten,
    fully_connected,
    init_params_float,
    relu,
)
from .ring import DEFAULT_FP, FixedPointConfig, fx_decode, fx_encode

WEIGHT_MAGIC = b"MPCW"
WEIGHT_VERSION = 1


def lenet() -> ModelGraph:
    """LeNet variant for 28x28 grayscale digits: two 5x5 convolutions with
    2x2 average pooling, ReLU activations, and two fully connected layers."""
    return ModelGraph(
        layers=(
            conv2d(6, 5),
            relu(),
            avgpool(2),
            conv2d(16, 5),
            relu(),
            avgpool(2),
            flatten(),
            fully_connected(100),
            relu(),
            fully_connected(10),
        ),
        input_shape=(1, 28, 28),
    )


def alexnet_cifar() -> ModelGraph:
    """AlexNet scaled to 32x32x3 inputs with the 256-256-10 head; pooling is
    average pooling and every activation is ReLU."""
    return ModelGraph(
        layers=(
            conv2d(96, 11, stride=4, padding=9),
            relu(),
            avgpool(3, stride=2),
            conv2d(256, 5, padding=1),
            relu(),
            avgpool(2, stride=1),
            conv2d(384, 3, padding=1),
            relu(),
            conv2d(384, 3, padding=1),
            relu(),
            conv2d(256, 3, padding=1),
            relu(),
            flatten(),
            fully_connected(256),
            relu(),
            fully_connected(256),
            relu(),
            fully_connected(10),
        ),
        input_shape=(3, 32, 32),
    )


FIXTURES = {"lenet": lenet, "alexnet-cifar": alexnet_cifar}


# ---------------------------------------------------------------------------
# weight files


def save_weights(path, tensors: list) -> None:
    tensors = [np.ascontiguousarray(t, dtype=np.uint64) for t in tensors]
    with open(path, "wb") as f:
        f.write(WEIGHT_MAGIC)
        f.write(struct.pack("<II", WEIGHT_VERSION, len(tensors)))
        for t in tensors:
            f.write(struct.pack("<I", t.ndim))
            f.write(struct.pack(f"<{t.ndim}I", *t.shape))
        for t in tensors:
            f.write(t.astype("<u8").tobytes())


def load_weights(path) -> list[np.ndarray]:
    blob = Path(path).read_bytes()
    if blob[:4] != WEIGHT_MAGIC:
        raise FormatError(f"{path}: not a weight file (bad magic)")
    off = 4
    try:
        version, count = struct.unpack_from("<II", blob, off)
        off += 8
        if version != WEIGHT_VERSION:
            raise FormatError(f"{path}: unsupported weight format version {version}")
        shapes = []
        for _ in range(count):
            (ndim,) = struct.unpack_from("<I", blob, off)
            off += 4
            shape = struct.unpack_from(f"<{ndim}I", blob, off)
            off += 4 * ndim
            shapes.append(shape)
    except struct.error as e:
        raise FormatError(f"{path}: truncated weight header") from e
    out = []
    for shape in shapes:
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        end = off + 8 * n
        if end > len(blob):
            raise FormatError(f"{path}: truncated weight data")
        out.append(np.frombuffer(blob[off:end], dtype="<u8").astype(np.uint64).reshape(shape))
        off = end
    if off != len(blob):
        raise FormatError(f"{path}: trailing bytes after weight data")
    return out


# ---------------------------------------------------------------------------
# model spec files


def _layer_to_json(spec: LayerSpec) -> dict:
    if spec.kind == CONV2D:
        return {
            "kind": spec.kind,
            "out_channels": spec.out_channels,
            "kernel": list(spec.kernel),
            "stride": list(spec.stride),
            "padding": list(spec.padding),
        }
    if spec.kind == FULLY_CONNECTED:
        return {"kind": spec.kind, "out_features": spec.out_features}
    if spec.kind == AVGPOOL:
        return {"kind": spec.kind, "window": list(spec.window), "stride": list(spec.stride)}
    return {"kind": spec.kind}


def _layer_from_json(obj: dict) -> LayerSpec:
    kind = obj.get("kind")
    try:
        if kind == CONV2D:
            return conv2d(
                obj["out_channels"],
                obj["kernel"],
                obj.get("stride", 1),
                obj.get("padding", 0),
            )
        if kind == FULLY_CONNECTED:
            return fully_connected(obj["out_features"])
        if kind == AVGPOOL:
            return avgpool(obj["window"], obj.get("stride"))
        if kind == RELU:
            return relu()
        if kind == FLATTEN:
            return flatten()
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"bad layer entry {obj!r}") from e
    raise FormatError(f"unknown layer kind {kind!r}")


def save_model_spec(
    path,
    model: ModelGraph,
    weights: str | None = None,
    weights_t: int | None = None,
    init_seed: int | None = None,
) -> None:
    doc = {
        "input_shape": list(model.input_shape),
        "layers": [_layer_to_json(s) for s in model.layers],
    }
    if weights is not None:
        doc["weights"] = str(weights)
        if weights_t is not None:
            doc["weights_t"] = int(weights_t)
    if init_seed is not None:
        doc["init_seed"] = int(init_seed)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_model_float(path) -> ModelGraph:
    """Load a model spec with float64 parameters.

    Weight files resolve relative to the spec file and decode at the
    recorded scale (weights_t, default 20); without a weight reference the
    parameters come from the fan-in initializer at the recorded seed.
    Ring-encoding the result at the recorded scale reproduces the stored
    words exactly, so this is the one loading path for every engine.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: unreadable model spec: {e}") from e
    if not isinstance(doc, dict) or "layers" not in doc or "input_shape" not in doc:
        raise FormatError(f"{path}: model spec needs input_shape and layers")
    layers = [_layer_from_json(o) for o in doc["layers"]]
    model = ModelGraph(tuple(layers), tuple(doc["input_shape"]))
    if "weights" in doc:
        words = load_weights(path.parent / doc["weights"])
        t_file = FixedPointConfig(int(doc.get("weights_t", 20)))
        params = [fx_decode(w, t_file) for w in words]
    else:
        params = init_params_float(model, int(doc.get("init_seed", 0)))
    model = model.with_params(params)
    model.validate()
    return model


def load_model_spec(path, fp: FixedPointConfig = DEFAULT_FP) -> ModelGraph:
    """Load a model spec with ring parameters encoded at fp."""
    model = load_model_float(path)
    return model.with_params([fx_encode(w, fp) for w in model.params])
