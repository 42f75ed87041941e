"""Architecture-as-data: layer descriptions, validation and the reference nets."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..vqc import VqcConfig

ActivationKind = Literal["relu", "sigmoid"]


class _Layer(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class Conv2D(_Layer):
    kind: Literal["conv2d"] = "conv2d"
    in_ch: int = Field(gt=0)
    out_ch: int = Field(gt=0)
    kernel_h: int = Field(gt=0)
    kernel_w: int = Field(gt=0)
    stride: int = Field(default=1, gt=0)
    padding: int = Field(default=0, ge=0)
    activation: Optional[ActivationKind] = None


class MaxPool2D(_Layer):
    kind: Literal["maxpool2d"] = "maxpool2d"
    pool_h: int = Field(default=2, gt=0)
    pool_w: int = Field(default=2, gt=0)


class Flatten(_Layer):
    kind: Literal["flatten"] = "flatten"


class Dense(_Layer):
    kind: Literal["dense"] = "dense"
    in_dim: int = Field(gt=0)
    out_dim: int = Field(gt=0)
    activation: Optional[ActivationKind] = None


class Activation(_Layer):
    kind: Literal["activation"] = "activation"
    fn: ActivationKind


class QuantumLayer(_Layer):
    kind: Literal["quantum"] = "quantum"
    n_qubits: int = 2
    n_layers: int = 3
    cnot_control: int = 0
    cnot_target: int = 1

    @property
    def vqc_config(self) -> VqcConfig:
        return VqcConfig(self.n_qubits, self.n_layers, self.cnot_control, self.cnot_target)


LayerSpec = Annotated[
    Union[Conv2D, MaxPool2D, Flatten, Dense, Activation, QuantumLayer],
    Field(discriminator="kind"),
]


def layer_param_count(layer) -> int:
    if isinstance(layer, Conv2D):
        return layer.kernel_h * layer.kernel_w * layer.in_ch * layer.out_ch + layer.out_ch
    if isinstance(layer, Dense):
        return layer.in_dim * layer.out_dim + layer.out_dim
    if isinstance(layer, QuantumLayer):
        return layer.n_layers * layer.n_qubits
    return 0


def layer_output_shape(layer, shape: tuple[int, ...]) -> tuple[int, ...]:
    """Per-sample output shape, raising ``ValueError`` if ``shape`` does not fit."""
    if isinstance(layer, Conv2D):
        if len(shape) != 3 or shape[2] != layer.in_ch:
            raise ValueError(f"conv2d expects (h, w, {layer.in_ch}) input, got {shape}")
        h = (shape[0] + 2 * layer.padding - layer.kernel_h) // layer.stride + 1
        w = (shape[1] + 2 * layer.padding - layer.kernel_w) // layer.stride + 1
        if h <= 0 or w <= 0:
            raise ValueError(f"conv2d output would be empty for input {shape}")
        return (h, w, layer.out_ch)
    if isinstance(layer, MaxPool2D):
        if len(shape) != 3:
            raise ValueError(f"maxpool2d expects (h, w, c) input, got {shape}")
        if shape[0] % layer.pool_h or shape[1] % layer.pool_w:
            raise ValueError(
                f"maxpool2d {layer.pool_h}x{layer.pool_w} does not divide input {shape[:2]}"
            )
        return (shape[0] // layer.pool_h, shape[1] // layer.pool_w, shape[2])
    if isinstance(layer, Flatten):
        n = 1
        for d in shape:
            n *= d
        return (n,)
    if isinstance(layer, Dense):
        if shape != (layer.in_dim,):
            raise ValueError(f"dense expects ({layer.in_dim},) input, got {shape}")
        return (layer.out_dim,)
    if isinstance(layer, QuantumLayer):
        if shape != (layer.n_qubits,):
            raise ValueError(f"quantum layer expects ({layer.n_qubits},) input, got {shape}")
        return shape
    return shape


class NetworkSpec(BaseModel):
    """Ordered layers plus the per-sample input shape ``(h, w, channels)``."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    input_shape: tuple[int, int, int]
    layers: tuple[LayerSpec, ...]

    @model_validator(mode="after")
    def _validate(self):
        shape = tuple(self.input_shape)
        for i, layer in enumerate(self.layers):
            try:
                shape = layer_output_shape(layer, shape)
            except ValueError as exc:
                raise ValueError(f"layer {i} ({layer.kind}): {exc}") from None
            if isinstance(layer, QuantumLayer):
                layer.vqc_config  # raises on an inconsistent circuit config
        n_quantum = sum(isinstance(l, QuantumLayer) for l in self.layers)
        if n_quantum > 1:
            raise ValueError("at most one quantum layer is allowed")
        if shape != (1,) or not self._ends_in_sigmoid():
            raise ValueError("network must end in a Dense(., 1) unit with sigmoid activation")
        return self

    def _ends_in_sigmoid(self) -> bool:
        last = self.layers[-1] if self.layers else None
        if isinstance(last, Dense):
            return last.out_dim == 1 and last.activation == "sigmoid"
        if isinstance(last, Activation) and len(self.layers) >= 2:
            prev = self.layers[-2]
            return last.fn == "sigmoid" and isinstance(prev, Dense) and prev.activation is None
        return False

    @property
    def n_layers(self) -> int:
        """Layer count with standalone activations folded into their producers."""
        return sum(not isinstance(l, Activation) for l in self.layers)

    @property
    def n_params(self) -> int:
        return sum(layer_param_count(l) for l in self.layers)

    @property
    def is_hybrid(self) -> bool:
        return any(isinstance(l, QuantumLayer) for l in self.layers)

    def to_json(self, **kwargs) -> str:
        return self.model_dump_json(**kwargs)

    @classmethod
    def from_json(cls, text: str) -> "NetworkSpec":
        return cls.model_validate_json(text)

    @classmethod
    def load(cls, path: str | Path) -> "NetworkSpec":
        return cls.model_validate(json.loads(Path(path).read_text()))


def to_hybrid(spec: NetworkSpec, quantum: QuantumLayer | None = None) -> NetworkSpec:
    """Swap the last ``Dense(n -> n)`` before the output unit for a quantum layer."""
    quantum = quantum or QuantumLayer()
    n = quantum.n_qubits
    for i in range(len(spec.layers) - 2, -1, -1):
        layer = spec.layers[i]
        if isinstance(layer, Dense) and layer.in_dim == n and layer.out_dim == n:
            layers = spec.layers[:i] + (quantum,) + spec.layers[i + 1 :]
            return NetworkSpec(input_shape=spec.input_shape, layers=layers)
    raise ValueError(f"no Dense({n} -> {n}) layer to replace")


def _cnn(
    image_size: int, channels: tuple[int, ...], hidden: int, tail_activation: Optional[ActivationKind]
) -> NetworkSpec:
    layers: list = []
    in_ch = 3
    for out_ch in channels:
        layers.append(Conv2D(in_ch=in_ch, out_ch=out_ch, kernel_h=3, kernel_w=3, padding=1, activation="relu"))
        layers.append(MaxPool2D(pool_h=2, pool_w=2))
        in_ch = out_ch
    side = image_size // 2 ** len(channels)
    layers += [
        Flatten(),
        Dense(in_dim=side * side * in_ch, out_dim=hidden, activation="relu"),
        Dense(in_dim=hidden, out_dim=2, activation=tail_activation),
        Dense(in_dim=2, out_dim=2, activation=tail_activation),
        Dense(in_dim=2, out_dim=1, activation="sigmoid"),
    ]
    return NetworkSpec(input_shape=(image_size, image_size, 3), layers=tuple(layers))


def build_reference_architectures(image_size: int = 128) -> tuple[NetworkSpec, NetworkSpec]:
    """Full-size classical net (11 layers) and its hybrid twin."""
    classical = _cnn(image_size, (16, 32, 64), 24, "relu")
    return classical, to_hybrid(classical)


def build_desk_architectures(image_size: int = 32) -> tuple[NetworkSpec, NetworkSpec]:
    """Scaled-down pair with the same dense tail, for CPU-minute experiments.

    The two 2-wide tail layers are linear here: with ReLU, a 2-unit layer is
    dead at initialisation often enough to sink whole rounds at this scale.
    """
    classical = _cnn(image_size, (4, 8), 8, None)
    return classical, to_hybrid(classical)


PRESETS = {
    "reference": build_reference_architectures,
    "desk": build_desk_architectures,
}
