"""Parameter containers and initialisers shared by both models."""
from __future__ import annotations

import dataclasses

import numpy as np

from .autodiff import Tensor


def fan_in_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, dtype=np.float32,
                   name: str | None = None) -> Tensor:
    """(fan_in, fan_out) matrix from U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    bound = 1.0 / np.sqrt(fan_in)
    w = rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)
    return Tensor(w, requires_grad=True, name=name, dtype=dtype)


def zeros(shape, dtype=np.float32, name: str | None = None) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True, name=name, dtype=dtype)


class ParamSet:
    """Mixin for dataclasses whose fields are all parameter tensors."""

    def named(self) -> dict[str, Tensor]:
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, Tensor):
                out[f.name] = value
            elif isinstance(value, ParamSet):
                out.update({f"{f.name}.{k}": v for k, v in value.named().items()})
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    out.update({f"{f.name}.{i}.{k}": v for k, v in item.named().items()})
        return out

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.values.copy() for k, v in self.named().items()}

    def restore(self, values: dict[str, np.ndarray]) -> None:
        for k, t in self.named().items():
            t.values[...] = values[k]
