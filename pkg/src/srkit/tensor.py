"""Dense tensors with an explicit storage precision, plus precision policies.

BF16 storage is emulated value-faithfully inside binary32 carriers: a
bf16-backed tensor is a float32 array whose every element is exactly
bf16-representable. Arithmetic happens in binary32 and results are
narrowed with nearest rounding when the destination is bf16-backed, which
is the default rounding mode of hardware FP pipelines. Reductions always
accumulate in binary32 regardless of storage precision.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .rng import RoundRng
from .rounding import round_nearest_f32, round_stochastic_f32

BF16 = "bf16"
FP32 = "fp32"

NEAREST = "nearest"
STOCHASTIC = "stochastic"
NONE = "none"

_PRECISIONS = (BF16, FP32)
_ROUNDINGS = (NEAREST, STOCHASTIC, NONE)


@dataclass(frozen=True)
class PrecisionPolicy:
    """Which training roles live in bf16 vs binary32, and how updates round.

    ``update_rounding == "none"`` is the mixed-precision master-weight
    configuration and therefore requires fp32 weights.
    """

    weights: str = BF16
    gradients: str = BF16
    moment1: str = BF16
    moment2: str = BF16
    update_arithmetic: str = BF16
    update_rounding: str = STOCHASTIC

    def __post_init__(self):
        for name in ("weights", "gradients", "moment1", "moment2", "update_arithmetic"):
            if getattr(self, name) not in _PRECISIONS:
                raise ValueError(f"{name} must be one of {_PRECISIONS}")
        if self.update_rounding not in _ROUNDINGS:
            raise ValueError(f"update_rounding must be one of {_ROUNDINGS}")
        if self.update_rounding == NONE and self.weights != FP32:
            raise ValueError("update_rounding='none' requires fp32 master weights")

    @classmethod
    def bf16_sr(cls) -> "PrecisionPolicy":
        """Everything in bf16; updates stochastically rounded."""
        return cls()

    @classmethod
    def bf16_nr(cls) -> "PrecisionPolicy":
        """Everything in bf16; updates nearest-rounded (plain low precision)."""
        return cls(update_rounding=NEAREST)

    @classmethod
    def fp32_master(cls) -> "PrecisionPolicy":
        """Mixed-precision reference: fp32 master weights and states."""
        return cls(weights=FP32, gradients=FP32, moment1=FP32, moment2=FP32,
                   update_arithmetic=FP32, update_rounding=NONE)

    def with_states(self, gradients: str | None = None, moment1: str | None = None,
                    moment2: str | None = None) -> "PrecisionPolicy":
        """Ablation helper: swap state precisions, keep the update rule."""
        kw = {}
        if gradients is not None:
            kw["gradients"] = gradients
        if moment1 is not None:
            kw["moment1"] = moment1
        if moment2 is not None:
            kw["moment2"] = moment2
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {
            "weights": self.weights, "gradients": self.gradients,
            "moment1": self.moment1, "moment2": self.moment2,
            "update_arithmetic": self.update_arithmetic,
            "update_rounding": self.update_rounding,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PrecisionPolicy":
        return cls(**d)


def _narrow_for(storage: str, data: np.ndarray) -> np.ndarray:
    if storage == BF16:
        return round_nearest_f32(data)
    return data


class Tensor:
    """Immutable flat float32 array with a logical shape and storage tag."""

    __slots__ = ("shape", "data", "storage")

    def __init__(self, data: np.ndarray, shape: tuple[int, ...], storage: str = FP32,
                 _trusted: bool = False):
        if storage not in _PRECISIONS:
            raise ValueError(f"storage must be one of {_PRECISIONS}")
        flat = np.ascontiguousarray(data, dtype=np.float32).ravel()
        if flat.size != int(np.prod(shape, dtype=np.int64)):
            raise ValueError(f"shape {shape} does not match {flat.size} elements")
        if storage == BF16 and not _trusted:
            flat = round_nearest_f32(flat)
        flat.flags.writeable = False
        object.__setattr__(self, "data", flat)
        object.__setattr__(self, "shape", tuple(shape))
        object.__setattr__(self, "storage", storage)

    def __setattr__(self, *a):
        raise AttributeError("Tensor is immutable")

    @classmethod
    def from_array(cls, arr, storage: str = FP32) -> "Tensor":
        arr = np.asarray(arr, dtype=np.float32)
        return cls(arr, arr.shape, storage)

    @classmethod
    def zeros(cls, shape, storage: str = FP32) -> "Tensor":
        shape = tuple(shape)
        return cls(np.zeros(shape, dtype=np.float32), shape, storage, _trusted=True)

    @property
    def np(self) -> np.ndarray:
        """Read-only view with the logical shape."""
        return self.data.reshape(self.shape)

    @property
    def size(self) -> int:
        return self.data.size

    def astype(self, storage: str) -> "Tensor":
        return Tensor(self.data, self.shape, storage)

    # -- elementwise ------------------------------------------------------
    def _coerce(self, other) -> np.ndarray:
        if isinstance(other, Tensor):
            if other.shape != self.shape and other.size != 1:
                raise ValueError(f"shape mismatch: {self.shape} vs {other.shape}")
            return other.data if other.shape == self.shape else other.data[0]
        return np.float32(other)

    def _wrap(self, data: np.ndarray, storage: str | None) -> "Tensor":
        storage = self.storage if storage is None else storage
        return Tensor(_narrow_for(storage, data), self.shape, storage, _trusted=True)

    def add(self, other, storage: str | None = None) -> "Tensor":
        return self._wrap(self.data + self._coerce(other), storage)

    def sub(self, other, storage: str | None = None) -> "Tensor":
        return self._wrap(self.data - self._coerce(other), storage)

    def mul(self, other, storage: str | None = None) -> "Tensor":
        return self._wrap(self.data * self._coerce(other), storage)

    def div(self, other, storage: str | None = None) -> "Tensor":
        return self._wrap(self.data / self._coerce(other), storage)

    def sqrt(self, storage: str | None = None) -> "Tensor":
        return self._wrap(np.sqrt(self.data), storage)

    def square(self, storage: str | None = None) -> "Tensor":
        return self._wrap(self.data * self.data, storage)

    # -- reductions (binary32 accumulation, documented) --------------------
    def sum(self) -> float:
        return float(np.sum(self.data, dtype=np.float32))

    def mean(self) -> float:
        return float(np.sum(self.data, dtype=np.float32) / np.float32(self.size))

    def l1(self) -> float:
        return float(np.sum(np.abs(self.data), dtype=np.float32))

    def l2(self) -> float:
        return float(np.sqrt(np.sum(self.data * self.data, dtype=np.float32)))

    def linf(self) -> float:
        return float(np.max(np.abs(self.data))) if self.size else 0.0

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, storage={self.storage})"


def narrow_tensor(t: Tensor, mode: str, rng: RoundRng | None = None,
                  stream: int = 0, step: int = 0) -> Tensor:
    """Round every element to bf16; element i uses counter (stream, step, i)."""
    if mode == NEAREST:
        data = round_nearest_f32(t.data)
    elif mode == STOCHASTIC:
        if rng is None:
            raise ValueError("stochastic narrowing needs an rng")
        data = round_stochastic_f32(t.data, rng, stream, step)
    else:
        raise ValueError(f"unknown narrowing mode {mode!r}")
    return Tensor(data, t.shape, BF16, _trusted=True)


# -- serialization ---------------------------------------------------------

def save_tensor(t: Tensor, path: str | Path) -> None:
    """Write `<path>` as little-endian float32 plus a `<path>.json` sidecar."""
    path = Path(path)
    path.write_bytes(t.data.astype("<f4").tobytes())
    sidecar = {"shape": list(t.shape), "storage_precision": t.storage}
    Path(str(path) + ".json").write_text(json.dumps(sidecar))


def load_tensor(path: str | Path) -> Tensor:
    path = Path(path)
    sidecar = json.loads(Path(str(path) + ".json").read_text())
    data = np.frombuffer(path.read_bytes(), dtype="<f4").astype(np.float32)
    return Tensor(data, tuple(sidecar["shape"]), sidecar["storage_precision"],
                  _trusted=True)
