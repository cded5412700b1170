"""Named parameter/buffer registry shared by the network modules.

Parameters are trainable Tensors; buffers are plain arrays that belong to
the model state but receive no gradient (batch-norm running statistics).
Registration order is preserved so optimizer walks and checkpoint layouts
are deterministic.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class ParameterStore:
    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self._params: dict[str, Tensor] = {}
        self._buffers: dict[str, np.ndarray] = {}

    def parameter(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params or name in self._buffers:
            raise ValueError(f"duplicate state name: {name!r}")
        t = Tensor(np.asarray(data, dtype=self.dtype), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def buffer(self, name: str, data: np.ndarray) -> np.ndarray:
        if name in self._params or name in self._buffers:
            raise ValueError(f"duplicate state name: {name!r}")
        arr = np.asarray(data, dtype=self.dtype).copy()
        self._buffers[name] = arr
        return arr

    def parameters(self) -> list[Tensor]:
        return list(self._params.values())

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return list(self._params.items())

    def named_buffers(self) -> list[tuple[str, np.ndarray]]:
        return list(self._buffers.items())

    def zero_grad(self):
        for t in self._params.values():
            t.zero_grad()

    def num_values(self) -> int:
        return sum(t.size for t in self._params.values())

    def state_arrays(self) -> dict[str, np.ndarray]:
        """All state (parameters then buffers) as plain arrays, by name."""
        out = {k: v.data for k, v in self._params.items()}
        out.update(self._buffers)
        return out

    def load_state(self, arrays: dict[str, np.ndarray], strict: bool = True):
        """Copy values in place so existing Tensor/buffer references stay live."""
        own = self.state_arrays()
        missing = sorted(set(own) - set(arrays))
        if strict and missing:
            raise KeyError(f"state missing entries: {missing}")
        unknown = sorted(set(arrays) - set(own))
        if strict and unknown:
            raise KeyError(f"state has unknown entries: {unknown}")
        for k, dst in own.items():
            if k not in arrays:
                continue
            src = np.asarray(arrays[k])
            if src.shape != dst.shape:
                raise ValueError(f"shape mismatch for {k!r}: {src.shape} vs {dst.shape}")
            dst[...] = src.astype(dst.dtype)
