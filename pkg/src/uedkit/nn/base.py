"""Module base: parameter and running-stat discovery by attribute walk."""

from __future__ import annotations

import numpy as np

from .engine import Tensor


class Module:
    def _children(self):
        for value in vars(self).values():
            if isinstance(value, (Module,)):
                yield value
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield item

    def params(self) -> list[Tensor]:
        out = []
        for value in vars(self).values():
            if isinstance(value, Tensor) and value.requires_grad:
                out.append(value)
            elif isinstance(value, Module):
                out.extend(value.params())
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        out.extend(item.params())
                    elif isinstance(item, Tensor) and item.requires_grad:
                        out.append(item)
        return out

    def running_stats(self) -> list[np.ndarray]:
        """Non-trainable state (batch-norm running mean/var), in walk order."""
        out = []
        if hasattr(self, "_running_arrays"):
            out.extend(self._running_arrays())
        for child in self._children():
            out.extend(child.running_stats())
        return out

    def param_vector(self) -> np.ndarray:
        ps = self.params()
        if not ps:
            return np.zeros(0, dtype=np.float32)
        return np.concatenate([p.data.ravel() for p in ps])

    def set_param_vector(self, vec: np.ndarray) -> None:
        offset = 0
        for p in self.params():
            n = p.data.size
            p.data = np.ascontiguousarray(
                vec[offset : offset + n].reshape(p.data.shape), dtype=p.data.dtype
            )
            offset += n
        if offset != vec.size:
            raise ValueError(f"parameter vector length {vec.size} != model size {offset}")

    def stats_vector(self) -> np.ndarray:
        stats = self.running_stats()
        if not stats:
            return np.zeros(0, dtype=np.float32)
        return np.concatenate([s.ravel() for s in stats])

    def set_stats_vector(self, vec: np.ndarray) -> None:
        offset = 0
        for s in self.running_stats():
            n = s.size
            s[...] = vec[offset : offset + n].reshape(s.shape)
            offset += n
        if offset != vec.size:
            raise ValueError(f"stats vector length {vec.size} != model size {offset}")
