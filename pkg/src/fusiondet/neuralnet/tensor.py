"""N-dimensional value + gradient buffer pairs used for network parameters."""

import numpy as np

from ..errors import InternalError


class Tensor:
    """A numpy array with an optional same-shape gradient buffer.

    Parameters carry requires_grad=True and accumulate into .grad during
    backward passes; plain activations move through the layers as raw
    ndarrays and only get wrapped where a module boundary asks for it.
    """

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad=False, name=""):
        self.data = np.asarray(data)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if self.requires_grad else None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self):
        if self.grad is not None:
            self.grad[...] = 0

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def copy(self):
        t = Tensor(self.data.copy(), requires_grad=self.requires_grad, name=self.name)
        if self.grad is not None and t.grad is not None:
            t.grad[...] = self.grad
        return t

    def __repr__(self):
        return f"Tensor(name={self.name!r}, shape={tuple(self.shape)}, dtype={self.dtype})"


def check_finite(arr, context=""):
    """Raise InternalError if arr holds NaN or Inf; returns arr untouched."""
    a = arr.data if isinstance(arr, Tensor) else arr
    if not np.all(np.isfinite(a)):
        raise InternalError(f"non-finite values in {context or 'array'}")
    return arr
