"""Kernels induced by attention activations.

An exponential activation ``exp(u.v / delta)`` induces the kernel
``k(x, y) = exp(x.y / delta)``; a linear activation induces ``k(x, y) = x.y``.
The softmax-normalized family divides each affinity column by its sum over
keys and is kept for exploration only (it is not symmetric and carries no
equivalence guarantee).
"""
from __future__ import annotations

import enum
import math
import sys
from dataclasses import dataclass

import numpy as np

from . import _backend

#: Largest exponent whose ``exp`` is still a finite double.
LOG_MAX_FLOAT = math.log(sys.float_info.max)


class KernelOverflowError(FloatingPointError):
    """Raised when ``x.y / delta`` would overflow ``exp`` in 64-bit floats."""

    def __init__(self, inner_product: float, temperature: float):
        self.inner_product = inner_product
        self.temperature = temperature
        super().__init__(
            f"kernel overflow: inner product x.y = {inner_product!r} with temperature "
            f"{temperature!r} gives exponent {inner_product / temperature!r} > "
            f"{LOG_MAX_FLOAT:.6f}; choose a larger temperature or rescale the states"
        )


class KernelFamily(str, enum.Enum):
    EXPONENTIAL = "exponential"
    LINEAR = "linear"
    SOFTMAX = "softmax"


@dataclass(frozen=True)
class KernelSpec:
    family: KernelFamily = KernelFamily.EXPONENTIAL
    temperature: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", KernelFamily(self.family))
        if self.family is not KernelFamily.LINEAR:
            if not (math.isfinite(self.temperature) and self.temperature > 0):
                raise ValueError(f"temperature must be positive, got {self.temperature!r}")

    @classmethod
    def exponential(cls, temperature: float = 1.0) -> "KernelSpec":
        return cls(KernelFamily.EXPONENTIAL, float(temperature))

    @classmethod
    def linear(cls) -> "KernelSpec":
        return cls(KernelFamily.LINEAR, 1.0)

    @classmethod
    def softmax(cls, temperature: float = 1.0) -> "KernelSpec":
        return cls(KernelFamily.SOFTMAX, float(temperature))

    @property
    def guarantee_bearing(self) -> bool:
        return self.family in (KernelFamily.EXPONENTIAL, KernelFamily.LINEAR)

    def to_dict(self) -> dict:
        return {"family": self.family.value, "temperature": self.temperature}

    @classmethod
    def from_dict(cls, data: dict) -> "KernelSpec":
        return cls(KernelFamily(data.get("family", "exponential")),
                   float(data.get("temperature", 1.0)))


def kernel_eval(spec: KernelSpec, x, y) -> float:
    """Evaluate the kernel on two state vectors.

    The softmax family has no pointwise form; it evaluates like the exponential
    kernel here and is normalized only inside :func:`affinity_matrix`.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape or x.size == 0:
        raise ValueError(f"kernel_eval needs two vectors of equal length >= 1, got {x.shape} and {y.shape}")
    ip = float(x @ y)
    if spec.family is KernelFamily.LINEAR:
        return ip
    if ip / spec.temperature > LOG_MAX_FLOAT:
        raise KernelOverflowError(ip, spec.temperature)
    return math.exp(ip / spec.temperature)


def activate(spec: KernelSpec, inner: np.ndarray) -> np.ndarray:
    """Apply the activation to a matrix of inner products ``[key, query]``."""
    if spec.family is KernelFamily.LINEAR:
        return inner
    if inner.size and np.max(inner) / spec.temperature > LOG_MAX_FLOAT:
        raise KernelOverflowError(float(np.max(inner)), spec.temperature)
    out = np.exp(inner / spec.temperature)
    if spec.family is KernelFamily.SOFTMAX:
        out = out / out.sum(axis=0, keepdims=True)
    return out


def affinity_matrix(spec: KernelSpec, keys, queries) -> np.ndarray:
    """Kernel affinities between key columns and query columns.

    ``keys`` is ``(d, p)``, ``queries`` is ``(d, q)``; entry ``(j, i)`` is
    ``k(keys[:, j], queries[:, i])``.
    """
    keys = np.asarray(keys, dtype=np.float64)
    queries = np.asarray(queries, dtype=np.float64)
    if keys.ndim != 2 or queries.ndim != 2 or keys.shape[0] != queries.shape[0]:
        raise ValueError(f"keys and queries must be (d, p) and (d, q) with equal d, got {keys.shape} and {queries.shape}")
    if keys.shape[1] == 0:
        raise ValueError("affinity_matrix needs at least one key column")
    return activate(spec, _backend.gram(keys, queries))


def state_affinity(spec: KernelSpec, centers, points) -> np.ndarray:
    """Same as :func:`affinity_matrix` but with row-stacked states ``(p, d)`` and ``(q, d)``."""
    return affinity_matrix(spec, np.asarray(centers, dtype=np.float64).T,
                           np.asarray(points, dtype=np.float64).T)
