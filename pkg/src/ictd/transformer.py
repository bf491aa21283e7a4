"""A fixed-weight two-head attention network that runs kernel TD in its forward pass.

Prompt layout, ``Z`` of shape ``(2d+1, n+1)``::

    [ s_0   ... s_{n-1}   query ]
    [ s'_0  ... s'_{n-1}  pad   ]
    [ r_0   ... r_{n-1}   0     ]

Each layer adds ``scale * (head1(Z) + head2(Z))``. Head 1 compares states with
states, head 2 compares states with next states; both write only the last row.
After layer ``l`` the last row holds the TD residuals ``b_l(i)`` and, in the
query column, ``gamma v_l(pad) - v_l(query)``.

Two execution paths are provided. The literal path multiplies the full weight
matrices exactly as written; the fast path uses the known sparsity and runs the
last-row recursion on ``d``-dimensional affinities (numba when available).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .kernels import KernelFamily, KernelSpec, affinity_matrix, state_affinity
from .mrp import Transitions


@dataclass(frozen=True)
class PromptMatrix:
    Z: np.ndarray
    d: int

    @property
    def n(self) -> int:
        return self.Z.shape[1] - 1

    @property
    def states(self) -> np.ndarray:
        return self.Z[: self.d, : self.n].T

    @property
    def next_states(self) -> np.ndarray:
        return self.Z[self.d: 2 * self.d, : self.n].T

    @property
    def query(self) -> np.ndarray:
        return self.Z[: self.d, self.n]

    @property
    def pad(self) -> np.ndarray:
        return self.Z[self.d: 2 * self.d, self.n]

    @property
    def residual_row(self) -> np.ndarray:
        return self.Z[2 * self.d]

    def with_last_row(self, row: np.ndarray) -> "PromptMatrix":
        Z = self.Z.copy()
        Z[2 * self.d] = row
        return PromptMatrix(Z, self.d)


def build_prompt(transitions: Transitions, query, pad=None) -> PromptMatrix:
    d = transitions.dim
    query = np.asarray(query, dtype=np.float64)
    pad = np.zeros(d) if pad is None else np.asarray(pad, dtype=np.float64)
    if query.shape != (d,) or pad.shape != (d,):
        raise ValueError(f"query {query.shape} and pad {pad.shape} must both have shape ({d},)")
    n = len(transitions)
    Z = np.zeros((2 * d + 1, n + 1))
    Z[:d, :n] = transitions.states.T
    Z[:d, n] = query
    Z[d: 2 * d, :n] = transitions.next_states.T
    Z[d: 2 * d, n] = pad
    Z[2 * d, :n] = transitions.rewards
    return PromptMatrix(Z, d)


def mask(n: int) -> np.ndarray:
    M = np.zeros((n + 1, n + 1))
    M[np.arange(n), np.arange(n)] = 1.0
    return M


@dataclass(frozen=True)
class Head:
    K: np.ndarray
    Q: np.ndarray
    V: np.ndarray


def _selector(d: int, block: int) -> np.ndarray:
    """Projection copying block-row ``block`` (0 or 1) into the top ``d`` rows."""
    P = np.zeros((2 * d + 1, 2 * d + 1))
    P[np.arange(d), block * d + np.arange(d)] = 1.0
    return P


def _corner(d: int, value: float) -> np.ndarray:
    V = np.zeros((2 * d + 1, 2 * d + 1))
    V[2 * d, 2 * d] = value
    return V


def state_head(d: int, value: float) -> Head:
    """Keys and queries both read the current states."""
    return Head(_selector(d, 0), _selector(d, 0), _corner(d, value))


def next_state_head(d: int, value: float) -> Head:
    """Keys read current states, queries read next states (pad in the query column)."""
    return Head(_selector(d, 0), _selector(d, 1), _corner(d, value))


@dataclass(frozen=True)
class LayerWeights:
    head1: Head
    head2: Head
    scale: float = 1.0

    @classmethod
    def theorem(cls, d: int, alpha: float, gamma: float) -> "LayerWeights":
        """Step size baked into the value matrices, unit residual scale."""
        return cls(state_head(d, -alpha), next_state_head(d, gamma * alpha), 1.0)

    @classmethod
    def experiment(cls, d: int, alpha: float, gamma: float, n: int) -> "LayerWeights":
        """Unit value matrices, residual scaled by ``alpha / n``."""
        return cls(state_head(d, -1.0), next_state_head(d, gamma), alpha / n)

    def gains(self, d: int) -> tuple[float, float]:
        """Effective last-row gains ``(scale * V1[-1,-1], scale * V2[-1,-1])``.

        Raises if the weights do not have the constructed sparsity, since the
        fast path is only valid for that structure.
        """
        ref1 = state_head(d, self.head1.V[2 * d, 2 * d])
        ref2 = next_state_head(d, self.head2.V[2 * d, 2 * d])
        for got, ref in ((self.head1, ref1), (self.head2, ref2)):
            if not (np.array_equal(got.K, ref.K) and np.array_equal(got.Q, ref.Q)
                    and np.array_equal(got.V, ref.V)):
                raise ValueError("weights are not of the constructed form; use the literal path")
        return self.scale * self.head1.V[2 * d, 2 * d], self.scale * self.head2.V[2 * d, 2 * d]


def theorem_layers(d: int, alphas, gamma: float) -> list[LayerWeights]:
    return [LayerWeights.theorem(d, a, gamma) for a in alphas]


def experiment_layers(d: int, alpha: float, gamma: float, n: int, layers: int) -> list[LayerWeights]:
    return [LayerWeights.experiment(d, alpha, gamma, n) for _ in range(layers)]


def attention(Z, head: Head, kernel: KernelSpec) -> np.ndarray:
    """``V Z M h(K Z, Q Z)`` with full matrices."""
    Z = Z.Z if isinstance(Z, PromptMatrix) else np.asarray(Z, dtype=np.float64)
    n = Z.shape[1] - 1
    H = affinity_matrix(kernel, head.K @ Z, head.Q @ Z)
    return head.V @ Z @ mask(n) @ H


def layer_forward(Z: PromptMatrix, weights: LayerWeights, kernel: KernelSpec) -> PromptMatrix:
    update = attention(Z, weights.head1, kernel) + attention(Z, weights.head2, kernel)
    return PromptMatrix(Z.Z + weights.scale * update, Z.d)


def forward(Z0: PromptMatrix, weights: list[LayerWeights], kernel: KernelSpec, trace: bool = False,
            fast: bool = False):
    """Apply the layers in order. Returns ``(Z_L, trace)``; ``trace`` is ``[Z_0, ..., Z_L]`` or None."""
    if len(weights) < 1:
        raise ValueError("need at least one layer")
    if fast:
        return _forward_fast(Z0, weights, kernel, trace)
    Z = Z0
    history = [Z0] if trace else None
    for w in weights:
        Z = layer_forward(Z, w, kernel)
        if trace:
            history.append(Z)
    return Z, history


def _forward_fast(Z0: PromptMatrix, weights, kernel, trace):
    if kernel.family is KernelFamily.SOFTMAX:
        raise ValueError("the fast path does not support softmax-normalized affinities")
    d, n = Z0.d, Z0.n
    gains = np.array([w.gains(d) for w in weights])
    S, Sn = Z0.states, Z0.next_states
    k_ctx = state_affinity(kernel, S, S)
    k_next = state_affinity(kernel, S, Sn)
    k_query = state_affinity(kernel, S, Z0.query.reshape(1, -1))
    k_pad = state_affinity(kernel, S, Z0.pad.reshape(1, -1))[:, 0]
    b_trace, e_trace = _backend.residual_sweep(k_ctx, k_next, k_query, k_pad, Z0.residual_row[:n],
                                               gains[:, 0], gains[:, 1])
    e_trace = e_trace[:, 0] + Z0.residual_row[n]

    def at(ell):
        return Z0.with_last_row(np.append(b_trace[ell], e_trace[ell]))

    history = [at(ell) for ell in range(len(weights) + 1)] if trace else None
    return at(len(weights)), history


def read_value(Z_L: PromptMatrix, gamma: float, pad_value_hint: float | None = None):
    """``(raw, corrected)``: raw is minus the bottom-right entry, ``v(query) - gamma v(pad)``."""
    raw = -float(Z_L.Z[2 * Z_L.d, Z_L.n])
    corrected = None if pad_value_hint is None else raw + gamma * pad_value_hint
    return raw, corrected


def pad_value(transitions: Transitions, weights, kernel: KernelSpec, gamma: float, pad=None, fast: bool = True) -> float:
    """``v_L(pad)`` from a second pass with ``query = pad``: raw readout there is ``(1 - gamma) v(pad)``."""
    pad = np.zeros(transitions.dim) if pad is None else np.asarray(pad, dtype=np.float64)
    Z, _ = forward(build_prompt(transitions, pad, pad), weights, kernel, fast=fast)
    raw, _ = read_value(Z, gamma)
    return raw / (1.0 - gamma)


def predict_raw(transitions: Transitions, queries, alpha: float, layers: int, kernel: KernelSpec,
                gamma: float, pad=None, use_numba: bool | None = None) -> np.ndarray:
    """Raw readouts for many queries sharing one context, in experiment parameterisation.

    Because the mask removes the query column as a key, query columns never
    influence the context residuals or each other, so all queries can ride in
    one pass. Equivalent to one :func:`forward` per query with
    :func:`experiment_layers` weights.
    """
    if kernel.family is KernelFamily.SOFTMAX:
        raise ValueError("softmax-normalized affinities couple queries to the context; use forward()")
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    n, d = len(transitions), transitions.dim
    pad = np.zeros(d) if pad is None else np.asarray(pad, dtype=np.float64)
    S = transitions.states
    k_ctx = state_affinity(kernel, S, S)
    k_next = state_affinity(kernel, S, transitions.next_states)
    k_query = state_affinity(kernel, S, queries)
    k_pad = state_affinity(kernel, S, pad.reshape(1, -1))[:, 0]
    step = alpha / n
    head1 = np.full(layers, -1.0 * step)
    head2 = np.full(layers, gamma * step)
    _, e_trace = _backend.residual_sweep(k_ctx, k_next, k_query, k_pad, transitions.rewards,
                                         head1, head2, use_numba=use_numba)
    return -e_trace[-1]
