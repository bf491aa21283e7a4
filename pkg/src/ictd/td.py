"""Reference kernel TD(0) on a fixed batch of transitions.

This is the ground truth the transformer is checked against. It tracks values
explicitly at every point that matters (context states, next states, query,
padding state) and keeps residuals in sync, so both the value-iteration form
and the residual recursion can be checked against each other.

Kernel evaluations here go through the scalar :func:`ictd.kernels.kernel_eval`
only, never through the vectorised affinity code the transformer uses.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .kernels import KernelSpec, kernel_eval
from .mrp import Transitions


@dataclass(frozen=True)
class TdConfig:
    gamma: float
    alphas: tuple[float, ...]
    kernel: KernelSpec = field(default_factory=KernelSpec)
    pad_state: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        if len(self.alphas) < 1:
            raise ValueError("need at least one step size")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")

    @classmethod
    def shared(cls, alpha: float, n: int, layers: int, gamma: float,
               kernel: KernelSpec | None = None, pad_state=None) -> "TdConfig":
        """Shared scalar step with effective size ``alpha / n`` at every iteration."""
        return cls(gamma, (alpha / n,) * layers, kernel or KernelSpec(), pad_state)

    @property
    def layers(self) -> int:
        return len(self.alphas)

    def pad(self, d: int) -> np.ndarray:
        return np.zeros(d) if self.pad_state is None else np.asarray(self.pad_state, dtype=np.float64)


@dataclass(frozen=True)
class TdState:
    """Values after ``iteration`` TD steps.

    ``residuals[:n]`` are ``r_i + gamma v(s'_i) - v(s_i)``; ``residuals[n]`` is the
    query-column entry ``gamma v(pad) - v(query)``.
    """

    v_states: np.ndarray
    v_next: np.ndarray
    v_query: float
    v_pad: float
    residuals: np.ndarray
    iteration: int = 0

    @classmethod
    def initial(cls, transitions: Transitions) -> "TdState":
        n = len(transitions)
        res = np.zeros(n + 1)
        res[:n] = transitions.rewards
        return cls(np.zeros(n), np.zeros(n), 0.0, 0.0, res, 0)


def _kernel_rows(kernel: KernelSpec, centers: np.ndarray, points: np.ndarray) -> np.ndarray:
    out = np.empty((centers.shape[0], points.shape[0]))
    for j, c in enumerate(centers):
        for i, p in enumerate(points):
            out[j, i] = kernel_eval(kernel, c, p)
    return out


@dataclass
class _Geometry:
    """Scalar-loop kernel tables: rows are context states (kernel centres)."""

    k_states: np.ndarray
    k_next: np.ndarray
    k_query: np.ndarray
    k_pad: np.ndarray

    @classmethod
    def build(cls, transitions: Transitions, query, cfg: TdConfig) -> "_Geometry":
        s = transitions.states
        pad = cfg.pad(transitions.dim)
        q = np.asarray(query, dtype=np.float64).reshape(1, -1)
        if q.shape[1] != transitions.dim:
            raise ValueError(f"query has dimension {q.shape[1]}, states have {transitions.dim}")
        return cls(_kernel_rows(cfg.kernel, s, s),
                   _kernel_rows(cfg.kernel, s, transitions.next_states),
                   _kernel_rows(cfg.kernel, s, q)[:, 0],
                   _kernel_rows(cfg.kernel, s, pad.reshape(1, -1))[:, 0])


def _residuals(transitions: Transitions, cfg: TdConfig, v_states, v_next, v_query, v_pad) -> np.ndarray:
    n = len(transitions)
    res = np.empty(n + 1)
    res[:n] = transitions.rewards + cfg.gamma * v_next - v_states
    res[n] = cfg.gamma * v_pad - v_query
    return res


def _td_step(state: TdState, transitions: Transitions, cfg: TdConfig, k: int, geo: _Geometry) -> TdState:
    if state.iteration != k:
        raise ValueError(f"state is at iteration {state.iteration}, asked to apply step {k}")
    n = len(transitions)
    w = cfg.alphas[k] * state.residuals[:n]
    v_states = state.v_states + w @ geo.k_states
    v_next = state.v_next + w @ geo.k_next
    v_query = state.v_query + float(w @ geo.k_query)
    v_pad = state.v_pad + float(w @ geo.k_pad)
    res = _residuals(transitions, cfg, v_states, v_next, v_query, v_pad)
    return TdState(v_states, v_next, v_query, v_pad, res, k + 1)


def td_step(state: TdState, transitions: Transitions, query, cfg: TdConfig, k: int) -> TdState:
    """One kernel TD update ``v(x) += alpha_k sum_j b_j k(s_j, x)`` at every tracked point."""
    return _td_step(state, transitions, cfg, k, _Geometry.build(transitions, query, cfg))


def residual_step(residuals, transitions: Transitions, query, cfg: TdConfig, k: int) -> np.ndarray:
    """Advance the residuals directly, without values:

    ``b_i += alpha_k sum_j b_j (gamma k(s_j, s'_i) - k(s_j, s_i))``, with the
    query entry using ``(pad, query)`` in place of ``(s'_i, s_i)``.
    """
    return _residual_step(np.asarray(residuals, dtype=np.float64), cfg, k,
                          _Geometry.build(transitions, query, cfg))


def _residual_step(res: np.ndarray, cfg: TdConfig, k: int, geo: _Geometry) -> np.ndarray:
    n = res.shape[0] - 1
    b = res[:n]
    a = cfg.alphas[k]
    out = np.empty_like(res)
    out[:n] = b + a * (cfg.gamma * (b @ geo.k_next) - b @ geo.k_states)
    out[n] = res[n] + a * (cfg.gamma * (b @ geo.k_pad) - b @ geo.k_query)
    return out


def run_td(transitions: Transitions, query, cfg: TdConfig) -> list[TdState]:
    """All states ``k = 0..L`` of the value-iteration form."""
    geo = _Geometry.build(transitions, query, cfg)
    states = [TdState.initial(transitions)]
    for k in range(cfg.layers):
        states.append(_td_step(states[-1], transitions, cfg, k, geo))
    return states


def run_residuals(transitions: Transitions, query, cfg: TdConfig) -> np.ndarray:
    """Residual iterates ``(L+1, n+1)`` from the residual recursion alone."""
    geo = _Geometry.build(transitions, query, cfg)
    res = TdState.initial(transitions).residuals
    out = [res]
    for k in range(cfg.layers):
        res = _residual_step(res, cfg, k, geo)
        out.append(res)
    return np.array(out)


def evaluate_value(transitions: Transitions, query, cfg: TdConfig, layers: int | None = None) -> tuple[float, float, float]:
    """``(raw_readout, pad_value, corrected_value)`` after ``layers`` steps.

    The raw readout is what the transformer exposes, ``v(query) - gamma v(pad)``;
    the corrected value adds the constant ``gamma v(pad)`` back.
    """
    if layers is not None:
        if layers < 1 or layers > cfg.layers:
            raise ValueError(f"layers must lie in [1, {cfg.layers}]")
        cfg = replace(cfg, alphas=cfg.alphas[:layers])
    final = run_td(transitions, query, cfg)[-1]
    raw = -float(final.residuals[-1])
    return raw, final.v_pad, raw + cfg.gamma * final.v_pad
