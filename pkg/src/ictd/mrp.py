"""Synthetic Markov reward processes with known value functions.

States live in R^2 and follow ``s' = rho * s + eps`` with ``eps ~ N(0, sigma^2 I)``.
:class:`SyntheticDomain` puts the true value function in the RKHS of the
exponential kernel (a uniform mixture of kernel sections centred on the unit
circle) and derives the reward that makes it Bellman-exact.
:class:`LinearValueDomain` does the same for a linear value function and is
the sanity fixture for the linear-kernel baseline.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np

from . import rng as rng_mod

STATE_DIM = 2


class Transition(NamedTuple):
    s: np.ndarray
    r: float
    s_next: np.ndarray


@dataclass(frozen=True)
class Transitions:
    """A batch of ``(s, r, s')`` triples stored column-wise.

    The chained-trajectory layout is the special case ``s_next[i] == states[i + 1]``.
    """

    states: np.ndarray       # (n, d)
    rewards: np.ndarray      # (n,)
    next_states: np.ndarray  # (n, d)

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.states, dtype=np.float64))
        r = np.atleast_1d(np.asarray(self.rewards, dtype=np.float64))
        sn = np.atleast_2d(np.asarray(self.next_states, dtype=np.float64))
        if s.shape != sn.shape or s.shape[0] != r.shape[0] or r.ndim != 1:
            raise ValueError(f"inconsistent transition shapes: states {s.shape}, rewards {r.shape}, next {sn.shape}")
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "rewards", r)
        object.__setattr__(self, "next_states", sn)

    def __len__(self) -> int:
        return self.states.shape[0]

    def __getitem__(self, i) -> Transition:
        return Transition(self.states[i], float(self.rewards[i]), self.next_states[i])

    def __iter__(self) -> Iterator[Transition]:
        return (self[i] for i in range(len(self)))

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @classmethod
    def from_list(cls, items) -> "Transitions":
        items = list(items)
        return cls(np.array([t[0] for t in items], dtype=np.float64),
                   np.array([t[1] for t in items], dtype=np.float64),
                   np.array([t[2] for t in items], dtype=np.float64))

    @classmethod
    def from_trajectory(cls, states, rewards) -> "Transitions":
        """Chain ``(s_0, r_0, ..., s_{n-1}, r_{n-1}, s_n)`` into n triples."""
        states = np.asarray(states, dtype=np.float64)
        return cls(states[:-1], rewards, states[1:])


@dataclass(frozen=True)
class GaussianMRP:
    """Shared linear-Gaussian dynamics; subclasses supply value and reward."""

    rho: float = 0.5
    sigma: float = 0.2
    gamma: float = 0.9

    def _check_dynamics(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")

    def step(self, s, rng: np.random.Generator) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        return self.rho * s + self.sigma * rng_mod.normal(rng, s.shape)

    def sample_prompt(self, n: int, rng: np.random.Generator, low: float = -1.0, high: float = 1.0) -> Transitions:
        """n i.i.d. transitions with states uniform on the box ``[low, high]^2``."""
        if n < 1:
            raise ValueError("n must be >= 1")
        s = rng_mod.uniform(rng, low, high, (n, STATE_DIM))
        return Transitions(s, self.reward(s), self.step(s, rng))

    def stationary_moments(self) -> tuple[np.ndarray, float]:
        if not abs(self.rho) < 1.0:
            raise ValueError(f"no stationary distribution for rho={self.rho}")
        return np.zeros(STATE_DIM), self.sigma ** 2 / (1.0 - self.rho ** 2)

    def true_value(self, s):
        raise NotImplementedError

    def reward(self, s):
        raise NotImplementedError

    def expected_next_value(self, s):
        raise NotImplementedError

    def bellman_residual_check(self, s, n_mc: int, rng: np.random.Generator) -> tuple[float, float, float]:
        """Bellman residual ``R + gamma E[V(s')] - V`` at ``s``, analytic and Monte Carlo.

        Returns ``(analytic, monte_carlo, std_err)``.
        """
        if n_mc < 1000:
            raise ValueError("n_mc must be >= 1000")
        s = np.asarray(s, dtype=np.float64)
        r = float(self.reward(s))
        v = float(self.true_value(s))
        analytic = r + self.gamma * float(self.expected_next_value(s)) - v
        nxt = self.rho * s + self.sigma * rng_mod.normal(rng, (n_mc, STATE_DIM))
        vals = self.true_value(nxt)
        mc = r + self.gamma * float(vals.mean()) - v
        se = self.gamma * float(vals.std(ddof=1)) / math.sqrt(n_mc)
        return analytic, mc, se

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class SyntheticDomain(GaussianMRP):
    """Value function ``V(s) = scale/m * sum_j exp(c_j . s / delta)`` with ``c_j`` on the unit circle."""

    delta: float = 1.0
    m: int = 8
    scale: float = 1.0
    name: str = field(default="appendixF", compare=False)

    def __post_init__(self):
        self._check_dynamics()
        if self.delta <= 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")

    @property
    def centroids(self) -> np.ndarray:
        angle = 2.0 * np.pi * np.arange(self.m) / self.m
        return np.stack([np.cos(angle), np.sin(angle)], axis=1)

    @property
    def eta(self) -> float:
        return math.exp(self.sigma ** 2 / (2.0 * self.delta ** 2))

    def _mixture(self, s, centers) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        return np.exp(s @ centers.T / self.delta).mean(axis=-1)

    def true_value(self, s):
        return self.scale * self._mixture(s, self.centroids)

    def expected_next_value(self, s):
        return self.scale * self.eta * self._mixture(s, self.rho * self.centroids)

    def reward(self, s):
        c = self.centroids
        s = np.asarray(s, dtype=np.float64)
        terms = np.exp(s @ c.T / self.delta) - self.gamma * self.eta * np.exp(s @ (self.rho * c).T / self.delta)
        return self.scale * terms.mean(axis=-1)

    def to_dict(self) -> dict:
        return {"kind": "synthetic", "name": self.name, "rho": self.rho, "sigma": self.sigma,
                "delta": self.delta, "m": self.m, "gamma": self.gamma, "scale": self.scale}


@dataclass(frozen=True)
class LinearValueDomain(GaussianMRP):
    """Value function ``V(s) = w . s``; the reward ``(1 - gamma rho) w . s`` makes it Bellman-exact."""

    w: tuple[float, float] = (1.0, -0.5)
    name: str = field(default="linear", compare=False)

    def __post_init__(self):
        self._check_dynamics()
        object.__setattr__(self, "w", tuple(float(v) for v in self.w))

    def true_value(self, s):
        return np.asarray(s, dtype=np.float64) @ np.asarray(self.w)

    def expected_next_value(self, s):
        return self.rho * self.true_value(s)

    def reward(self, s):
        return (1.0 - self.gamma * self.rho) * self.true_value(s)

    def to_dict(self) -> dict:
        return {"kind": "linear", "name": self.name, "rho": self.rho, "sigma": self.sigma,
                "gamma": self.gamma, "w": list(self.w)}


def domain_from_dict(data: dict) -> GaussianMRP:
    data = dict(data)
    kind = data.pop("kind", "synthetic")
    if kind == "synthetic":
        allowed = {"name", "rho", "sigma", "delta", "m", "gamma", "scale"}
        cls = SyntheticDomain
    elif kind == "linear":
        allowed = {"name", "rho", "sigma", "gamma", "w"}
        cls = LinearValueDomain
    else:
        raise ValueError(f"unknown domain kind {kind!r}")
    unknown = set(data) - allowed
    if unknown:
        raise ValueError(f"unknown domain keys for kind {kind!r}: {sorted(unknown)}")
    if "m" in data:
        data["m"] = int(data["m"])
    return cls(**data)


PRESETS: dict[str, GaussianMRP] = {
    "appendixF": SyntheticDomain(rho=0.5, sigma=0.2, delta=1.0, m=8, gamma=0.9, name="appendixF"),
    "appendixF_m4_x2": SyntheticDomain(rho=0.5, sigma=0.2, delta=1.0, m=4, gamma=0.9, scale=2.0,
                                       name="appendixF_m4_x2"),
    "sharp_delta02": SyntheticDomain(rho=0.5, sigma=0.2, delta=0.2, m=8, gamma=0.9, name="sharp_delta02"),
    "linear_value": LinearValueDomain(rho=0.5, sigma=0.2, gamma=0.9, w=(1.0, -0.5), name="linear_value"),
}


def get_preset(name: str) -> GaussianMRP:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown domain preset {name!r}; known: {sorted(PRESETS)}") from None
