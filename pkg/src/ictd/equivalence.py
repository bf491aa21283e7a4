"""Randomised checks that the constructed transformer is kernel TD.

Each suite returns a list of :class:`CaseResult`; ``max_dev`` is the largest
absolute deviation observed in that case. The suites are shared by the test
suite and the ``verify`` command.
"""
from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field

import numpy as np

from . import td
from .kernels import KernelSpec, state_affinity
from .mrp import Transitions
from .rng import child_seed, make_rng, normal, uniform
from .transformer import (attention, build_prompt, experiment_layers, forward, read_value,
                          theorem_layers, LayerWeights)

THEOREM_KERNELS = (KernelSpec.exponential(1.0), KernelSpec.exponential(10.0), KernelSpec.linear())


@dataclass
class CaseResult:
    suite: str
    case: int
    params: dict
    max_dev: float
    tolerance: float
    per_layer: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.max_dev <= self.tolerance)

    def to_dict(self, per_layer: bool = False) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        if not per_layer:
            out.pop("per_layer")
        return out


def random_transitions(rng, n: int, d: int, chained: bool = False) -> Transitions:
    """States uniform on the unit box, rewards standard normal."""
    if chained:
        return Transitions.from_trajectory(uniform(rng, -1.0, 1.0, (n + 1, d)), normal(rng, n))
    return Transitions(uniform(rng, -1.0, 1.0, (n, d)), normal(rng, n), uniform(rng, -1.0, 1.0, (n, d)))


def _kernel_label(k: KernelSpec) -> str:
    return k.family.value if k.family.value == "linear" else f"{k.family.value}(delta={k.temperature:g})"


def _step_sizes(rng, n: int, layers: int) -> np.ndarray:
    # effective steps alpha_l / n with alpha_l in [0.05, 1]; keeps every kernel family contractive enough
    return uniform(rng, 0.05, 1.0, layers) / n


def theorem_suite(instances: int = 200, seed: int = 0, tolerance: float = 1e-9, d: int = 2,
                  ns=(1, 2, 8, 16), layer_counts=(1, 3, 10), gammas=(0.0, 0.5, 0.9),
                  kernels=THEOREM_KERNELS) -> list[CaseResult]:
    """Literal forward-pass residual rows vs the oracle's residual recursion, at every layer.

    Cases cycle through the full parameter grid; half use per-layer step sizes
    baked into the value matrices, half a shared ``alpha / n`` residual scale,
    and every other case uses a chained trajectory.
    """
    grid = list(itertools.product(ns, layer_counts, gammas, kernels))
    out = []
    for case in range(instances):
        n, L, gamma, kernel = grid[case % len(grid)]
        rng = make_rng(child_seed(seed, "theorem", case))
        tr = random_transitions(rng, n, d, chained=case % 2 == 0)
        query = uniform(rng, -1.0, 1.0, d)
        if case % 4 < 2:
            steps = _step_sizes(rng, n, L)
            weights = theorem_layers(d, steps, gamma)
            mode = "theorem"
        else:
            alpha = float(uniform(rng, 0.05, 1.0, 1)[0])
            steps = np.full(L, alpha / n)
            weights = experiment_layers(d, alpha, gamma, n, L)
            mode = "experiment"
        cfg = td.TdConfig(gamma, tuple(steps), kernel)
        oracle = td.run_residuals(tr, query, cfg)
        _, trace = forward(build_prompt(tr, query), weights, kernel, trace=True)
        per_layer = [float(np.max(np.abs(z.residual_row - oracle[ell]))) for ell, z in enumerate(trace)]
        out.append(CaseResult("theorem", case, {"n": n, "layers": L, "gamma": gamma,
                                                "kernel": _kernel_label(kernel), "mode": mode,
                                                "chained": case % 2 == 0},
                              max(per_layer), tolerance, per_layer))
    return out


def dual_form_suite(seed: int = 0, tolerance: float = 1e-10, dims=(2, 4), ns=(1, 4, 16),
                    layer_counts=(1, 5, 10), kernel: KernelSpec | None = None) -> list[CaseResult]:
    """Residuals recomputed from td_step values vs the residual recursion."""
    kernel = kernel or KernelSpec.exponential(1.0)
    out = []
    for case, (d, n, L) in enumerate(itertools.product(dims, ns, layer_counts)):
        rng = make_rng(child_seed(seed, "dual", case))
        tr = random_transitions(rng, n, d)
        query = uniform(rng, -1.0, 1.0, d)
        cfg = td.TdConfig(0.9, tuple(_step_sizes(rng, n, L)), kernel)
        by_values = np.array([s.residuals for s in td.run_td(tr, query, cfg)])
        by_residuals = td.run_residuals(tr, query, cfg)
        per_layer = np.max(np.abs(by_values - by_residuals), axis=1).tolist()
        out.append(CaseResult("dual_form", case, {"d": d, "n": n, "layers": L}, max(per_layer), tolerance, per_layer))
    return out


def lemma_suite(prompts: int = 50, seed: int = 0, tolerance: float = 1e-10, d: int = 2,
                kernel: KernelSpec | None = None) -> list[CaseResult]:
    """Each head against its closed form; entries off the last row must be exactly zero.

    An off-last-row nonzero is reported as an infinite deviation.
    """
    kernel = kernel or KernelSpec.exponential(1.0)
    out = []
    for case in range(prompts):
        rng = make_rng(child_seed(seed, "lemma", case))
        n = 1 + case % 16
        tr = random_transitions(rng, n, d)
        query = uniform(rng, -1.0, 1.0, d)
        pad = uniform(rng, -0.5, 0.5, d)
        Z = build_prompt(tr, query, pad)
        alpha = float(uniform(rng, 0.05, 1.0, 1)[0])
        gamma = 0.9
        w = LayerWeights.theorem(d, alpha, gamma)
        b = tr.rewards
        cols = np.vstack([tr.states, query])
        nxt = np.vstack([tr.next_states, pad])
        expect1 = -alpha * (b @ state_affinity(kernel, tr.states, cols))
        expect2 = gamma * alpha * (b @ state_affinity(kernel, tr.states, nxt))
        dev = 0.0
        for head, expect in ((w.head1, expect1), (w.head2, expect2)):
            got = attention(Z, head, kernel)
            if np.any(got[:-1] != 0.0):
                dev = np.inf
            dev = max(dev, float(np.max(np.abs(got[-1] - expect))))
        out.append(CaseResult("lemma", case, {"n": n, "alpha": alpha}, dev, tolerance))
    return out


def offset_suite(queries: int = 20, seed: int = 0, tolerance: float = 1e-9, n: int = 16, layers: int = 10,
                 gamma: float = 0.9, kernel: KernelSpec | None = None) -> list[CaseResult]:
    """Raw readout minus the oracle value is the same constant ``-gamma v(pad)`` for every query."""
    kernel = kernel or KernelSpec.exponential(1.0)
    rng = make_rng(child_seed(seed, "offset", 0))
    tr = random_transitions(rng, n, 2)
    alpha = 1.0
    weights = experiment_layers(2, alpha, gamma, n, layers)
    cfg = td.TdConfig.shared(alpha, n, layers, gamma, kernel)
    gaps, pads = [], []
    for _ in range(queries):
        q = uniform(rng, -1.0, 1.0, 2)
        raw, _ = read_value(forward(build_prompt(tr, q), weights, kernel)[0], gamma)
        _, v_pad, value = td.evaluate_value(tr, q, cfg)
        gaps.append(raw - value)
        pads.append(v_pad)
    gaps = np.array(gaps)
    variation = float(gaps.max() - gaps.min())
    offset_err = float(np.max(np.abs(gaps + gamma * np.array(pads))))
    return [CaseResult("offset_variation", 0, {"queries": queries, "n": n, "layers": layers}, variation, tolerance),
            CaseResult("offset_value", 0, {"queries": queries, "n": n, "layers": layers}, offset_err, tolerance)]


def path_suite(instances: int = 20, seed: int = 0, tolerance: float = 1e-12, n: int = 16, layers: int = 10,
               kernel: KernelSpec | None = None) -> list[CaseResult]:
    """Literal dense path vs the structured fast path."""
    kernel = kernel or KernelSpec.exponential(1.0)
    out = []
    for case in range(instances):
        rng = make_rng(child_seed(seed, "paths", case))
        tr = random_transitions(rng, n, 2)
        Z0 = build_prompt(tr, uniform(rng, -1.0, 1.0, 2))
        weights = experiment_layers(2, float(uniform(rng, 0.05, 1.0, 1)[0]), 0.9, n, layers)
        lit, _ = forward(Z0, weights, kernel)
        fast, _ = forward(Z0, weights, kernel, fast=True)
        out.append(CaseResult("paths", case, {"n": n, "layers": layers},
                              float(np.max(np.abs(lit.Z - fast.Z))), tolerance))
    return out
