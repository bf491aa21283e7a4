"""Step-size tuning, evaluation metrics and the synthetic experiments.

The only trainable quantity is the scalar ``alpha`` in the residual scale
``alpha / n``; everything else in the network is fixed by construction.
Gradients with respect to ``alpha`` are central finite differences evaluated on
a shared batch (common random numbers), so the estimate is noise-free for a
given step seed.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .kernels import KernelOverflowError, KernelSpec, state_affinity
from .mrp import GaussianMRP, Transitions
from .rng import child_seed, make_rng
from .transformer import predict_raw
from . import _backend

OPTIMIZERS = ("gradient_descent", "adam", "grid_search")


def log_grid(low: float = 1e-2, high: float = 1e1, points: int = 25) -> tuple[float, ...]:
    return tuple(float(v) for v in np.geomspace(low, high, points))


@dataclass(frozen=True)
class TrainSpec:
    train_domains: tuple[GaussianMRP, ...]
    eval_domains: tuple[GaussianMRP, ...] = ()
    alpha_init: float = 0.1
    optimizer: str = "adam"
    learning_rate: float = 0.01
    steps: int = 200
    batch_size: int = 32
    eval_size: int = 32
    n_context: int = 32
    layers: int = 30
    seed: int = 0
    kernel: KernelSpec = field(default_factory=KernelSpec)
    grid: tuple[float, ...] = field(default_factory=log_grid)
    max_step: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "train_domains", tuple(self.train_domains))
        object.__setattr__(self, "eval_domains", tuple(self.eval_domains))
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.batch_size < 1 or self.steps < 1 or self.eval_size < 1 or self.n_context < 1 or self.layers < 1:
            raise ValueError("batch_size, steps, eval_size, n_context and layers must all be >= 1")
        if self.optimizer != "grid_search" and not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not self.train_domains:
            raise ValueError("need at least one training domain")


@dataclass(frozen=True)
class TdLossReport:
    mean_sq_td_error: float
    per_domain: dict
    alpha: float
    step: int


# -- TD loss ----------------------------------------------------------------------

@dataclass
class _Prompt:
    """Kernel tables for one context plus held-out transitions; reusable across alphas."""

    k_ctx: np.ndarray
    k_next: np.ndarray
    k_query: np.ndarray
    k_pad: np.ndarray
    rewards: np.ndarray
    held_rewards: np.ndarray
    n: int


class LossBatch:
    """A sampled batch of prompts; ``loss(alpha)`` reuses the same samples for every alpha."""

    def __init__(self, prompts: list[_Prompt], gamma: float, layers: int):
        self.prompts = prompts
        self.gamma = gamma
        self.layers = layers

    @classmethod
    def from_contexts(cls, pairs: Sequence[tuple[Transitions, Transitions]], kernel: KernelSpec,
                      gamma: float, layers: int) -> "LossBatch":
        prompts = []
        for ctx, held in pairs:
            S = ctx.states
            queries = np.vstack([held.states, held.next_states])
            prompts.append(_Prompt(state_affinity(kernel, S, S),
                                   state_affinity(kernel, S, ctx.next_states),
                                   state_affinity(kernel, S, queries),
                                   state_affinity(kernel, S, np.zeros((1, ctx.dim)))[:, 0],
                                   ctx.rewards, held.rewards, len(ctx)))
        return cls(prompts, gamma, layers)

    @classmethod
    def sample(cls, domain: GaussianMRP, spec: TrainSpec, rng: np.random.Generator) -> "LossBatch":
        pairs = []
        for _ in range(spec.batch_size):
            ctx = domain.sample_prompt(spec.n_context, rng)
            held = domain.sample_prompt(spec.eval_size, rng)
            pairs.append((ctx, held))
        return cls.from_contexts(pairs, spec.kernel, domain.gamma, spec.layers)

    def values(self, alpha: float, p: _Prompt) -> np.ndarray:
        step = alpha / p.n
        head1 = np.full(self.layers, -1.0 * step)
        head2 = np.full(self.layers, self.gamma * step)
        _, e_trace = _backend.residual_sweep(p.k_ctx, p.k_next, p.k_query, p.k_pad, p.rewards, head1, head2)
        return -e_trace[-1]

    def loss(self, alpha: float) -> float:
        """Mean squared TD error ``(r + gamma V(s') - V(s))^2`` over held-out transitions.

        Raw readouts are used; the shared ``gamma v(pad)`` offset mostly cancels
        inside the TD error. Non-finite results are reported as ``inf``.
        """
        total = 0.0
        count = 0
        with np.errstate(over="ignore", invalid="ignore"):
            for p in self.prompts:
                v = self.values(alpha, p)
                m = p.held_rewards.shape[0]
                td = p.held_rewards + self.gamma * v[m:] - v[:m]
                total += float(td @ td)
                count += m
        out = total / count
        return out if math.isfinite(out) else math.inf

    def mean_sq_reward(self) -> float:
        r = np.concatenate([p.held_rewards for p in self.prompts])
        return float(r @ r / r.size)


def _safe_batch(domain, spec, rng):
    try:
        return LossBatch.sample(domain, spec, rng)
    except KernelOverflowError:
        return None


def td_loss(alpha: float, domain: GaussianMRP, spec: TrainSpec, rng: np.random.Generator) -> float:
    """Held-out TD loss at ``alpha`` on a freshly sampled batch; ``inf`` on divergence."""
    if not math.isfinite(alpha):
        raise ValueError("alpha must be finite")
    batch = _safe_batch(domain, spec, rng)
    return math.inf if batch is None else batch.loss(alpha)


# -- fitting alpha ----------------------------------------------------------------

LossHook = Callable[[float, int], float]


def _step_batches(spec: TrainSpec, tag: str, step: int):
    return [_safe_batch(dom, spec, make_rng(child_seed(spec.seed, f"{tag}:{step}", i)))
            for i, dom in enumerate(spec.train_domains)]


def _domain_losses(batches, alpha) -> list[float]:
    return [math.inf if b is None else b.loss(alpha) for b in batches]


def _mean(values) -> float:
    out = float(np.mean(values))
    return out if math.isfinite(out) else math.inf


def _domain_ids(domains) -> list[str]:
    return [f"{i}:{getattr(d, 'name', type(d).__name__)}" for i, d in enumerate(domains)]


def fit_alpha(spec: TrainSpec, loss_hook: LossHook | None = None) -> tuple[float, list[TdLossReport]]:
    """Tune ``alpha`` on the training domains.

    ``gradient_descent`` applies ``alpha <- alpha - lr * g`` (optionally clipped to
    ``max_step``), ``adam`` uses the bias-corrected Adam update on the same
    gradient, and ``grid_search`` returns the grid argmin on one shared batch.
    ``loss_hook(alpha, step)`` replaces the TD loss, for testing the optimiser.

    Aborts early, returning the last alpha with a finite loss, after five
    consecutive non-finite losses.
    """
    ids = _domain_ids(spec.train_domains)
    if spec.optimizer == "grid_search":
        return _grid_search(spec, ids, loss_hook)

    alpha = float(spec.alpha_init)
    last_finite = alpha
    bad = 0
    m1 = m2 = 0.0
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    curve: list[TdLossReport] = []
    for t in range(spec.steps):
        h = max(1e-4 * abs(alpha), 1e-8)
        if loss_hook is not None:
            per = [loss_hook(alpha, t)]
            plus, minus = loss_hook(alpha + h, t), loss_hook(alpha - h, t)
        else:
            batches = _step_batches(spec, "fit", t)
            per = _domain_losses(batches, alpha)
            plus = _mean(_domain_losses(batches, alpha + h))
            minus = _mean(_domain_losses(batches, alpha - h))
        loss = _mean(per)
        curve.append(TdLossReport(loss, dict(zip(ids, per)) if loss_hook is None else {"hook": loss}, alpha, t))
        if not math.isfinite(loss):
            bad += 1
            if bad >= 5:
                warnings.warn(f"alpha fit diverged at step {t}; keeping last finite alpha {last_finite}")
                return last_finite, curve
            continue
        bad = 0
        last_finite = alpha
        g = (plus - minus) / (2.0 * h)
        if not math.isfinite(g):
            continue
        if spec.optimizer == "adam":
            m1 = beta1 * m1 + (1 - beta1) * g
            m2 = beta2 * m2 + (1 - beta2) * g * g
            delta = spec.learning_rate * (m1 / (1 - beta1 ** (t + 1))) / (math.sqrt(m2 / (1 - beta2 ** (t + 1))) + eps)
        else:
            delta = spec.learning_rate * g
            if spec.max_step is not None:
                delta = max(-spec.max_step, min(spec.max_step, delta))
        alpha = alpha - delta
    return alpha, curve


def _grid_search(spec, ids, loss_hook):
    batches = None if loss_hook is not None else _step_batches(spec, "grid", 0)
    curve = []
    for i, a in enumerate(spec.grid):
        if loss_hook is not None:
            per = [loss_hook(a, 0)]
        else:
            per = _domain_losses(batches, a)
        loss = _mean(per)
        curve.append(TdLossReport(loss, dict(zip(ids, per)) if loss_hook is None else {"hook": loss}, float(a), i))
    losses = np.array([r.mean_sq_td_error for r in curve])
    if not np.isfinite(losses).any():
        raise FloatingPointError("every grid point diverged")
    return float(spec.grid[int(np.argmin(losses))]), curve


def checkpoint_steps(steps: int) -> list[int]:
    """Optimizer steps at which transfer curves are evaluated; ``steps`` means the final alpha."""
    every = max(1, steps // 20)
    marks = list(range(0, steps, every))
    return marks + [steps]


# -- surfaces -----------------------------------------------------------------------

@dataclass
class SurfaceResult:
    xs: np.ndarray
    ys: np.ndarray
    predicted: np.ndarray
    truth: np.ndarray
    pearson: float
    centered_rmse: float
    alpha: float
    degenerate: bool = False

    @property
    def truth_range(self) -> float:
        return float(self.truth.max() - self.truth.min())

    @property
    def relative_centered_rmse(self) -> float:
        rng = self.truth_range
        return self.centered_rmse / rng if rng > 0 else math.nan


def grid_points(size: int, low: float = -1.0, high: float = 1.0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if size < 2:
        raise ValueError("grid size must be >= 2")
    ticks = np.linspace(low, high, size)
    xs, ys = np.meshgrid(ticks, ticks, indexing="ij")
    return xs, ys, np.column_stack([xs.ravel(), ys.ravel()])


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = np.ravel(a) - np.mean(a)
    b = np.ravel(b) - np.mean(b)
    denom = math.sqrt(float(a @ a) * float(b @ b))
    return float(a @ b) / denom if denom > 0 else math.nan


def centered_rmse(pred: np.ndarray, truth: np.ndarray) -> float:
    diff = (np.ravel(pred) - np.mean(pred)) - (np.ravel(truth) - np.mean(truth))
    return float(np.sqrt(np.mean(diff ** 2)))


def tune_alpha_on_context(domain: GaussianMRP, context: Transitions, kernel: KernelSpec, layers: int,
                          seed: int, grid: Sequence[float] | None = None, n_heldout: int = 1024) -> tuple[float, list[float]]:
    """Grid-search alpha by held-out TD loss with the context held fixed."""
    grid = tuple(grid) if grid is not None else log_grid()
    held = domain.sample_prompt(n_heldout, make_rng(child_seed(seed, "tune-heldout", 0)))
    batch = LossBatch.from_contexts([(context, held)], kernel, domain.gamma, layers)
    losses = [batch.loss(a) for a in grid]
    if not np.isfinite(losses).any():
        raise FloatingPointError("every grid point diverged")
    return float(grid[int(np.argmin(losses))]), losses


def surface_eval(domain: GaussianMRP, alpha, n_context: int, layers: int, grid_size: int, seed: int,
                 kernel: KernelSpec | None = None, tune_grid: Sequence[float] | None = None) -> SurfaceResult:
    """Predicted vs true value over a ``grid_size x grid_size`` grid on ``[-1, 1]^2``.

    One context is sampled from ``seed`` and shared by all grid queries. Pass
    ``alpha="tune"`` to pick alpha by :func:`tune_alpha_on_context`.
    """
    kernel = kernel or KernelSpec()
    context = domain.sample_prompt(n_context, make_rng(child_seed(seed, "surface-context", 0)))
    if alpha == "tune":
        alpha, _ = tune_alpha_on_context(domain, context, kernel, layers, seed, tune_grid)
    alpha = float(alpha)
    xs, ys, pts = grid_points(grid_size)
    with np.errstate(over="ignore", invalid="ignore"):
        pred = predict_raw(context, pts, alpha, layers, kernel, domain.gamma).reshape(xs.shape)
    truth = np.asarray(domain.true_value(pts)).reshape(xs.shape)
    degenerate = not (np.ptp(pred) > 0 and np.ptp(truth) > 0 and np.isfinite(pred).all())
    r = math.nan if degenerate else pearson(pred, truth)
    return SurfaceResult(xs, ys, pred, truth, r, centered_rmse(pred, truth), alpha, degenerate)


# -- ablations ----------------------------------------------------------------------

AXES = ("context", "layers")


@dataclass
class AblationRow:
    axis_value: int
    pearson: float
    centered_rmse: float


def ablation_sweep(domain: GaussianMRP, axis: str, values: Sequence[int] = (2, 4, 8, 16, 32), fixed_other: int = 32,
                   alpha: float = 1.0, seed: int = 0, grid_size: int = 21,
                   kernel: KernelSpec | None = None) -> list[AblationRow]:
    if axis not in AXES:
        raise ValueError(f"axis must be one of {AXES}")
    if not values:
        raise ValueError("values must be non-empty")
    rows = []
    for v in values:
        n, L = (v, fixed_other) if axis == "context" else (fixed_other, v)
        res = surface_eval(domain, alpha, n, L, grid_size, seed, kernel)
        rows.append(AblationRow(int(v), res.pearson, res.centered_rmse))
    return rows


def median_ablation(domain, axis, values, fixed_other, alpha, seeds, grid_size=21, kernel=None) -> list[AblationRow]:
    per_seed = [ablation_sweep(domain, axis, values, fixed_other, alpha, s, grid_size, kernel) for s in seeds]
    return [AblationRow(int(v),
                        float(np.median([rows[i].pearson for rows in per_seed])),
                        float(np.median([rows[i].centered_rmse for rows in per_seed])))
            for i, v in enumerate(values)]


def count_inversions(values: Sequence[float]) -> int:
    """Adjacent increases in a sequence expected to be non-increasing."""
    return sum(1 for a, b in zip(values, values[1:]) if b > a)


# -- transfer -------------------------------------------------------------------------

@dataclass
class TransferCell:
    train_index: int
    eval_index: int
    steps: list[int]
    alphas: list[float]
    losses: list[float]
    mean_sq_reward: float

    @property
    def initial(self) -> float:
        return self.losses[0]

    @property
    def final(self) -> float:
        return self.losses[-1]

    @property
    def normalized_final(self) -> float:
        return self.final / self.mean_sq_reward if self.mean_sq_reward > 0 else math.nan


@dataclass
class TransferResult:
    train_family: tuple
    eval_family: tuple
    cells: list[list[TransferCell]]
    fitted_alphas: list[float]


def transfer_matrix(train_family: Sequence[GaussianMRP], eval_family: Sequence[GaussianMRP],
                    spec: TrainSpec) -> TransferResult:
    """Fit alpha on each training domain, then track TD loss on every evaluation domain.

    Evaluation batches are fixed per column (same samples at every checkpoint and
    for every row), so curves differ only through alpha.
    """
    if not train_family or not eval_family:
        raise ValueError("families must be non-empty")
    marks = checkpoint_steps(spec.steps)
    eval_batches = [_safe_batch(dom, spec, make_rng(child_seed(spec.seed, "transfer-eval", j)))
                    for j, dom in enumerate(eval_family)]
    cells, fitted = [], []
    for i, dom in enumerate(train_family):
        row_spec = replace(spec, train_domains=(dom,), seed=child_seed(spec.seed, "transfer-train", i))
        alpha_star, curve = fit_alpha(row_spec)
        fitted.append(alpha_star)
        trajectory = [r.alpha for r in curve] + [alpha_star]
        steps = [min(s, len(trajectory) - 1) for s in marks]
        alphas = [trajectory[s] for s in steps]
        row = []
        for j, batch in enumerate(eval_batches):
            losses = [math.inf if batch is None else batch.loss(a) for a in alphas]
            msr = math.nan if batch is None else batch.mean_sq_reward()
            row.append(TransferCell(i, j, steps, alphas, losses, msr))
        cells.append(row)
    return TransferResult(tuple(train_family), tuple(eval_family), cells, fitted)


# -- linear baseline --------------------------------------------------------------------

@dataclass
class BaselineRow:
    family: str
    alpha: float
    pearson: float
    centered_rmse: float
    final_loss: float
    curve: list[TdLossReport]


def linear_baseline(domain: GaussianMRP, spec: TrainSpec, grid_size: int = 21,
                    kernels: Sequence[KernelSpec] | None = None) -> list[BaselineRow]:
    """Exponential vs linear kernel on the same domain, each at its own tuned alpha.

    The loss curve comes from :func:`fit_alpha`; the surface uses alpha tuned on
    the shared surface context.
    """
    kernels = kernels or (spec.kernel, KernelSpec.linear())
    rows = []
    for k in kernels:
        kspec = replace(spec, kernel=k, train_domains=(domain,))
        _, curve = fit_alpha(kspec)
        res = surface_eval(domain, "tune", spec.n_context, spec.layers, grid_size, spec.seed, k, spec.grid)
        if kspec.optimizer == "grid_search":
            final = min(r.mean_sq_td_error for r in curve)
        else:
            final = curve[-1].mean_sq_td_error
        rows.append(BaselineRow(k.family.value, res.alpha, res.pearson, res.centered_rmse, final, curve))
    return rows
