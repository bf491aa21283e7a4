"""Acceptance suite. Each test prints one PASS/FAIL line, also collected in the terminal summary.

Run with ``pytest tests/test_acceptance.py -v``.
"""
import time

import numpy as np

from ictd import equivalence, training
from ictd.cli import main
from ictd.kernels import KernelSpec
from ictd.mrp import get_preset
from ictd.rng import child_seed, make_rng, uniform

SEEDS = (0, 1, 2, 3, 4)
APPX = get_preset("appendixF")


def test_criterion_1_forward_pass_is_kernel_td(record_criterion):
    t0 = time.perf_counter()
    cases = equivalence.theorem_suite(instances=200, seed=0, tolerance=1e-9)
    elapsed = time.perf_counter() - t0
    worst = max(c.max_dev for c in cases)
    covered = {(c.params["n"], c.params["layers"], c.params["gamma"], c.params["kernel"]) for c in cases}
    ok = all(c.passed for c in cases) and len(covered) == 108 and elapsed < 30
    assert record_criterion(1, "transformer residual rows equal oracle residuals",
                            ok, f"200 cases, {len(covered)} grid cells, max dev {worst:.2e} <= 1e-9, {elapsed:.1f}s < 30s")


def test_criterion_2_head_closed_forms(record_criterion):
    cases = equivalence.lemma_suite(prompts=50, seed=0, tolerance=1e-10)
    worst = max(c.max_dev for c in cases)
    assert record_criterion(2, "each head matches its closed form, last row only",
                            all(c.passed for c in cases), f"50 prompts, max dev {worst:.2e} <= 1e-10")


def test_criterion_3_constant_offset(record_criterion):
    variation, value = equivalence.offset_suite(queries=20, seed=0, tolerance=1e-9)
    ok = variation.passed and value.passed
    assert record_criterion(3, "raw minus oracle value is -gamma v(pad) for all queries", ok,
                            f"variation {variation.max_dev:.2e}, offset error {value.max_dev:.2e} <= 1e-9")


def test_criterion_4_bellman_consistency(record_criterion):
    t0 = time.perf_counter()
    rng = make_rng(child_seed(0, "bellman-states"))
    states = uniform(rng, -1.0, 1.0, (50, 2))
    analytic = [APPX.bellman_residual_check(s, 1000, rng)[0] for s in states]
    worst = max(abs(a) for a in analytic)
    z_scores = []
    for i, s in enumerate(states[:5]):
        _, mc, se = APPX.bellman_residual_check(s, 100_000, make_rng(child_seed(0, "bellman-mc", i)))
        z_scores.append(abs(mc) / se)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and max(z_scores) <= 3.0 and elapsed < 10
    assert record_criterion(4, "synthetic reward makes the true value Bellman-consistent", ok,
                            f"analytic max {worst:.1e} <= 1e-12, MC max |z| {max(z_scores):.2f} <= 3, {elapsed:.1f}s")


def test_criterion_5_surface(record_criterion):
    t0 = time.perf_counter()
    res = training.surface_eval(APPX, "tune", n_context=32, layers=30, grid_size=21, seed=0)
    elapsed = time.perf_counter() - t0
    ok = res.pearson >= 0.99 and res.relative_centered_rmse <= 0.05 and elapsed < 120
    assert record_criterion(5, "predicted surface tracks the true value", ok,
                            f"alpha {res.alpha:.3f}, pearson {res.pearson:.4f} >= 0.99, "
                            f"centered RMSE {100 * res.relative_centered_rmse:.2f}% of range <= 5%, {elapsed:.1f}s")


def test_criterion_6_ablation_trend(record_criterion):
    details, ok = [], True
    for axis in training.AXES:
        seeds = [child_seed(0, "ablate", i) for i in range(5)]
        rows = training.median_ablation(APPX, axis, [2, 4, 8, 16, 32], 32, 1.0, seeds)
        crmse = [r.centered_rmse for r in rows]
        inv = training.count_inversions(crmse)
        ok = ok and inv <= 1
        details.append(f"{axis}: {' '.join(f'{v:.3f}' for v in crmse)} ({inv} inversions)")
    assert record_criterion(6, "median centered RMSE falls with context and depth", ok, "; ".join(details))


def test_criterion_7_linear_baseline(record_criterion):
    spec = training.TrainSpec(train_domains=(APPX,), optimizer="grid_search", seed=0)
    rows = {r.family: r for r in training.linear_baseline(APPX, spec)}
    ratio = rows["linear"].centered_rmse / rows["exponential"].centered_rmse
    sanity = training.surface_eval(get_preset("linear_value"), "tune", 32, 30, 21, 0, KernelSpec.linear())
    ok = ratio >= 3.0 and sanity.pearson >= 0.99
    assert record_criterion(7, "linear kernel fails where exponential succeeds", ok,
                            f"RMSE ratio {ratio:.2f} >= 3, linear-value fixture pearson {sanity.pearson:.4f} >= 0.99")


def test_criterion_8_transfer(record_criterion):
    train_family = (APPX, get_preset("appendixF_m4_x2"))
    eval_family = (APPX, get_preset("sharp_delta02"))
    ratios, matched_ok = [], True
    for seed in SEEDS:
        spec = training.TrainSpec(train_domains=train_family[:1], seed=seed)
        res = training.transfer_matrix(train_family, eval_family, spec)
        for row in res.cells:
            matched, mismatched = row[0], row[1]
            matched_ok = matched_ok and matched.final <= matched.initial
            ratios.append(mismatched.final / matched.final)
    median = float(np.median(ratios))
    ok = matched_ok and median >= 2.0
    assert record_criterion(8, "fixed weights transfer across matched domains only", ok,
                            f"matched cells never worsen: {matched_ok}, median mismatch/matched final loss "
                            f"{median:.3g} >= 2")


def test_criterion_9_determinism(record_criterion, tmp_path):
    mismatched = []
    for command in ("verify", "surface", "train", "ablate", "transfer", "baseline"):
        outs = [tmp_path / command / "a", tmp_path / command / "b"]
        for out in outs:
            assert main([command, "--seed", "0", "--out", str(out)]) == 0
        files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*.csv"))
        if command != "verify":
            assert files, command
        for rel in files:
            if (outs[0] / rel).read_bytes() != (outs[1] / rel).read_bytes():
                mismatched.append(f"{command}:{rel}")
    assert record_criterion(9, "repeated commands give byte-identical CSVs", not mismatched,
                            "all six commands" if not mismatched else f"differ: {mismatched}")
