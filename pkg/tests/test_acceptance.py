"""End-to-end acceptance checks, one test per criterion.

Run with ``pytest tests/test_acceptance.py -v``; a PASS/FAIL line per
criterion is printed in the terminal summary. All are marked ``slow``.
"""

import numpy as np
import pytest
from scipy import stats

from fmosum.cli import run_bench
from fmosum.distrib import ProbGrid, QuantileFunction, inverse_lqd, lqd_transform, wasserstein_distance
from fmosum.mosum import DetectConfig, cusum_boundary_statistic, detect, scan_statistic, sliding_stats
from fmosum.multiscale import MultiscaleConfig, multiscale_detect
from fmosum.refine import lsd_refine
from fmosum.simgen import (
    DGP1_SEGMENTS,
    _invert_cdf,
    dgp1,
    dgp2,
    dgp3,
    hausdorff,
    variance_change_sequence,
)

from conftest import random_seq

pytestmark = pytest.mark.slow


def recovery(gen, reps, config, q):
    q_hat, dist = [], []
    for seed in range(reps):
        tr = gen(seed)
        cps, _ = detect(tr.seq, config)
        q_hat.append(cps.q_hat)
        dist.append(hausdorff(tr.true_cps, cps.estimates))
    return np.mean(np.array(q_hat) == q), float(np.median(dist)), np.array(q_hat), np.array(dist)


def test_01_dgp1_recovery(acceptance_report):
    rate, med, _, _ = recovery(dgp1, 100, DetectConfig(80, 0.05, epsilon=0.2), 3)
    ok = rate >= 0.85 and med <= 40
    acceptance_report("1 DGP1 recovery", ok, f"q_hat=3 in {rate:.0%} (>=85%), median Hausdorff {med:g} (<=40)")
    assert ok


def test_02_dgp2_recovery(acceptance_report):
    rate, med, _, _ = recovery(dgp2, 100, DetectConfig(80, 0.05, epsilon=0.2), 3)
    ok = rate >= 0.75 and med <= 60
    acceptance_report("2 DGP2 recovery", ok, f"q_hat=3 in {rate:.0%} (>=75%), median Hausdorff {med:g} (<=60)")
    assert ok


def test_03_null_size(acceptance_report):
    config = DetectConfig(80, 0.05, epsilon=0.2)
    null_segments = (DGP1_SEGMENTS[0],) * 4
    rejections = sum(detect(dgp1(10_000 + s, segments=null_segments).seq, config)[0].q_hat > 0 for s in range(500))
    rate = rejections / 500
    ok = 0.01 <= rate <= 0.12
    acceptance_report("3 H0 size", ok, f"rejection rate {rate:.3f} over 500 replicates (in [0.01, 0.12])")
    assert ok


def test_04_linear_runtime(acceptance_report):
    rows = run_bench(list(range(2000, 20001, 2000)), seed=0, detect_config=DetectConfig(80))
    n, sec = np.array(rows, dtype=float).T
    r2 = stats.linregress(n, sec).rvalue ** 2
    ok = r2 >= 0.95 and sec[-1] <= 20.0
    acceptance_report("4 linear runtime", ok, f"R^2 {r2:.4f} (>=0.95), n=20000 in {sec[-1]:.2f}s (<=20s)")
    assert ok


def test_05_recursive_means(acceptance_report):
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(20, 201))
        G = int(rng.integers(1, n // 2 + 1))
        seq = random_seq(rng, n)
        s = sliding_stats(seq, G)
        Q = seq.values - seq.values[0]
        for j, k in enumerate(s.ks):
            worst = max(
                worst,
                np.max(np.abs(s.mean_left[j] - Q[k - G : k].mean(axis=0))),
                np.max(np.abs(s.mean_right[j] - Q[k : k + G].mean(axis=0))),
            )
    ok = worst <= 1e-10
    acceptance_report("5 recursive means", ok, f"max deviation {worst:.2e} over 50 sequences (<=1e-10)")
    assert ok


def test_06_boundary_continuity(acceptance_report):
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(20):
        n, G = int(rng.integers(60, 200)), int(rng.integers(5, 25))
        seq = random_seq(rng, n)
        t = scan_statistic(sliding_stats(seq, G))
        Q = seq.values - seq.values[0]
        w = seq.grid.weights
        left = cusum_boundary_statistic(Q[: 2 * G], [G], w)[0]
        right = cusum_boundary_statistic(Q[n - 2 * G :], [G], w)[0]
        worst = max(worst, abs(left - t[0]), abs(right - t[-1]))
    ok = worst <= 1e-10
    acceptance_report("6 boundary continuity", ok, f"max |T_Left(G) - T(G)| {worst:.2e} over 20 sequences (<=1e-10)")
    assert ok


def test_07_multiscale(acceptance_report):
    config = MultiscaleConfig(tuple(range(30, 81, 2)))
    hits = 0
    for seed in range(50):
        tr = dgp1(seed)
        cps, _, _ = multiscale_detect(tr.seq, config)
        est = cps.estimates
        if len(est) == 3 and all(abs(k - t) <= 30 for k, t in zip(est, tr.true_cps)):
            hits += 1
    rate = hits / 50
    ok = rate >= 0.80
    acceptance_report("7 multiscale", ok, f"3 cps each within 30 in {rate:.0%} of 50 (>=80%)")
    assert ok


def test_08_lsd_refinement(acceptance_report):
    G = 40
    hits = 0
    for seed in range(20):
        tr = variance_change_sequence(seed)
        out = lsd_refine(tr.seq, [tr.true_cps[0]], G=G)
        added = [k for k in out.estimates if k != tr.true_cps[0]]
        hits += any(abs(k - tr.true_cps[1]) <= G for k in added)
    ok = hits / 20 >= 0.80
    acceptance_report("8 LSD refinement", ok, f"variance change recovered in {hits}/20 (>=80%)")
    assert ok


def _hausdorff_brute(a, b):
    if not b:
        return float(max(abs(x) for x in a))
    return float(max(max(min(abs(x - y) for y in b) for x in a), max(min(abs(x - y) for x in a) for y in b)))


def test_09_property_suites(acceptance_report):
    rng = np.random.default_rng(9)
    grid = ProbGrid.uniform()

    sym_ok, tri_worst = True, 0.0
    for _ in range(1000):
        a, b, c = (QuantileFunction(grid, np.sort(rng.normal(size=grid.size)) * rng.uniform(0.1, 5)) for _ in range(3))
        sym_ok &= wasserstein_distance(a, b) == wasserstein_distance(b, a)
        gap = wasserstein_distance(a, c) - wasserstein_distance(a, b) - wasserstein_distance(b, c)
        tri_worst = max(tri_worst, gap)
    metric_ok = sym_ok and tri_worst <= 1e-12

    lqd_worst = 0.0
    for _ in range(20):
        a, b = rng.integers(2, 7, size=2)
        w = rng.uniform(0.2, 0.5)
        q = _invert_cdf(lambda x: (1 - w) * stats.beta.cdf(x, a, b) + w * x, grid.points)
        back = inverse_lqd(lqd_transform(QuantileFunction(grid, q))).values
        lqd_worst = max(lqd_worst, np.max(np.abs(back - (q - q[0]) / (q[-1] - q[0]))))
    lqd_ok = lqd_worst <= 1e-4

    haus_ok = True
    for _ in range(200):
        truth = sorted(set(rng.integers(1, 1000, size=rng.integers(1, 9)).tolist()))
        est = sorted(set(rng.integers(1, 1000, size=rng.integers(0, 9)).tolist()))
        haus_ok &= hausdorff(truth, est) == _hausdorff_brute(truth, est)

    ok = bool(metric_ok and lqd_ok and haus_ok)
    acceptance_report(
        "9 property suites",
        ok,
        f"metric symmetry exact={sym_ok}, triangle slack {tri_worst:.1e} (<=1e-12); "
        f"LQD round trip {lqd_worst:.1e} (<=1e-4); Hausdorff oracle exact={haus_ok}",
    )
    assert ok


def test_10_dgp3_information_loss(acceptance_report):
    config = DetectConfig(30, 0.05, epsilon=0.4, boundary_correction=False)
    _, _, q_hat, dist = recovery(dgp3, 20, config, 9)
    n_q, n_h = int(np.sum(q_hat == 9)), int(np.sum(dist <= 15))
    ok = n_q >= 18 and n_h >= 15
    acceptance_report("10 dgp3 fixture", ok, f"q_hat=9 in {n_q}/20 (>=18), Hausdorff<=15 in {n_h}/20 (>=15)")
    assert ok
