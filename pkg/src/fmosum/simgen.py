"""Synthetic distributional sequences with planted change points.

Every generator is a pure function of its parameters and seed: the random
stream is a PCG64 generator seeded with the given integer, so reruns are
bit-identical across platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .distrib import DistSeq, ProbGrid, inverse_lqd_values

__all__ = [
    "SimTruth",
    "make_rng",
    "truncnorm_quantile",
    "dgp1",
    "dgp2",
    "dgp3",
    "scaling_sequences",
    "variance_change_sequence",
    "gp_kernel",
    "sample_gp",
    "hausdorff",
    "DGP1_SEGMENTS",
    "DGP2_THETA",
]

DGP1_SEGMENTS = ((0.44, 0.005), (0.44, 0.050), (0.48, 0.050), (0.40, 0.100))
DGP1_SD = 0.02

DGP2_THETA = (0.003, 0.030, 0.001, 0.035)
DGP2_ETA = 1.99999
DGP2_RHO = 0.2

# Nonzero Fourier coefficients of the break functions in dgp3, keyed by the
# 1-based change-point number j (change point at 80 j).
DGP3_BREAK_SETS = {
    1: range(1, 4),
    2: range(4, 9),
    3: range(11, 14),
    4: range(12, 16),
    5: range(16, 19),
    6: range(21, 24),
    7: range(24, 29),
    8: range(29, 36),
    9: range(35, 41),
}
DGP3_N_BASIS = 40
DGP3_NOISE_SCALE = 0.15


@dataclass(frozen=True)
class SimTruth:
    seq: DistSeq
    true_cps: tuple
    dgp_id: str
    seed: int
    params: dict = field(default_factory=dict)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def _default_grid(grid: Optional[ProbGrid]) -> ProbGrid:
    return ProbGrid.uniform() if grid is None else grid


def _segment_bounds(n: int, q: int) -> list:
    if n % (q + 1):
        raise ValueError(f"n={n} does not split into {q + 1} equal segments")
    step = n // (q + 1)
    return [step * j for j in range(q + 2)]


def _invert_cdf(cdf, t: np.ndarray, lo: float = 0.0, hi: float = 1.0, iters: int = 60) -> np.ndarray:
    """Vectorised bisection for ``cdf(x) = t`` on ``[lo, hi]``."""
    a = np.full(t.shape, lo, dtype=float)
    b = np.full(t.shape, hi, dtype=float)
    for _ in range(iters):
        mid = 0.5 * (a + b)
        below = cdf(mid) < t
        a = np.where(below, mid, a)
        b = np.where(below, b, mid)
    x = 0.5 * (a + b)
    x = np.where(t <= 0.0, lo, x)
    return np.where(t >= 1.0, hi, x)


# -- DGP1 -------------------------------------------------------------------


def truncnorm_quantile(m, sd: float, t: np.ndarray) -> np.ndarray:
    """Quantiles of ``N(m, sd^2)`` truncated to ``[0, 1]``; rows follow ``m``."""
    m = np.asarray(m, dtype=float)[..., None]
    a, b = (0.0 - m) / sd, (1.0 - m) / sd
    q = stats.truncnorm.ppf(t, a, b, loc=m, scale=sd)
    q = np.clip(q, 0.0, 1.0)
    q[..., t <= 0.0] = 0.0
    q[..., t >= 1.0] = 1.0
    return np.maximum.accumulate(q, axis=-1)


def dgp1(seed: int, n: int = 800, grid: Optional[ProbGrid] = None, segments=DGP1_SEGMENTS) -> SimTruth:
    """Truncated normals with uniformly jittered means, three change points.

    Segment ``j`` draws each mean from ``U(c_j - D_j, c_j + D_j)``; the
    standard deviation is fixed at 0.02 and every law is truncated to [0, 1].
    Changes in ``c`` move the Frechet mean, changes in ``D`` its variance.
    """
    grid = _default_grid(grid)
    rng = make_rng(seed)
    bounds = _segment_bounds(n, len(segments) - 1)
    means = np.empty(n)
    for j, (c, d) in enumerate(segments):
        lo, hi = bounds[j], bounds[j + 1]
        means[lo:hi] = rng.uniform(c - d, c + d, size=hi - lo)
    values = truncnorm_quantile(means, DGP1_SD, grid.points)
    return SimTruth(DistSeq(grid, values), tuple(bounds[1:-1]), "dgp1", int(seed), {"n": n})


def variance_change_sequence(
    seed: int,
    n: int = 600,
    mean_cp: int = 200,
    var_cp: int = 400,
    centers=(0.44, 0.50),
    spreads=(0.01, 0.04),
    grid: Optional[ProbGrid] = None,
) -> SimTruth:
    """DGP1-style sequence with one mean change and one pure variance change.

    The mean jumps from ``centers[0]`` to ``centers[1]`` at ``mean_cp``; the
    jitter half-width jumps from ``spreads[0]`` to ``spreads[1]`` at ``var_cp``
    while the centre stays put.
    """
    grid = _default_grid(grid)
    rng = make_rng(seed)
    idx = np.arange(1, n + 1)
    c = np.where(idx <= mean_cp, centers[0], centers[1])
    d = np.where(idx <= var_cp, spreads[0], spreads[1])
    means = c + d * rng.uniform(-1.0, 1.0, size=n)
    values = truncnorm_quantile(means, DGP1_SD, grid.points)
    return SimTruth(DistSeq(grid, values), (mean_cp, var_cp), "varchange", int(seed), {"n": n})


# -- Gaussian-process errors -----------------------------------------------


def gp_kernel(points: np.ndarray, eta: float = DGP2_ETA, rho: float = DGP2_RHO) -> np.ndarray:
    """``exp(-|s - t|^eta / (2 rho^2))`` on the grid."""
    d = np.abs(points[:, None] - points[None, :])
    return np.exp(-(d**eta) / (2.0 * rho**2))


@lru_cache(maxsize=8)
def _gp_factor(points_key: bytes, eta: float, rho: float) -> np.ndarray:
    points = np.frombuffer(points_key, dtype=float)
    K = gp_kernel(points, eta, rho)
    if not np.all(np.isfinite(K)):
        raise ValueError("GP kernel matrix is not finite")
    K = K + 1e-10 * np.eye(points.size)
    lam, vec = np.linalg.eigh(K)
    return vec * np.sqrt(np.clip(lam, 0.0, None))


def sample_gp(
    points,
    scale: float,
    rng,
    eta: float = DGP2_ETA,
    rho: float = DGP2_RHO,
    size: Optional[int] = None,
) -> np.ndarray:
    """Zero-mean GP draws with covariance ``scale * kernel`` on ``points``.

    Uses the symmetric eigendecomposition of the kernel matrix with negative
    eigenvalues clipped to zero. ``rng`` may be a seed or a Generator.
    """
    points = np.ascontiguousarray(points, dtype=float)
    if points.size < 2:
        raise ValueError("GP sampling needs at least two grid points")
    if not isinstance(rng, np.random.Generator):
        rng = make_rng(rng)
    factor = _gp_factor(points.tobytes(), float(eta), float(rho))
    shape = (points.size,) if size is None else (size, points.size)
    z = rng.standard_normal(shape)
    return math.sqrt(scale) * (z @ factor.T)


# -- DGP2 -------------------------------------------------------------------


def _beta_mixture(j_a: tuple, j_b: tuple):
    """Density and CDF of ``0.9 (0.8 Beta(a1, b1) + 0.2 Beta(a2, b2)) + 0.1``."""
    b1 = stats.beta(*j_a)
    b2 = stats.beta(*j_b)

    def pdf(x):
        return 0.9 * (0.8 * b1.pdf(x) + 0.2 * b2.pdf(x)) + 0.1

    def cdf(x):
        return 0.9 * (0.8 * b1.cdf(x) + 0.2 * b2.cdf(x)) + 0.1 * x

    return pdf, cdf


def mixture_lqd(j_a: tuple, j_b: tuple, points: np.ndarray) -> np.ndarray:
    """Analytic LQD ``-log f(Q(t))`` of a Beta-mixture density on [0, 1]."""
    pdf, cdf = _beta_mixture(j_a, j_b)
    q = _invert_cdf(cdf, points)
    return -np.log(pdf(q))


def dgp2(
    seed: int,
    n: int = 800,
    grid: Optional[ProbGrid] = None,
    theta: Sequence[float] = DGP2_THETA,
    eta: float = DGP2_ETA,
    rho: float = DGP2_RHO,
) -> SimTruth:
    """LQD-space sequence with segment mean functions and GP errors.

    Segment ``j`` (1..4) has mean function ``LQD[f_j]`` with
    ``f_j = 0.9 (0.8 Beta(28, 22 + 2j) + 0.2 Beta(14, 31 + j)) + 0.1`` and
    errors from a GP whose covariance is scaled by ``theta[j - 1]``. Each
    element is mapped back to a quantile function by the inverse LQD map.
    """
    grid = _default_grid(grid)
    t = grid.points
    rng = make_rng(seed)
    bounds = _segment_bounds(n, len(theta) - 1)
    psi = np.empty((n, t.size))
    for j in range(1, len(theta) + 1):
        lo, hi = bounds[j - 1], bounds[j]
        mean_fn = mixture_lqd((28, 22 + 2 * j), (14, 31 + j), t)
        noise = sample_gp(t, theta[j - 1], rng, eta, rho, size=hi - lo)
        psi[lo:hi] = mean_fn + noise
    values = inverse_lqd_values(psi, t)
    return SimTruth(DistSeq(grid, values), tuple(bounds[1:-1]), "dgp2", int(seed), {"n": n, "theta": list(theta)})


# -- DGP3: Fourier break functions -----------------------------------------


def fourier_basis(points: np.ndarray, size: int = DGP3_N_BASIS) -> np.ndarray:
    """Rows ``1, sqrt2 sin(2 pi t), sqrt2 cos(2 pi t), sqrt2 sin(4 pi t), ...``."""
    basis = np.empty((size, points.size))
    basis[0] = 1.0
    for l in range(2, size + 1):
        freq = l // 2
        fn = np.sin if l % 2 == 0 else np.cos
        basis[l - 1] = math.sqrt(2.0) * fn(2.0 * math.pi * freq * points)
    return basis


def dgp3(seed: int, n: int = 800, grid: Optional[ProbGrid] = None) -> SimTruth:
    """Nine equally spaced mean breaks in a few Fourier directions each.

    The LQD baseline is that of ``0.9 (0.8 Beta(28, 24) + 0.2 Beta(14, 32)) +
    0.1``. Segment ``j`` (after change point ``j``) adds
    ``exp(-j/2) / sqrt(|S_j|) * sum_{l in S_j} basis_l``. Errors are
    ``0.15 sum_l w_l basis_l`` with ``w_l ~ N(0, 20^-l)`` independently.
    """
    grid = _default_grid(grid)
    t = grid.points
    rng = make_rng(seed)
    q = len(DGP3_BREAK_SETS)
    bounds = _segment_bounds(n, q)
    basis = fourier_basis(t)
    base = mixture_lqd((28, 24), (14, 32), t)
    psi = np.tile(base, (n, 1))
    for j, ls in DGP3_BREAK_SETS.items():
        ls = list(ls)
        brk = math.exp(-j / 2.0) / math.sqrt(len(ls)) * basis[[l - 1 for l in ls]].sum(axis=0)
        psi[bounds[j] : bounds[j + 1]] += brk
    sd = 20.0 ** (-np.arange(1, DGP3_N_BASIS + 1) / 2.0)
    coef = rng.standard_normal((n, DGP3_N_BASIS)) * sd
    psi += DGP3_NOISE_SCALE * coef @ basis
    values = inverse_lqd_values(psi, t)
    return SimTruth(DistSeq(grid, values), tuple(bounds[1:-1]), "dgp3", int(seed), {"n": n})


# -- scaling sequences -------------------------------------------------------


def scaling_sequences(n_dup: int, lengths: Sequence[int], seed: int, grid: Optional[ProbGrid] = None) -> list:
    """Prefixes of a duplicated 500-element Beta baseline.

    The baseline holds ``Beta(a_i, 32)`` laws with ``a_i ~ U(13, 17)`` for the
    first 250 and ``U(16, 20)`` for the last 250 elements. It is repeated
    ``n_dup`` times and one prefix per requested length is returned. True
    change points sit at the multiples of 250 strictly inside each prefix.
    """
    grid = _default_grid(grid)
    total = 500 * n_dup
    lengths = [int(L) for L in lengths]
    if any(L < 1 or L > total for L in lengths):
        raise ValueError(f"requested lengths must lie in 1..{total}")
    rng = make_rng(seed)
    a = np.concatenate([rng.uniform(13, 17, 250), rng.uniform(16, 20, 250)])
    base = stats.beta.ppf(grid.points[None, :], a[:, None], 32)
    base = np.maximum.accumulate(base, axis=1)
    full = np.tile(base, (n_dup, 1))
    out = []
    for L in lengths:
        cps = tuple(range(250, L, 250))
        out.append(SimTruth(DistSeq(grid, full[:L]), cps, "scaling", int(seed), {"n_dup": n_dup, "n": L}))
    return out


# -- scoring ------------------------------------------------------------------


def hausdorff(truth, est) -> float:
    """Hausdorff distance between true and estimated change-point sets.

    An empty estimate scores ``max |k|`` over the true set.
    """
    truth = np.asarray(sorted(truth), dtype=float)
    est = np.asarray(sorted(est), dtype=float)
    if truth.size == 0:
        raise ValueError("the true change-point set must be non-empty")
    if est.size == 0:
        return float(np.max(np.abs(truth)))
    d = np.abs(truth[:, None] - est[None, :])
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))
