"""Single-bandwidth Frechet-MOSUM detection.

The scan statistic at split ``k`` compares the Frechet variances of the left
window ``k-G+1..k`` and the right window ``k+1..k+G`` and adds a
"contaminated variance" term that reacts to a shift of the Frechet mean::

    T(k) = sqrt(G / (2 s2_k)) * (|V_R - V_L| + |V^c_R - V_R + V^c_L - V_L|)

``s2_k`` is the local estimate of the variance of the squared distance to the
mean. The profile is thresholded at an extreme-value critical value and every
long enough over-threshold run contributes its argmax as a change point.

All indices exposed by this module are 1-based.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .distrib import DistSeq, sq_distances

__all__ = [
    "DetectConfig",
    "WindowStats",
    "ScanProfile",
    "Block",
    "ChangePointSet",
    "sliding_stats",
    "scan_statistic",
    "critical_value",
    "boundary_extension",
    "cusum_boundary_statistic",
    "pick_blocks",
    "detect",
    "scalar_mosum_profile",
    "scalar_mosum_detect",
]

# Relative size of the variance floor (see scan_statistic).
VARIANCE_FLOOR = 1e-12

# Upper bound on window-rows materialised per chunk in sliding_stats.
_CHUNK_ROWS = 40_000


@dataclass(frozen=True)
class DetectConfig:
    """Tuning of one Frechet-MOSUM run.

    ``epsilon`` overrides the default rule ``min(0.5, min_block_len / G)``.
    """

    G: int
    alpha: float = 0.05
    min_block_len: float = 15
    epsilon: Optional[float] = None
    boundary_c: float = 0.1
    boundary_correction: bool = True

    def __post_init__(self):
        if int(self.G) != self.G or self.G < 1:
            raise ValueError(f"bandwidth G must be a positive integer, got {self.G}")
        object.__setattr__(self, "G", int(self.G))
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.min_block_len > 0:
            raise ValueError("min_block_len must be positive")
        if self.epsilon is not None and not 0.0 < self.epsilon <= 0.5:
            raise ValueError(f"epsilon must lie in (0, 0.5], got {self.epsilon}")
        if not 0.0 <= self.boundary_c < 0.5:
            raise ValueError(f"boundary_c must lie in [0, 0.5), got {self.boundary_c}")

    @property
    def eps(self) -> float:
        if self.epsilon is not None:
            return float(self.epsilon)
        return min(0.5, self.min_block_len / self.G)

    @property
    def min_block(self) -> float:
        """Minimum block length ``eps * G``."""
        return self.eps * self.G

    def with_bandwidth(self, G: int) -> "DetectConfig":
        return DetectConfig(
            G=G,
            alpha=self.alpha,
            min_block_len=self.min_block_len,
            epsilon=self.epsilon,
            boundary_c=self.boundary_c,
            boundary_correction=self.boundary_correction,
        )


@dataclass(frozen=True)
class WindowStats:
    """Per-split window statistics for ``k = G..n-G`` (row ``j`` is ``k = G + j``)."""

    G: int
    n: int
    mean_left: np.ndarray
    mean_right: np.ndarray
    v_left: np.ndarray
    v_right: np.ndarray
    v_left_c: np.ndarray
    v_right_c: np.ndarray
    sigma2_hat: np.ndarray
    global_variance: float

    @property
    def ks(self) -> np.ndarray:
        return np.arange(self.G, self.n - self.G + 1)


@dataclass
class ScanProfile:
    """Scan statistic over ``k = 1..n``; ``values[k - 1]`` is ``T(k)``.

    Undefined entries are NaN (only when boundary correction is off).
    """

    values: np.ndarray
    threshold: float
    G: int
    n: int
    alpha: float
    degenerate: list = field(default_factory=list)

    def at(self, k: int) -> float:
        return float(self.values[k - 1])


@dataclass(frozen=True)
class Block:
    start: int
    end: int
    peak: float


@dataclass(frozen=True)
class ChangePointSet:
    """Estimated change points with the over-threshold blocks behind them."""

    estimates: tuple = ()
    blocks: tuple = ()

    @property
    def q_hat(self) -> int:
        return len(self.estimates)

    def __iter__(self):
        return iter(self.estimates)

    def __len__(self) -> int:
        return len(self.estimates)

    @classmethod
    def from_indices(cls, indices) -> "ChangePointSet":
        """A set with no block evidence, e.g. after refinement or merging."""
        idx = tuple(sorted(int(i) for i in indices))
        if len(set(idx)) != len(idx):
            raise ValueError("change points must be distinct")
        return cls(idx, tuple(Block(i, i, float("nan")) for i in idx))


# -- window statistics -----------------------------------------------------


def _window_moments(values: np.ndarray, starts: np.ndarray, means: np.ndarray, G: int, w: np.ndarray):
    """First and second moments of d^2(F_i, mean) over windows ``starts[j]..starts[j]+G-1``."""
    windows = sliding_window_view(values, G, axis=0)  # (n-G+1, M, G)
    m1 = np.empty(starts.size)
    m2 = np.empty(starts.size)
    step = max(1, _CHUNK_ROWS // G)
    for s in range(0, starts.size, step):
        sl = slice(s, s + step)
        diff = windows[starts[sl]] - means[sl, :, None]
        d2 = np.einsum("kmg,kmg,m->kg", diff, diff, w, optimize=True)
        m1[sl] = d2.mean(axis=1)
        m2[sl] = (d2 * d2).mean(axis=1)
    return m1, m2


def sliding_stats(seq: DistSeq, G: int) -> WindowStats:
    """Left/right window Frechet means, variances and local variance estimates.

    Window means are updated recursively,
    ``mean_R(k+1) = mean_R(k) + (F_{k+G+1} - F_{k+1}) / G`` and likewise on the
    left, so the means cost ``O(n M)``. The contaminated variances follow from
    ``V^c_R = V_R + d^2(mean_R, mean_L)`` (and symmetrically), which is exact
    for the weighted L2 geometry of quantile functions.
    """
    n = seq.n
    if G < 1 or n < 2 * G:
        raise ValueError(f"need n >= 2G, got n={n}, G={G}")
    w = seq.grid.weights
    # Distances are translation invariant; anchoring at the first element
    # makes identical sequences produce exact zeros.
    Q = seq.values - seq.values[0]

    K = n - 2 * G + 1
    left0 = Q[:G].mean(axis=0)
    right0 = Q[G : 2 * G].mean(axis=0)
    mean_left = np.empty((K, Q.shape[1]))
    mean_right = np.empty((K, Q.shape[1]))
    mean_left[0] = left0
    mean_right[0] = right0
    if K > 1:
        # row j <-> k = G + j (1-based); elements are Q[k-1] in 0-based rows
        j = np.arange(K - 1)
        k = G + j
        inc_right = (Q[k + G] - Q[k]) / G
        inc_left = (Q[k] - Q[k - G]) / G
        np.cumsum(np.vstack([left0, inc_left]), axis=0, out=mean_left)
        np.cumsum(np.vstack([right0, inc_right]), axis=0, out=mean_right)

    starts_left = np.arange(K)
    starts_right = starts_left + G
    v_left, e4_left = _window_moments(Q, starts_left, mean_left, G, w)
    v_right, e4_right = _window_moments(Q, starts_right, mean_right, G, w)
    v_left = np.maximum(v_left, 0.0)
    v_right = np.maximum(v_right, 0.0)
    gap = sq_distances(mean_right, mean_left, w)
    sig_l = np.maximum(e4_left - v_left**2, 0.0)
    sig_r = np.maximum(e4_right - v_right**2, 0.0)

    global_mean = Q.mean(axis=0)
    global_var = float(sq_distances(Q, global_mean, w).mean())
    return WindowStats(
        G=G,
        n=n,
        mean_left=mean_left,
        mean_right=mean_right,
        v_left=v_left,
        v_right=v_right,
        v_left_c=v_left + gap,
        v_right_c=v_right + gap,
        sigma2_hat=(sig_l + sig_r) / 2.0,
        global_variance=global_var,
    )


def _normalise(num: np.ndarray, sigma2: np.ndarray, scale2: np.ndarray, floor: float):
    """``num / sqrt(scale2 * sigma2)`` with ``0/0 = 0`` and a variance floor."""
    num = np.asarray(num, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    low = (sigma2 < floor) & (num > 0)
    s2 = np.where(low, max(floor, np.finfo(float).tiny), sigma2)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = num / np.sqrt(scale2 * s2)
    t = np.where(num > 0, t, 0.0)
    return t, low


def _variance_floor(global_variance: float) -> float:
    return VARIANCE_FLOOR * global_variance**2


def scan_statistic(stats: WindowStats, G: Optional[int] = None, return_degenerate: bool = False):
    """Scan statistic over ``k = G..n-G``.

    Where ``sigma2_hat`` falls below ``VARIANCE_FLOOR * global_variance**2``
    while the numerator is positive, the floor is substituted and the split is
    reported as degenerate. A zero numerator always gives ``T = 0``.
    """
    G = stats.G if G is None else G
    if G != stats.G:
        raise ValueError("window statistics were computed at a different bandwidth")
    num = np.abs(stats.v_right - stats.v_left) + np.abs(
        stats.v_right_c - stats.v_right + stats.v_left_c - stats.v_left
    )
    t, low = _normalise(num, stats.sigma2_hat, 2.0 / G, _variance_floor(stats.global_variance))
    if return_degenerate:
        return t, (stats.ks[low]).tolist()
    return t


def critical_value(n: int, G: int, alpha: float) -> float:
    """Asymptotic level-``alpha`` critical value for ``max_k T(k)``.

    ``(-log log(1/sqrt(1-alpha)) + g2(n/G)) / g1(n/G)`` with
    ``g1(x) = sqrt(2 log x)`` and
    ``g2(x) = 2 log x + log log x / 2 + log 1.5 - log(pi) / 2``.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if not (G >= 1 and n > G):
        raise ValueError(f"need n > G >= 1, got n={n}, G={G}")
    x = n / G
    if x <= math.e:
        raise ValueError(f"n/G = {x:.3f} must exceed e for the critical value to exist")
    lx = math.log(x)
    g1 = math.sqrt(2.0 * lx)
    g2 = 2.0 * lx + 0.5 * math.log(lx) + math.log(1.5) - 0.5 * math.log(math.pi)
    return (-math.log(math.log(1.0 / math.sqrt(1.0 - alpha))) + g2) / g1


# -- boundary extension ----------------------------------------------------


def cusum_boundary_statistic(block: np.ndarray, splits, weights: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """CUSUM-type statistic on a block of ``2G`` quantile rows.

    For a split ``k`` (elements ``1..k`` versus ``k+1..2G`` of the block)::

        sqrt(k (2G - k) / (2G s2_k)) * (|V_L - V_R| + |V^c_L - V_L + V^c_R - V_R|)

    where every Frechet quantity uses the full left or right part. At
    ``k = G`` this is the ordinary scan statistic.
    """
    block = np.asarray(block, dtype=float)
    twoG = block.shape[0]
    out = np.empty(len(splits))
    for j, k in enumerate(splits):
        if not 1 <= k < twoG:
            raise ValueError(f"split {k} outside 1..{twoG - 1}")
        left, right = block[:k], block[k:]
        mu_l, mu_r = left.mean(axis=0), right.mean(axis=0)
        d_l = sq_distances(left, mu_l, weights)
        d_r = sq_distances(right, mu_r, weights)
        v_l, v_r = d_l.mean(), d_r.mean()
        gap = float(sq_distances(mu_r, mu_l, weights))
        s2 = (max((d_l**2).mean() - v_l**2, 0.0) + max((d_r**2).mean() - v_r**2, 0.0)) / 2.0
        num = abs(v_l - v_r) + 2.0 * gap
        t, _ = _normalise(np.array([num]), np.array([s2]), twoG / (k * (twoG - k)), floor)
        out[j] = t[0]
    return out


def _ceil(x: float) -> int:
    return int(math.ceil(x - 1e-9))


def boundary_ranges(n: int, G: int, c: float):
    """Left and right index ranges corrected by the boundary extension."""
    lo = max(1, _ceil(2.0 * c * G))
    left = list(range(lo, G))
    right = list(range(n - G + 1, min(n - _ceil(2.0 * c * G), n - 1) + 1))
    return left, right


def boundary_extension(seq: DistSeq, G: int, c: float = 0.1):
    """Boundary values for ``k`` in ``[ceil(2cG), G)`` and ``(n-G, n-ceil(2cG)]``.

    Returns ``(left_ks, left_values, right_ks, right_values)``. The right side
    mirrors the left on the last ``2G`` elements.
    """
    n = seq.n
    if n < 2 * G:
        raise ValueError(f"need n >= 2G, got n={n}, G={G}")
    if not 0.0 <= c < 0.5:
        raise ValueError("c must lie in [0, 0.5)")
    Q = seq.values - seq.values[0]
    w = seq.grid.weights
    mu = Q.mean(axis=0)
    floor = _variance_floor(float(sq_distances(Q, mu, w).mean()))
    left_ks, right_ks = boundary_ranges(n, G, c)
    left_vals = cusum_boundary_statistic(Q[: 2 * G], left_ks, w, floor)
    offset = n - 2 * G
    right_vals = cusum_boundary_statistic(Q[offset:], [k - offset for k in right_ks], w, floor)
    return np.array(left_ks, dtype=int), left_vals, np.array(right_ks, dtype=int), right_vals


# -- block picking ---------------------------------------------------------


def pick_blocks(profile: ScanProfile, epsilon: float) -> ChangePointSet:
    """Change points from maximal over-threshold runs of length ``>= eps G``.

    A run ``s..e`` is kept when ``e - s >= eps * G``; runs touching either end
    of the sequence are allowed. The estimate is the first argmax inside the
    run. NaN entries count as below threshold.
    """
    vals = np.asarray(profile.values, dtype=float)
    above = np.zeros(vals.size, dtype=bool)
    finite = np.isfinite(vals)
    above[finite] = vals[finite] >= profile.threshold
    min_len = epsilon * profile.G

    edges = np.diff(np.concatenate(([0], above.astype(np.int8), [0])))
    starts = np.nonzero(edges == 1)[0]
    ends = np.nonzero(edges == -1)[0] - 1
    estimates, blocks = [], []
    for s, e in zip(starts, ends):
        if e - s < min_len:
            continue
        k = int(s + np.argmax(vals[s : e + 1]))
        estimates.append(k + 1)
        blocks.append(Block(int(s) + 1, int(e) + 1, float(vals[k])))
    return ChangePointSet(tuple(estimates), tuple(blocks))


def _check_ratio(n: int, G: int) -> None:
    if n / G < 8:
        warnings.warn(f"n/G = {n / G:.2f} is small; the asymptotic threshold may be unreliable", stacklevel=3)


def scan_profile(seq: DistSeq, config: DetectConfig) -> ScanProfile:
    """Full scan profile (with boundary values when enabled) and threshold."""
    n, G = seq.n, config.G
    if n < 2 * G:
        raise ValueError(f"need n >= 2G, got n={n}, G={G}")
    threshold = critical_value(n, G, config.alpha)
    _check_ratio(n, G)
    stats = sliding_stats(seq, G)
    core, degenerate = scan_statistic(stats, G, return_degenerate=True)
    if config.boundary_correction:
        values = np.zeros(n)
        lk, lv, rk, rv = boundary_extension(seq, G, config.boundary_c)
        values[lk - 1] = lv
        values[rk - 1] = rv
    else:
        values = np.full(n, np.nan)
    values[G - 1 : n - G] = core
    return ScanProfile(values, threshold, G, n, config.alpha, degenerate)


def detect(seq: DistSeq, config: DetectConfig):
    """Run Frechet-MOSUM at one bandwidth; returns ``(ChangePointSet, ScanProfile)``."""
    profile = scan_profile(seq, config)
    return pick_blocks(profile, config.eps), profile


# -- scalar mean-change MOSUM ----------------------------------------------


def scalar_mosum_profile(x, G: int, alpha: float = 0.05) -> ScanProfile:
    """Moving-sum statistic for a change in the mean of a scalar series.

    ``T(k) = sqrt(G/2) |mean_R(k) - mean_L(k)| / s_k`` where ``s_k^2`` averages
    the two windows' variances. Defined on ``k = G..n-G``; NaN elsewhere.
    """
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    if G < 1 or n < 2 * G:
        raise ValueError(f"need n >= 2G, got n={n}, G={G}")
    if not np.all(np.isfinite(x)):
        raise ValueError("series contains non-finite values")
    threshold = critical_value(n, G, alpha)
    _check_ratio(n, G)
    xc = x - np.median(x)
    c1 = np.concatenate(([0.0], np.cumsum(xc)))
    c2 = np.concatenate(([0.0], np.cumsum(xc * xc)))
    k = np.arange(G, n - G + 1)
    m_l = (c1[k] - c1[k - G]) / G
    m_r = (c1[k + G] - c1[k]) / G
    var_l = np.maximum((c2[k] - c2[k - G]) / G - m_l**2, 0.0)
    var_r = np.maximum((c2[k + G] - c2[k]) / G - m_r**2, 0.0)
    num = np.abs(m_r - m_l)
    t, low = _normalise(num, (var_l + var_r) / 2.0, 2.0 / G, VARIANCE_FLOOR * float(xc.var()))
    values = np.full(n, np.nan)
    values[G - 1 : n - G] = t
    return ScanProfile(values, threshold, G, n, alpha, k[low].tolist())


def scalar_mosum_detect(
    x,
    G: int,
    alpha: float = 0.05,
    min_block_len: float = 15,
    return_profile: bool = False,
    epsilon: Optional[float] = None,
):
    """Mean-change MOSUM on a scalar series with Frechet-MOSUM block picking."""
    profile = scalar_mosum_profile(x, G, alpha)
    eps = DetectConfig(G, alpha, min_block_len, epsilon).eps
    cps = pick_blocks(profile, eps)
    if return_profile:
        return cps, profile
    return cps
