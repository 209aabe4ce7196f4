"""Multiscale Frechet-MOSUM over a grid of bandwidths.

Single-bandwidth detections are stacked into a change-point indicator (CPI)
matrix, marks that track one underlying change across bandwidths are grouped
into trajectories, each stable trajectory is collapsed to one index, and the
per-batch results are merged.

Indices are 1-based throughout; a point is an ``(index, bandwidth)`` pair.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .distrib import DistSeq
from .mosum import ChangePointSet, DetectConfig, detect

__all__ = [
    "BandMode",
    "CpiMatrix",
    "Trajectory",
    "MultiscaleConfig",
    "build_cpi",
    "select_seeds",
    "band_search",
    "intersection_point",
    "prune_trajectory",
    "coarse_search",
    "refine_trajectories",
    "identify_trajectories",
    "aggregate_trajectory",
    "merge_batches",
    "multiscale_detect",
]

FREE = -1


class BandMode(enum.Enum):
    FULL = "full"
    UPPER_HALF = "upper_half"


@dataclass
class CpiMatrix:
    """Bandwidth-by-index detection marks with an owner per mark.

    ``owner[l, i - 1]`` is the id of the trajectory holding mark ``(i, G_l)``,
    or ``FREE``. Unmarked cells are always ``FREE``.
    """

    g_grid: tuple
    marks: np.ndarray
    owner: np.ndarray = None

    def __post_init__(self):
        self.g_grid = tuple(int(g) for g in self.g_grid)
        if len(self.g_grid) < 2 or any(b <= a for a, b in zip(self.g_grid, self.g_grid[1:])):
            raise ValueError("g_grid must be strictly increasing with at least two entries")
        self.marks = np.asarray(self.marks, dtype=bool)
        if self.marks.ndim != 2 or self.marks.shape[0] != len(self.g_grid):
            raise ValueError("marks must have one row per bandwidth")
        if self.owner is None:
            self.owner = np.full(self.marks.shape, FREE, dtype=np.int64)
        self._row = {g: l for l, g in enumerate(self.g_grid)}

    @classmethod
    def from_estimates(cls, g_grid: Sequence[int], n: int, estimates: Sequence[Sequence[int]]) -> "CpiMatrix":
        marks = np.zeros((len(g_grid), n), dtype=bool)
        for l, est in enumerate(estimates):
            for i in est:
                marks[l, int(i) - 1] = True
        return cls(tuple(g_grid), marks)

    @property
    def n(self) -> int:
        return self.marks.shape[1]

    def row(self, G: int) -> int:
        return self._row[int(G)]

    def is_free(self, point) -> bool:
        i, G = point
        l = self.row(G)
        return bool(self.marks[l, i - 1]) and self.owner[l, i - 1] == FREE

    def free_mask(self) -> np.ndarray:
        return self.marks & (self.owner == FREE)

    def free_count(self) -> int:
        return int(self.free_mask().sum())

    def all_marks(self) -> list:
        ls, cols = np.nonzero(self.marks)
        return [(int(c) + 1, self.g_grid[l]) for l, c in zip(ls, cols)]

    def freeze(self, points, tid: int) -> None:
        for i, G in points:
            self.owner[self.row(G), i - 1] = tid

    def release(self, points) -> None:
        for i, G in points:
            self.owner[self.row(G), i - 1] = FREE


@dataclass
class Trajectory:
    points: set
    batch: int
    tid: int = 0

    def __len__(self) -> int:
        return len(self.points)

    def sorted_points(self) -> list:
        return sorted(self.points, key=lambda p: (p[1], p[0]))

    def bandwidths(self) -> list:
        return sorted(G for _, G in self.points)


@dataclass(frozen=True)
class MultiscaleConfig:
    """Settings of the multiscale pipeline.

    ``template`` supplies everything but the bandwidth for each run. The half
    band around a reference point at bandwidth ``G`` is ``eps(G) * G``, which
    is the constant ``min_block_len`` under the default ``eps`` rule.
    ``merge_radius=None`` uses the same quantity at the smallest bandwidth of
    the candidate's trajectory.
    """

    g_grid: tuple
    template: DetectConfig = field(default_factory=lambda: DetectConfig(G=1))
    seed_interval: tuple = (10.0, 50.0)
    min_traj_len: int = 4
    merge_radius: Optional[float] = None
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        g = tuple(int(x) for x in self.g_grid)
        if len(g) < 2 or any(b <= a for a, b in zip(g, g[1:])):
            raise ValueError("g_grid must be strictly increasing with at least two entries")
        object.__setattr__(self, "g_grid", g)
        lo, hi = self.seed_interval
        if not 0.0 <= lo <= hi <= 100.0:
            raise ValueError("seed_interval must be a percentile pair 0 <= lo <= hi <= 100")
        if self.min_traj_len < 1:
            raise ValueError("min_traj_len must be positive")
        if self.workers < 1:
            raise ValueError("workers must be positive")

    def detect_config(self, G: int) -> DetectConfig:
        return self.template.with_bandwidth(G)

    def half_band(self, G: int) -> float:
        return self.detect_config(G).min_block

    def neighbor_delta(self, G: int) -> int:
        return math.ceil(self.half_band(G) / 2.0 - 1e-9)

    def seed_bounds(self) -> tuple:
        lo, hi = self.seed_interval
        return tuple(float(v) for v in np.percentile(self.g_grid, [lo, hi]))

    def radius_for(self, traj: Trajectory) -> float:
        if self.merge_radius is not None:
            return float(self.merge_radius)
        return self.half_band(min(traj.bandwidths()))


# -- CPI construction ------------------------------------------------------


def build_cpi(seq: DistSeq, config: MultiscaleConfig) -> CpiMatrix:
    """Run one detection per bandwidth and stack the estimates."""
    if seq.n < 2 * max(config.g_grid):
        raise ValueError(f"n={seq.n} is shorter than twice the largest bandwidth {max(config.g_grid)}")

    def run(G):
        cps, _ = detect(seq, config.detect_config(G))
        return cps.estimates

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            estimates = list(pool.map(run, config.g_grid))
    else:
        estimates = [run(G) for G in config.g_grid]
    return CpiMatrix.from_estimates(config.g_grid, seq.n, estimates)


# -- basic trajectory operations --------------------------------------------


def select_seeds(cpi: CpiMatrix, g_interval) -> list:
    """Free marks of the lowest bandwidth row with the most free marks.

    Only rows whose bandwidth lies in ``g_interval`` compete. An empty list
    means that no row in the interval holds a free mark.
    """
    lo, hi = g_interval
    omega = cpi.free_mask().sum(axis=1)
    inside = np.array([lo <= G <= hi for G in cpi.g_grid])
    score = omega * inside
    if score.max(initial=0) == 0:
        return []
    l = int(np.argmax(score))
    G = cpi.g_grid[l]
    return [(int(c) + 1, G) for c in np.flatnonzero(cpi.free_mask()[l])]


def band_search(cpi: CpiMatrix, ref, half_band: float, mode: BandMode, tid: int) -> list:
    """Freeze every free mark within ``half_band`` of ``ref``'s index.

    ``FULL`` scans all bandwidths, ``UPPER_HALF`` only those at or above the
    reference bandwidth. Returns the newly frozen points.
    """
    i, G = ref
    lo = max(1, math.ceil(i - half_band - 1e-9))
    hi = min(cpi.n, math.floor(i + half_band + 1e-9))
    if lo > hi:
        return []
    first = cpi.row(G) if mode is BandMode.UPPER_HALF else 0
    free = cpi.free_mask()[first:, lo - 1 : hi]
    ls, cols = np.nonzero(free)
    found = [(lo + int(c), cpi.g_grid[first + int(l)]) for l, c in zip(ls, cols)]
    cpi.freeze(found, tid)
    return found


def intersection_point(points, g_target: float) -> float:
    """Locally weighted index of a trajectory at bandwidth ``g_target``.

    Points whose bandwidth is among the ``p*`` closest to ``g_target`` get
    triangular weights ``1 - d / theta``; if every such weight vanishes the
    points at distance ``theta`` share uniform weight.
    """
    pts = list(points)
    if not pts:
        raise ValueError("intersection point of an empty trajectory")
    idx = np.array([p[0] for p in pts], dtype=float)
    d = np.abs(np.array([p[1] for p in pts], dtype=float) - g_target)
    m = len(pts)
    p_star = max(math.ceil(0.5 * m), min(4, m))
    theta = np.sort(d)[p_star - 1]
    if theta == 0.0:
        w = (d == 0.0).astype(float)
    else:
        w = np.where(d <= theta, 1.0 - d / theta, 0.0)
        if w.sum() == 0.0:
            w = (d == theta).astype(float)
    return float(idx @ w / w.sum())


def prune_trajectory(traj: Trajectory, cpi: CpiMatrix, rng: np.random.Generator) -> Trajectory:
    """Keep at most one point per bandwidth by elimination and reinsertion.

    Bandwidths holding several points are visited in ascending order; the
    point closest to the current trajectory's intersection with that
    bandwidth is put back and the others are freed in ``cpi``. Ties are
    broken with ``rng``.
    """
    groups: dict = {}
    for p in traj.points:
        groups.setdefault(p[1], []).append(p)
    dups = sorted(G for G, ps in groups.items() if len(ps) > 1)
    if not dups:
        return traj
    remaining = [ps[0] for G, ps in groups.items() if len(ps) == 1]
    fallback = float(np.mean([p[0] for p in traj.points]))
    released = []
    for G in dups:
        pts = sorted(groups[G])
        ref = intersection_point(remaining, G) if remaining else fallback
        dist = np.array([abs(p[0] - ref) for p in pts])
        ties = np.flatnonzero(dist <= dist.min() + 1e-9)
        pick = int(ties[rng.integers(ties.size)]) if ties.size > 1 else int(ties[0])
        remaining.append(pts[pick])
        released.extend(p for k, p in enumerate(pts) if k != pick)
    cpi.release(released)
    traj.points = set(remaining)
    return traj


def coarse_search(
    cpi: CpiMatrix,
    seeds,
    config: MultiscaleConfig,
    rng: np.random.Generator,
    batch: int = 1,
    first_id: int = 0,
) -> list:
    """Grow one trajectory per seed: full band first, then upward steps.

    Seeds are taken in ascending index order; a seed swallowed by an earlier
    seed's trajectory is skipped. The upward loop stops once a step finds no
    free mark or revisits a trajectory state.
    """
    trajs = []
    for seed in sorted(seeds):
        if not cpi.is_free(seed):
            continue
        tid = first_id + len(trajs)
        traj = Trajectory(set(), batch, tid)
        traj.points |= set(band_search(cpi, seed, config.half_band(seed[1]), BandMode.FULL, tid))
        prune_trajectory(traj, cpi, rng)
        seen = {frozenset(traj.points)}
        while True:
            top = max(traj.points, key=lambda p: (p[1], p[0]))
            found = band_search(cpi, top, config.half_band(top[1]), BandMode.UPPER_HALF, tid)
            if not found:
                break
            traj.points |= set(found)
            prune_trajectory(traj, cpi, rng)
            state = frozenset(traj.points)
            if state in seen:
                break
            seen.add(state)
        trajs.append(traj)
    return trajs


def refine_trajectories(trajs, cpi: CpiMatrix, config: MultiscaleConfig, rng: np.random.Generator) -> list:
    """Absorb free marks just above and beside each trajectory's points.

    Every point, including those picked up during the pass, serves once as
    the reference of an upward search with half band ``ceil(half_band / 2)``;
    the trajectory is then pruned.
    """
    for traj in trajs:
        queue = traj.sorted_points()
        k = 0
        while k < len(queue):
            ref = queue[k]
            found = band_search(cpi, ref, config.neighbor_delta(ref[1]), BandMode.UPPER_HALF, traj.tid)
            traj.points |= set(found)
            queue.extend(sorted(found, key=lambda p: (p[1], p[0])))
            k += 1
        prune_trajectory(traj, cpi, rng)
    return trajs


def identify_trajectories(cpi: CpiMatrix, config: MultiscaleConfig, rng: Optional[np.random.Generator] = None) -> list:
    """Batches of trajectories until no free mark is left.

    The first batch seeds from the configured percentile interval of the
    bandwidth grid (the full grid if that interval holds no free mark); later
    batches seed from the full grid.
    """
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(config.seed))
    full = (min(cpi.g_grid), max(cpi.g_grid))
    batches = []
    next_id = 0
    while cpi.free_count() > 0:
        p = len(batches) + 1
        seeds = select_seeds(cpi, config.seed_bounds() if p == 1 else full)
        if not seeds:
            seeds = select_seeds(cpi, full)
        trajs = coarse_search(cpi, seeds, config, rng, batch=p, first_id=next_id)
        next_id += len(trajs)
        refine_trajectories(trajs, cpi, config, rng)
        batches.append(trajs)
    return batches


# -- aggregation and merging -------------------------------------------------


def _round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def aggregate_trajectory(traj: Trajectory, min_len: int = 4) -> Optional[int]:
    """Median index over the lower part of a stable trajectory.

    Trajectories shorter than ``min_len`` return ``None``. Otherwise only
    points at bandwidths up to the ``max(ceil(m/2), 4)``-th smallest are kept.
    """
    m = len(traj.points)
    if m < min_len:
        return None
    pts = sorted(traj.points, key=lambda p: (p[1], p[0]))
    p_hash = max(math.ceil(0.5 * m), 4)
    theta = pts[min(p_hash, m) - 1][1]
    kept = [i for i, G in pts if G <= theta]
    return _round_half_away(float(np.median(kept)))


def merge_batches(batches, radius=15.0) -> list:
    """Fuse per-batch aggregated indices into one sorted list.

    Batch one is taken whole; a later candidate joins only if it lies more
    than its radius from everything merged so far. ``radius`` is a scalar or
    nested like ``batches``. ``None`` entries are ignored.
    """
    if not batches:
        return []
    radii = radius if not np.isscalar(radius) else [[radius] * len(b) for b in batches]
    merged = sorted({int(i) for i in batches[0] if i is not None})
    for b, rs in zip(batches[1:], radii[1:]):
        cands = sorted((int(i), float(r)) for i, r in zip(b, rs) if i is not None)
        for i, r in cands:
            dist = min((abs(i - j) for j in merged), default=math.inf)
            if dist > r:
                merged.append(i)
        merged.sort()
    return merged


def multiscale_detect(seq: DistSeq, config: MultiscaleConfig):
    """Full pipeline; returns ``(ChangePointSet, CpiMatrix, trajectories)``."""
    cpi = build_cpi(seq, config)
    batches = identify_trajectories(cpi, config)
    aggs = [[aggregate_trajectory(t, config.min_traj_len) for t in b] for b in batches]
    radii = [[config.radius_for(t) for t in b] for b in batches]
    merged = merge_batches(aggs, radii)
    trajs = [t for b in batches for t in b]
    return ChangePointSet.from_indices(merged), cpi, trajs
