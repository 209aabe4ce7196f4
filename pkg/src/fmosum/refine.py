"""Post-detection tools: LSD refinement, CPT-plot data and index registration."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .distrib import DistSeq, QuantileFunction, sq_distances
from .mosum import Block, ChangePointSet, DetectConfig, detect, scalar_mosum_detect

__all__ = [
    "LsdSequence",
    "lsd_sequence",
    "lsd_refine",
    "CptData",
    "cpt_plot_data",
    "RegisteredCps",
    "register_indices",
]

STABLE_MIN_COUNT = 3


def _as_indices(cps) -> tuple:
    if isinstance(cps, ChangePointSet):
        return cps.estimates
    return tuple(sorted(int(i) for i in cps))


@dataclass(frozen=True)
class LsdSequence:
    """Squared distances of each element to the Frechet mean of its segment."""

    values: np.ndarray
    segment_means: tuple
    cps_used: ChangePointSet


def lsd_sequence(seq: DistSeq, cps) -> LsdSequence:
    """Local squared deviations given a segmentation.

    Segments are ``(k_j, k_{j+1}]`` for the sorted change points ``k_j``.
    """
    idx = _as_indices(cps)
    if any(not 0 < k < seq.n for k in idx) or len(set(idx)) != len(idx):
        raise ValueError(f"change points must be distinct and lie strictly inside (0, {seq.n})")
    bounds = (0,) + idx + (seq.n,)
    w = seq.grid.weights
    values = np.empty(seq.n)
    means = []
    for lo, hi in zip(bounds, bounds[1:]):
        block = seq.values[lo:hi]
        # centring on the first row keeps identical segments exactly zero
        mu = block[0] + (block - block[0]).mean(axis=0)
        values[lo:hi] = sq_distances(block, mu, w)
        means.append(QuantileFunction(seq.grid, mu))
    return LsdSequence(values, tuple(means), ChangePointSet.from_indices(idx))


def lsd_refine(
    seq: DistSeq,
    cps,
    G: int,
    alpha: float = 0.05,
    min_block_len: float = 15,
    epsilon: Optional[float] = None,
) -> ChangePointSet:
    """Add change points found by a scalar mean-change scan of the LSD series.

    A detection is appended when it lies more than ``eps * G`` from every
    point already in the set; detections are visited in ascending order.
    Existing points keep their blocks, added points carry the LSD-scan block.
    """
    idx = _as_indices(cps)
    lsd = lsd_sequence(seq, idx)
    radius = DetectConfig(G, alpha, min_block_len, epsilon).min_block
    found = scalar_mosum_detect(lsd.values, G, alpha, min_block_len, epsilon=epsilon)
    blocks = dict(zip(cps.estimates, cps.blocks)) if isinstance(cps, ChangePointSet) else {}
    current = list(idx)
    for k, b in sorted(zip(found.estimates, found.blocks)):
        if min((abs(k - j) for j in current), default=math.inf) > radius:
            current.append(k)
            blocks[k] = b
    current.sort()
    return ChangePointSet(tuple(current), tuple(blocks.get(k, Block(k, k, math.nan)) for k in current))


@dataclass(frozen=True)
class CptData:
    """Detections per bandwidth and how often each index recurs.

    ``rows`` holds ``(G, index)`` pairs; ``counts`` maps every detected index
    to the number of bandwidths with an estimate within ``eps G`` of it.
    """

    rows: tuple
    counts: dict

    @property
    def stable(self) -> tuple:
        return tuple(sorted(i for i, c in self.counts.items() if c > STABLE_MIN_COUNT))

    def is_stable(self, index: int) -> bool:
        return self.counts.get(int(index), 0) > STABLE_MIN_COUNT


def cpt_plot_data(seq: DistSeq, g_grid: Sequence[int], config: DetectConfig) -> CptData:
    """Run detect at each bandwidth and tabulate stability counts."""
    g_grid = [int(G) for G in g_grid]
    if not g_grid:
        raise ValueError("g_grid must be non-empty")
    if seq.n < 2 * max(g_grid):
        raise ValueError(f"n={seq.n} is shorter than twice the largest bandwidth {max(g_grid)}")
    per_g = []
    rows = []
    for G in g_grid:
        cfg = config.with_bandwidth(G)
        cps, _ = detect(seq, cfg)
        per_g.append((cfg.min_block, np.asarray(cps.estimates)))
        rows.extend((G, k) for k in cps.estimates)
    counts = {}
    for _, k in rows:
        if k not in counts:
            counts[k] = sum(bool(est.size) and bool(np.any(np.abs(est - k) <= r)) for r, est in per_g)
    return CptData(tuple(rows), counts)


@dataclass(frozen=True)
class RegisteredCps:
    """Change points of several sequences mapped onto the union time grid.

    ``registered[s]`` are 1-based positions in ``union_labels``.
    """

    union_labels: np.ndarray
    original: tuple
    registered: tuple
    labels: tuple

    def records(self):
        """``(sequence_id, original_index, registered_index, time_label)`` rows."""
        for s, (orig, reg, lab) in enumerate(zip(self.original, self.registered, self.labels)):
            for o, r, t in zip(orig, reg, lab):
                yield s, o, r, t


def register_indices(sequences: Sequence[DistSeq], cps_list) -> RegisteredCps:
    """Map each sequence's change points onto the sorted union of time labels."""
    if len(sequences) != len(cps_list):
        raise ValueError("need one change-point set per sequence")
    for s, seq in enumerate(sequences):
        if seq.time_labels is None:
            raise ValueError(f"sequence {s} has no time labels")
    union = np.unique(np.concatenate([np.asarray(seq.time_labels) for seq in sequences]))
    original, registered, labels = [], [], []
    for seq, cps in zip(sequences, cps_list):
        idx = _as_indices(cps)
        if any(not 1 <= k <= seq.n for k in idx):
            raise ValueError(f"change point outside 1..{seq.n}")
        lab = np.asarray(seq.time_labels)[np.asarray(idx, dtype=int) - 1] if idx else np.asarray([])
        pos = np.searchsorted(union, lab)
        assert np.all(union[pos] == lab), "label missing from union grid"
        original.append(idx)
        registered.append(tuple(int(p) + 1 for p in pos))
        labels.append(tuple(lab.tolist()))
    return RegisteredCps(union, tuple(original), tuple(registered), tuple(labels))
