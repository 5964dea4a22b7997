"""Recursive dyadic partition fits and the cycle-spun (shift-averaged) variant.

An RDP of a 2^p x 2^p image is a quadtree whose leaves tile the image with
axis-aligned dyadic squares.  ``rdp_fit`` minimizes

    0.5 ||s - f(P)||^2 + kappa |P|

over partitions P and nonnegative constant leaf fits f(P) (each leaf carries
max(mean of s over the leaf, 0)).  The optimum is found exactly by a
bottom-up dynamic program over the quadtree; cost ties are broken toward the
merged (coarser) cell.  ``rdp_ti_fit`` averages fits over a set of cyclic
shifts, trading the piecewise-constant structure for translation invariance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["RdpCell", "rdp_fit", "rdp_ti_fit", "RdpTiInfo", "partition_to_csv"]


@dataclass(frozen=True)
class RdpCell:
    """One leaf of the partition: top-left corner (row, col), side, fitted value."""

    row: int
    col: int
    side: int
    fit: float


def _check_side(s: np.ndarray) -> int:
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"square 2-D input required, got shape {s.shape}")
    side = s.shape[0]
    if side < 1 or side & (side - 1):
        raise ValueError(f"side {side} is not a power of two")
    return side


def _block4(a: np.ndarray) -> np.ndarray:
    """Sum each nonoverlapping 2x2 block of the trailing two axes."""
    b, r, c = a.shape
    return a.reshape(b, r // 2, 2, c // 2, 2).sum(axis=(2, 4))


def _batch_rdp(stack: np.ndarray, kappa: float):
    """DP over a batch of images stacked on axis 0.

    Returns (fitted stack, leaf count per image, list of per-level resolve
    masks and fit tables for partition extraction).
    """
    bsz, side, _ = stack.shape
    levels = int(np.log2(side))
    sums = stack.copy()
    sumsq = stack * stack
    fit = np.maximum(sums, 0.0)
    # leaf cost: 0.5 (s - fit)^2 + kappa, via the moment form
    opt = 0.5 * (sumsq - 2.0 * fit * sums + fit * fit) + kappa
    fits = [fit]
    merge = [np.ones_like(opt, dtype=bool)]
    for lv in range(1, levels + 1):
        split = _block4(opt)
        sums = _block4(sums)
        sumsq = _block4(sumsq)
        count = float(4**lv)
        fit = np.maximum(sums / count, 0.0)
        merged = 0.5 * (sumsq - 2.0 * fit * sums + count * fit * fit) + kappa
        merge.append(merged <= split)
        opt = np.where(merge[-1], merged, split)
        fits.append(fit)
    # top-down: a cell is resolved at the highest level where its subtree merges
    fitted = np.zeros_like(stack)
    counts = np.zeros(bsz, dtype=np.int64)
    open_mask = np.ones((bsz, 1, 1), dtype=bool)
    resolves = []
    for lv in range(levels, -1, -1):
        resolve = open_mask & merge[lv]
        resolves.append(resolve)
        counts += resolve.reshape(bsz, -1).sum(axis=1)
        block = 1 << lv
        if resolve.any():
            vals = np.where(resolve, fits[lv], 0.0)
            fitted += vals.repeat(block, axis=1).repeat(block, axis=2)
        if lv > 0:
            open_mask = (open_mask & ~merge[lv]).repeat(2, axis=1).repeat(2, axis=2)
    resolves.reverse()  # index by level again
    return fitted, counts, resolves, fits


def rdp_fit(s, kappa: float):
    """Exact optimal RDP fit of one image.

    Returns (cells, fitted) where ``cells`` is the list of partition leaves
    (coarsest first) and ``fitted`` the piecewise-constant image, nonnegative
    by construction.
    """
    s = np.asarray(s, dtype=float)
    _check_side(s)
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    fitted, counts, resolves, fits = _batch_rdp(s[None], kappa)
    cells = []
    levels = int(np.log2(s.shape[0]))
    for lv in range(levels, -1, -1):
        block = 1 << lv
        rr, cc = np.nonzero(resolves[lv][0])
        for r, c in zip(rr.tolist(), cc.tolist()):
            cells.append(RdpCell(r * block, c * block, block, float(fits[lv][0, r, c])))
    return cells, fitted[0]


@dataclass
class RdpTiInfo:
    n_shifts: int
    mean_leaves: float


def default_shift_set(side: int, full: bool = False):
    """Cyclic shifts averaged by the TI variant: {0..7}^2 by default, all side^2 if full."""
    extent = side if full else min(8, side)
    return [(dr, dc) for dr in range(extent) for dc in range(extent)]


def rdp_ti_fit(s, kappa: float, shifts=None, full: bool = False, return_info: bool = False):
    """Cycle-spun RDP: average the fits of cyclically shifted copies.

    Each shift (dr, dc) rolls the image, fits an RDP, and rolls back; the
    returned image is the mean over the shift set (nonnegative since every
    term is).  ``shifts`` overrides the default set; ``full`` uses all
    side^2 shifts.
    """
    s = np.asarray(s, dtype=float)
    side = _check_side(s)
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    if shifts is None:
        shifts = default_shift_set(side, full)
    shifts = list(shifts)
    if not shifts:
        raise ValueError("shift set must be nonempty")
    stack = np.stack([np.roll(s, (-dr, -dc), axis=(0, 1)) for dr, dc in shifts])
    fitted, counts, _, _ = _batch_rdp(stack, kappa)
    out = np.zeros_like(s)
    for i, (dr, dc) in enumerate(shifts):
        out += np.roll(fitted[i], (dr, dc), axis=(0, 1))
    out /= len(shifts)
    if return_info:
        return out, RdpTiInfo(n_shifts=len(shifts), mean_leaves=float(counts.mean()))
    return out


def partition_to_csv(cells, path) -> None:
    """Write partition leaves as CSV rows: row, col, side, fit."""
    with open(path, "w") as fh:
        fh.write("row,col,side,fit\n")
        for cell in cells:
            fh.write(f"{cell.row},{cell.col},{cell.side},{cell.fit!r}\n")
