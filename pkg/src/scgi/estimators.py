"""Streaming ghost-image reconstruction.

For every frame t the reference array gives I_t(beta) and the bucket gives
B_t.  The conventional ghost image is the covariance of the two,

    G(beta) = <(I_t - <I>)(B_t - <B>)>,

and the cumulant image is the variance of the per-frame fluctuation products
g_t(beta) = (I_t(beta) - <I>)(B_t - <B>).

:class:`MomentAccumulator` keeps the raw joint power sums needed to evaluate
both in one pass; accumulators are mergeable so shards can be reduced in any
tree.  :class:`BlockAccumulator` implements the block variant: the covariance
of each block of consecutive frames is one sample, and the images are the
cumulants of those samples.

All moments are population-normalised (divide by N).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, InsufficientDataError, UnsupportedOrderError
from .optics import FrameRecord, Grid

__all__ = [
    "PAIRS",
    "CompensatedSum",
    "MomentAccumulator",
    "BlockAccumulator",
    "ReconstructedImage",
    "accumulate",
    "merge",
    "gi_image",
    "scgi_image",
    "block_cumulant_image",
    "two_pass_scgi",
    "two_pass_block",
    "cumulant_image",
]

#: (p, q) exponents of the per-pixel sums  S_pq = sum_t I_t^p B_t^q
PAIRS = ((1, 0), (2, 0), (1, 1), (2, 1), (1, 2), (2, 2))


def _two_sum(a, b):
    # Knuth's error-free transformation: s + err == a + b exactly
    s = a + b
    bp = s - a
    err = (a - (s - bp)) + (b - bp)
    return s, err


class CompensatedSum:
    """Running sum with an error-free-transformation carry (array valued)."""

    __slots__ = ("hi", "lo")

    def __init__(self, shape=()):
        self.hi = np.zeros(shape)
        self.lo = np.zeros(shape)

    def add(self, x):
        self.hi, err = _two_sum(self.hi, x)
        self.lo = self.lo + err

    def merged(self, other: "CompensatedSum") -> "CompensatedSum":
        out = CompensatedSum.__new__(CompensatedSum)
        out.hi, err = _two_sum(self.hi, other.hi)
        out.lo = (self.lo + other.lo) + err
        return out

    def copy(self) -> "CompensatedSum":
        out = CompensatedSum.__new__(CompensatedSum)
        out.hi = np.array(self.hi, copy=True)
        out.lo = np.array(self.lo, copy=True)
        return out

    @property
    def value(self):
        return self.hi + self.lo


@dataclass(frozen=True, eq=False)
class ReconstructedImage:
    beta_grid: Grid
    values: np.ndarray
    method: str
    frames: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.beta_grid.count,):
            raise DomainError("image length does not match its grid")
        if not np.all(np.isfinite(v)):
            raise DomainError("image contains non-finite values")
        object.__setattr__(self, "values", v)

    def normalized(self) -> "ReconstructedImage":
        peak = np.max(self.values)
        values = self.values / peak if peak > 0 else self.values.copy()
        return ReconstructedImage(self.beta_grid, values, self.method, self.frames)


def _check_batch(grid: Grid, intensities, buckets):
    I = np.asarray(intensities, dtype=float)
    B = np.asarray(buckets, dtype=float)
    if I.ndim == 1:
        I = I[None, :]
    B = B.reshape(-1)
    if I.ndim != 2 or I.shape[1] != grid.count:
        raise DomainError(
            f"frame has {I.shape[-1]} pixels but the accumulator grid has {grid.count}"
        )
    if I.shape[0] != B.shape[0]:
        raise DomainError("number of pixel rows and bucket values differ")
    if not (np.all(np.isfinite(I)) and np.all(np.isfinite(B))):
        raise DomainError("frames contain non-finite values")
    if np.any(I < 0.0) or np.any(B < 0.0):
        raise DomainError("frames contain negative intensities")
    return I, B


class MomentAccumulator:
    """Per-pixel raw joint power sums over a stream of frames."""

    def __init__(self, grid: Grid):
        self.grid = grid
        n = grid.count
        self.count = 0
        self.sums = {pq: CompensatedSum(n) for pq in PAIRS}
        self.s_b = CompensatedSum()
        self.s_b2 = CompensatedSum()
        self.i_min = np.full(n, np.inf)
        self.i_max = np.full(n, -np.inf)
        self.b_min = math.inf
        self.b_max = -math.inf

    def __repr__(self):
        return f"MomentAccumulator(pixels={self.grid.count}, count={self.count})"

    def add(self, frame: FrameRecord) -> "MomentAccumulator":
        return self.add_batch(frame.pixel_intensity, [frame.bucket])

    def add_batch(self, intensities, buckets) -> "MomentAccumulator":
        """Accumulate a (frames, pixels) block of intensities with its buckets."""
        I, B = _check_batch(self.grid, intensities, buckets)
        if I.shape[0] == 0:
            return self
        I2 = I * I
        Bc = B[:, None]
        B2 = Bc * Bc
        terms = {
            (1, 0): I,
            (2, 0): I2,
            (1, 1): I * Bc,
            (2, 1): I2 * Bc,
            (1, 2): I * B2,
            (2, 2): I2 * B2,
        }
        for pq, t in terms.items():
            self.sums[pq].add(t.sum(axis=0))
        self.s_b.add(B.sum())
        self.s_b2.add((B * B).sum())
        self.count += I.shape[0]
        self.i_min = np.minimum(self.i_min, I.min(axis=0))
        self.i_max = np.maximum(self.i_max, I.max(axis=0))
        self.b_min = min(self.b_min, float(B.min()))
        self.b_max = max(self.b_max, float(B.max()))
        return self

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        if not isinstance(other, MomentAccumulator) or other.grid != self.grid:
            raise DomainError("cannot merge accumulators on different grids")
        out = MomentAccumulator.__new__(MomentAccumulator)
        out.grid = self.grid
        out.count = self.count + other.count
        out.sums = {pq: self.sums[pq].merged(other.sums[pq]) for pq in PAIRS}
        out.s_b = self.s_b.merged(other.s_b)
        out.s_b2 = self.s_b2.merged(other.s_b2)
        out.i_min = np.minimum(self.i_min, other.i_min)
        out.i_max = np.maximum(self.i_max, other.i_max)
        out.b_min = min(self.b_min, other.b_min)
        out.b_max = max(self.b_max, other.b_max)
        return out

    def raw(self, p: int, q: int):
        """Value of S_pq; (0, 1) and (0, 2) give the scalar bucket sums."""
        if (p, q) == (0, 1):
            return float(self.s_b.value)
        if (p, q) == (0, 2):
            return float(self.s_b2.value)
        return self.sums[(p, q)].value

    def degenerate(self) -> np.ndarray:
        """Pixels whose fluctuation products are identically zero."""
        return (self.i_min == self.i_max) | (self.b_min == self.b_max)


def accumulate(acc, frame: FrameRecord):
    """Add one frame to ``acc`` (in place) and return it."""
    return acc.add(frame)


def merge(a, b):
    return a.merge(b)


def _frame_covariance(acc: MomentAccumulator) -> np.ndarray:
    n = acc.count
    mean_i = acc.raw(1, 0) / n
    mean_b = acc.raw(0, 1) / n
    cov = acc.raw(1, 1) / n - mean_i * mean_b
    cov[acc.degenerate()] = 0.0
    return cov


def _frame_product_variance(acc: MomentAccumulator) -> np.ndarray:
    n = acc.count
    m = acc.raw(1, 0) / n
    b = acc.raw(0, 1) / n
    s = acc.raw
    # <g^2> from the raw sums; the S_10 and S_B cross terms collapse into -3 m^2 b^2
    g2 = (
        s(2, 2) - 2.0 * b * s(2, 1) + b * b * s(2, 0) - 2.0 * m * s(1, 2)
        + 4.0 * m * b * s(1, 1) + m * m * s(0, 2)
    ) / n - 3.0 * (m * b) ** 2
    cov = s(1, 1) / n - m * b
    var = g2 - cov * cov
    var = np.maximum(var, 0.0)
    var[acc.degenerate()] = 0.0
    return var


class BlockAccumulator:
    """Block variant: each run of ``block_size`` frames yields one covariance sample.

    Only completed blocks contribute; frames of a trailing partial block are
    reported by :attr:`pending`.  Merging requires both sides to sit on a
    block boundary.
    """

    MAX_ORDER = 4

    def __init__(self, grid: Grid, block_size: int):
        if int(block_size) != block_size or block_size < 2:
            raise DomainError("block_size must be an integer >= 2")
        self.grid = grid
        self.block_size = int(block_size)
        self.current = MomentAccumulator(grid)
        self.blocks = 0
        self.powers = [CompensatedSum(grid.count) for _ in range(self.MAX_ORDER)]
        self.s_min = np.full(grid.count, np.inf)
        self.s_max = np.full(grid.count, -np.inf)

    def __repr__(self):
        return (
            f"BlockAccumulator(pixels={self.grid.count}, block_size={self.block_size}, "
            f"blocks={self.blocks}, pending={self.pending})"
        )

    @property
    def count(self) -> int:
        return self.blocks * self.block_size + self.current.count

    @property
    def pending(self) -> int:
        return self.current.count

    def add(self, frame: FrameRecord) -> "BlockAccumulator":
        return self.add_batch(frame.pixel_intensity, [frame.bucket])

    def add_batch(self, intensities, buckets) -> "BlockAccumulator":
        I, B = _check_batch(self.grid, intensities, buckets)
        pos = 0
        while pos < I.shape[0]:
            take = min(self.block_size - self.current.count, I.shape[0] - pos)
            self.current.add_batch(I[pos:pos + take], B[pos:pos + take])
            pos += take
            if self.current.count == self.block_size:
                self._close_block()
        return self

    def _close_block(self):
        c = _frame_covariance(self.current)
        ck = c
        for k in range(self.MAX_ORDER):
            self.powers[k].add(ck)
            ck = ck * c
        self.s_min = np.minimum(self.s_min, c)
        self.s_max = np.maximum(self.s_max, c)
        self.blocks += 1
        self.current = MomentAccumulator(self.grid)

    def merge(self, other: "BlockAccumulator") -> "BlockAccumulator":
        if (
            not isinstance(other, BlockAccumulator)
            or other.grid != self.grid
            or other.block_size != self.block_size
        ):
            raise DomainError("cannot merge block accumulators with different grids or block sizes")
        if self.pending or other.pending:
            raise DomainError("block accumulators can only be merged on block boundaries")
        out = BlockAccumulator(self.grid, self.block_size)
        out.blocks = self.blocks + other.blocks
        out.powers = [a.merged(b) for a, b in zip(self.powers, other.powers)]
        out.s_min = np.minimum(self.s_min, other.s_min)
        out.s_max = np.maximum(self.s_max, other.s_max)
        return out

    def central_moments(self):
        """Mean and central moments 2..4 of the block covariance samples."""
        n = self.blocks
        r1, r2, r3, r4 = (p.value / n for p in self.powers)
        m = r1
        c2 = r2 - m * m
        c3 = r3 - 3.0 * m * r2 + 2.0 * m**3
        c4 = r4 - 4.0 * m * r3 + 6.0 * m * m * r2 - 3.0 * m**4
        flat = self.s_min == self.s_max
        for c in (c2, c3, c4):
            c[flat] = 0.0
        return m, np.maximum(c2, 0.0), c3, np.maximum(c4, 0.0)


def _require(acc, minimum: int):
    if isinstance(acc, BlockAccumulator):
        if acc.blocks < minimum:
            raise InsufficientDataError(
                f"need at least {minimum} completed blocks, have {acc.blocks}"
            )
    elif acc.count < minimum:
        raise InsufficientDataError(f"need at least {minimum} frames, have {acc.count}")


def gi_image(acc) -> ReconstructedImage:
    """Covariance image of reference intensity and bucket.

    For a :class:`BlockAccumulator` this is the mean of the block covariances.
    """
    if isinstance(acc, BlockAccumulator):
        _require(acc, 1)
        m = acc.central_moments()[0]
        return ReconstructedImage(acc.grid, m, "GI", acc.count)
    _require(acc, 2)
    return ReconstructedImage(acc.grid, _frame_covariance(acc), "GI", acc.count)


def scgi_image(acc) -> ReconstructedImage:
    """Second-cumulant image: variance of the fluctuation products.

    Per-frame accumulators use g_t; block accumulators use the block
    covariances as samples.
    """
    _require(acc, 2)
    if isinstance(acc, BlockAccumulator):
        return ReconstructedImage(acc.grid, acc.central_moments()[1], "SCGI", acc.count)
    return ReconstructedImage(acc.grid, _frame_product_variance(acc), "SCGI", acc.count)


def _population_cumulant(m1, moments, order):
    m2, m3, m4 = moments
    if order == 1:
        return m1
    if order == 2:
        return m2
    if order == 3:
        return m3
    return m4 - 3.0 * m2 * m2


def _k_statistic(m1, moments, order, n):
    m2, m3, m4 = moments
    if order == 1:
        return m1
    if order == 2:
        return n / (n - 1.0) * m2
    if order == 3:
        return n * n / ((n - 1.0) * (n - 2.0)) * m3
    return n * n * ((n + 1.0) * m4 - 3.0 * (n - 1.0) * m2 * m2) / ((n - 1.0) * (n - 2.0) * (n - 3.0))


def _check_order(order):
    if int(order) != order or not 1 <= order <= 4:
        raise UnsupportedOrderError(f"cumulant order must be 1..4, got {order!r}")
    return int(order)


def block_cumulant_image(acc: BlockAccumulator, order: int, unbiased: bool = False) -> ReconstructedImage:
    order = _check_order(order)
    _require(acc, max(order, 2) if unbiased else order)
    m, c2, c3, c4 = acc.central_moments()
    moments = (c2, c3, c4)
    if unbiased:
        values = _k_statistic(m, moments, order, acc.blocks)
    else:
        values = _population_cumulant(m, moments, order)
    return ReconstructedImage(acc.grid, values, f"CUMULANT({order})", acc.count)


# -- two-pass oracles -------------------------------------------------------


def _stack(frames: Sequence[FrameRecord]):
    if len(frames) == 0:
        raise InsufficientDataError("no frames")
    n_pix = frames[0].pixel_intensity.shape[0]
    if any(f.pixel_intensity.shape[0] != n_pix for f in frames):
        raise DomainError("frames have inconsistent pixel counts")
    I = np.stack([f.pixel_intensity for f in frames])
    B = np.array([f.bucket for f in frames])
    return I, B


def _fluctuation_products(I, B):
    return (I - I.mean(axis=0)) * (B - B.mean())[:, None]


def _central(g, k):
    d = g - g.mean(axis=0)
    return np.mean(d**k, axis=0)


def _index_grid(grid, n):
    if grid is None:
        return Grid(0.0, 1.0, n)
    if grid.count != n:
        raise DomainError("grid does not match the frame pixel count")
    return grid


def two_pass_scgi(frames: Sequence[FrameRecord], grid: Grid | None = None) -> ReconstructedImage:
    """Definitional second cumulant: means first, then the variance of g_t."""
    I, B = _stack(frames)
    if I.shape[0] < 2:
        raise InsufficientDataError(f"need at least 2 frames, have {I.shape[0]}")
    g = _fluctuation_products(I, B)
    values = _central(g, 2)
    values[np.ptp(g, axis=0) == 0.0] = 0.0
    return ReconstructedImage(_index_grid(grid, I.shape[1]), values, "SCGI", I.shape[0])


def cumulant_image(
    frames: Sequence[FrameRecord], order: int, grid: Grid | None = None, unbiased: bool = False
) -> ReconstructedImage:
    """Per-pixel cumulant of the fluctuation products g_t, orders 1 to 4.

    Population cumulants by default (order 1 matches :func:`gi_image`, order
    2 matches :func:`two_pass_scgi`); ``unbiased=True`` gives k-statistics.
    """
    order = _check_order(order)
    I, B = _stack(frames)
    n = I.shape[0]
    if n < max(order, 2):
        raise InsufficientDataError(f"order {order} needs at least {max(order, 2)} frames, have {n}")
    grid = _index_grid(grid, I.shape[1])
    if order == 1:
        # the first cumulant of g is the covariance; share the GI arithmetic
        values = gi_image(MomentAccumulator(grid).add_batch(I, B)).values
        return ReconstructedImage(grid, values, "CUMULANT(1)", n)
    g = _fluctuation_products(I, B)
    flat = np.ptp(g, axis=0) == 0.0
    m1 = g.mean(axis=0)
    moments = tuple(_central(g, k) for k in (2, 3, 4))
    if unbiased:
        values = _k_statistic(m1, moments, order, n)
    else:
        values = _population_cumulant(m1, moments, order)
    values = np.where(flat, 0.0, values)
    return ReconstructedImage(grid, values, f"CUMULANT({order})", n)


def two_pass_block(frames: Sequence[FrameRecord], block_size: int, grid: Grid | None = None):
    """Oracle for the block variant: (mean, variance) of per-block covariances."""
    I, B = _stack(frames)
    nb = I.shape[0] // block_size
    if nb < 2:
        raise InsufficientDataError("need at least 2 complete blocks")
    I = I[: nb * block_size].reshape(nb, block_size, -1)
    B = B[: nb * block_size].reshape(nb, block_size)
    dI = I - I.mean(axis=1, keepdims=True)
    dB = B - B.mean(axis=1, keepdims=True)
    cov = np.einsum("btp,bt->bp", dI, dB) / block_size
    g = _index_grid(grid, cov.shape[1])
    return (
        ReconstructedImage(g, cov.mean(axis=0), "GI", nb * block_size),
        ReconstructedImage(g, cov.var(axis=0), "SCGI", nb * block_size),
    )
