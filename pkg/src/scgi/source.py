"""Random source realisations: per-frame power and incoherent speckle fields.

Every frame owns its own generator, derived from ``(master_seed,
frame_index, stream)`` through :class:`numpy.random.SeedSequence`, so frames
can be produced in any order or on any worker and still be bit-identical.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .optics import ComplexField, Grid, OpticalLayout

__all__ = [
    "PowerModel",
    "RngSeed",
    "sample_power",
    "sample_speckle_field",
    "speckle_amplitudes",
    "source_support",
]

SPECKLE_STREAM = 0
POWER_STREAM = 1

POWER_KINDS = ("constant", "uniform", "gamma")


@dataclass(frozen=True)
class PowerModel:
    """Distribution of the source power I0 drawn for each frame.

    ``kind`` is one of ``constant``, ``uniform`` (relative half-width
    ``spread``, support ``mean*(1 +/- spread)``) or ``gamma`` (shape chosen so
    that sd/mean equals ``spread``).  ``hold_frames`` keeps one draw for that
    many consecutive frames; 1 means a fresh draw every frame.
    """

    kind: str = "uniform"
    mean_power: float = 1.0
    spread: float = 0.3
    hold_frames: int = 1

    def __post_init__(self):
        if self.kind not in POWER_KINDS:
            raise DomainError(f"unknown power model {self.kind!r}; expected one of {POWER_KINDS}")
        if not (math.isfinite(self.mean_power) and self.mean_power > 0.0):
            raise DomainError("mean_power must be > 0")
        if not (math.isfinite(self.spread) and self.spread >= 0.0):
            raise DomainError("relative spread must be >= 0")
        if self.kind == "uniform" and self.spread >= 1.0:
            raise DomainError("uniform relative spread must be < 1")
        if int(self.hold_frames) != self.hold_frames or self.hold_frames < 1:
            raise DomainError("hold_frames must be an integer >= 1")

    @property
    def variance(self) -> float:
        if self.kind == "constant":
            return 0.0
        if self.kind == "uniform":
            return (self.mean_power * self.spread) ** 2 / 3.0
        return (self.mean_power * self.spread) ** 2


@dataclass(frozen=True)
class RngSeed:
    master_seed: int
    frame_index: int

    def __post_init__(self):
        if self.frame_index < 0:
            raise DomainError("frame_index must be >= 0")
        if not 0 <= self.master_seed < 2**64:
            raise DomainError("master_seed must be an unsigned 64-bit integer")

    def generator(self, stream: int = SPECKLE_STREAM) -> np.random.Generator:
        ss = np.random.SeedSequence([int(self.master_seed), int(self.frame_index), stream])
        return np.random.Generator(np.random.PCG64(ss))


def sample_power(model: PowerModel, rng: RngSeed) -> float:
    if model.kind == "constant" or model.spread == 0.0:
        return float(model.mean_power)
    held = RngSeed(rng.master_seed, rng.frame_index // model.hold_frames)
    gen = held.generator(POWER_STREAM)
    if model.kind == "uniform":
        lo = model.mean_power * (1.0 - model.spread)
        hi = model.mean_power * (1.0 + model.spread)
        value = gen.uniform(lo, hi)
        # uniform() draws from [lo, hi); lo > 0 because spread < 1
        return float(value)
    shape = 1.0 / model.spread**2
    value = gen.gamma(shape, model.mean_power / shape)
    return float(max(value, np.finfo(float).tiny))


def source_support(layout: OpticalLayout, grid: Grid) -> np.ndarray:
    """Boolean mask of nodes inside the source aperture |x| <= R."""
    lo, hi = grid.span
    R = layout.source_radius
    tol = 1e-12 * R
    if lo > -R + tol or hi < R - tol:
        raise DomainError(
            f"source grid span [{lo:.6g}, {hi:.6g}] m does not cover [-R, R] with R = {R:.6g} m"
        )
    return np.abs(grid.positions) <= R


def speckle_amplitudes(rng: RngSeed, support: np.ndarray, step: float, power: float) -> np.ndarray:
    """Circular complex Gaussian samples on the aperture, zero elsewhere.

    The per-sample variance is ``power / (n_inside * step)`` so that the
    expected total power ``sum(|a|^2) * step`` equals ``power``.
    """
    n_in = int(np.count_nonzero(support))
    if n_in == 0:
        raise DomainError("source aperture contains no grid nodes")
    sigma = math.sqrt(power / (n_in * step) / 2.0)
    z = rng.generator(SPECKLE_STREAM).standard_normal(2 * n_in)
    out = np.zeros(support.shape[0], dtype=complex)
    out[support] = sigma * (z[:n_in] + 1j * z[n_in:])
    return out


def sample_speckle_field(layout: OpticalLayout, source_grid: Grid, power: float, rng: RngSeed) -> ComplexField:
    if not (math.isfinite(power) and power > 0.0):
        raise DomainError("source power must be > 0")
    support = source_support(layout, source_grid)
    return ComplexField(source_grid, speckle_amplitudes(rng, support, source_grid.step, power))
