"""Deterministic 1-D wave-optics primitives.

Everything here is a pure function of immutable inputs: the sampled grid,
complex fields on it, the Fresnel point-spread kernel of free space, the
quadrature of the propagation integral, transmission masks and the two
detector models (bucket and pixel array).

All lengths are in metres.  Fields are 1-D; an amplitude sample carries
units of sqrt(W/m) so that ``sum(|a|**2) * step`` is a power.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

__all__ = [
    "OpticalLayout",
    "Grid",
    "ComplexField",
    "TransmissionMask",
    "Pinhole",
    "DoublePinhole",
    "DoubleSlit",
    "Uniform",
    "Sampled",
    "FrameRecord",
    "SamplingWarning",
    "fresnel_kernel",
    "kernel_matrix",
    "propagate",
    "apply_mask",
    "bucket_detect",
    "pixel_detect",
    "sampling_step_limit",
    "check_sampling",
]


def _positive(name, value):
    value = float(value)
    if not math.isfinite(value) or value <= 0.0:
        raise DomainError(f"{name} must be finite and > 0, got {value!r}")
    return value


@dataclass(frozen=True)
class OpticalLayout:
    """Geometry shared by both arms of the ghost-imaging setup.

    Parameters
    ----------
    wavelength : float
        Optical wavelength [m].
    s_o : float
        Source to object distance (test arm) [m].
    s_r : float
        Source to reference-detector distance [m].
    source_radius : float
        Half-width R of the incoherent source [m].
    """

    wavelength: float
    s_o: float
    s_r: float
    source_radius: float

    def __post_init__(self):
        for name in ("wavelength", "s_o", "s_r", "source_radius"):
            object.__setattr__(self, name, _positive(name, getattr(self, name)))

    @property
    def wavenumber(self) -> float:
        return 2.0 * math.pi / self.wavelength

    def delta_s(self) -> float:
        return self.s_r - self.s_o

    @property
    def focused(self) -> bool:
        return self.s_r == self.s_o

    @property
    def magnification(self) -> float:
        """Scale from object-plane to reference-plane coordinates."""
        return self.s_r / self.s_o

    @property
    def first_zero(self) -> float:
        """Offset of the first zero of the in-focus sinc^2 PSF, lambda*z/(2R)."""
        return self.wavelength * self.s_o / (2.0 * self.source_radius)

    @property
    def psf_scale(self) -> float:
        """Factor c in sinc(c * (alpha - beta)) for the in-focus PSF [1/m]."""
        return 2.0 * math.pi * self.source_radius / (self.wavelength * self.s_o)

    def with_delta_s(self, delta_s: float) -> "OpticalLayout":
        return OpticalLayout(self.wavelength, self.s_o, self.s_o + delta_s, self.source_radius)


@dataclass(frozen=True)
class Grid:
    """Uniform 1-D sampling, ``position(i) = start + i * step``."""

    start: float
    step: float
    count: int

    def __post_init__(self):
        object.__setattr__(self, "start", float(self.start))
        if not math.isfinite(self.start):
            raise DomainError("grid start must be finite")
        object.__setattr__(self, "step", _positive("grid step", self.step))
        if int(self.count) != self.count or self.count < 1:
            raise DomainError(f"grid count must be an integer >= 1, got {self.count!r}")
        object.__setattr__(self, "count", int(self.count))

    @classmethod
    def centered(cls, half_width: float, count: int, center: float = 0.0) -> "Grid":
        """Symmetric grid whose end nodes sit at ``center +/- half_width``."""
        half_width = _positive("half_width", half_width)
        if count < 2:
            raise DomainError("a centered grid needs at least 2 nodes")
        return cls(center - half_width, 2.0 * half_width / (count - 1), count)

    @classmethod
    def cells(cls, lo: float, hi: float, count: int) -> "Grid":
        """Midpoints of ``count`` equal cells tiling [lo, hi]."""
        if not hi > lo:
            raise DomainError("cells() needs hi > lo")
        step = (hi - lo) / count
        return cls(lo + 0.5 * step, step, count)

    def position(self, i):
        return self.start + np.asarray(i) * self.step

    @property
    def positions(self) -> np.ndarray:
        return self.start + np.arange(self.count) * self.step

    @property
    def end(self) -> float:
        return self.start + (self.count - 1) * self.step

    @property
    def span(self) -> tuple[float, float]:
        """Extent covered by the cells around the first and last node."""
        return self.start - 0.5 * self.step, self.end + 0.5 * self.step

    def index_of(self, x: float) -> int:
        """Index of the node nearest to ``x`` (clipped to the grid)."""
        i = int(round((x - self.start) / self.step))
        return min(max(i, 0), self.count - 1)


@dataclass(frozen=True, eq=False)
class ComplexField:
    grid: Grid
    amplitude: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amplitude, dtype=complex)
        if a.ndim != 1 or a.shape[0] != self.grid.count:
            raise DomainError(
                f"amplitude length {a.shape} does not match grid count {self.grid.count}"
            )
        if not np.all(np.isfinite(a)):
            raise DomainError("field amplitude contains non-finite values")
        a.setflags(write=False)
        object.__setattr__(self, "amplitude", a)

    @classmethod
    def zeros(cls, grid: Grid) -> "ComplexField":
        return cls(grid, np.zeros(grid.count, dtype=complex))

    def __add__(self, other: "ComplexField") -> "ComplexField":
        if other.grid != self.grid:
            raise DomainError("cannot add fields on different grids")
        return ComplexField(self.grid, self.amplitude + other.amplitude)

    def __mul__(self, scalar) -> "ComplexField":
        return ComplexField(self.grid, self.amplitude * scalar)

    __rmul__ = __mul__


# -- transmission masks -----------------------------------------------------


class TransmissionMask:
    """Real amplitude transmission T(alpha) with values in [0, 1].

    Point-like masks (pinholes) are Dirac features: they have ``points`` and
    are rendered onto a grid at the nearest node.  Extended masks expose a
    midpoint ``quadrature`` for integrals of |T|^2 against a kernel.
    """

    points: tuple = ()

    @property
    def is_point(self) -> bool:
        return bool(self.points)

    def evaluate(self, alpha):
        raise NotImplementedError

    def support(self) -> tuple[float, float] | None:
        """Interval outside which T vanishes, or None if unbounded."""
        raise NotImplementedError

    def render(self, grid: Grid) -> np.ndarray:
        """Transmission sampled on ``grid``."""
        if self.is_point:
            out = np.zeros(grid.count)
            for c in self.points:
                out[grid.index_of(c)] = 1.0
            return out
        return np.asarray(self.evaluate(grid.positions), dtype=float)

    def quadrature(self, step: float) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights w_a ~ |T(alpha_a)|^2 d(alpha).

        Point masks return their centres with unit weights.
        """
        if self.is_point:
            return np.array(self.points, dtype=float), np.ones(len(self.points))
        raise NotImplementedError

    def shifted(self, delta: float) -> "TransmissionMask":
        raise NotImplementedError


@dataclass(frozen=True)
class Pinhole(TransmissionMask):
    center: float = 0.0

    @property
    def points(self):
        return (self.center,)

    def evaluate(self, alpha):
        return np.where(np.asarray(alpha) == self.center, 1.0, 0.0)

    def support(self):
        return (self.center, self.center)

    def shifted(self, delta):
        return Pinhole(self.center + delta)


@dataclass(frozen=True)
class DoublePinhole(TransmissionMask):
    center1: float
    center2: float

    @classmethod
    def symmetric(cls, separation: float, center: float = 0.0) -> "DoublePinhole":
        return cls(center - 0.5 * separation, center + 0.5 * separation)

    @property
    def points(self):
        return (self.center1, self.center2)

    def evaluate(self, alpha):
        alpha = np.asarray(alpha)
        return np.where((alpha == self.center1) | (alpha == self.center2), 1.0, 0.0)

    def support(self):
        return (min(self.points), max(self.points))

    def shifted(self, delta):
        return DoublePinhole(self.center1 + delta, self.center2 + delta)


@dataclass(frozen=True)
class DoubleSlit(TransmissionMask):
    """Two open slits of width ``width`` whose centres are ``distance`` apart."""

    width: float
    distance: float
    center: float = 0.0

    def __post_init__(self):
        _positive("slit width", self.width)
        _positive("slit distance", self.distance)
        if not self.width < self.distance:
            raise DomainError("double slit needs width < center distance")

    @property
    def slit_centers(self):
        return (self.center - 0.5 * self.distance, self.center + 0.5 * self.distance)

    def evaluate(self, alpha):
        offset = np.abs(np.abs(np.asarray(alpha, dtype=float) - self.center) - 0.5 * self.distance)
        return np.where(offset <= 0.5 * self.width, 1.0, 0.0)

    def support(self):
        half = 0.5 * (self.distance + self.width)
        return (self.center - half, self.center + half)

    def quadrature(self, step):
        n = max(1, math.ceil(self.width / _positive("quadrature step", step) - 1e-9))
        h = self.width / n
        offsets = (np.arange(n) + 0.5) * h - 0.5 * self.width
        c1, c2 = self.slit_centers
        nodes = np.concatenate([c1 + offsets, c2 + offsets])
        return nodes, np.full(nodes.shape, h)

    def shifted(self, delta):
        return DoubleSlit(self.width, self.distance, self.center + delta)


@dataclass(frozen=True)
class Uniform(TransmissionMask):
    value: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise DomainError("uniform transmission must lie in [0, 1]")

    def evaluate(self, alpha):
        return np.full(np.shape(alpha), float(self.value))

    def support(self):
        return None

    def quadrature(self, step):
        raise DomainError("a uniform mask has unbounded support; no finite quadrature")

    def shifted(self, delta):
        return self


@dataclass(frozen=True, eq=False)
class Sampled(TransmissionMask):
    """Tabulated transmission; piecewise constant over the grid cells."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.count,):
            raise DomainError("sampled mask values do not match the grid")
        if np.any(~np.isfinite(v)) or np.any(v < 0.0) or np.any(v > 1.0):
            raise DomainError("sampled mask values must lie in [0, 1]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def evaluate(self, alpha):
        alpha = np.asarray(alpha, dtype=float)
        idx = np.rint((alpha - self.grid.start) / self.grid.step).astype(int)
        inside = (idx >= 0) & (idx < self.grid.count)
        out = np.zeros(alpha.shape)
        out[inside] = self.values[idx[inside]]
        return out

    def support(self):
        return self.grid.span

    def quadrature(self, step=None):
        return self.grid.positions, self.values**2 * self.grid.step

    def shifted(self, delta):
        g = self.grid
        return Sampled(Grid(g.start + delta, g.step, g.count), self.values)


# -- detector records -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FrameRecord:
    """One speckle realisation: reference-pixel intensities and bucket value."""

    pixel_intensity: np.ndarray
    bucket: float
    source_power: float | None = None

    def __post_init__(self):
        p = np.asarray(self.pixel_intensity, dtype=float)
        if p.ndim != 1:
            raise DomainError("pixel_intensity must be 1-D")
        if not np.all(np.isfinite(p)) or np.any(p < 0.0):
            raise DomainError("pixel intensities must be finite and >= 0")
        b = float(self.bucket)
        if not math.isfinite(b) or b < 0.0:
            raise DomainError("bucket value must be finite and >= 0")
        if self.source_power is not None:
            _positive("source_power", self.source_power)
        object.__setattr__(self, "pixel_intensity", p)
        object.__setattr__(self, "bucket", b)


# -- propagation ------------------------------------------------------------


class SamplingWarning(UserWarning):
    """The source grid under-samples the quadratic Fresnel phase."""


def fresnel_kernel(x, target, z, wavelength):
    """Free-space Fresnel PSF between source point ``x`` and ``target``.

    ``exp(-ikz) / (i lambda z) * exp(-i pi (x - target)^2 / (lambda z))``;
    broadcasts over array arguments.
    """
    z = _positive("propagation distance z", z)
    wavelength = _positive("wavelength", wavelength)
    k = 2.0 * math.pi / wavelength
    lz = wavelength * z
    d = np.asarray(x, dtype=float) - np.asarray(target, dtype=float)
    return np.exp(-1j * k * z) / (1j * lz) * np.exp(-1j * math.pi * d * d / lz)


def kernel_matrix(source: Grid, target: Grid | np.ndarray, z: float, wavelength: float) -> np.ndarray:
    """Quadrature matrix M with ``out = amplitude @ M``; includes the step dx."""
    t = target.positions if isinstance(target, Grid) else np.asarray(target, dtype=float)
    return fresnel_kernel(source.positions[:, None], t[None, :], z, wavelength) * source.step


def sampling_step_limit(source: Grid, target: Grid | np.ndarray, z: float, wavelength: float) -> float:
    """Largest source step that keeps the quadratic phase Nyquist-sampled."""
    t = target.positions if isinstance(target, Grid) else np.asarray(target, dtype=float)
    extent = max(abs(t.max() - source.start), abs(source.end - t.min()))
    if extent == 0.0:
        return math.inf
    return wavelength * z / (2.0 * extent)


def check_sampling(source: Grid, target, z: float, wavelength: float, label: str = "") -> str | None:
    """Return (and warn with) a message when the sampling guard is violated."""
    limit = sampling_step_limit(source, target, z, wavelength)
    if source.step <= limit:
        return None
    where = f" ({label})" if label else ""
    msg = (
        f"source step {source.step:.4g} m exceeds the Fresnel sampling limit "
        f"{limit:.4g} m{where}"
    )
    warnings.warn(msg, SamplingWarning, stacklevel=2)
    return msg


def propagate(input: ComplexField, target_grid: Grid, z: float, wavelength: float) -> ComplexField:
    """Riemann-sum quadrature of the Fresnel integral onto ``target_grid``."""
    if input.grid.count == 0:
        raise DomainError("cannot propagate an empty field")
    check_sampling(input.grid, target_grid, z, wavelength)
    nz = np.flatnonzero(input.amplitude)
    out = np.zeros(target_grid.count, dtype=complex)
    if nz.size:
        x = input.grid.positions[nz]
        t = target_grid.positions
        # chunk over targets to bound the kernel block at ~32 MB
        chunk = max(1, (1 << 21) // nz.size)
        for lo in range(0, t.size, chunk):
            k = fresnel_kernel(x[:, None], t[None, lo:lo + chunk], z, wavelength)
            out[lo:lo + chunk] = input.amplitude[nz] @ k
        out *= input.grid.step
    return ComplexField(target_grid, out)


def apply_mask(field: ComplexField, mask: TransmissionMask) -> ComplexField:
    return ComplexField(field.grid, field.amplitude * mask.render(field.grid))


def bucket_detect(field: ComplexField) -> float:
    """Total power collected by a non-resolving detector."""
    a = field.amplitude
    return float(np.sum(a.real**2 + a.imag**2) * field.grid.step)


def pixel_detect(field: ComplexField) -> np.ndarray:
    a = field.amplitude
    return a.real**2 + a.imag**2
