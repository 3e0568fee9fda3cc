"""Closed-form ghost images and resolution metrology.

In focus (s_r == s_o == z) the ghost-imaging PSF is sinc^2(c (alpha - beta))
with c = 2 pi R / (lambda z) and the unnormalised ``sinc(u) = sin(u)/u``.
The cumulant image of an object made of points (or of quadrature cells)
alpha_a with weights w_a is

    diag(beta)  = sum_a (w_a s_a^2)^2
    cross(beta) = sum_{a != a'} w_a s_a^2 w_a' s_a'^2
    total       = diag + cross = (sum_a w_a s_a^2)^2

with s_a = sinc(c (alpha_a - beta)).  The common power-variance prefactor is
dropped, so curves are meaningful up to scale; ``normalized()`` rescales to
unit peak.

Out of focus the PSF has no closed form and is integrated numerically over
the source aperture with Gauss-Legendre quadrature.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import roots_legendre

from .errors import (
    DomainError,
    NotResolvedError,
    OutOfRangeError,
    PreconditionError,
    SolverError,
)
from .optics import DoublePinhole, Grid, OpticalLayout, TransmissionMask, Uniform, fresnel_kernel

__all__ = [
    "RAYLEIGH_CRITERION",
    "AnalyticCurve",
    "ResolutionReport",
    "TwoPointFamily",
    "sinc",
    "gi_analytic",
    "scgi_analytic",
    "cross_term",
    "defocus_psf",
    "defocus_images",
    "rayleigh_distance",
    "dip_ratio",
    "fwhm",
    "first_zero",
]

RAYLEIGH_CRITERION = 0.81


@dataclass(frozen=True, eq=False)
class AnalyticCurve:
    beta_grid: Grid
    values: np.ndarray
    normalization: str = "raw"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.beta_grid.count,):
            raise DomainError("curve length does not match its grid")
        if not np.all(np.isfinite(v)):
            raise DomainError("curve contains non-finite values")
        if self.normalization not in ("raw", "peak-normalized"):
            raise DomainError(f"unknown normalization {self.normalization!r}")
        object.__setattr__(self, "values", v)

    def normalized(self) -> "AnalyticCurve":
        peak = np.max(self.values)
        if not peak > 0:
            raise DomainError("cannot peak-normalise a curve without a positive maximum")
        return AnalyticCurve(self.beta_grid, self.values / peak, "peak-normalized")


@dataclass
class ResolutionReport:
    rayleigh_distance: float = math.nan
    criterion_ratio: float = RAYLEIGH_CRITERION
    fwhm: float = math.nan
    dip_ratio: float = math.nan
    first_zero: float = math.nan


def sinc(u):
    """Unnormalised sinc, sin(u)/u."""
    return np.sinc(np.asarray(u) / math.pi)


def _require_focus(layout: OpticalLayout):
    if not layout.focused:
        raise PreconditionError(
            f"closed-form curves need s_r == s_o (delta_s = {layout.delta_s():.6g} m); "
            "use defocus_psf / defocus_images for a defocused reference arm"
        )


def _default_step(layout: OpticalLayout) -> float:
    return layout.first_zero / 100.0


def _weighted_kernel(mask, layout, beta, step):
    """Matrix C[b, a] = w_a * sinc^2(c (alpha_a - beta_b))."""
    nodes, weights = mask.quadrature(step)
    s = sinc(layout.psf_scale * (nodes[None, :] - beta[:, None]))
    return weights[None, :] * s * s


def gi_analytic(mask: TransmissionMask, layout: OpticalLayout, beta_grid: Grid, step: float | None = None) -> AnalyticCurve:
    """Integral of |T|^2 against the sinc^2 PSF, per reference position."""
    _require_focus(layout)
    step = step or _default_step(layout)
    if isinstance(mask, Uniform):
        value = mask.value**2 * math.pi / layout.psf_scale
        return AnalyticCurve(beta_grid, np.full(beta_grid.count, value))
    C = _weighted_kernel(mask, layout, beta_grid.positions, step)
    return AnalyticCurve(beta_grid, C.sum(axis=1))


def _diagonal(mask, layout, beta_grid, step):
    if isinstance(mask, Uniform):
        c = layout.psf_scale
        return np.full(beta_grid.count, step * mask.value**4 * 2.0 * math.pi / (3.0 * c))
    C = _weighted_kernel(mask, layout, beta_grid.positions, step)
    return np.sum(C * C, axis=1)


def cross_term(mask: TransmissionMask, layout: OpticalLayout, beta_grid: Grid, step: float | None = None) -> AnalyticCurve:
    """Cross information: explicit double sum over distinct object points."""
    _require_focus(layout)
    step = step or _default_step(layout)
    if isinstance(mask, Uniform):
        gi = gi_analytic(mask, layout, beta_grid, step).values
        return AnalyticCurve(beta_grid, gi * gi - _diagonal(mask, layout, beta_grid, step))
    C = _weighted_kernel(mask, layout, beta_grid.positions, step)
    # sum over ordered pairs a != c as twice the sum over c < a
    before = np.cumsum(C, axis=1) - C
    values = 2.0 * np.sum(C * before, axis=1)
    return AnalyticCurve(beta_grid, values)


def scgi_analytic(
    mask: TransmissionMask,
    layout: OpticalLayout,
    beta_grid: Grid,
    include_cross: bool = True,
    step: float | None = None,
) -> AnalyticCurve:
    """Second-cumulant image; ``include_cross=False`` keeps the diagonal only."""
    _require_focus(layout)
    step = step or _default_step(layout)
    values = _diagonal(mask, layout, beta_grid, step)
    if include_cross:
        values = values + cross_term(mask, layout, beta_grid, step).values
    return AnalyticCurve(beta_grid, values)


# -- defocused reference arm -------------------------------------------------


@lru_cache(maxsize=8)
def _legendre(n: int):
    x, w = roots_legendre(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _defocus_matrix(layout: OpticalLayout, alphas, beta, nodes: int) -> np.ndarray:
    """|int_{-R}^{R} h_t(x, alpha; s_o) conj(h_r(x, beta; s_r)) dx|^2, shape (alphas, betas)."""
    t, w = _legendre(nodes)
    R = layout.source_radius
    x = R * t
    ht = fresnel_kernel(x[None, :], np.asarray(alphas, dtype=float)[:, None], layout.s_o, layout.wavelength)
    ht *= (R * w)[None, :]
    out = np.empty((ht.shape[0], beta.size))
    chunk = max(1, (1 << 21) // nodes)
    for lo in range(0, beta.size, chunk):
        hr = fresnel_kernel(x[:, None], beta[None, lo:lo + chunk], layout.s_r, layout.wavelength)
        amp = ht @ np.conj(hr)
        out[:, lo:lo + chunk] = amp.real**2 + amp.imag**2
    return out


def defocus_psf(layout: OpticalLayout, alpha: float, beta_grid: Grid, nodes: int = 2048) -> AnalyticCurve:
    """Ghost-imaging PSF of a point at ``alpha`` for arbitrary s_r and s_o."""
    return AnalyticCurve(beta_grid, _defocus_matrix(layout, [alpha], beta_grid.positions, nodes)[0])


def defocus_images(
    mask: TransmissionMask,
    layout: OpticalLayout,
    beta_grid: Grid,
    step: float | None = None,
    nodes: int = 2048,
) -> dict[str, AnalyticCurve]:
    """GI, SCGI and diagonal-only SCGI curves built from the defocused PSF."""
    step = step or _default_step(layout)
    a, w = mask.quadrature(step)
    C = w[:, None] * _defocus_matrix(layout, a, beta_grid.positions, nodes)
    gi = C.sum(axis=0)
    return {
        "gi": AnalyticCurve(beta_grid, gi),
        "scgi": AnalyticCurve(beta_grid, gi * gi),
        "scgi_diag": AnalyticCurve(beta_grid, np.sum(C * C, axis=0)),
    }


# -- curve metrology --------------------------------------------------------


def _xy(curve):
    return curve.beta_grid.positions, np.asarray(curve.values, dtype=float)


def _vertex(x, y, i):
    """Parabolic refinement of an extremum at interior index i."""
    if 0 < i < len(y) - 1:
        y0, y1, y2 = y[i - 1], y[i], y[i + 1]
        denom = y0 - 2.0 * y1 + y2
        if denom != 0.0:
            shift = 0.5 * (y0 - y2) / denom
            if abs(shift) <= 1.0:
                return x[i] + shift * (x[1] - x[0]), y1 - 0.25 * (y0 - y2) * shift
    return x[i], y[i]


def _local_maxima(y):
    i = np.arange(1, len(y) - 1)
    return i[(y[i] > y[i - 1]) & (y[i] >= y[i + 1])]


def dip_ratio(curve, tolerant: bool = False, center: float | None = None) -> float:
    """Central minimum over the mean of the two flanking maxima.

    The flanking maxima are the highest interior local maxima on either side
    of ``center`` (default: middle of the grid).  Raises
    :class:`NotResolvedError` when there is no such pair; with
    ``tolerant=True`` an unresolved curve reports 1.0.
    """
    x, y = _xy(curve)
    if center is None:
        center = 0.5 * (x[0] + x[-1])
    peaks = _local_maxima(y)
    left = peaks[x[peaks] < center]
    right = peaks[x[peaks] > center]
    if left.size == 0 or right.size == 0:
        if tolerant:
            return 1.0
        raise NotResolvedError("curve does not have maxima on both sides of the centre")
    il = left[np.argmax(y[left])]
    ir = right[np.argmax(y[right])]
    if ir - il > 1 and y[il + 1:ir].max() > max(y[il], y[ir]):
        # a single main lobe sitting on the centre, flanked by side lobes
        if tolerant:
            return 1.0
        raise NotResolvedError("the central feature is higher than the flanking maxima")
    imin = il + int(np.argmin(y[il:ir + 1]))
    if imin in (il, ir):
        if tolerant:
            return 1.0
        raise NotResolvedError("no minimum between the flanking maxima")
    top = 0.5 * (_vertex(x, y, il)[1] + _vertex(x, y, ir)[1])
    if not top > 0:
        if tolerant:
            return 1.0
        raise NotResolvedError("flanking maxima are not positive")
    return float(min(_vertex(x, y, imin)[1] / top, 1.0))


def _crossing(x, y, i, j, level):
    # linear interpolation between samples i and j, y[i] >= level > y[j]
    return x[i] + (x[j] - x[i]) * (y[i] - level) / (y[i] - y[j])


def fwhm(curve) -> float:
    """Full width at half maximum of a single-peaked curve."""
    x, y = _xy(curve)
    ip = int(np.argmax(y))
    half = 0.5 * y[ip]
    r = ip
    while r < len(y) - 1 and y[r + 1] >= half:
        r += 1
    l = ip
    while l > 0 and y[l - 1] >= half:
        l -= 1
    if r == len(y) - 1 or l == 0:
        raise OutOfRangeError("half-maximum crossing lies outside the grid")
    return float(_crossing(x, y, r, r + 1, half) - _crossing(x, y, l, l - 1, half))


def first_zero(curve) -> float:
    """Offset from the peak to the first local minimum on its right."""
    x, y = _xy(curve)
    ip = int(np.argmax(y))
    for i in range(ip + 1, len(y) - 1):
        if y[i] <= y[i - 1] and y[i] < y[i + 1]:
            return float(_vertex(x, y, i)[0] - _vertex(x, y, ip)[0])
    raise OutOfRangeError("no minimum to the right of the peak inside the grid")


# -- Rayleigh distance ------------------------------------------------------


@dataclass(frozen=True)
class TwoPointFamily:
    """Two-point image for points at +/- separation/2 (object plane).

    ``method`` selects the imaging model: ``gi`` / ``scgi`` / ``scgi_diag``
    use the closed-form in-focus PSF; ``defocus`` / ``defocus_scgi`` use the
    numerically integrated PSF of a defocused reference arm.
    """

    layout: OpticalLayout
    method: str = "gi"
    n_beta: int = 801
    nodes: int = 2048
    _methods: tuple = field(default=("gi", "scgi", "scgi_diag", "defocus", "defocus_scgi"), repr=False)

    def __post_init__(self):
        if self.method not in self._methods:
            raise DomainError(f"unknown two-point method {self.method!r}")
        if self.method in ("gi", "scgi", "scgi_diag"):
            _require_focus(self.layout)

    @property
    def scale(self) -> float:
        """Characteristic PSF width in object-plane units."""
        lay = self.layout
        blur = 2.0 * lay.source_radius * abs(1.0 - lay.s_o / lay.s_r)
        return lay.first_zero + blur

    def grid(self, separation: float) -> Grid:
        half = 0.5 * separation + 3.0 * self.scale
        return Grid.centered(half * self.layout.magnification, self.n_beta)

    def __call__(self, separation: float) -> AnalyticCurve:
        mask = DoublePinhole.symmetric(separation)
        g = self.grid(separation)
        if self.method == "gi":
            return gi_analytic(mask, self.layout, g)
        if self.method == "scgi":
            return scgi_analytic(mask, self.layout, g, include_cross=True)
        if self.method == "scgi_diag":
            return scgi_analytic(mask, self.layout, g, include_cross=False)
        curves = defocus_images(mask, self.layout, g, nodes=self.nodes)
        return curves["gi" if self.method == "defocus" else "scgi"]


def rayleigh_distance(
    psf_family: Callable[[float], object],
    criterion: float = RAYLEIGH_CRITERION,
    bracket: tuple[float, float] | None = None,
    scan: int = 64,
    rtol: float = 1e-10,
) -> float:
    """Separation at which the two-point dip ratio equals ``criterion``.

    The separation axis is scanned on ``bracket`` (default: 0.05 to 4 family
    scales); the last downward crossing of the criterion (beyond which the
    points stay resolved over the scan) is refined by bisection.
    """
    if not 0.0 < criterion < 1.0:
        raise DomainError("criterion must lie in (0, 1)")
    if bracket is None:
        scale = getattr(psf_family, "scale", None)
        if scale is None:
            raise SolverError("psf_family has no scale; pass an explicit bracket")
        bracket = (0.05 * scale, 4.0 * scale)
    lo, hi = map(float, bracket)
    if not 0.0 < lo < hi:
        raise DomainError("bracket must satisfy 0 < lo < hi")

    def f(d):
        return dip_ratio(psf_family(d), tolerant=True) - criterion

    seps = np.linspace(lo, hi, scan)
    vals = np.array([f(d) for d in seps])
    if vals[-1] >= 0.0:
        raise SolverError(f"two points are not resolved at the largest separation {hi:.6g}")
    above = np.flatnonzero(vals >= 0.0)
    if above.size == 0:
        raise SolverError(f"two points are already resolved at the smallest separation {lo:.6g}")
    k = above[-1]
    a, b = seps[k], seps[k + 1]
    while b - a > rtol * b:
        m = 0.5 * (a + b)
        if f(m) >= 0.0:
            a = m
        else:
            b = m
    return 0.5 * (a + b)
