"""Monte-Carlo orchestration and the four harness commands."""
from __future__ import annotations

import logging
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import analysis
from ..analysis import ResolutionReport, TwoPointFamily
from ..errors import ScgiError
from ..estimators import BlockAccumulator, MomentAccumulator, gi_image, scgi_image
from ..optics import Grid, SamplingWarning, Uniform, check_sampling, kernel_matrix
from ..source import RngSeed, sample_power, source_support, speckle_amplitudes
from . import io
from .config import ExperimentConfig

__all__ = [
    "RunReport",
    "FrameSimulator",
    "shard_bounds",
    "accumulate_frames",
    "run_simulation",
    "run_analytic",
    "replay_frames",
    "run_resolve",
]

log = logging.getLogger(__name__)


@dataclass
class RunReport:
    command: str
    config: list = field(default_factory=list)
    resolution: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    frames: int = 0
    wall_clock_s: float = 0.0
    warnings: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    images: dict = field(default_factory=dict, repr=False)

    @property
    def frames_per_s(self) -> float:
        return self.frames / self.wall_clock_s if self.wall_clock_s > 0 else 0.0

    def items(self):
        out = [("command", self.command)]
        out += [(f"config.{k}", v) for k, v in self.config]
        for method, rep in self.resolution.items():
            out += [
                (f"{method}.rayleigh_distance_m", _num(rep.rayleigh_distance)),
                (f"{method}.criterion_ratio", _num(rep.criterion_ratio)),
                (f"{method}.fwhm_m", _num(rep.fwhm)),
                (f"{method}.dip_ratio", _num(rep.dip_ratio)),
                (f"{method}.first_zero_m", _num(rep.first_zero)),
            ]
        out += [(k, _num(v) if isinstance(v, float) else v) for k, v in self.extra.items()]
        out += [
            ("frames", self.frames),
            ("wall_clock_s", f"{self.wall_clock_s:.3f}"),
            ("frames_per_s", f"{self.frames_per_s:.1f}"),
        ]
        out += [(f"warning.{i}", w) for i, w in enumerate(self.warnings)]
        out += [(f"file.{i}", f) for i, f in enumerate(self.files)]
        return out


def _num(x):
    return "nan" if x is None or (isinstance(x, float) and math.isnan(x)) else format(float(x), ".9g")


# -- frame generation -------------------------------------------------------


def _object_grid(cfg: ExperimentConfig, beta_grid: Grid) -> Grid:
    step = cfg.object_step
    support = cfg.mask.support()
    if support is None:
        lay = cfg.layout
        lo, hi = beta_grid.start / lay.magnification, beta_grid.end / lay.magnification
    else:
        lo, hi = support
    center = 0.5 * (lo + hi)
    k = int(math.ceil(0.5 * (hi - lo) / step)) + 1
    return Grid(center - k * step, step, 2 * k + 1)


class FrameSimulator:
    """Synthesises (intensity, bucket, power) for any range of frame indices.

    Kernel matrices for both arms are precomputed; frame ``i`` depends only
    on ``(seed, i)``.
    """

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        lay = cfg.layout
        self.beta_grid = cfg.beta_grid
        self.source_grid = cfg.source_grid
        self.support = source_support(lay, self.source_grid)
        self.object_grid = _object_grid(cfg, self.beta_grid)
        T = cfg.mask.render(self.object_grid)
        keep = np.flatnonzero(T)
        self.warnings = []
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SamplingWarning)
            for target, z, label in (
                (self.beta_grid, lay.s_r, "reference arm"),
                (self.object_grid.positions[keep], lay.s_o, "test arm"),
            ):
                msg = check_sampling(self.source_grid, target, z, lay.wavelength, label)
                if msg:
                    self.warnings.append(msg)
        rows = self.support
        self.h_ref = kernel_matrix(self.source_grid, self.beta_grid, lay.s_r, lay.wavelength)[rows]
        h_obj = kernel_matrix(self.source_grid, self.object_grid.positions[keep], lay.s_o, lay.wavelength)
        self.h_obj = h_obj[rows] * T[keep][None, :]

    def amplitudes(self, start: int, stop: int):
        cfg = self.cfg
        n_in = int(np.count_nonzero(self.support))
        A = np.empty((stop - start, n_in), dtype=complex)
        P = np.empty(stop - start)
        for j, i in enumerate(range(start, stop)):
            seed = RngSeed(cfg.seed, i)
            P[j] = sample_power(cfg.power, seed)
            A[j] = speckle_amplitudes(seed, self.support, self.source_grid.step, P[j])[self.support]
        return A, P

    def __call__(self, start: int, stop: int):
        A, _ = self.amplitudes(start, stop)
        e_ref = A @ self.h_ref
        e_obj = A @ self.h_obj
        I = e_ref.real**2 + e_ref.imag**2
        B = np.sum(e_obj.real**2 + e_obj.imag**2, axis=1) * self.object_grid.step
        return I, B


# -- sharded accumulation ---------------------------------------------------


def shard_bounds(n_frames: int, shards: int, align: int = 1):
    """Contiguous [start, stop) ranges; interior boundaries are multiples of ``align``."""
    units = n_frames // align
    shards = max(1, min(shards, units)) if units else 1
    edges = [(units * k // shards) * align for k in range(shards + 1)]
    edges[-1] = units * align
    return [(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _new_accumulator(cfg: ExperimentConfig, grid: Grid):
    if cfg.estimator == "block":
        return BlockAccumulator(grid, cfg.block_size)
    return MomentAccumulator(grid)


def _run_shard(cfg, grid, source, start, stop):
    acc = _new_accumulator(cfg, grid)
    for lo in range(start, stop, cfg.batch_frames):
        I, B = source(lo, min(stop, lo + cfg.batch_frames))
        acc.add_batch(I, B)
    return acc


def accumulate_frames(cfg: ExperimentConfig, grid: Grid, source, n_frames: int):
    """Feed frames ``0..n_frames-1`` from ``source(start, stop)`` into estimators.

    Shards are reduced in index order in strict mode (bit-reproducible) and
    in completion order otherwise.  Block mode drops a trailing partial block.
    Returns (accumulator, dropped_frames).
    """
    align = cfg.block_size if cfg.estimator == "block" else 1
    used = (n_frames // align) * align
    bounds = shard_bounds(used, cfg.shards, align)
    if not bounds:
        return _new_accumulator(cfg, grid), n_frames
    if cfg.workers <= 1 or len(bounds) == 1:
        parts = [_run_shard(cfg, grid, source, a, b) for a, b in bounds]
        acc = parts[0]
        for p in parts[1:]:
            acc = acc.merge(p)
        return acc, n_frames - used
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        futures = {pool.submit(_run_shard, cfg, grid, source, a, b): k for k, (a, b) in enumerate(bounds)}
        if cfg.strict:
            done = sorted(futures, key=futures.get)
        else:
            done = as_completed(futures)
        acc = None
        for fut in done:
            part = fut.result()
            acc = part if acc is None else acc.merge(part)
    return acc, n_frames - used


# -- reporting helpers ------------------------------------------------------


def _safe(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ScgiError:
        return math.nan


def _curve_report(curve, criterion, rayleigh=math.nan, single=True):
    return ResolutionReport(
        rayleigh_distance=rayleigh,
        criterion_ratio=criterion,
        fwhm=_safe(analysis.fwhm, curve) if single else math.nan,
        dip_ratio=math.nan if single else analysis.dip_ratio(curve, tolerant=True),
        first_zero=_safe(analysis.first_zero, curve) if single else math.nan,
    )


def _single_feature(cfg) -> bool:
    return cfg.mask.is_point and len(cfg.mask.points) == 1


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_images(out: Path, report: RunReport, cfg, gi, scgi, prefix):
    for name, values in ((f"{prefix}gi.pgm", gi), (f"{prefix}scgi.pgm", scgi)):
        io.write_pgm(out / name, np.tile(values, (cfg.pgm_rows, 1)))
        report.files.append(name)


def _finish(out: Path, report: RunReport, t0: float) -> RunReport:
    report.wall_clock_s = time.perf_counter() - t0
    report.files.append("report.txt")
    io.write_key_values(out / "report.txt", report.items())
    return report


def _reconstruct(cfg, grid, source, n_frames, report, stem):
    acc, dropped = accumulate_frames(cfg, grid, source, n_frames)
    if dropped:
        report.warnings.append(f"dropped {dropped} frames of an incomplete block")
    gi = gi_image(acc)
    scgi = scgi_image(acc)
    out = _out_dir(cfg)
    name = f"{stem}.csv"
    io.write_curves_csv(out / name, grid.positions, gi.values, scgi.values)
    report.files.append(name)
    _write_images(out, report, cfg, gi.values, scgi.values, f"{stem}_")
    single = _single_feature(cfg)
    for method, img in (("gi", gi), ("scgi", scgi)):
        report.resolution[method] = _curve_report(img, cfg.criterion, single=single)
    report.frames = acc.count
    report.images = {"gi": gi, "scgi": scgi, "accumulator": acc}
    return out


# -- commands ----------------------------------------------------------------


def run_simulation(cfg: ExperimentConfig) -> RunReport:
    """Generate frames, reconstruct GI and SCGI and write curves plus report."""
    t0 = time.perf_counter()
    sim = FrameSimulator(cfg)
    report = RunReport("simulate", cfg.to_items(), warnings=list(sim.warnings))
    log.info("simulating %d frames on %d pixels", cfg.frames, sim.beta_grid.count)
    out = _reconstruct(cfg, sim.beta_grid, sim, cfg.frames, report, "simulated")
    if cfg.save_frames:
        I, B = sim(0, cfg.frames)
        manifest = io.write_frame_stack(out, I, B, sim.beta_grid)
        report.files += [f"frames.f64", "frames_buckets.csv", manifest.name]
    report.extra["estimator"] = cfg.estimator
    return _finish(out, report, t0)


def replay_frames(manifest_path, cfg: ExperimentConfig) -> RunReport:
    """Run the estimators over recorded frames listed in a manifest."""
    t0 = time.perf_counter()
    stack = io.read_manifest(manifest_path)
    grid = stack.grid
    if grid is None:
        grid = cfg.beta_grid if cfg.beta_grid.count == stack.pixel_count else Grid(0.0, 1.0, stack.pixel_count)
    report = RunReport("replay", cfg.to_items())
    report.extra["manifest"] = str(manifest_path)
    out = _reconstruct(cfg, grid, stack, len(stack), report, "replayed")
    return _finish(out, report, t0)


def _analytic_curves(cfg: ExperimentConfig, grid: Grid):
    lay = cfg.layout
    step = cfg.object_step if not cfg.mask.is_point else None
    if lay.focused:
        return {
            "gi": analysis.gi_analytic(cfg.mask, lay, grid, step),
            "scgi": analysis.scgi_analytic(cfg.mask, lay, grid, True, step),
            "scgi_diag": analysis.scgi_analytic(cfg.mask, lay, grid, False, step),
        }
    if isinstance(cfg.mask, Uniform):
        raise ScgiError("a uniform mask has no defocused closed form")
    return analysis.defocus_images(cfg.mask, lay, grid, step, cfg.quadrature_nodes)


def run_analytic(cfg: ExperimentConfig) -> RunReport:
    """Closed-form GI and SCGI curves (with and without cross term) and d1."""
    t0 = time.perf_counter()
    grid = cfg.beta_grid
    curves = {k: c.normalized() for k, c in _analytic_curves(cfg, grid).items()}
    out = _out_dir(cfg)
    report = RunReport("analytic", cfg.to_items())
    io.write_curves_csv(out / "analytic.csv", grid.positions, curves["gi"].values, curves["scgi"].values)
    io.write_curves_csv(out / "analytic_no_cross.csv", grid.positions, curves["gi"].values, curves["scgi_diag"].values)
    report.files += ["analytic.csv", "analytic_no_cross.csv"]
    _write_images(out, report, cfg, curves["gi"].values, curves["scgi"].values, "analytic_")
    single = _single_feature(cfg)
    if cfg.layout.focused:
        families = ("gi", "scgi", "scgi_diag")
    else:
        families = ("defocus", "defocus_scgi", None)
    for method, family, key in zip(("gi", "scgi", "scgi_no_cross"), families, ("gi", "scgi", "scgi_diag")):
        d1 = math.nan
        if family is not None:
            d1 = _safe(analysis.rayleigh_distance,
                       TwoPointFamily(cfg.layout, family, nodes=cfg.quadrature_nodes), cfg.criterion)
            d1 = _to_coordinates(cfg, d1)
        report.resolution[method] = _curve_report(curves[key], cfg.criterion, d1, single)
    report.images = curves
    return _finish(out, report, t0)


def _to_coordinates(cfg, d):
    return d * cfg.layout.magnification if cfg.coordinates == "reference" else d


def run_resolve(cfg: ExperimentConfig) -> RunReport:
    """Rayleigh distance of the configured layout over a two-point PSF family."""
    t0 = time.perf_counter()
    method = cfg.resolve_method
    if method == "auto":
        method = "gi" if cfg.layout.focused else "defocus"
    family = TwoPointFamily(cfg.layout, method, nodes=cfg.quadrature_nodes)
    d1 = analysis.rayleigh_distance(family, cfg.criterion)
    curve = family(d1)
    report = RunReport("resolve", cfg.to_items())
    report.resolution[method] = ResolutionReport(
        rayleigh_distance=_to_coordinates(cfg, d1),
        criterion_ratio=cfg.criterion,
        dip_ratio=analysis.dip_ratio(curve, tolerant=True),
    )
    report.extra["coordinates"] = cfg.coordinates
    report.extra["rayleigh_distance_object_m"] = d1
    report.extra["magnification"] = cfg.layout.magnification
    out = _out_dir(cfg)
    io.write_curves_csv(out / "resolve.csv", curve.beta_grid.positions, curve.values / curve.values.max(),
                        np.zeros(curve.beta_grid.count), header=("beta_m", "two_point", "unused"))
    report.files.append("resolve.csv")
    return _finish(out, report, t0)
