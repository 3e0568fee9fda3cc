"""Experiment configuration: flat ``key = value`` documents and presets.

Keys carry SI units in their suffix (``_m`` metres, ``_w`` watts).  ``#``
starts a comment.  A preset is applied first; every explicit key then
overrides it, wherever it appears in the file.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..errors import ConfigError, DomainError
from ..optics import (
    DoublePinhole,
    DoubleSlit,
    Grid,
    OpticalLayout,
    Pinhole,
    TransmissionMask,
    Uniform,
)
from ..source import POWER_KINDS, PowerModel

__all__ = ["ExperimentConfig", "PRESETS", "KEYS", "parse_config", "load_config"]


def _float(v):
    x = float(v)
    if not math.isfinite(x):
        raise ValueError("not finite")
    return x


def _int(v):
    x = float(v)
    if not x.is_integer():
        raise ValueError("not an integer")
    return int(x)


def _bool(v):
    s = v.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true/false")


def _choice(*options):
    def parse(v):
        s = v.strip().lower()
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return s
    return parse


def _text(v):
    return v.strip()


#: key -> (parser, default); a default of ``...`` marks a required key
KEYS = {
    "wavelength_m": (_float, ...),
    "s_o_m": (_float, ...),
    "s_r_m": (_float, None),
    "delta_s_m": (_float, None),
    "source_radius_m": (_float, ...),
    "mask": (_choice("pinhole", "double_pinhole", "double_slit", "uniform"), ...),
    "mask_center_m": (_float, 0.0),
    "pinhole_separation_m": (_float, None),
    "slit_width_m": (_float, None),
    "slit_distance_m": (_float, None),
    "mask_value": (_float, 1.0),
    "source_count": (_int, 256),
    "object_step_m": (_float, 1e-5),
    "beta_count": (_int, 512),
    "beta_half_width_m": (_float, None),
    "power_model": (_choice(*POWER_KINDS), "uniform"),
    "power_mean_w": (_float, 1.0),
    "power_spread": (_float, 0.3),
    "power_hold_frames": (_int, 1),
    "frames": (_int, ...),
    "seed": (_int, 0),
    "estimator": (_choice("frame", "block"), "frame"),
    "block_size": (_int, 1000),
    "strict": (_bool, False),
    "workers": (_int, 1),
    "shards": (_int, 8),
    "batch_frames": (_int, 1024),
    "criterion": (_float, 0.81),
    "coordinates": (_choice("object", "reference"), "object"),
    "resolve_method": (_choice("auto", "gi", "scgi", "defocus", "defocus_scgi"), "auto"),
    "quadrature_nodes": (_int, 2048),
    "save_frames": (_bool, False),
    "pgm_rows": (_int, 64),
    "out_dir": (_text, "out"),
}

_FIG2 = {
    "wavelength_m": "532e-9",
    "s_o_m": "5",
    "s_r_m": "5",
    "source_radius_m": "2.5e-3",
    "mask": "pinhole",
    "mask_center_m": "0",
    "beta_half_width_m": "2e-3",
    "frames": "50000",
    "estimator": "block",
    "block_size": "1000",
    "power_model": "uniform",
    "power_spread": "0.3",
    "power_hold_frames": "1000",
}

_FIG4 = {
    "wavelength_m": "550e-9",
    "s_o_m": "0.35",
    "source_radius_m": "1.65e-3",
    "mask": "double_slit",
    "slit_width_m": "2e-3",
    "slit_distance_m": "3e-3",
    "frames": "50000",
    "estimator": "block",
    "block_size": "1000",
    "power_model": "uniform",
    "power_spread": "0.5",
    "power_hold_frames": "1000",
}

PRESETS = {
    "fig2": _FIG2,
    "fig3": {**_FIG2, "mask": "double_pinhole", "pinhole_separation_m": "1e-3"},
    "fig4a": {**_FIG4, "delta_s_m": "0.4"},
    "fig4d": {**_FIG4, "delta_s_m": "0.85"},
}


@dataclass
class ExperimentConfig:
    layout: OpticalLayout
    mask: TransmissionMask
    frames: int
    power: PowerModel = field(default_factory=PowerModel)
    source_count: int = 256
    object_step: float = 1e-5
    beta_count: int = 512
    beta_half_width: float | None = None
    seed: int = 0
    estimator: str = "frame"
    block_size: int = 1000
    strict: bool = False
    workers: int = 1
    shards: int = 8
    batch_frames: int = 1024
    criterion: float = 0.81
    coordinates: str = "object"
    resolve_method: str = "auto"
    quadrature_nodes: int = 2048
    save_frames: bool = False
    pgm_rows: int = 64
    out_dir: str = "out"
    preset: str | None = None
    values: dict = field(default_factory=dict, repr=False)

    @property
    def source_grid(self) -> Grid:
        R = self.layout.source_radius
        return Grid.cells(-R, R, self.source_count)

    def object_extent(self) -> tuple[float, float]:
        support = self.mask.support()
        if support is None:
            c = self.mask_center
            return c, c
        return support

    @property
    def mask_center(self) -> float:
        lo_hi = self.mask.support()
        return 0.0 if lo_hi is None else 0.5 * (lo_hi[0] + lo_hi[1])

    @property
    def beta_grid(self) -> Grid:
        lay = self.layout
        half = self.beta_half_width
        lo, hi = self.object_extent()
        center = 0.5 * (lo + hi) * lay.magnification
        if half is None:
            blur = 2.0 * lay.source_radius * abs(1.0 - lay.s_o / lay.s_r)
            half = lay.magnification * (0.5 * (hi - lo) + 3.0 * (lay.first_zero + blur))
        return Grid.centered(half, self.beta_count, center)

    def to_items(self) -> list[tuple[str, str]]:
        """Canonical key/value echo; re-parsing it reproduces this config."""
        return [(k, self.values[k]) for k in KEYS if k in self.values]


def _tokenize(text: str):
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError("empty key", line=lineno)
        if key != "preset" and key not in KEYS:
            raise ConfigError("unknown key", key=key, line=lineno)
        if value == "":
            raise ConfigError("missing value", key=key, line=lineno)
        entries[key] = (value, lineno)
    return entries


def parse_config(
    text: str,
    preset: str | None = None,
    overrides: dict | None = None,
    frames_optional: bool = False,
) -> ExperimentConfig:
    """Parse and validate a configuration document.

    ``preset`` (or a ``preset = name`` line) seeds the values; explicit keys
    in ``text`` and then ``overrides`` take precedence.  With
    ``frames_optional`` (recorded data supplies the frames) ``frames`` may be
    absent and is not checked against the estimator.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    entries = _tokenize(text)
    if "preset" in entries:
        file_preset, lineno = entries.pop("preset")
        if preset is None:
            preset = file_preset
    merged: dict[str, tuple[str, int | None]] = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}", key="preset")
        merged.update({k: (v, None) for k, v in PRESETS[preset].items()})
        if "s_r_m" in entries or "delta_s_m" in entries:
            merged.pop("s_r_m", None)
            merged.pop("delta_s_m", None)
    merged.update(entries)
    for k, v in (overrides or {}).items():
        if k not in KEYS:
            raise ConfigError("unknown key", key=k)
        if k in ("s_r_m", "delta_s_m"):
            merged.pop("s_r_m", None)
            merged.pop("delta_s_m", None)
        merged[k] = (str(v), None)

    values = {}
    for key, (parse, default) in KEYS.items():
        if key in merged:
            raw, lineno = merged[key]
            try:
                values[key] = parse(raw)
            except ValueError as exc:
                raise ConfigError(f"invalid value {raw!r} ({exc})", key=key, line=lineno) from None
        elif key == "frames" and frames_optional:
            values[key] = 0
        elif default is ...:
            raise ConfigError("missing required key", key=key)
        else:
            values[key] = default

    def bad(key, message):
        return ConfigError(message, key=key, line=merged.get(key, (None, None))[1])

    def positive(key):
        if values[key] is not None and not values[key] > 0:
            raise bad(key, f"must be > 0, got {values[key]!r}")

    for key in ("wavelength_m", "s_o_m", "s_r_m", "source_radius_m", "object_step_m",
                "power_mean_w", "beta_half_width_m", "source_count", "beta_count",
                "workers", "shards", "batch_frames", "quadrature_nodes",
                "pgm_rows", "power_hold_frames"):
        positive(key)
    if "s_r_m" in merged and "delta_s_m" in merged:
        raise bad("delta_s_m", "give either s_r_m or delta_s_m, not both")
    s_r = values["s_r_m"]
    if s_r is None:
        s_r = values["s_o_m"] + (values["delta_s_m"] or 0.0)
        if not s_r > 0:
            raise bad("delta_s_m", "s_o_m + delta_s_m must be > 0")
    if values["beta_count"] < 3:
        raise bad("beta_count", "need at least 3 reference pixels")
    if not 0.0 < values["criterion"] < 1.0:
        raise bad("criterion", "must lie in (0, 1)")
    if not 0 <= values["seed"] < 2**64:
        raise bad("seed", "must be an unsigned 64-bit integer")
    if values["estimator"] == "block" and values["block_size"] < 2:
        raise bad("block_size", "must be >= 2")
    if not frames_optional:
        if values["estimator"] == "block" and values["frames"] < 2 * values["block_size"]:
            raise bad("frames", "block estimator needs at least two complete blocks")
        if values["frames"] < 2:
            raise bad("frames", "need at least 2 frames")

    try:
        power = PowerModel(values["power_model"], values["power_mean_w"],
                           values["power_spread"], values["power_hold_frames"])
    except DomainError as exc:
        raise bad("power_spread", str(exc)) from None
    mask = _build_mask(values, bad)
    layout = OpticalLayout(values["wavelength_m"], values["s_o_m"], s_r, values["source_radius_m"])

    echo = {}
    for key in KEYS:
        if key in ("s_r_m", "delta_s_m"):
            continue
        v = values[key]
        if v is None:
            continue
        echo[key] = repr(v) if isinstance(v, float) else str(v).lower() if isinstance(v, bool) else str(v)
    echo["s_r_m"] = repr(s_r)

    return ExperimentConfig(
        layout=layout,
        mask=mask,
        frames=values["frames"],
        power=power,
        source_count=values["source_count"],
        object_step=values["object_step_m"],
        beta_count=values["beta_count"],
        beta_half_width=values["beta_half_width_m"],
        seed=values["seed"],
        estimator=values["estimator"],
        block_size=values["block_size"],
        strict=values["strict"],
        workers=values["workers"],
        shards=values["shards"],
        batch_frames=values["batch_frames"],
        criterion=values["criterion"],
        coordinates=values["coordinates"],
        resolve_method=values["resolve_method"],
        quadrature_nodes=values["quadrature_nodes"],
        save_frames=values["save_frames"],
        pgm_rows=values["pgm_rows"],
        out_dir=values["out_dir"],
        preset=preset,
        values=echo,
    )


def _build_mask(values, bad) -> TransmissionMask:
    kind = values["mask"]
    c = values["mask_center_m"]
    if kind == "pinhole":
        return Pinhole(c)
    if kind == "double_pinhole":
        sep = values["pinhole_separation_m"]
        if sep is None or not sep > 0:
            raise bad("pinhole_separation_m", "double_pinhole needs pinhole_separation_m > 0")
        return DoublePinhole.symmetric(sep, c)
    if kind == "double_slit":
        for key in ("slit_width_m", "slit_distance_m"):
            if values[key] is None:
                raise bad(key, "double_slit needs slit_width_m and slit_distance_m")
        try:
            return DoubleSlit(values["slit_width_m"], values["slit_distance_m"], c)
        except DomainError as exc:
            raise bad("slit_width_m", str(exc)) from None
    try:
        return Uniform(values["mask_value"])
    except DomainError as exc:
        raise bad("mask_value", str(exc)) from None


def load_config(path, preset: str | None = None, overrides: dict | None = None,
                frames_optional: bool = False) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), preset, overrides, frames_optional)
