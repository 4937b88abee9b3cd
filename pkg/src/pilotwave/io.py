"""Scenario configuration text, trajectory tables and density figures.

Configuration text is a list of ``key = value`` assignments, one per line, or
several ``key=value`` tokens on one line.  ``#`` starts a comment.  ``none``
clears an optional value.  Lengths are in units of the packet width ``a``
and times in ``a/u``.
"""
from __future__ import annotations

import base64
import csv
import io as _io
import json
import math
import re
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .detectors import DETECTOR_KINDS, DetectorSpec
from .integrate import IntegratorControls, Trajectory
from .scenarios import RunResult, ScenarioSpec, state_at
from .state import SpatialFactor, density

REQUIRED_KEYS = ("alpha2", "beta2")
REGIONS = ("ride", "overlap", "post")
POSITIVE_KEYS = ("a", "u", "k", "T", "wavelength", "detector_R", "detector_k_ring",
                 "detector_mass_ratio", "detector_wavelength", "max_step", "rel_tol",
                 "abs_tol", "sample_dt", "event_resolution", "resolution", "gamma")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration text."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class FigureOptions:
    """``resolution`` is the number of raster columns; rows are half as many."""

    resolution: int = 600
    gamma: float = 0.6
    width: int = 800
    height: int = 440

    def __post_init__(self):
        if self.resolution < 2 or not self.gamma > 0:
            raise ValueError("figure resolution must be >= 2 and gamma positive")


@dataclass(frozen=True)
class RunConfig:
    spec: ScenarioSpec
    out: str | None = None
    fig: str | None = None
    figure: FigureOptions = field(default_factory=FigureOptions)
    compare_approx: bool = False


# -- value conversion -------------------------------------------------------

def _optional(conv):
    def parse(text):
        return None if text.lower() == "none" else conv(text)
    return parse


def _bool(text):
    low = text.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _choice(options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    return parse


_SCENARIO = {
    "experiment": str, "alpha2": float, "beta2": float, "phase": float,
    "z0": _optional(float), "quantile": float, "packet": str, "spin_mode": str,
    "a": float, "u": float, "k": float, "T": float, "t_end": _optional(float),
    "seed": int, "z2": float, "measure_first": int,
}
_DETECTOR = {
    "arm": str, "b": float, "R": float, "k_ring": float, "omega": _optional(float),
    "mass_ratio": float, "position0": float,
}
_CONTROLS = {
    "method": str, "max_step": float, "rel_tol": float, "abs_tol": float,
    "collapse_epsilon": float, "sample_dt": float, "event_resolution": float,
}
_OUTPUT = {
    "out": _optional(str), "fig": _optional(str), "resolution": int, "gamma": float,
    "compare_approx": _bool,
}
KEYS = {**_SCENARIO, **{"detector_" + k: v for k, v in _DETECTOR.items()}, **_CONTROLS,
        **_OUTPUT, "detector": _optional(_choice(DETECTOR_KINDS)), "wavelength": float,
        "detector_wavelength": float}


def _tokens(text: str):
    for n, raw in enumerate(text.splitlines(), start=1):
        body = re.sub(r"\s*=\s*", "=", raw.split("#", 1)[0]).strip()
        for tok in body.split():
            key, sep, value = tok.partition("=")
            if not sep or not key or not value or "=" in value:
                raise ConfigError(f"expected key=value, got {tok!r}", n)
            yield n, key, value


def _read(text: str) -> tuple[dict, dict]:
    values, lines = {}, {}
    for n, key, raw in _tokens(text):
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", n)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", n)
        try:
            values[key] = KEYS[key](raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", n) from None
        lines[key] = n
    return values, lines


def _check(values: dict, lines: dict) -> None:
    for key in POSITIVE_KEYS:
        if key in values and not values[key] > 0:
            raise ConfigError(f"{key} must be positive", lines[key])
    for key in ("alpha2", "beta2"):
        if key in values and values[key] < 0:
            raise ConfigError(f"{key} must be non-negative", lines[key])
    if "alpha2" in values and "beta2" in values:
        if abs(values["alpha2"] + values["beta2"] - 1) > 1e-12:
            last = max(lines["alpha2"], lines["beta2"])
            raise ConfigError("amplitudes not normalised: alpha2 + beta2 must equal 1", last)
    missing = [k for k in REQUIRED_KEYS if k not in values]
    if missing:
        raise ConfigError("missing required keys: " + ", ".join(missing))
    for a, b in (("k", "wavelength"), ("detector_k_ring", "detector_wavelength")):
        if a in values and b in values:
            raise ConfigError(f"give either {a} or {b}, not both", lines[b])


def parse_run_config(text: str) -> RunConfig:
    """Parse configuration text into a validated scenario plus output options."""
    values, lines = _read(text)
    _check(values, lines)
    if "wavelength" in values:
        values["k"] = 2 * math.pi / values.pop("wavelength")
    if "detector_wavelength" in values:
        values["detector_k_ring"] = 2 * math.pi / values.pop("detector_wavelength")
    try:
        controls = IntegratorControls(**{k: values[k] for k in _CONTROLS if k in values})
        kind = values.get("detector")
        det_keys = {k: values["detector_" + k] for k in _DETECTOR if "detector_" + k in values}
        if kind is None and det_keys:
            raise ValueError("detector options given without a detector kind")
        det = DetectorSpec(kind, **det_keys) if kind is not None else None
        spec = ScenarioSpec(**{k: values[k] for k in _SCENARIO if k in values},
                            detector=det, controls=controls)
        fig = FigureOptions(**{k: values[k] for k in ("resolution", "gamma") if k in values})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(spec, values.get("out"), values.get("fig"), fig,
                     values.get("compare_approx", False))


def parse_config(text: str) -> ScenarioSpec:
    return parse_run_config(text).spec


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def serialize_config(spec: ScenarioSpec | RunConfig) -> str:
    """Configuration text that parses back to an equal object."""
    cfg = spec if isinstance(spec, RunConfig) else None
    spec = cfg.spec if cfg else spec
    lines = [f"{k} = {_fmt(getattr(spec, k))}" for k in _SCENARIO]
    det = spec.detector
    lines.append(f"detector = {_fmt(det.kind if det else None)}")
    if det is not None:
        lines += [f"detector_{k} = {_fmt(getattr(det, k))}" for k in _DETECTOR]
    lines += [f"{k} = {_fmt(getattr(spec.controls, k))}" for k in _CONTROLS]
    if cfg is not None:
        lines += [f"out = {_fmt(cfg.out)}", f"fig = {_fmt(cfg.fig)}",
                  f"resolution = {cfg.figure.resolution}", f"gamma = {_fmt(cfg.figure.gamma)}",
                  f"compare_approx = {_fmt(cfg.compare_approx)}"]
    return "\n".join(lines) + "\n"


# -- trajectory table -------------------------------------------------------

def region_tags(traj: Trajectory) -> list[str]:
    """Per-sample tag: inside a packet overlap, riding one packet, or past the last exit.

    A sample at an exit time is already outside.
    """
    bounds = sorted((e.time, e.kind) for e in traj.events
                    if e.kind in ("overlapEntry", "overlapExit"))
    exits = [t for t, k in bounds if k == "overlapExit"]
    last_exit = exits[-1] if exits else math.inf
    first = traj.weights[0] if traj.weights else {}
    inside = sum(w > 0 for w in first.values()) > 1
    tags, j = [], 0
    for t in traj.times:
        while j < len(bounds) and bounds[j][0] <= t:
            inside = bounds[j][1] == "overlapEntry"
            j += 1
        if inside:
            tags.append("overlap")
        else:
            tags.append("post" if t >= last_exit else "ride")
    return tags


def coordinate_names(result: RunResult) -> list[str]:
    state = result.trajectory.final_state
    names = ["z"]
    for d in range(1, state.ndof):
        kind = state.branches[0].factors[d].kind
        if result.spec is not None and result.spec.experiment == "epr":
            names.append(f"z{d + 1}")
        else:
            names.append("theta_tilde" if kind == "ring" else "z_tilde")
    return names


def _num(v: float) -> str:
    return "nan" if math.isnan(v) else format(float(v), ".12g")


def table_rows(result: RunResult):
    """Header and rows of the trajectory table."""
    traj = result.trajectory
    names = coordinate_names(result)
    labels: list[str] = []
    for w in traj.weights:
        labels += [k for k in w if k not in labels]
    header = ["t", "x", *names, *(f"w_{k}" for k in labels), "region"]
    pos = traj.array()
    u = result.spec.u if result.spec is not None else 1.0
    rows = []
    for i, (t, w, tag) in enumerate(zip(traj.times, traj.weights, region_tags(traj))):
        coords = list(pos[i]) + [math.nan] * (len(names) - pos.shape[1])
        rows.append([_num(t), _num(u * t), *(_num(c) for c in coords),
                     *(_num(w.get(k, 0.0)) for k in labels), tag])
    return header, rows


def emit_csv(result: RunResult, path) -> None:
    """Write the trajectory table, then one ``#event,`` comment line per event."""
    header, rows = table_rows(result)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        for e in result.trajectory.events:
            detail = json.dumps(e.detail, sort_keys=True, default=str)
            fh.write(f"#event,{_num(e.time)},{e.kind},{detail}\n")


# -- figure -----------------------------------------------------------------

def _extent(factor: SpatialFactor, t: float, hm: float) -> tuple[float, float]:
    c = factor.center(t)
    half = 0.5 * factor.width if factor.kind == "rect" else 3 * factor.effective_width(t, hm)
    return c - half, c + half


def density_image(result: RunResult, options: FigureOptions = FigureOptions()):
    """``|psi|`` of the particle coordinate on a (t, z) grid.

    Other coordinates are held at their trajectory values, so each column is
    the conditional wave of the particle, normalised over the grid.  Returns ``(image, t_grid, z_grid)``
    with row 0 at the largest ``z``.
    """
    spec, traj = result.spec, result.trajectory
    if spec is None:
        raise ValueError("figure needs the run's scenario")
    nt, nz = options.resolution, max(2, options.resolution // 2)
    tt = np.linspace(traj.times[0], traj.times[-1], nt) if len(traj.times) > 1 \
        else np.array([traj.times[0]] * 2)
    states = [state_at(spec, t) for t in tt]
    lo, hi = [], []
    for t, s in zip(tt, states):
        ext = [_extent(b.factors[0], t, s.hbar_over_m[0]) for b in s.branches
               if b.coefficient != 0]
        lo.append(min(e[0] for e in ext))
        hi.append(max(e[1] for e in ext))
    pad = 0.1 * spec.a
    zz = np.linspace(min(lo) - pad, max(hi) + pad, nz)
    pos = traj.array()
    img = np.zeros((nz, nt))
    for j, (t, s) in enumerate(zip(tt, states)):
        pts = np.empty((s.ndof, nz))
        pts[0] = zz
        for d in range(1, s.ndof):
            col = pos[:, d] if d < pos.shape[1] else np.full(len(pos), np.nan)
            ok = ~np.isnan(col)
            pts[d] = np.interp(t, traj.t[ok], col[ok]) if ok.any() else 0.0
        rho = density(s, pts)
        norm = np.trapezoid(rho, zz)
        img[:, j] = np.sqrt(rho / norm) if norm > 0 else 0.0
    return img[::-1], tt, zz


def _png(img: np.ndarray, gamma: float) -> bytes:
    peak = img.max()
    scaled = (img / peak) ** gamma if peak > 0 else img
    gray = np.round(255 * (1 - scaled)).astype(np.uint8)
    buf = _io.BytesIO()
    Image.fromarray(gray, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def _polyline(t, z, tx, zy, style: str) -> str:
    ok = ~np.isnan(z)
    pts = " ".join(f"{tx(a):.2f},{zy(b):.2f}" for a, b in zip(t[ok], z[ok]))
    return f'<polyline points="{pts}" fill="none" {style}/>'


def emit_figure(result: RunResult, path, options: FigureOptions = FigureOptions()) -> None:
    """Gray density of the particle wave with the trajectory on top.

    The horizontal axis is ``x = x0 + u t``.  A decohered comparison
    trajectory, when present on the result, is drawn dashed.
    """
    img, tt, zz = density_image(result, options)
    u = result.spec.u
    ml, mr, mt, mb = 60, 20, 20, 50
    W, H = options.width, options.height
    pw, ph = W - ml - mr, H - mt - mb
    x0, x1 = u * tt[0], u * tt[-1]
    if x1 == x0:
        x1 = x0 + 1.0
    tx = lambda t: ml + (u * t - x0) / (x1 - x0) * pw
    zy = lambda z: mt + (zz[-1] - z) / (zz[-1] - zz[0]) * ph
    data = base64.b64encode(_png(img, options.gamma)).decode("ascii")
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" xmlns:xlink="http://www.w3.org/1999/xlink" '
        f'width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<image x="{ml}" y="{mt}" width="{pw}" height="{ph}" preserveAspectRatio="none" '
        f'image-rendering="pixelated" xlink:href="data:image/png;base64,{data}"/>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for v in np.linspace(x0, x1, 5):
        px = ml + (v - x0) / (x1 - x0) * pw
        parts.append(f'<line x1="{px:.2f}" y1="{mt + ph}" x2="{px:.2f}" y2="{mt + ph + 5}" '
                     f'stroke="black"/><text x="{px:.2f}" y="{mt + ph + 18}" font-size="11" '
                     f'text-anchor="middle">{v:.3g}</text>')
    for v in np.linspace(zz[0], zz[-1], 5):
        py = zy(v)
        parts.append(f'<line x1="{ml - 5}" y1="{py:.2f}" x2="{ml}" y2="{py:.2f}" '
                     f'stroke="black"/><text x="{ml - 8}" y="{py + 4:.2f}" font-size="11" '
                     f'text-anchor="end">{v:.3g}</text>')
    parts.append(f'<text x="{ml + pw / 2}" y="{H - 10}" font-size="13" '
                 f'text-anchor="middle">x = x0 + u t</text>')
    parts.append(f'<text x="15" y="{mt + ph / 2}" font-size="13" text-anchor="middle" '
                 f'transform="rotate(-90 15 {mt + ph / 2})">z</text>')
    if result.approx is not None:
        parts.append(_polyline(result.approx.t, result.approx.z, tx, zy,
                               'stroke="#c03020" stroke-width="1.5" stroke-dasharray="6,4" '
                               'class="approx"'))
    traj = result.trajectory
    parts.append(_polyline(traj.t, traj.z, tx, zy,
                           'stroke="black" stroke-width="1.8" class="trajectory"'))
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
