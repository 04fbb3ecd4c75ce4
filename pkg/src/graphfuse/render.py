"""Lossless raster rendering of node fields (lattice maps and scattered layouts)."""
from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
from matplotlib import colormaps
from PIL import Image, ImageDraw

from .errors import ParameterError

logger = logging.getLogger(__name__)

ANGLE = "angle"  # orientation, period 180 degrees
PHASE = "phase"  # direction, period 360 degrees
SCALAR = "scalar"
KINDS = (ANGLE, PHASE, SCALAR)

_LUT_SIZE = 1024


def _lut(name: str) -> np.ndarray:
    return (colormaps[name](np.linspace(0.0, 1.0, _LUT_SIZE))[:, :3] * 255).round().astype(np.uint8)


def colorize(values, kind: str = SCALAR, vmin: float | None = None, vmax: float | None = None) -> np.ndarray:
    """Map values to RGB (uint8). Angles use a cyclic palette."""
    v = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ParameterError("cannot render non-finite values")
    if kind in (ANGLE, PHASE):
        period = 180.0 if kind == ANGLE else 360.0
        frac = np.mod(v, period) / period
        idx = np.floor(frac * _LUT_SIZE).astype(np.int64) % _LUT_SIZE
        return _lut("hsv")[idx]
    if kind != SCALAR:
        raise ParameterError(f"unknown render kind {kind!r}; expected one of {KINDS}")
    lo = float(v.min()) if vmin is None else vmin
    hi = float(v.max()) if vmax is None else vmax
    span = hi - lo
    frac = np.zeros_like(v) if span <= 0 else np.clip((v - lo) / span, 0.0, 1.0)
    idx = np.minimum((frac * _LUT_SIZE).astype(np.int64), _LUT_SIZE - 1)
    return _lut("viridis")[idx]


def _save(img: Image.Image, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    img.save(path, format="PNG", optimize=False)
    return path


def render_lattice(values, height: int, width: int, path, kind: str = SCALAR, scale: int = 1,
                   vmin: float | None = None, vmax: float | None = None) -> Path:
    """Render a row-major lattice field; scalar maps get a min/max legend strip."""
    rgb = colorize(np.asarray(values).reshape(height, width), kind, vmin, vmax)
    img = Image.fromarray(rgb)
    if scale > 1:
        img = img.resize((width * scale, height * scale), Image.NEAREST)
    if kind == SCALAR:
        v = np.asarray(values, dtype=float)
        lo = float(v.min()) if vmin is None else vmin
        hi = float(v.max()) if vmax is None else vmax
        img = _with_legend(img, lo, hi)
        logger.info("%s: min %.6g max %.6g", path, lo, hi)
    return _save(img, path)


def _with_legend(img: Image.Image, lo: float, hi: float) -> Image.Image:
    w, h = img.size
    bar_h = 14
    canvas = Image.new("RGB", (w, h + bar_h + 14), "white")
    canvas.paste(img, (0, 0))
    ramp = colorize(np.tile(np.linspace(0, 1, max(w, 2)), (bar_h, 1)), SCALAR, 0.0, 1.0)
    canvas.paste(Image.fromarray(ramp), (0, h))
    draw = ImageDraw.Draw(canvas)
    draw.text((1, h + bar_h), f"{lo:.4g}", fill="black")
    hi_txt = f"{hi:.4g}"
    draw.text((max(w - 6 * len(hi_txt) - 1, 0), h + bar_h), hi_txt, fill="black")
    return canvas


def render_scatter(values, locations, path, kind: str = PHASE, size: int = 400, radius: int = 4,
                   axes: tuple[int, int] = (0, 1), vmin: float | None = None, vmax: float | None = None) -> Path:
    """Render per-node values as dots at 2-D projections of their locations."""
    loc = np.asarray(locations, dtype=float)[:, list(axes)]
    rgb = colorize(values, kind, vmin, vmax)
    lo, hi = loc.min(axis=0), loc.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    pad = radius + 2
    xy = pad + (loc - lo) / span * (size - 2 * pad)
    img = Image.new("RGB", (size, size), "white")
    draw = ImageDraw.Draw(img)
    for (x, y), c in zip(xy, rgb):
        y = size - y
        draw.ellipse([x - radius, y - radius, x + radius, y + radius], fill=tuple(int(t) for t in c),
                     outline=(40, 40, 40))
    return _save(img, path)


def render_lines(path, x, series: dict, title: str = "", xlabel: str = "", ylabel: str = "") -> Path:
    """Line plot of several series against ``x`` (matplotlib, Agg backend)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 3.5), dpi=100)
    for label, y in series.items():
        style = dict(lw=0.8) if label != "truth" else dict(lw=1.5, color="black")
        if label == "data":
            ax.plot(x, y, ".", ms=2, color="0.6", label=label)
        else:
            ax.plot(x, y, label=label, **style)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8, loc="best")
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)
    return path
