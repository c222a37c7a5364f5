"""Deterministic writers for JSON reports, CSV tables and SVG heatmaps."""
from __future__ import annotations

import csv
import json
import math
import subprocess
from dataclasses import asdict
from functools import lru_cache
from pathlib import Path

import numpy as np

from .pmin import SolverOptions


@lru_cache(maxsize=1)
def version() -> str:
    """``git describe`` of the source tree, or the package version outside a checkout."""
    from . import __version__

    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--tags", "--dirty"], cwd=here,
                             capture_output=True, text=True, timeout=10, check=True)
        tag = out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        tag = ""
    return f"{__version__}+{tag}" if tag else __version__


def metadata(h, p=None, seed: int = 0, opts: SolverOptions | None = None, **extra) -> dict:
    meta = {"h": h, "p": p, "seed": seed, "version": version(),
            "tolerances": asdict(opts or SolverOptions())}
    meta.update(extra)
    return meta


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = [_clean(v) for v in obj]
        return sorted(items, key=repr) if isinstance(obj, (set, frozenset)) else items
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, obj: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")
    return path


def write_csv(path: Path, header: list[str], rows: list[list], meta: dict | None = None) -> Path:
    """CSV table; ``meta`` goes in a leading ``#`` comment line as compact JSON."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        if meta is not None:
            fh.write("# " + json.dumps(_clean(meta), sort_keys=True, separators=(",", ":")) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return path


def write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def _block_reduce(values: np.ndarray, max_side: int) -> np.ndarray:
    nx, ny = values.shape
    k = max(1, math.ceil(max(nx, ny) / max_side))
    if k == 1:
        return values
    px, py = -nx % k, -ny % k
    v = np.pad(values, ((0, px), (0, py)), constant_values=np.nan)
    v = v.reshape(v.shape[0] // k, k, v.shape[1] // k, k)
    with np.errstate(all="ignore"):
        allnan = np.all(np.isnan(v), axis=(1, 3))
        out = np.nanmax(np.where(np.isnan(v), -np.inf, v), axis=(1, 3))
    out[allnan] = np.nan
    return out


def _color(t: float) -> str:
    # dark blue -> yellow ramp
    r = int(round(255 * min(1.0, max(0.0, 1.5 * t - 0.2))))
    g = int(round(255 * t))
    b = int(round(255 * max(0.0, 0.55 - 0.55 * t)))
    return f"#{r:02x}{g:02x}{b:02x}"


def svg_heatmap(values: np.ndarray, title: str = "", log_floor: float | None = None,
                max_side: int = 128, cell_px: int = 4, meta: dict | None = None) -> str:
    """Heatmap of a lattice array as SVG rects; NaN cells are drawn grey.

    ``values[i, j]`` is drawn at column ``i`` and row ``ny - 1 - j``.  Large
    arrays are reduced by block maxima to at most ``max_side`` per side.
    With ``log_floor`` the colour scale is ``log10`` clipped below at it.
    """
    v = _block_reduce(np.asarray(values, dtype=float), max_side)
    nx, ny = v.shape
    if log_floor is not None:
        with np.errstate(divide="ignore"):
            s = np.where(np.isnan(v), np.nan, np.log10(np.maximum(np.abs(v), 10.0 ** log_floor)))
        lo, hi = float(log_floor), float(np.nanmax(s)) if np.isfinite(s).any() else 0.0
    else:
        s = v
        fin = s[np.isfinite(s)]
        lo, hi = (float(fin.min()), float(fin.max())) if fin.size else (0.0, 1.0)
    span = hi - lo if hi > lo else 1.0
    W, H = nx * cell_px, ny * cell_px
    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H + 20}" '
             f'viewBox="0 0 {W} {H + 20}">']
    if meta is not None:
        lines.append("<metadata>" + json.dumps(_clean(meta), sort_keys=True, separators=(",", ":"))
                     .replace("&", "&amp;").replace("<", "&lt;") + "</metadata>")
    label = f"{title} [{lo:.3g}, {hi:.3g}]" + (" log10" if log_floor is not None else "")
    lines.append(f'<text x="2" y="14" font-size="12" font-family="monospace">'
                 f'{label.replace("&", "&amp;").replace("<", "&lt;")}</text>')
    lines.append('<g transform="translate(0,20)">')
    for j in range(ny - 1, -1, -1):
        y = (ny - 1 - j) * cell_px
        for i in range(nx):
            val = s[i, j]
            fill = "#bbbbbb" if not np.isfinite(val) else _color((val - lo) / span)
            lines.append(f'<rect x="{i * cell_px}" y="{y}" width="{cell_px}" height="{cell_px}" fill="{fill}"/>')
    lines.append("</g></svg>")
    return "\n".join(lines) + "\n"
